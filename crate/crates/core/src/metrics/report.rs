use super::Dimension;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionScore<T> {
    pub js: T,
    pub intersection: T,
}

/// Per-dimension scores in the order of [`Dimension::ALL`] plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<T> {
    scores: [DimensionScore<T>; 4],
    pub overall: DimensionScore<T>,
}

impl<T: Scalar> MetricReport<T> {
    pub fn from_scores(scores: [DimensionScore<T>; 4]) -> Self {
        let n = T::of(4.0);
        let overall = DimensionScore {
            js: scores.iter().map(|s| s.js).sum::<T>() / n,
            intersection: scores.iter().map(|s| s.intersection).sum::<T>() / n,
        };
        MetricReport { scores, overall }
    }

    pub fn scores(&self) -> &[DimensionScore<T>; 4] {
        &self.scores
    }

    pub fn get(&self, dimension: Dimension) -> DimensionScore<T> {
        let i = Dimension::ALL.iter().position(|&d| d == dimension).expect("known dimension");
        self.scores[i]
    }

    /// `key: value` lines, one metric per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (dim, s) in Dimension::ALL.iter().zip(&self.scores) {
            out.push_str(&format!("{}.js_divergence: {:.6}\n", dim.name(), s.js));
            out.push_str(&format!("{}.intersection: {:.6}\n", dim.name(), s.intersection));
        }
        out.push_str(&format!("overall.js_divergence: {:.6}\n", self.overall.js));
        out.push_str(&format!("overall.intersection: {:.6}\n", self.overall.intersection));
        out
    }

    pub fn csv_header() -> &'static str {
        "model,velocity_js,velocity_inter,duration_js,duration_inter,ioi_js,ioi_inter,pedal_js,pedal_inter,overall_js,overall_inter"
    }

    /// One table row: a label, then js and intersection for each dimension and the overall means.
    pub fn csv_row(&self, label: &str) -> String {
        let mut cells = vec![label.replace(',', ";")];
        for s in self.scores.iter().chain(std::iter::once(&self.overall)) {
            cells.push(format!("{:.6}", s.js));
            cells.push(format!("{:.6}", s.intersection));
        }
        cells.join(",")
    }
}
