//! Distribution-level comparison of performances over velocity, duration, IOI and pedal tokens.

mod report;

pub use report::{DimensionScore, MetricReport};

use crate::tokenizer::{validate_body, Slot, TokenError, TokenSeq, TOKENS_PER_NOTE};
use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("EmptyDimension: no {0} tokens to count")]
    EmptyDimension(&'static str),
    #[error("SupportMismatch: {left} bins vs {right} bins")]
    SupportMismatch { left: usize, right: usize },
    #[error("SingletonGroup: group {0} has fewer than two performances")]
    SingletonGroup(usize),
    #[error("InvalidOption: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Token(#[from] TokenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Velocity,
    Duration,
    Ioi,
    Pedal,
}

/// Pedal values at or above this count as pressed.
pub const PEDAL_THRESHOLD: u16 = 64;

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Velocity, Dimension::Duration, Dimension::Ioi, Dimension::Pedal];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Velocity => "velocity",
            Dimension::Duration => "duration",
            Dimension::Ioi => "ioi",
            Dimension::Pedal => "pedal",
        }
    }

    /// Number of bins before any re-binning.
    pub fn support(self) -> usize {
        match self {
            Dimension::Pedal => 16,
            Dimension::Velocity => {
                *Slot::Velocity.legal_range().end() as usize - *Slot::Velocity.legal_range().start() as usize + 1
            }
            Dimension::Duration => {
                *Slot::Duration.legal_range().end() as usize - *Slot::Duration.legal_range().start() as usize + 1
            }
            Dimension::Ioi => *Slot::Ioi.legal_range().end() as usize - *Slot::Ioi.legal_range().start() as usize + 1,
        }
    }

    fn slot(self) -> Option<Slot> {
        match self {
            Dimension::Velocity => Some(Slot::Velocity),
            Dimension::Duration => Some(Slot::Duration),
            Dimension::Ioi => Some(Slot::Ioi),
            Dimension::Pedal => None,
        }
    }
}

/// Normalized histogram with the raw counts kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T> {
    counts: Vec<u64>,
    probs: Vec<T>,
}

impl<T: Scalar> Distribution<T> {
    pub fn from_counts(counts: Vec<u64>, dimension: &'static str) -> Result<Self, MetricError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MetricError::EmptyDimension(dimension));
        }
        let probs = counts.iter().map(|&c| T::of(c as f64 / total as f64)).collect();
        Ok(Distribution { counts, probs })
    }

    /// A distribution given directly by probabilities, e.g. for tests; no counts are attached.
    pub fn from_probs(probs: Vec<T>) -> Self {
        Distribution { counts: vec![0; probs.len()], probs }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Merges every `width` adjacent bins into one.
    pub fn rebin(&self, width: usize) -> Self {
        let width = width.max(1);
        let probs = self.probs.chunks(width).map(|c| c.iter().copied().sum()).collect();
        let counts = self.counts.chunks(width).map(|c| c.iter().sum()).collect();
        Distribution { counts, probs }
    }
}

fn bodies(seqs: &[TokenSeq]) -> Result<Vec<&[u16]>, MetricError> {
    seqs.iter()
        .map(|s| {
            let body = s.body();
            validate_body(body)?;
            Ok(body)
        })
        .collect()
}

/// Pools one slot's values over every frame of every sequence.
pub fn token_distribution<T: Scalar>(seqs: &[TokenSeq], dimension: Dimension) -> Result<Distribution<T>, MetricError> {
    let Some(slot) = dimension.slot() else {
        return pedal_joint_distribution(seqs);
    };
    let offset = Slot::ALL.iter().position(|&s| s == slot).expect("slot in frame");
    let mut counts = vec![0u64; dimension.support()];
    for body in bodies(seqs)? {
        for frame in body.chunks_exact(TOKENS_PER_NOTE) {
            let value = slot.value_of(frame[offset]).expect("validated") as usize;
            counts[value] += 1;
        }
    }
    Distribution::from_counts(counts, dimension.name())
}

/// Each note's four pedal samples binarized and packed with the first sample as the high bit.
pub fn pedal_joint_distribution<T: Scalar>(seqs: &[TokenSeq]) -> Result<Distribution<T>, MetricError> {
    let mut counts = vec![0u64; 16];
    for body in bodies(seqs)? {
        for frame in body.chunks_exact(TOKENS_PER_NOTE) {
            let code = (0..4u8).fold(0usize, |acc, k| {
                let value = Slot::Pedal(k).value_of(frame[4 + k as usize]).expect("validated");
                (acc << 1) | usize::from(value >= PEDAL_THRESHOLD)
            });
            counts[code] += 1;
        }
    }
    Distribution::from_counts(counts, Dimension::Pedal.name())
}

fn same_support<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<(), MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::SupportMismatch { left: p.len(), right: q.len() });
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits, so it lies in [0, 1].
pub fn js_divergence<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
    same_support(p, q)?;
    let half = T::of(0.5);
    let mut total = T::zero();
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        let m = (a + b) * half;
        if a > T::zero() {
            total += half * a * (a / m).log2();
        }
        if b > T::zero() {
            total += half * b * (b / m).log2();
        }
    }
    Ok(total.max(T::zero()).min(T::one()))
}

/// Overlap `Σ min(p, q)`.
pub fn intersection_area<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
    same_support(p, q)?;
    Ok(p.probs().iter().zip(q.probs()).map(|(&a, &b)| a.min(b)).sum())
}

/// Optional coarsening of the raw token supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricOptions {
    /// Velocity values per bin.
    pub velocity_bin: usize,
    /// Milliseconds per bin for duration and IOI.
    pub timing_bin_ms: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { velocity_bin: 1, timing_bin_ms: 1 }
    }
}

impl MetricOptions {
    fn width(&self, dimension: Dimension) -> usize {
        match dimension {
            Dimension::Velocity => self.velocity_bin,
            Dimension::Duration | Dimension::Ioi => self.timing_bin_ms,
            Dimension::Pedal => 1,
        }
    }
}

pub fn evaluate_testset<T: Scalar>(
    candidates: &[TokenSeq],
    references: &[TokenSeq],
) -> Result<MetricReport<T>, MetricError> {
    evaluate_testset_with(candidates, references, &MetricOptions::default())
}

/// Pools each side per dimension, then compares the pooled distributions.
pub fn evaluate_testset_with<T: Scalar>(
    candidates: &[TokenSeq],
    references: &[TokenSeq],
    options: &MetricOptions,
) -> Result<MetricReport<T>, MetricError> {
    if options.velocity_bin == 0 || options.timing_bin_ms == 0 {
        return Err(MetricError::InvalidOption("bin widths must be positive".into()));
    }
    let mut scores = Vec::with_capacity(4);
    for dim in Dimension::ALL {
        let width = options.width(dim);
        let p = token_distribution::<T>(candidates, dim)?.rebin(width);
        let q = token_distribution::<T>(references, dim)?.rebin(width);
        scores.push(DimensionScore { js: js_divergence(&p, &q)?, intersection: intersection_area(&p, &q)? });
    }
    Ok(MetricReport::from_scores([scores[0], scores[1], scores[2], scores[3]]))
}

/// Leave-one-out agreement among human performances of the same pieces.
///
/// Every performance is scored against the pooled other performances of its piece and the
/// per-dimension results are averaged over all held-out performances.
pub fn human_baseline<T: Scalar>(
    groups: &[Vec<TokenSeq>],
    options: &MetricOptions,
) -> Result<MetricReport<T>, MetricError> {
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(MetricError::SingletonGroup(i));
    }
    let mut sums = [DimensionScore { js: T::zero(), intersection: T::zero() }; 4];
    let mut runs = 0usize;
    for group in groups {
        for held in 0..group.len() {
            let rest: Vec<TokenSeq> =
                group.iter().enumerate().filter(|&(i, _)| i != held).map(|(_, s)| s.clone()).collect();
            let report = evaluate_testset_with::<T>(std::slice::from_ref(&group[held]), &rest, options)?;
            for (sum, s) in sums.iter_mut().zip(report.scores()) {
                sum.js += s.js;
                sum.intersection += s.intersection;
            }
            runs += 1;
        }
    }
    if runs == 0 {
        return Err(MetricError::EmptyDimension("performance"));
    }
    let n = T::of(runs as f64);
    Ok(MetricReport::from_scores(sums.map(|s| DimensionScore { js: s.js / n, intersection: s.intersection / n })))
}
