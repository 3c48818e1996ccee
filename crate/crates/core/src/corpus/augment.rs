use super::CorpusError;
use crate::midi::{NormalizedPiece, PedalCurve, PedalEvent};
use crate::tokenizer::vocab::{MAX_DURATION_MS, MAX_IOI_MS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    /// Velocities move by a uniform integer in `-velocity_jitter..=velocity_jitter`.
    pub velocity_jitter: u8,
    /// Durations and onset gaps are scaled by `1 + u`, `u` uniform in `±timing_jitter`.
    pub timing_jitter: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams { velocity_jitter: 8, timing_jitter: 0.05, seed: 0 }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(0.0..1.0).contains(&self.timing_jitter) {
            return Err(CorpusError::InvalidParams(format!("timing jitter {} must lie in [0, 1)", self.timing_jitter)));
        }
        Ok(())
    }
}

/// Scales `x` without pushing it past `limit` unless it already was.
fn scaled(x: f64, factor: f64, limit: f64) -> f64 {
    (x * factor).min(x.max(limit))
}

/// Independent per-note jitter of velocity, duration and the gap to the previous onset.
pub fn augment(piece: &NormalizedPiece, params: &AugmentParams) -> Result<NormalizedPiece, CorpusError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut src = piece.clone();
    src.sort_canonical();
    let (dv, p) = (params.velocity_jitter as i32, params.timing_jitter);
    let draw = |rng: &mut ChaCha8Rng| if p > 0.0 { rng.random_range(-p..=p) } else { 0.0 };

    let mut out = src.clone();
    // Onsets move by an accumulated shift so untouched gaps reproduce the input bit for bit.
    let mut shift = 0.0;
    let mut shifts = Vec::with_capacity(src.notes.len());
    for (i, note) in out.notes.iter_mut().enumerate() {
        let v = note.velocity as i32 + rng.random_range(-dv..=dv);
        note.velocity = v.clamp(1, 127) as u8;
        let dur_factor = 1.0 + draw(&mut rng);
        note.duration_ms = scaled(note.duration_ms, dur_factor, MAX_DURATION_MS as f64).max(1.0);
        let gap_factor = 1.0 + draw(&mut rng);
        if i > 0 {
            let gap = src.notes[i].onset_ms - src.notes[i - 1].onset_ms;
            shift += scaled(gap, gap_factor, MAX_IOI_MS as f64) - gap;
        }
        note.onset_ms = src.notes[i].onset_ms + shift;
        shifts.push((src.notes[i].onset_ms, shift));
    }
    out.pedal = PedalCurve::new(
        src.pedal
            .events()
            .iter()
            .map(|e| PedalEvent { time_ms: e.time_ms + interpolate_shift(&shifts, e.time_ms), value: e.value })
            .collect(),
    );
    out.sort_canonical();
    Ok(out)
}

/// Piecewise-linear shift between note onsets, held constant outside them.
fn interpolate_shift(shifts: &[(f64, f64)], t: f64) -> f64 {
    let i = shifts.partition_point(|&(onset, _)| onset <= t);
    match (i.checked_sub(1).map(|j| shifts[j]), shifts.get(i)) {
        (None, _) => 0.0,
        (Some((_, s)), None) => s,
        (Some((t0, s0)), Some(&(t1, s1))) => {
            if t1 > t0 {
                s0 + (s1 - s0) * (t - t0) / (t1 - t0)
            } else {
                s0
            }
        }
    }
}
