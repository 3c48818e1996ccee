//! Expressive tempo mapping: keep the score's metrical grid and move the rubato into a tempo track.
//!
//! The output MIDI has score-like tick positions, so bars and beats still line up in an editor,
//! while playback through its tempo events lands every note at the performed time.

use crate::midi::{
    round_half_up, ControlEvent, MidiPiece, NormalizedPiece, Note, TempoEvent, Track, SUSTAIN_CONTROLLER,
};
use thiserror::Error;

pub const DEFAULT_BPM: f64 = 120.0;
pub const MIN_BPM: f64 = 20.0;
pub const MAX_BPM: f64 = 400.0;
/// Milliseconds per quarter note at the reference tempo.
const REFERENCE_QUARTER_MS: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TempoError {
    #[error("LengthMismatch: score has {score} notes, performance has {perf}")]
    LengthMismatch { score: usize, perf: usize },
    #[error("PitchMismatch: note {0} has different pitches")]
    PitchMismatch(usize),
    #[error("UnsortedScore: score notes are not in canonical order")]
    UnsortedScore,
    #[error("InvalidCurve: {0}")]
    InvalidCurve(String),
}

/// Piecewise-constant tempo over ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct TempoCurve {
    breakpoints: Vec<(u64, f64)>,
    ppq: u16,
}

/// Rounds `bpm` to the nearest tempo a MIDI tempo event can state exactly.
fn representable(bpm: f64) -> f64 {
    60e6 / (60e6 / bpm).round()
}

impl TempoCurve {
    pub fn new(breakpoints: Vec<(u64, f64)>, ppq: u16) -> Result<Self, TempoError> {
        let bad = |m: String| Err(TempoError::InvalidCurve(m));
        if ppq == 0 {
            return bad("ppq must be positive".into());
        }
        match breakpoints.first() {
            Some(&(0, _)) => {}
            _ => return bad("first breakpoint must sit at tick 0".into()),
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("breakpoint ticks must strictly increase".into());
        }
        if let Some(&(tick, bpm)) = breakpoints.iter().find(|(_, b)| !(MIN_BPM..=MAX_BPM).contains(b)) {
            return bad(format!("{bpm} BPM at tick {tick} is outside [{MIN_BPM}, {MAX_BPM}]"));
        }
        Ok(TempoCurve { breakpoints, ppq })
    }

    pub fn constant(bpm: f64, ppq: u16) -> Result<Self, TempoError> {
        Self::new(vec![(0, bpm)], ppq)
    }

    pub fn breakpoints(&self) -> &[(u64, f64)] {
        &self.breakpoints
    }

    pub fn ppq(&self) -> u16 {
        self.ppq
    }

    fn ms_per_tick(&self, bpm: f64) -> f64 {
        60_000.0 / (bpm * self.ppq as f64)
    }

    /// Wall-clock start of every segment.
    fn segment_starts(&self) -> Vec<f64> {
        let mut starts = Vec::with_capacity(self.breakpoints.len());
        let mut ms = 0.0;
        for (i, &(tick, bpm)) in self.breakpoints.iter().enumerate() {
            starts.push(ms);
            if let Some(&(next, _)) = self.breakpoints.get(i + 1) {
                ms += (next - tick) as f64 * self.ms_per_tick(bpm);
            }
        }
        starts
    }

    /// Fractional tick reached after `t_ms` milliseconds.
    pub fn ms_to_tick_exact(&self, t_ms: f64) -> f64 {
        let starts = self.segment_starts();
        let i = starts.partition_point(|&s| s <= t_ms).saturating_sub(1);
        let (tick, bpm) = self.breakpoints[i];
        tick as f64 + (t_ms - starts[i]) / self.ms_per_tick(bpm)
    }

    pub fn tick_to_ms(&self, tick: f64) -> f64 {
        let starts = self.segment_starts();
        let i = self.breakpoints.partition_point(|&(t, _)| t as f64 <= tick).saturating_sub(1);
        let (start, bpm) = self.breakpoints[i];
        starts[i] + (tick - start as f64) * self.ms_per_tick(bpm)
    }

    /// One tempo meta event per breakpoint.
    pub fn tempo_events(&self) -> Vec<TempoEvent> {
        self.breakpoints
            .iter()
            .map(|&(tick, bpm)| TempoEvent { tick, micros_per_quarter: (60e6 / bpm).round() as u32 })
            .collect()
    }
}

/// Integer tick for a wall-clock time under `curve`, rounded half up. Negative times clamp to 0.
pub fn ms_to_ticks(t_ms: f64, curve: &TempoCurve) -> u64 {
    round_half_up(curve.ms_to_tick_exact(t_ms.max(0.0))).max(0.0) as u64
}

/// Score and performance with a one-to-one note correspondence by index.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    score: NormalizedPiece,
    perf: NormalizedPiece,
}

impl AlignedPair {
    pub fn new(score: NormalizedPiece, perf: NormalizedPiece) -> Result<Self, TempoError> {
        if score.notes.len() != perf.notes.len() {
            return Err(TempoError::LengthMismatch { score: score.notes.len(), perf: perf.notes.len() });
        }
        if let Some(i) = score.notes.iter().zip(&perf.notes).position(|(s, p)| s.pitch != p.pitch) {
            return Err(TempoError::PitchMismatch(i));
        }
        if !score.is_canonical() {
            return Err(TempoError::UnsortedScore);
        }
        Ok(AlignedPair { score, perf })
    }

    /// Pairs the k-th occurrence of each pitch in the score with its k-th occurrence in the performance.
    ///
    /// Suits performances that keep the score's note inventory but may reorder near-simultaneous notes.
    pub fn align_by_pitch_order(score: NormalizedPiece, perf: NormalizedPiece) -> Result<Self, TempoError> {
        let mut score = score;
        score.sort_canonical();
        if score.notes.len() != perf.notes.len() {
            return Err(TempoError::LengthMismatch { score: score.notes.len(), perf: perf.notes.len() });
        }
        let mut queues: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); 128];
        let mut by_time: Vec<usize> = (0..perf.notes.len()).collect();
        by_time.sort_by(|&a, &b| perf.notes[a].onset_ms.total_cmp(&perf.notes[b].onset_ms));
        for i in by_time {
            queues[perf.notes[i].pitch as usize & 127].push_back(i);
        }
        let mut notes = Vec::with_capacity(score.notes.len());
        for (k, s) in score.notes.iter().enumerate() {
            let i = queues[s.pitch as usize & 127].pop_front().ok_or(TempoError::PitchMismatch(k))?;
            notes.push(perf.notes[i]);
        }
        let perf = NormalizedPiece { notes, pedal: perf.pedal };
        Self::new(score, perf)
    }

    pub fn score(&self) -> &NormalizedPiece {
        &self.score
    }

    pub fn perf(&self) -> &NormalizedPiece {
        &self.perf
    }
}

fn score_tick(ms: f64, ppq: u16) -> u64 {
    round_half_up(ms * ppq as f64 / REFERENCE_QUARTER_MS).max(0.0) as u64
}

/// Local tempo between consecutive distinct score onsets.
pub fn estimate_tempo_curve(pair: &AlignedPair, ppq: u16) -> Result<TempoCurve, TempoError> {
    let (score, perf) = (&pair.score.notes, &pair.perf.notes);
    let mut anchors: Vec<(f64, f64)> = Vec::new();
    for (s, p) in score.iter().zip(perf) {
        if anchors.last().is_none_or(|&(last, _)| s.onset_ms > last) {
            anchors.push((s.onset_ms, p.onset_ms));
        }
    }
    if anchors.len() < 2 {
        return TempoCurve::constant(DEFAULT_BPM, ppq);
    }
    if anchors[0].0 > 0.0 {
        anchors.insert(0, (0.0, 0.0));
    }
    let mut breakpoints: Vec<(u64, f64)> = Vec::new();
    let mut bpm = DEFAULT_BPM;
    for w in anchors.windows(2) {
        let ((sa, pa), (sb, pb)) = (w[0], w[1]);
        if pb - pa > 0.0 {
            bpm = representable((DEFAULT_BPM * (sb - sa) / (pb - pa)).clamp(MIN_BPM, MAX_BPM));
        }
        let tick = if breakpoints.is_empty() { 0 } else { score_tick(sa, ppq) };
        match breakpoints.last_mut() {
            // Onsets closer than a tick collapse; the later segment wins.
            Some(last) if last.0 == tick => last.1 = bpm,
            _ => breakpoints.push((tick, bpm)),
        }
    }
    breakpoints.dedup_by(|b, a| a.1 == b.1);
    TempoCurve::new(breakpoints, ppq)
}

/// DAW-editable MIDI: score pitches, performed velocities, and performed timing expressed in
/// ticks of an estimated tempo curve.
pub fn expressive_tempo_map(pair: &AlignedPair, ppq: u16) -> Result<MidiPiece, TempoError> {
    let curve = estimate_tempo_curve(pair, ppq)?;
    let notes = pair
        .score
        .notes
        .iter()
        .zip(&pair.perf.notes)
        .map(|(s, p)| {
            let onset = ms_to_ticks(p.onset_ms, &curve);
            let end = ms_to_ticks(p.onset_ms + p.duration_ms, &curve);
            Note { pitch: s.pitch, velocity: p.velocity, onset, duration: end.saturating_sub(onset).max(1) }
        })
        .collect();
    let controls = pair
        .perf
        .pedal
        .events()
        .iter()
        .map(|e| ControlEvent { controller: SUSTAIN_CONTROLLER, value: e.value, tick: ms_to_ticks(e.time_ms, &curve) })
        .collect();
    let mut track = Track { notes, controls };
    track.canonicalize();
    let tracks = if track.is_empty() { Vec::new() } else { vec![track] };
    Ok(MidiPiece { ppq, tracks, tempo_events: curve.tempo_events() })
}

#[cfg(test)]
mod tests;
