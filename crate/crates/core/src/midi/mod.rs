//! Standard MIDI File ingestion and the canonical wall-clock representation.
//!
//! [`MidiPiece`] is tick-domain file content; [`NormalizedPiece`] is the merged,
//! deduplicated, millisecond-domain form every downstream stage consumes.

mod normalize;
mod smf;
mod time;

pub use normalize::{normalize, NormalizeMode};
pub use smf::{parse_smf, write_smf, write_smf_with_comment};
pub use time::{render_wallclock, wallclock_to_tick};

use thiserror::Error;

/// Controller number of the sustain pedal.
pub const SUSTAIN_CONTROLLER: u8 = 64;
/// Ticks per quarter note used when this crate writes files.
pub const DEFAULT_PPQ: u16 = 480;
/// 120 BPM.
pub const DEFAULT_MICROS_PER_QUARTER: u32 = 500_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MidiError {
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("UnsupportedFormat: {0}")]
    UnsupportedFormat(String),
    #[error("TruncatedChunk: chunk declares {declared} bytes but only {remaining} remain")]
    TruncatedChunk { declared: usize, remaining: usize },
    #[error("InvalidEvent: {0}")]
    InvalidEvent(String),
    #[error("InvalidPiece: {0}")]
    InvalidPiece(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Note {
    pub pitch: u8,
    pub velocity: u8,
    pub onset: u64,
    pub duration: u64,
}

impl Note {
    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }

    fn canonical_key(&self) -> (u64, u8, u64, u8) {
        (self.onset, self.pitch, self.duration, self.velocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlEvent {
    pub controller: u8,
    pub value: u8,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TempoEvent {
    pub tick: u64,
    pub micros_per_quarter: u32,
}

impl TempoEvent {
    pub fn bpm(&self) -> f64 {
        60_000_000.0 / self.micros_per_quarter as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Track {
    pub notes: Vec<Note>,
    pub controls: Vec<ControlEvent>,
}

impl Track {
    pub fn is_empty(&self) -> bool {
        self.notes.is_empty() && self.controls.is_empty()
    }

    /// Notes ordered by (onset, pitch, duration, velocity); controls stably by tick.
    pub fn canonicalize(&mut self) {
        self.notes.sort_by_key(Note::canonical_key);
        self.controls.sort_by_key(|c| c.tick);
    }
}

/// Parsed file content. Tempo events are global to the file.
///
/// `parse_smf` always returns canonical pieces: every track non-empty and
/// canonically ordered, tempo events strictly increasing in tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiPiece {
    pub ppq: u16,
    pub tracks: Vec<Track>,
    pub tempo_events: Vec<TempoEvent>,
}

impl MidiPiece {
    pub fn empty(ppq: u16) -> Self {
        MidiPiece { ppq, tracks: Vec::new(), tempo_events: Vec::new() }
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    pub fn validate(&self) -> Result<(), MidiError> {
        if self.ppq == 0 || self.ppq >= 0x8000 {
            return Err(MidiError::InvalidPiece(format!("ppq {} outside 1..=32767", self.ppq)));
        }
        for (ti, track) in self.tracks.iter().enumerate() {
            for n in &track.notes {
                if n.pitch > 127 || n.velocity == 0 || n.velocity > 127 {
                    return Err(MidiError::InvalidPiece(format!(
                        "track {ti}: pitch or velocity out of range in {n:?}"
                    )));
                }
                if n.duration == 0 {
                    return Err(MidiError::InvalidPiece(format!("track {ti}: zero duration {n:?}")));
                }
            }
            if let Some(c) = track.controls.iter().find(|c| c.controller > 127 || c.value > 127) {
                return Err(MidiError::InvalidPiece(format!("track {ti}: control out of range {c:?}")));
            }
        }
        if self.tempo_events.windows(2).any(|w| w[0].tick >= w[1].tick) {
            return Err(MidiError::InvalidPiece("tempo events not strictly increasing".into()));
        }
        if self.tempo_events.iter().any(|t| t.micros_per_quarter == 0 || t.micros_per_quarter > 0xFF_FFFF) {
            return Err(MidiError::InvalidPiece("tempo outside 1..=0xFFFFFF us/quarter".into()));
        }
        Ok(())
    }
}

/// A note in the millisecond domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedNote {
    pub pitch: u8,
    pub velocity: u8,
    pub onset_ms: f64,
    pub duration_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedalEvent {
    pub time_ms: f64,
    pub value: u8,
}

/// Sustain level as a right-continuous step function of time, 0 before the first event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PedalCurve {
    events: Vec<PedalEvent>,
}

impl PedalCurve {
    /// Events are stably sorted by time; among events sharing a timestamp the last one wins.
    pub fn new(mut events: Vec<PedalEvent>) -> Self {
        events.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
        PedalCurve { events }
    }

    pub fn events(&self) -> &[PedalEvent] {
        &self.events
    }

    pub fn value_at(&self, t_ms: f64) -> u8 {
        let idx = self.events.partition_point(|e| e.time_ms <= t_ms);
        if idx == 0 {
            0
        } else {
            self.events[idx - 1].value
        }
    }
}

/// Single-stream millisecond-domain piece.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizedPiece {
    pub notes: Vec<TimedNote>,
    pub pedal: PedalCurve,
}

impl NormalizedPiece {
    /// True when notes are ordered by (onset, pitch) with unique keys.
    pub fn is_canonical(&self) -> bool {
        self.notes
            .windows(2)
            .all(|w| w[0].onset_ms < w[1].onset_ms || (w[0].onset_ms == w[1].onset_ms && w[0].pitch < w[1].pitch))
    }

    pub fn sort_canonical(&mut self) {
        self.notes.sort_by(|a, b| a.onset_ms.total_cmp(&b.onset_ms).then(a.pitch.cmp(&b.pitch)));
    }

    /// Expresses the piece as a single-track file at a constant 120 BPM.
    pub fn to_midi(&self, ppq: u16) -> MidiPiece {
        let ticks_per_ms = ppq as f64 / 500.0;
        let to_tick = |ms: f64| round_half_up(ms.max(0.0) * ticks_per_ms) as u64;
        let notes = self
            .notes
            .iter()
            .map(|n| {
                let onset = to_tick(n.onset_ms);
                let end = to_tick(n.onset_ms + n.duration_ms);
                Note { pitch: n.pitch, velocity: n.velocity, onset, duration: end.saturating_sub(onset).max(1) }
            })
            .collect();
        let controls = self
            .pedal
            .events()
            .iter()
            .map(|e| ControlEvent { controller: SUSTAIN_CONTROLLER, value: e.value, tick: to_tick(e.time_ms) })
            .collect();
        let mut track = Track { notes, controls };
        track.canonicalize();
        MidiPiece {
            ppq,
            tracks: if track.is_empty() { Vec::new() } else { vec![track] },
            tempo_events: vec![TempoEvent { tick: 0, micros_per_quarter: DEFAULT_MICROS_PER_QUARTER }],
        }
    }
}

/// `floor(x + 0.5)`, identical on every platform.
pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}
