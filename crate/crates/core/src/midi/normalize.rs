use super::{
    render_wallclock, MidiPiece, NormalizedPiece, Note, PedalCurve, PedalEvent, TimedNote, SUSTAIN_CONTROLLER,
};

/// How tick times become milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// Ignore the file's tempo map; one quarter note is 500 ms.
    #[default]
    Score,
    /// Integrate the file's own tempo map.
    Performance,
}

/// Merges all tracks into one stream, removes duplicate notes and converts ticks to milliseconds.
///
/// Duplicates are notes with the same pitch and onset tick; the one with the larger
/// velocity (then the longer duration) survives.
pub fn normalize(piece: &MidiPiece, mode: NormalizeMode) -> NormalizedPiece {
    let ppq = piece.ppq.max(1);
    let to_ms = |tick: u64| match mode {
        NormalizeMode::Score => tick as f64 * 500.0 / ppq as f64,
        NormalizeMode::Performance => render_wallclock(tick, &piece.tempo_events, ppq),
    };

    let mut merged: Vec<Note> = piece.tracks.iter().flat_map(|t| t.notes.iter().copied()).collect();
    merged.sort_by(|a, b| {
        (a.onset, a.pitch).cmp(&(b.onset, b.pitch)).then(b.velocity.cmp(&a.velocity)).then(b.duration.cmp(&a.duration))
    });
    merged.dedup_by_key(|n| (n.onset, n.pitch));

    let notes = merged
        .iter()
        .map(|n| {
            let onset_ms = to_ms(n.onset);
            TimedNote {
                pitch: n.pitch,
                velocity: n.velocity,
                onset_ms,
                duration_ms: (to_ms(n.end()) - onset_ms).max(1.0),
            }
        })
        .collect();

    let mut pedal: Vec<_> =
        piece.tracks.iter().flat_map(|t| t.controls.iter()).filter(|c| c.controller == SUSTAIN_CONTROLLER).collect();
    pedal.sort_by_key(|c| c.tick);
    let pedal =
        PedalCurve::new(pedal.into_iter().map(|c| PedalEvent { time_ms: to_ms(c.tick), value: c.value }).collect());

    NormalizedPiece { notes, pedal }
}
