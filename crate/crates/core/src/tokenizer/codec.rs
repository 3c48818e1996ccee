use super::vocab::{Slot, MAX_DURATION_MS, MAX_IOI_MS, TOKENS_PER_NOTE};
use super::{validate_body, TokenError, TokenSeq};
use crate::midi::{round_half_up, NormalizedPiece, PedalCurve, PedalEvent, TimedNote};

/// Times at which the four pedal tokens of a note sample the sustain curve.
fn pedal_sample_times(onset_ms: f64, window_ms: f64) -> [f64; 4] {
    std::array::from_fn(|k| onset_ms + window_ms * (k + 1) as f64 / 4.0)
}

/// Pedal window: up to the next onset, or the note's own duration for the last note.
fn pedal_window(notes: &[TimedNote], i: usize) -> f64 {
    match notes.get(i + 1) {
        Some(next) => next.onset_ms - notes[i].onset_ms,
        None => notes[i].duration_ms,
    }
}

/// The four pedal sample instants of every note, in note order.
pub fn pedal_sample_points(piece: &NormalizedPiece) -> Vec<[f64; 4]> {
    (0..piece.notes.len()).map(|i| pedal_sample_times(piece.notes[i].onset_ms, pedal_window(&piece.notes, i))).collect()
}

fn quantize(ms: f64, max: u16) -> u16 {
    round_half_up(ms).clamp(0.0, max as f64) as u16
}

/// Converts a piece to its token body, one 8-token frame per note, in note order.
pub fn encode(piece: &NormalizedPiece) -> Result<TokenSeq, TokenError> {
    let notes = &piece.notes;
    if notes.is_empty() {
        return Err(TokenError::EmptyPiece);
    }
    let mut ids = Vec::with_capacity(notes.len() * TOKENS_PER_NOTE);
    // IOIs are differences of rounded onsets, so sub-millisecond remainders never accumulate.
    let mut prev_rounded = round_half_up(notes[0].onset_ms);
    for (i, note) in notes.iter().enumerate() {
        let rounded = round_half_up(note.onset_ms);
        let ioi = if i == 0 { 0 } else { quantize(rounded - prev_rounded, MAX_IOI_MS) };
        prev_rounded = rounded;

        ids.push(Slot::Pitch.token(note.pitch as u16));
        ids.push(Slot::Ioi.token(ioi));
        ids.push(Slot::Velocity.token(note.velocity as u16));
        ids.push(Slot::Duration.token(quantize(note.duration_ms, MAX_DURATION_MS)));
        for (k, t) in pedal_sample_times(note.onset_ms, pedal_window(notes, i)).into_iter().enumerate() {
            ids.push(Slot::Pedal(k as u8).token(piece.pedal.value_at(t) as u16));
        }
    }
    Ok(TokenSeq(ids))
}

/// Rebuilds a piece from a token body (BOS/EOS are ignored). Notes keep frame order.
pub fn decode(seq: &TokenSeq) -> Result<NormalizedPiece, TokenError> {
    let body = seq.body();
    validate_body(body)?;
    let value = |pos: usize| Slot::of_position(pos).value_of(body[pos]).expect("validated");

    let mut notes = Vec::with_capacity(body.len() / TOKENS_PER_NOTE);
    let mut onset = 0.0;
    for (i, frame_start) in (0..body.len()).step_by(TOKENS_PER_NOTE).enumerate() {
        if i > 0 {
            onset += value(frame_start + 1) as f64;
        }
        notes.push(TimedNote {
            pitch: value(frame_start) as u8,
            velocity: value(frame_start + 2) as u8,
            onset_ms: onset,
            duration_ms: (value(frame_start + 3) as f64).max(1.0),
        });
    }

    // Step function through the samples; only level changes are kept.
    let mut events = Vec::new();
    let mut level = 0u8;
    for i in 0..notes.len() {
        let times = pedal_sample_times(notes[i].onset_ms, pedal_window(&notes, i));
        for (k, time_ms) in times.into_iter().enumerate() {
            let v = value(i * TOKENS_PER_NOTE + 4 + k) as u8;
            if v != level {
                events.push(PedalEvent { time_ms, value: v });
                level = v;
            }
        }
    }
    Ok(NormalizedPiece { notes, pedal: PedalCurve::new(events) })
}
