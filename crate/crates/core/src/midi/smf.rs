//! Standard MIDI File codec. Reads formats 0 and 1, writes format 1.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{ControlEvent, MidiError, MidiPiece, Note, TempoEvent, Track};

const HEADER_MAGIC: &[u8; 4] = b"MThd";
const TRACK_MAGIC: &[u8; 4] = b"MTrk";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if n > self.remaining() {
            return Err(MidiError::InvalidEvent(format!(
                "event needs {n} bytes at offset {} but only {} remain",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn data_byte(&mut self) -> Result<u8, MidiError> {
        let b = self.u8()?;
        if b > 0x7F {
            return Err(MidiError::InvalidEvent(format!("data byte {b:#04x} has the high bit set")));
        }
        Ok(b)
    }

    fn u16_be(&mut self) -> Result<u16, MidiError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32_be(&mut self) -> Result<u32, MidiError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn varlen(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::InvalidEvent("variable-length quantity longer than 4 bytes".into()))
    }
}

fn write_varlen(out: &mut Vec<u8>, value: u32) {
    assert!(value <= 0x0FFF_FFFF, "delta {value} exceeds the 28-bit SMF limit");
    let mut stack = [0u8; 4];
    let mut n = 0;
    let mut v = value;
    loop {
        stack[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { stack[i] | 0x80 } else { stack[i] });
    }
}

pub fn parse_smf(bytes: &[u8]) -> Result<MidiPiece, MidiError> {
    if bytes.len() < 14 || &bytes[..4] != HEADER_MAGIC {
        return Err(MidiError::MalformedHeader("file does not start with a complete MThd chunk".into()));
    }
    let mut r = Reader::new(bytes);
    r.pos = 4;
    let header_len = r.u32_be()? as usize;
    if header_len < 6 {
        return Err(MidiError::MalformedHeader(format!("MThd length {header_len} < 6")));
    }
    if header_len > r.remaining() {
        return Err(MidiError::TruncatedChunk { declared: header_len, remaining: r.remaining() });
    }
    let header_end = r.pos + header_len;
    let format = r.u16_be()?;
    let _declared_tracks = r.u16_be()?;
    let division = r.u16_be()?;
    r.pos = header_end;
    match format {
        0 | 1 => {}
        2 => return Err(MidiError::UnsupportedFormat("SMF format 2 is not supported".into())),
        f => return Err(MidiError::UnsupportedFormat(format!("unknown SMF format {f}"))),
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedFormat("SMPTE time division is not supported".into()));
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("division of 0 ticks per quarter".into()));
    }

    let mut tracks = Vec::new();
    let mut tempo: BTreeMap<u64, u32> = BTreeMap::new();
    while r.remaining() > 0 {
        if r.remaining() < 8 {
            return Err(MidiError::TruncatedChunk { declared: 8, remaining: r.remaining() });
        }
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u32_be()? as usize;
        if len > r.remaining() {
            return Err(MidiError::TruncatedChunk { declared: len, remaining: r.remaining() });
        }
        let body = r.take(len)?;
        if &magic != TRACK_MAGIC {
            continue;
        }
        let track = parse_track(body, &mut tempo)?;
        if !track.is_empty() {
            tracks.push(track);
        }
    }
    let tempo_events =
        tempo.into_iter().map(|(tick, micros_per_quarter)| TempoEvent { tick, micros_per_quarter }).collect();
    Ok(MidiPiece { ppq: division, tracks, tempo_events })
}

fn parse_track(body: &[u8], tempo: &mut BTreeMap<u64, u32>) -> Result<Track, MidiError> {
    let mut r = Reader::new(body);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    // (channel, pitch) -> queue of (onset, velocity), matched first-in-first-out.
    let mut pending: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut track = Track::default();

    while r.remaining() > 0 {
        tick += r.varlen()? as u64;
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| MidiError::InvalidEvent("data byte without running status".into()))?
        };
        match status {
            0xFF => {
                running = None;
                let kind = r.u8()?;
                let len = r.varlen()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2F => break,
                    0x51 => {
                        if len != 3 {
                            return Err(MidiError::InvalidEvent(format!("tempo meta event of length {len}")));
                        }
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us == 0 {
                            return Err(MidiError::InvalidEvent("tempo of 0 us/quarter".into()));
                        }
                        tempo.insert(tick, us);
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.varlen()? as usize;
                r.take(len)?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let channel = status & 0x0F;
                match status & 0xF0 {
                    0x80 | 0x90 => {
                        let pitch = r.data_byte()?;
                        let velocity = r.data_byte()?;
                        let is_on = status & 0xF0 == 0x90 && velocity > 0;
                        let queue = pending.entry((channel, pitch)).or_default();
                        if is_on {
                            queue.push_back((tick, velocity));
                        } else if let Some((onset, velocity)) = queue.pop_front() {
                            let duration = (tick - onset).max(1);
                            track.notes.push(Note { pitch, velocity, onset, duration });
                        }
                    }
                    0xB0 => {
                        let controller = r.data_byte()?;
                        let value = r.data_byte()?;
                        track.controls.push(ControlEvent { controller, value, tick });
                    }
                    0xC0 | 0xD0 => {
                        r.data_byte()?;
                    }
                    _ => {
                        r.data_byte()?;
                        r.data_byte()?;
                    }
                }
            }
            s => return Err(MidiError::InvalidEvent(format!("unexpected status byte {s:#04x}"))),
        }
    }

    // Notes still sounding at end of track are closed there.
    let mut open: Vec<_> = pending.into_iter().collect();
    open.sort_by_key(|(k, _)| *k);
    for ((_, pitch), queue) in open {
        for (onset, velocity) in queue {
            let duration = (tick - onset).max(1);
            track.notes.push(Note { pitch, velocity, onset, duration });
        }
    }
    track.canonicalize();
    Ok(track)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Priority {
    Tempo,
    NoteOff,
    Control,
    NoteOn,
}

struct TimedBytes {
    tick: u64,
    priority: Priority,
    seq: usize,
    bytes: Vec<u8>,
}

/// Same-pitch notes that overlap in time go to different channels so that
/// first-in-first-out matching on re-read pairs every note-off with its own note-on.
fn assign_channels(notes: &[Note]) -> Vec<u8> {
    let mut order: Vec<usize> = (0..notes.len()).collect();
    order.sort_by_key(|&i| (notes[i].onset, i));
    let mut busy_until: HashMap<(u8, u8), u64> = HashMap::new();
    let mut channels = vec![0u8; notes.len()];
    for i in order {
        let n = notes[i];
        let channel = (0u8..16).find(|&c| busy_until.get(&(c, n.pitch)).is_none_or(|&end| end <= n.onset)).unwrap_or(0);
        let end = busy_until.entry((channel, n.pitch)).or_insert(0);
        *end = (*end).max(n.end());
        channels[i] = channel;
    }
    channels
}

fn track_chunk(events: &mut [TimedBytes]) -> Vec<u8> {
    events.sort_by_key(|e| (e.tick, e.priority, e.seq));
    let mut data = Vec::new();
    let mut last = 0u64;
    for e in events.iter() {
        let delta = u32::try_from(e.tick - last).expect("delta time fits in 28 bits");
        write_varlen(&mut data, delta);
        data.extend_from_slice(&e.bytes);
        last = e.tick;
    }
    data.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);
    let mut chunk = Vec::with_capacity(data.len() + 8);
    chunk.extend_from_slice(TRACK_MAGIC);
    chunk.extend_from_slice(&(data.len() as u32).to_be_bytes());
    chunk.extend_from_slice(&data);
    chunk
}

fn track_events(track: &Track) -> Vec<TimedBytes> {
    let channels = assign_channels(&track.notes);
    let mut events = Vec::with_capacity(track.notes.len() * 2 + track.controls.len());
    for (seq, (n, &ch)) in track.notes.iter().zip(&channels).enumerate() {
        events.push(TimedBytes {
            tick: n.onset,
            priority: Priority::NoteOn,
            seq,
            bytes: vec![0x90 | ch, n.pitch, n.velocity.max(1)],
        });
        events.push(TimedBytes { tick: n.end(), priority: Priority::NoteOff, seq, bytes: vec![0x80 | ch, n.pitch, 0] });
    }
    for (seq, c) in track.controls.iter().enumerate() {
        events.push(TimedBytes {
            tick: c.tick,
            priority: Priority::Control,
            seq,
            bytes: vec![0xB0, c.controller, c.value],
        });
    }
    events
}

/// Serializes a piece as SMF format 1. Tempo events are written into the first track.
pub fn write_smf(piece: &MidiPiece) -> Vec<u8> {
    write_smf_with_comment(piece, None)
}

/// Like [`write_smf`], optionally adding a text meta event at tick 0 of the first track.
pub fn write_smf_with_comment(piece: &MidiPiece, comment: Option<&str>) -> Vec<u8> {
    let track_count = piece.tracks.len().max(1);
    let mut out = Vec::new();
    out.extend_from_slice(HEADER_MAGIC);
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(track_count as u16).to_be_bytes());
    out.extend_from_slice(&piece.ppq.to_be_bytes());

    for i in 0..track_count {
        let mut events = piece.tracks.get(i).map(track_events).unwrap_or_default();
        if i == 0 {
            for (seq, t) in piece.tempo_events.iter().enumerate() {
                let us = t.micros_per_quarter.to_be_bytes();
                events.push(TimedBytes {
                    tick: t.tick,
                    priority: Priority::Tempo,
                    seq,
                    bytes: vec![0xFF, 0x51, 0x03, us[1], us[2], us[3]],
                });
            }
            if let Some(text) = comment {
                let mut bytes = vec![0xFF, 0x01];
                write_varlen(&mut bytes, text.len() as u32);
                bytes.extend_from_slice(text.as_bytes());
                events.push(TimedBytes { tick: 0, priority: Priority::Tempo, seq: usize::MAX, bytes });
            }
        }
        out.extend(track_chunk(&mut events));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(format: u16, tracks: u16, ppq: u16) -> Vec<u8> {
        let mut v = b"MThd".to_vec();
        v.extend_from_slice(&6u32.to_be_bytes());
        v.extend_from_slice(&format.to_be_bytes());
        v.extend_from_slice(&tracks.to_be_bytes());
        v.extend_from_slice(&ppq.to_be_bytes());
        v
    }

    fn chunk(body: &[u8]) -> Vec<u8> {
        let mut v = b"MTrk".to_vec();
        v.extend_from_slice(&(body.len() as u32).to_be_bytes());
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn minimal_single_note() {
        let mut bytes = header(0, 1, 480);
        bytes.extend(chunk(&[0x00, 0x90, 60, 80, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xFF, 0x2F, 0x00]));
        let piece = parse_smf(&bytes).unwrap();
        assert_eq!(piece.ppq, 480);
        assert_eq!(piece.tracks.len(), 1);
        assert_eq!(piece.tracks[0].notes, vec![Note { pitch: 60, velocity: 80, onset: 0, duration: 480 }]);
    }

    // Hand-assembled format-1 file: conductor track plus two one-note tracks,
    // using running status and the 0x90/vel-0 note-off form.
    #[test]
    fn format1_two_tracks() {
        let mut bytes = header(1, 3, 96);
        bytes.extend(chunk(&[0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0xFF, 0x2F, 0x00]));
        bytes.extend(chunk(&[0x00, 0x91, 64, 100, 0x60, 64, 0, 0x00, 0xFF, 0x2F, 0x00]));
        bytes.extend(chunk(&[0x30, 0x92, 67, 90, 0x30, 0x82, 67, 64, 0x00, 0xFF, 0x2F, 0x00]));
        let piece = parse_smf(&bytes).unwrap();
        assert_eq!(piece.tracks.len(), 2);
        assert_eq!(piece.note_count(), 2);
        assert_eq!(piece.tracks[0].notes[0], Note { pitch: 64, velocity: 100, onset: 0, duration: 96 });
        assert_eq!(piece.tracks[1].notes[0], Note { pitch: 67, velocity: 90, onset: 48, duration: 48 });
        assert_eq!(piece.tempo_events, vec![TempoEvent { tick: 0, micros_per_quarter: 500_000 }]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = header(0, 1, 480);
        bytes[3] = b'X';
        bytes.extend(chunk(&[0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_smf(&bytes), Err(MidiError::MalformedHeader(_))));
        assert!(matches!(parse_smf(b"MTh"), Err(MidiError::MalformedHeader(_))));
    }

    #[test]
    fn format2_rejected() {
        let mut bytes = header(2, 1, 480);
        bytes.extend(chunk(&[0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_smf(&bytes), Err(MidiError::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated_chunk() {
        let mut bytes = header(0, 1, 480);
        let mut c = chunk(&[0x00, 0xFF, 0x2F, 0x00]);
        c[7] = 200;
        bytes.extend(c);
        assert!(matches!(parse_smf(&bytes), Err(MidiError::TruncatedChunk { declared: 200, remaining: 4 })));
    }

    #[test]
    fn sysex_skipped_and_unclosed_note_closed_at_end() {
        let mut bytes = header(0, 1, 480);
        bytes.extend(chunk(&[
            0x00, 0xF0, 0x03, 0x7E, 0x7F, 0xF7, // sysex
            0x00, 0x90, 60, 70, // note-on, never released
            0x00, 0xB0, 64, 127, // pedal down
            0x81, 0x70, 0xFF, 0x2F, 0x00, // end of track at tick 240
        ]));
        let piece = parse_smf(&bytes).unwrap();
        assert_eq!(piece.tracks[0].notes, vec![Note { pitch: 60, velocity: 70, onset: 0, duration: 240 }]);
        assert_eq!(piece.tracks[0].controls, vec![ControlEvent { controller: 64, value: 127, tick: 0 }]);
    }

    #[test]
    fn fifo_matching_of_repeated_pitch() {
        let mut bytes = header(0, 1, 480);
        bytes.extend(chunk(&[
            0x00, 0x90, 60, 10, 0x10, 0x90, 60, 20, 0x10, 0x80, 60, 0, 0x10, 0x80, 60, 0, 0x00, 0xFF, 0x2F, 0x00,
        ]));
        let notes = &parse_smf(&bytes).unwrap().tracks[0].notes;
        assert_eq!(notes[0], Note { pitch: 60, velocity: 10, onset: 0, duration: 32 });
        assert_eq!(notes[1], Note { pitch: 60, velocity: 20, onset: 16, duration: 32 });
    }

    #[test]
    fn empty_piece_writes_single_end_of_track() {
        let bytes = write_smf(&MidiPiece::empty(480));
        let mut expected = header(1, 1, 480);
        expected.extend(chunk(&[0x00, 0xFF, 0x2F, 0x00]));
        assert_eq!(bytes, expected);
        assert_eq!(parse_smf(&bytes).unwrap(), MidiPiece::empty(480));
    }

    #[test]
    fn tempo_event_bytes() {
        let mut piece = MidiPiece::empty(480);
        piece.tempo_events.push(TempoEvent { tick: 0, micros_per_quarter: 500_000 });
        let bytes = write_smf(&piece);
        let needle = [0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20];
        assert!(bytes.windows(6).any(|w| w == needle));
    }

    #[test]
    fn varlen_boundaries() {
        for (v, enc) in [
            (0u32, vec![0x00]),
            (0x7F, vec![0x7F]),
            (0x80, vec![0x81, 0x00]),
            (0x3FFF, vec![0xFF, 0x7F]),
            (0x0FFF_FFFF, vec![0xFF, 0xFF, 0xFF, 0x7F]),
        ] {
            let mut out = Vec::new();
            write_varlen(&mut out, v);
            assert_eq!(out, enc);
            assert_eq!(Reader::new(&enc).varlen().unwrap(), v);
        }
    }

    #[test]
    fn comment_is_ignored_on_read() {
        let piece = MidiPiece {
            ppq: 480,
            tracks: vec![Track {
                notes: vec![Note { pitch: 60, velocity: 80, onset: 0, duration: 10 }],
                controls: vec![],
            }],
            tempo_events: vec![],
        };
        let bytes = write_smf_with_comment(&piece, Some("seed=7"));
        assert!(bytes.windows(6).any(|w| w == b"seed=7"));
        assert_eq!(parse_smf(&bytes).unwrap(), piece);
    }

    fn arb_track() -> impl Strategy<Value = Track> {
        let note = (0u8..128, 1u8..128, 0u64..5000, 1u64..2000).prop_map(|(pitch, velocity, onset, duration)| Note {
            pitch,
            velocity,
            onset,
            duration,
        });
        let control = (0u8..128, 0u8..128, 0u64..8000).prop_map(|(controller, value, tick)| ControlEvent {
            controller,
            value,
            tick,
        });
        (prop::collection::vec(note, 0..40), prop::collection::vec(control, 0..10)).prop_filter_map(
            "non-empty track",
            |(notes, controls)| {
                let mut t = Track { notes, controls };
                t.canonicalize();
                (!t.is_empty()).then_some(t)
            },
        )
    }

    fn arb_piece() -> impl Strategy<Value = MidiPiece> {
        (
            1u16..2000,
            prop::collection::vec(arb_track(), 0..4),
            prop::collection::btree_map(0u64..8000, 1u32..0xFF_FFFF, 0..5),
        )
            .prop_map(|(ppq, tracks, tempo)| MidiPiece {
                ppq,
                tracks,
                tempo_events: tempo
                    .into_iter()
                    .map(|(tick, micros_per_quarter)| TempoEvent { tick, micros_per_quarter })
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn parse_write_identity(piece in arb_piece()) {
            prop_assume!(piece.validate().is_ok());
            let back = parse_smf(&write_smf(&piece)).unwrap();
            prop_assert_eq!(back, piece);
        }
    }
}
