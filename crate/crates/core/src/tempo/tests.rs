use super::*;
use crate::midi::{render_wallclock, PedalCurve, PedalEvent, TimedNote};
use proptest::prelude::*;

fn piece(notes: &[(u8, u8, f64, f64)]) -> NormalizedPiece {
    NormalizedPiece {
        notes: notes
            .iter()
            .map(|&(pitch, velocity, onset_ms, duration_ms)| TimedNote { pitch, velocity, onset_ms, duration_ms })
            .collect(),
        pedal: PedalCurve::default(),
    }
}

fn scaled(score: &NormalizedPiece, factor: f64) -> NormalizedPiece {
    let mut p = score.clone();
    for n in &mut p.notes {
        n.onset_ms *= factor;
        n.duration_ms *= factor;
    }
    p
}

fn three_notes() -> NormalizedPiece {
    piece(&[(60, 80, 0.0, 400.0), (62, 80, 500.0, 400.0), (64, 80, 1000.0, 400.0)])
}

#[test]
fn identity_performance_gives_constant_120() {
    let score = three_notes();
    let pair = AlignedPair::new(score.clone(), score.clone()).unwrap();
    assert_eq!(estimate_tempo_curve(&pair, 480).unwrap().breakpoints(), &[(0, 120.0)]);
    let midi = expressive_tempo_map(&pair, 480).unwrap();
    assert_eq!(midi.tempo_events, vec![TempoEvent { tick: 0, micros_per_quarter: 500_000 }]);
    let expected = score.to_midi(480);
    assert_eq!(midi.tracks[0].notes, expected.tracks[0].notes);
}

#[test]
fn half_speed_gives_constant_60_and_score_ticks() {
    let score = three_notes();
    let pair = AlignedPair::new(score.clone(), scaled(&score, 2.0)).unwrap();
    assert_eq!(estimate_tempo_curve(&pair, 480).unwrap().breakpoints(), &[(0, 60.0)]);
    let midi = expressive_tempo_map(&pair, 480).unwrap();
    assert_eq!(midi.tempo_events, vec![TempoEvent { tick: 0, micros_per_quarter: 1_000_000 }]);
    let onsets: Vec<u64> = midi.tracks[0].notes.iter().map(|n| n.onset).collect();
    assert_eq!(onsets, vec![0, 480, 960]);
}

#[test]
fn accelerating_second_segment() {
    let score = three_notes();
    let perf = piece(&[(60, 70, 0.0, 400.0), (62, 71, 500.0, 200.0), (64, 72, 750.0, 200.0)]);
    let pair = AlignedPair::new(score, perf).unwrap();
    let curve = estimate_tempo_curve(&pair, 480).unwrap();
    assert_eq!(curve.breakpoints(), &[(0, 120.0), (480, 240.0)]);
    assert_eq!(ms_to_ticks(750.0, &curve), 960);
    assert_eq!(ms_to_ticks(500.0, &curve), 480);
    assert_eq!(ms_to_ticks(0.0, &curve), 0);
    let midi = expressive_tempo_map(&pair, 480).unwrap();
    let velocities: Vec<u8> = midi.tracks[0].notes.iter().map(|n| n.velocity).collect();
    assert_eq!(velocities, vec![70, 71, 72]);
}

#[test]
fn constant_120_tick_conversion() {
    let curve = TempoCurve::constant(120.0, 480).unwrap();
    assert_eq!(ms_to_ticks(500.0, &curve), 480);
    // 60000 / (120 · 480) ms per tick
    assert!((curve.tick_to_ms(1.0) - 1.041_666_666_666_666_7).abs() < 1e-12);
}

#[test]
fn degenerate_scores_get_the_default_tempo() {
    let chord = piece(&[(60, 80, 100.0, 400.0), (64, 80, 100.0, 400.0)]);
    let pair = AlignedPair::new(chord.clone(), scaled(&chord, 3.0)).unwrap();
    assert_eq!(estimate_tempo_curve(&pair, 480).unwrap().breakpoints(), &[(0, 120.0)]);
    let empty = piece(&[]);
    let pair = AlignedPair::new(empty.clone(), empty).unwrap();
    assert_eq!(estimate_tempo_curve(&pair, 480).unwrap().breakpoints(), &[(0, 120.0)]);
}

#[test]
fn extreme_tempi_are_clamped_and_reversals_carry() {
    let score = piece(&[(60, 80, 0.0, 10.0), (61, 80, 1000.0, 10.0), (62, 80, 2000.0, 10.0), (63, 80, 3000.0, 10.0)]);
    let perf = piece(&[(60, 80, 0.0, 10.0), (61, 80, 1.0, 10.0), (62, 80, 0.5, 10.0), (63, 80, 100_000.0, 10.0)]);
    let curve = estimate_tempo_curve(&AlignedPair::new(score, perf).unwrap(), 480).unwrap();
    assert_eq!(curve.breakpoints(), &[(0, 400.0), (1920, 20.0)]);
}

#[test]
fn pair_validation() {
    let score = three_notes();
    let short = piece(&[(60, 80, 0.0, 400.0)]);
    assert_eq!(AlignedPair::new(score.clone(), short), Err(TempoError::LengthMismatch { score: 3, perf: 1 }));
    let mut wrong = score.clone();
    wrong.notes[1].pitch = 63;
    assert_eq!(AlignedPair::new(score.clone(), wrong), Err(TempoError::PitchMismatch(1)));
    let mut unsorted = score.clone();
    unsorted.notes.swap(0, 2);
    assert_eq!(AlignedPair::new(unsorted.clone(), unsorted), Err(TempoError::UnsortedScore));
}

#[test]
fn pitch_order_alignment_matches_reordered_notes() {
    let score = piece(&[(60, 80, 0.0, 100.0), (64, 80, 0.0, 100.0), (60, 80, 500.0, 100.0)]);
    let perf = piece(&[(64, 90, 3.0, 100.0), (60, 91, 5.0, 100.0), (60, 92, 480.0, 100.0)]);
    let pair = AlignedPair::align_by_pitch_order(score, perf).unwrap();
    let v: Vec<u8> = pair.perf().notes.iter().map(|n| n.velocity).collect();
    assert_eq!(v, vec![91, 90, 92]);
    let extra = piece(&[(61, 80, 0.0, 100.0), (64, 80, 0.0, 100.0), (60, 80, 500.0, 100.0)]);
    assert_eq!(AlignedPair::align_by_pitch_order(extra, pair.perf().clone()), Err(TempoError::PitchMismatch(0)));
}

#[test]
fn curve_validation() {
    assert!(TempoCurve::new(vec![], 480).is_err());
    assert!(TempoCurve::new(vec![(5, 120.0)], 480).is_err());
    assert!(TempoCurve::new(vec![(0, 120.0), (0, 100.0)], 480).is_err());
    assert!(TempoCurve::new(vec![(0, 500.0)], 480).is_err());
    assert!(TempoCurve::constant(120.0, 0).is_err());
}

#[test]
fn pedal_events_are_converted() {
    let score = three_notes();
    let mut perf = scaled(&score, 2.0);
    perf.pedal =
        PedalCurve::new(vec![PedalEvent { time_ms: 100.0, value: 127 }, PedalEvent { time_ms: 1900.0, value: 0 }]);
    let midi = expressive_tempo_map(&AlignedPair::new(score, perf).unwrap(), 480).unwrap();
    let controls = &midi.tracks[0].controls;
    assert_eq!(controls.len(), 2);
    assert_eq!((controls[0].tick, controls[0].value), (48, 127));
    assert_eq!((controls[1].tick, controls[1].value), (912, 0));
    assert!(controls.iter().all(|c| c.controller == SUSTAIN_CONTROLLER));
}

pub(crate) fn rubato_pair() -> impl Strategy<Value = AlignedPair> {
    (1usize..40, any::<u64>()).prop_map(|(n, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0.0;
        let mut p = rng.random_range(0.0..300.0);
        let mut score = Vec::new();
        let mut perf = Vec::new();
        let mut pedal = Vec::new();
        let mut group = Vec::new();
        for i in 0..n {
            if i > 0 && rng.random_bool(0.8) {
                let gap = rng.random_range(1..8) as f64 * 125.0;
                s += gap;
                p += gap * rng.random_range(0.4..2.5);
                group.clear();
            }
            let pitch = rng.random_range(21..109);
            if group.contains(&pitch) {
                continue;
            }
            group.push(pitch);
            let dur = rng.random_range(50.0..900.0);
            score.push((pitch, 64, s, 250.0));
            perf.push((pitch, rng.random_range(1..128), p + rng.random_range(0.0..20.0), dur));
            if rng.random_bool(0.3) {
                pedal.push(PedalEvent { time_ms: p, value: if rng.random_bool(0.5) { 127 } else { 0 } });
            }
        }
        let mut score = piece(&score);
        let mut perf = piece(&perf);
        // Sort score canonically and carry the performance along.
        let mut order: Vec<usize> = (0..score.notes.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&score.notes[a], &score.notes[b]);
            x.onset_ms.total_cmp(&y.onset_ms).then(x.pitch.cmp(&y.pitch))
        });
        score.notes = order.iter().map(|&i| score.notes[i]).collect();
        perf.notes = order.iter().map(|&i| perf.notes[i]).collect();
        perf.pedal = PedalCurve::new(pedal);
        AlignedPair::new(score, perf).expect("constructed aligned")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rendering_the_map_reproduces_performed_onsets(pair in rubato_pair()) {
        let ppq = 480;
        let midi = expressive_tempo_map(&pair, ppq).unwrap();
        midi.validate().unwrap();
        let curve = estimate_tempo_curve(&pair, ppq).unwrap();
        for (s, p) in pair.score().notes.iter().zip(&pair.perf().notes) {
            let tick = ms_to_ticks(p.onset_ms, &curve);
            let rendered = render_wallclock(tick, &midi.tempo_events, ppq);
            let tick_ms = curve.tick_to_ms(tick as f64 + 1.0) - curve.tick_to_ms(tick as f64);
            prop_assert!((rendered - p.onset_ms).abs() <= tick_ms.max(2.0), "{} vs {}", rendered, p.onset_ms);
            let note = midi.tracks[0].notes.iter().find(|n| n.onset == tick && n.pitch == s.pitch && n.velocity == p.velocity);
            prop_assert!(note.is_some());
        }
        let bpms: Vec<f64> = curve.breakpoints().iter().map(|b| b.1).collect();
        prop_assert!(bpms.iter().all(|b| (MIN_BPM..=MAX_BPM).contains(b)));
        prop_assert_eq!(midi.tracks[0].controls.len(), pair.perf().pedal.events().len());
        prop_assert_eq!(midi.note_count(), pair.score().notes.len());
    }

    #[test]
    fn ms_to_ticks_is_monotone(pair in rubato_pair(), a in 0.0f64..20_000.0, b in 0.0f64..20_000.0) {
        let curve = estimate_tempo_curve(&pair, 480).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(ms_to_ticks(lo, &curve) <= ms_to_ticks(hi, &curve));
        prop_assert!(curve.ms_to_tick_exact(lo) <= curve.ms_to_tick_exact(hi));
        if hi > lo {
            prop_assert!(curve.ms_to_tick_exact(lo) < curve.ms_to_tick_exact(hi));
        }
        prop_assert!((curve.tick_to_ms(curve.ms_to_tick_exact(hi)) - hi).abs() < 1e-6);
    }
}
