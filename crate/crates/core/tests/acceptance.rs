//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rendition_core::inference::{
    blockwise_generate, constrained_generate_windowed, BlockConfig, InferenceError, PerformanceModel, SamplingConfig,
    StubPerformer,
};
use rendition_core::metrics::{
    evaluate_testset, human_baseline, intersection_area, js_divergence, Dimension, Distribution, MetricOptions,
};
use rendition_core::midi::{render_wallclock, NormalizedPiece, PedalCurve, PedalEvent, TimedNote};
use rendition_core::model::{
    attention_cost, count_parameters, decoder_step_cost, loss, train_steps, Matrix, Model, ModelConfig,
    OptimizerConfig, TrainingExample,
};
use rendition_core::tempo::{estimate_tempo_curve, expressive_tempo_map, ms_to_ticks, AlignedPair};
use rendition_core::tokenizer::vocab::Special;
use rendition_core::tokenizer::{
    corrupt_for_pretraining, decode, encode, pedal_sample_points, Slot, TokenId, TokenKind, TokenSeq,
    PRETRAIN_MASK_RATIO, TOKENS_PER_NOTE, VOCAB_SIZE,
};
use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: usize, name: &str, limit: Duration, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let (ok, detail) = match result {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; too slow")),
        Err(d) => (false, d),
    };
    println!(
        "[{}] {id:>2}. {name}: {detail} ({:.2} s, limit {} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

// ---------------------------------------------------------------- generators

/// Integer-millisecond piece in canonical order with every timing inside the token ranges.
fn random_piece(rng: &mut ChaCha8Rng, max_notes: usize) -> NormalizedPiece {
    let n = rng.random_range(1..=max_notes);
    let mut onset = 0u32;
    let mut notes = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            onset += match rng.random_range(0..4) {
                0 => 0,
                1 => rng.random_range(1..=120),
                2 => rng.random_range(120..=900),
                _ => rng.random_range(900..=4990),
            };
        }
        notes.push(TimedNote {
            pitch: rng.random_range(0..128),
            velocity: rng.random_range(1..128),
            onset_ms: onset as f64,
            duration_ms: rng.random_range(1..=4999) as f64,
        });
    }
    let end = onset + 5000;
    let events = (0..rng.random_range(0..20))
        .map(|_| PedalEvent { time_ms: rng.random_range(0..end) as f64, value: rng.random_range(0..128) })
        .collect();
    let mut piece = NormalizedPiece { notes, pedal: PedalCurve::new(events) };
    piece.sort_canonical();
    piece.notes.dedup_by(|a, b| a.onset_ms == b.onset_ms && a.pitch == b.pitch);
    piece
}

/// Random legal token body of `notes` frames.
fn random_body(rng: &mut ChaCha8Rng, notes: usize) -> Vec<TokenId> {
    (0..notes * TOKENS_PER_NOTE).map(|i| rng.random_range(Slot::of_position(i).legal_range())).collect()
}

fn pitches(body: &[TokenId]) -> Vec<TokenId> {
    body.iter().step_by(TOKENS_PER_NOTE).copied().collect()
}

// ---------------------------------------------------------------- 1

fn vocabulary() -> Check {
    ensure(VOCAB_SIZE == 5389, || format!("VOCAB_SIZE is {VOCAB_SIZE}"))?;
    let mut counts = [0usize; 5];
    let mut seen = HashSet::new();
    for id in 0..VOCAB_SIZE as TokenId {
        let kind = TokenKind::from_id(id).ok_or(format!("id {id} unmapped"))?;
        ensure(kind.id() == id, || format!("id {id} maps back to {}", kind.id()))?;
        ensure(seen.insert(kind), || format!("kind {kind:?} repeated"))?;
        counts[match kind {
            TokenKind::Pitch(_) => 0,
            TokenKind::Velocity(_) => 1,
            TokenKind::Timing(_) => 2,
            TokenKind::Pedal(_) => 3,
            TokenKind::Special(_) => 4,
        }] += 1;
    }
    ensure(TokenKind::from_id(VOCAB_SIZE as TokenId).is_none(), || "id 5389 is mapped".into())?;
    ensure(counts == [128, 128, 5000, 128, 5], || format!("block sizes {counts:?}"))?;
    for s in [Special::Pad, Special::Mask, Special::Bos, Special::Eos, Special::Play] {
        ensure(seen.contains(&TokenKind::Special(s)), || format!("{s:?} missing"))?;
    }
    Ok(format!("{} ids, blocks {counts:?}, bijective", seen.len()))
}

// ---------------------------------------------------------------- 2

fn tokenizer_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70ce);
    let mut notes = 0;
    let mut samples = 0;
    for case in 0..1000 {
        let piece = random_piece(&mut rng, 64);
        let seq = encode(&piece).map_err(|e| format!("case {case}: {e}"))?;
        let back = decode(&seq).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back.notes == piece.notes, || format!("case {case}: notes differ"))?;
        for (i, points) in pedal_sample_points(&piece).iter().enumerate() {
            for &t in points {
                ensure(piece.pedal.value_at(t) == back.pedal.value_at(t), || {
                    format!("case {case}: pedal differs at note {i}, {t} ms")
                })?;
                samples += 1;
            }
        }
        notes += piece.notes.len();
    }
    Ok(format!("1000 pieces, {notes} notes, {samples} pedal samples exact"))
}

// ---------------------------------------------------------------- 3

fn compression_cost() -> Check {
    let mut ratios = Vec::new();
    for config in [ModelConfig::base(), ModelConfig::toy()] {
        for n in [64, 1024, 4096] {
            let full = attention_cost(&config, n, config.encoder_layers, false).map_err(|e| e.to_string())?;
            let compressed = attention_cost(&config, n, config.encoder_layers, true).map_err(|e| e.to_string())?;
            ensure(compressed > 0 && full == 64 * compressed, || format!("N={n}: {full} / {compressed}"))?;
            ratios.push(full / compressed);
        }
    }
    Ok(format!("uncompressed/compressed = {ratios:?} for N in {{64, 1024, 4096}}"))
}

// ---------------------------------------------------------------- 4

fn pretrain_example(piece_seed: u64, notes: usize, ratio: f64, mask_seed: u64) -> TrainingExample {
    let mut rng = ChaCha8Rng::seed_from_u64(piece_seed);
    let mut piece = random_piece(&mut rng, 200);
    while piece.notes.len() < notes {
        piece = random_piece(&mut rng, 200);
    }
    piece.notes.truncate(notes);
    let seq = encode(&piece).unwrap();
    TrainingExample::from_pretrain(&corrupt_for_pretraining(&seq, ratio, mask_seed).unwrap())
}

fn gradient_fidelity() -> Check {
    let config = ModelConfig::toy();
    ensure((config.hidden_size, config.encoder_layers, config.decoder_layers) == (32, 2, 1), || format!("{config:?}"))?;
    let mut model = Model::<f64>::init(config, 77).map_err(|e| e.to_string())?;
    let ex = pretrain_example(5, 3, 0.4, 9);
    let (_, grads) = model.backward(&ex, 1.0).map_err(|e| e.to_string())?;
    let shapes: Vec<(String, usize, usize)> =
        grads.tensors().into_iter().map(|(n, m)| (n, m.rows(), m.cols())).collect();
    let mut tokens: Vec<usize> = ex.encoder_tokens.iter().chain(&ex.decoder_input).map(|&t| t as usize).collect();
    tokens.sort_unstable();
    tokens.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Five-point central difference: O(h^4) truncation, and a step large enough that roundoff stays far below 1e-4.
    let h = 1e-3;
    let (mut checked, mut worst, mut nonzero) = (0usize, 0.0f64, 0usize);
    for (t, (name, rows, cols)) in shapes.iter().enumerate() {
        for _ in 0..6 {
            // Embedding rows of absent tokens have exactly zero gradient; sample mostly present ones.
            let row = if name == "embedding" && rng.random_bool(0.8) {
                tokens[rng.random_range(0..tokens.len())]
            } else {
                rng.random_range(0..*rows)
            };
            let idx = row * cols + rng.random_range(0..*cols);
            let analytic = grads.tensors()[t].1.data()[idx];
            let saved = model.params.tensors_mut()[t].data()[idx];
            let mut at = |delta: f64| {
                model.params.tensors_mut()[t].data_mut()[idx] = saved + delta;
                model.evaluate(&ex).map(|r| r.loss).map_err(|e| e.to_string())
            };
            let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
            model.params.tensors_mut()[t].data_mut()[idx] = saved;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-8 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
            worst = worst.max(err);
            nonzero += (scale >= 1e-8) as usize;
            checked += 1;
        }
    }
    ensure(checked >= 200, || format!("only {checked} parameters"))?;
    ensure(worst <= 1e-4, || format!("max relative error {worst:.3e} over {checked} parameters"))?;
    Ok(format!(
        "max relative error {worst:.3e} over {checked} parameters ({nonzero} with non-negligible gradient), bound 1e-4"
    ))
}

// ---------------------------------------------------------------- 5

fn objective_wiring() -> Check {
    let ex = pretrain_example(11, 6, 0.3, 2);
    let rows = ex.targets.len();
    let masked = ex.loss_mask.iter().filter(|&&m| m).count();
    ensure(masked > 0 && masked < rows, || format!("{masked} of {rows} masked"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let logits = Matrix::<f64>::from_fn(rows, VOCAB_SIZE, |_, _| rng.random_range(-4.0..4.0));
    let base = loss(&logits, &ex.targets, &ex.loss_mask).map_err(|e| e.to_string())?.loss;
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let mut scrambled = logits.clone();
        for r in (0..rows).filter(|&r| !ex.loss_mask[r]) {
            for v in scrambled.row_mut(r) {
                *v = rng.random_range(-50.0..50.0) * (trial + 1) as f64;
            }
        }
        let l = loss(&scrambled, &ex.targets, &ex.loss_mask).map_err(|e| e.to_string())?.loss;
        worst = worst.max((l - base).abs());
    }
    ensure(worst == 0.0, || format!("loss moved by {worst:e} when unmasked logits changed"))?;

    // Same contract through the model: unmasked targets do not enter the loss.
    let model = Model::<f64>::init(ModelConfig::toy(), 3).map_err(|e| e.to_string())?;
    let reference = model.evaluate(&ex).map_err(|e| e.to_string())?.loss;
    let mut altered = ex.clone();
    for (t, &m) in altered.targets.iter_mut().zip(&ex.loss_mask) {
        if !m {
            *t = rng.random_range(0..VOCAB_SIZE as TokenId);
        }
    }
    let moved = model.evaluate(&altered).map_err(|e| e.to_string())?.loss;
    ensure(moved == reference, || format!("model loss {reference} became {moved}"))?;

    let uniform =
        loss(&Matrix::<f64>::zeros(rows, VOCAB_SIZE), &ex.targets, &ex.loss_mask).map_err(|e| e.to_string())?;
    let expected = (VOCAB_SIZE as f64).ln();
    let per_position = uniform
        .nll
        .iter()
        .zip(&ex.loss_mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| (v - expected).abs())
        .fold(0.0, f64::max);
    ensure((uniform.loss - expected).abs() <= 1e-6 && per_position <= 1e-6, || {
        format!("uniform loss {} vs ln 5389 = {expected}", uniform.loss)
    })?;
    Ok(format!(
        "unmasked logits/targets change loss by 0; uniform loss {:.9} vs ln(5389) {expected:.9} over {masked} masked positions",
        uniform.loss
    ))
}

// ---------------------------------------------------------------- 6

fn toy_overfit() -> Check {
    let steps = 3000;
    let corpus: Vec<TrainingExample> = (0..4).map(|k| pretrain_example(21, 4, PRETRAIN_MASK_RATIO, 100 + k)).collect();
    let train = || {
        let mut model = Model::<f32>::init(ModelConfig::toy(), 13).unwrap();
        let trace = train_steps(&mut model, &corpus, &OptimizerConfig::toy(), steps).unwrap();
        (model, trace)
    };
    let (model, trace) = train();
    let losses: Vec<f64> = corpus.iter().map(|ex| model.evaluate(ex).unwrap().loss).collect();
    let final_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    let (again, trace_again) = train();
    ensure(trace == trace_again && model.params == again.params, || "two runs with one seed differ".into())?;
    ensure(final_loss < 0.1, || format!("mean masked-denoising loss {final_loss:.4} after {steps} steps"))?;
    Ok(format!(
        "4-note piece, 4 masked copies: loss {:.3} -> {final_loss:.2e} after {steps} steps, bitwise reproducible",
        trace[0]
    ))
}

// ---------------------------------------------------------------- 7

fn note(pitch: u8, velocity: u8, onset_ms: f64, duration_ms: f64) -> TimedNote {
    TimedNote { pitch, velocity, onset_ms, duration_ms }
}

/// Score on an eighth-note grid; the performance stretches each gap by a random factor and jitters onsets.
fn rubato(rng: &mut ChaCha8Rng) -> AlignedPair {
    let (mut score, mut perf) = (Vec::new(), Vec::new());
    let (mut s, mut p) = (0.0, rng.random_range(0.0..500.0));
    let n = rng.random_range(2..60);
    for i in 0..n {
        if i > 0 {
            let gap = 250.0 * rng.random_range(1..5) as f64;
            s += gap;
            p += gap * rng.random_range(0.5..2.0);
        }
        let chord: Vec<u8> = {
            let mut c: Vec<u8> = (0..rng.random_range(1..4)).map(|_| rng.random_range(30..100)).collect();
            c.sort_unstable();
            c.dedup();
            c
        };
        for pitch in chord {
            score.push(note(pitch, 64, s, 200.0));
            perf.push(note(
                pitch,
                rng.random_range(20..120),
                p + rng.random_range(0.0..15.0),
                rng.random_range(60.0..700.0),
            ));
        }
    }
    let pedal = PedalCurve::new(vec![PedalEvent { time_ms: p * 0.5, value: 127 }, PedalEvent { time_ms: p, value: 0 }]);
    AlignedPair::new(
        NormalizedPiece { notes: score, pedal: PedalCurve::default() },
        NormalizedPiece { notes: perf, pedal },
    )
    .expect("grid score is canonical")
}

fn tempo_mapping() -> Check {
    let ppq = 480;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e);
    let (mut worst_ms, mut onsets) = (0.0f64, 0usize);
    for case in 0..200 {
        let pair = rubato(&mut rng);
        let midi = expressive_tempo_map(&pair, ppq).map_err(|e| format!("case {case}: {e}"))?;
        let curve = estimate_tempo_curve(&pair, ppq).map_err(|e| e.to_string())?;
        let notes = &midi.tracks[0].notes;
        for (s, p) in pair.score().notes.iter().zip(&pair.perf().notes) {
            let tick = ms_to_ticks(p.onset_ms, &curve);
            ensure(notes.iter().any(|n| n.onset == tick && n.pitch == s.pitch && n.velocity == p.velocity), || {
                format!("case {case}: note {} missing at tick {tick}", s.pitch)
            })?;
            let rendered = render_wallclock(tick, &midi.tempo_events, ppq);
            let one_tick = render_wallclock(tick + 1, &midi.tempo_events, ppq) - rendered;
            let err = (rendered - p.onset_ms).abs();
            ensure(err <= one_tick.max(2.0), || {
                format!("case {case}: onset off by {err:.3} ms (tick {one_tick:.3} ms)")
            })?;
            worst_ms = worst_ms.max(err);
            onsets += 1;
        }
    }

    let grid: Vec<TimedNote> =
        [60u8, 64, 67, 72].iter().enumerate().map(|(i, &p)| note(p, 80, i as f64 * 500.0, 400.0)).collect();
    let score = NormalizedPiece { notes: grid.clone(), pedal: PedalCurve::default() };
    let identity = AlignedPair::new(score.clone(), score.clone()).unwrap();
    let bp = estimate_tempo_curve(&identity, ppq).unwrap().breakpoints().to_vec();
    ensure(bp == [(0, 120.0)], || format!("identity gave {bp:?}"))?;
    let slow = NormalizedPiece {
        notes: grid.iter().map(|n| note(n.pitch, n.velocity, n.onset_ms * 2.0, n.duration_ms * 2.0)).collect(),
        pedal: PedalCurve::default(),
    };
    let bp = estimate_tempo_curve(&AlignedPair::new(score, slow).unwrap(), ppq).unwrap().breakpoints().to_vec();
    ensure(bp == [(0, 60.0)], || format!("half speed gave {bp:?}"))?;
    Ok(format!(
        "200 performances, {onsets} onsets, worst error {worst_ms:.3} ms; identity (0, 120), half speed (0, 60)"
    ))
}

// ---------------------------------------------------------------- 8

fn brute_js(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64]| -> f64 {
        a.iter()
            .zip(p.iter().zip(q))
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, (&pi, &qi))| x * (x / ((pi + qi) / 2.0)).log2())
            .sum()
    };
    0.5 * kl(p) + 0.5 * kl(q)
}

fn normalized(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x15);
    let (mut worst_js, mut worst_inter, mut worst_tv) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let len = rng.random_range(1..400);
        let draw = |rng: &mut ChaCha8Rng| {
            let mut c: Vec<u64> =
                (0..len).map(|_| if rng.random_bool(0.4) { 0 } else { rng.random_range(1..1000) }).collect();
            if c.iter().all(|&x| x == 0) {
                c[rng.random_range(0..len)] = 1;
            }
            c
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let p = Distribution::<f64>::from_counts(a.clone(), "test").map_err(|e| e.to_string())?;
        let q = Distribution::<f64>::from_counts(b.clone(), "test").map_err(|e| e.to_string())?;
        let (pn, qn) = (normalized(&a), normalized(&b));
        let js = js_divergence(&p, &q).map_err(|e| e.to_string())?;
        let inter = intersection_area(&p, &q).map_err(|e| e.to_string())?;
        let tv = 0.5 * pn.iter().zip(&qn).map(|(x, y)| (x - y).abs()).sum::<f64>();
        worst_js = worst_js.max((js - brute_js(&pn, &qn)).abs());
        worst_inter = worst_inter.max((inter - pn.iter().zip(&qn).map(|(x, y)| x.min(*y)).sum::<f64>()).abs());
        worst_tv = worst_tv.max((inter + tv - 1.0).abs());
        let same = js_divergence(&p, &p).map_err(|e| e.to_string())?;
        ensure(same == 0.0, || format!("case {case}: JS(p, p) = {same:e}"))?;
    }
    ensure(worst_js <= 1e-12 && worst_inter <= 1e-12 && worst_tv <= 1e-12, || {
        format!("deviations js {worst_js:e}, intersection {worst_inter:e}, 1 - tv {worst_tv:e}")
    })?;

    let left = Distribution::<f64>::from_counts(vec![3, 5, 0, 0, 0], "test").unwrap();
    let right = Distribution::<f64>::from_counts(vec![0, 0, 7, 1, 2], "test").unwrap();
    let (js, inter) = (js_divergence(&left, &right).unwrap(), intersection_area(&left, &right).unwrap());
    ensure((js - 1.0).abs() <= 1e-12 && inter == 0.0, || format!("disjoint supports: js {js}, intersection {inter}"))?;
    Ok(format!(
        "1000 pairs: max |js - oracle| {worst_js:.1e}, |inter - oracle| {worst_inter:.1e}, |inter + tv - 1| {worst_tv:.1e}; JS(p,p)=0; disjoint js {js}, inter {inter}"
    ))
}

// ---------------------------------------------------------------- 9

/// Context-dependent but cheap logits: every prefix gets a different score landscape.
struct HashModel;

impl PerformanceModel for HashModel {
    fn next_logits(&self, encoder: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, InferenceError> {
        let last = *prefix.last().unwrap_or(&0) as u64;
        let key = (prefix.len() as u64).wrapping_mul(0x9e37_79b9).wrapping_add(last * 31 + encoder.len() as u64);
        Ok((0..VOCAB_SIZE as u64)
            .map(|i| ((i.wrapping_mul(2654435761) ^ key).wrapping_mul(0x2545_f491) >> 40) as f64 / 1e5)
            .collect())
    }
}

fn pitch_constraint_and_blocking() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9);
    let block = BlockConfig::default();
    let (mut frames, mut long) = (0usize, 0usize);
    for case in 0..100 {
        let notes = if case % 10 == 0 { rng.random_range(513..800) } else { rng.random_range(1..160) };
        let score = TokenSeq(random_body(&mut rng, notes));
        long += (score.len() > 4096) as usize;
        let sampling = SamplingConfig { seed: case, ..SamplingConfig::default() };

        let generated =
            blockwise_generate(&HashModel, &score, &block, &sampling).map_err(|e| format!("case {case}: {e}"))?;
        generated.validate().map_err(|e| format!("case {case}: {e}"))?;
        ensure(generated.len() == score.len() && pitches(&generated.0) == pitches(&score.0), || {
            format!("case {case}: pitch sequence differs")
        })?;

        let stitched = blockwise_generate(&StubPerformer, &score, &block, &sampling).map_err(|e| e.to_string())?;
        let single =
            constrained_generate_windowed(&StubPerformer, &score, &sampling, usize::MAX).map_err(|e| e.to_string())?;
        ensure(stitched == single, || format!("case {case}: stub blockwise output differs from single pass"))?;
        frames += notes;
    }
    ensure(long >= 10, || format!("only {long} long scores"))?;
    Ok(format!(
        "100 scores ({long} over 4096 tokens), {frames} frames with matching pitch; stub blockwise == single pass"
    ))
}

// ---------------------------------------------------------------- 10

fn closed_form(c: &ModelConfig) -> u64 {
    let (v, d, f, e, l) = (
        c.vocab_size as u64,
        c.hidden_size as u64,
        c.ffn_size as u64,
        c.encoder_layers as u64,
        c.decoder_layers as u64,
    );
    v * d + 8 * d * d + e * (4 * d * d + 3 * d * f + 2 * d) + d + l * (8 * d * d + 3 * d * f + 3 * d) + d + v * d
}

fn parameter_accounting() -> Check {
    let base = ModelConfig::base();
    let total = count_parameters(&base).total();
    ensure(total == closed_form(&base), || format!("breakdown {total} vs closed form {}", closed_form(&base)))?;
    let toy = ModelConfig::toy();
    let built = Model::<f32>::init(toy.clone(), 0).unwrap().parameter_count() as u64;
    ensure(built == closed_form(&toy) && built == count_parameters(&toy).total(), || {
        format!("toy model has {built} parameters")
    })?;
    let deviation = (total as f64 - 135e6) / 135e6;
    ensure(deviation.abs() <= 0.10, || format!("{total} is {:.1}% from 135M", deviation * 100.0))?;

    for (context, memory) in [(1, 1), (512, 64), (4096, 512), (6000, 800)] {
        let (two, six) = (decoder_step_cost(&base, 2, context, memory), decoder_step_cost(&base, 6, context, memory));
        ensure(six.blocks == 3 * two.blocks, || format!("context {context}: {} vs {}", six.blocks, two.blocks))?;
    }
    Ok(format!(
        "base config {total} parameters ({:+.2}% vs 135M), matches closed form; 6-vs-2 decoder layer cost = 3 exactly",
        deviation * 100.0
    ))
}

// ---------------------------------------------------------------- 11

fn metric_ordering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11);
    let mut scores = Vec::new();
    let mut references = Vec::new();
    for _ in 0..8 {
        let notes = rng.random_range(20..80);
        let body = random_body(&mut rng, notes);
        let mut perf = body.clone();
        for (i, t) in perf.iter_mut().enumerate() {
            if Slot::of_position(i) == Slot::Velocity {
                *t = Slot::Velocity.token(rng.random_range(20..120));
            }
        }
        scores.push(body);
        references.push(TokenSeq(perf));
    }
    let stub: Vec<TokenSeq> = scores.iter().map(|s| StubPerformer::render(s)).collect();
    let copy =
        evaluate_testset::<f64>(&references, &references).map_err(|e| e.to_string())?.get(Dimension::Velocity).js;
    let mech = evaluate_testset::<f64>(&stub, &references).map_err(|e| e.to_string())?.get(Dimension::Velocity).js;
    ensure(copy < mech, || format!("copy js {copy} not below stub js {mech}"))?;

    let groups: Vec<Vec<TokenSeq>> = references.iter().map(|r| vec![r.clone(), r.clone()]).collect();
    let baseline = human_baseline::<f64>(&groups, &MetricOptions::default()).map_err(|e| e.to_string())?;
    let worst = baseline.scores().iter().map(|s| s.js).fold(0.0, f64::max);
    ensure(worst <= 1e-12, || format!("duplicated performances give js {worst:e}"))?;
    Ok(format!("velocity js copy {copy:.4} < stub {mech:.4}; duplicated human baseline js {worst:.1e}"))
}

fn main() {
    let results = [
        run(1, "vocabulary", secs(1), vocabulary),
        run(2, "tokenizer round-trip", secs(30), tokenizer_round_trip),
        run(3, "compression cost", secs(1), compression_cost),
        run(4, "gradient fidelity", secs(120), gradient_fidelity),
        run(5, "objective wiring", secs(10), objective_wiring),
        run(6, "toy overfit", secs(300), toy_overfit),
        run(7, "tempo mapping", secs(60), tempo_mapping),
        run(8, "metric oracles", secs(30), metric_oracles),
        run(9, "pitch constraint and blocking", secs(60), pitch_constraint_and_blocking),
        run(10, "parameter accounting", secs(1), parameter_accounting),
        run(11, "metric ordering", secs(30), metric_ordering),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
