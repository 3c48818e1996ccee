use super::*;
use crate::tokenizer::vocab::{BOS, EOS, PLAY};
use crate::tokenizer::Slot;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_body(notes: usize, seed: u64) -> Vec<TokenId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..notes * TOKENS_PER_NOTE).map(|i| rng.random_range(Slot::of_position(i).legal_range())).collect()
}

fn example(notes: usize, seed: u64) -> TrainingExample {
    let score = random_body(notes, seed);
    let mut perf = random_body(notes, seed + 1);
    for f in 0..notes {
        perf[f * TOKENS_PER_NOTE] = score[f * TOKENS_PER_NOTE];
    }
    let mut target = vec![BOS];
    target.extend(&perf);
    target.push(EOS);
    let n = target.len();
    TrainingExample {
        encoder_tokens: score,
        decoder_input: target[..n - 1].to_vec(),
        targets: target[1..].to_vec(),
        loss_mask: (0..n - 1).map(|i| i % 3 != 1).collect(),
    }
}

fn toy<T: Scalar>(seed: u64) -> Model<T> {
    Model::init(ModelConfig::toy(), seed).unwrap()
}

#[test]
fn init_is_deterministic() {
    assert_eq!(toy::<f32>(7), toy::<f32>(7));
    assert_ne!(toy::<f32>(7), toy::<f32>(8));
    assert!(toy::<f32>(7).params.is_finite());
}

#[test]
fn precisions_share_initial_weights() {
    let wide = toy::<f64>(11);
    assert_eq!(wide.cast::<f32>(), toy::<f32>(11));
}

#[test]
fn indivisible_width_is_invalid() {
    let config = ModelConfig { hidden_size: 30, ..ModelConfig::toy() };
    assert!(matches!(Model::<f32>::init(config, 0), Err(ModelError::InvalidConfig(_))));
    let config = ModelConfig { compression_factor: 4, ..ModelConfig::toy() };
    assert!(matches!(Model::<f32>::init(config, 0), Err(ModelError::InvalidConfig(_))));
}

#[test]
fn base_config_validates_and_counts() {
    let config = ModelConfig::base();
    config.validate().unwrap();
    assert_eq!(config.heads(), 6);
    let count = count_parameters(&config).total();
    assert!(count > 120_000_000 && count < 150_000_000);
}

#[test]
fn logits_have_one_row_per_decoder_token() {
    let model = toy::<f32>(0);
    let logits = model.forward(&random_body(2, 1), &[BOS, 5, 6, 7, 8]).unwrap();
    assert_eq!((logits.rows(), logits.cols()), (5, VOCAB_SIZE));
}

#[test]
fn bad_shapes_are_rejected() {
    let model = toy::<f32>(0);
    assert!(matches!(model.forward(&random_body(1, 1)[..7], &[BOS]), Err(ModelError::BadShape(_))));
    assert!(matches!(model.forward(&[], &[BOS]), Err(ModelError::BadShape(_))));
    assert!(matches!(model.forward(&random_body(1, 1), &[]), Err(ModelError::BadShape(_))));
    assert!(matches!(model.forward(&random_body(1, 1), &[6000]), Err(ModelError::BadToken(6000))));
}

#[test]
fn aggregation_of_zeros_is_zero() {
    let slots: Vec<Matrix<f64>> = (0..8).map(|s| Matrix::from_fn(4, 4, |r, c| (s + r * c) as f64)).collect();
    let memory = aggregate_notes(&Matrix::zeros(16, 4), &slots).unwrap();
    assert_eq!(memory, Matrix::zeros(2, 4));
}

#[test]
fn identity_slots_sum_embeddings() {
    let eye = Matrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
    let slots = vec![eye; 8];
    let emb = Matrix::from_fn(8, 3, |r, c| (r * 3 + c) as f64);
    let memory = aggregate_notes(&emb, &slots).unwrap();
    for c in 0..3 {
        let oracle: f64 = (0..8).map(|r| emb.get(r, c)).sum();
        assert_eq!(memory.get(0, c), oracle);
    }
}

#[test]
fn aggregation_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (3, 4);
    let emb = Matrix::from_fn(n * 8, d, |_, _| rng.random_range(-1.0..1.0));
    let slots: Vec<Matrix<f64>> = (0..8).map(|_| Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))).collect();
    let memory = aggregate_notes(&emb, &slots).unwrap();
    // Concatenate the frame into one 8d row and multiply by the stacked [A_0 … A_7] d×8d matrix.
    for note in 0..n {
        let concat: Vec<f64> = (0..8).flat_map(|s| emb.row(note * 8 + s).to_vec()).collect();
        for i in 0..d {
            let oracle: f64 = (0..8 * d).map(|k| slots[k / d].get(i, k % d) * concat[k]).sum();
            assert!((memory.get(note, i) - oracle).abs() < 1e-12);
        }
    }
    assert!(matches!(aggregate_notes(&Matrix::<f64>::zeros(12, d), &slots), Err(ModelError::BadShape(_))));
}

#[test]
fn swapping_frames_swaps_aggregated_rows() {
    let model = toy::<f64>(2);
    let body = random_body(3, 9);
    let mut swapped = body.clone();
    swapped[..8].copy_from_slice(&body[16..]);
    swapped[16..].copy_from_slice(&body[..8]);
    let agg = |tokens: &[TokenId]| {
        let emb = Matrix::from_fn(tokens.len(), 32, |r, c| model.params.embedding.get(tokens[r] as usize, c));
        aggregate_notes(&emb, &model.params.aggregation).unwrap()
    };
    let (a, b) = (agg(&body), agg(&swapped));
    assert_eq!(a.row(0), b.row(2));
    assert_eq!(a.row(1), b.row(1));
    assert_eq!(a.row(2), b.row(0));
}

#[test]
fn memory_has_one_row_per_note() {
    let model = toy::<f32>(0);
    for notes in [1, 2, 5, 17] {
        assert_eq!(model.encode_memory(&random_body(notes, notes as u64)).unwrap().rows(), notes);
    }
}

#[test]
fn next_token_logits_match_forward() {
    let model = toy::<f64>(4);
    let enc = random_body(2, 3);
    let dec = [BOS, 70, 2, 200, 300];
    let full = model.forward(&enc, &dec).unwrap();
    let memory = model.encode_memory(&enc).unwrap();
    assert_eq!(model.next_token_logits(&memory, &dec).unwrap(), full.row(4).to_vec());
}

#[test]
fn incremental_decoding_matches_full_pass() {
    let model = toy::<f64>(6);
    let enc = random_body(3, 2);
    let dec: Vec<TokenId> = std::iter::once(BOS).chain(random_body(2, 5)).collect();
    let full = model.forward(&enc, &dec).unwrap();
    let memory = model.encode_memory(&enc).unwrap();
    let mut inc = IncrementalDecoder::new(&model, &memory).unwrap();
    for (t, &tok) in dec.iter().enumerate() {
        let row = inc.push(&model, tok).unwrap();
        for (a, b) in row.iter().zip(full.row(t)) {
            assert!((a - b).abs() < 1e-10, "position {t}");
        }
    }
    assert_eq!(inc.tokens(), &dec[..]);
}

#[test]
fn attention_rows_are_distributions() {
    let model = toy::<f32>(1);
    let ex = example(5, 3);
    let (_, cache) = network::forward(&model, &ex.encoder_tokens, &ex.decoder_input).unwrap();
    let rows = cache.attention_rows();
    assert!(!rows.is_empty());
    for row in rows {
        let sum: f64 = row.iter().map(|&p| p as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6, "{sum}");
    }
}

#[test]
fn unused_play_row_gets_no_gradient() {
    let model = toy::<f64>(3);
    let ex = example(3, 4);
    assert!(!ex.encoder_tokens.contains(&PLAY) && !ex.decoder_input.contains(&PLAY));
    let (_, grads) = model.backward(&ex, 1.0).unwrap();
    assert!(grads.embedding.row(PLAY as usize).iter().all(|&g| g == 0.0));
    assert!(grads.global_norm() > 0.0);
}

#[test]
fn gradients_scale_with_loss() {
    let model = toy::<f64>(3);
    let ex = example(2, 8);
    let (r1, g1) = model.backward(&ex, 1.0).unwrap();
    let (r2, g2) = model.backward(&ex, 2.0).unwrap();
    assert_eq!(r1, r2);
    for ((_, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
        for (&x, &y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

/// Analytic gradients against central differences on a stratified sample of every tensor.
pub(crate) fn gradient_check(samples_per_tensor: usize, seed: u64) -> (usize, f64) {
    let mut model = toy::<f64>(seed);
    let ex = example(3, seed + 100);
    let (_, grads) = model.backward(&ex, 1.0).unwrap();
    let names: Vec<(String, usize, usize)> =
        grads.tensors().into_iter().map(|(n, m)| (n, m.rows(), m.cols())).collect();
    let mut used: Vec<usize> = ex.encoder_tokens.iter().chain(&ex.decoder_input).map(|&t| t as usize).collect();
    used.sort_unstable();
    used.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let (mut checked, mut worst) = (0, 0.0f64);
    for (t, (name, rows, cols)) in names.iter().enumerate() {
        for _ in 0..samples_per_tensor {
            let r =
                if name == "embedding" { used[rng.random_range(0..used.len())] } else { rng.random_range(0..*rows) };
            let idx = r * cols + rng.random_range(0..*cols);
            let analytic = grads.tensors()[t].1.data()[idx];
            let original = model.params.tensors_mut()[t].data()[idx];
            model.params.tensors_mut()[t].data_mut()[idx] = original + h;
            let plus = model.evaluate(&ex).unwrap().loss;
            model.params.tensors_mut()[t].data_mut()[idx] = original - h;
            let minus = model.evaluate(&ex).unwrap().loss;
            model.params.tensors_mut()[t].data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
            checked += 1;
        }
    }
    (checked, worst)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let (checked, worst) = gradient_check(5, 21);
    assert!(checked >= 200, "{checked}");
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let mut model = toy::<f32>(5);
    let ex = vec![example(2, 1)];
    let config = OptimizerConfig { peak_lr: 0.0, ..OptimizerConfig::toy() };
    let trace = train_steps(&mut model, &ex, &config, 5).unwrap();
    assert!(trace.windows(2).all(|w| w[0] == w[1]), "{trace:?}");
}

#[test]
fn training_is_deterministic() {
    let ex = vec![example(2, 1), example(3, 2)];
    let config = OptimizerConfig { batch_size: 2, ..OptimizerConfig::toy() };
    let run = || {
        let mut model = toy::<f32>(5);
        train_steps(&mut model, &ex, &config, 10).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn training_needs_examples() {
    let mut model = toy::<f32>(5);
    assert!(train_steps(&mut model, &[], &OptimizerConfig::toy(), 1).is_err());
}

#[test]
fn sft_example_masks_body_only() {
    use crate::tokenizer::{build_sft_example, TokenSeq};
    let score = TokenSeq::from(random_body(2, 1));
    let mut perf = random_body(2, 2);
    perf[0] = score.ids()[0];
    perf[8] = score.ids()[8];
    let sft = build_sft_example(&score, &TokenSeq::from(perf)).unwrap();
    let ex = TrainingExample::from_sft(&sft);
    assert_eq!(ex.decoder_input.len(), 17);
    assert_eq!(ex.loss_mask.iter().filter(|&&m| m).count(), 16);
    assert!(!ex.loss_mask[16]);
    assert_eq!(ex.targets[16], EOS);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn later_decoder_tokens_do_not_change_earlier_logits(seed in 0u64..1000, cut in 1usize..9, tok in 5u16..5389) {
        let model = toy::<f64>(seed % 3);
        let enc = random_body(2, seed);
        let dec: Vec<TokenId> = std::iter::once(BOS).chain(random_body(1, seed + 7)).collect();
        let mut changed = dec.clone();
        for t in changed[cut..].iter_mut() {
            *t = tok;
        }
        let a = model.forward(&enc, &dec).unwrap();
        let b = model.forward(&enc, &changed).unwrap();
        for r in 0..cut {
            prop_assert_eq!(a.row(r), b.row(r));
        }
    }

    #[test]
    fn memory_rows_follow_note_count(notes in 1usize..12, seed in 0u64..100) {
        let model = toy::<f32>(0);
        prop_assert_eq!(model.encode_memory(&random_body(notes, seed)).unwrap().rows(), notes);
    }
}

#[test]
fn toy_model_memorizes_one_example() {
    let mut model = toy::<f32>(0);
    let mut ex = example(4, 12);
    ex.loss_mask.iter_mut().for_each(|m| *m = true);
    let trace = train_steps(&mut model, &[ex], &OptimizerConfig::toy(), 2000).unwrap();
    let last = *trace.last().unwrap();
    assert!(trace[0] > 5.0);
    assert!(last < 0.1, "final loss {last}");
}
