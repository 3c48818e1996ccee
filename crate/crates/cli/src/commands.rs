//! One function per subcommand.

use crate::io::{self, TokenDump};
use crate::{
    AugmentArgs, CorruptArgs, CostReportArgs, DetokenizeArgs, EvaluateArgs, HumanBaselineArgs, MetricArgs, Mode,
    ModelKind, RenderArgs, ShardArgs, TempoMapArgs, TokenizeArgs, TrainToyArgs, UsageError,
};
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rendition_core::corpus::{self, derive_seed, AugmentParams};
use rendition_core::inference::{blockwise_generate, BlockConfig, PerformanceModel, SamplingConfig, StubPerformer};
use rendition_core::metrics::{self, MetricOptions};
use rendition_core::midi::{normalize, NormalizeMode, NormalizedPiece, PedalCurve, TimedNote};
use rendition_core::model::{
    attention_cost, count_parameters, decoder_step_cost, load_checkpoint, save_checkpoint, train_steps, Model,
    ModelConfig, OptimizerConfig, ParameterBreakdown, TrainingExample,
};
use rendition_core::tempo::{expressive_tempo_map, AlignedPair};
use rendition_core::tokenizer::{self, corrupt_for_pretraining, vocab, TokenError, TokenSeq};
use rendition_core::{MetricReport64, TransformerPerformer32};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Score => "score",
        Mode::Performance => "performance",
    }
}

fn load_tokens(path: &Path, mode: NormalizeMode) -> Result<TokenSeq> {
    let piece = normalize(&io::read_midi(path)?, mode);
    tokenizer::encode(&piece).with_context(|| format!("tokenizing {}", path.display()))
}

fn is_empty_piece(err: &anyhow::Error) -> bool {
    matches!(err.downcast_ref::<TokenError>(), Some(TokenError::EmptyPiece))
}

/// Tokenizes every file; with `skip_empty`, files without notes are left out with a warning.
fn tokenize_files(files: &[PathBuf], mode: NormalizeMode, skip_empty: bool) -> Result<Vec<(String, TokenSeq)>> {
    let results: Vec<(String, Result<TokenSeq>)> =
        files.par_iter().map(|f| (io::stem(f), load_tokens(f, mode))).collect();
    let mut out = Vec::with_capacity(results.len());
    for (name, result) in results {
        match result {
            Ok(seq) => out.push((name, seq)),
            Err(e) if skip_empty && is_empty_piece(&e) => eprintln!("warning: skipping {name}: {e:#}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn tokenize(args: &TokenizeArgs, seed: u64) -> Result<()> {
    let files = io::midi_inputs(&args.input)?;
    let entries = tokenize_files(&files, args.mode.into(), args.input.is_dir())?;
    let dump = TokenDump { entries: entries.into_iter().map(|(n, s)| (n, s.0)).collect() };
    let header = format!("rendition tokens seed={seed} mode={}", mode_name(args.mode));
    io::emit(args.out.as_deref(), &dump.render(&header))
}

fn is_midi_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn detokenize(args: &DetokenizeArgs, seed: u64) -> Result<()> {
    let dump = TokenDump::load(&args.input)?;
    let comment = format!("rendition detokenize seed={seed}");
    let single = is_midi_path(&args.out);
    if single && dump.entries.len() != 1 {
        return Err(usage(format!(
            "{} sequences cannot go to the single file {}",
            dump.entries.len(),
            args.out.display()
        )));
    }
    for (name, ids) in &dump.entries {
        let piece = tokenizer::decode(&TokenSeq(ids.clone())).with_context(|| format!("decoding {name}"))?;
        let path = if single { args.out.clone() } else { args.out.join(format!("{}.mid", file_safe(name))) };
        io::write_midi(&path, &piece.to_midi(args.ppq), &comment)?;
    }
    Ok(())
}

pub fn corrupt(args: &CorruptArgs, seed: u64) -> Result<()> {
    let dump = TokenDump::load(&args.input)?;
    let mut out = TokenDump::default();
    for (name, ids) in &dump.entries {
        let example = corrupt_for_pretraining(&TokenSeq(ids.clone()), args.ratio, derive_seed(seed, name))
            .with_context(|| format!("corrupting {name}"))?;
        out.entries.push((format!("{name}.encoder"), example.encoder_input.0));
        out.entries.push((format!("{name}.target"), example.decoder_target.0));
        out.entries.push((format!("{name}.mask"), example.loss_mask.iter().map(|&m| m as u16).collect()));
    }
    let header = format!("rendition corrupt seed={seed} ratio={}", args.ratio);
    io::emit(args.out.as_deref(), &out.render(&header))
}

pub fn render(args: &RenderArgs, seed: u64) -> Result<()> {
    let block = BlockConfig { window: args.window, stride: args.stride, tail_drop_notes: args.tail_drop };
    let sampling =
        SamplingConfig { temperature: args.temperature, top_k: if args.greedy { 1 } else { args.top_k }, seed };
    block.validate().map_err(|e| usage(e.to_string()))?;
    sampling.validate().map_err(|e| usage(e.to_string()))?;

    let model: Box<dyn PerformanceModel> = match (args.model, &args.checkpoint) {
        (ModelKind::Stub, None) => Box::new(StubPerformer),
        (ModelKind::Stub, Some(_)) => return Err(usage("--checkpoint only applies to --model ckpt")),
        (ModelKind::Ckpt, None) => return Err(usage("--model ckpt needs --checkpoint")),
        (ModelKind::Ckpt, Some(path)) => {
            let model = load_checkpoint::<f32>(path).with_context(|| format!("loading {}", path.display()))?;
            if args.window > model.config.max_seq_len {
                return Err(usage(format!(
                    "window {} exceeds the model's {} tokens",
                    args.window, model.config.max_seq_len
                )));
            }
            Box::new(TransformerPerformer32::new(model))
        }
    };

    let score = load_tokens(&args.input, NormalizeMode::Score)?;
    let perf = blockwise_generate(model.as_ref(), &score, &block, &sampling).context("rendering")?;
    if let Some(path) = &args.tokens_out {
        let dump = TokenDump { entries: vec![(io::stem(&args.input), perf.0.clone())] };
        io::emit(Some(path), &dump.render(&format!("rendition render seed={seed}")))?;
    }
    let piece = tokenizer::decode(&perf).context("decoding the rendered tokens")?;
    let model_name = match args.model {
        ModelKind::Stub => "stub",
        ModelKind::Ckpt => "ckpt",
    };
    io::write_midi(&args.out, &piece.to_midi(args.ppq), &format!("rendition render model={model_name} seed={seed}"))
}

pub fn tempo_map(args: &TempoMapArgs, seed: u64) -> Result<()> {
    let score = normalize(&io::read_midi(&args.score)?, NormalizeMode::Score);
    let perf = normalize(&io::read_midi(&args.perf)?, NormalizeMode::Performance);
    let pair = AlignedPair::align_by_pitch_order(score, perf).context("aligning score and performance")?;
    let piece = expressive_tempo_map(&pair, args.ppq).context("estimating the tempo map")?;
    io::write_midi(&args.out, &piece, &format!("rendition tempo-map seed={seed}"))
}

fn performances(dir: &Path) -> Result<Vec<TokenSeq>> {
    let files = io::midi_files(dir)?;
    if files.is_empty() {
        bail!("EmptyInput: no MIDI files in {}", dir.display());
    }
    Ok(tokenize_files(&files, NormalizeMode::Performance, true)?.into_iter().map(|(_, s)| s).collect())
}

fn metric_options(args: &MetricArgs) -> Result<MetricOptions> {
    if args.velocity_bin == 0 || args.timing_bin == 0 {
        return Err(usage("bin widths must be positive"));
    }
    Ok(MetricOptions { velocity_bin: args.velocity_bin, timing_bin_ms: args.timing_bin })
}

fn emit_report(report: &MetricReport64, args: &MetricArgs, title: &str, seed: u64) -> Result<()> {
    let text = format!("# rendition {title} seed={seed}\n{}", report.to_text());
    match &args.out {
        None => io::emit(None, &text),
        Some(dir) => {
            io::emit(Some(&dir.join("report.txt")), &text)?;
            let csv = format!("{},seed\n{},{seed}\n", MetricReport64::csv_header(), report.csv_row(&args.label));
            io::emit(Some(&dir.join("report.csv")), &csv)
        }
    }
}

pub fn evaluate(args: &EvaluateArgs, seed: u64) -> Result<()> {
    let options = metric_options(&args.metrics)?;
    let candidates = performances(&args.candidates)?;
    let references = performances(&args.references)?;
    let report = metrics::evaluate_testset_with::<f64>(&candidates, &references, &options)?;
    emit_report(&report, &args.metrics, "evaluate", seed)
}

pub fn human_baseline(args: &HumanBaselineArgs, seed: u64) -> Result<()> {
    let options = metric_options(&args.metrics)?;
    let mut dirs: Vec<PathBuf> = fs::read_dir(&args.groups)
        .with_context(|| format!("listing {}", args.groups.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    dirs.retain(|p| p.is_dir());
    dirs.sort();
    if dirs.is_empty() {
        bail!("EmptyInput: no piece directories in {}", args.groups.display());
    }
    let groups = dirs.iter().map(|d| performances(d)).collect::<Result<Vec<_>>>()?;
    let report = metrics::human_baseline::<f64>(&groups, &options)?;
    emit_report(&report, &args.metrics, "human-baseline", seed)
}

#[derive(Serialize)]
struct Rejected {
    file: String,
    error: String,
}

#[derive(Serialize)]
struct ShardManifest {
    seed: u64,
    mode: &'static str,
    min_bytes: u64,
    max_tokens: usize,
    vocabulary_size: usize,
    vocabulary_checksum: String,
    sequences: usize,
    tokens: usize,
    included: Vec<String>,
    too_small: Vec<String>,
    rejected: Vec<Rejected>,
    shards: Vec<String>,
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn shard(args: &ShardArgs, seed: u64) -> Result<()> {
    if args.max_tokens == 0 {
        return Err(usage("--max-tokens must be positive"));
    }
    let files = io::midi_files(&args.input)?;
    let kept = corpus::filter_by_size(&files, args.min_bytes).context("reading file sizes")?;
    let too_small = files.iter().filter(|f| !kept.contains(f)).map(|f| file_name(f)).collect();

    let mode: NormalizeMode = args.mode.into();
    let results: Vec<(String, Result<TokenSeq>)> =
        kept.par_iter().map(|f| (file_name(f), load_tokens(f, mode))).collect();
    let (mut included, mut rejected, mut seqs) = (Vec::new(), Vec::new(), Vec::new());
    for (name, result) in results {
        match result {
            Ok(seq) => {
                included.push(name);
                seqs.push(seq);
            }
            Err(e) => {
                eprintln!("warning: skipping {name}: {e:#}");
                rejected.push(Rejected { file: name, error: format!("{e:#}") });
            }
        }
    }
    let paths = corpus::write_shards(&seqs, &args.out, args.max_tokens).context("writing shards")?;
    let manifest = ShardManifest {
        seed,
        mode: mode_name(args.mode),
        min_bytes: args.min_bytes,
        max_tokens: args.max_tokens,
        vocabulary_size: tokenizer::VOCAB_SIZE,
        vocabulary_checksum: format!("{:#018x}", vocab::vocabulary_checksum()),
        sequences: seqs.len(),
        tokens: seqs.iter().map(TokenSeq::len).sum(),
        included,
        too_small,
        rejected,
        shards: paths.iter().map(|p| file_name(p)).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    io::emit(Some(&args.out.join("manifest.json")), &(json + "\n"))
}

pub fn augment(args: &AugmentArgs, seed: u64) -> Result<()> {
    let base = AugmentParams { velocity_jitter: args.velocity_jitter, timing_jitter: args.timing_jitter, seed };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let files = io::midi_inputs(&args.input)?;
    let single = args.input.is_file();
    files.par_iter().try_for_each(|file| -> Result<()> {
        let name = file_name(file);
        let params = AugmentParams { seed: derive_seed(seed, &name), ..base.clone() };
        let piece = normalize(&io::read_midi(file)?, NormalizeMode::Performance);
        let out = corpus::augment(&piece, &params).with_context(|| format!("augmenting {name}"))?;
        let path = if single { args.out.clone() } else { args.out.join(&name) };
        let comment = format!("rendition augment seed={seed} file_seed={}", params.seed);
        io::write_midi(&path, &out.to_midi(args.ppq), &comment)
    })
}

/// Short random piece with integer-millisecond timing.
fn synthetic_piece(notes: usize, seed: u64) -> NormalizedPiece {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut onset = 0.0;
    let notes = (0..notes)
        .map(|i| {
            if i > 0 {
                onset += rng.random_range(50..=600) as f64;
            }
            TimedNote {
                pitch: rng.random_range(48..=84),
                velocity: rng.random_range(30..=110),
                onset_ms: onset,
                duration_ms: rng.random_range(80..=900) as f64,
            }
        })
        .collect();
    NormalizedPiece { notes, pedal: PedalCurve::default() }
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    steps: usize,
    notes: usize,
    masking_ratio: f64,
    masked_tokens: usize,
    peak_lr: f64,
    parameters: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
}

pub fn train_toy(args: &TrainToyArgs, seed: u64) -> Result<()> {
    if args.notes == 0 {
        return Err(usage("--notes must be positive"));
    }
    if !(args.ratio > 0.0 && args.ratio < 1.0) {
        return Err(usage(format!("--ratio {} outside (0, 1)", args.ratio)));
    }
    let mut piece = match &args.input {
        Some(path) => normalize(&io::read_midi(path)?, NormalizeMode::Performance),
        None => synthetic_piece(args.notes, seed),
    };
    piece.notes.truncate(args.notes);
    let seq = tokenizer::encode(&piece).context("tokenizing the training piece")?;
    let pretrain = corrupt_for_pretraining(&seq, args.ratio, seed)?;
    let example = TrainingExample::from_pretrain(&pretrain);

    let mut optimizer = OptimizerConfig::toy();
    if let Some(lr) = args.lr {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(usage(format!("--lr {lr} must be finite and positive")));
        }
        optimizer.peak_lr = lr;
    }
    let config = ModelConfig { seed, ..ModelConfig::toy() };
    let mut model = Model::<f32>::init(config, seed)?;
    let trace = train_steps(&mut model, std::slice::from_ref(&example), &optimizer, args.steps)?;
    if let Some(last) = trace.last() {
        eprintln!("trained {} steps, final loss {last:.6}", trace.len());
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    save_checkpoint(&model, &args.out.join("model.ckpt")).context("writing the checkpoint")?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(csv, "{},{l:.8}", i + 1);
    }
    io::emit(Some(&args.out.join("loss.csv")), &csv)?;
    let summary = TrainSummary {
        seed,
        steps: args.steps,
        notes: seq.note_count(),
        masking_ratio: args.ratio,
        masked_tokens: pretrain.masked_positions().len(),
        peak_lr: optimizer.peak_lr,
        parameters: model.parameter_count(),
        initial_loss: trace.first().copied(),
        final_loss: trace.last().copied(),
    };
    io::emit(Some(&args.out.join("summary.json")), &(serde_json::to_string_pretty(&summary)? + "\n"))
}

fn ratio(a: u128, b: u128) -> String {
    if b != 0 && a.is_multiple_of(b) {
        (a / b).to_string()
    } else {
        format!("{:.3}", a as f64 / b as f64)
    }
}

fn breakdown_rows(p: &ParameterBreakdown) -> [(&'static str, u64); 9] {
    [
        ("embedding", p.embedding),
        ("aggregation", p.aggregation),
        ("encoder_attention", p.encoder_attention),
        ("encoder_feed_forward", p.encoder_feed_forward),
        ("decoder_attention", p.decoder_attention),
        ("decoder_feed_forward", p.decoder_feed_forward),
        ("normalization", p.normalization),
        ("output", p.output),
        ("total", p.total()),
    ]
}

pub fn cost_report(args: &CostReportArgs, seed: u64) -> Result<()> {
    let base = ModelConfig::base();
    let toy = ModelConfig::toy();
    let n = args.seq_len;
    if n == 0 || !n.is_multiple_of(tokenizer::TOKENS_PER_NOTE) {
        return Err(usage(format!("--seq-len {n} must be a positive multiple of {}", tokenizer::TOKENS_PER_NOTE)));
    }
    let layers = base.encoder_layers;
    let full = attention_cost(&base, n, layers, false)?;
    let compressed = attention_cost(&base, n, layers, true)?;
    let memory = n / tokenizer::TOKENS_PER_NOTE;

    let mut text = format!("# rendition cost-report seed={seed}\n\n");
    let mut csv = String::from("table,item,value\n");
    let _ = writeln!(
        text,
        "encoder self-attention, multiply-accumulates ({layers} layers, {} heads x {})",
        base.heads(),
        base.head_dim
    );
    let _ =
        writeln!(text, "{:>8} {:>6} {:>20} {:>20} {:>6}", "seq_len", "notes", "uncompressed", "compressed", "ratio");
    let _ = writeln!(text, "{n:>8} {memory:>6} {full:>20} {compressed:>20} {:>6}", ratio(full, compressed));
    for (k, v) in [("seq_len", n as u128), ("uncompressed", full), ("compressed", compressed)] {
        let _ = writeln!(csv, "attention,{k},{v}");
    }
    let _ = writeln!(csv, "attention,ratio,{}", ratio(full, compressed));

    let _ = writeln!(text, "\ndecoder step at context {n}, memory {memory} notes");
    let _ = writeln!(text, "{:>8} {:>16} {:>16} {:>16}", "layers", "blocks", "output_head", "total");
    let mut block_costs = Vec::new();
    for layers in [base.decoder_layers, 6] {
        let c = decoder_step_cost(&base, layers, n, memory);
        let _ = writeln!(text, "{layers:>8} {:>16} {:>16} {:>16}", c.blocks, c.output_head, c.total());
        let _ = writeln!(csv, "decoder_step,blocks_{layers}_layers,{}", c.blocks);
        let _ = writeln!(csv, "decoder_step,total_{layers}_layers,{}", c.total());
        block_costs.push(c);
    }
    let block_ratio = ratio(block_costs[1].blocks, block_costs[0].blocks);
    let total_ratio = ratio(block_costs[1].total(), block_costs[0].total());
    let _ =
        writeln!(text, "6-layer / {}-layer: blocks {block_ratio}, with output head {total_ratio}", base.decoder_layers);

    let _ = writeln!(text, "\nparameters");
    let _ = writeln!(text, "{:<22} {:>14} {:>10}", "component", "base", "toy");
    for ((name, p), (_, t)) in
        breakdown_rows(&count_parameters(&base)).into_iter().zip(breakdown_rows(&count_parameters(&toy)))
    {
        let _ = writeln!(text, "{name:<22} {p:>14} {t:>10}");
        let _ = writeln!(csv, "parameters_base,{name},{p}");
        let _ = writeln!(csv, "parameters_toy,{name},{t}");
    }
    let _ = writeln!(csv, "run,seed,{seed}");

    if let Some(path) = &args.csv {
        io::emit(Some(path), &csv)?;
    }
    io::emit(args.out.as_deref(), &text)
}
