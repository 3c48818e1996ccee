//! `rendition`: tokenize, render, tempo-map and evaluate piano MIDI from the command line.

mod commands;
mod io;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "rendition", version, about = "Expressive piano performance rendering toolkit")]
struct Cli {
    /// Seed for every random choice; recorded in the artifacts written.
    #[arg(long, global = true, env = "RENDITION_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MIDI file or directory to a text token dump.
    Tokenize(TokenizeArgs),
    /// Token dump or shard directory back to MIDI.
    Detokenize(DetokenizeArgs),
    /// Masked-denoising examples from a token dump.
    Corrupt(CorruptArgs),
    /// Score MIDI to performance MIDI.
    Render(RenderArgs),
    /// Score and performance MIDI to a MIDI file whose tempo map follows the performance.
    TempoMap(TempoMapArgs),
    /// Distribution metrics between candidate and reference performances.
    Evaluate(EvaluateArgs),
    /// Leave-one-out metrics among several performances of each piece.
    HumanBaseline(HumanBaselineArgs),
    /// Size filter, tokenize and pack a MIDI directory into binary shards.
    Shard(ShardArgs),
    /// Velocity and timing jitter for a MIDI file or directory.
    Augment(AugmentArgs),
    /// Overfit the toy model on one short piece.
    TrainToy(TrainToyArgs),
    /// Attention cost and parameter tables.
    CostReport(CostReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Nominal timing: one quarter note is 500 ms.
    Score,
    /// Timing from the file's own tempo map.
    Performance,
}

impl From<Mode> for rendition_core::midi::NormalizeMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Score => Self::Score,
            Mode::Performance => Self::Performance,
        }
    }
}

#[derive(Args, Debug)]
pub struct TokenizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Performance)]
    pub mode: Mode,
}

#[derive(Args, Debug)]
pub struct DetokenizeArgs {
    /// Text token dump or shard directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file for a single sequence, otherwise a directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 480)]
    pub ppq: u16,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fraction of body tokens replaced by MASK.
    #[arg(long, default_value_t = rendition_core::tokenizer::PRETRAIN_MASK_RATIO)]
    pub ratio: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Copies score pitches and timing, fixed velocity.
    Stub,
    /// Trained weights from `--checkpoint`.
    Ckpt,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Stub)]
    pub model: ModelKind,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 32)]
    pub top_k: usize,
    /// Always pick the most likely token.
    #[arg(long)]
    pub greedy: bool,
    /// Encoder tokens per block.
    #[arg(long, default_value_t = 4096)]
    pub window: usize,
    #[arg(long, default_value_t = 2048)]
    pub stride: usize,
    /// Notes dropped from the end of each reused overlap.
    #[arg(long, default_value_t = 2)]
    pub tail_drop: usize,
    #[arg(long, default_value_t = 480)]
    pub ppq: u16,
    /// Also write the generated tokens here.
    #[arg(long)]
    pub tokens_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TempoMapArgs {
    #[arg(long)]
    pub score: PathBuf,
    #[arg(long)]
    pub perf: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 480)]
    pub ppq: u16,
}

#[derive(Args, Debug, Clone)]
pub struct MetricArgs {
    /// Velocity values per histogram bin.
    #[arg(long, default_value_t = 1)]
    pub velocity_bin: usize,
    /// Milliseconds per duration and IOI bin.
    #[arg(long, default_value_t = 1)]
    pub timing_bin: usize,
    /// Directory for report.txt and report.csv; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Row label in the CSV report.
    #[arg(long, default_value = "model")]
    pub label: String,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub references: PathBuf,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Args, Debug)]
pub struct HumanBaselineArgs {
    /// Directory with one subdirectory of performances per piece.
    #[arg(long)]
    pub groups: PathBuf,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Args, Debug)]
pub struct ShardArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Files smaller than this many bytes are skipped.
    #[arg(long, default_value_t = rendition_core::corpus::DEFAULT_MIN_BYTES)]
    pub min_bytes: u64,
    #[arg(long, default_value_t = 1 << 20)]
    pub max_tokens: usize,
    #[arg(long, value_enum, default_value_t = Mode::Performance)]
    pub mode: Mode,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file for a single input, otherwise a directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub velocity_jitter: u8,
    /// Relative timing jitter.
    #[arg(long, default_value_t = 0.05)]
    pub timing_jitter: f64,
    #[arg(long, default_value_t = 480)]
    pub ppq: u16,
}

#[derive(Args, Debug)]
pub struct TrainToyArgs {
    /// Directory receiving model.ckpt and loss.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Piece to memorize; a random one is generated when absent.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Notes taken from the start of the piece.
    #[arg(long, default_value_t = 4)]
    pub notes: usize,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    /// Fraction of tokens masked.
    #[arg(long, default_value_t = rendition_core::tokenizer::PRETRAIN_MASK_RATIO)]
    pub ratio: f64,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CostReportArgs {
    #[arg(long, default_value_t = 4096)]
    pub seq_len: usize,
    /// Output file for the text tables; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the tables as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Bad flag combinations found after parsing; exit status 2 like clap's own errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "UsageError: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Tokenize(a) => commands::tokenize(&a, seed),
        Command::Detokenize(a) => commands::detokenize(&a, seed),
        Command::Corrupt(a) => commands::corrupt(&a, seed),
        Command::Render(a) => commands::render(&a, seed),
        Command::TempoMap(a) => commands::tempo_map(&a, seed),
        Command::Evaluate(a) => commands::evaluate(&a, seed),
        Command::HumanBaseline(a) => commands::human_baseline(&a, seed),
        Command::Shard(a) => commands::shard(&a, seed),
        Command::Augment(a) => commands::augment(&a, seed),
        Command::TrainToy(a) => commands::train_toy(&a, seed),
        Command::CostReport(a) => commands::cost_report(&a, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
