//! `vog`: ingest, synthesize, train, predict and evaluate video outlines.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "vog", version, about = "Video outline generation: span extraction, rewriting and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate corpus files and write them back in normalized form.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with known outlines.
    Synth(SynthArgs),
    /// Pretrain a heading detector on articles.
    Pretrain(PretrainArgs),
    /// Train a span extractor.
    TrainExtractor(TrainExtractorArgs),
    /// Train a KEEP/DELETE rewriter.
    TrainRewriter(TrainRewriterArgs),
    /// Predict outlines for a subtitle corpus.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    subtitles: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    articles: Option<PathBuf>,
    /// Directory receiving the normalized files.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    videos: usize,
    /// Synthetic articles to write alongside the videos.
    #[arg(long, default_value_t = 0)]
    articles: usize,
    #[arg(long, default_value_t = 2.0)]
    highlight_strength: f64,
    /// Whether heading text is lexically distinct from body text.
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    text_signal: String,
    #[arg(long, default_value_t = 0.0)]
    filler_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    duplicate_rate: f64,
    #[arg(long, default_value = "syn")]
    id_prefix: String,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Encoder shape; vocabulary size comes from the data.
#[derive(Args, Debug)]
struct EncoderArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    ff_dim: usize,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
}

/// Optimizer settings: a `key = value` file, then individual flags.
#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    crf_learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long, value_parser = ["constant", "linear"])]
    schedule: Option<String>,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    articles: PathBuf,
    /// Subtitle corpus whose characters join the vocabulary.
    #[arg(long)]
    subtitles: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct TrainExtractorArgs {
    #[arg(long)]
    subtitles: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// JointBC, BC-base, BC-PT, VSEBert, VSENet or Sent-BC, optionally with
    /// -wo-PT, -wo-VSE, -wo-CRF or -cat suffixes.
    #[arg(long)]
    variant: String,
    /// Pretrained checkpoint, required by variants that use pretraining.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "eval_annotations")]
    eval_subtitles: Option<PathBuf>,
    #[arg(long, requires = "eval_subtitles")]
    eval_annotations: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct TrainRewriterArgs {
    #[arg(long)]
    subtitles: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value = "lt-like", value_parser = ["bc", "lt-like"])]
    mode: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    subtitles: PathBuf,
    #[arg(long, default_value = "off", value_parser = ["off", "bc", "lt-like"])]
    rewrite: String,
    /// Rewriter checkpoint matching `--rewrite`.
    #[arg(long)]
    rewriter: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value = "macro", value_parser = ["macro", "micro"])]
    rouge: String,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&message).trim_start_matches("error: ");
            eprintln!("error: category=usage message={first}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: category={} message={}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
