mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha_asr::config::RunConfig;
use sha_asr::error::ErrorCategory;
use sha_asr::Error;

#[derive(Parser)]
#[command(name = "sha-asr", version, about = "Bilingual SplitHead-with-Attention ASR workbench")]
struct Cli {
    /// Run configuration; every key not given keeps its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory that receives all artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the synthetic corpora, lexicons, transliteration table and LM text.
    Synth,
    /// Train the English-only baseline and SHA stages 1 to 4 on a synth directory.
    Train(DataArgs),
    /// Distil a trained SHA model from its own streaming/full-context ensemble.
    Distill {
        #[command(flatten)]
        data: DataArgs,
        /// Student and teacher checkpoint; defaults to `<out>/checkpoints/full.ckpt`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Estimate an n-gram model from text (one sentence per line) and write ARPA.
    LmBuild {
        #[arg(long)]
        text: PathBuf,
        /// Output name; the model goes to `<out>/lm/<name>.arpa`.
        #[arg(long)]
        name: String,
        /// Overrides `[lm] order`.
        #[arg(long)]
        order: Option<usize>,
    },
    /// Interpolate an English and a Hindi ARPA model and report perplexities.
    LmInterp {
        #[arg(long)]
        en: PathBuf,
        #[arg(long)]
        hi: PathBuf,
        /// Overrides `[lm] lambda_en`.
        #[arg(long)]
        lambda_en: Option<f64>,
        /// Test text files; one perplexity row per model and file.
        #[arg(long)]
        test: Vec<PathBuf>,
    },
    /// Transliterate Devanagari text line by line.
    Translit {
        #[arg(long)]
        input: PathBuf,
        /// Word table (`source TAB latin`); required except in remote mode.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Context rules appended to the table.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// word, contextual or remote; defaults to `[translit] mode`.
        #[arg(long)]
        mode: Option<String>,
        /// Service endpoint for remote mode; defaults to `[translit] remote_url`.
        #[arg(long)]
        url: Option<String>,
    },
    /// Decode a corpus and write one hypothesis per utterance.
    Decode(DecodeArgs),
    /// Decode a corpus and write a WER report.
    Eval {
        #[command(flatten)]
        decode: DecodeArgs,
        /// Use one-hot posteriors on the reference labels instead of a model.
        #[arg(long)]
        oracle: bool,
        /// System name in the report.
        #[arg(long, default_value = "system")]
        system: String,
    },
    /// Collect attention weights on a corpus and fit per-language GMMs.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Run the whole experiment and write the per-system WER report.
    ReproduceTrend,
}

#[derive(Args)]
pub struct DataArgs {
    /// Directory written by `synth`; defaults to `<out>/data`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// ARPA file or interpolation descriptor.
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// single, sha, head-en or head-hi.
    #[arg(long, default_value = "sha")]
    mode: String,
}

fn load_config(cli: &Cli) -> sha_asr::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Service => 4,
        ErrorCategory::Internal => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| commands::run(&cli.command, &cfg, &cli.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sha-asr: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
