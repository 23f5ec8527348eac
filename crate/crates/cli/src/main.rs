//! `disfl`: command-line front end for the disfluency detection pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "disfl", version, about = "Noisy-channel disfluency detection with LM reranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop partial words and punctuation, lowercase, write TSV.
    Normalize {
        input: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate a labeled synthetic corpus from the built-in grammar.
    Synth {
        #[arg(long, default_value_t = 5000)]
        utterances: usize,
        #[arg(long, default_value_t = 0.15)]
        rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate channel parameters from a labeled corpus.
    TrainChannel {
        train: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a Kneser-Ney n-gram LM on the fluent side of a corpus.
    TrainNgram {
        train: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        min_count: Option<usize>,
        #[arg(long, value_enum, default_value_t = Dir::Forward)]
        direction: Dir,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train an LSTM LM on the fluent side of a corpus.
    TrainLstm {
        train: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long, value_enum, default_value_t = Dir::Forward)]
        direction: Dir,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write n-best analyses for every utterance as JSON lines.
    Nbest {
        input: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        bigram: PathBuf,
        #[arg(short, long, default_value_t = 25)]
        n: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Dump reranker features for each candidate as JSON lines.
    ExtractFeatures {
        nbest: PathBuf,
        #[command(flatten)]
        lms: LmPaths,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train the reranker on n-best lists with gold labels.
    TrainReranker {
        nbest: PathBuf,
        /// Labeled corpus providing gold labels for the n-best utterances.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[command(flatten)]
        lms: LmPaths,
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Pick one analysis per utterance and write labeled TSV.
    Predict {
        nbest: PathBuf,
        #[arg(long)]
        reranker: Option<PathBuf>,
        #[command(flatten)]
        lms: LmPaths,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score predicted labels against gold.
    Evaluate {
        gold: PathBuf,
        predicted: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run one condition end to end from a config file.
    Run(RunArgs),
    /// Run a table of LM-feature conditions over shared artifacts.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Table::Full)]
        table: Table,
    },
}

#[derive(Args)]
struct LmPaths {
    #[arg(long)]
    lstm_fwd: Option<PathBuf>,
    #[arg(long)]
    lstm_bwd: Option<PathBuf>,
    #[arg(long)]
    ngram_fwd: Option<PathBuf>,
    #[arg(long)]
    ngram_bwd: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set k_folds=5 --set lstm.preset="tiny"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    n_best: Option<usize>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    lstm_preset: Option<Preset>,
    #[arg(long)]
    lstm_epochs: Option<usize>,
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Dps,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Forward,
    Backward,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Tiny,
    Desk,
    Large,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    /// baseline / forward / backward / both
    Directions,
    /// baseline / 4-gram / lstm / 4-gram+lstm
    Families,
    /// NCM alone plus every condition above.
    Full,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
