mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaml::Error;

use config::{read_config, resolve, Overrides, RunConfig};

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-example tapes; 1 is bit-reproducible across machines.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// F1 decision threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// pairwise, hierarchical, label_to_input or none.
    #[arg(long, global = true)]
    attention: Option<String>,
    /// Number of factors for hierarchical attention.
    #[arg(long, global = true)]
    factors: Option<usize>,
    /// Label interaction file: one `a b score` triple per line.
    #[arg(long, global = true)]
    label_graph: Option<PathBuf>,
    /// Keep label edges with score strictly above this value.
    #[arg(long, global = true)]
    label_threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-motif dataset and split it into train/valid/test.
    Generate {
        /// Motif spec JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Number of graphs.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a model, writing checkpoints and a JSON-lines history.
    Train {
        /// Continue from `<out>/checkpoint.json` if present.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs in this invocation.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Compute micro/macro F1 and AUC of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write per-label probabilities for every example.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Export label-to-input attention traces and top-k nodes.
    Explain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated example indices; all examples when absent.
        #[arg(long, value_delimiter = ',')]
        graphs: Option<Vec<usize>>,
        /// Nodes listed per label and layer.
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Parser)]
#[command(name = "gaml", version, about = "Graph attentional multilabel learning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Shape { .. } => "shape",
        Error::Domain(_) => "domain",
        Error::Contract(_) => "contract",
        Error::Parse { .. } => "parse",
        Error::Validation(_) => "validation",
        Error::Config(_) => "config",
        Error::Training(_) => "training",
        Error::Version { .. } => "version",
        Error::UndefinedAuc(_) => "undefined_auc",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn run(common: Common, command: Command) -> gaml::Result<()> {
    let file = match &common.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    let mut flags = Overrides {
        seed: common.seed,
        out: common.out,
        threads: common.threads,
        threshold: common.threshold,
        attention: common.attention,
        factors: common.factors,
        label_graph: common.label_graph,
        label_threshold: common.label_threshold,
        ..Overrides::default()
    };
    let name = match &command {
        Command::Generate { .. } => "generate",
        Command::Train { .. } => "train",
        Command::Eval { checkpoint, data } | Command::Predict { checkpoint, data } => {
            flags.checkpoint = checkpoint.clone();
            flags.data = data.clone();
            if matches!(command, Command::Eval { .. }) {
                "eval"
            } else {
                "predict"
            }
        }
        Command::Explain { checkpoint, data, .. } => {
            flags.checkpoint = checkpoint.clone();
            flags.data = data.clone();
            "explain"
        }
    };
    let eff = resolve(name, file, flags)?;
    match command {
        Command::Generate { spec, n } => commands::generate(&eff, spec, n),
        Command::Train { resume, stop_after } => commands::train(&eff, resume, stop_after),
        Command::Eval { .. } => commands::eval(&eff),
        Command::Predict { .. } => commands::predict(&eff),
        Command::Explain { graphs, k, .. } => commands::explain(&eff, graphs, k),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.common, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({"error": kind(&e), "message": e.to_string()});
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
