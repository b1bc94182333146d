mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "tandrud",
    version,
    about = "Next-activated-user prediction for information cascades"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a cascade corpus and split it into train/valid/test.
    Prepare(PrepareArgs),
    /// Learn topological embeddings from a social graph.
    Embed(EmbedArgs),
    /// Train a model on a prepared corpus.
    Train(TrainArgs),
    /// Rank users for every prefix of a split and report RR and P@K.
    Eval(EvalArgs),
    /// Infer diffusion trees from cascade-level attention.
    InferTree(InferTreeArgs),
    /// Simulate independent cascades with planted diffusion trees.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct PrepareArgs {
    /// Cascade file (`id<TAB>user,time user,time ...`).
    #[arg(long)]
    pub cascades: PathBuf,
    /// Optional edge file, checked against the corpus vocabulary.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Train:valid:test proportions.
    #[arg(long, default_value = "8,1,1", value_delimiter = ',', num_args = 3)]
    pub ratios: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Vocabulary written by `prepare`.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub walk: WalkArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct WalkArgs {
    /// Topological embedding size.
    #[arg(long, default_value_t = 128)]
    pub dg: usize,
    /// Node2Vec return parameter.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Node2Vec in-out parameter.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 80)]
    pub walk_length: usize,
    #[arg(long, default_value_t = 10)]
    pub walks_per_node: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub sgns_epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub sgns_lr: f64,
    /// Follow edge direction during walks instead of treating links as
    /// undirected.
    #[arg(long)]
    pub directed_walks: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// Pre-trained topological embeddings.
    #[arg(long, conflicts_with = "graph")]
    pub embeddings: Option<PathBuf>,
    /// Social graph; embeddings are learned from it before training.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Train without topological information.
    #[arg(long, conflicts_with_all = ["embeddings", "graph"])]
    pub no_topology: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Dual-role embedding size.
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Number of time-decay intervals.
    #[arg(long = "T", default_value_t = 50)]
    pub t: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.8)]
    pub dropout_keep: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Remove already-activated users from rankings.
    #[arg(long)]
    pub mask_observed: bool,
    /// Scale raw attention logits by similarity instead of the normalized
    /// attention.
    #[arg(long)]
    pub raw_logit_adjust: bool,
    #[command(flatten)]
    pub walk: WalkArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub mask_observed: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct InferTreeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Planted trees from `synth`; reports parent-recovery accuracy.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Existing edge file over raw ids; a random graph is drawn otherwise.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    /// `ba` (preferential attachment) or `er` (uniform edges).
    #[arg(long, default_value = "ba")]
    pub graph_model: String,
    /// Links per new node for `ba`.
    #[arg(long, default_value_t = 2)]
    pub attach: usize,
    /// Edge probability for `er`.
    #[arg(long, default_value_t = 0.025)]
    pub edge_prob: f64,
    /// Per-edge activation probability.
    #[arg(long, default_value_t = 0.3)]
    pub prob: f64,
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
    /// Cascades to keep; runs that never spread are discarded.
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("could not size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::InferTree(a) => commands::infer_tree(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
