use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynhyper::{Error, Result};
use dynhyper_cli::commands;
use dynhyper_cli::{parse_config, RunConfig};

#[derive(Parser)]
#[command(name = "dynhyper", version, about = "Node classification on dynamic graphs with temporal hypergraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a drifting SBM and write it as a dataset directory.
    Generate(RunArgs),
    /// Train and save parameters.
    Train(RunArgs),
    /// Evaluate saved parameters on the test slices.
    Eval(RunArgs),
    /// Compare full, individual_only and group_only.
    Ablate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, conflicts_with = "sbm")]
    data: Option<String>,
    /// Synthetic data: n,T,C,p_in,p_out,drift
    #[arg(long)]
    sbm: Option<String>,
    #[arg(long)]
    split_t: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// short,mid,long
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    m_clusters: Option<usize>,
    /// avg, max or min
    #[arg(long)]
    agg: Option<String>,
    /// euclidean, cosine or chebyshev
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// message or spectral
    #[arg(long)]
    prop: Option<String>,
    /// full, individual_only, group_only or backbone_only
    #[arg(long)]
    ablation: Option<String>,
    /// gcn or sage
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Hypergraph propagation layers per path.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    rebuild_every: Option<usize>,
    /// Parameter file (default: <out>/params.bin).
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("seed", opt(&self.seed)),
            ("data", opt(&self.data)),
            ("sbm", opt(&self.sbm)),
            ("split_t", opt(&self.split_t)),
            ("k", opt(&self.k)),
            ("tau", opt(&self.tau)),
            ("m_clusters", opt(&self.m_clusters)),
            ("agg", opt(&self.agg)),
            ("metric", opt(&self.metric)),
            ("alpha", opt(&self.alpha)),
            ("beta", opt(&self.beta)),
            ("lr", opt(&self.lr)),
            ("epochs", opt(&self.epochs)),
            ("prop", opt(&self.prop)),
            ("ablation", opt(&self.ablation)),
            ("backbone", opt(&self.backbone)),
            ("hidden", opt(&self.hidden)),
            ("layers", opt(&self.layers)),
            ("rebuild_every", opt(&self.rebuild_every)),
            ("params", opt(&self.params)),
            ("out", opt(&self.out)),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect()
    }

    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let name = path.display().to_string();
                let settings = parse_config(&text, &name)?;
                Some((name, settings))
            }
            None => None,
        };
        RunConfig::from_settings(file.as_ref().map(|(n, s)| (n.as_str(), s.as_slice())), &self.overrides())
    }
}

fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a.resolve()?),
        Command::Train(a) => commands::train_cmd(&a.resolve()?),
        Command::Eval(a) => Ok(commands::eval_cmd(&a.resolve()?)?.to_csv()),
        Command::Ablate(a) => commands::ablate_cmd(&a.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
