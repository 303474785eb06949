//! `hedonic`: coalition discovery pipeline over HEDT tensor dumps.
//!
//! Exit status is 0 on success, 1 when the library rejects the inputs and 2
//! on a usage error.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hedonic_core::ablation::AblationMode;
use hedonic_core::eval::Metric;
use hedonic_core::sampler::Retention;

#[derive(Debug, Parser)]
#[command(
    name = "hedonic",
    version,
    about = "Hedonic coalition discovery over MLP neurons"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a pairwise affinity matrix from a layer dump.
    Affinity(AffinityArgs),
    /// Run PAC top-cover on an affinity matrix.
    Partition(PartitionArgs),
    /// Build a baseline partition matched to a reference partition.
    Baseline(BaselineArgs),
    /// Report Pair and Ratio synergy per coalition.
    Synergy(SynergyArgs),
    /// Match coalitions across consecutive layers.
    Track(TrackArgs),
    /// Evaluate coalitions: ablation drop, feature alignment or predictivity.
    Eval(EvalArgs),
    /// Generate a planted affinity game, optionally with a synthetic layer.
    Synth(SynthArgs),
    /// Search exhaustively for a blocking coalition.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AffinityMethod {
    Oca,
    PasExact,
    PasGrad,
}

#[derive(Debug, Args)]
struct AffinityArgs {
    /// Layer dump (HEDT).
    #[arg(long)]
    layer: PathBuf,
    #[arg(long, value_enum, default_value = "oca")]
    method: AffinityMethod,
    /// Ablation mode for PAS: zero or reset.
    #[arg(long, default_value = "zero")]
    mode: AblationMode,
    /// Use only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Refuse PAS runs needing more than this many pairs.
    #[arg(long)]
    pairs_budget: Option<u64>,
    /// Restrict PAS to each neuron's Q strongest OCA partners.
    #[arg(long)]
    top_q: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Experiments,
    Converged,
}

#[derive(Debug, Args)]
struct PartitionArgs {
    /// Affinity matrix (HEDT entry `phi`).
    #[arg(long)]
    affinity: PathBuf,
    #[arg(long, value_enum, default_value = "experiments")]
    preset: Preset,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    omega: Option<usize>,
    #[arg(long)]
    kmin: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Set m = ω = c0·n²·ln(n/δ)/ε instead of the preset budget.
    #[arg(long)]
    pac_c0: Option<f64>,
    /// top or phi.
    #[arg(long)]
    retention: Option<Retention>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layer index recorded in the output.
    #[arg(long, default_value_t = 0)]
    layer_index: i64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Random,
    Kmeans,
    Ward,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: BaselineMethod,
    /// Partition whose coalition count (or size histogram) is matched.
    #[arg(long)]
    reference: PathBuf,
    /// Layer dump supplying activations; required for kmeans and ward.
    #[arg(long)]
    layer: Option<PathBuf>,
    /// Override the matched cluster count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = hedonic_core::baselines::KMEANS_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynergyArgs {
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    layer: PathBuf,
    #[arg(long, default_value = "zero")]
    mode: AblationMode,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Partition files in depth order; repeat once per layer.
    #[arg(long = "partition", required = true, num_args = 1)]
    partitions: Vec<PathBuf>,
    /// Layer dumps aligned with --partition.
    #[arg(long = "layer", required = true, num_args = 1)]
    layers: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    alpha_hi: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha_lo: f64,
    #[arg(long)]
    flow_out: PathBuf,
    #[arg(long)]
    dynamics_out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalTask {
    Ood,
    Alignment,
    Predictivity,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    layer: PathBuf,
    #[arg(long, value_enum)]
    task: EvalTask,
    /// CSV `input,query,label`; needed for ood and predictivity.
    #[arg(long)]
    eval_set: Option<PathBuf>,
    /// neg-mse or ndcg10.
    #[arg(long, default_value = "neg-mse")]
    metric: Metric,
    #[arg(long, default_value = "reset")]
    mode: AblationMode,
    /// Feature CSV with a header row; needed for alignment.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Trailing fraction of the eval set held out for predictivity.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    coalitions: usize,
    #[arg(long, default_value_t = 1.0)]
    mu_in: f64,
    #[arg(long, default_value_t = 0.0)]
    mu_out: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Affinity matrix output (HEDT).
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth partition; defaults to `<out>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write a synthetic gated-MLP layer with the same planted blocks.
    #[arg(long)]
    layer_out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0.8)]
    coupling: f64,
    #[arg(long, default_value_t = 0)]
    lora_rank: usize,
    #[arg(long, default_value_t = 0)]
    layer_index: i64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    affinity: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    /// Top-k size; defaults to the partition's recorded `k`, else 3.
    #[arg(long)]
    k: Option<usize>,
    /// Largest number of coalitions to enumerate.
    #[arg(long, default_value_t = 100_000_000)]
    budget: u64,
}

/// Splices `--config FILE` entries in front of the subcommand's own flags so
/// that explicit flags win.
fn expand_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let pos = argv.iter().position(|a| {
        let a = a.to_string_lossy();
        a == "--config" || a.starts_with("--config=")
    });
    let Some(pos) = pos else {
        return Ok(argv);
    };
    let flag = argv.remove(pos).to_string_lossy().into_owned();
    let path = match flag.strip_prefix("--config=") {
        Some(p) => PathBuf::from(p),
        None if pos < argv.len() => PathBuf::from(argv.remove(pos)),
        None => return Err("--config needs a file argument".into()),
    };
    if argv.len() < 2 {
        return Err("--config must follow a subcommand".into());
    }
    let entries = hedonic_core::config::read_config(&path).map_err(|e| e.to_string())?;
    let extra = hedonic_core::config::to_args(&entries);
    argv.splice(2..2, extra.into_iter().map(OsString::from));
    Ok(argv)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    hedonic_core::rng::init_thread_pool_from_env();
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
