mod commands;
mod config;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Module, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "isomesh",
    version,
    about = "Differentiable iso-surface extraction from latent signed distance networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration JSON; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid nodes per axis.
    #[arg(long, global = true)]
    res: Option<usize>,
    /// Optimizer iterations, or training steps for `train`.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory, or the OBJ path for `extract`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Inputs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Latent-table index or a JSON array file.
    #[arg(long)]
    latent: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the network and latent table to the built-in shape family.
    Train,
    /// Write the surface of one latent code as OBJ.
    Extract(#[command(flatten)] Inputs),
    /// Fit a latent code to a target mesh by Chamfer distance.
    FitChamfer {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Fit a latent code to silhouettes; pass one --camera per --target image.
    FitSilhouette {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        target: Vec<PathBuf>,
        #[arg(long)]
        camera: Vec<PathBuf>,
    },
    /// Minimise drag under enclosure constraints.
    OptimizeDrag(#[command(flatten)] Inputs),
    /// Compare every analytic gradient with finite differences.
    Gradcheck(#[command(flatten)] Inputs),
}

fn overrides(common: &Common, command: &Command) -> Overrides {
    let mut o = Overrides {
        seed: common.seed,
        res: common.res,
        out: common.out.clone(),
        ..Default::default()
    };
    if matches!(command, Command::Train) {
        o.steps = common.iters;
    } else {
        o.iters = common.iters;
    }
    let inputs = match command {
        Command::Train => None,
        Command::Extract(i) | Command::OptimizeDrag(i) | Command::Gradcheck(i) => Some(i),
        Command::FitChamfer { inputs, target } => {
            o.targets = target.iter().cloned().collect();
            Some(inputs)
        }
        Command::FitSilhouette { inputs, target, camera } => {
            o.targets.clone_from(target);
            o.cameras.clone_from(camera);
            Some(inputs)
        }
    };
    if let Some(i) = inputs {
        o.checkpoint.clone_from(&i.checkpoint);
        o.latent.clone_from(&i.latent);
    }
    o
}

fn load_config(common: &Common, command: &Command) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))?
        }
        None => RunConfig::default(),
    };
    cfg.apply(&overrides(common, command));
    Ok(cfg)
}

fn gradcheck(cfg: &RunConfig) -> anyhow::Result<bool> {
    let (ck, net) = commands::load_checkpoint(cfg)?;
    let report = gradcheck::run(&net, &ck.latent_table, cfg.module_seed(Module::Gradcheck))?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(out) = &cfg.paths.out {
        std::fs::write(out, json + "\n")?;
    }
    for s in report.suites.iter().filter(|s| !s.passed) {
        eprintln!(
            "error: {} worst relative error {:e} exceeds {:e}",
            s.name, s.worst_relative_error, s.tolerance
        );
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MESHSDF_LOG", "warn")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli.common, &cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let problems = cfg.problems();
    if !problems.is_empty() {
        for p in problems {
            eprintln!("error: {p}");
        }
        return ExitCode::from(2);
    }
    if let Err(e) = isomesh::exec::init_workers(cli.common.workers) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Train => commands::train(&cfg).map(|_| true),
        Command::Extract(_) => commands::extract(&cfg).map(|_| true),
        Command::FitChamfer { .. } => commands::fit_chamfer(&cfg).map(|_| true),
        Command::FitSilhouette { .. } => commands::fit_silhouette(&cfg).map(|_| true),
        Command::OptimizeDrag(_) => commands::optimize_drag(&cfg).map(|_| true),
        Command::Gradcheck(_) => gradcheck(&cfg),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
