use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hilp_core::pipeline::{run_stage, synthesize, PipelineConfig, Stage, StageManifest, SynthOptions, Workspace};
use hilp_core::Result;

/// Outage prediction for high-impact low-probability weather events.
#[derive(Parser)]
#[command(name = "hilp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Where artifacts go; defaults to the config's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw CSVs and build the hourly county panel.
    Ingest(Common),
    /// Fill missing cells from geographically nearest counties.
    Impute {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        /// Also fill missing outage targets.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        impute_targets: Option<bool>,
    },
    /// Identify extreme-event seeds and their weather analogs.
    Hilp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        analogs_per_seed: Option<usize>,
        #[arg(long)]
        season_window: Option<u32>,
    },
    /// Build lagged feature rows for training and for the held-out event.
    Features(Common),
    /// Rebalance the training rows toward high-impact outcomes.
    Rebalance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: Option<f64>,
        /// Nearest high-impact neighbours per rare sample.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        oversample: Option<usize>,
        #[arg(long)]
        undersample: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit the configured models.
    Train(Common),
    /// Score every model on the held-out event.
    Evaluate(Common),
    /// Write series and importance tables for plotting.
    Report(Common),
    /// Run every stage in order.
    Run(Common),
    /// Generate a reproducible toy dataset and config.
    Synth {
        #[arg(long, default_value_t = 5)]
        counties: usize,
        #[arg(long, default_value_t = 2000)]
        hours: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn workspace(common: &Common, tweak: impl FnOnce(&mut PipelineConfig)) -> Result<Workspace> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    tweak(&mut cfg);
    let dir = common.config.parent().map(PathBuf::from).unwrap_or_default();
    let out = common.out_dir.clone().unwrap_or_else(|| dir.clone());
    Workspace::new(cfg, dir, out)
}

fn print_manifest(m: &StageManifest) {
    println!("{}: ok ({} outputs)", m.stage, m.outputs.len());
    for (k, v) in &m.summary {
        println!("  {k} = {v}");
    }
}

fn run_one(common: &Common, stage: Stage, tweak: impl FnOnce(&mut PipelineConfig)) -> Result<()> {
    let ws = workspace(common, tweak)?;
    print_manifest(&run_stage(&ws, stage)?);
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(c) => run_one(&c, Stage::Ingest, |_| {}),
        Command::Impute { common, k, impute_targets } => run_one(&common, Stage::Impute, |cfg| {
            if let Some(k) = k {
                cfg.impute.k = k;
            }
            if let Some(t) = impute_targets {
                cfg.impute.impute_targets = t;
            }
        }),
        Command::Hilp {
            common,
            alpha,
            analogs_per_seed,
            season_window,
        } => run_one(&common, Stage::Hilp, |cfg| {
            if let Some(a) = alpha {
                cfg.hilp.alpha = a;
            }
            if let Some(n) = analogs_per_seed {
                cfg.hilp.analogs_per_seed = n;
            }
            if let Some(w) = season_window {
                cfg.hilp.season_window = w;
            }
        }),
        Command::Features(c) => run_one(&c, Stage::Features, |_| {}),
        Command::Rebalance {
            common,
            tau,
            k,
            oversample,
            undersample,
            noise,
        } => run_one(&common, Stage::Rebalance, |cfg| {
            let r = &mut cfg.rebalance;
            r.tau = tau.unwrap_or(r.tau);
            r.k_neighbors = k.unwrap_or(r.k_neighbors);
            r.oversample_rate = oversample.unwrap_or(r.oversample_rate);
            r.undersample_rate = undersample.unwrap_or(r.undersample_rate);
            r.noise_fraction = noise.unwrap_or(r.noise_fraction);
        }),
        Command::Train(c) => run_one(&c, Stage::Train, |_| {}),
        Command::Evaluate(c) => run_one(&c, Stage::Evaluate, |_| {}),
        Command::Report(c) => run_one(&c, Stage::Report, |_| {}),
        Command::Run(c) => {
            let ws = workspace(&c, |_| {})?;
            for stage in Stage::ALL {
                print_manifest(&run_stage(&ws, stage)?);
            }
            Ok(())
        }
        Command::Synth {
            counties,
            hours,
            seed,
            out_dir,
        } => {
            let opts = SynthOptions {
                counties,
                hours,
                seed,
                ..Default::default()
            };
            let path = synthesize(&out_dir, &opts)?;
            println!("synth: wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
