use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbmlmc_cli::{cmd_plot_data, cmd_reference, cmd_run, cmd_select_models, config, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mbmlmc", version, about = "Model-based multilevel Monte Carlo for random heterogeneous media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pilot evaluations, model sequences and level plans.
    SelectModels(Common),
    /// Model selection, repeated MLMC and plain Monte Carlo runs, reference and plot tables.
    Run(Common),
    /// Reference value of the quantity of interest.
    Reference(Common),
    /// Rebuild convergence.csv and blocks.csv from a finished run.
    PlotData {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; may name a preset to override.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: heat-rect, heat-desk or elasticity-lshape.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
        }
        let mut cfg = config::load(self.config.as_deref(), self.preset.as_deref())?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        let out = cfg.out.clone().unwrap_or_else(|| Path::new("results").to_path_buf());
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SelectModels(c) => {
            let (cfg, out) = c.resolve()?;
            cmd_select_models(cfg, &out)?;
        }
        Command::Run(c) => {
            let (cfg, out) = c.resolve()?;
            cmd_run(cfg, &out)?;
        }
        Command::Reference(c) => {
            let (cfg, out) = c.resolve()?;
            let r = cmd_reference(cfg, &out)?;
            println!("{} +- {}", r.value, r.se);
        }
        Command::PlotData { out } => cmd_plot_data(&out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
