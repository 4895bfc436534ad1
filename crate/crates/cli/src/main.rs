use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use paramtrack_cli::commands::{check, quality_file};
use paramtrack_cli::config::RunConfig;
use paramtrack_cli::generate::{self, MeshKind};
use paramtrack_cli::pipeline::optimize;
use paramtrack_core::optimizer::Status;

#[derive(Parser)]
#[command(
    name = "paramtrack",
    version,
    about = "Node-density optimization on simplicial meshes"
)]
struct Cli {
    /// Seed for the random directions and samples of `check`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML run configuration.
    config: Option<PathBuf>,
    /// Use a shipped preset instead of a config file.
    #[arg(long, conflicts_with = "config", value_parser = ["exp1", "exp2", "exp3"])]
    preset: Option<String>,
    /// Overrides `output.dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), None) => RunConfig::load(p)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            _ => bail!("give a config file or --preset"),
        };
        if let Some(d) = &self.output_dir {
            cfg.output.dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer and write log.csv and VTK snapshots.
    Optimize(Source),
    /// Finite-difference, structural and circle-oracle checks.
    Check {
        #[command(flatten)]
        source: Source,
        #[arg(long, hide = true)]
        negate_derivative: bool,
    },
    /// Cell volume and shape statistics of a mesh.
    Quality { mesh: PathBuf },
    /// Write one of the built-in meshes.
    Generate {
        #[arg(value_enum)]
        kind: MeshKind,
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Optimize(source) => {
            let cfg = source.load()?;
            let out = optimize(&cfg)?;
            let r = &out.result;
            println!(
                "{:?} ({:?}) after {} iterations: J = {:.6e}, |U| = {:.3e}, max|rho - f| = {:.3e}",
                r.status,
                r.reason,
                r.iterations,
                r.last.objective,
                r.last.grad_l2,
                r.last.residual_max
            );
            println!("artifacts in {}", cfg.output.dir.display());
            Ok(match r.status {
                Status::Converged => ExitCode::SUCCESS,
                Status::MaxIters | Status::Stagnated => ExitCode::from(2),
            })
        }
        Command::Check {
            source,
            negate_derivative,
        } => {
            let cfg = source.load()?;
            let lines = check(&cfg, cli.seed, negate_derivative)?;
            for l in &lines {
                println!("{l}");
            }
            Ok(if lines.iter().all(|l| l.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Quality { mesh } => {
            println!("{}", quality_file(&mesh)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate { kind, output } => {
            let m = generate::write(kind, Path::new(&output))?;
            println!(
                "{} vertices, {} cells -> {}",
                m.n_vertices(),
                m.n_cells(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
