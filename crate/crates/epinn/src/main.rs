use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epinn::commands::{self, EvaluateInputs};
use epinn::{AppError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "epinn", version, about = "Evidential physics-informed neural networks for inverse PDE problems")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory [default: runs/<problem>-<method>-s<seed>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// epinn, epinn_v, deep_ensemble or plain_pinn.
    #[arg(long, global = true)]
    method: Option<String>,
    /// poisson1d or diffreact2d.
    #[arg(long, global = true)]
    problem: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Loss weights: table1, table2 or table2_curves.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample observations, collocation, boundary and test points.
    Generate,
    /// Train the configured method on the run's dataset.
    Train,
    /// Compute metrics and plots for a trained checkpoint.
    Evaluate {
        /// Checkpoint to evaluate [default: <out>/checkpoint.json].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset to evaluate on [default: <out>/dataset.csv].
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Tabulate metrics from several run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

impl Global {
    fn run_config(&self) -> Result<RunConfig, AppError> {
        let overrides = Overrides {
            problem: self.problem.clone(),
            method: self.method.clone(),
            preset: self.preset.clone(),
            seed: self.seed,
            epochs: self.epochs,
        };
        RunConfig::load(self.config.as_deref(), &overrides)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            Path::new("runs").join(format!("{}-{}-s{}", cfg.problem.name(), cfg.method.name(), cfg.seed))
        })
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let g = &cli.global;
    match cli.command {
        Command::Generate => {
            let cfg = g.run_config()?;
            let out = g.out_dir(&cfg);
            let ds = commands::generate(&cfg, &out)?;
            println!(
                "wrote {} ({} obs, {} colloc, {} boundary, {} test rows)",
                out.join(commands::DATASET_FILE).display(),
                ds.observations.len(),
                ds.collocation.len(),
                ds.boundary.len(),
                ds.test.len()
            );
        }
        Command::Train => {
            let cfg = g.run_config()?;
            let out = g.out_dir(&cfg);
            let summary = commands::train(&cfg, &out)?;
            println!("{summary}");
        }
        Command::Evaluate { checkpoint, dataset } => {
            let out = match &g.out {
                Some(o) => o.clone(),
                None => g.out_dir(&g.run_config()?),
            };
            let record = commands::evaluate(&out, &EvaluateInputs { checkpoint, dataset })?;
            print!("{}", epinn::report::render_table(&[record]));
        }
        Command::Report { runs } => {
            print!("{}", commands::report(&runs, g.out.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with 2 on usage errors; here 2 is reserved for numerical failure.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
