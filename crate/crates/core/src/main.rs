use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use illumgap::harness::{self, emit_report, Experiment, ExperimentConfig, HarnessError, ObjectiveSource, ResultStore, Runner};

#[derive(Parser)]
#[command(name = "illumgap", version, about = "Illumination-diversity experiments on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist every dataset plus the gray-card vectors.
    Gen,
    /// FSID vs SID.
    Exp1,
    /// Gray-card vector augmentation (IVAD).
    Exp2,
    /// TPE-tuned color jitter on SID (BO-DA).
    Exp3,
    /// Experiments 1 to 3 and the report.
    All,
    /// Rewrite the report from the stored results.
    Report,
}

#[derive(Args)]
struct Overrides {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single training seed (shorthand for --seeds N).
    #[arg(long, global = true, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated training seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Augmentation search budget.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    images_per_cell: Option<usize>,
    /// Image side length in pixels.
    #[arg(long, global = true)]
    size: Option<usize>,
    #[arg(long, global = true, value_enum)]
    objective: Option<ObjectiveSource>,
    /// 100 images per cell and 200 search trials.
    #[arg(long, global = true)]
    paper_scale: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if self.paper_scale {
            cfg = cfg.paper_scale();
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(n) = self.trials {
            cfg.search.n_trials = n;
        }
        if let Some(n) = self.images_per_cell {
            cfg.images_per_cell = n;
        }
        if let Some(n) = self.size {
            cfg.size = n;
        }
        if let Some(o) = self.objective {
            cfg.search.objective = o;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = cli.opts.resolve()?;
    let store = match cli.command {
        Command::Gen => {
            let out = cfg.out.clone();
            Runner::new(cfg)?.verbose(true).generate()?;
            println!("datasets written to {}", out.join("data").display());
            return Ok(());
        }
        Command::Report => {
            let store = ResultStore::load(&cfg.out)?;
            emit_report(&store, &cfg.out)?;
            store
        }
        Command::Exp1 => harness::run(cfg.clone(), &[Experiment::Exp1], true)?,
        Command::Exp2 => harness::run(cfg.clone(), &[Experiment::Exp2], true)?,
        Command::Exp3 => harness::run(cfg.clone(), &[Experiment::Exp3], true)?,
        Command::All => harness::run(cfg.clone(), &[Experiment::Exp1, Experiment::Exp2, Experiment::Exp3], true)?,
    };
    print!("{}", harness::summary_markdown(&store));
    println!("report written to {}", cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
