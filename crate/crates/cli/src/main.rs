use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcr_core::config::ExperimentConfig;
use hcr_core::experiment::{self, EvaluateOptions, OracleCheckOptions};
use hcr_core::inference::ScoreVariant;
use hcr_core::oracle::ScmDims;
use hcr_core::HcrError;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;

#[derive(Parser)]
#[command(name = "hcr", version, about = "Deconfounded like prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a confounded interaction log and its ground truth.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// World and log seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configured run on a simulated or external log.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Name of a `[train.<name>]` section.
        #[arg(long, default_value = "hcr")]
        run: String,
        /// Directory holding interactions.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the run's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint and write metric reports.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Scoring variants, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "HCR")]
        variant: Vec<ScoreVariant>,
        /// Cutoffs, comma separated; defaults to the config's `ks`.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// Add user and item group breakdowns.
        #[arg(long)]
        groups: bool,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Report directory; the report is printed either way.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write per-group CSVs ready for plotting.
        #[arg(long)]
        emit_gnuplot_data: bool,
    },
    /// Train HCR, HCR-NS and CT per seed and tabulate the variants.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        /// Defaults to the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the identification identities on random tabular models.
    OracleCheck {
        /// Number of random models.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        /// Upper bounds users,items,confounders,mediators.
        #[arg(long, value_delimiter = ',', default_value = "4,5,3,4")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        /// Use exactly the given dimensions for every model.
        #[arg(long)]
        fixed_dims: bool,
        /// Drop the item prior from the front-door sum.
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig, HcrError> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => {
                let mut cfg = ExperimentConfig::default();
                cfg.apply_seed_override(std::env::var(hcr_core::config::SEED_ENV).ok().as_deref())?;
                Ok(cfg)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, HcrError> {
    match command {
        Command::Simulate { config, seed, out } => {
            let cfg = config.load()?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let (summary, _) = experiment::simulate(&cfg, seed, &out)?;
            println!("seed = {seed}");
            println!("{summary}");
        }
        Command::Train { config, run, data, out, seed } => {
            let cfg = config.load()?;
            let outcome = experiment::train_run(&cfg, &run, &data, &out, seed)?;
            let k = cfg.run(&run)?.eval_k;
            print!("{}", outcome.history.log_lines(k));
            if let Some(best) = outcome.history.best() {
                println!("best_epoch = {}", best.epoch);
            }
            println!("checkpoint = {}", display(outcome.manifest.file("checkpoint")));
        }
        Command::Evaluate { config, checkpoint, data, variant, k, groups, ground_truth, output, emit_gnuplot_data } => {
            let cfg = config.load()?;
            let opts = EvaluateOptions {
                checkpoint,
                data_dir: data,
                variants: variant,
                ks: if k.is_empty() { cfg.eval.ks.clone() } else { k },
                groups: groups.then_some(cfg.eval.group_spec),
                ground_truth,
                output,
                train_fraction: cfg.eval.train_fraction,
                figure_data: emit_gnuplot_data,
            };
            print!("{}", experiment::evaluate(&opts)?.to_text());
        }
        Command::Ablate { config, out } => {
            let cfg = config.load()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let table = experiment::ablate(&cfg, Some(&out))?;
            print!("{}", table.to_text());
        }
        Command::OracleCheck { seeds, dims, tolerance, fixed_dims, inject_fault } => {
            let [users, items, confounders, mediators] = dims[..] else {
                return Err(HcrError::InvalidArgument("--dims takes four values: users,items,confounders,mediators".into()));
            };
            if seeds == 0 {
                eprintln!("warning: no models requested; nothing to check");
                return Ok(ExitCode::SUCCESS);
            }
            let opts = OracleCheckOptions {
                models: seeds,
                dims: ScmDims { users, items, confounders, mediators },
                vary_dims: !fixed_dims,
                tolerance,
                inject_fault,
            };
            let report = experiment::oracle_check(&opts)?;
            println!("models = {}", report.models_checked);
            println!("frontdoor_error = {:.3e}", report.frontdoor_error);
            println!("backdoor_error = {:.3e}", report.backdoor_error);
            println!("collider_error = {:.3e}", report.collider_error);
            println!("normalization_error = {:.3e}", report.normalization_error);
            println!("worst_error = {:.3e}", report.worst());
            if !report.passes(tolerance) {
                println!("FAIL: worst error exceeds tolerance {tolerance:e}");
                return Ok(ExitCode::from(EXIT_VERIFY));
            }
            println!("PASS");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn display(path: Option<&Path>) -> String {
    path.map(|p| p.display().to_string()).unwrap_or_default()
}
