use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use committor::config::ExperimentConfig;
use committor::harness;

#[derive(Parser)]
#[command(name = "committor", version, about = "Semigroup committor training and validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sampling and trajectories.
    #[arg(long, env = "COMMITTOR_WORKERS")]
    workers: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the transition corpus and boundary pools.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Write samples as CSV instead of the binary cache.
        #[arg(long)]
        csv: bool,
    },
    /// Train a model, optionally on a cache written by `sample`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Relative error and committor slice of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Half-isosurface hitting test for a Ginzburg-Landau checkpoint.
    ValidateGl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Semigroup vs gradient-squared training over the c_norm sweep.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

fn setup(common: &Common) -> committor::Result<ExperimentConfig> {
    if let Some(k) = common.workers {
        // the global pool can only be set once; a second call is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let cfg = ExperimentConfig::load(&common.config)?;
    Ok(harness::apply_overrides(cfg, common.seed, common.out.clone()))
}

fn run(cli: Cli) -> committor::Result<()> {
    match cli.command {
        Command::Sample { common, csv } => {
            let cfg = setup(&common)?;
            let m = harness::cmd_sample(&cfg, &cfg.output_dir, csv)?;
            println!(
                "sampled {} transitions, {} + {} boundary points into {}",
                m.counts["interior_samples"],
                m.counts["boundary_a"],
                m.counts["boundary_b"],
                cfg.output_dir.display()
            );
        }
        Command::Train { common, cache } => {
            let cfg = setup(&common)?;
            let o = harness::cmd_train(&cfg, &cfg.output_dir, cache.as_deref())?;
            match o.trace.final_error() {
                Some(e) => println!("trained {} steps, final E = {e:.5}", cfg.training.steps),
                None => println!("trained {} steps", cfg.training.steps),
            }
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = setup(&common)?;
            let e = harness::cmd_evaluate(&cfg, &checkpoint, &cfg.output_dir)?;
            println!("E = {:.5} over {} validation states", e.relative_error, e.validation_samples);
        }
        Command::ValidateGl { common, checkpoint } => {
            let cfg = setup(&common)?;
            let s = harness::cmd_validate_gl(&cfg, &checkpoint, &cfg.output_dir)?;
            println!(
                "m = {}, N = {}: mean {:.4}, variance {:.5} (null {:.5}), KS p = {:.3}",
                s.fractions.len(),
                s.n,
                s.mean,
                s.variance,
                0.25 / s.n as f64,
                s.ks_p_value
            );
        }
        Command::Compare { common, cache } => {
            let cfg = setup(&common)?;
            for r in harness::cmd_compare(&cfg, &cfg.output_dir, cache.as_deref())? {
                println!(
                    "{:?} c_norm = {}: E = {:.5} after {:.1}s",
                    r.method, r.c_norm, r.final_error, r.wallclock_seconds
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
