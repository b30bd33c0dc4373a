//! `bvs`: run and compare variable-selection samplers from TOML configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bvs_core::experiment::{compare_samplers, run_experiment, ExperimentConfig, Reference};
use bvs_core::samplers::SamplerKind;
use bvs_core::BvsError;
use clap::{Args, Parser, Subcommand};

/// Environment variable naming the default output directory.
const OUTPUT_ENV: &str = "BVS_OUTPUT_DIR";
const FALLBACK_OUTPUT: &str = "bvs-output";

#[derive(Parser)]
#[command(name = "bvs", version, about = "Adaptive random-neighbourhood samplers for Bayesian variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config and $BVS_OUTPUT_DIR).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for the chains.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write pips.csv, trace.jsonl and summary.json.
    Run {
        config: PathBuf,
        /// Sampler (overrides the config): ads, asi, arn, arni, parni_rm, parni_kw.
        #[arg(long)]
        sampler: Option<SamplerKind>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several experiments on the same data and score them against a reference.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// `exact` for full enumeration, or a pips.csv from a long run.
        #[arg(long)]
        reference: Reference,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn output_dir(flag: Option<&PathBuf>, config: Option<&PathBuf>) -> PathBuf {
    flag.or(config)
        .cloned()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT))
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig, BvsError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.threads.is_some() {
        cfg.threads = o.threads;
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

fn execute(cli: Cli) -> Result<(), BvsError> {
    match cli.command {
        Command::Run {
            config,
            sampler,
            overrides,
        } => {
            let mut cfg = load(&config, &overrides)?;
            if let Some(s) = sampler {
                cfg.sampler = s;
            }
            let dir = output_dir(overrides.output_dir.as_ref(), cfg.output_dir.as_ref());
            let out = run_experiment(&cfg, &dir)?;
            println!(
                "{} n={} p={} acceptance={:.4} asjd={:.4} wall={:.2}s -> {}",
                cfg.sampler,
                out.data.n(),
                out.data.p(),
                out.output.acceptance_rate,
                out.output.mean_asjd,
                out.output.wall_time_s,
                dir.display()
            );
        }
        Command::Compare {
            configs,
            reference,
            overrides,
        } => {
            let cfgs = configs
                .iter()
                .map(|p| load(p, &overrides))
                .collect::<Result<Vec<_>, _>>()?;
            let dir = output_dir(overrides.output_dir.as_ref(), cfgs[0].output_dir.as_ref());
            let rows = compare_samplers(&cfgs, &reference, &dir)?;
            println!("{:<16} {:>12} {:>12} {:>10} {:>10}", "run", "mse_imp", "mse_unimp", "rel_imp", "rel_unimp");
            for r in rows {
                println!(
                    "{:<16} {:>12} {:>12} {:>10} {:>10}",
                    r.label,
                    fmt_opt(r.mse_important),
                    fmt_opt(r.mse_unimportant),
                    r.rel_important.map_or("-".into(), |v| format!("{v:.3}")),
                    r.rel_unimportant.map_or("-".into(), |v| format!("{v:.3}")),
                );
            }
            println!("comparison written to {}", dir.join("comparison.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
