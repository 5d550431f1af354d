use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grawa_cli::config::RunConfig;
use grawa_cli::protocols::{convex_rate, flatness_cmp, sweep, vincent};
use grawa_core::{Error, Policy, Result};

/// Desk-scale laboratory for gradient-norm-weighted distributed training.
#[derive(Parser)]
#[command(name = "grawa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run described by a JSON config file.
    Run {
        /// Run config (see configs/ for samples).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's per-worker step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Four-corner trajectory comparison on the Vincent surface.
    Vincent {
        #[command(flatten)]
        out: OutArg,
        /// Policy to include (repeatable); defaults to the five
        /// parameter-sharing policies.
        #[arg(long = "policy")]
        policies: Vec<String>,
        /// Seed to include (repeatable); defaults to 1 2 3.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Per-worker step budget.
        #[arg(long, default_value_t = vincent::DEFAULT_TOTAL_STEPS)]
        steps: u64,
    },
    /// Suboptimality-decay slope on a noisy strongly convex quadratic.
    ConvexRate {
        /// Optional JSON config overriding the probe defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train several policies on the spiral classifier and compare
    /// flatness metrics.
    Flatness {
        /// Optional JSON config overriding the comparison defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
        /// Policy to include (repeatable); overrides the config list.
        #[arg(long = "policy")]
        policies: Vec<String>,
        /// Seed to include (repeatable); overrides the config list.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Override the per-worker step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Grid sweep over policies/seeds (and optionally lambda/tau).
    Sweep {
        /// Sweep config: a template run plus the grid axes.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

fn parse_policies(names: &[String]) -> Result<Vec<Policy>> {
    names.iter().map(|n| Policy::parse(n)).collect()
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            steps,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            let out_dir = cfg
                .out_dir
                .clone()
                .map(PathBuf::from)
                .unwrap_or_else(|| out.out.clone());
            let record = grawa_cli::cmd_run(&cfg, &out_dir)?;
            println!(
                "run complete: policy={} seed={} rounds={} final losses {:?}",
                record.summary.policy,
                record.summary.seed,
                record.summary.rounds,
                record.summary.final_worker_losses
            );
            println!("outputs in {}", out_dir.display());
            Ok(())
        }
        Command::Vincent {
            out,
            policies,
            seeds,
            steps,
        } => {
            let policies = if policies.is_empty() {
                vincent::DEFAULT_POLICIES.to_vec()
            } else {
                parse_policies(&policies)?
            };
            let seeds = if seeds.is_empty() { vec![1, 2, 3] } else { seeds };
            let report = vincent::run_protocol(&policies, &seeds, steps, Some(&out.out))?;
            for row in &report.rows {
                println!(
                    "{:<14} seed {:<3} converged={} center=({:.4}, {:.4}) curvature={:.3}",
                    row.policy, row.seed, row.all_converged, row.center_x, row.center_y,
                    row.curvature_score
                );
            }
            println!("report in {}", out.out.display());
            Ok(())
        }
        Command::ConvexRate { config, out } => {
            let cfg: convex_rate::ConvexRateConfig = match config {
                Some(path) => read_json_config(&path)?,
                None => Default::default(),
            };
            let report = convex_rate::run_probe(&cfg, Some(&out.out))?;
            match (report.slope, report.half_width) {
                (Some(s), Some(hw)) => {
                    println!("fitted slope {s:.4} +/- {hw:.4} over window {:?}", report.window)
                }
                _ => println!("run divergent; slope omitted"),
            }
            Ok(())
        }
        Command::Flatness {
            config,
            out,
            policies,
            seeds,
            steps,
        } => {
            let mut cfg: flatness_cmp::FlatnessConfig = match config {
                Some(path) => read_json_config(&path)?,
                None => Default::default(),
            };
            if !policies.is_empty() {
                cfg.policies = parse_policies(&policies)?;
            }
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            let report = flatness_cmp::run_comparison(&cfg, Some(&out.out))?;
            for row in &report.rows {
                println!(
                    "{:<14} seed {:<3} center: test_err={:.2}% gap={:.2} frobenius={:.3}",
                    row.policy,
                    row.seed,
                    row.center.test_err_pct,
                    row.center.generalization_gap,
                    row.center.frobenius_proxy
                );
            }
            Ok(())
        }
        Command::Sweep { config, out } => {
            let cfg: sweep::SweepConfig = read_json_config(&config)?;
            let rows = sweep::run_sweep(&cfg, &out.out)?;
            println!("{} runs indexed in {}", rows.len(), out.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
