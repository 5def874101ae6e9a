use std::path::PathBuf;
use std::process::ExitCode;

use barrier_rl_harness::config::{preset, ExperimentConfig};
use barrier_rl_harness::experiments::run_experiment;
use barrier_rl_harness::metrics::MetricsTable;
use barrier_rl_harness::{checks, HarnessError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "barrier-rl", about = "Barrier-certified adaptive RL experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a preset name or a TOML/JSON config file.
    Run {
        /// Preset (quadrotor-recovery, quadrotor-rl, unicycle-structure,
        /// oracle-equivalence) or a path to a config file.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Run the property and oracle verification suite.
    Verify {
        /// Run a single criterion (1-10).
        #[arg(long)]
        only: Option<usize>,
    },
    /// Column statistics of a metrics CSV.
    Summarize { csv: PathBuf },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode, HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            replicas,
        } => {
            let mut cfg: ExperimentConfig = match preset(&config) {
                Some(c) => c,
                None => ExperimentConfig::from_file(std::path::Path::new(&config))?,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o.to_string_lossy().into_owned();
            }
            if let Some(r) = replicas {
                cfg.replicas = r;
            }
            let artifacts = run_experiment(&cfg)?;
            for p in &artifacts.csv_paths {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", artifacts.summary_path.display());
            println!(
                "{}",
                serde_json::to_string_pretty(&artifacts.summary).expect("serializable")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { only } => {
            let results = match only {
                None => checks::run_all(),
                Some(1) => vec![checks::criterion_1_safety_recovery()],
                Some(2) => vec![checks::criterion_2_monotone_approximation()],
                Some(3) => vec![checks::criterion_3_forward_invariance()],
                Some(4) => vec![checks::criterion_4_gp_equivalence()],
                Some(5) => vec![checks::criterion_5_isometry()],
                Some(6) => vec![checks::criterion_6_certified_soundness()],
                Some(7) => vec![checks::criterion_7_solver_optimality()],
                Some(8) => vec![checks::criterion_8_structure_extraction()],
                Some(9) => vec![checks::criterion_9_value_learning()],
                Some(10) => vec![checks::criterion_10_micro_oracles()],
                Some(n) => {
                    return Err(HarnessError::Config(format!(
                        "no criterion {n}; valid range is 1-10"
                    )))
                }
            };
            let mut all_pass = true;
            for r in &results {
                println!("{}", r.line());
                all_pass &= r.pass;
            }
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Summarize { csv } => {
            let table = MetricsTable::read_csv(&csv)?;
            println!("{} rows, {} columns", table.rows().len(), table.header().len());
            for name in table.header().to_vec() {
                let col = table.column(&name).expect("header column");
                let vals: Vec<f64> = col.into_iter().flatten().collect();
                if vals.is_empty() {
                    println!("{name:>24}: (empty)");
                    continue;
                }
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                println!("{name:>24}: n={} min={min:.6} mean={mean:.6} max={max:.6}", vals.len());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
