//! Experiment dispatch: replica fan-out with split RNG streams, CSV
//! emission, and JSON summaries.

pub mod equivalence;
pub mod quadrotor_rl;
pub mod recovery;
pub mod unicycle;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::HarnessError;

pub use equivalence::equivalence_core;
pub use quadrotor_rl::{evaluate_policy_value, quadrotor_rl_core, rollout_horizon, PolicyEvaluation, RlOutcome};
pub use recovery::{recovery_core, RecoveryLearner, RecoveryOutcome};
pub use unicycle::{unicycle_core, UnicycleOutcome};

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub csv_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: serde_json::Value,
}

/// Replica seeds derived by stream splitting, so results do not depend on
/// how replicas are scheduled across workers.
pub fn replica_rng_seed(master: u64, replica: u64) -> u64 {
    // SplitMix64 step keyed by the replica index.
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(replica.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    cfg.validate()?;
    let out_dir = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Io(format!("create {}: {e}", out_dir.display())))?;
    let name = cfg.kind.name();
    let mut csv_paths = Vec::new();
    let summary: serde_json::Value = match &cfg.kind {
        ExperimentKind::QuadrotorRecovery(c) => {
            let adaptive = recovery_core(c, cfg.seed, RecoveryLearner::Adaptive);
            let bayes = recovery_core(c, cfg.seed, RecoveryLearner::BayesLinear);
            let p_adaptive = out_dir.join(format!("{name}-adaptive.csv"));
            let p_bayes = out_dir.join(format!("{name}-bayes.csv"));
            adaptive.table.write_csv(&p_adaptive)?;
            bayes.table.write_csv(&p_bayes)?;
            csv_paths.push(p_adaptive);
            csv_paths.push(p_bayes);
            json!({
                "experiment": name,
                "seed": cfg.seed,
                "adaptive": recovery_summary(&adaptive),
                "bayes_linear": recovery_summary(&bayes),
            })
        }
        ExperimentKind::QuadrotorRl(c) => {
            let outcomes: Vec<(usize, RlOutcome)> = (0..cfg.replicas)
                .into_par_iter()
                .map(|r| {
                    (
                        r,
                        quadrotor_rl_core(c, replica_rng_seed(cfg.seed, r as u64)),
                    )
                })
                .collect();
            let mut replicas = Vec::new();
            for (r, out) in &outcomes {
                let p = out_dir.join(format!("{name}-r{r}.csv"));
                out.table.write_csv(&p)?;
                csv_paths.push(p);
                replicas.push(rl_summary(out));
            }
            let values: Vec<f64> = outcomes
                .iter()
                .flat_map(|(_, o)| o.evaluations.iter().map(|e| e.value))
                .collect();
            json!({
                "experiment": name,
                "seed": cfg.seed,
                "replicas": replicas,
                "value_mean": mean(&values),
                "value_std": std_dev(&values),
            })
        }
        ExperimentKind::UnicycleStructure(c) => {
            let out = unicycle_core(c, cfg.seed);
            let p = out_dir.join(format!("{name}.csv"));
            out.table.write_csv(&p)?;
            csv_paths.push(p);
            json!({
                "experiment": name,
                "seed": cfg.seed,
                "p_over_g_l1_ratio": out.p_over_g,
                "deadlock_overrides": out.deadlock_overrides,
                "total_atoms": out.total_atoms,
                "per_dim": out.report.per_dim,
            })
        }
        ExperimentKind::OracleEquivalence(c) => {
            let out = equivalence_core(c, cfg.seed);
            let p = out_dir.join(format!("{name}.csv"));
            out.table.write_csv(&p)?;
            csv_paths.push(p);
            json!({
                "experiment": name,
                "seed": cfg.seed,
                "datasets": out.datasets,
                "max_mean_err": out.max_mean_err,
                "max_var_err": out.max_var_err,
                "tolerance": c.tolerance,
                "pass": out.max_mean_err <= c.tolerance && out.max_var_err <= c.tolerance,
            })
        }
    };
    let summary_path = out_dir.join(format!("{name}-summary.json"));
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("serializable summary") + "\n",
    )
    .map_err(|e| HarnessError::Io(format!("write summary: {e}")))?;
    Ok(RunArtifacts {
        csv_paths,
        summary_path,
        summary,
    })
}

fn recovery_summary(out: &RecoveryOutcome) -> serde_json::Value {
    json!({
        "reentry_steps_after_switch": out.reentry_steps,
        "min_b_final_5000": out.min_b_final,
        "monotone_violations": out.monotone_violations,
        "dist_to_true_params_at_end": out.dist_at_end,
        "uncertified_steps": out.fallback_steps,
    })
}

fn rl_summary(out: &RlOutcome) -> serde_json::Value {
    #[derive(Serialize)]
    struct Eval {
        start_position: f64,
        value: f64,
        final_abs_position: f64,
    }
    json!({
        "nmse_at_1000": out.nmse_at_1000,
        "nmse_at_end_of_learning": out.nmse_at_end_of_learning,
        "fallback_steps": out.fallback_steps,
        "final_dictionary_size": out.final_dictionary_size,
        "eval_horizon": out.eval_horizon,
        "evaluations": out
            .evaluations
            .iter()
            .map(|e| Eval {
                start_position: e.start_position,
                value: e.value,
                final_abs_position: e.final_abs_position,
            })
            .collect::<Vec<_>>(),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
