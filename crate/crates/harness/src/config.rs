//! Experiment configuration: serde-backed config files (TOML or JSON),
//! shipped presets, and the named barrier sets.

use barrier_rl::adafilter::ApfbsConfig;
use barrier_rl::barrier::{BarrierFn, BarrierSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicas: usize,
    pub out_dir: String,
    #[serde(flatten)]
    pub kind: ExperimentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentKind {
    QuadrotorRecovery(QuadrotorRecoveryCfg),
    QuadrotorRl(QuadrotorRlCfg),
    UnicycleStructure(UnicycleStructureCfg),
    OracleEquivalence(OracleEquivalenceCfg),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::QuadrotorRecovery(_) => "quadrotor-recovery",
            ExperimentKind::QuadrotorRl(_) => "quadrotor-rl",
            ExperimentKind::UnicycleStructure(_) => "unicycle-structure",
            ExperimentKind::OracleEquivalence(_) => "oracle-equivalence",
        }
    }
}

/// Raw APFBS numbers as they appear in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApfbsCfg {
    pub step: f64,
    pub window: usize,
    pub l1_weight: f64,
    pub slab_halfwidth: f64,
    pub novelty_threshold: f64,
}

impl ApfbsCfg {
    pub fn build(&self) -> ApfbsConfig {
        ApfbsConfig::new(
            self.step,
            self.window,
            self.l1_weight,
            self.slab_halfwidth,
            self.novelty_threshold,
        )
    }

    fn validate(&self, what: &str) -> Result<(), HarnessError> {
        if !(self.step > 0.0 && self.step < 2.0) {
            return Err(HarnessError::Config(format!(
                "{what}: step size must lie in (0,2), got {}",
                self.step
            )));
        }
        if self.window == 0 {
            return Err(HarnessError::Config(format!("{what}: window must be positive")));
        }
        if self.l1_weight < 0.0 || self.slab_halfwidth < 0.0 || self.novelty_threshold < 0.0 {
            return Err(HarnessError::Config(format!("{what}: negative parameter")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorRecoveryCfg {
    pub steps: u64,
    pub switch_at: u64,
    pub switch_to: [f64; 3],
    /// Step size of the adaptive parametric tracker.
    pub learner_step: f64,
    pub eta: f64,
    pub rho1: f64,
    pub barrier_preset: String,
    pub bayes_noise_var: f64,
    pub bayes_prior_var: f64,
    /// Steps allowed for the position to re-enter the safe interval.
    pub recovery_window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorRlCfg {
    pub steps: u64,
    pub switch_at: u64,
    pub switch_to: [f64; 3],
    pub model_step: f64,
    pub eta: f64,
    pub rho1: f64,
    pub barrier_preset: String,
    pub q_apfbs: ApfbsCfg,
    pub q_r_max: usize,
    pub q_sigmas: Vec<f64>,
    pub gamma: f64,
    pub policy_period: u64,
    pub exploration_steps: u64,
    /// Greedy continuation after learning stops, with relocations.
    pub greedy_tail_steps: u64,
    pub relocation_steps: Vec<u64>,
    pub eval_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicycleStructureCfg {
    pub steps: u64,
    pub apfbs: ApfbsCfg,
    pub r_max: usize,
    pub sigmas: Vec<f64>,
    pub tau_p: f64,
    pub eta: f64,
    pub upsilon: f64,
    pub rho1: f64,
    pub xy_max: f64,
    pub k_v: f64,
    pub k_omega: f64,
    pub dt: f64,
    pub u_max: f64,
    pub deadlock_window: usize,
    pub deadlock_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEquivalenceCfg {
    pub datasets: usize,
    pub max_transitions: usize,
    pub gammas: Vec<f64>,
    pub queries: usize,
    pub noise_var: f64,
    pub tolerance: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replicas == 0 {
            return Err(HarnessError::Config("replicas must be at least 1".into()));
        }
        match &self.kind {
            ExperimentKind::QuadrotorRecovery(c) => {
                if c.switch_at >= c.steps {
                    return Err(HarnessError::Config(
                        "switch_at must fall before the end of the run".into(),
                    ));
                }
                if !(c.learner_step > 0.0 && c.learner_step < 2.0) {
                    return Err(HarnessError::Config("learner_step must lie in (0,2)".into()));
                }
                barrier_preset(&c.barrier_preset, c.eta, c.rho1)?;
            }
            ExperimentKind::QuadrotorRl(c) => {
                c.q_apfbs.validate("q_apfbs")?;
                if !(c.gamma > 0.0 && c.gamma < 1.0) {
                    return Err(HarnessError::Config("gamma must lie in (0,1)".into()));
                }
                if c.policy_period == 0 {
                    return Err(HarnessError::Config("policy_period must be positive".into()));
                }
                if c.q_sigmas.is_empty() {
                    return Err(HarnessError::Config("q_sigmas must not be empty".into()));
                }
                barrier_preset(&c.barrier_preset, c.eta, c.rho1)?;
            }
            ExperimentKind::UnicycleStructure(c) => {
                c.apfbs.validate("apfbs")?;
                if c.sigmas.is_empty() {
                    return Err(HarnessError::Config("sigmas must not be empty".into()));
                }
                if c.xy_max <= 0.0 || c.u_max <= 0.0 || c.dt <= 0.0 {
                    return Err(HarnessError::Config("unicycle geometry must be positive".into()));
                }
            }
            ExperimentKind::OracleEquivalence(c) => {
                if c.datasets == 0 || c.max_transitions < 2 || c.queries == 0 {
                    return Err(HarnessError::Config("equivalence sizes must be positive".into()));
                }
                for g in &c.gammas {
                    if !(*g > 0.0 && *g < 1.0) {
                        return Err(HarnessError::Config("gammas must lie in (0,1)".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let parsed: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("bad JSON config: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("bad TOML config: {e}")))?
        };
        parsed.validate()?;
        Ok(parsed)
    }
}

/// Barrier sets loadable by name from experiment configs.
pub fn barrier_preset(name: &str, eta: f64, rho1: f64) -> Result<Vec<BarrierSpec>, HarnessError> {
    match name {
        "quadrotor_box" => Ok(quadrotor_box(eta, rho1)),
        "unicycle_oriented_box" => Ok(unicycle_oriented_box(eta, rho1, 1.2, 0.1)),
        "quadratic_ball" => Ok(vec![BarrierSpec::new(
            BarrierFn::QuadraticBall {
                center: vec![0.0, 0.0],
                radius_sq: 1.0,
            },
            eta,
        )
        .with_rho1(rho1)]),
        other => Err(HarnessError::Config(format!("unknown barrier preset '{other}'"))),
    }
}

/// `B_t = 3 − x`, `B_b = x + 3` on the quadrotor state `[x, ẋ]`.
pub fn quadrotor_box(eta: f64, rho1: f64) -> Vec<BarrierSpec> {
    vec![
        BarrierSpec::new(
            BarrierFn::Affine {
                normal: vec![-1.0, 0.0],
                offset: 3.0,
            },
            eta,
        )
        .with_rho1(rho1),
        BarrierSpec::new(
            BarrierFn::Affine {
                normal: vec![1.0, 0.0],
                offset: 3.0,
            },
            eta,
        )
        .with_rho1(rho1),
    ]
}

/// The four orientation-augmented box faces for a forward-only planar
/// agent with state `[x, y, θ]`.
pub fn unicycle_oriented_box(eta: f64, rho1: f64, xy_max: f64, upsilon: f64) -> Vec<BarrierSpec> {
    let faces = [
        ([-1.0, 0.0], xy_max),
        ([1.0, 0.0], xy_max),
        ([0.0, -1.0], xy_max),
        ([0.0, 1.0], xy_max),
    ];
    faces
        .into_iter()
        .map(|(normal_xy, offset)| {
            BarrierSpec::new(
                BarrierFn::Oriented {
                    normal_xy,
                    offset,
                    upsilon,
                },
                eta,
            )
            .with_rho1(rho1)
        })
        .collect()
}

/// Named, ready-to-run configurations mirroring the reference
/// experiments at desk scale.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let kind = match name {
        "quadrotor-recovery" => ExperimentKind::QuadrotorRecovery(QuadrotorRecoveryCfg {
            steps: 10_000,
            switch_at: 1_000,
            switch_to: [1.0, 9.81, 5.0 / 0.027],
            learner_step: 0.6,
            eta: 0.01,
            rho1: 1e-3,
            barrier_preset: "quadrotor_box".into(),
            bayes_noise_var: 0.01,
            bayes_prior_var: 25.0,
            recovery_window: 500,
        }),
        "quadrotor-rl" => ExperimentKind::QuadrotorRl(QuadrotorRlCfg {
            steps: 10_000,
            switch_at: 2_500,
            switch_to: [1.0, 11.81, 0.9 / 0.027],
            model_step: 0.6,
            eta: 0.01,
            rho1: 1e-3,
            barrier_preset: "quadrotor_box".into(),
            q_apfbs: ApfbsCfg {
                step: 0.1,
                window: 5,
                l1_weight: 0.01,
                slab_halfwidth: 0.2,
                novelty_threshold: 0.1,
            },
            q_r_max: 600,
            q_sigmas: vec![50.0, 30.0, 10.0, 5.0, 2.0, 1.0],
            gamma: 0.9,
            policy_period: 1_000,
            exploration_steps: 10_000,
            greedy_tail_steps: 5_000,
            relocation_steps: vec![11_000, 12_000, 13_000, 14_000],
            eval_starts: 5,
        }),
        "unicycle-structure" => ExperimentKind::UnicycleStructure(UnicycleStructureCfg {
            steps: 1_000,
            apfbs: ApfbsCfg {
                step: 0.3,
                window: 5,
                l1_weight: 1e-4,
                slab_halfwidth: 1e-3,
                novelty_threshold: 0.1,
            },
            r_max: 500,
            sigmas: vec![10.0, 5.0, 2.0, 1.0, 0.5, 0.2],
            tau_p: 0.1,
            eta: 0.1,
            upsilon: 0.1,
            rho1: 1e-3,
            xy_max: 1.2,
            k_v: 0.5,
            k_omega: 2.0,
            dt: 0.3,
            u_max: 0.623,
            deadlock_window: 10,
            deadlock_threshold: 1e-3,
        }),
        "oracle-equivalence" => ExperimentKind::OracleEquivalence(OracleEquivalenceCfg {
            datasets: 50,
            max_transitions: 30,
            gammas: vec![0.5, 0.9, 0.99],
            queries: 10,
            noise_var: 1e-4,
            tolerance: 1e-8,
        }),
        _ => return None,
    };
    Some(ExperimentConfig {
        seed: 7,
        replicas: 1,
        out_dir: "runs".into(),
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_all_validate() {
        for name in [
            "quadrotor-recovery",
            "quadrotor-rl",
            "unicycle-structure",
            "oracle-equivalence",
        ] {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.kind.name(), name);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn toml_and_json_roundtrip() {
        let cfg = preset("quadrotor-rl").unwrap();
        let toml_text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&toml_text).unwrap();
        assert_eq!(back, cfg);
        let json_text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json_text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = preset("quadrotor-recovery").unwrap();
        if let ExperimentKind::QuadrotorRecovery(ref mut c) = cfg.kind {
            c.switch_at = 20_000;
        }
        assert!(cfg.validate().is_err());

        let mut cfg = preset("quadrotor-rl").unwrap();
        if let ExperimentKind::QuadrotorRl(ref mut c) = cfg.kind {
            c.barrier_preset = "missing".into();
        }
        assert!(cfg.validate().is_err());
    }
}
