//! Full certified reinforcement learning on the quadrotor: parametric
//! model tracking plus paired-kernel value learning under certified
//! random exploration, a mid-run dynamics switch, a greedy continuation
//! with scheduled relocations, and final policy evaluations from uniform
//! starts.

use barrier_rl::adafilter::ApfbsConfig;
use barrier_rl::barrier::BarrierSpec;
use barrier_rl::envs::{
    quadrotor_basis, QuadrotorEnv, Relocation, RewardSpec, QUADROTOR_U_MAX,
};
use barrier_rl::structmodel::{BasisFn, DynamicsLearner, ParametricModel};
use barrier_rl::valuerl::{algorithm1_step, Agent, AgentConfig, CertifiedDriver, GreedyPolicy, QKernelSpec, QModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::config::{barrier_preset, QuadrotorRlCfg};
use crate::metrics::{MetricsTable, NmseTracker};

#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub start_position: f64,
    pub value: f64,
    pub final_abs_position: f64,
    pub fallback_steps: u64,
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub table: MetricsTable,
    pub nmse_at_1000: Option<f64>,
    pub nmse_at_end_of_learning: Option<f64>,
    pub evaluations: Vec<PolicyEvaluation>,
    /// Steps that emitted an uncertified input (empty safe set).
    pub fallback_steps: u64,
    pub final_dictionary_size: usize,
    pub eval_horizon: usize,
    /// The policy obtained at the end of learning, and the model it is
    /// certified against; both are checkpointable.
    pub final_policy: GreedyPolicy,
    pub dynamics: DynamicsLearner,
}

pub const RL_HEADER: [&str; 16] = [
    "n",
    "x",
    "xdot",
    "u",
    "reward",
    "b_top",
    "b_bottom",
    "margin_top",
    "margin_bottom",
    "nmse",
    "dist_h",
    "dict_size",
    "event_switch",
    "event_relocation",
    "event_policy_update",
    "event_fallback",
];

/// Truncated-rollout horizon with `γ^H · R_max < 1e-6`.
pub fn rollout_horizon(gamma: f64, r_max: f64) -> usize {
    ((r_max / 1e-6).ln() / (1.0 / gamma).ln()).ceil() as usize
}

pub fn quadrotor_rl_core(cfg: &QuadrotorRlCfg, seed: u64) -> RlOutcome {
    let mut env = QuadrotorEnv::nominal();
    env.switches = vec![(cfg.switch_at, cfg.switch_to)];
    env.relocations = cfg
        .relocation_steps
        .iter()
        .map(|&n| (n, Relocation::UniformPosition { lo: -3.0, hi: 3.0 }))
        .collect();
    let barriers =
        barrier_preset(&cfg.barrier_preset, cfg.eta, cfg.rho1).expect("validated config");
    let driver = CertifiedDriver {
        barriers,
        bounds: vec![(-QUADROTOR_U_MAX, 0.0)],
    };
    let dt = env.dt;
    let basis: BasisFn = Arc::new(move |x, u| quadrotor_basis(dt, x, u[0]));
    let dynamics = DynamicsLearner::Parametric {
        model: ParametricModel::new(vec![0.0; 3], cfg.model_step, basis),
        input_dim: 1,
    };
    let qspec = QKernelSpec::gaussian_ladder(&cfg.q_sigmas, cfg.gamma, 2, 1);
    let q_apfbs: ApfbsConfig = cfg.q_apfbs.build();
    let qmodel = QModel::new(qspec, cfg.q_r_max, q_apfbs.window);
    let mut agent = Agent::new(
        dynamics,
        qmodel,
        AgentConfig {
            apfbs: q_apfbs,
            policy_period: cfg.policy_period,
            exploration_steps: cfg.exploration_steps,
            prune_each_step: true,
        },
    );
    let reward = RewardSpec::QuadrotorHover;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracker = NmseTracker::default();
    let mut table = MetricsTable::new(&RL_HEADER);
    let mut fallback_steps = 0u64;
    let mut nmse_at_1000 = None;
    let mut nmse_latest = None;

    for n in 0..cfg.steps {
        let events = env.apply_schedule(n, &mut rng);
        let log = algorithm1_step(&mut env, &mut agent, &driver, &reward, n, &mut rng)
            .expect("loop step cannot fail on consistent dimensions");
        if log.fallback {
            fallback_steps += 1;
        }
        let nmse = tracker.push(log.bellman_sample.0, log.bellman_sample.1);
        nmse_latest = nmse.or(nmse_latest);
        if n == 1_000 {
            nmse_at_1000 = nmse;
        }
        let dist_h = agent
            .dynamics
            .coefficients()
            .map(|c| (c - nalgebra::DVector::from_vec(env.h_star.to_vec())).norm());
        table.push(vec![
            Some(n as f64),
            Some(log.state[0]),
            Some(log.state[1]),
            Some(log.input[0]),
            Some(log.reward),
            Some(log.barrier_values[0]),
            Some(log.barrier_values[1]),
            Some(log.margins[0]),
            Some(log.margins[1]),
            nmse,
            dist_h,
            Some(agent.qmodel.filter.dict.len() as f64),
            Some(if events.switched { 1.0 } else { 0.0 }),
            Some(if events.relocated { 1.0 } else { 0.0 }),
            Some(if log.policy_updated { 1.0 } else { 0.0 }),
            Some(if log.fallback { 1.0 } else { 0.0 }),
        ]);
    }

    // Learning stops; the policy obtained at the end of learning drives a
    // greedy continuation through the scheduled relocations.
    let policy = agent.qmodel.improve_policy();
    for n in cfg.steps..cfg.steps + cfg.greedy_tail_steps {
        let events = env.apply_schedule(n, &mut rng);
        let x = env.state().to_vec();
        let problem = driver.problem_at(&x, &agent.dynamics);
        let d = policy.act(&problem).expect("policy act");
        if d.fallback {
            fallback_steps += 1;
        }
        let b_vals: Vec<f64> = driver.barriers.iter().map(|b| b.barrier.eval(&x)).collect();
        let margins: Vec<f64> = driver
            .barriers
            .iter()
            .map(|b| problem.certified_margin(b, &d.input))
            .collect();
        let r = reward.eval(&x, &d.input);
        env.step(d.input[0]);
        table.push(vec![
            Some(n as f64),
            Some(x[0]),
            Some(x[1]),
            Some(d.input[0]),
            Some(r),
            Some(b_vals[0]),
            Some(b_vals[1]),
            Some(margins[0]),
            Some(margins[1]),
            None,
            None,
            Some(agent.qmodel.filter.dict.len() as f64),
            Some(if events.switched { 1.0 } else { 0.0 }),
            Some(if events.relocated { 1.0 } else { 0.0 }),
            Some(0.0),
            Some(if d.fallback { 1.0 } else { 0.0 }),
        ]);
    }

    let horizon = rollout_horizon(cfg.gamma, reward.magnitude_bound());
    let starts: Vec<f64> = (0..cfg.eval_starts)
        .map(|_| rng.gen_range(-3.0..3.0))
        .collect();
    let evaluations = evaluate_policy_value(
        &env,
        &agent.dynamics,
        &policy,
        &driver.barriers,
        &driver.bounds,
        &reward,
        &starts,
        cfg.gamma,
        horizon,
    );

    RlOutcome {
        table,
        nmse_at_1000,
        nmse_at_end_of_learning: nmse_latest,
        evaluations,
        fallback_steps,
        final_dictionary_size: agent.qmodel.filter.dict.len(),
        eval_horizon: horizon,
        final_policy: policy,
        dynamics: agent.dynamics,
    }
}

/// Truncated discounted returns of a certified greedy policy from the
/// given start positions (velocity zero), under the environment's current
/// dynamics.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy_value(
    env_template: &QuadrotorEnv,
    dynamics: &DynamicsLearner,
    policy: &GreedyPolicy,
    barriers: &[BarrierSpec],
    bounds: &[(f64, f64)],
    reward: &RewardSpec,
    starts: &[f64],
    gamma: f64,
    horizon: usize,
) -> Vec<PolicyEvaluation> {
    let driver = CertifiedDriver {
        barriers: barriers.to_vec(),
        bounds: bounds.to_vec(),
    };
    starts
        .iter()
        .map(|&x0| {
            let mut env = env_template.clone();
            env.switches.clear();
            env.relocations.clear();
            env.state = [x0, 0.0];
            let mut value = 0.0;
            let mut discount = 1.0;
            let mut fallback_steps = 0u64;
            for _ in 0..horizon {
                let x = env.state().to_vec();
                let problem = driver.problem_at(&x, dynamics);
                let d = policy.act(&problem).expect("policy act");
                if d.fallback {
                    fallback_steps += 1;
                }
                value += discount * reward.eval(&x, &d.input);
                discount *= gamma;
                env.step(d.input[0]);
            }
            PolicyEvaluation {
                start_position: x0,
                value,
                final_abs_position: env.state()[0].abs(),
                fallback_steps,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_bounds_truncation_error() {
        let h = rollout_horizon(0.9, 12.0);
        assert!(0.9f64.powi(h as i32) * 12.0 < 1e-6);
        assert!(0.9f64.powi(h as i32 - 1) * 12.0 >= 1e-6);
    }

    #[test]
    fn constant_reward_matches_geometric_series() {
        // With R ≡ c every policy yields c·(1−γ^H)/(1−γ).
        let env = QuadrotorEnv::nominal();
        let dt = env.dt;
        let basis: BasisFn = Arc::new(move |x, u| quadrotor_basis(dt, x, u[0]));
        let dynamics = DynamicsLearner::Parametric {
            model: ParametricModel::new(vec![1.0, 9.81, 1.0 / 0.027], 0.6, basis),
            input_dim: 1,
        };
        let qspec = QKernelSpec::gaussian_ladder(&[1.0], 0.9, 2, 1);
        let policy = QModel::new(qspec, 10, 1).improve_policy();
        let reward = RewardSpec::Constant(12.0);
        let evals = evaluate_policy_value(
            &env,
            &dynamics,
            &policy,
            &crate::config::quadrotor_box(0.01, 0.0),
            &[(-QUADROTOR_U_MAX, 0.0)],
            &reward,
            &[0.0],
            0.9,
            200,
        );
        let expect = 12.0 * (1.0 - 0.9f64.powi(200)) / (1.0 - 0.9);
        assert!((evals[0].value - expect).abs() < 1e-9);
        assert!((evals[0].value - 120.0).abs() < 1e-5);
        // Zero reward: zero value.
        let evals = evaluate_policy_value(
            &env,
            &dynamics,
            &policy,
            &crate::config::quadrotor_box(0.01, 0.0),
            &[(-QUADROTOR_U_MAX, 0.0)],
            &RewardSpec::Constant(0.0),
            &[0.0],
            0.9,
            200,
        );
        assert_eq!(evals[0].value, 0.0);
    }
}
