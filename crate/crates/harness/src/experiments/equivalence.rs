//! Oracle-equivalence experiment: on random transition datasets, the
//! difference-matrix GP posterior and the paired-kernel GP posterior must
//! produce the same mean and variance at every query point.

use barrier_rl::gpbaseline::{gp_sarsa_posterior, psi_route_posterior, GpSarsaState};
use barrier_rl::kernels::KernelSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::OracleEquivalenceCfg;
use crate::metrics::MetricsTable;

#[derive(Debug, Clone)]
pub struct EquivalenceOutcome {
    pub table: MetricsTable,
    pub max_mean_err: f64,
    pub max_var_err: f64,
    pub datasets: usize,
}

pub const EQUIVALENCE_HEADER: [&str; 5] =
    ["dataset", "transitions", "gamma", "max_mean_err", "max_var_err"];

pub fn equivalence_core(cfg: &OracleEquivalenceCfg, seed: u64) -> EquivalenceOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q_kernel = KernelSpec::tensor(KernelSpec::gaussian(3.0, 2), KernelSpec::control_offset(), 2);
    let mut table = MetricsTable::new(&EQUIVALENCE_HEADER);
    let mut max_mean_err = 0.0f64;
    let mut max_var_err = 0.0f64;
    for d in 0..cfg.datasets {
        let gamma = cfg.gammas[d % cfg.gammas.len()];
        let n_d = rng.gen_range(2..=cfg.max_transitions);
        let inputs: Vec<Vec<f64>> = (0..=n_d)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let rewards: Vec<f64> = (0..n_d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let state = GpSarsaState::new(inputs, rewards, cfg.noise_var, q_kernel.clone(), gamma)
            .expect("sized above minimum");
        let mut mean_err = 0.0f64;
        let mut var_err = 0.0f64;
        for _ in 0..cfg.queries {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (m1, v1) = gp_sarsa_posterior(&state, &z).expect("solvable system");
            let (m2, v2) = psi_route_posterior(&state, &z).expect("solvable system");
            mean_err = mean_err.max((m1 - m2).abs());
            var_err = var_err.max((v1 - v2).abs());
        }
        max_mean_err = max_mean_err.max(mean_err);
        max_var_err = max_var_err.max(var_err);
        table.push(vec![
            Some(d as f64),
            Some(n_d as f64),
            Some(gamma),
            Some(mean_err),
            Some(var_err),
        ]);
    }
    EquivalenceOutcome {
        table,
        max_mean_err,
        max_var_err,
        datasets: cfg.datasets,
    }
}
