//! The verification suite: every acceptance criterion as a pinned,
//! seeded check. `barrier-rl verify` runs these, and the `acceptance`
//! integration test asserts them one by one.

use std::time::Instant;

use barrier_rl::adafilter::{project_hyperslab, soft_threshold, ApfbsConfig, FilterState, TransitionWindow};
use barrier_rl::barrier::{
    dcbf_residual, sample_safe_input, solve_safe_control, BarrierError, BarrierFn, BarrierSpec,
    SafeInputProblem,
};
use barrier_rl::envs::QuadrotorEnv;
use barrier_rl::kernels::{gram_matrix, min_eigenvalue, KernelSpec};
use barrier_rl::structmodel::{Block, DimConfig, DimKernels, StructuredConfig, StructuredModel};
use barrier_rl::valuerl::{rkhs_norms, QKernelSpec, QModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{preset, ExperimentKind};
use crate::experiments::{equivalence_core, quadrotor_rl_core, recovery_core, RecoveryLearner};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub details: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {:<24} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.details
        )
    }
}

fn result(id: usize, name: &'static str, pass: bool, details: String) -> CheckResult {
    CheckResult {
        id,
        name,
        pass,
        details,
    }
}

/// Criterion 1: after an abrupt gain switch, the adaptive learner brings
/// the quadrotor back and keeps it safe, with monotone parameter
/// tracking; the Bayesian baseline under the identical schedule does not
/// manage all three.
pub fn criterion_1_safety_recovery() -> CheckResult {
    let started = Instant::now();
    let ExperimentKind::QuadrotorRecovery(cfg) = preset("quadrotor-recovery").unwrap().kind else {
        unreachable!()
    };
    let adaptive = recovery_core(&cfg, 7, RecoveryLearner::Adaptive);
    let bayes = recovery_core(&cfg, 7, RecoveryLearner::BayesLinear);
    let elapsed = started.elapsed().as_secs_f64();

    let a_reentry = adaptive.reentry_steps.is_some_and(|k| k <= cfg.recovery_window);
    let a_safe_tail = adaptive.min_b_final >= 0.0;
    let a_monotone = adaptive.monotone_violations == 0;
    let b_reentry = bayes.reentry_steps.is_some_and(|k| k <= cfg.recovery_window);
    let b_safe_tail = bayes.min_b_final >= 0.0;
    let b_monotone = bayes.monotone_violations == 0;
    let baseline_fails = !(b_reentry && b_safe_tail && b_monotone);
    let in_time = elapsed <= 60.0;
    let pass = a_reentry && a_safe_tail && a_monotone && baseline_fails && in_time;
    result(
        1,
        "safety-recovery",
        pass,
        format!(
            "adaptive: reentry {:?} steps, min B(final 5000) {:.3e}, monotone violations {}; \
             bayes: reentry {:?}, min B {:.3e}, violations {}; {:.1}s",
            adaptive.reentry_steps,
            adaptive.min_b_final,
            adaptive.monotone_violations,
            bayes.reentry_steps,
            bayes.min_b_final,
            bayes.monotone_violations,
            elapsed
        ),
    )
}

/// Criterion 2: ten thousand windowed projection updates on data
/// consistent with a fixed sparse parameter never move the estimate away
/// from it.
pub fn criterion_2_monotone_approximation() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let centers: Vec<f64> = (0..15).map(|i| i as f64 * 0.3 - 2.1).collect();
    let mut target = FilterState::new(vec![KernelSpec::gaussian(1.0, 1)], 100);
    for (i, &c) in centers.iter().enumerate() {
        let coeff = if i % 3 == 0 { rng.gen_range(-1.0..1.0) } else { 0.0 };
        target.push_atom(0, vec![c], coeff);
    }
    let mut state = FilterState::new(vec![KernelSpec::gaussian(1.0, 1)], 100);
    for &c in &centers {
        state.push_atom(0, vec![c], 0.0);
    }
    let cfg = ApfbsConfig::new(0.7, 5, 0.0, 0.0, 0.1);
    let mut window = TransitionWindow::new(5);
    let dist = |s: &FilterState| -> f64 {
        s.coeffs
            .iter()
            .zip(&target.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut violations = 0u64;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let z = vec![rng.gen_range(-2.5..2.5)];
        let delta = target.predict(&z).unwrap();
        window.push(z, delta);
        let before = dist(&state);
        state.apfbs_update(&window, &cfg).unwrap();
        let after = dist(&state);
        if after > before + 1e-12 {
            violations += 1;
            worst = worst.max(after - before);
        }
    }
    result(
        2,
        "monotone-approximation",
        violations == 0,
        format!(
            "violations {violations} over 10000 updates (worst growth {worst:.2e}); final distance {:.2e}",
            dist(&state)
        ),
    )
}

/// Criterion 3: with the exact model, certified random exploration keeps
/// the barrier nonnegative over 1e5 steps, and from outside the safe set
/// the barrier recovers at least geometrically.
pub fn criterion_3_forward_invariance() -> CheckResult {
    let started = Instant::now();
    let eta = 0.01;
    let barriers = crate::config::quadrotor_box(eta, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // On an empty certified set the least-violating input is emitted
    // instead (for this plant that is maximum braking); such steps are
    // counted but the invariance assertion is on B alone.
    let certified_or_witness = |problem: &SafeInputProblem,
                                rng: &mut ChaCha8Rng,
                                infeasible: &mut u64|
     -> f64 {
        match sample_safe_input(problem, rng) {
            Ok(s) => s.input[0],
            Err(BarrierError::Infeasible { witness, .. }) => {
                *infeasible += 1;
                witness[0]
            }
            Err(BarrierError::Dimension(d)) => panic!("driver mismatch: {d}"),
        }
    };

    let mut env = QuadrotorEnv::nominal();
    let mut min_b = f64::INFINITY;
    let mut infeasible = 0u64;
    for _ in 0..100_000 {
        let x = env.state();
        let (f, g) = env.true_affine(&x);
        let problem = SafeInputProblem {
            x: x.to_vec(),
            f_hat: f,
            g_hat: DMatrix::from_column_slice(2, 1, &g),
            barriers: barriers.clone(),
            bounds: vec![(env.u_min, env.u_max)],
        };
        let u = certified_or_witness(&problem, &mut rng, &mut infeasible);
        let s = env.step(u);
        let b = (3.0 - s[0]).min(s[0] + 3.0);
        min_b = min_b.min(b);
    }

    // Recovery from B = −1 (position −4, rising).
    let mut env = QuadrotorEnv::nominal();
    env.state = [-4.0, 1.0];
    let b0 = -1.0;
    let mut geometric_ok = true;
    let mut recovery_infeasible = 0u64;
    for n in 1..=2_000 {
        let x = env.state();
        let (f, g) = env.true_affine(&x);
        let problem = SafeInputProblem {
            x: x.to_vec(),
            f_hat: f,
            g_hat: DMatrix::from_column_slice(2, 1, &g),
            barriers: barriers.clone(),
            bounds: vec![(env.u_min, env.u_max)],
        };
        let u = certified_or_witness(&problem, &mut rng, &mut recovery_infeasible);
        let s = env.step(u);
        let b = (3.0 - s[0]).min(s[0] + 3.0);
        if b < (1.0 - eta).powi(n) * b0 - 1e-12 {
            geometric_ok = false;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = min_b >= -1e-9 && geometric_ok && recovery_infeasible == 0 && elapsed <= 30.0;
    result(
        3,
        "forward-invariance",
        pass,
        format!(
            "min B {min_b:.3e} over 1e5 certified steps ({infeasible} braking fallbacks); geometric bound {}; {:.1}s",
            if geometric_ok { "held" } else { "VIOLATED" },
            elapsed
        ),
    )
}

/// Criterion 4: the difference-matrix GP posterior and the paired-kernel
/// GP posterior agree to 1e-8 in mean and variance.
pub fn criterion_4_gp_equivalence() -> CheckResult {
    let ExperimentKind::OracleEquivalence(cfg) = preset("oracle-equivalence").unwrap().kind else {
        unreachable!()
    };
    let out = equivalence_core(&cfg, 4);
    let pass = out.max_mean_err <= cfg.tolerance && out.max_var_err <= cfg.tolerance;
    result(
        4,
        "gp-equivalence",
        pass,
        format!(
            "{} datasets: max mean err {:.2e}, max var err {:.2e} (tol {:.0e})",
            out.datasets, out.max_mean_err, out.max_var_err, cfg.tolerance
        ),
    )
}

/// Criterion 5: the paired-space and Q-space norms of random expansion
/// differences agree to 1e-10, and paired-kernel Grams are PSD.
pub fn criterion_5_isometry() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gap = 0.0f64;
    for _ in 0..100 {
        let gamma = [0.5, 0.9, 0.99][rng.gen_range(0..3)];
        let spec = QKernelSpec::gaussian_ladder(&[3.0, 1.0], gamma, 2, 1);
        let mut a = QModel::new(spec.clone(), 200, 1);
        let mut b = QModel::new(spec.clone(), 200, 1);
        for _ in 0..rng.gen_range(1..15) {
            let center: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            a.filter.push_atom(rng.gen_range(0..2), center, rng.gen_range(-1.0..1.0));
        }
        for _ in 0..rng.gen_range(1..15) {
            let center: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            b.filter.push_atom(rng.gen_range(0..2), center, rng.gen_range(-1.0..1.0));
        }
        let (psi, q) = rkhs_norms(&a, &b).unwrap();
        worst_gap = worst_gap.max((psi - q).abs());
    }
    let mut worst_eig = f64::INFINITY;
    for &gamma in &[0.5, 0.9, 0.99] {
        let spec = QKernelSpec::gaussian_ladder(&[1.0], gamma, 2, 1);
        let paired: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let pk = barrier_rl::valuerl::PairedKernel {
            q_kernel: spec.q_kernel(0),
            gamma,
            half: 3,
        };
        let g = gram_matrix(&pk, &paired).unwrap();
        worst_eig = worst_eig.min(min_eigenvalue(&g));
    }
    let pass = worst_gap <= 1e-10 && worst_eig >= -1e-8;
    result(
        5,
        "isometry",
        pass,
        format!("worst norm gap {worst_gap:.2e} (tol 1e-10); paired gram min eig {worst_eig:.2e}"),
    )
}

/// Criterion 6: with the exact affine model and a curvature-aware margin,
/// a nonnegative margin implies the certificate residual, and the
/// certified set is convex.
pub fn criterion_6_certified_soundness() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut implication_ok = true;
    let mut worst_residual_slack = f64::INFINITY;
    let mut tested = 0usize;
    while tested < 10_000 {
        let x = vec![rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
        let f = vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        let g = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.3..0.3));
        let spec = BarrierSpec::new(
            BarrierFn::QuadraticBall {
                center: vec![0.0, 0.0],
                radius_sq: 1.0,
            },
            0.3,
        )
        .with_rho1(0.01);
        let problem = SafeInputProblem {
            x: x.clone(),
            f_hat: f.clone(),
            g_hat: g.clone(),
            barriers: vec![spec.clone()],
            bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
        };
        let u = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if problem.certified_margin(&spec, &u) < 0.0 {
            continue;
        }
        tested += 1;
        let shift = [
            f[0] + g[(0, 0)] * u[0] + g[(0, 1)] * u[1],
            f[1] + g[(1, 0)] * u[0] + g[(1, 1)] * u[1],
        ];
        let x_next = vec![x[0] + shift[0], x[1] + shift[1]];
        let slack = dcbf_residual(&spec, &x, &x_next) - spec.rho1;
        worst_residual_slack = worst_residual_slack.min(slack);
        if slack < -1e-9 {
            implication_ok = false;
        }
    }

    let mut convex_ok = true;
    let mut checked = 0usize;
    let spec = BarrierSpec::new(
        BarrierFn::QuadraticBall {
            center: vec![0.0, 0.0],
            radius_sq: 1.0,
        },
        0.3,
    );
    let problem = SafeInputProblem {
        x: vec![0.4, -0.3],
        f_hat: vec![0.05, -0.02],
        g_hat: DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.25]),
        barriers: vec![spec],
        bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
    };
    while checked < 10_000 {
        let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let b = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if !problem.is_certified(&a) || !problem.is_certified(&b) {
            continue;
        }
        let t: f64 = rng.gen_range(0.0..1.0);
        let mix = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        if problem.min_margin(&mix) < -1e-9 {
            convex_ok = false;
        }
        checked += 1;
    }
    result(
        6,
        "certified-soundness",
        implication_ok && convex_ok,
        format!(
            "10^4 certified inputs: worst residual slack {worst_residual_slack:.2e} (floor -1e-9); convexity {}",
            if convex_ok { "held" } else { "VIOLATED" }
        ),
    )
}

/// Criterion 7: the safe-control solver matches a 1e-3-resolution grid
/// oracle within 1e-4 objective gap on 100 random 2-D instances.
pub fn criterion_7_solver_optimality() -> CheckResult {
    let instances: Vec<u64> = (0..100).collect();
    let gaps: Vec<Option<f64>> = instances
        .par_iter()
        .map(|&i| solver_instance_gap(1000 + i))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0usize;
    for g in gaps.iter() {
        match g {
            Some(gap) => worst = worst.max(*gap),
            None => failures += 1,
        }
    }
    let pass = failures == 0 && worst <= 1e-4;
    result(
        7,
        "solver-optimality",
        pass,
        format!("100 instances: worst objective gap {worst:.2e} (tol 1e-4), {failures} solver failures"),
    )
}

/// Grid-vs-solver gap for one randomized feasible instance; `None` when
/// the solver errored or returned an uncertified point.
fn solver_instance_gap(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let x = vec![rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
        let f = vec![rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
        let g = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5));
        let mut barriers = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            if rng.gen_bool(0.5) {
                barriers.push(
                    BarrierSpec::new(
                        BarrierFn::Affine {
                            normal: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                            offset: rng.gen_range(0.2..1.5),
                        },
                        rng.gen_range(0.05..0.5),
                    )
                    .with_rho1(0.001),
                );
            } else {
                barriers.push(
                    BarrierSpec::new(
                        BarrierFn::QuadraticBall {
                            center: vec![0.0, 0.0],
                            radius_sq: rng.gen_range(1.0..2.5),
                        },
                        rng.gen_range(0.05..0.5),
                    )
                    .with_rho1(0.001),
                );
            }
        }
        let problem = SafeInputProblem {
            x,
            f_hat: f,
            g_hat: g,
            barriers,
            bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
        };
        let slope = [rng.gen_range(-1.0..1.0f64), rng.gen_range(-1.0..1.0)];
        if slope[0].abs() + slope[1].abs() < 1e-3 {
            continue;
        }
        // Dense grid oracle at resolution 1e-3.
        let steps = 2001usize;
        let mut best = f64::NEG_INFINITY;
        let mut u = [0.0f64; 2];
        for i in 0..steps {
            u[0] = -1.0 + 2.0 * i as f64 / (steps - 1) as f64;
            for j in 0..steps {
                u[1] = -1.0 + 2.0 * j as f64 / (steps - 1) as f64;
                if problem.min_margin(&u) >= 0.0 {
                    let obj = slope[0] * u[0] + slope[1] * u[1];
                    if obj > best {
                        best = obj;
                    }
                }
            }
        }
        if best == f64::NEG_INFINITY {
            // Infeasible draw; try another instance.
            continue;
        }
        return match solve_safe_control(&problem, 0.0, &slope) {
            Ok(sol) if sol.min_margin >= -1e-9 => Some(best - sol.objective),
            _ => None,
        };
    }
}

/// Criterion 8: the sparse learner starves the residual block on exactly
/// control-affine data and leans on it for genuinely non-affine data.
pub fn criterion_8_structure_extraction() -> CheckResult {
    let ExperimentKind::UnicycleStructure(cfg) = preset("unicycle-structure").unwrap().kind else {
        unreachable!()
    };
    let affine = crate::experiments::unicycle_core(&cfg, 8);

    // Non-affine ground truth δ = sin(x·u) on scalar state and input.
    // Uniform block weighting here: the 0.1 down-weight is the affine
    // structural prior, and this run measures the direct-sum routing
    // without it.
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut model = StructuredModel::new(StructuredConfig {
        state_dim: 1,
        input_dim: 1,
        tau_p: 1.0,
        r_max: 300,
        apfbs: ApfbsConfig::new(0.5, 5, 1e-4, 1e-3, 0.1),
        dims: vec![DimConfig {
            state_features: vec![0],
            kernels: DimKernels::Gaussian(vec![1.0, 0.5]),
            apfbs: None,
        }],
    });
    for _ in 0..1_000 {
        let x = [rng.gen_range(-2.0..2.0)];
        let u = [rng.gen_range(-2.0..2.0)];
        let x_next = [x[0] + f64::sin(x[0] * u[0])];
        model.update(&x, &u, &x_next).unwrap();
        model.prune_zero_atoms(0.0);
    }
    let nonaffine = model.sparsity_report();
    let na_ratio = nonaffine.total(Block::P) / nonaffine.total(Block::G).max(1e-300);

    let pass = affine.p_over_g <= 0.05 && na_ratio >= 0.5;
    result(
        8,
        "structure-extraction",
        pass,
        format!(
            "affine unicycle p/g {:.4} (need <= 0.05); non-affine p/g {:.3} (need >= 0.5)",
            affine.p_over_g, na_ratio
        ),
    )
}

/// Criterion 9: the learning-curve trend (replica-averaged, as the
/// reference curves are) and the quality of the greedy policy after the
/// full run, over three replicas.
///
/// The policy-quality half is known to fail at these settings: the
/// control kernel varies by at most a few percent over the certified
/// input range, so the input-gradient of the learned action value is
/// under-identified against the much larger value signal, and the greedy
/// bang-bang policy parks with a seed-dependent offset (observed pass
/// rate ~1/12 per replica). The check states the required property
/// verbatim and reports the honest result.
pub fn criterion_9_value_learning() -> CheckResult {
    let started = Instant::now();
    let ExperimentKind::QuadrotorRl(cfg) = preset("quadrotor-rl").unwrap().kind else {
        unreachable!()
    };
    let outcomes: Vec<_> = (0..3u64)
        .into_par_iter()
        .map(|r| quadrotor_rl_core(&cfg, crate::experiments::replica_rng_seed(9, r)))
        .collect();
    let elapsed = started.elapsed().as_secs_f64();
    let mut pass = elapsed <= 600.0;
    let mut details = String::new();
    let mut early_sum = 0.0;
    let mut late_sum = 0.0;
    for (r, out) in outcomes.iter().enumerate() {
        early_sum += out.nmse_at_1000.unwrap_or(f64::NAN);
        late_sum += out.nmse_at_end_of_learning.unwrap_or(f64::NAN);
        let mean_v = out.evaluations.iter().map(|e| e.value).sum::<f64>()
            / out.evaluations.len() as f64;
        let near = out
            .evaluations
            .iter()
            .filter(|e| e.final_abs_position <= 0.5)
            .count();
        pass &= mean_v > 0.0 && near >= 4;
        details.push_str(&format!(
            "r{r}: nmse {:.3}->{:.3}, mean V {:.1}, {}:{} near-origin; ",
            out.nmse_at_1000.unwrap_or(f64::NAN),
            out.nmse_at_end_of_learning.unwrap_or(f64::NAN),
            mean_v,
            near,
            out.evaluations.len(),
        ));
    }
    let nmse_trend_ok = late_sum / 3.0 < early_sum / 3.0;
    pass &= nmse_trend_ok;
    details.push_str(&format!(
        "mean nmse {:.4}->{:.4}; {elapsed:.0}s",
        early_sum / 3.0,
        late_sum / 3.0
    ));
    result(9, "value-learning", pass, details)
}

/// Criterion 10: the micro-oracles — prox vs grid, projection
/// idempotence, hyperplane landing of the Bellman update, and the
/// toy-chain Q against a truncated rollout.
pub fn criterion_10_micro_oracles() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // Soft threshold against per-coordinate grid minimization.
    let mut prox_ok = true;
    for _ in 0..100 {
        let h: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = rng.gen_range(0.0..1.0);
        let prox = soft_threshold(&h, t);
        for i in 0..h.len() {
            let obj = |x: f64| 0.5 * (x - h[i]) * (x - h[i]) + t * x.abs();
            let mut best = f64::INFINITY;
            let mut x = -2.5;
            while x <= 2.5 {
                best = best.min(obj(x));
                x += 1e-4;
            }
            if obj(prox[i]) > best + 1e-4 {
                prox_ok = false;
            }
        }
    }

    // Hyperslab projection idempotence.
    let mut slab_ok = true;
    for _ in 0..1_000 {
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let k: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let delta = rng.gen_range(-2.0..2.0);
        let eps = rng.gen_range(0.0..0.5);
        let once = project_hyperslab(&h, &k, delta, eps);
        let twice = project_hyperslab(&once, &k, delta, eps);
        if once.iter().zip(&twice).any(|(a, b)| (a - b).abs() > 1e-12) {
            slab_ok = false;
        }
    }

    // Bellman residual lands on the hyperplane at unit step.
    let mut bellman_worst = 0.0f64;
    for _ in 0..50 {
        let spec = QKernelSpec::gaussian_ladder(&[1.0, 3.0], 0.9, 2, 1);
        let mut model = QModel::new(spec, 50, 1);
        let cfg = ApfbsConfig::new(1.0, 1, 0.0, 0.0, 0.1);
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z_next: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = rng.gen_range(-5.0..5.0);
        model.q_update(&z, &z_next, r, &cfg).unwrap();
        let zw: Vec<f64> = z.iter().chain(z_next.iter()).copied().collect();
        bellman_worst = bellman_worst.max((model.psi_predict(&zw).unwrap() - r).abs());
    }

    // Toy chain: a three-state deterministic cycle whose Q solves a 3x3
    // linear system; the truncated rollout is the independent oracle.
    let gamma = 0.8;
    let rewards = [1.0, -0.5, 2.0];
    let z: [Vec<f64>; 3] = [vec![0.0, 0.5], vec![1.0, -0.5], vec![2.0, 0.0]];
    let horizon = ((2.0f64 / 1e-6).ln() / (1.0f64 / gamma).ln()).ceil() as usize;
    let oracle = |i: usize| -> f64 {
        let mut v = 0.0;
        let mut d = 1.0;
        for n in 0..horizon {
            v += d * rewards[(i + n) % 3];
            d *= gamma;
        }
        v
    };
    let spec = QKernelSpec::gaussian_ladder(&[1.0], gamma, 1, 1);
    let mut model = QModel::new(spec, 50, 1);
    let cfg = ApfbsConfig::new(1.0, 1, 0.0, 0.0, 0.1);
    for pass_idx in 0..30_000 {
        let i = pass_idx % 3;
        model.q_update(&z[i], &z[(i + 1) % 3], rewards[i], &cfg).unwrap();
    }
    let mut chain_worst = 0.0f64;
    for (i, zi) in z.iter().enumerate() {
        chain_worst = chain_worst.max((model.q_predict(zi).unwrap() - oracle(i)).abs());
    }

    let pass = prox_ok && slab_ok && bellman_worst <= 1e-10 && chain_worst <= 1e-2;
    result(
        10,
        "micro-oracles",
        pass,
        format!(
            "prox {}; slab idempotence {}; bellman residual {bellman_worst:.2e} (tol 1e-10); toy chain err {chain_worst:.2e} (tol 1e-2)",
            if prox_ok { "ok" } else { "FAIL" },
            if slab_ok { "ok" } else { "FAIL" }
        ),
    )
}

/// Every criterion in order.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        criterion_1_safety_recovery(),
        criterion_2_monotone_approximation(),
        criterion_3_forward_invariance(),
        criterion_4_gp_equivalence(),
        criterion_5_isometry(),
        criterion_6_certified_soundness(),
        criterion_7_solver_optimality(),
        criterion_8_structure_extraction(),
        criterion_9_value_learning(),
        criterion_10_micro_oracles(),
    ]
}
