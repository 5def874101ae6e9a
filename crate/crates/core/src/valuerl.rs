//! Action-value learning as supervised regression in a paired-input
//! space.
//!
//! The Bellman identity `Q(z_n) = γQ(z_{n+1}) + R_n` makes the
//! difference function `ψ([z; w]) = Q(z) − γQ(w)` directly observable:
//! its value at the pair `(z_n, [x_{n+1}; φ(x_{n+1})])` is the reward.
//! The space of such difference functions is itself an RKHS whose kernel
//! combines four evaluations of the underlying state-action kernel, and
//! the map between the two spaces is a bijective isometry — so the same
//! coefficient vector serves both ψ̂ and Q̂, and monotone tracking in one
//! norm is monotone tracking in the other. Because the input factor of
//! the state-action kernel is affine, the learned Q̂ is affine in the
//! control, which turns greedy policy improvement into the certified
//! linear-objective solve from the barrier module.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adafilter::{ApfbsConfig, FilterState, TransitionWindow};
use crate::barrier::{sample_safe_input, solve_safe_control, BarrierError, BarrierSpec, SafeInputProblem};
use crate::envs::{ControlEnv, RewardSpec};
use crate::kernels::{eval_kernel, Kernel, KernelError, KernelSpec};
use crate::structmodel::DynamicsLearner;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("models use different kernel specifications")]
    SpecMismatch,
}

/// Kernel design for the action-value space: a ladder of state kernels,
/// each tensored with the fixed control kernel `κ^u(u,v) = 1 + ¼uᵀv`,
/// and a discount factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QKernelSpec {
    pub state_kernels: Vec<KernelSpec>,
    pub gamma: f64,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl QKernelSpec {
    pub fn gaussian_ladder(sigmas: &[f64], gamma: f64, state_dim: usize, input_dim: usize) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "discount must lie in (0,1)");
        QKernelSpec {
            state_kernels: sigmas
                .iter()
                .map(|&s| KernelSpec::gaussian(s, state_dim))
                .collect(),
            gamma,
            state_dim,
            input_dim,
        }
    }

    pub fn pair_dim(&self) -> usize {
        self.state_dim + self.input_dim
    }

    /// The m-th state-action kernel `κ^Q = κ^x ⊗ κ^u`.
    pub fn q_kernel(&self, m: usize) -> KernelSpec {
        KernelSpec::tensor(
            self.state_kernels[m].clone(),
            KernelSpec::control_offset(),
            self.state_dim,
        )
    }

    fn paired(&self, m: usize) -> PairedKernel {
        PairedKernel {
            q_kernel: self.q_kernel(m),
            gamma: self.gamma,
            half: self.pair_dim(),
        }
    }

    /// Kernel of the difference-function space evaluated on two pairs:
    /// `(κ^Q(z,z̃) − γκ^Q(z,w̃)) − γ(κ^Q(w,z̃) − γκ^Q(w,w̃))`.
    pub fn paired_kernel_eval(&self, m: usize, zw: &[f64], zw2: &[f64]) -> Result<f64, KernelError> {
        self.paired(m).eval(zw, zw2)
    }
}

/// The paired kernel as a reusable [`Kernel`], so the adaptive filter can
/// run on pair atoms unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedKernel {
    pub q_kernel: KernelSpec,
    pub gamma: f64,
    /// Length of one half of the paired input.
    pub half: usize,
}

impl Kernel for PairedKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        if a.len() != 2 * self.half || b.len() != 2 * self.half {
            return Err(KernelError::DimensionMismatch {
                expected: 2 * self.half,
                got: a.len(),
            });
        }
        let (z, w) = a.split_at(self.half);
        let (zt, wt) = b.split_at(self.half);
        let g = self.gamma;
        let first = self.q_kernel.eval(z, zt)? - g * self.q_kernel.eval(z, wt)?;
        let second = self.q_kernel.eval(w, zt)? - g * self.q_kernel.eval(w, wt)?;
        Ok(first - g * second)
    }
}

/// Adaptive estimator of ψ (and through it Q̂): a multikernel filter whose
/// atoms are transition pairs `[z̃; w̃]` under the paired kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    pub spec: QKernelSpec,
    pub filter: FilterState<PairedKernel>,
    window: TransitionWindow,
}

impl QModel {
    pub fn new(spec: QKernelSpec, r_max: usize, window_len: usize) -> Self {
        let kernels = (0..spec.state_kernels.len()).map(|m| spec.paired(m)).collect();
        QModel {
            filter: FilterState::new(kernels, r_max),
            window: TransitionWindow::new(window_len),
            spec,
        }
    }

    /// ψ̂ on a paired input.
    pub fn psi_predict(&self, zw: &[f64]) -> Result<f64, ValueError> {
        Ok(self.filter.predict(zw).map_err(|e| match e {
            crate::adafilter::FilterError::Kernel(k) => ValueError::Kernel(k),
            _ => ValueError::SpecMismatch,
        })?)
    }

    /// Q̂ on a single state-action input, through the inverse of the
    /// pairing map: each pair atom contributes
    /// `κ^Q(z, z̃_j) − γ·κ^Q(z, w̃_j)` with the shared coefficient.
    pub fn q_predict(&self, z: &[f64]) -> Result<f64, ValueError> {
        let half = self.spec.pair_dim();
        let mut acc = 0.0;
        for (atom, h) in self.filter.dict.atoms().iter().zip(&self.filter.coeffs) {
            let q = &self.filter.dict.kernels()[atom.kernel].q_kernel;
            let (zt, wt) = atom.center.split_at(half);
            acc += h * (eval_kernel(q, z, zt)? - self.spec.gamma * eval_kernel(q, z, wt)?);
        }
        Ok(acc)
    }

    /// One admission-plus-update step on the pair
    /// `([x_n; u_n], [x_{n+1}; φ(x_{n+1})])` with the reward as target.
    pub fn q_update(
        &mut self,
        z: &[f64],
        z_next_policy: &[f64],
        reward: f64,
        cfg: &ApfbsConfig,
    ) -> Result<(), ValueError> {
        let mut zw = Vec::with_capacity(2 * self.spec.pair_dim());
        zw.extend_from_slice(z);
        zw.extend_from_slice(z_next_policy);
        self.window.push(zw.clone(), reward);
        self.filter
            .admit_or_skip(&zw, reward, cfg)
            .and_then(|_| self.filter.apfbs_update(&self.window, cfg))
            .map_err(|e| match e {
                crate::adafilter::FilterError::Kernel(k) => ValueError::Kernel(k),
                _ => ValueError::SpecMismatch,
            })
    }

    pub fn prune_zero_atoms(&mut self, tol: f64) -> usize {
        self.filter.prune_zero_atoms(tol)
    }

    /// Splits Q̂(x, ·) into `a(x) + b(x)ᵀu`, exact because the control
    /// factor of κ^Q is affine.
    pub fn affine_value(&self, x: &[f64]) -> Result<(f64, Vec<f64>), ValueError> {
        let nx = self.spec.state_dim;
        let nu = self.spec.input_dim;
        let half = self.spec.pair_dim();
        let mut a = 0.0;
        let mut b = vec![0.0; nu];
        let g = self.spec.gamma;
        for (atom, h) in self.filter.dict.atoms().iter().zip(&self.filter.coeffs) {
            let kx = &self.spec.state_kernels[atom.kernel];
            let (zt, wt) = atom.center.split_at(half);
            let (xt, ut) = zt.split_at(nx);
            let (yt, vt) = wt.split_at(nx);
            let kxz = eval_kernel(kx, x, xt)?;
            let kxw = eval_kernel(kx, x, yt)?;
            a += h * (kxz - g * kxw);
            for j in 0..nu {
                b[j] += 0.25 * h * (kxz * ut[j] - g * kxw * vt[j]);
            }
        }
        Ok((a, b))
    }

    /// Freeze the current estimate into a greedy policy object.
    pub fn improve_policy(&self) -> GreedyPolicy {
        GreedyPolicy {
            snapshot: QModel {
                spec: self.spec.clone(),
                filter: self.filter.clone(),
                window: TransitionWindow::new(1),
            },
        }
    }
}

/// What a policy actually emitted, and why.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub input: Vec<f64>,
    /// The safe set was empty; the input is the least-violating witness.
    pub fallback: bool,
}

/// Barrier-certified greedy policy: maximizes the frozen Q̂(x, ·) over the
/// certified input set at each queried state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPolicy {
    snapshot: QModel,
}

impl GreedyPolicy {
    pub fn act(&self, problem: &SafeInputProblem) -> Result<PolicyDecision, ValueError> {
        let (a, b) = self.snapshot.affine_value(&problem.x)?;
        match solve_safe_control(problem, a, &b) {
            Ok(sol) => Ok(PolicyDecision {
                input: sol.input,
                fallback: false,
            }),
            Err(BarrierError::Infeasible { witness, .. }) => Ok(PolicyDecision {
                input: witness,
                fallback: true,
            }),
            Err(BarrierError::Dimension(d)) => panic!("policy dimension mismatch: {d}"),
        }
    }

    pub fn model(&self) -> &QModel {
        &self.snapshot
    }
}

/// RKHS distances between two estimators sharing a kernel design,
/// computed independently in the paired space and in Q-space. The pairing
/// map is an isometry, so the two must agree; the pair is returned for
/// the caller to compare.
pub fn rkhs_norms(a: &QModel, b: &QModel) -> Result<(f64, f64), ValueError> {
    if a.spec != b.spec {
        return Err(ValueError::SpecMismatch);
    }
    let spec = &a.spec;
    let half = spec.pair_dim();
    let g = spec.gamma;
    let mut psi_sq = 0.0;
    let mut q_sq = 0.0;
    for m in 0..spec.state_kernels.len() {
        let mut centers: Vec<&[f64]> = Vec::new();
        let mut coeffs: Vec<f64> = Vec::new();
        for (atom, h) in a.filter.dict.atoms().iter().zip(&a.filter.coeffs) {
            if atom.kernel == m {
                centers.push(&atom.center);
                coeffs.push(*h);
            }
        }
        for (atom, h) in b.filter.dict.atoms().iter().zip(&b.filter.coeffs) {
            if atom.kernel == m {
                centers.push(&atom.center);
                coeffs.push(-*h);
            }
        }
        let qk = spec.q_kernel(m);
        for i in 0..centers.len() {
            for j in 0..centers.len() {
                let c = coeffs[i] * coeffs[j];
                psi_sq += c * spec.paired_kernel_eval(m, centers[i], centers[j])?;
                // Same inner product expanded in Q-space: the atoms map to
                // κ^Q(·,z̃) − γκ^Q(·,w̃), whose pairwise products give four
                // κ^Q terms.
                let (zi, wi) = centers[i].split_at(half);
                let (zj, wj) = centers[j].split_at(half);
                q_sq += c
                    * (eval_kernel(&qk, zi, zj)? - g * eval_kernel(&qk, zi, wj)?
                        - g * (eval_kernel(&qk, wi, zj)? - g * eval_kernel(&qk, wi, wj)?));
            }
        }
    }
    Ok((psi_sq.max(0.0).sqrt(), q_sq.max(0.0).sqrt()))
}

/// Certified learning agent: dynamics estimator, value estimator, and the
/// policy snapshot the value updates are evaluated against.
#[derive(Debug, Clone)]
pub struct Agent {
    pub dynamics: DynamicsLearner,
    pub qmodel: QModel,
    pub policy: GreedyPolicy,
    pub config: AgentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub apfbs: ApfbsConfig,
    /// Policy-update period N_f.
    pub policy_period: u64,
    /// Steps of uniform certified exploration before acting greedily.
    pub exploration_steps: u64,
    /// Drop exactly-zeroed atoms after each update, keeping dictionary
    /// room for newer centers.
    pub prune_each_step: bool,
}

impl Agent {
    pub fn new(dynamics: DynamicsLearner, qmodel: QModel, config: AgentConfig) -> Self {
        let policy = qmodel.improve_policy();
        Agent {
            dynamics,
            qmodel,
            policy,
            config,
        }
    }
}

/// Barrier set and input box shared across a run; builds the per-state
/// safe-input problem from whatever model the learner currently carries.
#[derive(Debug, Clone)]
pub struct CertifiedDriver {
    pub barriers: Vec<BarrierSpec>,
    pub bounds: Vec<(f64, f64)>,
}

impl CertifiedDriver {
    pub fn problem_at(&self, x: &[f64], dynamics: &DynamicsLearner) -> SafeInputProblem {
        let affine = dynamics.affine_at(x);
        SafeInputProblem {
            x: x.to_vec(),
            f_hat: affine.f_hat,
            g_hat: affine.g_hat,
            barriers: self.barriers.clone(),
            bounds: self.bounds.clone(),
        }
    }
}

/// Everything one loop iteration produced, for metrics and assertions.
#[derive(Debug, Clone)]
pub struct StepLog {
    pub n: u64,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub reward: f64,
    pub barrier_values: Vec<f64>,
    /// Certified margins of the emitted input, one per barrier.
    pub margins: Vec<f64>,
    pub explored: bool,
    pub fallback: bool,
    pub policy_updated: bool,
    /// (ψ̂ prediction before the value update, observed reward).
    pub bellman_sample: (f64, f64),
}

/// One body of the certified learning loop: sample a transition under an
/// exploration-or-greedy input drawn from the certified set, update the
/// dynamics model, regress the reward onto the transition pair, and
/// periodically refresh the greedy policy.
pub fn algorithm1_step<E: ControlEnv>(
    env: &mut E,
    agent: &mut Agent,
    driver: &CertifiedDriver,
    reward: &RewardSpec,
    n: u64,
    rng: &mut impl Rng,
) -> Result<StepLog, ValueError> {
    let x = env.state();
    let problem = driver.problem_at(&x, &agent.dynamics);
    let explored = n < agent.config.exploration_steps;
    let (input, fallback) = if explored {
        match sample_safe_input(&problem, rng) {
            Ok(s) => (s.input, false),
            Err(BarrierError::Infeasible { witness, .. }) => (witness, true),
            Err(BarrierError::Dimension(d)) => panic!("driver dimension mismatch: {d}"),
        }
    } else {
        let d = agent.policy.act(&problem)?;
        (d.input, d.fallback)
    };
    let barrier_values: Vec<f64> = driver.barriers.iter().map(|b| b.barrier.eval(&x)).collect();
    let margins: Vec<f64> = driver
        .barriers
        .iter()
        .map(|b| problem.certified_margin(b, &input))
        .collect();

    let x_next = env.step(&input);
    let r = reward.eval(&x, &input);

    // φ(x_{n+1}) under the pre-update model, per the loop ordering.
    let next_problem = driver.problem_at(&x_next, &agent.dynamics);
    let phi_next = agent.policy.act(&next_problem)?;

    agent.dynamics.update(&x, &input, &x_next);

    let z: Vec<f64> = x.iter().chain(input.iter()).copied().collect();
    let z_next: Vec<f64> = x_next.iter().chain(phi_next.input.iter()).copied().collect();
    let mut zw = z.clone();
    zw.extend_from_slice(&z_next);
    let psi_before = agent.qmodel.psi_predict(&zw)?;
    agent.qmodel.q_update(&z, &z_next, r, &agent.config.apfbs)?;
    if agent.config.prune_each_step {
        agent.qmodel.prune_zero_atoms(0.0);
    }

    let policy_updated = n > 0 && n % agent.config.policy_period == 0;
    if policy_updated {
        agent.policy = agent.qmodel.improve_policy();
    }

    Ok(StepLog {
        n,
        state: x,
        input,
        reward: r,
        barrier_values,
        margins,
        explored,
        fallback,
        policy_updated,
        bellman_sample: (psi_before, r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec1() -> QKernelSpec {
        QKernelSpec::gaussian_ladder(&[1.0], 0.9, 1, 1)
    }

    fn rand_pair(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn paired_kernel_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // γ → 0 collapses to κ^Q(z, z̃).
        let tiny = QKernelSpec {
            gamma: 1e-300,
            ..spec1()
        };
        for _ in 0..50 {
            let zw = rand_pair(&mut rng, 4);
            let zw2 = rand_pair(&mut rng, 4);
            let paired = tiny.paired_kernel_eval(0, &zw, &zw2).unwrap();
            let q = eval_kernel(&tiny.q_kernel(0), &zw[..2], &zw2[..2]).unwrap();
            assert!((paired - q).abs() < 1e-12);
        }
        // z = w and z̃ = w̃ collapse to (1−γ)²·κ^Q.
        let spec = spec1();
        for _ in 0..50 {
            let z = rand_pair(&mut rng, 2);
            let zt = rand_pair(&mut rng, 2);
            let zw: Vec<f64> = z.iter().chain(z.iter()).copied().collect();
            let zw2: Vec<f64> = zt.iter().chain(zt.iter()).copied().collect();
            let paired = spec.paired_kernel_eval(0, &zw, &zw2).unwrap();
            let q = eval_kernel(&spec.q_kernel(0), &z, &zt).unwrap();
            assert!((paired - 0.01 * q).abs() < 1e-14);
        }
    }

    #[test]
    fn paired_gram_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = spec1();
        let paired = spec.paired(0);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| rand_pair(&mut rng, 4)).collect();
        let g = crate::kernels::gram_matrix(&paired, &pts).unwrap();
        assert!(crate::kernels::min_eigenvalue(&g) >= -1e-8);
    }

    #[test]
    fn q_predict_empty_and_single_atom() {
        let spec = spec1();
        let mut model = QModel::new(spec.clone(), 50, 3);
        assert_eq!(model.q_predict(&[0.3, 0.1]).unwrap(), 0.0);
        let center = vec![0.5, 0.2, -0.3, 0.4];
        model.filter.push_atom(0, center.clone(), 1.0);
        let z = [0.0, 0.0];
        let expect = eval_kernel(&spec.q_kernel(0), &z, &center[..2]).unwrap()
            - 0.9 * eval_kernel(&spec.q_kernel(0), &z, &center[2..]).unwrap();
        assert!((model.q_predict(&z).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn pairing_identity_exact() {
        // ψ̂([z; w]) = Q̂(z) − γ·Q̂(w) for arbitrary expansions.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = QKernelSpec::gaussian_ladder(&[2.0, 0.7], 0.9, 1, 1);
        let mut model = QModel::new(spec, 100, 3);
        for _ in 0..20 {
            let m = rng.gen_range(0..2);
            model
                .filter
                .push_atom(m, rand_pair(&mut rng, 4), rng.gen_range(-1.0..1.0));
        }
        for _ in 0..1000 {
            let z = rand_pair(&mut rng, 2);
            let w = rand_pair(&mut rng, 2);
            let zw: Vec<f64> = z.iter().chain(w.iter()).copied().collect();
            let psi = model.psi_predict(&zw).unwrap();
            let q = model.q_predict(&z).unwrap() - 0.9 * model.q_predict(&w).unwrap();
            assert!((psi - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn diagonal_pairs_scale_by_one_minus_gamma() {
        // ψ̂([z; z]) = (1 − γ)·Q̂(z): the bijectivity witness.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = spec1();
        let mut model = QModel::new(spec, 100, 3);
        for _ in 0..15 {
            model
                .filter
                .push_atom(0, rand_pair(&mut rng, 4), rng.gen_range(-1.0..1.0));
        }
        for _ in 0..200 {
            let z = rand_pair(&mut rng, 2);
            let zz: Vec<f64> = z.iter().chain(z.iter()).copied().collect();
            let lhs = model.psi_predict(&zz).unwrap();
            let rhs = (1.0 - 0.9) * model.q_predict(&z).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn bellman_residual_zero_after_unit_step() {
        let spec = spec1();
        let mut model = QModel::new(spec, 50, 1);
        let cfg = ApfbsConfig::new(1.0, 1, 0.0, 0.0, 0.1);
        let z = [0.4, 0.1];
        let z_next = [0.5, -0.2];
        model.q_update(&z, &z_next, 3.0, &cfg).unwrap();
        let zw: Vec<f64> = z.iter().chain(z_next.iter()).copied().collect();
        assert!((model.psi_predict(&zw).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn isometry_on_random_expansions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = QKernelSpec::gaussian_ladder(&[3.0, 1.0], 0.9, 2, 1);
        for _ in 0..30 {
            let mut a = QModel::new(spec.clone(), 100, 3);
            let mut b = QModel::new(spec.clone(), 100, 3);
            for _ in 0..rng.gen_range(1..12) {
                a.filter
                    .push_atom(rng.gen_range(0..2), rand_pair(&mut rng, 6), rng.gen_range(-1.0..1.0));
            }
            for _ in 0..rng.gen_range(1..12) {
                b.filter
                    .push_atom(rng.gen_range(0..2), rand_pair(&mut rng, 6), rng.gen_range(-1.0..1.0));
            }
            let (psi, q) = rkhs_norms(&a, &b).unwrap();
            assert!((psi - q).abs() <= 1e-10, "isometry broke: {psi} vs {q}");
        }
        // Identical models: both distances vanish.
        let a = QModel::new(spec.clone(), 10, 3);
        let (psi, q) = rkhs_norms(&a, &a.clone()).unwrap();
        assert_eq!((psi, q), (0.0, 0.0));
    }

    #[test]
    fn doubling_coefficients_doubles_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = spec1();
        let mut a = QModel::new(spec.clone(), 50, 3);
        for _ in 0..8 {
            a.filter
                .push_atom(0, rand_pair(&mut rng, 4), rng.gen_range(-1.0..1.0));
        }
        let zero = QModel::new(spec.clone(), 50, 3);
        let (p1, q1) = rkhs_norms(&a, &zero).unwrap();
        let mut doubled = a.clone();
        for h in &mut doubled.filter.coeffs {
            *h *= 2.0;
        }
        let (p2, q2) = rkhs_norms(&doubled, &zero).unwrap();
        assert!((p2 - 2.0 * p1).abs() < 1e-10);
        assert!((q2 - 2.0 * q1).abs() < 1e-10);
    }

    #[test]
    fn mismatched_specs_rejected() {
        let a = QModel::new(spec1(), 10, 2);
        let b = QModel::new(QKernelSpec::gaussian_ladder(&[2.0], 0.9, 1, 1), 10, 2);
        assert!(matches!(rkhs_norms(&a, &b), Err(ValueError::SpecMismatch)));
    }

    #[test]
    fn affine_value_matches_q_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = QKernelSpec::gaussian_ladder(&[1.5, 0.8], 0.9, 2, 2);
        let mut model = QModel::new(spec, 100, 3);
        for _ in 0..20 {
            model
                .filter
                .push_atom(rng.gen_range(0..2), rand_pair(&mut rng, 8), rng.gen_range(-1.0..1.0));
        }
        for _ in 0..200 {
            let x = rand_pair(&mut rng, 2);
            let u = rand_pair(&mut rng, 2);
            let (a, b) = model.affine_value(&x).unwrap();
            let z: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
            let direct = model.q_predict(&z).unwrap();
            let split = a + b[0] * u[0] + b[1] * u[1];
            assert!((direct - split).abs() <= 1e-12, "{direct} vs {split}");
        }
    }

    #[test]
    fn empty_policy_emits_certified_interior_point() {
        use crate::barrier::{BarrierFn, BarrierSpec};
        use nalgebra::DMatrix;
        let model = QModel::new(QKernelSpec::gaussian_ladder(&[1.0], 0.9, 1, 2), 10, 2);
        let policy = model.improve_policy();
        let problem = SafeInputProblem {
            x: vec![0.0],
            f_hat: vec![0.0],
            g_hat: DMatrix::zeros(1, 2),
            barriers: vec![BarrierSpec::new(
                BarrierFn::Affine {
                    normal: vec![1.0],
                    offset: 1.0,
                },
                0.5,
            )],
            bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
        };
        let d = policy.act(&problem).unwrap();
        assert!(!d.fallback);
        assert!(problem.is_certified(&d.input));
        // Degenerate objective ties break to the safest interior point.
        assert!(d.input[0].abs() < 1e-6 && d.input[1].abs() < 1e-6);
    }
}
