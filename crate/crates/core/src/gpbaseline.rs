//! Gaussian-process baselines: the SARSA-style posterior over the
//! action-value function obtained by differencing consecutive inputs with
//! the banded `H` matrix, the same posterior derived through the paired
//! Bellman kernel (the two must agree — that equivalence is one of the
//! main oracles of this crate), a frozen-dictionary variant, and
//! conjugate Bayesian linear regression for parametric model learning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{eval_kernel, KernelError, KernelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("need at least one transition (got {inputs} inputs, {rewards} rewards)")]
    NotEnoughData { inputs: usize, rewards: usize },
    #[error("gram system singular even with jitter {max_jitter:.1e}")]
    Singular { max_jitter: f64 },
}

/// Cholesky solve with escalating diagonal jitter: 1e-10 up to 1e-6 by
/// factors of ten.
fn solve_psd(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, GpError> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let mut jitter = 1e-10;
    while jitter <= 1e-6 {
        let mut aj = a.clone();
        for i in 0..aj.nrows() {
            aj[(i, i)] += jitter;
        }
        if let Some(ch) = aj.cholesky() {
            return Ok(ch.solve(rhs));
        }
        jitter *= 10.0;
    }
    Err(GpError::Singular { max_jitter: 1e-6 })
}

/// Observed trajectory data for GP SARSA: inputs `z_0..z_{N_d}` and the
/// rewards observed along the `N_d` transitions between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSarsaState {
    pub inputs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Per-observation noise variance (Σ = noise_var·I).
    pub noise_var: f64,
    pub q_kernel: KernelSpec,
    pub gamma: f64,
    /// When set, only the first `freeze_at` transition pairs contribute
    /// basis functions; later data still updates their weights.
    pub freeze_at: Option<usize>,
}

impl GpSarsaState {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        noise_var: f64,
        q_kernel: KernelSpec,
        gamma: f64,
    ) -> Result<Self, GpError> {
        if inputs.len() != rewards.len() + 1 || rewards.is_empty() {
            return Err(GpError::NotEnoughData {
                inputs: inputs.len(),
                rewards: rewards.len(),
            });
        }
        assert!(noise_var > 0.0 && gamma > 0.0 && gamma < 1.0);
        Ok(GpSarsaState {
            inputs,
            rewards,
            noise_var,
            q_kernel,
            gamma,
        freeze_at: None,
        })
    }

    /// Number of transitions N_d.
    pub fn transitions(&self) -> usize {
        self.rewards.len()
    }

    /// Basis functions the predictor actually uses.
    pub fn basis_count(&self) -> usize {
        match self.freeze_at {
            Some(f) => f.min(self.transitions()),
            None => self.transitions(),
        }
    }

    /// The banded difference matrix with rows `(…, 1, −γ, …)`, shaped
    /// N_d × (N_d + 1).
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let n = self.transitions();
        let mut h = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            h[(i, i)] = 1.0;
            h[(i, i + 1)] = -self.gamma;
        }
        h
    }

    /// Paired Bellman kernel between transition pairs `(z_i, z_{i+1})`
    /// and `(z_j, z_{j+1})`, written out in terms of κ^Q.
    fn paired_entry(&self, i: usize, j: usize) -> Result<f64, GpError> {
        let g = self.gamma;
        let k = |a: usize, b: usize| eval_kernel(&self.q_kernel, &self.inputs[a], &self.inputs[b]);
        Ok(k(i, j)? - g * k(i, j + 1)? - g * k(i + 1, j)? + g * g * k(i + 1, j + 1)?)
    }

    /// `k^Q_i(z*) = κ^Q(z*, z_i) − γ·κ^Q(z*, z_{i+1})`: the query vector
    /// of the inverse-mapped basis functions.
    fn kq_vec(&self, z_star: &[f64], count: usize) -> Result<DVector<f64>, GpError> {
        let mut v = DVector::zeros(count);
        for i in 0..count {
            v[i] = eval_kernel(&self.q_kernel, z_star, &self.inputs[i])?
                - self.gamma * eval_kernel(&self.q_kernel, z_star, &self.inputs[i + 1])?;
        }
        Ok(v)
    }
}

/// Posterior mean and variance of Q̂ at `z*` through the difference-matrix
/// route: `m = k̃ᵀHᵀ(HK^QHᵀ + Σ)⁻¹R`, `μ² = κ^Q(z*,z*) − k̃ᵀHᵀ(…)⁻¹Hk̃`.
///
/// A frozen dictionary switches both routes to the restricted-basis
/// regression, where the two formulations coincide by construction.
pub fn gp_sarsa_posterior(state: &GpSarsaState, z_star: &[f64]) -> Result<(f64, f64), GpError> {
    if state.freeze_at.is_some() {
        return frozen_posterior(state, z_star);
    }
    let n = state.transitions();
    let kq = crate::kernels::gram_matrix(&state.q_kernel, &state.inputs)?;
    let h = state.h_matrix();
    let mut a = &h * kq * h.transpose();
    for i in 0..n {
        a[(i, i)] += state.noise_var;
    }
    let mut ktilde = DVector::zeros(n + 1);
    for i in 0..=n {
        ktilde[i] = eval_kernel(&state.q_kernel, z_star, &state.inputs[i])?;
    }
    let hk = &h * &ktilde;
    let r = DVector::from_column_slice(&state.rewards);
    let weights = solve_psd(&a, &r)?;
    let mean = hk.dot(&weights);
    let var_reduction = hk.dot(&solve_psd(&a, &hk)?);
    let prior = eval_kernel(&state.q_kernel, z_star, z_star)?;
    Ok((mean, prior - var_reduction))
}

/// The same posterior through the paired-kernel route: a plain GP
/// regression of rewards on transition pairs under the Bellman kernel,
/// mapped back to Q-space through the inverse of the pairing operator.
pub fn psi_route_posterior(state: &GpSarsaState, z_star: &[f64]) -> Result<(f64, f64), GpError> {
    if state.freeze_at.is_some() {
        return frozen_posterior(state, z_star);
    }
    let n = state.transitions();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = state.paired_entry(i, j)?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    for i in 0..n {
        k[(i, i)] += state.noise_var;
    }
    let kq = state.kq_vec(z_star, n)?;
    let r = DVector::from_column_slice(&state.rewards);
    let mean = kq.dot(&solve_psd(&k, &r)?);
    let var_reduction = kq.dot(&solve_psd(&k, &kq)?);
    let prior = eval_kernel(&state.q_kernel, z_star, z_star)?;
    Ok((mean, prior - var_reduction))
}

/// Restricted-basis regression: only the first `F` transition pairs carry
/// basis functions, later observations reweight them. With the full basis
/// this reduces algebraically to the exact posterior; with no basis it is
/// the constant-zero predictor under the prior variance.
fn frozen_posterior(state: &GpSarsaState, z_star: &[f64]) -> Result<(f64, f64), GpError> {
    let n = state.transitions();
    let f = state.basis_count();
    let prior = eval_kernel(&state.q_kernel, z_star, z_star)?;
    if f == 0 {
        return Ok((0.0, prior));
    }
    let mut k_bb = DMatrix::zeros(f, f);
    for i in 0..f {
        for j in i..f {
            let v = state.paired_entry(i, j)?;
            k_bb[(i, j)] = v;
            k_bb[(j, i)] = v;
        }
    }
    let mut k_bn = DMatrix::zeros(f, n);
    for i in 0..f {
        for j in 0..n {
            k_bn[(i, j)] = state.paired_entry(i, j)?;
        }
    }
    let r = DVector::from_column_slice(&state.rewards);
    let a = &k_bn * k_bn.transpose() / state.noise_var + &k_bb;
    let kq = state.kq_vec(z_star, f)?;
    let alpha = solve_psd(&a, &(&k_bn * &r / state.noise_var))?;
    let mean = kq.dot(&alpha);
    let var = prior - kq.dot(&solve_psd(&k_bb, &kq)?) + kq.dot(&solve_psd(&a, &kq)?);
    Ok((mean, var))
}

/// Marks the dictionary frozen after `freeze_at` transition pairs.
pub fn gp_sarsa2_mode(mut state: GpSarsaState, freeze_at: usize) -> GpSarsaState {
    state.freeze_at = Some(freeze_at);
    state
}

/// Conjugate Gaussian posterior over a flat parameter vector `h` for
/// observations `y = Ξh + noise`, kept as precision-form sufficient
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesLinearState {
    precision: DMatrix<f64>,
    rhs: DVector<f64>,
    pub noise_var: f64,
}

impl BayesLinearState {
    /// Zero-mean prior with covariance `prior_var·I`.
    pub fn new(dim: usize, prior_var: f64, noise_var: f64) -> Self {
        assert!(prior_var > 0.0 && noise_var > 0.0);
        BayesLinearState {
            precision: DMatrix::identity(dim, dim) / prior_var,
            rhs: DVector::zeros(dim),
            noise_var,
        }
    }

    pub fn update(&mut self, xi: &DMatrix<f64>, y: &DVector<f64>) {
        self.precision += xi.transpose() * xi / self.noise_var;
        self.rhs += xi.transpose() * y / self.noise_var;
    }

    pub fn posterior_mean(&self) -> DVector<f64> {
        self.precision
            .clone()
            .cholesky()
            .expect("posterior precision is positive definite")
            .solve(&self.rhs)
    }

    pub fn posterior_cov(&self) -> DMatrix<f64> {
        self.precision
            .clone()
            .cholesky()
            .expect("posterior precision is positive definite")
            .inverse()
    }
}
