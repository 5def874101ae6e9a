//! Structured model learning in the direct sum
//! `H_p ⊕ (H_f ⊗ H_c) ⊕ (H_g ⊗ H_u)`: the one-step shift is estimated as
//! `δ̂(x,u) = p̂(x,u) + f̂(x) + ĝ(x)·u`, one adaptive filter per output
//! dimension, with ℓ1 regularization pushing mass out of whichever blocks
//! the data does not need. The control-affine part `(f̂, ĝ)` is read off
//! exactly, thanks to the linear input factor of the g-block kernels.
//!
//! Also holds the small parametric least-squares tracker used when a
//! basis for the dynamics is known, and the umbrella type dispatching
//! between the learners.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adafilter::{ApfbsConfig, FilterState, FilterError, TransitionWindow};
use crate::gpbaseline::BayesLinearState;
use crate::kernels::KernelSpec;

/// Which summand of the direct sum a kernel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// Residual block over the joint input `[x; u]`.
    P,
    /// Drift block over the state alone.
    F,
    /// Control block: state kernel times the linear input kernel.
    G,
}

/// Kernel ladder for one output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DimKernels {
    /// Gaussian scale ladder over the selected state features.
    Gaussian(Vec<f64>),
    /// Constant state factor: block functions do not depend on the state.
    Constant,
}

/// Per-output-dimension configuration: which state coordinates feed the
/// kernels, the ladder itself, and an optional per-dimension update
/// configuration overriding the shared one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimConfig {
    pub state_features: Vec<usize>,
    pub kernels: DimKernels,
    #[serde(default)]
    pub apfbs: Option<ApfbsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredConfig {
    pub state_dim: usize,
    pub input_dim: usize,
    /// Weight on the p- and f-block kernels.
    pub tau_p: f64,
    pub r_max: usize,
    pub apfbs: ApfbsConfig,
    /// One entry per output dimension.
    pub dims: Vec<DimConfig>,
}

impl StructuredConfig {
    /// All state features with the given ladder for every dimension.
    pub fn uniform(
        state_dim: usize,
        input_dim: usize,
        sigmas: &[f64],
        tau_p: f64,
        r_max: usize,
        apfbs: ApfbsConfig,
    ) -> Self {
        let dims = (0..state_dim)
            .map(|_| DimConfig {
                state_features: (0..state_dim).collect(),
                kernels: DimKernels::Gaussian(sigmas.to_vec()),
                apfbs: None,
            })
            .collect();
        StructuredConfig {
            state_dim,
            input_dim,
            tau_p,
            r_max,
            apfbs,
            dims,
        }
    }
}

/// Default scale ladder for the model blocks.
pub const DEFAULT_SIGMAS: [f64; 6] = [50.0, 30.0, 10.0, 5.0, 2.0, 1.0];

fn dim_kernels(cfg: &StructuredConfig, dim: &DimConfig) -> (Vec<KernelSpec>, Vec<Block>) {
    let sx = dim.state_features.len();
    let nu = cfg.input_dim;
    let mut kernels = Vec::new();
    let mut blocks = Vec::new();
    let state_factor = |sigma: Option<f64>| -> KernelSpec {
        match sigma {
            Some(s) if sx > 0 => KernelSpec::gaussian(s, sx),
            _ => KernelSpec::constant(),
        }
    };
    let ladder: Vec<Option<f64>> = match &dim.kernels {
        DimKernels::Gaussian(sigmas) => sigmas.iter().map(|s| Some(*s)).collect(),
        DimKernels::Constant => vec![None],
    };
    for sigma in ladder {
        let joint = match sigma {
            Some(s) => KernelSpec::gaussian(s, sx + nu),
            None => KernelSpec::constant(),
        };
        kernels.push(KernelSpec::weighted(cfg.tau_p, joint));
        blocks.push(Block::P);
        kernels.push(KernelSpec::weighted(
            cfg.tau_p,
            KernelSpec::tensor(state_factor(sigma), KernelSpec::constant(), sx),
        ));
        blocks.push(Block::F);
        kernels.push(KernelSpec::tensor(state_factor(sigma), KernelSpec::linear(), sx));
        blocks.push(Block::G);
    }
    (kernels, blocks)
}

/// The exact control-affine part of a learned model at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExtract {
    pub f_hat: Vec<f64>,
    /// n_x × n_u.
    pub g_hat: DMatrix<f64>,
}

/// ℓ1 mass and atom count per block, per output dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockMass {
    pub l1: [f64; 3],
    pub atoms: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub per_dim: Vec<BlockMass>,
}

impl SparsityReport {
    pub fn total(&self, block: Block) -> f64 {
        self.per_dim.iter().map(|d| d.l1[block as usize]).sum()
    }
}

/// One sparse multikernel filter per output dimension, each with its own
/// recent-pair window and block bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredModel {
    config: StructuredConfig,
    filters: Vec<FilterState>,
    /// Kernel index → block, per dimension.
    blocks: Vec<Vec<Block>>,
    windows: Vec<TransitionWindow>,
}

impl StructuredModel {
    pub fn new(config: StructuredConfig) -> Self {
        assert_eq!(config.dims.len(), config.state_dim);
        let mut filters = Vec::new();
        let mut blocks = Vec::new();
        let mut windows = Vec::new();
        for dim in &config.dims {
            let (kernels, blk) = dim_kernels(&config, dim);
            filters.push(FilterState::new(kernels, config.r_max));
            blocks.push(blk);
            let window = dim.apfbs.unwrap_or(config.apfbs).window;
            windows.push(TransitionWindow::new(window));
        }
        StructuredModel {
            config,
            filters,
            blocks,
            windows,
        }
    }

    pub fn config(&self) -> &StructuredConfig {
        &self.config
    }

    pub fn filters(&self) -> &[FilterState] {
        &self.filters
    }

    fn project_input(&self, dim: usize, x: &[f64], u: &[f64]) -> Vec<f64> {
        let feats = &self.config.dims[dim].state_features;
        let mut z = Vec::with_capacity(feats.len() + u.len());
        for &i in feats {
            z.push(x[i]);
        }
        z.extend_from_slice(u);
        z
    }

    /// Predicted one-step shift `δ̂(x, u)`, one entry per output dimension.
    pub fn predict_delta(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, FilterError> {
        assert_eq!(x.len(), self.config.state_dim);
        assert_eq!(u.len(), self.config.input_dim);
        (0..self.config.state_dim)
            .map(|i| self.filters[i].predict(&self.project_input(i, x, u)))
            .collect()
    }

    /// Admission followed by the windowed coefficient update, per output
    /// dimension, on the observed transition.
    pub fn update(&mut self, x: &[f64], u: &[f64], x_next: &[f64]) -> Result<(), FilterError> {
        for i in 0..self.config.state_dim {
            let cfg = self.config.dims[i].apfbs.unwrap_or(self.config.apfbs);
            let z = self.project_input(i, x, u);
            let delta = x_next[i] - x[i];
            self.windows[i].push(z.clone(), delta);
            self.filters[i].admit_or_skip(&z, delta, &cfg)?;
            self.filters[i].apfbs_update(&self.windows[i], &cfg)?;
        }
        Ok(())
    }

    /// Prediction restricted to one block's atoms.
    fn block_predict(&self, dim: usize, block: Block, z: &[f64]) -> Result<f64, FilterError> {
        use crate::kernels::Kernel;
        let filter = &self.filters[dim];
        let mut acc = 0.0;
        for (atom, h) in filter.dict.atoms().iter().zip(&filter.coeffs) {
            if self.blocks[dim][atom.kernel] == block {
                acc += h * filter.dict.kernels()[atom.kernel].eval(z, &atom.center)?;
            }
        }
        Ok(acc)
    }

    /// Reads off `f̂(x)` and `ĝ(x)` exactly: the f-block ignores the input
    /// factor and the g-block is linear in it, so evaluating at `u = 0`
    /// and at the unit inputs recovers the affine pieces.
    pub fn extract_affine(&self, x: &[f64]) -> Result<AffineExtract, FilterError> {
        let nx = self.config.state_dim;
        let nu = self.config.input_dim;
        let mut f_hat = vec![0.0; nx];
        let mut g_hat = DMatrix::zeros(nx, nu);
        let zero_u = vec![0.0; nu];
        for i in 0..nx {
            let z0 = self.project_input(i, x, &zero_u);
            f_hat[i] = self.block_predict(i, Block::F, &z0)?;
            for j in 0..nu {
                let mut ej = vec![0.0; nu];
                ej[j] = 1.0;
                let zj = self.project_input(i, x, &ej);
                g_hat[(i, j)] = self.block_predict(i, Block::G, &zj)?;
            }
        }
        Ok(AffineExtract { f_hat, g_hat })
    }

    /// Residual-block prediction `p̂(x, u)`.
    pub fn p_component(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, FilterError> {
        (0..self.config.state_dim)
            .map(|i| self.block_predict(i, Block::P, &self.project_input(i, x, u)))
            .collect()
    }

    pub fn sparsity_report(&self) -> SparsityReport {
        let per_dim = (0..self.config.state_dim)
            .map(|i| {
                let mut mass = BlockMass::default();
                let filter = &self.filters[i];
                for (atom, h) in filter.dict.atoms().iter().zip(&filter.coeffs) {
                    let b = self.blocks[i][atom.kernel] as usize;
                    mass.l1[b] += h.abs();
                    mass.atoms[b] += 1;
                }
                mass
            })
            .collect();
        SparsityReport { per_dim }
    }

    pub fn prune_zero_atoms(&mut self, tol: f64) -> usize {
        self.filters.iter_mut().map(|f| f.prune_zero_atoms(tol)).sum()
    }
}

/// Basis evaluator `(x, u) ↦ Ξ ∈ R^{n_x × r}` for the parametric tracker.
pub type BasisFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Outcome of one parametric update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParametricUpdate {
    Applied { residual: f64 },
    /// ΞΞᵀ was too ill-conditioned to invert; the step was skipped.
    SkippedIllConditioned { cond: f64 },
}

/// Normalized least-mean-squares tracker for dynamics written as
/// `x_{n+1} = Ξ(x_n, u_n)·h`. Each update is a relaxed projection onto
/// the affine set of parameters consistent with the latest observation,
/// which is what gives the monotone approach to any consistent parameter.
#[derive(Clone)]
pub struct ParametricModel {
    pub coeffs: DVector<f64>,
    /// Step size λ ∈ (0, 2); λ = 1 lands exactly on the consistent set.
    pub step: f64,
    basis: BasisFn,
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("coeffs", &self.coeffs)
            .field("step", &self.step)
            .finish()
    }
}

impl ParametricModel {
    pub fn new(initial: Vec<f64>, step: f64, basis: BasisFn) -> Self {
        assert!(step > 0.0 && step < 2.0);
        ParametricModel {
            coeffs: DVector::from_vec(initial),
            step,
            basis,
        }
    }

    pub fn predict(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        (self.basis)(x, u) * &self.coeffs
    }

    pub fn update(&mut self, x: &[f64], u: &[f64], x_next: &[f64]) -> ParametricUpdate {
        let xi = (self.basis)(x, u);
        let gram = &xi * xi.transpose();
        let svd = gram.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > 1e12 {
            return ParametricUpdate::SkippedIllConditioned { cond };
        }
        let residual = &xi * &self.coeffs - DVector::from_column_slice(x_next);
        let solved = svd
            .solve(&residual, 0.0)
            .expect("conditioned system must solve");
        self.coeffs -= self.step * xi.transpose() * solved;
        ParametricUpdate::Applied {
            residual: residual.norm(),
        }
    }

    /// Affine split of the prediction: `x̂_{n+1} − x = f̂(x) + ĝ(x)u`.
    pub fn affine_shift(&self, x: &[f64], input_dim: usize) -> AffineExtract {
        let zero_u = vec![0.0; input_dim];
        let base = self.predict(x, &zero_u);
        let f_hat: Vec<f64> = base.iter().zip(x).map(|(p, xi)| p - xi).collect();
        let mut g_hat = DMatrix::zeros(x.len(), input_dim);
        for j in 0..input_dim {
            let mut ej = vec![0.0; input_dim];
            ej[j] = 1.0;
            let col = self.predict(x, &ej) - &base;
            for i in 0..x.len() {
                g_hat[(i, j)] = col[i];
            }
        }
        AffineExtract { f_hat, g_hat }
    }
}

/// The dynamics estimators the experiment loop can drive.
#[derive(Clone)]
pub enum DynamicsLearner {
    Structured(StructuredModel),
    Parametric {
        model: ParametricModel,
        input_dim: usize,
    },
    /// Conjugate Bayesian linear regression over the same basis; the
    /// posterior mean plays the role of the point estimate.
    BayesLinear {
        state: BayesLinearState,
        basis: BasisFn,
        input_dim: usize,
    },
}

impl fmt::Debug for DynamicsLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsLearner::Structured(m) => f.debug_tuple("Structured").field(m).finish(),
            DynamicsLearner::Parametric { model, .. } => {
                f.debug_tuple("Parametric").field(model).finish()
            }
            DynamicsLearner::BayesLinear { state, .. } => {
                f.debug_tuple("BayesLinear").field(state).finish()
            }
        }
    }
}

impl DynamicsLearner {
    pub fn affine_at(&self, x: &[f64]) -> AffineExtract {
        match self {
            DynamicsLearner::Structured(m) => m
                .extract_affine(x)
                .expect("structured extraction cannot fail on aligned state"),
            DynamicsLearner::Parametric { model, input_dim } => {
                model.affine_shift(x, *input_dim)
            }
            DynamicsLearner::BayesLinear {
                state,
                basis,
                input_dim,
            } => {
                let mean = state.posterior_mean();
                let zero_u = vec![0.0; *input_dim];
                let base = basis(x, &zero_u) * &mean;
                let f_hat: Vec<f64> = base.iter().zip(x).map(|(p, xi)| p - xi).collect();
                let mut g_hat = DMatrix::zeros(x.len(), *input_dim);
                for j in 0..*input_dim {
                    let mut ej = vec![0.0; *input_dim];
                    ej[j] = 1.0;
                    let col = basis(x, &ej) * &mean - &base;
                    for i in 0..x.len() {
                        g_hat[(i, j)] = col[i];
                    }
                }
                AffineExtract { f_hat, g_hat }
            }
        }
    }

    pub fn update(&mut self, x: &[f64], u: &[f64], x_next: &[f64]) {
        match self {
            DynamicsLearner::Structured(m) => {
                m.update(x, u, x_next).expect("aligned structured update");
            }
            DynamicsLearner::Parametric { model, .. } => {
                model.update(x, u, x_next);
            }
            DynamicsLearner::BayesLinear { state, basis, .. } => {
                state.update(&basis(x, u), &DVector::from_column_slice(x_next));
            }
        }
    }

    /// Current point-estimate coefficients, when the learner has a flat
    /// parameter vector to compare against a known target.
    pub fn coefficients(&self) -> Option<DVector<f64>> {
        match self {
            DynamicsLearner::Structured(_) => None,
            DynamicsLearner::Parametric { model, .. } => Some(model.coeffs.clone()),
            DynamicsLearner::BayesLinear { state, .. } => Some(state.posterior_mean()),
        }
    }
}
