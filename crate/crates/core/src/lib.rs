//! Barrier-certified adaptive reinforcement learning for discrete-time,
//! possibly nonstationary, control-affine-dominant dynamics.
//!
//! The pieces, bottom up:
//!
//! - [`kernels`]: positive-definite kernel specs and Gram utilities.
//! - [`adafilter`]: the sparse multikernel adaptive filter (windowed
//!   hyperslab projections + ℓ1 prox) every estimator here runs on.
//! - [`structmodel`]: model learning in the direct sum
//!   `H_p ⊕ H_f⊗H_c ⊕ H_g⊗H_u`, exact control-affine extraction, and the
//!   parametric tracker for known bases.
//! - [`barrier`]: discrete-time exponential control barrier certificates,
//!   the convex certified input set, a globally optimal linear-objective
//!   safe-control solver, and certified rejection sampling.
//! - [`valuerl`]: action-value learning as supervised regression on
//!   transition pairs, barrier-certified greedy policy improvement, and
//!   the certified learning loop.
//! - [`gpbaseline`]: GP SARSA posteriors (two equivalent routes), the
//!   frozen-dictionary variant, and Bayesian linear model learning.
//! - [`envs`]: the quadrotor and unicycle simulation plants with
//!   scheduled dynamics switches and relocations.

pub mod adafilter;
pub mod barrier;
pub mod envs;
pub mod gpbaseline;
pub mod kernels;
pub mod structmodel;
pub mod valuerl;

pub use adafilter::{ApfbsConfig, Dictionary, FilterState, TransitionWindow};
pub use barrier::{BarrierFn, BarrierSpec, SafeInputProblem};
pub use kernels::{eval_kernel, gram_matrix, Kernel, KernelSpec};
pub use structmodel::{AffineExtract, DynamicsLearner, ParametricModel, StructuredModel};
pub use valuerl::{Agent, GreedyPolicy, QKernelSpec, QModel};
