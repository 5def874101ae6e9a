//! Positive-definite kernels and Gram-matrix utilities.
//!
//! Every learner in this crate evaluates functions as finite expansions
//! `f(z) = Σ_j h_j κ_m(z, z̃_j)`, so the kernel set here is the common
//! vocabulary: normalized Gaussians, polynomials, the linear and constant
//! kernels, plus the closure operations (positive weighting, tensor
//! products over input blocks, pointwise sums) that keep everything
//! positive definite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel expects inputs of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel inputs have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("tensor split {split} exceeds input length {len}")]
    BadSplit { split: usize, len: usize },
}

/// Anything that evaluates like a reproducing kernel on flat `f64` inputs.
///
/// Implemented by [`KernelSpec`] and by the paired Bellman kernel in
/// `valuerl`, so the adaptive filter can run over either.
pub trait Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError>;
}

/// Immutable descriptor of a positive-definite kernel.
///
/// Composite variants own their children, so a spec is a tree built once
/// and shared freely; evaluation never mutates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// `exp(-‖a-b‖²/2σ²) / (2πσ²)^{L/2}` on inputs of dimension `L`.
    Gaussian { sigma: f64, dim: usize },
    /// `(aᵀb + c)^d` with `c ≥ 0`, `d ≥ 1`.
    Polynomial { offset: f64, degree: u32 },
    /// `aᵀb`.
    Linear,
    /// Always 1.
    Constant,
    /// `τ·κ(a,b)` for `τ > 0`.
    Weighted { tau: f64, inner: Box<KernelSpec> },
    /// `left(a[..split], b[..split]) · right(a[split..], b[split..])`.
    Tensor {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
        split: usize,
    },
    /// Pointwise sum of the parts.
    Sum(Vec<KernelSpec>),
}

impl KernelSpec {
    pub fn gaussian(sigma: f64, dim: usize) -> Self {
        assert!(sigma > 0.0, "gaussian scale must be positive, got {sigma}");
        assert!(dim > 0, "gaussian input dimension must be positive");
        KernelSpec::Gaussian { sigma, dim }
    }

    pub fn polynomial(offset: f64, degree: u32) -> Self {
        assert!(offset >= 0.0, "polynomial offset must be nonnegative");
        assert!(degree >= 1, "polynomial degree must be positive");
        KernelSpec::Polynomial { offset, degree }
    }

    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    pub fn constant() -> Self {
        KernelSpec::Constant
    }

    pub fn weighted(tau: f64, inner: KernelSpec) -> Self {
        assert!(tau > 0.0, "kernel weight must be positive, got {tau}");
        KernelSpec::Weighted {
            tau,
            inner: Box::new(inner),
        }
    }

    pub fn tensor(left: KernelSpec, right: KernelSpec, split: usize) -> Self {
        KernelSpec::Tensor {
            left: Box::new(left),
            right: Box::new(right),
            split,
        }
    }

    pub fn sum(parts: Vec<KernelSpec>) -> Self {
        assert!(!parts.is_empty(), "kernel sum needs at least one part");
        KernelSpec::Sum(parts)
    }

    /// The control-input kernel `κ^u(u,v) = 1 + ¼·uᵀv` used by the
    /// action-value learner; affine in each argument, which is what makes
    /// greedy policy objectives linear in the input.
    pub fn control_offset() -> Self {
        KernelSpec::sum(vec![
            KernelSpec::constant(),
            KernelSpec::weighted(0.25, KernelSpec::linear()),
        ])
    }

    /// Expected input dimension, when the spec pins one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::Gaussian { dim, .. } => Some(*dim),
            KernelSpec::Polynomial { .. } | KernelSpec::Linear | KernelSpec::Constant => None,
            KernelSpec::Weighted { inner, .. } => inner.input_dim(),
            // The left block always spans exactly `split` entries; the total
            // is pinned only when the right block pins its own length.
            KernelSpec::Tensor { right, split, .. } => right.input_dim().map(|r| split + r),
            KernelSpec::Sum(parts) => parts.iter().find_map(|p| p.input_dim()),
        }
    }
}

impl Kernel for KernelSpec {
    fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        if a.len() != b.len() {
            return Err(KernelError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        eval_inner(self, a, b)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn eval_inner(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    match spec {
        KernelSpec::Gaussian { sigma, dim } => {
            if a.len() != *dim {
                return Err(KernelError::DimensionMismatch {
                    expected: *dim,
                    got: a.len(),
                });
            }
            let s2 = sigma * sigma;
            let norm = (2.0 * std::f64::consts::PI * s2).powf(*dim as f64 / 2.0);
            Ok((-sq_dist(a, b) / (2.0 * s2)).exp() / norm)
        }
        KernelSpec::Polynomial { offset, degree } => Ok((dot(a, b) + offset).powi(*degree as i32)),
        KernelSpec::Linear => Ok(dot(a, b)),
        KernelSpec::Constant => Ok(1.0),
        KernelSpec::Weighted { tau, inner } => Ok(tau * eval_inner(inner, a, b)?),
        KernelSpec::Tensor { left, right, split } => {
            if *split > a.len() {
                return Err(KernelError::BadSplit {
                    split: *split,
                    len: a.len(),
                });
            }
            let l = eval_inner(left, &a[..*split], &b[..*split])?;
            let r = eval_inner(right, &a[*split..], &b[*split..])?;
            Ok(l * r)
        }
        KernelSpec::Sum(parts) => {
            let mut acc = 0.0;
            for p in parts {
                acc += eval_inner(p, a, b)?;
            }
            Ok(acc)
        }
    }
}

/// κ(a, b) with dimension checking.
pub fn eval_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    spec.eval(a, b)
}

/// Gram matrix `G[i][j] = κ(points[i], points[j])`; empty input gives a
/// 0×0 matrix. Filled symmetrically from the upper triangle.
pub fn gram_matrix<K: Kernel>(kernel: &K, points: &[Vec<f64>]) -> Result<DMatrix<f64>, KernelError> {
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&points[i], &points[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Smallest eigenvalue of a symmetric matrix; the PSD test oracle.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_variants() -> Vec<(KernelSpec, usize)> {
        vec![
            (KernelSpec::gaussian(1.0, 3), 3),
            (KernelSpec::gaussian(2.0, 2), 2),
            (KernelSpec::polynomial(1.0, 2), 3),
            (KernelSpec::linear(), 3),
            (KernelSpec::constant(), 3),
            (KernelSpec::weighted(0.1, KernelSpec::gaussian(1.0, 3)), 3),
            (
                KernelSpec::tensor(KernelSpec::gaussian(1.0, 2), KernelSpec::control_offset(), 2),
                4,
            ),
            (KernelSpec::control_offset(), 2),
        ]
    }

    fn rand_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn gaussian_at_zero_distance() {
        let k = KernelSpec::gaussian(1.0, 1);
        let v = eval_kernel(&k, &[0.0], &[0.0]).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-7);
        assert!((v - 0.3989423).abs() < 1e-7);
    }

    #[test]
    fn linear_is_dot_product() {
        let k = KernelSpec::polynomial(0.0, 1);
        assert_eq!(eval_kernel(&k, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(eval_kernel(&KernelSpec::linear(), &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn weighted_constant_is_tau() {
        let k = KernelSpec::weighted(0.1, KernelSpec::constant());
        assert_eq!(eval_kernel(&k, &[5.0], &[-3.0]).unwrap(), 0.1);
    }

    #[test]
    fn tensor_with_control_kernel() {
        // Product of gaussian(0,0) and κ^u(2,2) = 1 + ¼·4 = 2.
        let k = KernelSpec::tensor(KernelSpec::gaussian(1.0, 1), KernelSpec::control_offset(), 1);
        let v = eval_kernel(&k, &[0.0, 2.0], &[0.0, 2.0]).unwrap();
        assert!((v - 0.7978846).abs() < 1e-7);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let k = KernelSpec::gaussian(1.0, 2);
        assert!(matches!(
            eval_kernel(&k, &[0.0], &[0.0]),
            Err(KernelError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            eval_kernel(&KernelSpec::linear(), &[0.0], &[0.0, 1.0]),
            Err(KernelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gram_of_constant_kernel_is_all_ones() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let g = gram_matrix(&KernelSpec::constant(), &pts).unwrap();
        assert_eq!(g.nrows(), 3);
        assert!(g.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gram_of_single_point_is_prefactor() {
        let g = gram_matrix(&KernelSpec::gaussian(1.0, 1), &[vec![0.3]]).unwrap();
        assert!((g[(0, 0)] - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_gram_is_empty() {
        let g = gram_matrix(&KernelSpec::constant(), &[]).unwrap();
        assert_eq!(g.nrows(), 0);
    }

    #[test]
    fn gram_psd_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = KernelSpec::gaussian(2.0, 2);
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let g = gram_matrix(&k, &pts).unwrap();
        assert!(min_eigenvalue(&g) >= -1e-8);
    }

    #[test]
    fn every_variant_symmetric_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (spec, dim) in all_variants() {
            for _ in 0..1000 {
                let a = rand_vec(&mut rng, dim);
                let b = rand_vec(&mut rng, dim);
                let ab = eval_kernel(&spec, &a, &b).unwrap();
                let ba = eval_kernel(&spec, &b, &a).unwrap();
                assert!((ab - ba).abs() <= 1e-12, "asymmetry in {spec:?}");
            }
            let pts: Vec<Vec<f64>> = (0..60).map(|_| rand_vec(&mut rng, dim)).collect();
            let g = gram_matrix(&spec, &pts).unwrap();
            assert!(
                min_eigenvalue(&g) >= -1e-8,
                "gram not PSD for {spec:?}: min eig {}",
                min_eigenvalue(&g)
            );
        }
    }

    proptest! {
        #[test]
        fn weighting_scales_exactly(tau in 1e-6f64..10.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let inner = KernelSpec::gaussian(1.0, 1);
            let w = KernelSpec::weighted(tau, inner.clone());
            let lhs = eval_kernel(&w, &[a], &[b]).unwrap();
            let rhs = tau * eval_kernel(&inner, &[a], &[b]).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn tensor_factorizes(x in -3.0f64..3.0, u in -3.0f64..3.0, y in -3.0f64..3.0, v in -3.0f64..3.0) {
            let k1 = KernelSpec::gaussian(1.5, 1);
            let k2 = KernelSpec::control_offset();
            let t = KernelSpec::tensor(k1.clone(), k2.clone(), 1);
            let joint = eval_kernel(&t, &[x, u], &[y, v]).unwrap();
            let split = eval_kernel(&k1, &[x], &[y]).unwrap() * eval_kernel(&k2, &[u], &[v]).unwrap();
            prop_assert!((joint - split).abs() <= 1e-14);
        }
    }
}
