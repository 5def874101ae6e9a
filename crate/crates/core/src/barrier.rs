//! Discrete-time exponential control barrier certificates.
//!
//! A barrier `B` keeps the superlevel set `C = {x : B(x) ≥ 0}` forward
//! invariant when every transition satisfies
//! `B(x_{n+1}) − B(x_n) ≥ −η·B(x_n)`, and pulls trajectories back into
//! `C` geometrically when they start outside. With a control-affine
//! model `x_{n+1} = x + f̂ + ĝu` the conservative one-step certificate
//!
//! `∇B(x)ᵀ(f̂ + ĝu) + η·B(x) − (ν/2)·‖f̂ + ĝu‖² − ϱ₁ ≥ 0`
//!
//! is concave in `u`, so the certified input set is convex and a linear
//! objective can be maximized over it to global optimality. This module
//! holds the barrier shapes used by the experiments, the certified
//! margin, a globally optimal linear-objective solver over the certified
//! box, rejection sampling of certified inputs, and the Lyapunov-style
//! diagnostic combining barrier violation with model-parameter distance.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::wrap_angle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("no certified input in the box; best min-margin {min_margin:.6e} at {witness:?}")]
    Infeasible { witness: Vec<f64>, min_margin: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Barrier shapes used across the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BarrierFn {
    /// `B(x) = normalᵀx + offset`.
    Affine { normal: Vec<f64>, offset: f64 },
    /// `B(x) = r² − ‖x − center‖²`.
    QuadraticBall { center: Vec<f64>, radius_sq: f64 },
    /// Orientation-augmented box face for a planar heading state
    /// `[x, y, θ]`: the planar affine barrier minus `υ·Γ(|θ − θ*|)` where
    /// `θ* = atan2(n_y, n_x)` points along the inward normal and the
    /// angular distance is wrapped to [−π, π]. Γ is the identity here.
    /// The θ-gradient has kinks where the wrapped distance hits 0 or ±π;
    /// those are left as-is.
    Oriented {
        normal_xy: [f64; 2],
        offset: f64,
        upsilon: f64,
    },
}

impl BarrierFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BarrierFn::Affine { normal, offset } => {
                normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() + offset
            }
            BarrierFn::QuadraticBall { center, radius_sq } => {
                radius_sq - center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum::<f64>()
            }
            BarrierFn::Oriented {
                normal_xy,
                offset,
                upsilon,
            } => {
                let base = normal_xy[0] * x[0] + normal_xy[1] * x[1] + offset;
                let target = normal_xy[1].atan2(normal_xy[0]);
                base - upsilon * wrap_angle(x[2] - target).abs()
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BarrierFn::Affine { normal, .. } => normal.clone(),
            BarrierFn::QuadraticBall { center, .. } => {
                center.iter().zip(x).map(|(c, v)| -2.0 * (v - c)).collect()
            }
            BarrierFn::Oriented {
                normal_xy, upsilon, ..
            } => {
                let target = normal_xy[1].atan2(normal_xy[0]);
                let d = wrap_angle(x[2] - target);
                vec![normal_xy[0], normal_xy[1], -upsilon * d.signum()]
            }
        }
    }

    /// Heading that maximizes the orientation penalty term, i.e. the
    /// inward direction an agent should turn toward. Zero for barriers
    /// without a heading coordinate.
    pub fn inward_heading(&self) -> f64 {
        match self {
            BarrierFn::Oriented { normal_xy, .. } => normal_xy[1].atan2(normal_xy[0]),
            _ => 0.0,
        }
    }
}

/// A barrier together with its certificate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub barrier: BarrierFn,
    /// Decay rate η ∈ (0, 1].
    pub eta: f64,
    /// Lipschitz constant of ∇B along reachable segments (0 for affine).
    pub nu: f64,
    /// Certificate margin ϱ₁ ≥ 0 absorbing model error.
    pub rho1: f64,
    /// Lipschitz constant of B itself; bookkeeping for the stability
    /// diagnostic, not used by the margin.
    pub nu_b: f64,
}

impl BarrierSpec {
    pub fn new(barrier: BarrierFn, eta: f64) -> Self {
        assert!(eta > 0.0 && eta <= 1.0, "eta must lie in (0,1], got {eta}");
        let (nu, nu_b) = match &barrier {
            BarrierFn::Affine { normal, .. } => {
                (0.0, normal.iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            BarrierFn::QuadraticBall { .. } => (2.0, 1.0),
            BarrierFn::Oriented {
                normal_xy, upsilon, ..
            } => (
                0.0,
                (normal_xy[0] * normal_xy[0] + normal_xy[1] * normal_xy[1] + upsilon * upsilon)
                    .sqrt(),
            ),
        };
        BarrierSpec {
            barrier,
            eta,
            nu,
            rho1: 0.0,
            nu_b,
        }
    }

    pub fn with_rho1(mut self, rho1: f64) -> Self {
        assert!(rho1 >= 0.0);
        self.rho1 = rho1;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        assert!(nu >= 0.0);
        self.nu = nu;
        self
    }
}

/// Certificate residual `B(x_{n+1}) − (1 − η)·B(x_n)`; the transition is
/// certified exactly when this is nonnegative.
pub fn dcbf_residual(spec: &BarrierSpec, x: &[f64], x_next: &[f64]) -> f64 {
    spec.barrier.eval(x_next) - (1.0 - spec.eta) * spec.barrier.eval(x)
}

/// One safe-input query: the learned affine model at the current state,
/// the barrier list, and the input box.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeInputProblem {
    pub x: Vec<f64>,
    pub f_hat: Vec<f64>,
    /// n_x × n_u.
    pub g_hat: DMatrix<f64>,
    pub barriers: Vec<BarrierSpec>,
    /// Per-coordinate input bounds.
    pub bounds: Vec<(f64, f64)>,
}

impl SafeInputProblem {
    pub fn input_dim(&self) -> usize {
        self.bounds.len()
    }

    fn shift(&self, u: &[f64]) -> Vec<f64> {
        let mut s = self.f_hat.clone();
        for (i, si) in s.iter_mut().enumerate() {
            for (j, uj) in u.iter().enumerate() {
                *si += self.g_hat[(i, j)] * uj;
            }
        }
        s
    }

    /// The concave certified margin of one barrier at input `u`:
    /// `∇B(x)ᵀ(f̂+ĝu) + ηB(x) − (ν/2)‖f̂+ĝu‖² − ϱ₁`.
    pub fn certified_margin(&self, spec: &BarrierSpec, u: &[f64]) -> f64 {
        let shift = self.shift(u);
        let grad = spec.barrier.grad(&self.x);
        let lin: f64 = grad.iter().zip(&shift).map(|(g, s)| g * s).sum();
        let norm_sq: f64 = shift.iter().map(|s| s * s).sum();
        lin + spec.eta * spec.barrier.eval(&self.x) - 0.5 * spec.nu * norm_sq - spec.rho1
    }

    /// Smallest margin over all barriers; +∞ when there are none.
    pub fn min_margin(&self, u: &[f64]) -> f64 {
        self.barriers
            .iter()
            .map(|b| self.certified_margin(b, u))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_box(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn is_certified(&self, u: &[f64]) -> bool {
        self.min_margin(u) >= 0.0
    }

    fn box_midpoint(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    fn clamp_box(&self, u: &mut [f64]) {
        for (v, (lo, hi)) in u.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Result of a safe-control solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeControl {
    pub input: Vec<f64>,
    pub objective: f64,
    pub min_margin: f64,
}

/// Maximize `a + bᵀu` over the box intersected with every certified
/// margin. The feasible set is convex and the objective linear, so local
/// optimality implies global optimality; the solver seeds from a
/// max-min-margin interior point, runs projected ascent with bisection
/// back to feasibility, then polishes with a shrinking local grid and
/// an active-constraint tangent walk. One input dimension is solved in
/// closed form. Errors with the best-effort witness when no input in the
/// box is certified.
pub fn solve_safe_control(
    problem: &SafeInputProblem,
    offset: f64,
    gradient: &[f64],
) -> Result<SafeControl, BarrierError> {
    if gradient.len() != problem.input_dim() {
        return Err(BarrierError::Dimension(format!(
            "objective gradient has length {}, box has {}",
            gradient.len(),
            problem.input_dim()
        )));
    }
    let result = if problem.input_dim() == 1 {
        solve_univariate(problem, gradient[0])
    } else {
        solve_multivariate(problem, gradient)
    }?;
    Ok(SafeControl {
        objective: offset + dot(gradient, &result),
        min_margin: problem.min_margin(&result),
        input: result,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// n_u = 1: each margin is a concave quadratic in u, so the certified set
/// is an interval obtained from quadratic roots.
fn solve_univariate(problem: &SafeInputProblem, slope: f64) -> Result<Vec<f64>, BarrierError> {
    let (mut lo, mut hi) = problem.bounds[0];
    for spec in &problem.barriers {
        // margin(u) = c2·u² + c1·u + c0 with c2 ≤ 0.
        let m0 = problem.certified_margin(spec, &[0.0]);
        let m1 = problem.certified_margin(spec, &[1.0]);
        let mm1 = problem.certified_margin(spec, &[-1.0]);
        let c2 = 0.5 * (m1 + mm1) - m0;
        let c1 = 0.5 * (m1 - mm1);
        let c0 = m0;
        if c2.abs() < 1e-14 {
            if c1.abs() < 1e-14 {
                if c0 < 0.0 {
                    lo = f64::INFINITY;
                    hi = f64::NEG_INFINITY;
                }
            } else if c1 > 0.0 {
                lo = lo.max(-c0 / c1);
            } else {
                hi = hi.min(-c0 / c1);
            }
        } else {
            let disc = c1 * c1 - 4.0 * c2 * c0;
            if disc < 0.0 {
                // Concave and never nonnegative.
                lo = f64::INFINITY;
                hi = f64::NEG_INFINITY;
            } else {
                let root = disc.sqrt();
                let r1 = (-c1 + root) / (2.0 * c2);
                let r2 = (-c1 - root) / (2.0 * c2);
                lo = lo.max(r1.min(r2));
                hi = hi.min(r1.max(r2));
            }
        }
    }
    if lo > hi {
        let witness = best_effort_point(problem);
        return Err(BarrierError::Infeasible {
            min_margin: problem.min_margin(&witness),
            witness,
        });
    }
    let u = if slope > 0.0 {
        hi
    } else if slope < 0.0 {
        lo
    } else {
        0.5 * (lo + hi)
    };
    // Quadratic roots can sit a hair outside by rounding; nudge inward.
    let u = nudge_feasible(problem, vec![u]);
    Ok(u)
}

/// Best certified point found by maximizing the min-margin (concave):
/// coarse grid multistart plus projected supergradient ascent.
fn best_effort_point(problem: &SafeInputProblem) -> Vec<f64> {
    let n = problem.input_dim();
    let mut best = problem.box_midpoint();
    let mut best_margin = problem.min_margin(&best);
    // Coarse grid: 9 points per axis for n ≤ 2, midpoint-only beyond.
    if n <= 2 {
        let steps = 9;
        let axis: Vec<Vec<f64>> = problem
            .bounds
            .iter()
            .map(|(lo, hi)| {
                (0..steps)
                    .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; n];
        loop {
            let u: Vec<f64> = idx.iter().enumerate().map(|(d, &i)| axis[d][i]).collect();
            let m = problem.min_margin(&u);
            if m > best_margin {
                best_margin = m;
                best = u;
            }
            let mut d = 0;
            loop {
                if d == n {
                    break;
                }
                idx[d] += 1;
                if idx[d] < steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
    }
    // Projected supergradient ascent on u ↦ min_k margin_k(u).
    let scale: f64 = problem
        .bounds
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max);
    let mut u = best.clone();
    for iter in 1..=400 {
        let margins: Vec<f64> = problem
            .barriers
            .iter()
            .map(|b| problem.certified_margin(b, &u))
            .collect();
        let Some((k, _)) = margins
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        else {
            break;
        };
        let g = margin_gradient(problem, &problem.barriers[k], &u);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-15 {
            break;
        }
        let step = 0.5 * scale / (iter as f64).sqrt() / gnorm;
        for (ui, gi) in u.iter_mut().zip(&g) {
            *ui += step * gi;
        }
        problem.clamp_box(&mut u);
        let m = problem.min_margin(&u);
        if m > best_margin {
            best_margin = m;
            best = u.clone();
        }
    }
    best
}

/// ∇_u margin = ĝᵀ∇B − ν·ĝᵀ(f̂ + ĝu).
fn margin_gradient(problem: &SafeInputProblem, spec: &BarrierSpec, u: &[f64]) -> Vec<f64> {
    let grad_b = spec.barrier.grad(&problem.x);
    let shift = problem.shift(u);
    let n_u = problem.input_dim();
    let mut g = vec![0.0; n_u];
    for (j, gj) in g.iter_mut().enumerate() {
        for i in 0..problem.f_hat.len() {
            *gj += problem.g_hat[(i, j)] * (grad_b[i] - spec.nu * shift[i]);
        }
    }
    g
}

fn nudge_feasible(problem: &SafeInputProblem, mut u: Vec<f64>) -> Vec<f64> {
    problem.clamp_box(&mut u);
    if problem.is_certified(&u) {
        return u;
    }
    let anchor = best_effort_point(problem);
    // Bisect from the anchor toward u, keeping the certified side.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let point = |t: f64| -> Vec<f64> {
        anchor
            .iter()
            .zip(&u)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    if !problem.is_certified(&anchor) {
        return u;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if problem.is_certified(&point(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    point(lo)
}

fn solve_multivariate(problem: &SafeInputProblem, slope: &[f64]) -> Result<Vec<f64>, BarrierError> {
    let seed = best_effort_point(problem);
    if problem.min_margin(&seed) < 0.0 {
        return Err(BarrierError::Infeasible {
            min_margin: problem.min_margin(&seed),
            witness: seed,
        });
    }
    let scale: f64 = problem
        .bounds
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max);
    let slope_norm = slope.iter().map(|v| v * v).sum::<f64>().sqrt();
    if slope_norm == 0.0 {
        return Ok(seed);
    }

    // Phase 1: projected ascent along the objective, restoring
    // feasibility by bisecting back toward the last certified point.
    let mut best = seed.clone();
    let mut best_obj = dot(slope, &best);
    let mut current = seed;
    let mut step = scale;
    for _ in 0..200 {
        let mut cand: Vec<f64> = current
            .iter()
            .zip(slope)
            .map(|(u, s)| u + step * s / slope_norm)
            .collect();
        problem.clamp_box(&mut cand);
        let cand = if problem.is_certified(&cand) {
            cand
        } else {
            bisect_to_boundary(problem, &current, &cand)
        };
        let obj = dot(slope, &cand);
        if obj > best_obj + 1e-15 {
            best_obj = obj;
            best = cand.clone();
            current = cand;
        } else {
            step *= 0.5;
            if step < 1e-12 * scale {
                break;
            }
        }
    }

    // Phase 2: shrinking local grid around the incumbent. Local maxima of
    // a linear objective over a convex set are global, so this cannot
    // stall at a suboptimal interior point.
    let mut window = 0.5 * scale;
    for _ in 0..46 {
        let mut improved = false;
        let steps = 9usize;
        let n = problem.input_dim();
        let mut idx = vec![0usize; n];
        loop {
            let mut u: Vec<f64> = (0..n)
                .map(|d| best[d] + window * (idx[d] as f64 / (steps - 1) as f64 * 2.0 - 1.0))
                .collect();
            problem.clamp_box(&mut u);
            if problem.is_certified(&u) {
                let obj = dot(slope, &u);
                if obj > best_obj + 1e-16 {
                    best_obj = obj;
                    best = u;
                    improved = true;
                }
            }
            let mut d = 0;
            loop {
                if d == n {
                    break;
                }
                idx[d] += 1;
                if idx[d] < steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
        if !improved {
            window *= 0.5;
        }
        if window < 1e-10 * scale {
            break;
        }
    }

    // Phase 3: tangent walk along whichever margin is active, correcting
    // back onto the constraint surface. Handles boundary optima that the
    // axis-aligned grid approaches slowly.
    if problem.input_dim() == 2 {
        best = tangent_polish(problem, slope, best, &mut best_obj);
    }
    Ok(best)
}

fn bisect_to_boundary(problem: &SafeInputProblem, inside: &[f64], outside: &[f64]) -> Vec<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let point = |t: f64| -> Vec<f64> {
        inside
            .iter()
            .zip(outside)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if problem.is_certified(&point(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    point(lo)
}

fn tangent_polish(
    problem: &SafeInputProblem,
    slope: &[f64],
    mut best: Vec<f64>,
    best_obj: &mut f64,
) -> Vec<f64> {
    let scale: f64 = problem
        .bounds
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max);
    let active_tol = 1e-7 * scale.max(1.0);
    for _round in 0..40 {
        let mut improved = false;
        let active: Vec<&BarrierSpec> = problem
            .barriers
            .iter()
            .filter(|b| problem.certified_margin(b, &best).abs() <= active_tol)
            .collect();
        for spec in active {
            let g = margin_gradient(problem, spec, &best);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-14 {
                continue;
            }
            // Tangent direction with positive objective component.
            let mut t = vec![-g[1] / gnorm, g[0] / gnorm];
            if dot(slope, &t) < 0.0 {
                t[0] = -t[0];
                t[1] = -t[1];
            }
            let mut step = 0.1 * scale;
            while step > 1e-12 * scale {
                let mut cand = vec![best[0] + step * t[0], best[1] + step * t[1]];
                problem.clamp_box(&mut cand);
                // Correct back to the feasible side along -g if needed.
                if !problem.is_certified(&cand) {
                    let mut corrected = cand.clone();
                    let mut corr = problem.certified_margin(spec, &corrected);
                    let mut guard = 0;
                    while corr < 0.0 && guard < 50 {
                        for (c, gi) in corrected.iter_mut().zip(&g) {
                            *c += (-corr / (gnorm * gnorm)) * gi;
                        }
                        problem.clamp_box(&mut corrected);
                        corr = problem.certified_margin(spec, &corrected);
                        guard += 1;
                    }
                    cand = corrected;
                }
                if problem.is_certified(&cand) {
                    let obj = dot(slope, &cand);
                    if obj > *best_obj + 1e-15 {
                        *best_obj = obj;
                        best = cand;
                        improved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
        }
        if !improved {
            break;
        }
    }
    best
}

/// A certified input drawn by rejection sampling, with bookkeeping for
/// acceptance-rate estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSample {
    pub input: Vec<f64>,
    pub rejected: u32,
    pub used_fallback: bool,
}

/// Uniform rejection sampling over the box until every margin is
/// nonnegative (capped at 10 000 draws), falling back to a solve with a
/// random linear objective. The returned input is always certified.
pub fn sample_safe_input(
    problem: &SafeInputProblem,
    rng: &mut impl Rng,
) -> Result<SafeSample, BarrierError> {
    let mut rejected = 0;
    for _ in 0..10_000 {
        let u: Vec<f64> = problem
            .bounds
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
            .collect();
        if problem.is_certified(&u) {
            return Ok(SafeSample {
                input: u,
                rejected,
                used_fallback: false,
            });
        }
        rejected += 1;
    }
    let slope: Vec<f64> = (0..problem.input_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let solved = solve_safe_control(problem, 0.0, &slope)?;
    Ok(SafeSample {
        input: solved.input,
        rejected,
        used_fallback: true,
    })
}

/// Candidate Lyapunov value for the augmented state: barrier violation
/// plus `c` times the distance of the model parameter to its solution
/// set; zero exactly on the augmented safe set.
pub fn lyapunov_value(barriers: &[BarrierSpec], x: &[f64], dist_to_omega: f64, c: f64) -> f64 {
    assert!(c > 0.0);
    let min_b = barriers
        .iter()
        .map(|b| b.barrier.eval(x))
        .fold(f64::INFINITY, f64::min);
    let violation = -(min_b.min(0.0));
    if violation == 0.0 && dist_to_omega == 0.0 {
        0.0
    } else {
        violation + c * dist_to_omega
    }
}

/// Flags a stretch of `window` consecutive states whose total displacement
/// stays below `threshold`; used to trigger the turn-inward override on
/// nonholonomic agents.
#[derive(Debug, Clone)]
pub struct DeadlockDetector {
    window: usize,
    threshold: f64,
    recent: Vec<Vec<f64>>,
}

impl DeadlockDetector {
    pub fn new(window: usize, threshold: f64) -> Self {
        DeadlockDetector {
            window,
            threshold,
            recent: Vec::new(),
        }
    }

    pub fn push(&mut self, position: Vec<f64>) -> bool {
        self.recent.push(position);
        if self.recent.len() > self.window {
            self.recent.remove(0);
        }
        if self.recent.len() < self.window {
            return false;
        }
        let first = &self.recent[0];
        let last = &self.recent[self.recent.len() - 1];
        let disp: f64 = first
            .iter()
            .zip(last)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        disp < self.threshold
    }

    pub fn reset(&mut self) {
        self.recent.clear();
    }
}
