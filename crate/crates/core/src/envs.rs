//! Deterministic simulation environments and reward functions: the
//! vertical-axis quadrotor with scheduled parameter switches and
//! relocations, and a control-affine nonholonomic unicycle used as the
//! desk-scale stand-in for a physical differential-drive robot.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Minimal surface the learning loop needs from a simulated plant.
pub trait ControlEnv {
    fn state(&self) -> Vec<f64>;
    fn step(&mut self, u: &[f64]) -> Vec<f64>;
}

impl ControlEnv for QuadrotorEnv {
    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn step(&mut self, u: &[f64]) -> Vec<f64> {
        QuadrotorEnv::step(self, u[0]).to_vec()
    }
}

impl ControlEnv for UnicycleEnv {
    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn step(&mut self, u: &[f64]) -> Vec<f64> {
        UnicycleEnv::step(self, &[u[0], u[1]]).to_vec()
    }
}

/// Wrap an angle to [−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = (theta + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if t < -std::f64::consts::PI {
        t += two_pi;
    }
    t
}

/// What to do with the state when a relocation fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Relocation {
    ToState(Vec<f64>),
    /// Position drawn uniformly from `[lo, hi]`, velocity zeroed.
    UniformPosition { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleEvents {
    pub switched: bool,
    pub relocated: bool,
}

/// Vertical movement of a quadrotor, written as
/// `x_{n+1} = h₁·A·x + h₂·g + h₃·g·u` with `A = [[1,Δt],[0,1]]` and
/// `g = [−Δt²/2; −Δt]`. The true parameters can switch mid-run and the
/// state can be relocated, both on a fixed schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorEnv {
    pub h_star: [f64; 3],
    pub dt: f64,
    pub state: [f64; 2],
    /// Input box; inputs are clamped to it before integrating.
    pub u_min: f64,
    pub u_max: f64,
    pub switches: Vec<(u64, [f64; 3])>,
    pub relocations: Vec<(u64, Relocation)>,
}

/// Nominal true parameters for a 27-gram vehicle: h = [1; 9.81; 1/0.027].
pub const QUADROTOR_NOMINAL: [f64; 3] = [1.0, 9.81, 1.0 / 0.027];
/// Magnitude bound on the thrust command: 2·0.027·9.81. Thrust acts
/// through the negative basis vector of the dynamics, so the input
/// variable ranges over [−u_max, 0] and the hover-cancel input is
/// −h₂/h₃ in the interior.
pub const QUADROTOR_U_MAX: f64 = 2.0 * 0.027 * 9.81;

impl QuadrotorEnv {
    pub fn nominal() -> Self {
        QuadrotorEnv {
            h_star: QUADROTOR_NOMINAL,
            dt: 0.02,
            state: [0.0, 0.0],
            u_min: -QUADROTOR_U_MAX,
            u_max: 0.0,
            switches: Vec::new(),
            relocations: Vec::new(),
        }
    }

    pub fn state(&self) -> [f64; 2] {
        self.state
    }

    /// Advance one step under the current parameters, clamping `u` to the
    /// input box. Returns the new state.
    pub fn step(&mut self, u: f64) -> [f64; 2] {
        let u = u.clamp(self.u_min, self.u_max);
        self.state = quadrotor_map(&self.h_star, self.dt, &self.state, u);
        self.state
    }

    /// Fire any switch or relocation scheduled exactly at step `n`.
    pub fn apply_schedule(&mut self, n: u64, rng: &mut impl Rng) -> ScheduleEvents {
        let mut events = ScheduleEvents::default();
        for (at, h) in &self.switches {
            if *at == n {
                self.h_star = *h;
                events.switched = true;
            }
        }
        for (at, rule) in self.relocations.clone() {
            if at == n {
                match rule {
                    Relocation::ToState(s) => self.state = [s[0], s[1]],
                    Relocation::UniformPosition { lo, hi } => {
                        self.state = [rng.gen_range(lo..hi), 0.0];
                    }
                }
                events.relocated = true;
            }
        }
        events
    }

    /// True one-step shift split into drift and input parts, for
    /// exact-model certification: `x_{n+1} − x = f(x) + g(x)·u`.
    pub fn true_affine(&self, x: &[f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let zero = quadrotor_map(&self.h_star, self.dt, x, 0.0);
        let one = quadrotor_map(&self.h_star, self.dt, x, 1.0);
        let f = vec![zero[0] - x[0], zero[1] - x[1]];
        let g = vec![one[0] - zero[0], one[1] - zero[1]];
        (f, g)
    }
}

fn quadrotor_map(h: &[f64; 3], dt: f64, x: &[f64; 2], u: f64) -> [f64; 2] {
    let drift = [x[0] + dt * x[1], x[1]];
    let gvec = [-dt * dt / 2.0, -dt];
    [
        h[0] * drift[0] + (h[1] + h[2] * u) * gvec[0],
        h[0] * drift[1] + (h[1] + h[2] * u) * gvec[1],
    ]
}

/// Basis matrix `Ξ(z)` of the quadrotor written as `x_{n+1} = Ξ(z)·h`,
/// with columns `[A·x, g, g·u]`. This is what the parametric learner fits.
pub fn quadrotor_basis(dt: f64, x: &[f64], u: f64) -> DMatrix<f64> {
    let gvec = [-dt * dt / 2.0, -dt];
    DMatrix::from_columns(&[
        DVector::from_vec(vec![x[0] + dt * x[1], x[1]]),
        DVector::from_vec(gvec.to_vec()),
        DVector::from_vec(vec![gvec[0] * u, gvec[1] * u]),
    ])
}

/// Planar unicycle with forward-only wheel speeds: exactly control-affine
/// with zero drift, which makes it the ground truth for the
/// structure-extraction tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicycleEnv {
    /// `[x, y, θ]` with θ wrapped to [−π, π].
    pub state: [f64; 3],
    pub k_v: f64,
    pub k_omega: f64,
    pub dt: f64,
    pub u_max: f64,
}

impl UnicycleEnv {
    pub fn new() -> Self {
        UnicycleEnv {
            state: [0.0, 0.0, 0.0],
            k_v: 0.5,
            k_omega: 2.0,
            dt: 0.3,
            u_max: 0.623,
        }
    }

    pub fn state(&self) -> [f64; 3] {
        self.state
    }

    pub fn step(&mut self, u: &[f64; 2]) -> [f64; 3] {
        let u1 = u[0].clamp(0.0, self.u_max);
        let u2 = u[1].clamp(0.0, self.u_max);
        let (dx, dy, dth) = self.shift(&self.state, u1, u2);
        self.state = [
            self.state[0] + dx,
            self.state[1] + dy,
            wrap_angle(self.state[2] + dth),
        ];
        self.state
    }

    fn shift(&self, s: &[f64; 3], u1: f64, u2: f64) -> (f64, f64, f64) {
        let speed = self.k_v * 0.5 * (u1 + u2) * self.dt;
        (
            speed * s[2].cos(),
            speed * s[2].sin(),
            self.k_omega * (u1 - u2) * self.dt,
        )
    }

    /// True shift split: `Δs = g(s)·u` with `f ≡ 0`, `p ≡ 0`.
    pub fn true_affine(&self, s: &[f64; 3]) -> (Vec<f64>, DMatrix<f64>) {
        let half = self.k_v * 0.5 * self.dt;
        let g = DMatrix::from_row_slice(
            3,
            2,
            &[
                half * s[2].cos(),
                half * s[2].cos(),
                half * s[2].sin(),
                half * s[2].sin(),
                self.k_omega * self.dt,
                -self.k_omega * self.dt,
            ],
        );
        (vec![0.0; 3], g)
    }
}

impl Default for UnicycleEnv {
    fn default() -> Self {
        UnicycleEnv::new()
    }
}

/// Immediate reward functions used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardSpec {
    /// `−2x² − ẋ²/2 + 12` on the quadrotor state.
    QuadrotorHover,
    /// `−(x² + y²) + 2` on the planar position.
    UnicycleOrigin,
    Constant(f64),
}

impl RewardSpec {
    pub fn eval(&self, x: &[f64], _u: &[f64]) -> f64 {
        match self {
            RewardSpec::QuadrotorHover => -2.0 * x[0] * x[0] - 0.5 * x[1] * x[1] + 12.0,
            RewardSpec::UnicycleOrigin => -(x[0] * x[0] + x[1] * x[1]) + 2.0,
            RewardSpec::Constant(c) => *c,
        }
    }

    /// Bound on |R| over the experiment's operating box, used to pick
    /// rollout horizons with a known truncation error.
    pub fn magnitude_bound(&self) -> f64 {
        match self {
            RewardSpec::QuadrotorHover => 12.0_f64.max(2.0 * 9.0 + 0.5 * 25.0 - 12.0).max(12.0),
            RewardSpec::UnicycleOrigin => 2.0_f64.max(2.0 * 1.5 * 1.5),
            RewardSpec::Constant(c) => c.abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadrotor_rest_step_matches_hand_value() {
        let mut env = QuadrotorEnv::nominal();
        let s = env.step(0.0);
        assert!((s[0] - (-0.0019620)).abs() < 1e-7, "got {}", s[0]);
        assert!((s[1] - (-0.19620)).abs() < 1e-6, "got {}", s[1]);
    }

    #[test]
    fn quadrotor_affine_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = QuadrotorEnv::nominal();
        for _ in 0..200 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0)];
            let u1 = rng.gen_range(env.u_min..env.u_max);
            let u2 = rng.gen_range(env.u_min..env.u_max);
            let s1 = quadrotor_map(&env.h_star, env.dt, &x, u1);
            let s2 = quadrotor_map(&env.h_star, env.dt, &x, u2);
            let expected = [
                env.h_star[2] * (u1 - u2) * (-env.dt * env.dt / 2.0),
                env.h_star[2] * (u1 - u2) * (-env.dt),
            ];
            assert!((s1[0] - s2[0] - expected[0]).abs() < 1e-12);
            assert!((s1[1] - s2[1] - expected[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn switch_scales_input_term() {
        let mut env = QuadrotorEnv::nominal();
        env.switches = vec![(1000, [1.0, 9.81, 5.0 / 0.027])];
        let x = [0.5, 0.2];
        env.state = x;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let before = {
            let (_, g) = env.true_affine(&x);
            g
        };
        env.apply_schedule(1000, &mut rng);
        let after = {
            let (_, g) = env.true_affine(&x);
            g
        };
        assert!((after[1] / before[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn schedule_identity_when_empty() {
        let mut env = QuadrotorEnv::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let before = env.clone();
        let ev = env.apply_schedule(42, &mut rng);
        assert_eq!(env, before);
        assert!(!ev.switched && !ev.relocated);
    }

    #[test]
    fn relocation_zeroes_velocity() {
        let mut env = QuadrotorEnv::nominal();
        env.state = [2.0, 1.0];
        env.relocations = vec![(7, Relocation::UniformPosition { lo: -3.0, hi: 3.0 })];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ev = env.apply_schedule(7, &mut rng);
        assert!(ev.relocated);
        assert!(env.state[0] >= -3.0 && env.state[0] <= 3.0);
        assert_eq!(env.state[1], 0.0);
    }

    #[test]
    fn basis_reproduces_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let env = QuadrotorEnv::nominal();
        for _ in 0..100 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0)];
            let u = rng.gen_range(env.u_min..env.u_max);
            let xi = quadrotor_basis(env.dt, &x, u);
            let h = DVector::from_vec(env.h_star.to_vec());
            let pred = &xi * &h;
            let truth = quadrotor_map(&env.h_star, env.dt, &x, u);
            assert!((pred[0] - truth[0]).abs() < 1e-14);
            assert!((pred[1] - truth[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn unicycle_basics() {
        let mut env = UnicycleEnv::new();
        let s0 = env.state();
        env.step(&[0.0, 0.0]);
        assert_eq!(env.state(), s0);

        // Equal wheels at θ=0: straight line along x.
        let mut env = UnicycleEnv::new();
        env.step(&[0.4, 0.4]);
        let s = env.state();
        assert!((s[0] - 0.5 * 0.4 * 0.3).abs() < 1e-14);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], 0.0);

        // One wheel: turning.
        let mut env = UnicycleEnv::new();
        env.step(&[0.4, 0.0]);
        assert!(env.state()[2] > 0.0);
    }

    #[test]
    fn unicycle_true_affine_matches_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let mut env = UnicycleEnv::new();
            env.state = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-3.0..3.0),
            ];
            let s = env.state();
            let u = [rng.gen_range(0.0..0.623), rng.gen_range(0.0..0.623)];
            let (f, g) = env.true_affine(&s);
            let shift = &g * DVector::from_vec(u.to_vec());
            let next = env.step(&u);
            for i in 0..2 {
                assert!((next[i] - s[i] - f[i] - shift[i]).abs() < 1e-12);
            }
            assert!((wrap_angle(next[2] - s[2] - shift[2])).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_values() {
        assert_eq!(RewardSpec::QuadrotorHover.eval(&[0.0, 0.0], &[0.0]), 12.0);
        assert_eq!(RewardSpec::QuadrotorHover.eval(&[3.0, 0.0], &[0.0]), -6.0);
        assert_eq!(RewardSpec::UnicycleOrigin.eval(&[0.0, 0.0, 1.0], &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = |seed: u64| -> Vec<[f64; 2]> {
            let mut env = QuadrotorEnv::nominal();
            env.relocations = vec![(5, Relocation::UniformPosition { lo: -3.0, hi: 3.0 })];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|n| {
                    env.apply_schedule(n, &mut rng);
                    env.step(rng.gen_range(-0.5..0.5))
                })
                .collect()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }
}
