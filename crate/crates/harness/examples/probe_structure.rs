use barrier_rl::envs::UnicycleEnv;
use barrier_rl::structmodel::DynamicsLearner;
use barrier_rl_harness::config::{preset, ApfbsCfg, ExperimentKind};
use barrier_rl_harness::experiments::unicycle_core;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let ExperimentKind::UnicycleStructure(base) = preset("unicycle-structure").unwrap().kind
    else {
        unreachable!()
    };
    for (lam, mu) in [(0.3, 1e-4), (0.5, 1e-2)] {
        let mut cfg = base.clone();
        cfg.apfbs = ApfbsCfg {
            step: lam,
            window: 5,
            l1_weight: mu,
            slab_halfwidth: 1e-3,
            novelty_threshold: 0.1,
        };
        let out = unicycle_core(&cfg, 8);
        // Model quality: relative error of predicted shift on fresh states.
        let learner = DynamicsLearner::Structured(out.model.clone());
        let env = UnicycleEnv {
            state: [0.0; 3],
            k_v: cfg.k_v,
            k_omega: cfg.k_omega,
            dt: cfg.dt,
            u_max: cfg.u_max,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut num = 0.0;
        let mut den = 0.0;
        for _ in 0..500 {
            let s = [
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-3.14..3.14),
            ];
            let u = [rng.gen_range(0.0..cfg.u_max), rng.gen_range(0.0..cfg.u_max)];
            let (f_true, g_true) = env.true_affine(&s);
            let true_shift = DVector::from_vec(f_true) + g_true * DVector::from_vec(u.to_vec());
            let e = learner.affine_at(&s);
            let pred = DVector::from_vec(e.f_hat) + e.g_hat * DVector::from_vec(u.to_vec());
            num += (pred.clone() - true_shift.clone()).norm_squared();
            den += true_shift.norm_squared();
        }
        println!(
            "lam {lam} mu {mu}: shift NMSE {:.4}, planar p/g {:.4}",
            num / den,
            out.report.per_dim[..2].iter().map(|d| d.l1[0]).sum::<f64>()
                / out.report.per_dim[..2].iter().map(|d| d.l1[2]).sum::<f64>()
        );
    }
}
