use batchmix::clip::{clip_est, clip_grad_sample, clipped_residual, ClipParams};
use batchmix::{GradContext, RegressionSample, Seed, Vector};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0f64..50.0, 1..6)
}

proptest! {
    #[test]
    fn clipped_gradient_invariants(x in vec3(), w_seed in vec3(), y in -100.0f64..100.0, kappa in 1e-3f64..100.0) {
        let d = x.len();
        let x = Vector::from_column_slice(&x);
        let w = Vector::from_fn(d, |i, _| w_seed[i % w_seed.len()]);
        let s = RegressionSample::new(x.clone(), y);
        let g = clip_grad_sample(&s, &GradContext::new(w.clone(), kappa));
        let r = x.dot(&w) - y;
        prop_assert!(g.norm() <= kappa * x.norm() * (1.0 + 1e-12));
        if r.abs() <= kappa {
            prop_assert!((&g - &x * r).norm() <= 1e-12 * (r.abs() * x.norm()).max(1.0));
        }
        prop_assert!(clipped_residual(r, kappa).abs() <= kappa);
    }

    #[test]
    fn clip_scale_is_monotone_in_theta(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let p = ClipParams { eps1: 0.5, sigma: 1.0, c: 3.0, c1: 2.0 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p.kappa_for(lo) <= p.kappa_for(hi));
    }
}

#[test]
fn constant_residual_gives_hand_value() {
    // every residual² = 4 with σ = 1, C = 1, C1 = 1, ε1 = 1
    let samples: Vec<RegressionSample> =
        (0..12).map(|i| RegressionSample::new(Vector::from_element(2, 1.0), if i % 2 == 0 { 2.0 } else { -2.0 })).collect();
    let p = ClipParams { eps1: 1.0, sigma: 1.0, c: 1.0, c1: 1.0 };
    let scale = clip_est(&samples, &Vector::zeros(2), &p, 3, &mut Seed::new(0).rng()).unwrap();
    assert_eq!(scale.theta, 4.0);
    assert!((scale.kappa - 1344f64.sqrt()).abs() < 1e-12);
    assert!((scale.kappa - 36.661).abs() < 1e-3);
}
