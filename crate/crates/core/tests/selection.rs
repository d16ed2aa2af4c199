use batchmix::selection::{empirical_mse, select_best_mse_index, select_tournament, tournament_parts, TournamentParams};
use batchmix::{RegressionSample, Seed, Vector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn samples(w: &Vector, sigma: f64, n: usize, rng: &mut impl Rng) -> Vec<RegressionSample> {
    (0..n)
        .map(|_| {
            let x = Vector::from_fn(w.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let e: f64 = rng.sample(StandardNormal);
            RegressionSample::new(x.clone(), x.dot(w) + sigma * e)
        })
        .collect()
}

#[test]
fn tournament_returns_the_near_vector() {
    let (d, sigma, beta, c1) = (5, 1.0, 0.1, 1.0);
    let mut hits = 0;
    for seed in 0..50 {
        let mut rng = Seed::new(seed).rng();
        let w0 = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = Vector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let list = vec![&w0 + &u * (0.05 * sigma), &w0 + &u * (20.0 * sigma)];
        let delta = 0.1;
        let parts = tournament_parts(2.0, list.len(), delta);
        // per part: at least 48·C and 12σ²/(C1·β²) samples
        let per_part = (48.0 * 3.0f64).max(12.0 * sigma * sigma / (c1 * beta * beta)).ceil() as usize;
        let s = samples(&w0, sigma, parts * per_part, &mut rng);
        let got = select_tournament(&s, &list, &TournamentParams { beta, c1, parts }, &mut rng).unwrap();
        hits += usize::from((&got - &w0).norm() <= 13.0 * c1 * beta);
    }
    assert!(hits >= 45, "near vector chosen in {hits}/50 seeds");
}

proptest! {
    #[test]
    fn best_mse_matches_loss_table(seed in 0u64..100_000, len in 1usize..6, n in 1usize..20) {
        let mut rng = Seed::new(seed).rng();
        let d = 3;
        let w = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = samples(&w, 0.5, n, &mut rng);
        let list: Vec<Vector> = (0..len).map(|_| Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
        let table: Vec<f64> = list
            .iter()
            .map(|v| s.iter().map(|p| (p.y - p.x.dot(v)).powi(2)).sum::<f64>() / n as f64)
            .collect();
        let best = table.iter().copied().fold(f64::INFINITY, f64::min);
        let idx = select_best_mse_index(&s, &list).unwrap();
        prop_assert!((table[idx] - best).abs() <= 1e-12 * best.max(1.0));
        prop_assert!((empirical_mse(&s, &list[idx]) - table[idx]).abs() <= 1e-12 * best.max(1.0));
    }

    #[test]
    fn best_mse_ignores_joint_rescaling(seed in 0u64..100_000, scale in 0.01f64..100.0) {
        let mut rng = Seed::new(seed).rng();
        let d = 3;
        let w = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = samples(&w, 0.5, 8, &mut rng);
        let list: Vec<Vector> = (0..4).map(|_| Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
        // scaling every response and candidate by c scales all losses by c²
        let scaled_s: Vec<RegressionSample> = s.iter().map(|p| RegressionSample::new(p.x.clone(), p.y * scale)).collect();
        let scaled_l: Vec<Vector> = list.iter().map(|v| v * scale).collect();
        prop_assert_eq!(select_best_mse_index(&s, &list).unwrap(), select_best_mse_index(&scaled_s, &scaled_l).unwrap());
    }
}
