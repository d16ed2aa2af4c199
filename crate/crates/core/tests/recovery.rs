use batchmix::recovery::recover_list;
use batchmix::synth::{gen_pools, ComponentSpec, MixtureSpec};
use batchmix::{AlgoConfig, ComponentCount, Constants, Seed, Vector};
use rand_distr::{Distribution, StandardNormal};

fn planted(d: usize, k: usize, scale: f64, seed: Seed) -> MixtureSpec {
    let mut rng = seed.rng();
    let components = (0..k)
        .map(|_| {
            let w = Vector::from_fn(d, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); scale * z });
            ComponentSpec::linear(w, 1.0, 1.0 / k as f64)
        })
        .collect();
    MixtureSpec { d, k, components, heavy_set: (0..4).collect() }
}

fn config(d: usize, k: usize, mixture: &MixtureSpec) -> AlgoConfig {
    let m = mixture.components.iter().filter_map(|c| c.w.as_ref()).map(|w| w.norm()).fold(0.0, f64::max);
    let mut cfg = AlgoConfig::new(d, ComponentCount::Finite(k), 1.0 / k as f64, 1.0, 1.0, m);
    cfg.delta = 0.1;
    cfg.reuse_medium = true;
    cfg.constants = Constants { c_r: 4.0, c_eps1: 0.5, c_eps2: 0.03, c_t1: 0.05, c_t2: 0.1, c_t3: 2.0, c_ell: 1.0 };
    cfg
}

#[test]
fn four_heavy_components_are_covered() {
    let (d, k) = (5, 16);
    let mut covered = 0;
    for seed in 0..10u64 {
        let mixture = planted(d, k, 3.0, Seed::new(seed).child("mixture", 0));
        let (small, medium) = gen_pools(&mixture, 20_000, 2, 256, 128, Seed::new(seed).child("pools", 0)).unwrap();
        let cfg = config(d, k, &mixture);
        let draws = (16.0 * (4.0f64 / 0.1).ln()).ceil() as usize;
        let list = recover_list(&small, &medium, &cfg, draws, Seed::new(seed).child("recover", 0)).unwrap();
        let hit = |i: usize| {
            let w = mixture.components[i].w.as_ref().unwrap();
            list.estimates.iter().map(|e| (e - w).norm()).fold(f64::INFINITY, f64::min)
        };
        let dists: Vec<f64> = (0..4).map(hit).collect();
        if dists.iter().all(|&e| e <= 0.5) {
            covered += 1;
        }
    }
    assert!(covered >= 8, "all heavy components covered in {covered}/10 seeds");
}

