use batchmix::model::truth_reads;
use batchmix::recovery::recover_list;
use batchmix::selection::select_best_mse_index;
use batchmix::synth::{gen_pools, ComponentSpec, MixtureSpec};
use batchmix::{AlgoConfig, ComponentCount, Seed, Vector};

// Own test binary: the truth counter is process-wide.
#[test]
fn estimators_never_read_truth() {
    let d = 4;
    let components = (0..2)
        .map(|i| ComponentSpec::linear(Vector::from_fn(d, |r, _| if r == i { 3.0 } else { 0.0 }), 0.5, 0.5))
        .collect();
    let mixture = MixtureSpec { d, k: 2, components, heavy_set: vec![0, 1] };
    let (small, medium) = gen_pools(&mixture, 2000, 2, 40, 64, Seed::new(5)).unwrap();
    let mut cfg = AlgoConfig::new(d, ComponentCount::Finite(2), 0.5, 0.5, 1.0, 3.0);
    cfg.reuse_medium = true;
    let before = truth_reads();
    let list = recover_list(&small, &medium, &cfg, 4, Seed::new(6)).unwrap();
    select_best_mse_index(medium.batches[0].samples(), &list.estimates).unwrap();
    assert_eq!(truth_reads(), before);
    assert_eq!(before, 0);
}
