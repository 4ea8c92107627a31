mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toolpref_core::pref::{allocate_quotas, bmds_sample, BinSpec};

#[test]
fn random_pools_satisfy_every_property() {
    let bins = BinSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1_000 {
        let (pool, n) = support::bmds::random_pool(&mut rng);
        let out = bmds_sample(&pool, &bins, n).unwrap();
        support::bmds::check(&pool, &bins, n, &out).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert_eq!(bmds_sample(&pool, &bins, n).unwrap(), out, "case {case} not deterministic");
    }
}

#[test]
fn hand_traced_allocations() {
    assert_eq!(allocate_quotas(&[2, 3, 5, 10], 8), [2, 2, 2, 2]);
    assert_eq!(allocate_quotas(&[5, 5], 5), [2, 3]);
}

#[test]
fn whole_pool_when_n_equals_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (pool, _) = support::bmds::random_pool(&mut rng);
    let out = bmds_sample(&pool, &BinSpec::default(), pool.len()).unwrap();
    let mut ids: Vec<&str> = out.samples.iter().map(|s| s.id.as_str()).collect();
    let mut all: Vec<&str> = pool.iter().map(|s| s.id.as_str()).collect();
    ids.sort();
    all.sort();
    assert_eq!(ids, all);
}
