//! Random pools and an independent property check for balanced sampling.

#![allow(dead_code)]

use rand::Rng;
use std::collections::BTreeMap;
use toolpref_core::pref::{BinSpec, BmdsOutcome, PairwiseSample};
use toolpref_core::SourceId;

pub fn random_pool<R: Rng>(rng: &mut R) -> (Vec<PairwiseSample>, usize) {
    let bins = BinSpec::default();
    let sources = rng.random_range(1..=4);
    let size = rng.random_range(1..=300);
    let pool: Vec<PairwiseSample> = (0..size)
        .map(|i| {
            let source = format!("src{}", rng.random_range(0..sources));
            // skewed intensities so that group sizes vary a lot
            let tenths = if rng.random_bool(0.6) { rng.random_range(8..=10) } else { rng.random_range(1..=10) };
            let s_plus = 1.0;
            let s_minus = 1.0 - f64::from(tenths) / 10.0;
            let intensity = s_plus - s_minus;
            PairwiseSample {
                id: format!("p{i}"),
                context_id: format!("c{}", i / 3),
                source: SourceId::new(source),
                context: Vec::new(),
                y_star: String::new(),
                y_plus: String::new(),
                y_minus: String::new(),
                plus_model: String::new(),
                minus_model: String::new(),
                s_plus,
                s_minus,
                preference_intensity: intensity,
                complexity: rng.random_range(1..=50),
                bin_idx: bins.assign(intensity).unwrap(),
            }
        })
        .collect();
    let n = rng.random_range(0..=pool.len());
    (pool, n)
}

pub fn check(pool: &[PairwiseSample], bins: &BinSpec, n: usize, out: &BmdsOutcome) -> Result<(), String> {
    if out.samples.len() != n {
        return Err(format!("selected {} of {n}", out.samples.len()));
    }
    let quota_sum: usize = out.groups.iter().map(|g| g.quota).sum();
    if quota_sum != n {
        return Err(format!("quotas sum to {quota_sum}, expected {n}"));
    }
    let mut members: BTreeMap<(String, usize), Vec<&PairwiseSample>> = BTreeMap::new();
    for s in pool {
        members.entry((s.source.to_string(), bins.assign(s.preference_intensity).unwrap())).or_default().push(s);
    }
    if members.len() != out.groups.len() {
        return Err("group count differs from the distinct (source, bin) keys".into());
    }
    let mut open = Vec::new();
    for g in &out.groups {
        let all = &members[&(g.source.to_string(), g.bin_idx)];
        if all.len() != g.size || g.quota > g.size {
            return Err(format!("group {}/{}: quota {} size {} actual {}", g.source, g.bin_idx, g.quota, g.size, all.len()));
        }
        if g.quota < g.size {
            open.push(g.quota);
        }
        let chosen: Vec<&PairwiseSample> = out
            .samples
            .iter()
            .filter(|s| s.source == g.source && s.bin_idx == g.bin_idx)
            .collect();
        if chosen.len() != g.quota {
            return Err(format!("group {}/{} emitted {} for quota {}", g.source, g.bin_idx, chosen.len(), g.quota));
        }
        let min_in = chosen.iter().map(|s| s.complexity).min();
        let max_out = all
            .iter()
            .filter(|s| !chosen.iter().any(|c| c.id == s.id))
            .map(|s| s.complexity)
            .max();
        if let (Some(lo), Some(hi)) = (min_in, max_out) {
            if lo < hi {
                return Err(format!("group {}/{} skipped complexity {hi} but kept {lo}", g.source, g.bin_idx));
            }
        }
    }
    if let (Some(lo), Some(hi)) = (open.iter().min(), open.iter().max()) {
        if hi - lo > 1 {
            return Err(format!("quota spread {lo}..{hi} among non-exhausted groups"));
        }
    }
    for s in &out.samples {
        let (lo, hi) = bins.bounds(s.bin_idx).ok_or("bin out of range")?;
        if !(lo < s.preference_intensity && s.preference_intensity <= hi) {
            return Err(format!("{} has intensity {} outside ({lo}, {hi}]", s.id, s.preference_intensity));
        }
    }
    Ok(())
}
