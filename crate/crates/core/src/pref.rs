//! Preference pair construction: difficulty filtering, pair enumeration,
//! intensity and complexity annotation, balanced sampling and splitting.

use crate::model::{Message, SourceId};
use crate::scorer::{complexity, ScoredRow};
use crate::segment::Segment;
use crate::seed::derive_rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_COMPLEXITY_CAP: usize = 50;

/// Contiguous half-open intervals `(lo, hi]` covering `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinSpec {
    edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinSpecError {
    #[error("bin edges need at least two values")]
    TooFew,
    #[error("bin edges must start at 0 and end at 1")]
    Range,
    #[error("bin edges must be strictly increasing")]
    NotIncreasing,
    #[error("invalid bin edge {0:?}")]
    Parse(String),
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            edges: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for BinSpec {
    type Error = BinSpecError;

    fn try_from(edges: Vec<f64>) -> Result<Self, Self::Error> {
        BinSpec::new(edges)
    }
}

impl From<BinSpec> for Vec<f64> {
    fn from(b: BinSpec) -> Self {
        b.edges
    }
}

impl BinSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self, BinSpecError> {
        if edges.len() < 2 {
            return Err(BinSpecError::TooFew);
        }
        if edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
            return Err(BinSpecError::Range);
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BinSpecError::NotIncreasing);
        }
        Ok(Self { edges })
    }

    /// `"default"` or a comma-separated edge list such as `"0,0.5,1"`.
    pub fn parse(spec: &str) -> Result<Self, BinSpecError> {
        if spec.trim() == "default" {
            return Ok(Self::default());
        }
        let edges = spec
            .split(',')
            .map(|e| e.trim().parse::<f64>().map_err(|_| BinSpecError::Parse(e.trim().to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the bin with `lo < x <= hi`; `None` outside `(0, 1]`.
    pub fn assign(&self, x: f64) -> Option<usize> {
        self.edges.windows(2).position(|w| w[0] < x && x <= w[1])
    }

    pub fn bounds(&self, bin: usize) -> Option<(f64, f64)> {
        (bin + 1 < self.edges.len()).then(|| (self.edges[bin], self.edges[bin + 1]))
    }
}

/// A context's sampled response with a numeric score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub model_id: String,
    pub sample_index: u32,
    pub content: String,
    pub score: f64,
}

/// All numeric-scored responses for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredGroup {
    pub segment: Arc<Segment>,
    pub responses: Vec<ScoredResponse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateQuad {
    pub segment: Arc<Segment>,
    pub model_id: String,
    pub sample_index: u32,
    pub y_hat: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingStats {
    pub rows: usize,
    pub unparsable: usize,
    pub unknown_context: usize,
}

/// Groups scored rows by context in first-appearance order, dropping
/// unparsable responses and rows whose context is not in `segments`.
pub fn group_scored(rows: &[ScoredRow], segments: &[Segment]) -> (Vec<ScoredGroup>, GroupingStats) {
    let by_id: HashMap<String, Arc<Segment>> = segments.iter().map(|s| (s.id(), Arc::new(s.clone()))).collect();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, ScoredGroup> = HashMap::new();
    let mut stats = GroupingStats {
        rows: rows.len(),
        ..Default::default()
    };
    for row in rows {
        let Some(segment) = by_id.get(&row.context_id) else {
            stats.unknown_context += 1;
            continue;
        };
        let Some(score) = row.score.value() else {
            stats.unparsable += 1;
            continue;
        };
        let group = groups.entry(row.context_id.clone()).or_insert_with(|| {
            order.push(row.context_id.clone());
            ScoredGroup {
                segment: Arc::clone(segment),
                responses: Vec::new(),
            }
        });
        group.responses.push(ScoredResponse {
            model_id: row.model_id.clone(),
            sample_index: row.sample_index,
            content: row.response.clone(),
            score,
        });
    }
    let groups = order.iter().filter_map(|id| groups.remove(id)).collect();
    (groups, stats)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub groups: usize,
    pub kept_groups: usize,
    pub dropped_all_perfect: usize,
    pub dropped_no_perfect: usize,
    pub dropped_empty: usize,
    pub quads: usize,
}

/// Keeps contexts that have at least one perfect and one imperfect response.
pub fn build_candidate_pool(groups: &[ScoredGroup]) -> (Vec<CandidateQuad>, PoolStats) {
    let mut stats = PoolStats {
        groups: groups.len(),
        ..Default::default()
    };
    let mut quads = Vec::new();
    for group in groups {
        if group.responses.is_empty() {
            stats.dropped_empty += 1;
            continue;
        }
        let perfect = group.responses.iter().filter(|r| r.score == 1.0).count();
        if perfect == group.responses.len() {
            stats.dropped_all_perfect += 1;
            continue;
        }
        if perfect == 0 {
            stats.dropped_no_perfect += 1;
            continue;
        }
        stats.kept_groups += 1;
        quads.extend(group.responses.iter().map(|r| CandidateQuad {
            segment: Arc::clone(&group.segment),
            model_id: r.model_id.clone(),
            sample_index: r.sample_index,
            y_hat: r.content.clone(),
            score: r.score,
        }));
    }
    stats.quads = quads.len();
    (quads, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSample {
    pub id: String,
    pub context_id: String,
    pub source: SourceId,
    pub context: Vec<Message>,
    pub y_star: String,
    pub y_plus: String,
    pub y_minus: String,
    pub plus_model: String,
    pub minus_model: String,
    pub s_plus: f64,
    pub s_minus: f64,
    /// `s_plus - s_minus`, in `(0, 1]`.
    pub preference_intensity: f64,
    /// Ground-truth call count plus total argument count.
    pub complexity: usize,
    pub bin_idx: usize,
}

impl PairwiseSample {
    pub fn check(&self, bins: &BinSpec, complexity_cap: usize) -> Result<(), String> {
        if self.s_plus <= self.s_minus {
            return Err(format!("{}: s_plus {} <= s_minus {}", self.id, self.s_plus, self.s_minus));
        }
        if self.preference_intensity != self.s_plus - self.s_minus {
            return Err(format!("{}: intensity is not s_plus - s_minus", self.id));
        }
        if !(self.preference_intensity > 0.0 && self.preference_intensity <= 1.0) {
            return Err(format!("{}: intensity {} outside (0, 1]", self.id, self.preference_intensity));
        }
        if self.complexity > complexity_cap {
            return Err(format!("{}: complexity {} above cap {complexity_cap}", self.id, self.complexity));
        }
        if bins.assign(self.preference_intensity) != Some(self.bin_idx) {
            return Err(format!("{}: bin {} does not hold intensity {}", self.id, self.bin_idx, self.preference_intensity));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfig {
    pub complexity_cap: usize,
    /// Per-context limit on emitted pairs; `None` is unlimited.
    pub max_pairs_per_context: Option<usize>,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            complexity_cap: DEFAULT_COMPLEXITY_CAP,
            max_pairs_per_context: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub contexts: usize,
    pub candidate_pairs: usize,
    pub dropped_complexity: usize,
    pub dropped_context_cap: usize,
    pub dropped_bad_ground_truth: usize,
    /// Pairs whose intensity falls outside every bin.
    pub dropped_unbinned: usize,
    pub pairs: usize,
}

/// Every ordered same-context pair with a strictly higher first score.
/// Contexts are visited in pool order; within one, pairs follow response order.
pub fn build_pairs(pool: &[CandidateQuad], bins: &BinSpec, config: &PairConfig) -> (Vec<PairwiseSample>, PairStats) {
    let mut stats = PairStats::default();
    let mut out = Vec::new();
    let mut start = 0;
    while start < pool.len() {
        let segment = &pool[start].segment;
        let end = start + pool[start..].iter().take_while(|q| Arc::ptr_eq(&q.segment, segment)).count();
        let group = &pool[start..end];
        start = end;
        stats.contexts += 1;

        let pairs: Vec<(&CandidateQuad, &CandidateQuad)> = group
            .iter()
            .flat_map(|p| group.iter().filter(move |m| p.score > m.score).map(move |m| (p, m)))
            .collect();
        stats.candidate_pairs += pairs.len();
        let Ok(calls) = segment.ground_truth_calls() else {
            stats.dropped_bad_ground_truth += pairs.len();
            continue;
        };
        let s_complex = complexity(&calls);
        if s_complex > config.complexity_cap {
            stats.dropped_complexity += pairs.len();
            continue;
        }
        let limit = config.max_pairs_per_context.unwrap_or(usize::MAX);
        stats.dropped_context_cap += pairs.len().saturating_sub(limit);
        let context_id = segment.id();
        for (plus, minus) in pairs.into_iter().take(limit) {
            let intensity = plus.score - minus.score;
            let Some(bin_idx) = bins.assign(intensity) else {
                stats.dropped_unbinned += 1;
                continue;
            };
            out.push(PairwiseSample {
                id: format!(
                    "{context_id}|{}:{}|{}:{}",
                    plus.model_id, plus.sample_index, minus.model_id, minus.sample_index
                ),
                context_id: context_id.clone(),
                source: segment.source.clone(),
                context: segment.context.clone(),
                y_star: segment.ground_truth.clone(),
                y_plus: plus.y_hat.clone(),
                y_minus: minus.y_hat.clone(),
                plus_model: plus.model_id.clone(),
                minus_model: minus.model_id.clone(),
                s_plus: plus.score,
                s_minus: minus.score,
                preference_intensity: intensity,
                complexity: s_complex,
                bin_idx,
            });
        }
    }
    stats.pairs = out.len();
    (out, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot sample {requested} items from a pool of {available}")]
pub struct InsufficientDataError {
    pub available: usize,
    pub requested: usize,
}

/// Greedy quota allocation over groups sorted by ascending size.
///
/// Walks the groups in order. A group no larger than the running average
/// share is taken whole; at the first group that exceeds it, the remaining
/// budget is split evenly over it and every later group, with the remainder
/// going one each to the last groups.
pub fn allocate_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let len = sizes.len();
    let mut quotas = vec![0; len];
    let mut remaining = n;
    for k in 0..len {
        let m = len - k;
        let n_avg = remaining / m;
        if sizes[k] <= n_avg {
            quotas[k] = sizes[k];
            remaining -= sizes[k];
        } else {
            let (q, r) = (remaining / m, remaining % m);
            for quota in &mut quotas[k..] {
                *quota = q;
            }
            for i in 0..r {
                quotas[len - 1 - i] += 1;
            }
            break;
        }
    }
    quotas
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupQuota {
    pub source: SourceId,
    pub bin_idx: usize,
    pub size: usize,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmdsOutcome {
    pub samples: Vec<PairwiseSample>,
    /// Groups in allocation order (ascending size).
    pub groups: Vec<GroupQuota>,
}

/// Balanced multi-dimensional sampling over `(source, bin)` groups,
/// preferring high-complexity samples within each group. Ties keep input
/// order.
pub fn bmds_sample(pool: &[PairwiseSample], bins: &BinSpec, n: usize) -> Result<BmdsOutcome, InsufficientDataError> {
    if pool.len() < n {
        return Err(InsufficientDataError {
            available: pool.len(),
            requested: n,
        });
    }
    let mut grouped: BTreeMap<(SourceId, usize), Vec<&PairwiseSample>> = BTreeMap::new();
    for sample in pool {
        let bin = bins.assign(sample.preference_intensity).unwrap_or(sample.bin_idx);
        grouped.entry((sample.source.clone(), bin)).or_default().push(sample);
    }
    let mut groups: Vec<((SourceId, usize), Vec<&PairwiseSample>)> = grouped.into_iter().collect();
    for (_, members) in &mut groups {
        members.sort_by(|a, b| b.complexity.cmp(&a.complexity));
    }
    groups.sort_by_key(|(_, members)| members.len());

    let sizes: Vec<usize> = groups.iter().map(|(_, m)| m.len()).collect();
    let quotas = allocate_quotas(&sizes, n);
    let mut samples = Vec::with_capacity(n);
    let mut summary = Vec::with_capacity(groups.len());
    for (((source, bin_idx), members), quota) in groups.into_iter().zip(quotas) {
        samples.extend(members.iter().take(quota).map(|s| (*s).clone()));
        summary.push(GroupQuota {
            source,
            bin_idx,
            size: members.len(),
            quota,
        });
    }
    Ok(BmdsOutcome { samples, groups: summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("holdout {holdout} must be smaller than the {available} available samples")]
pub struct SplitError {
    pub holdout: usize,
    pub available: usize,
}

/// Seeded split with the validation set stratified by `(source, bin)`.
/// Stratum shares use largest-remainder rounding; both halves keep input order.
pub fn split_dataset<T: Clone>(
    samples: &[T],
    key: impl Fn(&T) -> (SourceId, usize),
    holdout: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), SplitError> {
    if holdout == 0 {
        return Ok((samples.to_vec(), Vec::new()));
    }
    if holdout >= samples.len() {
        return Err(SplitError {
            holdout,
            available: samples.len(),
        });
    }
    let mut strata: BTreeMap<(SourceId, usize), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        strata.entry(key(s)).or_default().push(i);
    }
    let total = samples.len();
    let mut shares: Vec<(usize, usize)> = strata
        .values()
        .map(|members| {
            let exact = members.len() * holdout;
            (exact / total, exact % total)
        })
        .collect();
    let assigned: usize = shares.iter().map(|(q, _)| q).sum();
    let mut by_remainder: Vec<usize> = (0..shares.len()).collect();
    by_remainder.sort_by(|&a, &b| shares[b].1.cmp(&shares[a].1));
    for &i in by_remainder.iter().take(holdout - assigned) {
        shares[i].0 += 1;
    }

    let mut in_validation = vec![false; total];
    for (((source, bin), members), (quota, _)) in strata.iter().zip(&shares) {
        let mut members = members.clone();
        let mut rng = derive_rng(seed, "split", &format!("{source}/{bin}"));
        members.shuffle(&mut rng);
        for &i in members.iter().take(*quota) {
            in_validation[i] = true;
        }
    }
    let mut train = Vec::with_capacity(total - holdout);
    let mut validation = Vec::with_capacity(holdout);
    for (s, v) in samples.iter().zip(in_validation) {
        if v {
            validation.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, validation))
}

pub fn sample_stratum(s: &PairwiseSample) -> (SourceId, usize) {
    (s.source.clone(), s.bin_idx)
}
