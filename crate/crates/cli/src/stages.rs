//! One function per pipeline stage. Each reads its inputs from disk, writes
//! its outputs, and returns a [`StageReport`].

use crate::failure::InputContext;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use toolpref_client::{sample_many, Endpoint, EndpointConfig, ResponseCache, SampleRecord};
use toolpref_core::critique::{render_pairwise, Mode, RolloutGroup};
use toolpref_core::ingest::{normalize_corpus, IngestReport, SourceAdapter};
use toolpref_core::pref::{
    bmds_sample, build_candidate_pool, build_pairs, group_scored, sample_stratum, split_dataset, BinSpec, PairConfig,
    PairwiseSample,
};
use toolpref_core::scorer::{score_response, ScoredRow};
use toolpref_core::seed::derive_rng;
use toolpref_core::segment::{segment_corpus, FailureMarkerConfig, FailureMarkers, Segment};
use toolpref_core::{jsonl, SourceId, Trajectory};

/// Counts for one stage run. `input == output + dropped.values().sum()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub input: usize,
    pub output: usize,
    pub dropped: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub extra: Value,
}

impl StageReport {
    fn new(stage: &str, input: usize, output: usize, dropped: impl IntoIterator<Item = (&'static str, usize)>) -> Self {
        Self {
            stage: stage.to_string(),
            input,
            output,
            dropped: dropped.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            extra: Value::Null,
        }
    }

    fn with_extra(mut self, extra: Value) -> Self {
        self.extra = extra;
        self
    }

    pub fn balanced(&self) -> bool {
        self.input == self.output + self.dropped.values().sum::<usize>()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).input(|| format!("cannot create {}", parent.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).input(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).input(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).input(|| format!("cannot parse {}", path.display()))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read(path).input(|| format!("cannot load {}", path.display()))
}

fn write_rows<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    jsonl::write(path, rows).input(|| format!("cannot write {}", path.display()))
}

/// Preset name or path to an adapter JSON file.
pub fn resolve_adapter(spec: &str, source: Option<&str>) -> Result<SourceAdapter> {
    let adapter = match SourceAdapter::preset(spec) {
        Some(a) => a,
        None if Path::new(spec).is_file() => {
            let text = std::fs::read_to_string(spec).input(|| format!("cannot read adapter {spec}"))?;
            SourceAdapter::from_json(&text).input(|| format!("invalid adapter {spec}"))?
        }
        None => {
            let presets: Vec<_> = SourceAdapter::preset_names().collect();
            return Err(anyhow::anyhow!("presets: {}", presets.join(", ")))
                .input(|| format!("unknown adapter {spec:?}"));
        }
    };
    Ok(match source {
        Some(s) => adapter.with_source(SourceId::new(s)),
        None => adapter,
    })
}

pub struct NormalizeInput {
    pub adapter: SourceAdapter,
    pub path: PathBuf,
}

pub fn normalize(inputs: &[NormalizeInput], out: &Path) -> Result<(StageReport, IngestReport)> {
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut ingest = IngestReport::default();
    for input in inputs {
        let lines = jsonl::read_lines(&input.path).input(|| format!("cannot load {}", input.path.display()))?;
        let (kept, report) = normalize_corpus(&lines, &input.adapter);
        tracing::info!(source = %input.adapter.source, raw = lines.len(), kept = kept.len(), "normalized");
        trajectories.extend(kept);
        ingest.merge(report);
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = trajectories.iter().find(|t| !seen.insert(t.id.as_str())) {
        bail!("duplicate trajectory id {}", dup.id);
    }
    let file: String = trajectories.iter().map(|t| t.to_jsonl_line() + "\n").collect();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).input(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(out, file).input(|| format!("cannot write {}", out.display()))?;

    let total = |f: fn(&toolpref_core::ingest::SourceCounts) -> usize| ingest.counts.values().map(f).sum::<usize>();
    let report = StageReport::new(
        "normalize",
        total(|c| c.raw),
        total(|c| c.kept),
        [
            ("role_order", total(|c| c.dropped_role_order)),
            ("empty_conversation", total(|c| c.dropped_empty)),
            ("unmappable", total(|c| c.dropped_unmappable)),
            ("schema_unrepairable", total(|c| c.dropped_schema)),
        ],
    )
    .with_extra(json!({ "sources": &ingest.counts }));
    Ok((report, ingest))
}

pub fn load_markers(path: Option<&Path>) -> Result<FailureMarkers> {
    let config = match path {
        Some(p) => read_json::<FailureMarkerConfig>(p)?,
        None => FailureMarkerConfig::default(),
    };
    FailureMarkers::new(config).input(|| "invalid failure marker pattern".to_string())
}

pub fn segment(trajectories: &Path, out: &Path, markers: &FailureMarkers) -> Result<StageReport> {
    let lines = jsonl::read_lines(trajectories).input(|| format!("cannot load {}", trajectories.display()))?;
    let trajs = lines
        .iter()
        .enumerate()
        .map(|(i, l)| Trajectory::from_jsonl_line(l).input(|| format!("{}:{}", trajectories.display(), i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let (segments, report) = segment_corpus(&trajs, markers);
    write_rows(out, &segments)?;
    Ok(StageReport::new(
        "segment",
        report.segments,
        report.kept,
        [("tool_failure", report.dropped_tool_failure), ("validation", report.dropped_validation)],
    )
    .with_extra(json!({
        "trajectories": report.trajectories,
        "validation_reasons": report.validation_reasons,
    })))
}

pub fn build_endpoints(configs: Vec<EndpointConfig>, cache_dir: Option<&Path>) -> Result<Vec<Endpoint>> {
    if configs.is_empty() {
        return Err(anyhow::anyhow!("no endpoints configured")).input(|| "endpoint configuration".to_string());
    }
    configs
        .into_iter()
        .map(|c| {
            let id = c.model_id.clone();
            let cache = cache_dir
                .map(|d| ResponseCache::open(d.join(&id)))
                .transpose()
                .input(|| format!("cannot open cache for {id}"))?;
            Endpoint::new(c, cache).input(|| format!("endpoint {id}"))
        })
        .collect()
}

pub fn sample_responses(segments: &Path, endpoints: &[Endpoint], n: u32, out: &Path) -> Result<StageReport> {
    let segs: Vec<Segment> = read_rows(segments)?;
    let contexts: Vec<(String, Vec<toolpref_core::Message>)> =
        segs.into_iter().map(|s| (s.id(), s.context)).collect();
    let records = sample_many(&contexts, endpoints, n);
    for e in endpoints {
        tracing::info!(model = %e.config().model_id, network_requests = e.network_requests(), "sampled");
    }
    write_rows(out, &records)?;
    let failed = records.iter().filter(|r| r.content.is_none()).count();
    let mut per_model: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = per_model.entry(&r.model_id).or_default();
        e.0 += 1;
        e.1 += usize::from(r.content.is_none());
    }
    let per_model: BTreeMap<&str, Value> = per_model
        .into_iter()
        .map(|(m, (req, gaps))| (m, json!({"requests": req, "gaps": gaps})))
        .collect();
    Ok(
        StageReport::new("sample-responses", records.len(), records.len() - failed, [("endpoint_error", failed)])
            .with_extra(json!({ "contexts": contexts.len(), "per_model": per_model })),
    )
}

pub fn score(segments: &Path, responses: &Path, out: &Path) -> Result<StageReport> {
    let segs: Vec<Segment> = read_rows(segments)?;
    let records: Vec<SampleRecord> = read_rows(responses)?;
    let by_id: HashMap<String, &Segment> = segs.iter().map(|s| (s.id(), s)).collect();
    let mut absent = 0;
    let mut unknown = 0;
    let mut jobs = Vec::new();
    for r in &records {
        let Some(seg) = by_id.get(&r.context_id) else {
            unknown += 1;
            continue;
        };
        let Some(content) = &r.content else {
            absent += 1;
            continue;
        };
        jobs.push((r, *seg, content));
    }
    let rows = jobs
        .par_iter()
        .map(|(r, seg, content)| {
            let result = score_response::<f64>(&seg.ground_truth, content)
                .with_context(|| format!("ground truth of {} does not parse", r.context_id))?;
            Ok(ScoredRow::new(r.context_id.clone(), r.model_id.clone(), r.sample_index, content.to_string(), &result))
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(out, &rows)?;
    let unparsable = rows.iter().filter(|r| r.score.value().is_none()).count();
    Ok(StageReport::new(
        "score",
        records.len(),
        rows.len(),
        [("absent_response", absent), ("unknown_context", unknown)],
    )
    .with_extra(json!({ "unparsable": unparsable })))
}

pub fn build_pair_dataset(
    segments: &Path,
    scored: &Path,
    bins: &BinSpec,
    config: &PairConfig,
    out: &Path,
) -> Result<StageReport> {
    let segs: Vec<Segment> = read_rows(segments)?;
    let rows: Vec<ScoredRow> = read_rows(scored)?;
    let (groups, grouping) = group_scored(&rows, &segs);
    let (pool, pool_stats) = build_candidate_pool(&groups);
    let (pairs, stats) = build_pairs(&pool, bins, config);
    write_rows(out, &pairs)?;
    Ok(StageReport::new(
        "build-pairs",
        stats.candidate_pairs,
        stats.pairs,
        [
            ("bad_ground_truth", stats.dropped_bad_ground_truth),
            ("complexity_cap", stats.dropped_complexity),
            ("context_cap", stats.dropped_context_cap),
            ("unbinned", stats.dropped_unbinned),
        ],
    )
    .with_extra(json!({
        "rows": grouping.rows,
        "unparsable": grouping.unparsable,
        "unknown_context": grouping.unknown_context,
        "contexts": pool_stats.groups,
        "kept_contexts": pool_stats.kept_groups,
        "dropped_contexts": {
            "all_perfect": pool_stats.dropped_all_perfect,
            "no_perfect": pool_stats.dropped_no_perfect,
            "empty": pool_stats.dropped_empty,
        },
        "bin_edges": bins.edges(),
    })))
}

pub fn bmds(pairs: &Path, bins: &BinSpec, n: usize, out: &Path) -> Result<StageReport> {
    let pool: Vec<PairwiseSample> = read_rows(pairs)?;
    let outcome = bmds_sample(&pool, bins, n)?;
    write_rows(out, &outcome.samples)?;
    Ok(
        StageReport::new("bmds", pool.len(), outcome.samples.len(), [("not_selected", pool.len() - outcome.samples.len())])
            .with_extra(json!({ "groups": outcome.groups })),
    )
}

pub fn split(sampled: &Path, holdout: usize, seed: u64, train_out: &Path, val_out: &Path) -> Result<StageReport> {
    let samples: Vec<PairwiseSample> = read_rows(sampled)?;
    let (train, val) = split_dataset(&samples, sample_stratum, holdout, seed)?;
    write_rows(train_out, &train)?;
    write_rows(val_out, &val)?;
    Ok(StageReport::new("split", samples.len(), train.len() + val.len(), [])
        .with_extra(json!({ "train": train.len(), "validation": val.len() })))
}

pub fn render(pairs: &Path, mode: Mode, seed: u64, out: &Path) -> Result<StageReport> {
    let samples: Vec<PairwiseSample> = read_rows(pairs)?;
    let queries: Vec<_> = samples
        .par_iter()
        .map(|s| render_pairwise(s, mode, &mut derive_rng(seed, "render", &s.id)))
        .collect();
    write_rows(out, &queries)?;
    let swapped = queries.iter().filter(|q| q.swapped).count();
    Ok(StageReport::new("render", samples.len(), queries.len(), [])
        .with_extra(json!({ "mode": mode.as_str(), "swapped": swapped })))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RewardLine {
    Bare(f64),
    Row { reward: f64 },
}

#[derive(Serialize)]
struct AdvantageRow {
    group: usize,
    #[serde(flatten)]
    rollouts: RolloutGroup,
}

/// Consecutive runs of `group_size` rewards form one group.
pub fn advantage(rewards: &Path, group_size: usize, out: &Path) -> Result<StageReport> {
    let lines: Vec<RewardLine> = read_rows(rewards)?;
    let values: Vec<f64> = lines
        .into_iter()
        .map(|l| match l {
            RewardLine::Bare(r) | RewardLine::Row { reward: r } => r,
        })
        .collect();
    if group_size == 0 || !values.len().is_multiple_of(group_size) {
        bail!("{} rewards do not divide into groups of {group_size}", values.len());
    }
    let rows = values
        .chunks(group_size)
        .enumerate()
        .map(|(group, chunk)| Ok(AdvantageRow { group, rollouts: RolloutGroup::new(chunk.to_vec())? }))
        .collect::<Result<Vec<_>>>()?;
    write_rows(out, &rows)?;
    Ok(StageReport::new("advantage", values.len(), values.len(), [])
        .with_extra(json!({ "groups": rows.len(), "group_size": group_size })))
}
