//! Benchmark subcommands: pair construction, both-order evaluation,
//! best-of-N selection and self-correction.

use crate::failure::InputContext;
use crate::stages::{write_json, StageReport};
use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;
use toolpref_core::bench::{bon_select, build_bench_pairs, evaluate_pairwise, self_correct, BenchPair, BenchTask, BonSelection, SelfCorrection};
use toolpref_core::critique::Mode;
use toolpref_core::scorer::score_response;
use toolpref_core::{jsonl, ChatModel, Message};

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read(path).input(|| format!("cannot load {}", path.display()))
}

fn write_rows<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    jsonl::write(path, rows).input(|| format!("cannot write {}", path.display()))
}

pub fn build_pairs(tasks: &Path, out: &Path) -> Result<(StageReport, Vec<BenchPair>)> {
    let tasks: Vec<BenchTask> = read_rows(tasks)?;
    let (pairs, skipped) = build_bench_pairs(&tasks);
    for s in &skipped {
        tracing::warn!("{s}");
    }
    write_rows(out, &pairs)?;
    let report = StageReport {
        stage: "bench-build-pairs".into(),
        input: tasks.len(),
        output: tasks.len() - skipped.len(),
        dropped: [("no_failure".to_string(), skipped.len())].into(),
        extra: json!({ "pairs": pairs.len() }),
    };
    Ok((report, pairs))
}

/// Writes the score report to `report` and per-pair records to `records`.
pub fn eval(pairs: &Path, judge: &dyn ChatModel, mode: Mode, report: &Path, records: Option<&Path>) -> Result<StageReport> {
    let pairs: Vec<BenchPair> = read_rows(pairs)?;
    let (score, recs) = evaluate_pairwise(judge, &pairs, mode);
    write_json(report, &score)?;
    if let Some(path) = records {
        write_rows(path, &recs)?;
    }
    Ok(StageReport {
        stage: "bench".into(),
        input: pairs.len(),
        output: recs.len(),
        dropped: Default::default(),
        extra: serde_json::to_value(&score)?,
    })
}

#[derive(Debug, Deserialize)]
pub struct BonTask {
    pub id: String,
    pub context: Vec<Message>,
    pub candidates: Vec<String>,
    /// Per-candidate correctness labels, when known.
    #[serde(default)]
    pub correct: Option<Vec<bool>>,
}

#[derive(Debug, Serialize)]
struct BonRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    selection: BonSelection,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct: Option<bool>,
}

pub fn bon(tasks: &Path, judge: &dyn ChatModel, max_n: usize, out: &Path, report: &Path) -> Result<StageReport> {
    let tasks: Vec<BonTask> = read_rows(tasks)?;
    for t in &tasks {
        if let Some(c) = &t.correct {
            if c.len() != t.candidates.len() {
                bail!("task {}: {} labels for {} candidates", t.id, c.len(), t.candidates.len());
            }
        }
    }
    let rows = tasks
        .par_iter()
        .map(|t| {
            let candidates: Vec<&str> = t.candidates.iter().map(String::as_str).collect();
            let selection = bon_select(judge, &t.context, &candidates, max_n)
                .map_err(|e| anyhow::anyhow!("task {}: {e}", t.id))?;
            let correct = t.correct.as_ref().map(|c| c[selection.index - 1]);
            Ok(BonRow { id: &t.id, selection, correct })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(out, &rows)?;
    let labelled: Vec<bool> = rows.iter().filter_map(|r| r.correct).collect();
    let accuracy = (!labelled.is_empty())
        .then(|| 100.0 * labelled.iter().filter(|c| **c).count() as f64 / labelled.len() as f64);
    let summary = json!({
        "n": rows.len(),
        "labelled": labelled.len(),
        "accuracy": accuracy,
        "judge_calls": rows.iter().map(|r| r.selection.judge_calls).sum::<usize>(),
        "flagged": rows.iter().filter(|r| !r.selection.flags.is_empty()).count(),
    });
    write_json(report, &summary)?;
    Ok(StageReport {
        stage: "bench-bon".into(),
        input: tasks.len(),
        output: rows.len(),
        dropped: Default::default(),
        extra: summary,
    })
}

#[derive(Debug, Deserialize)]
pub struct CorrectionTask {
    pub id: String,
    pub context: Vec<Message>,
    /// Reference answer; when present, before and after scores are reported.
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Serialize)]
struct CorrectionRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    result: SelfCorrection,
    #[serde(skip_serializing_if = "Option::is_none")]
    score_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score_after: Option<f64>,
}

fn reference_score(reference: &str, response: &str) -> Option<f64> {
    score_response::<f64>(reference, response).ok()?.score.value().copied()
}

pub fn self_correction(
    tasks: &Path,
    policy: &dyn ChatModel,
    critic: &dyn ChatModel,
    editor: &dyn ChatModel,
    out: &Path,
    report: &Path,
) -> Result<StageReport> {
    let tasks: Vec<CorrectionTask> = read_rows(tasks)?;
    let outcomes: Vec<_> = tasks
        .par_iter()
        .map(|t| (t, self_correct(policy, critic, editor, &t.context)))
        .collect();
    let mut rows = Vec::new();
    let mut failed = 0;
    for (t, outcome) in outcomes {
        match outcome {
            Ok(result) => {
                let (score_before, score_after) = match &t.reference {
                    Some(r) => (reference_score(r, &result.original), reference_score(r, &result.final_content)),
                    None => (None, None),
                };
                rows.push(CorrectionRow { id: &t.id, result, score_before, score_after });
            }
            Err(e) => {
                tracing::warn!(task = %t.id, error = %e, "policy call failed");
                failed += 1;
            }
        }
    }
    write_rows(out, &rows)?;
    let mean = |f: fn(&CorrectionRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let tokens = |f: fn(&CorrectionRow) -> Option<u64>| rows.iter().filter_map(f).sum::<u64>();
    let summary = json!({
        "n": rows.len(),
        "revised": rows.iter().filter(|r| r.result.revised).count(),
        "flagged": rows.iter().filter(|r| !r.result.flags.is_empty()).count(),
        "mean_score_before": mean(|r| r.score_before),
        "mean_score_after": mean(|r| r.score_after),
        "output_tokens": {
            "policy": tokens(|r| r.result.tokens.policy),
            "critic": tokens(|r| r.result.tokens.critic),
            "editor": tokens(|r| r.result.tokens.editor),
        },
    });
    write_json(report, &summary)?;
    Ok(StageReport {
        stage: "bench-self-correct".into(),
        input: tasks.len(),
        output: rows.len(),
        dropped: [("policy_error".to_string(), failed)].into(),
        extra: summary,
    })
}
