//! Rule-based scoring of a sampled response against the ground truth.
//!
//! For ground-truth calls `C*` and predicted calls `Ĉ`:
//!
//! 1. both empty → 1
//! 2. `|Ĉ| ≠ |C*|` → 0
//! 3. two identical predicted calls → 0
//! 4. otherwise each ground-truth call scores
//!    `s_i = max over ĉ of [name matches] · sim(args)` and the result is the
//!    mean of the `s_i`.
//!
//! Each ground-truth call is matched independently, so one predicted call may
//! be the best match for several ground-truth calls.

use crate::content::{extract_tool_calls, ParseFailure};
use crate::model::ToolCall;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disqualifier {
    CountMismatch,
    DuplicatePredicted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Score<S> {
    Value(S),
    /// The response could not be parsed into tool calls; it is discarded, not scored.
    Unparsable,
}

impl<S: Scalar> Score<S> {
    pub fn value(&self) -> Option<&S> {
        match self {
            Score::Value(s) => Some(s),
            Score::Unparsable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallMatch<S> {
    pub gt_call_index: usize,
    /// Some predicted call has the same name.
    pub matched_name: bool,
    pub best_sim: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResult<S> {
    pub score: Score<S>,
    pub per_call: Vec<CallMatch<S>>,
    pub disqualifier: Option<Disqualifier>,
}

impl<S: Scalar> ScoreResult<S> {
    fn fixed(score: S, disqualifier: Option<Disqualifier>) -> Self {
        Self {
            score: Score::Value(score),
            per_call: Vec::new(),
            disqualifier,
        }
    }

    pub fn unparsable() -> Self {
        Self {
            score: Score::Unparsable,
            per_call: Vec::new(),
            disqualifier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ground truth does not parse: {0}")]
pub struct GroundTruthError(#[from] pub ParseFailure);

fn numbers_equal(a: &Number, b: &Number) -> bool {
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) { return x == y }
    if let (Some(x), Some(y)) = (a.as_u64(), b.as_u64()) { return x == y }
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x.partial_cmp(&y) == Some(Ordering::Equal),
        _ => false,
    }
}

/// Value equality used by [`sim`]: strings case-insensitively at any depth,
/// numbers by value (`1 == 1.0`), arrays element-wise, objects key-wise with
/// case-sensitive keys.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::String(x), Value::String(y)) => x == y || x.to_lowercase() == y.to_lowercase(),
        (Value::Number(x), Value::Number(y)) => numbers_equal(x, y),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| values_equal(v, w)))
        }
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Null, Value::Null) => true,
        _ => false,
    }
}

/// Fraction of keys in either map whose values match in both; 1 when both are empty.
pub fn sim<S: Scalar>(a: &Map<String, Value>, b: &Map<String, Value>) -> S {
    let union: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    if union.is_empty() {
        return S::one();
    }
    let identical = a
        .iter()
        .filter(|(k, v)| b.get(*k).is_some_and(|w| values_equal(v, w)))
        .count();
    S::ratio(identical, union.len())
}

/// Scores already-parsed call lists.
pub fn score_calls<S: Scalar>(ground_truth: &[ToolCall], predicted: &[ToolCall]) -> ScoreResult<S> {
    if ground_truth.is_empty() && predicted.is_empty() {
        return ScoreResult::fixed(S::one(), None);
    }
    if ground_truth.len() != predicted.len() {
        return ScoreResult::fixed(S::zero(), Some(Disqualifier::CountMismatch));
    }
    let has_duplicate = predicted
        .iter()
        .enumerate()
        .any(|(i, c)| predicted[..i].iter().any(|p| p.is_identical(c)));
    if has_duplicate {
        return ScoreResult::fixed(S::zero(), Some(Disqualifier::DuplicatePredicted));
    }

    let per_call: Vec<CallMatch<S>> = ground_truth
        .iter()
        .enumerate()
        .map(|(gt_call_index, gt)| {
            let mut matched_name = false;
            let mut best = S::zero();
            for p in predicted.iter().filter(|p| p.name == gt.name) {
                matched_name = true;
                let s: S = sim(&gt.arguments, &p.arguments);
                if s > best {
                    best = s;
                }
            }
            CallMatch {
                gt_call_index,
                matched_name,
                best_sim: best,
            }
        })
        .collect();
    let total = per_call.iter().fold(S::zero(), |acc, m| acc + m.best_sim.clone());
    let score = total / S::ratio(per_call.len(), 1);
    ScoreResult {
        score: Score::Value(score),
        per_call,
        disqualifier: None,
    }
}

/// Scores response text `y_hat` against ground-truth text `y_star`.
///
/// Fails only when the ground truth itself does not parse; an unparsable
/// `y_hat` yields [`Score::Unparsable`].
pub fn score_response<S: Scalar>(y_star: &str, y_hat: &str) -> Result<ScoreResult<S>, GroundTruthError> {
    let truth = extract_tool_calls(y_star)?;
    Ok(match extract_tool_calls(y_hat) {
        Ok(pred) => score_calls(&truth, &pred),
        Err(_) => ScoreResult::unparsable(),
    })
}

/// Number of ground-truth calls plus their total argument count.
pub fn complexity(ground_truth: &[ToolCall]) -> usize {
    ground_truth.len() + ground_truth.iter().map(|c| c.arguments.len()).sum::<usize>()
}

/// One line of the scored-responses file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub context_id: String,
    pub model_id: String,
    #[serde(default)]
    pub sample_index: u32,
    pub response: String,
    pub score: RowScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disqualifier: Option<Disqualifier>,
}

/// A numeric score, or the literal string `"unparsable"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowScore {
    Value(f64),
    Label(UnparsableLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnparsableLabel {
    #[serde(rename = "unparsable")]
    Unparsable,
}

impl RowScore {
    pub fn value(self) -> Option<f64> {
        match self {
            RowScore::Value(v) => Some(v),
            RowScore::Label(_) => None,
        }
    }
}

impl ScoredRow {
    pub fn new(context_id: String, model_id: String, sample_index: u32, response: String, result: &ScoreResult<f64>) -> Self {
        let score = match result.score {
            Score::Value(v) => RowScore::Value(v),
            Score::Unparsable => RowScore::Label(UnparsableLabel::Unparsable),
        };
        Self {
            context_id,
            model_id,
            sample_index,
            response,
            score,
            disqualifier: result.disqualifier,
        }
    }
}
