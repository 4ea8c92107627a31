//! Trajectory segmentation and the two segment filters.
//!
//! Every assistant message closes one segment whose context is the full
//! prefix before it. A segment survives when the message after it carries no
//! failed tool response and every call in it validates against the schemas.

use crate::content::{extract_tool_calls, parse_content, BlockKind};
use crate::model::{Message, Role, SourceId, ToolCall, ToolSchema, Trajectory};
use rayon::prelude::*;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub trajectory_id: String,
    pub turn_index: usize,
    pub source: SourceId,
    pub context: Vec<Message>,
    pub ground_truth: String,
}

impl Segment {
    /// Stable identifier `"{trajectory_id}#{turn_index}"`.
    pub fn id(&self) -> String {
        format!("{}#{}", self.trajectory_id, self.turn_index)
    }

    pub fn ground_truth_calls(&self) -> Result<Vec<ToolCall>, crate::content::ParseFailure> {
        extract_tool_calls(&self.ground_truth)
    }
}

/// One segment per assistant message, ordered by position.
pub fn segment(traj: &Trajectory) -> Vec<Segment> {
    segment_with_following(traj).into_iter().map(|(s, _)| s).collect()
}

/// Segments paired with the message that follows each ground truth, if any.
pub fn segment_with_following(traj: &Trajectory) -> Vec<(Segment, Option<&Message>)> {
    traj.messages
        .iter()
        .enumerate()
        .filter(|(_, m)| m.role == Role::Assistant)
        .enumerate()
        .map(|(turn_index, (pos, m))| {
            let seg = Segment {
                trajectory_id: traj.id.clone(),
                turn_index,
                source: traj.source.clone(),
                context: traj.messages[..pos].to_vec(),
                ground_truth: m.content.clone(),
            };
            (seg, traj.messages.get(pos + 1))
        })
        .collect()
}

/// What counts as an unsuccessful tool response.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureMarkerConfig {
    /// Top-level keys whose presence (with a non-null value) marks failure.
    pub error_keys: Vec<String>,
    pub status_field: String,
    /// Case-insensitive pattern matched against string values of `status_field`.
    pub status_pattern: String,
    pub status_code_field: String,
    pub min_failure_status_code: u64,
}

impl Default for FailureMarkerConfig {
    fn default() -> Self {
        Self {
            error_keys: vec!["error".into(), "errors".into()],
            status_field: "status".into(),
            status_pattern: "^(error|failed|exception)".into(),
            status_code_field: "status_code".into(),
            min_failure_status_code: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FailureMarkers {
    config: FailureMarkerConfig,
    status: Regex,
}

impl Default for FailureMarkers {
    fn default() -> Self {
        Self::new(FailureMarkerConfig::default()).expect("default pattern compiles")
    }
}

impl FailureMarkers {
    pub fn new(config: FailureMarkerConfig) -> Result<Self, regex::Error> {
        let status = RegexBuilder::new(&config.status_pattern)
            .case_insensitive(true)
            .build()?;
        Ok(Self { config, status })
    }

    pub fn config(&self) -> &FailureMarkerConfig {
        &self.config
    }

    /// Whether one tool-response payload reports a failure. Non-JSON and
    /// non-object payloads never match.
    pub fn is_failure(&self, payload: &str) -> bool {
        let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(payload.trim()) else {
            return false;
        };
        let c = &self.config;
        if c.error_keys.iter().any(|k| obj.get(k).is_some_and(|v| !v.is_null())) {
            return true;
        }
        if obj
            .get(&c.status_field)
            .and_then(Value::as_str)
            .is_some_and(|s| self.status.is_match(s))
        {
            return true;
        }
        let code = obj.get(&c.status_code_field).and_then(|v| match v {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        });
        code.is_some_and(|code| code >= c.min_failure_status_code)
    }
}

/// Keeps a segment unless `following` carries a failed tool response.
pub fn preliminary_filter(following: Option<&Message>, markers: &FailureMarkers) -> bool {
    let Some(next) = following else {
        return true;
    };
    if next.role == Role::Tool && markers.is_failure(&next.content) {
        return false;
    }
    match parse_content(&next.content) {
        Ok(blocks) => !blocks
            .of_kind(BlockKind::ToolResponse)
            .any(|b| markers.is_failure(&b.payload)),
        Err(_) => true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ValidationReason {
    Unparsable { detail: String },
    UnknownTool { tool: String },
    UndeclaredArgument { tool: String, key: String },
    MissingRequired { tool: String, key: String },
    TypeMismatch { tool: String, key: String, expected: String },
    DuplicateCall { tool: String },
}

impl ValidationReason {
    pub fn kind(&self) -> &'static str {
        match self {
            ValidationReason::Unparsable { .. } => "unparsable",
            ValidationReason::UnknownTool { .. } => "unknown_tool",
            ValidationReason::UndeclaredArgument { .. } => "undeclared_argument",
            ValidationReason::MissingRequired { .. } => "missing_required",
            ValidationReason::TypeMismatch { .. } => "type_mismatch",
            ValidationReason::DuplicateCall { .. } => "duplicate_call",
        }
    }
}

impl fmt::Display for ValidationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationReason::Unparsable { detail } => write!(f, "unparsable: {detail}"),
            ValidationReason::UnknownTool { tool } => write!(f, "unknown tool {tool:?}"),
            ValidationReason::UndeclaredArgument { tool, key } => write!(f, "{tool}: undeclared argument {key:?}"),
            ValidationReason::MissingRequired { tool, key } => write!(f, "{tool}: missing required {key:?}"),
            ValidationReason::TypeMismatch { tool, key, expected } => {
                write!(f, "{tool}: {key:?} is not of type {expected}")
            }
            ValidationReason::DuplicateCall { tool } => write!(f, "duplicate call to {tool}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validation {
    pub keep: bool,
    pub reasons: Vec<ValidationReason>,
}

fn type_matches(value: &Value, ty: &str) -> bool {
    match ty {
        "string" => value.is_string(),
        // integers are numbers
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64() || value.as_f64().is_some_and(|f| f.fract() == 0.0),
        "boolean" => value.is_boolean(),
        "array" => value.is_array(),
        "object" => value.is_object(),
        "null" => value.is_null(),
        _ => true,
    }
}

/// Checks every call in `response` against `schemas`.
///
/// Optional arguments passed as `null` count as absent.
pub fn strict_validate(response: &str, schemas: &[ToolSchema]) -> Validation {
    let calls = match extract_tool_calls(response) {
        Ok(calls) => calls,
        Err(e) => {
            return Validation {
                keep: false,
                reasons: vec![ValidationReason::Unparsable { detail: e.to_string() }],
            }
        }
    };
    let mut reasons = Vec::new();
    for (i, call) in calls.iter().enumerate() {
        let tool = call.name.clone();
        let Some(schema) = schemas.iter().find(|s| s.name == call.name) else {
            reasons.push(ValidationReason::UnknownTool { tool });
            continue;
        };
        let props = schema.properties();
        for (key, value) in &call.arguments {
            let declared = props.is_some_and(|p| p.contains_key(key));
            if value.is_null() && !schema.required().contains(&key.as_str()) {
                continue;
            }
            if !declared {
                reasons.push(ValidationReason::UndeclaredArgument {
                    tool: tool.clone(),
                    key: key.clone(),
                });
                continue;
            }
            let types = schema.property_types(key);
            if !types.is_empty() && !types.iter().any(|t| type_matches(value, t)) {
                reasons.push(ValidationReason::TypeMismatch {
                    tool: tool.clone(),
                    key: key.clone(),
                    expected: types.join("|"),
                });
            }
        }
        for key in schema.required() {
            if call.arguments.get(key).is_none_or(Value::is_null) {
                reasons.push(ValidationReason::MissingRequired {
                    tool: tool.clone(),
                    key: key.to_string(),
                });
            }
        }
        if calls[..i].iter().any(|prev| prev.is_identical(call)) {
            reasons.push(ValidationReason::DuplicateCall { tool });
        }
    }
    Validation {
        keep: reasons.is_empty(),
        reasons,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SegmentReport {
    pub trajectories: usize,
    pub segments: usize,
    pub kept: usize,
    pub dropped_tool_failure: usize,
    pub dropped_validation: usize,
    /// Counts per validation reason kind; a segment may contribute several.
    pub validation_reasons: BTreeMap<String, usize>,
}

/// Segments and filters a corpus. Output is ordered by trajectory then turn.
pub fn segment_corpus(trajectories: &[Trajectory], markers: &FailureMarkers) -> (Vec<Segment>, SegmentReport) {
    enum Outcome {
        Keep(Segment),
        ToolFailure,
        Invalid(Vec<ValidationReason>),
    }
    let outcomes: Vec<Vec<Outcome>> = trajectories
        .par_iter()
        .map(|traj| {
            segment_with_following(traj)
                .into_iter()
                .map(|(seg, following)| {
                    if !preliminary_filter(following, markers) {
                        return Outcome::ToolFailure;
                    }
                    let v = strict_validate(&seg.ground_truth, &traj.schemas);
                    if v.keep {
                        Outcome::Keep(seg)
                    } else {
                        Outcome::Invalid(v.reasons)
                    }
                })
                .collect()
        })
        .collect();
    let mut report = SegmentReport {
        trajectories: trajectories.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        report.segments += 1;
        match outcome {
            Outcome::Keep(seg) => kept.push(seg),
            Outcome::ToolFailure => report.dropped_tool_failure += 1,
            Outcome::Invalid(reasons) => {
                report.dropped_validation += 1;
                for r in reasons {
                    *report.validation_reasons.entry(r.kind().to_string()).or_default() += 1;
                }
            }
        }
    }
    report.kept = kept.len();
    (kept, report)
}
