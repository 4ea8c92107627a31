//! Judge prompt rendering, choice extraction, binary rewards and group
//! advantages.

pub mod templates;

use crate::model::Message;
use crate::pref::PairwiseSample;
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Think,
    NoThink,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Think => "think",
            Mode::NoThink => "no_think",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "think" => Ok(Mode::Think),
            "no_think" | "no-think" => Ok(Mode::NoThink),
            other => Err(format!("unknown mode {other:?} (expected think or no_think)")),
        }
    }
}

/// `[role]: content` per message, newline separated. Content is not escaped.
pub fn render_history(context: &[Message]) -> String {
    context
        .iter()
        .map(|m| format!("[{}]: {}", m.role, m.content))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueQuery {
    pub id: String,
    pub query_text: String,
    /// `"1"` or `"2"`: the slot holding the chosen response.
    pub answer: String,
    pub swapped: bool,
    pub mode: Mode,
}

impl CritiqueQuery {
    pub fn reward(&self, rollout: &str) -> u8 {
        reward(&self.answer, rollout)
    }
}

/// Renders a pairwise query with the chosen response in slot 2 when `swapped`.
pub fn render_pair(id: &str, context: &[Message], chosen: &str, rejected: &str, mode: Mode, swapped: bool) -> CritiqueQuery {
    let history = render_history(context);
    let (first, second) = if swapped { (rejected, chosen) } else { (chosen, rejected) };
    CritiqueQuery {
        id: id.to_string(),
        query_text: templates::pairwise(mode, &history, first, second),
        answer: if swapped { "2" } else { "1" }.to_string(),
        swapped,
        mode,
    }
}

/// Renders a sample, swapping the response order with probability 0.5.
pub fn render_pairwise<R: Rng + ?Sized>(sample: &PairwiseSample, mode: Mode, rng: &mut R) -> CritiqueQuery {
    render_pairwise_with(sample, mode, rng.random_bool(0.5))
}

pub fn render_pairwise_with(sample: &PairwiseSample, mode: Mode, swapped: bool) -> CritiqueQuery {
    render_pair(&sample.id, &sample.context, &sample.y_plus, &sample.y_minus, mode, swapped)
}

/// Reads the body of `<current_response_{slot}>` back out of a rendered query.
/// Returns `None` when the slot is missing. Assumes the response bodies do not
/// themselves contain the slot's closing tag.
pub fn read_slot(query_text: &str, slot: usize) -> Option<&str> {
    let open = format!("<current_response_{slot}>\n");
    let close = format!("\n</current_response_{slot}>\n\n");
    let history_end = query_text.find("</conversation_history>\n\n").map_or(0, |i| i + 25);
    let start = history_end + query_text[history_end..].find(&open)? + open.len();
    let len = query_text[start..].find(&close)?;
    Some(&query_text[start..start + len])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxiliaryKind {
    Bon,
    Critic,
    Editor,
    SystemPrompt,
}

impl fmt::Display for AuxiliaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuxiliaryKind::Bon => "bon",
            AuxiliaryKind::Critic => "critic",
            AuxiliaryKind::Editor => "editor",
            AuxiliaryKind::SystemPrompt => "system_prompt",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct AuxiliaryInputs<'a> {
    pub history: &'a str,
    pub responses: &'a [&'a str],
    pub critique: Option<&'a str>,
    pub tool_descs: &'a str,
    pub agent_policy: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} prompt expects {expected}, got {responses} response(s){}", if *.has_critique { " and a critique" } else { "" })]
pub struct ArityMismatch {
    pub kind: AuxiliaryKind,
    pub expected: &'static str,
    pub responses: usize,
    pub has_critique: bool,
}

pub fn render_auxiliary(kind: AuxiliaryKind, inputs: &AuxiliaryInputs<'_>) -> Result<String, ArityMismatch> {
    let n = inputs.responses.len();
    let mismatch = |expected| ArityMismatch {
        kind,
        expected,
        responses: n,
        has_critique: inputs.critique.is_some(),
    };
    match kind {
        AuxiliaryKind::Bon => {
            if n == 0 || inputs.critique.is_some() {
                return Err(mismatch("at least one response"));
            }
            Ok(templates::best_of_n(inputs.history, inputs.responses, &n.to_string()))
        }
        AuxiliaryKind::Critic => {
            if n != 1 || inputs.critique.is_some() {
                return Err(mismatch("exactly one response"));
            }
            Ok(templates::critic(inputs.history, inputs.responses[0]))
        }
        AuxiliaryKind::Editor => match inputs.critique {
            Some(critique) if n == 1 => Ok(templates::editor(inputs.history, inputs.responses[0], critique)),
            _ => Err(mismatch("one response and a critique")),
        },
        AuxiliaryKind::SystemPrompt => {
            if n != 0 || inputs.critique.is_some() {
                return Err(mismatch("no responses"));
            }
            Ok(templates::system_prompt(inputs.tool_descs, inputs.agent_policy))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceExtraction {
    /// The last well-formed block wins.
    #[default]
    Last,
    /// Exactly one open and one close tag, in order.
    Strict,
}

/// Bodies of every well-formed `<tag>…</tag>` block, in order. An open tag
/// followed by another open tag before any close is skipped.
pub fn tag_blocks<'a>(text: &'a str, tag: &str) -> Vec<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut blocks = Vec::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find(&open) {
        let body_start = pos + rel + open.len();
        let Some(close_rel) = text[body_start..].find(&close) else {
            break;
        };
        let body = &text[body_start..body_start + close_rel];
        if let Some(reopen) = body.find(&open) {
            pos = body_start + reopen;
            continue;
        }
        blocks.push(body);
        pos = body_start + close_rel + close.len();
    }
    blocks
}

/// Trimmed body of the last well-formed `<tag>` block; empty bodies are `None`.
pub fn extract_tag(text: &str, tag: &str) -> Option<String> {
    tag_blocks(text, tag)
        .last()
        .map(|b| b.trim())
        .filter(|b| !b.is_empty())
        .map(str::to_string)
}

pub fn extract_choice(output: &str) -> Option<String> {
    extract_tag(output, "choice")
}

pub fn extract_choice_with(output: &str, extraction: ChoiceExtraction) -> Option<String> {
    match extraction {
        ChoiceExtraction::Last => extract_choice(output),
        ChoiceExtraction::Strict => {
            if output.matches("<choice>").count() != 1 || output.matches("</choice>").count() != 1 {
                return None;
            }
            extract_choice(output)
        }
    }
}

/// 1 iff a choice is extracted and equals the answer after trimming.
pub fn reward(answer: &str, rollout: &str) -> u8 {
    reward_with(answer, rollout, ChoiceExtraction::Last)
}

pub fn reward_with(answer: &str, rollout: &str, extraction: ChoiceExtraction) -> u8 {
    match extract_choice_with(rollout, extraction) {
        Some(choice) if choice == answer.trim() => 1,
        _ => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("group of {0} rollouts is too small; at least 2 are required")]
pub struct GroupTooSmall(pub usize);

/// `(r - mean) / std` with the population standard deviation. A group with
/// zero variance gets all-zero advantages.
pub fn group_advantages<F: Float>(rewards: &[F]) -> Result<Vec<F>, GroupTooSmall> {
    if rewards.len() < 2 {
        return Err(GroupTooSmall(rewards.len()));
    }
    let n = F::from(rewards.len()).expect("group size fits the float type");
    let mean = rewards.iter().fold(F::zero(), |a, &r| a + r) / n;
    let var = rewards.iter().fold(F::zero(), |a, &r| a + (r - mean) * (r - mean)) / n;
    if var <= F::zero() {
        return Ok(vec![F::zero(); rewards.len()]);
    }
    let std = var.sqrt();
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(rewards: Vec<f64>) -> Result<Self, GroupTooSmall> {
        let advantages = group_advantages(&rewards)?;
        Ok(Self { rewards, advantages })
    }
}
