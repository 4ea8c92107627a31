//! Benchmark pair construction and judge evaluation: the both-order pairwise
//! protocol, best-of-N selection and critic/editor self-correction.

use crate::chat::{ChatError, ChatModel};
use crate::critique::{extract_choice, extract_tag, render_history, render_pair, templates, Mode};
use crate::model::{render_calls, Message, ToolCall};
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchPair {
    pub split: String,
    pub task_id: String,
    pub context: Vec<Message>,
    pub chosen: String,
    pub rejected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_source_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleFailure {
    pub model_id: String,
    pub response: String,
    #[serde(default)]
    pub error_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnSpec {
    /// User message opening the turn.
    pub user: String,
    pub ground_truth: Vec<ToolCall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFailure {
    pub model_id: String,
    /// Generated calls per turn; missing trailing turns count as no calls.
    pub turns: Vec<Vec<ToolCall>>,
    #[serde(default)]
    pub error_type: Option<String>,
}

/// A labelled benchmark task with its oracle answer and failed model outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "turn_mode", rename_all = "snake_case")]
pub enum BenchTask {
    Single {
        split: String,
        task_id: String,
        context: Vec<Message>,
        oracle: String,
        failures: Vec<SingleFailure>,
    },
    Multi {
        split: String,
        task_id: String,
        /// Messages before the first turn's user message.
        context: Vec<Message>,
        turns: Vec<TurnSpec>,
        failures: Vec<MultiFailure>,
    },
}

impl BenchTask {
    pub fn task_id(&self) -> &str {
        match self {
            BenchTask::Single { task_id, .. } | BenchTask::Multi { task_id, .. } => task_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("task {0} has no failed output to pair against its oracle")]
pub struct NoFailure(pub String);

fn same_calls(a: &[ToolCall], b: &[ToolCall]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.is_identical(y))
}

/// One pair per failed output. Multi-turn tasks pair the first turn where a
/// failure diverges from the ground truth, with each side's calls of that turn
/// joined as consecutive `<tool_call>` blocks.
pub fn build_task_pairs(task: &BenchTask) -> Result<Vec<BenchPair>, NoFailure> {
    let mut pairs = Vec::new();
    match task {
        BenchTask::Single {
            split,
            task_id,
            context,
            oracle,
            failures,
        } => {
            for f in failures.iter().filter(|f| f.response != *oracle) {
                pairs.push(BenchPair {
                    split: split.clone(),
                    task_id: task_id.clone(),
                    context: context.clone(),
                    chosen: oracle.clone(),
                    rejected: f.response.clone(),
                    error_type: f.error_type.clone(),
                    rejected_source_model: Some(f.model_id.clone()),
                });
            }
        }
        BenchTask::Multi {
            split,
            task_id,
            context,
            turns,
            failures,
        } => {
            for f in failures {
                let generated = |t: usize| f.turns.get(t).map_or(&[][..], Vec::as_slice);
                let Some(t) = (0..turns.len()).find(|&t| !same_calls(&turns[t].ground_truth, generated(t))) else {
                    continue;
                };
                let mut ctx = context.clone();
                for turn in &turns[..t] {
                    ctx.push(Message::user(turn.user.clone()));
                    ctx.push(Message::assistant(render_calls(&turn.ground_truth)));
                }
                ctx.push(Message::user(turns[t].user.clone()));
                pairs.push(BenchPair {
                    split: split.clone(),
                    task_id: task_id.clone(),
                    context: ctx,
                    chosen: render_calls(&turns[t].ground_truth),
                    rejected: render_calls(generated(t)),
                    error_type: f.error_type.clone(),
                    rejected_source_model: Some(f.model_id.clone()),
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(NoFailure(task.task_id().to_string()));
    }
    Ok(pairs)
}

pub fn build_bench_pairs(tasks: &[BenchTask]) -> (Vec<BenchPair>, Vec<NoFailure>) {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for task in tasks {
        match build_task_pairs(task) {
            Ok(p) => pairs.extend(p),
            Err(e) => skipped.push(e),
        }
    }
    (pairs, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalFlag {
    InvalidChoice,
    EndpointError,
    MalformedCritique,
    MalformedRevision,
}

impl EvalFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalFlag::InvalidChoice => "invalid_choice",
            EvalFlag::EndpointError => "endpoint_error",
            EvalFlag::MalformedCritique => "malformed_critique",
            EvalFlag::MalformedRevision => "malformed_revision",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_index: usize,
    pub split: String,
    pub task_id: String,
    /// Choice with the chosen response first; it should be `"1"`.
    pub pass_a_choice: Option<String>,
    /// Choice with the chosen response second; it should be `"2"`.
    pub pass_b_choice: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<EvalFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScore<F> {
    pub name: String,
    pub n: usize,
    /// Percent.
    pub accuracy: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<F> {
    pub splits: Vec<SplitScore<F>>,
    /// Unweighted mean of split accuracies.
    pub avg: F,
    /// Mean of split accuracies weighted by split size.
    pub w_avg: F,
    pub flags: BTreeMap<String, usize>,
}

impl<F: Float> ScoreReport<F> {
    /// Builds the report from `(split, n, correct)` counts; splits keep the given order.
    pub fn from_counts(counts: &[(String, usize, usize)], flags: BTreeMap<String, usize>) -> Self {
        let f = |x: usize| F::from(x).expect("count fits the float type");
        let hundred = f(100);
        let splits: Vec<SplitScore<F>> = counts
            .iter()
            .map(|(name, n, correct)| SplitScore {
                name: name.clone(),
                n: *n,
                accuracy: if *n == 0 { F::zero() } else { hundred * f(*correct) / f(*n) },
            })
            .collect();
        let (avg, w_avg) = if splits.is_empty() {
            (F::zero(), F::zero())
        } else {
            let sum = splits.iter().fold(F::zero(), |a, s| a + s.accuracy);
            let total: usize = splits.iter().map(|s| s.n).sum();
            let weighted = splits.iter().fold(F::zero(), |a, s| a + f(s.n) * s.accuracy);
            (sum / f(splits.len()), if total == 0 { F::zero() } else { weighted / f(total) })
        };
        Self { splits, avg, w_avg, flags }
    }

    /// Aggregates records per split in first-appearance order.
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut counts: Vec<(String, usize, usize)> = Vec::new();
        let mut flags = BTreeMap::new();
        for r in records {
            match counts.iter_mut().find(|(name, _, _)| *name == r.split) {
                Some(entry) => {
                    entry.1 += 1;
                    entry.2 += usize::from(r.correct);
                }
                None => counts.push((r.split.clone(), 1, usize::from(r.correct))),
            }
            for flag in &r.flags {
                *flags.entry(flag.as_str().to_string()).or_insert(0) += 1;
            }
        }
        Self::from_counts(&counts, flags)
    }
}

fn ask(judge: &dyn ChatModel, prompt: String) -> Result<String, ChatError> {
    judge.complete(&[Message::user(prompt)], 0).map(|c| c.content)
}

/// Both-order evaluation of one pair. Unanswered or malformed passes count as
/// wrong and are flagged.
pub fn evaluate_pair(judge: &dyn ChatModel, index: usize, pair: &BenchPair, mode: Mode) -> EvalRecord {
    let mut flags = Vec::new();
    let mut pass = |swapped: bool| {
        let query = render_pair(&pair.task_id, &pair.context, &pair.chosen, &pair.rejected, mode, swapped);
        match ask(judge, query.query_text) {
            Ok(output) => {
                let choice = extract_choice(&output);
                if !matches!(choice.as_deref(), Some("1" | "2")) {
                    flags.push(EvalFlag::InvalidChoice);
                }
                let right = choice.as_deref() == Some(query.answer.as_str());
                (choice, right)
            }
            Err(_) => {
                flags.push(EvalFlag::EndpointError);
                (None, false)
            }
        }
    };
    let (pass_a_choice, a_ok) = pass(false);
    let (pass_b_choice, b_ok) = pass(true);
    flags.sort();
    flags.dedup();
    EvalRecord {
        pair_index: index,
        split: pair.split.clone(),
        task_id: pair.task_id.clone(),
        pass_a_choice,
        pass_b_choice,
        correct: a_ok && b_ok,
        flags,
    }
}

pub fn evaluate_pairwise(judge: &dyn ChatModel, pairs: &[BenchPair], mode: Mode) -> (ScoreReport<f64>, Vec<EvalRecord>) {
    let records: Vec<EvalRecord> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| evaluate_pair(judge, i, pair, mode))
        .collect();
    (ScoreReport::from_records(&records), records)
}

/// Reward model that scores a single response.
pub trait ScalarJudge: Send + Sync {
    fn score(&self, context: &[Message], response: &str) -> Result<f64, ChatError>;
}

/// Correct iff the chosen response scores strictly higher; ties are wrong.
pub fn evaluate_scalar(judge: &dyn ScalarJudge, pairs: &[BenchPair]) -> (ScoreReport<f64>, Vec<EvalRecord>) {
    let records: Vec<EvalRecord> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let chosen = judge.score(&pair.context, &pair.chosen);
            let rejected = judge.score(&pair.context, &pair.rejected);
            let flags = if chosen.is_err() || rejected.is_err() {
                vec![EvalFlag::EndpointError]
            } else {
                Vec::new()
            };
            let correct = matches!((&chosen, &rejected), (Ok(c), Ok(r)) if c > r);
            EvalRecord {
                pair_index: i,
                split: pair.split.clone(),
                task_id: pair.task_id.clone(),
                pass_a_choice: chosen.ok().map(|s| s.to_string()),
                pass_b_choice: rejected.ok().map(|s| s.to_string()),
                correct,
                flags,
            }
        })
        .collect();
    (ScoreReport::from_records(&records), records)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("best-of-n needs between 1 and {max} candidates, got {n}")]
pub struct BonArity {
    pub n: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BonSelection {
    /// 1-based.
    pub index: usize,
    pub judge_calls: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<EvalFlag>,
}

/// Picks one of `candidates` with the judge; invalid output falls back to 1.
pub fn bon_select(judge: &dyn ChatModel, context: &[Message], candidates: &[&str], max_n: usize) -> Result<BonSelection, BonArity> {
    let n = candidates.len();
    if n == 0 || n > max_n {
        return Err(BonArity { n, max: max_n });
    }
    if n == 1 {
        return Ok(BonSelection {
            index: 1,
            judge_calls: 0,
            flags: Vec::new(),
        });
    }
    let prompt = templates::best_of_n(&render_history(context), candidates, &n.to_string());
    let (index, flags) = match ask(judge, prompt) {
        Ok(output) => match extract_choice(&output).and_then(|c| c.parse::<usize>().ok()) {
            Some(i) if (1..=n).contains(&i) => (i, Vec::new()),
            _ => (1, vec![EvalFlag::InvalidChoice]),
        },
        Err(_) => (1, vec![EvalFlag::EndpointError]),
    };
    Ok(BonSelection {
        index,
        judge_calls: 1,
        flags,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTokens {
    pub policy: Option<u64>,
    pub critic: Option<u64>,
    pub editor: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCorrection {
    pub original: String,
    pub final_content: String,
    pub critique: Option<String>,
    pub revised: bool,
    pub tokens: StageTokens,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<EvalFlag>,
}

/// Policy answer, critic pass, and an editor pass unless the critique is
/// the correct marker. Failed critic or editor stages keep the original answer.
pub fn self_correct(
    policy: &dyn ChatModel,
    critic: &dyn ChatModel,
    editor: &dyn ChatModel,
    context: &[Message],
) -> Result<SelfCorrection, ChatError> {
    let answer = policy.complete(context, 0)?;
    let history = render_history(context);
    let mut out = SelfCorrection {
        original: answer.content.clone(),
        final_content: answer.content.clone(),
        critique: None,
        revised: false,
        tokens: StageTokens {
            policy: answer.output_tokens,
            ..Default::default()
        },
        flags: Vec::new(),
    };
    let critique = match critic.complete(&[Message::user(templates::critic(&history, &answer.content))], 0) {
        Ok(c) => {
            out.tokens.critic = c.output_tokens;
            extract_tag(&c.content, "critique")
        }
        Err(_) => {
            out.flags.push(EvalFlag::EndpointError);
            return Ok(out);
        }
    };
    let Some(critique) = critique else {
        out.flags.push(EvalFlag::MalformedCritique);
        return Ok(out);
    };
    out.critique = Some(critique.clone());
    if critique == templates::CORRECT_MARKER {
        return Ok(out);
    }
    match editor.complete(&[Message::user(templates::editor(&history, &answer.content, &critique))], 0) {
        Ok(e) => {
            out.tokens.editor = e.output_tokens;
            match extract_tag(&e.content, "revised_response") {
                Some(revised) => {
                    out.final_content = revised;
                    out.revised = true;
                }
                None => out.flags.push(EvalFlag::MalformedRevision),
            }
        }
        Err(_) => out.flags.push(EvalFlag::EndpointError),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::{Completion, FnModel};
    use crate::critique::read_slot;
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn call(name: &str, args: serde_json::Value) -> ToolCall {
        ToolCall::new(name, args.as_object().unwrap().clone())
    }

    fn pair(split: &str, i: usize) -> BenchPair {
        BenchPair {
            split: split.into(),
            task_id: format!("{split}-{i}"),
            context: vec![Message::user("q")],
            chosen: format!("good {i}"),
            rejected: format!("bad {i}"),
            error_type: None,
            rejected_source_model: None,
        }
    }

    fn slot_of(prompt: &str, needle: &str) -> &'static str {
        if read_slot(prompt, 1).is_some_and(|s| s.starts_with(needle)) {
            "1"
        } else {
            "2"
        }
    }

    #[test]
    fn single_turn_pairs() {
        let task = BenchTask::Single {
            split: "s".into(),
            task_id: "t".into(),
            context: vec![Message::user("q")],
            oracle: "A".into(),
            failures: vec![SingleFailure {
                model_id: "m".into(),
                response: "B".into(),
                error_type: Some("wrong_value".into()),
            }],
        };
        let pairs = build_task_pairs(&task).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].chosen.as_str(), pairs[0].rejected.as_str()), ("A", "B"));
        let clean = BenchTask::Single {
            split: "s".into(),
            task_id: "u".into(),
            context: vec![],
            oracle: "A".into(),
            failures: vec![SingleFailure {
                model_id: "m".into(),
                response: "A".into(),
                error_type: None,
            }],
        };
        assert_eq!(build_task_pairs(&clean), Err(NoFailure("u".into())));
    }

    #[test]
    fn multi_turn_uses_first_failed_turn() {
        let gt = |i: i64| vec![call("f", json!({"i": i})), call("g", json!({"i": i}))];
        let turns: Vec<TurnSpec> = (1..=4)
            .map(|i| TurnSpec {
                user: format!("u{i}"),
                ground_truth: gt(i),
            })
            .collect();
        let mut generated: Vec<Vec<ToolCall>> = (1..=4).map(gt).collect();
        generated[2] = vec![call("f", json!({"i": 99}))];
        generated[3] = vec![];
        let task = BenchTask::Multi {
            split: "multi".into(),
            task_id: "t".into(),
            context: vec![Message::system("S")],
            turns,
            failures: vec![MultiFailure {
                model_id: "m".into(),
                turns: generated,
                error_type: None,
            }],
        };
        let pairs = build_task_pairs(&task).unwrap();
        assert_eq!(pairs.len(), 1);
        let p = &pairs[0];
        assert_eq!(p.chosen, format!("{}\n{}", gt(3)[0].to_block(), gt(3)[1].to_block()));
        assert_eq!(p.rejected, call("f", json!({"i": 99})).to_block());
        let roles: Vec<_> = p.context.iter().map(|m| m.role.as_str()).collect();
        assert_eq!(roles, ["system", "user", "assistant", "user", "assistant", "user"]);
        assert_eq!(p.context.last().unwrap().content, "u3");
    }

    #[test]
    fn both_order_protocol() {
        let pairs: Vec<BenchPair> = (0..10).map(|i| pair("a", i)).collect();
        let always_one = FnModel::new("one", |_: &[Message]| Ok("<choice>1</choice>".to_string()));
        let (report, _) = evaluate_pairwise(&always_one, &pairs, Mode::Think);
        assert_eq!(report.splits[0].accuracy, 0.0);
        let oracle = FnModel::new("oracle", |m: &[Message]| Ok(format!("<choice>{}</choice>", slot_of(&m[0].content, "good"))));
        let (report, records) = evaluate_pairwise(&oracle, &pairs, Mode::NoThink);
        assert_eq!(report.splits[0].accuracy, 100.0);
        assert!(records.iter().all(|r| r.correct && r.flags.is_empty()));
    }

    #[test]
    fn failures_count_as_wrong() {
        let pairs = vec![pair("a", 0), pair("a", 1)];
        let broken = FnModel::new("x", |_: &[Message]| Err("boom".to_string()));
        let (report, records) = evaluate_pairwise(&broken, &pairs, Mode::Think);
        assert_eq!(report.splits[0].n, 2);
        assert_eq!(report.splits[0].accuracy, 0.0);
        assert_eq!(records[0].flags, vec![EvalFlag::EndpointError]);
        assert_eq!(report.flags["endpoint_error"], 2);
        let rambler = FnModel::new("r", |_: &[Message]| Ok("maybe".to_string()));
        let (report, _) = evaluate_pairwise(&rambler, &pairs, Mode::Think);
        assert_eq!(report.flags["invalid_choice"], 2);
    }

    #[test]
    fn report_arithmetic() {
        let r = ScoreReport::<f64>::from_counts(&[("x".into(), 100, 50), ("y".into(), 300, 270)], BTreeMap::new());
        assert_eq!(r.avg, 70.0);
        assert_eq!(r.w_avg, 80.0);
        let empty = ScoreReport::<f64>::from_records(&[]);
        assert!(empty.splits.is_empty());
    }

    struct Fixed(Vec<f64>, AtomicUsize);

    impl ScalarJudge for Fixed {
        fn score(&self, _: &[Message], _: &str) -> Result<f64, ChatError> {
            Ok(self.0[self.1.fetch_add(1, Ordering::SeqCst) % self.0.len()])
        }
    }

    #[test]
    fn scalar_ties_are_wrong() {
        let (report, _) = evaluate_scalar(&Fixed(vec![0.5], AtomicUsize::new(0)), &[pair("a", 0)]);
        assert_eq!(report.splits[0].accuracy, 0.0);
        let (report, _) = evaluate_scalar(&Fixed(vec![0.9, 0.1], AtomicUsize::new(0)), &[pair("a", 0)]);
        assert_eq!(report.splits[0].accuracy, 100.0);
    }

    #[test]
    fn bon() {
        let calls = AtomicUsize::new(0);
        let judge = FnModel::new("j", |m: &[Message]| {
            calls.fetch_add(1, Ordering::SeqCst);
            assert!(m[0].content.contains("a number between 1 and 4"));
            Ok("<choice>3</choice>".to_string())
        });
        let ctx = [Message::user("q")];
        let one = bon_select(&judge, &ctx, &["a"], 16).unwrap();
        assert_eq!((one.index, one.judge_calls), (1, 0));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert_eq!(bon_select(&judge, &ctx, &["a", "b", "c", "d"], 16).unwrap().index, 3);
        let wild = FnModel::new("j", |_: &[Message]| Ok("<choice>7</choice>".to_string()));
        let sel = bon_select(&wild, &ctx, &["a", "b", "c", "d"], 16).unwrap();
        assert_eq!((sel.index, sel.flags.as_slice()), (1, &[EvalFlag::InvalidChoice][..]));
        assert!(bon_select(&judge, &ctx, &["a", "b"], 1).is_err());
    }

    struct Scripted(&'static str, Option<u64>);

    impl ChatModel for Scripted {
        fn model_id(&self) -> &str {
            "scripted"
        }

        fn complete(&self, _: &[Message], _: u32) -> Result<Completion, ChatError> {
            Ok(Completion {
                content: self.0.to_string(),
                output_tokens: self.1,
            })
        }
    }

    #[test]
    fn self_correction_paths() {
        let ctx = [Message::user("q")];
        let policy = Scripted("draft", Some(5));
        let editor_calls = AtomicUsize::new(0);
        let editor = FnModel::new("e", |m: &[Message]| {
            editor_calls.fetch_add(1, Ordering::SeqCst);
            assert!(m[0].content.contains("<critique>\nuse city=Paris\n</critique>"));
            Ok("<revised_response>\nfixed\n</revised_response>".to_string())
        });

        let ok = self_correct(&policy, &Scripted("<critique>[correct]</critique>", Some(3)), &editor, &ctx).unwrap();
        assert_eq!(ok.final_content, "draft");
        assert!(!ok.revised);
        assert_eq!(editor_calls.load(Ordering::SeqCst), 0);
        assert_eq!(ok.tokens.critic, Some(3));

        let fix = self_correct(&policy, &Scripted("<critique>use city=Paris</critique>", None), &editor, &ctx).unwrap();
        assert_eq!(fix.final_content, "fixed");
        assert!(fix.revised);
        assert_eq!(editor_calls.load(Ordering::SeqCst), 1);

        let bad = self_correct(&policy, &Scripted("looks fine", None), &editor, &ctx).unwrap();
        assert_eq!(bad.final_content, "draft");
        assert_eq!(bad.flags, vec![EvalFlag::MalformedCritique]);

        let no_rev = self_correct(&policy, &Scripted("<critique>x</critique>", None), &Scripted("nope", None), &ctx).unwrap();
        assert_eq!(no_rev.final_content, "draft");
        assert_eq!(no_rev.flags, vec![EvalFlag::MalformedRevision]);
    }
}
