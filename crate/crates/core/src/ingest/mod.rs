//! Corpus normalization: raw records → format-aligned [`Trajectory`] values.

pub mod adapter;
pub mod schema;

pub use adapter::{MappedRole, MessageMapping, SourceAdapter, SystemMessagePolicy};
pub use schema::{validate_schemas, RepairAction, RepairEntry, SchemaValidation, Unrepairable};

use crate::critique::templates;
use crate::jsonfmt::to_spaced_string;
use crate::model::{first_invalid_transition, render_calls, Message, Role, SourceId, ToolCall, ToolSchema, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("invalid role order at message {position}: {from} -> {to}")]
    InvalidRoleOrder { position: usize, from: Role, to: Role },
    #[error("conversation has no non-system messages")]
    EmptyConversation,
    #[error("unmappable record: {0}")]
    UnmappableRecord(String),
    #[error("schema {name:?} cannot be repaired: {reason}")]
    SchemaUnrepairable { name: String, reason: String },
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub trajectory: Trajectory,
    pub schema_log: Vec<RepairEntry>,
}

/// Assembles the system message: every schema as one function object per
/// line inside `<tools>`, plus an agent-policy section when `policy` is non-empty.
pub fn build_system_message(schemas: &[ToolSchema], policy: Option<&str>) -> Message {
    let descs = schemas
        .iter()
        .map(|s| to_spaced_string(&s.to_function_json()))
        .collect::<Vec<_>>()
        .join("\n");
    Message::system(templates::system_prompt(&descs, policy))
}

fn unmappable(msg: impl Into<String>) -> Rejection {
    Rejection::UnmappableRecord(msg.into())
}

fn value_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => to_spaced_string(other),
    }
}

/// Strings holding serialized JSON are decoded; anything else is returned as is.
fn decode_embedded(value: &Value) -> Value {
    match value {
        Value::String(s) => serde_json::from_str(s).unwrap_or_else(|_| value.clone()),
        other => other.clone(),
    }
}

fn call_from_value(value: &Value) -> Result<ToolCall, Rejection> {
    let obj = value.as_object().ok_or_else(|| unmappable("tool call is not an object"))?;
    let obj = obj.get("function").and_then(Value::as_object).unwrap_or(obj);
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| unmappable("tool call without a name"))?;
    let arguments = match obj.get("arguments").map(decode_embedded) {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(args)) => args,
        Some(_) => return Err(unmappable(format!("arguments of {name:?} are not an object"))),
    };
    Ok(ToolCall::new(name, arguments))
}

fn calls_from_value(value: &Value) -> Result<Vec<ToolCall>, Rejection> {
    match decode_embedded(value) {
        Value::Array(items) => items.iter().map(call_from_value).collect(),
        obj @ Value::Object(_) => Ok(vec![call_from_value(&obj)?]),
        Value::Null => Ok(Vec::new()),
        _ => Err(unmappable("tool calls are neither an object nor a list")),
    }
}

fn wrap_tool_response(content: &str) -> String {
    if content.contains("<tool_response>") {
        content.to_string()
    } else {
        format!("<tool_response>\n{content}\n</tool_response>")
    }
}

fn schemas_from_system_tag(system: &str) -> Vec<Value> {
    let mut out = Vec::new();
    let mut rest = system;
    while let Some(start) = rest.find("<tools>") {
        let body_start = start + "<tools>".len();
        let Some(len) = rest[body_start..].find("</tools>") else {
            break;
        };
        let body = rest[body_start..body_start + len].trim();
        rest = &rest[body_start + len + "</tools>".len()..];
        if body.is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(body) {
            Ok(Value::Array(items)) => out.extend(items),
            Ok(obj @ Value::Object(_)) => out.push(obj),
            _ => out.extend(
                body.lines()
                    .filter_map(|l| serde_json::from_str::<Value>(l.trim()).ok())
                    .filter(Value::is_object),
            ),
        }
    }
    out
}

/// Maps one raw record through `adapter`. `index` is the record's position in
/// its corpus and names the trajectory when the record carries no id.
pub fn normalize(record: &Value, adapter: &SourceAdapter, index: usize) -> Result<Normalized, Rejection> {
    let obj = record.as_object().ok_or_else(|| unmappable("record is not a JSON object"))?;
    let mut raw: Vec<(MappedRole, String)> = Vec::new();
    match &adapter.messages {
        MessageMapping::List {
            list_field,
            role_field,
            content_field,
            tool_calls_field,
        } => {
            let list = obj
                .get(list_field)
                .map(decode_embedded)
                .ok_or_else(|| unmappable(format!("missing {list_field:?}")))?;
            let list = list
                .as_array()
                .ok_or_else(|| unmappable(format!("{list_field:?} is not a list")))?;
            for item in list {
                let role_raw = item
                    .get(role_field)
                    .and_then(Value::as_str)
                    .ok_or_else(|| unmappable(format!("message without {role_field:?}")))?;
                let role = adapter
                    .map_role(role_raw)
                    .ok_or_else(|| unmappable(format!("unknown role {role_raw:?}")))?;
                let content = item.get(content_field).cloned().unwrap_or(Value::Null);
                let mut text = match role {
                    MappedRole::AssistantCall => render_calls(&calls_from_value(&content)?),
                    _ => value_text(&content),
                };
                if let Some(field) = tool_calls_field {
                    if let Some(calls) = item.get(field).filter(|v| !v.is_null()) {
                        let calls = calls_from_value(calls)?;
                        if !calls.is_empty() {
                            if !text.is_empty() {
                                text.push('\n');
                            }
                            text.push_str(&render_calls(&calls));
                        }
                    }
                }
                raw.push((role, text));
            }
        }
        MessageMapping::Fields { fields } => {
            for f in fields {
                let value = obj
                    .get(&f.field)
                    .ok_or_else(|| unmappable(format!("missing {:?}", f.field)))?;
                let text = match f.role {
                    MappedRole::AssistantCall => render_calls(&calls_from_value(value)?),
                    _ => value_text(value),
                };
                raw.push((f.role, text));
            }
        }
    }

    let leading_system: Vec<String> = raw
        .iter()
        .take_while(|(r, _)| *r == MappedRole::System)
        .map(|(_, c)| c.clone())
        .collect();
    let rest = &raw[leading_system.len()..];

    // parallel tool responses arrive as consecutive tool messages; they share one user turn
    let mut turns: Vec<(Role, String)> = Vec::new();
    for (role, text) in rest {
        let role = match role {
            MappedRole::System => Role::System,
            MappedRole::User => Role::User,
            MappedRole::Assistant | MappedRole::AssistantCall => Role::Assistant,
            MappedRole::Tool => Role::Tool,
        };
        match turns.last_mut() {
            Some((Role::Tool, prev)) if role == Role::Tool => {
                prev.push('\n');
                prev.push_str(&wrap_tool_response(text));
            }
            _ if role == Role::Tool => turns.push((Role::Tool, wrap_tool_response(text))),
            _ => turns.push((role, text.clone())),
        }
    }
    if turns.is_empty() {
        return Err(Rejection::EmptyConversation);
    }
    let roles = std::iter::once(Role::System).chain(turns.iter().map(|(r, _)| *r));
    if let Some((position, from, to)) = first_invalid_transition(roles) {
        return Err(Rejection::InvalidRoleOrder { position, from, to });
    }

    let mut raw_schemas = Vec::new();
    if adapter.tools_from_system_tag {
        if let Some(first) = leading_system.first() {
            raw_schemas.extend(schemas_from_system_tag(first));
        }
    }
    if let Some(field) = &adapter.tools_field {
        match obj.get(field).map(decode_embedded) {
            None | Some(Value::Null) => {}
            Some(Value::Array(items)) => raw_schemas.extend(items),
            Some(_) => return Err(unmappable(format!("{field:?} is not a schema list"))),
        }
    }
    let validation = validate_schemas(&raw_schemas);
    if let Some(u) = validation.unrepairable.first() {
        return Err(Rejection::SchemaUnrepairable {
            name: u.name.clone(),
            reason: u.reason.clone(),
        });
    }

    let mut policy_parts: Vec<String> = Vec::new();
    if let Some(field) = &adapter.policy_field {
        if let Some(v) = obj.get(field) {
            policy_parts.push(value_text(v));
        }
    }
    if adapter.system_messages == SystemMessagePolicy::AsPolicy {
        policy_parts.extend(leading_system.iter().cloned());
    }
    let policy = policy_parts
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n");
    let agent_policy = (!policy.is_empty()).then_some(policy);

    let id = adapter
        .id_field
        .as_ref()
        .and_then(|f| obj.get(f))
        .and_then(|v| match v {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        })
        .unwrap_or_else(|| format!("{}-{index:06}", adapter.source));

    let mut messages = Vec::with_capacity(turns.len() + 1);
    messages.push(build_system_message(&validation.schemas, agent_policy.as_deref()));
    // tool responses are carried in user messages
    messages.extend(turns.into_iter().map(|(role, content)| match role {
        Role::Tool => Message::user(content),
        _ => Message::new(role, content),
    }));

    let trajectory = Trajectory {
        id,
        source: adapter.source.clone(),
        schemas: validation.schemas,
        agent_policy,
        messages,
    };
    debug_assert!(trajectory.validate().is_ok());
    Ok(Normalized {
        trajectory,
        schema_log: validation.log,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SourceCounts {
    pub raw: usize,
    pub kept: usize,
    pub dropped_role_order: usize,
    pub dropped_empty: usize,
    pub dropped_unmappable: usize,
    pub dropped_schema: usize,
    pub repaired_schema: usize,
    pub deduped_schema: usize,
}

impl SourceCounts {
    pub fn dropped(&self) -> usize {
        self.dropped_role_order + self.dropped_empty + self.dropped_unmappable + self.dropped_schema
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub counts: BTreeMap<SourceId, SourceCounts>,
}

impl IngestReport {
    pub fn record(&mut self, source: &SourceId, outcome: &Result<Normalized, Rejection>) {
        let c = self.counts.entry(source.clone()).or_default();
        c.raw += 1;
        match outcome {
            Ok(n) => {
                c.kept += 1;
                let validation = SchemaValidation {
                    schemas: Vec::new(),
                    log: n.schema_log.clone(),
                    unrepairable: Vec::new(),
                };
                c.repaired_schema += validation.repaired_count();
                c.deduped_schema += validation.deduped_count();
            }
            Err(Rejection::InvalidRoleOrder { .. }) => c.dropped_role_order += 1,
            Err(Rejection::EmptyConversation) => c.dropped_empty += 1,
            Err(Rejection::UnmappableRecord(_)) => c.dropped_unmappable += 1,
            Err(Rejection::SchemaUnrepairable { .. }) => c.dropped_schema += 1,
        }
    }

    pub fn merge(&mut self, other: IngestReport) {
        for (source, o) in other.counts {
            let c = self.counts.entry(source).or_default();
            c.raw += o.raw;
            c.kept += o.kept;
            c.dropped_role_order += o.dropped_role_order;
            c.dropped_empty += o.dropped_empty;
            c.dropped_unmappable += o.dropped_unmappable;
            c.dropped_schema += o.dropped_schema;
            c.repaired_schema += o.repaired_schema;
            c.deduped_schema += o.deduped_schema;
        }
    }
}

/// Normalizes a corpus of JSONL lines in parallel. Output order follows input order.
pub fn normalize_corpus(lines: &[String], adapter: &SourceAdapter) -> (Vec<Trajectory>, IngestReport) {
    let outcomes: Vec<Result<Normalized, Rejection>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let record: Value = serde_json::from_str(line).map_err(|e| unmappable(format!("invalid JSON: {e}")))?;
            normalize(&record, adapter, i)
        })
        .collect();
    let mut report = IngestReport::default();
    let mut kept = Vec::new();
    for outcome in outcomes {
        report.record(&adapter.source, &outcome);
        if let Ok(n) = outcome {
            kept.push(n.trajectory);
        }
    }
    report.counts.entry(adapter.source.clone()).or_default();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn openai() -> SourceAdapter {
        SourceAdapter::preset("openai").unwrap()
    }

    fn record(roles: &[&str]) -> Value {
        let messages: Vec<Value> = roles
            .iter()
            .map(|r| json!({"role": r, "content": format!("{r} says hi")}))
            .collect();
        json!({"id": "r1", "messages": messages, "tools": []})
    }

    #[test]
    fn system_tag_skips_empty_mentions() {
        let system = "Signatures are within <tools></tools> XML tags.\n<tools>\n{\"name\": \"a\"}\n{\"name\": \"b\"}\n</tools>";
        let names: Vec<_> = schemas_from_system_tag(system).iter().map(|v| v["name"].clone()).collect();
        assert_eq!(names, vec![json!("a"), json!("b")]);
        assert!(schemas_from_system_tag("no tags").is_empty());
        assert_eq!(schemas_from_system_tag("<tools>[{\"name\": \"c\"}]</tools>").len(), 1);
    }

    #[test]
    fn legal_chain_is_kept() {
        let n = normalize(&record(&["system", "user", "assistant", "user", "assistant"]), &openai(), 0).unwrap();
        let roles: Vec<Role> = n.trajectory.messages.iter().map(|m| m.role).collect();
        assert_eq!(
            roles,
            [Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant]
        );
        assert!(n.trajectory.validate().is_ok());
        assert_eq!(n.trajectory.id, "r1");
    }

    #[test]
    fn consecutive_users_rejected() {
        let err = normalize(&record(&["user", "user", "assistant"]), &openai(), 0).unwrap_err();
        assert_eq!(
            err,
            Rejection::InvalidRoleOrder {
                position: 2,
                from: Role::User,
                to: Role::User
            }
        );
    }

    #[test]
    fn rejection_matches_adjacency_oracle() {
        // oracle: the legal adjacency list, checked pair by pair
        let legal = [("system", "user"), ("user", "assistant"), ("assistant", "user"), ("assistant", "tool"), ("tool", "assistant")];
        let roles = ["user", "assistant", "tool"];
        for a in roles {
            for b in roles {
                for c in roles {
                    let seq = ["system", a, b, c];
                    let ok = seq.windows(2).all(|w| legal.contains(&(w[0], w[1])));
                    let got = normalize(&record(&seq), &openai(), 0);
                    assert_eq!(got.is_ok(), ok, "{seq:?}");
                }
            }
        }
    }

    #[test]
    fn empty_and_unmappable() {
        assert_eq!(
            normalize(&record(&["system"]), &openai(), 0).unwrap_err(),
            Rejection::EmptyConversation
        );
        assert!(matches!(
            normalize(&json!({"messages": [{"role": "narrator", "content": ""}]}), &openai(), 0),
            Err(Rejection::UnmappableRecord(_))
        ));
        assert!(matches!(
            normalize(&json!([1, 2]), &openai(), 0),
            Err(Rejection::UnmappableRecord(_))
        ));
    }

    #[test]
    fn tool_messages_become_wrapped_user_messages() {
        let rec = json!({
            "messages": [
                {"role": "user", "content": "q"},
                {"role": "assistant", "content": "", "tool_calls": [
                    {"type": "function", "function": {"name": "a", "arguments": "{\"x\": 1}"}},
                    {"type": "function", "function": {"name": "b", "arguments": "{}"}}
                ]},
                {"role": "tool", "content": "{\"ok\": true}"},
                {"role": "tool", "content": "{\"ok\": false}"},
                {"role": "assistant", "content": "done"}
            ],
            "tools": [{"name": "a", "parameters": {"type": "object", "properties": {"x": {"type": "integer"}}}},
                      {"name": "b", "parameters": {"type": "object", "properties": {}}}]
        });
        let t = normalize(&rec, &openai(), 3).unwrap().trajectory;
        assert_eq!(t.id, "openai-000003");
        assert_eq!(t.messages.len(), 5);
        assert_eq!(
            t.messages[2].content,
            "<tool_call>\n{\"name\": \"a\", \"arguments\": {\"x\": 1}}\n</tool_call>\n<tool_call>\n{\"name\": \"b\", \"arguments\": {}}\n</tool_call>"
        );
        assert_eq!(t.messages[3].role, Role::User);
        assert_eq!(
            t.messages[3].content,
            "<tool_response>\n{\"ok\": true}\n</tool_response>\n<tool_response>\n{\"ok\": false}\n</tool_response>"
        );
    }

    #[test]
    fn field_mapped_records() {
        let rec = json!({
            "id": 17,
            "query": "weather in Paris?",
            "answers": "[{\"name\": \"weather\", \"arguments\": {\"city\": \"Paris\"}}]",
            "tools": "[{\"name\": \"weather\", \"description\": \"w\", \"parameters\": {\"city\": {\"type\": \"string\"}}}]"
        });
        // apigen stores parameters as a bare property map, which is outside the repair set
        assert!(matches!(
            normalize(&rec, &SourceAdapter::preset("apigen").unwrap(), 0),
            Err(Rejection::SchemaUnrepairable { .. })
        ));
        let mut ok = rec.clone();
        ok["tools"] = json!([{"name": "weather", "parameters": {"properties": {"city": {"type": "string"}}, "required": ["city"]}}]);
        let n = normalize(&ok, &SourceAdapter::preset("apigen").unwrap(), 0).unwrap();
        assert_eq!(n.trajectory.id, "17");
        assert_eq!(n.schema_log.len(), 1);
        assert_eq!(
            n.trajectory.messages[2].content,
            "<tool_call>\n{\"name\": \"weather\", \"arguments\": {\"city\": \"Paris\"}}\n</tool_call>"
        );
    }

    #[test]
    fn sharegpt_shape_with_policy() {
        let rec = json!({
            "system": "Only book refundable fares.",
            "tools": "[]",
            "conversations": [
                {"from": "human", "value": "cancel my trip"},
                {"from": "function_call", "value": "{\"name\": \"cancel\", \"arguments\": {\"id\": \"A1\"}}"},
                {"from": "observation", "value": "{\"status\": \"ok\"}"},
                {"from": "gpt", "value": "Cancelled."}
            ]
        });
        let t = normalize(&rec, &SourceAdapter::preset("apigen-mt").unwrap(), 0).unwrap().trajectory;
        assert_eq!(t.agent_policy.as_deref(), Some("Only book refundable fares."));
        assert!(t.messages[0].content.ends_with("# Agent Policy\nOnly book refundable fares."));
        assert_eq!(t.messages.len(), 5);
    }

    #[test]
    fn hermes_tools_in_system_tag() {
        let rec = json!({
            "id": "h1",
            "conversations": [
                {"from": "system", "value": "You are a function calling AI model. <tools> [{\"type\": \"function\", \"function\": {\"name\": \"f\", \"description\": \"\", \"parameters\": {\"type\": \"object\", \"properties\": {}}}}] </tools>"},
                {"from": "human", "value": "hi"},
                {"from": "gpt", "value": "<tool_call>\n{\"name\": \"f\", \"arguments\": {}}\n</tool_call>"},
                {"from": "tool", "value": "<tool_response>\n{}\n</tool_response>"}
            ]
        });
        let t = normalize(&rec, &SourceAdapter::preset("hermes").unwrap(), 0).unwrap().trajectory;
        assert_eq!(t.schemas.len(), 1);
        assert!(!t.messages[0].content.contains("function calling AI model"));
        assert_eq!(t.messages[3].content, "<tool_response>\n{}\n</tool_response>");
    }

    #[test]
    fn system_message_layout() {
        let s = ToolSchema {
            name: "f".into(),
            description: "d".into(),
            parameters: json!({"type": "object", "properties": {}}).as_object().unwrap().clone(),
        };
        let m = build_system_message(std::slice::from_ref(&s), None);
        assert!(m.content.contains(
            "<tools>\n{\"type\": \"function\", \"function\": {\"name\": \"f\", \"description\": \"d\", \"parameters\": {\"type\": \"object\", \"properties\": {}}}}\n</tools>"
        ));
        assert!(!m.content.contains("# Agent Policy"));
        let m2 = build_system_message(&[s.clone(), ToolSchema { name: "g".into(), ..s }], Some("be nice"));
        assert_eq!(m2.content.matches("{\"type\": \"function\"").count(), 2);
        assert!(m2.content.ends_with("\n\n# Agent Policy\nbe nice"));
        let empty = build_system_message(&[], None);
        assert!(empty.content.contains("XML tags:\n<tools></tools>\n\nFor each"));
        assert_eq!(empty.role, Role::System);
    }

    #[test]
    fn corpus_report_partitions_raw() {
        let lines = vec![
            record(&["user", "assistant"]).to_string(),
            record(&["user", "user"]).to_string(),
            record(&[]).to_string(),
            "not json".to_string(),
            json!({"messages": [{"role": "user", "content": "x"}], "tools": [{"name": "f", "parameters": {"type": "array"}}]}).to_string(),
        ];
        let (kept, report) = normalize_corpus(&lines, &openai());
        assert_eq!(kept.len(), 1);
        let c = report.counts[&SourceId::new("openai")];
        assert_eq!(c.raw, 5);
        assert_eq!(c.kept + c.dropped(), c.raw);
        assert_eq!(
            (c.dropped_role_order, c.dropped_empty, c.dropped_unmappable, c.dropped_schema),
            (1, 1, 1, 1)
        );
    }

    #[test]
    fn deterministic_output() {
        let lines: Vec<String> = (0..50)
            .map(|i| record(if i % 3 == 0 { &["user", "assistant"] } else { &["user", "assistant", "user", "assistant"] }).to_string())
            .collect();
        let (a, _) = normalize_corpus(&lines, &openai());
        let (b, _) = normalize_corpus(&lines, &openai());
        let dump = |ts: &[Trajectory]| ts.iter().map(Trajectory::to_jsonl_line).collect::<Vec<_>>().join("\n");
        assert_eq!(dump(&a), dump(&b));
    }
}
