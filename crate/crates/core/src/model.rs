//! Conversation, schema and tool-call types.

use crate::jsonfmt::to_spaced_string;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::HashSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }

    /// Whether a message with role `next` may directly follow one with role `self`.
    pub fn may_precede(self, next: Role) -> bool {
        use Role::*;
        matches!(
            (self, next),
            (System, User) | (User, Assistant) | (Assistant, User) | (Assistant, Tool) | (Tool, Assistant)
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// Identifier of the corpus a record came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(String);

impl SourceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SourceId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// A function signature available to the assistant.
///
/// `parameters` is a JSON-schema object: `{"type": "object", "properties":
/// {...}, "required": [...]}`. Use [`crate::ingest::validate_schemas`] to
/// build schemas from untrusted input; [`ToolSchema::check`] re-verifies the
/// invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub parameters: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaDefect {
    #[error("empty tool name")]
    EmptyName,
    #[error("parameters root type is not \"object\"")]
    RootType,
    #[error("parameters has no property map")]
    MissingProperties,
    #[error("required list is not an array of strings")]
    RequiredShape,
    #[error("required property {0:?} is not declared")]
    UndeclaredRequired(String),
    #[error("property {0:?} is not a schema object")]
    PropertyShape(String),
    #[error("property {name:?} has unknown type {ty}")]
    UnknownType { name: String, ty: String },
}

pub(crate) const JSON_TYPES: [&str; 7] = ["string", "number", "integer", "boolean", "array", "object", "null"];

impl ToolSchema {
    pub fn properties(&self) -> Option<&Map<String, Value>> {
        self.parameters.get("properties").and_then(Value::as_object)
    }

    /// Names in the `required` list, in declaration order.
    pub fn required(&self) -> Vec<&str> {
        self.parameters
            .get("required")
            .and_then(Value::as_array)
            .map(|r| r.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default()
    }

    /// Declared JSON types of a property; empty when unconstrained.
    pub fn property_types(&self, name: &str) -> Vec<&str> {
        match self.properties().and_then(|p| p.get(name)).and_then(|p| p.get("type")) {
            Some(Value::String(t)) => vec![t.as_str()],
            Some(Value::Array(ts)) => ts.iter().filter_map(Value::as_str).collect(),
            _ => Vec::new(),
        }
    }

    pub fn check(&self) -> Result<(), SchemaDefect> {
        if self.name.trim().is_empty() {
            return Err(SchemaDefect::EmptyName);
        }
        if self.parameters.get("type").and_then(Value::as_str) != Some("object") {
            return Err(SchemaDefect::RootType);
        }
        let props = self.properties().ok_or(SchemaDefect::MissingProperties)?;
        for (name, prop) in props {
            let prop = prop
                .as_object()
                .ok_or_else(|| SchemaDefect::PropertyShape(name.clone()))?;
            let ok = match prop.get("type") {
                None => true,
                Some(Value::String(t)) => JSON_TYPES.contains(&t.as_str()),
                Some(Value::Array(ts)) => ts
                    .iter()
                    .all(|t| t.as_str().is_some_and(|t| JSON_TYPES.contains(&t))),
                Some(_) => false,
            };
            if !ok {
                return Err(SchemaDefect::UnknownType {
                    name: name.clone(),
                    ty: prop.get("type").map(Value::to_string).unwrap_or_default(),
                });
            }
        }
        match self.parameters.get("required") {
            None => {}
            Some(Value::Array(items)) => {
                for item in items {
                    let key = item.as_str().ok_or(SchemaDefect::RequiredShape)?;
                    if !props.contains_key(key) {
                        return Err(SchemaDefect::UndeclaredRequired(key.to_string()));
                    }
                }
            }
            Some(_) => return Err(SchemaDefect::RequiredShape),
        }
        Ok(())
    }

    /// The `{"type": "function", "function": {...}}` wrapper used in system prompts.
    pub fn to_function_json(&self) -> Value {
        let mut function = Map::new();
        function.insert("name".into(), Value::String(self.name.clone()));
        function.insert("description".into(), Value::String(self.description.clone()));
        function.insert("parameters".into(), Value::Object(self.parameters.clone()));
        let mut wrapper = Map::new();
        wrapper.insert("type".into(), Value::String("function".into()));
        wrapper.insert("function".into(), Value::Object(function));
        Value::Object(wrapper)
    }
}

/// A parsed `{"name": ..., "arguments": {...}}` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        Self {
            name: name.into(),
            arguments,
        }
    }

    /// Canonical single-line form, e.g. `{"name": "f", "arguments": {"a": 1}}`.
    pub fn to_canonical(&self) -> String {
        to_spaced_string(self)
    }

    /// The call wrapped in its own `<tool_call>` block.
    pub fn to_block(&self) -> String {
        format!("<tool_call>\n{}\n</tool_call>", self.to_canonical())
    }

    /// Same name and structurally equal arguments. Object key order is ignored;
    /// values are compared literally (no case folding, `1` ≠ `1.0`).
    pub fn is_identical(&self, other: &ToolCall) -> bool {
        self.name == other.name && self.arguments == other.arguments
    }
}

/// Joins calls as consecutive `<tool_call>` blocks separated by newlines.
pub fn render_calls(calls: &[ToolCall]) -> String {
    calls.iter().map(ToolCall::to_block).collect::<Vec<_>>().join("\n")
}

/// A format-aligned conversation with its available tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub source: SourceId,
    pub schemas: Vec<ToolSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_policy: Option<String>,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("trajectory has no messages")]
    Empty,
    #[error("first message has role {0}, expected system")]
    FirstNotSystem(Role),
    #[error("message {position}: {from} may not be followed by {to}")]
    InvalidTransition { position: usize, from: Role, to: Role },
    #[error("tool name {0:?} declared more than once")]
    DuplicateSchemaName(String),
    #[error("schema {name:?}: {defect}")]
    Schema { name: String, defect: SchemaDefect },
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let first = self.messages.first().ok_or(TrajectoryError::Empty)?;
        if first.role != Role::System {
            return Err(TrajectoryError::FirstNotSystem(first.role));
        }
        if let Some((position, from, to)) = first_invalid_transition(self.messages.iter().map(|m| m.role)) {
            return Err(TrajectoryError::InvalidTransition { position, from, to });
        }
        let mut seen = HashSet::new();
        for schema in &self.schemas {
            if !seen.insert(schema.name.as_str()) {
                return Err(TrajectoryError::DuplicateSchemaName(schema.name.clone()));
            }
            schema.check().map_err(|defect| TrajectoryError::Schema {
                name: schema.name.clone(),
                defect,
            })?;
        }
        Ok(())
    }

    pub fn to_jsonl_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn from_jsonl_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }
}

/// Position (index of the later message) and roles of the first illegal transition.
pub fn first_invalid_transition(roles: impl IntoIterator<Item = Role>) -> Option<(usize, Role, Role)> {
    let roles: Vec<Role> = roles.into_iter().collect();
    roles
        .windows(2)
        .enumerate()
        .find(|(_, w)| !w[0].may_precede(w[1]))
        .map(|(i, w)| (i + 1, w[0], w[1]))
}
