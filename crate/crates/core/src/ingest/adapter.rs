//! Declarative field mappings from raw corpus records to messages.
//!
//! Adapters are plain JSON documents, so a new corpus needs a config file
//! rather than code. Built-in presets cover the common record shapes.

use crate::model::SourceId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Role a raw message maps to. `AssistantCall` marks assistant messages whose
/// content is a JSON call (or list of calls) rather than text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappedRole {
    System,
    User,
    Assistant,
    AssistantCall,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMessage {
    pub role: MappedRole,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageMapping {
    /// Messages stored as a list of objects.
    List {
        list_field: String,
        #[serde(default = "default_role_field")]
        role_field: String,
        #[serde(default = "default_content_field")]
        content_field: String,
        /// Structured calls attached to assistant messages (OpenAI style).
        #[serde(default)]
        tool_calls_field: Option<String>,
    },
    /// A fixed conversation assembled from top-level fields.
    Fields { fields: Vec<FieldMessage> },
}

fn default_role_field() -> String {
    "role".into()
}

fn default_content_field() -> String {
    "content".into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemMessagePolicy {
    /// Leading system messages are discarded and replaced by the assembled one.
    #[default]
    Drop,
    /// Leading system messages become the agent policy section.
    AsPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceAdapter {
    pub source: SourceId,
    #[serde(default)]
    pub id_field: Option<String>,
    pub messages: MessageMapping,
    /// Raw role string → mapped role. Empty means the identity mapping over
    /// `system`, `user`, `assistant` and `tool`.
    #[serde(default)]
    pub role_map: BTreeMap<String, MappedRole>,
    /// Field holding the schema list, either as an array or a JSON string.
    #[serde(default)]
    pub tools_field: Option<String>,
    /// Also read schemas from a `<tools>...</tools>` region of the first system message.
    #[serde(default)]
    pub tools_from_system_tag: bool,
    #[serde(default)]
    pub policy_field: Option<String>,
    #[serde(default)]
    pub system_messages: SystemMessagePolicy,
}

const PRESETS: [(&str, &str); 8] = [
    ("apigen", include_str!("../../adapters/apigen.json")),
    ("apigen-mt", include_str!("../../adapters/apigen-mt.json")),
    ("button", include_str!("../../adapters/button.json")),
    ("complexfuncbench", include_str!("../../adapters/complexfuncbench.json")),
    ("glaive", include_str!("../../adapters/glaive.json")),
    ("hermes", include_str!("../../adapters/hermes.json")),
    ("toolalpaca", include_str!("../../adapters/toolalpaca.json")),
    ("openai", include_str!("../../adapters/openai.json")),
];

impl SourceAdapter {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset(name: &str) -> Option<SourceAdapter> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, json)| serde_json::from_str(json).expect("bundled adapter presets are valid"))
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Same mapping under a different source label.
    pub fn with_source(mut self, source: SourceId) -> Self {
        self.source = source;
        self
    }

    pub fn map_role(&self, raw: &str) -> Option<MappedRole> {
        if self.role_map.is_empty() {
            return match raw {
                "system" => Some(MappedRole::System),
                "user" => Some(MappedRole::User),
                "assistant" => Some(MappedRole::Assistant),
                "tool" => Some(MappedRole::Tool),
                _ => None,
            };
        }
        self.role_map.get(raw).copied()
    }
}
