//! Tagged message content.
//!
//! Message text may embed `<think>`, `<tool_call>` and `<tool_response>`
//! regions. Tags are matched as literal delimiters; payloads are kept
//! byte-for-byte so [`ContentBlocks::to_content`] reproduces the input.

use crate::model::ToolCall;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Think,
    ToolCall,
    ToolResponse,
    Text,
}

impl BlockKind {
    const TAGGED: [BlockKind; 3] = [BlockKind::Think, BlockKind::ToolCall, BlockKind::ToolResponse];

    pub fn tag(self) -> Option<&'static str> {
        match self {
            BlockKind::Think => Some("think"),
            BlockKind::ToolCall => Some("tool_call"),
            BlockKind::ToolResponse => Some("tool_response"),
            BlockKind::Text => None,
        }
    }

    fn open(self) -> &'static str {
        match self {
            BlockKind::Think => "<think>",
            BlockKind::ToolCall => "<tool_call>",
            BlockKind::ToolResponse => "<tool_response>",
            BlockKind::Text => "",
        }
    }

    fn close(self) -> &'static str {
        match self {
            BlockKind::Think => "</think>",
            BlockKind::ToolCall => "</tool_call>",
            BlockKind::ToolResponse => "</tool_response>",
            BlockKind::Text => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    /// Text between the tags (or the whole run for text blocks), untrimmed.
    pub payload: String,
}

impl Block {
    fn write_to(&self, out: &mut String) {
        out.push_str(self.kind.open());
        out.push_str(&self.payload);
        out.push_str(self.kind.close());
    }

    /// Byte length of the block including its tags.
    pub fn encoded_len(&self) -> usize {
        self.kind.open().len() + self.payload.len() + self.kind.close().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContentBlocks(pub Vec<Block>);

impl ContentBlocks {
    pub fn iter(&self) -> impl Iterator<Item = &Block> {
        self.0.iter()
    }

    pub fn of_kind(&self, kind: BlockKind) -> impl Iterator<Item = &Block> {
        self.0.iter().filter(move |b| b.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_content(&self) -> String {
        let mut out = String::with_capacity(self.0.iter().map(Block::encoded_len).sum());
        for block in &self.0 {
            block.write_to(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContentError {
    #[error("<{tag}> opened at byte {offset} is never closed")]
    UnclosedTag { tag: &'static str, offset: usize },
    #[error("<{tag}> opened again at byte {offset} inside an open <{tag}>")]
    NestedTag { tag: &'static str, offset: usize },
    #[error("</{tag}> at byte {offset} has no matching open tag")]
    UnexpectedClose { tag: &'static str, offset: usize },
}

/// Earliest occurrence at or after `from` of any open or close tag.
fn next_tag(content: &str, from: usize) -> Option<(usize, BlockKind, bool)> {
    let rest = &content[from..];
    BlockKind::TAGGED
        .iter()
        .flat_map(|&kind| {
            let open = rest.find(kind.open()).map(|i| (from + i, kind, true));
            let close = rest.find(kind.close()).map(|i| (from + i, kind, false));
            [open, close]
        })
        .flatten()
        .min_by_key(|&(pos, _, _)| pos)
}

pub fn parse_content(content: &str) -> Result<ContentBlocks, ContentError> {
    let mut blocks = Vec::new();
    let mut text_start = 0;
    let mut cursor = 0;
    while let Some((pos, kind, is_open)) = next_tag(content, cursor) {
        let tag = kind.tag().expect("tagged kind");
        if !is_open {
            return Err(ContentError::UnexpectedClose { tag, offset: pos });
        }
        if pos > text_start {
            blocks.push(Block {
                kind: BlockKind::Text,
                payload: content[text_start..pos].to_string(),
            });
        }
        let body_start = pos + kind.open().len();
        let close = content[body_start..]
            .find(kind.close())
            .map(|i| body_start + i)
            .ok_or(ContentError::UnclosedTag { tag, offset: pos })?;
        if let Some(i) = content[body_start..close].find(kind.open()) {
            return Err(ContentError::NestedTag {
                tag,
                offset: body_start + i,
            });
        }
        blocks.push(Block {
            kind,
            payload: content[body_start..close].to_string(),
        });
        cursor = close + kind.close().len();
        text_start = cursor;
    }
    if text_start < content.len() {
        blocks.push(Block {
            kind: BlockKind::Text,
            payload: content[text_start..].to_string(),
        });
    }
    Ok(ContentBlocks(blocks))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error(transparent)]
    Content(#[from] ContentError),
    #[error("tool call {index}: invalid JSON: {message}")]
    InvalidJson { index: usize, message: String },
    #[error("tool call {index}: payload is not a JSON object")]
    NotAnObject { index: usize },
    #[error("tool call {index}: missing string \"name\"")]
    MissingName { index: usize },
    #[error("tool call {index}: missing object \"arguments\"")]
    MissingArguments { index: usize },
}

/// Parses one `<tool_call>` payload into a call.
pub fn parse_call_payload(payload: &str, index: usize) -> Result<ToolCall, ParseFailure> {
    let value: Value = serde_json::from_str(payload.trim()).map_err(|e| ParseFailure::InvalidJson {
        index,
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(ParseFailure::NotAnObject { index });
    };
    let name = match obj.remove("name") {
        Some(Value::String(name)) => name,
        _ => return Err(ParseFailure::MissingName { index }),
    };
    let arguments = match obj.remove("arguments") {
        Some(Value::Object(args)) => args,
        _ => return Err(ParseFailure::MissingArguments { index }),
    };
    Ok(ToolCall { name, arguments })
}

/// All tool calls in `content`, in document order.
pub fn extract_tool_calls(content: &str) -> Result<Vec<ToolCall>, ParseFailure> {
    let blocks = parse_content(content)?;
    blocks
        .of_kind(BlockKind::ToolCall)
        .enumerate()
        .map(|(i, b)| parse_call_payload(&b.payload, i))
        .collect()
}
