//! The minimal chat interface the judge loops need. HTTP endpoints, stubs and
//! replay caches all implement it.

use crate::model::Message;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    pub output_tokens: Option<u64>,
}

impl Completion {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{model_id}: {message}")]
pub struct ChatError {
    pub model_id: String,
    pub message: String,
}

pub trait ChatModel: Send + Sync {
    fn model_id(&self) -> &str;

    /// `sample_index` separates repeated draws for the same messages.
    fn complete(&self, messages: &[Message], sample_index: u32) -> Result<Completion, ChatError>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn complete(&self, messages: &[Message], sample_index: u32) -> Result<Completion, ChatError> {
        (**self).complete(messages, sample_index)
    }
}

/// Wraps a closure as a model; used for stub judges.
pub struct FnModel<F> {
    id: String,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[Message]) -> Result<String, String> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> ChatModel for FnModel<F>
where
    F: Fn(&[Message]) -> Result<String, String> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, messages: &[Message], _sample_index: u32) -> Result<Completion, ChatError> {
        (self.f)(messages).map(Completion::text).map_err(|message| ChatError {
            model_id: self.id.clone(),
            message,
        })
    }
}
