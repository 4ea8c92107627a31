use crate::endpoint::Endpoint;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use toolpref_core::Message;

/// One draw for one context. Exactly one of `content` and `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub context_id: String,
    pub model_id: String,
    pub sample_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn sample(context_id: &str, context: &[Message], endpoints: &[Endpoint], n_per_endpoint: u32) -> Vec<SampleRecord> {
    sample_many(&[(context_id.to_string(), context.to_vec())], endpoints, n_per_endpoint)
}

/// Samples every `(context, endpoint, index)` combination. Output order is
/// context, then endpoint, then sample index, regardless of completion order.
pub fn sample_many(contexts: &[(String, Vec<Message>)], endpoints: &[Endpoint], n_per_endpoint: u32) -> Vec<SampleRecord> {
    let jobs: Vec<(usize, usize, u32)> = (0..contexts.len())
        .flat_map(|c| (0..endpoints.len()).flat_map(move |e| (0..n_per_endpoint).map(move |i| (c, e, i))))
        .collect();
    let slots: Vec<Mutex<Option<SampleRecord>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = endpoints.iter().map(|e| e.config().max_in_flight).sum::<usize>().clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(c, e, i)) = jobs.get(j) else {
                    break;
                };
                let (context_id, messages) = &contexts[c];
                let endpoint = &endpoints[e];
                let (content, error) = match endpoint.complete_cached(messages, i) {
                    Ok(r) => (Some(r.content), None),
                    Err(err) => {
                        tracing::warn!(context = %context_id, model = %endpoint.config().model_id, error = %err, "no response");
                        (None, Some(err.to_string()))
                    }
                };
                *slots[j].lock().unwrap_or_else(|p| p.into_inner()) = Some(SampleRecord {
                    context_id: context_id.clone(),
                    model_id: endpoint.config().model_id.clone(),
                    sample_index: i,
                    content,
                    error,
                });
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap_or_else(|p| p.into_inner()).expect("every job ran"))
        .collect()
}
