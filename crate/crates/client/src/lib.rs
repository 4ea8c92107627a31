//! Chat-completions client with a content-addressed response cache, bounded
//! per-endpoint concurrency and retry with exponential backoff.

mod cache;
mod config;
mod endpoint;
pub mod mock;
mod sampler;

pub use cache::{CacheKey, CachedResponse, ResponseCache};
pub use config::{ConfigError, EndpointConfig, SamplingParams};
pub use endpoint::{ClientError, Endpoint};
pub use sampler::{sample, sample_many, SampleRecord};
