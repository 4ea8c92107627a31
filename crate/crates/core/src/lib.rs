//! Building blocks for tool-use reward modeling.
//!
//! The crate turns raw function-calling corpora into pairwise preference data
//! and evaluates generative judges on pairwise, Best-of-N and self-correction
//! protocols. Data flows through the modules in this order:
//!
//! [`ingest`] → [`segment`] → [`scorer`] → [`pref`] → [`critique`] / [`bench`]
//!
//! Scoring and advantage arithmetic are generic over the scalar type; the
//! aliases below fix the defaults used by the pipeline.

pub mod bench;
pub mod chat;
pub mod content;
pub mod critique;
pub mod ingest;
pub mod jsonfmt;
pub mod jsonl;
pub mod model;
pub mod pref;
pub mod scalar;
pub mod scorer;
pub mod seed;
pub mod segment;

use num_rational::Ratio;

pub use chat::{ChatError, ChatModel, Completion};
pub use content::{extract_tool_calls, parse_content, Block, BlockKind, ContentBlocks, ContentError, ParseFailure};
pub use model::{Message, Role, SourceId, ToolCall, ToolSchema, Trajectory};
pub use scalar::Scalar;

/// Library version, exposed to foreign bindings for parity checks.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Floating-point score used throughout the data pipeline.
pub type Real = f64;

/// Exact rational score, used to check scoring arithmetic without rounding.
pub type Exact = Ratio<i64>;

/// Rule-based score computed in [`Real`].
pub type ScoreResult = scorer::ScoreResult<Real>;

/// Rule-based score computed in [`Exact`].
pub type ExactScoreResult = scorer::ScoreResult<Exact>;

/// Judge accuracy report in [`Real`].
pub type ScoreReport = bench::ScoreReport<Real>;
