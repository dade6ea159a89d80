//! Core of the check-in → next-POI prompt pipeline.
//!
//! Everything in here is pure computation over in-memory values: filtering and
//! segmenting check-in logs, rendering question/answer prompts, cosine
//! similarity retrieval of historical trajectories, token budgeting, answer
//! parsing and Acc@1 evaluation. File formats, HTTP transports and the CLI live
//! in the companion `trajprompt` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod hash;
pub mod inference;
pub mod ingest;
pub mod prompt;
pub mod retrieval;
pub mod time;

pub use corpus::{assemble_record, estimate_tokens, AssembleError, CharRatio, TokenBudget, TokenCounter};
pub use embedding::{EmbeddingBackend, EmbeddingError, EmbeddingVector, HashingEmbedder, Role};
pub use eval::{acc_at_1, answer_in_question_rate, EvalReport, Partition, PartitionKind};
pub use inference::{parse_poi_id, ParseStatus, PredictionRecord};
pub use ingest::{
    CheckIn, DatasetSplit, IdMaps, IdTable, IngestError, RawCheckIn, SegmentationConfig, Trajectory,
};
pub use prompt::{PromptError, PromptRecord, PromptTemplate, Variant};
pub use retrieval::{RetrievalConfig, RetrievalError, RetrievalIndex, RetrievalResult, Selected};
pub use time::Timestamp;
