//! File formats, endpoint clients and pipeline orchestration around
//! [`trajprompt_core`].

pub mod config;
pub mod corpus;
pub mod csv_source;
pub mod endpoint;
pub mod error;
pub mod fingerprint;
pub mod pipeline;
pub mod predict;
pub mod report;
pub mod retrieve;
pub mod split_io;
pub mod store;
pub mod template_io;

pub use error::{Error, Result};
