//! Toolkit for Megatron-style indexed token datasets (`.bin` / `.idx`).
//!
//! [`DatasetManager`] is the entry point the HTTP service and the CLI share.
//! It owns the open dataset plus lazily built training orders and the
//! suffix array used for n-gram search.

pub mod api;
pub mod dataset;
pub mod dtype;
pub mod edit;
pub mod error;
pub mod export;
pub mod format;
pub mod ingest;
pub mod inspect;
pub mod manager;
pub mod order;
pub mod sample;
pub mod search;
pub mod tokenizer;

/// Token ids are carried as `i64`, which holds every integer dtype the format allows.
pub type Token = i64;

pub use dataset::Dataset;
pub use dtype::DType;
pub use error::{Error, ErrorKind, Result};
pub use format::{DatasetIndex, DatasetPaths, TokenStore};
pub use manager::DatasetManager;
pub use order::{OrderConfig, SampleSpan, TrainingOrder};
pub use tokenizer::{ByteTokenizer, Tokenizer};
