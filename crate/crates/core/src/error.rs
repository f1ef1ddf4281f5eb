use std::io;
use std::path::PathBuf;

use crate::dtype::DType;
use crate::Token;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad magic at byte offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported index version {version} at byte offset {offset}")]
    UnsupportedVersion { version: u64, offset: usize },
    #[error("unknown dtype code {code} at byte offset {offset}")]
    UnknownDType { code: u8, offset: usize },
    #[error("dtype {0} cannot hold token ids")]
    NonIntegerDType(DType),
    #[error("index truncated: needed {needed} bytes at offset {offset}, file has {available}")]
    TruncatedIndex {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("inconsistent pointers at i={index} (byte offset {offset}): {detail}")]
    InconsistentPointers {
        index: usize,
        offset: usize,
        detail: String,
    },
    #[error("invalid sequence length at i={index} (byte offset {offset}): {detail}")]
    InvalidLength {
        index: usize,
        offset: usize,
        detail: String,
    },
    #[error("invalid document boundaries at i={index} (byte offset {offset}): {detail}")]
    InvalidBoundaries {
        index: usize,
        offset: usize,
        detail: String,
    },
    #[error(".bin holds {actual} bytes but the index describes {expected}")]
    BinSizeMismatch { expected: u64, actual: u64 },
    #[error("trailing bytes after index payload at offset {offset}")]
    TrailingIndexBytes { offset: usize },

    #[error("sequence {seq_id} out of range (sequence count {count})")]
    SeqOutOfRange { seq_id: u64, count: u64 },
    #[error("slice [{offset}, {offset}+{count}) exceeds sequence {seq_id} of length {length}")]
    SliceOutOfRange {
        seq_id: u64,
        offset: u64,
        count: u64,
        length: u64,
    },
    #[error("document {doc_id} out of range (document count {count})")]
    DocOutOfRange { doc_id: u64, count: u64 },
    #[error("token range [{start}, {end}) out of range (total tokens {total})")]
    TokenRangeOutOfRange { start: u64, end: u64, total: u64 },

    #[error("token {token} does not fit dtype {dtype}")]
    TokenOverflowsDType { token: Token, dtype: DType },
    #[error("document {position} is empty")]
    EmptyDocument { position: u64 },
    #[error("sequence of {0} tokens exceeds the 32-bit length field")]
    SequenceTooLong(usize),

    #[error("record carries text but no tokenizer was configured")]
    MissingTokenizer,
    #[error("text output requested but no detokenizer was configured")]
    MissingDetokenizer,
    #[error("malformed record at line {line}: {detail}")]
    MalformedRecord { line: u64, detail: String },
    #[error("selection out of range: {0}")]
    SelectionOutOfRange(String),
    #[error("invalid selection: {0}")]
    SelectionInvalid(String),

    #[error("invalid order config: {0}")]
    InvalidOrderConfig(String),
    #[error("dataset too small: {tokens} stream tokens, need at least {needed}")]
    DatasetTooSmall { tokens: u64, needed: u64 },
    #[error("step {step} out of range ({steps} full steps)")]
    StepOutOfRange { step: u64, steps: u64 },
    #[error("sample {sample_id} out of range ({count} samples)")]
    SampleOutOfRange { sample_id: u64, count: u64 },
    #[error("order cache {path} is corrupt: {detail}")]
    CorruptOrderCache { path: PathBuf, detail: String },

    #[error("invalid sampling policy: {0}")]
    PolicyInvalid(String),

    #[error("writer lock {0} is not held")]
    LockNotHeld(PathBuf),
    #[error("writer lock {0} is held by another writer")]
    LockBusy(PathBuf),
    #[error("splice would leave sequence {seq_id} empty")]
    ResultEmptySequence { seq_id: u64 },
    #[error("injection [{offset}, {offset}+{count}) exceeds sample length {sample_len}")]
    InjectionOutOfRange {
        offset: u64,
        count: u64,
        sample_len: u64,
    },

    #[error("query is empty")]
    EmptyQuery,
    #[error("search index built at dataset version {index_version}, dataset is at {dataset_version}")]
    StaleIndex {
        index_version: u64,
        dataset_version: u64,
    },
    #[error("suffix array file {path} is corrupt: {detail}")]
    CorruptIndex { path: PathBuf, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no continuation exists for any context")]
    NoContinuationAnywhere,

    #[error("dataset failed validation with {} violation(s)", .0.len())]
    DatasetInvalid(Vec<crate::format::Violation>),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoFailure { path, source }
    }

    /// Stable machine-readable name, used as the `error` field of JSON error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion { .. } => "UnsupportedVersion",
            Error::UnknownDType { .. } => "UnknownDType",
            Error::NonIntegerDType(_) => "NonIntegerDType",
            Error::TruncatedIndex { .. } => "TruncatedIndex",
            Error::InconsistentPointers { .. } => "InconsistentPointers",
            Error::InvalidLength { .. } => "InvalidLength",
            Error::InvalidBoundaries { .. } => "InvalidBoundaries",
            Error::BinSizeMismatch { .. } => "BinSizeMismatch",
            Error::TrailingIndexBytes { .. } => "TrailingIndexBytes",
            Error::SeqOutOfRange { .. } => "SeqOutOfRange",
            Error::SliceOutOfRange { .. } => "SliceOutOfRange",
            Error::DocOutOfRange { .. } => "DocOutOfRange",
            Error::TokenRangeOutOfRange { .. } => "TokenRangeOutOfRange",
            Error::TokenOverflowsDType { .. } => "TokenOverflowsDType",
            Error::EmptyDocument { .. } => "EmptyDocument",
            Error::SequenceTooLong(_) => "SequenceTooLong",
            Error::MissingTokenizer => "MissingTokenizer",
            Error::MissingDetokenizer => "MissingDetokenizer",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::SelectionOutOfRange(_) => "SelectionOutOfRange",
            Error::SelectionInvalid(_) => "SelectionInvalid",
            Error::InvalidOrderConfig(_) => "InvalidOrderConfig",
            Error::DatasetTooSmall { .. } => "DatasetTooSmall",
            Error::StepOutOfRange { .. } => "StepOutOfRange",
            Error::SampleOutOfRange { .. } => "SampleOutOfRange",
            Error::CorruptOrderCache { .. } => "CorruptOrderCache",
            Error::PolicyInvalid(_) => "PolicyInvalid",
            Error::LockNotHeld(_) => "LockNotHeld",
            Error::LockBusy(_) => "LockBusy",
            Error::ResultEmptySequence { .. } => "ResultEmptySequence",
            Error::InjectionOutOfRange { .. } => "InjectionOutOfRange",
            Error::EmptyQuery => "EmptyQuery",
            Error::StaleIndex { .. } => "StaleIndex",
            Error::CorruptIndex { .. } => "CorruptIndex",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::NoContinuationAnywhere => "NoContinuationAnywhere",
            Error::DatasetInvalid(_) => "DatasetInvalid",
            Error::IoFailure { .. } => "IoFailure",
        }
    }

    /// Rough classification used by the HTTP layer.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SeqOutOfRange { .. }
            | Error::DocOutOfRange { .. }
            | Error::StepOutOfRange { .. }
            | Error::SampleOutOfRange { .. } => ErrorKind::NotFound,
            Error::LockBusy(_) | Error::LockNotHeld(_) | Error::StaleIndex { .. } => {
                ErrorKind::Conflict
            }
            Error::IoFailure { .. } | Error::CorruptOrderCache { .. } | Error::CorruptIndex { .. } => {
                ErrorKind::Internal
            }
            _ => ErrorKind::BadRequest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BadRequest,
    NotFound,
    Conflict,
    Internal,
}
