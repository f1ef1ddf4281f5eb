use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::order::OrderConfig;

/// The family of files that make up one dataset, all derived from a shared prefix.
///
/// `corpus` names `corpus.bin` and `corpus.idx`; every sidecar hangs off one of those two.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DatasetPaths {
    prefix: PathBuf,
}

impl DatasetPaths {
    /// Accepts either the bare prefix or a path ending in `.bin` / `.idx`.
    pub fn new(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref();
        let prefix = match p.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("idx") => p.with_extension(""),
            _ => p.to_path_buf(),
        };
        DatasetPaths { prefix }
    }

    pub fn prefix(&self) -> &Path {
        &self.prefix
    }

    fn with_suffix(&self, suffix: &str) -> PathBuf {
        let mut s: OsString = self.prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }

    pub fn bin(&self) -> PathBuf {
        self.with_suffix(".bin")
    }

    pub fn idx(&self) -> PathBuf {
        self.with_suffix(".idx")
    }

    pub fn lock(&self) -> PathBuf {
        self.with_suffix(".idx.lock")
    }

    pub fn version(&self) -> PathBuf {
        self.with_suffix(".idx.version")
    }

    pub fn journal(&self) -> PathBuf {
        self.with_suffix(".idx.edits.jsonl")
    }

    pub fn suffix_array(&self) -> PathBuf {
        self.with_suffix(".idx.sa")
    }

    pub fn metadata(&self) -> PathBuf {
        self.with_suffix(".bin.meta.jsonl")
    }

    pub fn order_cache(&self, config: &OrderConfig) -> PathBuf {
        self.with_suffix(&format!(
            ".idx.order.{}.{}.{}.{}.bin",
            config.seed, config.seq_len, config.batch_size, config.epochs
        ))
    }
}
