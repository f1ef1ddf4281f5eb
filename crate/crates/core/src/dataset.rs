use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::format::version::read_version;
use crate::format::{DatasetIndex, DatasetPaths, TokenStore};
use crate::Token;

/// An opened dataset: parsed index, mapped payload and the current version counter.
///
/// Reads go through `&self` and are safe from any number of threads.
/// Mutation goes through [`DatasetWriter`](crate::edit::DatasetWriter), which
/// borrows the dataset mutably.
#[derive(Debug)]
pub struct Dataset {
    paths: DatasetPaths,
    index: DatasetIndex,
    store: TokenStore,
    version: u64,
}

impl Dataset {
    pub fn open(paths: impl Into<DatasetPaths>) -> Result<Dataset> {
        let paths = paths.into();
        let index = DatasetIndex::read(paths.idx())?;
        let store = TokenStore::open(paths.bin(), index.dtype())?;
        if store.byte_len() != index.bin_size() {
            return Err(Error::BinSizeMismatch {
                expected: index.bin_size(),
                actual: store.byte_len(),
            });
        }
        let version = read_version(&paths.version())?;
        Ok(Dataset {
            paths,
            index,
            store,
            version,
        })
    }

    pub fn paths(&self) -> &DatasetPaths {
        &self.paths
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    pub fn store(&self) -> &TokenStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.index.dtype()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    /// Re-reads the version file, picking up edits made by other processes.
    pub fn refresh_version(&mut self) -> Result<u64> {
        self.version = read_version(&self.paths.version())?;
        Ok(self.version)
    }

    pub fn sequence_count(&self) -> u64 {
        self.index.sequence_count()
    }

    pub fn document_count(&self) -> u64 {
        self.index.document_count()
    }

    pub fn total_tokens(&self) -> u64 {
        self.index.total_tokens()
    }

    pub fn sequence_length(&self, seq_id: u64) -> Result<u64> {
        let seq = self.index.check_sequence(seq_id)?;
        Ok(self.index.length(seq))
    }

    pub fn fetch_tokens(&self, seq_id: u64, offset: u64, count: u64) -> Result<Vec<Token>> {
        let seq = self.index.check_sequence(seq_id)?;
        let length = self.index.length(seq);
        if offset.checked_add(count).is_none_or(|end| end > length) {
            return Err(Error::SliceOutOfRange {
                seq_id,
                offset,
                count,
                length,
            });
        }
        self.store.read(self.index.token_start(seq) + offset, count)
    }

    pub fn fetch_sequence(&self, seq_id: u64) -> Result<Vec<Token>> {
        let len = self.sequence_length(seq_id)?;
        self.fetch_tokens(seq_id, 0, len)
    }

    /// Member sequences of a document, in index order.
    pub fn fetch_document(&self, doc_id: u64) -> Result<Vec<Vec<Token>>> {
        let doc = self.index.check_document(doc_id)?;
        self.index
            .document_sequences(doc)
            .map(|seq| self.fetch_sequence(seq as u64))
            .collect()
    }

    /// A document's tokens with sequence boundaries dropped.
    pub fn document_tokens(&self, doc_id: u64) -> Result<Vec<Token>> {
        let doc = self.index.check_document(doc_id)?;
        let range = self.index.document_tokens(doc);
        self.store.read(range.start, range.end - range.start)
    }

    /// Tokens of the flat stream (`.bin` order).
    pub fn stream_tokens(&self, start: u64, count: u64) -> Result<Vec<Token>> {
        self.store.read(start, count)
    }
}

impl From<&DatasetPaths> for DatasetPaths {
    fn from(p: &DatasetPaths) -> Self {
        p.clone()
    }
}

impl From<&std::path::Path> for DatasetPaths {
    fn from(p: &std::path::Path) -> Self {
        DatasetPaths::new(p)
    }
}

impl From<std::path::PathBuf> for DatasetPaths {
    fn from(p: std::path::PathBuf) -> Self {
        DatasetPaths::new(p)
    }
}

impl From<&str> for DatasetPaths {
    fn from(p: &str) -> Self {
        DatasetPaths::new(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::build_dataset;

    fn fixture(dir: &std::path::Path) -> Dataset {
        let paths = DatasetPaths::new(dir.join("d"));
        build_dataset(&paths, DType::Uint16, [vec![5, 6, 7, 8], vec![9], vec![1, 2, 3]]).unwrap();
        Dataset::open(&paths).unwrap()
    }

    #[test]
    fn slices() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        assert_eq!(ds.fetch_tokens(0, 0, 4).unwrap(), vec![5, 6, 7, 8]);
        assert!(ds.fetch_tokens(0, 0, 0).unwrap().is_empty());
        assert_eq!(ds.fetch_tokens(2, 1, 2).unwrap(), vec![2, 3]);
        assert_eq!(ds.fetch_tokens(2, 1, 3).unwrap_err().code(), "SliceOutOfRange");
        assert_eq!(ds.fetch_tokens(3, 0, 0).unwrap_err().code(), "SeqOutOfRange");
        assert_eq!(ds.fetch_tokens(0, u64::MAX, 2).unwrap_err().code(), "SliceOutOfRange");
    }

    #[test]
    fn documents() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        assert_eq!(ds.fetch_document(1).unwrap(), vec![vec![9]]);
        assert_eq!(ds.fetch_document(3).unwrap_err().code(), "DocOutOfRange");
    }

    #[test]
    fn size_mismatch_refuses_to_open() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        let bin = ds.paths().bin();
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 2]).unwrap();
        assert_eq!(Dataset::open(ds.paths()).unwrap_err().code(), "BinSizeMismatch");
    }
}
