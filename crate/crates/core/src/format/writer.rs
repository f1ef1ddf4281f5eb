use std::fs::{self, File};
use std::io::{BufWriter, Write};

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::format::index::DatasetIndex;
use crate::format::lock::WriterLock;
use crate::format::paths::DatasetPaths;
use crate::format::version::{read_version, write_version};
use crate::Token;

/// Streaming `.bin`/`.idx` writer.
///
/// Token payload goes straight to disk; only the per-sequence index entries
/// are kept until [`finish`](Self::finish) writes the `.idx`. Holds the
/// target's writer lock for its whole lifetime.
pub struct DatasetBuilder {
    paths: DatasetPaths,
    dtype: DType,
    bin: Option<BufWriter<File>>,
    lengths: Vec<i32>,
    boundaries: Vec<i64>,
    scratch: Vec<u8>,
    version: Option<u64>,
    finished: bool,
    _lock: WriterLock,
}

impl DatasetBuilder {
    pub fn create(paths: &DatasetPaths, dtype: DType) -> Result<DatasetBuilder> {
        let dtype = dtype.require_integer()?;
        let lock = WriterLock::acquire(paths.lock())?;
        let bin_path = paths.bin();
        let bin = File::create(&bin_path).map_err(Error::io(&bin_path))?;
        Ok(DatasetBuilder {
            paths: paths.clone(),
            dtype,
            bin: Some(BufWriter::with_capacity(1 << 20, bin)),
            lengths: Vec::new(),
            boundaries: vec![0],
            scratch: Vec::new(),
            version: None,
            finished: false,
            _lock: lock,
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Overrides the version stamped on the finished dataset. By default a
    /// rebuild bumps whatever version the prefix carried before.
    pub fn with_version(mut self, version: u64) -> Self {
        self.version = Some(version);
        self
    }

    /// Appends one sequence to the document being built.
    pub fn push_sequence(&mut self, tokens: &[Token]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::InvalidLength {
                index: self.lengths.len(),
                offset: 0,
                detail: "cannot write an empty sequence".into(),
            });
        }
        let len = i32::try_from(tokens.len()).map_err(|_| Error::SequenceTooLong(tokens.len()))?;
        self.scratch.clear();
        self.dtype.encode_all(tokens, &mut self.scratch)?;
        let bin_path = self.paths.bin();
        self.bin
            .as_mut()
            .expect("builder used after finish")
            .write_all(&self.scratch)
            .map_err(Error::io(bin_path))?;
        self.lengths.push(len);
        Ok(())
    }

    /// Appends a sequence given as already-encoded payload bytes.
    pub(crate) fn push_encoded(&mut self, bytes: &[u8]) -> Result<()> {
        let width = self.dtype.width();
        debug_assert_eq!(bytes.len() % width, 0);
        let tokens = bytes.len() / width;
        if tokens == 0 {
            return Err(Error::InvalidLength {
                index: self.lengths.len(),
                offset: 0,
                detail: "cannot write an empty sequence".into(),
            });
        }
        let len = i32::try_from(tokens).map_err(|_| Error::SequenceTooLong(tokens))?;
        let bin_path = self.paths.bin();
        self.bin
            .as_mut()
            .expect("builder used after finish")
            .write_all(bytes)
            .map_err(Error::io(bin_path))?;
        self.lengths.push(len);
        Ok(())
    }

    /// Closes the current document. A document with no sequences is allowed
    /// here so existing datasets with empty spans can be rewritten faithfully.
    pub fn end_document(&mut self) {
        self.boundaries.push(self.lengths.len() as i64);
    }

    /// Appends a single-sequence document.
    pub fn add_document(&mut self, tokens: &[Token]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptyDocument {
                position: self.documents_written(),
            });
        }
        self.push_sequence(tokens)?;
        self.end_document();
        Ok(())
    }

    pub fn documents_written(&self) -> u64 {
        (self.boundaries.len() - 1) as u64
    }

    pub fn finish(mut self) -> Result<DatasetIndex> {
        let bin_path = self.paths.bin();
        let bin = self.bin.take().expect("builder used after finish");
        bin.into_inner()
            .map_err(|e| Error::io(&bin_path)(e.into_error()))?
            .sync_data()
            .map_err(Error::io(&bin_path))?;

        let mut boundaries = std::mem::take(&mut self.boundaries);
        if *boundaries.last().unwrap() != self.lengths.len() as i64 {
            // Sequences pushed without a closing `end_document` form the last document.
            boundaries.push(self.lengths.len() as i64);
        }
        let index =
            DatasetIndex::from_lengths(self.dtype, std::mem::take(&mut self.lengths), boundaries)?;
        // Replaced by rename so readers mapping the old index keep a valid image.
        let idx_path = self.paths.idx();
        let tmp = idx_path.with_extension("idx.tmp");
        fs::write(&tmp, index.to_bytes()).map_err(Error::io(&tmp))?;
        fs::rename(&tmp, &idx_path).map_err(Error::io(&idx_path))?;

        let version_path = self.paths.version();
        let version = match self.version {
            Some(v) => v,
            None if version_path.exists() => read_version(&version_path)? + 1,
            None => 0,
        };
        write_version(&version_path, version)?;
        self.finished = true;
        Ok(index)
    }
}

impl Drop for DatasetBuilder {
    fn drop(&mut self) {
        if !self.finished {
            self.bin.take();
            let _ = fs::remove_file(self.paths.bin());
        }
    }
}

/// Writes a dataset with one sequence per input document.
pub fn build_dataset<I>(paths: &DatasetPaths, dtype: DType, documents: I) -> Result<DatasetIndex>
where
    I: IntoIterator,
    I::Item: AsRef<[Token]>,
{
    let mut builder = DatasetBuilder::create(paths, dtype)?;
    for doc in documents {
        builder.add_document(doc.as_ref())?;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_document() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let idx = build_dataset(&paths, DType::Uint16, [vec![7]]).unwrap();
        assert_eq!(idx.lengths(), vec![1]);
        assert_eq!(idx.pointers(), vec![0]);
        assert_eq!(idx.doc_boundaries(), vec![0, 1]);
        assert!(!paths.lock().exists());
    }

    #[test]
    fn bin_layout_is_forced() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let idx = build_dataset(&paths, DType::Uint16, [vec![1, 2, 3], vec![4, 5]]).unwrap();
        assert_eq!(fs::read(paths.bin()).unwrap(), [1, 0, 2, 0, 3, 0, 4, 0, 5, 0]);
        assert_eq!(idx.pointers(), vec![0, 6]);
        assert_eq!(DatasetIndex::read(paths.idx()).unwrap(), idx);
    }

    #[test]
    fn rejects_empty_and_overflowing_documents() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let docs: Vec<Vec<Token>> = vec![vec![1], vec![]];
        match build_dataset(&paths, DType::Uint16, docs).unwrap_err() {
            Error::EmptyDocument { position } => assert_eq!(position, 1),
            e => panic!("{e:?}"),
        }
        assert!(!paths.bin().exists());
        assert!(!paths.lock().exists());
        let err = build_dataset(&paths, DType::Uint8, [vec![256]]).unwrap_err();
        assert_eq!(err.code(), "TokenOverflowsDType");
    }

    #[test]
    fn rebuild_bumps_version() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        build_dataset(&paths, DType::Uint16, [vec![1]]).unwrap();
        assert_eq!(read_version(&paths.version()).unwrap(), 0);
        build_dataset(&paths, DType::Uint16, [vec![1]]).unwrap();
        assert_eq!(read_version(&paths.version()).unwrap(), 1);
    }

    #[test]
    fn multi_sequence_documents() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let mut b = DatasetBuilder::create(&paths, DType::Int32).unwrap();
        b.push_sequence(&[1, 2]).unwrap();
        b.push_sequence(&[3]).unwrap();
        b.end_document();
        b.end_document();
        b.push_sequence(&[-4]).unwrap();
        let idx = b.finish().unwrap();
        assert_eq!(idx.doc_boundaries(), vec![0, 2, 2, 3]);
        assert_eq!(idx.pointers(), vec![0, 8, 12]);
    }
}
