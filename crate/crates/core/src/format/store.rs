use std::fs::File;
use std::path::{Path, PathBuf};

use memmap2::Mmap;

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::Token;

/// Random-access view over the `.bin` token payload, backed by a shared file mapping.
#[derive(Debug)]
pub struct TokenStore {
    path: PathBuf,
    dtype: DType,
    // `None` for a zero-byte payload, which cannot be mapped portably.
    map: Option<Mmap>,
    total_tokens: u64,
}

impl TokenStore {
    pub fn open(path: impl AsRef<Path>, dtype: DType) -> Result<TokenStore> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(Error::io(&path))?;
        let size = file.metadata().map_err(Error::io(&path))?.len();
        let width = dtype.width() as u64;
        if size % width != 0 {
            return Err(Error::BinSizeMismatch {
                expected: size - size % width,
                actual: size,
            });
        }
        let map = if size == 0 {
            None
        } else {
            // SAFETY: the mapping is read-only; in-place edits go through the
            // file descriptor under the exclusive writer lock, and callers are
            // required to quiesce readers of the same files during them.
            Some(unsafe { Mmap::map(&file) }.map_err(Error::io(&path))?)
        };
        Ok(TokenStore {
            path,
            dtype,
            map,
            total_tokens: size / width,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn byte_len(&self) -> u64 {
        self.total_tokens * self.dtype.width() as u64
    }

    pub fn bytes(&self) -> &[u8] {
        self.map.as_deref().unwrap_or(&[])
    }

    fn check_range(&self, start: u64, count: u64) -> Result<()> {
        match start.checked_add(count) {
            Some(end) if end <= self.total_tokens => Ok(()),
            _ => Err(Error::TokenRangeOutOfRange {
                start,
                end: start.saturating_add(count),
                total: self.total_tokens,
            }),
        }
    }

    /// Token at a flat-stream offset.
    #[inline]
    pub fn get(&self, offset: u64) -> Option<Token> {
        if offset >= self.total_tokens {
            return None;
        }
        let w = self.dtype.width();
        let at = offset as usize * w;
        Some(self.dtype.decode(&self.bytes()[at..at + w]))
    }

    /// Decodes `count` tokens starting at `start` and appends them to `out`.
    pub fn read_into(&self, start: u64, count: u64, out: &mut Vec<Token>) -> Result<()> {
        self.check_range(start, count)?;
        let w = self.dtype.width();
        let from = start as usize * w;
        let to = from + count as usize * w;
        self.dtype.decode_slice(&self.bytes()[from..to], out);
        Ok(())
    }

    pub fn read(&self, start: u64, count: u64) -> Result<Vec<Token>> {
        let mut out = Vec::with_capacity(count as usize);
        self.read_into(start, count, &mut out)?;
        Ok(out)
    }

    /// Decodes the whole payload. Only for desk-scale corpora and tests.
    pub fn read_all(&self) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.total_tokens as usize);
        self.dtype.decode_slice(self.bytes(), &mut out);
        out
    }
}
