//! The `.idx` file: header, per-sequence lengths and byte pointers, document boundaries.
//!
//! Layout (all little-endian):
//!
//! | offset        | size    | field                                   |
//! |---------------|---------|-----------------------------------------|
//! | 0             | 9       | magic `MMIDIDX\0\0`                     |
//! | 9             | 8       | version (u64, always 1)                 |
//! | 17            | 1       | dtype code                              |
//! | 18            | 8       | sequence count (i64)                    |
//! | 26            | 8       | boundary count (i64) = documents + 1    |
//! | 34            | 4 × n   | lengths (i32)                           |
//! | 34 + 4n       | 8 × n   | pointers (i64, byte offsets into .bin)  |
//! | 34 + 12n      | 8 × b   | document boundaries (i64)               |
//!
//! The arrays start at an unaligned offset, so entries are decoded on access
//! straight from the file image rather than copied out into typed vectors.

use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::{Deref, Range};
use std::path::Path;

use memmap2::{Mmap, MmapOptions};

use crate::dtype::DType;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"MMIDIDX\x00\x00";
pub const INDEX_VERSION: u64 = 1;
pub const HEADER_LEN: usize = 34;

const VERSION_OFFSET: usize = 9;
const DTYPE_OFFSET: usize = 17;
const SEQ_COUNT_OFFSET: usize = 18;
const BOUNDARY_COUNT_OFFSET: usize = 26;

enum Image {
    Owned(Vec<u8>),
    Mapped(Mmap),
}

impl Deref for Image {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        match self {
            Image::Owned(v) => v,
            Image::Mapped(m) => m,
        }
    }
}

/// Parsed and validated `.idx` contents.
pub struct DatasetIndex {
    dtype: DType,
    image: Image,
    n: usize,
    b: usize,
}

impl Clone for DatasetIndex {
    fn clone(&self) -> Self {
        DatasetIndex {
            dtype: self.dtype,
            image: Image::Owned(self.image.to_vec()),
            n: self.n,
            b: self.b,
        }
    }
}

impl PartialEq for DatasetIndex {
    fn eq(&self, other: &Self) -> bool {
        *self.image == *other.image
    }
}

impl Eq for DatasetIndex {}

impl fmt::Debug for DatasetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DatasetIndex")
            .field("dtype", &self.dtype)
            .field("sequences", &self.n)
            .field("boundaries", &self.b)
            .finish()
    }
}

pub(crate) struct Header {
    pub dtype: DType,
    pub sequence_count: usize,
    pub boundary_count: usize,
}

/// Typed view of the three arrays inside an index image.
#[derive(Clone, Copy)]
pub(crate) struct Arrays<'a> {
    bytes: &'a [u8],
    pub n: usize,
    pub b: usize,
}

impl Arrays<'_> {
    #[inline]
    pub fn length(&self, i: usize) -> i32 {
        let at = lengths_offset() + 4 * i;
        i32::from_le_bytes(self.bytes[at..at + 4].try_into().unwrap())
    }

    #[inline]
    pub fn pointer(&self, i: usize) -> i64 {
        le_i64(self.bytes, pointers_offset(self.n) + 8 * i)
    }

    #[inline]
    pub fn boundary(&self, i: usize) -> i64 {
        le_i64(self.bytes, boundaries_offset(self.n) + 8 * i)
    }

    /// Expected `.bin` size: last pointer plus last length, in bytes.
    pub fn bin_size(&self, width: u64) -> u64 {
        match self.n {
            0 => 0,
            n => (self.pointer(n - 1) as u64).wrapping_add(self.length(n - 1) as u64 * width),
        }
    }
}

fn le_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn le_i64(bytes: &[u8], at: usize) -> i64 {
    i64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn truncated(offset: usize, needed: usize, available: usize) -> Error {
    Error::TruncatedIndex {
        offset,
        needed,
        available,
    }
}

pub(crate) fn decode_header(bytes: &[u8]) -> Result<Header> {
    if let Some(offset) = MAGIC.iter().zip(bytes).position(|(a, b)| a != b) {
        return Err(Error::BadMagic { offset });
    }
    if bytes.len() < MAGIC.len() {
        return Err(truncated(bytes.len(), MAGIC.len() - bytes.len(), bytes.len()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(bytes.len(), HEADER_LEN - bytes.len(), bytes.len()));
    }
    let version = le_u64(bytes, VERSION_OFFSET);
    if version != INDEX_VERSION {
        return Err(Error::UnsupportedVersion {
            version,
            offset: VERSION_OFFSET,
        });
    }
    let code = bytes[DTYPE_OFFSET];
    let dtype = DType::from_code(code).ok_or(Error::UnknownDType {
        code,
        offset: DTYPE_OFFSET,
    })?;
    dtype.require_integer()?;
    let count = |at: usize, what: &str| -> Result<usize> {
        let v = le_i64(bytes, at);
        usize::try_from(v).map_err(|_| Error::InvalidLength {
            index: 0,
            offset: at,
            detail: format!("negative {what} {v}"),
        })
    };
    Ok(Header {
        dtype,
        sequence_count: count(SEQ_COUNT_OFFSET, "sequence count")?,
        boundary_count: count(BOUNDARY_COUNT_OFFSET, "boundary count")?,
    })
}

pub(crate) fn lengths_offset() -> usize {
    HEADER_LEN
}

pub(crate) fn pointers_offset(n: usize) -> usize {
    HEADER_LEN + 4 * n
}

pub(crate) fn boundaries_offset(n: usize) -> usize {
    HEADER_LEN + 12 * n
}

/// Checks that all three arrays fit. Trailing bytes are left to the caller.
pub(crate) fn decode_arrays<'a>(bytes: &'a [u8], header: &Header) -> Result<Arrays<'a>> {
    let n = header.sequence_count;
    let b = header.boundary_count;
    let sections = [
        (lengths_offset(), n.checked_mul(4)),
        (pointers_offset(n), n.checked_mul(8)),
        (boundaries_offset(n), b.checked_mul(8)),
    ];
    for (start, len) in sections {
        let end = len.and_then(|l| start.checked_add(l));
        match end {
            Some(end) if end <= bytes.len() => {}
            Some(end) => return Err(truncated(start, end - start, bytes.len())),
            None => return Err(truncated(start, usize::MAX, bytes.len())),
        }
    }
    Ok(Arrays { bytes, n, b })
}

pub(crate) fn encoded_len(n: usize, b: usize) -> usize {
    HEADER_LEN + 12 * n + 8 * b
}

/// Runs every structural invariant, handing each violation to `sink`.
/// Stops early when `sink` returns `false`.
pub(crate) fn check_invariants(
    dtype: DType,
    arrays: &Arrays<'_>,
    sink: &mut dyn FnMut(Error) -> bool,
) {
    let n = arrays.n;
    let width = dtype.width() as i64;
    let p_off = pointers_offset(n);
    for i in 0..n {
        let len = arrays.length(i);
        if len < 1 {
            let keep_going = sink(Error::InvalidLength {
                index: i,
                offset: lengths_offset() + 4 * i,
                detail: format!("length {len} < 1"),
            });
            if !keep_going {
                return;
            }
        }
    }
    if n > 0 {
        let first = arrays.pointer(0);
        if first != 0
            && !sink(Error::InconsistentPointers {
                index: 0,
                offset: p_off,
                detail: format!("pointers[0] = {first}, expected 0"),
            })
        {
            return;
        }
    }
    let mut prev = if n > 0 { arrays.pointer(0) } else { 0 };
    for i in 0..n.saturating_sub(1) {
        let next = arrays.pointer(i + 1);
        let expected = (arrays.length(i) as i64) * width;
        let delta = next.wrapping_sub(prev);
        prev = next;
        if delta != expected
            && !sink(Error::InconsistentPointers {
                index: i,
                offset: p_off + 8 * (i + 1),
                detail: format!(
                    "pointers[{}] - pointers[{i}] = {delta}, expected lengths[{i}] x {width} = {expected}",
                    i + 1
                ),
            })
        {
            return;
        }
    }
    let b_off = boundaries_offset(n);
    if arrays.b == 0 {
        sink(Error::InvalidBoundaries {
            index: 0,
            offset: b_off,
            detail: "boundary count is 0, expected at least 1".into(),
        });
        return;
    }
    let first = arrays.boundary(0);
    if first != 0
        && !sink(Error::InvalidBoundaries {
            index: 0,
            offset: b_off,
            detail: format!("doc_boundaries[0] = {first}, expected 0"),
        })
    {
        return;
    }
    let mut prev = first;
    for i in 1..arrays.b {
        let cur = arrays.boundary(i);
        if cur < prev
            && !sink(Error::InvalidBoundaries {
                index: i,
                offset: b_off + 8 * i,
                detail: format!("doc_boundaries[{i}] = {cur} decreases from {prev}"),
            })
        {
            return;
        }
        prev = cur;
    }
    let last = arrays.b - 1;
    if arrays.boundary(last) != n as i64 {
        sink(Error::InvalidBoundaries {
            index: last,
            offset: b_off + 8 * last,
            detail: format!(
                "doc_boundaries[{last}] = {}, expected sequence count {n}",
                arrays.boundary(last)
            ),
        });
    }
}

impl DatasetIndex {
    /// Parses and fully validates an index image.
    pub fn parse(bytes: &[u8]) -> Result<DatasetIndex> {
        Self::validated(Image::Owned(bytes.to_vec()))
    }

    /// Maps and fully validates an `.idx` file.
    pub fn read(path: impl AsRef<Path>) -> Result<DatasetIndex> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(Error::io(path))?;
        let len = file.metadata().map_err(Error::io(path))?.len();
        if len == 0 {
            return Self::parse(&[]);
        }
        // SAFETY: index files are never modified in place; writers replace
        // them by rename, which leaves this mapping on the old inode.
        let map = unsafe { MmapOptions::new().populate().map(&file) }.map_err(Error::io(path))?;
        Self::validated(Image::Mapped(map))
    }

    fn validated(image: Image) -> Result<DatasetIndex> {
        let header = decode_header(&image)?;
        let arrays = decode_arrays(&image, &header)?;
        let end = encoded_len(header.sequence_count, header.boundary_count);
        if image.len() > end {
            return Err(Error::TrailingIndexBytes { offset: end });
        }
        let mut first = None;
        check_invariants(header.dtype, &arrays, &mut |e| {
            first = Some(e);
            false
        });
        if let Some(e) = first {
            return Err(e);
        }
        Ok(DatasetIndex {
            dtype: header.dtype,
            n: header.sequence_count,
            b: header.boundary_count,
            image,
        })
    }

    fn arrays(&self) -> Arrays<'_> {
        Arrays {
            bytes: &self.image,
            n: self.n,
            b: self.b,
        }
    }

    /// Builds an index with pointers derived from the lengths.
    pub fn from_lengths(dtype: DType, lengths: Vec<i32>, doc_boundaries: Vec<i64>) -> Result<Self> {
        let dtype = dtype.require_integer()?;
        let width = dtype.width() as i64;
        let mut out = Vec::with_capacity(encoded_len(lengths.len(), doc_boundaries.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.push(dtype.code());
        out.extend_from_slice(&(lengths.len() as i64).to_le_bytes());
        out.extend_from_slice(&(doc_boundaries.len() as i64).to_le_bytes());
        out.extend(lengths.iter().flat_map(|l| l.to_le_bytes()));
        let mut at = 0i64;
        for &len in &lengths {
            out.extend_from_slice(&at.to_le_bytes());
            at += len as i64 * width;
        }
        out.extend(doc_boundaries.iter().flat_map(|b| b.to_le_bytes()));
        Self::validated(Image::Owned(out))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.image.to_vec()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.image)
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Decoded copy of the lengths array.
    pub fn lengths(&self) -> Vec<i32> {
        (0..self.n).map(|i| self.arrays().length(i)).collect()
    }

    pub fn pointers(&self) -> Vec<i64> {
        (0..self.n).map(|i| self.arrays().pointer(i)).collect()
    }

    pub fn doc_boundaries(&self) -> Vec<i64> {
        (0..self.b).map(|i| self.arrays().boundary(i)).collect()
    }

    pub fn pointer(&self, seq: usize) -> i64 {
        assert!(seq < self.n, "sequence {seq} out of range");
        self.arrays().pointer(seq)
    }

    pub fn sequence_count(&self) -> u64 {
        self.n as u64
    }

    pub fn document_count(&self) -> u64 {
        self.b.saturating_sub(1) as u64
    }

    pub fn total_tokens(&self) -> u64 {
        self.bin_size() / self.dtype.width() as u64
    }

    /// Expected `.bin` size in bytes.
    pub fn bin_size(&self) -> u64 {
        self.arrays().bin_size(self.dtype.width() as u64)
    }

    pub fn check_sequence(&self, seq_id: u64) -> Result<usize> {
        if seq_id < self.sequence_count() {
            Ok(seq_id as usize)
        } else {
            Err(Error::SeqOutOfRange {
                seq_id,
                count: self.sequence_count(),
            })
        }
    }

    pub fn check_document(&self, doc_id: u64) -> Result<usize> {
        if doc_id < self.document_count() {
            Ok(doc_id as usize)
        } else {
            Err(Error::DocOutOfRange {
                doc_id,
                count: self.document_count(),
            })
        }
    }

    pub fn length(&self, seq: usize) -> u64 {
        assert!(seq < self.n, "sequence {seq} out of range");
        self.arrays().length(seq) as u64
    }

    /// Offset of the sequence's first token in the flat token stream.
    pub fn token_start(&self, seq: usize) -> u64 {
        self.pointer(seq) as u64 / self.dtype.width() as u64
    }

    fn boundary(&self, i: usize) -> usize {
        assert!(i < self.b, "boundary {i} out of range");
        self.arrays().boundary(i) as usize
    }

    /// Sequence ids belonging to a document (possibly empty).
    pub fn document_sequences(&self, doc: usize) -> Range<usize> {
        self.boundary(doc)..self.boundary(doc + 1)
    }

    /// Document containing a sequence.
    pub fn document_of_sequence(&self, seq: usize) -> usize {
        let seq = seq as i64;
        let a = self.arrays();
        partition_point(self.b, |i| a.boundary(i) <= seq) - 1
    }

    fn sequence_start_or_end(&self, seq: usize) -> u64 {
        if seq < self.n {
            self.token_start(seq)
        } else {
            self.total_tokens()
        }
    }

    /// Document's token range in the flat stream.
    pub fn document_tokens(&self, doc: usize) -> Range<u64> {
        let seqs = self.document_sequences(doc);
        self.sequence_start_or_end(seqs.start)..self.sequence_start_or_end(seqs.end)
    }

    pub fn document_length(&self, doc: usize) -> u64 {
        let r = self.document_tokens(doc);
        r.end - r.start
    }

    /// Sequence containing a flat-stream token offset (`offset < total_tokens`).
    pub fn sequence_of_token(&self, offset: u64) -> usize {
        let width = self.dtype.width() as u64;
        let a = self.arrays();
        partition_point(self.n, |i| a.pointer(i) as u64 / width <= offset) - 1
    }

    /// Maps a flat-stream token offset to `(document, offset within document)`.
    pub fn document_of_token(&self, offset: u64) -> (usize, u64) {
        let seq = self.sequence_of_token(offset);
        let doc = self.document_of_sequence(seq);
        (doc, offset - self.document_tokens(doc).start)
    }
}

/// First `i` in `0..len` where `pred` turns false; `pred` must be monotone.
fn partition_point(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}
