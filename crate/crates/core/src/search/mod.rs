//! N-gram search over the flat token stream (documents concatenated in index order).
//!
//! A [`SuffixArrayIndex`] is stamped with the dataset version it was built
//! against; every query checks the stamp and refuses to answer for a dataset
//! that has been edited since.

pub mod suffix_array;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::format::TokenStore;
use crate::order::SplitMix64;
use crate::Token;

pub use suffix_array::build_suffix_array;

pub const SA_MAGIC: &[u8; 5] = b"TFSA1";
const SA_HEADER_LEN: usize = 5 + 8 + 8 + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Positions {
    Narrow(Vec<u32>),
    Wide(Vec<u64>),
}

impl Positions {
    fn from_sa(sa: Vec<u64>) -> Positions {
        if sa.len() as u64 <= u32::MAX as u64 {
            Positions::Narrow(sa.into_iter().map(|p| p as u32).collect())
        } else {
            Positions::Wide(sa)
        }
    }

    fn len(&self) -> usize {
        match self {
            Positions::Narrow(v) => v.len(),
            Positions::Wide(v) => v.len(),
        }
    }

    #[inline]
    fn get(&self, i: usize) -> u64 {
        match self {
            Positions::Narrow(v) => v[i] as u64,
            Positions::Wide(v) => v[i],
        }
    }

    fn width(&self) -> u8 {
        match self {
            Positions::Narrow(_) => 4,
            Positions::Wide(_) => 8,
        }
    }
}

/// Suffix array over a dataset's token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixArrayIndex {
    dataset_version: u64,
    total_tokens: u64,
    positions: Positions,
}

/// One match of a query in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub offset: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub document_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset_in_document: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionsOptions {
    /// Map each offset to its document and in-document offset.
    #[serde(default)]
    pub resolve: bool,
    /// Drop matches that run past the end of the document they start in.
    #[serde(default)]
    pub within_document: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTokenDistribution {
    pub query: Vec<Token>,
    pub continuations: BTreeMap<Token, u64>,
    pub total: u64,
}

fn partition(len: usize, mut pred: impl FnMut(usize) -> bool) -> usize {
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

/// Compares the first `query.len()` tokens of the suffix at `p` with `query`.
#[inline]
fn cmp_prefix(store: &TokenStore, p: u64, query: &[Token]) -> Ordering {
    for (j, &q) in query.iter().enumerate() {
        match store.get(p + j as u64) {
            None => return Ordering::Less,
            Some(t) => match t.cmp(&q) {
                Ordering::Equal => {}
                other => return other,
            },
        }
    }
    Ordering::Equal
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::CorruptIndex {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

impl SuffixArrayIndex {
    pub fn build(dataset: &Dataset) -> SuffixArrayIndex {
        let tokens = dataset.store().read_all();
        SuffixArrayIndex {
            dataset_version: dataset.version(),
            total_tokens: tokens.len() as u64,
            positions: Positions::from_sa(build_suffix_array(&tokens)),
        }
    }

    /// Builds the index and persists it next to the dataset.
    pub fn build_and_save(dataset: &Dataset) -> Result<SuffixArrayIndex> {
        let index = SuffixArrayIndex::build(dataset);
        index.save(&dataset.paths().suffix_array())?;
        Ok(index)
    }

    pub fn dataset_version(&self) -> u64 {
        self.dataset_version
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Suffix start offsets in sorted order.
    pub fn suffix_positions(&self) -> Vec<u64> {
        (0..self.positions.len()).map(|i| self.positions.get(i)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(Error::io(path))?;
        let mut w = BufWriter::with_capacity(1 << 20, file);
        let io = |e| Error::io(path)(e);
        w.write_all(SA_MAGIC).map_err(io)?;
        w.write_all(&self.dataset_version.to_le_bytes()).map_err(io)?;
        w.write_all(&self.total_tokens.to_le_bytes()).map_err(io)?;
        w.write_all(&[self.positions.width()]).map_err(io)?;
        match &self.positions {
            Positions::Narrow(v) => {
                for p in v {
                    w.write_all(&p.to_le_bytes()).map_err(io)?;
                }
            }
            Positions::Wide(v) => {
                for p in v {
                    w.write_all(&p.to_le_bytes()).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<SuffixArrayIndex> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        if bytes.len() < SA_HEADER_LEN || &bytes[..5] != SA_MAGIC {
            return Err(corrupt(path, "missing TFSA1 header"));
        }
        let dataset_version = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let total_tokens = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
        let width = bytes[21] as usize;
        let body = &bytes[SA_HEADER_LEN..];
        if !(width == 4 || width == 8) || body.len() as u64 != total_tokens * width as u64 {
            return Err(corrupt(
                path,
                format!("{} payload bytes for {total_tokens} offsets of width {width}", body.len()),
            ));
        }
        let positions = if width == 4 {
            Positions::Narrow(
                body.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        } else {
            Positions::Wide(
                body.chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        };
        Ok(SuffixArrayIndex {
            dataset_version,
            total_tokens,
            positions,
        })
    }

    /// Loads the dataset's persisted index, if one exists.
    pub fn load_for(dataset: &Dataset) -> Result<Option<SuffixArrayIndex>> {
        let path = dataset.paths().suffix_array();
        if !path.exists() {
            return Ok(None);
        }
        SuffixArrayIndex::load(&path).map(Some)
    }

    pub fn is_fresh(&self, dataset: &Dataset) -> bool {
        self.dataset_version == dataset.version() && self.total_tokens == dataset.total_tokens()
    }

    fn check(&self, dataset: &Dataset, query: &[Token]) -> Result<()> {
        if !self.is_fresh(dataset) {
            return Err(Error::StaleIndex {
                index_version: self.dataset_version,
                dataset_version: dataset.version(),
            });
        }
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(())
    }

    /// Suffix-array rank range of suffixes starting with `query`.
    fn range(&self, store: &TokenStore, query: &[Token]) -> Range<usize> {
        let n = self.positions.len();
        let lo = partition(n, |i| cmp_prefix(store, self.positions.get(i), query) == Ordering::Less);
        let hi = lo
            + partition(n - lo, |i| {
                cmp_prefix(store, self.positions.get(lo + i), query) != Ordering::Greater
            });
        lo..hi
    }

    pub fn count(&self, dataset: &Dataset, query: &[Token]) -> Result<u64> {
        self.check(dataset, query)?;
        let r = self.range(dataset.store(), query);
        Ok((r.end - r.start) as u64)
    }

    pub fn contains(&self, dataset: &Dataset, query: &[Token]) -> Result<bool> {
        Ok(self.count(dataset, query)? > 0)
    }

    /// Ascending match offsets, at most `limit`.
    pub fn positions(
        &self,
        dataset: &Dataset,
        query: &[Token],
        limit: u64,
        options: PositionsOptions,
    ) -> Result<Vec<Occurrence>> {
        self.check(dataset, query)?;
        if limit == 0 {
            return Err(Error::InvalidArgument("limit must be at least 1".into()));
        }
        let r = self.range(dataset.store(), query);
        let mut offsets: Vec<u64> = r.map(|i| self.positions.get(i)).collect();
        offsets.sort_unstable();
        let index = dataset.index();
        let qlen = query.len() as u64;
        let mut out = Vec::new();
        for offset in offsets {
            if out.len() as u64 >= limit {
                break;
            }
            let needs_doc = options.resolve || options.within_document;
            let (doc, in_doc) = if needs_doc {
                let (d, o) = index.document_of_token(offset);
                (Some(d), Some(o))
            } else {
                (None, None)
            };
            if options.within_document {
                let doc_len = index.document_length(doc.unwrap());
                if in_doc.unwrap() + qlen > doc_len {
                    continue;
                }
            }
            out.push(Occurrence {
                offset,
                document_id: options.resolve.then(|| doc.unwrap() as u64),
                offset_in_document: if options.resolve { in_doc } else { None },
            });
        }
        Ok(out)
    }

    pub fn next_token_distribution(
        &self,
        dataset: &Dataset,
        query: &[Token],
    ) -> Result<NextTokenDistribution> {
        self.check(dataset, query)?;
        let continuations = self.tally_next(dataset.store(), query);
        Ok(NextTokenDistribution {
            query: query.to_vec(),
            total: continuations.values().sum(),
            continuations,
        })
    }

    fn tally_next(&self, store: &TokenStore, context: &[Token]) -> BTreeMap<Token, u64> {
        let mut counts = BTreeMap::new();
        let r = self.range(store, context);
        let n = context.len() as u64;
        for i in r {
            if let Some(t) = store.get(self.positions.get(i) + n) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Generates `length` tokens from a back-off n-gram model over the stream.
    ///
    /// Each step uses the longest suffix of the running context (at most
    /// `max_context - 1` tokens) that has any continuation, dropping the
    /// oldest token until one does, and draws proportionally to counts.
    pub fn sample_continuation(
        &self,
        dataset: &Dataset,
        prompt: &[Token],
        length: u64,
        max_context: u64,
        seed: u64,
    ) -> Result<Vec<Token>> {
        if max_context == 0 {
            return Err(Error::InvalidArgument("max_context must be at least 1".into()));
        }
        if !self.is_fresh(dataset) {
            return Err(Error::StaleIndex {
                index_version: self.dataset_version,
                dataset_version: dataset.version(),
            });
        }
        let store = dataset.store();
        let mut rng = SplitMix64::new(seed);
        let mut context = prompt.to_vec();
        let mut out = Vec::with_capacity(length as usize);
        let mut unigram: Option<BTreeMap<Token, u64>> = None;
        for _ in 0..length {
            let longest = ((max_context - 1) as usize).min(context.len());
            let mut chosen = None;
            for c in (0..=longest).rev() {
                let ctx = &context[context.len() - c..];
                let dist = if c == 0 {
                    unigram.get_or_insert_with(|| self.tally_next(store, &[])).clone()
                } else {
                    self.tally_next(store, ctx)
                };
                let total: u64 = dist.values().sum();
                if total > 0 {
                    chosen = Some(draw(&dist, rng.below(total)));
                    break;
                }
            }
            let token = chosen.ok_or(Error::NoContinuationAnywhere)?;
            context.push(token);
            out.push(token);
        }
        Ok(out)
    }
}

fn draw(dist: &BTreeMap<Token, u64>, mut r: u64) -> Token {
    for (&t, &c) in dist {
        if r < c {
            return t;
        }
        r -= c;
    }
    unreachable!("draw below total always lands in a bucket")
}
