//! Deterministic reconstruction of the training-time view of a dataset.
//!
//! Documents are shuffled per epoch and concatenated into one stream. The
//! stream is cut into samples of `seq_len + 1` tokens (inputs plus shifted
//! targets) that start every `seq_len` tokens, and the sample ids are
//! shuffled once. Step `s` consumes `shuffle[s*B .. (s+1)*B]`.
//!
//! Everything is driven by [`rng::SplitMix64`] and is bit-reproducible. It is
//! not byte-compatible with any training framework's own index files.

pub mod rng;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::format::version::{read_version, write_version};
use crate::format::DatasetIndex;
use crate::Token;

pub use rng::{rng_next, shuffle_in_place, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderConfig {
    pub seed: u64,
    /// Tokens per training sample, targets excluded.
    pub seq_len: u64,
    pub batch_size: u64,
    pub epochs: u64,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig {
            seed: 1234,
            seq_len: 2048,
            batch_size: 8,
            epochs: 1,
        }
    }
}

impl OrderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("seq_len", self.seq_len),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(Error::InvalidOrderConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn sample_len(&self) -> u64 {
        self.seq_len + 1
    }
}

/// A contiguous piece of one sequence contributing to a training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpan {
    pub document_id: u64,
    pub sequence_id: u64,
    /// Offset within the sequence.
    pub token_offset: u64,
    pub token_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingOrder {
    config: OrderConfig,
    doc_order: Vec<u64>,
    num_samples: u64,
    shuffle: Vec<u64>,
    // Stream offset one past the end of each `doc_order` entry.
    stream_ends: Vec<u64>,
}

const HEADER_WORDS: usize = 5;

impl TrainingOrder {
    pub fn build(index: &DatasetIndex, config: OrderConfig) -> Result<TrainingOrder> {
        config.validate()?;
        let docs = index.document_count();
        let stream_tokens = index
            .total_tokens()
            .checked_mul(config.epochs)
            .ok_or_else(|| Error::InvalidOrderConfig("stream length overflows u64".into()))?;
        if docs == 0 || stream_tokens < config.sample_len() {
            return Err(Error::DatasetTooSmall {
                tokens: stream_tokens,
                needed: config.sample_len(),
            });
        }
        let mut doc_order = Vec::with_capacity((docs * config.epochs) as usize);
        for epoch in 0..config.epochs {
            let start = doc_order.len();
            doc_order.extend(0..docs);
            shuffle_in_place(&mut doc_order[start..], config.seed.wrapping_add(epoch));
        }
        let num_samples = (stream_tokens - 1) / config.seq_len;
        let mut shuffle: Vec<u64> = (0..num_samples).collect();
        shuffle_in_place(&mut shuffle, config.seed);
        let stream_ends = stream_ends(index, &doc_order);
        Ok(TrainingOrder {
            config,
            doc_order,
            num_samples,
            shuffle,
            stream_ends,
        })
    }

    /// Replaces the sample shuffle with the identity. Test hook for step arithmetic.
    pub fn with_identity_shuffle(mut self) -> Self {
        self.shuffle = (0..self.num_samples).collect();
        self
    }

    pub fn config(&self) -> &OrderConfig {
        &self.config
    }

    pub fn doc_order(&self) -> &[u64] {
        &self.doc_order
    }

    pub fn shuffle(&self) -> &[u64] {
        &self.shuffle
    }

    pub fn num_samples(&self) -> u64 {
        self.num_samples
    }

    /// Number of full steps; the trailing partial batch is dropped.
    pub fn num_steps(&self) -> u64 {
        self.num_samples / self.config.batch_size
    }

    pub fn stream_len(&self) -> u64 {
        self.stream_ends.last().copied().unwrap_or(0)
    }

    pub fn resolve_step(&self, step: u64) -> Result<&[u64]> {
        if step >= self.num_steps() {
            return Err(Error::StepOutOfRange {
                step,
                steps: self.num_steps(),
            });
        }
        let b = self.config.batch_size as usize;
        let at = step as usize * b;
        Ok(&self.shuffle[at..at + b])
    }

    fn check_sample(&self, sample_id: u64) -> Result<()> {
        if sample_id < self.num_samples {
            Ok(())
        } else {
            Err(Error::SampleOutOfRange {
                sample_id,
                count: self.num_samples,
            })
        }
    }

    /// Splits a sample's `seq_len + 1` stream tokens into per-sequence pieces.
    pub fn resolve_sample(&self, index: &DatasetIndex, sample_id: u64) -> Result<Vec<SampleSpan>> {
        self.check_sample(sample_id)?;
        self.resolve_stream(index, sample_id * self.config.seq_len, self.config.sample_len())
    }

    /// Per-sequence pieces covering `count` tokens of the ordered stream from `start`.
    pub fn resolve_stream(
        &self,
        index: &DatasetIndex,
        start: u64,
        count: u64,
    ) -> Result<Vec<SampleSpan>> {
        let end = start.checked_add(count).filter(|&e| e <= self.stream_len());
        if end.is_none() {
            return Err(Error::TokenRangeOutOfRange {
                start,
                end: start.saturating_add(count),
                total: self.stream_len(),
            });
        }
        let mut spans = Vec::new();
        let mut pos = start;
        let mut remaining = count;
        let mut k = self.stream_ends.partition_point(|&e| e <= pos);
        while remaining > 0 {
            let doc = self.doc_order[k] as usize;
            let doc_stream_start = if k == 0 { 0 } else { self.stream_ends[k - 1] };
            let global = index.document_tokens(doc).start + (pos - doc_stream_start);
            let seq = index.sequence_of_token(global);
            let seq_start = index.token_start(seq);
            let seq_end = seq_start + index.length(seq);
            let n = remaining.min(seq_end - global);
            spans.push(SampleSpan {
                document_id: doc as u64,
                sequence_id: seq as u64,
                token_offset: global - seq_start,
                token_count: n,
            });
            pos += n;
            remaining -= n;
            while k < self.stream_ends.len() && self.stream_ends[k] <= pos {
                k += 1;
            }
        }
        Ok(spans)
    }

    pub fn sample_tokens(&self, dataset: &Dataset, sample_id: u64) -> Result<Vec<Token>> {
        let spans = self.resolve_sample(dataset.index(), sample_id)?;
        spans_tokens(dataset, &spans)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let words = [c.seed, c.seq_len, c.batch_size, c.epochs, self.num_samples];
        let mut out =
            Vec::with_capacity(8 * (HEADER_WORDS + self.doc_order.len() + self.shuffle.len()));
        for w in words.iter().chain(&self.doc_order).chain(&self.shuffle) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Decodes a persisted order. The index supplies the document lengths,
    /// which are not part of the file.
    pub fn from_bytes(bytes: &[u8], index: &DatasetIndex) -> std::result::Result<Self, String> {
        if !bytes.len().is_multiple_of(8) || bytes.len() < 8 * HEADER_WORDS {
            return Err(format!("length {} is not a whole header plus words", bytes.len()));
        }
        let words: Vec<u64> = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let config = OrderConfig {
            seed: words[0],
            seq_len: words[1],
            batch_size: words[2],
            epochs: words[3],
        };
        config.validate().map_err(|e| e.to_string())?;
        let num_samples = words[4];
        let docs = index.document_count();
        let order_len = docs
            .checked_mul(config.epochs)
            .ok_or("doc order length overflows")? as usize;
        let body = &words[HEADER_WORDS..];
        if body.len() as u64 != order_len as u64 + num_samples {
            return Err(format!(
                "expected {} doc-order and {num_samples} shuffle words, found {} words",
                order_len,
                body.len()
            ));
        }
        let (doc_order, shuffle) = body.split_at(order_len);
        if doc_order.iter().any(|&d| d >= docs) {
            return Err("document id out of range".into());
        }
        let doc_order = doc_order.to_vec();
        let stream_ends = stream_ends(index, &doc_order);
        let expected_samples = stream_ends.last().copied().unwrap_or(0).saturating_sub(1) / config.seq_len;
        if expected_samples != num_samples || shuffle.iter().any(|&s| s >= num_samples) {
            return Err("sample count does not match the dataset".into());
        }
        Ok(TrainingOrder {
            config,
            doc_order,
            num_samples,
            shuffle: shuffle.to_vec(),
            stream_ends,
        })
    }

    /// Loads the persisted order for `config` if it was built against the
    /// dataset's current version, otherwise builds and persists it.
    pub fn load_or_build(dataset: &Dataset, config: OrderConfig) -> Result<TrainingOrder> {
        let path = dataset.paths().order_cache(&config);
        let stamp = stamp_path(&path);
        if path.exists() && stamp.exists() && read_version(&stamp).ok() == Some(dataset.version()) {
            let bytes = fs::read(&path).map_err(Error::io(&path))?;
            match TrainingOrder::from_bytes(&bytes, dataset.index()) {
                Ok(order) if order.config == config => return Ok(order),
                Ok(_) => {}
                Err(detail) => return Err(Error::CorruptOrderCache { path, detail }),
            }
        }
        let order = TrainingOrder::build(dataset.index(), config)?;
        // Best effort: a read-only dataset directory just means no cache.
        if fs::write(&path, order.to_bytes()).is_ok() {
            let _ = write_version(&stamp, dataset.version());
        }
        Ok(order)
    }
}

fn stamp_path(cache: &Path) -> std::path::PathBuf {
    let mut s = cache.as_os_str().to_owned();
    s.push(".version");
    s.into()
}

fn stream_ends(index: &DatasetIndex, doc_order: &[u64]) -> Vec<u64> {
    let mut acc = 0u64;
    doc_order
        .iter()
        .map(|&d| {
            acc += index.document_length(d as usize);
            acc
        })
        .collect()
}

/// Concatenated tokens of a list of spans.
pub fn spans_tokens(dataset: &Dataset, spans: &[SampleSpan]) -> Result<Vec<Token>> {
    let mut out = Vec::with_capacity(spans.iter().map(|s| s.token_count as usize).sum());
    for s in spans {
        let seq = dataset.index().check_sequence(s.sequence_id)?;
        let start = dataset.index().token_start(seq) + s.token_offset;
        dataset.store().read_into(start, s.token_count, &mut out)?;
    }
    Ok(out)
}
