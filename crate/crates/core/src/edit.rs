//! Token-level edits: in-place overwrite, streaming splice into a new
//! dataset, and overwrite targeted at training-sample positions.
//!
//! Every edit bumps the dataset version and appends its receipt to the
//! `.edits.jsonl` journal.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::format::version::write_version;
use crate::format::{DatasetBuilder, DatasetPaths, WriterLock};
use crate::order::TrainingOrder;
use crate::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Overwrite,
    Splice,
    Inject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTarget {
    pub seq_id: u64,
    /// Offset within the sequence.
    pub offset: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset_in_sample: Option<u64>,
}

impl EditTarget {
    pub fn sequence(seq_id: u64, offset: u64) -> Self {
        EditTarget {
            seq_id,
            offset,
            sample_id: None,
            offset_in_sample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditReceipt {
    pub edit_kind: EditKind,
    pub target: EditTarget,
    pub tokens_removed: u64,
    pub tokens_inserted: u64,
    pub dataset_version_before: u64,
    pub dataset_version_after: u64,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn append_journal(paths: &DatasetPaths, receipt: &EditReceipt) -> Result<()> {
    let path = paths.journal();
    let mut line = serde_json::to_vec(receipt).expect("receipt serializes");
    line.push(b'\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .and_then(|mut f| f.write_all(&line))
        .map_err(Error::io(&path))
}

/// Reads every receipt in a dataset's journal, oldest first.
pub fn read_journal(paths: &DatasetPaths) -> Result<Vec<EditReceipt>> {
    let path = paths.journal();
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(&path)(e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                line: i as u64 + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Exclusive in-place writer over an open dataset.
///
/// Holds the writer lock for its lifetime. Writes land in the page cache the
/// dataset's map reads from, so reads through [`dataset`](Self::dataset)
/// observe them immediately.
pub struct DatasetWriter<'a> {
    dataset: &'a mut Dataset,
    bin: File,
    lock: WriterLock,
    scratch: Vec<u8>,
}

impl Dataset {
    pub fn writer(&mut self) -> Result<DatasetWriter<'_>> {
        DatasetWriter::new(self)
    }
}

impl<'a> DatasetWriter<'a> {
    pub fn new(dataset: &'a mut Dataset) -> Result<Self> {
        let lock = WriterLock::acquire(dataset.paths().lock())?;
        let bin_path = dataset.paths().bin();
        let bin = OpenOptions::new()
            .write(true)
            .open(&bin_path)
            .map_err(Error::io(&bin_path))?;
        dataset.refresh_version()?;
        Ok(DatasetWriter {
            dataset,
            bin,
            lock,
            scratch: Vec::new(),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn lock(&self) -> &WriterLock {
        &self.lock
    }

    fn bump(&mut self, receipt_for: impl FnOnce(u64, u64) -> EditReceipt) -> Result<EditReceipt> {
        let before = self.dataset.version();
        let after = before + 1;
        write_version(&self.dataset.paths().version(), after)?;
        self.dataset.set_version(after);
        let receipt = receipt_for(before, after);
        append_journal(self.dataset.paths(), &receipt)?;
        Ok(receipt)
    }

    fn write_tokens(&mut self, seq_id: u64, offset: u64, tokens: &[Token]) -> Result<()> {
        self.lock.ensure_held()?;
        let index = self.dataset.index();
        let len = index.length(index.check_sequence(seq_id)?);
        if offset.checked_add(tokens.len() as u64).is_none_or(|end| end > len) {
            return Err(Error::SliceOutOfRange {
                seq_id,
                offset,
                count: tokens.len() as u64,
                length: len,
            });
        }
        self.scratch.clear();
        let dtype = self.dataset.dtype();
        dtype.encode_all(tokens, &mut self.scratch)?;
        if tokens.is_empty() {
            return Ok(());
        }
        let at = (index.token_start(seq_id as usize) + offset) * dtype.width() as u64;
        let bin_path = self.dataset.paths().bin();
        self.bin
            .write_all_at(&self.scratch, at)
            .map_err(Error::io(bin_path))
    }

    /// Replaces `tokens.len()` tokens of one sequence starting at `offset`.
    pub fn overwrite_sequence(
        &mut self,
        seq_id: u64,
        offset: u64,
        tokens: &[Token],
    ) -> Result<EditReceipt> {
        self.write_tokens(seq_id, offset, tokens)?;
        let n = tokens.len() as u64;
        self.bump(|before, after| EditReceipt {
            edit_kind: EditKind::Overwrite,
            target: EditTarget::sequence(seq_id, offset),
            tokens_removed: n,
            tokens_inserted: n,
            dataset_version_before: before,
            dataset_version_after: after,
            timestamp: now(),
        })
    }

    /// Overwrites training sample `sample_id` of `order` from
    /// `offset_in_sample`, one receipt per sequence span touched.
    pub fn inject_into_sample(
        &mut self,
        order: &TrainingOrder,
        sample_id: u64,
        offset_in_sample: u64,
        tokens: &[Token],
    ) -> Result<Vec<EditReceipt>> {
        let spans = order.resolve_sample(self.dataset.index(), sample_id)?;
        let sample_len = order.config().sample_len();
        if offset_in_sample
            .checked_add(tokens.len() as u64)
            .is_none_or(|end| end > sample_len)
        {
            return Err(Error::InjectionOutOfRange {
                offset: offset_in_sample,
                count: tokens.len() as u64,
                sample_len,
            });
        }
        self.dataset.dtype().encode_all(tokens, &mut Vec::new())?;
        let inject = |target: EditTarget, n: u64| {
            move |before, after| EditReceipt {
                edit_kind: EditKind::Inject,
                target,
                tokens_removed: n,
                tokens_inserted: n,
                dataset_version_before: before,
                dataset_version_after: after,
                timestamp: now(),
            }
        };

        if tokens.is_empty() {
            // Still a recorded edit, pinned to wherever the offset falls.
            let mut pos = 0;
            let mut at = None;
            for s in &spans {
                if offset_in_sample < pos + s.token_count {
                    at = Some((s.sequence_id, s.token_offset + offset_in_sample - pos));
                    break;
                }
                pos += s.token_count;
            }
            let last = spans.last().expect("samples have at least one span");
            let (seq_id, offset) =
                at.unwrap_or((last.sequence_id, last.token_offset + last.token_count));
            self.lock.ensure_held()?;
            let t = EditTarget {
                seq_id,
                offset,
                sample_id: Some(sample_id),
                offset_in_sample: Some(offset_in_sample),
            };
            return Ok(vec![self.bump(inject(t, 0))?]);
        }

        let end = offset_in_sample + tokens.len() as u64;
        let mut receipts = Vec::new();
        let mut pos = 0;
        for s in &spans {
            let (lo, hi) = (pos.max(offset_in_sample), (pos + s.token_count).min(end));
            if lo < hi {
                let piece = &tokens[(lo - offset_in_sample) as usize..(hi - offset_in_sample) as usize];
                let seq_offset = s.token_offset + (lo - pos);
                self.write_tokens(s.sequence_id, seq_offset, piece)?;
                let t = EditTarget {
                    seq_id: s.sequence_id,
                    offset: seq_offset,
                    sample_id: Some(sample_id),
                    offset_in_sample: Some(lo),
                };
                receipts.push(self.bump(inject(t, piece.len() as u64))?);
            }
            pos += s.token_count;
        }
        Ok(receipts)
    }
}

/// Convenience wrapper taking the lock for a single overwrite.
pub fn overwrite_sequence(
    dataset: &mut Dataset,
    seq_id: u64,
    offset: u64,
    tokens: &[Token],
) -> Result<EditReceipt> {
    dataset.writer()?.overwrite_sequence(seq_id, offset, tokens)
}

pub fn inject_into_sample(
    dataset: &mut Dataset,
    order: &TrainingOrder,
    sample_id: u64,
    offset_in_sample: u64,
    tokens: &[Token],
) -> Result<Vec<EditReceipt>> {
    dataset
        .writer()?
        .inject_into_sample(order, sample_id, offset_in_sample, tokens)
}

/// Writes a copy of `dataset` to `out` with `delete_count` tokens of one
/// sequence removed at `offset` and `insert` put in their place.
///
/// The source files are not touched. The copy carries the source's journal
/// and metadata sidecar, plus this edit's receipt, at version source + 1.
pub fn splice_sequence(
    dataset: &Dataset,
    seq_id: u64,
    offset: u64,
    delete_count: u64,
    insert: &[Token],
    out: &DatasetPaths,
) -> Result<(DatasetPaths, EditReceipt)> {
    let index = dataset.index();
    let seq = index.check_sequence(seq_id)?;
    let len = index.length(seq);
    if offset.checked_add(delete_count).is_none_or(|end| end > len) {
        return Err(Error::SliceOutOfRange {
            seq_id,
            offset,
            count: delete_count,
            length: len,
        });
    }
    if len - delete_count + insert.len() as u64 == 0 {
        return Err(Error::ResultEmptySequence { seq_id });
    }
    let dtype = dataset.dtype();
    let mut inserted = Vec::new();
    dtype.encode_all(insert, &mut inserted)?;
    if out.bin() == dataset.paths().bin() {
        return Err(Error::InvalidArgument(
            "splice output must differ from the source dataset".into(),
        ));
    }

    let before = dataset.version();
    let after = before + 1;
    let mut builder = DatasetBuilder::create(out, dtype)?.with_version(after);
    let width = dtype.width();
    let bytes = dataset.store().bytes();
    let mut spliced = Vec::new();
    for doc in 0..index.document_count() as usize {
        for s in index.document_sequences(doc) {
            let start = index.token_start(s) as usize * width;
            let payload = &bytes[start..start + index.length(s) as usize * width];
            if s == seq {
                let cut = offset as usize * width;
                let resume = cut + delete_count as usize * width;
                spliced.clear();
                spliced.extend_from_slice(&payload[..cut]);
                spliced.extend_from_slice(&inserted);
                spliced.extend_from_slice(&payload[resume..]);
                builder.push_encoded(&spliced)?;
            } else {
                builder.push_encoded(payload)?;
            }
        }
        builder.end_document();
    }
    builder.finish()?;

    let src = dataset.paths();
    for (from, to) in [(src.metadata(), out.metadata()), (src.journal(), out.journal())] {
        if from.exists() {
            fs::copy(&from, &to).map_err(Error::io(&to))?;
        } else if to.exists() {
            fs::remove_file(&to).map_err(Error::io(&to))?;
        }
    }
    for stale in [out.suffix_array()] {
        if stale.exists() {
            fs::remove_file(&stale).map_err(Error::io(&stale))?;
        }
    }
    let receipt = EditReceipt {
        edit_kind: EditKind::Splice,
        target: EditTarget::sequence(seq_id, offset),
        tokens_removed: delete_count,
        tokens_inserted: insert.len() as u64,
        dataset_version_before: before,
        dataset_version_after: after,
        timestamp: now(),
    };
    append_journal(out, &receipt)?;
    Ok((out.clone(), receipt))
}
