//! Selected sequences, documents, batches or token ranges out to JSONL / CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ingest::RecordFormat;
use crate::order::{spans_tokens, SampleSpan, TrainingOrder};
use crate::tokenizer::Tokenizer;
use crate::Token;

/// Which units to export. `ids: None` means every unit of that kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExportUnits {
    Sequences {
        #[serde(default)]
        ids: Option<Vec<u64>>,
    },
    Documents {
        #[serde(default)]
        ids: Option<Vec<u64>>,
    },
    Batches {
        steps: Vec<u64>,
    },
    /// Half-open `[start, end)` ranges of the flat token stream.
    TokenRange {
        ranges: Vec<[u64; 2]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportField {
    Step,
    SampleId,
    DocId,
    SeqId,
    Tokens,
    Text,
}

impl std::str::FromStr for ExportField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "step" => ExportField::Step,
            "sample_id" => ExportField::SampleId,
            "doc_id" => ExportField::DocId,
            "seq_id" => ExportField::SeqId,
            "tokens" => ExportField::Tokens,
            "text" => ExportField::Text,
            _ => return Err(format!("unknown export field {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSelection {
    #[serde(flatten)]
    pub units: ExportUnits,
    /// Empty means the default set for the unit kind.
    #[serde(default)]
    pub fields: Vec<ExportField>,
    #[serde(default = "default_format")]
    pub format: RecordFormat,
}

fn default_format() -> RecordFormat {
    RecordFormat::Jsonl
}

impl ExportSelection {
    pub fn new(units: ExportUnits) -> Self {
        ExportSelection {
            units,
            fields: Vec::new(),
            format: RecordFormat::Jsonl,
        }
    }

    pub fn with_fields(mut self, fields: impl IntoIterator<Item = ExportField>) -> Self {
        self.fields = fields.into_iter().collect();
        self
    }

    pub fn with_format(mut self, format: RecordFormat) -> Self {
        self.format = format;
        self
    }

    /// Requested fields in canonical column order.
    pub fn resolved_fields(&self) -> Vec<ExportField> {
        use ExportField::*;
        let mut fields = if self.fields.is_empty() {
            match self.units {
                ExportUnits::Sequences { .. } => vec![DocId, SeqId, Tokens],
                ExportUnits::Documents { .. } => vec![DocId, Tokens],
                ExportUnits::Batches { .. } => vec![Step, SampleId, SeqId, Tokens],
                ExportUnits::TokenRange { .. } => vec![SeqId, Tokens],
            }
        } else {
            self.fields.clone()
        };
        fields.sort_unstable();
        fields.dedup();
        fields
    }
}

/// Single id or list of ids, for units that span several sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ids {
    One(u64),
    Many(Vec<u64>),
}

impl Ids {
    fn to_cell(&self) -> String {
        match self {
            Ids::One(i) => i.to_string(),
            Ids::Many(v) => join(v),
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// One exported unit. Absent fields are omitted from JSONL.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub doc_id: Option<Ids>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seq_id: Option<Ids>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tokens: Option<Vec<Token>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
}

struct Unit {
    step: Option<u64>,
    sample_id: Option<u64>,
    doc_id: Ids,
    seq_id: Ids,
    tokens: Vec<Token>,
}

fn dedup_ids(it: impl Iterator<Item = u64>) -> Vec<u64> {
    let mut v: Vec<u64> = it.collect();
    v.dedup();
    v
}

fn span_ids(spans: &[SampleSpan]) -> (Ids, Ids) {
    (
        Ids::Many(dedup_ids(spans.iter().map(|s| s.document_id))),
        Ids::Many(dedup_ids(spans.iter().map(|s| s.sequence_id))),
    )
}

fn check_ids(ids: &[u64], count: u64, what: &str) -> Result<()> {
    match ids.iter().find(|&&i| i >= count) {
        Some(bad) => Err(Error::SelectionOutOfRange(format!(
            "{what} {bad} (dataset has {count})"
        ))),
        None => Ok(()),
    }
}

fn validate(
    dataset: &Dataset,
    selection: &ExportSelection,
    order: Option<&TrainingOrder>,
    detokenizer: Option<&dyn Tokenizer>,
) -> Result<()> {
    if selection.resolved_fields().contains(&ExportField::Text) && detokenizer.is_none() {
        return Err(Error::MissingDetokenizer);
    }
    match &selection.units {
        ExportUnits::Sequences { ids: Some(ids) } => {
            check_ids(ids, dataset.sequence_count(), "sequence")
        }
        ExportUnits::Documents { ids: Some(ids) } => {
            check_ids(ids, dataset.document_count(), "document")
        }
        ExportUnits::Sequences { ids: None } | ExportUnits::Documents { ids: None } => Ok(()),
        ExportUnits::Batches { steps } => {
            let order = order.ok_or_else(|| {
                Error::SelectionInvalid("batch export needs a training order".into())
            })?;
            check_ids(steps, order.num_steps(), "step")
        }
        ExportUnits::TokenRange { ranges } => {
            let total = dataset.total_tokens();
            for &[start, end] in ranges {
                if start > end || end > total {
                    return Err(Error::SelectionOutOfRange(format!(
                        "token range [{start}, {end}) (dataset has {total} tokens)"
                    )));
                }
            }
            Ok(())
        }
    }
}

struct Sink<'a> {
    format: RecordFormat,
    fields: Vec<ExportField>,
    out: &'a mut dyn Write,
    line: Vec<u8>,
}

impl<'a> Sink<'a> {
    fn new(format: RecordFormat, fields: Vec<ExportField>, out: &'a mut dyn Write) -> Self {
        Sink {
            format,
            fields,
            out,
            line: Vec::new(),
        }
    }

    fn io(e: std::io::Error) -> Error {
        Error::IoFailure {
            path: "<export sink>".into(),
            source: e,
        }
    }

    fn csv_row<S: AsRef<[u8]>>(&mut self, cells: &[S]) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::NonNumeric)
            .from_writer(std::mem::take(&mut self.line));
        w.write_record(cells).map_err(|e| Self::io(e.into()))?;
        self.line = w.into_inner().map_err(|e| Self::io(e.into_error()))?;
        self.out.write_all(&self.line).map_err(Self::io)?;
        self.line.clear();
        Ok(())
    }

    fn header(&mut self) -> Result<()> {
        if self.format == RecordFormat::Csv {
            let names: Vec<&str> = self
                .fields
                .iter()
                .map(|f| match f {
                    ExportField::Step => "step",
                    ExportField::SampleId => "sample_id",
                    ExportField::DocId => "doc_id",
                    ExportField::SeqId => "seq_id",
                    ExportField::Tokens => "tokens",
                    ExportField::Text => "text",
                })
                .collect();
            self.csv_row(&names)?;
        }
        Ok(())
    }

    fn write(&mut self, record: &ExportRecord) -> Result<()> {
        match self.format {
            RecordFormat::Jsonl => {
                self.line.clear();
                serde_json::to_writer(&mut self.line, record).expect("record serializes");
                self.line.push(b'\n');
                self.out.write_all(&self.line).map_err(Self::io)
            }
            RecordFormat::Csv => {
                let cells: Vec<String> = self
                    .fields
                    .iter()
                    .map(|f| match f {
                        ExportField::Step => record.step.map(|s| s.to_string()),
                        ExportField::SampleId => record.sample_id.map(|s| s.to_string()),
                        ExportField::DocId => record.doc_id.as_ref().map(Ids::to_cell),
                        ExportField::SeqId => record.seq_id.as_ref().map(Ids::to_cell),
                        ExportField::Tokens => record.tokens.as_deref().map(join),
                        ExportField::Text => record.text.clone(),
                    })
                    .map(Option::unwrap_or_default)
                    .collect();
                self.csv_row(&cells)
            }
        }
    }
}

/// Writes one record per selected unit, in selection order, and returns the
/// number of records written.
pub fn export(
    dataset: &Dataset,
    selection: &ExportSelection,
    order: Option<&TrainingOrder>,
    sink: &mut dyn Write,
    detokenizer: Option<&dyn Tokenizer>,
) -> Result<u64> {
    validate(dataset, selection, order, detokenizer)?;
    let fields = selection.resolved_fields();
    let mut sink = Sink::new(selection.format, fields.clone(), sink);
    sink.header()?;
    let has = |f| fields.contains(&f);
    let mut written = 0u64;
    let mut emit = |unit: Unit| -> Result<()> {
        let text = if has(ExportField::Text) {
            Some(detokenizer.expect("checked above").decode(&unit.tokens))
        } else {
            None
        };
        let record = ExportRecord {
            step: unit.step.filter(|_| has(ExportField::Step)),
            sample_id: unit.sample_id.filter(|_| has(ExportField::SampleId)),
            doc_id: has(ExportField::DocId).then_some(unit.doc_id),
            seq_id: has(ExportField::SeqId).then_some(unit.seq_id),
            tokens: has(ExportField::Tokens).then_some(unit.tokens),
            text,
        };
        sink.write(&record)?;
        written += 1;
        Ok(())
    };
    let index = dataset.index();
    match &selection.units {
        ExportUnits::Sequences { ids } => {
            let all;
            let ids = match ids {
                Some(ids) => ids.as_slice(),
                None => {
                    all = (0..dataset.sequence_count()).collect::<Vec<_>>();
                    &all
                }
            };
            for &seq in ids {
                emit(Unit {
                    step: None,
                    sample_id: None,
                    doc_id: Ids::One(index.document_of_sequence(seq as usize) as u64),
                    seq_id: Ids::One(seq),
                    tokens: dataset.fetch_sequence(seq)?,
                })?;
            }
        }
        ExportUnits::Documents { ids } => {
            let mut each = |doc: u64| -> Result<()> {
                let seqs = index.document_sequences(doc as usize);
                emit(Unit {
                    step: None,
                    sample_id: None,
                    doc_id: Ids::One(doc),
                    seq_id: Ids::Many(seqs.map(|s| s as u64).collect()),
                    tokens: dataset.document_tokens(doc)?,
                })
            };
            match ids {
                Some(ids) => ids.iter().try_for_each(|&d| each(d))?,
                None => (0..dataset.document_count()).try_for_each(&mut each)?,
            }
        }
        ExportUnits::Batches { steps } => {
            let order = order.expect("checked above");
            for &step in steps {
                for &sample in order.resolve_step(step)? {
                    let spans = order.resolve_sample(index, sample)?;
                    let (doc_id, seq_id) = span_ids(&spans);
                    emit(Unit {
                        step: Some(step),
                        sample_id: Some(sample),
                        doc_id,
                        seq_id,
                        tokens: spans_tokens(dataset, &spans)?,
                    })?;
                }
            }
        }
        ExportUnits::TokenRange { ranges } => {
            for &[start, end] in ranges {
                let (docs, seqs) = if start == end {
                    (Vec::new(), Vec::new())
                } else {
                    let first = index.sequence_of_token(start);
                    let last = index.sequence_of_token(end - 1);
                    (
                        dedup_ids((first..=last).map(|s| index.document_of_sequence(s) as u64)),
                        (first as u64..=last as u64).collect(),
                    )
                };
                emit(Unit {
                    step: None,
                    sample_id: None,
                    doc_id: Ids::Many(docs),
                    seq_id: Ids::Many(seqs),
                    tokens: dataset.stream_tokens(start, end - start)?,
                })?;
            }
        }
    }
    Ok(written)
}
