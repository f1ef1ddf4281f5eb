//! JSONL / CSV corpora into datasets.
//!
//! JSONL records are objects with `tokens` (array of ids) or `text`, plus
//! optional `doc_id` and a flat `metadata` object. CSV files carry a header
//! with `doc_id`, `tokens` (space-separated ids), `text`, and `meta_*`
//! columns. Unknown keys and columns are ignored, so exports re-ingest.
//!
//! Every ingested document gets one line in the `<bin>.meta.jsonl` sidecar.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::format::{DatasetBuilder, DatasetIndex, DatasetPaths};
use crate::tokenizer::Tokenizer;
use crate::Token;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestRecord {
    pub doc_id: Option<String>,
    pub tokens: Option<Vec<Token>>,
    pub text: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

impl IngestRecord {
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        IngestRecord {
            tokens: Some(tokens),
            ..Default::default()
        }
    }

    fn check_shape(&self, line: u64) -> Result<()> {
        match (&self.tokens, &self.text) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            (Some(_), Some(_)) => Err(malformed(line, "record has both tokens and text")),
            (None, None) => Err(malformed(line, "record has neither tokens nor text")),
        }
    }

    fn into_tokens(self, tokenizer: Option<&dyn Tokenizer>) -> Result<Vec<Token>> {
        match (self.tokens, self.text) {
            (Some(t), _) => Ok(t),
            (None, Some(text)) => Ok(tokenizer.ok_or(Error::MissingTokenizer)?.encode(&text)),
            (None, None) => Ok(Vec::new()),
        }
    }
}

fn malformed(line: u64, detail: impl Into<String>) -> Error {
    Error::MalformedRecord {
        line,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> RecordFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jsonl" => Ok(RecordFormat::Jsonl),
            "csv" => Ok(RecordFormat::Csv),
            _ => Err(format!("unknown format {s:?}, expected jsonl or csv")),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IdValue {
    Str(String),
    Int(i64),
}

#[derive(Deserialize)]
struct JsonRecord {
    #[serde(default)]
    doc_id: Option<IdValue>,
    #[serde(default)]
    tokens: Option<Vec<Token>>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    metadata: Option<BTreeMap<String, serde_json::Value>>,
}

/// Streams records from a JSONL source, one object per non-blank line.
pub struct JsonlRecords<R> {
    reader: R,
    line: u64,
    buf: String,
}

impl<R: BufRead> JsonlRecords<R> {
    pub fn new(reader: R) -> Self {
        JsonlRecords {
            reader,
            line: 0,
            buf: String::new(),
        }
    }

    fn parse(&self, text: &str) -> Result<IngestRecord> {
        let line = self.line;
        let rec: JsonRecord =
            serde_json::from_str(text).map_err(|e| malformed(line, e.to_string()))?;
        let mut metadata = BTreeMap::new();
        for (k, v) in rec.metadata.unwrap_or_default() {
            let v = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Object(_) | serde_json::Value::Array(_) => {
                    return Err(malformed(line, format!("metadata value for {k:?} is not flat")))
                }
                other => other.to_string(),
            };
            metadata.insert(k, v);
        }
        let record = IngestRecord {
            doc_id: rec.doc_id.map(|d| match d {
                IdValue::Str(s) => s,
                IdValue::Int(i) => i.to_string(),
            }),
            tokens: rec.tokens,
            text: rec.text,
            metadata,
        };
        record.check_shape(line)?;
        Ok(record)
    }
}

impl<R: BufRead> Iterator for JsonlRecords<R> {
    type Item = Result<IngestRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(malformed(self.line, e.to_string()))),
            }
            let text = self.buf.trim();
            if !text.is_empty() {
                return Some(self.parse(text));
            }
        }
    }
}

/// Streams records from a CSV source with a header row.
pub struct CsvRecords<R> {
    reader: csv::Reader<R>,
    columns: Option<CsvColumns>,
    record: csv::StringRecord,
}

struct CsvColumns {
    doc_id: Option<usize>,
    tokens: Option<usize>,
    text: Option<usize>,
    meta: Vec<(usize, String)>,
}

impl<R: Read> CsvRecords<R> {
    pub fn new(reader: R) -> Self {
        CsvRecords {
            reader: csv::ReaderBuilder::new().flexible(false).from_reader(reader),
            columns: None,
            record: csv::StringRecord::new(),
        }
    }

    fn columns(&mut self) -> Result<&CsvColumns> {
        if self.columns.is_none() {
            let headers = self
                .reader
                .headers()
                .map_err(|e| malformed(1, e.to_string()))?
                .clone();
            let find = |name: &str| headers.iter().position(|h| h == name);
            let meta = headers
                .iter()
                .enumerate()
                .filter_map(|(i, h)| h.strip_prefix("meta_").map(|k| (i, k.to_string())))
                .collect();
            self.columns = Some(CsvColumns {
                doc_id: find("doc_id"),
                tokens: find("tokens"),
                text: find("text"),
                meta,
            });
        }
        Ok(self.columns.as_ref().unwrap())
    }
}

/// Parses a space-separated list of decimal token ids.
pub fn parse_token_cell(cell: &str) -> std::result::Result<Vec<Token>, String> {
    cell.split_ascii_whitespace()
        .map(|t| t.parse::<Token>().map_err(|_| format!("bad token id {t:?}")))
        .collect()
}

impl<R: Read> Iterator for CsvRecords<R> {
    type Item = Result<IngestRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Err(e) = self.columns() {
            return Some(Err(e));
        }
        match self.reader.read_record(&mut self.record) {
            Ok(false) => return None,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Some(Err(malformed(line, e.to_string())));
            }
        }
        let cols = self.columns.as_ref().unwrap();
        let rec = &self.record;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: Option<usize>| i.and_then(|i| rec.get(i)).filter(|s| !s.is_empty());
        let tokens = match cell(cols.tokens) {
            Some(c) => match parse_token_cell(c) {
                Ok(t) => Some(t),
                Err(e) => return Some(Err(malformed(line, e))),
            },
            None => None,
        };
        let record = IngestRecord {
            doc_id: cell(cols.doc_id).map(str::to_string),
            tokens,
            text: cell(cols.text).map(str::to_string),
            metadata: cols
                .meta
                .iter()
                .filter_map(|(i, k)| rec.get(*i).map(|v| (k.clone(), v.to_string())))
                .collect(),
        };
        Some(record.check_shape(line).map(|_| record))
    }
}

/// Opens a corpus file as a record stream.
pub fn read_records(
    path: &Path,
    format: RecordFormat,
) -> Result<Box<dyn Iterator<Item = Result<IngestRecord>>>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let reader = BufReader::with_capacity(1 << 16, file);
    Ok(match format {
        RecordFormat::Jsonl => Box::new(JsonlRecords::new(reader)),
        RecordFormat::Csv => Box::new(CsvRecords::new(reader)),
    })
}

/// One line of the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub position: u64,
    pub doc_id: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Builds a dataset with one document per record, in stream order.
pub fn ingest<I>(
    records: I,
    paths: &DatasetPaths,
    dtype: DType,
    tokenizer: Option<&dyn Tokenizer>,
) -> Result<DatasetIndex>
where
    I: IntoIterator<Item = Result<IngestRecord>>,
{
    let mut builder = DatasetBuilder::create(paths, dtype)?;
    let meta_path = paths.metadata();
    let result = (|| {
        let meta_file = File::create(&meta_path).map_err(Error::io(&meta_path))?;
        let mut meta = BufWriter::new(meta_file);
        let mut line = Vec::new();
        for record in records {
            let record = record?;
            let position = builder.documents_written();
            let doc_id = record.doc_id.clone();
            let metadata = record.metadata.clone();
            let tokens = record.into_tokens(tokenizer)?;
            builder.add_document(&tokens)?;
            line.clear();
            serde_json::to_writer(
                &mut line,
                &DocumentMeta {
                    position,
                    doc_id,
                    metadata,
                },
            )
            .expect("metadata serializes");
            line.push(b'\n');
            meta.write_all(&line).map_err(Error::io(&meta_path))?;
        }
        meta.flush().map_err(Error::io(&meta_path))?;
        Ok(())
    })();
    match result {
        Ok(()) => builder.finish(),
        Err(e) => {
            let _ = fs::remove_file(&meta_path);
            Err(e)
        }
    }
}

/// Ingests a corpus file. Without an explicit dtype the file is scanned
/// once for its largest token id and the default dtype is chosen from it.
pub fn ingest_file(
    source: &Path,
    format: RecordFormat,
    paths: &DatasetPaths,
    dtype: Option<DType>,
    tokenizer: Option<&dyn Tokenizer>,
) -> Result<DatasetIndex> {
    let dtype = match dtype {
        Some(d) => d,
        None => {
            let mut max_token: Token = 0;
            for record in read_records(source, format)? {
                let record = record?;
                let tokens = record.into_tokens(tokenizer)?;
                if let Some(&m) = tokens.iter().max() {
                    max_token = max_token.max(m);
                }
            }
            DType::for_max_token(max_token)
        }
    };
    ingest(read_records(source, format)?, paths, dtype, tokenizer)
}

/// Reads the metadata sidecar, if the dataset has one.
pub fn load_metadata(paths: &DatasetPaths) -> Result<Option<Vec<DocumentMeta>>> {
    let path = paths.metadata();
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: DocumentMeta = serde_json::from_str(&line)
            .map_err(|e| malformed(i as u64 + 1, format!("{}: {e}", path.display())))?;
        out.push(meta);
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::tokenizer::ByteTokenizer;

    fn jsonl(text: &str) -> Vec<Result<IngestRecord>> {
        JsonlRecords::new(text.as_bytes()).collect()
    }

    #[test]
    fn jsonl_tokens_and_text() {
        let recs = jsonl("{\"tokens\":[1,2,3]}\n\n{\"text\":\"ab\",\"doc_id\":\"x\",\"metadata\":{\"src\":\"web\",\"n\":3}}\n");
        let recs: Vec<IngestRecord> = recs.into_iter().map(Result::unwrap).collect();
        assert_eq!(recs[0].tokens, Some(vec![1, 2, 3]));
        assert_eq!(recs[1].text.as_deref(), Some("ab"));
        assert_eq!(recs[1].doc_id.as_deref(), Some("x"));
        assert_eq!(recs[1].metadata["n"], "3");
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let recs = jsonl("{\"tokens\":[1]}\n{\"tokens\":[1],\"text\":\"a\"}\n");
        match recs[1].as_ref().unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(*line, 2),
            e => panic!("{e:?}"),
        }
        let recs = jsonl("\n\nnot json\n");
        match recs[0].as_ref().unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(*line, 3),
            e => panic!("{e:?}"),
        }
        let recs = jsonl("{\"doc_id\":\"a\"}\n");
        assert_eq!(recs[0].as_ref().unwrap_err().code(), "MalformedRecord");
    }

    #[test]
    fn csv_columns() {
        let csv = "doc_id,tokens,meta_lang,extra\nd0,\"1 2 3\",en,zzz\nd1,\"7\",fr,\n";
        let recs: Vec<IngestRecord> = CsvRecords::new(csv.as_bytes()).map(Result::unwrap).collect();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].tokens, Some(vec![1, 2, 3]));
        assert_eq!(recs[0].doc_id.as_deref(), Some("d0"));
        assert_eq!(recs[1].metadata["lang"], "fr");
        let bad = "tokens\n\"1 x\"\n";
        let recs: Vec<_> = CsvRecords::new(bad.as_bytes()).collect();
        match recs[0].as_ref().unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(*line, 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn ingest_with_byte_tokenizer_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let recs = jsonl("{\"text\":\"ab\",\"doc_id\":\"first\"}\n{\"tokens\":[300]}\n");
        ingest(recs, &paths, DType::Uint16, Some(&ByteTokenizer)).unwrap();
        let ds = Dataset::open(&paths).unwrap();
        assert_eq!(ds.fetch_document(0).unwrap(), vec![vec![97, 98]]);
        assert_eq!(ds.fetch_document(1).unwrap(), vec![vec![300]]);
        let meta = load_metadata(&paths).unwrap().unwrap();
        assert_eq!(meta.len(), 2);
        assert_eq!(meta[0].doc_id.as_deref(), Some("first"));
        assert_eq!(meta[1].position, 1);
    }

    #[test]
    fn ingest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let err = ingest(jsonl("{\"text\":\"ab\"}\n"), &paths, DType::Uint16, None).unwrap_err();
        assert_eq!(err.code(), "MissingTokenizer");
        let err = ingest(jsonl("{\"tokens\":[256]}\n"), &paths, DType::Uint8, None).unwrap_err();
        assert_eq!(err.code(), "TokenOverflowsDType");
        assert!(!paths.metadata().exists());
        assert!(!paths.lock().exists());
    }

    #[test]
    fn dtype_is_chosen_from_max_token() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("c.jsonl");
        fs::write(&src, "{\"tokens\":[1,70000]}\n").unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        let idx = ingest_file(&src, RecordFormat::Jsonl, &paths, None, None).unwrap();
        assert_eq!(idx.dtype(), DType::Int32);
        fs::write(&src, "{\"tokens\":[1,65535]}\n").unwrap();
        let idx = ingest_file(&src, RecordFormat::Jsonl, &paths, None, None).unwrap();
        assert_eq!(idx.dtype(), DType::Uint16);
    }
}
