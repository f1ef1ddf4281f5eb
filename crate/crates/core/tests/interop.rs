mod common;

use std::io::Cursor;

use common::*;
use tokenforge::export::{export, ExportSelection, ExportUnits};
use tokenforge::ingest::{ingest, CsvRecords, JsonlRecords, RecordFormat};
use tokenforge::{DType, Dataset, DatasetPaths, OrderConfig, TrainingOrder};

fn export_documents(ds: &Dataset, format: RecordFormat) -> Vec<u8> {
    let sel = ExportSelection::new(ExportUnits::Documents { ids: None }).with_format(format);
    let mut out = Vec::new();
    export(ds, &sel, None, &mut out, None).unwrap();
    out
}

#[test]
fn csv_token_cells_are_space_separated() {
    let dir = tempfile::tempdir().unwrap();
    let paths = DatasetPaths::new(dir.path().join("c"));
    let csv = "doc_id,tokens\nx,1 2 3\n";
    ingest(CsvRecords::new(Cursor::new(csv)), &paths, DType::Uint8, None).unwrap();
    assert_eq!(Dataset::open(&paths).unwrap().fetch_document(0).unwrap(), vec![vec![1, 2, 3]]);
}

#[test]
fn golden_export_reingests_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = DatasetPaths::new(dir.path().join("a"));
    tokenforge::format::build_dataset(&a, DType::Uint16, golden_docs()).unwrap();
    let ds = Dataset::open(&a).unwrap();
    for (i, format) in [RecordFormat::Jsonl, RecordFormat::Csv].into_iter().enumerate() {
        let text = export_documents(&ds, format);
        let b = DatasetPaths::new(dir.path().join(format!("b{i}")));
        match format {
            RecordFormat::Jsonl => ingest(JsonlRecords::new(Cursor::new(text)), &b, DType::Uint16, None),
            RecordFormat::Csv => ingest(CsvRecords::new(Cursor::new(text)), &b, DType::Uint16, None),
        }
        .unwrap();
        assert_eq!(file_bytes(a.bin()), file_bytes(b.bin()));
        assert_eq!(file_bytes(b.idx()), golden_idx());
    }
}

#[test]
fn batch_export_equals_resolver() {
    let dir = tempfile::tempdir().unwrap();
    let paths = DatasetPaths::new(dir.path().join("b"));
    let mut rng = Rng::new(21);
    write_corpus(&paths, DType::Uint16, &random_corpus(&mut rng, 60, 2, 30, 900));
    let ds = Dataset::open(&paths).unwrap();
    let config = OrderConfig { seed: 5, seq_len: 16, batch_size: 4, epochs: 1 };
    let order = TrainingOrder::build(ds.index(), config).unwrap();
    let sel = ExportSelection::new(ExportUnits::Batches { steps: vec![3] });
    let mut out = Vec::new();
    assert_eq!(export(&ds, &sel, Some(&order), &mut out, None).unwrap(), 4);
    let records: Vec<serde_json::Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids = order.resolve_step(3).unwrap();
    for (r, &id) in records.iter().zip(ids) {
        assert_eq!(r["step"], 3);
        assert_eq!(r["sample_id"], id);
        let spans = order.resolve_sample(ds.index(), id).unwrap();
        let seqs: Vec<u64> = spans.iter().map(|s| s.sequence_id).collect();
        let got: Vec<u64> = match &r["seq_id"] {
            serde_json::Value::Array(a) => a.iter().map(|v| v.as_u64().unwrap()).collect(),
            v => vec![v.as_u64().unwrap()],
        };
        let mut dedup = seqs.clone();
        dedup.dedup();
        assert_eq!(got, dedup);
        let tokens: Vec<i64> = serde_json::from_value(r["tokens"].clone()).unwrap();
        assert_eq!(tokens, order.sample_tokens(&ds, id).unwrap());
    }
}
