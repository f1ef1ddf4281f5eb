use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tokenforge::format::build_dataset;
use tokenforge::{DType, DatasetPaths};

fn tokenforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokenforge"))
        .args(args)
        .env_remove("TOKENFORGE_DATASET")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn example(dir: &Path) -> String {
    let paths = DatasetPaths::new(dir.join("ex"));
    build_dataset(&paths, DType::Uint16, [vec![1, 2, 1, 2, 3]]).unwrap();
    paths.prefix().display().to_string()
}

fn golden(dir: &Path) -> String {
    let paths = DatasetPaths::new(dir.join("golden"));
    build_dataset(
        &paths,
        DType::Uint16,
        [vec![10, 11, 12, 13], vec![20], (30..=36).collect()],
    )
    .unwrap();
    paths.prefix().display().to_string()
}

#[test]
fn validate_clean_and_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let d = golden(dir.path());
    let o = tokenforge(&["validate", "--dataset", &d]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");

    let bin = format!("{d}.bin");
    let bytes = std::fs::read(&bin).unwrap();
    std::fs::write(&bin, &bytes[..bytes.len() - 1]).unwrap();
    let o = tokenforge(&["validate", "--dataset", &d]);
    assert_eq!(o.status.code(), Some(1));
    let line: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(line["check"], "BinSizeMismatch");
    assert!(stderr(&o).contains("DatasetInvalid"));
}

#[test]
fn search_count_prints_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = example(dir.path());
    let o = tokenforge(&["search", "count", "--dataset", &d, "--tokens", "1,2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "{\"count\":2}\n");
    let o = tokenforge(&["search", "next", "--dataset", &d, "--tokens", "1,2"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = example(dir.path());
    let o = tokenforge(&["inspect", "batch", "--dataset", &d, "--step", "999999", "--seq-len", "2", "--batch-size", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"], "StepOutOfRange");
    assert_eq!(stdout(&o), "");

    assert_eq!(tokenforge(&["search", "count", "--tokens", "1"]).status.code(), Some(2));
    assert_eq!(tokenforge(&["search", "count", "--dataset", &d, "--tokens", "1,x"]).status.code(), Some(2));
    assert_eq!(tokenforge(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tokenforge(&["inspect", "sequence", "--dataset", &d]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_tokenforge"))
        .args(["inspect", "sequence", "--id", "0"])
        .env("TOKENFORGE_DATASET", &d)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"tokens\":[1,2,1,2,3]"));
}

#[test]
fn ingest_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("corpus.jsonl");
    std::fs::write(
        &src,
        "{\"doc_id\":\"a\",\"tokens\":[5,6,7],\"metadata\":{\"lang\":\"en\"}}\n{\"text\":\"hi\"}\n",
    )
    .unwrap();
    let one = dir.path().join("one").display().to_string();
    let o = tokenforge(&["--tokenizer", "byte", "ingest", "--input", src.to_str().unwrap(), "--out", &one]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let info: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((info["document_count"].clone(), info["dtype"].clone()), (2.into(), "uint16".into()));

    let o = tokenforge(&["inspect", "document", "--dataset", &one, "--id", "0"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["metadata"]["lang"], "en");
    assert_eq!(doc["source_id"], "a");

    for format in ["jsonl", "csv"] {
        let exported = dir.path().join(format!("export.{format}"));
        let o = tokenforge(&[
            "export", "--dataset", &one, "--all-documents", "--format", format,
            "--out", exported.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let two = dir.path().join(format!("two-{format}")).display().to_string();
        let o = tokenforge(&["ingest", "--input", exported.to_str().unwrap(), "--out", &two]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        for ext in ["bin", "idx"] {
            assert_eq!(
                std::fs::read(format!("{one}.{ext}")).unwrap(),
                std::fs::read(format!("{two}.{ext}")).unwrap(),
                "{format} {ext}"
            );
        }
    }

    let o = tokenforge(&["--tokenizer", "byte", "export", "--dataset", &one, "--sequences", "1", "--fields", "text"]);
    assert_eq!(stdout(&o), "{\"text\":\"hi\"}\n");
    let o = tokenforge(&["export", "--dataset", &one, "--sequences", "1", "--fields", "text"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MissingDetokenizer"));
}

#[test]
fn random_position_overwrites() {
    let dir = tempfile::tempdir().unwrap();
    let paths = DatasetPaths::new(dir.path().join("r"));
    let docs: Vec<Vec<i64>> = (0..50).map(|i| vec![i; 10 + (i % 7) as usize]).collect();
    build_dataset(&paths, DType::Uint16, &docs).unwrap();
    let d = paths.prefix().display().to_string();
    let payload = "40,84,105,115,32,105,115";
    let o = tokenforge(&["edit", "overwrite", "--dataset", &d, "--random-positions", "100", "--seed", "3", "--tokens", payload]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dataset_version"], 100);
    assert_eq!(v["receipts"].as_array().unwrap().len(), 100);
    let o = tokenforge(&["search", "count", "--dataset", &d, "--tokens", payload]);
    let n: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(n["count"].as_u64().unwrap() >= 1);

    let o = tokenforge(&["edit", "overwrite", "--dataset", &d, "--seq-id", "0", "--offset", "20", "--tokens", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("SliceOutOfRange"));
}

#[test]
fn splice_inject_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = golden(dir.path());
    let out = dir.path().join("spliced").display().to_string();
    let o = tokenforge(&["edit", "splice", "--dataset", &d, "--seq-id", "1", "--delete", "1", "--insert", "7,7", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = tokenforge(&["inspect", "sequence", "--dataset", &out, "--id", "1"]);
    assert!(stdout(&o).contains("\"tokens\":[7,7]"));

    let o = tokenforge(&["order", "--dataset", &d, "--seq-len", "3", "--batch-size", "2", "--seed", "5"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((v["num_samples"].clone(), v["num_steps"].clone()), (3.into(), 1.into()));

    let order = ["--seq-len", "3", "--batch-size", "2", "--seed", "5"];
    let batch = |d: &str| -> Value {
        let mut args = vec!["inspect", "batch", "--dataset", d, "--step", "0"];
        args.extend(order);
        serde_json::from_str(&stdout(&tokenforge(&args))).unwrap()
    };
    let target = batch(&d)["sample_ids"][1].as_u64().unwrap().to_string();
    let mut args = vec!["edit", "inject", "--dataset", &d, "--sample-id", &target, "--offset", "1", "--tokens", "99,98"];
    args.extend(order);
    let o = tokenforge(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let after = batch(&d);
    assert_eq!(after["samples"][1]["tokens"][1], 99);
    assert_eq!(after["samples"][1]["tokens"][2], 98);
    let o = tokenforge(&["sample", "--dataset", &d, "--length-range", "2:9"]);
    assert_eq!(stdout(&o), "{\"population\":\"sequences\",\"ids\":[0,2]}\n");
}
