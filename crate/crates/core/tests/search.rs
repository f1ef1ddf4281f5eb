mod common;

use common::*;
use tokenforge::search::{PositionsOptions, SuffixArrayIndex};
use tokenforge::{DType, Dataset, DatasetPaths};

fn open(dir: &std::path::Path, corpus: &Corpus) -> Dataset {
    let paths = DatasetPaths::new(dir.join("s"));
    write_corpus(&paths, DType::Uint16, corpus);
    Dataset::open(&paths).unwrap()
}

#[test]
fn example_stream() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), &vec![vec![vec![1, 2, 1, 2, 3]]]);
    let sa = SuffixArrayIndex::build(&ds);
    assert_eq!(sa.count(&ds, &[1, 2]).unwrap(), 2);
    assert_eq!(sa.count(&ds, &[3, 1]).unwrap(), 0);
    let offsets: Vec<u64> = sa
        .positions(&ds, &[1, 2], 10, PositionsOptions::default())
        .unwrap()
        .iter()
        .map(|o| o.offset)
        .collect();
    assert_eq!(offsets, vec![0, 2]);
    let next = sa.next_token_distribution(&ds, &[1, 2]).unwrap();
    assert_eq!(next.continuations, [(1, 1), (3, 1)].into());
    assert_eq!(next.total, 2);
}

#[test]
fn suffix_arrays_match_naive_sort() {
    let mut rng = Rng::new(5);
    for _ in 0..15 {
        let dir = tempfile::tempdir().unwrap();
        let vocab = rng.range(1, 6);
        let docs = rng.range(1, 40) as usize;
        let corpus = random_corpus(&mut rng, docs, 3, 60, vocab);
        let ds = open(dir.path(), &corpus);
        let sa = SuffixArrayIndex::build(&ds);
        assert_eq!(sa.suffix_positions(), naive_suffix_array(&flat(&corpus)));
    }
}

#[test]
fn resolve_maps_offsets_to_documents() {
    let dir = tempfile::tempdir().unwrap();
    let ds = open(dir.path(), &golden_docs().into_iter().map(|d| vec![d]).collect());
    let sa = SuffixArrayIndex::build(&ds);
    let opts = PositionsOptions { resolve: true, within_document: false };
    let hits = sa.positions(&ds, &[33], 10, opts).unwrap();
    assert_eq!((hits[0].offset, hits[0].document_id, hits[0].offset_in_document), (8, Some(2), Some(3)));
    let hits = sa.positions(&ds, &[20], 10, opts).unwrap();
    assert_eq!((hits[0].document_id, hits[0].offset_in_document), (Some(1), Some(0)));
}

#[test]
fn single_token_totals_and_contains_agree() {
    let mut rng = Rng::new(9);
    let dir = tempfile::tempdir().unwrap();
    let corpus = random_corpus(&mut rng, 30, 2, 40, 12);
    let ds = open(dir.path(), &corpus);
    let stream = flat(&corpus);
    let sa = SuffixArrayIndex::build(&ds);
    let total: u64 = (0..12).map(|t| sa.next_token_distribution(&ds, &[t]).unwrap().total).sum();
    assert_eq!(total, stream.len() as u64 - 1);
    for _ in 0..1000 {
        let q: Vec<i64> = (0..rng.range(1, 4)).map(|_| rng.below(13) as i64).collect();
        assert_eq!(sa.contains(&ds, &q).unwrap(), sa.count(&ds, &q).unwrap() > 0);
        assert_eq!(sa.contains(&ds, &q).unwrap(), !naive_positions(&stream, &q).is_empty());
    }
}

#[test]
fn unanimous_continuation() {
    let dir = tempfile::tempdir().unwrap();
    let stream: Vec<i64> = (0..90).map(|i| i % 3 + 1).collect();
    let ds = open(dir.path(), &vec![vec![stream]]);
    let sa = SuffixArrayIndex::build(&ds);
    for seed in 0..20 {
        let out = sa.sample_continuation(&ds, &[1, 2], 1, 3, seed).unwrap();
        assert_eq!(out, vec![3]);
    }
}
