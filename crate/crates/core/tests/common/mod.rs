//! Reference implementations used by the integration suites. Everything
//! here is deliberately naive and shares no code with the crate.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use tokenforge::format::DatasetBuilder;
use tokenforge::{DType, DatasetPaths, Token};

/// Written byte by byte from the layout table: lengths [4,1,7], uint16,
/// one sequence per document.
pub const GOLDEN_IDX_HEX: &str = "4d4d4944494458000001000000000000000803000000000000000400000000000000040000000100000007000000000000000000000008000000000000000a000000000000000000000000000000010000000000000002000000000000000300000000000000";

pub fn golden_idx() -> Vec<u8> {
    (0..GOLDEN_IDX_HEX.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&GOLDEN_IDX_HEX[i..i + 2], 16).unwrap())
        .collect()
}

pub fn golden_docs() -> Vec<Vec<Token>> {
    vec![vec![10, 11, 12, 13], vec![20], vec![30, 31, 32, 33, 34, 35, 36]]
}

/// xorshift64*, independent of the crate's generator.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.wrapping_mul(0x2545F4914F6CDD1D) | 1)
    }
    pub fn next(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545F4914F6CDD1D)
    }
    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
    pub fn range(&mut self, lo: u64, hi_inclusive: u64) -> u64 {
        lo + self.below(hi_inclusive - lo + 1)
    }
}

/// Documents as lists of sequences.
pub type Corpus = Vec<Vec<Vec<Token>>>;

pub fn random_corpus(rng: &mut Rng, docs: usize, max_seqs: u64, max_len: u64, vocab: u64) -> Corpus {
    (0..docs)
        .map(|_| {
            (0..rng.range(1, max_seqs))
                .map(|_| (0..rng.range(1, max_len)).map(|_| rng.below(vocab) as Token).collect())
                .collect()
        })
        .collect()
}

pub fn write_corpus(paths: &DatasetPaths, dtype: DType, corpus: &Corpus) {
    let mut b = DatasetBuilder::create(paths, dtype).unwrap();
    for doc in corpus {
        for seq in doc {
            b.push_sequence(seq).unwrap();
        }
        b.end_document();
    }
    b.finish().unwrap();
}

pub fn flat(corpus: &Corpus) -> Vec<Token> {
    corpus.iter().flatten().flatten().copied().collect()
}

pub fn sequences(corpus: &Corpus) -> Vec<Vec<Token>> {
    corpus.iter().flatten().cloned().collect()
}

pub fn naive_positions(stream: &[Token], q: &[Token]) -> Vec<u64> {
    if q.is_empty() || q.len() > stream.len() {
        return Vec::new();
    }
    (0..=stream.len() - q.len())
        .filter(|&i| &stream[i..i + q.len()] == q)
        .map(|i| i as u64)
        .collect()
}

pub fn naive_next(stream: &[Token], q: &[Token]) -> BTreeMap<Token, u64> {
    let mut out = BTreeMap::new();
    for p in naive_positions(stream, q) {
        if let Some(&t) = stream.get(p as usize + q.len()) {
            *out.entry(t).or_insert(0) += 1;
        }
    }
    out
}

pub fn naive_suffix_array(stream: &[Token]) -> Vec<u64> {
    let mut sa: Vec<usize> = (0..stream.len()).collect();
    sa.sort_by(|&a, &b| stream[a..].cmp(&stream[b..]));
    sa.into_iter().map(|i| i as u64).collect()
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn shuffled(n: u64, seed: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..n).collect();
    let mut st = seed;
    for i in (1..v.len()).rev() {
        let j = (splitmix(&mut st) % (i as u64 + 1)) as usize;
        v.swap(i, j);
    }
    v
}

/// The ordered training stream: each epoch's documents shuffled with
/// `seed + epoch`, then concatenated.
pub fn ordered_stream(corpus: &Corpus, seed: u64, epochs: u64) -> Vec<Token> {
    let mut out = Vec::new();
    for e in 0..epochs {
        for d in shuffled(corpus.len() as u64, seed.wrapping_add(e)) {
            out.extend(corpus[d as usize].iter().flatten());
        }
    }
    out
}

pub fn splice(corpus: &Corpus, seq_id: usize, offset: usize, delete: usize, insert: &[Token]) -> Corpus {
    let mut out = corpus.clone();
    let mut k = 0;
    for doc in &mut out {
        for seq in doc.iter_mut() {
            if k == seq_id {
                seq.splice(offset..offset + delete, insert.iter().copied());
            }
            k += 1;
        }
    }
    out
}

pub fn file_bytes(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}
