mod common;

use common::*;
use tokenforge::order::{rng_next, shuffle_in_place, spans_tokens};
use tokenforge::{DType, Dataset, DatasetPaths, OrderConfig, TrainingOrder};

#[test]
fn splitmix_reference_outputs() {
    let (s, a) = rng_next(0);
    let (_, b) = rng_next(s);
    assert_eq!((a, b), (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4));
}

#[test]
fn shuffle_golden_permutations() {
    let mut v: Vec<u64> = (0..10).collect();
    shuffle_in_place(&mut v, 42);
    assert_eq!(v, vec![0, 9, 5, 8, 6, 4, 7, 2, 1, 3]);
    let mut v: Vec<u64> = (0..10).collect();
    shuffle_in_place(&mut v, 0);
    assert_eq!(v, vec![6, 3, 2, 9, 8, 1, 4, 7, 0, 5]);
    assert_eq!(v, shuffled(10, 0));
}

#[test]
fn random_orders_match_stream_oracle() {
    let mut rng = Rng::new(11);
    for case in 0..30 {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("o"));
        let docs = rng.range(1, 25) as usize;
        let corpus = random_corpus(&mut rng, docs, 3, 12, 500);
        write_corpus(&paths, DType::Uint16, &corpus);
        let ds = Dataset::open(&paths).unwrap();
        let config = OrderConfig {
            seed: rng.next(),
            seq_len: rng.range(1, 16),
            batch_size: rng.range(1, 5),
            epochs: rng.range(1, 3),
        };
        let order = match TrainingOrder::build(ds.index(), config) {
            Ok(o) => o,
            Err(e) => {
                assert_eq!(e.code(), "DatasetTooSmall", "case {case}");
                continue;
            }
        };
        let stream = ordered_stream(&corpus, config.seed, config.epochs);
        let l = config.seq_len as usize;
        assert_eq!(order.num_samples(), (stream.len() as u64 - 1) / config.seq_len);
        assert_eq!(order.shuffle(), shuffled(order.num_samples(), config.seed).as_slice());
        for i in 0..order.num_samples() as usize {
            let spans = order.resolve_sample(ds.index(), i as u64).unwrap();
            assert_eq!(spans_tokens(&ds, &spans).unwrap(), stream[i * l..i * l + l + 1].to_vec());
        }
    }
}

#[test]
fn identity_shuffle_step_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let paths = DatasetPaths::new(dir.path().join("i"));
    write_corpus(&paths, DType::Uint8, &vec![vec![vec![1; 100]]]);
    let ds = Dataset::open(&paths).unwrap();
    let config = OrderConfig { seed: 3, seq_len: 4, batch_size: 4, epochs: 1 };
    let order = TrainingOrder::build(ds.index(), config).unwrap().with_identity_shuffle();
    assert_eq!(order.resolve_step(3).unwrap(), &[12, 13, 14, 15]);
    let last = order.num_steps() - 1;
    assert_eq!(order.resolve_step(last).unwrap().len(), 4);
    assert_eq!(order.resolve_step(last + 1).unwrap_err().code(), "StepOutOfRange");
}
