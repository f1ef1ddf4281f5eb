//! Policy-driven subsets of sequences or training samples.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::order::{SplitMix64, TrainingOrder};
use crate::Token;

pub type PredicateFn = dyn Fn(u64, &[Token]) -> bool + Send + Sync;

/// Host-side filter over `(id, tokens)`.
#[derive(Clone)]
pub struct Predicate(pub Arc<PredicateFn>);

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Predicate(..)")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplePolicy {
    RandomK {
        k: u64,
        seed: u64,
    },
    /// Inclusive token-length bounds.
    LengthRange {
        min: u64,
        max: u64,
    },
    ContainsNgram {
        tokens: Vec<Token>,
    },
    Stride {
        #[serde(default)]
        start: u64,
        step: u64,
    },
    #[serde(skip)]
    CustomPredicate(Predicate),
}

impl SamplePolicy {
    pub fn custom(f: impl Fn(u64, &[Token]) -> bool + Send + Sync + 'static) -> Self {
        SamplePolicy::CustomPredicate(Predicate(Arc::new(f)))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplePolicy::LengthRange { min, max } if min > max => Err(Error::PolicyInvalid(
                format!("length_range min {min} exceeds max {max}"),
            )),
            SamplePolicy::ContainsNgram { tokens } if tokens.is_empty() => Err(
                Error::PolicyInvalid("contains_ngram needs at least one token".into()),
            ),
            SamplePolicy::Stride { step: 0, .. } => {
                Err(Error::PolicyInvalid("stride step must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether a unit with these tokens satisfies the policy. Random kinds
    /// accept everything.
    pub fn matches(&self, id: u64, tokens: &[Token]) -> bool {
        match self {
            SamplePolicy::RandomK { .. } => true,
            SamplePolicy::LengthRange { min, max } => (*min..=*max).contains(&(tokens.len() as u64)),
            SamplePolicy::ContainsNgram { tokens: q } => {
                !q.is_empty() && tokens.windows(q.len()).any(|w| w == q.as_slice())
            }
            SamplePolicy::Stride { start, step } => *step > 0 && id >= *start && (id - start).is_multiple_of(*step),
            SamplePolicy::CustomPredicate(p) => (p.0)(id, tokens),
        }
    }
}

enum Population<'a> {
    Sequences(&'a Dataset),
    Samples(&'a Dataset, &'a TrainingOrder),
}

impl Population<'_> {
    fn len(&self) -> u64 {
        match self {
            Population::Sequences(ds) => ds.sequence_count(),
            Population::Samples(_, order) => order.num_samples(),
        }
    }

    fn tokens(&self, id: u64) -> Result<Vec<Token>> {
        match self {
            Population::Sequences(ds) => ds.fetch_sequence(id),
            Population::Samples(ds, order) => order.sample_tokens(ds, id),
        }
    }

    fn length(&self, id: u64) -> Result<u64> {
        match self {
            Population::Sequences(ds) => ds.sequence_length(id),
            Population::Samples(_, order) => Ok(order.config().sample_len()),
        }
    }
}

/// `k` distinct draws from `[0, n)` by a partial Fisher–Yates over a sparse
/// swap table.
pub fn draw_without_replacement(n: u64, k: u64, seed: u64) -> Vec<u64> {
    let k = k.min(n);
    let mut rng = SplitMix64::new(seed);
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(k as usize);
    for i in 0..k {
        let j = i + rng.below(n - i);
        let at_j = swapped.get(&j).copied().unwrap_or(j);
        let at_i = swapped.get(&i).copied().unwrap_or(i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out
}

/// Ids of sequences (or of training samples, when `order` is given) that
/// satisfy `policy`, at most `limit` of them.
pub fn sample_dataset(
    dataset: &Dataset,
    order: Option<&TrainingOrder>,
    policy: &SamplePolicy,
    limit: Option<u64>,
) -> Result<Vec<u64>> {
    policy.validate()?;
    let population = match order {
        Some(order) => Population::Samples(dataset, order),
        None => Population::Sequences(dataset),
    };
    let n = population.len();
    let limit = limit.unwrap_or(u64::MAX);
    match policy {
        SamplePolicy::RandomK { k, seed } => {
            Ok(draw_without_replacement(n, (*k).min(limit), *seed))
        }
        SamplePolicy::Stride { start, step } => Ok((*start..n)
            .step_by(usize::try_from(*step).unwrap_or(usize::MAX))
            .take(usize::try_from(limit).unwrap_or(usize::MAX))
            .collect()),
        SamplePolicy::LengthRange { min, max } => {
            let mut out = Vec::new();
            for id in 0..n {
                if out.len() as u64 >= limit {
                    break;
                }
                if (*min..=*max).contains(&population.length(id)?) {
                    out.push(id);
                }
            }
            Ok(out)
        }
        SamplePolicy::ContainsNgram { .. } | SamplePolicy::CustomPredicate(_) => {
            let mut out = Vec::new();
            for id in 0..n {
                if out.len() as u64 >= limit {
                    break;
                }
                if policy.matches(id, &population.tokens(id)?) {
                    out.push(id);
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtype::DType;
    use crate::format::{build_dataset, DatasetPaths};
    use crate::order::OrderConfig;
    use proptest::prelude::*;

    fn fixture(dir: &std::path::Path, docs: &[Vec<Token>]) -> Dataset {
        let paths = DatasetPaths::new(dir.join("d"));
        build_dataset(&paths, DType::Uint16, docs).unwrap();
        Dataset::open(&paths).unwrap()
    }

    #[test]
    fn policy_validation() {
        for bad in [
            SamplePolicy::LengthRange { min: 3, max: 2 },
            SamplePolicy::ContainsNgram { tokens: vec![] },
            SamplePolicy::Stride { start: 0, step: 0 },
        ] {
            assert_eq!(bad.validate().unwrap_err().code(), "PolicyInvalid");
        }
        let p: SamplePolicy = serde_json::from_str(r#"{"kind":"random_k","k":4,"seed":1}"#).unwrap();
        assert!(matches!(p, SamplePolicy::RandomK { k: 4, seed: 1 }));
        assert!(serde_json::from_str::<SamplePolicy>(r#"{"kind":"custom_predicate"}"#).is_err());
    }

    #[test]
    fn random_k_is_deterministic_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let docs: Vec<Vec<Token>> = (0..20).map(|i| vec![i; (i % 3 + 1) as usize]).collect();
        let ds = fixture(dir.path(), &docs);
        let p = SamplePolicy::RandomK { k: 7, seed: 5 };
        let a = sample_dataset(&ds, None, &p, None).unwrap();
        assert_eq!(a, sample_dataset(&ds, None, &p, None).unwrap());
        assert_eq!(a.len(), 7);
        assert_eq!(sample_dataset(&ds, None, &p, Some(3)).unwrap(), a[..3]);
        let mut all = sample_dataset(&ds, None, &SamplePolicy::RandomK { k: 99, seed: 5 }, None).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn ngram_and_length_filters() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path(), &[vec![1, 2], vec![1], vec![2, 1, 2, 3], vec![3, 1, 2]]);
        let p = SamplePolicy::ContainsNgram { tokens: vec![1, 2] };
        assert_eq!(sample_dataset(&ds, None, &p, None).unwrap(), vec![0, 2, 3]);
        let p = SamplePolicy::LengthRange { min: 2, max: 3 };
        assert_eq!(sample_dataset(&ds, None, &p, None).unwrap(), vec![0, 3]);
        let p = SamplePolicy::Stride { start: 1, step: 2 };
        assert_eq!(sample_dataset(&ds, None, &p, Some(1)).unwrap(), vec![1]);
        let p = SamplePolicy::custom(|_, t| t.contains(&3));
        assert_eq!(sample_dataset(&ds, None, &p, None).unwrap(), vec![2, 3]);
    }

    #[test]
    fn sample_population_under_order() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path(), &[vec![1, 2, 3, 4], vec![5, 6, 7]]);
        let cfg = OrderConfig {
            seed: 1,
            seq_len: 2,
            batch_size: 1,
            epochs: 1,
        };
        let order = TrainingOrder::build(ds.index(), cfg).unwrap();
        let p = SamplePolicy::ContainsNgram { tokens: vec![5] };
        let ids = sample_dataset(&ds, Some(&order), &p, None).unwrap();
        assert!(!ids.is_empty());
        for id in 0..order.num_samples() {
            let has = order.sample_tokens(&ds, id).unwrap().contains(&5);
            assert_eq!(has, ids.contains(&id));
        }
    }

    proptest! {
        #[test]
        fn draws_are_distinct_and_in_range(n in 0u64..200, k in 0u64..250, seed: u64) {
            let d = draw_without_replacement(n, k, seed);
            prop_assert_eq!(d.len() as u64, k.min(n));
            let mut s = d.clone();
            s.sort_unstable();
            s.dedup();
            prop_assert_eq!(s.len(), d.len());
            prop_assert!(d.iter().all(|&x| x < n));
        }
    }
}
