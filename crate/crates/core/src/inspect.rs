//! Read-only views of single sequences, documents and training batches.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::ingest::DocumentMeta;
use crate::order::{spans_tokens, SampleSpan, TrainingOrder};
use crate::tokenizer::Tokenizer;
use crate::Token;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceView {
    pub seq_id: u64,
    pub doc_id: u64,
    pub length: u64,
    pub tokens: Vec<Token>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc_id: u64,
    pub sequence_ids: Vec<u64>,
    pub length: u64,
    pub tokens: Vec<Token>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    /// Source id recorded at ingest, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_id: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleView {
    pub sample_id: u64,
    pub tokens: Vec<Token>,
    pub spans: Vec<SampleSpan>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchView {
    pub step: u64,
    pub sample_ids: Vec<u64>,
    pub samples: Vec<SampleView>,
}

pub fn get_sequence_view(
    dataset: &Dataset,
    seq_id: u64,
    detokenizer: Option<&dyn Tokenizer>,
) -> Result<SequenceView> {
    let tokens = dataset.fetch_sequence(seq_id)?;
    Ok(SequenceView {
        seq_id,
        doc_id: dataset.index().document_of_sequence(seq_id as usize) as u64,
        length: tokens.len() as u64,
        text: detokenizer.map(|t| t.decode(&tokens)),
        tokens,
    })
}

/// `metadata` is the ingest sidecar, when the dataset has one.
pub fn get_document_view(
    dataset: &Dataset,
    doc_id: u64,
    detokenizer: Option<&dyn Tokenizer>,
    metadata: Option<&[DocumentMeta]>,
) -> Result<DocumentView> {
    let tokens = dataset.document_tokens(doc_id)?;
    let meta = metadata.and_then(|m| m.get(doc_id as usize));
    Ok(DocumentView {
        doc_id,
        sequence_ids: dataset
            .index()
            .document_sequences(doc_id as usize)
            .map(|s| s as u64)
            .collect(),
        length: tokens.len() as u64,
        text: detokenizer.map(|t| t.decode(&tokens)),
        source_id: meta.and_then(|m| m.doc_id.clone()),
        metadata: meta.map(|m| m.metadata.clone()).unwrap_or_default(),
        tokens,
    })
}

pub fn get_batch_view(
    dataset: &Dataset,
    order: &TrainingOrder,
    step: u64,
    detokenizer: Option<&dyn Tokenizer>,
) -> Result<BatchView> {
    let sample_ids = order.resolve_step(step)?.to_vec();
    let samples = sample_ids
        .iter()
        .map(|&sample_id| {
            let spans = order.resolve_sample(dataset.index(), sample_id)?;
            let tokens = spans_tokens(dataset, &spans)?;
            Ok(SampleView {
                sample_id,
                text: detokenizer.map(|t| t.decode(&tokens)),
                tokens,
                spans,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BatchView {
        step,
        sample_ids,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtype::DType;
    use crate::format::{DatasetBuilder, DatasetPaths};
    use crate::order::OrderConfig;
    use crate::tokenizer::ByteTokenizer;

    fn fixture(dir: &std::path::Path) -> Dataset {
        let paths = DatasetPaths::new(dir.join("d"));
        let mut b = DatasetBuilder::create(&paths, DType::Uint8).unwrap();
        b.push_sequence(&[104, 105]).unwrap();
        b.push_sequence(&[33]).unwrap();
        b.end_document();
        b.push_sequence(&[1, 2, 3]).unwrap();
        b.end_document();
        b.finish().unwrap();
        Dataset::open(&paths).unwrap()
    }

    #[test]
    fn sequence_and_document_views() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        let v = get_sequence_view(&ds, 1, Some(&ByteTokenizer)).unwrap();
        assert_eq!((v.doc_id, v.length, v.text.as_deref()), (0, 1, Some("!")));
        let meta = vec![DocumentMeta {
            position: 0,
            doc_id: Some("a".into()),
            metadata: [("lang".to_string(), "en".to_string())].into(),
        }];
        let d = get_document_view(&ds, 0, Some(&ByteTokenizer), Some(&meta)).unwrap();
        assert_eq!(d.sequence_ids, vec![0, 1]);
        assert_eq!(d.text.as_deref(), Some("hi!"));
        assert_eq!(d.source_id.as_deref(), Some("a"));
        let d = get_document_view(&ds, 1, None, Some(&meta)).unwrap();
        assert_eq!((d.tokens, d.source_id), (vec![1, 2, 3], None));
        assert_eq!(get_sequence_view(&ds, 3, None).unwrap_err().code(), "SeqOutOfRange");
        assert_eq!(get_document_view(&ds, 2, None, None).unwrap_err().code(), "DocOutOfRange");
    }

    #[test]
    fn batch_view_matches_order() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        let cfg = OrderConfig {
            seed: 9,
            seq_len: 2,
            batch_size: 2,
            epochs: 2,
        };
        let order = TrainingOrder::build(ds.index(), cfg).unwrap();
        let v = get_batch_view(&ds, &order, 0, None).unwrap();
        assert_eq!(v.sample_ids, order.resolve_step(0).unwrap());
        for s in &v.samples {
            assert_eq!(s.tokens.len(), 3);
            assert_eq!(s.spans.iter().map(|x| x.token_count).sum::<u64>(), 3);
        }
        assert_eq!(
            get_batch_view(&ds, &order, order.num_steps(), None).unwrap_err().code(),
            "StepOutOfRange"
        );
    }
}
