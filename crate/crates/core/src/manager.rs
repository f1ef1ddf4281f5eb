//! One open dataset plus its cached training orders, search index and
//! metadata. The CLI and the service both drive the library through this.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use crate::dataset::Dataset;
use crate::edit::{self, EditReceipt};
use crate::error::Result;
use crate::export::{export, ExportSelection};
use crate::format::DatasetPaths;
use crate::ingest::{load_metadata, DocumentMeta};
use crate::inspect::{self, BatchView, DocumentView, SequenceView};
use crate::order::{OrderConfig, TrainingOrder};
use crate::sample::{sample_dataset, SamplePolicy};
use crate::search::SuffixArrayIndex;
use crate::tokenizer::Tokenizer;
use crate::Token;

pub struct DatasetManager {
    dataset: Dataset,
    default_order: OrderConfig,
    tokenizer: Option<Arc<dyn Tokenizer>>,
    orders: Mutex<HashMap<OrderConfig, Arc<TrainingOrder>>>,
    suffix: RwLock<Option<Arc<SuffixArrayIndex>>>,
    metadata: OnceLock<Option<Vec<DocumentMeta>>>,
}

impl std::fmt::Debug for DatasetManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DatasetManager")
            .field("dataset", &self.dataset.paths())
            .field("default_order", &self.default_order)
            .field("tokenizer", &self.tokenizer.as_ref().map(|t| t.name()))
            .finish()
    }
}

impl DatasetManager {
    pub fn open(paths: impl Into<DatasetPaths>) -> Result<Self> {
        Ok(Self::new(Dataset::open(paths)?))
    }

    pub fn new(dataset: Dataset) -> Self {
        DatasetManager {
            dataset,
            default_order: OrderConfig::default(),
            tokenizer: None,
            orders: Mutex::new(HashMap::new()),
            suffix: RwLock::new(None),
            metadata: OnceLock::new(),
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: Option<Arc<dyn Tokenizer>>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn with_order_config(mut self, config: OrderConfig) -> Self {
        self.default_order = config;
        self
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn default_order(&self) -> OrderConfig {
        self.default_order
    }

    pub fn tokenizer(&self) -> Option<&dyn Tokenizer> {
        self.tokenizer.as_deref()
    }

    fn detok(&self, wanted: bool) -> Option<&dyn Tokenizer> {
        if wanted {
            self.tokenizer()
        } else {
            None
        }
    }

    pub fn metadata(&self) -> Option<&[DocumentMeta]> {
        self.metadata
            .get_or_init(|| load_metadata(self.dataset.paths()).ok().flatten())
            .as_deref()
    }

    /// Training order for `config` (the session default when `None`),
    /// through the in-memory and on-disk caches.
    pub fn order(&self, config: Option<OrderConfig>) -> Result<Arc<TrainingOrder>> {
        let config = config.unwrap_or(self.default_order);
        if let Some(o) = self.orders.lock().unwrap().get(&config) {
            return Ok(o.clone());
        }
        let order = Arc::new(TrainingOrder::load_or_build(&self.dataset, config)?);
        self.orders.lock().unwrap().insert(config, order.clone());
        Ok(order)
    }

    pub fn sequence_view(&self, seq_id: u64, text: bool) -> Result<SequenceView> {
        inspect::get_sequence_view(&self.dataset, seq_id, self.detok(text))
    }

    pub fn document_view(&self, doc_id: u64, text: bool) -> Result<DocumentView> {
        inspect::get_document_view(&self.dataset, doc_id, self.detok(text), self.metadata())
    }

    pub fn batch_view(&self, step: u64, config: Option<OrderConfig>, text: bool) -> Result<BatchView> {
        let order = self.order(config)?;
        inspect::get_batch_view(&self.dataset, &order, step, self.detok(text))
    }

    /// With `over_samples`, the population is the training samples of that
    /// order rather than the sequences.
    pub fn sample(
        &self,
        policy: &SamplePolicy,
        over_samples: Option<OrderConfig>,
        limit: Option<u64>,
    ) -> Result<Vec<u64>> {
        let order = over_samples.map(|c| self.order(Some(c))).transpose()?;
        sample_dataset(&self.dataset, order.as_deref(), policy, limit)
    }

    pub fn export(
        &self,
        selection: &ExportSelection,
        config: Option<OrderConfig>,
        sink: &mut dyn Write,
    ) -> Result<u64> {
        let order = match selection.units {
            crate::export::ExportUnits::Batches { .. } => Some(self.order(config)?),
            _ => None,
        };
        export(&self.dataset, selection, order.as_deref(), sink, self.tokenizer())
    }

    /// The search index, loading it from disk or building it on first use.
    /// A persisted index from an older version is returned as-is, so queries
    /// against it report `StaleIndex` until it is rebuilt.
    pub fn suffix_array(&self) -> Result<Arc<SuffixArrayIndex>> {
        if let Some(sa) = self.suffix.read().unwrap().as_ref() {
            return Ok(sa.clone());
        }
        let mut slot = self.suffix.write().unwrap();
        if let Some(sa) = slot.as_ref() {
            return Ok(sa.clone());
        }
        let sa = match SuffixArrayIndex::load_for(&self.dataset)? {
            Some(sa) => sa,
            None => SuffixArrayIndex::build_and_save(&self.dataset)?,
        };
        let sa = Arc::new(sa);
        *slot = Some(sa.clone());
        Ok(sa)
    }

    /// Rebuilds and persists the search index for the current version.
    pub fn build_index(&self) -> Result<Arc<SuffixArrayIndex>> {
        let sa = Arc::new(SuffixArrayIndex::build_and_save(&self.dataset)?);
        *self.suffix.write().unwrap() = Some(sa.clone());
        Ok(sa)
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<Token>> {
        let t = self.tokenizer().ok_or(crate::Error::MissingTokenizer)?;
        Ok(t.encode(text))
    }

    pub fn overwrite(&mut self, seq_id: u64, offset: u64, tokens: &[Token]) -> Result<EditReceipt> {
        edit::overwrite_sequence(&mut self.dataset, seq_id, offset, tokens)
    }

    /// Several overwrites under one lock acquisition.
    pub fn overwrite_many(&mut self, edits: &[(u64, u64, Vec<Token>)]) -> Result<Vec<EditReceipt>> {
        let mut w = self.dataset.writer()?;
        edits
            .iter()
            .map(|(seq, off, tokens)| w.overwrite_sequence(*seq, *off, tokens))
            .collect()
    }

    pub fn inject(
        &mut self,
        config: Option<OrderConfig>,
        sample_id: u64,
        offset_in_sample: u64,
        tokens: &[Token],
    ) -> Result<Vec<EditReceipt>> {
        let order = self.order(config)?;
        edit::inject_into_sample(&mut self.dataset, &order, sample_id, offset_in_sample, tokens)
    }

    /// Writes the spliced copy to `out`; this manager keeps serving the
    /// original until [`switch`](Self::switch).
    pub fn splice(
        &self,
        seq_id: u64,
        offset: u64,
        delete_count: u64,
        insert: &[Token],
        out: &DatasetPaths,
    ) -> Result<(DatasetPaths, EditReceipt)> {
        edit::splice_sequence(&self.dataset, seq_id, offset, delete_count, insert, out)
    }

    /// Re-points the session at another dataset, dropping every cache.
    pub fn switch(&mut self, paths: impl Into<DatasetPaths>) -> Result<()> {
        let dataset = Dataset::open(paths)?;
        *self = DatasetManager {
            default_order: self.default_order,
            tokenizer: self.tokenizer.take(),
            ..DatasetManager::new(dataset)
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtype::DType;
    use crate::format::build_dataset;

    #[test]
    fn caches_follow_edits_and_switches() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        build_dataset(&paths, DType::Uint16, [vec![1, 2, 1, 2, 3]]).unwrap();
        let mut m = DatasetManager::open(&paths).unwrap();
        let sa = m.suffix_array().unwrap();
        assert_eq!(sa.count(m.dataset(), &[1, 2]).unwrap(), 2);
        assert!(paths.suffix_array().exists());

        m.overwrite(0, 0, &[3]).unwrap();
        let sa = m.suffix_array().unwrap();
        assert_eq!(sa.count(m.dataset(), &[1]).unwrap_err().code(), "StaleIndex");
        let sa = m.build_index().unwrap();
        assert_eq!(sa.count(m.dataset(), &[1, 2]).unwrap(), 1);

        let out = DatasetPaths::new(dir.path().join("s"));
        m.splice(0, 0, 1, &[], &out).unwrap();
        assert_eq!(m.dataset().total_tokens(), 5);
        m.switch(&out).unwrap();
        assert_eq!(m.dataset().total_tokens(), 4);
        assert_eq!(m.dataset().version(), 2);
    }
}
