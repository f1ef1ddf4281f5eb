//! Wire-level request and response shapes, with the handlers that map them
//! onto a [`DatasetManager`]. The HTTP service and the CLI both go through
//! these, so the two surfaces print identical JSON for the same operation.

use serde::{Deserialize, Serialize};

use crate::edit::EditReceipt;
use crate::error::{Error, Result};
use crate::export::ExportSelection;
use crate::format::DatasetPaths;
use crate::ingest::RecordFormat;
use crate::manager::DatasetManager;
use crate::order::OrderConfig;
use crate::sample::SamplePolicy;
use crate::search::{NextTokenDistribution, Occurrence, PositionsOptions};
use crate::{DType, Token};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub sequence_count: u64,
    pub document_count: u64,
    pub total_tokens: u64,
    pub dtype: DType,
    pub version: u64,
    pub prefix: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tokenizer: Option<String>,
}

pub fn dataset_info(m: &DatasetManager) -> DatasetInfo {
    let ds = m.dataset();
    DatasetInfo {
        sequence_count: ds.sequence_count(),
        document_count: ds.document_count(),
        total_tokens: ds.total_tokens(),
        dtype: ds.dtype(),
        version: ds.version(),
        prefix: ds.paths().prefix().display().to_string(),
        tokenizer: m.tokenizer().map(|t| t.name().to_string()),
    }
}

/// Partial training-order parameters; missing fields take the session default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderParams {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seq_len: Option<u64>,
    #[serde(default)]
    pub batch_size: Option<u64>,
    #[serde(default)]
    pub epochs: Option<u64>,
}

impl OrderParams {
    pub fn resolve(&self, default: OrderConfig) -> OrderConfig {
        OrderConfig {
            seed: self.seed.unwrap_or(default.seed),
            seq_len: self.seq_len.unwrap_or(default.seq_len),
            batch_size: self.batch_size.unwrap_or(default.batch_size),
            epochs: self.epochs.unwrap_or(default.epochs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderInfo {
    pub config: OrderConfig,
    pub num_samples: u64,
    pub num_steps: u64,
    pub stream_tokens: u64,
}

pub fn order_info(m: &DatasetManager, params: &OrderParams) -> Result<OrderInfo> {
    let order = m.order(Some(params.resolve(m.default_order())))?;
    Ok(OrderInfo {
        config: *order.config(),
        num_samples: order.num_samples(),
        num_steps: order.num_steps(),
        stream_tokens: order.stream_len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRequest {
    pub policy: SamplePolicy,
    #[serde(default)]
    pub limit: Option<u64>,
    /// Sample over training samples of this order instead of sequences.
    #[serde(default)]
    pub order: Option<OrderParams>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub population: String,
    pub ids: Vec<u64>,
}

pub fn sample(m: &DatasetManager, req: &SampleRequest) -> Result<SampleResponse> {
    let order = req.order.map(|p| p.resolve(m.default_order()));
    let ids = m.sample(&req.policy, order, req.limit)?;
    Ok(SampleResponse {
        population: if order.is_some() { "samples" } else { "sequences" }.into(),
        ids,
    })
}

/// A query given as token ids, or as text for the session tokenizer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Query {
    pub fn tokens(tokens: Vec<Token>) -> Self {
        Query {
            tokens: Some(tokens),
            text: None,
        }
    }

    fn resolve(&self, m: &DatasetManager) -> Result<Vec<Token>> {
        match (&self.tokens, &self.text) {
            (Some(t), None) => Ok(t.clone()),
            (None, Some(text)) => m.encode_text(text),
            (Some(_), Some(_)) => Err(Error::InvalidArgument(
                "give either tokens or text, not both".into(),
            )),
            (None, None) => Err(Error::EmptyQuery),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResponse {
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainsResponse {
    pub contains: bool,
}

pub fn count(m: &DatasetManager, q: &Query) -> Result<CountResponse> {
    let tokens = q.resolve(m)?;
    Ok(CountResponse {
        count: m.suffix_array()?.count(m.dataset(), &tokens)?,
    })
}

pub fn contains(m: &DatasetManager, q: &Query) -> Result<ContainsResponse> {
    let tokens = q.resolve(m)?;
    Ok(ContainsResponse {
        contains: m.suffix_array()?.contains(m.dataset(), &tokens)?,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionsRequest {
    #[serde(flatten)]
    pub query: Query,
    #[serde(default)]
    pub limit: Option<u64>,
    #[serde(flatten)]
    pub options: PositionsOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionsResponse {
    pub positions: Vec<Occurrence>,
}

pub fn positions(m: &DatasetManager, req: &PositionsRequest) -> Result<PositionsResponse> {
    let tokens = req.query.resolve(m)?;
    let limit = req.limit.unwrap_or(u64::MAX);
    Ok(PositionsResponse {
        positions: m
            .suffix_array()?
            .positions(m.dataset(), &tokens, limit, req.options)?,
    })
}

pub fn next_tokens(m: &DatasetManager, q: &Query) -> Result<NextTokenDistribution> {
    let tokens = q.resolve(m)?;
    m.suffix_array()?.next_token_distribution(m.dataset(), &tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(flatten)]
    pub prompt: Query,
    pub length: u64,
    #[serde(default = "default_context")]
    pub max_context: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_context() -> u64 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub tokens: Vec<Token>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
}

pub fn generate(m: &DatasetManager, req: &GenerateRequest) -> Result<GenerateResponse> {
    let prompt = match (&req.prompt.tokens, &req.prompt.text) {
        (None, None) => Vec::new(),
        _ => req.prompt.resolve(m)?,
    };
    let tokens = m.suffix_array()?.sample_continuation(
        m.dataset(),
        &prompt,
        req.length,
        req.max_context,
        req.seed,
    )?;
    Ok(GenerateResponse {
        text: m.tokenizer().map(|t| t.decode(&tokens)),
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverwriteRequest {
    pub seq_id: u64,
    #[serde(default)]
    pub offset: u64,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectRequest {
    pub sample_id: u64,
    #[serde(default)]
    pub offset: u64,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub order: OrderParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditResponse {
    pub dataset_version: u64,
    pub receipts: Vec<EditReceipt>,
}

pub fn overwrite(m: &mut DatasetManager, req: &OverwriteRequest) -> Result<EditResponse> {
    let receipt = m.overwrite(req.seq_id, req.offset, &req.tokens)?;
    Ok(EditResponse {
        dataset_version: m.dataset().version(),
        receipts: vec![receipt],
    })
}

pub fn inject(m: &mut DatasetManager, req: &InjectRequest) -> Result<EditResponse> {
    let config = req.order.resolve(m.default_order());
    let receipts = m.inject(Some(config), req.sample_id, req.offset, &req.tokens)?;
    Ok(EditResponse {
        dataset_version: m.dataset().version(),
        receipts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpliceRequest {
    pub seq_id: u64,
    #[serde(default)]
    pub offset: u64,
    #[serde(default)]
    pub delete_count: u64,
    #[serde(default)]
    pub insert: Vec<Token>,
    /// Prefix for the new dataset.
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLocation {
    pub prefix: String,
    pub bin: String,
    pub idx: String,
}

impl From<&DatasetPaths> for DatasetLocation {
    fn from(p: &DatasetPaths) -> Self {
        DatasetLocation {
            prefix: p.prefix().display().to_string(),
            bin: p.bin().display().to_string(),
            idx: p.idx().display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpliceResponse {
    pub dataset: DatasetLocation,
    pub dataset_version: u64,
    pub receipt: EditReceipt,
}

pub fn splice(m: &DatasetManager, req: &SpliceRequest) -> Result<SpliceResponse> {
    let out = DatasetPaths::new(&req.out);
    let (paths, receipt) = m.splice(req.seq_id, req.offset, req.delete_count, &req.insert, &out)?;
    Ok(SpliceResponse {
        dataset: (&paths).into(),
        dataset_version: receipt.dataset_version_after,
        receipt,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRequest {
    #[serde(flatten)]
    pub selection: ExportSelection,
    #[serde(default)]
    pub order: OrderParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportResponse {
    pub count: u64,
    pub format: RecordFormat,
    pub content: String,
}

pub fn export(m: &DatasetManager, req: &ExportRequest) -> Result<ExportResponse> {
    let mut buf = Vec::new();
    let config = req.order.resolve(m.default_order());
    let count = m.export(&req.selection, Some(config), &mut buf)?;
    Ok(ExportResponse {
        count,
        format: req.selection.format,
        content: String::from_utf8(buf).expect("exports are UTF-8"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBuildResponse {
    pub dataset_version: u64,
    pub total_tokens: u64,
    pub path: String,
}

pub fn build_index(m: &DatasetManager) -> Result<IndexBuildResponse> {
    let sa = m.build_index()?;
    Ok(IndexBuildResponse {
        dataset_version: sa.dataset_version(),
        total_tokens: sa.total_tokens(),
        path: m.dataset().paths().suffix_array().display().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchRequest {
    pub dataset: String,
}

pub fn switch(m: &mut DatasetManager, req: &SwitchRequest) -> Result<DatasetInfo> {
    m.switch(req.dataset.as_str())?;
    Ok(dataset_info(m))
}

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody {
            error: e.code().to_string(),
            detail: e.to_string(),
        }
    }
}

/// Compact JSON followed by a newline, the form both surfaces print.
pub fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("response serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::build_dataset;
    use crate::tokenizer::ByteTokenizer;
    use std::sync::Arc;

    #[test]
    fn search_handlers_on_the_example_stream() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        build_dataset(&paths, DType::Uint16, [vec![1, 2, 1], vec![2, 3]]).unwrap();
        let m = DatasetManager::open(&paths).unwrap();
        let q = Query::tokens(vec![1, 2]);
        assert_eq!(to_json_line(&count(&m, &q).unwrap()), "{\"count\":2}\n");
        assert!(contains(&m, &q).unwrap().contains);
        let req: PositionsRequest =
            serde_json::from_str(r#"{"tokens":[1,2],"resolve":true,"limit":5}"#).unwrap();
        let p = positions(&m, &req).unwrap().positions;
        assert_eq!(p.iter().map(|o| o.offset).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(p[1].document_id, Some(0));
        let d = next_tokens(&m, &q).unwrap();
        assert_eq!((d.total, d.continuations.len()), (2, 2));
        assert_eq!(
            count(&m, &Query { text: Some("x".into()), tokens: None }).unwrap_err().code(),
            "MissingTokenizer"
        );
        assert_eq!(count(&m, &Query::default()).unwrap_err().code(), "EmptyQuery");
    }

    #[test]
    fn text_queries_use_the_tokenizer() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        build_dataset(&paths, DType::Uint8, [b"abcab".iter().map(|&b| b as Token).collect::<Vec<_>>()])
            .unwrap();
        let m = DatasetManager::open(&paths)
            .unwrap()
            .with_tokenizer(Some(Arc::new(ByteTokenizer)));
        let q = Query { text: Some("ab".into()), tokens: None };
        assert_eq!(count(&m, &q).unwrap().count, 2);
        assert_eq!(dataset_info(&m).tokenizer.as_deref(), Some("byte"));
    }

    #[test]
    fn edits_report_the_new_version() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::new(dir.path().join("d"));
        build_dataset(&paths, DType::Uint16, [vec![1, 2, 3, 4, 5]]).unwrap();
        let mut m = DatasetManager::open(&paths).unwrap();
        let r = overwrite(&mut m, &OverwriteRequest { seq_id: 0, offset: 1, tokens: vec![7] }).unwrap();
        assert_eq!(r.dataset_version, 1);
        let req: InjectRequest = serde_json::from_str(
            r#"{"sample_id":0,"offset":0,"tokens":[9],"order":{"seq_len":2,"batch_size":1}}"#,
        )
        .unwrap();
        assert_eq!(inject(&mut m, &req).unwrap().dataset_version, 2);
        let err = overwrite(&mut m, &OverwriteRequest { seq_id: 0, offset: 5, tokens: vec![7] })
            .unwrap_err();
        assert_eq!(ErrorBody::from(&err).error, "SliceOutOfRange");
    }
}
