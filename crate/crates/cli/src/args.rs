use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tokenforge::api::OrderParams;
use tokenforge::export::ExportField;
use tokenforge::ingest::RecordFormat;
use tokenforge::{DType, Token};

#[derive(Debug, Parser)]
#[command(name = "tokenforge", version, about = "Inspect, edit, search and export indexed token datasets")]
pub struct Cli {
    /// Dataset path prefix shared by the .bin and .idx files.
    #[arg(long, global = true, env = "TOKENFORGE_DATASET")]
    pub dataset: Option<PathBuf>,

    /// Tokenizer for text fields and text queries ("byte").
    #[arg(long, global = true)]
    pub tokenizer: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print counts, dtype and version of the dataset.
    Info,
    /// Build a dataset from a JSONL or CSV corpus.
    Ingest(IngestArgs),
    /// Write selected units as JSONL or CSV.
    Export(ExportArgs),
    /// View one sequence, document or training batch.
    #[command(subcommand)]
    Inspect(InspectCommand),
    /// Select sequence (or training sample) ids by policy.
    Sample(SampleArgs),
    /// Overwrite, splice or inject tokens.
    #[command(subcommand)]
    Edit(EditCommand),
    /// N-gram queries over the suffix array.
    #[command(subcommand)]
    Search(SearchCommand),
    /// Manage the suffix array.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Summarize the training order for a configuration.
    Order(OrderArgs),
    /// Check every format invariant and print one JSON line per violation.
    Validate(ValidateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct OrderArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seq_len: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u64>,
}

impl OrderArgs {
    pub fn params(&self) -> OrderParams {
        OrderParams {
            seed: self.seed,
            seq_len: self.seq_len,
            batch_size: self.batch_size,
            epochs: self.epochs,
        }
    }
}

// Aliases keep clap from treating these as repeated single values.
pub type TokenList = Vec<Token>;
pub type IdList = Vec<u64>;
pub type RangeList = Vec<[u64; 2]>;
pub type FieldList = Vec<ExportField>;

/// Comma-separated token ids, or `@path` to read them from a file.
pub fn parse_tokens(raw: &str) -> Result<TokenList, String> {
    let text = match raw.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?,
        None => raw.to_string(),
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Token>().map_err(|_| format!("not a token id: {s:?}")))
        .collect()
}

fn parse_ids(raw: &str) -> Result<IdList, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().map_err(|_| format!("not an id: {s:?}")))
        .collect()
}

fn parse_pair(raw: &str) -> Result<(u64, u64), String> {
    let (a, b) = raw
        .split_once(':')
        .ok_or_else(|| format!("expected A:B, got {raw:?}"))?;
    let n = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("not a number: {s:?}"));
    Ok((n(a)?, n(b)?))
}

fn parse_ranges(raw: &str) -> Result<RangeList, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|r| parse_pair(r).map(|(a, b)| [a, b]))
        .collect()
}

fn parse_fields(raw: &str) -> Result<FieldList, String> {
    raw.split(',').map(|s| s.trim().parse()).collect()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus file.
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long)]
    pub input_format: Option<RecordFormat>,
    /// Token dtype; chosen from the largest token id when omitted.
    #[arg(long)]
    pub dtype: Option<DType>,
    /// Output dataset prefix (defaults to --dataset).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "units", required = true, multiple = false)]
pub struct ExportUnitsArgs {
    /// Comma-separated sequence ids.
    #[arg(long, value_parser = parse_ids, group = "units")]
    pub sequences: Option<IdList>,
    /// Comma-separated document ids.
    #[arg(long, value_parser = parse_ids, group = "units")]
    pub documents: Option<IdList>,
    #[arg(long, group = "units")]
    pub all_sequences: bool,
    #[arg(long, group = "units")]
    pub all_documents: bool,
    /// Comma-separated training steps.
    #[arg(long, value_parser = parse_ids, group = "units")]
    pub steps: Option<IdList>,
    /// Comma-separated START:END token ranges of the flat stream.
    #[arg(long, value_parser = parse_ranges, group = "units")]
    pub token_range: Option<RangeList>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub units: ExportUnitsArgs,
    /// Comma-separated subset of step,sample_id,doc_id,seq_id,tokens,text.
    #[arg(long, value_parser = parse_fields)]
    pub fields: Option<FieldList>,
    #[arg(long, default_value = "jsonl")]
    pub format: RecordFormat,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub order: OrderArgs,
}

#[derive(Debug, Subcommand)]
pub enum InspectCommand {
    /// One sequence with its document id.
    Sequence {
        #[arg(long)]
        id: u64,
        /// Include detokenized text.
        #[arg(long)]
        text: bool,
    },
    /// One document with its sequences and ingest metadata.
    Document {
        #[arg(long)]
        id: u64,
        #[arg(long)]
        text: bool,
    },
    /// The training samples of one step.
    Batch {
        #[arg(long)]
        step: u64,
        #[arg(long)]
        text: bool,
        #[command(flatten)]
        order: OrderArgs,
    },
}

#[derive(Debug, Args)]
#[group(id = "policy_kind", required = true, multiple = false)]
pub struct PolicyArgs {
    /// A policy as JSON, e.g. '{"kind":"stride","step":10}'.
    #[arg(long, group = "policy_kind")]
    pub policy: Option<String>,
    /// K random ids, seeded by --seed.
    #[arg(long, group = "policy_kind")]
    pub random_k: Option<u64>,
    /// Inclusive MIN:MAX token length.
    #[arg(long, value_parser = parse_pair, group = "policy_kind")]
    pub length_range: Option<(u64, u64)>,
    /// Units containing this n-gram.
    #[arg(long, value_parser = parse_tokens, group = "policy_kind")]
    pub contains_ngram: Option<TokenList>,
    /// Every STEP-th id from START, as START:STEP.
    #[arg(long, value_parser = parse_pair, group = "policy_kind")]
    pub stride: Option<(u64, u64)>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long)]
    pub limit: Option<u64>,
    /// Draw from training samples of the order instead of sequences.
    #[arg(long)]
    pub over_samples: bool,
    #[command(flatten)]
    pub order: OrderArgs,
}

#[derive(Debug, Subcommand)]
pub enum EditCommand {
    /// Overwrite tokens in place.
    Overwrite {
        #[arg(long, required_unless_present = "random_positions")]
        seq_id: Option<u64>,
        #[arg(long, default_value_t = 0, conflicts_with = "random_positions")]
        offset: u64,
        #[arg(long, value_parser = parse_tokens, allow_hyphen_values = true)]
        tokens: TokenList,
        /// Apply the payload at K seeded random positions instead.
        #[arg(long, conflicts_with = "seq_id")]
        random_positions: Option<u64>,
        #[arg(long, default_value_t = 0, requires = "random_positions")]
        seed: u64,
    },
    /// Rewrite into a new dataset with tokens deleted and inserted.
    Splice {
        #[arg(long)]
        seq_id: u64,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        #[arg(long, default_value_t = 0)]
        delete: u64,
        #[arg(long, value_parser = parse_tokens, default_value = "")]
        insert: TokenList,
        /// Prefix for the new dataset.
        #[arg(long)]
        out: PathBuf,
    },
    /// Overwrite tokens at a position of a training sample.
    Inject {
        #[arg(long)]
        sample_id: u64,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        #[arg(long, value_parser = parse_tokens)]
        tokens: TokenList,
        #[command(flatten)]
        order: OrderArgs,
    },
}

#[derive(Debug, Clone, Args)]
#[group(id = "query", required = true, multiple = false)]
pub struct QueryArgs {
    #[arg(long, value_parser = parse_tokens, group = "query")]
    pub tokens: Option<TokenList>,
    /// Query text, encoded with --tokenizer.
    #[arg(long, group = "query")]
    pub text: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum SearchCommand {
    Count(QueryArgs),
    Contains(QueryArgs),
    Positions {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        limit: Option<u64>,
        /// Map offsets to documents.
        #[arg(long)]
        resolve: bool,
        /// Skip matches that cross a document end.
        #[arg(long)]
        within_document: bool,
    },
    /// Next-token counts after the query.
    Next(QueryArgs),
    /// Sample a continuation from the back-off n-gram model.
    Generate {
        #[arg(long, value_parser = parse_tokens, default_value = "")]
        prompt: TokenList,
        #[arg(long)]
        length: u64,
        #[arg(long, default_value_t = 3)]
        max_context: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Build and persist the suffix array for the current version.
    Build,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<std::net::IpAddr>,
    #[command(flatten)]
    pub order: OrderArgs,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn token_lists() {
        assert_eq!(parse_tokens("1,2, 3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_tokens("").unwrap(), Vec::<Token>::new());
        assert!(parse_tokens("1,x").is_err());
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("t.txt");
        std::fs::write(&f, "4 5\n6").unwrap();
        assert_eq!(parse_tokens(&format!("@{}", f.display())).unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_ranges("0:3,5:9").unwrap(), vec![[0, 3], [5, 9]]);
    }
}
