mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{CommandFactory, Parser};
use serde::Serialize;

use tokenforge::api::{self, ErrorBody, Query};
use tokenforge::export::{ExportSelection, ExportUnits};
use tokenforge::format::{validate_dataset, write_report};
use tokenforge::ingest::{ingest_file, RecordFormat};
use tokenforge::order::SplitMix64;
use tokenforge::sample::SamplePolicy;
use tokenforge::search::PositionsOptions;
use tokenforge::tokenizer::by_name;
use tokenforge::{DatasetManager, DatasetPaths, Error, Token, Tokenizer};
use tokenforge_service::{SessionConfig, ServiceError};

use args::*;

fn print<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(api::to_json_line(value).as_bytes())?;
    Ok(())
}

fn usage(message: impl std::fmt::Display) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, message)
        .exit()
}

struct Ctx {
    dataset: Option<PathBuf>,
    tokenizer: Option<Arc<dyn Tokenizer>>,
}

impl Ctx {
    fn dataset(&self) -> DatasetPaths {
        match &self.dataset {
            Some(p) => DatasetPaths::new(p),
            None => usage("--dataset (or TOKENFORGE_DATASET) is required"),
        }
    }

    fn manager(&self) -> anyhow::Result<DatasetManager> {
        Ok(DatasetManager::open(self.dataset())?.with_tokenizer(self.tokenizer.clone()))
    }
}

fn query(q: QueryArgs) -> Query {
    Query {
        tokens: q.tokens,
        text: q.text,
    }
}

/// `k` targets `(seq_id, offset)` for a payload of `width` tokens, drawn
/// from sequences long enough to hold it.
fn random_targets(m: &DatasetManager, k: u64, width: u64, seed: u64) -> anyhow::Result<Vec<(u64, u64, Vec<Token>)>> {
    let ds = m.dataset();
    let n = ds.sequence_count();
    if n == 0 || !(0..n).any(|s| ds.index().length(s as usize) >= width) {
        bail!(Error::InvalidArgument(format!(
            "no sequence can hold a {width}-token payload"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut targets = Vec::with_capacity(k as usize);
    while (targets.len() as u64) < k {
        let seq = rng.below(n);
        let len = ds.index().length(seq as usize);
        if len < width {
            continue;
        }
        targets.push((seq, rng.below(len - width + 1), Vec::new()));
    }
    Ok(targets)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let tokenizer: Option<Arc<dyn Tokenizer>> = match &cli.tokenizer {
        Some(name) => match by_name(name) {
            Some(t) => Some(Arc::from(t)),
            None => usage(format!("unknown tokenizer {name:?}")),
        },
        None => None,
    };
    let tokenizer_name = cli.tokenizer.clone();
    let ctx = Ctx {
        dataset: cli.dataset,
        tokenizer,
    };
    match cli.command {
        Command::Ingest(a) => {
            let out = match a.out {
                Some(p) => DatasetPaths::new(p),
                None => ctx.dataset(),
            };
            let format = a.input_format.unwrap_or_else(|| RecordFormat::from_path(&a.input));
            ingest_file(&a.input, format, &out, a.dtype, ctx.tokenizer.as_deref())?;
            let m = DatasetManager::open(&out)?.with_tokenizer(ctx.tokenizer.clone());
            print(&api::dataset_info(&m))?;
        }
        Command::Export(a) => {
            let m = ctx.manager()?;
            let u = a.units;
            let units = if let Some(ids) = u.sequences {
                ExportUnits::Sequences { ids: Some(ids) }
            } else if let Some(ids) = u.documents {
                ExportUnits::Documents { ids: Some(ids) }
            } else if u.all_sequences {
                ExportUnits::Sequences { ids: None }
            } else if u.all_documents {
                ExportUnits::Documents { ids: None }
            } else if let Some(steps) = u.steps {
                ExportUnits::Batches { steps }
            } else {
                ExportUnits::TokenRange {
                    ranges: u.token_range.unwrap_or_default(),
                }
            };
            let selection = ExportSelection::new(units)
                .with_fields(a.fields.unwrap_or_default())
                .with_format(a.format);
            let config = a.order.params().resolve(m.default_order());
            let mut sink: Box<dyn Write> = match &a.out {
                Some(p) => Box::new(BufWriter::new(
                    File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => Box::new(BufWriter::new(io::stdout().lock())),
            };
            m.export(&selection, Some(config), &mut sink)?;
            sink.flush()?;
        }
        Command::Inspect(cmd) => {
            let m = ctx.manager()?;
            match cmd {
                InspectCommand::Sequence { id, text } => print(&m.sequence_view(id, text)?)?,
                InspectCommand::Document { id, text } => print(&m.document_view(id, text)?)?,
                InspectCommand::Batch { step, text, order } => {
                    let config = order.params().resolve(m.default_order());
                    print(&m.batch_view(step, Some(config), text)?)?
                }
            }
        }
        Command::Sample(a) => {
            let m = ctx.manager()?;
            let p = a.policy;
            let policy = if let Some(json) = p.policy {
                match serde_json::from_str::<SamplePolicy>(&json) {
                    Ok(policy) => policy,
                    Err(e) => usage(format!("invalid --policy: {e}")),
                }
            } else if let Some(k) = p.random_k {
                SamplePolicy::RandomK {
                    k,
                    seed: a.order.seed.unwrap_or(0),
                }
            } else if let Some((min, max)) = p.length_range {
                SamplePolicy::LengthRange { min, max }
            } else if let Some(tokens) = p.contains_ngram {
                SamplePolicy::ContainsNgram { tokens }
            } else {
                let (start, step) = p.stride.expect("clap enforces one policy");
                SamplePolicy::Stride { start, step }
            };
            let req = api::SampleRequest {
                policy,
                limit: a.limit,
                order: a.over_samples.then(|| a.order.params()),
            };
            print(&api::sample(&m, &req)?)?;
        }
        Command::Edit(cmd) => {
            let mut m = ctx.manager()?;
            match cmd {
                EditCommand::Overwrite {
                    seq_id,
                    offset,
                    tokens,
                    random_positions,
                    seed,
                } => match random_positions {
                    Some(k) => {
                        let mut targets = random_targets(&m, k, tokens.len() as u64, seed)?;
                        for t in &mut targets {
                            t.2 = tokens.clone();
                        }
                        let receipts = m.overwrite_many(&targets)?;
                        print(&api::EditResponse {
                            dataset_version: m.dataset().version(),
                            receipts,
                        })?;
                    }
                    None => {
                        let req = api::OverwriteRequest {
                            seq_id: seq_id.expect("clap requires --seq-id"),
                            offset,
                            tokens,
                        };
                        print(&api::overwrite(&mut m, &req)?)?;
                    }
                },
                EditCommand::Splice {
                    seq_id,
                    offset,
                    delete,
                    insert,
                    out,
                } => {
                    let req = api::SpliceRequest {
                        seq_id,
                        offset,
                        delete_count: delete,
                        insert,
                        out: out.display().to_string(),
                    };
                    print(&api::splice(&m, &req)?)?;
                }
                EditCommand::Inject {
                    sample_id,
                    offset,
                    tokens,
                    order,
                } => {
                    let req = api::InjectRequest {
                        sample_id,
                        offset,
                        tokens,
                        order: order.params(),
                    };
                    print(&api::inject(&mut m, &req)?)?;
                }
            }
        }
        Command::Search(cmd) => {
            let m = ctx.manager()?;
            match cmd {
                SearchCommand::Count(q) => print(&api::count(&m, &query(q))?)?,
                SearchCommand::Contains(q) => print(&api::contains(&m, &query(q))?)?,
                SearchCommand::Next(q) => print(&api::next_tokens(&m, &query(q))?)?,
                SearchCommand::Positions {
                    query: q,
                    limit,
                    resolve,
                    within_document,
                } => {
                    let req = api::PositionsRequest {
                        query: query(q),
                        limit,
                        options: PositionsOptions {
                            resolve,
                            within_document,
                        },
                    };
                    print(&api::positions(&m, &req)?)?
                }
                SearchCommand::Generate {
                    prompt,
                    length,
                    max_context,
                    seed,
                } => {
                    let req = api::GenerateRequest {
                        prompt: Query::tokens(prompt),
                        length,
                        max_context,
                        seed,
                    };
                    print(&api::generate(&m, &req)?)?
                }
            }
        }
        Command::Info => print(&api::dataset_info(&ctx.manager()?))?,
        Command::Index(IndexCommand::Build) => {
            let m = ctx.manager()?;
            print(&api::build_index(&m)?)?;
        }
        Command::Order(a) => {
            let m = ctx.manager()?;
            print(&api::order_info(&m, &a.params())?)?;
        }
        Command::Validate(a) => {
            let report = validate_dataset(&ctx.dataset());
            let mut out = io::stdout().lock();
            write_report(&report, &mut out)?;
            if let Some(path) = a.out {
                let mut f = BufWriter::new(File::create(&path)?);
                write_report(&report, &mut f)?;
                f.flush()?;
            }
            if !report.is_empty() {
                bail!(Error::DatasetInvalid(report));
            }
        }
        Command::Serve(a) => {
            let mut config = match &a.config {
                Some(path) => SessionConfig::load(path)?,
                None => SessionConfig::new(ctx.dataset().prefix()),
            };
            if a.config.is_some() {
                if let Some(d) = &ctx.dataset {
                    config.dataset = d.clone();
                }
            }
            config = config.with_env()?;
            if let Some(port) = a.port {
                config.port = port;
            }
            if let Some(bind) = a.bind {
                config.bind = bind;
            }
            config.order = a.order.params().resolve(config.order);
            if let Some(name) = &config.tokenizer {
                if by_name(name).is_none() {
                    usage(format!("unknown tokenizer {name:?}"));
                }
            }
            if let Some(name) = tokenizer_name {
                config.tokenizer = Some(name);
            }
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .with_writer(io::stderr)
                .init();
            tokio::runtime::Runtime::new()?.block_on(tokenforge_service::serve(config))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let body = match (e.downcast_ref::<Error>(), e.downcast_ref::<ServiceError>()) {
                (Some(err), _) | (_, Some(ServiceError::Dataset(err))) => ErrorBody::from(err),
                _ => ErrorBody {
                    error: "Failure".into(),
                    detail: format!("{e:#}"),
                },
            };
            eprintln!("{}", serde_json::to_string(&body).expect("error body serializes"));
            ExitCode::from(1)
        }
    }
}
