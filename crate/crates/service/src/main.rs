use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use easel_core::catalog::load_catalog;
use easel_core::curation::{read_event_log, CurationSession};
use easel_core::embeddings::{uncovered, EmbeddingSpace};
use easel_service::script::run_script;
use easel_service::service::{read_space_file, RecommendRequest};
use easel_service::store::{FileStore, RecordKind};
use easel_service::{Config, Service};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "easel",
    version,
    about = "Seed-based painting recommendation with therapist review"
)]
struct Cli {
    /// TOML config naming the catalog, embedding spaces and store directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingFormat {
    Jsonl,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
    Summary,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Overrides `bind` from the config. Port 0 picks a free port.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Validate a catalog file and record it in the store.
    IngestCatalog { path: PathBuf },
    /// Validate an embedding file against the catalog, optionally converting it.
    ImportEmbeddings {
        path: PathBuf,
        /// Space id; required for binary input.
        #[arg(long)]
        space: Option<String>,
        /// Model name; required for binary input.
        #[arg(long)]
        model: Option<String>,
        /// Catalog to validate against, instead of the config's.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Write the vectors here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "jsonl")]
        to: EmbeddingFormat,
    },
    /// Print the top-r list for a seed.
    Recommend {
        #[arg(long)]
        space: String,
        #[arg(long)]
        seed: String,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long = "exclude")]
        excluded: Vec<String>,
    },
    /// Run a JSON Lines workflow script, or replay an existing event log.
    CurateReplay {
        #[arg(required_unless_present = "log", conflicts_with = "log")]
        script: Option<PathBuf>,
        /// Replay this curation log and print the resulting session.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Export all guided sessions.
    ExportReport {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
    },
}

type Failure = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config(path: &Option<PathBuf>) -> Result<Config, Failure> {
    let path = path.as_ref().ok_or("this command needs --config")?;
    Ok(Config::load(path)?)
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn upsert(
    store: &FileStore,
    kind: RecordKind,
    key: &str,
    body: serde_json::Value,
) -> Result<u64, Failure> {
    let current = store.get(kind, key)?.map_or(0, |r| r.version);
    Ok(store.put(kind, key, current, body)?.version)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve { bind } => {
            let config = config(&cli.config)?;
            let bind = bind.unwrap_or_else(|| config.bind.clone());
            let service = Service::open(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                println!("listening on http://{}", listener.local_addr()?);
                io::stdout().flush()?;
                easel_service::serve(listener, service).await
            })?;
        }
        Command::IngestCatalog { path } => {
            let catalog = load_catalog(&path)?;
            let summary = json!({
                "source": path.display().to_string(),
                "paintings": catalog.len(),
                "ids": catalog.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(),
            });
            if let Some(c) = &cli.config {
                let store = FileStore::open(Config::load(c)?.store_dir)?;
                upsert(&store, RecordKind::Catalog, "catalog", summary.clone())?;
            }
            print_json(&json!({"source": summary["source"], "paintings": summary["paintings"]}))?;
        }
        Command::ImportEmbeddings {
            path,
            space,
            model,
            catalog,
            out,
            to,
        } => {
            let config = cli.config.as_ref().map(Config::load).transpose()?;
            let catalog_path = catalog.or_else(|| config.as_ref().map(|c| c.catalog.clone()));
            let catalog = catalog_path.map(load_catalog).transpose()?;
            let file = read_space_file(&path, space.as_deref(), model.as_deref())
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let loaded = EmbeddingSpace::from_file(file.clone(), catalog.as_ref())
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let summary = json!({
                "space": loaded.space_id(),
                "model": loaded.model_name(),
                "dim": loaded.dim(),
                "count": loaded.len(),
                "zero_vectors": loaded.zero_vectors().collect::<Vec<_>>(),
                "uncovered": catalog.as_ref().map(|c| uncovered(c, &loaded).len()),
            });
            if let Some(out) = out {
                write_embeddings(&file, &out, to)?;
            }
            if let Some(config) = &config {
                let store = FileStore::open(&config.store_dir)?;
                let mut body = serde_json::to_value(file.header.clone())?;
                body["source"] = json!(path.display().to_string());
                body["count"] = json!(loaded.len());
                upsert(&store, RecordKind::SpaceHeader, loaded.space_id(), body)?;
            }
            print_json(&summary)?;
        }
        Command::Recommend {
            space,
            seed,
            r,
            excluded,
        } => {
            let service = Service::open(config(&cli.config)?)?;
            let list = service.recommend(&RecommendRequest {
                space_id: space,
                seed_id: seed,
                r,
                excluded: excluded
                    .into_iter()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            })?;
            print_json(&serde_json::to_value(list)?)?;
        }
        Command::CurateReplay { script, log } => {
            if let Some(log) = log {
                let events = read_event_log(BufReader::new(File::open(&log)?))?;
                let session = CurationSession::replay(events)?;
                println!("{}", session.export_json());
                return Ok(());
            }
            let script = script.expect("clap requires script or --log");
            let mut service = Service::open(config(&cli.config)?)?;
            let steps = run_script(&mut service, BufReader::new(File::open(&script)?))?;
            let mut out = io::stdout().lock();
            for step in steps {
                writeln!(out, "{}", serde_json::to_string(&step)?)?;
            }
        }
        Command::ExportReport { out, format } => {
            let service = Service::open(config(&cli.config)?)?;
            let text = match format {
                ReportFormat::Csv => service.export_csv()?,
                ReportFormat::Json => serde_json::to_string_pretty(&service.export_rows()?)? + "\n",
                ReportFormat::Summary => {
                    let v = json!({
                        "mood": service.mood()?,
                        "panas": service.panas()?,
                        "ratings": service.ratings()?,
                    });
                    serde_json::to_string_pretty(&v)? + "\n"
                }
            };
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
        }
    }
    Ok(())
}

fn write_embeddings(
    file: &easel_core::embeddings::EmbeddingFile,
    out: &Path,
    format: EmbeddingFormat,
) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(out)?);
    match format {
        EmbeddingFormat::Jsonl => file.write_jsonl(&mut w)?,
        EmbeddingFormat::Binary => file.write_binary(&mut w)?,
    }
    w.flush()?;
    Ok(())
}
