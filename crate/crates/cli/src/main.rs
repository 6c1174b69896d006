use std::fs;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sia_core::plan::{serialize_svg, LayerContent, PlanDocument};
use sia_core::query::{Page, QuerySpec, DEFAULT_LIMIT};
use sia_core::scene::{serialize_x3d, CompositionRequest, CompositionWarning};
use sia_core::validate::{validate_periods, validate_places, validate_schema, validate_vocabularies, Violation};
use sia_core::xml::manifest::parse_manifest;
use sia_core::xml::reference::parse_reference;
use sia_core::xml::schema::parse_schema;
use sia_core::{KindTag, MetadataSchema, RecordDraft, ReferenceData, Role, SiaError, Store};
use sia_server::auth::{hash_password, Auth};
use sia_server::AppState;

#[derive(Parser)]
#[command(name = "sia", version, about = "Archive of documents about one archaeological site")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "SIA_DATA_DIR", default_value = "sia-data")]
    data_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty store.
    Init {
        /// Schema XML; an empty version-1 schema otherwise.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Periods, places and vocabularies XML.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Ingest every entry of a batch manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Check every record and the reference data without changing anything.
    Validate,
    /// Rebuild the search index from the record files.
    Reindex,
    /// Find records matching every given filter.
    Search {
        #[arg(long, value_delimiter = ',')]
        kind: Vec<KindTag>,
        #[arg(long, value_delimiter = ',')]
        place: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        period_from: Option<i32>,
        #[arg(long, allow_hyphen_values = true)]
        period_to: Option<i32>,
        #[arg(long, value_delimiter = ',')]
        keyword: Vec<String>,
        #[arg(long)]
        author: Option<String>,
        #[arg(long)]
        archived: bool,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: usize,
    },
    /// Write the X3D scene for the given places and periods.
    ComposeModel {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the SVG synthesis plan for the given places and periods.
    ComposePlan {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overlay photographs or raster plans on a base image.
    ComposeMontage {
        #[arg(long)]
        base: String,
        /// `id:opacity`, bottom to top.
        #[arg(long = "overlay", value_parser = parse_overlay)]
        overlays: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one record's XML.
    Export {
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// TOML file with `[[account]]` tables.
        #[arg(long)]
        accounts: PathBuf,
        /// Built UI bundle to serve instead of the embedded page.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Print the hash to put in an accounts file. Reads stdin when no
    /// password is given.
    HashPassword { password: Option<String> },
}

#[derive(clap::Args)]
struct Target {
    #[arg(long, value_delimiter = ',', required = true)]
    places: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    periods: Vec<String>,
}

impl Target {
    fn request(&self) -> CompositionRequest {
        CompositionRequest::new(&self.places, &self.periods)
    }
}

fn parse_overlay(s: &str) -> Result<(String, f64), String> {
    let (id, opacity) = s.rsplit_once(':').ok_or("expected id:opacity")?;
    let opacity = opacity.parse().map_err(|_| format!("bad opacity '{opacity}'"))?;
    Ok((id.to_string(), opacity))
}

/// The command ran but found problems; exit status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Rejected(String);

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<SiaError>() {
        Some(e) if is_storage(e) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("SIA_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&cli, &e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn report_error(cli: &Cli, e: &anyhow::Error) {
    let core = e.downcast_ref::<SiaError>();
    if cli.format == Format::Json {
        let mut body = json!({
            "error": core.map_or("failed", SiaError::code),
            "message": format!("{e:#}"),
        });
        if let Some(SiaError::ValidationFailed(v)) = core {
            body["violations"] = json!(v);
        }
        eprintln!("{body}");
        return;
    }
    if e.downcast_ref::<Rejected>().is_none() {
        eprintln!("error: {e:#}");
    }
    if let Some(SiaError::ValidationFailed(v)) = core {
        for violation in v {
            eprintln!("  {}: {} ({})", violation.path, violation.message, violation.rule);
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let dir = &cli.data_dir;
    match &cli.command {
        Command::Init { schema, reference } => init(cli, schema.as_deref(), reference.as_deref()),
        Command::Ingest { manifest } => ingest(cli, manifest),
        Command::Validate => validate(cli),
        Command::Reindex => {
            let index = Store::open(dir)?.rebuild_index()?;
            emit(cli, &json!({ "records": index.len() }), || format!("indexed {} records", index.len()))
        }
        Command::Search {
            kind,
            place,
            period_from,
            period_to,
            keyword,
            author,
            archived,
            offset,
            limit,
        } => {
            let spec = QuerySpec {
                kinds: kind.iter().copied().collect(),
                place_ids: place.iter().cloned().collect(),
                epoch_interval: match (period_from, period_to) {
                    (None, None) => None,
                    (Some(a), Some(b)) => Some((*a, *b)),
                    (Some(a), None) | (None, Some(a)) => Some((*a, *a)),
                },
                keywords: keyword.iter().cloned().collect(),
                author: author.clone(),
                include_archived: *archived,
            };
            let page = Store::open_read_only(dir)?.search(&spec, Page::new(*offset, *limit))?;
            emit(cli, &page, || {
                let mut s = format!("{} of {} results\n", page.items.len(), page.total);
                for item in &page.items {
                    s.push_str(&format!("{}\t{}\t{}\n", item.id, item.kind.as_str(), item.title));
                }
                s.trim_end().to_string()
            })
        }
        Command::ComposeModel { target, out } => {
            let scene = Store::open_read_only(dir)?.compose_model(&target.request())?;
            warn(&scene.warnings);
            write_out(out.as_deref(), &serialize_x3d(&scene))
        }
        Command::ComposePlan { target, out } => {
            let plan = Store::open_read_only(dir)?.compose_plan(&target.request())?;
            warn(&plan.warnings);
            write_out(out.as_deref(), &serialize_svg(&plan)?)
        }
        Command::ComposeMontage { base, overlays, out } => {
            let store = Store::open_read_only(dir)?;
            let mut plan = store.compose_photomontage(base, overlays)?;
            link_local_media(&mut plan, &store);
            write_out(out.as_deref(), &serialize_svg(&plan)?)
        }
        Command::Export { id, out } => write_out(out.as_deref(), &Store::open_read_only(dir)?.export_xml(id)?),
        Command::Serve {
            listen,
            accounts,
            ui_dir,
        } => {
            let auth = Auth::load(accounts)?;
            let mut state = AppState::new(Store::open(dir)?, auth);
            state.ui_dir = ui_dir.clone();
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(sia_server::serve(state, *listen))?;
            Ok(())
        }
        Command::HashPassword { password } => {
            let password = match password {
                Some(p) => p.clone(),
                None => {
                    let mut s = String::new();
                    io::stdin().read_to_string(&mut s)?;
                    s.trim_end_matches(['\r', '\n']).to_string()
                }
            };
            println!("{}", hash_password(&password));
            Ok(())
        }
    }
}

fn emit<T: Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) -> anyhow::Result<()> {
    match cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value)?),
        Format::Text => println!("{}", text()),
    }
    Ok(())
}

fn warn(warnings: &[CompositionWarning]) {
    for w in warnings {
        eprintln!("warning: nothing for {} in {} ({})", w.place_id, w.period_id, w.reason);
    }
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Points raster layers at the stored files so the SVG opens locally.
fn link_local_media(plan: &mut PlanDocument, store: &Store) {
    for layer in &mut plan.layers {
        if let LayerContent::RasterEmbed { href } = &mut layer.content {
            if let Some(path) = store.layout().media_path(href) {
                if let Ok(abs) = path.canonicalize() {
                    *href = format!("file://{}", abs.display());
                }
            }
        }
    }
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn init(cli: &Cli, schema: Option<&Path>, reference: Option<&Path>) -> anyhow::Result<()> {
    let dir = &cli.data_dir;
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        bail!(Rejected(format!("{} is not empty", dir.display())));
    }
    let schema = match schema {
        Some(p) => parse_schema(&read_file(p)?)?,
        None => MetadataSchema::empty(1),
    };
    let reference = match reference {
        Some(p) => parse_reference(&read_file(p)?)?,
        None => ReferenceData::default(),
    };
    let mut violations = validate_periods(&reference.periods);
    violations.extend(validate_places(&reference.places));
    violations.extend(validate_vocabularies(&reference.vocabularies));
    violations.extend(validate_schema(&schema, &reference.vocabularies));
    if !violations.is_empty() {
        return Err(SiaError::ValidationFailed(violations).into());
    }
    Store::create(dir, &schema, &reference)?;
    emit(cli, &json!({ "created": dir, "schemaVersion": schema.version }), || {
        format!("created {} (schema version {})", dir.display(), schema.version)
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EntryOutcome {
    index: usize,
    title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<Violation>,
}

fn ingest_entry(store: &Store, base: &Path, draft: RecordDraft) -> Result<String, SiaError> {
    let href = draft.content.href.clone();
    let record = if href.is_empty() || href.contains("://") {
        store.ingest(draft, Role::Expert)?
    } else {
        let path = base.join(&href);
        if !path.is_file() {
            return Err(SiaError::InvalidValue(format!("asset {} not found", path.display())));
        }
        store.ingest_asset(draft, &path, Role::Expert)?
    };
    Ok(record.id.clone())
}

fn ingest(cli: &Cli, manifest_path: &Path) -> anyhow::Result<()> {
    let manifest = parse_manifest(&read_file(manifest_path)?)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let store = Store::open(&cli.data_dir)?;
    store
        .merge_reference(&manifest.reference, Role::Expert)
        .context("manifest reference data rejected")?;

    let mut outcomes = Vec::new();
    for (index, draft) in manifest.entries.into_iter().enumerate() {
        let title = draft.title.clone();
        let outcome = match ingest_entry(&store, base, draft) {
            Ok(id) => EntryOutcome {
                index,
                title,
                id: Some(id),
                error: None,
                violations: vec![],
            },
            Err(e) if is_storage(&e) => return Err(e.into()),
            Err(e) => EntryOutcome {
                index,
                title,
                id: None,
                error: Some(e.to_string()),
                violations: match e {
                    SiaError::ValidationFailed(v) => v,
                    _ => vec![],
                },
            },
        };
        outcomes.push(outcome);
    }
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    emit(cli, &outcomes, || {
        let mut s = String::new();
        for o in &outcomes {
            match (&o.id, &o.error) {
                (Some(id), _) => s.push_str(&format!("ok\t{}\t{}\n", id, o.title)),
                (None, Some(err)) => {
                    s.push_str(&format!("failed\t#{}\t{}: {}\n", o.index, o.title, err));
                    for v in &o.violations {
                        s.push_str(&format!("\t{}: {} ({})\n", v.path, v.message, v.rule));
                    }
                }
                (None, None) => {}
            }
        }
        s.push_str(&format!("{} ingested, {} failed", outcomes.len() - failed, failed));
        s
    })?;
    if failed > 0 {
        bail!(Rejected(format!("{failed} entries failed")));
    }
    Ok(())
}

fn is_storage(e: &SiaError) -> bool {
    matches!(
        e,
        SiaError::Storage(_) | SiaError::Io(_) | SiaError::Locked(_) | SiaError::CorruptRecordFile { .. }
    )
}

#[derive(Serialize)]
struct Finding<'a> {
    record: &'a str,
    #[serde(flatten)]
    violation: &'a Violation,
}

fn validate(cli: &Cli) -> anyhow::Result<()> {
    let store = match Store::open_read_only(&cli.data_dir) {
        Ok(s) => s,
        Err(e @ SiaError::CorruptRecordFile { .. }) => bail!(Rejected(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let snap = store.snapshot();
    let mut global = validate_periods(&snap.reference.periods);
    global.extend(validate_places(&snap.reference.places));
    global.extend(validate_vocabularies(&snap.reference.vocabularies));
    global.extend(validate_schema(&snap.schema, &snap.reference.vocabularies));
    let mut per_record = Vec::new();
    for (id, record) in &snap.records {
        per_record.extend(snap.validate(record).into_iter().map(|v| (id.clone(), v)));
    }
    let findings: Vec<Finding> = global
        .iter()
        .map(|v| Finding { record: "", violation: v })
        .chain(per_record.iter().map(|(id, v)| Finding { record: id, violation: v }))
        .collect();
    let count = findings.len();
    emit(
        cli,
        &json!({ "records": snap.records.len(), "violations": findings }),
        || {
            let mut s = String::new();
            for f in &findings {
                let at = if f.record.is_empty() { String::new() } else { format!("{} ", f.record) };
                s.push_str(&format!("{at}{}: {} ({})\n", f.violation.path, f.violation.message, f.violation.rule));
            }
            s.push_str(&format!("{} records, {} violations", snap.records.len(), count));
            s
        },
    )?;
    if count > 0 {
        bail!(Rejected(format!("{count} violations")));
    }
    Ok(())
}
