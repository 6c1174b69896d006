//! The dual store: one canonical XML file per record under `records/` and a
//! derived index persisted under `index/`.
//!
//! Record files are the source of truth. Every mutation goes through a single
//! writer slot and commits in this order: record file written to a temporary
//! name and synced, renamed into place, index persisted the same way, then
//! the in-memory snapshot is swapped. Readers clone the current snapshot and
//! never block on the writer. On open, leftovers of an interrupted commit are
//! removed and the index is rebuilt if it disagrees with the record files.

mod layout;

pub use layout::{media_type_for, slugify, StoreLayout, StoreLock};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SiaError};
use crate::evolution::{self, MigrationPlan, SchemaChange};
use crate::html::{self, HtmlOptions};
use crate::index::IndexSnapshot;
use crate::model::{
    DocumentRecord, MetadataSchema, Period, Place, RecordDraft, RecordPatch, ReferenceData, Role,
    Vocabulary,
};
use crate::plan::{self, AssetSource, PlanDocument};
use crate::query::{self, Page, QuerySpec, RelatednessWeights, ResultPage};
use crate::scene::{self, CompositionRequest, Scene};
use crate::validate::{
    validate_periods, validate_places, validate_record, validate_schema, validate_vocabularies, Rule,
    Violation,
};
use crate::xml::record::{export_record, parse_record};
use crate::xml::reference::{export_reference, parse_reference};
use crate::xml::schema::{export_schema, parse_schema};

use layout::{rename_synced, sync_dir, write_synced};

/// Steps of the commit protocol at which a test can make the store fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultPoint {
    AfterTempWrite,
    AfterRecordRename,
    AfterIndexTempWrite,
    AfterIndexRename,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 4] = [
        FaultPoint::AfterTempWrite,
        FaultPoint::AfterRecordRename,
        FaultPoint::AfterIndexTempWrite,
        FaultPoint::AfterIndexRename,
    ];
}

/// Committed state visible to readers.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub schema: Arc<MetadataSchema>,
    pub schema_versions: BTreeSet<u32>,
    pub reference: Arc<ReferenceData>,
    pub records: BTreeMap<String, Arc<DocumentRecord>>,
    pub index: Arc<IndexSnapshot>,
}

impl Snapshot {
    pub fn record(&self, id: &str) -> Result<&Arc<DocumentRecord>> {
        self.records
            .get(id)
            .ok_or_else(|| SiaError::NotFound(id.to_string()))
    }

    pub fn validate(&self, record: &DocumentRecord) -> Vec<Violation> {
        validate_record(
            record,
            &self.schema,
            &self.reference.vocabularies,
            &self.reference.periods,
            &self.reference.places,
        )
    }
}

#[derive(Deserialize)]
struct PersistedIndex {
    format: u32,
    index: IndexSnapshot,
}

const INDEX_FORMAT: u32 = 1;

pub struct Store {
    layout: StoreLayout,
    lock: Option<StoreLock>,
    writer: Mutex<()>,
    current: RwLock<Arc<Snapshot>>,
    fault: Mutex<Option<FaultPoint>>,
    poisoned: AtomicBool,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("root", &self.layout.root)
            .field("read_only", &self.lock.is_none())
            .finish_non_exhaustive()
    }
}

fn now_millis() -> DateTime<Utc> {
    let now = Utc::now();
    DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn storage(context: &str, path: &Path, e: impl std::fmt::Display) -> SiaError {
    SiaError::Storage(format!("{context} {}: {e}", path.display()))
}

fn parse_version(name: &str) -> Option<u32> {
    name.strip_prefix('v')?.strip_suffix(".xml")?.parse().ok()
}

/// `.<id>.v<N>.staged` → (id, N)
fn parse_staged(name: &str) -> Option<(&str, u32)> {
    let rest = name.strip_prefix('.')?.strip_suffix(".staged")?;
    let (id, v) = rest.rsplit_once(".v")?;
    Some((id, v.parse().ok()?))
}

fn read_dir_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| storage("cannot list", dir, e))? {
        let entry = entry?;
        if let Some(name) = entry.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    names.sort();
    Ok(names)
}

fn read_record_file(path: &Path, expected_id: &str) -> Result<DocumentRecord> {
    let corrupt = |reason: String| SiaError::CorruptRecordFile {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path).map_err(|e| corrupt(e.to_string()))?;
    let record = parse_record(&bytes).map_err(|e| corrupt(e.to_string()))?;
    if record.id != expected_id {
        return Err(corrupt(format!(
            "file holds record '{}' but is named for '{expected_id}'",
            record.id
        )));
    }
    Ok(record)
}

struct DiskState {
    schema: MetadataSchema,
    schema_versions: BTreeSet<u32>,
    reference: ReferenceData,
    records: BTreeMap<String, Arc<DocumentRecord>>,
}

fn load_schemas(layout: &StoreLayout) -> Result<(MetadataSchema, BTreeSet<u32>)> {
    let dir = layout.schema_dir();
    if !dir.is_dir() {
        return Err(SiaError::Storage(format!(
            "{} is not an initialized store",
            layout.root.display()
        )));
    }
    let versions: BTreeSet<u32> = read_dir_names(&dir)?
        .iter()
        .filter_map(|n| parse_version(n))
        .collect();
    let active = *versions.last().ok_or_else(|| {
        SiaError::Storage(format!("{} holds no schema version", dir.display()))
    })?;
    let path = layout.schema_file(active);
    let bytes = fs::read(&path)?;
    let schema = parse_schema(&bytes).map_err(|e| storage("cannot read schema", &path, e))?;
    if schema.version != active {
        return Err(storage(
            "schema version mismatch in",
            &path,
            format!("declares v{}", schema.version),
        ));
    }
    Ok((schema, versions))
}

fn load_reference(layout: &StoreLayout) -> Result<ReferenceData> {
    let path = layout.reference_file();
    if !path.exists() {
        return Ok(ReferenceData::default());
    }
    let bytes = fs::read(&path)?;
    parse_reference(&bytes).map_err(|e| storage("cannot read reference data", &path, e))
}

/// Reads every record file. With `repair`, leftovers of interrupted commits
/// are rolled forward or removed first; without it they are only taken into
/// account.
fn load_records(
    layout: &StoreLayout,
    versions: &BTreeSet<u32>,
    repair: bool,
) -> Result<BTreeMap<String, Arc<DocumentRecord>>> {
    let dir = layout.records_dir();
    let mut overrides: BTreeMap<String, PathBuf> = BTreeMap::new();
    for name in read_dir_names(&dir)? {
        let path = dir.join(&name);
        if let Some((id, v)) = parse_staged(&name) {
            let committed = versions.contains(&v);
            if repair {
                if committed {
                    tracing::info!(record = id, version = v, "rolling staged migration forward");
                    fs::rename(&path, layout.record_file(id))?;
                } else {
                    fs::remove_file(&path)?;
                }
            } else if committed {
                overrides.insert(id.to_string(), path);
            }
        } else if name.starts_with('.') && name.ends_with(".tmp") && repair {
            tracing::info!(file = %path.display(), "removing interrupted write");
            fs::remove_file(&path)?;
        }
    }
    if repair {
        sync_dir(&dir)?;
    }

    let mut records = BTreeMap::new();
    for name in read_dir_names(&dir)? {
        if name.starts_with('.') {
            continue;
        }
        let Some(id) = name.strip_suffix(".xml") else {
            continue;
        };
        let path = overrides
            .remove(id)
            .unwrap_or_else(|| dir.join(&name));
        let record = read_record_file(&path, id)?;
        records.insert(id.to_string(), Arc::new(record));
    }
    Ok(records)
}

fn load_disk(layout: &StoreLayout, repair: bool) -> Result<DiskState> {
    if repair {
        let dir = layout.schema_dir();
        for name in read_dir_names(&dir)? {
            if name.starts_with('.') && name.ends_with(".tmp") {
                fs::remove_file(dir.join(name))?;
            }
        }
    }
    let (schema, schema_versions) = load_schemas(layout)?;
    let reference = load_reference(layout)?;
    let records = load_records(layout, &schema_versions, repair)?;
    Ok(DiskState {
        schema,
        schema_versions,
        reference,
        records,
    })
}

fn read_persisted_index(layout: &StoreLayout) -> Option<IndexSnapshot> {
    let bytes = fs::read(layout.index_file()).ok()?;
    let persisted: PersistedIndex = serde_json::from_slice(&bytes).ok()?;
    (persisted.format == INDEX_FORMAT).then_some(persisted.index)
}

/// Reads assets of records from `media/`.
#[derive(Debug, Clone)]
pub struct MediaAssets {
    layout: StoreLayout,
}

impl AssetSource for MediaAssets {
    fn read_asset(&self, record: &DocumentRecord) -> Result<Vec<u8>> {
        let path = self.layout.media_path(&record.content.href).ok_or_else(|| {
            SiaError::Storage(format!(
                "asset '{}' of record '{}' is not stored locally",
                record.content.href, record.id
            ))
        })?;
        fs::read(&path).map_err(|e| storage("cannot read asset", &path, e))
    }
}

impl Store {
    /// Initializes an empty store at `root` with its first schema version
    /// and reference data, then opens it.
    pub fn create(root: impl Into<PathBuf>, schema: &MetadataSchema, reference: &ReferenceData) -> Result<Store> {
        let layout = StoreLayout::new(root);
        layout.create_dirs()?;
        let lock = StoreLock::acquire(&layout)?;
        if read_dir_names(&layout.schema_dir())?
            .iter()
            .any(|n| parse_version(n).is_some())
        {
            return Err(SiaError::InvalidRequest(format!(
                "{} is already initialized",
                layout.root.display()
            )));
        }
        let mut violations = validate_periods(&reference.periods);
        violations.extend(validate_places(&reference.places));
        violations.extend(validate_vocabularies(&reference.vocabularies));
        violations.extend(validate_schema(schema, &reference.vocabularies));
        if !violations.is_empty() {
            return Err(SiaError::ValidationFailed(violations));
        }
        write_atomic(&layout.reference_file(), export_reference(reference).as_bytes())?;
        write_atomic(&layout.schema_file(schema.version), export_schema(schema).as_bytes())?;
        drop(lock);
        Store::open(layout.root)
    }

    /// Opens the store for reading and writing. Fails with `Locked` when
    /// another handle holds it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let layout = StoreLayout::new(root);
        let lock = StoreLock::acquire(&layout)?;
        let disk = load_disk(&layout, true)?;
        let index = IndexSnapshot::from_records(disk.records.values().map(Arc::as_ref));
        match read_persisted_index(&layout) {
            Some(persisted) if persisted == index => {}
            stale => {
                if stale.is_some() || layout.index_file().exists() {
                    tracing::warn!(root = %layout.root.display(), "index disagrees with record files; rebuilt");
                }
                persist_index(&layout, &index, None)?;
            }
        }
        Ok(Store::from_parts(layout, Some(lock), disk, index))
    }

    /// Opens the store without taking the lock. Nothing is written; every
    /// mutation fails.
    pub fn open_read_only(root: impl Into<PathBuf>) -> Result<Store> {
        let layout = StoreLayout::new(root);
        let disk = load_disk(&layout, false)?;
        let index = IndexSnapshot::from_records(disk.records.values().map(Arc::as_ref));
        Ok(Store::from_parts(layout, None, disk, index))
    }

    fn from_parts(layout: StoreLayout, lock: Option<StoreLock>, disk: DiskState, index: IndexSnapshot) -> Store {
        let snapshot = Snapshot {
            schema: Arc::new(disk.schema),
            schema_versions: disk.schema_versions,
            reference: Arc::new(disk.reference),
            records: disk.records,
            index: Arc::new(index),
        };
        Store {
            layout,
            lock,
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(snapshot)),
            fault: Mutex::new(None),
            poisoned: AtomicBool::new(false),
        }
    }

    pub fn layout(&self) -> &StoreLayout {
        &self.layout
    }

    pub fn is_read_only(&self) -> bool {
        self.lock.is_none()
    }

    /// The committed state at the time of the call.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn assets(&self) -> MediaAssets {
        MediaAssets {
            layout: self.layout.clone(),
        }
    }

    /// Makes the next commit fail at `point`. Testing hook; the store refuses
    /// further writes afterwards until reopened.
    pub fn inject_fault(&self, point: FaultPoint) {
        *self.fault.lock().unwrap_or_else(|e| e.into_inner()) = Some(point);
    }

    fn fault_at(&self, point: FaultPoint) -> Result<()> {
        let mut slot = self.fault.lock().unwrap_or_else(|e| e.into_inner());
        if *slot == Some(point) {
            *slot = None;
            return Err(SiaError::Storage(format!("injected fault at {point:?}")));
        }
        Ok(())
    }

    fn begin_write(&self) -> Result<MutexGuard<'_, ()>> {
        if self.lock.is_none() {
            return Err(SiaError::Storage("store was opened read-only".into()));
        }
        let guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if self.poisoned.load(Ordering::SeqCst) {
            return Err(SiaError::Storage(
                "an earlier commit failed midway; reopen the store to recover".into(),
            ));
        }
        Ok(guard)
    }

    /// Runs the disk part of a commit; any failure poisons the store since
    /// disk and memory may now disagree.
    fn commit_disk(&self, f: impl FnOnce() -> Result<()>) -> Result<()> {
        f().inspect_err(|e| {
            tracing::error!(error = %e, "commit failed; store poisoned");
            self.poisoned.store(true, Ordering::SeqCst);
        })
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }

    /// Writes one record and the updated index, then publishes.
    fn commit_record(&self, snap: &Snapshot, record: DocumentRecord) -> Result<Arc<DocumentRecord>> {
        let mut index = (*snap.index).clone();
        index.upsert(&record);
        let bytes = export_record(&record);
        self.commit_disk(|| {
            let tmp = self.layout.record_temp(&record.id);
            write_synced(&tmp, bytes.as_bytes())?;
            self.fault_at(FaultPoint::AfterTempWrite)?;
            rename_synced(&tmp, &self.layout.record_file(&record.id))?;
            self.fault_at(FaultPoint::AfterRecordRename)?;
            persist_index(&self.layout, &index, Some(self))
        })?;
        let record = Arc::new(record);
        let mut next = snap.clone();
        next.records.insert(record.id.clone(), record.clone());
        next.index = Arc::new(index);
        self.publish(next);
        Ok(record)
    }

    fn allocate_id(snap: &Snapshot, title: &str) -> String {
        let base = slugify(title);
        if !snap.records.contains_key(&base) {
            return base;
        }
        (2..)
            .map(|n| format!("{base}-{n}"))
            .find(|id| !snap.records.contains_key(id))
            .expect("unbounded suffixes")
    }

    fn check_local_asset(&self, record: &DocumentRecord, out: &mut Vec<Violation>) {
        if record.content.checksum.is_empty() {
            return;
        }
        let Some(path) = self.layout.media_path(&record.content.href) else {
            return;
        };
        if let Ok(bytes) = fs::read(&path) {
            if sha256_hex(&bytes) != record.content.checksum {
                out.push(Violation::new(
                    "content.checksum",
                    Rule::InvalidChecksum,
                    format!("checksum does not match media/{}", record.content.href),
                ));
            }
        }
    }

    pub fn ingest(&self, draft: RecordDraft, actor: Role) -> Result<Arc<DocumentRecord>> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let snap = self.snapshot();
        let id = Store::allocate_id(&snap, &draft.title);
        let record = draft.into_record(id, snap.schema.version, now_millis());
        let mut violations = snap.validate(&record);
        self.check_local_asset(&record, &mut violations);
        if !violations.is_empty() {
            return Err(SiaError::ValidationFailed(violations));
        }
        let record = self.commit_record(&snap, record)?;
        tracing::debug!(id = %record.id, "ingested");
        Ok(record)
    }

    /// Copies the file at `source` into `media/`, fills the draft's content
    /// reference from it and ingests the draft. The copy is removed again if
    /// the ingest fails.
    pub fn ingest_asset(&self, mut draft: RecordDraft, source: &Path, actor: Role) -> Result<Arc<DocumentRecord>> {
        actor.require_expert()?;
        if self.is_read_only() {
            return Err(SiaError::Storage("store was opened read-only".into()));
        }
        let bytes = fs::read(source).map_err(|e| storage("cannot read asset", source, e))?;
        let checksum = sha256_hex(&bytes);
        let base = source
            .file_name()
            .and_then(|n| n.to_str())
            .map(|n| {
                n.chars()
                    .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
                    .collect::<String>()
            })
            .filter(|n| !n.is_empty() && !n.starts_with('.'))
            .unwrap_or_else(|| "asset".into());
        let name = format!("{}-{base}", &checksum[..12]);
        let target = self.layout.media_dir().join(&name);
        let created = if target.exists() {
            if sha256_hex(&fs::read(&target)?) != checksum {
                return Err(storage("refusing to overwrite", &target, "different content"));
            }
            false
        } else {
            let tmp = self.layout.media_dir().join(format!(".{name}.tmp"));
            write_synced(&tmp, &bytes)?;
            rename_synced(&tmp, &target)?;
            true
        };
        draft.content.href = name;
        draft.content.checksum = checksum;
        draft.content.byte_size = bytes.len() as u64;
        if draft.content.media_format.is_empty() {
            draft.content.media_format = media_type_for(source).to_string();
        }
        self.ingest(draft, actor).inspect_err(|_| {
            if created {
                let _ = fs::remove_file(&target);
            }
        })
    }

    pub fn read(&self, id: &str) -> Result<Arc<DocumentRecord>> {
        self.snapshot().record(id).cloned()
    }

    pub fn update(&self, id: &str, patch: RecordPatch, actor: Role) -> Result<Arc<DocumentRecord>> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let snap = self.snapshot();
        let mut record = (**snap.record(id)?).clone();
        patch.apply_to(&mut record);
        record.audit.updated = now_millis().max(record.audit.created);
        let mut violations = snap.validate(&record);
        self.check_local_asset(&record, &mut violations);
        if !violations.is_empty() {
            return Err(SiaError::ValidationFailed(violations));
        }
        self.commit_record(&snap, record)
    }

    /// Soft delete: the record stays on disk but leaves default queries.
    pub fn archive(&self, id: &str, actor: Role) -> Result<Arc<DocumentRecord>> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let snap = self.snapshot();
        let current = snap.record(id)?;
        if current.is_archived() {
            return Ok(current.clone());
        }
        let mut record = (**current).clone();
        let now = now_millis().max(record.audit.created);
        record.audit.archived = Some(now);
        record.audit.updated = now;
        self.commit_record(&snap, record)
    }

    pub fn export_xml(&self, id: &str) -> Result<String> {
        Ok(export_record(self.snapshot().record(id)?))
    }

    /// Parses a record document without persisting it.
    pub fn import_xml(&self, bytes: &[u8]) -> Result<DocumentRecord> {
        let record = parse_record(bytes)?;
        if !self.snapshot().schema_versions.contains(&record.schema_version) {
            return Err(SiaError::SchemaVersionUnknown(record.schema_version));
        }
        Ok(record)
    }

    /// Re-derives the index from the record files alone and replaces the
    /// persisted one. A corrupt file aborts the rebuild and leaves the old
    /// index in place.
    pub fn rebuild_index(&self) -> Result<IndexSnapshot> {
        let _w = self.begin_write()?;
        let snap = self.snapshot();
        let records = load_records(&self.layout, &snap.schema_versions, false)?;
        let index = IndexSnapshot::from_records(records.values().map(Arc::as_ref));
        self.commit_disk(|| persist_index(&self.layout, &index, None))?;
        let mut next = (*snap).clone();
        next.records = records;
        next.index = Arc::new(index.clone());
        self.publish(next);
        Ok(index)
    }

    pub fn render_html_view(&self, id: &str, opts: &HtmlOptions) -> Result<String> {
        let snap = self.snapshot();
        Ok(html::render_html_view(snap.record(id)?, &snap.reference, opts))
    }

    pub fn search(&self, spec: &QuerySpec, page: Page) -> Result<ResultPage> {
        let snap = self.snapshot();
        query::search(spec, page, &snap.index, &snap.reference)
    }

    pub fn browse_by_history(&self, period_id: &str, page: Page) -> Result<ResultPage> {
        let snap = self.snapshot();
        query::browse_by_history(period_id, page, &snap.index, &snap.reference)
    }

    pub fn browse_by_place(&self, place_id: &str, page: Page) -> Result<ResultPage> {
        let snap = self.snapshot();
        query::browse_by_place(place_id, page, &snap.index, &snap.reference)
    }

    pub fn related_documents(&self, id: &str, limit: usize) -> Result<ResultPage> {
        let snap = self.snapshot();
        query::related_documents(id, limit, RelatednessWeights::default(), &snap.index)
    }

    pub fn list_facets(&self) -> BTreeMap<String, Vec<String>> {
        let snap = self.snapshot();
        query::list_facets(&snap.index, &snap.reference)
    }

    pub fn compose_model(&self, req: &CompositionRequest) -> Result<Scene> {
        let snap = self.snapshot();
        scene::compose_model(req, &snap.reference, snap.records.values().map(Arc::as_ref))
    }

    pub fn compose_plan(&self, req: &CompositionRequest) -> Result<PlanDocument> {
        let snap = self.snapshot();
        plan::compose_plan(
            req,
            &snap.reference,
            snap.records.values().map(Arc::as_ref),
            &self.assets(),
        )
    }

    pub fn compose_photomontage(&self, base_id: &str, overlays: &[(String, f64)]) -> Result<PlanDocument> {
        plan::compose_photomontage(base_id, overlays, &self.snapshot().records)
    }

    /// Plan for migrating the active schema by `delta`. Nothing is persisted.
    pub fn propose_schema(&self, delta: &[SchemaChange]) -> Result<MigrationPlan> {
        let snap = self.snapshot();
        evolution::propose_schema(&snap.schema, delta, &snap.reference.vocabularies)
    }

    /// Moves the store to `plan.to_version`, rewriting every record in one
    /// batch. Writing the new schema file is the commit point: staged record
    /// files are rolled forward on open once it exists, and discarded when
    /// it does not.
    pub fn apply_migration(&self, plan: &MigrationPlan, actor: Role) -> Result<Arc<MetadataSchema>> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let snap = self.snapshot();
        if plan.from_version != snap.schema.version {
            return Err(SiaError::StalePlan {
                plan: plan.from_version,
                active: snap.schema.version,
            });
        }
        // the plan may have been edited in transit; trust only the delta
        let fresh = evolution::propose_schema(&snap.schema, &plan.delta, &snap.reference.vocabularies)?;
        evolution::check_defaults(&fresh)?;

        let mut migrated = BTreeMap::new();
        let target = Arc::new(fresh.target.clone());
        let next_snapshot = Snapshot {
            schema: target.clone(),
            ..(*snap).clone()
        };
        let mut violations = Vec::new();
        for (id, r) in &snap.records {
            let m = evolution::migrate_record(r, &fresh, &snap.reference.vocabularies)?;
            violations.extend(next_snapshot.validate(&m).into_iter().map(|v| Violation {
                path: format!("{id}/{}", v.path),
                ..v
            }));
            migrated.insert(id.clone(), Arc::new(m));
        }
        if !violations.is_empty() {
            return Err(SiaError::ValidationFailed(violations));
        }
        let index = IndexSnapshot::from_records(migrated.values().map(Arc::as_ref));
        let to = fresh.to_version;

        let mut staged = Vec::with_capacity(migrated.len());
        for (id, r) in &migrated {
            let path = self.layout.record_staged(id, to);
            if let Err(e) = write_synced(&path, export_record(r).as_bytes()) {
                for p in &staged {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(e);
            }
            staged.push(path);
        }
        sync_dir(&self.layout.records_dir())?;
        if let Err(e) = write_atomic(&self.layout.schema_file(to), export_schema(&fresh.target).as_bytes()) {
            for p in &staged {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        // committed; from here on a failure is repaired by reopening
        self.commit_disk(|| {
            for id in migrated.keys() {
                fs::rename(self.layout.record_staged(id, to), self.layout.record_file(id))?;
            }
            sync_dir(&self.layout.records_dir())?;
            persist_index(&self.layout, &index, None)
        })?;

        let mut versions = snap.schema_versions.clone();
        versions.insert(to);
        self.publish(Snapshot {
            schema: target.clone(),
            schema_versions: versions,
            reference: snap.reference.clone(),
            records: migrated,
            index: Arc::new(index),
        });
        tracing::info!(from = fresh.from_version, to, "schema migrated");
        Ok(target)
    }

    /// Historical schema version `version`.
    pub fn schema_version(&self, version: u32) -> Result<MetadataSchema> {
        if !self.snapshot().schema_versions.contains(&version) {
            return Err(SiaError::SchemaVersionUnknown(version));
        }
        let bytes = fs::read(self.layout.schema_file(version))?;
        parse_schema(&bytes)
    }

    fn commit_reference(&self, reference: ReferenceData) -> Result<()> {
        let mut violations = validate_periods(&reference.periods);
        violations.extend(validate_places(&reference.places));
        violations.extend(validate_vocabularies(&reference.vocabularies));
        if !violations.is_empty() {
            return Err(SiaError::ValidationFailed(violations));
        }
        let snap = self.snapshot();
        let bytes = export_reference(&reference);
        self.commit_disk(|| write_atomic(&self.layout.reference_file(), bytes.as_bytes()))?;
        self.publish(Snapshot {
            reference: Arc::new(reference),
            ..(*snap).clone()
        });
        Ok(())
    }

    /// Adds a period or replaces the one with the same id.
    pub fn put_period(&self, period: Period, actor: Role) -> Result<()> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let mut reference = (*self.snapshot().reference).clone();
        match reference.periods.iter_mut().find(|p| p.id == period.id) {
            Some(slot) => *slot = period,
            None => reference.periods.push(period),
        }
        self.commit_reference(reference)
    }

    /// Adds a place or replaces the one with the same id.
    pub fn put_place(&self, place: Place, actor: Role) -> Result<()> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let mut reference = (*self.snapshot().reference).clone();
        match reference.places.iter_mut().find(|p| p.id == place.id) {
            Some(slot) => *slot = place,
            None => reference.places.push(place),
        }
        self.commit_reference(reference)
    }

    /// Adds `term` to `facet`, creating the facet if needed. Terms are never
    /// removed, so no stored record can lose its validity.
    pub fn add_vocabulary_term(&self, facet: &str, term: &str, actor: Role) -> Result<()> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let mut reference = (*self.snapshot().reference).clone();
        match reference.vocabularies.iter_mut().find(|v| v.facet_name == facet) {
            Some(v) if v.contains(term) => return Ok(()),
            Some(v) => v.terms.push(term.to_string()),
            None => reference.vocabularies.push(Vocabulary {
                facet_name: facet.to_string(),
                terms: vec![term.to_string()],
            }),
        }
        self.commit_reference(reference)
    }

    /// Upserts every period and place of `incoming` and adds its vocabulary
    /// terms, as one change to the reference data.
    pub fn merge_reference(&self, incoming: &ReferenceData, actor: Role) -> Result<()> {
        actor.require_expert()?;
        let _w = self.begin_write()?;
        let mut reference = (*self.snapshot().reference).clone();
        for period in &incoming.periods {
            match reference.periods.iter_mut().find(|p| p.id == period.id) {
                Some(slot) => *slot = period.clone(),
                None => reference.periods.push(period.clone()),
            }
        }
        for place in &incoming.places {
            match reference.places.iter_mut().find(|p| p.id == place.id) {
                Some(slot) => *slot = place.clone(),
                None => reference.places.push(place.clone()),
            }
        }
        for vocab in &incoming.vocabularies {
            match reference.vocabularies.iter_mut().find(|v| v.facet_name == vocab.facet_name) {
                Some(v) => {
                    for t in &vocab.terms {
                        if !v.contains(t) {
                            v.terms.push(t.clone());
                        }
                    }
                }
                None => reference.vocabularies.push(vocab.clone()),
            }
        }
        if reference == *self.snapshot().reference {
            return Ok(());
        }
        self.commit_reference(reference)
    }
}

/// Temporary file plus rename, both synced.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| SiaError::Storage(format!("bad path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    write_synced(&tmp, bytes)?;
    rename_synced(&tmp, path)
}

fn persist_index(layout: &StoreLayout, index: &IndexSnapshot, faults: Option<&Store>) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        format: u32,
        index: &'a IndexSnapshot,
    }
    let bytes = serde_json::to_vec(&Out {
        format: INDEX_FORMAT,
        index,
    })
    .map_err(|e| SiaError::Storage(format!("cannot encode index: {e}")))?;
    let path = layout.index_file();
    let tmp = layout.index_dir().join(".snapshot.json.tmp");
    write_synced(&tmp, &bytes)?;
    if let Some(s) = faults {
        s.fault_at(FaultPoint::AfterIndexTempWrite)?;
    }
    rename_synced(&tmp, &path)?;
    if let Some(s) = faults {
        s.fault_at(FaultPoint::AfterIndexRename)?;
    }
    Ok(())
}
