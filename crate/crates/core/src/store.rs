//! Append-only JSON-lines record store.
//!
//! Layout under the data directory:
//!
//! ```text
//! <root>/projects.jsonl
//! <root>/assessments.jsonl
//! <root>/reviews.jsonl
//! <root>/catalogs.jsonl
//! <root>/LOCK
//! ```
//!
//! Each line is an envelope `{id, created_at, seq, index, record}`. Files are
//! replayed into memory on open; the latest version of an id is the one with
//! the greatest `created_at`, ties going to the later line. A single writer
//! per directory is enforced with an OS lock on `LOCK`, which the kernel
//! releases if the process dies.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::model::{Assessment, Project, ProjectKind, Provenance, ReviewRecord};
use crate::reporting::CatalogEntry;

#[derive(Error, Debug)]
pub enum StoreError {
    #[error("{collection} record {id:?} not found")]
    NotFound { collection: Collection, id: String },
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("data directory {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("store was opened read-only")]
    ReadOnly,
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    Projects,
    Assessments,
    Reviews,
    Catalogs,
}

impl Collection {
    pub const ALL: [Collection; 4] = [
        Collection::Projects,
        Collection::Assessments,
        Collection::Reviews,
        Collection::Catalogs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Collection::Projects => "projects",
            Collection::Assessments => "assessments",
            Collection::Reviews => "reviews",
            Collection::Catalogs => "catalogs",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Collection {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Collection::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| StoreError::UnknownCollection(s.to_string()))
    }
}

/// Fields `list` can filter on without decoding records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProjectKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Conjunctive filter; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    pub source: Option<String>,
    pub kind: Option<ProjectKind>,
    pub provenance: Option<Provenance>,
}

impl Filter {
    pub fn matches(&self, index: &IndexFields) -> bool {
        fn field<T: PartialEq>(want: &Option<T>, have: &Option<T>) -> bool {
            want.as_ref().map_or(true, |w| have.as_ref() == Some(w))
        }
        field(&self.source, &index.source) && field(&self.kind, &index.kind) && field(&self.provenance, &index.provenance)
    }
}

/// A type stored in one collection.
pub trait Record: Serialize + DeserializeOwned {
    const COLLECTION: Collection;
    fn record_id(&self) -> String;
    /// Version timestamp; `None` means "time of writing".
    fn version_time(&self) -> Option<DateTime<Utc>>;
    fn index(&self) -> IndexFields {
        IndexFields::default()
    }
}

impl Record for Project {
    const COLLECTION: Collection = Collection::Projects;
    fn record_id(&self) -> String {
        self.id.clone()
    }
    fn version_time(&self) -> Option<DateTime<Utc>> {
        None
    }
    fn index(&self) -> IndexFields {
        IndexFields {
            source: Some(self.source.clone()),
            kind: Some(self.kind),
            provenance: None,
        }
    }
}

/// Keyed by project id: the store holds one current assessment per project.
impl Record for Assessment {
    const COLLECTION: Collection = Collection::Assessments;
    fn record_id(&self) -> String {
        self.project_id.clone()
    }
    fn version_time(&self) -> Option<DateTime<Utc>> {
        Some(self.created_at)
    }
    fn index(&self) -> IndexFields {
        IndexFields {
            provenance: Some(self.provenance),
            ..IndexFields::default()
        }
    }
}

/// Keyed by project id; a later review of the same project supersedes.
impl Record for ReviewRecord {
    const COLLECTION: Collection = Collection::Reviews;
    fn record_id(&self) -> String {
        self.project_id.clone()
    }
    fn version_time(&self) -> Option<DateTime<Utc>> {
        Some(self.created_at)
    }
}

impl Record for CatalogEntry {
    const COLLECTION: Collection = Collection::Catalogs;
    fn record_id(&self) -> String {
        self.project_id.clone()
    }
    fn version_time(&self) -> Option<DateTime<Utc>> {
        None
    }
    fn index(&self) -> IndexFields {
        IndexFields {
            kind: Some(self.kind),
            ..IndexFields::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    id: String,
    created_at: DateTime<Utc>,
    seq: u64,
    #[serde(default)]
    index: IndexFields,
    record: Value,
}

#[derive(Debug, Clone)]
pub struct StoredRecord {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub index: IndexFields,
    pub record: Value,
}

#[derive(Debug, Default, Clone)]
struct CollectionState {
    latest: BTreeMap<String, Arc<Envelope>>,
    next_seq: u64,
}

impl CollectionState {
    fn apply(&mut self, env: Envelope) {
        self.next_seq = self.next_seq.max(env.seq + 1);
        match self.latest.get(&env.id) {
            Some(cur) if env.created_at < cur.created_at => {}
            _ => {
                self.latest.insert(env.id.clone(), Arc::new(env));
            }
        }
    }
}

pub struct Store {
    root: PathBuf,
    lock: Option<File>,
    collections: BTreeMap<Collection, CollectionState>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("root", &self.root)
            .field("writable", &self.lock.is_some())
            .finish()
    }
}

impl Store {
    /// Opens `root` for writing, creating it if needed. Fails with
    /// [`StoreError::Locked`] when another writer holds the directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let lock_path = root.join("LOCK");
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path)?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(root)),
            Err(fs::TryLockError::Error(e)) => return Err(e.into()),
        }
        let mut store = Store {
            root,
            lock: Some(lock),
            collections: BTreeMap::new(),
            clock: Arc::new(SystemClock),
        };
        store.replay()?;
        Ok(store)
    }

    /// Opens without taking the writer lock; `put` and `compact` fail.
    pub fn open_read_only(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let mut store = Store {
            root: root.into(),
            lock: None,
            collections: BTreeMap::new(),
            clock: Arc::new(SystemClock),
        };
        store.replay()?;
        Ok(store)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_writable(&self) -> bool {
        self.lock.is_some()
    }

    fn path(&self, c: Collection) -> PathBuf {
        self.root.join(c.file_name())
    }

    fn replay(&mut self) -> Result<(), StoreError> {
        self.collections.clear();
        for c in Collection::ALL {
            let mut state = CollectionState::default();
            let path = self.path(c);
            if path.exists() {
                let lines: Vec<String> = BufReader::new(File::open(&path)?).lines().collect::<Result<_, _>>()?;
                let last = lines.iter().rposition(|l| !l.trim().is_empty());
                for (n, line) in lines.iter().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<Envelope>(line) {
                        Ok(env) => state.apply(env),
                        // A torn final write is dropped; anything else is corruption.
                        Err(e) if Some(n) == last => {
                            log::warn!("{}: ignoring incomplete last line: {e}", path.display());
                        }
                        Err(e) => {
                            return Err(StoreError::Storage(format!("{}:{}: {e}", path.display(), n + 1)));
                        }
                    }
                }
            }
            self.collections.insert(c, state);
        }
        Ok(())
    }

    /// Re-reads all collection files, picking up writes from other handles.
    pub fn reload(&mut self) -> Result<(), StoreError> {
        self.replay()
    }

    /// Appends a raw record to the collection named `collection`.
    pub fn put_value(
        &mut self,
        collection: &str,
        id: &str,
        created_at: Option<DateTime<Utc>>,
        index: IndexFields,
        record: Value,
    ) -> Result<String, StoreError> {
        let c: Collection = collection.parse()?;
        self.append(c, id, created_at, index, record)
    }

    pub fn put<R: Record>(&mut self, record: &R) -> Result<String, StoreError> {
        let value = serde_json::to_value(record)?;
        self.append(R::COLLECTION, &record.record_id(), record.version_time(), record.index(), value)
    }

    /// Appends several records with a single fsync.
    pub fn put_all<R: Record>(&mut self, records: &[R]) -> Result<Vec<String>, StoreError> {
        if self.lock.is_none() {
            return Err(StoreError::ReadOnly);
        }
        let c = R::COLLECTION;
        let now = self.clock.now();
        let mut state = self.collections.get(&c).cloned().unwrap_or_default();
        let mut buf = String::new();
        let mut ids = Vec::with_capacity(records.len());
        let mut envs = Vec::with_capacity(records.len());
        for r in records {
            let env = Envelope {
                id: r.record_id(),
                created_at: r.version_time().unwrap_or(now),
                seq: state.next_seq,
                index: r.index(),
                record: serde_json::to_value(r)?,
            };
            state.next_seq += 1;
            buf.push_str(&serde_json::to_string(&env)?);
            buf.push('\n');
            ids.push(env.id.clone());
            envs.push(env);
        }
        self.write_lines(c, &buf)?;
        for env in envs {
            state.apply(env);
        }
        self.collections.insert(c, state);
        Ok(ids)
    }

    fn append(
        &mut self,
        c: Collection,
        id: &str,
        created_at: Option<DateTime<Utc>>,
        index: IndexFields,
        record: Value,
    ) -> Result<String, StoreError> {
        if self.lock.is_none() {
            return Err(StoreError::ReadOnly);
        }
        if id.is_empty() {
            return Err(StoreError::Storage("record id is empty".into()));
        }
        let seq = self.collections.get(&c).map_or(0, |s| s.next_seq);
        let env = Envelope {
            id: id.to_string(),
            created_at: created_at.unwrap_or_else(|| self.clock.now()),
            seq,
            index,
            record,
        };
        let mut line = serde_json::to_string(&env)?;
        line.push('\n');
        self.write_lines(c, &line)?;
        self.collections.entry(c).or_default().apply(env);
        Ok(id.to_string())
    }

    fn write_lines(&self, c: Collection, text: &str) -> Result<(), StoreError> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(c))?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn get_value(&self, collection: Collection, id: &str) -> Result<StoredRecord, StoreError> {
        self.collections
            .get(&collection)
            .and_then(|s| s.latest.get(id))
            .map(|e| stored(e))
            .ok_or_else(|| StoreError::NotFound {
                collection,
                id: id.to_string(),
            })
    }

    pub fn get<R: Record>(&self, id: &str) -> Result<R, StoreError> {
        let v = self.get_value(R::COLLECTION, id)?;
        Ok(serde_json::from_value(v.record)?)
    }

    /// Latest versions matching `filter`, ordered by id.
    pub fn list_values(&self, collection: Collection, filter: &Filter) -> Vec<StoredRecord> {
        self.collections
            .get(&collection)
            .map(|s| s.latest.values().filter(|e| filter.matches(&e.index)).map(|e| stored(e)).collect())
            .unwrap_or_default()
    }

    pub fn list<R: Record>(&self, filter: &Filter) -> Result<Vec<R>, StoreError> {
        self.list_values(R::COLLECTION, filter)
            .into_iter()
            .map(|v| serde_json::from_value(v.record).map_err(StoreError::from))
            .collect()
    }

    /// Rewrites every collection file with latest versions only.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        if self.lock.is_none() {
            return Err(StoreError::ReadOnly);
        }
        for (c, state) in &self.collections {
            let tmp = self.root.join(format!("{}.compact", c.file_name()));
            {
                let mut f = File::create(&tmp)?;
                let mut envs: Vec<&Arc<Envelope>> = state.latest.values().collect();
                envs.sort_by_key(|e| e.seq);
                for e in envs {
                    let mut line = serde_json::to_string(e.as_ref())?;
                    line.push('\n');
                    f.write_all(line.as_bytes())?;
                }
                f.sync_all()?;
            }
            fs::rename(&tmp, self.path(*c))?;
        }
        Ok(())
    }
}

fn stored(e: &Envelope) -> StoredRecord {
    StoredRecord {
        id: e.id.clone(),
        created_at: e.created_at,
        index: e.index.clone(),
        record: e.record.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use chrono::TimeZone;

    fn project(id: &str, kind: ProjectKind, title: &str) -> Project {
        Project {
            id: id.into(),
            title: title.into(),
            description: "d".into(),
            source: "paris".into(),
            kind,
            metadata: Default::default(),
        }
    }

    fn assessment(created: i64, model: &str) -> Assessment {
        Assessment {
            project_id: "p1".into(),
            contributions: vec![],
            model_id: model.into(),
            prompt_version: "v".into(),
            created_at: Utc.timestamp_opt(created, 0).unwrap(),
            provenance: Provenance::Mock,
        }
    }

    #[test]
    fn put_get_and_latest_wins() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let p = project("a", ProjectKind::Activity, "first");
        assert_eq!(s.put(&p).unwrap(), "a");
        assert_eq!(s.get::<Project>("a").unwrap(), p);
        let p2 = project("a", ProjectKind::Activity, "second");
        s.put(&p2).unwrap();
        assert_eq!(s.get::<Project>("a").unwrap().title, "second");
    }

    #[test]
    fn created_at_orders_versions() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        s.put(&assessment(100, "new")).unwrap();
        s.put(&assessment(50, "old")).unwrap();
        assert_eq!(s.get::<Assessment>("p1").unwrap().model_id, "new");
        s.put(&assessment(100, "tie")).unwrap();
        assert_eq!(s.get::<Assessment>("p1").unwrap().model_id, "tie");
        drop(s);
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.get::<Assessment>("p1").unwrap().model_id, "tie");
    }

    #[test]
    fn unknown_collection_and_missing_id() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        assert!(matches!(
            s.put_value("widgets", "x", None, IndexFields::default(), Value::Null),
            Err(StoreError::UnknownCollection(n)) if n == "widgets"
        ));
        assert!(matches!(s.get::<Project>("nope"), Err(StoreError::NotFound { .. })));
        s.put_value("catalogs", "x", None, IndexFields::default(), serde_json::json!({"a": 1})).unwrap();
        assert_eq!(s.get_value(Collection::Catalogs, "x").unwrap().record["a"], 1);
    }

    #[test]
    fn reopen_after_drop() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.put(&project("a", ProjectKind::Plan, "t")).unwrap();
        }
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.get::<Project>("a").unwrap().kind, ProjectKind::Plan);
        for c in Collection::ALL {
            assert!(!dir.path().join(c.file_name()).exists() || c == Collection::Projects);
        }
        assert!(dir.path().join("LOCK").exists());
    }

    #[test]
    fn list_filters_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        assert!(s.list::<Project>(&Filter::default()).unwrap().is_empty());
        for (id, kind) in [("c", ProjectKind::Plan), ("a", ProjectKind::Activity), ("b", ProjectKind::Plan)] {
            s.put(&project(id, kind, id)).unwrap();
        }
        let all: Vec<String> = s.list::<Project>(&Filter::default()).unwrap().into_iter().map(|p| p.id).collect();
        assert_eq!(all, ["a", "b", "c"]);
        let plans = s
            .list::<Project>(&Filter {
                kind: Some(ProjectKind::Plan),
                ..Filter::default()
            })
            .unwrap();
        assert_eq!(plans.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["b", "c"]);
        let none = s
            .list::<Project>(&Filter {
                source: Some("probono".into()),
                ..Filter::default()
            })
            .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn single_writer() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Locked(_))));
        let mut ro = Store::open_read_only(dir.path()).unwrap();
        assert!(matches!(ro.put(&project("a", ProjectKind::Plan, "t")), Err(StoreError::ReadOnly)));
        drop(s);
        assert!(Store::open(dir.path()).is_ok());
    }

    #[test]
    fn torn_last_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.put(&project("a", ProjectKind::Plan, "t")).unwrap();
        }
        let path = dir.path().join("projects.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"id\":\"b\",\"crea").unwrap();
        drop(f);
        let s = Store::open(dir.path()).unwrap();
        assert!(s.get::<Project>("a").is_ok());
        assert!(s.get::<Project>("b").is_err());

        fs::write(&path, "garbage\n{\"also\":\"bad\"}\n").unwrap();
        drop(s);
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Storage(_))));
    }

    #[test]
    fn compaction_keeps_latest_view() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(FixedClock(Utc.timestamp_opt(0, 0).unwrap()));
        let mut s = Store::open(dir.path()).unwrap().with_clock(clock);
        for title in ["1", "2", "3"] {
            s.put(&project("a", ProjectKind::Plan, title)).unwrap();
        }
        s.put(&project("b", ProjectKind::Plan, "b")).unwrap();
        s.compact().unwrap();
        let text = fs::read_to_string(dir.path().join("projects.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
        drop(s);
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.get::<Project>("a").unwrap().title, "3");
    }

    #[test]
    fn put_all_batches() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let ps: Vec<Project> = (0..5).map(|i| project(&format!("p{i}"), ProjectKind::Activity, "t")).collect();
        assert_eq!(s.put_all(&ps).unwrap().len(), 5);
        drop(s);
        assert_eq!(Store::open(dir.path()).unwrap().list::<Project>(&Filter::default()).unwrap(), ps);
    }
}
