//! Durable scenario store.
//!
//! Every write appends a checksummed record to `scenarios.log` and is synced
//! before it is acknowledged. `scenarios.idx` is a derived index that can be
//! thrown away at any time. Opening a store truncates an interrupted final
//! record and refuses to continue past a corrupt one.

mod features;
mod index;
mod log;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use liveia_core::scene::{self, content_digest, deserialize, serialize, DocumentError, Scenario, Violation};

pub use features::{cosine, feature_vector, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use index::{IndexEntry, MAGIC as INDEX_MAGIC};
pub use log::{encode as encode_record, HEADER_LEN, KIND_PUT, KIND_TOMBSTONE};

pub const LOG_FILE: &str = "scenarios.log";
pub const INDEX_FILE: &str = "scenarios.idx";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("scenario {0} not found")]
    NotFound(String),
    #[error("scenario is invalid")]
    Invalid(Vec<Violation>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scenario {0} has been forked; its content is frozen")]
    Frozen(String),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("log is corrupt at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    /// Error class shared with the HTTP layer.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound(_) => "NOT_FOUND",
            StoreError::Invalid(_) | StoreError::InvalidArgument(_) | StoreError::Document(_) => "VALIDATION",
            StoreError::Frozen(_) => "VERSION",
            StoreError::Corrupt { .. } | StoreError::Io(_) => "INTERNAL",
        }
    }
}

impl From<scene::SceneError> for StoreError {
    fn from(e: scene::SceneError) -> Self {
        match e {
            scene::SceneError::Invalid(v) => StoreError::Invalid(v),
            other => StoreError::InvalidArgument(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone)]
struct Entry {
    offset: u64,
    frame_len: u64,
    doc: String,
    scenario: Scenario,
    digest: String,
    features: FeatureVector,
    deleted: bool,
}

impl Entry {
    fn from_doc(doc: String, offset: u64) -> Result<Self> {
        let scenario = deserialize(&doc)?;
        Ok(Entry {
            offset,
            frame_len: (log::HEADER_LEN + doc.len()) as u64,
            digest: content_digest(&scenario)?,
            features: feature_vector(&scenario),
            scenario,
            doc,
            deleted: false,
        })
    }
}

/// What happened to the log when the store was opened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    /// Bytes of an interrupted final record that were discarded.
    pub truncated_bytes: u64,
    pub index_rebuilt: bool,
    /// Parent records re-appended to restore missing fork links.
    pub relinked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineNode {
    pub id: String,
    pub title: String,
    pub created_at: String,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub deleted: bool,
    pub children: Vec<TimelineNode>,
}

impl TimelineNode {
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TimelineNode::depth).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Similar {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub id: String,
    pub score: f64,
    /// How the neighbour unfolded: its earliest-child chain.
    pub sequence: Vec<Step>,
}

pub struct Store {
    dir: PathBuf,
    log: File,
    log_len: u64,
    entries: BTreeMap<String, Entry>,
    recovery: Recovery,
}

impl Store {
    /// Opens or creates a store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Store> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let log_path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&log_path)?;
        let bytes = log::read_all(&mut file)?;
        let scan = log::scan(&bytes);
        let mut recovery = Recovery::default();
        match &scan.stop {
            Some(log::ScanStop::Corrupt { offset, reason }) => {
                return Err(StoreError::Corrupt { offset: *offset, reason: reason.clone() })
            }
            Some(log::ScanStop::TornTail { .. }) => {
                recovery.truncated_bytes = bytes.len() as u64 - scan.valid_len;
                file.set_len(scan.valid_len)?;
                file.sync_all()?;
            }
            None => {}
        }
        let valid = &bytes[..scan.valid_len as usize];

        let mut store = Store {
            dir,
            log: file,
            log_len: scan.valid_len,
            entries: BTreeMap::new(),
            recovery,
        };
        let from_index = if store.recovery.truncated_bytes == 0 {
            store.load_from_index(valid)
        } else {
            None
        };
        match from_index {
            Some(entries) => store.entries = entries,
            None => {
                store.entries = replay(&scan.records)?;
                store.recovery.index_rebuilt = true;
                store.write_index()?;
            }
        }
        store.relink()?;
        Ok(store)
    }

    fn load_from_index(&self, valid: &[u8]) -> Option<BTreeMap<String, Entry>> {
        let text = fs::read_to_string(self.dir.join(INDEX_FILE)).ok()?;
        let (log_len, rows) = index::parse(&text)?;
        if log_len != self.log_len {
            return None;
        }
        let mut out = BTreeMap::new();
        for row in rows {
            let start = usize::try_from(row.offset).ok()?;
            let end = start.checked_add(usize::try_from(row.frame_len).ok()?)?;
            let frame = valid.get(start..end)?;
            let scan = log::scan(frame);
            let [(_, rec)] = scan.records.as_slice() else { return None };
            if scan.stop.is_some() || rec.kind != log::KIND_PUT {
                return None;
            }
            let mut entry = Entry::from_doc(String::from_utf8(rec.payload.clone()).ok()?, row.offset).ok()?;
            if entry.scenario.id != row.id {
                return None;
            }
            entry.deleted = row.deleted;
            out.insert(row.id, entry);
        }
        Some(out)
    }

    /// Restores parent→child links lost to a crash between a fork's two appends.
    fn relink(&mut self) -> Result<()> {
        let mut missing: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (id, e) in &self.entries {
            if let Some(p) = &e.scenario.parent {
                if let Some(pe) = self.entries.get(p) {
                    if !pe.scenario.children.contains(id) {
                        missing.entry(p.clone()).or_default().push(id.clone());
                    }
                }
            }
        }
        for (parent, mut kids) in missing {
            kids.sort_by(|a, b| self.order_key(a).cmp(&self.order_key(b)));
            let mut s = self.entries[&parent].scenario.clone();
            s.children.extend(kids);
            let deleted = self.entries[&parent].deleted;
            self.append_put(&s)?;
            self.entries.get_mut(&parent).expect("present").deleted = deleted;
            self.recovery.relinked += 1;
        }
        if self.recovery.relinked > 0 {
            self.write_index()?;
        }
        Ok(())
    }

    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_index(&self) -> Result<()> {
        let rows: Vec<IndexEntry> = self
            .entries
            .iter()
            .map(|(id, e)| IndexEntry { id: id.clone(), offset: e.offset, frame_len: e.frame_len, deleted: e.deleted })
            .collect();
        index::write(&self.dir.join(INDEX_FILE), &index::render(self.log_len, &rows))?;
        Ok(())
    }

    fn append_put(&mut self, s: &Scenario) -> Result<&Entry> {
        let doc = serialize(s)?;
        let offset = self.log_len;
        let entry = Entry::from_doc(doc, offset)?;
        self.log_len += log::append(&mut self.log, log::KIND_PUT, entry.doc.as_bytes())?;
        let id = entry.scenario.id.clone();
        self.entries.insert(id.clone(), entry);
        Ok(&self.entries[&id])
    }

    fn live(&self, id: &str) -> Result<&Entry> {
        match self.entries.get(id) {
            Some(e) if !e.deleted => Ok(e),
            _ => Err(StoreError::NotFound(id.to_string())),
        }
    }

    fn order_key(&self, id: &str) -> (String, String) {
        let created = self.entries.get(id).map(|e| e.scenario.created_at.clone()).unwrap_or_default();
        (created, id.to_string())
    }

    /// Stores `s` and returns its content digest.
    ///
    /// Fork links are owned by the store: the stored `children` list is kept
    /// and `parent` is fixed at first insert. A forked scenario accepts only
    /// puts that leave its content unchanged.
    pub fn put(&mut self, s: &Scenario) -> Result<String> {
        let violations = scene::validate(s);
        if !violations.is_empty() {
            return Err(StoreError::Invalid(violations));
        }
        let mut s = s.clone();
        let existing = self.entries.get(&s.id).filter(|e| !e.deleted).cloned();
        if let Some(e) = &existing {
            s.children = e.scenario.children.clone();
            s.parent = e.scenario.parent.clone();
            let digest = content_digest(&s)?;
            if digest == e.digest {
                if serialize(&s)? == e.doc {
                    return Ok(digest);
                }
            } else if e.scenario.is_forked() {
                return Err(StoreError::Frozen(s.id.clone()));
            }
        } else {
            s.children.retain(|c| self.entries.contains_key(c));
        }
        let digest = self.append_put(&s)?.digest.clone();
        if existing.is_none() {
            if let Some(p) = s.parent.clone() {
                if let Some(pe) = self.entries.get(&p).cloned() {
                    if !pe.scenario.children.contains(&s.id) {
                        let mut parent = pe.scenario.clone();
                        parent.children.push(s.id.clone());
                        self.append_put(&parent)?;
                        self.entries.get_mut(&p).expect("present").deleted = pe.deleted;
                    }
                }
            }
        }
        self.write_index()?;
        Ok(digest)
    }

    /// Canonical document bytes as stored.
    pub fn get(&self, id: &str) -> Result<String> {
        Ok(self.live(id)?.doc.clone())
    }

    pub fn get_scenario(&self, id: &str) -> Result<Scenario> {
        Ok(self.live(id)?.scenario.clone())
    }

    pub fn digest(&self, id: &str) -> Result<String> {
        Ok(self.live(id)?.digest.clone())
    }

    pub fn features(&self, id: &str) -> Result<FeatureVector> {
        Ok(self.live(id)?.features)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.live(id).is_ok()
    }

    /// Ids of live scenarios, sorted.
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().filter(|(_, e)| !e.deleted).map(|(id, _)| id.clone()).collect()
    }

    /// Tombstones `id`. Its forks are unaffected.
    pub fn delete(&mut self, id: &str) -> Result<()> {
        self.live(id)?;
        self.log_len += log::append(&mut self.log, log::KIND_TOMBSTONE, id.as_bytes())?;
        self.entries.get_mut(id).expect("present").deleted = true;
        self.write_index()?;
        Ok(())
    }

    /// Forks `id` and stores both the child and the parent's new link.
    pub fn fork(&mut self, id: &str) -> Result<Scenario> {
        let mut parent = self.live(id)?.scenario.clone();
        let child = scene::fork(&mut parent)?;
        // Child first: a crash before the parent append is repaired on open.
        self.append_put(&child)?;
        self.append_put(&parent)?;
        self.write_index()?;
        Ok(child)
    }

    fn children_of(&self, id: &str) -> Vec<String> {
        let mut kids: Vec<String> = self
            .entries
            .get(id)
            .map(|e| e.scenario.children.iter().filter(|c| self.entries.contains_key(*c)).cloned().collect())
            .unwrap_or_default();
        kids.sort_by_key(|k| self.order_key(k));
        kids
    }

    /// Depth-first fork tree under `root`, children ordered by creation time.
    pub fn timeline(&self, root: &str) -> Result<TimelineNode> {
        self.live(root)?;
        Ok(self.node(root, &mut HashSet::new()))
    }

    fn node(&self, id: &str, seen: &mut HashSet<String>) -> TimelineNode {
        seen.insert(id.to_string());
        let e = &self.entries[id];
        let children = self
            .children_of(id)
            .into_iter()
            .filter(|c| !seen.contains(c))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|c| self.node(&c, seen))
            .collect();
        TimelineNode {
            id: id.to_string(),
            title: e.scenario.title.clone(),
            created_at: e.scenario.created_at.clone(),
            deleted: e.deleted,
            children,
        }
    }

    fn ancestor_ids(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = self.entries.get(id).and_then(|e| e.scenario.parent.clone());
        while let Some(p) = cur {
            if out.contains(&p) || !self.entries.contains_key(&p) {
                break;
            }
            cur = self.entries[&p].scenario.parent.clone();
            out.push(p);
        }
        out
    }

    fn descendant_ids(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack: Vec<String> = self.children_of(id).into_iter().rev().collect();
        let mut seen = HashSet::from([id.to_string()]);
        while let Some(c) = stack.pop() {
            if !seen.insert(c.clone()) {
                continue;
            }
            stack.extend(self.children_of(&c).into_iter().rev());
            out.push(c);
        }
        out
    }

    /// Live ancestors of `id`, oldest first.
    pub fn ancestors(&self, id: &str) -> Result<Vec<Scenario>> {
        self.live(id)?;
        let mut out: Vec<Scenario> = self
            .ancestor_ids(id)
            .iter()
            .filter_map(|a| self.live(a).ok().map(|e| e.scenario.clone()))
            .collect();
        out.reverse();
        Ok(out)
    }

    /// Live descendants of `id` in depth-first timeline order.
    pub fn descendants(&self, id: &str) -> Result<Vec<Scenario>> {
        self.live(id)?;
        Ok(self
            .descendant_ids(id)
            .iter()
            .filter_map(|d| self.live(d).ok().map(|e| e.scenario.clone()))
            .collect())
    }

    /// The `k` most similar live scenarios outside `id`'s own lineage.
    pub fn similar(&self, id: &str, k: usize) -> Result<Vec<Similar>> {
        if k < 1 {
            return Err(StoreError::InvalidArgument("k must be >= 1".into()));
        }
        let me = self.live(id)?;
        let mut excluded: HashSet<String> = self.ancestor_ids(id).into_iter().collect();
        excluded.extend(self.descendant_ids(id));
        excluded.insert(id.to_string());
        let mut scored: Vec<Similar> = self
            .entries
            .iter()
            .filter(|(other, e)| !e.deleted && !excluded.contains(*other))
            .map(|(other, e)| Similar { id: other.clone(), score: cosine(&me.features, &e.features) })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        scored.truncate(k);
        Ok(scored)
    }

    /// For each of the `k` nearest neighbours, the chain of scenarios that
    /// followed it.
    pub fn suggest(&self, id: &str, k: usize) -> Result<Vec<Suggestion>> {
        Ok(self
            .similar(id, k)?
            .into_iter()
            .map(|n| {
                let mut sequence = Vec::new();
                let mut seen = HashSet::from([n.id.clone()]);
                let mut cur = n.id.clone();
                while let Some(next) = self
                    .children_of(&cur)
                    .into_iter()
                    .find(|c| !self.entries[c].deleted && !seen.contains(c))
                {
                    seen.insert(next.clone());
                    sequence.push(Step { id: next.clone(), title: self.entries[&next].scenario.title.clone() });
                    cur = next;
                }
                Suggestion { id: n.id, score: n.score, sequence }
            })
            .collect())
    }
}

fn replay(records: &[(u64, log::Record)]) -> Result<BTreeMap<String, Entry>> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (offset, rec) in records {
        let corrupt = |reason: String| StoreError::Corrupt { offset: *offset, reason };
        match rec.kind {
            log::KIND_PUT => {
                let doc = String::from_utf8(rec.payload.clone()).map_err(|e| corrupt(e.to_string()))?;
                let entry = Entry::from_doc(doc, *offset).map_err(|e| corrupt(e.to_string()))?;
                entries.insert(entry.scenario.id.clone(), entry);
            }
            _ => {
                let id = String::from_utf8(rec.payload.clone()).map_err(|e| corrupt(e.to_string()))?;
                match entries.get_mut(&id) {
                    Some(e) => e.deleted = true,
                    None => return Err(corrupt(format!("tombstone for unknown id {id}"))),
                }
            }
        }
    }
    Ok(entries)
}
