//! Batched sequential-ID sweep against an in-process object store.
//!
//! The collector enumerates every ID in a range, asks the store for
//! fixed-size batches of fullnames, and keeps whatever comes back. Private
//! IDs are silently absent from responses; nothing signals the omission.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{parse_fullname, RecordId, RecordKind};
use crate::ingest::{CommentRecord, Record, SubmissionRecord, DELETED};
use crate::intervals::{IdIntervalSet, Interval};

pub const DEFAULT_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreEntry {
    Public(Record),
    /// Returned as a truncated object: author and body replaced by the
    /// deletion sentinel, ID and existence retained.
    Deleted(Record),
    Private,
}

/// Batch lookup by fullname. Unknown, private and malformed names are
/// omitted from the response. `pass` numbers repeated sweeps over the
/// same IDs.
pub trait ObjectStore: Sync {
    fn lookup(&self, fullnames: &[String], pass: u32) -> Vec<Record>;
}

#[derive(Debug, Clone, Default)]
pub struct MockStore {
    entries: BTreeMap<RecordId, StoreEntry>,
}

fn truncate(record: &Record) -> Record {
    match record {
        Record::Comment(c) => Record::Comment(CommentRecord { author: DELETED.into(), is_deleted: true, ..c.clone() }),
        Record::Submission(s) => Record::Submission(SubmissionRecord { author: DELETED.into(), is_deleted: true, ..s.clone() }),
    }
}

impl MockStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<I: IntoIterator<Item = Record>>(records: I) -> Self {
        let mut store = Self::new();
        for r in records {
            store.insert(StoreEntry::Public(r.clone()), r.id());
        }
        store
    }

    pub fn insert(&mut self, entry: StoreEntry, id: RecordId) {
        self.entries.insert(id, entry);
    }

    pub fn set_private(&mut self, id: RecordId) {
        self.entries.insert(id, StoreEntry::Private);
    }

    /// Mark an existing record deleted; no-op for absent or private IDs.
    pub fn delete(&mut self, id: RecordId) {
        if let Some(StoreEntry::Public(r)) = self.entries.get(&id) {
            let r = r.clone();
            self.entries.insert(id, StoreEntry::Deleted(r));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// IDs of the given kind that a lookup would return.
    pub fn visible_ids(&self, kind: RecordKind) -> IdIntervalSet {
        self.entries.iter().filter(|(id, e)| id.kind == kind && !matches!(e, StoreEntry::Private)).map(|(id, _)| id.value).collect()
    }
}

impl ObjectStore for MockStore {
    fn lookup(&self, fullnames: &[String], _pass: u32) -> Vec<Record> {
        fullnames
            .iter()
            .filter_map(|name| parse_fullname(name).ok())
            .filter_map(|id| match self.entries.get(&id)? {
                StoreEntry::Public(r) => Some(r.clone()),
                StoreEntry::Deleted(r) => Some(truncate(r)),
                StoreEntry::Private => None,
            })
            .collect()
    }
}

/// Store decorator that drops each returned record with probability
/// `drop_rate`. The draw is a pure function of `(seed, id, pass)`.
#[derive(Debug, Clone)]
pub struct FaultyStore<S> {
    inner: S,
    drop_rate: f64,
    seed: u64,
}

pub fn inject_faults<S: ObjectStore>(store: S, drop_rate: f64, seed: u64) -> FaultyStore<S> {
    debug_assert!((0.0..1.0).contains(&drop_rate));
    FaultyStore { inner: store, drop_rate, seed }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<S> FaultyStore<S> {
    pub fn suppressed(&self, id: RecordId, pass: u32) -> bool {
        let kind = match id.kind {
            RecordKind::Comment => 1,
            RecordKind::Submission => 3,
        };
        let h = [kind, id.value, pass as u64].iter().fold(self.seed, |h, &p| splitmix(h ^ p));
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.drop_rate
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: ObjectStore> ObjectStore for FaultyStore<S> {
    fn lookup(&self, fullnames: &[String], pass: u32) -> Vec<Record> {
        let mut out = self.inner.lookup(fullnames, pass);
        if self.drop_rate > 0.0 {
            out.retain(|r| !self.suppressed(r.id(), pass));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub batch: usize,
    pub workers: usize,
    pub pass: u32,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { batch: DEFAULT_BATCH, workers: 1, pass: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchLog {
    pub first: u64,
    pub last: u64,
    pub requested: u64,
    pub returned: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Returned records sorted by ID.
    pub records: Vec<Record>,
    /// One entry per batch in request order.
    pub log: Vec<BatchLog>,
}

impl SweepResult {
    pub fn ids(&self) -> IdIntervalSet {
        self.records.iter().map(|r| r.id().value).collect()
    }
}

/// Split `ids` into consecutive batches of at most `batch` IDs.
fn batches(ids: &IdIntervalSet, batch: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(batch);
    for id in ids.iter() {
        cur.push(id);
        if cur.len() == batch {
            out.push(std::mem::replace(&mut cur, Vec::with_capacity(batch)));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Request every ID in `ids` exactly once, `batch` at a time.
pub fn sweep_ids<S: ObjectStore>(store: &S, kind: RecordKind, ids: &IdIntervalSet, options: SweepOptions) -> SweepResult {
    assert!(options.batch >= 1 && options.workers >= 1, "batch and workers must be positive");
    let work = batches(ids, options.batch);
    let run = || {
        work.par_iter()
            .map(|b| {
                let names: Vec<String> = b.iter().map(|&v| RecordId { kind, value: v }.fullname()).collect();
                let got = store.lookup(&names, options.pass);
                let log = BatchLog { first: b[0], last: b[b.len() - 1], requested: b.len() as u64, returned: got.len() as u64 };
                (got, log)
            })
            .collect::<Vec<_>>()
    };
    let parts = rayon::ThreadPoolBuilder::new().num_threads(options.workers).build().expect("thread pool").install(run);
    let mut records = Vec::new();
    let mut log = Vec::with_capacity(parts.len());
    for (got, entry) in parts {
        records.extend(got);
        log.push(entry);
    }
    records.sort_by_key(|r| r.id());
    SweepResult { records, log }
}

pub fn sweep<S: ObjectStore>(store: &S, kind: RecordKind, range: Interval, options: SweepOptions) -> SweepResult {
    sweep_ids(store, kind, &IdIntervalSet::from_range(range.lo, range.hi), options)
}

/// Sweep `range`, then re-request the IDs still missing for `passes - 1`
/// further passes. Returns the merged result; the log covers every pass.
pub fn sweep_with_refill<S: ObjectStore>(store: &S, kind: RecordKind, range: Interval, passes: u32, options: SweepOptions) -> SweepResult {
    let mut all = IdIntervalSet::from_range(range.lo, range.hi);
    let mut result = SweepResult { records: Vec::new(), log: Vec::new() };
    for pass in 0..passes.max(1) {
        let got = sweep_ids(store, kind, &all, SweepOptions { pass, ..options });
        all = all.difference(&got.ids());
        result.records.extend(got.records);
        result.log.extend(got.log);
        if all.is_empty() {
            break;
        }
    }
    result.records.sort_by_key(|r| r.id());
    result
}
