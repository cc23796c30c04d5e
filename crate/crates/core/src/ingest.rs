//! Streaming NDJSON reader for comment and submission dumps.
//!
//! Only the fields the audit needs are extracted; everything else on the
//! line is ignored. Deleted records are yielded like any other record.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_base36, parse_fullname, parse_id_for_kind, CodecError, RecordId, RecordKind};

/// Author or body value that marks a deletion-truncated record.
pub const DELETED: &str = "[deleted]";
pub const REMOVED: &str = "[removed]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: RecordId,
    pub parent: RecordId,
    pub link: RecordId,
    pub author: String,
    pub subreddit: String,
    pub created_utc: i64,
    pub is_deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub id: RecordId,
    pub author: String,
    pub subreddit: String,
    pub created_utc: i64,
    pub is_deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Record {
    Comment(CommentRecord),
    Submission(SubmissionRecord),
}

impl Record {
    pub fn id(&self) -> RecordId {
        match self {
            Record::Comment(c) => c.id,
            Record::Submission(s) => s.id,
        }
    }

    pub fn created_utc(&self) -> i64 {
        match self {
            Record::Comment(c) => c.created_utc,
            Record::Submission(s) => s.created_utc,
        }
    }

    pub fn author(&self) -> &str {
        match self {
            Record::Comment(c) => &c.author,
            Record::Submission(s) => &s.author,
        }
    }

    pub fn subreddit(&self) -> &str {
        match self {
            Record::Comment(c) => &c.subreddit,
            Record::Submission(s) => &s.subreddit,
        }
    }

    pub fn is_deleted(&self) -> bool {
        match self {
            Record::Comment(c) => c.is_deleted,
            Record::Submission(s) => s.is_deleted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestMode {
    Strict,
    #[default]
    Lenient,
}

impl std::str::FromStr for IngestMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(IngestMode::Strict),
            "lenient" => Ok(IngestMode::Lenient),
            other => Err(format!("unknown ingest mode {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}line {line}: {reason}", source_prefix(.source_name))]
    MalformedLine { source_name: Option<String>, line: u64, reason: String },
    #[error("{}line {line}: id {id} is a {found}, expected {expected}", source_prefix(.source_name))]
    WrongKind { source_name: Option<String>, line: u64, id: String, expected: RecordKind, found: RecordKind },
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
}

fn source_prefix(name: &Option<String>) -> String {
    name.as_ref().map(|n| format!("{n}: ")).unwrap_or_default()
}

/// Per-shard counters. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines_read: u64,
    pub records_ok: u64,
    pub records_malformed: u64,
    pub deleted_count: u64,
    /// Deletions detected through the author sentinel.
    pub deleted_by_author: u64,
    /// Deletions detected through the body/selftext sentinel only.
    pub deleted_by_body: u64,
    pub min_id: Option<u64>,
    pub max_id: Option<u64>,
    pub min_created_utc: Option<i64>,
    pub max_created_utc: Option<i64>,
}

fn merge_opt<T: Ord + Copy>(a: Option<T>, b: Option<T>, pick: fn(T, T) -> T) -> Option<T> {
    match (a, b) {
        (Some(x), Some(y)) => Some(pick(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl IngestStats {
    pub fn merge(&self, other: &IngestStats) -> IngestStats {
        IngestStats {
            lines_read: self.lines_read + other.lines_read,
            records_ok: self.records_ok + other.records_ok,
            records_malformed: self.records_malformed + other.records_malformed,
            deleted_count: self.deleted_count + other.deleted_count,
            deleted_by_author: self.deleted_by_author + other.deleted_by_author,
            deleted_by_body: self.deleted_by_body + other.deleted_by_body,
            min_id: merge_opt(self.min_id, other.min_id, std::cmp::min),
            max_id: merge_opt(self.max_id, other.max_id, std::cmp::max),
            min_created_utc: merge_opt(self.min_created_utc, other.min_created_utc, std::cmp::min),
            max_created_utc: merge_opt(self.max_created_utc, other.max_created_utc, std::cmp::max),
        }
    }

    fn note_record(&mut self, r: &Record, by_author: bool, by_body: bool) {
        self.records_ok += 1;
        if by_author || by_body {
            self.deleted_count += 1;
            if by_author {
                self.deleted_by_author += 1;
            } else {
                self.deleted_by_body += 1;
            }
        }
        let (id, t) = (r.id().value, r.created_utc());
        self.min_id = merge_opt(self.min_id, Some(id), std::cmp::min);
        self.max_id = merge_opt(self.max_id, Some(id), std::cmp::max);
        self.min_created_utc = merge_opt(self.min_created_utc, Some(t), std::cmp::min);
        self.max_created_utc = merge_opt(self.max_created_utc, Some(t), std::cmp::max);
    }
}

/// `merge_stats(a, b)` as a free function.
pub fn merge_stats(a: &IngestStats, b: &IngestStats) -> IngestStats {
    a.merge(b)
}

#[derive(Deserialize)]
struct RawLine {
    id: Option<String>,
    name: Option<String>,
    parent_id: Option<String>,
    link_id: Option<String>,
    author: Option<String>,
    subreddit: Option<String>,
    created_utc: Option<serde_json::Value>,
    body: Option<String>,
    selftext: Option<String>,
}

enum LineError {
    Malformed(String),
    WrongKind { id: String, found: RecordKind },
}

impl From<CodecError> for LineError {
    fn from(e: CodecError) -> Self {
        LineError::Malformed(e.to_string())
    }
}

fn parse_created(v: &serde_json::Value) -> Option<i64> {
    match v {
        serde_json::Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        // Some dump eras serialize timestamps as strings.
        serde_json::Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn is_sentinel(s: Option<&str>) -> bool {
    matches!(s, Some(DELETED) | Some(REMOVED))
}

/// Parse one NDJSON line. Returns the record and which deletion sentinels fired.
fn parse_line(line: &str, kind: RecordKind) -> Result<(Record, bool, bool), LineError> {
    let raw: RawLine = serde_json::from_str(line).map_err(|e| LineError::Malformed(format!("invalid JSON: {e}")))?;
    let id_str = raw.id.as_deref().or(raw.name.as_deref()).ok_or_else(|| LineError::Malformed("missing id".into()))?;
    let id = parse_id_for_kind(id_str, kind)?;
    if id.kind != kind {
        return Err(LineError::WrongKind { id: id_str.to_string(), found: id.kind });
    }
    let created_utc = raw
        .created_utc
        .as_ref()
        .and_then(parse_created)
        .ok_or_else(|| LineError::Malformed("missing or unparseable created_utc".into()))?;
    if created_utc <= 0 {
        return Err(LineError::Malformed(format!("non-positive created_utc {created_utc}")));
    }
    let author = raw.author.ok_or_else(|| LineError::Malformed("missing author".into()))?;
    let subreddit = raw.subreddit.ok_or_else(|| LineError::Malformed("missing subreddit".into()))?;
    let by_author = author == DELETED;
    let by_body = is_sentinel(raw.body.as_deref()) || is_sentinel(raw.selftext.as_deref());
    let is_deleted = by_author || by_body;

    let record = match kind {
        RecordKind::Comment => {
            let parent_str = raw.parent_id.ok_or_else(|| LineError::Malformed("missing parent_id".into()))?;
            let link_str = raw.link_id.ok_or_else(|| LineError::Malformed("missing link_id".into()))?;
            let parent = parse_fullname(&parent_str)?;
            let link = parse_fullname(&link_str)?;
            if link.kind != RecordKind::Submission {
                return Err(LineError::WrongKind { id: link_str, found: link.kind });
            }
            Record::Comment(CommentRecord { id, parent, link, author, subreddit, created_utc, is_deleted })
        }
        RecordKind::Submission => Record::Submission(SubmissionRecord { id, author, subreddit, created_utc, is_deleted }),
    };
    Ok((record, by_author, by_body))
}

/// Iterator over the records of one NDJSON shard.
///
/// In lenient mode malformed lines are counted and skipped. In strict mode
/// the first malformed line is returned as an error and iteration stops.
/// `WrongKind` and I/O errors always stop iteration.
pub struct NdjsonReader<R> {
    reader: R,
    kind: RecordKind,
    mode: IngestMode,
    source_name: Option<String>,
    stats: IngestStats,
    line_no: u64,
    buf: String,
    done: bool,
}

impl<R: BufRead> NdjsonReader<R> {
    pub fn new(reader: R, kind: RecordKind, mode: IngestMode) -> Self {
        Self { reader, kind, mode, source_name: None, stats: IngestStats::default(), line_no: 0, buf: String::new(), done: false }
    }

    pub fn with_source_name(mut self, name: impl Into<String>) -> Self {
        self.source_name = Some(name.into());
        self
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn into_stats(self) -> IngestStats {
        self.stats
    }
}

impl<R: BufRead> Iterator for NdjsonReader<R> {
    type Item = Result<Record, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    let path = self.source_name.clone().unwrap_or_else(|| "<stream>".into());
                    return Some(Err(IngestError::Io { path, source: e }));
                }
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            self.stats.lines_read += 1;
            match parse_line(line, self.kind) {
                Ok((record, by_author, by_body)) => {
                    self.stats.note_record(&record, by_author, by_body);
                    return Some(Ok(record));
                }
                Err(LineError::WrongKind { id, found }) => {
                    self.stats.records_malformed += 1;
                    self.done = true;
                    return Some(Err(IngestError::WrongKind {
                        source_name: self.source_name.clone(),
                        line: self.line_no,
                        id,
                        expected: self.kind,
                        found,
                    }));
                }
                Err(LineError::Malformed(reason)) => {
                    self.stats.records_malformed += 1;
                    if self.mode == IngestMode::Strict {
                        self.done = true;
                        return Some(Err(IngestError::MalformedLine { source_name: self.source_name.clone(), line: self.line_no, reason }));
                    }
                }
            }
        }
        None
    }
}

/// Where a shard's bytes come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShardSource {
    Path(PathBuf),
    Stdin,
}

impl ShardSource {
    pub fn name(&self) -> String {
        match self {
            ShardSource::Path(p) => p.display().to_string(),
            ShardSource::Stdin => "<stdin>".into(),
        }
    }

    pub fn open(&self) -> Result<Box<dyn BufRead + Send>, IngestError> {
        match self {
            ShardSource::Path(p) => {
                let f = File::open(p).map_err(|e| IngestError::Io { path: p.display().to_string(), source: e })?;
                Ok(Box::new(BufReader::with_capacity(1 << 20, f)))
            }
            ShardSource::Stdin => Ok(Box::new(BufReader::new(io::stdin()))),
        }
    }
}

/// Read one shard fully, passing each record to `sink`.
pub fn ingest_shard<F>(source: &ShardSource, kind: RecordKind, mode: IngestMode, sink: F) -> Result<IngestStats, IngestError>
where
    F: FnMut(Record),
{
    let reader = NdjsonReader::new(source.open()?, kind, mode).with_source_name(source.name());
    drain(reader, sink)
}

/// Same as [`ingest_shard`] for any reader.
pub fn ingest_reader<R: Read, F>(reader: R, kind: RecordKind, mode: IngestMode, sink: F) -> Result<IngestStats, IngestError>
where
    F: FnMut(Record),
{
    drain(NdjsonReader::new(BufReader::new(reader), kind, mode), sink)
}

fn drain<R: BufRead, F: FnMut(Record)>(mut reader: NdjsonReader<R>, mut sink: F) -> Result<IngestStats, IngestError> {
    for item in reader.by_ref() {
        sink(item?);
    }
    Ok(reader.into_stats())
}

/// Parse a base-36 id, exposed for callers holding bare id strings.
pub fn decode_id(s: &str, kind: RecordKind) -> Result<RecordId, CodecError> {
    Ok(RecordId { kind, value: decode_base36(s)? })
}

pub fn path_sources<P: AsRef<Path>>(paths: &[P]) -> Vec<ShardSource> {
    paths.iter().map(|p| ShardSource::Path(p.as_ref().to_path_buf())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_all(input: &str, kind: RecordKind, mode: IngestMode) -> (Vec<Result<Record, IngestError>>, IngestStats) {
        let mut r = NdjsonReader::new(input.as_bytes(), kind, mode);
        let items: Vec<_> = r.by_ref().collect();
        (items, r.into_stats())
    }

    #[test]
    fn parses_comment_line() {
        let line = r#"{"id":"c3","parent_id":"t3_2","link_id":"t3_2","author":"a","subreddit":"s","created_utc":1136073600,"body":"hi"}"#;
        let (items, stats) = read_all(line, RecordKind::Comment, IngestMode::Strict);
        let Record::Comment(c) = items[0].as_ref().unwrap() else { panic!("expected comment") };
        assert_eq!(c.id, RecordId::comment(435));
        assert_eq!(c.parent, RecordId::submission(2));
        assert_eq!(c.link, RecordId::submission(2));
        assert_eq!(c.created_utc, 1_136_073_600);
        assert!(!c.is_deleted);
        assert_eq!(stats.records_ok, 1);
        assert_eq!(stats.min_id, Some(435));
    }

    #[test]
    fn deleted_submission_is_observed() {
        let line = r#"{"id":"2","author":"[deleted]","subreddit":"s","created_utc":"1136073600","selftext":"[deleted]"}"#;
        let (items, stats) = read_all(line, RecordKind::Submission, IngestMode::Strict);
        let Record::Submission(s) = items[0].as_ref().unwrap() else { panic!("expected submission") };
        assert!(s.is_deleted);
        assert_eq!(s.id.value, 2);
        assert_eq!(stats.deleted_count, 1);
        assert_eq!(stats.deleted_by_author, 1);
    }

    #[test]
    fn removed_body_counts_as_body_deletion() {
        let line = r#"{"id":"5","parent_id":"t1_2","link_id":"t3_1","author":"x","subreddit":"s","created_utc":5,"body":"[removed]"}"#;
        let (_, stats) = read_all(line, RecordKind::Comment, IngestMode::Strict);
        assert_eq!((stats.deleted_by_author, stats.deleted_by_body), (0, 1));
    }

    #[test]
    fn lenient_skips_malformed_lines() {
        let input = "not json\n{\"id\":\"1\",\"author\":\"a\",\"subreddit\":\"s\",\"created_utc\":9}\n\n{\"id\":\"2\",\"author\":\"a\",\"subreddit\":\"s\"}\n";
        let (items, stats) = read_all(input, RecordKind::Submission, IngestMode::Lenient);
        assert_eq!(items.len(), 1);
        assert_eq!(stats.lines_read, 3);
        assert_eq!(stats.records_malformed, 2);
        assert_eq!(stats.lines_read, stats.records_ok + stats.records_malformed);
    }

    #[test]
    fn strict_aborts_with_line_number() {
        let input = "{\"id\":\"1\",\"author\":\"a\",\"subreddit\":\"s\",\"created_utc\":9}\nnot json\n{\"id\":\"3\",\"author\":\"a\",\"subreddit\":\"s\",\"created_utc\":9}\n";
        let (items, _) = read_all(input, RecordKind::Submission, IngestMode::Strict);
        assert_eq!(items.len(), 2);
        assert!(matches!(items[1], Err(IngestError::MalformedLine { line: 2, .. })));
    }

    #[test]
    fn wrong_kind_is_an_error() {
        let input = r#"{"id":"t1_5","author":"a","subreddit":"s","created_utc":9}"#;
        let (items, _) = read_all(input, RecordKind::Submission, IngestMode::Lenient);
        assert!(matches!(items[0], Err(IngestError::WrongKind { found: RecordKind::Comment, .. })));
        let input = r#"{"id":"5","parent_id":"t1_2","link_id":"t1_2","author":"a","subreddit":"s","created_utc":9}"#;
        let (items, _) = read_all(input, RecordKind::Comment, IngestMode::Lenient);
        assert!(matches!(items[0], Err(IngestError::WrongKind { .. })));
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let input_a = "{\"id\":\"1\",\"author\":\"a\",\"subreddit\":\"s\",\"created_utc\":9}\nbad\n";
        let input_b = "{\"id\":\"z\",\"author\":\"[deleted]\",\"subreddit\":\"s\",\"created_utc\":4}\n";
        let (_, a) = read_all(input_a, RecordKind::Submission, IngestMode::Lenient);
        let (_, b) = read_all(input_b, RecordKind::Submission, IngestMode::Lenient);
        assert_eq!(IngestStats::default().merge(&a), a);
        assert_eq!(a.merge(&b), b.merge(&a));
        let (_, whole) = read_all(&format!("{input_a}{input_b}"), RecordKind::Submission, IngestMode::Lenient);
        assert_eq!(merge_stats(&a, &b), whole);
    }
}
