//! Dangling references: parent/link targets that observed comments point at
//! but that are absent from the corpus.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codec::{RecordId, RecordKind};
use crate::ingest::CommentRecord;
use crate::intervals::IdIntervalSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReferenceError {
    #[error("subreddit {0:?} does not appear in the dangling report")]
    UnknownSubreddit(String),
}

/// Per-subreddit dangling tallies. Danglings are attributed to the
/// subreddit of the referencing comment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubredditDangling {
    pub dangling_submissions: u64,
    pub dangling_comments: u64,
    pub edges: u64,
    pub total_comments: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DanglingReport {
    /// Distinct referenced-but-absent comment IDs.
    pub dangling_comment_refs: u64,
    /// Distinct referenced-but-absent submission IDs.
    pub dangling_submission_refs: u64,
    /// comment -> missing target edges.
    pub referencing_edges: u64,
    pub comments_scanned: u64,
    /// Self references and parents not older than the child.
    pub order_anomalies: u64,
    pub per_subreddit: BTreeMap<String, SubredditDangling>,
    #[serde(skip)]
    pub dangling_comment_ids: IdIntervalSet,
    #[serde(skip)]
    pub dangling_submission_ids: IdIntervalSet,
}

#[derive(Debug, Clone, Default)]
struct SubredditAcc {
    submissions: BTreeSet<u64>,
    comments: BTreeSet<u64>,
    edges: u64,
    total_comments: u64,
}

/// Mergeable accumulator behind [`audit_references`].
#[derive(Debug, Clone, Default)]
pub struct ReferenceAuditor {
    comments: BTreeSet<u64>,
    submissions: BTreeSet<u64>,
    edges: u64,
    scanned: u64,
    anomalies: u64,
    per_subreddit: BTreeMap<String, SubredditAcc>,
}

impl ReferenceAuditor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(
        &mut self,
        id: RecordId,
        parent: RecordId,
        link: RecordId,
        subreddit: &str,
        observed_comments: &IdIntervalSet,
        observed_submissions: &IdIntervalSet,
    ) {
        self.scanned += 1;
        if parent.kind == RecordKind::Comment && parent.value >= id.value {
            self.anomalies += 1;
        }
        if !self.per_subreddit.contains_key(subreddit) {
            self.per_subreddit.insert(subreddit.to_string(), SubredditAcc::default());
        }
        let acc = self.per_subreddit.get_mut(subreddit).expect("inserted above");
        acc.total_comments += 1;
        let targets: &[RecordId] = if parent == link { &[link] } else { &[parent, link] };
        for t in targets {
            let (present, global, local) = match t.kind {
                RecordKind::Comment => (observed_comments.contains(t.value), &mut self.comments, &mut acc.comments),
                RecordKind::Submission => (observed_submissions.contains(t.value), &mut self.submissions, &mut acc.submissions),
            };
            if !present {
                self.edges += 1;
                acc.edges += 1;
                global.insert(t.value);
                local.insert(t.value);
            }
        }
    }

    pub fn observe_comment(&mut self, c: &CommentRecord, observed_comments: &IdIntervalSet, observed_submissions: &IdIntervalSet) {
        self.observe(c.id, c.parent, c.link, &c.subreddit, observed_comments, observed_submissions);
    }

    /// Associative, commutative combination of two partial audits.
    pub fn merge(mut self, other: ReferenceAuditor) -> ReferenceAuditor {
        self.comments.extend(other.comments);
        self.submissions.extend(other.submissions);
        self.edges += other.edges;
        self.scanned += other.scanned;
        self.anomalies += other.anomalies;
        for (name, acc) in other.per_subreddit {
            let mine = self.per_subreddit.entry(name).or_default();
            mine.submissions.extend(acc.submissions);
            mine.comments.extend(acc.comments);
            mine.edges += acc.edges;
            mine.total_comments += acc.total_comments;
        }
        self
    }

    pub fn finish(self) -> DanglingReport {
        let per_subreddit = self
            .per_subreddit
            .into_iter()
            .map(|(name, acc)| {
                let row = SubredditDangling {
                    dangling_submissions: acc.submissions.len() as u64,
                    dangling_comments: acc.comments.len() as u64,
                    edges: acc.edges,
                    total_comments: acc.total_comments,
                };
                (name, row)
            })
            .collect();
        DanglingReport {
            dangling_comment_refs: self.comments.len() as u64,
            dangling_submission_refs: self.submissions.len() as u64,
            referencing_edges: self.edges,
            comments_scanned: self.scanned,
            order_anomalies: self.anomalies,
            per_subreddit,
            dangling_comment_ids: self.comments.into_iter().collect(),
            dangling_submission_ids: self.submissions.into_iter().collect(),
        }
    }
}

/// Sequential audit over a comment stream.
pub fn audit_references<'a, I>(comments: I, observed_comments: &IdIntervalSet, observed_submissions: &IdIntervalSet) -> DanglingReport
where
    I: IntoIterator<Item = &'a CommentRecord>,
{
    let mut auditor = ReferenceAuditor::new();
    for c in comments {
        auditor.observe_comment(c, observed_comments, observed_submissions);
    }
    auditor.finish()
}

/// Parallel audit; identical output to [`audit_references`].
pub fn audit_references_par(
    comments: &[CommentRecord],
    observed_comments: &IdIntervalSet,
    observed_submissions: &IdIntervalSet,
) -> DanglingReport {
    comments
        .par_chunks(8192)
        .map(|chunk| {
            let mut a = ReferenceAuditor::new();
            for c in chunk {
                a.observe_comment(c, observed_comments, observed_submissions);
            }
            a
        })
        .reduce(ReferenceAuditor::new, ReferenceAuditor::merge)
        .finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityDanglingProfile {
    pub subreddit: String,
    pub missing_submissions_referenced: u64,
    pub missing_comments_referenced: u64,
    pub total_comments: u64,
    /// Share of the corpus-wide distinct dangling submissions.
    pub fraction: f64,
}

pub fn community_dangling_profile(report: &DanglingReport, subreddit: &str) -> Result<CommunityDanglingProfile, ReferenceError> {
    let row = report.per_subreddit.get(subreddit).ok_or_else(|| ReferenceError::UnknownSubreddit(subreddit.to_string()))?;
    let fraction =
        if report.dangling_submission_refs == 0 { 0.0 } else { row.dangling_submissions as f64 / report.dangling_submission_refs as f64 };
    Ok(CommunityDanglingProfile {
        subreddit: subreddit.to_string(),
        missing_submissions_referenced: row.dangling_submissions,
        missing_comments_referenced: row.dangling_comments,
        total_comments: row.total_comments,
        fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comment(id: u64, parent: RecordId, link: u64, sub: &str) -> CommentRecord {
        CommentRecord {
            id: RecordId::comment(id),
            parent,
            link: RecordId::submission(link),
            author: "a".into(),
            subreddit: sub.into(),
            created_utc: 1,
            is_deleted: false,
        }
    }

    #[test]
    fn missing_link_is_dangling() {
        let subs = IdIntervalSet::from_range(1, 4);
        let comments = IdIntervalSet::from_ids([10]);
        let c = comment(10, RecordId::submission(5), 5, "s");
        let r = audit_references([&c], &comments, &subs);
        assert_eq!(r.dangling_submission_refs, 1);
        assert_eq!(r.dangling_comment_refs, 0);
        assert_eq!(r.referencing_edges, 1);
    }

    #[test]
    fn observed_parent_contributes_nothing() {
        let subs = IdIntervalSet::from_range(1, 4);
        let comments = IdIntervalSet::from_ids([7, 10]);
        let c = comment(10, RecordId::comment(7), 2, "s");
        let r = audit_references([&c], &comments, &subs);
        assert_eq!((r.dangling_comment_refs, r.dangling_submission_refs, r.referencing_edges), (0, 0, 0));
        assert_eq!(r.per_subreddit["s"].total_comments, 1);
    }

    #[test]
    fn distinct_counts_vs_edges_and_anomalies() {
        let subs = IdIntervalSet::from_range(1, 4);
        let comments = IdIntervalSet::from_ids([10, 11, 12]);
        let cs = [
            comment(10, RecordId::comment(9), 5, "a"),
            comment(11, RecordId::comment(9), 5, "a"),
            comment(12, RecordId::comment(12), 3, "b"),
        ];
        let r = audit_references(&cs, &comments, &subs);
        assert_eq!(r.dangling_comment_refs, 1);
        assert_eq!(r.dangling_submission_refs, 1);
        assert_eq!(r.referencing_edges, 4);
        assert_eq!(r.order_anomalies, 1);
        assert_eq!(r.per_subreddit["a"].dangling_comments, 1);
        assert_eq!(r.per_subreddit["b"].edges, 0);
        assert!(r.dangling_comment_refs <= r.referencing_edges);
    }

    #[test]
    fn profile() {
        let subs = IdIntervalSet::from_range(1, 4);
        let comments = IdIntervalSet::from_ids([10, 11]);
        let cs = [comment(10, RecordId::submission(8), 8, "a"), comment(11, RecordId::submission(2), 2, "b")];
        let r = audit_references(&cs, &comments, &subs);
        let a = community_dangling_profile(&r, "a").unwrap();
        assert_eq!((a.missing_submissions_referenced, a.total_comments, a.fraction), (1, 1, 1.0));
        let b = community_dangling_profile(&r, "b").unwrap();
        assert_eq!((b.missing_submissions_referenced, b.total_comments, b.fraction), (0, 1, 0.0));
        assert_eq!(community_dangling_profile(&r, "zz"), Err(ReferenceError::UnknownSubreddit("zz".into())));
    }

    #[test]
    fn parallel_matches_sequential_in_any_order() {
        let subs = IdIntervalSet::from_ids((1..200).filter(|v| v % 7 != 0));
        let comments_obs = IdIntervalSet::from_ids((1..50_000).filter(|v| v % 11 != 0));
        let mut cs: Vec<CommentRecord> = (1..50_000u64)
            .filter(|v| v % 11 != 0)
            .map(|i| {
                comment(
                    i,
                    if i % 3 == 0 { RecordId::comment(i - 1) } else { RecordId::submission(i % 200) },
                    i % 200,
                    ["x", "y", "z"][(i % 3) as usize],
                )
            })
            .collect();
        let seq = audit_references(&cs, &comments_obs, &subs);
        cs.reverse();
        let par = audit_references_par(&cs, &comments_obs, &subs);
        assert_eq!(seq, par);
        assert!(seq.dangling_comment_refs > 0 && seq.dangling_submission_refs > 0);
    }
}
