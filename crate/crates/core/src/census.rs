//! Gap census: IDs inside the live range that no record occupies.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::RecordKind;
use crate::intervals::{IdIntervalSet, IdSetBuilder, Interval};

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("observed set is empty; an automatic census range is undefined")]
    EmptyObservedSet,
    #[error("census range lower bound {lo} exceeds upper bound {hi}")]
    InvalidRange { lo: u64, hi: u64 },
    #[error("exclusion {label:?} has lo {lo} > hi {hi}")]
    InvalidExclusion { lo: u64, hi: u64, label: String },
    #[error("reading exclusions from {path}: {reason}")]
    ExclusionFile { path: String, reason: String },
}

/// A legitimate hole in the ID space, e.g. a platform-side counter jump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRange {
    pub lo: u64,
    pub hi: u64,
    #[serde(default)]
    pub label: String,
    /// Restricts the exclusion to one ID space; `None` applies to both.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RecordKind>,
}

impl ExclusionRange {
    pub fn new(lo: u64, hi: u64, label: impl Into<String>) -> Self {
        Self { lo, hi, label: label.into(), kind: None }
    }

    pub fn for_kind(mut self, kind: RecordKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn applies_to(&self, kind: RecordKind) -> bool {
        self.kind.map_or(true, |k| k == kind)
    }

    pub fn interval(&self) -> Interval {
        Interval { lo: self.lo, hi: self.hi }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExclusionDoc {
    List(Vec<ExclusionRange>),
    Table {
        #[serde(alias = "exclusions")]
        exclusion: Vec<ExclusionRange>,
    },
}

fn validate(list: Vec<ExclusionRange>) -> Result<Vec<ExclusionRange>, CensusError> {
    for e in &list {
        if e.lo > e.hi {
            return Err(CensusError::InvalidExclusion { lo: e.lo, hi: e.hi, label: e.label.clone() });
        }
    }
    Ok(list)
}

/// Parse an exclusion list from TOML (`[[exclusion]]` tables) or JSON
/// (a bare array or `{"exclusions": [...]}`).
pub fn parse_exclusions(text: &str, is_json: bool) -> Result<Vec<ExclusionRange>, String> {
    let doc: ExclusionDoc =
        if is_json { serde_json::from_str(text).map_err(|e| e.to_string())? } else { toml::from_str(text).map_err(|e| e.to_string())? };
    let list = match doc {
        ExclusionDoc::List(v) => v,
        ExclusionDoc::Table { exclusion } => exclusion,
    };
    validate(list).map_err(|e| e.to_string())
}

pub fn load_exclusions(path: &Path) -> Result<Vec<ExclusionRange>, CensusError> {
    let err = |reason: String| CensusError::ExclusionFile { path: path.display().to_string(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_exclusions(&text, is_json).map_err(err)
}

/// Sorted, merged union of the exclusions.
pub fn normalize_exclusions(exclusions: &[ExclusionRange]) -> Result<IdIntervalSet, CensusError> {
    let list = validate(exclusions.to_vec())?;
    Ok(IdIntervalSet::from_intervals(list.iter().map(ExclusionRange::interval)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CensusRange {
    /// `[min observed, max observed]`.
    #[default]
    Auto,
    Explicit {
        lo: u64,
        hi: u64,
    },
}

/// Observed set of one record kind plus the duplicate tally from building it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObservedIds {
    pub set: IdIntervalSet,
    pub duplicates: u64,
}

impl ObservedIds {
    /// Associative, commutative union. IDs present in both count as duplicates.
    pub fn merge(&self, other: &ObservedIds) -> ObservedIds {
        let shared = self.set.intersection(&other.set).len();
        ObservedIds { set: self.set.union(&other.set), duplicates: self.duplicates + other.duplicates + shared }
    }
}

/// Build the observed set from a stream of ID values of a single kind.
pub fn build_observed<I: IntoIterator<Item = u64>>(ids: I) -> ObservedIds {
    let mut b = IdSetBuilder::new();
    b.extend(ids);
    let (set, duplicates) = b.finish();
    ObservedIds { set, duplicates }
}

/// Maximal missing runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GapRunList {
    pub runs: IdIntervalSet,
}

impl GapRunList {
    pub fn total_missing(&self) -> u64 {
        self.runs.len()
    }

    pub fn runs(&self) -> &[Interval] {
        self.runs.runs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunRow {
    pub lo: u64,
    pub hi: u64,
    pub len: u64,
}

impl Serialize for GapRunList {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.runs().len()))?;
        for r in self.runs() {
            seq.serialize_element(&RunRow { lo: r.lo, hi: r.hi, len: r.len() })?;
        }
        seq.end()
    }
}

/// Result of one census.
#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub kind: RecordKind,
    /// The requested range.
    pub range: Interval,
    /// Where runs were counted: the requested range clipped to the observed hull.
    pub counted_range: Interval,
    pub observed: u64,
    pub excluded: u64,
    pub missing_total: u64,
    /// Unobserved, unexcluded IDs in the requested range below the first observed ID.
    pub pre_range_unobserved: u64,
    /// Same, above the last observed ID.
    pub post_range_unobserved: u64,
    pub duplicates: u64,
    pub runs: GapRunList,
}

impl CensusReport {
    /// Rate used by the risk model: missing / (missing + observed).
    pub fn missing_rate(&self) -> f64 {
        let denom = self.missing_total + self.observed;
        if denom == 0 {
            0.0
        } else {
            self.missing_total as f64 / denom as f64
        }
    }
}

/// Count the missing runs of `observed` inside `range`, net of exclusions.
///
/// Parts of an explicit range outside the observed hull are tallied in
/// `pre_range_unobserved` / `post_range_unobserved` and never enter
/// `missing_total`.
pub fn census(
    kind: RecordKind,
    observed: &ObservedIds,
    range: CensusRange,
    exclusions: &[ExclusionRange],
) -> Result<CensusReport, CensusError> {
    let hull = observed.set.hull();
    let requested = match range {
        CensusRange::Auto => hull.ok_or(CensusError::EmptyObservedSet)?,
        CensusRange::Explicit { lo, hi } => {
            if lo > hi {
                return Err(CensusError::InvalidRange { lo, hi });
            }
            Interval { lo, hi }
        }
    };
    let relevant: Vec<ExclusionRange> = exclusions.iter().filter(|e| e.applies_to(kind)).cloned().collect();
    let excl = normalize_exclusions(&relevant)?;
    let unobserved_outside = |part: Option<Interval>| -> u64 { part.map(|p| p.len() - excl.count_in(p)).unwrap_or(0) };

    let counted = hull.and_then(|h| h.intersect(&requested));
    let (pre, post) = match counted {
        Some(c) => {
            let pre = (requested.lo < c.lo).then(|| Interval { lo: requested.lo, hi: c.lo - 1 });
            let post = (requested.hi > c.hi).then(|| Interval { lo: c.hi + 1, hi: requested.hi });
            (unobserved_outside(pre), unobserved_outside(post))
        }
        // Nothing observed inside the requested range at all.
        None => (unobserved_outside(Some(requested)), 0),
    };

    let Some(counted) = counted else {
        return Ok(CensusReport {
            kind,
            range: requested,
            counted_range: requested,
            observed: 0,
            excluded: excl.count_in(requested),
            missing_total: 0,
            pre_range_unobserved: pre,
            post_range_unobserved: post,
            duplicates: observed.duplicates,
            runs: GapRunList::default(),
        });
    };

    let unobserved = observed.set.complement_within(counted);
    let runs = unobserved.difference(&excl);
    let excluded = unobserved.len() - runs.len();
    let observed_in_range = observed.set.count_in(requested);
    Ok(CensusReport {
        kind,
        range: requested,
        counted_range: counted,
        observed: observed_in_range,
        excluded: excluded + excl.clip(requested).len() - excl.clip(counted).len(),
        missing_total: runs.len(),
        pre_range_unobserved: pre,
        post_range_unobserved: post,
        duplicates: observed.duplicates,
        runs: GapRunList { runs },
    })
}

/// Every internal missing run at least `threshold` long, as exclusion candidates.
pub fn detect_discontinuities(observed: &IdIntervalSet, threshold: u64) -> Vec<ExclusionRange> {
    let threshold = threshold.max(1);
    observed
        .runs()
        .windows(2)
        .filter_map(|w| {
            let gap = Interval { lo: w[0].hi + 1, hi: w[1].lo - 1 };
            (gap.len() >= threshold).then(|| ExclusionRange::new(gap.lo, gap.hi, format!("candidate discontinuity ({} ids)", gap.len())))
        })
        .collect()
}
