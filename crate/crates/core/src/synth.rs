//! Synthetic corpora with recorded ground truth.
//!
//! The ID range of each kind is cut into blocks of [`BLOCK`] IDs. Every
//! block draws from its own ChaCha8 stream seeded from `(seed, kind, block,
//! stream)`, so output is identical for any worker count. Records are
//! generated for every non-excluded ID, missing ones included, so the
//! manifest knows who lost what; only observed records reach the sink.
//!
//! Timestamps are linear in position (rank among non-excluded IDs), so an
//! epoch jump is a hole in ID space but not in time.
//!
//! Gap block lengths in the bursty model are geometric. That is a modelling
//! convenience; real block lengths have no documented distribution.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};
use std::path::Path;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, Zeta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::census::ExclusionRange;
use crate::codec::{encode_base36, RecordId, RecordKind, MAX_VALUE};
use crate::ingest::{CommentRecord, SubmissionRecord, DELETED};
use crate::intervals::{IdIntervalSet, IdSetBuilder, Interval};

/// IDs per generation block.
pub const BLOCK: u64 = 1 << 14;
/// Blocks generated in parallel before being flushed to the sink in order.
const WAVE: usize = 64;

const STREAM_GAPS: u64 = 1;
const STREAM_ATTRS: u64 = 2;
const STREAM_PLANTS: u64 = 3;
const STREAM_AUTHORS: u64 = 4;
const STREAM_SUBREDDIT: u64 = 5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("parsing spec: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GapModel {
    /// Each ID is missing independently with probability `rate`.
    Uniform { rate: f64 },
    /// Alternating observed stretches and missing runs with geometric
    /// lengths. Missing runs have mean `mean_len` before clipping at
    /// `max_len`; the long-run missing share is `rate` before clipping.
    Bursty {
        rate: f64,
        mean_len: f64,
        #[serde(default = "default_max_len")]
        max_len: u64,
    },
    /// A legitimate hole: IDs in `[lo, hi]` are never assigned.
    EpochJump {
        lo: u64,
        hi: u64,
        #[serde(default)]
        label: String,
    },
}

fn default_max_len() -> u64 {
    BLOCK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSpec {
    pub lo: u64,
    pub hi: u64,
    #[serde(default)]
    pub gaps: Vec<GapModel>,
    pub seconds_per_id: f64,
    /// Maximum extra seconds added to each timestamp.
    #[serde(default)]
    pub jitter: u64,
}

impl KindSpec {
    pub fn new(lo: u64, hi: u64, seconds_per_id: f64) -> Self {
        Self { lo, hi, gaps: Vec::new(), seconds_per_id, jitter: 0 }
    }

    pub fn with_gap(mut self, gap: GapModel) -> Self {
        self.gaps.push(gap);
        self
    }

    fn epoch_jumps(&self, kind: RecordKind) -> Vec<ExclusionRange> {
        let mut out: Vec<ExclusionRange> = self
            .gaps
            .iter()
            .filter_map(|g| match g {
                GapModel::EpochJump { lo, hi, label } => Some(ExclusionRange::new(*lo, *hi, label.clone()).for_kind(kind)),
                _ => None,
            })
            .collect();
        out.sort_by_key(|e| (e.lo, e.hi));
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingPlants {
    #[serde(default)]
    pub comments: u64,
    #[serde(default)]
    pub submissions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub comments: KindSpec,
    pub submissions: KindSpec,
    #[serde(default = "defaults::n_subreddits")]
    pub n_subreddits: usize,
    /// Zipf exponent of subreddit popularity; 0 is uniform.
    #[serde(default = "defaults::community_skew")]
    pub community_skew: f64,
    #[serde(default = "defaults::n_authors")]
    pub n_authors: usize,
    /// Exponent of the discrete power law behind per-author activity weights.
    #[serde(default = "defaults::activity_skew")]
    pub activity_skew: f64,
    #[serde(default)]
    pub dangling_plants: DanglingPlants,
    /// Subreddit given to every comment that references a planted target.
    #[serde(default)]
    pub plant_subreddit: Option<String>,
    #[serde(default = "defaults::start_utc")]
    pub start_utc: i64,
    #[serde(default = "defaults::reply_rate")]
    pub reply_rate: f64,
    #[serde(default)]
    pub deleted_rate: f64,
    /// Comments link to one of the last `link_window` submissions.
    #[serde(default = "defaults::link_window")]
    pub link_window: u64,
}

mod defaults {
    pub fn n_subreddits() -> usize {
        50
    }
    pub fn community_skew() -> f64 {
        1.0
    }
    pub fn n_authors() -> usize {
        1000
    }
    pub fn activity_skew() -> f64 {
        2.0
    }
    pub fn start_utc() -> i64 {
        // 2006-01-01T00:00:00Z
        1_136_073_600
    }
    pub fn reply_rate() -> f64 {
        0.5
    }
    pub fn link_window() -> u64 {
        64
    }
}

impl SynthSpec {
    pub fn new(seed: u64, comments: KindSpec, submissions: KindSpec) -> Self {
        Self {
            seed,
            comments,
            submissions,
            n_subreddits: defaults::n_subreddits(),
            community_skew: defaults::community_skew(),
            n_authors: defaults::n_authors(),
            activity_skew: defaults::activity_skew(),
            dangling_plants: DanglingPlants::default(),
            plant_subreddit: None,
            start_utc: defaults::start_utc(),
            reply_rate: defaults::reply_rate(),
            deleted_rate: 0.0,
            link_window: defaults::link_window(),
        }
    }

    /// Parse from TOML, or JSON when `is_json`.
    pub fn parse(text: &str, is_json: bool) -> Result<Self, SynthError> {
        let spec: SynthSpec = if is_json {
            serde_json::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json)
    }

    pub fn kind(&self, kind: RecordKind) -> &KindSpec {
        match kind {
            RecordKind::Comment => &self.comments,
            RecordKind::Submission => &self.submissions,
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let rate_ok = |r: f64| (0.0..1.0).contains(&r);
        for kind in RecordKind::ALL {
            let k = self.kind(kind);
            let name = kind.as_str();
            if k.lo > k.hi || k.hi > MAX_VALUE {
                return Err(invalid(format!("{name} range [{}, {}] is empty or out of bounds", k.lo, k.hi)));
            }
            if !(k.seconds_per_id.is_finite() && k.seconds_per_id > 0.0) {
                return Err(invalid(format!("{name} seconds_per_id must be positive")));
            }
            for g in &k.gaps {
                match *g {
                    GapModel::Uniform { rate } if !rate_ok(rate) => {
                        return Err(invalid(format!("{name} uniform rate {rate} outside [0, 1)")))
                    }
                    GapModel::Bursty { rate, mean_len, max_len } if !rate_ok(rate) || !(mean_len >= 1.0) || max_len == 0 => {
                        return Err(invalid(format!("{name} bursty model needs rate in [0, 1), mean_len >= 1, max_len >= 1")));
                    }
                    _ => {}
                }
            }
            let jumps = k.epoch_jumps(kind);
            for (i, e) in jumps.iter().enumerate() {
                if e.lo > e.hi || e.lo <= k.lo || e.hi >= k.hi {
                    return Err(invalid(format!("{name} epoch jump [{}, {}] must lie strictly inside the range", e.lo, e.hi)));
                }
                if i > 0 && jumps[i - 1].hi + 2 > e.lo {
                    return Err(invalid(format!("{name} epoch jumps must be separated by at least one id")));
                }
            }
        }
        if self.n_subreddits == 0 || self.n_authors == 0 || self.n_authors > u32::MAX as usize {
            return Err(invalid("n_subreddits and n_authors must be positive"));
        }
        if !(self.activity_skew > 1.0) || !(self.community_skew >= 0.0) {
            return Err(invalid("activity_skew must exceed 1 and community_skew must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.reply_rate) || !(0.0..=1.0).contains(&self.deleted_rate) {
            return Err(invalid("reply_rate and deleted_rate must lie in [0, 1]"));
        }
        if self.link_window == 0 {
            return Err(invalid("link_window must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindManifest {
    pub range: Interval,
    pub observed: u64,
    pub missing_total: u64,
    /// Every missing ID, planted targets included, as maximal runs.
    pub missing: IdIntervalSet,
    pub epoch_jumps: Vec<ExclusionRange>,
    pub planted_targets: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CommunityTruth {
    pub observed_comments: u64,
    pub missing_comments: u64,
    pub observed_submissions: u64,
    pub missing_submissions: u64,
    /// Distinct planted targets referenced from this subreddit.
    pub dangling_comments: u64,
    pub dangling_submissions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserTruth {
    pub author: String,
    pub comments: u64,
    pub lost_comments: u64,
    pub submissions: u64,
    pub lost_submissions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticManifest {
    pub spec: SynthSpec,
    pub comments: KindManifest,
    pub submissions: KindManifest,
    pub communities: BTreeMap<String, CommunityTruth>,
    /// Authors with at least one record, sorted by name. Counts use the
    /// true author even when the emitted record is deletion-truncated.
    pub users: Vec<UserTruth>,
}

impl SyntheticManifest {
    pub fn kind(&self, kind: RecordKind) -> &KindManifest {
        match kind {
            RecordKind::Comment => &self.comments,
            RecordKind::Submission => &self.submissions,
        }
    }
}

/// Receives observed records in ID order: all submissions, then all comments.
pub trait CorpusSink {
    fn submission(&mut self, s: &SubmissionRecord) -> io::Result<()>;
    fn comment(&mut self, c: &CommentRecord) -> io::Result<()>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub comments: Vec<CommentRecord>,
    pub submissions: Vec<SubmissionRecord>,
}

impl CorpusSink for MemorySink {
    fn submission(&mut self, s: &SubmissionRecord) -> io::Result<()> {
        self.submissions.push(s.clone());
        Ok(())
    }

    fn comment(&mut self, c: &CommentRecord) -> io::Result<()> {
        self.comments.push(c.clone());
        Ok(())
    }
}

/// Writes records in the dump format: bare base-36 `id`, prefixed
/// `parent_id` / `link_id`.
pub struct NdjsonSink<W: Write> {
    pub comments: W,
    pub submissions: W,
}

#[derive(Serialize)]
struct DumpComment<'a> {
    id: String,
    parent_id: String,
    link_id: String,
    author: &'a str,
    subreddit: &'a str,
    created_utc: i64,
    body: &'a str,
}

#[derive(Serialize)]
struct DumpSubmission<'a> {
    id: String,
    author: &'a str,
    subreddit: &'a str,
    created_utc: i64,
    selftext: &'a str,
}

fn body(deleted: bool) -> &'static str {
    if deleted {
        DELETED
    } else {
        "synthetic"
    }
}

impl<W: Write> CorpusSink for NdjsonSink<W> {
    fn submission(&mut self, s: &SubmissionRecord) -> io::Result<()> {
        let line = DumpSubmission {
            id: encode_base36(s.id.value).map_err(io::Error::other)?,
            author: &s.author,
            subreddit: &s.subreddit,
            created_utc: s.created_utc,
            selftext: body(s.is_deleted),
        };
        serde_json::to_writer(&mut self.submissions, &line)?;
        self.submissions.write_all(b"\n")
    }

    fn comment(&mut self, c: &CommentRecord) -> io::Result<()> {
        let line = DumpComment {
            id: encode_base36(c.id.value).map_err(io::Error::other)?,
            parent_id: c.parent.fullname(),
            link_id: c.link.fullname(),
            author: &c.author,
            subreddit: &c.subreddit,
            created_utc: c.created_utc,
            body: body(c.is_deleted),
        };
        serde_json::to_writer(&mut self.comments, &line)?;
        self.comments.write_all(b"\n")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix(h ^ p))
}

fn kind_tag(kind: RecordKind) -> u64 {
    match kind {
        RecordKind::Comment => 1,
        RecordKind::Submission => 3,
    }
}

fn unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn cdf(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> u32 {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u32
}

struct KindPlan {
    kind: RecordKind,
    range: Interval,
    spec: KindSpec,
    jumps: Vec<ExclusionRange>,
    excluded: IdIntervalSet,
    /// Range minus exclusions.
    kept: IdIntervalSet,
    /// IDs that are always observed: endpoints and jump neighbours.
    forced: IdIntervalSet,
    missing: IdIntervalSet,
    observed: IdIntervalSet,
    start_utc: i64,
}

impl KindPlan {
    fn new(kind: RecordKind, spec: &KindSpec, start_utc: i64) -> Self {
        let range = Interval::new(spec.lo, spec.hi);
        let jumps = spec.epoch_jumps(kind);
        let excluded = IdIntervalSet::from_intervals(jumps.iter().map(ExclusionRange::interval));
        let kept = IdIntervalSet::from_range(range.lo, range.hi).difference(&excluded);
        let mut forced_ids = vec![range.lo, range.hi];
        for e in &jumps {
            forced_ids.extend([e.lo - 1, e.hi + 1]);
        }
        Self {
            kind,
            range,
            spec: spec.clone(),
            jumps,
            excluded,
            kept,
            forced: IdIntervalSet::from_ids(forced_ids),
            missing: IdIntervalSet::new(),
            observed: IdIntervalSet::new(),
            start_utc,
        }
    }

    fn n_blocks(&self) -> u64 {
        (self.range.hi - self.range.lo) / BLOCK + 1
    }

    fn block(&self, b: u64) -> Interval {
        let lo = self.range.lo + b * BLOCK;
        Interval::new(lo, (lo + (BLOCK - 1)).min(self.range.hi))
    }

    fn base_time(&self, pos: u64) -> i64 {
        self.start_utc + (pos as f64 * self.spec.seconds_per_id).floor() as i64
    }

    fn position(&self, id: u64) -> u64 {
        self.kept.rank(id) - 1
    }

    fn id_at_time(&self, t: i64) -> u64 {
        let pos = ((t - self.start_utc) as f64 / self.spec.seconds_per_id).floor();
        let pos = (pos.max(0.0) as u64).min(self.kept.len() - 1);
        self.kept.select(pos).expect("position clamped into range")
    }

    fn block_missing(&self, seed: u64, b: u64) -> Vec<Interval> {
        let span = self.block(b);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, kind_tag(self.kind), b, STREAM_GAPS]));
        let mut hits = IdSetBuilder::new();
        for g in &self.spec.gaps {
            match *g {
                GapModel::Uniform { rate } if rate > 0.0 => {
                    for id in span.lo..=span.hi {
                        if rng.random::<f64>() < rate {
                            hits.push(id);
                        }
                    }
                }
                GapModel::Bursty { rate, mean_len, max_len } if rate > 0.0 => {
                    let obs_mean = mean_len * (1.0 - rate) / rate;
                    let stretch = Geometric::new(1.0 / (1.0 + obs_mean)).expect("probability in (0, 1]");
                    let run = Geometric::new(1.0 / mean_len).expect("probability in (0, 1]");
                    let mut id = span.lo;
                    loop {
                        id = id.saturating_add(stretch.sample(&mut rng));
                        if id > span.hi {
                            break;
                        }
                        let len = (1 + run.sample(&mut rng)).min(max_len);
                        let end = id.saturating_add(len - 1).min(span.hi);
                        hits.extend(id..=end);
                        id = end.saturating_add(1);
                    }
                }
                _ => {}
            }
        }
        let (set, _) = hits.finish();
        set.difference(&self.excluded).difference(&self.forced).runs().to_vec()
    }
}

/// A comment whose parent or link is replaced by a planted target.
#[derive(Debug, Clone, Copy)]
enum Plant {
    Submission(u64),
    Comment(u64),
}

#[derive(Debug, Clone, Copy)]
struct Row {
    id: u64,
    parent: RecordId,
    link: RecordId,
    author: u32,
    subreddit: u32,
    created_utc: i64,
    deleted: bool,
    missing: bool,
    plant: Option<RecordId>,
}

struct Tables {
    author_names: Vec<String>,
    author_cdf: Vec<f64>,
    subreddit_names: Vec<String>,
    subreddit_cdf: Vec<f64>,
    plant_subreddit: Option<u32>,
}

impl Tables {
    fn new(spec: &SynthSpec) -> Self {
        let zeta = Zeta::new(spec.activity_skew).expect("validated exponent");
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[spec.seed, STREAM_AUTHORS]));
        let weights: Vec<f64> = (0..spec.n_authors).map(|_| zeta.sample(&mut rng).min(1e12)).collect();
        let sub_weights: Vec<f64> = (0..spec.n_subreddits).map(|k| ((k + 1) as f64).powf(-spec.community_skew)).collect();
        let mut subreddit_names: Vec<String> = (0..spec.n_subreddits).map(|k| format!("sub_{k}")).collect();
        let plant_subreddit = spec.plant_subreddit.as_ref().map(|name| match subreddit_names.iter().position(|n| n == name) {
            Some(i) => i as u32,
            None => {
                subreddit_names.push(name.clone());
                (subreddit_names.len() - 1) as u32
            }
        });
        Self {
            author_names: (0..spec.n_authors).map(|k| format!("user_{k}")).collect(),
            author_cdf: cdf(&weights),
            subreddit_names,
            subreddit_cdf: cdf(&sub_weights),
            plant_subreddit,
        }
    }

    fn subreddit_of_submission(&self, seed: u64, id: u64) -> u32 {
        pick(&self.subreddit_cdf, unit(mix(&[seed, STREAM_SUBREDDIT, id])))
    }
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    tables: Tables,
    comments: KindPlan,
    submissions: KindPlan,
    plants: HashMap<u64, Plant>,
    planted_c: Vec<u64>,
    planted_s: Vec<u64>,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a SynthSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        let mut g = Self {
            spec,
            tables: Tables::new(spec),
            comments: KindPlan::new(RecordKind::Comment, &spec.comments, spec.start_utc),
            submissions: KindPlan::new(RecordKind::Submission, &spec.submissions, spec.start_utc),
            plants: HashMap::new(),
            planted_c: Vec::new(),
            planted_s: Vec::new(),
        };
        for plan in [&mut g.comments, &mut g.submissions] {
            let runs: Vec<Vec<Interval>> = (0..plan.n_blocks()).into_par_iter().map(|b| plan.block_missing(spec.seed, b)).collect();
            plan.missing = IdIntervalSet::from_intervals(runs.into_iter().flatten());
        }
        g.place_plants()?;
        for plan in [&mut g.comments, &mut g.submissions] {
            plan.observed = plan.kept.difference(&plan.missing);
        }
        Ok(g)
    }

    fn pick_targets(plan: &KindPlan, rng: &mut ChaCha8Rng, count: u64) -> Result<Vec<u64>, SynthError> {
        let observed = plan.kept.difference(&plan.missing).difference(&plan.forced);
        if count > observed.len() / 2 {
            return Err(invalid(format!("{} {} plants do not fit in the observed range", count, plan.kind.as_str())));
        }
        let mut chosen = BTreeSet::new();
        while (chosen.len() as u64) < count {
            let id = observed.select(rng.random_range(0..observed.len())).expect("index below len");
            chosen.insert(id);
        }
        Ok(chosen.into_iter().collect())
    }

    fn place_plants(&mut self) -> Result<(), SynthError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.spec.seed, STREAM_PLANTS]));
        let p = self.spec.dangling_plants;
        self.planted_s = Self::pick_targets(&self.submissions, &mut rng, p.submissions)?;
        self.planted_c = Self::pick_targets(&self.comments, &mut rng, p.comments)?;
        self.submissions.missing = self.submissions.missing.union(&IdIntervalSet::from_ids(self.planted_s.iter().copied()));
        self.comments.missing = self.comments.missing.union(&IdIntervalSet::from_ids(self.planted_c.iter().copied()));
        let observed_c = self.comments.kept.difference(&self.comments.missing);

        let take = |from: u64, plants: &mut HashMap<u64, Plant>, plant: Plant| -> Result<(), SynthError> {
            let from = from.min(self.comments.range.hi);
            let mut at = observed_c.successor(from);
            while let Some(id) = at {
                if let Entry::Vacant(slot) = plants.entry(id) {
                    slot.insert(plant);
                    return Ok(());
                }
                at = id.checked_add(1).and_then(|n| observed_c.successor(n));
            }
            // Nothing free at or after `from`: fall back to earlier comments.
            let mut at = from.checked_sub(1).and_then(|v| observed_c.predecessor(v));
            while let Some(id) = at {
                if let Entry::Vacant(slot) = plants.entry(id) {
                    slot.insert(plant);
                    return Ok(());
                }
                at = id.checked_sub(1).and_then(|n| observed_c.predecessor(n));
            }
            Err(invalid("no observed comment left to reference a planted target"))
        };
        let mut plants = HashMap::new();
        for &target in &self.planted_s {
            let t = self.submissions.base_time(self.submissions.position(target)) + self.spec.submissions.jitter as i64 + 1;
            let near = self.comments.id_at_time(t);
            for _ in 0..rng.random_range(1..=3u32) {
                take(near + rng.random_range(0..1000), &mut plants, Plant::Submission(target))?;
            }
        }
        for &target in &self.planted_c {
            take(target + 1 + rng.random_range(0..100), &mut plants, Plant::Comment(target))?;
        }
        self.plants = plants;
        Ok(())
    }

    fn submission_rows(&self, b: u64) -> Vec<Row> {
        let plan = &self.submissions;
        let seed = self.spec.seed;
        let span = plan.block(b);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, kind_tag(plan.kind), b, STREAM_ATTRS]));
        let mut rows = Vec::with_capacity(span.len() as usize);
        let Some(first) = plan.kept.successor(span.lo).filter(|&v| v <= span.hi) else {
            return rows;
        };
        let mut pos = plan.position(first);
        for id in first..=span.hi {
            if plan.excluded.contains(id) {
                continue;
            }
            let jitter = rng.random_range(0..=plan.spec.jitter) as i64;
            let author = pick(&self.tables.author_cdf, rng.random::<f64>());
            let deleted = rng.random::<f64>() < self.spec.deleted_rate;
            let me = RecordId::submission(id);
            rows.push(Row {
                id,
                parent: me,
                link: me,
                author,
                subreddit: self.tables.subreddit_of_submission(seed, id),
                created_utc: plan.base_time(pos) + jitter,
                deleted,
                missing: plan.missing.contains(id),
                plant: None,
            });
            pos += 1;
        }
        rows
    }

    fn comment_rows(&self, b: u64) -> Vec<Row> {
        let plan = &self.comments;
        let subs = &self.submissions;
        let seed = self.spec.seed;
        let span = plan.block(b);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, kind_tag(plan.kind), b, STREAM_ATTRS]));
        let mut rows = Vec::with_capacity(span.len() as usize);
        let Some(first) = plan.kept.successor(span.lo).filter(|&v| v <= span.hi) else {
            return rows;
        };
        let mut pos = plan.position(first);
        let mut last_by_link: HashMap<u64, u64> = HashMap::new();
        for id in first..=span.hi {
            if plan.excluded.contains(id) {
                continue;
            }
            let jitter = rng.random_range(0..=plan.spec.jitter) as i64;
            let author = pick(&self.tables.author_cdf, rng.random::<f64>());
            let deleted = rng.random::<f64>() < self.spec.deleted_rate;
            let back = rng.random_range(0..self.spec.link_window);
            let reply = rng.random::<f64>() < self.spec.reply_rate;
            let created_utc = plan.base_time(pos) + jitter;
            pos += 1;

            let wanted = subs.id_at_time(created_utc).saturating_sub(back).max(subs.range.lo);
            let snapped =
                subs.observed.predecessor(wanted).or_else(|| subs.observed.successor(wanted)).expect("range endpoints are observed");
            let mut link = RecordId::submission(snapped);
            let mut parent = match last_by_link.get(&snapped) {
                Some(&prev) if reply => RecordId::comment(prev),
                _ => link,
            };
            let mut subreddit = self.tables.subreddit_of_submission(seed, snapped);
            let mut plant = None;
            if let Some(p) = self.plants.get(&id) {
                match *p {
                    Plant::Submission(t) => {
                        link = RecordId::submission(t);
                        parent = link;
                        subreddit = self.tables.subreddit_of_submission(seed, t);
                        plant = Some(link);
                    }
                    Plant::Comment(t) => {
                        parent = RecordId::comment(t);
                        plant = Some(parent);
                    }
                }
                if let Some(s) = self.tables.plant_subreddit {
                    subreddit = s;
                }
            }
            let missing = plan.missing.contains(id);
            if !missing && plant.is_none() {
                last_by_link.insert(snapped, id);
            }
            rows.push(Row { id, parent, link, author, subreddit, created_utc, deleted, missing, plant });
        }
        rows
    }

    fn manifest_kind(plan: &KindPlan, planted: &[u64]) -> KindManifest {
        KindManifest {
            range: plan.range,
            observed: plan.observed.len(),
            missing_total: plan.missing.len(),
            missing: plan.missing.clone(),
            epoch_jumps: plan.jumps.clone(),
            planted_targets: planted.to_vec(),
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    comments: u64,
    lost_comments: u64,
    submissions: u64,
    lost_submissions: u64,
}

/// Generate a corpus into `sink` and return its ground truth.
///
/// Output depends only on `spec`; the current rayon pool only affects speed.
pub fn generate<S: CorpusSink>(spec: &SynthSpec, sink: &mut S) -> Result<SyntheticManifest, SynthError> {
    let g = Generator::new(spec)?;
    let t = &g.tables;
    let mut users = vec![Tally::default(); t.author_names.len()];
    let mut communities = vec![CommunityTruth::default(); t.subreddit_names.len()];
    let mut dangling: BTreeMap<u32, (BTreeSet<u64>, BTreeSet<u64>)> = BTreeMap::new();

    let mut scratch_s = SubmissionRecord {
        id: RecordId::submission(0),
        author: String::new(),
        subreddit: String::new(),
        created_utc: 0,
        is_deleted: false,
    };
    let n = g.submissions.n_blocks();
    for wave in (0..n).step_by(WAVE) {
        let rows: Vec<Vec<Row>> = (wave..(wave + WAVE as u64).min(n)).into_par_iter().map(|b| g.submission_rows(b)).collect();
        for row in rows.iter().flatten() {
            let u = &mut users[row.author as usize];
            let c = &mut communities[row.subreddit as usize];
            u.submissions += 1;
            if row.missing {
                u.lost_submissions += 1;
                c.missing_submissions += 1;
                continue;
            }
            c.observed_submissions += 1;
            scratch_s.id = RecordId::submission(row.id);
            scratch_s.author.clear();
            scratch_s.author.push_str(if row.deleted { DELETED } else { &t.author_names[row.author as usize] });
            scratch_s.subreddit.clear();
            scratch_s.subreddit.push_str(&t.subreddit_names[row.subreddit as usize]);
            scratch_s.created_utc = row.created_utc;
            scratch_s.is_deleted = row.deleted;
            sink.submission(&scratch_s)?;
        }
    }

    let mut scratch_c = CommentRecord {
        id: RecordId::comment(0),
        parent: RecordId::comment(0),
        link: RecordId::submission(0),
        author: String::new(),
        subreddit: String::new(),
        created_utc: 0,
        is_deleted: false,
    };
    let n = g.comments.n_blocks();
    for wave in (0..n).step_by(WAVE) {
        let rows: Vec<Vec<Row>> = (wave..(wave + WAVE as u64).min(n)).into_par_iter().map(|b| g.comment_rows(b)).collect();
        for row in rows.iter().flatten() {
            let u = &mut users[row.author as usize];
            let c = &mut communities[row.subreddit as usize];
            u.comments += 1;
            if row.missing {
                u.lost_comments += 1;
                c.missing_comments += 1;
                continue;
            }
            c.observed_comments += 1;
            if let Some(target) = row.plant {
                let entry = dangling.entry(row.subreddit).or_default();
                match target.kind {
                    RecordKind::Comment => entry.0.insert(target.value),
                    RecordKind::Submission => entry.1.insert(target.value),
                };
            }
            scratch_c.id = RecordId::comment(row.id);
            scratch_c.parent = row.parent;
            scratch_c.link = row.link;
            scratch_c.author.clear();
            scratch_c.author.push_str(if row.deleted { DELETED } else { &t.author_names[row.author as usize] });
            scratch_c.subreddit.clear();
            scratch_c.subreddit.push_str(&t.subreddit_names[row.subreddit as usize]);
            scratch_c.created_utc = row.created_utc;
            scratch_c.is_deleted = row.deleted;
            sink.comment(&scratch_c)?;
        }
    }

    for (sub, (dc, ds)) in dangling {
        let c = &mut communities[sub as usize];
        c.dangling_comments = dc.len() as u64;
        c.dangling_submissions = ds.len() as u64;
    }
    let communities = t
        .subreddit_names
        .iter()
        .zip(communities)
        .filter(|(_, c)| *c != CommunityTruth::default())
        .map(|(name, c)| (name.clone(), c))
        .collect();
    let mut users: Vec<UserTruth> = t
        .author_names
        .iter()
        .zip(users)
        .filter(|(_, u)| u.comments + u.submissions > 0)
        .map(|(name, u)| UserTruth {
            author: name.clone(),
            comments: u.comments,
            lost_comments: u.lost_comments,
            submissions: u.submissions,
            lost_submissions: u.lost_submissions,
        })
        .collect();
    users.sort_by(|a, b| a.author.cmp(&b.author));

    Ok(SyntheticManifest {
        spec: spec.clone(),
        comments: Generator::manifest_kind(&g.comments, &g.planted_c),
        submissions: Generator::manifest_kind(&g.submissions, &g.planted_s),
        communities,
        users,
    })
}
