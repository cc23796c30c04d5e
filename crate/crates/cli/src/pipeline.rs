//! Ingestion and the analyses, independent of how results are written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read};

use idgap_core::census::{
    build_observed, census, detect_discontinuities, load_exclusions, normalize_exclusions, CensusRange, CensusReport, ExclusionRange,
};
use idgap_core::codec::RecordKind;
use idgap_core::community::{
    community_regressions, threshold_report, CommunityAccumulator, CommunityGapStats, CommunityRegressions, ThresholdReport,
};
use idgap_core::ingest::{ingest_reader, CommentRecord, IngestStats, Record, SubmissionRecord, DELETED};
use idgap_core::references::{audit_references_par, DanglingReport};
use idgap_core::risk::{population_summary, sample_users, MissingRates, RiskPopulationSummary, UserRiskProfile};
use idgap_core::temporal::{attribute_timestamps, burstiness, monthly_stats, BurstinessResult, MonthlyGapStats, ObservedTimeline};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bundle::InputDigest;
use crate::config::AuditConfig;
use crate::CliError;

/// Reader that hashes everything passing through it.
struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

#[derive(Debug, Default)]
pub struct Corpus {
    pub comments: Vec<CommentRecord>,
    pub submissions: Vec<SubmissionRecord>,
    pub stats_comments: IngestStats,
    pub stats_submissions: IngestStats,
    pub inputs: Vec<InputDigest>,
}

impl Corpus {
    pub fn stats(&self, kind: RecordKind) -> &IngestStats {
        match kind {
            RecordKind::Comment => &self.stats_comments,
            RecordKind::Submission => &self.stats_submissions,
        }
    }

    pub fn ids(&self, kind: RecordKind) -> Vec<u64> {
        match kind {
            RecordKind::Comment => self.comments.iter().map(|c| c.id.value).collect(),
            RecordKind::Submission => self.submissions.iter().map(|s| s.id.value).collect(),
        }
    }

    pub fn times(&self, kind: RecordKind) -> Vec<(u64, i64)> {
        match kind {
            RecordKind::Comment => self.comments.iter().map(|c| (c.id.value, c.created_utc)).collect(),
            RecordKind::Submission => self.submissions.iter().map(|s| (s.id.value, s.created_utc)).collect(),
        }
    }
}

struct Shard {
    records: Vec<Record>,
    stats: IngestStats,
    digest: InputDigest,
}

fn read_shard<R: Read>(reader: R, name: String, kind: RecordKind, cfg: &AuditConfig) -> Result<Shard, CliError> {
    let mut hashing = HashingReader { inner: reader, hasher: Sha256::new(), bytes: 0 };
    let mut records = Vec::new();
    let stats = ingest_reader(&mut hashing, kind, cfg.ingest_mode, |r| records.push(r))
        .map_err(|e| CliError::Data(anyhow::anyhow!("{name}: {e}")))?;
    // Drain anything left after a stop so the digest covers the whole input.
    io::copy(&mut hashing, &mut io::sink()).map_err(|e| CliError::Data(anyhow::anyhow!("{name}: {e}")))?;
    let digest =
        InputDigest { kind: kind.as_str().to_string(), path: name, bytes: hashing.bytes, sha256: hex::encode(hashing.hasher.finalize()) };
    Ok(Shard { records, stats, digest })
}

/// Every input path must exist before any work starts.
pub fn check_inputs(cfg: &AuditConfig, kinds: &[RecordKind]) -> Result<(), CliError> {
    for &kind in kinds {
        if !cfg.has_input(kind) {
            return Err(CliError::Usage(format!("no {} input given", kind.as_str())));
        }
        for p in cfg.inputs(kind) {
            if !p.is_file() {
                return Err(CliError::Usage(format!("input {} does not exist", p.display())));
            }
        }
    }
    if let Some(p) = &cfg.exclusions {
        if !p.is_file() {
            return Err(CliError::Usage(format!("exclusion file {} does not exist", p.display())));
        }
    }
    Ok(())
}

/// Read the shards of each requested kind, in parallel, keeping shard order.
pub fn load_corpus(cfg: &AuditConfig, kinds: &[RecordKind]) -> Result<Corpus, CliError> {
    let mut corpus = Corpus::default();
    for &kind in kinds {
        let mut shards: Vec<Shard> = cfg
            .inputs(kind)
            .par_iter()
            .map(|p| {
                let f = File::open(p).map_err(|e| CliError::Data(anyhow::anyhow!("{}: {e}", p.display())))?;
                read_shard(BufReader::with_capacity(1 << 20, f), p.display().to_string(), kind, cfg)
            })
            .collect::<Result<_, _>>()?;
        if cfg.stdin == Some(kind) {
            shards.push(read_shard(io::stdin().lock(), "<stdin>".into(), kind, cfg)?);
        }
        let mut stats = IngestStats::default();
        for shard in shards {
            stats = stats.merge(&shard.stats);
            corpus.inputs.push(shard.digest);
            for r in shard.records {
                match r {
                    Record::Comment(c) => corpus.comments.push(c),
                    Record::Submission(s) => corpus.submissions.push(s),
                }
            }
        }
        match kind {
            RecordKind::Comment => corpus.stats_comments = stats,
            RecordKind::Submission => corpus.stats_submissions = stats,
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusOutcome {
    pub report: CensusReport,
    /// Internal runs at least the discontinuity threshold long.
    pub candidate_discontinuities: Vec<ExclusionRange>,
    /// Exclusions that were subtracted, file entries and promoted candidates.
    pub exclusions_applied: Vec<ExclusionRange>,
    pub ingest: IngestStats,
}

pub fn file_exclusions(cfg: &AuditConfig) -> Result<Vec<ExclusionRange>, CliError> {
    match &cfg.exclusions {
        Some(p) => load_exclusions(p).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(Vec::new()),
    }
}

pub fn run_census(cfg: &AuditConfig, corpus: &Corpus, kind: RecordKind, from_file: &[ExclusionRange]) -> Result<CensusOutcome, CliError> {
    let observed = build_observed(corpus.ids(kind));
    let candidates = detect_discontinuities(&observed.set, cfg.discontinuity_threshold);
    let mut applied: Vec<ExclusionRange> = from_file.iter().filter(|e| e.applies_to(kind)).cloned().collect();
    if let Some(min_len) = cfg.promote_discontinuities {
        for c in detect_discontinuities(&observed.set, min_len) {
            applied.push(ExclusionRange::new(c.lo, c.hi, format!("promoted {}", c.label)).for_kind(kind));
        }
    }
    let range = match cfg.range(kind) {
        Some(r) => CensusRange::Explicit { lo: r.lo, hi: r.hi },
        None => CensusRange::Auto,
    };
    let report = census(kind, &observed, range, &applied).map_err(|e| CliError::Data(anyhow::anyhow!("{} census: {e}", kind.as_str())))?;
    Ok(CensusOutcome { report, candidate_discontinuities: candidates, exclusions_applied: applied, ingest: corpus.stats(kind).clone() })
}

#[derive(Debug, Clone, Serialize)]
pub struct TemporalOutcome {
    pub kind: RecordKind,
    pub monthly: Vec<MonthlyGapStats>,
    /// Burstiness over the whole counted range; `None` below two runs.
    pub burstiness: Option<BurstinessResult>,
    pub clamped_timestamps: u64,
    pub total_missing: u64,
}

pub fn run_temporal(cfg: &AuditConfig, corpus: &Corpus, census: &CensusOutcome) -> Result<TemporalOutcome, CliError> {
    let kind = census.report.kind;
    let timeline = ObservedTimeline::new(corpus.times(kind));
    let excluded = normalize_exclusions(&census.exclusions_applied).map_err(|e| CliError::Data(e.into()))?;
    let runs = census.report.runs.runs();
    let data = |e: idgap_core::temporal::TemporalError| CliError::Data(anyhow::anyhow!("{} temporal: {e}", kind.as_str()));
    let attribution = attribute_timestamps(runs, &timeline, &excluded).map_err(data)?;
    let times = corpus.times(kind).into_iter().map(|(_, t)| t);
    let monthly = monthly_stats(&attribution, times, cfg.window, cfg.burst_operand).map_err(data)?;
    Ok(TemporalOutcome {
        kind,
        monthly,
        burstiness: burstiness(runs, cfg.burst_operand).ok(),
        clamped_timestamps: attribution.clamped_timestamps,
        total_missing: attribution.total_missing(),
    })
}

pub fn run_dangling(corpus: &Corpus) -> DanglingReport {
    let obs_c = build_observed(corpus.ids(RecordKind::Comment));
    let obs_s = build_observed(corpus.ids(RecordKind::Submission));
    audit_references_par(&corpus.comments, &obs_c.set, &obs_s.set)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleInfo {
    pub requested: usize,
    pub drawn: usize,
    pub distinct_authors: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskOutcome {
    pub sample: SampleInfo,
    pub summary: RiskPopulationSummary,
    #[serde(skip)]
    pub profiles: Vec<UserRiskProfile>,
}

pub fn missing_rates(comments: Option<&CensusReport>, submissions: Option<&CensusReport>) -> MissingRates {
    let parts = |r: Option<&CensusReport>| r.map_or((0, 0), |r| (r.missing_total, r.observed));
    let (mc, oc) = parts(comments);
    let (ms, os) = parts(submissions);
    MissingRates::from_counts(mc, oc, ms, os)
}

pub fn run_users(cfg: &AuditConfig, corpus: &Corpus, rates: MissingRates) -> Result<RiskOutcome, CliError> {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for c in &corpus.comments {
        if c.author != DELETED {
            counts.entry(&c.author).or_default().0 += 1;
        }
    }
    for s in &corpus.submissions {
        if s.author != DELETED {
            counts.entry(&s.author).or_default().1 += 1;
        }
    }
    let drawn = cfg.sample_size.min(counts.len());
    let sample = sample_users(counts.keys().copied(), drawn, cfg.sample_seed).map_err(|e| CliError::Data(e.into()))?;
    let profiles: Vec<UserRiskProfile> = sample
        .iter()
        .map(|a| {
            let (n_c, n_s) = counts[a.as_str()];
            UserRiskProfile::new(a.as_str(), n_c, n_s, rates)
        })
        .collect();
    let summary =
        population_summary(&profiles, rates, cfg.risk_threshold).map_err(|e| CliError::Data(anyhow::anyhow!("user risk: {e}")))?;
    Ok(RiskOutcome {
        sample: SampleInfo { requested: cfg.sample_size, drawn, distinct_authors: counts.len(), seed: cfg.sample_seed },
        summary,
        profiles,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunityOutcome {
    #[serde(skip)]
    pub rows: Vec<CommunityGapStats>,
    pub regressions: CommunityRegressions,
    pub thresholds: ThresholdReport,
}

pub fn run_communities(cfg: &AuditConfig, corpus: &Corpus, dangling: &DanglingReport) -> CommunityOutcome {
    let acc = corpus
        .comments
        .par_chunks(1 << 16)
        .map(|chunk| {
            let mut a = CommunityAccumulator::new();
            for c in chunk {
                a.add_comment(&c.subreddit, c.created_utc);
            }
            a
        })
        .reduce(CommunityAccumulator::new, CommunityAccumulator::merge);
    let mut acc = acc;
    for s in &corpus.submissions {
        acc.add_submission(&s.subreddit, s.created_utc);
    }
    let rows = acc.finish(dangling);
    CommunityOutcome {
        regressions: community_regressions(&rows, cfg.transform),
        thresholds: threshold_report(&rows, cfg.community_threshold),
        rows,
    }
}
