//! Command runners: each one loads what it needs and publishes a bundle.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use idgap_core::codec::RecordKind;
use idgap_core::community::render_regression_table;
use idgap_core::ingest::Record;
use idgap_core::references::DanglingReport;
use idgap_core::risk::anonymize;
use idgap_core::sweep::{inject_faults, sweep_with_refill, MockStore, SweepOptions};
use idgap_core::synth::{generate, CorpusSink, NdjsonSink, SynthSpec};
use idgap_core::typology::{community_tags, join_tags, user_tags};
use idgap_core::Interval;
use serde::Serialize;
use serde_json::json;

use crate::args::{SweepArgs, SynthArgs};
use crate::bundle::Bundle;
use crate::config::{AuditConfig, ANON_KEY_ENV};
use crate::pipeline::{self, CensusOutcome, CommunityOutcome, Corpus, RiskOutcome, TemporalOutcome};
use crate::CliError;

const KINDS: [RecordKind; 2] = [RecordKind::Comment, RecordKind::Submission];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Census,
    Dangling,
    Temporal,
    Users,
    Communities,
    Full,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Census => "census",
            Analysis::Dangling => "dangling",
            Analysis::Temporal => "temporal",
            Analysis::Users => "users",
            Analysis::Communities => "communities",
            Analysis::Full => "full",
        }
    }

    /// Kinds whose input must be present.
    fn required(self) -> &'static [RecordKind] {
        match self {
            Analysis::Dangling | Analysis::Communities | Analysis::Full => &KINDS,
            _ => &[],
        }
    }
}

fn out_dir(cfg: &AuditConfig) -> Result<PathBuf, CliError> {
    cfg.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))
}

fn f(x: f64) -> String {
    x.to_string()
}

pub fn run_analysis(analysis: Analysis, cfg: &AuditConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let out = out_dir(cfg)?;
    let kinds: Vec<RecordKind> = match cfg.kind {
        Some(_) if analysis.required().len() == KINDS.len() => {
            return Err(CliError::Usage(format!("{} needs both kinds; drop --kind", analysis.name())));
        }
        Some(k) => vec![k],
        None => KINDS.into_iter().filter(|&k| cfg.has_input(k) || analysis.required().contains(&k)).collect(),
    };
    if kinds.is_empty() {
        return Err(CliError::Usage("no input given; pass --comments and/or --submissions".into()));
    }
    pipeline::check_inputs(cfg, &kinds)?;
    let from_file = pipeline::file_exclusions(cfg)?;
    let corpus = pipeline::load_corpus(cfg, &kinds)?;

    let mut bundle = Bundle::create(&out, cfg.echo(), cfg.digest())?;
    let wants = |a: Analysis| analysis == a || analysis == Analysis::Full;

    let mut censuses: Vec<CensusOutcome> = Vec::new();
    for &kind in &kinds {
        censuses.push(pipeline::run_census(cfg, &corpus, kind, &from_file)?);
    }
    if wants(Analysis::Census) {
        for c in &censuses {
            bundle.write_json(&format!("census_{}.json", c.report.kind.as_str()), c)?;
        }
    }
    let census_of = |k: RecordKind| censuses.iter().find(|c| c.report.kind == k).map(|c| &c.report);

    if wants(Analysis::Temporal) {
        let mut all = Vec::new();
        for c in &censuses {
            let t = pipeline::run_temporal(cfg, &corpus, c)?;
            write_temporal_csv(&mut bundle, &t)?;
            all.push(t);
        }
        bundle.write_json("temporal.json", &all)?;
    }

    let dangling = (wants(Analysis::Dangling) || wants(Analysis::Communities)).then(|| pipeline::run_dangling(&corpus));
    if wants(Analysis::Dangling) {
        let d = dangling.as_ref().expect("computed above");
        bundle.write_json("dangling.json", d)?;
        write_dangling_csv(&mut bundle, d)?;
    }

    let mut risk = None;
    if wants(Analysis::Users) {
        let rates = pipeline::missing_rates(census_of(RecordKind::Comment), census_of(RecordKind::Submission));
        let r = pipeline::run_users(cfg, &corpus, rates)?;
        write_users(&mut bundle, cfg, &r)?;
        bundle.write_json("risk_summary.json", &r)?;
        risk = Some(r);
    }

    let mut communities = None;
    if wants(Analysis::Communities) {
        let c = pipeline::run_communities(cfg, &corpus, dangling.as_ref().expect("computed above"));
        write_communities(&mut bundle, cfg, &c)?;
        communities = Some(c);
    }

    if analysis == Analysis::Full {
        let summary = Summary::new(&corpus, &censuses, dangling.as_ref(), risk.as_ref(), communities.as_ref());
        bundle.write_json("summary.json", &summary)?;
        bundle.write_text("summary.txt", &summary.render())?;
    }

    bundle.finish(analysis.name(), &corpus.inputs)
}

fn write_temporal_csv(bundle: &mut Bundle, t: &TemporalOutcome) -> Result<(), CliError> {
    let rows = t.monthly.iter().map(|m| {
        vec![
            m.month.to_string(),
            m.observed.to_string(),
            m.missing.to_string(),
            f(m.pct_missing),
            f(m.rolling_pct),
            m.cumulative_missing.to_string(),
            m.burstiness_b.map(f).unwrap_or_default(),
            m.n_runs.to_string(),
        ]
    });
    bundle.write_csv(
        &format!("temporal_{}.csv", t.kind.as_str()),
        &["month", "observed", "missing", "pct_missing", "rolling_pct", "cumulative_missing", "burstiness_b", "n_runs"],
        rows,
    )
}

fn write_dangling_csv(bundle: &mut Bundle, d: &DanglingReport) -> Result<(), CliError> {
    let rows = d.per_subreddit.iter().map(|(name, s)| {
        vec![
            name.clone(),
            s.dangling_submissions.to_string(),
            s.dangling_comments.to_string(),
            s.edges.to_string(),
            s.total_comments.to_string(),
        ]
    });
    bundle.write_csv(
        "dangling_subreddits.csv",
        &["subreddit", "dangling_submissions", "dangling_comments", "edges", "total_comments"],
        rows,
    )
}

fn write_users(bundle: &mut Bundle, cfg: &AuditConfig, r: &RiskOutcome) -> Result<(), CliError> {
    let key = if cfg.anonymize {
        let k = std::env::var_os(ANON_KEY_ENV).ok_or_else(|| CliError::Usage(format!("--anonymize needs the key in {ANON_KEY_ENV}")))?;
        Some(k.into_encoded_bytes())
    } else {
        None
    };
    let mut rows: Vec<Vec<String>> = r
        .profiles
        .iter()
        .map(|p| {
            let author = key.as_deref().map_or_else(|| p.author.clone(), |k| anonymize(&p.author, k));
            vec![
                author,
                p.n_comments.to_string(),
                p.n_submissions.to_string(),
                f(p.additive_risk_c),
                f(p.compound_risk_c),
                f(p.additive_risk_s),
                f(p.compound_risk_s),
                join_tags(&user_tags(p, cfg.risk_threshold)),
            ]
        })
        .collect();
    // Pseudonyms reorder rows; sorting keeps the output independent of the sample order.
    rows.sort();
    bundle.write_csv(
        "users.csv",
        &["author", "n_comments", "n_submissions", "additive_risk_c", "compound_risk_c", "additive_risk_s", "compound_risk_s", "tags"],
        rows,
    )
}

fn write_communities(bundle: &mut Bundle, cfg: &AuditConfig, c: &CommunityOutcome) -> Result<(), CliError> {
    let rows = c.rows.iter().map(|s| {
        vec![
            s.subreddit.clone(),
            s.observed_comments.to_string(),
            s.observed_submissions.to_string(),
            s.dangling_comments.to_string(),
            s.dangling_submissions.to_string(),
            s.created_month.to_string(),
            f(s.pct_missing_comments),
            f(s.pct_missing_submissions),
            join_tags(&community_tags(s, cfg.community_threshold)),
        ]
    });
    bundle.write_csv(
        "communities.csv",
        &[
            "subreddit",
            "observed_comments",
            "observed_submissions",
            "dangling_comments",
            "dangling_submissions",
            "created_month",
            "pct_missing_comments",
            "pct_missing_submissions",
            "tags",
        ],
        rows,
    )?;
    bundle.write_json("regression.json", c)?;
    bundle.write_text("regression.txt", &render_regression_table(&c.regressions))
}

#[derive(Debug, Serialize)]
struct KindRow {
    kind: RecordKind,
    observed: u64,
    missing: u64,
    missing_pct: f64,
    excluded: u64,
    runs: usize,
    longest_run: u64,
    candidate_discontinuities: usize,
    malformed_lines: u64,
    deleted: u64,
}

#[derive(Debug, Serialize)]
struct Summary {
    kinds: Vec<KindRow>,
    distinct_dangling_comments: Option<u64>,
    distinct_dangling_submissions: Option<u64>,
    users_sampled: Option<usize>,
    users_at_risk_comments: Option<f64>,
    users_at_risk_submissions: Option<f64>,
    risk_threshold: Option<f64>,
    communities: Option<usize>,
    communities_with_dangling: Option<u64>,
}

impl Summary {
    fn new(
        corpus: &Corpus,
        censuses: &[CensusOutcome],
        dangling: Option<&DanglingReport>,
        risk: Option<&RiskOutcome>,
        communities: Option<&CommunityOutcome>,
    ) -> Self {
        let kinds = censuses
            .iter()
            .map(|c| {
                let r = &c.report;
                let stats = corpus.stats(r.kind);
                KindRow {
                    kind: r.kind,
                    observed: r.observed,
                    missing: r.missing_total,
                    missing_pct: 100.0 * r.missing_rate(),
                    excluded: r.excluded,
                    runs: r.runs.runs().len(),
                    longest_run: r.runs.runs().iter().map(|i| i.len()).max().unwrap_or(0),
                    candidate_discontinuities: c.candidate_discontinuities.len(),
                    malformed_lines: stats.records_malformed,
                    deleted: stats.deleted_count,
                }
            })
            .collect();
        Self {
            kinds,
            distinct_dangling_comments: dangling.map(|d| d.dangling_comment_refs),
            distinct_dangling_submissions: dangling.map(|d| d.dangling_submission_refs),
            users_sampled: risk.map(|r| r.sample.drawn),
            users_at_risk_comments: risk.map(|r| r.summary.comments.frac_compound_at_least),
            users_at_risk_submissions: risk.map(|r| r.summary.submissions.frac_compound_at_least),
            risk_threshold: risk.map(|r| r.summary.threshold),
            communities: communities.map(|c| c.rows.len()),
            communities_with_dangling: communities.map(|c| c.thresholds.communities_with_dangling),
        }
    }

    fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28}{:>18}{:>18}", "", "Comments", "Submissions");
        let cell = |k: RecordKind, pick: &dyn Fn(&KindRow) -> String| {
            self.kinds.iter().find(|r| r.kind == k).map_or_else(|| "-".to_string(), pick)
        };
        type Line<'a> = (&'a str, &'a dyn Fn(&KindRow) -> String);
        let lines: [Line; 8] = [
            ("Observed", &|r| r.observed.to_string()),
            ("Missing", &|r| r.missing.to_string()),
            ("Missing (%)", &|r| format!("{:.4}", r.missing_pct)),
            ("Excluded", &|r| r.excluded.to_string()),
            ("Gap runs", &|r| r.runs.to_string()),
            ("Longest run", &|r| r.longest_run.to_string()),
            ("Candidate discontinuities", &|r| r.candidate_discontinuities.to_string()),
            ("Deleted", &|r| r.deleted.to_string()),
        ];
        for (label, pick) in lines {
            let _ = writeln!(out, "{:<28}{:>18}{:>18}", label, cell(RecordKind::Comment, pick), cell(RecordKind::Submission, pick));
        }
        let opt = |v: Option<u64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{:<28}{:>18}{:>18}",
            "Dangling (distinct)",
            opt(self.distinct_dangling_comments),
            opt(self.distinct_dangling_submissions)
        );
        if let (Some(n), Some(t)) = (self.users_sampled, self.risk_threshold) {
            let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
            let _ = writeln!(
                out,
                "{:<28}{:>18}{:>18}",
                format!("Users at risk >= {t} (%)"),
                pct(self.users_at_risk_comments),
                pct(self.users_at_risk_submissions)
            );
            let _ = writeln!(out, "{:<28}{:>18}", "Users sampled", n);
        }
        if let (Some(n), Some(d)) = (self.communities, self.communities_with_dangling) {
            let _ = writeln!(out, "{:<28}{:>18}", "Communities", n);
            let _ = writeln!(out, "{:<28}{:>18}", "Communities with dangling", d);
        }
        out
    }
}

fn load_spec(path: &Path) -> Result<SynthSpec, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("spec {} does not exist", path.display())));
    }
    let spec = SynthSpec::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

pub fn run_synth(args: &SynthArgs) -> Result<Vec<PathBuf>, CliError> {
    let spec = load_spec(&args.spec)?;
    let echo = serde_json::to_value(&spec).expect("spec serializes");
    let digest = crate::digest_value(&echo);
    let mut bundle = Bundle::create(&args.out, echo, digest)?;
    let comments = BufWriter::with_capacity(1 << 20, bundle.create_file("comments.ndjson")?);
    let submissions = BufWriter::with_capacity(1 << 20, bundle.create_file("submissions.ndjson")?);
    let mut sink = NdjsonSink { comments, submissions };
    let truth = generate(&spec, &mut sink).map_err(|e| CliError::Data(e.into()))?;
    let io = |e: std::io::Error| CliError::Data(anyhow::anyhow!("writing corpus: {e}"));
    sink.comments.flush().map_err(io)?;
    sink.submissions.flush().map_err(io)?;
    drop(sink);
    bundle.write_json("truth.json", &truth)?;
    bundle.finish("synth", &[])
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    kind: RecordKind,
    range: Interval,
    batch: usize,
    passes: u32,
    drop_rate: f64,
    fault_seed: u64,
    requests: usize,
    requested_ids: u64,
    returned: usize,
    store_visible: u64,
}

pub fn run_sweep(args: &SweepArgs, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    if args.batch == 0 {
        return Err(CliError::Usage("batch must be positive".into()));
    }
    if !(0.0..=1.0).contains(&args.drop_rate) {
        return Err(CliError::Usage(format!("drop rate {} outside [0, 1]", args.drop_rate)));
    }
    let kind: RecordKind = args.kind.into();
    let cfg = AuditConfig { comments: args.comments.clone(), submissions: args.submissions.clone(), ..Default::default() };
    let kinds: Vec<RecordKind> = KINDS.into_iter().filter(|&k| cfg.has_input(k)).collect();
    if kinds.is_empty() {
        return Err(CliError::Usage("no store contents given; pass --comments and/or --submissions".into()));
    }
    pipeline::check_inputs(&cfg, &kinds)?;
    let corpus = pipeline::load_corpus(&cfg, &kinds)?;
    let records = corpus.comments.into_iter().map(Record::Comment).chain(corpus.submissions.into_iter().map(Record::Submission));
    let store = MockStore::from_records(records);
    let visible = store.visible_ids(kind);
    let range = match args.range {
        Some(r) => Interval::new(r.lo, r.hi),
        None => visible.hull().ok_or_else(|| CliError::Data(anyhow::anyhow!("store holds no {} records", kind.as_str())))?,
    };
    let faulty = inject_faults(store, args.drop_rate, args.fault_seed);
    let result = sweep_with_refill(&faulty, kind, range, args.passes, SweepOptions { batch: args.batch, workers, pass: 0 });

    let echo = json!({
        "kind": kind,
        "range": range,
        "batch": args.batch,
        "passes": args.passes,
        "drop_rate": args.drop_rate,
        "fault_seed": args.fault_seed,
    });
    let digest = crate::digest_value(&echo);
    let mut bundle = Bundle::create(&args.out, echo, digest)?;
    let mut nd = NdjsonSink { comments: Vec::new(), submissions: Vec::new() };
    for r in &result.records {
        let written = match r {
            Record::Comment(c) => nd.comment(c),
            Record::Submission(s) => nd.submission(s),
        };
        written.map_err(|e| CliError::Data(e.into()))?;
    }
    let bytes = match kind {
        RecordKind::Comment => nd.comments,
        RecordKind::Submission => nd.submissions,
    };
    bundle.write_bytes(&format!("swept_{}.ndjson", kind.as_str()), &bytes)?;
    let rows = result.log.iter().map(|b| vec![b.first.to_string(), b.last.to_string(), b.requested.to_string(), b.returned.to_string()]);
    bundle.write_csv("sweep_log.csv", &["first", "last", "requested", "returned"], rows)?;
    let summary = SweepSummary {
        kind,
        range,
        batch: args.batch,
        passes: args.passes,
        drop_rate: args.drop_rate,
        fault_seed: args.fault_seed,
        requests: result.log.len(),
        requested_ids: result.log.iter().map(|b| b.requested).sum(),
        returned: result.records.len(),
        store_visible: visible.count_in(range),
    };
    bundle.write_json("sweep.json", &summary)?;
    bundle.finish("sweep", &corpus.inputs)
}
