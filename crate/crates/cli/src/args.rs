//! Command-line surface. Every audit flag is optional and overrides the
//! corresponding config-file value.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idgap_core::codec::RecordKind;
use idgap_core::community::Transform;
use idgap_core::temporal::BurstOperand;

use crate::config::{parse_range, AuditConfig, RangeOverride};

#[derive(Debug, Parser)]
#[command(name = "idgap", version, about = "Audit sequential-ID corpora for missing records")]
pub struct Cli {
    /// TOML or JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads. Outputs do not depend on this value.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count missing ID runs per kind.
    Census(AuditArgs),
    /// Audit comment references whose targets are absent.
    Dangling(AuditArgs),
    /// Date missing runs and summarize them per month.
    Temporal(AuditArgs),
    /// Per-user risk of having lost content.
    Users(AuditArgs),
    /// Per-community missing shares and regressions.
    Communities(AuditArgs),
    /// Every analysis plus a summary table.
    Full(AuditArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Sweep an ID range against a simulated object store.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Comment,
    Submission,
}

impl From<KindArg> for RecordKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Comment => RecordKind::Comment,
            KindArg::Submission => RecordKind::Submission,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct AuditArgs {
    /// Comment NDJSON shards.
    #[arg(long, num_args = 1..)]
    pub comments: Vec<PathBuf>,
    /// Submission NDJSON shards.
    #[arg(long, num_args = 1..)]
    pub submissions: Vec<PathBuf>,
    /// Read records of this kind from standard input.
    #[arg(long, value_enum)]
    pub stdin: Option<KindArg>,
    /// Restrict the analysis to one record kind.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Census range LO:HI for the kind chosen with --kind.
    #[arg(long, value_parser = parse_range, requires = "kind")]
    pub range: Option<RangeOverride>,
    /// Fail on the first malformed line.
    #[arg(long)]
    pub strict: bool,
    /// Exclusion ranges: TOML `[[exclusion]]` tables or a JSON list.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    /// Comment census range LO:HI (decimal, fullname or b36:...).
    #[arg(long, value_parser = parse_range)]
    pub comment_range: Option<RangeOverride>,
    /// Submission census range LO:HI.
    #[arg(long, value_parser = parse_range)]
    pub submission_range: Option<RangeOverride>,
    #[arg(long)]
    pub discontinuity_threshold: Option<u64>,
    /// Treat candidate discontinuities at least this long as exclusions.
    #[arg(long)]
    pub promote_discontinuities: Option<u64>,
    /// Rolling window in months.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub burst_operand: Option<BurstOperand>,
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// User risk threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Community missing-share threshold.
    #[arg(long)]
    pub community_threshold: Option<f64>,
    #[arg(long)]
    pub transform: Option<Transform>,
    /// Pseudonymize authors with the key in IDGAP_ANON_KEY.
    #[arg(long)]
    pub anonymize: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl AuditArgs {
    pub fn apply(&self, cfg: &mut AuditConfig) {
        if !self.comments.is_empty() {
            cfg.comments = self.comments.clone();
        }
        if !self.submissions.is_empty() {
            cfg.submissions = self.submissions.clone();
        }
        if let Some(k) = self.stdin {
            cfg.stdin = Some(k.into());
        }
        if self.strict {
            cfg.ingest_mode = idgap_core::ingest::IngestMode::Strict;
        }
        macro_rules! set {
            ($($field:ident <- $flag:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(
            discontinuity_threshold <- discontinuity_threshold,
            window <- window,
            burst_operand <- burst_operand,
            sample_size <- sample_size,
            sample_seed <- seed,
            risk_threshold <- threshold,
            community_threshold <- community_threshold,
            transform <- transform,
        );
        if self.exclusions.is_some() {
            cfg.exclusions = self.exclusions.clone();
        }
        if let Some(k) = self.kind {
            cfg.kind = Some(k.into());
        }
        if let (Some(k), Some(r)) = (self.kind, self.range) {
            match k {
                KindArg::Comment => cfg.comment_range = Some(r),
                KindArg::Submission => cfg.submission_range = Some(r),
            }
        }
        if self.comment_range.is_some() {
            cfg.comment_range = self.comment_range;
        }
        if self.submission_range.is_some() {
            cfg.submission_range = self.submission_range;
        }
        if self.promote_discontinuities.is_some() {
            cfg.promote_discontinuities = self.promote_discontinuities;
        }
        if self.anonymize {
            cfg.anonymize = true;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML or JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Records that make up the store; IDs not listed do not exist.
    #[arg(long, num_args = 1..)]
    pub comments: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub submissions: Vec<PathBuf>,
    /// Kind to sweep.
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Range LO:HI to request; defaults to the store's hull for the kind.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<RangeOverride>,
    /// IDs per lookup request.
    #[arg(long, default_value_t = idgap_core::sweep::DEFAULT_BATCH)]
    pub batch: usize,
    /// Probability that a visible record is withheld on a given pass.
    #[arg(long, default_value_t = 0.0)]
    pub drop_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub fault_seed: u64,
    /// Request the still-missing IDs again on later passes.
    #[arg(long, default_value_t = 1)]
    pub passes: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_values() {
        let cli = Cli::try_parse_from(["idgap", "census", "--comments", "a.ndjson", "b.ndjson", "--window", "6", "--seed", "9"]).unwrap();
        let Command::Census(a) = cli.command else { panic!("wrong subcommand") };
        let mut cfg = AuditConfig { window: 2, sample_seed: 1, ..Default::default() };
        a.apply(&mut cfg);
        assert_eq!(cfg.comments, vec![PathBuf::from("a.ndjson"), PathBuf::from("b.ndjson")]);
        assert_eq!((cfg.window, cfg.sample_seed), (6, 9));
        assert_eq!(cfg.sample_size, 7400);
    }

    #[test]
    fn range_applies_to_the_chosen_kind() {
        let cli = Cli::try_parse_from(["idgap", "census", "--kind", "submission", "--range", "t3_a:t3_z"]).unwrap();
        let Command::Census(a) = cli.command else { panic!("wrong subcommand") };
        let mut cfg = AuditConfig::default();
        a.apply(&mut cfg);
        assert_eq!(cfg.kind, Some(RecordKind::Submission));
        assert_eq!(cfg.submission_range, Some(RangeOverride { lo: 10, hi: 35 }));
        assert!(Cli::try_parse_from(["idgap", "census", "--range", "1:2"]).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
