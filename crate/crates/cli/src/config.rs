//! Audit configuration: file values first, command-line flags on top.

use std::path::{Path, PathBuf};

use idgap_core::codec::{decode_base36, parse_fullname, RecordKind};
use idgap_core::community::Transform;
use idgap_core::ingest::IngestMode;
use idgap_core::temporal::BurstOperand;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Inclusive census range override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeOverride {
    pub lo: u64,
    pub hi: u64,
}

/// Parse `LO:HI` where each bound is a decimal value, a fullname
/// (`t1_...`, `t3_...`) or a base-36 string prefixed with `b36:`.
pub fn parse_range(s: &str) -> Result<RangeOverride, String> {
    let mut bounds: Vec<String> = Vec::new();
    let mut parts = s.split(':');
    while let Some(p) = parts.next() {
        match (p, parts.clone().next()) {
            ("b36", Some(digits)) => {
                bounds.push(format!("b36:{digits}"));
                parts.next();
            }
            _ => bounds.push(p.to_string()),
        }
    }
    let [lo, hi] = bounds.as_slice() else {
        return Err(format!("expected LO:HI, got {s:?}"));
    };
    let bound = |b: &str| -> Result<u64, String> {
        if let Ok(v) = b.parse::<u64>() {
            return Ok(v);
        }
        if let Some(rest) = b.strip_prefix("b36:") {
            return decode_base36(rest).map_err(|e| e.to_string());
        }
        parse_fullname(b).map(|id| id.value).map_err(|e| e.to_string())
    };
    let r = RangeOverride { lo: bound(lo)?, hi: bound(hi)? };
    if r.lo > r.hi {
        return Err(format!("range lower bound {} exceeds upper bound {}", r.lo, r.hi));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub comments: Vec<PathBuf>,
    pub submissions: Vec<PathBuf>,
    /// Analyse only this kind.
    pub kind: Option<RecordKind>,
    /// Read this kind's records from standard input.
    pub stdin: Option<RecordKind>,
    pub ingest_mode: IngestMode,
    pub exclusions: Option<PathBuf>,
    pub comment_range: Option<RangeOverride>,
    pub submission_range: Option<RangeOverride>,
    /// Internal gaps at least this long are reported as candidate discontinuities.
    pub discontinuity_threshold: u64,
    /// Internal gaps at least this long become kind-scoped exclusions,
    /// whatever the reporting threshold.
    pub promote_discontinuities: Option<u64>,
    pub window: usize,
    pub burst_operand: BurstOperand,
    pub sample_size: usize,
    pub sample_seed: u64,
    pub risk_threshold: f64,
    pub community_threshold: f64,
    pub transform: Transform,
    /// Replace author names in user reports with keyed hashes. The key is
    /// read from `IDGAP_ANON_KEY`.
    pub anonymize: bool,
    /// Output directory; never echoed, so bundles do not depend on where they are written.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Thread count; never echoed into reports.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            comments: Vec::new(),
            submissions: Vec::new(),
            kind: None,
            stdin: None,
            ingest_mode: IngestMode::Lenient,
            exclusions: None,
            comment_range: None,
            submission_range: None,
            discontinuity_threshold: 100_000,
            promote_discontinuities: None,
            window: 3,
            burst_operand: BurstOperand::RunStart,
            sample_size: 7400,
            sample_seed: 0,
            risk_threshold: 0.5,
            community_threshold: 0.2,
            transform: Transform::Log10p1,
            anonymize: false,
            out: None,
            workers: None,
        }
    }
}

pub const ANON_KEY_ENV: &str = "IDGAP_ANON_KEY";

impl AuditConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed =
            if is_json { serde_json::from_str(&text).map_err(|e| e.to_string()) } else { toml::from_str(&text).map_err(|e| e.to_string()) };
        parsed.map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn inputs(&self, kind: RecordKind) -> &[PathBuf] {
        match kind {
            RecordKind::Comment => &self.comments,
            RecordKind::Submission => &self.submissions,
        }
    }

    pub fn range(&self, kind: RecordKind) -> Option<RangeOverride> {
        match kind {
            RecordKind::Comment => self.comment_range,
            RecordKind::Submission => self.submission_range,
        }
    }

    pub fn has_input(&self, kind: RecordKind) -> bool {
        !self.inputs(kind).is_empty() || self.stdin == Some(kind)
    }

    /// Checks that need no I/O.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if !(self.risk_threshold > 0.0 && self.risk_threshold <= 1.0) {
            return bad(format!("risk threshold {} outside (0, 1]", self.risk_threshold));
        }
        if !(self.community_threshold > 0.0 && self.community_threshold < 1.0) {
            return bad(format!("community threshold {} outside (0, 1)", self.community_threshold));
        }
        if self.sample_size == 0 {
            return bad("sample size must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if self.discontinuity_threshold == 0 {
            return bad("discontinuity threshold must be positive".into());
        }
        if self.promote_discontinuities == Some(0) {
            return bad("promotion length must be positive".into());
        }
        if self.anonymize && std::env::var_os(ANON_KEY_ENV).is_none() {
            return bad(format!("--anonymize needs the key in {ANON_KEY_ENV}"));
        }
        for r in [self.comment_range, self.submission_range].into_iter().flatten() {
            if r.lo > r.hi {
                return bad(format!("range lower bound {} exceeds upper bound {}", r.lo, r.hi));
            }
        }
        Ok(())
    }

    /// Canonical JSON echo embedded in every report.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        crate::digest_value(&self.echo())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse_in_three_notations() {
        assert_eq!(parse_range("2:100").unwrap(), RangeOverride { lo: 2, hi: 100 });
        assert_eq!(parse_range("t1_2:t1_2s").unwrap(), RangeOverride { lo: 2, hi: 100 });
        assert_eq!(parse_range("b36:a:b36:z").unwrap(), RangeOverride { lo: 10, hi: 35 });
        assert!(parse_range("9:1").is_err());
        assert!(parse_range("9").is_err());
    }

    #[test]
    fn workers_never_reach_the_echo() {
        let a = AuditConfig { workers: Some(1), ..Default::default() };
        let b = AuditConfig { workers: Some(8), ..Default::default() };
        assert_eq!(a.digest(), b.digest());
        assert!(a.echo().get("workers").is_none());
        let c = AuditConfig { out: Some("elsewhere".into()), ..Default::default() };
        assert_eq!(a.digest(), c.digest());
    }

    #[test]
    fn toml_config_with_unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "window = 6\nburst_operand = \"per-id\"\n").unwrap();
        let c = AuditConfig::load(&p).unwrap();
        assert_eq!((c.window, c.burst_operand), (6, BurstOperand::PerId));
        std::fs::write(&p, "windw = 6\n").unwrap();
        assert!(matches!(AuditConfig::load(&p), Err(CliError::Usage(_))));
    }
}
