//! Severity tags naming the research methods a gap pattern threatens.
//!
//! Tags are labels only. A user tag reflects how likely that user's
//! history is incomplete; a community tag reflects whether reply trees are
//! broken (network methods) and whether totals are depressed (counting
//! methods).

use std::fmt;

use serde::Serialize;

use crate::community::CommunityGapStats;
use crate::risk::UserRiskProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    UserHistory,
    Network,
    SumAnalysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Moderate,
    High,
    Highest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RiskTag {
    pub method: Method,
    pub severity: Severity,
}

impl fmt::Display for RiskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.method {
            Method::UserHistory => "user-history",
            Method::Network => "network",
            Method::SumAnalysis => "sum-analysis",
        };
        let s = match self.severity {
            Severity::Low => "low",
            Severity::Moderate => "moderate",
            Severity::High => "high",
            Severity::Highest => "highest",
        };
        write!(f, "{m}:{s}")
    }
}

/// Semicolon-joined tag list for CSV cells.
pub fn join_tags(tags: &[RiskTag]) -> String {
    tags.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

/// At most one tag: the larger of the user's two compound risks against
/// `threshold` (highest), a tenth of it (high), or any risk at all (low).
pub fn user_tags(p: &UserRiskProfile, threshold: f64) -> Vec<RiskTag> {
    let risk = p.compound_risk_c.max(p.compound_risk_s);
    let severity = if risk >= threshold {
        Severity::Highest
    } else if risk >= threshold / 10.0 {
        Severity::High
    } else if risk > 0.0 {
        Severity::Low
    } else {
        return Vec::new();
    };
    vec![RiskTag { method: Method::UserHistory, severity }]
}

/// Network tag when any reference dangles; counting tag when either
/// missing share reaches `pct`.
pub fn community_tags(s: &CommunityGapStats, pct: f64) -> Vec<RiskTag> {
    let mut tags = Vec::new();
    if s.dangling_comments + s.dangling_submissions > 0 {
        tags.push(RiskTag { method: Method::Network, severity: Severity::High });
    }
    if s.pct_missing_comments.max(s.pct_missing_submissions) >= pct {
        tags.push(RiskTag { method: Method::SumAnalysis, severity: Severity::Moderate });
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::MissingRates;

    #[test]
    fn user_severity_ladder() {
        let rates = MissingRates { r_c: 0.01, r_s: 0.0 };
        let tag = |n| user_tags(&UserRiskProfile::new("u", n, 0, rates), 0.5);
        assert!(tag(0).is_empty());
        assert_eq!(join_tags(&tag(1)), "user-history:low");
        assert_eq!(join_tags(&tag(10)), "user-history:high");
        assert_eq!(join_tags(&tag(100)), "user-history:highest");
    }

    #[test]
    fn community_tags_follow_danglings_and_share() {
        let mut s = CommunityGapStats {
            subreddit: "x".into(),
            observed_comments: 80,
            observed_submissions: 10,
            dangling_submissions: 0,
            dangling_comments: 20,
            created_month: 0,
            pct_missing_comments: 0.2,
            pct_missing_submissions: 0.0,
        };
        assert_eq!(join_tags(&community_tags(&s, 0.2)), "network:high;sum-analysis:moderate");
        s.dangling_comments = 0;
        s.pct_missing_comments = 0.0;
        assert!(community_tags(&s, 0.2).is_empty());
    }
}
