//! Per-subreddit gap tallies and the size/age regression.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::{CommentRecord, SubmissionRecord};
use crate::references::DanglingReport;
use crate::temporal::YearMonth;

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("{n} observations is too few for {params} parameters")]
    TooFewObservations { n: usize, params: usize },
    #[error("response has zero variance")]
    ConstantResponse,
    #[error("column {name:?} has {got} rows, expected {expected}")]
    LengthMismatch { name: String, got: usize, expected: usize },
}

/// Transform applied to count variables before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Log10p1,
    Raw,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Log10p1 => x.ln_1p() / std::f64::consts::LN_10,
            Transform::Raw => x,
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log10p1" => Ok(Transform::Log10p1),
            "raw" => Ok(Transform::Raw),
            other => Err(format!("unknown transform {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityGapStats {
    pub subreddit: String,
    pub observed_comments: u64,
    pub observed_submissions: u64,
    pub dangling_submissions: u64,
    pub dangling_comments: u64,
    /// Months since 1970-01 of the earliest observed record.
    pub created_month: i64,
    pub pct_missing_comments: f64,
    pub pct_missing_submissions: f64,
}

impl CommunityGapStats {
    pub fn total_content(&self) -> u64 {
        self.observed_comments + self.observed_submissions
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CommunityTally {
    pub observed_comments: u64,
    pub observed_submissions: u64,
    pub earliest_utc: Option<i64>,
}

/// Mergeable per-subreddit record counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommunityAccumulator {
    pub tallies: BTreeMap<String, CommunityTally>,
}

impl CommunityAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(&mut self, subreddit: &str) -> &mut CommunityTally {
        if !self.tallies.contains_key(subreddit) {
            self.tallies.insert(subreddit.to_string(), CommunityTally::default());
        }
        self.tallies.get_mut(subreddit).expect("inserted above")
    }

    fn note_time(t: &mut CommunityTally, created_utc: i64) {
        t.earliest_utc = Some(t.earliest_utc.map_or(created_utc, |e| e.min(created_utc)));
    }

    pub fn add_comment(&mut self, subreddit: &str, created_utc: i64) {
        let t = self.entry(subreddit);
        t.observed_comments += 1;
        Self::note_time(t, created_utc);
    }

    pub fn add_submission(&mut self, subreddit: &str, created_utc: i64) {
        let t = self.entry(subreddit);
        t.observed_submissions += 1;
        Self::note_time(t, created_utc);
    }

    pub fn merge(mut self, other: CommunityAccumulator) -> CommunityAccumulator {
        for (name, t) in other.tallies {
            let mine = self.tallies.entry(name).or_default();
            mine.observed_comments += t.observed_comments;
            mine.observed_submissions += t.observed_submissions;
            if let Some(e) = t.earliest_utc {
                Self::note_time(mine, e);
            }
        }
        self
    }

    /// Join with the dangling report. One row per subreddit seen anywhere.
    pub fn finish(&self, dangling: &DanglingReport) -> Vec<CommunityGapStats> {
        let mut names: Vec<&String> = self.tallies.keys().chain(dangling.per_subreddit.keys()).collect();
        names.sort();
        names.dedup();
        names
            .into_iter()
            .map(|name| {
                let t = self.tallies.get(name).cloned().unwrap_or_default();
                let d = dangling.per_subreddit.get(name).cloned().unwrap_or_default();
                let pct = |miss: u64, obs: u64| if miss + obs == 0 { 0.0 } else { miss as f64 / (miss + obs) as f64 };
                let created_month = t.earliest_utc.and_then(|e| YearMonth::from_unix(e).ok()).map_or(0, YearMonth::epoch_index);
                CommunityGapStats {
                    subreddit: name.clone(),
                    observed_comments: t.observed_comments,
                    observed_submissions: t.observed_submissions,
                    dangling_submissions: d.dangling_submissions,
                    dangling_comments: d.dangling_comments,
                    created_month,
                    pct_missing_comments: pct(d.dangling_comments, t.observed_comments),
                    pct_missing_submissions: pct(d.dangling_submissions, t.observed_submissions),
                }
            })
            .collect()
    }
}

pub fn aggregate_communities<'a, C, S>(comments: C, submissions: S, dangling: &DanglingReport) -> Vec<CommunityGapStats>
where
    C: IntoIterator<Item = &'a CommentRecord>,
    S: IntoIterator<Item = &'a SubmissionRecord>,
{
    let mut acc = CommunityAccumulator::new();
    for c in comments {
        acc.add_comment(&c.subreddit, c.created_utc);
    }
    for s in submissions {
        acc.add_submission(&s.subreddit, s.created_utc);
    }
    acc.finish(dangling)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    /// Predictors in the order given, then the intercept.
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub n_observations: usize,
    pub df_residual: usize,
    pub residual_std_error: f64,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn fitted(&self, predictors: &[&[f64]], row: usize) -> f64 {
        let k = predictors.len();
        let mut v = self.coefficients[k].estimate;
        for (j, col) in predictors.iter().enumerate() {
            v += self.coefficients[j].estimate * col[row];
        }
        v
    }
}

/// Significance marks: p < 0.01, 0.05, 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[allow(clippy::needless_range_loop)]
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, RegressionError> {
    let p = a.len();
    let mut l = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if a[j][j] <= 0.0 || d <= 1e-10 * a[j][j] {
            return Err(RegressionError::RankDeficient);
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in (j + 1)..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b`.
fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = l.len();
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Ordinary least squares with an intercept, via the normal equations.
///
/// Standard errors assume homoskedastic errors; p-values use Student's t
/// with `n - k - 1` degrees of freedom.
#[allow(clippy::needless_range_loop)]
pub fn ols_fit(y: &[f64], predictors: &[(&str, &[f64])]) -> Result<RegressionFit, RegressionError> {
    let n = y.len();
    let k = predictors.len();
    let params = k + 1;
    for (name, col) in predictors {
        if col.len() != n {
            return Err(RegressionError::LengthMismatch { name: name.to_string(), got: col.len(), expected: n });
        }
    }
    if n <= params {
        return Err(RegressionError::TooFewObservations { n, params });
    }
    // Column j < k is predictor j; column k is the intercept.
    let x = |row: usize, j: usize| if j == k { 1.0 } else { predictors[j].1[row] };

    let mut xtx = vec![vec![0.0; params]; params];
    let mut xty = vec![0.0; params];
    for row in 0..n {
        for i in 0..params {
            let xi = x(row, i);
            xty[i] += xi * y[row];
            for j in 0..=i {
                xtx[i][j] += xi * x(row, j);
            }
        }
    }
    for i in 0..params {
        for j in 0..i {
            xtx[j][i] = xtx[i][j];
        }
    }
    let l = cholesky(&xtx)?;
    let beta = cholesky_solve(&l, &xty);

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut rss = 0.0;
    let mut tss = 0.0;
    for row in 0..n {
        let fit: f64 = (0..params).map(|j| beta[j] * x(row, j)).sum();
        rss += (y[row] - fit).powi(2);
        tss += (y[row] - mean_y).powi(2);
    }
    if tss == 0.0 {
        return Err(RegressionError::ConstantResponse);
    }
    let df = n - params;
    let sigma2 = rss / df as f64;
    let r_squared = 1.0 - rss / tss;
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / df as f64;

    let t_dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let mut coefficients = Vec::with_capacity(params);
    for j in 0..params {
        let mut e = vec![0.0; params];
        e[j] = 1.0;
        let inv_jj = cholesky_solve(&l, &e)[j];
        let se = (sigma2 * inv_jj).sqrt();
        let est = beta[j];
        let (t_value, p_value) = if se > 0.0 {
            let t = est / se;
            (t, 2.0 * (1.0 - t_dist.cdf(t.abs())))
        } else if est == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(est), 0.0)
        };
        let name = if j == k { "Constant".to_string() } else { predictors[j].0.to_string() };
        coefficients.push(Coefficient { name, estimate: est, std_error: se, t_value, p_value, stars: stars(p_value) });
    }
    Ok(RegressionFit { coefficients, r_squared, adjusted_r_squared, n_observations: n, df_residual: df, residual_std_error: sigma2.sqrt() })
}

pub const TOTAL_CONTENT: &str = "Total Content";
pub const MONTH_CREATED: &str = "Month Subreddit Created";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(RegressionFit),
    Failed { error: String, n_observations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityRegressions {
    pub transform: Transform,
    pub submissions: FitOutcome,
    pub comments: FitOutcome,
}

/// Fit missing count ~ total content + creation month, per kind, over the
/// communities with at least one dangling reference of that kind.
pub fn community_regressions(stats: &[CommunityGapStats], transform: Transform) -> CommunityRegressions {
    let fit = |missing: fn(&CommunityGapStats) -> u64| {
        let rows: Vec<&CommunityGapStats> = stats.iter().filter(|s| missing(s) > 0).collect();
        let y: Vec<f64> = rows.iter().map(|s| transform.apply(missing(s) as f64)).collect();
        let size: Vec<f64> = rows.iter().map(|s| transform.apply(s.total_content() as f64)).collect();
        let month: Vec<f64> = rows.iter().map(|s| s.created_month as f64).collect();
        match ols_fit(&y, &[(TOTAL_CONTENT, &size), (MONTH_CREATED, &month)]) {
            Ok(f) => FitOutcome::Fit(f),
            Err(e) => FitOutcome::Failed { error: e.to_string(), n_observations: rows.len() },
        }
    };
    CommunityRegressions { transform, submissions: fit(|s| s.dangling_submissions), comments: fit(|s| s.dangling_comments) }
}

/// Two-column text table in the usual regression-table layout.
pub fn render_regression_table(r: &CommunityRegressions) -> String {
    let cols = [("Submissions", &r.submissions), ("Comments", &r.comments)];
    let mut out = String::new();
    let rule = "=".repeat(60);
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{:<26}{:>17}{:>17}", "Variable", cols[0].0, cols[1].0);
    let _ = writeln!(out, "{}", "-".repeat(60));
    for name in [TOTAL_CONTENT, MONTH_CREATED, "Constant"] {
        let cell = |f: &FitOutcome| match f {
            FitOutcome::Fit(fit) => fit
                .coefficient(name)
                .map(|c| (format!("{:.3}{}", c.estimate, c.stars), format!("({:.3})", c.std_error)))
                .unwrap_or_default(),
            FitOutcome::Failed { .. } => ("n/a".into(), String::new()),
        };
        let (a, b) = (cell(cols[0].1), cell(cols[1].1));
        let _ = writeln!(out, "{:<26}{:>17}{:>17}", name, a.0, b.0);
        let _ = writeln!(out, "{:<26}{:>17}{:>17}", "", a.1, b.1);
    }
    let _ = writeln!(out, "{}", "-".repeat(60));
    let stat = |f: &FitOutcome, pick: fn(&RegressionFit) -> String| match f {
        FitOutcome::Fit(fit) => pick(fit),
        FitOutcome::Failed { n_observations, .. } => format!("n/a (n={n_observations})"),
    };
    type StatRow = (&'static str, fn(&RegressionFit) -> String);
    let rows: [StatRow; 3] = [
        ("Observations", |f| f.n_observations.to_string()),
        ("R2", |f| format!("{:.3}", f.r_squared)),
        ("Adjusted R2", |f| format!("{:.3}", f.adjusted_r_squared)),
    ];
    for (label, pick) in rows {
        let _ = writeln!(out, "{:<26}{:>17}{:>17}", label, stat(cols[0].1, pick), stat(cols[1].1, pick));
    }
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "Note: *p<0.1; **p<0.05; ***p<0.01. Transform: {:?}.", r.transform);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub pct: f64,
    pub communities_over_pct_comments: u64,
    pub communities_over_pct_submissions: u64,
    pub communities_with_dangling: u64,
    /// Mean submission missing share among communities with any dangling reference.
    pub mean_submission_missing_share_with_dangling: f64,
    /// Mean comment missing share among the same communities.
    pub mean_comment_missing_share_with_dangling: f64,
}

/// Communities at or above `pct` missing, per kind.
pub fn threshold_report(stats: &[CommunityGapStats], pct: f64) -> ThresholdReport {
    let over_c = stats.iter().filter(|s| s.dangling_comments > 0 && s.pct_missing_comments >= pct).count();
    let over_s = stats.iter().filter(|s| s.dangling_submissions > 0 && s.pct_missing_submissions >= pct).count();
    let with: Vec<&CommunityGapStats> = stats.iter().filter(|s| s.dangling_comments + s.dangling_submissions > 0).collect();
    let mean = |f: fn(&CommunityGapStats) -> f64| {
        if with.is_empty() {
            0.0
        } else {
            with.iter().map(|s| f(s)).sum::<f64>() / with.len() as f64
        }
    };
    ThresholdReport {
        pct,
        communities_over_pct_comments: over_c as u64,
        communities_over_pct_submissions: over_s as u64,
        communities_with_dangling: with.len() as u64,
        mean_submission_missing_share_with_dangling: mean(|s| s.pct_missing_submissions),
        mean_comment_missing_share_with_dangling: mean(|s| s.pct_missing_comments),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::RecordId;
    use crate::references::SubredditDangling;

    fn row(name: &str, oc: u64, os: u64, dc: u64, ds: u64) -> CommunityGapStats {
        let pct = |m: u64, o: u64| if m + o == 0 { 0.0 } else { m as f64 / (m + o) as f64 };
        CommunityGapStats {
            subreddit: name.into(),
            observed_comments: oc,
            observed_submissions: os,
            dangling_submissions: ds,
            dangling_comments: dc,
            created_month: 0,
            pct_missing_comments: pct(dc, oc),
            pct_missing_submissions: pct(ds, os),
        }
    }

    #[test]
    fn single_community_without_danglings() {
        let c = CommentRecord {
            id: RecordId::comment(5),
            parent: RecordId::submission(1),
            link: RecordId::submission(1),
            author: "a".into(),
            subreddit: "s".into(),
            created_utc: 1_136_073_600,
            is_deleted: false,
        };
        let s = SubmissionRecord {
            id: RecordId::submission(1),
            author: "a".into(),
            subreddit: "s".into(),
            created_utc: 1_136_073_000,
            is_deleted: false,
        };
        let rows = aggregate_communities([&c], [&s], &DanglingReport::default());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].pct_missing_comments, 0.0);
        assert_eq!(rows[0].created_month, (2005 - 1970) * 12 + 11);
    }

    #[test]
    fn dangling_only_subreddit_gets_a_row() {
        let mut d = DanglingReport::default();
        d.per_subreddit.insert("ghost".into(), SubredditDangling { dangling_submissions: 2, ..Default::default() });
        let rows = CommunityAccumulator::new().finish(&d);
        assert_eq!(rows[0].subreddit, "ghost");
        assert_eq!(rows[0].pct_missing_submissions, 1.0);
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = ols_fit(&y, &[("x1", &x)]).unwrap();
        assert!((f.coefficients[0].estimate - 2.0).abs() < 1e-12);
        assert!((f.coefficients[1].estimate - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let zeros = vec![0.0; 10];
        assert_eq!(ols_fit(&y, &[("x1", &x), ("x2", &zeros)]), Err(RegressionError::RankDeficient));
    }

    #[test]
    fn too_few_rows_and_constant_response() {
        let x = [1.0, 2.0, 3.0];
        let z = [0.5, 0.1, 0.9];
        assert_eq!(ols_fit(&[1.0, 2.0, 4.0], &[("a", &x), ("b", &z)]), Err(RegressionError::TooFewObservations { n: 3, params: 3 }));
        assert_eq!(ols_fit(&[1.0; 3], &[("a", &x)]), Err(RegressionError::ConstantResponse));
    }

    #[test]
    fn residuals_orthogonal_and_r2_is_squared_correlation() {
        let x1: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64).collect();
        let x2: Vec<f64> = (0..40).map(|i| ((i * 11) % 7) as f64 * 0.5).collect();
        let y: Vec<f64> = (0..40).map(|i| 0.3 * x1[i] - 1.2 * x2[i] + ((i * 13) % 5) as f64).collect();
        let f = ols_fit(&y, &[("a", &x1), ("b", &x2)]).unwrap();
        let cols: [&[f64]; 2] = [&x1, &x2];
        let fitted: Vec<f64> = (0..40).map(|r| f.fitted(&cols, r)).collect();
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        for col in [&x1, &x2, &vec![1.0; 40]] {
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let scale: f64 = col.iter().map(|v| v.abs()).sum::<f64>() * resid.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(dot.abs() <= 1e-8 * scale.max(1.0));
        }
        let my = y.iter().sum::<f64>() / 40.0;
        let mf = fitted.iter().sum::<f64>() / 40.0;
        let cov: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - my) * (b - mf)).sum();
        let vy: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
        let vf: f64 = fitted.iter().map(|b| (b - mf).powi(2)).sum();
        assert!((f.r_squared - cov * cov / (vy * vf)).abs() < 1e-10);
        assert!(f.adjusted_r_squared <= f.r_squared);
    }

    #[test]
    fn permutation_and_replication_invariance() {
        let x1 = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let x2 = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0];
        let base = ols_fit(&y, &[("a", &x1), ("b", &x2)]).unwrap();
        let perm = [5, 3, 0, 1, 4, 2];
        let p = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let f = ols_fit(&p(&y), &[("a", &p(&x1)), ("b", &p(&x2))]).unwrap();
        let twice = |v: &[f64]| v.iter().chain(v).copied().collect::<Vec<f64>>();
        let g = ols_fit(&twice(&y), &[("a", &twice(&x1)), ("b", &twice(&x2))]).unwrap();
        for j in 0..3 {
            let b = base.coefficients[j].estimate;
            assert!((f.coefficients[j].estimate - b).abs() <= 1e-10 * b.abs().max(1.0));
            assert!((g.coefficients[j].estimate - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        assert!((f.r_squared - base.r_squared).abs() < 1e-12);
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.009), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.05), "*");
        assert_eq!(stars(0.1), "");
    }

    #[test]
    fn thresholds_are_inclusive() {
        let stats = [row("a", 80, 10, 20, 0), row("b", 100, 10, 0, 0), row("c", 10, 3, 0, 1)];
        let r = threshold_report(&stats, 0.2);
        assert_eq!(r.communities_over_pct_comments, 1);
        assert_eq!(r.communities_over_pct_submissions, 1);
        assert_eq!(r.communities_with_dangling, 2);
        assert!((r.mean_submission_missing_share_with_dangling - 0.125).abs() < 1e-12);
        let complete = [row("a", 1, 1, 0, 0)];
        let r = threshold_report(&complete, 0.2);
        assert_eq!((r.communities_over_pct_comments, r.communities_over_pct_submissions), (0, 0));
    }

    #[test]
    fn regression_table_renders_failures() {
        let stats = [row("a", 80, 10, 20, 0)];
        let r = community_regressions(&stats, Transform::Log10p1);
        assert!(matches!(r.comments, FitOutcome::Failed { n_observations: 1, .. }));
        let text = render_regression_table(&r);
        assert!(text.contains("Observations"));
        assert!(text.contains("n/a"));
    }
}
