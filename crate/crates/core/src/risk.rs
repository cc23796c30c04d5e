//! Per-user exposure to missing data.
//!
//! Two models of "at least one of a user's `n` items is missing" at a
//! corpus-wide per-item rate `r`:
//!
//! * additive: the union bound `min(1, n * r)`
//! * compound: `1 - (1 - r)^n`, exact when losses are independent
//!
//! Losses in real dumps are bursty, so both are approximations.

use std::collections::{BTreeMap, BTreeSet};

use hmac::{Hmac, KeyInit, Mac};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::ingest::DELETED;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RiskError {
    #[error("sample size {requested} exceeds the {available} distinct authors")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("population is empty")]
    EmptyPopulation,
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(String),
}

/// Corpus-wide per-item missing rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MissingRates {
    pub r_c: f64,
    pub r_s: f64,
}

impl MissingRates {
    pub fn from_counts(missing_c: u64, observed_c: u64, missing_s: u64, observed_s: u64) -> Self {
        let rate = |m: u64, o: u64| if m + o == 0 { 0.0 } else { m as f64 / (m + o) as f64 };
        Self { r_c: rate(missing_c, observed_c), r_s: rate(missing_s, observed_s) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskPair {
    pub additive: f64,
    pub compound: f64,
}

/// Risk of losing at least one of `n` items at per-item rate `r`.
/// `n` may be fractional for population-average queries.
pub fn user_risk(n: f64, r: f64) -> RiskPair {
    debug_assert!(n >= 0.0 && (0.0..=1.0).contains(&r));
    if n <= 0.0 || r <= 0.0 {
        return RiskPair { additive: 0.0, compound: 0.0 };
    }
    let additive = (n * r).min(1.0);
    // 1 - (1-r)^n, computed without cancellation for tiny r.
    let compound = if r >= 1.0 { 1.0 } else { -((n * (-r).ln_1p()).exp_m1()) };
    RiskPair { additive, compound }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserRiskProfile {
    pub author: String,
    pub n_comments: u64,
    pub n_submissions: u64,
    pub additive_risk_c: f64,
    pub compound_risk_c: f64,
    pub additive_risk_s: f64,
    pub compound_risk_s: f64,
}

impl UserRiskProfile {
    pub fn new(author: impl Into<String>, n_comments: u64, n_submissions: u64, rates: MissingRates) -> Self {
        let c = user_risk(n_comments as f64, rates.r_c);
        let s = user_risk(n_submissions as f64, rates.r_s);
        Self {
            author: author.into(),
            n_comments,
            n_submissions,
            additive_risk_c: c.additive,
            compound_risk_c: c.compound,
            additive_risk_s: s.additive,
            compound_risk_s: s.compound,
        }
    }
}

/// Uniform sample of `k` distinct authors without replacement.
///
/// The deletion sentinel is never sampled. The result is sorted and depends
/// only on the set of authors, `k` and `seed`.
pub fn sample_users<'a, I>(authors: I, k: usize, seed: u64) -> Result<Vec<String>, RiskError>
where
    I: IntoIterator<Item = &'a str>,
{
    let distinct: BTreeSet<&str> = authors.into_iter().filter(|a| *a != DELETED).collect();
    let pool: Vec<&str> = distinct.into_iter().collect();
    if k > pool.len() {
        return Err(RiskError::SampleTooLarge { requested: k, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = index::sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i].to_string()).collect();
    picked.sort();
    Ok(picked)
}

/// Power-of-two bucket: 0 -> "0", 1 -> "1", 2..=3 -> "2-3", 4..=7 -> "4-7", ...
pub fn log2_bucket(n: u64) -> (u64, u64) {
    if n == 0 {
        return (0, 0);
    }
    let lo = 1u64 << (63 - n.leading_zeros());
    (lo, lo.checked_mul(2).map_or(u64::MAX, |v| v - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBucket {
    pub lo: u64,
    pub hi: u64,
    pub users: u64,
}

fn histogram(counts: impl Iterator<Item = u64>) -> Vec<HistogramBucket> {
    let mut map: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for n in counts {
        *map.entry(log2_bucket(n)).or_default() += 1;
    }
    map.into_iter().map(|((lo, hi), users)| HistogramBucket { lo, hi, users }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindSummary {
    pub mean_count: f64,
    pub histogram: Vec<HistogramBucket>,
    /// Share of users whose compound risk is at least the threshold.
    pub frac_compound_at_least: f64,
    /// Same for the additive model.
    pub frac_additive_at_least: f64,
    pub mean_compound_risk: f64,
    pub mean_additive_risk: f64,
    /// Additive and compound risk of a user with the mean activity.
    pub mean_user_risk: RiskPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskPopulationSummary {
    pub sample_size: usize,
    pub threshold: f64,
    pub rates: MissingRates,
    pub comments: KindSummary,
    pub submissions: KindSummary,
}

pub fn population_summary(profiles: &[UserRiskProfile], rates: MissingRates, threshold: f64) -> Result<RiskPopulationSummary, RiskError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RiskError::BadThreshold(threshold.to_string()));
    }
    if profiles.is_empty() {
        return Err(RiskError::EmptyPopulation);
    }
    let n = profiles.len() as f64;
    let kind = |count: fn(&UserRiskProfile) -> u64, add: fn(&UserRiskProfile) -> f64, comp: fn(&UserRiskProfile) -> f64, r: f64| {
        let mean_count = profiles.iter().map(|p| count(p) as f64).sum::<f64>() / n;
        KindSummary {
            mean_count,
            histogram: histogram(profiles.iter().map(count)),
            frac_compound_at_least: profiles.iter().filter(|p| comp(p) >= threshold).count() as f64 / n,
            frac_additive_at_least: profiles.iter().filter(|p| add(p) >= threshold).count() as f64 / n,
            mean_compound_risk: profiles.iter().map(comp).sum::<f64>() / n,
            mean_additive_risk: profiles.iter().map(add).sum::<f64>() / n,
            mean_user_risk: user_risk(mean_count, r),
        }
    };
    Ok(RiskPopulationSummary {
        sample_size: profiles.len(),
        threshold,
        rates,
        comments: kind(|p| p.n_comments, |p| p.additive_risk_c, |p| p.compound_risk_c, rates.r_c),
        submissions: kind(|p| p.n_submissions, |p| p.additive_risk_s, |p| p.compound_risk_s, rates.r_s),
    })
}

/// Keyed pseudonym for an author name (HMAC-SHA256, first 16 bytes, hex).
pub fn anonymize(author: &str, key: &[u8]) -> String {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(author.as_bytes());
    hex::encode(&mac.finalize().into_bytes()[..16])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_item_at_half() {
        let r = user_risk(1.0, 0.5);
        assert_eq!((r.additive, r.compound), (0.5, 0.5));
    }

    #[test]
    fn average_commenter() {
        let r = user_risk(96.6, 0.00043);
        assert!((r.additive - 0.041538).abs() < 1e-9);
        assert!((r.additive - 0.0418).abs() < 0.003);
        // 1 - (1 - r)^n evaluated directly.
        let direct = 1.0 - (1.0f64 - 0.00043).powf(96.6);
        assert!((r.compound - direct).abs() < 1e-12);
        assert!((r.compound - 0.0407).abs() < 1e-4);
    }

    #[test]
    fn fractional_activity_below_one_exceeds_union_bound() {
        let p = user_risk(0.5, 0.2);
        assert!(p.compound > p.additive);
    }

    #[test]
    fn zero_cases() {
        assert_eq!(user_risk(0.0, 0.3), RiskPair { additive: 0.0, compound: 0.0 });
        assert_eq!(user_risk(12.0, 0.0), RiskPair { additive: 0.0, compound: 0.0 });
        assert_eq!(user_risk(3.0, 1.0), RiskPair { additive: 1.0, compound: 1.0 });
    }

    #[test]
    fn sampling() {
        let authors = ["b", "a", "c", "[deleted]", "a", "d"];
        assert_eq!(sample_users(authors, 4, 1).unwrap(), vec!["a", "b", "c", "d"]);
        assert_eq!(sample_users(authors, 2, 9).unwrap(), sample_users(authors, 2, 9).unwrap());
        assert_eq!(sample_users(authors, 5, 1), Err(RiskError::SampleTooLarge { requested: 5, available: 4 }));
    }

    #[test]
    fn sampling_is_uniform() {
        // Chi-square over 2000 seeds, 10 authors, k = 3.
        let authors: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
        let mut hits = BTreeMap::<String, u64>::new();
        let trials = 2000;
        for seed in 0..trials {
            for a in sample_users(authors.iter().map(String::as_str), 3, seed).unwrap() {
                *hits.entry(a).or_default() += 1;
            }
        }
        let expected = trials as f64 * 3.0 / 10.0;
        let chi2: f64 = hits.values().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 9 dof is 27.88.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn summary_boundaries() {
        let rates = MissingRates { r_c: 0.5, r_s: 0.1 };
        let idle = [UserRiskProfile::new("x", 0, 0, rates)];
        let s = population_summary(&idle, rates, 0.5).unwrap();
        assert_eq!(s.comments.frac_compound_at_least, 0.0);
        let at = [UserRiskProfile::new("y", 1, 0, rates)];
        let s = population_summary(&at, rates, 0.5).unwrap();
        assert_eq!(s.comments.frac_compound_at_least, 1.0);
        assert_eq!(population_summary(&[], rates, 0.5), Err(RiskError::EmptyPopulation));
        assert!(population_summary(&at, rates, 0.0).is_err());
    }

    #[test]
    fn summary_matches_enumeration() {
        let rates = MissingRates { r_c: 0.01, r_s: 0.05 };
        let profiles: Vec<UserRiskProfile> =
            (0..500u64).map(|i| UserRiskProfile::new(format!("u{i}"), (i * 7) % 150, i % 20, rates)).collect();
        let s = population_summary(&profiles, rates, 0.5).unwrap();
        let brute = profiles.iter().filter(|p| 1.0 - (1.0 - 0.01f64).powi(p.n_comments as i32) >= 0.5).count();
        assert_eq!(s.comments.frac_compound_at_least, brute as f64 / 500.0);
        let total: u64 = s.comments.histogram.iter().map(|b| b.users).sum();
        assert_eq!(total, 500);
    }

    #[test]
    fn buckets() {
        assert_eq!(log2_bucket(0), (0, 0));
        assert_eq!(log2_bucket(1), (1, 1));
        assert_eq!(log2_bucket(5), (4, 7));
        assert_eq!(log2_bucket(u64::MAX).1, u64::MAX);
    }

    #[test]
    fn anonymize_is_keyed() {
        assert_eq!(anonymize("alice", b"k"), anonymize("alice", b"k"));
        assert_ne!(anonymize("alice", b"k"), anonymize("alice", b"j"));
        assert_eq!(anonymize("alice", b"k").len(), 32);
    }

    proptest! {
        #[test]
        // Bernoulli's inequality only bounds (1-r)^n from below for n >= 1;
        // fractional n in (0, 1) is excluded.
        fn compound_never_exceeds_additive(n in prop_oneof![Just(0.0f64), 1.0f64..1e5], r in 0.0f64..=1.0) {
            let p = user_risk(n, r);
            prop_assert!(p.compound <= p.additive + 1e-15);
            prop_assert!(p.additive <= 1.0);
        }

        #[test]
        fn compound_is_monotone(n in 0.0f64..1e4, dn in 0.0f64..100.0, r in 0.0f64..1.0, dr in 0.0f64..0.1) {
            let base = user_risk(n, r).compound;
            prop_assert!(user_risk(n + dn, r).compound >= base - 1e-15);
            prop_assert!(user_risk(n, (r + dr).min(1.0)).compound >= base - 1e-15);
        }
    }
}
