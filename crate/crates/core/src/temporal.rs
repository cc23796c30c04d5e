//! Dating missing IDs and summarising them per calendar month.
//!
//! A missing ID gets a timestamp by linear interpolation, in ID position,
//! between its nearest observed neighbours. Excluded ranges are collapsed
//! out of the position axis so a counter jump does not stretch time.
//! Months are UTC.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::intervals::{IdIntervalSet, Interval};

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("gap run [{lo}, {hi}] has no observed neighbour on both sides")]
    NoNeighbors { lo: u64, hi: u64 },
    #[error("burstiness needs at least two events, got {0}")]
    Undefined(usize),
    #[error("rolling window must be at least 1")]
    ZeroWindow,
    #[error("timestamp {0} is out of range")]
    BadTimestamp(i64),
}

/// Calendar month, stored as `year * 12 + (month - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth(i64);

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month));
        YearMonth(year as i64 * 12 + month as i64 - 1)
    }

    pub fn from_unix(t: i64) -> Result<Self, TemporalError> {
        let dt = DateTime::from_timestamp(t, 0).ok_or(TemporalError::BadTimestamp(t))?;
        Ok(YearMonth::new(dt.year(), dt.month()))
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12) as i32
    }

    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn next(self) -> Self {
        YearMonth(self.0 + 1)
    }

    /// Months since 1970-01.
    pub fn epoch_index(self) -> i64 {
        self.0 - 1970 * 12
    }

    /// Unix seconds at 00:00:00 UTC on the first of the month.
    pub fn start_unix(self) -> i64 {
        NaiveDate::from_ymd_opt(self.year(), self.month(), 1)
            .expect("valid month")
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Which positions count as events in the burstiness score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BurstOperand {
    #[default]
    RunStart,
    RunCenter,
    PerId,
}

impl std::str::FromStr for BurstOperand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "run-start" => Ok(BurstOperand::RunStart),
            "run-center" => Ok(BurstOperand::RunCenter),
            "per-id" => Ok(BurstOperand::PerId),
            other => Err(format!("unknown burst operand {other:?}")),
        }
    }
}

/// Observed `(id, created_utc)` pairs, sorted by id, with timestamps made
/// non-decreasing by a running maximum.
#[derive(Debug, Clone, Default)]
pub struct ObservedTimeline {
    points: Vec<(u64, i64)>,
    clamped: u64,
}

impl ObservedTimeline {
    pub fn new(mut points: Vec<(u64, i64)>) -> Self {
        points.sort_unstable();
        points.dedup_by_key(|p| p.0);
        let mut clamped = 0;
        let mut running = i64::MIN;
        for p in &mut points {
            if p.1 < running {
                p.1 = running;
                clamped += 1;
            } else {
                running = p.1;
            }
        }
        Self { points, clamped }
    }

    /// Observed timestamps that ran backwards and were clamped.
    pub fn clamped(&self) -> u64 {
        self.clamped
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn neighbours(&self, run: Interval) -> Option<((u64, i64), (u64, i64))> {
        let right = self.points.partition_point(|p| p.0 <= run.hi);
        let left = self.points.partition_point(|p| p.0 < run.lo);
        if left == 0 || right >= self.points.len() {
            return None;
        }
        Some((self.points[left - 1], self.points[right]))
    }
}

/// One gap run with its interpolation anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttributedRun {
    pub lo: u64,
    pub hi: u64,
    left_pos: u64,
    left_t: i64,
    right_pos: u64,
    right_t: i64,
    #[serde(skip)]
    lo_pos: u64,
}

impl AttributedRun {
    pub fn missing_count(&self) -> u64 {
        self.hi - self.lo + 1
    }

    /// Estimated timestamp of an ID inside the run.
    pub fn timestamp(&self, id: u64) -> i64 {
        debug_assert!(self.lo <= id && id <= self.hi);
        // Inside a run positions advance one per ID.
        let pos = self.lo_pos + (id - self.lo);
        let span = (self.right_pos - self.left_pos) as i128;
        let dt = (self.right_t - self.left_t) as i128;
        let off = (pos - self.left_pos) as i128;
        self.left_t + (dt * off).div_euclid(span) as i64
    }

    pub fn start_time(&self) -> i64 {
        self.timestamp(self.lo)
    }

    /// Missing-ID counts per month for this run.
    pub fn split_by_month(&self) -> Result<Vec<(YearMonth, u64)>, TemporalError> {
        let mut out = Vec::new();
        let mut x = self.lo;
        loop {
            let month = YearMonth::from_unix(self.timestamp(x))?;
            let boundary = month.next().start_unix();
            // Largest y in [x, hi] with t(y) < boundary.
            let (mut lo, mut hi) = (x, self.hi);
            while lo < hi {
                let mid = lo + (hi - lo).div_ceil(2);
                if self.timestamp(mid) < boundary {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            out.push((month, lo - x + 1));
            if lo == self.hi {
                return Ok(out);
            }
            x = lo + 1;
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Attribution {
    pub runs: Vec<AttributedRun>,
    /// Observed timestamps clamped to keep the timeline monotone.
    pub clamped_timestamps: u64,
}

impl Attribution {
    pub fn total_missing(&self) -> u64 {
        self.runs.iter().map(AttributedRun::missing_count).sum()
    }
}

/// Date every gap run from its observed neighbours.
///
/// `excluded` holds legitimate holes; they are removed from the position
/// axis before interpolating.
pub fn attribute_timestamps(
    gaps: &[Interval],
    timeline: &ObservedTimeline,
    excluded: &IdIntervalSet,
) -> Result<Attribution, TemporalError> {
    let pos = |id: u64| id - excluded.rank(id);
    let mut runs = Vec::with_capacity(gaps.len());
    for &run in gaps {
        let ((l_id, l_t), (r_id, r_t)) = timeline.neighbours(run).ok_or(TemporalError::NoNeighbors { lo: run.lo, hi: run.hi })?;
        runs.push(AttributedRun {
            lo: run.lo,
            hi: run.hi,
            left_pos: pos(l_id),
            left_t: l_t,
            right_pos: pos(r_id),
            right_t: r_t,
            lo_pos: pos(run.lo),
        });
    }
    Ok(Attribution { runs, clamped_timestamps: timeline.clamped() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurstinessResult {
    pub month: Option<YearMonth>,
    pub n_runs: usize,
    pub mean_gap: f64,
    pub sd_gap: f64,
    pub b: f64,
}

/// `B = (σ - μ) / (σ + μ)` over the given inter-event distances, with the
/// population standard deviation.
pub fn burstiness_from_intervals(taus: &[f64]) -> Result<BurstinessResult, TemporalError> {
    if taus.is_empty() {
        return Err(TemporalError::Undefined(1));
    }
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let var = taus.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd + mean == 0.0 {
        return Err(TemporalError::Undefined(taus.len() + 1));
    }
    Ok(BurstinessResult { month: None, n_runs: taus.len() + 1, mean_gap: mean, sd_gap: sd, b: (sd - mean) / (sd + mean) })
}

/// Burstiness of a set of gap runs laid out in ID space.
pub fn burstiness(runs: &[Interval], operand: BurstOperand) -> Result<BurstinessResult, TemporalError> {
    let mut events: Vec<f64> = match operand {
        BurstOperand::RunStart => runs.iter().map(|r| r.lo as f64).collect(),
        BurstOperand::RunCenter => runs.iter().map(|r| (r.lo as f64 + r.hi as f64) / 2.0).collect(),
        BurstOperand::PerId => runs.iter().flat_map(|r| r.lo..=r.hi).map(|v| v as f64).collect(),
    };
    if events.len() < 2 {
        return Err(TemporalError::Undefined(events.len()));
    }
    events.sort_by(f64::total_cmp);
    let taus: Vec<f64> = events.windows(2).map(|w| w[1] - w[0]).collect();
    let mut r = burstiness_from_intervals(&taus)?;
    r.n_runs = runs.len();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyGapStats {
    pub month: YearMonth,
    pub observed: u64,
    pub missing: u64,
    pub pct_missing: f64,
    pub rolling_pct: f64,
    pub cumulative_missing: u64,
    /// `None` when fewer than two runs start in the month.
    pub burstiness_b: Option<f64>,
    pub n_runs: usize,
}

/// Per-month observed/missing tallies, trailing `window`-month mean of the
/// missing share, running totals, and per-month burstiness.
///
/// Months between the first and last active month are filled in, so the
/// rolling window is calendar-based.
pub fn monthly_stats<I>(
    attribution: &Attribution,
    observed_times: I,
    window: usize,
    operand: BurstOperand,
) -> Result<Vec<MonthlyGapStats>, TemporalError>
where
    I: IntoIterator<Item = i64>,
{
    if window == 0 {
        return Err(TemporalError::ZeroWindow);
    }
    let mut observed: BTreeMap<YearMonth, u64> = BTreeMap::new();
    for t in observed_times {
        *observed.entry(YearMonth::from_unix(t)?).or_default() += 1;
    }
    let mut missing: BTreeMap<YearMonth, u64> = BTreeMap::new();
    let mut runs_by_month: BTreeMap<YearMonth, Vec<Interval>> = BTreeMap::new();
    for run in &attribution.runs {
        for (m, n) in run.split_by_month()? {
            *missing.entry(m).or_default() += n;
        }
        let start = YearMonth::from_unix(run.start_time())?;
        runs_by_month.entry(start).or_default().push(Interval { lo: run.lo, hi: run.hi });
    }

    let first = observed.keys().chain(missing.keys()).min().copied();
    let last = observed.keys().chain(missing.keys()).max().copied();
    let (Some(first), Some(last)) = (first, last) else {
        return Ok(Vec::new());
    };

    let mut rows: Vec<MonthlyGapStats> = Vec::new();
    let mut cumulative = 0u64;
    let mut m = first;
    while m <= last {
        let obs = observed.get(&m).copied().unwrap_or(0);
        let miss = missing.get(&m).copied().unwrap_or(0);
        cumulative += miss;
        let pct = if obs + miss == 0 { 0.0 } else { miss as f64 / (obs + miss) as f64 };
        let month_runs = runs_by_month.get(&m).map(Vec::as_slice).unwrap_or(&[]);
        let burst = burstiness(month_runs, operand).ok().map(|r| r.b);
        rows.push(MonthlyGapStats {
            month: m,
            observed: obs,
            missing: miss,
            pct_missing: pct,
            rolling_pct: 0.0,
            cumulative_missing: cumulative,
            burstiness_b: burst,
            n_runs: month_runs.len(),
        });
        m = m.next();
    }
    for i in 0..rows.len() {
        let from = (i + 1).saturating_sub(window);
        let span = &rows[from..=i];
        rows[i].rolling_pct = span.iter().map(|r| r.pct_missing).sum::<f64>() / span.len() as f64;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn attr(gaps: &[(u64, u64)], points: Vec<(u64, i64)>) -> Attribution {
        let gaps: Vec<Interval> = gaps.iter().map(|&(a, b)| Interval::new(a, b)).collect();
        attribute_timestamps(&gaps, &ObservedTimeline::new(points), &IdIntervalSet::new()).unwrap()
    }

    #[test]
    fn midpoint_and_adjacent_interpolation() {
        let a = attr(&[(11, 19)], vec![(10, 0), (20, 100)]);
        assert_eq!(a.runs[0].timestamp(15), 50);
        assert_eq!(a.runs[0].timestamp(11), 10);
    }

    #[test]
    fn gap_outside_hull_has_no_neighbours() {
        let gaps = [Interval::new(1, 4)];
        let tl = ObservedTimeline::new(vec![(5, 10), (9, 20)]);
        assert!(matches!(attribute_timestamps(&gaps, &tl, &IdIntervalSet::new()), Err(TemporalError::NoNeighbors { lo: 1, hi: 4 })));
    }

    #[test]
    fn excluded_ranges_collapse_out_of_position_axis() {
        // 10 observed at t=0; IDs 11..=1000 excluded; 1001 missing; 1002 observed at t=100.
        let tl = ObservedTimeline::new(vec![(10, 0), (1002, 100)]);
        let excl = IdIntervalSet::from_range(11, 1000);
        let a = attribute_timestamps(&[Interval::point(1001)], &tl, &excl).unwrap();
        assert_eq!(a.runs[0].timestamp(1001), 50);
    }

    #[test]
    fn non_monotone_observed_times_are_clamped() {
        let tl = ObservedTimeline::new(vec![(1, 100), (3, 50), (5, 200)]);
        assert_eq!(tl.clamped(), 1);
        let a = attribute_timestamps(&[Interval::point(2), Interval::point(4)], &tl, &IdIntervalSet::new()).unwrap();
        assert!(a.runs[0].timestamp(2) <= a.runs[1].timestamp(4));
        assert_eq!(a.clamped_timestamps, 1);
    }

    #[test]
    fn run_split_across_month_boundary() {
        let jan = YearMonth::new(2010, 1).start_unix();
        let feb = YearMonth::new(2010, 2).start_unix();
        // One ID per second straddling the boundary.
        let a = attr(&[(1, 9)], vec![(0, feb - 5), (10, feb + 5)]);
        let split = a.runs[0].split_by_month().unwrap();
        assert_eq!(split, vec![(YearMonth::new(2010, 1), 4), (YearMonth::new(2010, 2), 5)]);
        assert!(jan < feb);
    }

    #[test]
    fn burstiness_examples() {
        let periodic: Vec<Interval> = (0..10).map(|i| Interval::point(i * 7)).collect();
        assert_eq!(burstiness(&periodic, BurstOperand::RunStart).unwrap().b, -1.0);
        let r = burstiness_from_intervals(&[1.0, 1.0, 1.0, 9.0]).unwrap();
        assert!((r.mean_gap - 3.0).abs() < 1e-12);
        assert!((r.sd_gap - 12f64.sqrt()).abs() < 1e-12);
        assert!((r.b - 0.0717967697244908).abs() < 1e-12);
        assert_eq!(burstiness(&[Interval::point(3)], BurstOperand::RunStart), Err(TemporalError::Undefined(1)));
        let per_id = burstiness(&[Interval::new(0, 3), Interval::new(10, 10)], BurstOperand::PerId).unwrap();
        assert_eq!(per_id.n_runs, 2);
        let centre = burstiness(&[Interval::new(0, 2), Interval::new(10, 12), Interval::new(20, 22)], BurstOperand::RunCenter).unwrap();
        assert_eq!(centre.b, -1.0);
    }

    #[test]
    fn monthly_rows() {
        let feb = YearMonth::new(2012, 2).start_unix();
        let day = 86_400;
        // Observed IDs 0..=100 one day apart, except 40 and 41 missing.
        let points: Vec<(u64, i64)> = (0..=100u64).filter(|i| *i != 40 && *i != 41).map(|i| (i, feb + i as i64 * day)).collect();
        let times: Vec<i64> = points.iter().map(|p| p.1).collect();
        let a = attr(&[(40, 41)], points);
        let rows = monthly_stats(&a, times.iter().copied(), 1, BurstOperand::RunStart).unwrap();
        assert_eq!(rows.iter().map(|r| r.missing).sum::<u64>(), 2);
        assert_eq!(rows.last().unwrap().cumulative_missing, 2);
        for r in &rows {
            assert_eq!(r.rolling_pct, r.pct_missing);
            assert_eq!(r.burstiness_b, None);
        }
        assert!(rows.windows(2).all(|w| w[0].month.next() == w[1].month));
        assert_eq!(monthly_stats(&a, times, 0, BurstOperand::RunStart), Err(TemporalError::ZeroWindow));
    }

    #[test]
    fn zero_gap_corpus_has_zero_pct() {
        let rows = monthly_stats(&Attribution::default(), [1_300_000_000, 1_310_000_000], 3, BurstOperand::RunStart).unwrap();
        assert!(rows.iter().all(|r| r.pct_missing == 0.0 && r.rolling_pct == 0.0));
    }

    #[test]
    fn year_month() {
        let m = YearMonth::from_unix(1_136_073_600).unwrap();
        assert_eq!(m.to_string(), "2006-01");
        assert_eq!(m.start_unix(), 1_136_073_600);
        assert_eq!(YearMonth::new(2007, 12).next().to_string(), "2008-01");
        assert_eq!(YearMonth::new(1970, 1).epoch_index(), 0);
    }

    proptest! {
        #[test]
        fn burstiness_is_scale_free_and_bounded(taus in proptest::collection::vec(0.1f64..1e6, 1..50), scale in 0.001f64..1000.0) {
            let a = burstiness_from_intervals(&taus).unwrap();
            let scaled: Vec<f64> = taus.iter().map(|t| t * scale).collect();
            let b = burstiness_from_intervals(&scaled).unwrap();
            prop_assert!((a.b - b.b).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&a.b));
        }

        #[test]
        fn attribution_is_monotone(times in proptest::collection::vec(0i64..1_000_000, 3..40)) {
            // Observed at even IDs, missing at odd ones.
            let points: Vec<(u64, i64)> = times.iter().enumerate().map(|(i, t)| (2 * i as u64, 1_200_000_000 + t)).collect();
            let gaps: Vec<Interval> = (0..times.len() as u64 - 1).map(|i| Interval::point(2 * i + 1)).collect();
            let a = attribute_timestamps(&gaps, &ObservedTimeline::new(points), &IdIntervalSet::new()).unwrap();
            let stamps: Vec<i64> = a.runs.iter().map(|r| r.start_time()).collect();
            prop_assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
