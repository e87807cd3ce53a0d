//! Calendar-month aggregation, smoothing and project eligibility.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::Datelike;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::identity::{normalize_email, resolve_org, ContributorKey, IdentityConfig};
use crate::ingest::CommitRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeriesError {
    #[error("no usable commit records")]
    EmptySeries,
    #[error("smoothing window must be odd and positive, got {0}")]
    BadWindow(usize),
    #[error("invalid month {0:?}, expected YYYY-MM")]
    BadMonth(String),
}

/// A UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        MonthKey { year, month }
    }

    pub fn of(record: &CommitRecord) -> Self {
        MonthKey::new(record.authored_at.year(), record.authored_at.month())
    }

    pub fn succ(self) -> Self {
        self.plus(1)
    }

    /// The month `n` steps later (or earlier, for negative `n`).
    pub fn plus(self, n: i64) -> Self {
        let idx = self.index() + n;
        MonthKey {
            year: idx.div_euclid(12) as i32,
            month: idx.rem_euclid(12) as u32 + 1,
        }
    }

    /// Months elapsed from `self` to `later`.
    pub fn months_until(self, later: MonthKey) -> i64 {
        later.index() - self.index()
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeriesError::BadMonth(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) || m.len() != 2 {
            return Err(bad());
        }
        Ok(MonthKey { year, month })
    }
}

impl Serialize for MonthKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyPoint {
    pub month: MonthKey,
    pub active_contributors: u64,
    pub commits: u64,
    pub active_orgs: u64,
    pub org_commits: BTreeMap<String, u64>,
}

impl MonthlyPoint {
    fn empty(month: MonthKey) -> Self {
        MonthlyPoint {
            month,
            active_contributors: 0,
            commits: 0,
            active_orgs: 0,
            org_commits: BTreeMap::new(),
        }
    }
}

/// Gap-filled monthly activity from the first to the last active month.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub origin: MonthKey,
    pub points: Vec<MonthlyPoint>,
    /// Lifetime commit count per contributor.
    #[serde(default)]
    pub contributor_commits: BTreeMap<ContributorKey, u64>,
    /// Records dropped for lacking a usable email.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub excluded_records: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

impl MonthlySeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_commits(&self) -> u64 {
        self.points.iter().map(|p| p.commits).sum()
    }

    pub fn total_contributors(&self) -> usize {
        self.contributor_commits.len()
    }

    /// Distinct units that contributed at any point.
    pub fn total_orgs(&self) -> usize {
        self.points
            .iter()
            .flat_map(|p| p.org_commits.keys())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn values(&self, field: SeriesField) -> Vec<f64> {
        self.points.iter().map(|p| field.get(p) as f64).collect()
    }
}

/// Which per-month count to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesField {
    ActiveContributors,
    Commits,
    ActiveOrgs,
}

impl SeriesField {
    pub fn get(self, p: &MonthlyPoint) -> u64 {
        match self {
            SeriesField::ActiveContributors => p.active_contributors,
            SeriesField::Commits => p.commits,
            SeriesField::ActiveOrgs => p.active_orgs,
        }
    }
}

/// Buckets records by UTC month.
///
/// Records whose email does not normalize are dropped and counted in
/// `excluded_records`. Merge filtering happens upstream.
pub fn build_monthly_series(
    records: &[CommitRecord],
    config: &IdentityConfig,
) -> Result<MonthlySeries, SeriesError> {
    struct Bucket {
        contributors: BTreeSet<ContributorKey>,
        orgs: BTreeMap<String, u64>,
        commits: u64,
    }

    let mut buckets: BTreeMap<MonthKey, Bucket> = BTreeMap::new();
    let mut contributor_commits: BTreeMap<ContributorKey, u64> = BTreeMap::new();
    let mut excluded = 0;

    for record in records {
        let Ok(key) = normalize_email(&record.author_email) else {
            excluded += 1;
            continue;
        };
        let unit = resolve_org(&key, config);
        let bucket = buckets.entry(MonthKey::of(record)).or_insert_with(|| Bucket {
            contributors: BTreeSet::new(),
            orgs: BTreeMap::new(),
            commits: 0,
        });
        bucket.commits += 1;
        *bucket.orgs.entry(unit.key).or_insert(0) += 1;
        *contributor_commits.entry(key.clone()).or_insert(0) += 1;
        bucket.contributors.insert(key);
    }

    let (Some(&first), Some(&last)) = (buckets.keys().next(), buckets.keys().next_back()) else {
        return Err(SeriesError::EmptySeries);
    };

    let mut points = Vec::with_capacity(first.months_until(last) as usize + 1);
    let mut month = first;
    loop {
        let point = match buckets.remove(&month) {
            Some(b) => MonthlyPoint {
                month,
                active_contributors: b.contributors.len() as u64,
                commits: b.commits,
                active_orgs: b.orgs.len() as u64,
                org_commits: b.orgs,
            },
            None => MonthlyPoint::empty(month),
        };
        points.push(point);
        if month == last {
            break;
        }
        month = month.succ();
    }

    Ok(MonthlySeries {
        origin: first,
        points,
        contributor_commits,
        excluded_records: excluded,
    })
}

/// Centered moving average. Near the edges the window shrinks to the
/// neighbors that exist, so the first value averages points 1 and 2 when
/// the window is 3.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>, SeriesError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(SeriesError::BadWindow(window));
    }
    if values.is_empty() {
        return Err(SeriesError::EmptySeries);
    }
    let half = window / 2;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let slice = &values[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

pub fn smooth(series: &MonthlySeries, field: SeriesField, window: usize) -> Result<Vec<f64>, SeriesError> {
    moving_average(&series.values(field), window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityThresholds {
    pub min_contributors: u64,
    pub min_orgs: u64,
    pub min_mean_monthly_commits: f64,
}

impl Default for EligibilityThresholds {
    fn default() -> Self {
        EligibilityThresholds {
            min_contributors: 100,
            min_orgs: 20,
            min_mean_monthly_commits: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub contributors_ok: bool,
    pub orgs_ok: bool,
    pub commits_ok: bool,
    pub eligible: bool,
}

/// The three totals an eligibility check needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectTotals {
    pub contributors: u64,
    pub orgs: u64,
    pub mean_monthly_commits: f64,
}

/// Each threshold is met when the total reaches it.
pub fn check_eligibility(totals: ProjectTotals, thresholds: &EligibilityThresholds) -> EligibilityReport {
    let contributors_ok = totals.contributors >= thresholds.min_contributors;
    let orgs_ok = totals.orgs >= thresholds.min_orgs;
    let commits_ok = totals.mean_monthly_commits >= thresholds.min_mean_monthly_commits;
    EligibilityReport {
        contributors_ok,
        orgs_ok,
        commits_ok,
        eligible: contributors_ok && orgs_ok && commits_ok,
    }
}
