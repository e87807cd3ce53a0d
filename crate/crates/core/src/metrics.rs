//! Productivity and diversity statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{MonthKey, MonthlySeries};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sequence is constant")]
    ConstantSequence,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("window contains no commits")]
    EmptyWindow,
    #[error("shares must be non-negative and sum to 1, got sum {0}")]
    BadShares(String),
    #[error("fewer than {needed} contributors in the tail, got {got}")]
    TooFewTailPoints { needed: usize, got: usize },
    #[error("no tail variation")]
    NoTailVariation,
}

impl MetricError {
    /// Stable machine-readable code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            MetricError::LengthMismatch(..) => "length-mismatch",
            MetricError::TooFewSamples { .. } => "too-few-samples",
            MetricError::ConstantSequence => "constant-sequence",
            MetricError::NonFinite => "non-finite",
            MetricError::EmptyWindow => "empty-window",
            MetricError::BadShares(_) => "bad-shares",
            MetricError::TooFewTailPoints { .. } => "too-few-tail-points",
            MetricError::NoTailVariation => "no-tail-variation",
        }
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub n: usize,
    pub used_tie_correction: bool,
    /// `1 - 6 Σd² / (n(n²-1))` evaluated on the same average ranks. Equal to
    /// `rho` when there are no ties.
    pub closed_form_rho: f64,
}

/// Average (fractional) ranks, 1-based. Returns whether any ties occurred.
pub fn average_ranks(xs: &[f64]) -> (Vec<f64>, bool) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut ties = false;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        if j - i > 1 {
            ties = true;
        }
        // Positions i..j (0-based) share rank ((i+1) + j) / 2.
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    (ranks, ties)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&v| v == xs[0])
}

/// Spearman's rank correlation as the Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, MetricError> {
    check_pair(x, y)?;
    if is_constant(x) || is_constant(y) {
        return Err(MetricError::ConstantSequence);
    }
    let (rx, tx) = average_ranks(x);
    let (ry, ty) = average_ranks(y);
    let n = x.len();
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let nf = n as f64;
    Ok(SpearmanResult {
        rho: pearson(&rx, &ry),
        n,
        used_tie_correction: tx || ty,
        closed_form_rho: 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept`. A constant `y` has no
/// variance to explain and reports `r_squared = 0`.
pub fn linear_trend(x: &[f64], y: &[f64]) -> Result<TrendResult, MetricError> {
    check_pair(x, y)?;
    if is_constant(x) {
        return Err(MetricError::ConstantSequence);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut sst) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        sst += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if sst == 0.0 {
        return Ok(TrendResult {
            slope: 0.0,
            intercept: my,
            r_squared: 0.0,
        });
    }
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    Ok(TrendResult {
        slope,
        intercept,
        r_squared: (1.0 - sse / sst).clamp(0.0, 1.0),
    })
}

/// Which months contribute to organization shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareWindow {
    All,
    LastMonths(usize),
    Month(MonthKey),
}

impl std::str::FromStr for ShareWindow {
    type Err = String;

    /// Accepts `all`, `lastN` (e.g. `last12`) or a month `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(ShareWindow::All);
        }
        if let Some(n) = s.strip_prefix("last") {
            return n
                .parse()
                .ok()
                .filter(|&k| k > 0)
                .map(ShareWindow::LastMonths)
                .ok_or_else(|| format!("bad window {s:?}"));
        }
        s.parse::<MonthKey>()
            .map(ShareWindow::Month)
            .map_err(|e| e.to_string())
    }
}

/// Commit proportions per unit over `window`.
pub fn org_shares(series: &MonthlySeries, window: ShareWindow) -> Result<BTreeMap<String, f64>, MetricError> {
    let points = match window {
        ShareWindow::All => &series.points[..],
        ShareWindow::LastMonths(k) => &series.points[series.points.len().saturating_sub(k)..],
        ShareWindow::Month(m) => match series.points.iter().position(|p| p.month == m) {
            Some(i) => &series.points[i..=i],
            None => &[],
        },
    };
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for p in points {
        for (k, &c) in &p.org_commits {
            *counts.entry(k.clone()).or_insert(0) += c;
        }
    }
    shares_from_counts(&counts)
}

pub fn shares_from_counts(counts: &BTreeMap<String, u64>) -> Result<BTreeMap<String, f64>, MetricError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(MetricError::EmptyWindow);
    }
    Ok(counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityResult {
    pub simpson: f64,
    pub diversity: f64,
    pub n_units: usize,
    pub shares: BTreeMap<String, f64>,
}

const SHARE_SUM_TOLERANCE: f64 = 1e-9;

/// Simpson's index `S = Σ p²` and diversity `D = √(1/S)` over units with a
/// non-zero share.
pub fn diversity(shares: &BTreeMap<String, f64>) -> Result<DiversityResult, MetricError> {
    if shares.is_empty() {
        return Err(MetricError::EmptyWindow);
    }
    if shares.values().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(MetricError::BadShares("negative or non-finite share".into()));
    }
    let total = compensated_sum(shares.values().copied());
    if (total - 1.0).abs() > SHARE_SUM_TOLERANCE {
        return Err(MetricError::BadShares(total.to_string()));
    }
    let nonzero = shares.values().filter(|&&p| p > 0.0);
    let simpson = compensated_sum(nonzero.clone().map(|p| p * p));
    Ok(DiversityResult {
        simpson,
        diversity: (1.0 / simpson).sqrt(),
        n_units: nonzero.count(),
        shares: shares.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    pub alpha_hat: f64,
    pub x_min: u64,
    pub n_tail: usize,
}

/// Minimum number of observations at or above `x_min`.
pub const MIN_TAIL_POINTS: usize = 10;

/// Nearest-rank median: the ⌈n/2⌉-th smallest value.
fn median_count(sorted: &[u64]) -> u64 {
    sorted[sorted.len().div_ceil(2) - 1]
}

/// Discrete power-law exponent by the approximate maximum-likelihood
/// estimator `α̂ = 1 + n / Σ ln(x / (x_min − ½))` over `x ≥ x_min`.
///
/// `x_min` defaults to the median count.
pub fn contribution_tail(counts: &[u64], x_min: Option<u64>) -> Result<TailResult, MetricError> {
    let mut sorted: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if sorted.is_empty() {
        return Err(MetricError::TooFewTailPoints {
            needed: MIN_TAIL_POINTS,
            got: 0,
        });
    }
    sorted.sort_unstable();
    let x_min = x_min.unwrap_or_else(|| median_count(&sorted)).max(1);
    let tail: Vec<u64> = sorted.into_iter().filter(|&c| c >= x_min).collect();
    if tail.len() < MIN_TAIL_POINTS {
        return Err(MetricError::TooFewTailPoints {
            needed: MIN_TAIL_POINTS,
            got: tail.len(),
        });
    }
    if tail.iter().all(|&c| c == tail[0]) {
        return Err(MetricError::NoTailVariation);
    }
    let shift = x_min as f64 - 0.5;
    let log_sum = compensated_sum(tail.iter().map(|&c| (c as f64 / shift).ln()));
    Ok(TailResult {
        alpha_hat: 1.0 + tail.len() as f64 / log_sum,
        x_min,
        n_tail: tail.len(),
    })
}
