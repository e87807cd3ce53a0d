//! Gompertz and logistic growth curves.
//!
//! Both models are fitted in their integrated form:
//!
//! * Gompertz: `y(t) = y* · exp(−b · e^(−α t))`, with `b = ln(y*/y₀)`.
//! * Logistic: `y(t) = y* / (1 + A · e^(−α y* t))`, with `A = (y* − y₀)/y₀`.
//!
//! Parameters are optimized as logarithms so they stay positive. The
//! optimizer is a Levenberg–Marquardt iteration with Marquardt diagonal
//! scaling; a trial step is accepted only if it lowers the SSE.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::MonthKey;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GrowthError {
    #[error("need at least {needed} points to fit, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("series has no positive values")]
    AllZero,
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("invalid growth parameters: {0}")]
    InvalidParams(String),
    #[error("classification unavailable: need {needed} months, got {got}")]
    ClassificationUnavailable { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthModel {
    Gompertz,
    Logistic,
}

impl GrowthModel {
    pub const ALL: [GrowthModel; 2] = [GrowthModel::Gompertz, GrowthModel::Logistic];
}

impl fmt::Display for GrowthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthModel::Gompertz => "gompertz",
            GrowthModel::Logistic => "logistic",
        })
    }
}

impl std::str::FromStr for GrowthModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gompertz" => Ok(GrowthModel::Gompertz),
            "logistic" => Ok(GrowthModel::Logistic),
            _ => Err(format!("unknown growth model {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub model: GrowthModel,
    /// Upper limit of the curve.
    pub y_star: f64,
    /// Growth-rate parameter.
    pub alpha: f64,
    /// `b` for Gompertz, `A` for logistic.
    pub shape: f64,
}

impl GrowthParams {
    pub fn new(model: GrowthModel, y_star: f64, alpha: f64, shape: f64) -> Result<Self, GrowthError> {
        for (name, v) in [("y_star", y_star), ("alpha", alpha), ("shape", shape)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GrowthError::InvalidParams(format!("{name} = {v}")));
            }
        }
        Ok(GrowthParams {
            model,
            y_star,
            alpha,
            shape,
        })
    }

    /// Value at time zero, `y₀`.
    pub fn initial_value(&self) -> f64 {
        self.value(0.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.model {
            GrowthModel::Gompertz => self.y_star * (-self.shape * (-self.alpha * t).exp()).exp(),
            GrowthModel::Logistic => self.y_star / (1.0 + self.shape * (-self.alpha * self.y_star * t).exp()),
        }
    }

    /// Right-hand side of the model's differential equation at value `y`.
    pub fn ode_rhs(&self, y: f64) -> f64 {
        match self.model {
            GrowthModel::Gompertz => self.alpha * y * (self.y_star.ln() - y.ln()),
            GrowthModel::Logistic => self.alpha * y * (self.y_star - y),
        }
    }

    fn to_log(self) -> [f64; 3] {
        [self.y_star.ln(), self.alpha.ln(), self.shape.ln()]
    }

    fn from_log(model: GrowthModel, theta: [f64; 3]) -> Self {
        GrowthParams {
            model,
            y_star: theta[0].exp(),
            alpha: theta[1].exp(),
            shape: theta[2].exp(),
        }
    }

    /// Value and gradient with respect to the log-parameters.
    fn value_and_log_gradient(&self, t: f64) -> (f64, [f64; 3]) {
        let (ys, a, s) = (self.y_star, self.alpha, self.shape);
        match self.model {
            GrowthModel::Gompertz => {
                let e = (-a * t).exp();
                let f = ys * (-s * e).exp();
                (f, [f, a * s * t * e * f, -s * e * f])
            }
            GrowthModel::Logistic => {
                let q = s * (-a * ys * t).exp();
                let f = ys / (1.0 + q);
                let k = q / (1.0 + q);
                (f, [f + a * ys * t * k * f, a * ys * t * k * f, -k * f])
            }
        }
    }
}

/// Closed-form model value at `t` months after the anchor.
pub fn model_value(t: f64, params: &GrowthParams) -> f64 {
    params.value(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Relative SSE improvement below which an accepted step ends the fit.
    pub tolerance: f64,
    pub initial_damping: f64,
    pub damping_factor: f64,
    /// Damping at which the search is considered stalled at a minimum.
    pub max_damping: f64,
    pub min_points: usize,
    /// Series peaking below this are flagged low-confidence.
    pub low_confidence_peak: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            tolerance: 1e-9,
            initial_damping: 1e-3,
            damping_factor: 10.0,
            max_damping: 1e12,
            min_points: 8,
            low_confidence_peak: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub params: GrowthParams,
    pub sse: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Month at `t = 0`.
    pub t_offset: MonthKey,
    pub n_points: usize,
    /// Last month used when a declining tail was cut off before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_after: Option<MonthKey>,
    /// SSE at the start and after each accepted step.
    pub sse_trace: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl GrowthFit {
    pub fn value_at(&self, month: MonthKey) -> f64 {
        self.params.value(self.t_offset.months_until(month) as f64)
    }
}

pub const DIAG_RATE_UNIDENTIFIABLE: &str = "rate unidentifiable";
pub const DIAG_MAX_ITERATIONS: &str = "max iterations reached";
pub const DIAG_LOW_CONFIDENCE: &str = "low confidence: small community";
pub const DIAG_POORLY_CONDITIONED: &str = "parameters poorly identified";

fn sse_of(params: &GrowthParams, values: &[f64]) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            let r = y - params.value(t as f64);
            r * r
        })
        .sum()
}

fn sst_of(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|y| (y - mean) * (y - mean)).sum()
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Warm start: `y*` just above the peak, shape from the first positive
/// value, and α from the log-slope over the first half of the rise.
fn initial_guess(model: GrowthModel, values: &[f64]) -> GrowthParams {
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_star = 1.1 * peak;
    let first = values.iter().position(|&v| v > 0.0).unwrap_or(0);
    let y0 = values[first];
    let shape = match model {
        GrowthModel::Gompertz => (y_star / y0).ln(),
        GrowthModel::Logistic => (y_star - y0) / y0,
    };

    let half = y0 + 0.5 * (peak - y0);
    let argmax = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best });
    let mut end = values[first..]
        .iter()
        .position(|&v| v >= half)
        .map(|i| first + i)
        .unwrap_or(argmax);
    if end < first + 1 {
        end = argmax.max(first + 1).min(values.len() - 1);
    }
    let (ts, logs): (Vec<f64>, Vec<f64>) = (first..=end)
        .filter(|&i| values[i] > 0.0)
        .map(|i| (i as f64, values[i].ln()))
        .unzip();
    let slope = if ts.len() >= 2 {
        ols_slope(&ts, &logs)
    } else {
        f64::NAN
    };
    let n = values.len() as f64;
    let alpha = match model {
        GrowthModel::Gompertz if slope > 0.0 && slope.is_finite() => slope / shape,
        GrowthModel::Logistic if slope > 0.0 && slope.is_finite() => slope / y_star,
        GrowthModel::Gompertz => 4.0 / n,
        GrowthModel::Logistic => 4.0 / (n * y_star),
    };
    GrowthParams {
        model,
        y_star,
        alpha,
        shape,
    }
}

/// Solves a 3×3 system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn normal_equations(params: &GrowthParams, values: &[f64]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (t, &y) in values.iter().enumerate() {
        let (f, g) = params.value_and_log_gradient(t as f64);
        let r = y - f;
        for i in 0..3 {
            jtr[i] += g[i] * r;
            for j in 0..3 {
                jtj[i][j] += g[i] * g[j];
            }
        }
    }
    (jtj, jtr)
}

/// Determinant of the correlation form of `JᵀJ`; near zero when the
/// parameters cannot be separated.
fn normalized_determinant(jtj: &[[f64; 3]; 3]) -> f64 {
    let d: Vec<f64> = (0..3).map(|i| jtj[i][i].sqrt()).collect();
    if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return 0.0;
    }
    let c = |i: usize, j: usize| jtj[i][j] / (d[i] * d[j]);
    c(0, 0) * (c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1)) - c(0, 1) * (c(1, 0) * c(2, 2) - c(1, 2) * c(2, 0))
        + c(0, 2) * (c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0))
}

fn validate(values: &[f64], cfg: &FitConfig) -> Result<(), GrowthError> {
    if values.len() < cfg.min_points {
        return Err(GrowthError::TooFewPoints {
            needed: cfg.min_points,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GrowthError::NonFinite);
    }
    if !values.iter().any(|&v| v > 0.0) {
        return Err(GrowthError::AllZero);
    }
    Ok(())
}

/// Least-squares fit of `model` to `values`, where `values[i]` is observed
/// `i` months after `t_offset`.
///
/// Non-convergence is not an error: the best parameters found are returned
/// with `converged = false` and a diagnostic.
pub fn fit_growth(
    values: &[f64],
    model: GrowthModel,
    t_offset: MonthKey,
    cfg: &FitConfig,
) -> Result<GrowthFit, GrowthError> {
    validate(values, cfg)?;
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = values.iter().cloned().fold(f64::INFINITY, f64::min);

    let lower = [(peak * 1e-3).ln(), -40.0, -40.0];
    let upper = [(peak * 1e6).ln(), 10.0, 40.0];
    let clamp = |theta: [f64; 3]| -> [f64; 3] {
        let mut out = theta;
        for i in 0..3 {
            out[i] = out[i].clamp(lower[i], upper[i]);
        }
        out
    };

    let mut theta = clamp(initial_guess(model, values).to_log());
    let mut params = GrowthParams::from_log(model, theta);
    let mut sse = sse_of(&params, values);
    let mut trace = vec![sse];
    let mut damping = cfg.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        if sse == 0.0 {
            converged = true;
            break;
        }
        let (jtj, jtr) = normal_equations(&params, values);
        let max_diag = (0..3).map(|i| jtj[i][i]).fold(0.0, f64::max);
        let mut accepted = None;
        while damping <= cfg.max_damping {
            let mut a = jtj;
            for i in 0..3 {
                a[i][i] += damping * jtj[i][i].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
            }
            if let Some(step) = solve3(a, jtr) {
                let trial = clamp([theta[0] + step[0], theta[1] + step[1], theta[2] + step[2]]);
                let trial_params = GrowthParams::from_log(model, trial);
                let trial_sse = sse_of(&trial_params, values);
                if trial_sse.is_finite() && trial_sse < sse {
                    accepted = Some((trial, trial_params, trial_sse));
                    damping = (damping / cfg.damping_factor).max(1e-15);
                    break;
                }
            }
            damping *= cfg.damping_factor;
        }
        let Some((trial, trial_params, trial_sse)) = accepted else {
            // No descent direction left at any damping: a numerical minimum.
            converged = true;
            break;
        };
        let improvement = (sse - trial_sse) / sse;
        theta = trial;
        params = trial_params;
        sse = trial_sse;
        trace.push(sse);
        if improvement < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let mut diagnostics = Vec::new();
    if !converged {
        diagnostics.push(DIAG_MAX_ITERATIONS.to_string());
    }
    if peak - floor <= 1e-9 * peak {
        converged = false;
        diagnostics.push(DIAG_RATE_UNIDENTIFIABLE.to_string());
    } else if normalized_determinant(&normal_equations(&params, values).0) < 1e-12 {
        diagnostics.push(DIAG_POORLY_CONDITIONED.to_string());
    }
    if peak < cfg.low_confidence_peak {
        diagnostics.push(DIAG_LOW_CONFIDENCE.to_string());
    }

    let sst = sst_of(values);
    Ok(GrowthFit {
        params,
        sse,
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 0.0 },
        iterations,
        converged,
        t_offset,
        n_points: values.len(),
        truncated_after: None,
        sse_trace: trace,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    Lag,
    Exponential,
    Stationary,
    Decline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseThresholds {
    pub tail_months: usize,
    /// Decline when the trailing slope per `tail_months` is below
    /// `-decline_fraction · max(series)`.
    pub decline_fraction: f64,
    pub stationary_fraction: f64,
    pub lag_fraction: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        PhaseThresholds {
            tail_months: 6,
            decline_fraction: 0.05,
            stationary_fraction: 0.9,
            lag_fraction: 0.1,
        }
    }
}

/// True when the trailing window falls fast enough to count as decline.
pub fn is_declining(values: &[f64], th: &PhaseThresholds) -> Result<bool, GrowthError> {
    let k = th.tail_months.max(2);
    if values.len() < k {
        return Err(GrowthError::ClassificationUnavailable {
            needed: k,
            got: values.len(),
        });
    }
    let tail = &values[values.len() - k..];
    let ts: Vec<f64> = (0..k).map(|i| i as f64).collect();
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let change = ols_slope(&ts, tail) * k as f64;
    Ok(change < -th.decline_fraction * peak)
}

pub fn classify_phase(
    values: &[f64],
    fit: &GrowthFit,
    th: &PhaseThresholds,
) -> Result<PhaseLabel, GrowthError> {
    if is_declining(values, th)? {
        return Ok(PhaseLabel::Decline);
    }
    let last = *values.last().expect("checked non-empty");
    let y_star = fit.params.y_star;
    Ok(if last >= th.stationary_fraction * y_star {
        PhaseLabel::Stationary
    } else if last <= th.lag_fraction * y_star {
        PhaseLabel::Lag
    } else {
        PhaseLabel::Exponential
    })
}

/// Fits `model`, first cutting the series at its global maximum when the
/// tail is declining; the growth curves only describe the rising phases.
pub fn fit_growth_with_decline(
    values: &[f64],
    model: GrowthModel,
    t_offset: MonthKey,
    cfg: &FitConfig,
    th: &PhaseThresholds,
) -> Result<GrowthFit, GrowthError> {
    if is_declining(values, th).unwrap_or(false) {
        let argmax = values
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > values[best] { i } else { best });
        if argmax + 1 >= cfg.min_points {
            let mut fit = fit_growth(&values[..=argmax], model, t_offset, cfg)?;
            fit.truncated_after = Some(t_offset.plus(argmax as i64));
            return Ok(fit);
        }
    }
    fit_growth(values, model, t_offset, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiPhaseFit {
    /// First month of the second episode.
    pub breakpoint: MonthKey,
    pub breakpoint_index: usize,
    pub first: GrowthFit,
    pub second: GrowthFit,
    pub combined_sse: f64,
    pub single_sse: f64,
    pub bic_single: f64,
    pub bic_biphase: f64,
    /// Two episodes explain the data better than one by BIC.
    pub preferred: bool,
}

pub const DEFAULT_MIN_SEGMENT: usize = 12;

/// Residual variance is floored at `(1e-6 · peak)²` per point so noiseless
/// fits compare by parameter count rather than by rounding error.
fn bic(sse: f64, n: usize, k: usize, peak: f64) -> f64 {
    let n_f = n as f64;
    let floor = n_f * (1e-6 * peak).powi(2);
    n_f * (sse.max(floor).max(f64::MIN_POSITIVE) / n_f).ln() + k as f64 * n_f.ln()
}

/// Exhaustive single-breakpoint search. Each candidate split fits both
/// segments independently; the split with the least combined SSE is
/// compared against one curve over the whole series.
pub fn detect_biphase(
    values: &[f64],
    model: GrowthModel,
    t_offset: MonthKey,
    cfg: &FitConfig,
    min_segment: usize,
) -> Option<BiPhaseFit> {
    let n = values.len();
    let min_segment = min_segment.max(cfg.min_points);
    if n < 2 * min_segment {
        return None;
    }
    let single = fit_growth(values, model, t_offset, cfg).ok()?;

    let candidates: Vec<(usize, GrowthFit, GrowthFit)> = (min_segment..=n - min_segment)
        .into_par_iter()
        .filter_map(|b| {
            let first = fit_growth(&values[..b], model, t_offset, cfg).ok()?;
            let second = fit_growth(&values[b..], model, t_offset.plus(b as i64), cfg).ok()?;
            Some((b, first, second))
        })
        .collect();

    let (b, first, second) = candidates.into_iter().min_by(|x, y| {
        (x.1.sse + x.2.sse)
            .total_cmp(&(y.1.sse + y.2.sse))
            .then(x.0.cmp(&y.0))
    })?;

    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let combined_sse = first.sse + second.sse;
    let bic_single = bic(single.sse, n, 3, peak);
    let bic_biphase = bic(combined_sse, n, 7, peak);
    Some(BiPhaseFit {
        breakpoint: t_offset.plus(b as i64),
        breakpoint_index: b,
        first,
        second,
        combined_sse,
        single_sse: single.sse,
        bic_single,
        bic_biphase,
        preferred: bic_biphase < bic_single,
    })
}
