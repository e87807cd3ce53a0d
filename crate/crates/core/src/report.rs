//! Serializable report documents: metrics, growth fits and the per-project
//! summary row.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::growth::{
    classify_phase, detect_biphase, fit_growth_with_decline, BiPhaseFit, FitConfig, GrowthFit, GrowthModel,
    PhaseLabel, PhaseThresholds, DEFAULT_MIN_SEGMENT,
};
use crate::metrics::{
    contribution_tail, diversity, linear_trend, org_shares, spearman, DiversityResult, ShareWindow,
    SpearmanResult, TailResult, TrendResult,
};
use crate::series::{
    check_eligibility, moving_average, EligibilityReport, EligibilityThresholds, MonthKey, MonthlySeries,
    ProjectTotals, SeriesError, SeriesField,
};

/// A statistic that may be undefined. Undefined values serialize as
/// `{"value": null, "reason": "<code>"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat<T> {
    pub value: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl<T> Stat<T> {
    pub fn ok(value: T) -> Self {
        Stat {
            value: Some(value),
            reason: None,
        }
    }

    pub fn undefined(reason: impl Into<String>) -> Self {
        Stat {
            value: None,
            reason: Some(reason.into()),
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Stat<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Stat::ok(v),
            Err(e) => Stat::undefined(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window: String,
    /// Monthly active contributors against monthly commits.
    pub spearman: Stat<SpearmanResult>,
    pub trend: Stat<TrendResult>,
    pub diversity: Stat<DiversityResult>,
    pub tail: Stat<TailResult>,
}

fn window_label(w: ShareWindow) -> String {
    match w {
        ShareWindow::All => "all".into(),
        ShareWindow::LastMonths(k) => format!("last{k}"),
        ShareWindow::Month(m) => m.to_string(),
    }
}

pub fn compute_metrics(series: &MonthlySeries, window: ShareWindow) -> MetricsReport {
    let x = series.values(SeriesField::ActiveContributors);
    let y = series.values(SeriesField::Commits);
    let counts: Vec<u64> = series.contributor_commits.values().copied().collect();
    let code = |e: crate::metrics::MetricError| e.code().to_string();
    MetricsReport {
        window: window_label(window),
        spearman: spearman(&x, &y).map_err(code).into(),
        trend: linear_trend(&x, &y).map_err(code).into(),
        diversity: org_shares(series, window)
            .and_then(|s| diversity(&s))
            .map_err(code)
            .into(),
        tail: contribution_tail(&counts, None).map_err(code).into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: GrowthModel,
    pub fit: Stat<GrowthFit>,
    pub phase: Stat<PhaseLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biphase: Option<Stat<BiPhaseFit>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub field: SeriesField,
    pub smoothing_window: usize,
    pub origin: MonthKey,
    pub fits: Vec<ModelFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub smoothing_window: usize,
    pub biphase: bool,
    pub min_segment: usize,
    pub fit: FitConfig,
    pub phases: PhaseThresholds,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            smoothing_window: 3,
            biphase: false,
            min_segment: DEFAULT_MIN_SEGMENT,
            fit: FitConfig::default(),
            phases: PhaseThresholds::default(),
        }
    }
}

/// Smooths the active-contributor series and fits each requested model.
pub fn compute_fits(
    series: &MonthlySeries,
    models: &[GrowthModel],
    opts: &FitOptions,
) -> Result<(FitReport, Vec<f64>), SeriesError> {
    let smoothed = moving_average(
        &series.values(SeriesField::ActiveContributors),
        opts.smoothing_window,
    )?;
    let fits = models
        .iter()
        .map(|&model| {
            let fit = fit_growth_with_decline(&smoothed, model, series.origin, &opts.fit, &opts.phases);
            let phase = match &fit {
                Ok(f) => classify_phase(&smoothed, f, &opts.phases).into(),
                Err(e) => Stat::undefined(e.to_string()),
            };
            let biphase = opts.biphase.then(|| {
                match detect_biphase(&smoothed, model, series.origin, &opts.fit, opts.min_segment) {
                    Some(b) => Stat::ok(b),
                    None => Stat::undefined("series too short for bi-phase search"),
                }
            });
            ModelFit {
                model,
                fit: fit.into(),
                phase,
                biphase,
            }
        })
        .collect();
    Ok((
        FitReport {
            field: SeriesField::ActiveContributors,
            smoothing_window: opts.smoothing_window,
            origin: series.origin,
            fits,
        },
        smoothed,
    ))
}

/// Per-month plotting table: month, t, observed, smoothed and one fitted
/// column per model.
pub fn fit_sidecar_csv(series: &MonthlySeries, smoothed: &[f64], report: &FitReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "month".to_string(),
        "t".into(),
        "observed".into(),
        "smoothed".into(),
    ];
    header.extend(report.fits.iter().map(|f| format!("fitted_{}", f.model)));
    w.write_record(&header).expect("in-memory write");
    for (i, p) in series.points.iter().enumerate() {
        let mut row = vec![
            p.month.to_string(),
            i.to_string(),
            p.active_contributors.to_string(),
            fmt_float(smoothed[i]),
        ];
        for f in &report.fits {
            row.push(match &f.fit.value {
                Some(fit) => fmt_float(fit.value_at(p.month)),
                None => String::new(),
            });
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Six-significant-digit rendering used in CSV and text tables.
pub fn fmt_float(x: f64) -> String {
    let r = crate::output::round_sig(x);
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}

/// One row of the cross-project table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project: String,
    pub months: usize,
    pub total_contributors: u64,
    pub total_orgs: u64,
    pub total_commits: u64,
    pub mean_monthly_commits: f64,
    /// 5th and 95th percentiles of the monthly values.
    pub active_contrib_range: (f64, f64),
    pub monthly_commit_range: (f64, f64),
    pub active_org_range: (f64, f64),
    pub spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_reason: Option<String>,
    pub diversity: f64,
    pub merges_included: bool,
    pub eligibility: EligibilityReport,
    pub phases: BTreeMap<String, PhaseLabel>,
}

impl ProjectSummary {
    pub fn totals(&self) -> ProjectTotals {
        ProjectTotals {
            contributors: self.total_contributors,
            orgs: self.total_orgs,
            mean_monthly_commits: self.mean_monthly_commits,
        }
    }
}

/// Linear-interpolation percentile over unsorted data, `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn range_of(series: &MonthlySeries, field: SeriesField) -> (f64, f64) {
    let v = series.values(field);
    (percentile(&v, 0.05), percentile(&v, 0.95))
}

pub struct SummaryInputs<'a> {
    pub project: &'a str,
    pub series: &'a MonthlySeries,
    pub metrics: &'a MetricsReport,
    pub fits: Option<&'a FitReport>,
    pub thresholds: &'a EligibilityThresholds,
    pub merges_included: bool,
}

/// Assembles the summary row. Diversity is always computed over the full
/// history, regardless of the metrics window.
pub fn summarize(inputs: SummaryInputs<'_>) -> ProjectSummary {
    let s = inputs.series;
    let total_commits = s.total_commits();
    let mean = total_commits as f64 / s.len() as f64;
    let diversity = org_shares(s, ShareWindow::All)
        .and_then(|sh| diversity(&sh))
        .map(|d| d.diversity)
        .unwrap_or(1.0);
    let (spearman, spearman_reason) = match &inputs.metrics.spearman {
        Stat { value: Some(r), .. } => (Some(r.rho), None),
        Stat { reason, .. } => (None, reason.clone()),
    };
    let phases = inputs
        .fits
        .map(|f| {
            f.fits
                .iter()
                .filter_map(|m| m.phase.value.map(|p| (m.model.to_string(), p)))
                .collect()
        })
        .unwrap_or_default();
    let mut row = ProjectSummary {
        project: inputs.project.to_string(),
        months: s.len(),
        total_contributors: s.total_contributors() as u64,
        total_orgs: s.total_orgs() as u64,
        total_commits,
        mean_monthly_commits: mean,
        active_contrib_range: range_of(s, SeriesField::ActiveContributors),
        monthly_commit_range: range_of(s, SeriesField::Commits),
        active_org_range: range_of(s, SeriesField::ActiveOrgs),
        spearman,
        spearman_reason,
        diversity,
        merges_included: inputs.merges_included,
        eligibility: EligibilityReport {
            contributors_ok: false,
            orgs_ok: false,
            commits_ok: false,
            eligible: false,
        },
        phases,
    };
    row.eligibility = check_eligibility(row.totals(), inputs.thresholds);
    row
}

const TABLE_HEADER: [&str; 16] = [
    "project",
    "total_contributors",
    "total_orgs",
    "total_commits",
    "months",
    "active_contributors_p5",
    "active_contributors_p95",
    "monthly_commits_p5",
    "monthly_commits_p95",
    "active_orgs_p5",
    "active_orgs_p95",
    "mean_monthly_commits",
    "spearman",
    "diversity",
    "eligible",
    "merges",
];

fn table_row(r: &ProjectSummary) -> Vec<String> {
    vec![
        r.project.clone(),
        r.total_contributors.to_string(),
        r.total_orgs.to_string(),
        r.total_commits.to_string(),
        r.months.to_string(),
        fmt_float(r.active_contrib_range.0),
        fmt_float(r.active_contrib_range.1),
        fmt_float(r.monthly_commit_range.0),
        fmt_float(r.monthly_commit_range.1),
        fmt_float(r.active_org_range.0),
        fmt_float(r.active_org_range.1),
        fmt_float(r.mean_monthly_commits),
        r.spearman.map(fmt_float).unwrap_or_default(),
        fmt_float(r.diversity),
        r.eligibility.eligible.to_string(),
        if r.merges_included { "included" } else { "excluded" }.to_string(),
    ]
}

pub fn summary_csv(rows: &[ProjectSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(table_row(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Column-aligned plain-text rendering of the summary table.
pub fn summary_text(rows: &[ProjectSummary]) -> String {
    let cells: Vec<Vec<String>> = std::iter::once(TABLE_HEADER.iter().map(|s| s.to_string()).collect())
        .chain(rows.iter().map(table_row))
        .collect();
    let widths: Vec<usize> = (0..TABLE_HEADER.len())
        .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, &w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
