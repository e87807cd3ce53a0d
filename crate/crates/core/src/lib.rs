//! Mining commit logs for developer-community metrics.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`ingest`] parses the canonical commit dump (or runs `git log`).
//! 2. [`identity`] maps emails to contributors and organizational units.
//! 3. [`series`] buckets commits into calendar months and smooths them.
//! 4. [`metrics`] computes Spearman's ρ, linear trends, Simpson's index and
//!    the diversity index, plus a power-law tail diagnostic.
//! 5. [`growth`] fits Gompertz and logistic curves, labels the growth
//!    phase and searches for bi-phase growth.
//! 6. [`report`] and [`pipeline`] assemble per-project artifacts and the
//!    cross-project summary table.

pub mod growth;
pub mod identity;
pub mod ingest;
pub mod metrics;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod series;

pub use growth::{
    classify_phase, detect_biphase, fit_growth, model_value, BiPhaseFit, FitConfig, GrowthFit, GrowthModel,
    GrowthParams, PhaseLabel,
};
pub use identity::{
    classify_domain, normalize_email, resolve_org, ContributorKey, DomainClass, IdentityConfig, OrgUnit,
};
pub use ingest::{acquire_repo_log, parse_log_stream, CommitRecord, IngestReport};
pub use metrics::{
    contribution_tail, diversity, linear_trend, org_shares, spearman, DiversityResult, ShareWindow,
    SpearmanResult, TailResult, TrendResult,
};
pub use pipeline::{run_pipeline, PipelineOutcome, RunConfig};
pub use report::{summarize, ProjectSummary};
pub use series::{build_monthly_series, check_eligibility, smooth, MonthKey, MonthlyPoint, MonthlySeries};
