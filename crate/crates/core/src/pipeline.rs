//! End-to-end batch processing over many projects.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::GrowthModel;
use crate::identity::IdentityConfig;
use crate::ingest::{acquire_repo_log, filter_merges, parse_log_stream, CommitRecord, IngestReport};
use crate::metrics::ShareWindow;
use crate::output::{to_canonical_json, write_atomic};
use crate::report::{
    compute_fits, compute_metrics, fit_sidecar_csv, summarize, summary_csv, summary_text, FitOptions,
    ProjectSummary, SummaryInputs,
};
use crate::series::{build_monthly_series, EligibilityThresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("no projects configured")]
    NoProjects,
    #[error("project {0:?}: exactly one of `repo` or `log` must be set")]
    AmbiguousSource(String),
    #[error("duplicate project name {0:?}")]
    DuplicateName(String),
    #[error("smoothing window must be odd and positive, got {0}")]
    BadWindow(usize),
    #[error("bad share window: {0}")]
    BadShareWindow(String),
    #[error("no growth models selected")]
    NoModels,
    #[error("identity config: {0}")]
    Identity(#[from] crate::identity::IdentityError),
    #[error("reading config {path}: {message}")]
    Read { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSource {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub repo: Option<PathBuf>,
    #[serde(default)]
    pub log: Option<PathBuf>,
}

impl ProjectSource {
    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        self.repo
            .as_ref()
            .or(self.log.as_ref())
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "project".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub projects: Vec<ProjectSource>,
    pub identity_config: Option<PathBuf>,
    pub group_providers: bool,
    pub thresholds: EligibilityThresholds,
    pub smoothing_window: usize,
    pub models: Vec<GrowthModel>,
    pub biphase: bool,
    /// `all`, `lastN` or `YYYY-MM`.
    pub window: String,
    pub include_merges: bool,
    pub strict: bool,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            projects: Vec::new(),
            identity_config: None,
            group_providers: false,
            thresholds: EligibilityThresholds::default(),
            smoothing_window: 3,
            models: GrowthModel::ALL.to_vec(),
            biphase: false,
            window: "all".into(),
            include_merges: false,
            strict: false,
            output_dir: PathBuf::from("forgepulse-out"),
            workers: 4,
        }
    }
}

impl RunConfig {
    /// Loads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for project in &mut cfg.projects {
            project.repo.as_mut().map(resolve);
            project.log.as_mut().map(resolve);
        }
        cfg.identity_config.as_mut().map(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    fn validate(&self) -> Result<(ShareWindow, IdentityConfig), ConfigError> {
        if self.projects.is_empty() {
            return Err(ConfigError::NoProjects);
        }
        let mut names = BTreeSet::new();
        for p in &self.projects {
            let name = p.display_name();
            if p.repo.is_some() == p.log.is_some() {
                return Err(ConfigError::AmbiguousSource(name));
            }
            if !names.insert(name.clone()) {
                return Err(ConfigError::DuplicateName(name));
            }
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(ConfigError::BadWindow(self.smoothing_window));
        }
        if self.models.is_empty() {
            return Err(ConfigError::NoModels);
        }
        let window = self.window.parse().map_err(ConfigError::BadShareWindow)?;
        let mut identity = match &self.identity_config {
            Some(p) => IdentityConfig::load(p)?,
            None => IdentityConfig::default(),
        };
        identity.group_providers |= self.group_providers;
        Ok((window, identity))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectError {
    pub project: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub summaries: Vec<ProjectSummary>,
    pub errors: Vec<ProjectError>,
    pub written: Vec<PathBuf>,
}

impl PipelineOutcome {
    pub fn success(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Reads a project's commits from a log file or a repository.
pub fn load_records(
    source: &ProjectSource,
    include_merges: bool,
    strict: bool,
) -> Result<(Vec<CommitRecord>, IngestReport), String> {
    let (records, report) = if let Some(log) = &source.log {
        let file = File::open(log).map_err(|e| format!("{}: {e}", log.display()))?;
        parse_log_stream(BufReader::new(file), strict, &log.display().to_string())
            .map_err(|e| e.to_string())?
    } else if let Some(repo) = &source.repo {
        let text = acquire_repo_log(repo, include_merges).map_err(|e| e.to_string())?;
        parse_log_stream(text.as_bytes(), strict, &repo.display().to_string()).map_err(|e| e.to_string())?
    } else {
        return Err("no source".into());
    };
    Ok((filter_merges(records, include_merges), report))
}

pub fn records_jsonl(records: &[CommitRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

struct Context<'a> {
    cfg: &'a RunConfig,
    window: ShareWindow,
    identity: &'a IdentityConfig,
    fit_opts: FitOptions,
}

/// A project's summary row and the files written for it.
type ProjectResult = Result<(ProjectSummary, Vec<PathBuf>), String>;

fn process_project(ctx: &Context<'_>, source: &ProjectSource) -> ProjectResult {
    let name = source.display_name();
    let (records, _report) = load_records(source, ctx.cfg.include_merges, ctx.cfg.strict)?;
    let series = build_monthly_series(&records, ctx.identity).map_err(|e| e.to_string())?;
    let metrics = compute_metrics(&series, ctx.window);
    let (fits, smoothed) =
        compute_fits(&series, &ctx.cfg.models, &ctx.fit_opts).map_err(|e| e.to_string())?;
    let summary = summarize(SummaryInputs {
        project: &name,
        series: &series,
        metrics: &metrics,
        fits: Some(&fits),
        thresholds: &ctx.cfg.thresholds,
        merges_included: ctx.cfg.include_merges,
    });

    let dir = ctx.cfg.output_dir.join(&name);
    let files: Vec<(PathBuf, String)> = vec![
        (dir.join("records.jsonl"), records_jsonl(&records)),
        (dir.join("series.json"), canonical(&series)?),
        (dir.join("metrics.json"), canonical(&metrics)?),
        (dir.join("fit.json"), canonical(&fits)?),
        (dir.join("fit.csv"), fit_sidecar_csv(&series, &smoothed, &fits)),
        (dir.join("summary.json"), canonical(&summary)?),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (path, body) in files {
        write_atomic(&path, body.as_bytes()).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
    }
    Ok((summary, written))
}

fn canonical<T: Serialize>(value: &T) -> Result<String, String> {
    to_canonical_json(value).map_err(|e| e.to_string())
}

/// Runs ingest, aggregation, metrics, fitting and summary for every
/// configured project, then writes the combined table.
///
/// Per-project failures are collected in the outcome; only configuration
/// problems and an unwritable output directory abort the run.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome, ConfigError> {
    let (window, identity) = cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| ConfigError::Read {
        path: cfg.output_dir.clone(),
        message: e.to_string(),
    })?;
    let ctx = Context {
        cfg,
        window,
        identity: &identity,
        fit_opts: FitOptions {
            smoothing_window: cfg.smoothing_window,
            biphase: cfg.biphase,
            ..FitOptions::default()
        },
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(String, ProjectResult)> = pool.install(|| {
        cfg.projects
            .par_iter()
            .map(|p| (p.display_name(), process_project(&ctx, p)))
            .collect()
    });

    let mut outcome = PipelineOutcome {
        summaries: Vec::new(),
        errors: Vec::new(),
        written: Vec::new(),
    };
    for (project, result) in results {
        match result {
            Ok((summary, files)) => {
                outcome.summaries.push(summary);
                outcome.written.extend(files);
            }
            Err(error) => outcome.errors.push(ProjectError { project, error }),
        }
    }

    let combined = [
        (
            cfg.output_dir.join("summary.csv"),
            summary_csv(&outcome.summaries),
        ),
        (
            cfg.output_dir.join("summary.txt"),
            summary_text(&outcome.summaries),
        ),
        (
            cfg.output_dir.join("errors.json"),
            to_canonical_json(&outcome.errors).expect("errors serialize"),
        ),
    ];
    for (path, body) in combined {
        write_atomic(&path, body.as_bytes()).map_err(|e| ConfigError::Read {
            path: path.clone(),
            message: e.to_string(),
        })?;
        outcome.written.push(path);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_log(dir: &Path, name: &str, lines: usize) -> PathBuf {
        let mut text = String::new();
        for i in 0..lines {
            let month = 1 + (i % 10) as u32;
            let who = i % 4;
            let org = ["intel.com", "redhat.com", "gmail.com"][who % 3];
            text.push_str(&format!(
                "{:040x}\t2015-{month:02}-{:02}T10:00:00+00:00\tdev{who}@{org}\tDev {who}\t1\n",
                i + 1,
                1 + (i % 28)
            ));
        }
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn one_project_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let log = write_log(dir.path(), "proj.log", 200);
        let cfg = RunConfig {
            projects: vec![ProjectSource {
                name: None,
                repo: None,
                log: Some(log),
            }],
            output_dir: dir.path().join("out"),
            ..RunConfig::default()
        };
        let outcome = run_pipeline(&cfg).unwrap();
        assert!(outcome.success());
        assert_eq!(outcome.summaries.len(), 1);
        for f in [
            "records.jsonl",
            "series.json",
            "metrics.json",
            "fit.json",
            "summary.json",
            "fit.csv",
        ] {
            assert!(dir.path().join("out/proj").join(f).exists(), "{f}");
        }
        assert!(dir.path().join("out/summary.csv").exists());
    }

    #[test]
    fn unreadable_project_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let log = write_log(dir.path(), "good.log", 50);
        let cfg = RunConfig {
            projects: vec![
                ProjectSource {
                    name: None,
                    repo: None,
                    log: Some(log),
                },
                ProjectSource {
                    name: Some("bad".into()),
                    repo: None,
                    log: Some(dir.path().join("missing.log")),
                },
            ],
            output_dir: dir.path().join("out"),
            ..RunConfig::default()
        };
        let outcome = run_pipeline(&cfg).unwrap();
        assert!(!outcome.success());
        assert_eq!(outcome.summaries.len(), 1);
        assert_eq!(outcome.errors.len(), 1);
        assert_eq!(outcome.errors[0].project, "bad");
        let csv = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            run_pipeline(&RunConfig::default()),
            Err(ConfigError::NoProjects)
        ));
        let src = ProjectSource {
            name: Some("x".into()),
            repo: None,
            log: Some("a".into()),
        };
        let cfg = RunConfig {
            projects: vec![src.clone(), src.clone()],
            ..RunConfig::default()
        };
        assert!(matches!(run_pipeline(&cfg), Err(ConfigError::DuplicateName(_))));
        let cfg = RunConfig {
            projects: vec![src.clone()],
            smoothing_window: 4,
            ..RunConfig::default()
        };
        assert!(matches!(run_pipeline(&cfg), Err(ConfigError::BadWindow(4))));
        let both = ProjectSource {
            repo: Some("r".into()),
            ..src
        };
        let cfg = RunConfig {
            projects: vec![both],
            ..RunConfig::default()
        };
        assert!(matches!(run_pipeline(&cfg), Err(ConfigError::AmbiguousSource(_))));
    }

    #[test]
    fn config_paths_resolve_against_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"projects":[{"log":"logs/a.log"}],"output_dir":"out","models":["gompertz"]}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(
            cfg.projects[0].log.as_deref(),
            Some(dir.path().join("logs/a.log").as_path())
        );
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.models, vec![GrowthModel::Gompertz]);
        assert_eq!(cfg.smoothing_window, 3);
    }
}
