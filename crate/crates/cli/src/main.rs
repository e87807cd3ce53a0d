use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use forgepulse_core::growth::GrowthModel;
use forgepulse_core::identity::IdentityConfig;
use forgepulse_core::ingest::{acquire_repo_log, filter_merges, parse_log_stream, CommitRecord};
use forgepulse_core::metrics::ShareWindow;
use forgepulse_core::output::{to_canonical_json, write_atomic};
use forgepulse_core::pipeline::{records_jsonl, run_pipeline, RunConfig};
use forgepulse_core::report::{
    compute_fits, compute_metrics, fit_sidecar_csv, summary_csv, summary_text, FitOptions, ProjectSummary,
};
use forgepulse_core::series::{build_monthly_series, MonthlySeries};

#[derive(Parser)]
#[command(
    name = "forgepulse",
    version,
    about = "Developer-community metrics from commit logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a repository or canonical log into JSON Lines records.
    Ingest(IngestArgs),
    /// Aggregate records into a monthly series.
    Series(SeriesArgs),
    /// Compute Spearman, trend, diversity and tail statistics.
    Metrics(MetricsArgs),
    /// Fit growth curves to the smoothed active-contributor series.
    Fit(FitArgs),
    /// Run the full pipeline from a JSON config.
    Run(RunArgs),
    /// Merge per-project summary rows into one table.
    Summary(SummaryArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, conflicts_with = "log", required_unless_present = "log")]
    repo: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    include_merges: bool,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    identity_config: Option<PathBuf>,
    /// Count all provider-domain individuals as one unit.
    #[arg(long)]
    group_providers: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    series: PathBuf,
    /// `all`, `lastN` or `YYYY-MM`.
    #[arg(long, default_value = "all")]
    window: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    Gompertz,
    Logistic,
    Both,
}

impl ModelChoice {
    fn models(self) -> Vec<GrowthModel> {
        match self {
            ModelChoice::Gompertz => vec![GrowthModel::Gompertz],
            ModelChoice::Logistic => vec![GrowthModel::Logistic],
            ModelChoice::Both => GrowthModel::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    model: ModelChoice,
    #[arg(long)]
    biphase: bool,
    /// Moving-average window in months (odd).
    #[arg(long, default_value_t = 3)]
    smooth: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SummaryArgs {
    /// Per-project summary.json files.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write an aligned plain-text table here.
    #[arg(long)]
    text: Option<PathBuf>,
}

fn write(path: &Path, body: &str) -> Result<()> {
    write_atomic(path, body.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ingest(args: IngestArgs) -> Result<()> {
    let (records, report) = match (&args.repo, &args.log) {
        (Some(repo), _) => {
            let text = acquire_repo_log(repo, args.include_merges)?;
            parse_log_stream(text.as_bytes(), args.strict, &repo.display().to_string())?
        }
        (None, Some(log)) => {
            let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
            parse_log_stream(BufReader::new(file), args.strict, &log.display().to_string())?
        }
        (None, None) => bail!("one of --repo or --log is required"),
    };
    let records = filter_merges(records, args.include_merges);
    write(&args.out, &records_jsonl(&records))?;
    eprintln!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<CommitRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn series(args: SeriesArgs) -> Result<()> {
    let mut identity = match &args.identity_config {
        Some(p) => IdentityConfig::load(p)?,
        None => IdentityConfig::default(),
    };
    identity.group_providers |= args.group_providers;
    let records = read_records(&args.input)?;
    let series = build_monthly_series(&records, &identity)?;
    write(&args.out, &to_canonical_json(&series)?)
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let series: MonthlySeries = read_json(&args.series)?;
    let window: ShareWindow = args.window.parse().map_err(anyhow::Error::msg)?;
    write(&args.out, &to_canonical_json(&compute_metrics(&series, window))?)
}

fn fit(args: FitArgs) -> Result<()> {
    let series: MonthlySeries = read_json(&args.series)?;
    let opts = FitOptions {
        smoothing_window: args.smooth,
        biphase: args.biphase,
        ..FitOptions::default()
    };
    let (report, smoothed) = compute_fits(&series, &args.model.models(), &opts)?;
    write(&args.out, &to_canonical_json(&report)?)?;
    write(
        &args.out.with_extension("csv"),
        &fit_sidecar_csv(&series, &smoothed, &report),
    )
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = RunConfig::load(&args.config)?;
    let outcome = run_pipeline(&cfg)?;
    for e in &outcome.errors {
        eprintln!("error: {}: {}", e.project, e.error);
    }
    for s in &outcome.summaries {
        if !s.eligibility.eligible {
            eprintln!("warning: {} does not meet the eligibility thresholds", s.project);
        }
    }
    print!("{}", summary_text(&outcome.summaries));
    Ok(outcome.success())
}

fn summary(args: SummaryArgs) -> Result<()> {
    let rows = args
        .inputs
        .iter()
        .map(|p| read_json::<ProjectSummary>(p))
        .collect::<Result<Vec<_>>>()?;
    write(&args.out, &summary_csv(&rows))?;
    if let Some(text) = &args.text {
        write(text, &summary_text(&rows))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a).map(|_| true),
        Command::Series(a) => series(a).map(|_| true),
        Command::Metrics(a) => metrics(a).map(|_| true),
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Run(a) => run(a),
        Command::Summary(a) => summary(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
