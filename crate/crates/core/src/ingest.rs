//! Commit-log acquisition and parsing.
//!
//! The canonical dump format is one commit per line, tab separated:
//!
//! ```text
//! <hash>\t<author-date RFC-3339>\t<author-email>\t<author-name>\t<parent-count>
//! ```
//!
//! A parent count of two or more marks a merge commit. Author names that
//! contain a tab produce too many fields and the line is rejected.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable naming an optional directory for cached logs.
pub const CACHE_ENV: &str = "FORGEPULSE_CACHE";

/// One authored commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub hash: String,
    pub authored_at: DateTime<Utc>,
    pub author_email: String,
    pub author_name: String,
    pub is_merge: bool,
}

impl CommitRecord {
    /// Renders the record as one canonical dump line, without the newline.
    ///
    /// Merge commits are written with a parent count of 2, others with 1.
    pub fn to_canonical_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.hash,
            self.authored_at.to_rfc3339_opts(SecondsFormat::Secs, false),
            self.author_email,
            self.author_name,
            if self.is_merge { 2 } else { 1 }
        )
    }
}

/// Why a line was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    BadFieldCount,
    BadHash,
    DuplicateHash,
    BadTimestamp,
    BadParentCount,
    EmptyEmail,
    InvalidUtf8,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::BadFieldCount => "bad field count",
            SkipReason::BadHash => "bad hash",
            SkipReason::DuplicateHash => "duplicate hash",
            SkipReason::BadTimestamp => "bad timestamp",
            SkipReason::BadParentCount => "bad parent count",
            SkipReason::EmptyEmail => "empty email",
            SkipReason::InvalidUtf8 => "invalid utf-8",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tally of one parse run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub records_parsed: u64,
    pub records_skipped: u64,
    /// Records that parsed but carry an empty email. Only possible in
    /// lenient mode; they are dropped before aggregation.
    pub records_without_email: u64,
    pub skip_reasons: BTreeMap<String, u64>,
}

impl IngestReport {
    fn skip(&mut self, reason: SkipReason) {
        self.records_skipped += 1;
        *self.skip_reasons.entry(reason.as_str().to_string()).or_insert(0) += 1;
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: SkipReason },
    #[error("reading {source_name}: {err}")]
    Io {
        source_name: String,
        #[source]
        err: std::io::Error,
    },
    #[error("{path}: {diagnostic}")]
    Acquire { path: PathBuf, diagnostic: String },
}

fn is_hex_hash(s: &str) -> bool {
    (s.len() == 40 || s.len() == 64) && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Parses a single canonical line. `strict` controls whether an empty email
/// is a rejection.
pub fn parse_line(line: &str, strict: bool) -> Result<CommitRecord, SkipReason> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(SkipReason::BadFieldCount);
    }
    let hash = fields[0];
    if !is_hex_hash(hash) {
        return Err(SkipReason::BadHash);
    }
    let authored_at = DateTime::parse_from_rfc3339(fields[1])
        .map_err(|_| SkipReason::BadTimestamp)?
        .with_timezone(&Utc);
    let parents: u32 = fields[4].trim().parse().map_err(|_| SkipReason::BadParentCount)?;
    let author_email = fields[2].trim();
    if author_email.is_empty() && strict {
        return Err(SkipReason::EmptyEmail);
    }
    Ok(CommitRecord {
        hash: hash.to_ascii_lowercase(),
        authored_at,
        author_email: author_email.to_string(),
        author_name: fields[3].to_string(),
        is_merge: parents >= 2,
    })
}

/// Streaming parser over a canonical dump.
///
/// Yields records in input order. In lenient mode malformed lines are
/// tallied in the report; in strict mode the first one ends the stream with
/// an error. Duplicate detection keeps the set of seen hashes.
pub struct LogParser<R> {
    reader: R,
    strict: bool,
    line_no: u64,
    buf: Vec<u8>,
    seen: HashSet<String>,
    report: IngestReport,
    failed: bool,
}

impl<R: BufRead> LogParser<R> {
    pub fn new(reader: R, strict: bool, source: impl Into<String>) -> Self {
        LogParser {
            reader,
            strict,
            line_no: 0,
            buf: Vec::new(),
            seen: HashSet::new(),
            report: IngestReport {
                source: source.into(),
                ..IngestReport::default()
            },
            failed: false,
        }
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn into_report(self) -> IngestReport {
        self.report
    }

    fn classify(&mut self) -> Result<CommitRecord, SkipReason> {
        let mut raw = &self.buf[..];
        if raw.last() == Some(&b'\n') {
            raw = &raw[..raw.len() - 1];
        }
        if raw.last() == Some(&b'\r') {
            raw = &raw[..raw.len() - 1];
        }
        let line = std::str::from_utf8(raw).map_err(|_| SkipReason::InvalidUtf8)?;
        let record = parse_line(line, self.strict)?;
        if !self.seen.insert(record.hash.clone()) {
            return Err(SkipReason::DuplicateHash);
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for LogParser<R> {
    type Item = Result<CommitRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(err) => {
                    self.failed = true;
                    return Some(Err(IngestError::Io {
                        source_name: self.report.source.clone(),
                        err,
                    }));
                }
            }
            self.line_no += 1;
            match self.classify() {
                Ok(record) => {
                    self.report.records_parsed += 1;
                    if record.author_email.is_empty() {
                        self.report.records_without_email += 1;
                    }
                    return Some(Ok(record));
                }
                Err(reason) => {
                    self.report.skip(reason);
                    if self.strict {
                        self.failed = true;
                        return Some(Err(IngestError::Parse {
                            line: self.line_no,
                            reason,
                        }));
                    }
                }
            }
        }
    }
}

/// Parses a whole stream into memory.
pub fn parse_log_stream<R: BufRead>(
    reader: R,
    strict: bool,
    source: &str,
) -> Result<(Vec<CommitRecord>, IngestReport), IngestError> {
    let mut parser = LogParser::new(reader, strict, source);
    let mut records = Vec::new();
    for item in parser.by_ref() {
        records.push(item?);
    }
    Ok((records, parser.into_report()))
}

/// Drops merge commits unless `include_merges` is set.
pub fn filter_merges(records: Vec<CommitRecord>, include_merges: bool) -> Vec<CommitRecord> {
    if include_merges {
        records
    } else {
        records.into_iter().filter(|r| !r.is_merge).collect()
    }
}

fn run_git(repo: &Path, args: &[&str]) -> Result<String, IngestError> {
    let output = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .output()
        .map_err(|e| IngestError::Acquire {
            path: repo.to_path_buf(),
            diagnostic: format!("failed to run git: {e}"),
        })?;
    if !output.status.success() {
        return Err(IngestError::Acquire {
            path: repo.to_path_buf(),
            diagnostic: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    String::from_utf8(output.stdout).map_err(|_| IngestError::Acquire {
        path: repo.to_path_buf(),
        diagnostic: "git produced non-UTF-8 output".to_string(),
    })
}

/// Converts git's `%H%x09%aI%x09%ae%x09%an%x09%P` output to the canonical
/// format: the trailing parent list becomes a parent count.
fn to_canonical(git_output: &str) -> String {
    let mut out = String::with_capacity(git_output.len());
    for line in git_output.lines() {
        if line.is_empty() {
            continue;
        }
        let (head, parents) = match line.rfind('\t') {
            Some(i) => (&line[..i], &line[i + 1..]),
            None => (line, ""),
        };
        out.push_str(head);
        out.push('\t');
        out.push_str(&parents.split_whitespace().count().to_string());
        out.push('\n');
    }
    out
}

fn cache_path(dir: &Path, repo: &Path, include_merges: bool) -> Result<PathBuf, IngestError> {
    let canonical = repo.canonicalize().map_err(|e| IngestError::Acquire {
        path: repo.to_path_buf(),
        diagnostic: e.to_string(),
    })?;
    // Ref state keys the cache so new commits invalidate it.
    let refs = run_git(repo, &["for-each-ref", "--format=%(objectname) %(refname)"])?;
    let head = run_git(repo, &["rev-parse", "HEAD"]).unwrap_or_default();
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string_lossy().as_bytes());
    hasher.update([0u8, include_merges as u8]);
    hasher.update(refs.as_bytes());
    hasher.update(head.as_bytes());
    Ok(dir.join(format!("{}.log", hex::encode(hasher.finalize()))))
}

/// Runs `git log` over all refs of `repo` and returns the canonical dump.
///
/// When [`CACHE_ENV`] names a directory, logs are cached there keyed by the
/// repository path and its ref state.
pub fn acquire_repo_log(repo: &Path, include_merges: bool) -> Result<String, IngestError> {
    if !repo.exists() {
        return Err(IngestError::Acquire {
            path: repo.to_path_buf(),
            diagnostic: "path does not exist".to_string(),
        });
    }
    let cache = std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    let cached = match &cache {
        Some(dir) => Some(cache_path(dir, repo, include_merges)?),
        None => None,
    };
    if let Some(path) = &cached {
        if let Ok(text) = std::fs::read_to_string(path) {
            return Ok(text);
        }
    }

    let mut args = vec!["log", "--all", "--format=%H%x09%aI%x09%ae%x09%an%x09%P"];
    if !include_merges {
        args.push("--no-merges");
    }
    let text = to_canonical(&run_git(repo, &args)?);

    if let Some(path) = &cached {
        // A failed cache write only costs a re-run next time.
        let _ = crate::output::write_atomic(path, text.as_bytes());
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const H1: &str = "a1b2c3d4e5f60718293a4b5c6d7e8f9012345678";
    const H2: &str = "b1b2c3d4e5f60718293a4b5c6d7e8f9012345678";

    fn line(hash: &str, date: &str, email: &str, parents: u32) -> String {
        format!("{hash}\t{date}\t{email}\tSomeone\t{parents}\n")
    }

    #[test]
    fn parses_canonical_line() {
        let text = format!("{H1}\t2015-03-10T14:22:05+00:00\talice@intel.com\tAlice\t0\n");
        let (records, report) = parse_log_stream(text.as_bytes(), true, "t").unwrap();
        assert_eq!(report.records_parsed, 1);
        let r = &records[0];
        assert_eq!(r.hash, H1);
        assert_eq!(r.author_email, "alice@intel.com");
        assert_eq!(r.author_name, "Alice");
        assert!(!r.is_merge);
        assert_eq!(r.authored_at.to_rfc3339(), "2015-03-10T14:22:05+00:00");
    }

    #[test]
    fn empty_stream() {
        let (records, report) = parse_log_stream(&b""[..], true, "empty").unwrap();
        assert!(records.is_empty());
        assert_eq!(report.records_parsed, 0);
        assert_eq!(report.records_skipped, 0);
    }

    #[test]
    fn lenient_tallies_bad_timestamp() {
        let mut text = String::new();
        for (i, date) in [
            "2015-01-01T00:00:00+00:00",
            "2015-01-02T00:00:00+01:00",
            "2015-13-45T99:00:00+00:00",
            "2015-01-04T00:00:00-05:00",
            "2015-01-05T00:00:00Z",
        ]
        .iter()
        .enumerate()
        {
            let hash = format!("{:040x}", i + 1);
            text.push_str(&line(&hash, date, "a@b.com", 1));
        }
        let (records, report) = parse_log_stream(text.as_bytes(), false, "t").unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(report.records_skipped, 1);
        assert_eq!(report.skip_reasons.get("bad timestamp"), Some(&1));
        assert_eq!(report.records_parsed + report.records_skipped, 5);

        let err = parse_log_stream(text.as_bytes(), true, "t").unwrap_err();
        match err {
            IngestError::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert_eq!(reason, SkipReason::BadTimestamp);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_structural_problems() {
        assert_eq!(parse_line("abc", false), Err(SkipReason::BadFieldCount));
        let tabbed = format!("{H1}\t2015-01-01T00:00:00Z\ta@b.com\tBad\tName\t1");
        assert_eq!(parse_line(&tabbed, false), Err(SkipReason::BadFieldCount));
        let short = "abc123\t2015-01-01T00:00:00Z\ta@b.com\tX\t1";
        assert_eq!(parse_line(short, false), Err(SkipReason::BadHash));
        let parents = format!("{H1}\t2015-01-01T00:00:00Z\ta@b.com\tX\tmany");
        assert_eq!(parse_line(&parents, false), Err(SkipReason::BadParentCount));
        let no_email = format!("{H1}\t2015-01-01T00:00:00Z\t\tX\t1");
        assert_eq!(parse_line(&no_email, true), Err(SkipReason::EmptyEmail));
        assert!(parse_line(&no_email, false).is_ok());
    }

    #[test]
    fn duplicates_and_merges() {
        let text = format!(
            "{}{}{}",
            line(H1, "2015-01-01T00:00:00Z", "a@b.com", 1),
            line(H1, "2015-01-01T00:00:00Z", "a@b.com", 1),
            line(H2, "2015-01-02T00:00:00Z", "a@b.com", 2),
        );
        let (records, report) = parse_log_stream(text.as_bytes(), false, "t").unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(report.skip_reasons.get("duplicate hash"), Some(&1));
        assert!(records[1].is_merge);
        assert_eq!(filter_merges(records.clone(), false).len(), 1);
        assert_eq!(filter_merges(records, true).len(), 2);
    }

    #[test]
    fn converts_offsets_to_utc() {
        let l = format!("{H1}\t2015-01-31T23:30:00-02:00\ta@b.com\tX\t1");
        let r = parse_line(&l, true).unwrap();
        assert_eq!(r.authored_at.to_rfc3339(), "2015-02-01T01:30:00+00:00");
    }

    #[test]
    fn git_output_conversion() {
        let raw = format!(
            "{H1}\t2015-01-01T00:00:00Z\ta@b.com\tA\t{H2} {H2}\n{H2}\t2015-01-01T00:00:00Z\ta@b.com\tA\t\n"
        );
        let canon = to_canonical(&raw);
        let lines: Vec<&str> = canon.lines().collect();
        assert!(lines[0].ends_with("\t2"));
        assert!(lines[1].ends_with("\t0"));
    }

    #[test]
    fn missing_repo_is_acquire_error() {
        let err = acquire_repo_log(Path::new("/definitely/not/here"), false).unwrap_err();
        assert!(matches!(err, IngestError::Acquire { .. }));
    }
}
