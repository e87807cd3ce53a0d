use std::process::Command;

use forgepulse_core::ingest::{acquire_repo_log, CACHE_ENV};

fn git(dir: &std::path::Path, args: &[&str]) {
    let ok = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args([
            "-c",
            "user.name=C",
            "-c",
            "user.email=c@example.org",
            "-c",
            "commit.gpgsign=false",
        ])
        .args(args)
        .status()
        .unwrap()
        .success();
    assert!(ok);
}

// Runs alone in its own test binary because it sets a process-wide variable.
#[test]
fn cached_log_is_reused_until_refs_move() {
    let repo = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    std::env::set_var(CACHE_ENV, cache.path());

    git(repo.path(), &["init", "-q", "-b", "main"]);
    std::fs::write(repo.path().join("a"), "1").unwrap();
    git(repo.path(), &["add", "a"]);
    git(repo.path(), &["commit", "-q", "-m", "one"]);

    let first = acquire_repo_log(repo.path(), false).unwrap();
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 1);
    assert_eq!(acquire_repo_log(repo.path(), false).unwrap(), first);

    std::fs::write(repo.path().join("a"), "2").unwrap();
    git(repo.path(), &["commit", "-q", "-am", "two"]);
    let second = acquire_repo_log(repo.path(), false).unwrap();
    assert_eq!(second.lines().count(), 2);
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 2);
}
