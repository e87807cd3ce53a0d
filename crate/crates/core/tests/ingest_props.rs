use chrono::{TimeZone, Utc};
use forgepulse_core::ingest::{parse_line, parse_log_stream, CommitRecord};
use proptest::prelude::*;

fn arb_record() -> impl Strategy<Value = CommitRecord> {
    (
        "[0-9a-f]{40}",
        0i64..2_000_000_000,
        "[a-z0-9._+-]{0,10}@[a-z0-9-]{1,10}(\\.[a-z]{2,4}){1,2}",
        "[^\t\n\r]{0,20}",
        any::<bool>(),
    )
        .prop_map(|(hash, secs, email, name, is_merge)| CommitRecord {
            hash,
            authored_at: Utc.timestamp_opt(secs, 0).unwrap(),
            author_email: email,
            author_name: name,
            is_merge,
        })
}

proptest! {
    #[test]
    fn canonical_line_round_trips(r in arb_record()) {
        let trimmed = CommitRecord { author_email: r.author_email.trim().to_string(), ..r };
        let parsed = parse_line(&trimmed.to_canonical_line(), true).unwrap();
        prop_assert_eq!(parsed, trimmed);
    }

    #[test]
    fn strict_errors_iff_lenient_skips(lines in prop::collection::vec(
        prop_oneof![
            arb_record().prop_map(|r| r.to_canonical_line()),
            "[^\n]{0,30}",
        ],
        0..20,
    )) {
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        let (records, report) = parse_log_stream(text.as_bytes(), false, "p").unwrap();
        prop_assert_eq!(report.records_parsed + report.records_skipped, lines.len() as u64);
        prop_assert_eq!(records.len() as u64, report.records_parsed);
        let strict = parse_log_stream(text.as_bytes(), true, "p");
        // Strict additionally rejects empty emails, which lenient keeps.
        let lenient_rejects = report.records_skipped + report.records_without_email;
        prop_assert_eq!(strict.is_err(), lenient_rejects > 0);
    }
}
