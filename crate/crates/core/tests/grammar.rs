use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use proptest::prelude::*;
use regex::Regex;
use sleeplog_core::grammar::{
    anchor_dates, format_fields, format_sleeplog, parse_text, parse_tweet, AnchorPolicy, ClockStyle, Notation,
    ParseOutcome, Separator, SleepLog,
};
use sleeplog_core::ledger::RejectReason;
use sleeplog_core::records::RawTweet;

/// Second, regex-based reading of the template. Returns
/// (duration, start, end, deep, clock style, separator) for well-formed text.
fn regex_oracle(text: &str) -> Option<(u32, (u32, u32), (u32, u32), Option<u32>, ClockStyle, Separator)> {
    let re = Regex::new(
        r"^Sleep as Android: .*?sleeping for (\d{1,2})([:.])(\d\d) from (\d{1,2})([:.])(\d\d)(?: ?(AM|PM|am|pm|a\.m\.|p\.m\.))? to (\d{1,2})([:.])(\d\d)(?: ?(AM|PM|am|pm|a\.m\.|p\.m\.))?(?: with (\d{1,3})% deep sleep)?",
    )
    .unwrap();
    let c = re.captures(text)?;
    let n = |i: usize| c[i].parse::<u32>().unwrap();
    let to24 = |h: u32, m: Option<&str>| match m {
        None => h,
        Some(m) if m.starts_with(['A', 'a']) => h % 12,
        Some(_) => h % 12 + 12,
    };
    let mer_s = c.get(7).map(|m| m.as_str());
    let style = match mer_s {
        None => ClockStyle::H24,
        Some(m) if m.contains('.') => ClockStyle::H12DottedAmpm,
        Some(_) => ClockStyle::H12Ampm,
    };
    let sep = if &c[5] == ":" { Separator::Colon } else { Separator::Dot };
    Some((
        n(1) * 60 + n(3),
        (to24(n(4), mer_s), n(6)),
        (to24(n(8), c.get(11).map(|m| m.as_str())), n(10)),
        c.get(12).map(|m| m.as_str().parse().unwrap()),
        style,
        sep,
    ))
}

fn hm(t: NaiveTime) -> (u32, u32) {
    (t.hour(), t.minute())
}

fn t(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).unwrap()
}

const EX_24H: &str = "Sleep as Android: I was sleeping for 7:02 from 23:08 to 6:10 with 46% deep sleep #sleep_as_android";
const EX_DOTTED: &str =
    "Sleep as Android: I was sleeping for 7.30 from 11.05 p.m. to 6.35 a.m. with 52% deep sleep #sleep_as_android";

fn tweet_at(text: &str, created: &str, offset: Option<i32>) -> RawTweet {
    RawTweet {
        tweet_id: "42".into(),
        text: text.into(),
        created_at: created.parse().unwrap(),
        user_id: "u".into(),
        screen_name: "s".into(),
        location_text: None,
        time_zone: None,
        utc_offset_seconds: offset,
        interface_lang: None,
        bio: None,
        friends_count: None,
        followers_count: None,
        statuses_count: None,
        account_created_at: None,
    }
}

#[test]
fn first_example_matches_hand_parse_and_oracle() {
    // hand parse: 7h02 = 422 min; 23:08 -> 06:10 next day; 46%
    let p = parse_text(EX_24H).unwrap();
    assert_eq!(p.duration_minutes, 422);
    assert_eq!((hm(p.start), hm(p.end)), ((23, 8), (6, 10)));
    assert_eq!(p.deep_sleep_pct, Some(46));
    assert_eq!(p.notation, Notation::new(ClockStyle::H24, Separator::Colon));
    assert!(!p.duration_inconsistent);
    let o = regex_oracle(EX_24H).unwrap();
    assert_eq!(o, (422, (23, 8), (6, 10), Some(46), ClockStyle::H24, Separator::Colon));

    let tw = tweet_at(EX_24H, "2015-10-06T06:12:00Z", Some(0));
    let ParseOutcome::Log(log) = parse_tweet(&tw, AnchorPolicy::default()) else { panic!() };
    let a = log.anchor.unwrap();
    assert_eq!(a.end_local.to_string(), "2015-10-06 06:10:00");
    assert_eq!(a.start_local.to_string(), "2015-10-05 23:08:00");
    assert_eq!((a.end_utc - a.start_utc).num_minutes(), 422);
}

#[test]
fn dotted_example_matches_hand_parse_and_oracle() {
    let p = parse_text(EX_DOTTED).unwrap();
    assert_eq!(p.duration_minutes, 450);
    assert_eq!((hm(p.start), hm(p.end)), ((23, 5), (6, 35)));
    assert_eq!(p.deep_sleep_pct, Some(52));
    assert_eq!(p.notation, Notation::new(ClockStyle::H12DottedAmpm, Separator::Dot));
    let o = regex_oracle(EX_DOTTED).unwrap();
    assert_eq!(o, (450, (23, 5), (6, 35), Some(52), ClockStyle::H12DottedAmpm, Separator::Dot));
}

#[test]
fn spam_is_not_a_sleep_log() {
    assert_eq!(parse_text("Love this app! #sleep_as_android").unwrap_err().reason, RejectReason::NotSleepLog);
    assert_eq!(
        parse_text("Sleep as Android: new version is out! #sleep_as_android").unwrap_err().reason,
        RejectReason::NotSleepLog
    );
}

#[test]
fn fullwidth_digits_are_non_english() {
    let text = "Sleep as Android: I was sleeping for ７:０２ from 23:08 to 6:10 with 46% deep sleep #sleep_as_android";
    assert_eq!(parse_text(text).unwrap_err().reason, RejectReason::NonEnglishNotation);
    let text = "Sleep as Android: I was sleeping for 7:02 from 23:08 to ６:１０ with 46% deep sleep";
    assert_eq!(parse_text(text).unwrap_err().reason, RejectReason::NonEnglishNotation);
}

fn log_of(start: NaiveTime, dur: u32, deep: Option<u8>, notation: Notation) -> SleepLog {
    SleepLog {
        tweet_id: "42".into(),
        user_id: "u".into(),
        start_civil: start,
        end_civil: start + Duration::minutes(dur as i64),
        anchor: None,
        duration_minutes: dur,
        duration_inconsistent: false,
        deep_sleep_pct: deep,
        notation,
    }
}

#[test]
fn formatting_matches_canonical_strings() {
    let log = log_of(t(23, 8), 422, Some(46), Notation::ALL[0]);
    assert_eq!(format_sleeplog(&log, Notation::ALL[0]), EX_24H);
    let h12 = format_sleeplog(&log, Notation::new(ClockStyle::H12Ampm, Separator::Colon));
    assert!(h12.contains("from 11:08 PM to 6:10 AM"), "{h12}");
    let back = regex_oracle(&h12).unwrap();
    assert_eq!((back.1, back.2), ((23, 8), (6, 10)));
    let no_deep = format_sleeplog(&log_of(t(23, 8), 422, None, Notation::ALL[0]), Notation::ALL[0]);
    assert!(!no_deep.contains("deep sleep"));
    let dotted = format_fields(450, t(23, 5), t(6, 35), Some(52), Notation::ALL[5]);
    assert_eq!(dotted, EX_DOTTED);
}

#[test]
fn every_notation_combination_parses() {
    for n in Notation::ALL {
        let text = format_fields(422, t(23, 8), t(6, 10), Some(46), n);
        let p = parse_text(&text).unwrap_or_else(|r| panic!("{n}: {r:?}"));
        assert_eq!(p.notation, n);
        let o = regex_oracle(&text).unwrap();
        assert_eq!((o.4, o.5), (n.clock, n.separator));
    }
}

/// Brute-force anchoring oracle: scan candidate dates around the tweet and pick
/// the latest end not after tweet+slack, then the latest start before end.
fn anchor_oracle(start: NaiveTime, end: NaiveTime, tweet: NaiveDateTime, slack: i64) -> (NaiveDateTime, NaiveDateTime) {
    let limit = tweet + Duration::minutes(slack);
    let days: Vec<NaiveDate> = (-3..=3).map(|d| tweet.date() + Duration::days(d)).collect();
    let end_at = days.iter().map(|d| d.and_time(end)).filter(|e| *e <= limit).max().unwrap();
    let start_at = days.iter().map(|d| d.and_time(start)).filter(|s| *s < end_at).max().unwrap();
    (start_at, end_at)
}

#[test]
fn slack_rule_over_a_two_hour_grid() {
    let day = NaiveDate::from_ymd_opt(2015, 11, 3).unwrap();
    let end = t(6, 10);
    for delta in -60i64..=60 {
        let tweet = day.and_time(end) + Duration::minutes(delta);
        let got = anchor_dates(t(23, 8), end, tweet, AnchorPolicy::default());
        assert_eq!(got, anchor_oracle(t(23, 8), end, tweet, 15), "delta {delta}");
        // within slack the end lands on the tweet's day
        if delta >= -15 {
            assert_eq!(got.1.date(), day, "delta {delta}");
        } else {
            assert_eq!(got.1.date(), day.pred_opt().unwrap(), "delta {delta}");
        }
    }
    let (_, e) = anchor_dates(t(23, 8), end, day.and_time(t(6, 0)), AnchorPolicy::default());
    assert_eq!(e, day.and_time(end));
}

fn arb_log() -> impl Strategy<Value = (u32, u32, Option<u8>, usize, i32, u32)> {
    (0u32..1440, 1u32..1440, prop::option::weighted(0.9, 0u8..=100), 0usize..6, -12i32..=14, 0u32..15)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn parse_inverts_format((start_min, dur, deep, ni, off_h, lag) in arb_log()) {
        let n = Notation::ALL[ni];
        let start = t(start_min / 60, start_min % 60);
        let mut log = log_of(start, dur, deep, n);
        let offset = off_h * 3600;
        // tweet posted `lag` minutes after the local wake time
        let end_local = NaiveDate::from_ymd_opt(2015, 10, 20).unwrap().and_time(log.end_civil);
        let created = (end_local + Duration::minutes(lag as i64) - Duration::seconds(offset as i64)).and_utc();
        let text = format_sleeplog(&log, n);
        let tweet = RawTweet { created_at: created, ..tweet_at(&text, "2015-01-01T00:00:00Z", Some(offset)) };
        let ParseOutcome::Log(parsed) = parse_tweet(&tweet, AnchorPolicy::default()) else {
            return Err(TestCaseError::fail(format!("rejected: {text}")));
        };
        let anchor = parsed.anchor.unwrap();
        prop_assert_eq!(anchor.end_local, end_local);
        prop_assert_eq!((anchor.end_utc - anchor.start_utc).num_minutes(), dur as i64);
        log.anchor = Some(anchor);
        prop_assert_eq!(parsed, log);
    }

    #[test]
    fn text_without_prefix_is_never_a_log(s in "\\PC{0,80}") {
        prop_assume!(!s.starts_with("Sleep as Android: "));
        prop_assert_eq!(parse_text(&s).unwrap_err().reason, RejectReason::NotSleepLog);
    }

    #[test]
    fn prefixed_noise_never_panics(s in "\\PC{0,60}") {
        let text = format!("Sleep as Android: I was sleeping for {s}");
        let _ = parse_text(&text);
        let text = format!("Sleep as Android: I was sleeping for 7:00 from {s} to {s}");
        let _ = parse_text(&text);
    }

    #[test]
    fn duration_flag_tracks_disagreement((start_min, dur, stated) in (0u32..1440, 1u32..1440, 0u32..1440)) {
        let start = t(start_min / 60, start_min % 60);
        let end = start + Duration::minutes(dur as i64);
        let text = format_fields(stated, start, end, None, Notation::ALL[0]);
        let p = parse_text(&text).unwrap();
        prop_assert_eq!(p.duration_minutes, stated);
        prop_assert_eq!(p.duration_inconsistent, stated.abs_diff(dur) > 1);
    }
}
