//! Sleep-log tweet grammar.
//!
//! ```text
//! log      := "Sleep as Android: " junk* "sleeping for " DUR " from " TIME " to " TIME
//!             [" with " INT "% deep sleep"] rest*
//! DUR      := H SEP MM
//! TIME     := H SEP MM [SP? MERIDIEM]
//! SEP      := ":" | "."
//! MERIDIEM := "AM" | "PM" | "am" | "pm" | "a.m." | "p.m."
//! ```
//!
//! Hours are 0–23 in 24-hour notation and 0–12 with a meridiem; minutes are
//! always two digits. Any non-ASCII character inside a numeric or meridiem
//! field rejects the tweet as non-English notation; non-English prose
//! elsewhere in the tweet is fine. This module is the single place to amend
//! if real app templates turn out to differ.

use std::fmt;
use std::ops::Range;

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime, NaiveTime, Offset, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::ledger::RejectReason;
use crate::records::RawTweet;

pub const PREFIX: &str = "Sleep as Android: ";
pub const HASHTAG: &str = "#sleep_as_android";
const BODY_MARKER: &str = "sleeping for ";
const FROM: &str = " from ";
const TO: &str = " to ";
const WITH: &str = " with ";
const DEEP_SUFFIX: &str = "% deep sleep";

/// Meridiem tokens used by localized app templates. Seeing one of these next
/// to an end time marks the tweet as non-English notation.
const FOREIGN_MERIDIEMS: &[&str] = &[
    "午前", "午後", "上午", "下午", "오전", "오후", "ص", "م", "утра", "вечера", "дня", "ночи", "π.μ.", "μ.μ.",
    "vorm.", "nachm.", "a. m.", "p. m.",
];

/// 24-hour, 12-hour with `AM`/`PM`, or 12-hour with `a.m.`/`p.m.`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClockStyle {
    H24,
    H12Ampm,
    H12DottedAmpm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Separator {
    Colon,
    Dot,
}

impl Separator {
    fn as_char(self) -> char {
        match self {
            Separator::Colon => ':',
            Separator::Dot => '.',
        }
    }
}

/// How the times in a tweet were written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Notation {
    pub clock: ClockStyle,
    pub separator: Separator,
}

impl Notation {
    pub const fn new(clock: ClockStyle, separator: Separator) -> Self {
        Self { clock, separator }
    }

    pub const ALL: [Notation; 6] = [
        Notation::new(ClockStyle::H24, Separator::Colon),
        Notation::new(ClockStyle::H24, Separator::Dot),
        Notation::new(ClockStyle::H12Ampm, Separator::Colon),
        Notation::new(ClockStyle::H12Ampm, Separator::Dot),
        Notation::new(ClockStyle::H12DottedAmpm, Separator::Colon),
        Notation::new(ClockStyle::H12DottedAmpm, Separator::Dot),
    ];

    pub fn label(self) -> &'static str {
        match (self.clock, self.separator) {
            (ClockStyle::H24, Separator::Colon) => "H24/COLON",
            (ClockStyle::H24, Separator::Dot) => "H24/DOT",
            (ClockStyle::H12Ampm, Separator::Colon) => "H12_AMPM/COLON",
            (ClockStyle::H12Ampm, Separator::Dot) => "H12_AMPM/DOT",
            (ClockStyle::H12DottedAmpm, Separator::Colon) => "H12_DOTTED_AMPM/COLON",
            (ClockStyle::H12DottedAmpm, Separator::Dot) => "H12_DOTTED_AMPM/DOT",
        }
    }
}

impl fmt::Display for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Calendar placement of a log, in the user's local civil time and in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub utc_offset_seconds: i32,
    pub start_local: NaiveDateTime,
    pub end_local: NaiveDateTime,
    pub start_utc: DateTime<Utc>,
    pub end_utc: DateTime<Utc>,
}

/// One parsed sleep session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SleepLog {
    pub tweet_id: String,
    pub user_id: String,
    pub start_civil: NaiveTime,
    pub end_civil: NaiveTime,
    /// Absent when the author's UTC offset could not be determined.
    pub anchor: Option<Anchor>,
    /// As stated in the tweet.
    pub duration_minutes: u32,
    /// Stated and clock-derived durations disagree by more than a minute.
    #[serde(default)]
    pub duration_inconsistent: bool,
    pub deep_sleep_pct: Option<u8>,
    pub notation: Notation,
}

impl SleepLog {
    /// Minutes from start to end on the clock face, in `1..=1440`.
    pub fn clock_duration_minutes(&self) -> u32 {
        clock_minutes_between(self.start_civil, self.end_civil)
    }
}

fn clock_minutes_between(start: NaiveTime, end: NaiveTime) -> u32 {
    let s = start.num_seconds_from_midnight() / 60;
    let e = end.num_seconds_from_midnight() / 60;
    let d = (e + 1440 - s) % 1440;
    if d == 0 {
        1440
    } else {
        d
    }
}

/// Fields recovered from the text alone, before date anchoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedText {
    pub duration_minutes: u32,
    pub start: NaiveTime,
    pub end: NaiveTime,
    pub deep_sleep_pct: Option<u8>,
    pub notation: Notation,
    pub duration_inconsistent: bool,
}

/// Why a tweet did not yield a sleep log. `span` is a character range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub span: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    Log(SleepLog),
    Rejected(Rejection),
}

/// How parsed times of day are placed on the calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPolicy {
    /// A tweet may precede the stated wake time by at most this many minutes.
    pub slack_minutes: i64,
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        Self { slack_minutes: 15 }
    }
}

/// Resolves the author's UTC offset at the tweet instant: the explicit offset
/// wins, then an IANA zone name.
pub fn tweet_offset(tweet: &RawTweet) -> Option<FixedOffset> {
    if let Some(secs) = tweet.utc_offset_seconds {
        return FixedOffset::east_opt(secs);
    }
    let tz: chrono_tz::Tz = tweet.time_zone.as_deref()?.trim().parse().ok()?;
    Some(tz.offset_from_utc_datetime(&tweet.created_at.naive_utc()).fix())
}

/// Places `end` at its latest occurrence no later than `tweet_local + slack`,
/// and `start` at its latest occurrence strictly before `end`.
pub fn anchor_dates(
    start: NaiveTime,
    end: NaiveTime,
    tweet_local: NaiveDateTime,
    policy: AnchorPolicy,
) -> (NaiveDateTime, NaiveDateTime) {
    let limit = tweet_local + Duration::minutes(policy.slack_minutes);
    let mut end_at = limit.date().and_time(end);
    if end_at > limit {
        end_at -= Duration::days(1);
    }
    let mut start_at = end_at.date().and_time(start);
    if start_at >= end_at {
        start_at -= Duration::days(1);
    }
    (start_at, end_at)
}

/// Parses one tweet into a sleep log, or says why not.
pub fn parse_tweet(tweet: &RawTweet, policy: AnchorPolicy) -> ParseOutcome {
    let parsed = match parse_text(&tweet.text) {
        Ok(p) => p,
        Err(r) => return ParseOutcome::Rejected(r),
    };
    let anchor = tweet_offset(tweet).map(|offset| {
        let tweet_local = tweet.created_at.with_timezone(&offset).naive_local();
        let (start_local, end_local) = anchor_dates(parsed.start, parsed.end, tweet_local, policy);
        let to_utc = |t: NaiveDateTime| (t - Duration::seconds(offset.local_minus_utc() as i64)).and_utc();
        Anchor {
            utc_offset_seconds: offset.local_minus_utc(),
            start_local,
            end_local,
            start_utc: to_utc(start_local),
            end_utc: to_utc(end_local),
        }
    });
    ParseOutcome::Log(SleepLog {
        tweet_id: tweet.tweet_id.clone(),
        user_id: tweet.user_id.clone(),
        start_civil: parsed.start,
        end_civil: parsed.end,
        anchor,
        duration_minutes: parsed.duration_minutes,
        duration_inconsistent: parsed.duration_inconsistent,
        deep_sleep_pct: parsed.deep_sleep_pct,
        notation: parsed.notation,
    })
}

/// Byte-offset problem found while scanning a field.
#[derive(Debug, Clone, Copy)]
struct Issue {
    reason: RejectReason,
    start: usize,
    end: usize,
}

fn precedence(r: RejectReason) -> u8 {
    match r {
        RejectReason::NotSleepLog => 0,
        RejectReason::NonEnglishNotation => 1,
        RejectReason::UnparseableTime => 2,
        _ => 3,
    }
}

#[derive(Default)]
struct Worst(Option<Issue>);

impl Worst {
    fn note(&mut self, issue: Issue) {
        match self.0 {
            Some(cur) if precedence(cur.reason) <= precedence(issue.reason) => {}
            _ => self.0 = Some(issue),
        }
    }
}

fn char_span(text: &str, start: usize, end: usize) -> Range<usize> {
    let s = text[..start].chars().count();
    s..s + text[start..end].chars().count()
}

fn is_time_char(c: char) -> bool {
    c.is_numeric() || matches!(c, ':' | '.' | '：' | '．' | '∶')
}

/// A scanned `H SEP MM` token; offsets are relative to the scanned slice.
#[derive(Debug, Clone, Copy)]
struct Clock {
    hour: u32,
    minute: u32,
    separator: Separator,
    len: usize,
}

/// Scans `H SEP MM` at the start of `s`.
fn scan_clock(s: &str) -> Result<Clock, (RejectReason, usize)> {
    let hour_len: usize = s.chars().take_while(|c| c.is_numeric()).map(char::len_utf8).sum();
    let after_hour = &s[hour_len..];
    let sep = after_hour.chars().next();
    let sep_len = sep.map_or(0, char::len_utf8);
    let minute_len: usize = after_hour[sep_len..]
        .chars()
        .take_while(|c| c.is_numeric())
        .map(char::len_utf8)
        .sum();
    let token_len = if hour_len > 0 && sep.is_some_and(|c| is_time_char(c) && !c.is_numeric()) {
        hour_len + sep_len + minute_len
    } else {
        hour_len.max(s.chars().take_while(|c| is_time_char(*c)).map(char::len_utf8).sum())
    };
    let token = &s[..token_len];
    if !token.is_ascii() {
        return Err((RejectReason::NonEnglishNotation, token_len));
    }
    if s.chars().next().is_some_and(|c| !c.is_ascii()) {
        return Err((RejectReason::NonEnglishNotation, s.chars().next().map_or(0, char::len_utf8)));
    }
    let separator = match sep {
        Some(':') => Separator::Colon,
        Some('.') => Separator::Dot,
        _ => return Err((RejectReason::UnparseableTime, token_len.max(1).min(s.len()))),
    };
    if !(1..=2).contains(&hour_len) || minute_len != 2 {
        return Err((RejectReason::UnparseableTime, token_len));
    }
    let hour: u32 = s[..hour_len].parse().map_err(|_| (RejectReason::UnparseableTime, token_len))?;
    let minute: u32 = s[hour_len + 1..token_len]
        .parse()
        .map_err(|_| (RejectReason::UnparseableTime, token_len))?;
    if minute > 59 {
        return Err((RejectReason::UnparseableTime, token_len));
    }
    Ok(Clock {
        hour,
        minute,
        separator,
        len: token_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Meridiem {
    Am,
    Pm,
}

/// English meridiem at the start of `s` (after an optional single space).
/// Returns the style, the meridiem and the consumed byte length.
fn scan_meridiem(s: &str) -> Option<(ClockStyle, Meridiem, usize)> {
    let skip = usize::from(s.starts_with(' '));
    let rest = &s[skip..];
    const TOKENS: [(&str, ClockStyle, Meridiem); 6] = [
        ("a.m.", ClockStyle::H12DottedAmpm, Meridiem::Am),
        ("p.m.", ClockStyle::H12DottedAmpm, Meridiem::Pm),
        ("AM", ClockStyle::H12Ampm, Meridiem::Am),
        ("PM", ClockStyle::H12Ampm, Meridiem::Pm),
        ("am", ClockStyle::H12Ampm, Meridiem::Am),
        ("pm", ClockStyle::H12Ampm, Meridiem::Pm),
    ];
    TOKENS.iter().find_map(|(tok, style, m)| {
        let tail = rest.strip_prefix(tok)?;
        // "am" must not be the start of a longer word
        if tail.chars().next().is_some_and(|c| c.is_alphanumeric()) {
            return None;
        }
        Some((*style, *m, skip + tok.len()))
    })
}

fn starts_with_foreign_meridiem(s: &str) -> Option<usize> {
    let trimmed = s.trim_start();
    let lead = s.len() - trimmed.len();
    FOREIGN_MERIDIEMS
        .iter()
        .find(|m| trimmed.starts_with(*m))
        .map(|m| lead + m.len())
}

/// A fully scanned `TIME`.
#[derive(Debug, Clone, Copy)]
struct Time {
    at: NaiveTime,
    notation: Notation,
    len: usize,
}

fn scan_time(s: &str) -> Result<Time, (RejectReason, usize, usize)> {
    if let Some(len) = starts_with_foreign_meridiem(s) {
        return Err((RejectReason::NonEnglishNotation, 0, len));
    }
    let clock = scan_clock(s).map_err(|(r, len)| (r, 0, len))?;
    let tail = &s[clock.len..];
    let (clock_style, hour24, len) = match scan_meridiem(tail) {
        Some((style, m, mlen)) => {
            if clock.hour > 12 {
                return Err((RejectReason::UnparseableTime, 0, clock.len + mlen));
            }
            let h = match (m, clock.hour % 12) {
                (Meridiem::Am, h) => h,
                (Meridiem::Pm, h) => h + 12,
            };
            (style, h, clock.len + mlen)
        }
        None => {
            if let Some(flen) = starts_with_foreign_meridiem(tail) {
                return Err((RejectReason::NonEnglishNotation, clock.len, clock.len + flen));
            }
            if tail.chars().next().is_some_and(|c| !c.is_ascii() && !c.is_whitespace()) {
                let n = tail.chars().next().map_or(0, char::len_utf8);
                return Err((RejectReason::NonEnglishNotation, clock.len, clock.len + n));
            }
            if clock.hour > 23 {
                return Err((RejectReason::UnparseableTime, 0, clock.len));
            }
            (ClockStyle::H24, clock.hour, clock.len)
        }
    };
    let at = NaiveTime::from_hms_opt(hour24, clock.minute, 0).ok_or((RejectReason::UnparseableTime, 0, len))?;
    Ok(Time {
        at,
        notation: Notation::new(clock_style, clock.separator),
        len,
    })
}

/// Parses tweet text alone. The rejection reason is the most specific one
/// found, in the order NOT_SLEEP_LOG, NON_ENGLISH_NOTATION, UNPARSEABLE_TIME,
/// MISSING_FIELDS.
pub fn parse_text(text: &str) -> Result<ParsedText, Rejection> {
    let not_log = Rejection {
        reason: RejectReason::NotSleepLog,
        span: None,
    };
    if !text.starts_with(PREFIX) {
        return Err(not_log);
    }
    let Some(marker) = text[PREFIX.len()..].find(BODY_MARKER) else {
        return Err(not_log);
    };
    let dur_at = PREFIX.len() + marker + BODY_MARKER.len();
    let mut worst = Worst::default();
    let missing = |at: usize| Issue {
        reason: RejectReason::MissingFields,
        start: at,
        end: at,
    };

    // DUR
    let from_at = text[dur_at..].find(FROM).map(|i| dur_at + i);
    let dur_end = from_at.unwrap_or_else(|| {
        dur_at + text[dur_at..].find(char::is_whitespace).unwrap_or(text.len() - dur_at)
    });
    let dur_field = &text[dur_at..dur_end];
    let mut duration = None;
    if dur_field.is_empty() {
        worst.note(missing(dur_at));
    } else if !dur_field.is_ascii() {
        worst.note(Issue {
            reason: RejectReason::NonEnglishNotation,
            start: dur_at,
            end: dur_end,
        });
    } else {
        match scan_clock(dur_field) {
            Ok(c) if c.len == dur_field.len() => duration = Some(c.hour * 60 + c.minute),
            _ => worst.note(Issue {
                reason: RejectReason::UnparseableTime,
                start: dur_at,
                end: dur_end,
            }),
        }
    }

    // TIME (start)
    let mut start = None;
    let mut to_at = None;
    match from_at {
        None => worst.note(missing(dur_end)),
        Some(f) => {
            let s_at = f + FROM.len();
            to_at = text[s_at..].find(TO).map(|i| s_at + i);
            let s_end = to_at.unwrap_or(text.len());
            let field = &text[s_at..s_end];
            if to_at.is_none() {
                worst.note(missing(s_end));
            }
            if field.trim().is_empty() {
                worst.note(missing(s_at));
            } else if !field.is_ascii() {
                worst.note(Issue {
                    reason: RejectReason::NonEnglishNotation,
                    start: s_at,
                    end: s_end,
                });
            } else if to_at.is_some() {
                match scan_time(field) {
                    Ok(t) if t.len == field.len() => start = Some(t),
                    Ok(t) => worst.note(Issue {
                        reason: RejectReason::UnparseableTime,
                        start: s_at + t.len,
                        end: s_end,
                    }),
                    Err((r, a, b)) => worst.note(Issue {
                        reason: r,
                        start: s_at + a,
                        end: s_at + b,
                    }),
                }
            }
        }
    }

    // TIME (end) and optional deep-sleep clause
    let mut end = None;
    let mut deep = None;
    if let Some(t) = to_at {
        let e_at = t + TO.len();
        let field = &text[e_at..];
        if field.trim().is_empty() {
            worst.note(missing(e_at));
        } else {
            match scan_time(field) {
                Ok(tm) => {
                    end = Some(tm);
                    match scan_deep(&field[tm.len..]) {
                        Ok(d) => deep = d,
                        Err((r, a, b)) => worst.note(Issue {
                            reason: r,
                            start: e_at + tm.len + a,
                            end: e_at + tm.len + b,
                        }),
                    }
                }
                Err((r, a, b)) => worst.note(Issue {
                    reason: r,
                    start: e_at + a,
                    end: e_at + b,
                }),
            }
        }
    }

    if let (Some(s), Some(e)) = (start, end) {
        if s.notation != e.notation {
            let e_at = to_at.unwrap_or(0) + TO.len();
            worst.note(Issue {
                reason: RejectReason::UnparseableTime,
                start: e_at,
                end: e_at + e.len,
            });
        }
    }

    if let Some(issue) = worst.0 {
        return Err(Rejection {
            reason: issue.reason,
            span: Some(char_span(text, issue.start, issue.end)),
        });
    }
    let (Some(duration_minutes), Some(s), Some(e)) = (duration, start, end) else {
        return Err(Rejection {
            reason: RejectReason::MissingFields,
            span: None,
        });
    };
    let clock = clock_minutes_between(s.at, e.at);
    Ok(ParsedText {
        duration_minutes,
        start: s.at,
        end: e.at,
        deep_sleep_pct: deep,
        notation: s.notation,
        duration_inconsistent: clock.abs_diff(duration_minutes) > 1,
    })
}

/// Optional ` with N% deep sleep`. Text that does not look like the clause is
/// trailing junk and ignored.
fn scan_deep(s: &str) -> Result<Option<u8>, (RejectReason, usize, usize)> {
    let Some(rest) = s.strip_prefix(WITH) else {
        return Ok(None);
    };
    let base = WITH.len();
    let num_len: usize = rest.chars().take_while(|c| c.is_numeric()).map(char::len_utf8).sum();
    if num_len == 0 {
        return Ok(None);
    }
    let num = &rest[..num_len];
    let tail = &rest[num_len..];
    let pct_like = tail.starts_with('%') || tail.starts_with('％');
    if !num.is_ascii() {
        return if pct_like {
            Err((RejectReason::NonEnglishNotation, base, base + num_len))
        } else {
            Ok(None)
        };
    }
    if !tail.starts_with(DEEP_SUFFIX) {
        if tail.starts_with('％') {
            return Err((RejectReason::NonEnglishNotation, base + num_len, base + num_len + '％'.len_utf8()));
        }
        return Ok(None);
    }
    match num.parse::<u32>() {
        Ok(v) if v <= 100 => Ok(Some(v as u8)),
        _ => Err((RejectReason::UnparseableTime, base, base + num_len)),
    }
}

fn write_clock(out: &mut String, hour: u32, minute: u32, sep: Separator) {
    use std::fmt::Write;
    let _ = write!(out, "{hour}{}{minute:02}", sep.as_char());
}

fn write_time(out: &mut String, t: NaiveTime, notation: Notation) {
    let (h, m) = (t.hour(), t.minute());
    match notation.clock {
        ClockStyle::H24 => write_clock(out, h, m, notation.separator),
        ClockStyle::H12Ampm | ClockStyle::H12DottedAmpm => {
            let h12 = match h % 12 {
                0 => 12,
                x => x,
            };
            write_clock(out, h12, m, notation.separator);
            let pm = h >= 12;
            out.push_str(match (notation.clock, pm) {
                (ClockStyle::H12Ampm, false) => " AM",
                (ClockStyle::H12Ampm, true) => " PM",
                (_, false) => " a.m.",
                (_, true) => " p.m.",
            });
        }
    }
}

/// Canonical tweet text for a log in the given notation.
pub fn format_sleeplog(log: &SleepLog, notation: Notation) -> String {
    format_fields(log.duration_minutes, log.start_civil, log.end_civil, log.deep_sleep_pct, notation)
}

/// Same as [`format_sleeplog`] from bare fields.
pub fn format_fields(
    duration_minutes: u32,
    start: NaiveTime,
    end: NaiveTime,
    deep_sleep_pct: Option<u8>,
    notation: Notation,
) -> String {
    let mut out = String::with_capacity(96);
    out.push_str(PREFIX);
    out.push_str("I was ");
    out.push_str(BODY_MARKER);
    write_clock(&mut out, duration_minutes / 60, duration_minutes % 60, notation.separator);
    out.push_str(FROM);
    write_time(&mut out, start, notation);
    out.push_str(TO);
    write_time(&mut out, end, notation);
    if let Some(d) = deep_sleep_pct {
        out.push_str(WITH);
        out.push_str(&d.to_string());
        out.push_str(DEEP_SUFFIX);
    }
    out.push(' ');
    out.push_str(HASHTAG);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: u32, m: u32) -> NaiveTime {
        NaiveTime::from_hms_opt(h, m, 0).unwrap()
    }

    fn reason(text: &str) -> RejectReason {
        parse_text(text).unwrap_err().reason
    }

    #[test]
    fn twelve_oclock_edges() {
        let am = parse_text("Sleep as Android: I was sleeping for 7:00 from 12:30 AM to 7:30 AM").unwrap();
        assert_eq!(am.start, t(0, 30));
        let pm = parse_text("Sleep as Android: I was sleeping for 7:00 from 12:30 PM to 7:30 PM").unwrap();
        assert_eq!(pm.start, t(12, 30));
        assert!(format_fields(420, t(0, 30), t(7, 30), None, Notation::ALL[2]).contains("12:30 AM"));
    }

    #[test]
    fn meridiem_variants_and_spacing() {
        for (s, style) in [
            ("11:05PM", ClockStyle::H12Ampm),
            ("11:05 pm", ClockStyle::H12Ampm),
            ("11:05 p.m.", ClockStyle::H12DottedAmpm),
            ("11:05p.m.", ClockStyle::H12DottedAmpm),
        ] {
            let e = s.replace("11:05", "6:35").replace('P', "A").replace('p', "a");
            let text = format!("Sleep as Android: sleeping for 7:30 from {s} to {e} with 50% deep sleep");
            let p = parse_text(&text).unwrap_or_else(|r| panic!("{text}: {r:?}"));
            assert_eq!(p.notation.clock, style);
            assert_eq!((p.start, p.end), (t(23, 5), t(6, 35)));
        }
    }

    #[test]
    fn hour_ranges_are_enforced() {
        assert_eq!(reason("Sleep as Android: sleeping for 7:00 from 24:00 to 7:00"), RejectReason::UnparseableTime);
        assert_eq!(reason("Sleep as Android: sleeping for 7:00 from 13:00 PM to 7:00 AM"), RejectReason::UnparseableTime);
        assert_eq!(reason("Sleep as Android: sleeping for 7:00 from 23:60 to 7:00"), RejectReason::UnparseableTime);
        assert_eq!(reason("Sleep as Android: sleeping for 7:00 from 23:0 to 7:00"), RejectReason::UnparseableTime);
    }

    #[test]
    fn missing_fields() {
        assert_eq!(reason("Sleep as Android: sleeping for 7:00 from 23:00"), RejectReason::MissingFields);
        assert_eq!(reason("Sleep as Android: sleeping for 7:00"), RejectReason::MissingFields);
        assert_eq!(reason("Sleep as Android: sleeping for  from 23:00 to 6:00"), RejectReason::MissingFields);
    }

    #[test]
    fn precedence_prefers_non_english_over_missing() {
        // end field missing, but the duration uses fullwidth digits
        assert_eq!(reason("Sleep as Android: sleeping for ７:００ from 23:00"), RejectReason::NonEnglishNotation);
        // unparseable start and non-English end
        assert_eq!(
            reason("Sleep as Android: sleeping for 7:00 from 2x:00 to 午前6:00"),
            RejectReason::NonEnglishNotation
        );
    }

    #[test]
    fn foreign_meridiem_is_non_english() {
        let r = parse_text("Sleep as Android: I was sleeping for 7:00 from 11:00 午後 to 6:00 午前 #sleep_as_android").unwrap_err();
        assert_eq!(r.reason, RejectReason::NonEnglishNotation);
        assert_eq!(reason("Sleep as Android: I was sleeping for 7:00 from 23:00 to 6:00 오전"), RejectReason::NonEnglishNotation);
    }

    #[test]
    fn non_english_prose_outside_fields_is_fine() {
        let p = parse_text("Sleep as Android: よく寝た sleeping for 7:02 from 23:08 to 6:10 with 46% deep sleep おやすみ #sleep_as_android").unwrap();
        assert_eq!(p.duration_minutes, 422);
    }

    #[test]
    fn deep_sleep_is_optional_and_bounded() {
        let p = parse_text("Sleep as Android: sleeping for 7:02 from 23:08 to 6:10 #sleep_as_android").unwrap();
        assert_eq!(p.deep_sleep_pct, None);
        assert_eq!(
            reason("Sleep as Android: sleeping for 7:02 from 23:08 to 6:10 with 146% deep sleep"),
            RejectReason::UnparseableTime
        );
        assert_eq!(
            reason("Sleep as Android: sleeping for 7:02 from 23:08 to 6:10 with ４６% deep sleep"),
            RejectReason::NonEnglishNotation
        );
    }

    #[test]
    fn mixed_notation_is_rejected() {
        assert_eq!(reason("Sleep as Android: sleeping for 7:02 from 23:08 to 6.10"), RejectReason::UnparseableTime);
    }

    #[test]
    fn inconsistent_duration_is_flagged_not_rejected() {
        let p = parse_text("Sleep as Android: sleeping for 5:00 from 23:00 to 6:00").unwrap();
        assert!(p.duration_inconsistent);
        assert_eq!(p.duration_minutes, 300);
        let ok = parse_text("Sleep as Android: sleeping for 7:01 from 23:00 to 6:00").unwrap();
        assert!(!ok.duration_inconsistent);
    }

    #[test]
    fn rejection_span_is_in_characters() {
        let text = "Sleep as Android: 寝た sleeping for 7:00 from ２３:00 to 6:00";
        let r = parse_text(text).unwrap_err();
        let span = r.span.unwrap();
        let got: String = text.chars().skip(span.start).take(span.len()).collect();
        assert_eq!(got, "２３:00");
    }

    #[test]
    fn anchors_same_day_and_overnight() {
        let d = chrono::NaiveDate::from_ymd_opt(2015, 10, 6).unwrap();
        let p = AnchorPolicy::default();
        let (s, e) = anchor_dates(t(23, 8), t(6, 10), d.and_time(t(6, 12)), p);
        assert_eq!(e, d.and_time(t(6, 10)));
        assert_eq!(s, d.pred_opt().unwrap().and_time(t(23, 8)));

        let (s, e) = anchor_dates(t(1, 0), t(8, 0), d.and_time(t(8, 5)), p);
        assert_eq!((s, e), (d.and_time(t(1, 0)), d.and_time(t(8, 0))));
        assert_eq!((e - s).num_minutes(), 420);
    }

    #[test]
    fn equal_start_and_end_is_a_full_day() {
        let d = chrono::NaiveDate::from_ymd_opt(2015, 10, 6).unwrap();
        let (s, e) = anchor_dates(t(6, 0), t(6, 0), d.and_time(t(6, 5)), AnchorPolicy::default());
        assert_eq!((e - s).num_minutes(), 1440);
    }

    #[test]
    fn offset_falls_back_to_zone_name() {
        let tweet = RawTweet {
            tweet_id: "1".into(),
            text: String::new(),
            created_at: "2015-07-01T12:00:00Z".parse().unwrap(),
            user_id: "u".into(),
            screen_name: String::new(),
            location_text: None,
            time_zone: Some("America/New_York".into()),
            utc_offset_seconds: None,
            interface_lang: None,
            bio: None,
            friends_count: None,
            followers_count: None,
            statuses_count: None,
            account_created_at: None,
        };
        assert_eq!(tweet_offset(&tweet).unwrap().local_minus_utc(), -4 * 3600);
        let labelled = RawTweet {
            time_zone: Some("Eastern Time (US & Canada)".into()),
            ..tweet.clone()
        };
        assert_eq!(tweet_offset(&labelled), None);
        let explicit = RawTweet {
            utc_offset_seconds: Some(32400),
            ..tweet
        };
        assert_eq!(tweet_offset(&explicit).unwrap().local_minus_utc(), 32400);
    }
}
