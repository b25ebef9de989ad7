//! Tweet records, JSON Lines ingestion and de-duplication.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ledger::{RejectReason, RejectRecord, StageLedger, StageTally};

pub const STAGE_INGEST: &str = "ingest";
pub const STAGE_DEDUPE: &str = "dedupe";

/// Timestamp layout used by the classic tweet schema, e.g. `Wed Oct 10 20:19:24 +0000 2018`.
pub const CLASSIC_TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("cannot read `{path}`: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Unwritable {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("`{path}` line {line}: {message}")]
    BadRecord {
        path: String,
        line: usize,
        message: String,
    },
}

/// One archived tweet with the author metadata the analyses need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTweet {
    pub tweet_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub user_id: String,
    #[serde(default)]
    pub screen_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_zone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utc_offset_seconds: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friends_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followers_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statuses_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account_created_at: Option<DateTime<Utc>>,
}

impl RawTweet {
    /// Builds a tweet from one decoded JSON object. Both the classic public
    /// schema (`id_str`, `user: {...}`) and the flat normalized schema this
    /// crate writes are accepted.
    pub fn from_json(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("not a JSON object")?;
        if obj.get("user").is_some_and(Value::is_object) {
            from_classic(value)
        } else {
            let tweet: RawTweet =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            tweet.validate()?;
            Ok(tweet)
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.tweet_id.is_empty() {
            return Err("empty tweet_id".into());
        }
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        Ok(())
    }

    /// Renders the tweet back to the classic public schema.
    pub fn to_classic_json(&self) -> Value {
        let fmt = |t: &DateTime<Utc>| t.format(CLASSIC_TIME_FORMAT).to_string();
        serde_json::json!({
            "id_str": self.tweet_id,
            "created_at": fmt(&self.created_at),
            "text": self.text,
            "user": {
                "id_str": self.user_id,
                "screen_name": self.screen_name,
                "location": self.location_text,
                "time_zone": self.time_zone,
                "utc_offset": self.utc_offset_seconds,
                "lang": self.interface_lang,
                "description": self.bio,
                "friends_count": self.friends_count,
                "followers_count": self.followers_count,
                "statuses_count": self.statuses_count,
                "created_at": self.account_created_at.as_ref().map(fmt),
            }
        })
    }
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_str(s, CLASSIC_TIME_FORMAT)
        .or_else(|_| DateTime::parse_from_rfc3339(s))
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

fn id_field(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn opt_str(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
}

fn from_classic(value: &Value) -> Result<RawTweet, String> {
    let user = &value["user"];
    let tweet_id = id_field(value.get("id_str"))
        .or_else(|| id_field(value.get("id")))
        .ok_or("missing tweet id")?;
    let text = value
        .get("full_text")
        .or_else(|| value.get("text"))
        .and_then(Value::as_str)
        .ok_or("missing text")?
        .to_owned();
    let created_at = value
        .get("created_at")
        .and_then(Value::as_str)
        .and_then(parse_time)
        .ok_or("missing or unparseable created_at")?;
    let user_id = id_field(user.get("id_str"))
        .or_else(|| id_field(user.get("id")))
        .ok_or("missing user id")?;
    Ok(RawTweet {
        tweet_id,
        text,
        created_at,
        user_id,
        screen_name: opt_str(user.get("screen_name")).unwrap_or_default(),
        location_text: opt_str(user.get("location")),
        time_zone: opt_str(user.get("time_zone")),
        utc_offset_seconds: user
            .get("utc_offset")
            .and_then(Value::as_i64)
            .and_then(|v| i32::try_from(v).ok()),
        interface_lang: opt_str(user.get("lang")),
        bio: opt_str(user.get("description")),
        friends_count: user.get("friends_count").and_then(Value::as_u64),
        followers_count: user.get("followers_count").and_then(Value::as_u64),
        statuses_count: user.get("statuses_count").and_then(Value::as_u64),
        account_created_at: user
            .get("created_at")
            .and_then(Value::as_str)
            .and_then(parse_time),
    })
}

/// A tweet tagged with its position in the ingested stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequenced {
    pub seq: u64,
    pub tweet: RawTweet,
}

/// Somewhere archived tweets can be read from, one JSON object per line.
pub trait TweetSource {
    fn label(&self) -> String;
    fn open(&self) -> Result<Box<dyn BufRead + '_>, RecordsError>;
}

/// A JSON Lines file on disk.
#[derive(Debug, Clone)]
pub struct JsonlFile {
    path: PathBuf,
}

impl JsonlFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl TweetSource for JsonlFile {
    fn label(&self) -> String {
        self.path.display().to_string()
    }

    fn open(&self) -> Result<Box<dyn BufRead + '_>, RecordsError> {
        let file = File::open(&self.path).map_err(|source| RecordsError::Unreadable {
            path: self.label(),
            source,
        })?;
        Ok(Box::new(BufReader::new(file)))
    }
}

/// In-memory lines, mostly for tests and generated corpora.
#[derive(Debug, Clone)]
pub struct MemorySource {
    pub label: String,
    pub data: Vec<u8>,
}

impl TweetSource for MemorySource {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn open(&self) -> Result<Box<dyn BufRead + '_>, RecordsError> {
        Ok(Box::new(self.data.as_slice()))
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub tweets: Vec<Sequenced>,
    pub rejects: Vec<RejectRecord>,
    pub ledger: StageLedger,
}

/// Reads every source in order. Malformed lines are rejected individually;
/// only an unreadable source is fatal.
pub fn ingest(sources: &[&dyn TweetSource]) -> Result<Ingested, RecordsError> {
    let mut tally = StageTally::new();
    let mut tweets = Vec::new();
    let mut rejects = Vec::new();
    let mut seq = 0u64;
    for source in sources {
        let reader = source.open()?;
        for line in reader.split(b'\n') {
            let mut line = line.map_err(|source_err| RecordsError::Unreadable {
                path: source.label(),
                source: source_err,
            })?;
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            let decoded = serde_json::from_slice::<Value>(&line)
                .map_err(|e| e.to_string())
                .and_then(|v| RawTweet::from_json(&v));
            match decoded {
                Ok(tweet) => {
                    tally.keep(&tweet.user_id);
                    tweets.push(Sequenced { seq, tweet });
                }
                Err(message) => {
                    tally.reject(RejectReason::MalformedJson);
                    rejects.push(RejectRecord {
                        stage: STAGE_INGEST.into(),
                        reason: RejectReason::MalformedJson,
                        seq: Some(seq),
                        tweet_id: None,
                        user_id: None,
                        span: None,
                        detail: Some(format!("{}: {message}", source.label())),
                    });
                }
            }
            seq += 1;
        }
    }
    Ok(Ingested {
        tweets,
        rejects,
        ledger: tally.finish(STAGE_INGEST),
    })
}

/// Which duplicate rules are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeConfig {
    pub by_id: bool,
    pub by_content: bool,
}

impl Default for DedupeConfig {
    fn default() -> Self {
        Self {
            by_id: true,
            by_content: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Deduped {
    pub tweets: Vec<Sequenced>,
    pub rejects: Vec<RejectRecord>,
    pub ledger: StageLedger,
}

/// Keeps the first occurrence of each tweet id, and drops later tweets from
/// the same user whose text is byte-identical to an earlier kept tweet.
pub fn dedupe(tweets: Vec<Sequenced>, cfg: DedupeConfig) -> Deduped {
    let mut tally = StageTally::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut seen_content: HashSet<(String, String)> = HashSet::new();
    let mut kept = Vec::with_capacity(tweets.len());
    let mut rejects = Vec::new();

    for item in tweets {
        let t = &item.tweet;
        let reason = if cfg.by_id && seen_ids.contains(&t.tweet_id) {
            Some(RejectReason::DuplicateId)
        } else if cfg.by_content && seen_content.contains(&(t.user_id.clone(), t.text.clone())) {
            Some(RejectReason::DuplicateContent)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                tally.reject(reason);
                rejects.push(RejectRecord {
                    stage: STAGE_DEDUPE.into(),
                    reason,
                    seq: Some(item.seq),
                    tweet_id: Some(t.tweet_id.clone()),
                    user_id: Some(t.user_id.clone()),
                    span: None,
                    detail: None,
                });
            }
            None => {
                tally.keep(&t.user_id);
                seen_ids.insert(t.tweet_id.clone());
                if cfg.by_content {
                    seen_content.insert((t.user_id.clone(), t.text.clone()));
                }
                kept.push(item);
            }
        }
    }
    Deduped {
        tweets: kept,
        rejects,
        ledger: tally.finish(STAGE_DEDUPE),
    }
}

/// Writes serializable records as JSON Lines (LF terminated).
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), RecordsError> {
    let unwritable = |source| RecordsError::Unwritable {
        path: path.display().to_string(),
        source,
    };
    let mut out = io::BufWriter::new(File::create(path).map_err(unwritable)?);
    for r in records {
        serde_json::to_writer(&mut out, &r).map_err(|e| unwritable(e.into()))?;
        out.write_all(b"\n").map_err(unwritable)?;
    }
    out.flush().map_err(unwritable)
}

/// Reads a JSON Lines file of a known record type; any bad line is an error.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RecordsError> {
    let label = path.display().to_string();
    let file = File::open(path).map_err(|source| RecordsError::Unreadable {
        path: label.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RecordsError::Unreadable {
            path: label.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RecordsError::BadRecord {
            path: label.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tweet(id: &str, user: &str, text: &str) -> RawTweet {
        RawTweet {
            tweet_id: id.into(),
            text: text.into(),
            created_at: "2015-10-01T06:12:00Z".parse().unwrap(),
            user_id: user.into(),
            screen_name: format!("name_{user}"),
            location_text: None,
            time_zone: None,
            utc_offset_seconds: None,
            interface_lang: None,
            bio: None,
            friends_count: None,
            followers_count: None,
            statuses_count: None,
            account_created_at: None,
        }
    }

    fn seqd(tweets: Vec<RawTweet>) -> Vec<Sequenced> {
        tweets
            .into_iter()
            .enumerate()
            .map(|(i, tweet)| Sequenced { seq: i as u64, tweet })
            .collect()
    }

    fn mem(lines: &[&str]) -> MemorySource {
        MemorySource {
            label: "mem".into(),
            data: lines.join("\n").into_bytes(),
        }
    }

    const FULL: &str = r#"{"id_str":"1","created_at":"Thu Oct 01 06:12:00 +0000 2015","text":"hello","user":{"id_str":"u1","screen_name":"alice","location":"Tokyo","time_zone":"Asia/Tokyo","utc_offset":32400,"lang":"ja","description":"bio","friends_count":10,"followers_count":20,"statuses_count":3650,"created_at":"Wed Oct 01 00:00:00 +0000 2014"}}"#;

    #[test]
    fn classic_line_maps_every_field() {
        let got = ingest(&[&mem(&[FULL])]).unwrap();
        assert_eq!(got.tweets.len(), 1);
        let t = &got.tweets[0].tweet;
        assert_eq!(t.tweet_id, "1");
        assert_eq!(t.user_id, "u1");
        assert_eq!(t.screen_name, "alice");
        assert_eq!(t.location_text.as_deref(), Some("Tokyo"));
        assert_eq!(t.time_zone.as_deref(), Some("Asia/Tokyo"));
        assert_eq!(t.utc_offset_seconds, Some(32400));
        assert_eq!(t.interface_lang.as_deref(), Some("ja"));
        assert_eq!(t.bio.as_deref(), Some("bio"));
        assert_eq!(t.friends_count, Some(10));
        assert_eq!(t.followers_count, Some(20));
        assert_eq!(t.statuses_count, Some(3650));
        assert_eq!(t.created_at.to_rfc3339(), "2015-10-01T06:12:00+00:00");
        assert!(t.account_created_at.is_some());
    }

    #[test]
    fn normalized_and_classic_forms_agree() {
        let t = ingest(&[&mem(&[FULL])]).unwrap().tweets.remove(0).tweet;
        let flat = serde_json::to_string(&t).unwrap();
        let classic = serde_json::to_string(&t.to_classic_json()).unwrap();
        let again = ingest(&[&mem(&[&flat, &classic])]).unwrap();
        assert_eq!(again.tweets[0].tweet, t);
        assert_eq!(again.tweets[1].tweet, t);
    }

    #[test]
    fn missing_tweet_id_is_malformed() {
        let line = FULL.replace(r#""id_str":"1","#, "");
        let got = ingest(&[&mem(&[&line])]).unwrap();
        assert!(got.tweets.is_empty());
        assert_eq!(got.ledger.rejected_by_reason[&RejectReason::MalformedJson], 1);
    }

    #[test]
    fn garbage_line_is_counted_not_fatal() {
        let l2 = FULL.replace(r#""id_str":"1""#, r#""id_str":"2""#);
        let l3 = FULL.replace(r#""id_str":"1""#, r#""id_str":"3""#);
        let got = ingest(&[&mem(&[FULL, "{not json", &l2, &l3])]).unwrap();
        assert_eq!(got.tweets.len(), 3);
        assert_eq!(got.ledger.input, 4);
        assert_eq!(got.ledger.kept, 3);
        assert_eq!(got.ledger.rejected_by_reason[&RejectReason::MalformedJson], 1);
        assert_eq!(got.rejects[0].seq, Some(1));
        // order preserved
        let ids: Vec<_> = got.tweets.iter().map(|s| s.tweet.tweet_id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3"]);
    }

    #[test]
    fn unreadable_file_names_the_path() {
        let src = JsonlFile::new("/nonexistent/tweets.jsonl");
        let err = ingest(&[&src]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/tweets.jsonl"));
    }

    #[test]
    fn duplicate_ids_keep_first() {
        let a = tweet("1", "u", "x");
        let out = dedupe(seqd(vec![a.clone(), a]), DedupeConfig::default());
        assert_eq!(out.tweets.len(), 1);
        assert_eq!(out.ledger.rejected_by_reason[&RejectReason::DuplicateId], 1);
    }

    #[test]
    fn distinct_tweets_pass_through() {
        let out = dedupe(
            seqd(vec![tweet("1", "u", "x"), tweet("2", "u", "y")]),
            DedupeConfig::default(),
        );
        assert_eq!(out.tweets.len(), 2);
        assert!(out.ledger.rejected_by_reason.is_empty());
    }

    #[test]
    fn same_user_same_text_is_content_duplicate() {
        let out = dedupe(
            seqd(vec![tweet("1", "u", "x"), tweet("2", "u", "x"), tweet("3", "v", "x")]),
            DedupeConfig::default(),
        );
        let ids: Vec<_> = out.tweets.iter().map(|s| s.tweet.tweet_id.as_str()).collect();
        assert_eq!(ids, ["1", "3"]);
        assert_eq!(out.ledger.rejected_by_reason[&RejectReason::DuplicateContent], 1);
    }

    #[test]
    fn rules_can_be_disabled() {
        let input = seqd(vec![tweet("1", "u", "x"), tweet("2", "u", "x")]);
        let out = dedupe(
            input,
            DedupeConfig {
                by_id: true,
                by_content: false,
            },
        );
        assert_eq!(out.tweets.len(), 2);
    }

    fn arb_stream() -> impl Strategy<Value = Vec<RawTweet>> {
        prop::collection::vec((0u8..6, 0u8..3, 0u8..3), 0..40).prop_map(|v| {
            v.into_iter()
                .map(|(id, user, text)| tweet(&id.to_string(), &user.to_string(), &text.to_string()))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn dedupe_is_idempotent(stream in arb_stream()) {
            let once = dedupe(seqd(stream), DedupeConfig::default());
            let twice = dedupe(once.tweets.clone(), DedupeConfig::default());
            prop_assert_eq!(&twice.tweets, &once.tweets);
            prop_assert!(twice.ledger.rejected_by_reason.is_empty());
        }

        #[test]
        fn dedupe_matches_hash_set_oracle(stream in arb_stream()) {
            // oracle: independent pass keyed on id and on (user, text)
            let mut ids = std::collections::BTreeSet::new();
            let mut content = std::collections::BTreeSet::new();
            let mut expect = Vec::new();
            for t in &stream {
                if ids.contains(&t.tweet_id) || content.contains(&(t.user_id.clone(), t.text.clone())) {
                    continue;
                }
                ids.insert(t.tweet_id.clone());
                content.insert((t.user_id.clone(), t.text.clone()));
                expect.push(t.tweet_id.clone());
            }
            let out = dedupe(seqd(stream.clone()), DedupeConfig::default());
            let got: Vec<_> = out.tweets.iter().map(|s| s.tweet.tweet_id.clone()).collect();
            prop_assert_eq!(got, expect);
            prop_assert!(out.ledger.is_conserved());
            prop_assert_eq!(out.ledger.input as usize, stream.len());
        }

        #[test]
        fn ingest_is_deterministic(lines in prop::collection::vec(prop_oneof![
            Just(FULL.to_string()),
            "[a-z{}\":,]{0,20}",
        ], 0..10)) {
            let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
            let a = ingest(&[&mem(&refs)]).unwrap();
            let b = ingest(&[&mem(&refs)]).unwrap();
            prop_assert_eq!(a.tweets, b.tweets);
            prop_assert_eq!(&a.ledger, &b.ledger);
            prop_assert!(a.ledger.is_conserved());
        }
    }
}
