//! Synthetic tweet corpora with known ground truth.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`). Every user draws from its
//! own stream, `ChaCha20Rng::seed_from_u64(seed)` with the stream id set to
//! the user's index, so output does not depend on how work is scheduled.

mod score;

use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use score::{score, ClassScore, Recovery, ScoreError, ScoreReport};

use crate::grammar::{format_fields, ClockStyle, Notation, HASHTAG};
use crate::ledger::RejectReason;
use crate::par::{map_indices, Execution};
use crate::records::{read_jsonl, write_jsonl, RawTweet, RecordsError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Records(#[from] RecordsError),
    #[error("cannot read `{path}`: {message}")]
    Config { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryProfile {
    pub code: String,
    pub weight: f64,
    pub time_zone: String,
    pub utc_offset_seconds: i32,
    pub interface_lang: String,
    pub location: String,
    pub mean_duration: f64,
    pub mean_deep_sleep: f64,
}

impl CountryProfile {
    fn new(code: &str, weight: f64, zone: &str, offset_h: i32, lang: &str, location: &str, duration: f64) -> Self {
        Self {
            code: code.into(),
            weight,
            time_zone: zone.into(),
            utc_offset_seconds: offset_h * 3600,
            interface_lang: lang.into(),
            location: location.into(),
            mean_duration: duration,
            mean_deep_sleep: 50.0,
        }
    }
}

/// Weights of the sleep-start windows. Together the windows tile one day
/// from 18:00: evening `[18,22)`, night `[22,03)`, early `[03,06)`,
/// day `[06,18)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartMixture {
    pub evening: f64,
    pub night: f64,
    pub early: f64,
    pub day: f64,
}

impl Default for StartMixture {
    fn default() -> Self {
        Self {
            evening: 0.08,
            night: 0.77,
            early: 0.05,
            day: 0.10,
        }
    }
}

/// (offset from 18:00 in minutes, width in minutes) per window.
const WINDOWS: [(i64, i64); 4] = [(0, 240), (240, 300), (540, 180), (720, 720)];

/// Per-slot probabilities of emitting an invalid tweet instead of a valid
/// log; `duplicate` is the chance that any emitted tweet is repeated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub spam: f64,
    pub non_english: f64,
    pub too_short: f64,
    pub too_long: f64,
    pub duplicate: f64,
}

impl Default for Injection {
    fn default() -> Self {
        Self {
            spam: 0.03,
            non_english: 0.02,
            too_short: 0.03,
            too_long: 0.01,
            duplicate: 0.02,
        }
    }
}

impl Injection {
    pub fn none() -> Self {
        Self {
            spam: 0.0,
            non_english: 0.0,
            too_short: 0.0,
            too_long: 0.0,
            duplicate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    /// Deep-sleep shift per unit of pre-sleep tweeting probability,
    /// centred so the population mean is unchanged.
    pub presleep_quality_delta: f64,
    /// The early-morning start weight is scaled by `1 + shift · activity`
    /// (activity in `[0,1]`), taking the extra weight from the day window.
    pub activity_start_shift: f64,
    /// Low-friends users sleep this much longer than high-friends users.
    pub friends_duration_delta: f64,
    /// Least active users sleep this much longer than the most active.
    pub activity_duration_delta: f64,
}

impl Default for Planted {
    fn default() -> Self {
        Self {
            presleep_quality_delta: -5.0,
            activity_start_shift: 2.0,
            friends_duration_delta: 30.0,
            activity_duration_delta: 40.0,
        }
    }
}

impl Planted {
    pub fn none() -> Self {
        Self {
            presleep_quality_delta: 0.0,
            activity_start_shift: 0.0,
            friends_duration_delta: 0.0,
            activity_duration_delta: 0.0,
        }
    }
}

/// Friends counts are log-uniform on `[10, 5000]`; users at or below the
/// geometric midpoint count as low-friends.
const FRIENDS_RANGE: (f64, f64) = (10.0, 5000.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    /// Logs per user are log-uniform on `[1, logs_per_user_max]`.
    pub logs_per_user_max: u32,
    pub start_mixture: StartMixture,
    pub countries: Vec<CountryProfile>,
    pub duration_sd_within: f64,
    pub duration_sd_between: f64,
    pub deep_sd_within: f64,
    pub deep_sd_between: f64,
    pub deep_missing_rate: f64,
    /// Weights over [`Notation::ALL`]; each user writes in one notation.
    pub notation_weights: [f64; 6],
    pub injection: Injection,
    pub planted: Planted,
    /// Share of users whose profile names a time zone.
    pub zone_rate: f64,
    pub start_date: NaiveDate,
    /// Emit general tweets around each night.
    pub timelines: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_users: 400,
            logs_per_user_max: 633,
            start_mixture: StartMixture::default(),
            countries: vec![
                CountryProfile::new("JP", 0.44, "Asia/Tokyo", 9, "ja", "Tokyo, Japan", 337.0),
                CountryProfile::new("US", 0.14, "America/New_York", -5, "en", "New York, NY", 388.0),
                CountryProfile::new("RU", 0.07, "Europe/Moscow", 3, "ru", "Moscow", 380.0),
                CountryProfile::new("GB", 0.04, "Europe/London", 0, "en-gb", "London", 380.0),
                CountryProfile::new("DE", 0.08, "Europe/Berlin", 1, "de", "Berlin", 380.0),
                CountryProfile::new("BR", 0.08, "America/Sao_Paulo", -3, "pt-br", "São Paulo", 380.0),
                CountryProfile::new("KR", 0.08, "Asia/Seoul", 9, "ko", "Seoul", 380.0),
                CountryProfile::new("AU", 0.07, "Australia/Sydney", 10, "en", "Sydney", 380.0),
            ],
            duration_sd_within: 60.0,
            duration_sd_between: 20.0,
            deep_sd_within: 12.0,
            deep_sd_between: 5.0,
            deep_missing_rate: 0.02,
            notation_weights: [1.0 / 6.0; 6],
            injection: Injection::default(),
            planted: Planted::default(),
            zone_rate: 0.9,
            start_date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            timelines: true,
        }
    }
}

fn unit(name: &str, x: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(format!("{name} = {x} is outside [0, 1]")))
    }
}

fn sums_to_one(name: &str, xs: &[f64]) -> Result<(), SynthError> {
    for (i, x) in xs.iter().enumerate() {
        unit(&format!("{name}[{i}]"), *x)?;
    }
    let s: f64 = xs.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(SynthError::InvalidConfig(format!("{name} weights sum to {s}, not 1")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_users == 0 || self.logs_per_user_max == 0 {
            return Err(SynthError::InvalidConfig("n_users and logs_per_user_max must be positive".into()));
        }
        let m = self.start_mixture;
        sums_to_one("start_mixture", &[m.evening, m.night, m.early, m.day])?;
        sums_to_one("countries", &self.countries.iter().map(|c| c.weight).collect::<Vec<_>>())?;
        sums_to_one("notation_weights", &self.notation_weights)?;
        let i = self.injection;
        for (name, x) in [
            ("spam", i.spam),
            ("non_english", i.non_english),
            ("too_short", i.too_short),
            ("too_long", i.too_long),
            ("duplicate", i.duplicate),
            ("deep_missing_rate", self.deep_missing_rate),
            ("zone_rate", self.zone_rate),
        ] {
            unit(name, x)?;
        }
        if i.spam + i.non_english + i.too_short + i.too_long > 1.0 {
            return Err(SynthError::InvalidConfig("injection rates sum above 1".into()));
        }
        for sd in [self.duration_sd_within, self.duration_sd_between, self.deep_sd_within, self.deep_sd_between] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(SynthError::InvalidConfig(format!("standard deviation {sd} is invalid")));
            }
        }
        if m.early * self.planted.activity_start_shift > m.day {
            return Err(SynthError::InvalidConfig("activity_start_shift takes more weight than the day window has".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Valid,
    Invalid,
}

/// What the tweet text encodes, in the author's local time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueFields {
    pub start_local: NaiveDateTime,
    pub end_local: NaiveDateTime,
    pub duration_minutes: u32,
    pub deep_sleep_pct: Option<u8>,
    pub notation: Notation,
}

/// Ground truth for one line of the tweets file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// Line index in the tweets file.
    pub seq: u64,
    pub tweet_id: String,
    pub user_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_fields: Option<TrueFields>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: String,
    pub country: String,
    pub activity: f64,
    pub tweets_per_day: f64,
    pub friends_count: u64,
    pub presleep_prob: f64,
    pub mean_duration: f64,
    pub mean_deep_sleep: f64,
    pub notation: Notation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    /// In file order (stable by creation time).
    pub tweets: Vec<RawTweet>,
    pub timelines: Vec<RawTweet>,
    pub truth: Vec<TruthRecord>,
    pub users: Vec<UserTruth>,
}

pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const TIMELINES_FILE: &str = "timelines.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const USERS_FILE: &str = "users.jsonl";
pub const CONFIG_FILE: &str = "synth_config.json";

const SPAM: [&str; 4] = [
    "Best alarm app ever, try it",
    "Just set up my new sleep tracker",
    "Why does my phone think I snore",
    "Giveaway: premium unlock codes",
];

/// Replacement meridiems for the non-English injection.
const FOREIGN: [(&str, &str); 3] = [("午前", "午後"), ("утра", "вечера"), ("a. m.", "p. m.")];

struct Draft {
    tweet: RawTweet,
    label: Label,
    reason: Option<RejectReason>,
    true_fields: Option<TrueFields>,
}

struct UserOut {
    drafts: Vec<Draft>,
    timeline: Vec<RawTweet>,
    truth: UserTruth,
}

fn pick(rng: &mut ChaCha20Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn normal(rng: &mut ChaCha20Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        mean
    } else {
        Normal::new(mean, sd).expect("valid sd").sample(rng)
    }
}

fn user_id(i: usize) -> String {
    (100_000_000 + i as u64).to_string()
}

fn token(rng: &mut ChaCha20Rng) -> String {
    (0..6).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect()
}

fn generate_user(cfg: &SynthConfig, i: usize) -> UserOut {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let uid = user_id(i);
    let weights: Vec<f64> = cfg.countries.iter().map(|c| c.weight).collect();
    let country = &cfg.countries[pick(&mut rng, &weights)];
    let activity: f64 = rng.random();
    let tweets_per_day = 10f64.powf(-1.0 + 3.0 * activity);
    let friends = rng.random_range(FRIENDS_RANGE.0.ln()..FRIENDS_RANGE.1.ln()).exp().round();
    let low_friends = friends <= (FRIENDS_RANGE.0 * FRIENDS_RANGE.1).sqrt();
    let presleep_prob: f64 = rng.random();
    let max = cfg.logs_per_user_max as f64;
    let n_slots = (rng.random_range(0.0..(max + 1.0).ln()).exp().floor() as u32).clamp(1, cfg.logs_per_user_max);
    let notation = Notation::ALL[pick(&mut rng, &cfg.notation_weights)];
    let has_zone = rng.random::<f64>() < cfg.zone_rate;
    let p = cfg.planted;
    let half = if low_friends { 0.5 } else { -0.5 };
    let mean_duration = normal(&mut rng, country.mean_duration, cfg.duration_sd_between)
        + half * p.friends_duration_delta
        + p.activity_duration_delta * (0.5 - activity);
    let mean_deep = normal(&mut rng, country.mean_deep_sleep, cfg.deep_sd_between) + p.presleep_quality_delta * (presleep_prob - 0.5);
    let m = cfg.start_mixture;
    let extra = m.early * p.activity_start_shift * activity;
    let mixture = [m.evening, m.night, m.early + extra, (m.day - extra).max(0.0)];
    let account_created = Utc.from_utc_datetime(
        &(cfg.start_date - Duration::days(rng.random_range(100..2000)))
            .and_hms_opt(12, 0, 0)
            .unwrap(),
    );
    let offset = Duration::seconds(country.utc_offset_seconds as i64);
    let to_utc = |local: NaiveDateTime| -> DateTime<Utc> { Utc.from_utc_datetime(&(local - offset)) };

    let base = RawTweet {
        tweet_id: String::new(),
        text: String::new(),
        created_at: account_created,
        user_id: uid.clone(),
        screen_name: format!("sleeper{i}"),
        location_text: Some(country.location.clone()),
        time_zone: has_zone.then(|| country.time_zone.clone()),
        utc_offset_seconds: Some(country.utc_offset_seconds),
        interface_lang: Some(country.interface_lang.clone()),
        bio: None,
        friends_count: Some(friends as u64),
        followers_count: Some(rng.random_range(0..2000)),
        statuses_count: None,
        account_created_at: Some(account_created),
    };
    let id_base = 10_000_000_000u64 + i as u64 * 10_000_000;
    let mut next_id = 0u64;
    let mut new_id = || {
        next_id += 1;
        (id_base + next_id).to_string()
    };

    let mut drafts = Vec::new();
    let mut timeline = Vec::new();
    let mut texts: HashSet<String> = HashSet::new();
    let mut day = 0i64;
    let inj = cfg.injection;
    for _ in 0..n_slots {
        day += rng.random_range(1..=2);
        let u: f64 = rng.random();
        let kind = if u < inj.spam {
            Some(RejectReason::NotSleepLog)
        } else if u < inj.spam + inj.non_english {
            Some(RejectReason::NonEnglishNotation)
        } else if u < inj.spam + inj.non_english + inj.too_short {
            Some(RejectReason::TooShort)
        } else if u < inj.spam + inj.non_english + inj.too_short + inj.too_long {
            Some(RejectReason::TooLong)
        } else {
            None
        };
        let evening = (cfg.start_date + Duration::days(day)).and_hms_opt(18, 0, 0).unwrap();
        let (text, fields, start_local, end_local) = loop {
            let w = WINDOWS[pick(&mut rng, &mixture)];
            let start_local = evening + Duration::minutes(w.0 + rng.random_range(0..w.1));
            let duration: u32 = match kind {
                Some(RejectReason::TooShort) => rng.random_range(30..=119),
                Some(RejectReason::TooLong) => rng.random_range(721..=1000),
                _ => normal(&mut rng, mean_duration, cfg.duration_sd_within).round().clamp(120.0, 720.0) as u32,
            };
            let deep = if rng.random::<f64>() < cfg.deep_missing_rate {
                None
            } else {
                Some(normal(&mut rng, mean_deep, cfg.deep_sd_within).round().clamp(0.0, 100.0) as u8)
            };
            let end_local = start_local + Duration::minutes(duration as i64);
            let (text, fields) = match kind {
                Some(RejectReason::NotSleepLog) => (
                    format!("{} {HASHTAG} {}", SPAM[rng.random_range(0..SPAM.len())], token(&mut rng)),
                    None,
                ),
                Some(RejectReason::NonEnglishNotation) => {
                    let n12 = Notation::new(ClockStyle::H12Ampm, notation.separator);
                    let (am, pm) = FOREIGN[rng.random_range(0..FOREIGN.len())];
                    let t = format_fields(duration, start_local.time(), end_local.time(), deep, n12)
                        .replace(" AM", &format!(" {am}"))
                        .replace(" PM", &format!(" {pm}"));
                    (t, None)
                }
                _ => (
                    format_fields(duration, start_local.time(), end_local.time(), deep, notation),
                    Some(TrueFields {
                        start_local,
                        end_local,
                        duration_minutes: duration,
                        deep_sleep_pct: deep,
                        notation,
                    }),
                ),
            };
            if texts.insert(text.clone()) {
                break (text, fields, start_local, end_local);
            }
        };
        let posted = end_local + Duration::minutes(rng.random_range(0..=10));
        let tweet = RawTweet {
            tweet_id: new_id(),
            text,
            created_at: to_utc(posted),
            ..base.clone()
        };
        let dup = rng.random::<f64>() < inj.duplicate;
        let same_id = rng.random::<bool>();
        let dup_delay = Duration::seconds(rng.random_range(1..=60));
        drafts.push(Draft {
            tweet: tweet.clone(),
            label: if kind.is_some() { Label::Invalid } else { Label::Valid },
            reason: kind,
            true_fields: fields,
        });
        if dup {
            let (copy, reason) = if same_id {
                (tweet, RejectReason::DuplicateId)
            } else {
                let created_at = tweet.created_at + dup_delay;
                (
                    RawTweet {
                        tweet_id: new_id(),
                        created_at,
                        ..tweet
                    },
                    RejectReason::DuplicateContent,
                )
            };
            drafts.push(Draft {
                tweet: copy,
                label: Label::Invalid,
                reason: Some(reason),
                true_fields: None,
            });
        }
        if cfg.timelines && kind != Some(RejectReason::NotSleepLog) {
            if rng.random::<f64>() < presleep_prob {
                let at = start_local - Duration::minutes(rng.random_range(1..=120));
                timeline.push(RawTweet {
                    tweet_id: new_id(),
                    text: format!("still up {}", token(&mut rng)),
                    created_at: to_utc(at),
                    ..base.clone()
                });
            }
            let at = end_local + Duration::minutes(rng.random_range(30..=300));
            timeline.push(RawTweet {
                tweet_id: new_id(),
                text: format!("good morning {}", token(&mut rng)),
                created_at: to_utc(at),
                ..base.clone()
            });
        }
    }

    let last = drafts.iter().map(|d| d.tweet.created_at).max().unwrap_or(account_created);
    let statuses = (tweets_per_day * (last - account_created).num_days().max(1) as f64).round() as u64;
    for d in &mut drafts {
        d.tweet.statuses_count = Some(statuses);
    }
    for t in &mut timeline {
        t.statuses_count = Some(statuses);
    }
    UserOut {
        drafts,
        timeline,
        truth: UserTruth {
            user_id: uid,
            country: country.code.clone(),
            activity,
            tweets_per_day,
            friends_count: friends as u64,
            presleep_prob,
            mean_duration,
            mean_deep_sleep: mean_deep,
            notation,
        },
    }
}

/// Generates a corpus. Identical configs give identical corpora regardless
/// of `exec`.
pub fn generate(cfg: &SynthConfig, exec: Execution) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let per_user = map_indices(exec, cfg.n_users, |i| generate_user(cfg, i));
    let mut drafts = Vec::new();
    let mut timelines = Vec::new();
    let mut users = Vec::with_capacity(per_user.len());
    for u in per_user {
        drafts.extend(u.drafts);
        timelines.extend(u.timeline);
        users.push(u.truth);
    }
    drafts.sort_by_key(|d| d.tweet.created_at);
    timelines.sort_by_key(|t| t.created_at);
    let mut tweets = Vec::with_capacity(drafts.len());
    let mut truth = Vec::with_capacity(drafts.len());
    for (seq, d) in drafts.into_iter().enumerate() {
        truth.push(TruthRecord {
            seq: seq as u64,
            tweet_id: d.tweet.tweet_id.clone(),
            user_id: d.tweet.user_id.clone(),
            label: d.label,
            reason: d.reason,
            true_fields: d.true_fields,
        });
        tweets.push(d.tweet);
    }
    Ok(SynthCorpus {
        config: cfg.clone(),
        tweets,
        timelines,
        truth,
        users,
    })
}

impl SynthCorpus {
    /// Writes the tweets and timelines (classic schema), truth, per-user
    /// truth and the config into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|e| SynthError::Config {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        write_jsonl(&dir.join(TWEETS_FILE), self.tweets.iter().map(RawTweet::to_classic_json))?;
        write_jsonl(&dir.join(TIMELINES_FILE), self.timelines.iter().map(RawTweet::to_classic_json))?;
        write_jsonl(&dir.join(TRUTH_FILE), &self.truth)?;
        write_jsonl(&dir.join(USERS_FILE), &self.users)?;
        let path = dir.join(CONFIG_FILE);
        let body = serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n";
        std::fs::write(&path, body).map_err(|e| SynthError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Reads the truth side of a written corpus.
pub fn load_truth(dir: &Path) -> Result<(SynthConfig, Vec<TruthRecord>, Vec<UserTruth>), SynthError> {
    let path = dir.join(CONFIG_FILE);
    let err = |message: String| SynthError::Config {
        path: path.display().to_string(),
        message,
    };
    let cfg: SynthConfig = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?)
        .map_err(|e| err(e.to_string()))?;
    Ok((cfg, read_jsonl(&dir.join(TRUTH_FILE))?, read_jsonl(&dir.join(USERS_FILE))?))
}
