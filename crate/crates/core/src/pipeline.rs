//! Parse and filter stages, and the end-to-end run that chains them after
//! ingestion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{parse_tweet, AnchorPolicy, ParseOutcome, SleepLog};
use crate::ledger::{PipelineLedger, RejectReason, RejectRecord, StageLedger, StageTally};
use crate::par::{map_ordered, Execution};
use crate::records::{dedupe, ingest, DedupeConfig, RawTweet, RecordsError, TweetSource};

pub const STAGE_PARSE: &str = "parse";
pub const STAGE_FILTER: &str = "filter";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("invalid filter bounds: need 0 < min ({min}) < max ({max})")]
    InvalidFilter { min: u32, max: u32 },
}

/// Validity window and optional requirements for kept logs. Bounds are
/// inclusive: logs of exactly `min` or `max` minutes are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_duration_minutes: u32,
    pub max_duration_minutes: u32,
    pub require_deep_sleep: bool,
    pub require_anchor: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_duration_minutes: 120,
            max_duration_minutes: 720,
            require_deep_sleep: false,
            require_anchor: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.min_duration_minutes == 0 || self.min_duration_minutes >= self.max_duration_minutes {
            return Err(PipelineError::InvalidFilter {
                min: self.min_duration_minutes,
                max: self.max_duration_minutes,
            });
        }
        Ok(())
    }

    /// The first rule a log breaks, if any.
    pub fn check(&self, log: &SleepLog) -> Option<RejectReason> {
        if log.duration_minutes < self.min_duration_minutes {
            Some(RejectReason::TooShort)
        } else if log.duration_minutes > self.max_duration_minutes {
            Some(RejectReason::TooLong)
        } else if self.require_deep_sleep && log.deep_sleep_pct.is_none() {
            Some(RejectReason::MissingDeepSleep)
        } else if self.require_anchor && log.anchor.is_none() {
            Some(RejectReason::AnchorUnresolved)
        } else {
            None
        }
    }
}

/// Output of one record-level stage.
#[derive(Debug, Clone)]
pub struct StageOutput<T> {
    pub kept: Vec<T>,
    pub rejects: Vec<RejectRecord>,
    pub ledger: StageLedger,
}

/// Parses every tweet. Work fans out across threads; results are re-ordered
/// by input position before accounting, so output never depends on scheduling.
pub fn parse_stage(tweets: &[RawTweet], policy: AnchorPolicy, exec: Execution) -> StageOutput<SleepLog> {
    let outcomes = map_ordered(exec, tweets, |t| parse_tweet(t, policy));
    let mut tally = StageTally::new();
    let mut kept = Vec::new();
    let mut rejects = Vec::new();
    for (tweet, outcome) in tweets.iter().zip(outcomes) {
        match outcome {
            ParseOutcome::Log(log) => {
                tally.keep(&log.user_id);
                kept.push(log);
            }
            ParseOutcome::Rejected(r) => {
                tally.reject(r.reason);
                rejects.push(RejectRecord {
                    stage: STAGE_PARSE.into(),
                    reason: r.reason,
                    seq: None,
                    tweet_id: Some(tweet.tweet_id.clone()),
                    user_id: Some(tweet.user_id.clone()),
                    span: r.span.map(|s| (s.start, s.end)),
                    detail: None,
                });
            }
        }
    }
    StageOutput {
        kept,
        rejects,
        ledger: tally.finish(STAGE_PARSE),
    }
}

/// Applies the validity window and requirements.
pub fn filter_logs(logs: Vec<SleepLog>, cfg: &FilterConfig, exec: Execution) -> StageOutput<SleepLog> {
    let verdicts = map_ordered(exec, &logs, |l| cfg.check(l));
    let mut tally = StageTally::new();
    let mut kept = Vec::with_capacity(logs.len());
    let mut rejects = Vec::new();
    for (log, verdict) in logs.into_iter().zip(verdicts) {
        match verdict {
            None => {
                tally.keep(&log.user_id);
                kept.push(log);
            }
            Some(reason) => {
                tally.reject(reason);
                rejects.push(RejectRecord {
                    stage: STAGE_FILTER.into(),
                    reason,
                    seq: None,
                    tweet_id: Some(log.tweet_id.clone()),
                    user_id: Some(log.user_id.clone()),
                    span: None,
                    detail: Some(format!("duration {} min", log.duration_minutes)),
                });
            }
        }
    }
    StageOutput {
        kept,
        rejects,
        ledger: tally.finish(STAGE_FILTER),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dedupe: DedupeConfig,
    pub anchor: AnchorPolicy,
    pub filter: FilterConfig,
    pub execution: Execution,
}

/// Everything one end-to-end run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    /// Ingested, de-duplicated tweets in input order.
    pub tweets: Vec<RawTweet>,
    /// Logs that passed every filter.
    pub logs: Vec<SleepLog>,
    /// Rejects of every stage, in stage order then input order.
    pub rejects: Vec<RejectRecord>,
    pub ledger: PipelineLedger,
}

/// Runs ingest → dedupe → parse → filter.
pub fn run(sources: &[&dyn TweetSource], cfg: &PipelineConfig) -> Result<PipelineRun, RecordsError> {
    let ingested = ingest(sources)?;
    let deduped = dedupe(ingested.tweets, cfg.dedupe);
    let tweets: Vec<RawTweet> = deduped.tweets.into_iter().map(|s| s.tweet).collect();
    let parsed = parse_stage(&tweets, cfg.anchor, cfg.execution);
    let filtered = filter_logs(parsed.kept, &cfg.filter, cfg.execution);

    let mut rejects = ingested.rejects;
    rejects.extend(deduped.rejects);
    rejects.extend(parsed.rejects);
    rejects.extend(filtered.rejects);
    let ledger = PipelineLedger {
        stages: vec![ingested.ledger, deduped.ledger, parsed.ledger, filtered.ledger],
    };
    Ok(PipelineRun {
        tweets,
        logs: filtered.kept,
        rejects,
        ledger,
    })
}
