//! Per-stage accounting of records kept and rejected.
//!
//! Every pipeline stage produces one [`StageLedger`]. For each stage
//! `input == kept + sum(rejected_by_reason)`, and the `kept` count of a stage
//! is the `input` count of the next one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a record left the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    MalformedJson,
    DuplicateId,
    DuplicateContent,
    NotSleepLog,
    NonEnglishNotation,
    UnparseableTime,
    MissingFields,
    TooShort,
    TooLong,
    MissingDeepSleep,
    AnchorUnresolved,
}

impl RejectReason {
    pub const ALL: [RejectReason; 11] = [
        RejectReason::MalformedJson,
        RejectReason::DuplicateId,
        RejectReason::DuplicateContent,
        RejectReason::NotSleepLog,
        RejectReason::NonEnglishNotation,
        RejectReason::UnparseableTime,
        RejectReason::MissingFields,
        RejectReason::TooShort,
        RejectReason::TooLong,
        RejectReason::MissingDeepSleep,
        RejectReason::AnchorUnresolved,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MalformedJson => "MALFORMED_JSON",
            RejectReason::DuplicateId => "DUPLICATE_ID",
            RejectReason::DuplicateContent => "DUPLICATE_CONTENT",
            RejectReason::NotSleepLog => "NOT_SLEEP_LOG",
            RejectReason::NonEnglishNotation => "NON_ENGLISH_NOTATION",
            RejectReason::UnparseableTime => "UNPARSEABLE_TIME",
            RejectReason::MissingFields => "MISSING_FIELDS",
            RejectReason::TooShort => "TOO_SHORT",
            RejectReason::TooLong => "TOO_LONG",
            RejectReason::MissingDeepSleep => "MISSING_DEEP_SLEEP",
            RejectReason::AnchorUnresolved => "ANCHOR_UNRESOLVED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Counts for one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLedger {
    pub stage: String,
    pub input: u64,
    pub kept: u64,
    pub rejected_by_reason: BTreeMap<RejectReason, u64>,
    /// Distinct users among the records this stage kept.
    pub distinct_users: u64,
}

impl StageLedger {
    pub fn rejected(&self) -> u64 {
        self.rejected_by_reason.values().sum()
    }

    pub fn is_conserved(&self) -> bool {
        self.input == self.kept + self.rejected()
    }
}

/// Ordered list of stage ledgers for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineLedger {
    pub stages: Vec<StageLedger>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("stage `{stage}` does not conserve records: input {input} != kept {kept} + rejected {rejected}")]
    NotConserved {
        stage: String,
        input: u64,
        kept: u64,
        rejected: u64,
    },
    #[error("stage `{next}` has input {input} but previous stage `{prev}` kept {kept}")]
    BrokenChain {
        prev: String,
        next: String,
        kept: u64,
        input: u64,
    },
}

impl PipelineLedger {
    pub fn push(&mut self, stage: StageLedger) {
        self.stages.push(stage);
    }

    pub fn extend(&mut self, other: PipelineLedger) {
        self.stages.extend(other.stages);
    }

    pub fn stage(&self, name: &str) -> Option<&StageLedger> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Checks per-stage conservation and the kept→input chain.
    pub fn verify(&self) -> Result<(), LedgerError> {
        for s in &self.stages {
            if !s.is_conserved() {
                return Err(LedgerError::NotConserved {
                    stage: s.stage.clone(),
                    input: s.input,
                    kept: s.kept,
                    rejected: s.rejected(),
                });
            }
        }
        for pair in self.stages.windows(2) {
            if pair[0].kept != pair[1].input {
                return Err(LedgerError::BrokenChain {
                    prev: pair[0].stage.clone(),
                    next: pair[1].stage.clone(),
                    kept: pair[0].kept,
                    input: pair[1].input,
                });
            }
        }
        Ok(())
    }
}

/// Accumulator used while a stage runs. Tallies merge associatively, so
/// parallel workers can each fill one and fold them in sequence order.
#[derive(Debug, Clone, Default)]
pub struct StageTally {
    input: u64,
    kept: u64,
    rejected: BTreeMap<RejectReason, u64>,
    users: BTreeSet<String>,
}

impl StageTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn keep(&mut self, user_id: &str) {
        self.input += 1;
        self.kept += 1;
        if !self.users.contains(user_id) {
            self.users.insert(user_id.to_owned());
        }
    }

    pub fn reject(&mut self, reason: RejectReason) {
        self.input += 1;
        *self.rejected.entry(reason).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: StageTally) {
        self.input += other.input;
        self.kept += other.kept;
        for (reason, n) in other.rejected {
            *self.rejected.entry(reason).or_insert(0) += n;
        }
        self.users.extend(other.users);
    }

    pub fn finish(self, stage: impl Into<String>) -> StageLedger {
        StageLedger {
            stage: stage.into(),
            input: self.input,
            kept: self.kept,
            rejected_by_reason: self.rejected,
            distinct_users: self.users.len() as u64,
        }
    }
}

/// One line of a rejects file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub stage: String,
    pub reason: RejectReason,
    /// Input sequence number (line index across all ingested files), when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tweet_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    /// Character range `[start, end)` of the offending text, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// One row of the funnel report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunnelRow {
    pub stage: String,
    pub tweets_in: u64,
    pub tweets_kept: u64,
    pub users_kept: u64,
}

/// Collapses the ledgers into funnel rows, failing if the accounting is
/// inconsistent (which is always a pipeline bug).
pub fn summarize_funnel(ledger: &PipelineLedger) -> Result<Vec<FunnelRow>, LedgerError> {
    ledger.verify()?;
    Ok(ledger
        .stages
        .iter()
        .map(|s| FunnelRow {
            stage: s.stage.clone(),
            tweets_in: s.input,
            tweets_kept: s.kept,
            users_kept: s.distinct_users,
        })
        .collect())
}
