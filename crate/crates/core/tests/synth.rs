use std::fs;

use sleeplog_core::grammar::Separator;
use sleeplog_core::ledger::RejectReason;
use sleeplog_core::par::Execution;
use sleeplog_core::pipeline::{run, PipelineConfig, PipelineRun};
use sleeplog_core::records::{JsonlFile, TweetSource};
use sleeplog_core::synth::*;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_users: 40,
        logs_per_user_max: 60,
        ..SynthConfig::default()
    }
}

fn pipeline(corpus: &SynthCorpus, exec: Execution) -> PipelineRun {
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path()).unwrap();
    let src = JsonlFile::new(dir.path().join(TWEETS_FILE));
    let sources: [&dyn TweetSource; 1] = [&src];
    run(
        &sources,
        &PipelineConfig {
            execution: exec,
            ..PipelineConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn same_seed_same_bytes_regardless_of_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(&small(42), Execution::Sequential).unwrap().write(a.path()).unwrap();
    generate(&small(42), Execution::Parallel).unwrap().write(b.path()).unwrap();
    for f in [TWEETS_FILE, TIMELINES_FILE, TRUTH_FILE, USERS_FILE, CONFIG_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let other = generate(&small(43), Execution::Parallel).unwrap();
    assert_ne!(other.tweets, generate(&small(42), Execution::Parallel).unwrap().tweets);
}

#[test]
fn every_tweet_has_exactly_one_truth_record() {
    let c = generate(&small(7), Execution::Parallel).unwrap();
    assert_eq!(c.tweets.len(), c.truth.len());
    for (i, (t, r)) in c.tweets.iter().zip(&c.truth).enumerate() {
        assert_eq!(r.seq, i as u64);
        assert_eq!(t.tweet_id, r.tweet_id);
        assert_eq!(r.label == Label::Valid, r.reason.is_none());
    }
    let (cfg, truth, users) = {
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        load_truth(dir.path()).unwrap()
    };
    assert_eq!(cfg, c.config);
    assert_eq!(truth, c.truth);
    assert_eq!(users, c.users);
}

#[test]
fn correct_pipeline_scores_perfectly() {
    let c = generate(&small(11), Execution::Parallel).unwrap();
    let out = pipeline(&c, Execution::Parallel);
    out.ledger.verify().unwrap();
    let s = score(&c.truth, &c.users, &c.config, &out.logs, &out.rejects).unwrap();
    for (class, cs) in &s.classes {
        assert!(cs.support > 0, "{class} never injected");
        assert_eq!(cs.precision, Some(1.0), "{class}: {cs:?}");
        assert_eq!(cs.recall, Some(1.0), "{class}: {cs:?}");
    }
    for want in ["KEPT", "NOT_SLEEP_LOG", "NON_ENGLISH_NOTATION", "TOO_SHORT", "TOO_LONG", "DUPLICATE_ID", "DUPLICATE_CONTENT"] {
        assert!(s.classes.contains_key(want), "{want}");
    }
    assert!(s.is_perfect());
}

#[test]
fn zero_injection_keeps_every_log_exactly() {
    let cfg = SynthConfig {
        injection: Injection::none(),
        ..small(5)
    };
    let c = generate(&cfg, Execution::Parallel).unwrap();
    let out = pipeline(&c, Execution::Sequential);
    assert_eq!(out.logs.len(), c.truth.len());
    let s = score(&c.truth, &c.users, &c.config, &out.logs, &out.rejects).unwrap();
    assert_eq!(s.field_mismatches, 0);
    assert!(s.is_perfect());
}

#[test]
fn dropping_dot_notation_shows_up_only_in_dot_recall() {
    let cfg = SynthConfig {
        n_users: 60,
        ..small(9)
    };
    let c = generate(&cfg, Execution::Parallel).unwrap();
    let mut out = pipeline(&c, Execution::Parallel);
    out.logs.retain(|l| l.notation.separator != Separator::Dot);
    let s = score(&c.truth, &c.users, &c.config, &out.logs, &out.rejects).unwrap();
    assert!(s.classes["KEPT"].recall.unwrap() < 1.0);
    assert_eq!(s.classes["KEPT"].precision, Some(1.0));
    for (label, recall) in &s.notation_recall {
        if label.ends_with("/DOT") {
            assert_eq!(*recall, Some(0.0), "{label}");
        } else {
            assert_eq!(*recall, Some(1.0), "{label}");
        }
    }
}

#[test]
fn foreign_output_is_fatal() {
    let c = generate(&small(3), Execution::Parallel).unwrap();
    let mut out = pipeline(&c, Execution::Parallel);
    out.logs[0].tweet_id = "999".into();
    assert_eq!(
        score(&c.truth, &c.users, &c.config, &out.logs, &out.rejects).unwrap_err(),
        ScoreError::UnknownTweet("999".into())
    );
}

#[test]
fn too_short_injection_rate_within_binomial_bounds() {
    let cfg = SynthConfig {
        n_users: 100,
        logs_per_user_max: 200,
        injection: Injection {
            too_short: 0.1,
            ..Injection::none()
        },
        timelines: false,
        ..SynthConfig::default()
    };
    let c = generate(&cfg, Execution::Parallel).unwrap();
    let n = c.truth.len() as f64;
    let k = c.truth.iter().filter(|t| t.reason == Some(RejectReason::TooShort)).count() as f64;
    let sd = (n * 0.1 * 0.9).sqrt();
    assert!((k - 0.1 * n).abs() <= 3.0 * sd, "{k} of {n}");
}

#[test]
fn planted_jp_mean_within_clt_bound() {
    let mut cfg = SynthConfig {
        n_users: 120,
        logs_per_user_max: 200,
        duration_sd_between: 0.0,
        planted: Planted::none(),
        injection: Injection::none(),
        timelines: false,
        ..SynthConfig::default()
    };
    cfg.seed = 2024;
    let c = generate(&cfg, Execution::Parallel).unwrap();
    let jp: std::collections::HashSet<&str> =
        c.users.iter().filter(|u| u.country == "JP").map(|u| u.user_id.as_str()).collect();
    let d: Vec<f64> = c
        .truth
        .iter()
        .filter(|t| jp.contains(t.user_id.as_str()))
        .map(|t| t.true_fields.as_ref().unwrap().duration_minutes as f64)
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    assert!((mean - 337.0).abs() <= 3.0 * 60.0 / (d.len() as f64).sqrt(), "{mean} over {}", d.len());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small(1);
    cfg.injection.spam = 1.5;
    assert!(generate(&cfg, Execution::Sequential).is_err());
    let mut cfg = small(1);
    cfg.start_mixture.night = 0.5;
    assert!(generate(&cfg, Execution::Sequential).is_err());
}
