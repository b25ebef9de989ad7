//! Sequential vs parallel throughput of the data-parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sleeplog_core::grammar::AnchorPolicy;
use sleeplog_core::par::Execution;
use sleeplog_core::pipeline::{filter_logs, parse_stage, FilterConfig};
use sleeplog_core::synth::{generate, SynthConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn corpus() -> SynthConfig {
    SynthConfig {
        n_users: 200,
        logs_per_user_max: 200,
        timelines: false,
        ..SynthConfig::default()
    }
}

fn parse(c: &mut Criterion) {
    let tweets = generate(&corpus(), Execution::Parallel).unwrap().tweets;
    let mut g = c.benchmark_group("parse_stage");
    g.throughput(Throughput::Elements(tweets.len() as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| parse_stage(black_box(&tweets), AnchorPolicy::default(), exec))
        });
    }
    g.finish();
}

fn filter(c: &mut Criterion) {
    let tweets = generate(&corpus(), Execution::Parallel).unwrap().tweets;
    let logs = parse_stage(&tweets, AnchorPolicy::default(), Execution::Parallel).kept;
    let mut g = c.benchmark_group("filter_logs");
    g.throughput(Throughput::Elements(logs.len() as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| filter_logs(black_box(logs.clone()), &FilterConfig::default(), exec))
        });
    }
    g.finish();
}

fn synth(c: &mut Criterion) {
    let cfg = SynthConfig {
        n_users: 100,
        ..corpus()
    };
    let mut g = c.benchmark_group("synth_generate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate(black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, parse, filter, synth);
criterion_main!(benches);
