use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use sleeplog_core::analytics::{run_analyses, AnalysisInputs};
use sleeplog_core::geo::{resolve_users, CountryResolution, CountryTables, GeoCache, Geocoder, ResolutionMethod, UreqTransport};
use sleeplog_core::grammar::SleepLog;
use sleeplog_core::ledger::{summarize_funnel, PipelineLedger, RejectRecord};
use sleeplog_core::pipeline::{filter_logs, parse_stage};
use sleeplog_core::records::{self, dedupe, read_jsonl, write_jsonl, JsonlFile, RawTweet, TweetSource};
use sleeplog_core::report::{render_svg, write_file, FigureMatrix, Table};
use sleeplog_core::synth::{self, load_truth};

use crate::manifest::Manifest;
use crate::settings::Settings;
use crate::{data, CliError};

/// `dir/stem.jsonl` → `dir/stem.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            std::fs::create_dir_all(p).map_err(|e| data(format!("cannot create `{}`: {e}", p.display())))
        }
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(data)? + "\n";
    std::fs::write(path, text).map_err(|e| data(format!("cannot write `{}`: {e}", path.display())))
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("cannot read `{}`: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("`{}`: {e}", path.display())))
}

/// Reads tweets in either schema; any malformed line is an error here
/// (the ingest command is the place that tolerates them).
fn read_tweets(paths: &[PathBuf]) -> Result<Vec<RawTweet>, CliError> {
    let files: Vec<JsonlFile> = paths.iter().map(JsonlFile::new).collect();
    let sources: Vec<&dyn TweetSource> = files.iter().map(|f| f as &dyn TweetSource).collect();
    let got = records::ingest(&sources).map_err(data)?;
    if let Some(bad) = got.rejects.first() {
        return Err(data(format!(
            "malformed tweet on input line {} ({}); run `ingest` first",
            bad.seq.unwrap_or_default(),
            bad.detail.as_deref().unwrap_or(""),
        )));
    }
    Ok(got.tweets.into_iter().map(|s| s.tweet).collect())
}

fn write_rejects(path: &Path, rejects: &[RejectRecord]) -> Result<(), CliError> {
    write_jsonl(path, rejects).map_err(data)
}

fn rejects_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| sibling(out, "rejects.jsonl"))
}

fn flag(key: &str, on: bool, value: &str) -> Option<(String, String)> {
    on.then(|| (key.to_owned(), value.to_owned()))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Tweet archives (JSON Lines), read in order.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out stem>.rejects.jsonl`.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long)]
    pub no_dedupe_id: bool,
    #[arg(long)]
    pub no_dedupe_content: bool,
}

impl IngestArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        [
            flag("dedupe.by_id", self.no_dedupe_id, "false"),
            flag("dedupe.by_content", self.no_dedupe_content, "false"),
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

fn do_ingest(inputs: &[PathBuf], out: &Path, rejects: &Path, s: &Settings) -> Result<Manifest, CliError> {
    let cfg = s.pipeline()?;
    let files: Vec<JsonlFile> = inputs.iter().map(JsonlFile::new).collect();
    let sources: Vec<&dyn TweetSource> = files.iter().map(|f| f as &dyn TweetSource).collect();
    let ingested = records::ingest(&sources).map_err(data)?;
    let deduped = dedupe(ingested.tweets, cfg.dedupe);
    let mut all_rejects = ingested.rejects;
    all_rejects.extend(deduped.rejects);
    let ledger = PipelineLedger {
        stages: vec![ingested.ledger, deduped.ledger],
    };

    ensure_parent(out)?;
    write_jsonl(out, deduped.tweets.iter().map(|t| &t.tweet)).map_err(data)?;
    write_rejects(rejects, &all_rejects)?;
    let ledger_path = sibling(out, "ledger.json");
    write_json(&ledger_path, &ledger)?;

    let mut m = Manifest::new("ingest", s);
    for p in inputs {
        m.input(p)?;
    }
    m.output(out)?.output(rejects)?.output(&ledger_path)?;
    m.count("lines", ledger.stages[0].input as usize)
        .count("kept", deduped.tweets.len())
        .count("rejected", all_rejects.len());
    m.write(&sibling(out, "manifest.json"))?;
    Ok(m)
}

pub fn ingest(a: &IngestArgs, s: &Settings) -> Result<(), CliError> {
    do_ingest(&a.inputs, &a.out, &rejects_path(&a.out, &a.rejects), s)?.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Tweets, usually the output of `ingest`.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

fn do_parse(inputs: &[PathBuf], out: &Path, rejects: &Path, s: &Settings) -> Result<Manifest, CliError> {
    let cfg = s.pipeline()?;
    let tweets = read_tweets(inputs)?;
    let parsed = parse_stage(&tweets, cfg.anchor, cfg.execution);
    ensure_parent(out)?;
    write_jsonl(out, &parsed.kept).map_err(data)?;
    write_rejects(rejects, &parsed.rejects)?;
    let ledger_path = sibling(out, "ledger.json");
    write_json(&ledger_path, &PipelineLedger { stages: vec![parsed.ledger] })?;

    let mut m = Manifest::new("parse", s);
    for p in inputs {
        m.input(p)?;
    }
    m.output(out)?.output(rejects)?.output(&ledger_path)?;
    m.count("tweets", tweets.len())
        .count("logs", parsed.kept.len())
        .count("rejected", parsed.rejects.len());
    m.write(&sibling(out, "manifest.json"))?;
    Ok(m)
}

pub fn parse(a: &ParseArgs, s: &Settings) -> Result<(), CliError> {
    do_parse(&a.inputs, &a.out, &rejects_path(&a.out, &a.rejects), s)?.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Sleep logs from `parse`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    /// Shortest kept duration, inclusive (default 2).
    #[arg(long)]
    pub min_hours: Option<f64>,
    /// Longest kept duration, inclusive (default 12).
    #[arg(long)]
    pub max_hours: Option<f64>,
    #[arg(long)]
    pub require_deep_sleep: bool,
    #[arg(long)]
    pub require_anchor: bool,
}

impl FilterArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if let Some(h) = self.min_hours {
            v.push(("filter.min_hours".into(), h.to_string()));
        }
        if let Some(h) = self.max_hours {
            v.push(("filter.max_hours".into(), h.to_string()));
        }
        v.extend(flag("filter.require_deep_sleep", self.require_deep_sleep, "true"));
        v.extend(flag("filter.require_anchor", self.require_anchor, "true"));
        v
    }
}

fn do_filter(input: &Path, out: &Path, rejects: &Path, s: &Settings) -> Result<Manifest, CliError> {
    let cfg = s.pipeline()?;
    let logs: Vec<SleepLog> = read_jsonl(input).map_err(data)?;
    let n_in = logs.len();
    let filtered = filter_logs(logs, &cfg.filter, cfg.execution);
    ensure_parent(out)?;
    write_jsonl(out, &filtered.kept).map_err(data)?;
    write_rejects(rejects, &filtered.rejects)?;
    let ledger_path = sibling(out, "ledger.json");
    write_json(&ledger_path, &PipelineLedger { stages: vec![filtered.ledger.clone()] })?;

    let mut m = Manifest::new("filter", s);
    m.input(input)?;
    m.output(out)?.output(rejects)?.output(&ledger_path)?;
    m.count("logs_in", n_in)
        .count("kept", filtered.kept.len())
        .count("rejected", filtered.rejects.len())
        .count("users_kept", filtered.ledger.distinct_users as usize);
    m.write(&sibling(out, "manifest.json"))?;
    Ok(m)
}

pub fn filter(a: &FilterArgs, s: &Settings) -> Result<(), CliError> {
    do_filter(&a.input, &a.out, &rejects_path(&a.out, &a.rejects), s)?.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct GeoArgs {
    /// Tweets carrying user metadata.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Answer from tables and the cache only.
    #[arg(long)]
    pub offline: bool,
    /// Persistent geocoding cache (JSON).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Geocoder search URL.
    #[arg(long)]
    pub endpoint: Option<String>,
}

impl GeoArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = flag("geo.offline", self.offline, "true").into_iter().collect();
        if let Some(c) = &self.cache {
            v.push(("geo.cache".into(), c.display().to_string()));
        }
        if let Some(e) = &self.endpoint {
            v.push(("geo.base_url".into(), e.clone()));
        }
        v
    }
}

fn tables(s: &Settings) -> Result<CountryTables, CliError> {
    let (tz, lang) = s.tables();
    CountryTables::bundled().with_overrides(tz, lang).map_err(data)
}

fn do_geo(inputs: &[PathBuf], out: &Path, s: &Settings) -> Result<Manifest, CliError> {
    let exec = s.execution()?;
    let gcfg = s.geocoder()?;
    let tables = tables(s)?;
    let tweets = read_tweets(inputs)?;
    let offline: bool = s.get("geo.offline")?;
    let cache = match s.geo_cache() {
        Some(p) => GeoCache::load(p).map_err(data)?,
        None => GeoCache::default(),
    };
    let mut geocoder = if offline {
        Geocoder::offline(gcfg, cache)
    } else {
        let transport = UreqTransport::new(gcfg.user_agent.clone());
        Geocoder::online(gcfg, cache, Box::new(transport))
    };
    if let Some(p) = s.geo_cache() {
        geocoder = geocoder.with_cache_path(p);
    }
    let resolutions = resolve_users(&tweets, &tables, Some(&geocoder), exec);
    geocoder.persist().map_err(data)?;
    log::info!("geocoder network calls: {}", geocoder.network_calls());

    ensure_parent(out)?;
    write_jsonl(out, &resolutions).map_err(data)?;
    let mut m = Manifest::new("geo", s);
    for p in inputs {
        m.input(p)?;
    }
    m.output(out)?;
    m.count("users", resolutions.len());
    for method in [
        ResolutionMethod::Timezone,
        ResolutionMethod::GeocodedLocation,
        ResolutionMethod::LanguageProxy,
        ResolutionMethod::Unresolved,
    ] {
        let key = serde_json::to_value(method).map_err(data)?;
        let n = resolutions.iter().filter(|r| r.method == method).count();
        m.count(&key.as_str().unwrap_or_default().to_ascii_lowercase(), n);
    }
    m.write(&sibling(out, "manifest.json"))?;
    Ok(m)
}

pub fn geo(a: &GeoArgs, s: &Settings) -> Result<(), CliError> {
    do_geo(&a.inputs, &a.out, s)?.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Filtered sleep logs.
    #[arg(long)]
    pub logs: PathBuf,
    /// Tweets with user metadata (the ingested stream).
    #[arg(long, required = true, num_args = 1..)]
    pub tweets: Vec<PathBuf>,
    /// Country resolutions from `geo`; resolved offline from tables when absent.
    #[arg(long)]
    pub countries: Option<PathBuf>,
    /// General tweets per user, for the pre-sleep analysis.
    #[arg(long, num_args = 1..)]
    pub timelines: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Run every analysis (the default).
    #[arg(long)]
    pub all: bool,
}

fn do_analyze(
    logs_path: &Path,
    tweet_paths: &[PathBuf],
    countries: Option<&Path>,
    timeline_paths: &[PathBuf],
    out: &Path,
    s: &Settings,
) -> Result<Manifest, CliError> {
    let acfg = s.analysis()?;
    let logs: Vec<SleepLog> = read_jsonl(logs_path).map_err(data)?;
    let tweets = read_tweets(tweet_paths)?;
    let resolutions: Vec<CountryResolution> = match countries {
        Some(p) => read_jsonl(p).map_err(data)?,
        None => resolve_users(&tweets, &tables(s)?, None, s.execution()?),
    };
    let timelines = if timeline_paths.is_empty() {
        None
    } else {
        Some(read_tweets(timeline_paths)?)
    };
    let inputs = AnalysisInputs {
        logs: &logs,
        tweets: &tweets,
        resolutions: &resolutions,
        timelines: timelines.as_deref(),
    };
    let bundle = run_analyses(&inputs, &acfg);
    std::fs::create_dir_all(out).map_err(|e| data(format!("cannot create `{}`: {e}", out.display())))?;
    let written = bundle.write(out, s.map()).map_err(data)?;
    let cfg_path = out.join("effective_config.txt");
    std::fs::write(&cfg_path, s.text()).map_err(data)?;

    let mut m = Manifest::new("analyze", s);
    m.input(logs_path)?;
    for p in tweet_paths {
        m.input(p)?;
    }
    if let Some(p) = countries {
        m.input(p)?;
    }
    for p in timeline_paths {
        m.input(p)?;
    }
    for name in &written {
        m.output(&out.join(name))?;
    }
    m.output(&cfg_path)?;
    let users = bundle.table("users").map_or(0, |t| t.rows.len());
    m.count("logs", logs.len())
        .count("users", users)
        .count("tables", bundle.tables.len())
        .count("figures", bundle.figures.len());
    m.write(&out.join("manifest.json"))?;
    Ok(m)
}

pub fn analyze(a: &AnalyzeArgs, s: &Settings) -> Result<(), CliError> {
    if !a.all {
        log::debug!("no analysis selection given; running all");
    }
    do_analyze(&a.logs, &a.tweets, a.countries.as_deref(), &a.timelines, &a.out, s)?.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub users: Option<usize>,
    /// Upper bound on logs per user.
    #[arg(long)]
    pub logs_max: Option<usize>,
}

impl SynthArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if let Some(x) = self.seed {
            v.push(("synth.seed".into(), x.to_string()));
        }
        if let Some(x) = self.users {
            v.push(("synth.users".into(), x.to_string()));
        }
        if let Some(x) = self.logs_max {
            v.push(("synth.logs_max".into(), x.to_string()));
        }
        v
    }
}

pub fn synth(a: &SynthArgs, s: &Settings) -> Result<(), CliError> {
    let cfg = s.synth()?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus = synth::generate(&cfg, s.execution()?).map_err(data)?;
    corpus.write(&a.out).map_err(data)?;
    let mut m = Manifest::new("synth", s);
    for f in [synth::TWEETS_FILE, synth::TIMELINES_FILE, synth::TRUTH_FILE, synth::USERS_FILE, synth::CONFIG_FILE] {
        m.output(&a.out.join(f))?;
    }
    let valid = corpus.truth.iter().filter(|t| t.label == synth::Label::Valid).count();
    m.count("tweets", corpus.tweets.len())
        .count("timeline_tweets", corpus.timelines.len())
        .count("users", corpus.users.len())
        .count("valid_logs", valid);
    m.write(&a.out.join("manifest.json"))?;
    m.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `figures.json` written by `analyze`.
    #[arg(long)]
    pub figures: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(a: &ReportArgs, s: &Settings) -> Result<(), CliError> {
    let figures: Vec<FigureMatrix> = read_json(&a.figures)?;
    let mut m = Manifest::new("report", s);
    m.input(&a.figures)?;
    for f in &figures {
        let svg = render_svg(f, &s.text()).map_err(data)?;
        let path = a.out.join(format!("{}.svg", f.id));
        write_file(&path, svg.as_bytes()).map_err(data)?;
        m.output(&path)?;
    }
    m.count("figures", figures.len());
    m.write(&a.out.join("report.manifest.json"))?;
    m.print_counts();
    Ok(())
}

#[derive(Debug, Args)]
pub struct FunnelArgs {
    /// Stage ledgers in pipeline order.
    #[arg(long, required = true, num_args = 1..)]
    pub ledgers: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn do_funnel(ledgers: &[PathBuf], out: &Path, s: &Settings) -> Result<Manifest, CliError> {
    let mut all = PipelineLedger::default();
    for p in ledgers {
        all.extend(read_json(p)?);
    }
    let rows = summarize_funnel(&all).map_err(data)?;
    let mut t = Table::new("funnel", &["stage", "tweets_in", "tweets_kept", "users_kept"]);
    for r in &rows {
        t.push(vec![
            r.stage.clone(),
            r.tweets_in.to_string(),
            r.tweets_kept.to_string(),
            r.users_kept.to_string(),
        ]);
    }
    ensure_parent(out)?;
    write_file(out, &t.to_csv().map_err(data)?).map_err(data)?;
    for r in &rows {
        println!("{}: {} -> {} ({} users)", r.stage, r.tweets_in, r.tweets_kept, r.users_kept);
    }
    let mut m = Manifest::new("funnel", s);
    for p in ledgers {
        m.input(p)?;
    }
    m.output(out)?;
    m.count("stages", rows.len());
    m.write(&sibling(out, "manifest.json"))?;
    Ok(m)
}

pub fn funnel(a: &FunnelArgs, s: &Settings) -> Result<(), CliError> {
    do_funnel(&a.ledgers, &a.out, s).map(|_| ())
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Directory written by `synth`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Logs kept by the pipeline.
    #[arg(long)]
    pub kept: PathBuf,
    /// Every rejects file the pipeline wrote.
    #[arg(long, num_args = 1..)]
    pub rejects: Vec<PathBuf>,
    /// Write the full report here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn score(a: &ScoreArgs, _s: &Settings) -> Result<(), CliError> {
    let (cfg, truth, users) = load_truth(&a.truth).map_err(data)?;
    let kept: Vec<SleepLog> = read_jsonl(&a.kept).map_err(data)?;
    let mut rejects: Vec<RejectRecord> = Vec::new();
    for p in &a.rejects {
        rejects.extend(read_jsonl::<RejectRecord>(p).map_err(data)?);
    }
    let report = synth::score(&truth, &users, &cfg, &kept, &rejects).map_err(data)?;
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        write_json(out, &report)?;
    }
    for (class, c) in &report.classes {
        println!(
            "{class}: support {} predicted {} precision {} recall {}",
            c.support,
            c.predicted,
            c.precision.map_or("-".into(), |p| format!("{p:.4}")),
            c.recall.map_or("-".into(), |p| format!("{p:.4}")),
        );
    }
    println!("field_mismatches: {}", report.field_mismatches);
    println!("unaccounted: {}", report.unaccounted);
    for r in &report.recovery {
        println!("{}: planted {:.4} recovered {}", r.parameter, r.planted, r.recovered.map_or("-".into(), |x| format!("{x:.4}")));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub timelines: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// File names used by `run-all`; running the stages by hand with the same
/// names gives the same bytes.
pub const RUN_TWEETS: &str = "tweets.jsonl";
pub const RUN_LOGS: &str = "logs.jsonl";
pub const RUN_KEPT: &str = "kept.jsonl";
pub const RUN_COUNTRIES: &str = "countries.jsonl";
pub const RUN_FUNNEL: &str = "funnel.csv";
pub const RUN_REPORT: &str = "report";

pub fn run_all(a: &RunAllArgs, s: &Settings) -> Result<(), CliError> {
    let d = &a.out;
    std::fs::create_dir_all(d).map_err(|e| data(format!("cannot create `{}`: {e}", d.display())))?;
    let (tweets, logs, kept) = (d.join(RUN_TWEETS), d.join(RUN_LOGS), d.join(RUN_KEPT));
    let countries = d.join(RUN_COUNTRIES);
    let mut counts = BTreeMap::new();
    let mut stage = |m: Manifest| {
        for (k, v) in m.counts {
            counts.insert(format!("{}.{k}", m.command), v);
        }
    };
    stage(do_ingest(&a.inputs, &tweets, &sibling(&tweets, "rejects.jsonl"), s)?);
    stage(do_parse(std::slice::from_ref(&tweets), &logs, &sibling(&logs, "rejects.jsonl"), s)?);
    stage(do_filter(&logs, &kept, &sibling(&kept, "rejects.jsonl"), s)?);
    stage(do_geo(std::slice::from_ref(&tweets), &countries, s)?);
    let ledgers = [&tweets, &logs, &kept].map(|p| sibling(p, "ledger.json"));
    stage(do_funnel(&ledgers, &d.join(RUN_FUNNEL), s)?);
    stage(do_analyze(&kept, std::slice::from_ref(&tweets), Some(&countries), &a.timelines, &d.join(RUN_REPORT), s)?);

    let mut m = Manifest::new("run-all", s);
    for p in a.inputs.iter().chain(&a.timelines) {
        m.input(p)?;
    }
    for p in [&tweets, &logs, &kept, &countries, &d.join(RUN_FUNNEL)] {
        m.output(p)?;
    }
    m.counts = counts;
    m.write(&d.join("manifest.json"))?;
    m.print_counts();
    Ok(())
}
