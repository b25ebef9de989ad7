//! Layered configuration: defaults, then a `key = value` file, then
//! `SLEEPLOG_*` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use sha2::{Digest, Sha256};
use sleeplog_core::analytics::{AnalysisConfig, PresleepConfig, PresleepDenominator, TweetsPerDayMode};
use sleeplog_core::geo::GeocoderConfig;
use sleeplog_core::grammar::AnchorPolicy;
use sleeplog_core::par::Execution;
use sleeplog_core::pipeline::{FilterConfig, PipelineConfig};
use sleeplog_core::records::DedupeConfig;
use sleeplog_core::stats::MwuMode;
use sleeplog_core::synth::SynthConfig;

use crate::CliError;

/// Every recognised key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("analysis.activity_countries", "JP,US"),
    ("analysis.country_a", "JP"),
    ("analysis.country_b", "US"),
    ("analysis.mwu_mode", "auto"),
    ("analysis.presleep_denominator", "per-night"),
    ("analysis.presleep_window_minutes", "120"),
    ("analysis.robustness_min_logs", "5"),
    ("analysis.tweets_per_day", "profile"),
    ("anchor.slack_minutes", "15"),
    ("dedupe.by_content", "true"),
    ("dedupe.by_id", "true"),
    ("execution", "parallel"),
    ("filter.max_hours", "12"),
    ("filter.min_hours", "2"),
    ("filter.require_anchor", "false"),
    ("filter.require_deep_sleep", "false"),
    ("geo.base_url", "https://nominatim.openstreetmap.org/search"),
    ("geo.cache", ""),
    ("geo.country_pointer", "/0/address/country_code"),
    ("geo.extra_params", "format=jsonv2&addressdetails=1&limit=1"),
    ("geo.lang_table", ""),
    ("geo.max_retries", "2"),
    ("geo.min_interval_ms", "1000"),
    ("geo.offline", "false"),
    ("geo.query_param", "q"),
    ("geo.timeout_secs", "10"),
    ("geo.tz_table", ""),
    ("geo.user_agent", concat!("sleeplog/", env!("CARGO_PKG_VERSION"))),
    ("synth.logs_max", "633"),
    ("synth.seed", "42"),
    ("synth.timelines", "true"),
    ("synth.users", "400"),
];

pub fn env_name(key: &str) -> String {
    format!("SLEEPLOG_{}", key.replace('.', "_").to_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

fn known(key: &str) -> Result<(), CliError> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("unknown setting `{key}`")))
    }
}

fn parse_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read config `{}`: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

impl Settings {
    pub fn load(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: Vec<(String, String)>,
    ) -> Result<Self, CliError> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            for (k, v) in parse_file(path)? {
                known(&k)?;
                map.insert(k, v);
            }
        }
        let by_env: BTreeMap<String, &str> = KEYS.iter().map(|(k, _)| (env_name(k), *k)).collect();
        for (name, v) in env {
            if let Some(k) = by_env.get(&name) {
                map.insert(k.to_string(), v);
            } else if name.starts_with("SLEEPLOG_") {
                log::debug!("ignoring unrecognised environment variable {name}");
            }
        }
        for (k, v) in flags {
            known(&k)?;
            map.insert(k, v);
        }
        Ok(Self { map })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.map.get(key).map(String::as_str).expect("registered key")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.raw(key);
        v.parse()
            .map_err(|e| CliError::Usage(format!("setting `{key}` = `{v}`: {e}")))
    }

    fn path(&self, key: &str) -> Option<&Path> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| Path::new(v))
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    /// `key=value` lines in key order.
    pub fn text(&self) -> String {
        self.map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text().as_bytes()))
    }

    pub fn execution(&self) -> Result<Execution, CliError> {
        match self.raw("execution") {
            "parallel" => Ok(Execution::Parallel),
            "sequential" => Ok(Execution::Sequential),
            other => Err(CliError::Usage(format!("execution must be parallel or sequential, not `{other}`"))),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let minutes = |key: &str| -> Result<u32, CliError> {
            let h: f64 = self.get(key)?;
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::Usage(format!("setting `{key}` must be a positive number of hours")));
            }
            Ok((h * 60.0).round() as u32)
        };
        let filter = FilterConfig {
            min_duration_minutes: minutes("filter.min_hours")?,
            max_duration_minutes: minutes("filter.max_hours")?,
            require_deep_sleep: self.get("filter.require_deep_sleep")?,
            require_anchor: self.get("filter.require_anchor")?,
        };
        filter.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(PipelineConfig {
            dedupe: DedupeConfig {
                by_id: self.get("dedupe.by_id")?,
                by_content: self.get("dedupe.by_content")?,
            },
            anchor: AnchorPolicy {
                slack_minutes: self.get("anchor.slack_minutes")?,
            },
            filter,
            execution: self.execution()?,
        })
    }

    pub fn geocoder(&self) -> Result<GeocoderConfig, CliError> {
        let extra = self
            .raw("geo.extra_params")
            .split('&')
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.to_owned(), v.to_owned()))
                    .ok_or_else(|| CliError::Usage(format!("geo.extra_params: `{p}` is not name=value")))
            })
            .collect::<Result<_, _>>()?;
        Ok(GeocoderConfig {
            base_url: self.raw("geo.base_url").to_owned(),
            query_param: self.raw("geo.query_param").to_owned(),
            extra_params: extra,
            country_pointer: self.raw("geo.country_pointer").to_owned(),
            timeout: Duration::from_secs(self.get("geo.timeout_secs")?),
            min_interval: Duration::from_millis(self.get("geo.min_interval_ms")?),
            max_retries: self.get("geo.max_retries")?,
            backoff_base: Duration::from_millis(500),
            user_agent: self.raw("geo.user_agent").to_owned(),
        })
    }

    pub fn geo_cache(&self) -> Option<&Path> {
        self.path("geo.cache")
    }

    pub fn tables(&self) -> (Option<&Path>, Option<&Path>) {
        (self.path("geo.tz_table"), self.path("geo.lang_table"))
    }

    pub fn analysis(&self) -> Result<AnalysisConfig, CliError> {
        let mwu_mode = match self.raw("analysis.mwu_mode") {
            "auto" => MwuMode::Auto,
            "exact" => MwuMode::Exact,
            "approx" => MwuMode::Approx,
            other => return Err(CliError::Usage(format!("analysis.mwu_mode must be auto, exact or approx, not `{other}`"))),
        };
        let denominator = match self.raw("analysis.presleep_denominator") {
            "per-night" => PresleepDenominator::PerNight,
            "per-day" => PresleepDenominator::PerDay,
            other => return Err(CliError::Usage(format!("analysis.presleep_denominator must be per-night or per-day, not `{other}`"))),
        };
        let tweets_per_day = match self.raw("analysis.tweets_per_day") {
            "profile" => TweetsPerDayMode::Profile,
            "observed" => TweetsPerDayMode::Observed,
            other => return Err(CliError::Usage(format!("analysis.tweets_per_day must be profile or observed, not `{other}`"))),
        };
        let min_logs: usize = self.get("analysis.robustness_min_logs")?;
        Ok(AnalysisConfig {
            mwu_mode,
            presleep: PresleepConfig {
                window_minutes: self.get("analysis.presleep_window_minutes")?,
                denominator,
            },
            tweets_per_day,
            country_a: self.raw("analysis.country_a").to_owned(),
            country_b: self.raw("analysis.country_b").to_owned(),
            activity_countries: self
                .raw("analysis.activity_countries")
                .split(',')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(String::from)
                .collect(),
            robustness_min_logs: (min_logs > 0).then_some(min_logs),
        })
    }

    pub fn synth(&self) -> Result<SynthConfig, CliError> {
        Ok(SynthConfig {
            seed: self.get("synth.seed")?,
            n_users: self.get("synth.users")?,
            logs_per_user_max: self.get("synth.logs_max")?,
            timelines: self.get("synth.timelines")?,
            ..SynthConfig::default()
        })
    }
}
