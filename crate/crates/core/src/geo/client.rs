//! Rate-limited, cached free-text geocoding over HTTP.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("geocoding query is empty")]
    EmptyQuery,
    #[error("geocode cache `{path}`: {message}")]
    Cache { path: String, message: String },
    #[error("invalid geocoder base url `{0}`")]
    BadUrl(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Issues one HTTP GET. Implementations must be shareable across threads.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, timeout: Duration) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTP transport.
pub struct UreqTransport {
    user_agent: String,
}

impl UreqTransport {
    pub fn new(user_agent: impl Into<String>) -> Self {
        Self {
            user_agent: user_agent.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .get(url)
            .header("User-Agent", &self.user_agent)
            .call()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Other(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Endpoint-agnostic geocoder settings. The defaults target a public
/// Nominatim-style search endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocoderConfig {
    pub base_url: String,
    /// Name of the query parameter carrying the free text.
    pub query_param: String,
    /// Fixed parameters asking for structured output.
    pub extra_params: Vec<(String, String)>,
    /// JSON pointer to the country code in the response body.
    pub country_pointer: String,
    pub timeout: Duration,
    pub min_interval: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub user_agent: String,
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://nominatim.openstreetmap.org/search".into(),
            query_param: "q".into(),
            extra_params: vec![
                ("format".into(), "jsonv2".into()),
                ("addressdetails".into(), "1".into()),
                ("limit".into(), "1".into()),
            ],
            country_pointer: "/0/address/country_code".into(),
            timeout: Duration::from_secs(10),
            min_interval: Duration::from_secs(1),
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
            user_agent: concat!("sleeplog/", env!("CARGO_PKG_VERSION")).into(),
        }
    }
}

impl GeocoderConfig {
    pub fn request_url(&self, query: &str) -> Result<String, GeoError> {
        let mut params: Vec<(&str, &str)> = vec![(self.query_param.as_str(), query)];
        params.extend(self.extra_params.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        url::Url::parse_with_params(&self.base_url, params)
            .map(String::from)
            .map_err(|_| GeoError::BadUrl(self.base_url.clone()))
    }
}

/// Query → country (or a confirmed "no country") map, persisted as JSON.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoCache {
    pub entries: BTreeMap<String, Option<String>>,
}

impl GeoCache {
    /// Loads a cache file; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self, GeoError> {
        let err = |message: String| GeoError::Cache {
            path: path.display().to_string(),
            message,
        };
        match fs::read_to_string(path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| err(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(err(e.to_string())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), GeoError> {
        let body = serde_json::to_string_pretty(self).expect("cache serializes");
        fs::write(path, body + "\n").map_err(|e| GeoError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

struct State {
    cache: GeoCache,
    /// Queries that failed this run; not persisted, so a later run retries.
    failed: HashSet<String>,
    last_request: Option<Instant>,
    network_calls: u64,
}

/// Free-text → country lookups. All network traffic goes through one lock,
/// so concurrent callers are serialized and the minimum request interval
/// holds globally.
pub struct Geocoder {
    config: GeocoderConfig,
    transport: Option<Box<dyn Transport>>,
    cache_path: Option<PathBuf>,
    state: Mutex<State>,
}

impl Geocoder {
    pub fn online(config: GeocoderConfig, cache: GeoCache, transport: Box<dyn Transport>) -> Self {
        Self::build(config, cache, Some(transport))
    }

    /// Answers only from the cache; never touches the network.
    pub fn offline(config: GeocoderConfig, cache: GeoCache) -> Self {
        Self::build(config, cache, None)
    }

    fn build(config: GeocoderConfig, cache: GeoCache, transport: Option<Box<dyn Transport>>) -> Self {
        Self {
            config,
            transport,
            cache_path: None,
            state: Mutex::new(State {
                cache,
                failed: HashSet::new(),
                last_request: None,
                network_calls: 0,
            }),
        }
    }

    /// Remembers where [`Geocoder::persist`] writes the cache.
    pub fn with_cache_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.cache_path = Some(path.into());
        self
    }

    pub fn is_offline(&self) -> bool {
        self.transport.is_none()
    }

    pub fn network_calls(&self) -> u64 {
        self.state.lock().unwrap().network_calls
    }

    pub fn cache_snapshot(&self) -> GeoCache {
        self.state.lock().unwrap().cache.clone()
    }

    pub fn persist(&self) -> Result<(), GeoError> {
        match &self.cache_path {
            Some(p) => self.cache_snapshot().save(p),
            None => Ok(()),
        }
    }

    pub fn lookup(&self, query: &str) -> Result<Option<String>, GeoError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(GeoError::EmptyQuery);
        }
        let mut state = self.state.lock().unwrap();
        if let Some(hit) = state.cache.entries.get(query) {
            return Ok(hit.clone());
        }
        if state.failed.contains(query) {
            return Ok(None);
        }
        let Some(transport) = &self.transport else {
            return Ok(None);
        };
        let url = self.config.request_url(query)?;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
            }
            if let Some(last) = state.last_request {
                let since = last.elapsed();
                if since < self.config.min_interval {
                    thread::sleep(self.config.min_interval - since);
                }
            }
            state.last_request = Some(Instant::now());
            state.network_calls += 1;
            match transport.get(&url, self.config.timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => match extract_country(&resp.body, &self.config.country_pointer) {
                    Some(found) => {
                        state.cache.entries.insert(query.to_owned(), found.clone());
                        return Ok(found);
                    }
                    None => log::warn!("geocoder returned an unparseable body for {query:?}"),
                },
                Ok(resp) => log::warn!("geocoder returned HTTP {} for {query:?}", resp.status),
                Err(e) => log::warn!("geocoder request for {query:?} failed: {e}"),
            }
        }
        state.failed.insert(query.to_owned());
        Ok(None)
    }
}

/// `Some(Some(cc))` for a found country, `Some(None)` for a well-formed
/// answer without one, `None` when the body is not JSON.
fn extract_country(body: &str, pointer: &str) -> Option<Option<String>> {
    let v: Value = serde_json::from_str(body).ok()?;
    let code = v
        .pointer(pointer)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|c| c.len() == 2 && c.chars().all(|ch| ch.is_ascii_alphabetic()))
        .map(str::to_ascii_uppercase);
    Some(code)
}
