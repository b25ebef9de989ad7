//! Country resolution from profile metadata.
//!
//! Order is fixed: time zone (offline table), then free-text location
//! (geocoder), then interface language (offline table). The first that
//! yields a country wins and the method is recorded.

mod client;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use client::{GeoCache, GeoError, Geocoder, GeocoderConfig, HttpResponse, Transport, TransportError, UreqTransport};

use crate::par::{map_ordered, Execution};
use crate::records::RawTweet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResolutionMethod {
    Timezone,
    GeocodedLocation,
    LanguageProxy,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryResolution {
    pub user_id: String,
    /// ISO 3166-1 alpha-2; present iff `method` is not `Unresolved`.
    pub country: Option<String>,
    pub method: ResolutionMethod,
    /// The metadata value that produced the answer.
    pub query_text: Option<String>,
}

impl CountryResolution {
    pub fn unresolved(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            country: None,
            method: ResolutionMethod::Unresolved,
            query_text: None,
        }
    }
}

/// Key → country code lookup loaded from `key,country` CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountryTable {
    map: HashMap<String, String>,
}

impl CountryTable {
    pub fn from_csv(data: &str) -> Result<Self, csv::Error> {
        let mut t = Self::default();
        t.extend_from_csv(data)?;
        Ok(t)
    }

    /// Adds or overrides entries.
    pub fn extend_from_csv(&mut self, data: &str) -> Result<(), csv::Error> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(data.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let (Some(k), Some(v)) = (rec.get(0), rec.get(1)) else { continue };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                continue;
            }
            if v.is_empty() {
                // an empty country removes the key (marks it ambiguous)
                self.map.remove(k);
            } else {
                self.map.insert(k.to_owned(), v.to_ascii_uppercase());
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

const BUNDLED_TZ: &str = include_str!("../../data/tz_country.csv");
const BUNDLED_LANG: &str = include_str!("../../data/lang_country.csv");

#[derive(Debug, Clone)]
pub struct CountryTables {
    pub zones: CountryTable,
    pub languages: CountryTable,
}

impl CountryTables {
    /// Tables shipped with the crate: one-country time zones and unambiguous
    /// language tags.
    pub fn bundled() -> Self {
        Self {
            zones: CountryTable::from_csv(BUNDLED_TZ).expect("bundled tz table"),
            languages: CountryTable::from_csv(BUNDLED_LANG).expect("bundled language table"),
        }
    }

    pub fn with_overrides(mut self, zones: Option<&Path>, languages: Option<&Path>) -> Result<Self, GeoError> {
        let load = |p: &Path, table: &mut CountryTable| -> Result<(), GeoError> {
            let err = |message: String| GeoError::Cache {
                path: p.display().to_string(),
                message,
            };
            let s = std::fs::read_to_string(p).map_err(|e| err(e.to_string()))?;
            table.extend_from_csv(&s).map_err(|e| err(e.to_string()))
        };
        if let Some(p) = zones {
            load(p, &mut self.zones)?;
        }
        if let Some(p) = languages {
            load(p, &mut self.languages)?;
        }
        Ok(self)
    }

    pub fn zone_country(&self, zone: &str) -> Option<&str> {
        self.zones.get(zone.trim())
    }

    /// Full tag first (`en-GB`), then the primary subtag (`ja` from `ja-JP`).
    pub fn language_country(&self, tag: &str) -> Option<&str> {
        let tag = tag.trim().to_ascii_lowercase().replace('_', "-");
        self.languages
            .get(&tag)
            .or_else(|| tag.split('-').next().and_then(|p| self.languages.get(p)))
    }
}

/// Resolves one user's country from a tweet's profile metadata.
pub fn resolve_country(tweet: &RawTweet, tables: &CountryTables, geocoder: Option<&Geocoder>) -> CountryResolution {
    let found = |country: &str, method, query: &str| CountryResolution {
        user_id: tweet.user_id.clone(),
        country: Some(country.to_owned()),
        method,
        query_text: Some(query.to_owned()),
    };
    if let Some(zone) = tweet.time_zone.as_deref() {
        if let Some(c) = tables.zone_country(zone) {
            return found(c, ResolutionMethod::Timezone, zone);
        }
    }
    if let (Some(loc), Some(g)) = (tweet.location_text.as_deref(), geocoder) {
        match g.lookup(loc) {
            Ok(Some(c)) => return found(&c, ResolutionMethod::GeocodedLocation, loc),
            Ok(None) => {}
            Err(e) => log::debug!("skipping location for {}: {e}", tweet.user_id),
        }
    }
    if let Some(lang) = tweet.interface_lang.as_deref() {
        if let Some(c) = tables.language_country(lang) {
            return found(c, ResolutionMethod::LanguageProxy, lang);
        }
    }
    CountryResolution::unresolved(&tweet.user_id)
}

/// One resolution per user, from that user's latest tweet, sorted by user id.
pub fn resolve_users(
    tweets: &[RawTweet],
    tables: &CountryTables,
    geocoder: Option<&Geocoder>,
    exec: Execution,
) -> Vec<CountryResolution> {
    let mut latest: BTreeMap<&str, &RawTweet> = BTreeMap::new();
    for t in tweets {
        let e = latest.entry(&t.user_id).or_insert(t);
        if t.created_at >= e.created_at {
            *e = t;
        }
    }
    let users: Vec<&RawTweet> = latest.into_values().collect();
    map_ordered(exec, &users, |t| resolve_country(t, tables, geocoder))
}
