//! Ticker universe and concept dictionary.
//!
//! Both are loaded from one TOML file with top-level keys `sectors`,
//! `tickers` (`symbol`, `sector`, `market_cap`) and `concepts` (`name`,
//! `synonyms`). Sampling weights are derived from market caps at load time
//! and are not part of the file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DEFAULT_UNIVERSE: &str = include_str!("../data/universe.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct TickerInfo {
    pub symbol: String,
    pub sector: String,
    /// Market capitalization in USD.
    pub market_cap: f64,
    /// Sampling weight, proportional to market cap; weights sum to one.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub name: String,
    pub synonyms: Vec<String>,
}

impl ConceptEntry {
    /// Canonical name followed by every synonym.
    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TickerRecord {
    symbol: String,
    sector: String,
    market_cap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UniverseFile {
    sectors: Vec<String>,
    tickers: Vec<TickerRecord>,
    concepts: Vec<ConceptEntry>,
}

/// Validated, immutable universe configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseConfig {
    pub sectors: Vec<String>,
    pub tickers: Vec<TickerInfo>,
    pub concepts: Vec<ConceptEntry>,
    by_symbol: HashMap<String, usize>,
    by_concept: HashMap<String, usize>,
}

impl UniverseConfig {
    /// The universe shipped with the crate: 120 tickers, 11 sectors, 24 concepts.
    pub fn default_universe() -> Self {
        Self::from_toml_str(DEFAULT_UNIVERSE).expect("shipped universe is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: UniverseFile =
            toml::from_str(text).map_err(|e| Error::parse("universe config", e))?;
        Self::from_file(file)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("universe serializes")
    }

    /// SHA-256 over the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn ticker(&self, symbol: &str) -> Result<&TickerInfo> {
        self.by_symbol
            .get(symbol)
            .map(|&i| &self.tickers[i])
            .ok_or_else(|| Error::UnknownTicker(symbol.to_string()))
    }

    pub fn ticker_index(&self, symbol: &str) -> Option<usize> {
        self.by_symbol.get(symbol).copied()
    }

    pub fn contains_ticker(&self, symbol: &str) -> bool {
        self.by_symbol.contains_key(symbol)
    }

    pub fn sector_of(&self, symbol: &str) -> Result<&str> {
        self.ticker(symbol).map(|t| t.sector.as_str())
    }

    pub fn concept(&self, name: &str) -> Result<&ConceptEntry> {
        self.concept_index(name)
            .map(|i| &self.concepts[i])
            .ok_or_else(|| Error::UnknownConcept(name.to_string()))
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.by_concept.get(name).copied()
    }

    /// Ticker indices grouped by sector, in universe order.
    pub fn sector_members(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.tickers.iter().enumerate() {
            out.entry(t.sector.as_str()).or_default().push(i);
        }
        out
    }

    fn to_file(&self) -> UniverseFile {
        UniverseFile {
            sectors: self.sectors.clone(),
            tickers: self
                .tickers
                .iter()
                .map(|t| TickerRecord {
                    symbol: t.symbol.clone(),
                    sector: t.sector.clone(),
                    market_cap: t.market_cap,
                })
                .collect(),
            concepts: self.concepts.clone(),
        }
    }

    fn from_file(file: UniverseFile) -> Result<Self> {
        if file.sectors.is_empty() {
            return Err(Error::Validation("no sectors defined".into()));
        }
        let mut sector_set = HashSet::new();
        for s in &file.sectors {
            if !sector_set.insert(s.as_str()) {
                return Err(Error::Validation(format!("duplicate sector `{s}`")));
            }
        }
        if file.tickers.is_empty() {
            return Err(Error::Validation("no tickers defined".into()));
        }

        let mut by_symbol = HashMap::new();
        for (i, t) in file.tickers.iter().enumerate() {
            if !is_symbol(&t.symbol) {
                return Err(Error::Validation(format!(
                    "ticker `{}`: symbol must be 1-5 uppercase ASCII letters",
                    t.symbol
                )));
            }
            if by_symbol.insert(t.symbol.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate ticker `{}`", t.symbol)));
            }
            if !sector_set.contains(t.sector.as_str()) {
                return Err(Error::Validation(format!(
                    "ticker `{}`: unknown sector `{}`",
                    t.symbol, t.sector
                )));
            }
            if !(t.market_cap.is_finite() && t.market_cap > 0.0) {
                return Err(Error::Validation(format!(
                    "ticker `{}`: market_cap must be positive",
                    t.symbol
                )));
            }
        }

        if file.concepts.is_empty() {
            return Err(Error::Validation("no concepts defined".into()));
        }
        let mut by_concept = HashMap::new();
        let mut phrase_owner: HashMap<String, &str> = HashMap::new();
        for (i, c) in file.concepts.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::Validation("concept with empty name".into()));
            }
            if c.synonyms.is_empty() {
                return Err(Error::Validation(format!(
                    "concept `{}`: synonym list is empty",
                    c.name
                )));
            }
            if by_concept.insert(c.name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate concept `{}`", c.name)));
            }
            for form in c.surface_forms() {
                let key = crate::text::normalize_phrase(form);
                if key.is_empty() {
                    return Err(Error::Validation(format!(
                        "concept `{}`: empty surface form",
                        c.name
                    )));
                }
                match phrase_owner.get(&key) {
                    Some(owner) if *owner != c.name => {
                        return Err(Error::Validation(format!(
                            "phrase `{form}` maps to both `{owner}` and `{}`",
                            c.name
                        )));
                    }
                    _ => {
                        phrase_owner.insert(key, &c.name);
                    }
                }
            }
        }

        let total: f64 = file.tickers.iter().map(|t| t.market_cap).sum();
        let tickers = file
            .tickers
            .into_iter()
            .map(|t| TickerInfo {
                weight: t.market_cap / total,
                symbol: t.symbol,
                sector: t.sector,
                market_cap: t.market_cap,
            })
            .collect();

        Ok(Self {
            sectors: file.sectors,
            tickers,
            concepts: file.concepts,
            by_symbol,
            by_concept,
        })
    }
}

/// `[A-Z]{1,5}`
pub fn is_symbol(s: &str) -> bool {
    (1..=5).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_uppercase())
}

pub fn load_universe(path: impl AsRef<Path>) -> Result<UniverseConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    UniverseConfig::from_toml_str(&text)
}

pub fn sector_of<'a>(symbol: &str, universe: &'a UniverseConfig) -> Result<&'a str> {
    universe.sector_of(symbol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
sectors = ["Technology", "Energy"]

[[tickers]]
symbol = "AAPL"
sector = "Technology"
market_cap = 3.0e12

[[tickers]]
symbol = "XOM"
sector = "Energy"
market_cap = 1.0e12

[[concepts]]
name = "Revenue growth"
synonyms = ["sales growth"]
"#;

    #[test]
    fn shipped_default_has_expected_shape() {
        let u = UniverseConfig::default_universe();
        assert_eq!(u.concepts.len(), 24);
        assert_eq!(u.sectors.len(), 11);
        assert_eq!(u.tickers.len(), 120);
        let sum: f64 = u.tickers.iter().map(|t| t.weight).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(u.tickers.iter().all(|t| t.weight > 0.0));
    }

    #[test]
    fn sector_lookup() {
        let u = UniverseConfig::default_universe();
        assert_eq!(u.sector_of("AAPL").unwrap(), "Technology");
        assert!(matches!(u.sector_of("ZZZZ"), Err(Error::UnknownTicker(_))));
        for t in &u.tickers {
            assert!(u.sectors.contains(&u.sector_of(&t.symbol).unwrap().to_string()));
        }
    }

    #[test]
    fn weights_follow_market_cap() {
        let u = UniverseConfig::from_toml_str(SMALL).unwrap();
        assert!((u.ticker("AAPL").unwrap().weight - 0.75).abs() < 1e-12);
        assert!((u.ticker("XOM").unwrap().weight - 0.25).abs() < 1e-12);
    }

    #[test]
    fn duplicate_ticker_rejected() {
        let text = SMALL.replace("\"XOM\"", "\"AAPL\"");
        let err = UniverseConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("AAPL"), "{err}");
    }

    #[test]
    fn unknown_sector_rejected() {
        let text = SMALL.replace("sector = \"Energy\"", "sector = \"Oil\"");
        let err = UniverseConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("Oil"), "{err}");
    }

    #[test]
    fn empty_synonyms_rejected() {
        let text = SMALL.replace("[\"sales growth\"]", "[]");
        let err = UniverseConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("Revenue growth"), "{err}");
    }

    #[test]
    fn shared_synonym_rejected() {
        let text = format!(
            "{SMALL}\n[[concepts]]\nname = \"Sales momentum\"\nsynonyms = [\"Sales Growth\"]\n"
        );
        let err = UniverseConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn bad_symbol_rejected() {
        let text = SMALL.replace("\"XOM\"", "\"xom\"");
        assert!(UniverseConfig::from_toml_str(&text).is_err());
        let text = SMALL.replace("\"XOM\"", "\"TOOLONG\"");
        assert!(UniverseConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn malformed_file_is_parse_error() {
        let err = UniverseConfig::from_toml_str("sectors = [").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn round_trip_is_stable() {
        let u = UniverseConfig::default_universe();
        let again = UniverseConfig::from_toml_str(&u.to_toml_string()).unwrap();
        assert_eq!(u, again);
        assert_eq!(u.content_hash(), again.content_hash());
    }
}
