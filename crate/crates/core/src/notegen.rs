//! Synthetic analyst-note corpus.
//!
//! Every note is exactly four sentences. Tickers are drawn by market-cap
//! weight, extra tickers lean toward the primary ticker's sector, and each
//! ticker and concept is surfaced verbatim in the text so the query-side
//! extractors recover the ground truth exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::universe::{ConceptEntry, UniverseConfig};

pub const CORPUS_FORMAT: &str = "caisson-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

/// A numeric figure quoted in a note, kept for grounding answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    pub ticker: Option<String>,
    pub concept: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub text: String,
    /// First-drawn ticker; its sector is the note's sector.
    pub primary: String,
    pub ticker_counts: BTreeMap<String, u32>,
    pub concepts: BTreeSet<String>,
    pub sentiment: Sentiment,
    pub used_synonyms: bool,
    pub figures: Vec<Figure>,
}

impl Note {
    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.ticker_counts.keys().map(String::as_str)
    }

    /// Tickers with the primary first, then the rest in symbol order.
    pub fn ordered_tickers(&self) -> Vec<&str> {
        let mut out = vec![self.primary.as_str()];
        out.extend(self.tickers().filter(|t| *t != self.primary));
        out
    }

    /// First figure quoted for `concept`, preferring one attributed to `ticker`.
    pub fn figure_for(&self, ticker: &str, concept: &str) -> Option<f64> {
        self.figures
            .iter()
            .find(|f| f.concept == concept && f.ticker.as_deref() == Some(ticker))
            .or_else(|| self.figures.iter().find(|f| f.concept == concept))
            .map(|f| f.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteGenParams {
    /// Probabilities of 1..=4 tickers per note.
    pub ticker_count_probs: [f64; 4],
    /// Probabilities of 1..=4 concepts per note.
    pub concept_count_probs: [f64; 4],
    /// Chance that the primary ticker is mentioned twice.
    pub double_mention_prob: f64,
    /// Chance that a note phrases its concepts through synonyms.
    pub synonym_rate: f64,
    /// Chance that each additional ticker comes from the primary's sector.
    pub sector_affinity: f64,
}

impl Default for NoteGenParams {
    fn default() -> Self {
        Self {
            ticker_count_probs: [0.45, 0.30, 0.15, 0.10],
            concept_count_probs: [0.40, 0.30, 0.20, 0.10],
            double_mention_prob: 0.3,
            synonym_rate: 0.275,
            sector_affinity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub seed: u64,
    pub universe_hash: String,
    pub note_count: usize,
    pub ticker_count_histogram: BTreeMap<usize, usize>,
    pub concept_count_histogram: BTreeMap<usize, usize>,
    pub synonym_usage_rate: f64,
    pub sector_share: BTreeMap<String, f64>,
    pub params: NoteGenParams,
}

struct Metric {
    noun: &'static str,
    low: f64,
    high: f64,
    unit: &'static str,
}

/// Per-concept figure quoted alongside a concept mention.
fn metric_for(concept: &str) -> Metric {
    let (noun, low, high, unit) = match concept {
        "Earnings beat" => ("the quarterly upside versus estimates", 1.0, 15.0, "%"),
        "Earnings miss" => ("the quarterly shortfall versus estimates", 1.0, 12.0, "%"),
        "Revenue growth" => ("the annual top-line change", 2.0, 25.0, "%"),
        "Market share gain" => ("the market share increase", 0.1, 20.0, "%"),
        "Market share loss" => ("the market share decline", 0.1, 15.0, "%"),
        "Technological disruption" => ("revenue exposure to new platforms", 5.0, 60.0, "%"),
        "Price target increase" => ("the implied upside to the new target", 5.0, 40.0, "%"),
        "Price target decrease" => ("the cut to the prior target", 5.0, 35.0, "%"),
        "Product launch" => ("the expected contribution from new offerings", 1.0, 20.0, "%"),
        "Fair value" => ("the discount to estimated worth", 1.0, 40.0, "%"),
        "Industry rivalry" => ("the pricing headwind", 1.0, 15.0, "%"),
        "Profit margin expansion" => ("the operating margin", 10.0, 45.0, "%"),
        "Profit margin compression" => ("the gross margin", 10.0, 45.0, "%"),
        "Upward revision" => ("the increase in consensus forecasts", 1.0, 20.0, "%"),
        "Downward revision" => ("the reduction in consensus forecasts", 1.0, 20.0, "%"),
        "Dividend increase" => ("the payout growth", 2.0, 15.0, "%"),
        "Share buyback" => ("the share count reduction", 1.0, 8.0, "%"),
        "Regulatory risk" => ("the revenue at risk", 1.0, 25.0, "%"),
        "Supply chain disruption" => ("the delivery delay impact", 1.0, 20.0, "%"),
        "Cost reduction" => ("the targeted expense savings", 2.0, 15.0, "%"),
        "Merger and acquisition" => ("the deal premium", 10.0, 45.0, "%"),
        "Management change" => ("the stock move on the announcement", 1.0, 12.0, "%"),
        "Credit rating upgrade" => ("the spread tightening", 0.1, 1.5, "%"),
        "Capital spending increase" => ("the capital budget growth", 5.0, 40.0, "%"),
        _ => ("the reported change", 1.0, 20.0, "%"),
    };
    Metric {
        noun,
        low,
        high,
        unit,
    }
}

/// True when a larger figure for `concept` is the better outcome.
pub fn higher_is_better(concept: &str) -> bool {
    !matches!(
        concept,
        "Earnings miss"
            | "Market share loss"
            | "Price target decrease"
            | "Industry rivalry"
            | "Downward revision"
            | "Regulatory risk"
            | "Supply chain disruption"
    )
}

/// Midpoint of the figure range quoted for `concept`.
pub fn metric_midpoint(concept: &str) -> f64 {
    let m = metric_for(concept);
    0.5 * (m.low + m.high)
}

// {t} ticker, {p} concept phrase, {m} metric noun, {v} value.
const POSITIVE_FRAMES: [&str; 3] = [
    "{t} has drawn attention for {p}, with {m} at {v} over the past year.",
    "Recent data shows {t} benefiting from {p}, lifting {m} to {v}.",
    "Analysts highlight {p} at {t}, where {m} reached {v}.",
];
const NEUTRAL_FRAMES: [&str; 3] = [
    "{t} reported {p}, with {m} at {v} this quarter.",
    "Coverage of {t} notes {p}, as {m} came in at {v}.",
    "For {t}, {p} remains in focus with {m} near {v}.",
];
const NEGATIVE_FRAMES: [&str; 3] = [
    "{t} is contending with {p}, with {m} at {v}, clouding its outlook.",
    "Investors worry about {p} at {t} as {m} sits at {v}.",
    "{t} faces questions over {p}, and {m} stands at {v}.",
];
const SECTOR_FRAMES: [&str; 3] = [
    "Across the sector, {p} is shaping sentiment, with {m} averaging {v}.",
    "Peers are also watching {p}, where {m} is near {v}.",
    "Market observers link {p} to broader dynamics, with {m} around {v}.",
];
const PAIR_FRAMES: [&str; 2] = [
    "{t} and {u} both show {p}, with {m} at {v}.",
    "Both {t} and {u} are tied to {p}, as {m} reached {v}.",
];

#[cfg(test)]
fn all_frames() -> impl Iterator<Item = &'static str> {
    POSITIVE_FRAMES
        .iter()
        .chain(&NEUTRAL_FRAMES)
        .chain(&NEGATIVE_FRAMES)
        .chain(&SECTOR_FRAMES)
        .chain(&PAIR_FRAMES)
        .copied()
}

pub struct RenderedNote {
    pub text: String,
    pub figures: Vec<Figure>,
}

/// Renders a four-sentence note.
///
/// `tickers` carries `(symbol, mentions)` with the primary first; every
/// mention becomes a verbatim occurrence in the text. Sentence `i` discusses
/// `concepts[i % len]`, so all concepts are surfaced.
pub fn render_note<R: Rng + ?Sized>(
    tickers: &[(String, u32)],
    concepts: &[&ConceptEntry],
    sentiment: Sentiment,
    use_synonyms: bool,
    rng: &mut R,
) -> Result<RenderedNote> {
    if !(1..=4).contains(&tickers.len()) {
        return Err(Error::Validation("a note names 1 to 4 tickers".into()));
    }
    if !(1..=4).contains(&concepts.len()) {
        return Err(Error::Validation("a note covers 1 to 4 concepts".into()));
    }

    let mut mentions: Vec<&str> = Vec::new();
    for (s, n) in tickers {
        if *n == 0 {
            return Err(Error::Validation(format!("ticker `{s}` has zero mentions")));
        }
        mentions.push(s);
    }
    for (s, n) in tickers {
        for _ in 1..*n {
            mentions.push(s);
        }
    }
    if mentions.len() > 5 {
        return Err(Error::Validation("at most five ticker mentions fit in a note".into()));
    }

    let family: &[&str] = match sentiment {
        Sentiment::Positive => &POSITIVE_FRAMES,
        Sentiment::Neutral => &NEUTRAL_FRAMES,
        Sentiment::Negative => &NEGATIVE_FRAMES,
    };

    let mut sentences = Vec::with_capacity(4);
    let mut figures = Vec::with_capacity(4);
    for i in 0..4 {
        let concept = concepts[i % concepts.len()];
        let phrase = if use_synonyms {
            concept
                .synonyms
                .choose(rng)
                .expect("validated concepts have synonyms")
                .to_lowercase()
        } else {
            concept.name.to_lowercase()
        };
        let metric = metric_for(&concept.name);
        let value = (rng.random_range(metric.low..=metric.high) * 10.0).round() / 10.0;
        let shown = format!("{value:.1}{}", metric.unit);

        let (frame, subject, partner) = match (mentions.len(), i) {
            (5, 3) => (*PAIR_FRAMES.choose(rng).unwrap(), Some(mentions[3]), Some(mentions[4])),
            (m, i) if i < m => (*family.choose(rng).unwrap(), Some(mentions[i]), None),
            _ => (*SECTOR_FRAMES.choose(rng).unwrap(), None, None),
        };
        let mut s = frame
            .replace("{p}", &phrase)
            .replace("{m}", metric.noun)
            .replace("{v}", &shown);
        if let Some(t) = subject {
            s = s.replace("{t}", t);
        }
        if let Some(u) = partner {
            s = s.replace("{u}", u);
        }
        sentences.push(s);
        figures.push(Figure {
            ticker: subject.map(str::to_string),
            concept: concept.name.clone(),
            value,
        });
        if let Some(u) = partner {
            figures.push(Figure {
                ticker: Some(u.to_string()),
                concept: concept.name.clone(),
                value,
            });
        }
    }
    Ok(RenderedNote {
        text: sentences.join(" "),
        figures,
    })
}

fn pick_count<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> usize {
    let choices = [1usize, 2, 3, 4];
    *choices
        .choose_weighted(rng, |c| probs[c - 1])
        .expect("count probabilities are positive")
}

fn validate_probs(name: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || probs.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Validation(format!("{name} must be non-negative with a positive sum")));
    }
    Ok(())
}

/// Generates `n` notes; identical `(universe, n, seed, params)` give identical corpora.
pub fn generate_corpus(
    universe: &UniverseConfig,
    n: usize,
    seed: u64,
    params: &NoteGenParams,
) -> Result<(Vec<Note>, CorpusManifest)> {
    if n == 0 {
        return Err(Error::Validation("note count must be at least 1".into()));
    }
    if universe.tickers.len() < 4 {
        return Err(Error::Validation(
            "universe needs at least 4 tickers to build multi-ticker notes".into(),
        ));
    }
    if universe.concepts.len() < 4 {
        return Err(Error::Validation(
            "dictionary needs at least 4 concepts to build multi-concept notes".into(),
        ));
    }
    validate_probs("ticker_count_probs", &params.ticker_count_probs)?;
    validate_probs("concept_count_probs", &params.concept_count_probs)?;
    for (name, p) in [
        ("double_mention_prob", params.double_mention_prob),
        ("synonym_rate", params.synonym_rate),
        ("sector_affinity", params.sector_affinity),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("{name} must lie in [0, 1]")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..universe.tickers.len()).collect();
    let sectors = universe.sector_members();
    let weight = |i: &usize| universe.tickers[*i].weight;
    let width = n.to_string().len().max(6);

    let mut notes = Vec::with_capacity(n);
    let mut ticker_hist: BTreeMap<usize, usize> = (1..=4).map(|k| (k, 0)).collect();
    let mut concept_hist = ticker_hist.clone();
    let mut sector_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut synonym_notes = 0usize;

    for idx in 0..n {
        let nt = pick_count(&params.ticker_count_probs, &mut rng);
        let nc = pick_count(&params.concept_count_probs, &mut rng);

        let primary = *all.choose_weighted(&mut rng, weight).expect("weights positive");
        let mut chosen = vec![primary];
        let peers = &sectors[universe.tickers[primary].sector.as_str()];
        while chosen.len() < nt {
            let same: Vec<usize> = peers.iter().copied().filter(|i| !chosen.contains(i)).collect();
            let pool: Vec<usize> = if !same.is_empty() && rng.random_bool(params.sector_affinity) {
                same
            } else {
                all.iter().copied().filter(|i| !chosen.contains(i)).collect()
            };
            chosen.push(*pool.choose_weighted(&mut rng, weight).expect("weights positive"));
        }
        let mut mentions: Vec<(String, u32)> = chosen
            .iter()
            .map(|&i| (universe.tickers[i].symbol.clone(), 1))
            .collect();
        if rng.random_bool(params.double_mention_prob) {
            mentions[0].1 = 2;
        }

        let concept_ids: Vec<usize> =
            rand::seq::index::sample(&mut rng, universe.concepts.len(), nc).into_vec();
        let concepts: Vec<&ConceptEntry> =
            concept_ids.iter().map(|&i| &universe.concepts[i]).collect();

        let sentiment = *[Sentiment::Positive, Sentiment::Neutral, Sentiment::Negative]
            .choose_weighted(&mut rng, |s| match s {
                Sentiment::Positive => 0.45,
                Sentiment::Neutral => 0.35,
                Sentiment::Negative => 0.20,
            })
            .expect("weights positive");
        let used_synonyms = rng.random_bool(params.synonym_rate);

        let rendered = render_note(&mentions, &concepts, sentiment, used_synonyms, &mut rng)?;

        *ticker_hist.entry(nt).or_default() += 1;
        *concept_hist.entry(nc).or_default() += 1;
        *sector_counts
            .entry(universe.tickers[primary].sector.clone())
            .or_default() += 1;
        synonym_notes += used_synonyms as usize;

        notes.push(Note {
            id: format!("note-{idx:0width$}"),
            text: rendered.text,
            primary: mentions[0].0.clone(),
            ticker_counts: mentions.into_iter().collect(),
            concepts: concepts.iter().map(|c| c.name.clone()).collect(),
            sentiment,
            used_synonyms,
            figures: rendered.figures,
        });
    }

    let manifest = CorpusManifest {
        format_version: CORPUS_VERSION,
        seed,
        universe_hash: universe.content_hash(),
        note_count: n,
        ticker_count_histogram: ticker_hist,
        concept_count_histogram: concept_hist,
        synonym_usage_rate: synonym_notes as f64 / n as f64,
        sector_share: sector_counts
            .into_iter()
            .map(|(s, c)| (s, c as f64 / n as f64))
            .collect(),
        params: params.clone(),
    };
    Ok((notes, manifest))
}
