//! Query parsing, dual-map candidate search and weighted ranking.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embed::{
    combine_entities, concept_set_similarity, cosine, embed_concept_set, unit_counts, ConceptMatcher,
    Embedder, IdSet,
};
use crate::error::{Error, Result};
use crate::model::{Caisson, SomPath};
use crate::text;

pub const TICKER_WEIGHT: f64 = 0.6;
pub const CONCEPT_WEIGHT: f64 = 0.2;
pub const SEMANTIC_WEIGHT: f64 = 0.2;

/// Radius the search widens to when the default neighborhood is too thin.
pub const ESCALATED_RADIUS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuery {
    pub raw: String,
    pub tickers: IdSet,
    pub concepts: IdSet,
    pub text_embedding: Vec<f64>,
    pub som1_query_vec: Vec<f64>,
    pub som2_query_vec: Vec<f64>,
}

/// Symbols of the universe that occur as whole uppercase tokens.
pub fn extract_tickers(raw: &str, embedder: &Embedder<'_>) -> BTreeSet<String> {
    text::uppercase_tokens(raw)
        .filter(|t| embedder.universe.contains_ticker(t))
        .map(str::to_string)
        .collect()
}

/// Parses `raw` and builds both query vectors, mirroring how notes are
/// embedded. Tickers count once each; an empty ticker or concept set leaves
/// its segment at zero.
pub fn parse_query(
    raw: &str,
    embedder: &Embedder<'_>,
    matcher: &ConceptMatcher,
) -> Result<ParsedQuery> {
    parse_with_cache(raw, embedder, matcher, |_| None)
}

pub(crate) fn parse_with_cache<'c>(
    raw: &str,
    embedder: &Embedder<'_>,
    matcher: &ConceptMatcher,
    cached: impl Fn(&IdSet) -> Option<&'c [f64]>,
) -> Result<ParsedQuery> {
    let symbols = extract_tickers(raw, embedder);
    let tickers = embedder.ticker_set(symbols.iter().map(String::as_str))?;
    let concepts = matcher.find_set(raw);
    let text_embedding = embedder.provider.embed(raw)?;

    let entities = if tickers.is_empty() {
        vec![0.0; embedder.entity_dim()]
    } else if let Some(v) = cached(&tickers) {
        v.to_vec()
    } else {
        combine_entities(&unit_counts(symbols.iter().map(String::as_str)), embedder.tickers)?
    };
    let concept_vec = if concepts.is_empty() {
        vec![0.0; embedder.concepts.dim()]
    } else {
        embed_concept_set(&concepts, embedder.concepts)?
    };

    let mut som1_query_vec = text_embedding.clone();
    som1_query_vec.extend_from_slice(&entities);
    let mut som2_query_vec = entities;
    som2_query_vec.extend_from_slice(&concept_vec);
    Ok(ParsedQuery {
        raw: raw.to_string(),
        tickers,
        concepts,
        text_embedding,
        som1_query_vec,
        som2_query_vec,
    })
}

/// `|Tq ∩ Td| / max(|Tq|, |Td|)`; 1 when both are empty, 0 when one is.
pub fn ticker_score(query: &IdSet, doc: &IdSet) -> f64 {
    match (query.is_empty(), doc.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => query.intersection_len(doc) as f64 / query.len().max(doc.len()) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNote {
    pub note_id: String,
    pub ticker_score: f64,
    pub concept_score: f64,
    pub semantic_score: f64,
    pub final_score: f64,
    pub source_paths: Vec<SomPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub hits: Vec<ScoredNote>,
    /// Distinct candidates scored.
    pub candidates: usize,
    /// Radius actually searched, after any escalation.
    pub radius: usize,
    pub elapsed_ms: f64,
}

impl Caisson {
    pub fn parse(&self, raw: &str) -> Result<ParsedQuery> {
        parse_with_cache(raw, &self.embedder(), &self.matcher, |t| self.cached_entities(t))
    }

    /// Component and final scores of note `i` against `query`.
    pub fn score(&self, query: &ParsedQuery, i: usize) -> Result<[f64; 4]> {
        let note = &self.notes[i];
        let t = ticker_score(&query.tickers, &note.tickers);
        let c = if query.concepts.is_empty() {
            0.0
        } else {
            concept_set_similarity(&query.concepts, &note.concepts, &self.concepts.sim)?
        };
        let s = cosine(&query.text_embedding, self.text_embedding(i));
        let f = TICKER_WEIGHT * t + CONCEPT_WEIGHT * c + SEMANTIC_WEIGHT * s;
        Ok([t, c, s, f])
    }

    fn scored(&self, query: &ParsedQuery, i: usize, paths: Vec<SomPath>) -> Result<ScoredNote> {
        let [t, c, s, f] = self.score(query, i)?;
        Ok(ScoredNote {
            note_id: self.notes[i].id.clone(),
            ticker_score: t,
            concept_score: c,
            semantic_score: s,
            final_score: f,
            source_paths: paths,
        })
    }

    fn candidates(&self, query: &ParsedQuery, radius: usize) -> Result<Vec<(usize, Vec<SomPath>)>> {
        let mut order: Vec<(usize, Vec<SomPath>)> = Vec::new();
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let paths = [
            (SomPath::Som1, self.som1.neighborhood_search(&query.som1_query_vec, radius)?),
            (SomPath::Som2, self.som2.neighborhood_search(&query.som2_query_vec, radius)?),
        ];
        for (path, docs) in paths {
            for doc in docs {
                let i = self
                    .note_index(&doc.id)
                    .ok_or_else(|| Error::Validation(format!("map stores unknown note `{}`", doc.id)))?;
                match seen.get(&i) {
                    Some(&slot) => {
                        let p = &mut order[slot].1;
                        if !p.contains(&path) {
                            p.push(path);
                        }
                    }
                    None => {
                        seen.insert(i, order.len());
                        order.push((i, vec![path]));
                    }
                }
            }
        }
        Ok(order)
    }

    /// Top-`k` notes from the union of both maps' neighborhoods.
    ///
    /// When that union holds fewer than `k` notes and `radius` is below
    /// [`ESCALATED_RADIUS`], the search is repeated at that radius.
    pub fn retrieve(&self, query: &ParsedQuery, k: usize, radius: usize) -> Result<RetrievalResult> {
        let start = Instant::now();
        if !self.is_trained() {
            return Err(Error::Validation("model is not trained".into()));
        }
        if k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        let mut radius = radius;
        let mut cands = self.candidates(query, radius)?;
        if cands.len() < k && radius < ESCALATED_RADIUS {
            radius = ESCALATED_RADIUS;
            cands = self.candidates(query, radius)?;
        }
        let candidates = cands.len();
        let mut hits = cands
            .into_iter()
            .map(|(i, paths)| self.scored(query, i, paths))
            .collect::<Result<Vec<_>>>()?;
        rank(&mut hits, k);
        Ok(RetrievalResult {
            query: query.raw.clone(),
            hits,
            candidates,
            radius,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Same score over the entire corpus, without the maps.
    pub fn brute_force(&self, query: &ParsedQuery, k: usize) -> Result<Vec<ScoredNote>> {
        let mut hits = (0..self.notes.len())
            .map(|i| self.scored(query, i, Vec::new()))
            .collect::<Result<Vec<_>>>()?;
        rank(&mut hits, k);
        Ok(hits)
    }
}

/// Descending final score, ties by note id, truncated to `k`.
fn rank(hits: &mut Vec<ScoredNote>, k: usize) {
    hits.sort_by(|a, b| {
        b.final_score
            .total_cmp(&a.final_score)
            .then_with(|| a.note_id.cmp(&b.note_id))
    });
    hits.truncate(k);
}
