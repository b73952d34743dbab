//! Vector representations for notes and queries.
//!
//! Each note gets two vectors, one per map:
//!
//! * semantic view: `[text embedding ; entity embedding]`
//! * concept view:  `[entity embedding ; concept-set embedding]`
//!
//! The entity segment is shared between the two views; tickers stand in for
//! document metadata.

mod concept;
mod provider;
mod ticker;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use concept::{
    concept_set_similarity, embed_concept_set, infer_concepts_v1, ConceptEmbeddings,
    ConceptMatcher, ConceptSimCache,
};
pub use provider::{
    read_sidecar, write_sidecar, DeterministicProvider, EmbeddingProvider, ExternalProvider,
    ProviderSpec,
};
pub use ticker::{
    build_ticker_embeddings, combine_entities, TickerEmbedding, TickerEmbeddingParams,
    TickerEmbeddings,
};

use crate::error::{Error, Result};
use crate::notegen::Note;
use crate::universe::UniverseConfig;

/// Default text embedding width.
pub const TEXT_DIM: usize = 384;
/// Default ticker embedding width.
pub const ENTITY_DIM: usize = 50;

/// Sorted, deduplicated set of small integer ids (ticker or concept indices).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdSet(Vec<u32>);

impl IdSet {
    pub fn new(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IdSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn intersection_len(&self, other: &IdSet) -> usize {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.intersection_len(other) == self.len()
    }
}

impl FromIterator<u32> for IdSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        IdSet::new(iter)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn normalized(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = l2_norm(&v);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Degenerate("cannot normalize a zero vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

/// Both per-note vectors plus the sets they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVectors {
    pub som1_vec: Vec<f64>,
    pub som2_vec: Vec<f64>,
    pub ticker_set: IdSet,
    pub concept_set: IdSet,
}

impl DocumentVectors {
    /// Leading text segment of the semantic-view vector.
    pub fn text_embedding(&self, text_dim: usize) -> &[f64] {
        &self.som1_vec[..text_dim]
    }
}

/// Everything needed to embed notes and queries.
pub struct Embedder<'a> {
    pub universe: &'a UniverseConfig,
    pub provider: &'a dyn EmbeddingProvider,
    pub tickers: &'a TickerEmbeddings,
    pub concepts: &'a ConceptEmbeddings,
}

impl Embedder<'_> {
    pub fn text_dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn entity_dim(&self) -> usize {
        self.tickers.params.dim
    }

    /// Combined width of either view's vectors.
    pub fn view_dim(&self) -> usize {
        self.text_dim() + self.entity_dim()
    }

    pub fn ticker_set<'s>(&self, symbols: impl IntoIterator<Item = &'s str>) -> Result<IdSet> {
        symbols
            .into_iter()
            .map(|s| {
                self.universe
                    .ticker_index(s)
                    .map(|i| i as u32)
                    .ok_or_else(|| Error::UnknownTicker(s.to_string()))
            })
            .collect()
    }

    pub fn concept_set<'s>(&self, names: impl IntoIterator<Item = &'s str>) -> Result<IdSet> {
        names
            .into_iter()
            .map(|s| {
                self.universe
                    .concept_index(s)
                    .map(|i| i as u32)
                    .ok_or_else(|| Error::UnknownConcept(s.to_string()))
            })
            .collect()
    }
}

/// Builds both view vectors for a note.
pub fn document_vectors(note: &Note, embedder: &Embedder<'_>) -> Result<DocumentVectors> {
    let text = embedder.provider.embed(&note.text)?;
    let entities = combine_entities(&note.ticker_counts, embedder.tickers)?;
    let concept_set = embedder.concept_set(note.concepts.iter().map(String::as_str))?;
    let concepts = embed_concept_set(&concept_set, embedder.concepts)?;
    let ticker_set = embedder.ticker_set(note.ticker_counts.keys().map(String::as_str))?;

    let mut som1_vec = Vec::with_capacity(text.len() + entities.len());
    som1_vec.extend_from_slice(&text);
    som1_vec.extend_from_slice(&entities);
    let mut som2_vec = Vec::with_capacity(entities.len() + concepts.len());
    som2_vec.extend_from_slice(&entities);
    som2_vec.extend_from_slice(&concepts);

    Ok(DocumentVectors {
        som1_vec,
        som2_vec,
        ticker_set,
        concept_set,
    })
}

/// Entity segment for a set of symbols that each count once.
pub fn unit_counts<'s>(symbols: impl IntoIterator<Item = &'s str>) -> BTreeMap<String, u32> {
    symbols.into_iter().map(|s| (s.to_string(), 1)).collect()
}
