use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{cosine, EmbeddingProvider, IdSet};
use crate::error::{Error, Result};
use crate::text;
use crate::universe::ConceptEntry;

/// Dictionary matcher over canonical names and synonyms.
///
/// Matching is case-insensitive on whole words; at each position the longest
/// phrase wins and its words are consumed.
#[derive(Debug, Clone)]
pub struct ConceptMatcher {
    names: Vec<String>,
    phrases: HashMap<Vec<String>, u32>,
    longest: usize,
}

impl ConceptMatcher {
    pub fn new(dictionary: &[ConceptEntry]) -> Self {
        let mut phrases = HashMap::new();
        let mut longest = 0;
        for (i, c) in dictionary.iter().enumerate() {
            for form in c.surface_forms() {
                let w = text::words(form);
                longest = longest.max(w.len());
                phrases.insert(w, i as u32);
            }
        }
        Self {
            names: dictionary.iter().map(|c| c.name.clone()).collect(),
            phrases,
            longest,
        }
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    /// Concept ids found in `text`, in order of first appearance.
    pub fn find(&self, text: &str) -> Vec<u32> {
        let words = text::words(text);
        let mut found = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let max = self.longest.min(words.len() - i);
            let hit = (1..=max)
                .rev()
                .find_map(|len| self.phrases.get(&words[i..i + len]).map(|&id| (id, len)));
            match hit {
                Some((id, len)) => {
                    if !found.contains(&id) {
                        found.push(id);
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        found
    }

    pub fn find_set(&self, text: &str) -> IdSet {
        IdSet::new(self.find(text))
    }
}

/// Canonical concept names mentioned in `text` via name or synonym.
pub fn infer_concepts_v1(text: &str, matcher: &ConceptMatcher) -> BTreeSet<String> {
    matcher
        .find(text)
        .into_iter()
        .map(|id| matcher.name(id).to_string())
        .collect()
}

/// Precomputed pairwise cosine similarities between concept embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSimCache {
    n: usize,
    values: Vec<f64>,
}

impl ConceptSimCache {
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Self {
        let n = vectors.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = cosine(&vectors[i], &vectors[j]);
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: u32, b: u32) -> f64 {
        self.values[a as usize * self.n + b as usize]
    }
}

/// Embeddings of every canonical concept name plus their similarity cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEmbeddings {
    pub names: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub sim: ConceptSimCache,
}

impl ConceptEmbeddings {
    pub fn build(dictionary: &[ConceptEntry], provider: &dyn EmbeddingProvider) -> Result<Self> {
        let vectors = dictionary
            .iter()
            .map(|c| provider.embed(&c.name))
            .collect::<Result<Vec<_>>>()?;
        let sim = ConceptSimCache::from_vectors(&vectors);
        Ok(Self {
            names: dictionary.iter().map(|c| c.name.clone()).collect(),
            vectors,
            sim,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    fn vector(&self, id: u32) -> Result<&[f64]> {
        self.vectors
            .get(id as usize)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownConcept(format!("#{id}")))
    }
}

/// Unweighted mean of the member concepts' embeddings.
pub fn embed_concept_set(concepts: &IdSet, embeddings: &ConceptEmbeddings) -> Result<Vec<f64>> {
    if concepts.is_empty() {
        return Err(Error::Empty("concept set"));
    }
    let mut out = vec![0.0; embeddings.dim()];
    for id in concepts.iter() {
        for (o, x) in out.iter_mut().zip(embeddings.vector(id)?) {
            *o += x;
        }
    }
    let k = concepts.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Overlap ratio `|A ∩ B| / max(|A|, |B|)` when the sets intersect, otherwise
/// the best cached pairwise similarity across the two sets.
pub fn concept_set_similarity(a: &IdSet, b: &IdSet, cache: &ConceptSimCache) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("concept set"));
    }
    let common = a.intersection_len(b);
    if common > 0 {
        return Ok(common as f64 / a.len().max(b.len()) as f64);
    }
    let mut best = f64::NEG_INFINITY;
    for x in a.iter() {
        for y in b.iter() {
            best = best.max(cache.get(x, y));
        }
    }
    Ok(best)
}
