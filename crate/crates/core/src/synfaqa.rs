//! Synthetic question sets with known gold notes.
//!
//! Single-hop questions are built from one note. Multi-hop questions join two
//! notes that share a ticker or a concept; the shared element is the bridge.
//! Every question names only tickers and concepts found in its gold notes.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::notegen::{higher_is_better, metric_midpoint, Note};
use crate::universe::UniverseConfig;

pub const QA_FORMAT: &str = "caisson-qa";
pub const QA_VERSION: u32 = 1;

/// Multi-hop type shares: bridge, yes/no, comparison.
pub const MULTI_HOP_MIX: [(QaType, f64); 3] = [
    (QaType::Bridge, 0.601),
    (QaType::YesNo, 0.296),
    (QaType::Comparison, 0.103),
];

/// Share of each split phrased without any ticker.
pub const TICKERLESS_SHARE: f64 = 0.05;
/// Chance a multi-hop pair is joined through a concept rather than a ticker.
pub const CONCEPT_BRIDGE_PROB: f64 = 2.0 / 3.0;
/// Chance a question phrases its concepts through synonyms.
pub const QUESTION_SYNONYM_RATE: f64 = 0.275;

const MAX_QUESTION_TICKERS: usize = 4;
const MAX_QUESTION_CONCEPTS: usize = 7;
const MAX_PAIR_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaType {
    SingleHop,
    Bridge,
    Comparison,
    YesNo,
}

impl QaType {
    pub fn is_multi_hop(self) -> bool {
        self != QaType::SingleHop
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QaType::SingleHop => "single_hop",
            QaType::Bridge => "bridge",
            QaType::Comparison => "comparison",
            QaType::YesNo => "yes_no",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeKind {
    Ticker,
    Concept,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BridgeElement {
    pub kind: BridgeKind,
    pub value: String,
}

impl BridgeElement {
    pub fn occurs_in(&self, note: &Note) -> bool {
        match self.kind {
            BridgeKind::Ticker => note.ticker_counts.contains_key(&self.value),
            BridgeKind::Concept => note.concepts.contains(&self.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub qtype: QaType,
    pub gold_note_ids: Vec<String>,
    pub bridge_element: Option<BridgeElement>,
    pub tickers_in_q: BTreeSet<String>,
    pub concepts_in_q: BTreeSet<String>,
    pub difficulty: Difficulty,
    /// Grounded answer for comparison and yes/no questions.
    pub gold_answer: Option<String>,
}

/// Easy first, then medium, then hard.
pub fn classify_difficulty(tickers: usize, concepts: usize) -> Difficulty {
    if tickers <= 1 || concepts == 1 {
        Difficulty::Easy
    } else if tickers == 2 || concepts == 2 {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

/// Inverted index from each ticker and concept to the notes carrying it.
/// Edges are the note pairs sharing a posting list; they are counted and
/// sampled without being materialized.
#[derive(Debug, Clone, Default)]
pub struct BridgeGraph {
    postings: BTreeMap<BridgeElement, Vec<usize>>,
}

impl BridgeGraph {
    pub fn postings(&self, element: &BridgeElement) -> &[usize] {
        self.postings.get(element).map_or(&[], Vec::as_slice)
    }

    /// Number of `(note_a, note_b, element)` edges of the given kind.
    pub fn edge_count(&self, kind: BridgeKind) -> u64 {
        self.postings
            .iter()
            .filter(|(e, _)| e.kind == kind)
            .map(|(_, p)| {
                let n = p.len() as u64;
                n * (n - 1) / 2
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize, element: &BridgeElement) -> bool {
        let p = self.postings(element);
        a != b && p.binary_search(&a).is_ok() && p.binary_search(&b).is_ok()
    }

    /// Every edge, element by element; `a < b` within each.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &BridgeElement)> {
        self.postings.iter().flat_map(|(e, p)| {
            p.iter()
                .enumerate()
                .flat_map(move |(i, &a)| p[i + 1..].iter().map(move |&b| (a, b, e)))
        })
    }
}

/// Indexes shared tickers and concepts. Elements held by a single note are
/// dropped since they bridge nothing.
pub fn build_bridge_graph(corpus: &[Note]) -> BridgeGraph {
    let mut postings: BTreeMap<BridgeElement, Vec<usize>> = BTreeMap::new();
    for (i, note) in corpus.iter().enumerate() {
        let tickers = note.tickers().map(|t| (BridgeKind::Ticker, t));
        let concepts = note.concepts.iter().map(|c| (BridgeKind::Concept, c.as_str()));
        for (kind, value) in tickers.chain(concepts) {
            postings
                .entry(BridgeElement {
                    kind,
                    value: value.to_string(),
                })
                .or_default()
                .push(i);
        }
    }
    postings.retain(|_, p| p.len() > 1);
    BridgeGraph { postings }
}

/// "a", "a and b", "a, b, and c".
fn list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [a] => a.to_string(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

/// Fills the template for `qtype`. `groups` holds one ticker list per gold
/// note (empty lists for a tickerless question); `concepts` are already
/// phrased.
pub fn render_question(qtype: QaType, groups: &[Vec<&str>], concepts: &[&str]) -> String {
    let c = list(concepts);
    let named: Vec<String> = groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| list(g))
        .collect();
    if named.is_empty() {
        return match qtype {
            QaType::SingleHop => format!("What's the latest information regarding {c}?"),
            QaType::Bridge => format!("What different approaches do companies take regarding {c}?"),
            QaType::Comparison => format!("Which companies had more favorable {c}?"),
            QaType::YesNo => format!("Did companies experience similar trends in {c}?"),
        };
    }
    let t = named.join(" and ");
    match qtype {
        QaType::SingleHop => format!("What's the latest information on {t} regarding {c}?"),
        QaType::Bridge => format!("What different approaches do {t} take regarding {c}?"),
        QaType::Comparison => format!("Between {t}, which company had more favorable {c}?"),
        QaType::YesNo => format!("Did {t} experience similar trends in {c}?"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub word_count: Stats,
    pub char_count: Stats,
    pub ticker_count: Stats,
    pub concept_count: Stats,
}

impl Complexity {
    fn of<'a>(qs: impl Iterator<Item = &'a QaPair> + Clone) -> Option<Self> {
        let col = |f: fn(&QaPair) -> usize| -> Vec<f64> { qs.clone().map(|q| f(q) as f64).collect() };
        Some(Self {
            word_count: Stats::of(&col(|q| q.question.split_whitespace().count()))?,
            char_count: Stats::of(&col(|q| q.question.chars().count()))?,
            ticker_count: Stats::of(&col(|q| q.tickers_in_q.len()))?,
            concept_count: Stats::of(&col(|q| q.concepts_in_q.len()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaManifest {
    pub format_version: u32,
    pub seed: u64,
    pub corpus_notes: usize,
    pub total: usize,
    pub counts_by_type: BTreeMap<QaType, usize>,
    pub difficulty_single_hop: BTreeMap<Difficulty, usize>,
    pub difficulty_multi_hop: BTreeMap<Difficulty, usize>,
    pub complexity_single_hop: Option<Complexity>,
    pub complexity_multi_hop: Option<Complexity>,
    /// Distinct `(note pair, concept)` bridges used by the question set.
    pub distinct_concept_bridges: usize,
    pub concept_edges: u64,
    pub ticker_edges: u64,
}

/// Integer counts per multi-hop type summing to `n`, by largest remainder.
pub fn multi_hop_quotas(n: usize) -> Vec<(QaType, usize)> {
    let raw: Vec<f64> = MULTI_HOP_MIX.iter().map(|(_, p)| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    MULTI_HOP_MIX.iter().map(|(t, _)| *t).zip(counts).collect()
}

struct Phrasing<'u> {
    universe: &'u UniverseConfig,
}

impl Phrasing<'_> {
    /// Lowercased canonical names, or one synonym each when `synonyms`.
    fn concepts<R: Rng>(&self, names: &[&str], synonyms: bool, rng: &mut R) -> Result<Vec<String>> {
        names
            .iter()
            .map(|n| {
                let entry = self.universe.concept(n)?;
                Ok(if synonyms {
                    entry.synonyms.choose(rng).expect("synonyms non-empty").clone()
                } else {
                    entry.name.to_lowercase()
                })
            })
            .collect()
    }
}

/// Gold answer for comparison and yes/no questions, from the figures quoted
/// in each note for `concept`.
fn grounded_answer(
    qtype: QaType,
    concept: &str,
    a: (&Note, &[&str]),
    b: (&Note, &[&str]),
) -> Option<String> {
    let value = |note: &Note, group: &[&str]| {
        let t = group.first().copied().unwrap_or(note.primary.as_str());
        note.figure_for(t, concept)
    };
    let (va, vb) = (value(a.0, a.1), value(b.0, b.1));
    match qtype {
        QaType::Comparison => Some(match (va, vb) {
            (Some(x), Some(y)) if x == y => "tie".to_string(),
            (Some(x), Some(y)) => {
                let a_wins = (x > y) == higher_is_better(concept);
                let side = if a_wins { a } else { b };
                if side.1.is_empty() {
                    side.0.id.clone()
                } else {
                    list(side.1)
                }
            }
            _ => "undetermined".to_string(),
        }),
        QaType::YesNo => Some(match (va, vb) {
            (Some(x), Some(y)) => {
                let mid = metric_midpoint(concept);
                if (x >= mid) == (y >= mid) { "yes" } else { "no" }.to_string()
            }
            _ => "undetermined".to_string(),
        }),
        _ => None,
    }
}

/// Picks `count` positions out of `n` for tickerless phrasing.
fn tickerless_slots<R: Rng>(n: usize, rng: &mut R) -> HashSet<usize> {
    let count = (TICKERLESS_SHARE * n as f64).round() as usize;
    rand::seq::index::sample(rng, n, count.min(n)).into_iter().collect()
}

/// Generates `n_single` single-hop and `n_multi` multi-hop questions.
pub fn generate_qa(
    corpus: &[Note],
    universe: &UniverseConfig,
    n_single: usize,
    n_multi: usize,
    seed: u64,
) -> Result<(Vec<QaPair>, QaManifest)> {
    if n_single > corpus.len() {
        return Err(Error::Infeasible(format!(
            "{n_single} single-hop questions need as many notes, corpus has {}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phrasing = Phrasing { universe };
    let mut out = Vec::with_capacity(n_single + n_multi);

    let tickerless = tickerless_slots(n_single, &mut rng);
    let picks = rand::seq::index::sample(&mut rng, corpus.len(), n_single).into_vec();
    for (slot, &i) in picks.iter().enumerate() {
        let note = &corpus[i];
        let tickers: Vec<&str> = if tickerless.contains(&slot) {
            Vec::new()
        } else {
            note.ordered_tickers()
        };
        let mut names: Vec<&str> = note.concepts.iter().map(String::as_str).collect();
        names.shuffle(&mut rng);
        let synonyms = rng.random_bool(QUESTION_SYNONYM_RATE);
        let phrased = phrasing.concepts(&names, synonyms, &mut rng)?;
        let phrased: Vec<&str> = phrased.iter().map(String::as_str).collect();
        let question = render_question(QaType::SingleHop, std::slice::from_ref(&tickers), &phrased);
        out.push(QaPair {
            id: String::new(),
            question,
            qtype: QaType::SingleHop,
            gold_note_ids: vec![note.id.clone()],
            bridge_element: None,
            tickers_in_q: tickers.iter().map(|t| t.to_string()).collect(),
            concepts_in_q: names.iter().map(|c| c.to_string()).collect(),
            difficulty: classify_difficulty(tickers.len(), names.len()),
            gold_answer: None,
        });
    }

    let graph = build_bridge_graph(corpus);
    let mut concept_bridges = BTreeSet::new();
    if n_multi > 0 {
        if graph.is_empty() {
            return Err(Error::Infeasible(format!(
                "{n_multi} multi-hop questions requested but no two notes share a ticker or concept"
            )));
        }
        let mut types: Vec<QaType> = multi_hop_quotas(n_multi)
            .into_iter()
            .flat_map(|(t, n)| std::iter::repeat_n(t, n))
            .collect();
        types.shuffle(&mut rng);
        let tickerless = tickerless_slots(n_multi, &mut rng);

        for (slot, &qtype) in types.iter().enumerate() {
            let no_tickers = tickerless.contains(&slot);
            let q = (0..MAX_PAIR_ATTEMPTS)
                .find_map(|_| {
                    multi_hop(corpus, &graph, &phrasing, qtype, no_tickers, &mut rng).transpose()
                })
                .transpose()?
                .ok_or_else(|| {
                    Error::Infeasible(format!(
                        "could not find a bridgeable note pair for multi-hop question {} of {n_multi}",
                        slot + 1
                    ))
                })?;
            if let Some(BridgeElement {
                kind: BridgeKind::Concept,
                value,
            }) = &q.bridge_element
            {
                let mut pair = q.gold_note_ids.clone();
                pair.sort();
                concept_bridges.insert((pair, value.clone()));
            }
            out.push(q);
        }
    }

    let width = (n_single + n_multi).to_string().len().max(6);
    for (i, q) in out.iter_mut().enumerate() {
        q.id = format!("qa-{i:0width$}");
    }

    let mut counts_by_type: BTreeMap<QaType, usize> = BTreeMap::new();
    let mut diff_single = BTreeMap::new();
    let mut diff_multi = BTreeMap::new();
    for q in &out {
        *counts_by_type.entry(q.qtype).or_default() += 1;
        let d = if q.qtype.is_multi_hop() { &mut diff_multi } else { &mut diff_single };
        *d.entry(q.difficulty).or_default() += 1;
    }
    let manifest = QaManifest {
        format_version: QA_VERSION,
        seed,
        corpus_notes: corpus.len(),
        total: out.len(),
        counts_by_type,
        difficulty_single_hop: diff_single,
        difficulty_multi_hop: diff_multi,
        complexity_single_hop: Complexity::of(out.iter().filter(|q| !q.qtype.is_multi_hop())),
        complexity_multi_hop: Complexity::of(out.iter().filter(|q| q.qtype.is_multi_hop())),
        distinct_concept_bridges: concept_bridges.len(),
        concept_edges: graph.edge_count(BridgeKind::Concept),
        ticker_edges: graph.edge_count(BridgeKind::Ticker),
    };
    Ok((out, manifest))
}

/// One attempt at a multi-hop question; `Ok(None)` when the sampled pair
/// cannot carry the question and another draw is needed.
fn multi_hop<R: Rng>(
    corpus: &[Note],
    graph: &BridgeGraph,
    phrasing: &Phrasing<'_>,
    qtype: QaType,
    no_tickers: bool,
    rng: &mut R,
) -> Result<Option<QaPair>> {
    let ai = rng.random_range(0..corpus.len());
    let a = &corpus[ai];
    let kind = if no_tickers || rng.random_bool(CONCEPT_BRIDGE_PROB) {
        BridgeKind::Concept
    } else {
        BridgeKind::Ticker
    };
    let value = match kind {
        BridgeKind::Ticker => a.tickers().collect::<Vec<_>>().choose(rng).map(|s| s.to_string()),
        BridgeKind::Concept => a.concepts.iter().collect::<Vec<_>>().choose(rng).map(|s| s.to_string()),
    }
    .expect("notes carry at least one ticker and concept");
    let element = BridgeElement { kind, value };
    let Some(&bi) = graph.postings(&element).choose(rng) else {
        return Ok(None);
    };
    if bi == ai {
        return Ok(None);
    }
    let b = &corpus[bi];

    let mut groups: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    if !no_tickers {
        let mut ta = a.ordered_tickers();
        if kind == BridgeKind::Ticker {
            // Keep the bridge ticker named even after truncation.
            let (bridge, _) = a
                .ticker_counts
                .get_key_value(&element.value)
                .expect("bridge ticker is in note a");
            ta.retain(|t| *t != bridge);
            ta.insert(0, bridge.as_str());
        }
        let tb: Vec<&str> = b.ordered_tickers().into_iter().filter(|t| !ta.contains(t)).collect();
        if tb.is_empty() {
            return Ok(None);
        }
        ta.truncate(MAX_QUESTION_TICKERS - 1);
        let room = MAX_QUESTION_TICKERS - ta.len();
        groups = [ta, tb.into_iter().take(room).collect()];
    }

    let focus: &str = match kind {
        BridgeKind::Concept => {
            a.concepts.get(&element.value).expect("bridge concept is in note a")
        }
        BridgeKind::Ticker => {
            let shared: Vec<&String> = a.concepts.intersection(&b.concepts).collect();
            match shared.choose(rng) {
                Some(c) => c.as_str(),
                None => a.concepts.iter().collect::<Vec<_>>().choose(rng).expect("non-empty").as_str(),
            }
        }
    };
    let mut rest: Vec<&str> = a
        .concepts
        .union(&b.concepts)
        .map(String::as_str)
        .filter(|c| *c != focus)
        .collect();
    rest.shuffle(rng);
    let mut names = vec![focus];
    names.extend(rest);
    names.truncate(MAX_QUESTION_CONCEPTS);

    let synonyms = rng.random_bool(QUESTION_SYNONYM_RATE);
    let phrased = phrasing.concepts(&names, synonyms, rng)?;
    let phrased: Vec<&str> = phrased.iter().map(String::as_str).collect();
    let question = render_question(qtype, &groups, &phrased);
    let gold_answer = grounded_answer(qtype, focus, (a, &groups[0]), (b, &groups[1]));
    let n_tickers = groups[0].len() + groups[1].len();

    Ok(Some(QaPair {
        id: String::new(),
        question,
        qtype,
        gold_note_ids: vec![a.id.clone(), b.id.clone()],
        bridge_element: Some(element),
        tickers_in_q: groups.iter().flatten().map(|t| t.to_string()).collect(),
        concepts_in_q: names.iter().map(|c| c.to_string()).collect(),
        difficulty: classify_difficulty(n_tickers, names.len()),
        gold_answer,
    }))
}
