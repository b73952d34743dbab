#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use caisson::embed::ConceptMatcher;
use caisson::model::Caisson;
use caisson::notegen::{generate_corpus, Note, NoteGenParams};
use caisson::retriever::RetrievalResult;
use caisson::synfaqa::QaPair;
use caisson::text;
use caisson::universe::UniverseConfig;

pub fn corpus(n: usize, seed: u64) -> (UniverseConfig, Vec<Note>) {
    let u = UniverseConfig::default_universe();
    let (notes, _) = generate_corpus(&u, n, seed, &NoteGenParams::default()).unwrap();
    (u, notes)
}

/// Every note id sits in exactly one node of each map.
pub fn storage_partition(model: &Caisson) -> Result<(), String> {
    for (name, grid) in [("SOM1", &model.som1), ("SOM2", &model.som2)] {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for node in 0..grid.node_count() {
            for d in grid.collection(node) {
                *seen.entry(d.id.as_str()).or_default() += 1;
            }
        }
        if seen.len() != model.notes.len() {
            return Err(format!("{name}: {} distinct ids stored, {} notes", seen.len(), model.notes.len()));
        }
        if let Some((id, c)) = seen.iter().find(|(_, &c)| c != 1) {
            return Err(format!("{name}: `{id}` stored {c} times"));
        }
        if let Some(m) = model.notes.iter().find(|m| !seen.contains_key(m.id.as_str())) {
            return Err(format!("{name}: `{}` never stored", m.id));
        }
    }
    Ok(())
}

/// Gold notes exist and carry what the question names; bridge elements occur
/// in both golds; recorded tickers and concepts match a fresh parse.
pub fn qa_invariants(notes: &[Note], universe: &UniverseConfig, qa: &[QaPair]) -> Result<(), String> {
    let by_id: BTreeMap<&str, &Note> = notes.iter().map(|n| (n.id.as_str(), n)).collect();
    let matcher = ConceptMatcher::new(&universe.concepts);
    for q in qa {
        let gold = q
            .gold_note_ids
            .iter()
            .map(|g| by_id.get(g.as_str()).copied().ok_or(format!("{}: unknown gold `{g}`", q.id)))
            .collect::<Result<Vec<_>, _>>()?;
        let want = if q.qtype.is_multi_hop() { 2 } else { 1 };
        if gold.len() != want {
            return Err(format!("{}: {} golds", q.id, gold.len()));
        }
        match (&q.bridge_element, q.qtype.is_multi_hop()) {
            (Some(e), true) => {
                if gold[0].id == gold[1].id || !gold.iter().all(|n| e.occurs_in(n)) {
                    return Err(format!("{}: invalid bridge {:?}", q.id, e));
                }
            }
            (None, false) => {}
            _ => return Err(format!("{}: bridge element does not fit its type", q.id)),
        }
        let tickers: BTreeSet<String> = text::uppercase_tokens(&q.question)
            .filter(|t| universe.contains_ticker(t))
            .map(str::to_string)
            .collect();
        let concepts: BTreeSet<String> = matcher
            .find(&q.question)
            .into_iter()
            .map(|i| matcher.name(i).to_string())
            .collect();
        if tickers != q.tickers_in_q || concepts != q.concepts_in_q {
            return Err(format!("{}: recorded entities differ from the question text", q.id));
        }
        if !q.tickers_in_q.iter().all(|t| gold.iter().any(|n| n.ticker_counts.contains_key(t))) {
            return Err(format!("{}: ticker missing from golds", q.id));
        }
        if !q.concepts_in_q.iter().all(|c| gold.iter().any(|n| n.concepts.contains(c))) {
            return Err(format!("{}: concept missing from golds", q.id));
        }
    }
    Ok(())
}

/// Equal hits and candidate counts; timing is ignored.
pub fn same_result(a: &RetrievalResult, b: &RetrievalResult) -> bool {
    a.query == b.query && a.hits == b.hits && a.candidates == b.candidates && a.radius == b.radius
}
