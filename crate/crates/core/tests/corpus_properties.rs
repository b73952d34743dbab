mod common;

use std::collections::BTreeMap;

use caisson::embed::{
    build_ticker_embeddings, infer_concepts_v1, ConceptEmbeddings, ConceptMatcher, DeterministicProvider,
    Embedder, TickerEmbeddingParams,
};
use caisson::notegen::{generate_corpus, NoteGenParams};
use caisson::retriever::extract_tickers;
use caisson::universe::UniverseConfig;

#[test]
fn top_ticker_coverage_near_ten_percent() {
    let (_, notes) = common::corpus(10_000, 7);
    let mut coverage: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &notes {
        for t in n.ticker_counts.keys() {
            *coverage.entry(t.as_str()).or_default() += 1;
        }
    }
    let top = *coverage.values().max().unwrap() as f64 / notes.len() as f64;
    assert!((0.09..=0.10).contains(&top), "top ticker covers {top}");
}

#[test]
fn generation_and_extraction_agree() {
    let u = UniverseConfig::default_universe();
    let (notes, manifest) = generate_corpus(&u, 5_000, 3, &NoteGenParams::default()).unwrap();
    let provider = DeterministicProvider::new(16, 0);
    let tickers = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
    let concepts = ConceptEmbeddings::build(&u.concepts, &provider).unwrap();
    let embedder = Embedder {
        universe: &u,
        provider: &provider,
        tickers: &tickers,
        concepts: &concepts,
    };
    let matcher = ConceptMatcher::new(&u.concepts);
    for n in &notes {
        let found = extract_tickers(&n.text, &embedder);
        assert!(found.iter().eq(n.ticker_counts.keys()), "{}: {:?}", n.id, found);
        assert_eq!(infer_concepts_v1(&n.text, &matcher), n.concepts, "{}", n.id);
    }

    assert_eq!(manifest.ticker_count_histogram.values().sum::<usize>(), 5_000);
    assert_eq!(manifest.concept_count_histogram.values().sum::<usize>(), 5_000);
    assert!(
        (0.255..=0.295).contains(&manifest.synonym_usage_rate),
        "synonym rate {}",
        manifest.synonym_usage_rate
    );
    let tech = manifest.sector_share["Technology"];
    assert!((0.29..=0.35).contains(&tech), "technology share {tech}");
    let h = &manifest.ticker_count_histogram;
    assert!(h[&1] > h[&3] && h[&2] > h[&3] && h[&3] >= h[&4]);
}

#[test]
fn same_seed_same_bytes() {
    let u = UniverseConfig::default_universe();
    let a = generate_corpus(&u, 2_000, 9, &NoteGenParams::default()).unwrap();
    let b = generate_corpus(&u, 2_000, 9, &NoteGenParams::default()).unwrap();
    assert_eq!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
    let c = generate_corpus(&u, 2_000, 10, &NoteGenParams::default()).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn same_sector_tickers_are_closer() {
    let u = UniverseConfig::default_universe();
    let (mut same, mut same_n, mut cross, mut cross_n) = (0.0, 0usize, 0.0, 0usize);
    for seed in 0..1_000 {
        let params = TickerEmbeddingParams {
            seed,
            ..TickerEmbeddingParams::default()
        };
        let emb = build_ticker_embeddings(&u, params).unwrap();
        // A fixed sample of pairs per draw keeps the run short.
        for (i, a) in u.tickers.iter().enumerate().step_by(7) {
            for b in u.tickers.iter().skip(i + 1).step_by(5) {
                let c = caisson::embed::dot(emb.get(&a.symbol).unwrap(), emb.get(&b.symbol).unwrap());
                if a.sector == b.sector {
                    same += c;
                    same_n += 1;
                } else {
                    cross += c;
                    cross_n += 1;
                }
            }
        }
    }
    let (same, cross) = (same / same_n as f64, cross / cross_n as f64);
    assert!(same_n > 1_000 && cross_n > 1_000);
    assert!(same > cross + 0.05, "same-sector {same} vs cross-sector {cross}");
}
