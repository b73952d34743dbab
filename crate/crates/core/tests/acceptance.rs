//! End-to-end acceptance run on a 10k-note corpus. Prints one PASS/FAIL line
//! per criterion. Failing criteria are reported, not fatal, unless
//! `CAISSON_ACCEPTANCE_STRICT=1` is set.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use caisson::embed::{
    build_ticker_embeddings, combine_entities, concept_set_similarity, cosine, ConceptSimCache, IdSet,
    TickerEmbeddingParams,
};
use caisson::evalharness::{
    evaluate, percentile, stratified_sample, Aggregate, CaissonRanker, EvalOptions, EvalReport, Ranker,
    TextEntityRag, TextRag,
};
use caisson::model::{Caisson, RunConfig};
use caisson::notegen::{generate_corpus, NoteGenParams};
use caisson::retriever::ticker_score;
use caisson::som::SomParams;
use caisson::synfaqa::{generate_qa, QaType};
use caisson::universe::UniverseConfig;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CORPUS: usize = 10_000;
const QA_EACH: usize = 10_000;
const SAMPLE_EACH: usize = 500;

struct Verdicts(Vec<(usize, bool, String)>);

impl Verdicts {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        self.0.push((id, ok, detail));
    }
}

fn mrr(rows: &[Aggregate], model: &str, slice: &str) -> f64 {
    EvalReport::find(rows, model, slice).map_or(f64::NAN, |a| a.mrr)
}

/// Peak MRR over ticker-count slices and the relative drop from it at 3 and 4.
fn degradation(report: &EvalReport, model: &str) -> (f64, f64, f64) {
    let at = |t: usize| mrr(&report.by_ticker_count, model, &t.to_string());
    let peak = (0..=4).map(at).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    (peak, 1.0 - at(3) / peak, 1.0 - at(4) / peak)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn formula_suite() -> Result<(), String> {
    let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };
    let s = |ids: &[u32]| IdSet::new(ids.iter().copied());

    check(close(ticker_score(&s(&[1]), &s(&[1])), 1.0), "ticker_score {A},{A}")?;
    check(close(ticker_score(&s(&[1, 2]), &s(&[1])), 0.5), "ticker_score {A,B},{A}")?;
    check(close(ticker_score(&s(&[1, 2, 3, 4]), &s(&[1, 2])), 0.5), "ticker_score {A,B,C,D},{A,B}")?;
    check(close(ticker_score(&s(&[]), &s(&[])), 1.0), "ticker_score both empty")?;
    check(close(ticker_score(&s(&[1]), &s(&[])), 0.0), "ticker_score one empty")?;

    // s(a,b) = 0.6, s(a,c) = 0, s(b,c) = 0.8
    let cache = ConceptSimCache::from_vectors(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]]);
    let cs = |a: &[u32], b: &[u32]| concept_set_similarity(&s(a), &s(b), &cache).unwrap();
    check(close(cs(&[0, 1], &[0, 1]), 1.0), "concept similarity full overlap")?;
    check(close(cs(&[0, 1], &[0]), 0.5), "concept similarity overlap branch")?;
    check(close(cs(&[0], &[1]), 0.6), "concept similarity disjoint pair")?;
    check(close(cs(&[0, 2], &[1]), 0.8), "concept similarity disjoint max")?;

    let u = UniverseConfig::default_universe();
    let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).map_err(|e| e.to_string())?;
    let a = emb.get("AAPL").unwrap();
    let b = emb.get("MSFT").unwrap();
    let counts = |p: &[(&str, u32)]| -> BTreeMap<String, u32> { p.iter().map(|(k, v)| (k.to_string(), *v)).collect() };
    let single = combine_entities(&counts(&[("AAPL", 1)]), &emb).unwrap();
    check(single.iter().zip(a).all(|(x, y)| close(*x, *y)), "combine_entities single ticker")?;
    let pair = combine_entities(&counts(&[("AAPL", 1), ("MSFT", 1)]), &emb).unwrap();
    check(
        pair.iter().zip(a.iter().zip(b)).all(|(x, (p, q))| close(*x, (p + q) / 2.0)),
        "combine_entities mean of two",
    )?;
    let weighted = combine_entities(&counts(&[("AAPL", 2), ("MSFT", 1)]), &emb).unwrap();
    check(
        weighted.iter().zip(a.iter().zip(b)).all(|(x, (p, q))| close(*x, (2.0 * p + q) / 2.0))
            && cosine(&weighted, a) > cosine(&weighted, b),
        "combine_entities counts (2,1)",
    )?;

    let p = SomParams::new(10, 434, 150, 0);
    check(close(p.learning_rate(0.0), 0.05), "alpha(0)")?;
    check(close(p.learning_rate(150.0), 0.01), "alpha(T)")?;
    check(close(p.radius(75.0), 1.115650800742149), "sigma(75)")?;
    check(close(p.neighborhood(0, 1, 0.0), 0.04900993366533776), "h at t=0, d^2=1")?;
    check(close(p.neighborhood(0, 11, 75.0), 0.013433826674172072), "h at t=75, d^2=2")?;
    check(close(p.neighborhood(0, 23, 30.0), 0.01771548681585307), "h at t=30, d^2=13")?;
    check(close(p.neighborhood(44, 44, 149.0), 0.010266666666666669), "h_cc at t=149")?;
    Ok(())
}

fn main() {
    let mut v = Verdicts(Vec::new());
    let started = Instant::now();
    let config = RunConfig::default();
    let universe = config.universe().unwrap();

    let (notes, _) = generate_corpus(&universe, CORPUS, config.seeds.corpus, &NoteGenParams::default()).unwrap();
    println!("corpus: {} notes", notes.len());

    let train_start = Instant::now();
    let model = Caisson::train(&config, universe.clone(), &notes, &mut |_, _, _, _| {}).unwrap();
    let train_secs = train_start.elapsed().as_secs_f64();
    println!("training: {train_secs:.1} s");

    let (qa, qa_manifest) = generate_qa(&notes, &universe, QA_EACH, QA_EACH, config.seeds.qa).unwrap();
    let bench = stratified_sample(&qa, SAMPLE_EACH, SAMPLE_EACH, config.seeds.qa);

    let caisson = CaissonRanker { model: &model, radius: config.retrieval.radius };
    let text = TextRag { model: &model };
    let text_entity = TextEntityRag::new(&model);
    let rankers: [&dyn Ranker; 3] = [&caisson, &text, &text_entity];
    let (report, records) = evaluate(&model, &rankers, &bench, EvalOptions::default()).unwrap();
    let end_to_end = started.elapsed().as_secs_f64();
    for a in &report.overall {
        println!("{:<14} MRR {:.4}  top1 {:.3}  top5 {:.3}  top10 {:.3}", a.model, a.mrr, a.top1, a.top5, a.top10);
    }

    // 1
    let (c, te, t) = (
        mrr(&report.overall, "CAISSON", "all"),
        mrr(&report.overall, "TextEntityRAG", "all"),
        mrr(&report.overall, "TextRAG", "all"),
    );
    v.record(
        1,
        c > te && te > t && c >= 1.15 * te && end_to_end < 900.0,
        format!("MRR CAISSON {c:.4} > TextEntityRAG {te:.4} > TextRAG {t:.4}, ratio {:.2} (>= 1.15), end to end {end_to_end:.0} s (< 900)", c / te),
    );

    // 2
    let single = mrr(&report.by_type, "CAISSON", "single_hop");
    let multi = mrr(&report.by_type, "CAISSON", "multi_hop");
    let mut losing = Vec::new();
    for slice in ["single_hop", "multi_hop", "bridge", "comparison", "yes_no"] {
        let ours = mrr(&report.by_type, "CAISSON", slice);
        for base in ["TextRAG", "TextEntityRAG"] {
            let theirs = mrr(&report.by_type, base, slice);
            if ours.is_nan() || theirs.is_nan() || ours <= theirs {
                losing.push(format!("{slice} vs {base}"));
            }
        }
    }
    v.record(
        2,
        single > multi && losing.is_empty(),
        format!("CAISSON single-hop {single:.4} > multi-hop {multi:.4}; slices lost to a baseline: {losing:?}"),
    );

    // 3
    let (cp, c3, c4) = degradation(&report, "CAISSON");
    let (tp, t3, t4) = degradation(&report, "TextRAG");
    v.record(
        3,
        c3 < 0.35 && c4 < 0.35 && t3 > 0.50 && t4 > 0.50,
        format!(
            "drop from peak at 3/4 tickers: CAISSON {:.1}%/{:.1}% of {cp:.4} (< 35%), TextRAG {:.1}%/{:.1}% of {tp:.4} (> 50%)",
            100.0 * c3,
            100.0 * c4,
            100.0 * t3,
            100.0 * t4
        ),
    );

    // 4
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let full = model.som1.params.n - 1;
    let mut mismatches = 0;
    for i in sample(&mut rng, qa.len(), 200) {
        let q = model.parse(&qa[i].question).unwrap();
        let got = model.retrieve(&q, 10, full).unwrap();
        let want = model.brute_force(&q, 10).unwrap();
        let same = got.hits.len() == want.len()
            && got.hits.iter().zip(&want).all(|(a, b)| {
                a.note_id == b.note_id
                    && a.final_score == b.final_score
                    && a.ticker_score == b.ticker_score
                    && a.concept_score == b.concept_score
                    && a.semantic_score == b.semantic_score
            });
        mismatches += usize::from(!same);
    }
    v.record(4, mismatches == 0, format!("radius {full} vs brute force: {mismatches} of 200 queries differ"));

    // 5
    let mut ok5 = true;
    let mut parts = Vec::new();
    for (name, trace) in ["SOM1", "SOM2"].iter().zip(&model.traces) {
        let q = &trace.quantization_errors;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let ratio = mean(&q[q.len() - 10..]) / mean(&q[..10]);
        let share = (q[0] - q[49]) / (q[0] - q[q.len() - 1]);
        ok5 &= ratio < 0.60 && share >= 0.60;
        parts.push(format!("{name} last10/first10 {ratio:.3} (< 0.60), drop by epoch 50 {:.1}% (>= 60%)", 100.0 * share));
    }
    v.record(5, ok5, parts.join("; "));

    // 6
    let latencies: Vec<f64> = records.iter().filter(|r| r.model == "CAISSON").map(|r| r.elapsed_ms).collect();
    let p95 = percentile(&latencies, 0.95);
    v.record(
        6,
        p95 < 200.0 && train_secs < 600.0,
        format!("p95 query {p95:.2} ms (< 200), training {train_secs:.1} s (< 600)"),
    );

    // 7
    match formula_suite() {
        Ok(()) => v.record(7, true, "formula values match hand computation to 1e-9".into()),
        Err(what) => v.record(7, false, format!("mismatch: {what}")),
    }

    // 8
    let multi_total: usize = qa_manifest
        .counts_by_type
        .iter()
        .filter(|(t, _)| t.is_multi_hop())
        .map(|(_, n)| n)
        .sum();
    let mut ok8 = true;
    let mut mix = Vec::new();
    for (ty, target) in [(QaType::Bridge, 60.1), (QaType::YesNo, 29.6), (QaType::Comparison, 10.3)] {
        let got = 100.0 * qa_manifest.counts_by_type.get(&ty).copied().unwrap_or(0) as f64 / multi_total as f64;
        ok8 &= (got - target).abs() <= 3.0;
        mix.push(format!("{} {got:.1}%", ty.as_str()));
    }
    let s = qa_manifest.complexity_single_hop.as_ref().unwrap();
    let m = qa_manifest.complexity_multi_hop.as_ref().unwrap();
    ok8 &= m.ticker_count.mean > s.ticker_count.mean && m.concept_count.mean > s.concept_count.mean;
    v.record(
        8,
        ok8,
        format!(
            "mix {}; tickers single {:.2} < multi {:.2}; concepts single {:.2} < multi {:.2}",
            mix.join(", "),
            s.ticker_count.mean,
            m.ticker_count.mean,
            s.concept_count.mean,
            m.concept_count.mean
        ),
    );

    // 9
    let mut problems = Vec::new();
    if let Err(e) = common::storage_partition(&model) {
        problems.push(e);
    }
    if let Err(e) = common::qa_invariants(&notes, &universe, &qa) {
        problems.push(e);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let back = Caisson::load(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let differing = sample(&mut rng, qa.len(), 100)
        .into_iter()
        .filter(|&i| {
            let a = model.retrieve(&model.parse(&qa[i].question).unwrap(), 10, 1).unwrap();
            let b = back.retrieve(&back.parse(&qa[i].question).unwrap(), 10, 1).unwrap();
            !common::same_result(&a, &b)
        })
        .count();
    if differing > 0 {
        problems.push(format!("{differing} of 100 queries differ after reload"));
    }
    v.record(9, problems.is_empty(), format!("partition, QA gold/bridge, snapshot round trip: {problems:?}"));

    // Informational: the ticker-count curve of TextRAG over all 20k questions.
    let (full_report, _) = evaluate(&model, &[&text], &qa, EvalOptions::default()).unwrap();
    let curve: Vec<String> = full_report
        .by_ticker_count
        .iter()
        .map(|a| format!("{}: {:.4} (n={})", a.slice, a.mrr, a.n))
        .collect();
    println!("info: TextRAG MRR by ticker count over all {} questions: {}", qa.len(), curve.join(", "));

    let failed: Vec<usize> = v.0.iter().filter(|(_, ok, _)| !ok).map(|(id, _, _)| *id).collect();
    println!("{} of {} criteria pass; failing: {failed:?}", v.0.len() - failed.len(), v.0.len());
    if !failed.is_empty() && std::env::var("CAISSON_ACCEPTANCE_STRICT").is_ok_and(|s| s == "1") {
        std::process::exit(1);
    }
}
