//! Benchmarks the model and two single-view baselines on a question set.

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{concept_set_similarity, dot, l2_norm, IdSet};
use crate::error::{Error, Result};
use crate::io;
use crate::model::Caisson;
use crate::retriever::{ticker_score, ParsedQuery};
use crate::synfaqa::{QaPair, QaType};

pub const REPORT_VERSION: u32 = 1;
pub const RECORDS_FORMAT: &str = "caisson-eval-records";
const SAMPLE_STREAM: u64 = 0x5341_4d50;

/// Ranks notes (by corpus index) for a parsed query.
pub trait Ranker {
    fn name(&self) -> &str;
    fn rank(&self, query: &ParsedQuery, k: usize) -> Result<Vec<usize>>;
}

/// The dual-map retriever at a fixed search radius.
pub struct CaissonRanker<'m> {
    pub model: &'m Caisson,
    pub radius: usize,
}

impl Ranker for CaissonRanker<'_> {
    fn name(&self) -> &str {
        "CAISSON"
    }

    fn rank(&self, query: &ParsedQuery, k: usize) -> Result<Vec<usize>> {
        let r = self.model.retrieve(query, k, self.radius)?;
        r.hits
            .iter()
            .map(|h| {
                self.model
                    .note_index(&h.note_id)
                    .ok_or_else(|| Error::Validation(format!("unknown note `{}`", h.note_id)))
            })
            .collect()
    }
}

/// Top `k` of `(score, note)` pairs, score descending, ties by note id.
fn top_k(model: &Caisson, mut scored: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        b.0.total_cmp(&a.0)
            .then_with(|| model.notes[a.1].id.cmp(&model.notes[b.1].id))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Cosine between the query text embedding and each note's text embedding.
pub struct TextRag<'m> {
    pub model: &'m Caisson,
}

impl Ranker for TextRag<'_> {
    fn name(&self) -> &str {
        "TextRAG"
    }

    fn rank(&self, query: &ParsedQuery, k: usize) -> Result<Vec<usize>> {
        // Both sides are unit vectors.
        let scored = (0..self.model.notes.len())
            .map(|i| (dot(&query.text_embedding, self.model.text_embedding(i)), i))
            .collect();
        Ok(top_k(self.model, scored, k))
    }
}

/// Cosine over `[text; entities]`, restricted to notes sharing a query
/// ticker whenever the query names one.
pub struct TextEntityRag<'m> {
    model: &'m Caisson,
    norms: Vec<f64>,
    by_ticker: Vec<Vec<usize>>,
}

impl<'m> TextEntityRag<'m> {
    pub fn new(model: &'m Caisson) -> Self {
        let norms = (0..model.notes.len())
            .map(|i| l2_norm(model.som1_vector(i)))
            .collect();
        let mut by_ticker = vec![Vec::new(); model.universe.tickers.len()];
        for (i, n) in model.notes.iter().enumerate() {
            for t in n.tickers.iter() {
                by_ticker[t as usize].push(i);
            }
        }
        Self {
            model,
            norms,
            by_ticker,
        }
    }
}

impl Ranker for TextEntityRag<'_> {
    fn name(&self) -> &str {
        "TextEntityRAG"
    }

    fn rank(&self, query: &ParsedQuery, k: usize) -> Result<Vec<usize>> {
        let candidates: Vec<usize> = if query.tickers.is_empty() {
            (0..self.model.notes.len()).collect()
        } else {
            let mut c: Vec<usize> = query
                .tickers
                .iter()
                .flat_map(|t| self.by_ticker[t as usize].iter().copied())
                .collect();
            c.sort_unstable();
            c.dedup();
            c
        };
        let qn = l2_norm(&query.som1_query_vec);
        let scored = candidates
            .into_iter()
            .map(|i| {
                let d = self.norms[i] * qn;
                let s = if d == 0.0 {
                    0.0
                } else {
                    dot(&query.som1_query_vec, self.model.som1_vector(i)) / d
                };
                (s, i)
            })
            .collect();
        Ok(top_k(self.model, scored, k))
    }
}

/// `(ticker_dis, concept_dis)` over the retrieved notes: one minus the mean
/// ticker score, and one minus the mean concept similarity clamped to
/// `[0, 1]`. A query without concepts agrees with nothing. Empty retrievals
/// count as total disagreement.
pub fn disagreement(
    query_tickers: &IdSet,
    query_concepts: &IdSet,
    retrieved: &[(&IdSet, &IdSet)],
    model: &Caisson,
) -> Result<(f64, f64)> {
    if retrieved.is_empty() {
        return Ok((1.0, 1.0));
    }
    let n = retrieved.len() as f64;
    let mut t = 0.0;
    let mut c = 0.0;
    for (td, cd) in retrieved {
        t += ticker_score(query_tickers, td);
        if !query_concepts.is_empty() && !cd.is_empty() {
            c += concept_set_similarity(query_concepts, cd, &model.concepts.sim)?.clamp(0.0, 1.0);
        }
    }
    Ok((1.0 - t / n, 1.0 - c / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub qa_id: String,
    pub model: String,
    pub qtype: QaType,
    pub ticker_count: usize,
    pub rank_of_first_gold: Option<usize>,
    pub reciprocal_rank: f64,
    /// Rank at which every gold note has appeared.
    pub rank_of_all_golds: Option<usize>,
    pub strict_reciprocal_rank: f64,
    pub hit1: bool,
    pub hit5: bool,
    pub hit10: bool,
    pub ticker_disagreement: f64,
    pub concept_disagreement: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub slice: String,
    pub n: usize,
    pub mrr: f64,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub strict_mrr: f64,
    pub ticker_dis: f64,
    pub concept_dis: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl Aggregate {
    fn of(model: &str, slice: &str, records: &[&EvalRecord]) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&EvalRecord) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                records.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        let ms: Vec<f64> = records.iter().map(|r| r.elapsed_ms).collect();
        Self {
            model: model.to_string(),
            slice: slice.to_string(),
            n,
            mrr: mean(&|r| r.reciprocal_rank),
            top1: mean(&|r| r.hit1 as u8 as f64),
            top5: mean(&|r| r.hit5 as u8 as f64),
            top10: mean(&|r| r.hit10 as u8 as f64),
            strict_mrr: mean(&|r| r.strict_reciprocal_rank),
            ticker_dis: mean(&|r| r.ticker_disagreement),
            concept_dis: mean(&|r| r.concept_disagreement),
            mean_ms: mean(&|r| r.elapsed_ms),
            p95_ms: percentile(&ms, 0.95),
        }
    }
}

/// Nearest-rank percentile; NaN for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p * v.len() as f64).ceil().max(1.0) as usize;
    v[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub k_max: usize,
    pub strict_multi_gold: bool,
    pub questions: usize,
    /// TOML of the run config the model was trained with.
    pub run_config: String,
    pub overall: Vec<Aggregate>,
    /// Slices `single_hop`, `multi_hop`, `bridge`, `comparison`, `yes_no`.
    pub by_type: Vec<Aggregate>,
    /// Slices `0` through `4` tickers named in the question.
    pub by_ticker_count: Vec<Aggregate>,
}

impl EvalReport {
    pub fn find<'a>(rows: &'a [Aggregate], model: &str, slice: &str) -> Option<&'a Aggregate> {
        rows.iter().find(|a| a.model == model && a.slice == slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub k_max: usize,
    /// Multi-hop questions count as answered only once every gold note is
    /// retrieved; the headline metrics then use that rank.
    pub strict_multi_gold: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k_max: 10,
            strict_multi_gold: false,
        }
    }
}

type Slice = (&'static str, fn(&EvalRecord) -> bool);

const TYPE_SLICES: [Slice; 5] = [
    ("single_hop", |r| !r.qtype.is_multi_hop()),
    ("multi_hop", |r| r.qtype.is_multi_hop()),
    ("bridge", |r| r.qtype == QaType::Bridge),
    ("comparison", |r| r.qtype == QaType::Comparison),
    ("yes_no", |r| r.qtype == QaType::YesNo),
];

/// Runs every question against every ranker, one query at a time. Timing
/// covers query parsing and ranking.
pub fn evaluate(
    model: &Caisson,
    rankers: &[&dyn Ranker],
    qa: &[QaPair],
    opts: EvalOptions,
) -> Result<(EvalReport, Vec<EvalRecord>)> {
    if qa.is_empty() {
        return Err(Error::Empty("question set"));
    }
    if opts.k_max == 0 {
        return Err(Error::Validation("k_max must be at least 1".into()));
    }
    let mut golds = Vec::with_capacity(qa.len());
    for q in qa {
        let g = q
            .gold_note_ids
            .iter()
            .map(|id| {
                model.note_index(id).ok_or_else(|| {
                    Error::Validation(format!("question {} cites unknown note `{id}`", q.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if g.is_empty() {
            return Err(Error::Validation(format!("question {} has no gold note", q.id)));
        }
        golds.push(g);
    }

    let mut records = Vec::with_capacity(qa.len() * rankers.len());
    for ranker in rankers {
        for (q, gold) in qa.iter().zip(&golds) {
            let start = Instant::now();
            let parsed = model.parse(&q.question)?;
            let ranked = ranker.rank(&parsed, opts.k_max)?;
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;

            let any = ranked.iter().position(|i| gold.contains(i)).map(|p| p + 1);
            let all = gold
                .iter()
                .map(|g| ranked.iter().position(|i| i == g).map(|p| p + 1))
                .collect::<Option<Vec<_>>>()
                .and_then(|v| v.into_iter().max());
            let first = if opts.strict_multi_gold && q.qtype.is_multi_hop() {
                all
            } else {
                any
            };
            let sets: Vec<(&IdSet, &IdSet)> = ranked
                .iter()
                .map(|&i| (&model.notes[i].tickers, &model.notes[i].concepts))
                .collect();
            let (td, cd) = disagreement(&parsed.tickers, &parsed.concepts, &sets, model)?;
            let hit = |k: usize| first.is_some_and(|r| r <= k);
            records.push(EvalRecord {
                qa_id: q.id.clone(),
                model: ranker.name().to_string(),
                qtype: q.qtype,
                ticker_count: parsed.tickers.len(),
                rank_of_first_gold: first,
                reciprocal_rank: first.map_or(0.0, |r| 1.0 / r as f64),
                rank_of_all_golds: all,
                strict_reciprocal_rank: all.map_or(0.0, |r| 1.0 / r as f64),
                hit1: hit(1),
                hit5: hit(5),
                hit10: hit(10),
                ticker_disagreement: td,
                concept_disagreement: cd,
                elapsed_ms,
            });
        }
    }

    let mut overall = Vec::new();
    let mut by_type = Vec::new();
    let mut by_ticker_count = Vec::new();
    for ranker in rankers {
        let name = ranker.name();
        let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.model == name).collect();
        overall.push(Aggregate::of(name, "all", &mine));
        for (slice, keep) in TYPE_SLICES {
            let part: Vec<&EvalRecord> = mine.iter().copied().filter(|r| keep(r)).collect();
            by_type.push(Aggregate::of(name, slice, &part));
        }
        for t in 0..=4 {
            let part: Vec<&EvalRecord> =
                mine.iter().copied().filter(|r| r.ticker_count == t).collect();
            by_ticker_count.push(Aggregate::of(name, &t.to_string(), &part));
        }
    }
    let report = EvalReport {
        format_version: REPORT_VERSION,
        k_max: opts.k_max,
        strict_multi_gold: opts.strict_multi_gold,
        questions: qa.len(),
        run_config: model.config.to_toml_string(),
        overall,
        by_type,
        by_ticker_count,
    };
    Ok((report, records))
}

/// `n_single` single-hop and `n_multi` multi-hop questions drawn without
/// replacement, in their original order. Sets no larger than the requested
/// total are returned whole.
pub fn stratified_sample(qa: &[QaPair], n_single: usize, n_multi: usize, seed: u64) -> Vec<QaPair> {
    if qa.len() <= n_single + n_multi {
        return qa.to_vec();
    }
    // A separate stream, so a sample seeded like the generator does not
    // replay the generator's own draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLE_STREAM);
    let mut keep = Vec::new();
    for multi in [false, true] {
        let idx: Vec<usize> = (0..qa.len())
            .filter(|&i| qa[i].qtype.is_multi_hop() == multi)
            .collect();
        let want = if multi { n_multi } else { n_single }.min(idx.len());
        keep.extend(
            rand::seq::index::sample(&mut rng, idx.len(), want)
                .into_iter()
                .map(|j| idx[j]),
        );
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| qa[i].clone()).collect()
}

fn write_table(path: &Path, rows: &[Aggregate]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `overall.csv`, `by_type.csv`, `by_ticker_count.csv`,
/// `report.json` and `records.jsonl` into `dir`.
pub fn report_export(report: &EvalReport, records: &[EvalRecord], dir: &Path) -> Result<()> {
    if report.questions == 0 {
        return Err(Error::Empty("question set"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_table(&dir.join("overall.csv"), &report.overall)?;
    write_table(&dir.join("by_type.csv"), &report.by_type)?;
    write_table(&dir.join("by_ticker_count.csv"), &report.by_ticker_count)?;
    io::write_json(dir.join("report.json"), report)?;
    io::write_records(dir.join("records.jsonl"), RECORDS_FORMAT, REPORT_VERSION, records)
}

/// Per-epoch quantization errors of both maps as CSV.
pub fn export_trace(model: &Caisson, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["epoch", "q_som1", "q_som2", "seconds"])
        .map_err(|e| Error::parse("trace", e))?;
    let [t1, t2] = &model.traces;
    for (e, (q1, q2)) in t1
        .quantization_errors
        .iter()
        .zip(&t2.quantization_errors)
        .enumerate()
    {
        let secs = t1.epoch_seconds.get(e).map_or(String::new(), |s| format!("{s:.4}"));
        w.write_record([e.to_string(), q1.to_string(), q2.to_string(), secs])
            .map_err(|e| Error::parse("trace", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
