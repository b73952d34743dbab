//! Command line front end.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalharness::{self, CaissonRanker, EvalOptions, Ranker, TextEntityRag, TextRag};
use crate::io;
use crate::model::{Caisson, RunConfig, SomPath};
use crate::notegen::{self, Note, NoteGenParams, CORPUS_FORMAT, CORPUS_VERSION};
use crate::synfaqa::{self, QaPair, QA_FORMAT, QA_VERSION};
use crate::universe::{load_universe, UniverseConfig};

pub const VIZ_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "caisson", version, about = "Dual self-organizing-map retrieval over analyst notes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic note corpus.
    GenNotes(GenNotesArgs),
    /// Train both maps on a corpus and write a snapshot.
    Train(TrainArgs),
    /// Answer one query against a snapshot.
    Query(QueryArgs),
    /// Generate single-hop and multi-hop questions over a corpus.
    GenQa(GenQaArgs),
    /// Benchmark a snapshot and the baselines on a question set.
    Eval(EvalArgs),
    /// Export per-node summaries and training traces for plotting.
    VizExport(VizArgs),
}

#[derive(Debug, Args)]
pub struct GenNotesArgs {
    /// Universe file; the built-in universe when omitted.
    #[arg(long)]
    pub universe: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (TOML); defaults throughout when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress the per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub q: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenQaArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Universe the corpus was generated from; the built-in one when omitted.
    #[arg(long)]
    pub universe: Option<PathBuf>,
    #[arg(long)]
    pub single: usize,
    #[arg(long)]
    pub multi: usize,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Text,
    TextEntity,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Baseline::Text, Baseline::TextEntity])]
    pub baselines: Vec<Baseline>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub strict_multi_gold: bool,
    /// Evaluate a seeded sample of this many single-hop questions.
    #[arg(long)]
    pub sample_single: Option<usize>,
    /// Evaluate a seeded sample of this many multi-hop questions.
    #[arg(long)]
    pub sample_multi: Option<usize>,
    /// Defaults to the QA seed of the model's run config.
    #[arg(long)]
    pub sample_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus the snapshot was trained on; checked against the snapshot.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// One grid node. Label columns are `;`-separated and empty for nodes
/// without documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub map: SomPath,
    pub row: usize,
    pub col: usize,
    pub documents: usize,
    pub top_tickers: String,
    /// Most frequent sector; map 1 only.
    pub industry: String,
    /// Most frequent concepts; map 2 only.
    pub top_concepts: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct VizManifest {
    format_version: u32,
    run_config: String,
    universe_hash: String,
    files: Vec<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenNotes(a) => gen_notes(a),
        Command::Train(a) => train(a),
        Command::Query(a) => query(a),
        Command::GenQa(a) => gen_qa(a),
        Command::Eval(a) => eval(a),
        Command::VizExport(a) => viz_export(a),
    }
}

fn universe_from(path: Option<&Path>) -> Result<UniverseConfig> {
    match path {
        Some(p) => load_universe(p),
        None => Ok(UniverseConfig::default_universe()),
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<Note>> {
    io::read_records(path, CORPUS_FORMAT, CORPUS_VERSION)
}

pub fn read_qa(path: &Path) -> Result<Vec<QaPair>> {
    io::read_records(path, QA_FORMAT, QA_VERSION)
}

fn gen_notes(a: GenNotesArgs) -> Result<()> {
    let universe = universe_from(a.universe.as_deref())?;
    let (notes, manifest) = notegen::generate_corpus(&universe, a.n, a.seed, &NoteGenParams::default())?;
    io::write_records(&a.out, CORPUS_FORMAT, CORPUS_VERSION, &notes)?;
    io::write_json(io::manifest_path(&a.out), &manifest)?;
    println!("wrote {} notes to {}", notes.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let universe = config.universe()?;
    let notes = read_corpus(&a.corpus)?;
    let quiet = a.quiet;
    let model = Caisson::train(&config, universe, &notes, &mut |epoch, q1, q2, secs| {
        if !quiet {
            println!("epoch {:>4}  Q1 {q1:.6}  Q2 {q2:.6}  {secs:.2}s", epoch + 1);
        }
    })?;
    model.save(&a.out)?;
    let trace = sibling(&a.out, "trace.csv");
    evalharness::export_trace(&model, &trace)?;
    println!("wrote {} and {}", a.out.display(), trace.display());
    Ok(())
}

/// `model.bin` -> `model.<suffix>`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn query(a: QueryArgs) -> Result<()> {
    let model = Caisson::load(&a.model)?;
    let k = a.k.unwrap_or(model.config.retrieval.k);
    let radius = a.radius.unwrap_or(model.config.retrieval.radius);
    let parsed = model.parse(&a.q)?;
    let result = model.retrieve(&parsed, k, radius)?;
    if a.json {
        let text = serde_json::to_string_pretty(&result).map_err(|e| Error::parse("json", e))?;
        println!("{text}");
        return Ok(());
    }
    println!(
        "tickers: {:?}  concepts: {:?}  candidates: {}  radius: {}  {:.2} ms",
        model.ticker_symbols(&parsed.tickers),
        model.concept_names(&parsed.concepts),
        result.candidates,
        result.radius,
        result.elapsed_ms
    );
    for (rank, h) in result.hits.iter().enumerate() {
        let paths: Vec<&str> = h
            .source_paths
            .iter()
            .map(|p| match p {
                SomPath::Som1 => "SOM1",
                SomPath::Som2 => "SOM2",
            })
            .collect();
        println!(
            "{:>3}  {}  {:.4}  (t {:.3} c {:.3} s {:.3})  {}",
            rank + 1,
            h.note_id,
            h.final_score,
            h.ticker_score,
            h.concept_score,
            h.semantic_score,
            paths.join("+")
        );
    }
    Ok(())
}

fn gen_qa(a: GenQaArgs) -> Result<()> {
    let universe = universe_from(a.universe.as_deref())?;
    let notes = read_corpus(&a.corpus)?;
    let (qa, manifest) = synfaqa::generate_qa(&notes, &universe, a.single, a.multi, a.seed)?;
    io::write_records(&a.out, QA_FORMAT, QA_VERSION, &qa)?;
    io::write_json(io::manifest_path(&a.out), &manifest)?;
    println!("wrote {} questions to {}", qa.len(), a.out.display());
    Ok(())
}

/// Fails unless `notes` are exactly the notes `model` was trained on.
fn check_corpus_matches(model: &Caisson, notes: &[Note]) -> Result<()> {
    let ids: HashSet<&str> = notes.iter().map(|n| n.id.as_str()).collect();
    if ids.len() != model.notes.len() || model.notes.iter().any(|m| !ids.contains(m.id.as_str())) {
        return Err(Error::Validation(
            "corpus does not match the notes the model was trained on".into(),
        ));
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = Caisson::load(&a.model)?;
    check_corpus_matches(&model, &read_corpus(&a.corpus)?)?;
    let mut qa = read_qa(&a.qa)?;
    if a.sample_single.is_some() || a.sample_multi.is_some() {
        let single = qa.iter().filter(|q| !q.qtype.is_multi_hop()).count();
        let multi = qa.len() - single;
        qa = evalharness::stratified_sample(
            &qa,
            a.sample_single.unwrap_or(single),
            a.sample_multi.unwrap_or(multi),
            a.sample_seed.unwrap_or(model.config.seeds.qa),
        );
    }
    let caisson = CaissonRanker {
        model: &model,
        radius: a.radius.unwrap_or(model.config.retrieval.radius),
    };
    let text = TextRag { model: &model };
    let text_entity = TextEntityRag::new(&model);
    let mut rankers: Vec<&dyn Ranker> = vec![&caisson];
    for b in &a.baselines {
        let r: &dyn Ranker = match b {
            Baseline::Text => &text,
            Baseline::TextEntity => &text_entity,
        };
        if !rankers.iter().any(|x| x.name() == r.name()) {
            rankers.push(r);
        }
    }
    let opts = EvalOptions {
        k_max: a.k,
        strict_multi_gold: a.strict_multi_gold,
    };
    let (report, records) = evalharness::evaluate(&model, &rankers, &qa, opts)?;
    evalharness::report_export(&report, &records, &a.out)?;
    println!("{:<14} {:>6} {:>6} {:>6} {:>6} {:>8}", "model", "MRR", "top1", "top5", "top10", "ms");
    for r in &report.overall {
        println!(
            "{:<14} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>8.3}",
            r.model, r.mrr, r.top1, r.top5, r.top10, r.mean_ms
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn top_labels(counts: BTreeMap<&str, usize>, n: usize) -> Vec<&str> {
    let mut v: Vec<(&str, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().take(n).map(|(s, _)| s).collect()
}

/// Per-node document counts and labels for one map, row-major.
pub fn node_summaries(model: &Caisson, map: SomPath) -> Result<Vec<NodeSummary>> {
    let grid = match map {
        SomPath::Som1 => &model.som1,
        SomPath::Som2 => &model.som2,
    };
    if !grid.is_trained() || model.notes.is_empty() {
        return Err(Error::Empty("trained model"));
    }
    let mut out = Vec::with_capacity(grid.node_count());
    for node in 0..grid.node_count() {
        let (row, col) = grid.position(node);
        let docs = grid.collection(node);
        let mut tickers = BTreeMap::new();
        let mut sectors = BTreeMap::new();
        let mut concepts = BTreeMap::new();
        for d in docs {
            let i = model
                .note_index(&d.id)
                .ok_or_else(|| Error::Validation(format!("map stores unknown note `{}`", d.id)))?;
            let meta = &model.notes[i];
            for t in meta.tickers.iter() {
                let info = &model.universe.tickers[t as usize];
                *tickers.entry(info.symbol.as_str()).or_insert(0) += 1;
                *sectors.entry(info.sector.as_str()).or_insert(0) += 1;
            }
            for c in meta.concepts.iter() {
                *concepts.entry(model.matcher.name(c)).or_insert(0) += 1;
            }
        }
        let (industry, top_concepts) = match map {
            SomPath::Som1 => (top_labels(sectors, 1).join(";"), String::new()),
            SomPath::Som2 => (String::new(), top_labels(concepts, 3).join(";")),
        };
        out.push(NodeSummary {
            map,
            row,
            col,
            documents: docs.len(),
            top_tickers: top_labels(tickers, 3).join(";"),
            industry,
            top_concepts,
        });
    }
    Ok(out)
}

fn viz_export(a: VizArgs) -> Result<()> {
    let model = Caisson::load(&a.model)?;
    if let Some(c) = &a.corpus {
        check_corpus_matches(&model, &read_corpus(c)?)?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut files = Vec::new();
    for (map, name) in [(SomPath::Som1, "som1_nodes.csv"), (SomPath::Som2, "som2_nodes.csv")] {
        let path = a.out.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for row in node_summaries(&model, map)? {
            w.serialize(row).map_err(|e| Error::parse(name, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push(name.to_string());
    }
    evalharness::export_trace(&model, &a.out.join("trace.csv"))?;
    files.push("trace.csv".into());
    let manifest = VizManifest {
        format_version: VIZ_VERSION,
        run_config: model.config.to_toml_string(),
        universe_hash: model.universe.content_hash(),
        files,
    };
    io::write_json(a.out.join("viz.manifest.json"), &manifest)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
