//! The trained two-map model, its run configuration and its snapshot file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embed::{
    build_ticker_embeddings, combine_entities, document_vectors, unit_counts, ConceptEmbeddings,
    ConceptMatcher, Embedder, EmbeddingProvider, IdSet, ProviderSpec, TickerEmbeddingParams,
    TickerEmbeddings,
};
use crate::error::{Error, Result};
use crate::notegen::Note;
use crate::som::{SomGrid, SomParams, TrainingTrace};
use crate::universe::{load_universe, UniverseConfig};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"CAISSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub corpus: u64,
    pub qa: u64,
    pub som1: u64,
    pub som2: u64,
    pub ticker_embeddings: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            corpus: 7,
            qa: 11,
            som1: 101,
            som2: 202,
            ticker_embeddings: TickerEmbeddingParams::default().seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomConfig {
    pub n: usize,
    pub epochs: usize,
    pub alpha0_som1: f64,
    pub alpha0_som2: f64,
    pub gamma: f64,
    /// Defaults to `n / 2`.
    pub sigma0: Option<f64>,
    /// Defaults to `3 / epochs`.
    pub lambda_decay: Option<f64>,
    pub batch_size: usize,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            n: 10,
            epochs: 150,
            alpha0_som1: 0.05,
            alpha0_som2: 0.05,
            gamma: 0.8,
            sigma0: None,
            lambda_decay: None,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub radius: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 10, radius: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntityConfig {
    pub dim: usize,
    pub lambda: f64,
    pub beta: f64,
}

impl Default for EntityConfig {
    fn default() -> Self {
        let p = TickerEmbeddingParams::default();
        Self {
            dim: p.dim,
            lambda: p.lambda,
            beta: p.beta,
        }
    }
}

/// Everything a run needs besides its input files. Every field has a
/// default, so an empty config file is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Universe file; the built-in universe when absent.
    pub universe: Option<PathBuf>,
    pub seeds: Seeds,
    pub som: SomConfig,
    pub retrieval: RetrievalConfig,
    pub provider: ProviderSpec,
    pub entity: EntityConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse("run config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.som_params(1)?;
        self.som_params(2)?;
        if self.retrieval.k == 0 {
            return Err(Error::Validation("retrieval.k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn universe(&self) -> Result<UniverseConfig> {
        match &self.universe {
            Some(p) => load_universe(p),
            None => Ok(UniverseConfig::default_universe()),
        }
    }

    /// Hyperparameters for map 1 (text + entities) or map 2 (entities + concepts).
    pub fn som_params(&self, which: u8) -> Result<SomParams> {
        let s = &self.som;
        let (alpha0, seed) = match which {
            1 => (s.alpha0_som1, self.seeds.som1),
            2 => (s.alpha0_som2, self.seeds.som2),
            _ => return Err(Error::Validation(format!("no map number {which}"))),
        };
        let dim = self.provider_dim() + self.entity.dim;
        let mut p = SomParams::new(s.n, dim, s.epochs, seed);
        p.alpha0 = alpha0;
        p.gamma = s.gamma;
        p.batch_size = s.batch_size;
        if let Some(v) = s.sigma0 {
            p.sigma0 = v;
        }
        if let Some(v) = s.lambda_decay {
            p.lambda_decay = v;
        }
        p.validate()?;
        Ok(p)
    }

    fn provider_dim(&self) -> usize {
        match &self.provider {
            ProviderSpec::Deterministic { dim, .. } => *dim,
            // Sidecar width is only known once the file is read.
            ProviderSpec::External { .. } => crate::embed::TEXT_DIM,
        }
    }

    pub fn ticker_params(&self) -> TickerEmbeddingParams {
        TickerEmbeddingParams {
            dim: self.entity.dim,
            lambda: self.entity.lambda,
            beta: self.entity.beta,
            seed: self.seeds.ticker_embeddings,
        }
    }
}

/// Per-note data kept beside the maps for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteMeta {
    pub id: String,
    pub tickers: IdSet,
    pub concepts: IdSet,
}

/// Which map surfaced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SomPath {
    #[serde(rename = "SOM1")]
    Som1,
    #[serde(rename = "SOM2")]
    Som2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Snapshot {
    run_config: String,
    provider: String,
    universe: String,
    tickers: TickerEmbeddings,
    concepts: ConceptEmbeddings,
    notes: Vec<NoteMeta>,
    som1: SomGrid,
    som2: SomGrid,
    trace1: TrainingTrace,
    trace2: TrainingTrace,
}

/// Both trained maps plus the embedding tables and caches retrieval needs.
pub struct Caisson {
    pub config: RunConfig,
    pub universe: UniverseConfig,
    pub provider_spec: ProviderSpec,
    provider: Box<dyn EmbeddingProvider>,
    pub tickers: TickerEmbeddings,
    pub concepts: ConceptEmbeddings,
    pub matcher: ConceptMatcher,
    pub som1: SomGrid,
    pub som2: SomGrid,
    pub notes: Vec<NoteMeta>,
    pub traces: [TrainingTrace; 2],
    index: HashMap<String, usize>,
    /// (node, slot) of each note's map-1 vector.
    locator: Vec<(u32, u32)>,
    /// Unit-count entity segments for ticker sets seen in the corpus.
    entity_cache: HashMap<IdSet, Vec<f64>>,
}

impl std::fmt::Debug for Caisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Caisson")
            .field("notes", &self.notes.len())
            .field("som1", &self.som1.params)
            .field("som2", &self.som2.params)
            .finish_non_exhaustive()
    }
}

/// Per-epoch progress: `(epoch, q_som1, q_som2, seconds)`.
pub type EpochCallback<'a> = dyn FnMut(usize, f64, f64, f64) + 'a;

impl Caisson {
    /// Embeds `notes` and trains both maps in lockstep, one thread each.
    pub fn train(
        config: &RunConfig,
        universe: UniverseConfig,
        notes: &[Note],
        on_epoch: &mut EpochCallback<'_>,
    ) -> Result<Self> {
        config.validate()?;
        if notes.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        let provider_spec = config.provider.clone();
        let provider = provider_spec.build()?;
        let tickers = build_ticker_embeddings(&universe, config.ticker_params())?;
        let concepts = ConceptEmbeddings::build(&universe.concepts, provider.as_ref())?;

        let embedder = Embedder {
            universe: &universe,
            provider: provider.as_ref(),
            tickers: &tickers,
            concepts: &concepts,
        };
        let mut ids = Vec::with_capacity(notes.len());
        let mut v1 = Vec::with_capacity(notes.len());
        let mut v2 = Vec::with_capacity(notes.len());
        let mut meta = Vec::with_capacity(notes.len());
        for note in notes {
            let dv = document_vectors(note, &embedder)?;
            ids.push(note.id.clone());
            meta.push(NoteMeta {
                id: note.id.clone(),
                tickers: dv.ticker_set,
                concepts: dv.concept_set,
            });
            v1.push(dv.som1_vec);
            v2.push(dv.som2_vec);
        }

        let mut p1 = config.som_params(1)?;
        let mut p2 = config.som_params(2)?;
        p1.dim = embedder.view_dim();
        p2.dim = tickers.params.dim + concepts.dim();
        if p1.epochs != p2.epochs {
            return Err(Error::Validation("both maps must share the epoch count".into()));
        }
        let mut som1 = SomGrid::new(p1)?;
        let mut som2 = SomGrid::new(p2)?;
        som1.check_corpus(&ids, &v1)?;
        som2.check_corpus(&ids, &v2)?;

        let mut traces = [TrainingTrace::default(), TrainingTrace::default()];
        for t in 0..p1.epochs {
            let start = Instant::now();
            let (q1, q2) = std::thread::scope(|s| {
                let h = s.spawn(|| som2.train_epoch(&v2, t));
                let q1 = som1.train_epoch(&v1, t);
                (q1, h.join().expect("map 2 training thread panicked"))
            });
            let (q1, q2) = (q1?, q2?);
            let secs = start.elapsed().as_secs_f64();
            for (trace, q) in traces.iter_mut().zip([q1, q2]) {
                trace.quantization_errors.push(q);
                trace.epoch_seconds.push(secs);
            }
            on_epoch(t, q1, q2, secs);
        }
        som1.store(&ids, &v1);
        som2.store(&ids, &v2);

        Self::assemble(
            config.clone(),
            universe,
            provider_spec,
            provider,
            tickers,
            concepts,
            meta,
            som1,
            som2,
            traces,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: RunConfig,
        universe: UniverseConfig,
        provider_spec: ProviderSpec,
        provider: Box<dyn EmbeddingProvider>,
        tickers: TickerEmbeddings,
        concepts: ConceptEmbeddings,
        notes: Vec<NoteMeta>,
        som1: SomGrid,
        som2: SomGrid,
        traces: [TrainingTrace; 2],
    ) -> Result<Self> {
        let index: HashMap<String, usize> = notes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        if index.len() != notes.len() {
            return Err(Error::Validation("duplicate note ids in model".into()));
        }
        let mut locator = vec![(u32::MAX, u32::MAX); notes.len()];
        for node in 0..som1.node_count() {
            for (slot, doc) in som1.collection(node).iter().enumerate() {
                let i = *index.get(&doc.id).ok_or_else(|| {
                    Error::Validation(format!("map 1 stores unknown note `{}`", doc.id))
                })?;
                locator[i] = (node as u32, slot as u32);
            }
        }
        if som1.is_trained() && locator.iter().any(|l| l.0 == u32::MAX) {
            return Err(Error::Validation("map 1 does not store every note".into()));
        }

        let mut entity_cache = HashMap::new();
        for n in &notes {
            if entity_cache.contains_key(&n.tickers) {
                continue;
            }
            let symbols = n.tickers.iter().map(|i| universe.tickers[i as usize].symbol.as_str());
            let v = combine_entities(&unit_counts(symbols), &tickers)?;
            entity_cache.insert(n.tickers.clone(), v);
        }

        Ok(Self {
            matcher: ConceptMatcher::new(&universe.concepts),
            config,
            universe,
            provider_spec,
            provider,
            tickers,
            concepts,
            som1,
            som2,
            notes,
            traces,
            index,
            locator,
            entity_cache,
        })
    }

    pub fn embedder(&self) -> Embedder<'_> {
        Embedder {
            universe: &self.universe,
            provider: self.provider.as_ref(),
            tickers: &self.tickers,
            concepts: &self.concepts,
        }
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.som1.is_trained() && self.som2.is_trained()
    }

    pub fn text_dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn note_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// The `[text; entities]` vector stored for note `i`.
    pub fn som1_vector(&self, i: usize) -> &[f64] {
        let (node, slot) = self.locator[i];
        &self.som1.collection(node as usize)[slot as usize].vector
    }

    pub fn text_embedding(&self, i: usize) -> &[f64] {
        &self.som1_vector(i)[..self.text_dim()]
    }

    pub(crate) fn cached_entities(&self, tickers: &IdSet) -> Option<&[f64]> {
        self.entity_cache.get(tickers).map(Vec::as_slice)
    }

    pub fn ticker_symbols(&self, set: &IdSet) -> Vec<&str> {
        set.iter()
            .map(|i| self.universe.tickers[i as usize].symbol.as_str())
            .collect()
    }

    pub fn concept_names(&self, set: &IdSet) -> Vec<&str> {
        set.iter()
            .map(|i| self.universe.concepts[i as usize].name.as_str())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let snap = Snapshot {
            run_config: self.config.to_toml_string(),
            provider: serde_json::to_string(&self.provider_spec)
                .map_err(|e| Error::parse("provider spec", e))?,
            universe: self.universe.to_toml_string(),
            tickers: self.tickers.clone(),
            concepts: self.concepts.clone(),
            notes: self.notes.clone(),
            som1: self.som1.clone(),
            som2: self.som2.clone(),
            trace1: self.traces[0].clone(),
            trace2: self.traces[1].clone(),
        };
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes()).map_err(io)?;
        bincode::serialize_into(&mut w, &snap).map_err(|e| Error::parse("model snapshot", e))?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::parse(path.display().to_string(), "not a model snapshot"));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version).map_err(io)?;
        let version = u32::from_le_bytes(version);
        if version != SNAPSHOT_VERSION {
            return Err(Error::FormatVersion {
                format: "model snapshot",
                found: version,
                supported: SNAPSHOT_VERSION,
            });
        }
        let snap: Snapshot = bincode::deserialize_from(&mut r)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        let config = RunConfig::from_toml_str(&snap.run_config)?;
        let provider_spec: ProviderSpec =
            serde_json::from_str(&snap.provider).map_err(|e| Error::parse("provider spec", e))?;
        let provider = provider_spec.build()?;
        let universe = UniverseConfig::from_toml_str(&snap.universe)?;
        Self::assemble(
            config,
            universe,
            provider_spec,
            provider,
            snap.tickers,
            snap.concepts,
            snap.notes,
            snap.som1,
            snap.som2,
            [snap.trace1, snap.trace2],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notegen::{generate_corpus, NoteGenParams};

    pub(crate) fn small_config() -> RunConfig {
        let mut c = RunConfig::default();
        c.som.n = 4;
        c.som.epochs = 5;
        c.provider = ProviderSpec::Deterministic { dim: 32, seed: 3 };
        c.entity.dim = 8;
        c
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        let p = c.som_params(1).unwrap();
        assert_eq!((p.n, p.dim, p.epochs, p.batch_size), (10, 434, 150, 32));
        assert!((p.sigma0 - 5.0).abs() < 1e-12);
        assert!((p.lambda_decay - 0.02).abs() < 1e-12);
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);

        assert!(RunConfig::from_toml_str("[som]\nalpha0_som1 = 0.0\n").is_err());
        assert!(RunConfig::from_toml_str("[som]\nbogus = 1\n").is_err());
        let ext = RunConfig::from_toml_str(
            "[provider]\nkind = \"external\"\nsidecar = \"emb.bin\"\n",
        )
        .unwrap();
        assert!(matches!(ext.provider, ProviderSpec::External { .. }));
    }

    #[test]
    fn train_save_load() {
        let u = UniverseConfig::default_universe();
        let (notes, _) = generate_corpus(&u, 60, 5, &NoteGenParams::default()).unwrap();
        let cfg = small_config();
        let mut epochs = 0;
        let m = Caisson::train(&cfg, u, &notes, &mut |_, _, _, _| epochs += 1).unwrap();
        assert_eq!(epochs, 5);
        assert!(m.is_trained());
        assert_eq!(m.traces[0].quantization_errors.len(), 5);
        for som in [&m.som1, &m.som2] {
            let total: usize = (0..som.node_count()).map(|i| som.collection(i).len()).sum();
            assert_eq!(total, 60);
        }
        for (i, n) in notes.iter().enumerate() {
            assert_eq!(m.note_index(&n.id), Some(i));
            assert_eq!(m.som1_vector(i).len(), 40);
        }

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.snap");
        m.save(&p).unwrap();
        let back = Caisson::load(&p).unwrap();
        assert_eq!(back.som1, m.som1);
        assert_eq!(back.som2, m.som2);
        assert_eq!(back.notes, m.notes);
        let p2 = dir.path().join("m2.snap");
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());

        let mut bytes = std::fs::read(&p).unwrap();
        bytes[8] = 9;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(Caisson::load(&p), Err(Error::FormatVersion { found: 9, .. })));
    }
}
