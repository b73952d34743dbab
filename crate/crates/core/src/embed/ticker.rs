use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::l2_norm;
use crate::error::{Error, Result};
use crate::universe::UniverseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickerEmbeddingParams {
    pub dim: usize,
    /// Weight of the ticker's own draw against its sector mean.
    pub lambda: f64,
    /// Scale of the log market-cap shift.
    pub beta: f64,
    pub seed: u64,
}

impl Default for TickerEmbeddingParams {
    fn default() -> Self {
        Self {
            dim: super::ENTITY_DIM,
            lambda: 0.7,
            beta: 0.01,
            seed: 0x71c4e5,
        }
    }
}

/// All construction stages for one ticker; `normalized` is what the maps see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerEmbedding {
    pub symbol: String,
    pub base: Vec<f64>,
    pub blended: Vec<f64>,
    pub shifted: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerEmbeddings {
    pub params: TickerEmbeddingParams,
    pub table: BTreeMap<String, TickerEmbedding>,
}

impl TickerEmbeddings {
    pub fn get(&self, symbol: &str) -> Result<&[f64]> {
        self.table
            .get(symbol)
            .map(|e| e.normalized.as_slice())
            .ok_or_else(|| Error::UnknownTicker(symbol.to_string()))
    }
}

/// Builds sector-aware, size-shifted, unit-norm ticker embeddings.
///
/// Per ticker: `base ~ N(0, I)`, `blended = lambda * base + (1 - lambda) *
/// mean(base over the sector)`, `shifted = blended + beta * ln(market_cap)`
/// on every coordinate, `normalized = shifted / |shifted|`.
pub fn build_ticker_embeddings(
    universe: &UniverseConfig,
    params: TickerEmbeddingParams,
) -> Result<TickerEmbeddings> {
    if params.dim < 2 {
        return Err(Error::Validation("entity embedding width must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&params.lambda) {
        return Err(Error::Validation("lambda must lie in [0, 1]".into()));
    }
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bases: Vec<Vec<f64>> = universe
        .tickers
        .iter()
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let mut sector_mean: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (sector, members) in universe.sector_members() {
        let mut mean = vec![0.0; d];
        for &i in &members {
            for (m, b) in mean.iter_mut().zip(&bases[i]) {
                *m += b;
            }
        }
        let k = members.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        sector_mean.insert(sector, mean);
    }

    let mut table = BTreeMap::new();
    for (info, base) in universe.tickers.iter().zip(bases) {
        let mean = &sector_mean[info.sector.as_str()];
        let blended: Vec<f64> = base
            .iter()
            .zip(mean)
            .map(|(b, m)| params.lambda * b + (1.0 - params.lambda) * m)
            .collect();
        let shift = params.beta * info.market_cap.ln();
        let shifted: Vec<f64> = blended.iter().map(|x| x + shift).collect();
        let norm = l2_norm(&shifted);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Degenerate(format!(
                "ticker `{}` embedding vanished before normalization; re-draw with another seed",
                info.symbol
            )));
        }
        let normalized = shifted.iter().map(|x| x / norm).collect();
        table.insert(
            info.symbol.clone(),
            TickerEmbedding {
                symbol: info.symbol.clone(),
                base,
                blended,
                shifted,
                normalized,
            },
        );
    }
    Ok(TickerEmbeddings { params, table })
}

/// `(1/K) * sum_i n_i * E_i` over the K distinct tickers, without
/// re-normalization. Summation runs in symbol order, so the result does not
/// depend on how the caller built the map.
pub fn combine_entities(
    ticker_counts: &BTreeMap<String, u32>,
    embeddings: &TickerEmbeddings,
) -> Result<Vec<f64>> {
    if ticker_counts.is_empty() {
        return Err(Error::Empty("ticker set"));
    }
    let mut out = vec![0.0; embeddings.params.dim];
    for (symbol, &count) in ticker_counts {
        if count == 0 {
            return Err(Error::Validation(format!("ticker `{symbol}` has zero mentions")));
        }
        let e = embeddings.get(symbol)?;
        let n = count as f64;
        for (o, x) in out.iter_mut().zip(e) {
            *o += n * x;
        }
    }
    let k = ticker_counts.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine;

    fn counts(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(s, n)| (s.to_string(), *n)).collect()
    }

    #[test]
    fn unit_norm_for_every_ticker() {
        let u = UniverseConfig::default_universe();
        let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
        assert_eq!(emb.table.len(), u.tickers.len());
        for e in emb.table.values() {
            assert_eq!(e.normalized.len(), 50);
            assert!((l2_norm(&e.normalized) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_one_keeps_base() {
        let u = UniverseConfig::default_universe();
        let p = TickerEmbeddingParams {
            lambda: 1.0,
            ..Default::default()
        };
        let emb = build_ticker_embeddings(&u, p).unwrap();
        for e in emb.table.values() {
            assert_eq!(e.blended, e.base);
        }
    }

    #[test]
    fn size_shift_is_uniform() {
        let u = UniverseConfig::default_universe();
        let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
        let e = &emb.table["AAPL"];
        let expected = 0.01 * u.ticker("AAPL").unwrap().market_cap.ln();
        for (s, b) in e.shifted.iter().zip(&e.blended) {
            assert!((s - b - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let u = UniverseConfig::default_universe();
        let bad_dim = TickerEmbeddingParams {
            dim: 1,
            ..Default::default()
        };
        assert!(build_ticker_embeddings(&u, bad_dim).is_err());
        let bad_lambda = TickerEmbeddingParams {
            lambda: 1.5,
            ..Default::default()
        };
        assert!(build_ticker_embeddings(&u, bad_lambda).is_err());
    }

    #[test]
    fn single_ticker_identity() {
        let u = UniverseConfig::default_universe();
        let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
        let got = combine_entities(&counts(&[("AAPL", 1)]), &emb).unwrap();
        assert_eq!(got, emb.get("AAPL").unwrap());
    }

    #[test]
    fn two_tickers_average() {
        let u = UniverseConfig::default_universe();
        let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
        let got = combine_entities(&counts(&[("AAPL", 1), ("XOM", 1)]), &emb).unwrap();
        let a = emb.get("AAPL").unwrap();
        let x = emb.get("XOM").unwrap();
        for i in 0..got.len() {
            assert!((got[i] - 0.5 * (a[i] + x[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn doubled_mention_tilts_toward_ticker() {
        let u = UniverseConfig::default_universe();
        let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
        let a = emb.get("AAPL").unwrap();
        let x = emb.get("XOM").unwrap();
        let got = combine_entities(&counts(&[("AAPL", 2), ("XOM", 1)]), &emb).unwrap();
        // Oracle: (2a + x) / 2 computed directly.
        let oracle: Vec<f64> = a.iter().zip(x).map(|(p, q)| (2.0 * p + q) / 2.0).collect();
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-9);
        }
        assert!(cosine(&got, a) > cosine(&got, x));
    }

    #[test]
    fn empty_and_unknown_rejected() {
        let u = UniverseConfig::default_universe();
        let emb = build_ticker_embeddings(&u, TickerEmbeddingParams::default()).unwrap();
        assert!(matches!(
            combine_entities(&BTreeMap::new(), &emb),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            combine_entities(&counts(&[("ZZZZ", 1)]), &emb),
            Err(Error::UnknownTicker(_))
        ));
    }
}
