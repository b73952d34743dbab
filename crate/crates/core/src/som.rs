//! Self-organizing map whose nodes also act as small document stores.
//!
//! Training follows the classic competition / cooperation / adaptation loop
//! with a Gaussian neighborhood. Once the last epoch finishes, a storage pass
//! files every input under its final best matching unit, so retrieval can
//! pick nodes by their representative vectors and then scan only the
//! documents those nodes hold.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomParams {
    /// Grid side; the map has `n * n` nodes.
    pub n: usize,
    pub dim: usize,
    pub alpha0: f64,
    pub gamma: f64,
    pub sigma0: f64,
    pub lambda_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl SomParams {
    /// Defaults for a given grid: `sigma0 = n / 2`, `lambda_decay = 3 / T`.
    pub fn new(n: usize, dim: usize, epochs: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            alpha0: 0.05,
            gamma: 0.8,
            sigma0: n as f64 / 2.0,
            lambda_decay: 3.0 / epochs.max(1) as f64,
            epochs,
            batch_size: 32,
            seed,
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("som: {m}")));
        if self.n < 2 {
            return bad("grid side must be at least 2");
        }
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad("alpha0 must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.sigma0 > 0.0) || !(self.lambda_decay >= 0.0) {
            return bad("sigma0 must be positive and lambda_decay non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        Ok(())
    }

    /// `alpha0 * (1 - gamma * t / T)`.
    pub fn learning_rate(&self, t: f64) -> f64 {
        self.alpha0 * (1.0 - self.gamma * t / self.epochs as f64)
    }

    /// `sigma0 * exp(-lambda_decay * t)`.
    pub fn radius(&self, t: f64) -> f64 {
        self.sigma0 * (-self.lambda_decay * t).exp()
    }

    /// Neighborhood weight of winner `c` on node `i` at epoch `t`.
    pub fn neighborhood(&self, c: usize, i: usize, t: f64) -> f64 {
        let (rc, cc) = (c / self.n, c % self.n);
        let (ri, ci) = (i / self.n, i % self.n);
        let d2 = (rc as f64 - ri as f64).powi(2) + (cc as f64 - ci as f64).powi(2);
        let s = self.radius(t);
        self.learning_rate(t) * (-d2 / (2.0 * s * s)).exp()
    }
}

/// A document filed under a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDoc {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub quantization_errors: Vec<f64>,
    /// Wall-clock seconds per epoch; not persisted.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid {
    pub params: SomParams,
    /// Row-major `n * n` node weights, each `dim` wide.
    weights: Vec<f64>,
    collections: Vec<Vec<StoredDoc>>,
    trained: bool,
}

/// Squared Euclidean distance with independent partial sums so the loop
/// vectorizes.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    acc.iter().sum::<f64>() + tail
}

impl SomGrid {
    /// Weights drawn i.i.d. uniform in `[-0.1, 0.1]`; collections empty.
    pub fn new(params: SomParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let nodes = params.n * params.n;
        let weights = (0..nodes * params.dim)
            .map(|_| rng.random_range(-0.1..=0.1))
            .collect();
        Ok(Self {
            params,
            weights,
            collections: vec![Vec::new(); nodes],
            trained: false,
        })
    }

    pub fn node_count(&self) -> usize {
        self.params.n * self.params.n
    }

    pub fn position(&self, node: usize) -> (usize, usize) {
        (node / self.params.n, node % self.params.n)
    }

    pub fn weight(&self, node: usize) -> &[f64] {
        let d = self.params.dim;
        &self.weights[node * d..(node + 1) * d]
    }

    pub fn set_weight(&mut self, node: usize, w: &[f64]) -> Result<()> {
        self.check_dim(w)?;
        let d = self.params.dim;
        self.weights[node * d..(node + 1) * d].copy_from_slice(w);
        Ok(())
    }

    pub fn collection(&self, node: usize) -> &[StoredDoc] {
        &self.collections[node]
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.params.dim {
            return Err(Error::Dimension {
                expected: self.params.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Winning node and its squared distance; ties go to the lowest index.
    fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let d = self.params.dim;
        let mut best = (0, f64::INFINITY);
        for (i, w) in self.weights.chunks_exact(d).enumerate() {
            let dist = squared_distance(x, w);
            if dist < best.1 {
                best = (i, dist);
            }
        }
        best
    }

    pub fn find_bmu(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.nearest(x).0)
    }

    /// Mean squared distance from each input to its best matching unit.
    pub fn quantization_error(&self, inputs: &[Vec<f64>]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        let mut total = 0.0;
        for x in inputs {
            self.check_dim(x)?;
            total += self.nearest(x).1;
        }
        Ok(total / inputs.len() as f64)
    }

    /// Moves every node toward `x` by its neighborhood weight around the winner.
    fn adapt(&mut self, x: &[f64], kernel: &[f64], rate: f64) {
        let n = self.params.n;
        let d = self.params.dim;
        let (winner, _) = self.nearest(x);
        let (rc, cc) = (winner / n, winner % n);
        for (i, w) in self.weights.chunks_exact_mut(d).enumerate() {
            let (ri, ci) = (i / n, i % n);
            let h = rate * kernel[rc.abs_diff(ri) * n + cc.abs_diff(ci)];
            for (wk, xk) in w.iter_mut().zip(x) {
                *wk += h * (xk - *wk);
            }
        }
    }

    /// One pass over `inputs` at epoch `t`, in a shuffled order seeded by the
    /// grid seed and `t`. Samples are applied one at a time; batches only set
    /// the shuffling granularity. Returns the post-epoch quantization error.
    pub fn train_epoch(&mut self, inputs: &[Vec<f64>], t: usize) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        if t >= self.params.epochs {
            return Err(Error::Validation(format!(
                "epoch {t} is past the schedule of {} epochs",
                self.params.epochs
            )));
        }
        for x in inputs {
            self.check_dim(x)?;
        }

        let n = self.params.n;
        let tf = t as f64;
        let rate = self.params.learning_rate(tf);
        let sigma = self.params.radius(tf);
        let kernel: Vec<f64> = (0..n * n)
            .map(|k| {
                let (dr, dc) = ((k / n) as f64, (k % n) as f64);
                (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(
            self.params.seed ^ (t as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut rng);
        for batch in order.chunks(self.params.batch_size) {
            for &j in batch {
                self.adapt(&inputs[j], &kernel, rate);
            }
        }
        self.quantization_error(inputs)
    }

    /// Full schedule followed by the storage pass.
    pub fn train(&mut self, ids: &[String], inputs: &[Vec<f64>]) -> Result<TrainingTrace> {
        self.train_with(ids, inputs, |_, _| {})
    }

    /// Like [`SomGrid::train`], calling `on_epoch(t, q)` after each epoch.
    pub fn train_with(
        &mut self,
        ids: &[String],
        inputs: &[Vec<f64>],
        mut on_epoch: impl FnMut(usize, f64),
    ) -> Result<TrainingTrace> {
        self.check_corpus(ids, inputs)?;
        let mut trace = TrainingTrace::default();
        for t in 0..self.params.epochs {
            let start = Instant::now();
            let q = self.train_epoch(inputs, t)?;
            trace.epoch_seconds.push(start.elapsed().as_secs_f64());
            trace.quantization_errors.push(q);
            on_epoch(t, q);
        }
        self.store(ids, inputs);
        Ok(trace)
    }

    /// Rejects empty corpora, mismatched lengths and duplicate ids.
    pub fn check_corpus(&self, ids: &[String], inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        for x in inputs {
            self.check_dim(x)?;
        }
        if ids.len() != inputs.len() {
            return Err(Error::Validation(format!(
                "{} ids for {} vectors",
                ids.len(),
                inputs.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate document id `{id}`")));
            }
        }
        Ok(())
    }

    /// Files every document under its current best matching unit, replacing
    /// any earlier assignment. Inputs must already pass [`SomGrid::check_corpus`].
    pub fn store(&mut self, ids: &[String], inputs: &[Vec<f64>]) {
        self.collections.iter_mut().for_each(Vec::clear);
        for (id, x) in ids.iter().zip(inputs) {
            let (c, _) = self.nearest(x);
            self.collections[c].push(StoredDoc {
                id: id.clone(),
                vector: x.clone(),
            });
        }
        self.trained = true;
    }

    /// Nodes within Chebyshev grid distance `radius` of `center`, row-major.
    pub fn ball(&self, center: usize, radius: usize) -> Vec<usize> {
        let n = self.params.n;
        let (r0, c0) = self.position(center);
        let rows = r0.saturating_sub(radius)..=(r0 + radius).min(n - 1);
        rows.flat_map(|r| {
            let cols = c0.saturating_sub(radius)..=(c0 + radius).min(n - 1);
            cols.map(move |c| r * n + c)
        })
        .collect()
    }

    /// Documents stored in the Chebyshev ball of `radius` around the best
    /// matching unit of `q`, node by node in row-major order.
    pub fn neighborhood_search(&self, q: &[f64], radius: usize) -> Result<Vec<&StoredDoc>> {
        let bmu = self.find_bmu(q)?;
        Ok(self
            .ball(bmu, radius)
            .into_iter()
            .flat_map(|node| self.collections[node].iter())
            .collect())
    }
}
