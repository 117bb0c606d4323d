//! Failure predictor: a small scorer `g(x)` trained so that videos on which
//! the base model errs more receive larger scores.
//!
//! Training is pairwise. For a pair `(x, y)` the scorer's outputs are read as
//! means of unit-variance Gaussians, giving
//!
//! ```text
//! p_hat(x, y) = Phi((g(x) - g(y)) / sqrt(2))
//! ```
//!
//! and the supervision is `p(x, y) = 1` iff `|f(x) - mu(x)| >= |f(y) - mu(y)|`.
//! The default objective is the fidelity loss
//! `1 - sqrt(p * p_hat) - sqrt((1 - p) * (1 - p_hat))`; binary cross-entropy
//! and pointwise squared error on the absolute error are available for
//! comparison.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::store::{FeatureStore, Pooling, ScoreMap};

pub const DEFAULT_PROB_CLAMP: f64 = 1e-6;

/// Stores with at most this many scored records train on every ordered pair.
pub const ALL_PAIRS_LIMIT: usize = 512;
/// Above [`ALL_PAIRS_LIMIT`], this many pairs are sampled per record.
pub const SAMPLED_PAIRS_PER_RECORD: usize = 20;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Probability that `x` is harder than `y` under the Thurstone model,
/// clamped to `[eps, 1 - eps]`.
pub fn pairwise_probability(gx: f64, gy: f64, eps: f64) -> f64 {
    std_normal_cdf((gx - gy) / SQRT_2).clamp(eps, 1.0 - eps)
}

/// Fidelity between target `p` and prediction `p_hat`, both probabilities.
/// Training labels are 0 or 1, but any `p` in `[0, 1]` is accepted.
pub fn fidelity_loss(p: f64, p_hat: f64) -> f64 {
    1.0 - (p * p_hat).sqrt() - ((1.0 - p) * (1.0 - p_hat)).sqrt()
}

/// Binary cross-entropy, with `0 * ln 0` taken as 0.
pub fn classification_loss(p: f64, p_hat: f64) -> f64 {
    let term = |w: f64, q: f64| if w == 0.0 { 0.0 } else { -w * q.ln() };
    term(p, p_hat) + term(1.0 - p, 1.0 - p_hat)
}

fn label(p: bool) -> f64 {
    if p {
        1.0
    } else {
        0.0
    }
}

pub fn regression_loss(g_pred: f64, target_err: f64) -> f64 {
    let r = g_pred - target_err;
    r * r
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Fidelity,
    Classification,
    Regression,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fidelity" => Ok(LossKind::Fidelity),
            "classification" => Ok(LossKind::Classification),
            "regression" => Ok(LossKind::Regression),
            other => Err(Error::invalid(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// One-hidden-layer tanh scorer: `g(x) = w2 . tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerParams {
    dim: usize,
    hidden: usize,
    /// `hidden x dim`, row-major
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl RankerParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn init(dim: usize, hidden: usize, rng: &mut rng::Rng) -> Self {
        let mut p = Self::zeros(dim, hidden);
        let a1 = 1.0 / (dim as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        p.w1.iter_mut()
            .for_each(|w| *w = rng.random_range(-a1..=a1));
        p.b1.iter_mut()
            .for_each(|w| *w = rng.random_range(-a1..=a1));
        p.w2.iter_mut()
            .for_each(|w| *w = rng.random_range(-a2..=a2));
        p.b2 = rng.random_range(-a2..=a2);
        p
    }

    pub fn from_parts(
        dim: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::invalid("ranker dim and hidden size must be >= 1"));
        }
        if w1.len() != hidden * dim || b1.len() != hidden || w2.len() != hidden {
            return Err(Error::invalid(
                "ranker parameter shapes do not match (dim, hidden)",
            ));
        }
        let p = Self {
            dim,
            hidden,
            w1,
            b1,
            w2,
            b2,
        };
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ranker parameters must be finite"));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.hidden * (self.dim + 2) + 1
    }

    /// All parameters in checkpoint order: w1, b1, w2, b2.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(std::iter::once(&mut self.b2))
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &RankerParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut out = self.b2;
        for j in 0..self.hidden {
            out += self.w2[j] * self.pre_activation(j, x).tanh();
        }
        out
    }

    fn pre_activation(&self, j: usize, x: &[f64]) -> f64 {
        let row = &self.w1[j * self.dim..(j + 1) * self.dim];
        self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    fn hidden_activations(&self, x: &[f64], out: &mut Vec<f64>) -> f64 {
        out.clear();
        let mut g = self.b2;
        for j in 0..self.hidden {
            let h = self.pre_activation(j, x).tanh();
            g += self.w2[j] * h;
            out.push(h);
        }
        g
    }

    /// Adds `scale * dg(x)/dparams` into `grad`, given x's hidden activations.
    fn accumulate_output_grad(
        &self,
        x: &[f64],
        hidden: &[f64],
        scale: f64,
        grad: &mut RankerParams,
    ) {
        grad.b2 += scale;
        for (j, &h) in hidden.iter().enumerate() {
            grad.w2[j] += scale * h;
            let back = scale * self.w2[j] * (1.0 - h * h);
            grad.b1[j] += back;
            let row = &mut grad.w1[j * self.dim..(j + 1) * self.dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += back * v;
            }
        }
    }

    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Header `b"VQRK"`, then `version`, `dim`, `hidden` as little-endian
    /// u32, then every parameter as little-endian f64 in [`Self::iter`] order.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        for v in self.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing magic header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let (dim, hidden) = (word(8) as usize, word(12) as usize);
        if dim == 0 || hidden == 0 {
            return Err(Error::Checkpoint("zero dimension in header".into()));
        }
        let mut params = Self::zeros(dim, hidden);
        let body = &bytes[16..];
        if body.len() != 8 * params.num_params() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes for d={dim}, h={hidden}, found {}",
                8 * params.num_params(),
                body.len()
            )));
        }
        for (p, chunk) in params.iter_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
            if !p.is_finite() {
                return Err(Error::Checkpoint("non-finite parameter".into()));
            }
        }
        Ok(params)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"VQRK";
const CHECKPOINT_VERSION: u32 = 1;

/// Supervision for one training pair. `err_x`/`err_y` are the base model's
/// absolute errors and are only read by [`LossKind::Regression`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTarget {
    pub p: bool,
    pub err_x: f64,
    pub err_y: f64,
}

/// Loss of one pair under `loss`.
pub fn pair_loss(
    params: &RankerParams,
    x: &[f64],
    y: &[f64],
    target: PairTarget,
    loss: LossKind,
    eps: f64,
) -> f64 {
    let gx = params.forward(x);
    let gy = params.forward(y);
    match loss {
        LossKind::Fidelity => fidelity_loss(label(target.p), pairwise_probability(gx, gy, eps)),
        LossKind::Classification => {
            classification_loss(label(target.p), pairwise_probability(gx, gy, eps))
        }
        LossKind::Regression => {
            regression_loss(gx, target.err_x) + regression_loss(gy, target.err_y)
        }
    }
}

/// Loss of one pair and its gradient with respect to every parameter.
pub fn ranker_gradient(
    params: &RankerParams,
    x: &[f64],
    y: &[f64],
    target: PairTarget,
    loss: LossKind,
    eps: f64,
) -> (f64, RankerParams) {
    let mut grad = RankerParams::zeros(params.dim, params.hidden);
    let value = accumulate_pair_gradient(params, x, y, target, loss, eps, 1.0, &mut grad);
    (value, grad)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_pair_gradient(
    params: &RankerParams,
    x: &[f64],
    y: &[f64],
    target: PairTarget,
    loss: LossKind,
    eps: f64,
    weight: f64,
    grad: &mut RankerParams,
) -> f64 {
    let mut hx = Vec::with_capacity(params.hidden);
    let mut hy = Vec::with_capacity(params.hidden);
    let gx = params.hidden_activations(x, &mut hx);
    let gy = params.hidden_activations(y, &mut hy);
    let (value, dgx, dgy) = match loss {
        LossKind::Regression => (
            regression_loss(gx, target.err_x) + regression_loss(gy, target.err_y),
            2.0 * (gx - target.err_x),
            2.0 * (gy - target.err_y),
        ),
        LossKind::Fidelity | LossKind::Classification => {
            let z = (gx - gy) / SQRT_2;
            let raw = std_normal_cdf(z);
            let p_hat = raw.clamp(eps, 1.0 - eps);
            // the clamp is flat outside [eps, 1 - eps]
            let dp_dz = if raw == p_hat { std_normal_pdf(z) } else { 0.0 };
            let (value, dl_dp) = if loss == LossKind::Fidelity {
                let v = fidelity_loss(label(target.p), p_hat);
                let d = if target.p {
                    -0.5 / p_hat.sqrt()
                } else {
                    0.5 / (1.0 - p_hat).sqrt()
                };
                (v, d)
            } else {
                let v = classification_loss(label(target.p), p_hat);
                let d = if target.p {
                    -1.0 / p_hat
                } else {
                    1.0 / (1.0 - p_hat)
                };
                (v, d)
            };
            let dz = dl_dp * dp_dz / SQRT_2;
            (value, dz, -dz)
        }
    };
    params.accumulate_output_grad(x, &hx, weight * dgx, grad);
    params.accumulate_output_grad(y, &hy, weight * dgy, grad);
    value
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub x_id: String,
    pub y_id: String,
    /// `true` when x's base-model error is at least y's.
    pub p: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStrategy {
    /// Every ordered pair up to [`ALL_PAIRS_LIMIT`] records, otherwise
    /// [`SAMPLED_PAIRS_PER_RECORD`] sampled pairs per record.
    #[default]
    Auto,
    AllOrdered,
    Sampled {
        count: usize,
    },
}

/// Label pairs of `store` records by comparing the base model's absolute
/// errors. Equal errors produce `p = 1` in both orders.
pub fn make_pair_labels(
    store: &FeatureStore,
    strategy: PairingStrategy,
    seed: u64,
) -> Result<Vec<PairLabel>> {
    let errs = store
        .records()
        .iter()
        .map(|r| r.abs_error())
        .collect::<Result<Vec<_>>>()?;
    let n = errs.len();
    let label = |i: usize, j: usize| PairLabel {
        x_id: store.records()[i].id().to_owned(),
        y_id: store.records()[j].id().to_owned(),
        p: errs[i] >= errs[j],
    };
    let strategy = match strategy {
        PairingStrategy::Auto if n <= ALL_PAIRS_LIMIT => PairingStrategy::AllOrdered,
        PairingStrategy::Auto => PairingStrategy::Sampled {
            count: SAMPLED_PAIRS_PER_RECORD * n,
        },
        s => s,
    };
    match strategy {
        PairingStrategy::AllOrdered => Ok((0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| label(i, j))
            .collect()),
        PairingStrategy::Sampled { count } => {
            if n < 2 {
                return Err(Error::invalid("pair sampling needs at least two records"));
            }
            let mut rng = rng::stream(seed, "ranker.pairs");
            Ok((0..count)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    let j = (i + rng.random_range(1..n)) % n;
                    label(i, j)
                })
                .collect())
        }
        PairingStrategy::Auto => unreachable!(),
    }
}

pub fn write_pair_labels(path: impl AsRef<Path>, pairs: &[PairLabel]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("x_id,y_id,p\n");
    for p in pairs {
        out.push_str(&format!("{},{},{}\n", p.x_id, p.y_id, p.p as u8));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_pair_labels(path: impl AsRef<Path>) -> Result<Vec<PairLabel>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x_id", "y_id", "p"] {
        return Err(Error::invalid(format!(
            "{}: expected header x_id,y_id,p",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = match &rec[2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::invalid(format!(
                    "pair label must be 0 or 1, found {other:?}"
                )))
            }
        };
        if rec[0] == rec[1] {
            return Err(Error::invalid(format!(
                "pair ({}, {}) repeats an id",
                &rec[0], &rec[1]
            )));
        }
        out.push(PairLabel {
            x_id: rec[0].to_owned(),
            y_id: rec[1].to_owned(),
            p,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_pairs: usize,
    pub seed: u64,
    pub prob_clamp: f64,
    pub loss_kind: LossKind,
    pub pooling: Pooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 16,
            learning_rate: 1e-3,
            epochs: 10,
            batch_pairs: 8,
            seed: 0,
            prob_clamp: DEFAULT_PROB_CLAMP,
            loss_kind: LossKind::Fidelity,
            pooling: Pooling::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::invalid("hidden_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_pairs == 0 {
            return Err(Error::invalid("batch_pairs must be >= 1"));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(Error::invalid("prob_clamp must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-pair loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    pub num_pairs: usize,
}

/// Train a fresh scorer on `pairs`, whose ids must name records in `store`.
///
/// Initialization, shuffling and batch order come from seeded streams, so
/// two runs with the same inputs produce bit-identical parameters.
pub fn train_ranker(
    store: &FeatureStore,
    pairs: &[PairLabel],
    config: &TrainConfig,
) -> Result<(RankerParams, TrainReport)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let mut used = HashSet::new();
    let mut resolved = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let i = store
            .position(&pair.x_id)
            .ok_or_else(|| Error::UnknownId(pair.x_id.clone()))?;
        let j = store
            .position(&pair.y_id)
            .ok_or_else(|| Error::UnknownId(pair.y_id.clone()))?;
        used.insert(i);
        used.insert(j);
        resolved.push((i, j, pair.p));
    }
    let pooled: Vec<Vec<f64>> = store
        .records()
        .iter()
        .map(|r| r.pool(config.pooling))
        .collect();
    let mut errs = vec![0.0; store.len()];
    if config.loss_kind == LossKind::Regression {
        for &i in &used {
            errs[i] = store.records()[i].abs_error()?;
        }
    }

    let mut params = RankerParams::init(
        store.dim(),
        config.hidden_size,
        &mut rng::stream(config.seed, "ranker.init"),
    );
    let mut shuffle = rng::stream(config.seed, "ranker.shuffle");
    let mut order: Vec<usize> = (0..resolved.len()).collect();
    let mut grad = RankerParams::zeros(store.dim(), config.hidden_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_pairs) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let weight = 1.0 / batch.len() as f64;
            for &k in batch {
                let (i, j, p) = resolved[k];
                let target = PairTarget {
                    p,
                    err_x: errs[i],
                    err_y: errs[j],
                };
                total += accumulate_pair_gradient(
                    &params,
                    &pooled[i],
                    &pooled[j],
                    target,
                    config.loss_kind,
                    config.prob_clamp,
                    weight,
                    &mut grad,
                );
            }
            params.add_scaled(-config.learning_rate, &grad);
        }
        epoch_losses.push(total / resolved.len() as f64);
    }
    Ok((
        params,
        TrainReport {
            epoch_losses,
            num_pairs: resolved.len(),
        },
    ))
}

/// Difficulty score `g(x)` for every record.
pub fn score_pool(
    params: &RankerParams,
    store: &FeatureStore,
    pooling: Pooling,
) -> Result<ScoreMap> {
    if params.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: store.dim(),
        });
    }
    Ok(store
        .records()
        .iter()
        .map(|r| (r.id().to_owned(), params.forward(&r.pool(pooling))))
        .collect())
}
