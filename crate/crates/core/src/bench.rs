//! Desk-scale experiment harness.
//!
//! A synthetic world stands in for a labeled source dataset and an unlabeled
//! target domain. Videos belong to Gaussian clusters in embedding space;
//! perceived quality is a linear function of the embedding plus a quadratic
//! term along one "shift" axis:
//!
//! ```text
//! q(z) = quality_gain * u + nonlinearity * v^2,   u = sqrt(d) w.z,  v = sqrt(d) s.z
//! mos  = 1 + 4 * sigmoid(q + noise)
//! ```
//!
//! where `z` is the mean of the video's frame embeddings, so quality depends
//! only on what a model can observe.
//!
//! Source videos barely move along `s`, so a linear base model fitted on them
//! underestimates the quadratic term. In the target pool a fraction of the
//! clusters is displaced along `s`; the base model fails there, and only there.
//!
//! On top of the world the harness runs the two evaluation protocols: how
//! badly the base model does on a selected subset (lower is a better find),
//! and how much refitting on source plus the labeled subset helps on a
//! held-out slice of the target domain.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::ranker::{
    make_pair_labels, score_pool, train_ranker, LossKind, PairingStrategy, TrainConfig,
};
use crate::rng::{self, Rng};
use crate::selection::{greedy_select, Budget, SelectionConfig, SelectionResult};
use crate::store::{FeatureStore, Pooling, ScoreMap, VideoRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_source: usize,
    pub n_target: usize,
    pub dim: usize,
    pub frames: usize,
    pub n_clusters: usize,
    /// Expected norm of a cluster center.
    pub center_scale: f64,
    /// Expected norm of a video's offset from its cluster center.
    pub cluster_spread: f64,
    /// Expected norm of a frame's offset from its video embedding.
    pub frame_jitter: f64,
    pub quality_gain: f64,
    pub nonlinearity: f64,
    pub hard_region_fraction: f64,
    /// Largest displacement of a hard cluster along the shift axis, in units
    /// of `v`; each hard cluster draws its own from `[shift / 2, shift]`.
    pub shift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_source: 1000,
            n_target: 2000,
            dim: 16,
            frames: 4,
            n_clusters: 10,
            center_scale: 1.0,
            cluster_spread: 0.5,
            frame_jitter: 0.3,
            quality_gain: 1.5,
            nonlinearity: 1.0,
            hard_region_fraction: 0.3,
            shift: 3.0,
            noise_sigma: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::invalid("n_clusters must be >= 1"));
        }
        if self.n_source == 0 || self.n_target == 0 || self.dim == 0 || self.frames == 0 {
            return Err(Error::invalid("pool sizes, dim and frames must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.hard_region_fraction) {
            return Err(Error::invalid("hard_region_fraction must lie in [0, 1]"));
        }
        let scales = [
            self.center_scale,
            self.cluster_spread,
            self.frame_jitter,
            self.shift,
            self.noise_sigma,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(
                "scales and noise levels must be finite and >= 0",
            ));
        }
        if !(self.quality_gain.is_finite() && self.nonlinearity.is_finite()) {
            return Err(Error::invalid("quality parameters must be finite"));
        }
        Ok(())
    }
}

/// Hidden parameters shared by the source and target pools of one seed.
#[derive(Debug, Clone)]
struct World {
    quality_dir: Vec<f64>,
    shift_dir: Vec<f64>,
    centers: Vec<Vec<f64>>,
    /// displacement along the shift axis per cluster (0 for easy clusters)
    cluster_shift: Vec<f64>,
}

fn gaussian_vec(rng: &mut Rng, dim: usize, scale: f64) -> Vec<f64> {
    let sd = scale / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            sd * x
        })
        .collect::<Vec<f64>>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn remove_component(v: &mut [f64], dir: &[f64]) {
    let c = dot(v, dir);
    v.iter_mut().zip(dir).for_each(|(x, d)| *x -= c * d);
}

impl World {
    fn new(config: &SynthConfig) -> Self {
        let d = config.dim;
        let mut rng = rng::stream(config.seed, "synth.world");
        let quality_dir = unit(gaussian_vec(&mut rng, d, 1.0));
        let mut shift_dir = gaussian_vec(&mut rng, d, 1.0);
        if d > 1 {
            remove_component(&mut shift_dir, &quality_dir);
        }
        let shift_dir = unit(shift_dir);
        let centers = (0..config.n_clusters)
            .map(|_| {
                let mut c = gaussian_vec(&mut rng, d, config.center_scale);
                remove_component(&mut c, &shift_dir);
                c
            })
            .collect();
        let n_hard = (config.hard_region_fraction * config.n_clusters as f64).round() as usize;
        let mut order: Vec<usize> = (0..config.n_clusters).collect();
        order.shuffle(&mut rng);
        let mut cluster_shift = vec![0.0; config.n_clusters];
        for &k in &order[..n_hard] {
            cluster_shift[k] = config.shift * rng.random_range(0.5..=1.0);
        }
        Self {
            quality_dir,
            shift_dir,
            centers,
            cluster_shift,
        }
    }

    fn quality(&self, config: &SynthConfig, z: &[f64]) -> f64 {
        let scale = (config.dim as f64).sqrt();
        let u = scale * dot(&self.quality_dir, z);
        let v = scale * dot(&self.shift_dir, z);
        config.quality_gain * u + config.nonlinearity * v * v
    }

    fn sample_pool(
        &self,
        config: &SynthConfig,
        n: usize,
        prefix: &str,
        shifted: bool,
    ) -> Result<FeatureStore> {
        let d = config.dim;
        let mut rng = rng::stream(config.seed, &format!("synth.{prefix}"));
        let width = (n.max(2) - 1).to_string().len();
        let records = (0..n)
            .map(|i| {
                let k = rng.random_range(0..config.n_clusters);
                let offset = gaussian_vec(&mut rng, d, config.cluster_spread);
                let mut z: Vec<f64> = self.centers[k]
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c + o)
                    .collect();
                if shifted && self.cluster_shift[k] > 0.0 {
                    let amount = self.cluster_shift[k] / (d as f64).sqrt();
                    z.iter_mut()
                        .zip(&self.shift_dir)
                        .for_each(|(x, s)| *x += amount * s);
                }
                let mut frames = Vec::with_capacity(config.frames * d);
                for _ in 0..config.frames {
                    let jitter = gaussian_vec(&mut rng, d, config.frame_jitter);
                    frames.extend(z.iter().zip(&jitter).map(|(a, b)| (a + b) as f32));
                }
                let eps: f64 = StandardNormal.sample(&mut rng);
                let noise = config.noise_sigma * eps;
                // quality is a function of the content a model actually sees
                let mut mean = vec![0.0; d];
                for frame in frames.chunks_exact(d) {
                    mean.iter_mut()
                        .zip(frame)
                        .for_each(|(m, &f)| *m += f as f64);
                }
                mean.iter_mut().for_each(|m| *m /= config.frames as f64);
                let q = self.quality(config, &mean) + noise;
                let mos = 1.0 + 4.0 / (1.0 + (-q).exp());
                Ok(VideoRecord::new(format!("{prefix}{i:0width$}"), d, frames)?
                    .with_scores(Some(mos), None))
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureStore::new(d, records)
    }
}

/// Source and target pools with MOS attached; `base_pred` is left empty.
pub fn gen_synthetic(config: &SynthConfig) -> Result<(FeatureStore, FeatureStore)> {
    config.validate()?;
    let world = World::new(config);
    let source = world.sample_pool(config, config.n_source, "s", false)?;
    let target = world.sample_pool(config, config.n_target, "t", true)?;
    Ok((source, target))
}

/// Closed-form ridge regression of MOS on mean-pooled features, with an
/// unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyBaseModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub reg: f64,
}

pub fn fit_toy_base(train: &FeatureStore, reg: f64) -> Result<ToyBaseModel> {
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::invalid(
            "ridge regularization must be finite and >= 0",
        ));
    }
    let rows = train
        .records()
        .iter()
        .map(|r| {
            let y = r.mos.ok_or_else(|| Error::MissingValue {
                id: r.id().to_owned(),
                field: "mos",
            })?;
            Ok((r.pool(Pooling::Mean), y))
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::invalid("cannot fit a base model on an empty store"));
    }
    let d = train.dim();
    let n = rows.len() as f64;
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for (x, y) in &rows {
        x_mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        y_mean += y / n;
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut xc = DVector::<f64>::zeros(d);
    for (x, y) in &rows {
        for j in 0..d {
            xc[j] = x[j] - x_mean[j];
        }
        gram.syger(1.0, &xc, &xc, 1.0);
        rhs.axpy(y - y_mean, &xc, 1.0);
    }
    for j in 0..d {
        gram[(j, j)] += reg;
    }
    let weights = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("ridge system is singular; use a positive regularization"))?
        .solve(&rhs);
    let weights: Vec<f64> = weights.iter().copied().collect();
    let intercept = y_mean - dot(&weights, &x_mean);
    Ok(ToyBaseModel {
        weights,
        intercept,
        reg,
    })
}

impl ToyBaseModel {
    pub fn predict_one(&self, pooled: &[f64]) -> f64 {
        self.intercept + dot(&self.weights, pooled)
    }
}

pub fn predict_toy(model: &ToyBaseModel, store: &FeatureStore) -> Result<ScoreMap> {
    if model.weights.len() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: store.dim(),
        });
    }
    Ok(store
        .records()
        .iter()
        .map(|r| (r.id().to_owned(), model.predict_one(&r.pool(Pooling::Mean))))
        .collect())
}

/// SRCC and PLCC between base predictions and MOS on the selected subset.
pub fn eval_failure_identification<S: AsRef<str>>(
    selected: &[S],
    base_preds: &ScoreMap,
    mos: &ScoreMap,
) -> Result<(f64, f64)> {
    metrics::correlations_on(selected, base_preds, mos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Random,
    TopkDifficulty,
    DifficultyDiversity,
    OracleError,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 4] = [
        SelectionMethod::Random,
        SelectionMethod::TopkDifficulty,
        SelectionMethod::DifficultyDiversity,
        SelectionMethod::OracleError,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionMethod::Random => "random",
            SelectionMethod::TopkDifficulty => "topk_difficulty",
            SelectionMethod::DifficultyDiversity => "difficulty_diversity",
            SelectionMethod::OracleError => "oracle_error",
        }
    }
}

/// Random (seeded, without replacement) or difficulty-only selection.
pub fn baseline_select(
    method: SelectionMethod,
    store: &FeatureStore,
    scores: &ScoreMap,
    budget: Budget,
    seed: u64,
) -> Result<SelectionResult> {
    match method {
        SelectionMethod::Random => {
            let k = budget.resolve(store.len())?;
            let mut rng = rng::stream(seed, "bench.random");
            let chosen: Vec<String> = store
                .ids()
                .collect::<Vec<_>>()
                .choose_multiple(&mut rng, k)
                .map(|s| s.to_string())
                .collect();
            Ok(SelectionResult {
                config: SelectionConfig {
                    lambda: 0.0,
                    budget,
                    ..SelectionConfig::default()
                },
                iterations: Vec::new(),
                selected: chosen,
            })
        }
        SelectionMethod::TopkDifficulty => greedy_select(
            store,
            scores,
            &SelectionConfig {
                lambda: 0.0,
                budget,
                ..SelectionConfig::default()
            },
        ),
        other => Err(Error::invalid(format!(
            "{} is not a baseline selector",
            other.name()
        ))),
    }
}

/// Target SRCC of the base model before and after refitting it on
/// `source` plus the labeled `selected` part of `pool`.
///
/// The union keeps pool order regardless of selection order, so equal
/// selected sets always give bit-identical refits.
pub fn finetune_once<S: AsRef<str>>(
    source: &FeatureStore,
    pool: &FeatureStore,
    test: &FeatureStore,
    selected: &[S],
    reg: f64,
) -> Result<(f64, f64)> {
    let before_model = fit_toy_base(source, reg)?;
    let test_mos = test.mos_map();
    let eval = |m: &ToyBaseModel| -> Result<f64> {
        let preds = predict_toy(m, test)?;
        let ids: Vec<&str> = test.ids().collect();
        Ok(metrics::correlations_on(&ids, &preds, &test_mos)?.0)
    };
    let before = eval(&before_model)?;
    let chosen: HashSet<&str> = selected.iter().map(|s| s.as_ref()).collect();
    for id in &chosen {
        pool.require(id)?;
    }
    let labeled: Vec<&str> = pool.ids().filter(|id| chosen.contains(id)).collect();
    let after = if labeled.is_empty() {
        before
    } else {
        let union = source.concat(&pool.subset(&labeled)?)?;
        eval(&fit_toy_base(&union, reg)?)?
    };
    Ok((before, after))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchOptions {
    pub num_seeds: usize,
    /// First seed; the run uses `first_seed .. first_seed + num_seeds`.
    pub first_seed: u64,
    pub ridge_reg: f64,
    /// Fraction of the target pool held out for fine-tuning evaluation.
    pub holdout_fraction: f64,
    /// Extra difficulty-diversity runs, one per value.
    pub lambda_sweep: Vec<f64>,
    /// Extra difficulty-diversity runs with the failure predictor trained under these losses.
    pub loss_ablation: Vec<LossKind>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            num_seeds: 10,
            first_seed: 0,
            ridge_reg: 1e-3,
            holdout_fraction: 0.5,
            lambda_sweep: Vec::new(),
            loss_ablation: Vec::new(),
        }
    }
}

/// λ grid used by `--lambda-sweep`.
pub const LAMBDA_GRID: [f64; 4] = [0.0, 0.125, 0.25, 0.5];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub bench: BenchOptions,
}

impl BenchConfig {
    /// Settings the harness is calibrated with. The failure predictor gets a
    /// far larger step size than the library default because it starts from
    /// scratch on a small pool with only ten epochs.
    pub fn desk_default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 10,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }
}

/// One evaluated selection strategy for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub failure_srcc: f64,
    pub failure_plcc: f64,
    pub srcc_after: f64,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub srcc_before: f64,
    pub ranker_first_epoch_loss: f64,
    pub ranker_last_epoch_loss: f64,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_failure_srcc: f64,
    pub mean_failure_plcc: f64,
    pub mean_srcc_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedReport>,
    pub mean_srcc_before: f64,
    pub summary: Vec<MethodSummary>,
}

impl BenchReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|m| m.method == name)
    }

    /// Flat table, one row per (seed, method).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("seed,method,selected,failure_srcc,failure_plcc,srcc_before,srcc_after\n");
        for s in &self.per_seed {
            for o in &s.outcomes {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.seed,
                    o.method,
                    o.selected,
                    o.failure_srcc,
                    o.failure_plcc,
                    s.srcc_before,
                    o.srcc_after
                ));
            }
        }
        out
    }
}

pub fn lambda_label(lambda: f64) -> String {
    format!("lambda_{lambda}")
}

pub fn loss_label(loss: LossKind) -> String {
    let name = match loss {
        LossKind::Fidelity => "fidelity",
        LossKind::Classification => "classification",
        LossKind::Regression => "regression",
    };
    format!("loss_{name}")
}

/// Everything one seed needs, built once and shared by all strategies.
struct SeedWorld {
    source: FeatureStore,
    pool: FeatureStore,
    test: FeatureStore,
    pool_preds: ScoreMap,
    pool_mos: ScoreMap,
}

fn build_seed_world(config: &BenchConfig, seed: u64) -> Result<SeedWorld> {
    let synth = SynthConfig {
        seed,
        ..config.synth.clone()
    };
    let (mut source, target) = gen_synthetic(&synth)?;
    let opts = &config.bench;
    if !(opts.holdout_fraction > 0.0 && opts.holdout_fraction < 1.0) {
        return Err(Error::invalid("holdout_fraction must lie in (0, 1)"));
    }
    let mut ids: Vec<&str> = target.ids().collect();
    ids.shuffle(&mut rng::stream(seed, "bench.split"));
    let n_test = ((target.len() as f64) * opts.holdout_fraction).round() as usize;
    let n_test = n_test.clamp(2, target.len().saturating_sub(2));
    let mut test_ids = ids[..n_test].to_vec();
    let mut pool_ids = ids[n_test..].to_vec();
    test_ids.sort_unstable();
    pool_ids.sort_unstable();
    let mut pool = target.subset(&pool_ids)?;
    let test = target.subset(&test_ids)?;

    let base = fit_toy_base(&source, opts.ridge_reg)?;
    source.set_base_preds(&predict_toy(&base, &source)?)?;
    let pool_preds = predict_toy(&base, &pool)?;
    pool.set_base_preds(&pool_preds)?;
    let pool_mos = pool.mos_map();
    Ok(SeedWorld {
        source,
        pool,
        test,
        pool_preds,
        pool_mos,
    })
}

fn difficulty_scores(
    config: &BenchConfig,
    world: &SeedWorld,
    seed: u64,
    loss: LossKind,
) -> Result<(ScoreMap, f64, f64)> {
    let pairs = make_pair_labels(&world.source, PairingStrategy::Auto, seed)?;
    let train = TrainConfig {
        seed,
        loss_kind: loss,
        ..config.train.clone()
    };
    let (params, report) = train_ranker(&world.source, &pairs, &train)?;
    let scores = score_pool(&params, &world.pool, train.pooling)?;
    let first = report.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok((scores, first, last))
}

fn evaluate(
    config: &BenchConfig,
    world: &SeedWorld,
    method: String,
    selected: &[String],
) -> Result<MethodOutcome> {
    let (failure_srcc, failure_plcc) =
        eval_failure_identification(selected, &world.pool_preds, &world.pool_mos)?;
    let (_, srcc_after) = finetune_once(
        &world.source,
        &world.pool,
        &world.test,
        selected,
        config.bench.ridge_reg,
    )?;
    Ok(MethodOutcome {
        method,
        failure_srcc,
        failure_plcc,
        srcc_after,
        selected: selected.len(),
    })
}

/// Full pipeline for one seed: world, base model, failure predictor, every
/// strategy, both evaluation protocols.
pub fn run_seed(config: &BenchConfig, seed: u64) -> Result<SeedReport> {
    let world = build_seed_world(config, seed)?;
    let (srcc_before, _) = finetune_once::<&str>(
        &world.source,
        &world.pool,
        &world.test,
        &[],
        config.bench.ridge_reg,
    )?;
    let budget = config.selection.budget;
    let loss = config.train.loss_kind;
    let (scores, first, last) = difficulty_scores(config, &world, seed, loss)?;

    let mut outcomes = Vec::new();
    for method in SelectionMethod::ALL {
        let selected = match method {
            SelectionMethod::Random | SelectionMethod::TopkDifficulty => {
                baseline_select(method, &world.pool, &scores, budget, seed)?.selected
            }
            SelectionMethod::DifficultyDiversity => {
                greedy_select(&world.pool, &scores, &config.selection)?.selected
            }
            SelectionMethod::OracleError => {
                let errors: ScoreMap = world
                    .pool
                    .records()
                    .iter()
                    .map(|r| Ok((r.id().to_owned(), r.abs_error()?)))
                    .collect::<Result<_>>()?;
                baseline_select(
                    SelectionMethod::TopkDifficulty,
                    &world.pool,
                    &errors,
                    budget,
                    seed,
                )?
                .selected
            }
        };
        outcomes.push(evaluate(
            config,
            &world,
            method.name().to_owned(),
            &selected,
        )?);
    }
    for &lambda in &config.bench.lambda_sweep {
        let sel = SelectionConfig {
            lambda,
            ..config.selection.clone()
        };
        let selected = greedy_select(&world.pool, &scores, &sel)?.selected;
        outcomes.push(evaluate(config, &world, lambda_label(lambda), &selected)?);
    }
    for &ablated in &config.bench.loss_ablation {
        let scores = if ablated == loss {
            scores.clone()
        } else {
            difficulty_scores(config, &world, seed, ablated)?.0
        };
        let selected = greedy_select(&world.pool, &scores, &config.selection)?.selected;
        outcomes.push(evaluate(config, &world, loss_label(ablated), &selected)?);
    }
    Ok(SeedReport {
        seed,
        srcc_before,
        ranker_first_epoch_loss: first,
        ranker_last_epoch_loss: last,
        outcomes,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Run every seed (in parallel when enabled) and aggregate per method.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.synth.validate()?;
    config.train.validate()?;
    config.selection.validate()?;
    if config.bench.num_seeds == 0 {
        return Err(Error::invalid("num_seeds must be >= 1"));
    }
    let seeds: Vec<u64> = (0..config.bench.num_seeds as u64)
        .map(|i| config.bench.first_seed + i)
        .collect();
    #[cfg(feature = "parallel")]
    let per_seed = seeds
        .par_iter()
        .map(|&s| run_seed(config, s))
        .collect::<Result<Vec<_>>>()?;
    #[cfg(not(feature = "parallel"))]
    let per_seed = seeds
        .iter()
        .map(|&s| run_seed(config, s))
        .collect::<Result<Vec<_>>>()?;

    let mut methods: Vec<String> = Vec::new();
    for o in &per_seed[0].outcomes {
        if !methods.contains(&o.method) {
            methods.push(o.method.clone());
        }
    }
    let mut by_method: BTreeMap<&str, Vec<&MethodOutcome>> = BTreeMap::new();
    for s in &per_seed {
        for o in &s.outcomes {
            by_method.entry(o.method.as_str()).or_default().push(o);
        }
    }
    let summary = methods
        .iter()
        .map(|m| {
            let rows = &by_method[m.as_str()];
            MethodSummary {
                method: m.clone(),
                mean_failure_srcc: mean(rows.iter().map(|o| o.failure_srcc)),
                mean_failure_plcc: mean(rows.iter().map(|o| o.failure_plcc)),
                mean_srcc_after: mean(rows.iter().map(|o| o.srcc_after)),
            }
        })
        .collect();
    Ok(BenchReport {
        config: config.clone(),
        seeds,
        mean_srcc_before: mean(per_seed.iter().map(|s| s.srcc_before)),
        per_seed,
        summary,
    })
}

/// Mean target SRCC before and after fine-tuning on one method's selection,
/// over the given seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub method: SelectionMethod,
    pub seeds: Vec<u64>,
    pub srcc_before: Vec<f64>,
    pub srcc_after: Vec<f64>,
    pub mean_before: f64,
    pub mean_after: f64,
}

pub fn simulate_active_finetune(
    config: &BenchConfig,
    method: SelectionMethod,
    seeds: &[u64],
) -> Result<FinetuneReport> {
    let mut before = Vec::with_capacity(seeds.len());
    let mut after = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let world = build_seed_world(config, seed)?;
        let budget = config.selection.budget;
        let selected = match method {
            SelectionMethod::Random => {
                baseline_select(method, &world.pool, &ScoreMap::new(), budget, seed)?.selected
            }
            SelectionMethod::OracleError => {
                let errors: ScoreMap = world
                    .pool
                    .records()
                    .iter()
                    .map(|r| Ok((r.id().to_owned(), r.abs_error()?)))
                    .collect::<Result<_>>()?;
                baseline_select(
                    SelectionMethod::TopkDifficulty,
                    &world.pool,
                    &errors,
                    budget,
                    seed,
                )?
                .selected
            }
            SelectionMethod::TopkDifficulty | SelectionMethod::DifficultyDiversity => {
                let (scores, _, _) =
                    difficulty_scores(config, &world, seed, config.train.loss_kind)?;
                if method == SelectionMethod::DifficultyDiversity {
                    greedy_select(&world.pool, &scores, &config.selection)?.selected
                } else {
                    baseline_select(method, &world.pool, &scores, budget, seed)?.selected
                }
            }
        };
        let (b, a) = finetune_once(
            &world.source,
            &world.pool,
            &world.test,
            &selected,
            config.bench.ridge_reg,
        )?;
        before.push(b);
        after.push(a);
    }
    Ok(FinetuneReport {
        method,
        seeds: seeds.to_vec(),
        mean_before: mean(before.iter().copied()),
        mean_after: mean(after.iter().copied()),
        srcc_before: before,
        srcc_after: after,
    })
}
