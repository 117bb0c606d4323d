//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use vqsel::gmad::{gmad_tournament, GmadConfig};
use vqsel::ranker::{classification_loss, fidelity_loss, pairwise_probability, DEFAULT_PROB_CLAMP};
use vqsel::rng::stream;
use vqsel::selection::{greedy_select, Budget, SelectionConfig};
use vqsel::{FeatureStore, ScoreMap, VideoRecord};

fn to_js<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

fn js_err(e: vqsel::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn gaussian(rng: &mut vqsel::rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Serialize)]
struct DemoPoint {
    id: String,
    x: f32,
    y: f32,
    difficulty: f64,
}

#[derive(Serialize)]
struct DemoStep {
    id: String,
    difficulty: f64,
    diversity: f64,
    objective: f64,
}

#[derive(Serialize)]
struct SelectionDemo {
    points: Vec<DemoPoint>,
    steps: Vec<DemoStep>,
}

/// A 2-D pool of `n` videos (one frame each) in a few clusters, with
/// difficulty peaking in one corner, selected greedily with weight `lambda`.
#[wasm_bindgen]
pub fn selection_demo(seed: u32, n: usize, lambda: f64, budget: usize) -> Result<String, JsError> {
    if !(2..=2000).contains(&n) {
        return Err(JsError::new("pool size must be between 2 and 2000"));
    }
    let mut rng = stream(seed as u64, "demo.pool");
    let centers = [(-1.5, -1.0), (1.5, -1.2), (0.0, 1.5), (1.8, 1.6)];
    let mut records = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut scores = ScoreMap::new();
    for i in 0..n {
        let (cx, cy) = centers[i % centers.len()];
        let x = (cx + 0.45 * gaussian(&mut rng)) as f32;
        let y = (cy + 0.45 * gaussian(&mut rng)) as f32;
        // hard region around (1.5, 1.5) plus a little noise
        let d2 = (x as f64 - 1.5).powi(2) + (y as f64 - 1.5).powi(2);
        let difficulty = (-0.5 * d2).exp() + 0.1 * gaussian(&mut rng);
        let id = format!("v{i:04}");
        scores.insert(id.clone(), difficulty);
        records.push(VideoRecord::new(id.clone(), 2, vec![x, y]).map_err(js_err)?);
        points.push(DemoPoint {
            id,
            x,
            y,
            difficulty,
        });
    }
    let store = FeatureStore::new(2, records).map_err(js_err)?;
    let config = SelectionConfig {
        lambda,
        budget: Budget::Count(budget),
        ..SelectionConfig::default()
    };
    let result = greedy_select(&store, &scores, &config).map_err(js_err)?;
    let steps = result
        .iterations
        .into_iter()
        .map(|s| DemoStep {
            id: s.id,
            difficulty: s.difficulty,
            diversity: s.diversity,
            objective: s.objective,
        })
        .collect();
    to_js(&SelectionDemo { points, steps })
}

#[derive(Serialize)]
struct LossCurves {
    gap: Vec<f64>,
    p_hat: Vec<f64>,
    fidelity_harder: Vec<f64>,
    fidelity_easier: Vec<f64>,
    cross_entropy_harder: Vec<f64>,
    cross_entropy_easier: Vec<f64>,
}

/// Pairwise probability and both ranking losses as functions of the score
/// gap `g(x) - g(y)` over `[-range, range]`.
#[wasm_bindgen]
pub fn loss_curves(range: f64, steps: usize) -> Result<String, JsError> {
    if !(range > 0.0 && range.is_finite()) || !(2..=10_000).contains(&steps) {
        return Err(JsError::new("need a positive range and 2..=10000 steps"));
    }
    let eps = DEFAULT_PROB_CLAMP;
    let gap: Vec<f64> = (0..steps)
        .map(|i| -range + 2.0 * range * i as f64 / (steps - 1) as f64)
        .collect();
    let p_hat: Vec<f64> = gap
        .iter()
        .map(|&d| pairwise_probability(d, 0.0, eps))
        .collect();
    let curve = |f: fn(f64, f64) -> f64, p: f64| p_hat.iter().map(|&q| f(p, q)).collect();
    to_js(&LossCurves {
        fidelity_harder: curve(fidelity_loss, 1.0),
        fidelity_easier: curve(fidelity_loss, 0.0),
        cross_entropy_harder: curve(classification_loss, 1.0),
        cross_entropy_easier: curve(classification_loss, 0.0),
        gap,
        p_hat,
    })
}

#[derive(Serialize)]
struct GmadDemo {
    mos: ScoreMap,
    models: BTreeMap<String, ScoreMap>,
    report: vqsel::gmad::GmadReport,
}

/// gMAD between a model that tracks MOS up to `noise_a` and one that tracks
/// it up to `noise_b`, on `n` videos.
#[wasm_bindgen]
pub fn gmad_demo(
    seed: u32,
    n: usize,
    noise_a: f64,
    noise_b: f64,
    levels: usize,
    tolerance: f64,
) -> Result<String, JsError> {
    if !(2..=500).contains(&n) {
        return Err(JsError::new("pool size must be between 2 and 500"));
    }
    let mut rng = stream(seed as u64, "demo.gmad");
    let mut mos = ScoreMap::new();
    let mut a = ScoreMap::new();
    let mut b = ScoreMap::new();
    for i in 0..n {
        let id = format!("v{i:03}");
        let m = 1.0 + 4.0 * rng.random::<f64>();
        a.insert(id.clone(), m + noise_a * gaussian(&mut rng));
        b.insert(id.clone(), m + noise_b * gaussian(&mut rng));
        mos.insert(id, m);
    }
    let models = BTreeMap::from([("model_a".to_owned(), a), ("model_b".to_owned(), b)]);
    let config = GmadConfig {
        num_levels: levels,
        level_tolerance: tolerance,
        pairs_per_level: 1,
    };
    let report = gmad_tournament(&models, &mos, &config).map_err(js_err)?;
    to_js(&GmadDemo {
        mos,
        models,
        report,
    })
}
