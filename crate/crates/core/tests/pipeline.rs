//! Learning and benchmark behaviour on planted fixtures.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use vqsel::bench::{
    finetune_once, fit_toy_base, gen_synthetic, predict_toy, run_bench, BenchConfig, SynthConfig,
    LAMBDA_GRID,
};
use vqsel::metrics::{correlations_on, srcc};
use vqsel::ranker::{make_pair_labels, score_pool, train_ranker, PairingStrategy, TrainConfig};
use vqsel::rng::stream;
use vqsel::selection::{greedy_select, Budget, SelectionConfig};
use vqsel::{FeatureStore, Pooling, ScoreMap, VideoRecord};

/// Records whose base-model error grows linearly with feature 0.
fn planted_pool(seed: u64, n: usize, dim: usize, prefix: &str) -> (FeatureStore, Vec<f64>) {
    let mut rng = stream(seed, prefix);
    let mut truth = Vec::with_capacity(n);
    let records = (0..n)
        .map(|i| {
            let feats: Vec<f32> = (0..2 * dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .map(|v: f64| v as f32)
                .collect();
            let pooled0 = (feats[0] + feats[dim]) as f64 / 2.0;
            let difficulty = 1.0 + pooled0;
            truth.push(difficulty);
            let mos = rng.random_range(1.0..5.0);
            // signed error of size softplus-free shift: keep it positive
            let err = (difficulty + 3.0) * 0.25;
            let pred = if rng.random_bool(0.5) {
                mos + err
            } else {
                mos - err
            };
            VideoRecord::new(format!("{prefix}{i:03}"), dim, feats)
                .unwrap()
                .with_scores(Some(mos), Some(pred))
        })
        .collect();
    (FeatureStore::new(dim, records).unwrap(), truth)
}

#[test]
fn fidelity_training_recovers_planted_difficulty() {
    let mut total = 0.0;
    for seed in 0..5 {
        let (train, _) = planted_pool(seed, 200, 6, "a");
        let (held_out, truth) = planted_pool(seed, 200, 6, "b");
        let pairs = make_pair_labels(&train, PairingStrategy::Auto, seed).unwrap();
        let config = TrainConfig {
            learning_rate: 0.3,
            seed,
            ..TrainConfig::default()
        };
        let (params, report) = train_ranker(&train, &pairs, &config).unwrap();
        assert!(report.epoch_losses.last() <= report.epoch_losses.first());
        let scores = score_pool(&params, &held_out, Pooling::Mean).unwrap();
        let g: Vec<f64> = held_out.ids().map(|id| scores[id]).collect();
        total += srcc(&g, &truth).unwrap();
    }
    let mean = total / 5.0;
    assert!(mean >= 0.9, "5-seed mean SRCC {mean}");
}

#[test]
fn training_is_bit_reproducible() {
    let (train, _) = planted_pool(3, 60, 3, "a");
    let pairs = make_pair_labels(&train, PairingStrategy::Sampled { count: 500 }, 3).unwrap();
    let config = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let a = train_ranker(&train, &pairs, &config).unwrap();
    let b = train_ranker(&train, &pairs, &config).unwrap();
    assert_eq!(a.0.to_checkpoint_bytes(), b.0.to_checkpoint_bytes());
    assert_eq!(a.1, b.1);
}

fn base_srcc(model_on: &FeatureStore, eval_on: &FeatureStore) -> f64 {
    let model = fit_toy_base(model_on, 1e-3).unwrap();
    let preds = predict_toy(&model, eval_on).unwrap();
    let ids: Vec<&str> = eval_on.ids().collect();
    correlations_on(&ids, &preds, &eval_on.mos_map()).unwrap().0
}

#[test]
fn synthetic_world_is_deterministic_and_sized() {
    let config = SynthConfig {
        n_source: 40,
        n_target: 60,
        seed: 11,
        ..SynthConfig::default()
    };
    let (s1, t1) = gen_synthetic(&config).unwrap();
    let (s2, t2) = gen_synthetic(&config).unwrap();
    assert_eq!((s1.len(), t1.len()), (40, 60));
    assert_eq!((s1.clone(), t1.clone()), (s2, t2));
    assert_eq!(s1.records()[0].num_frames(), config.frames);
    let (s3, _) = gen_synthetic(&SynthConfig { seed: 12, ..config }).unwrap();
    assert_ne!(s1, s3);

    let dir = tempfile::tempdir().unwrap();
    t1.write_dir(dir.path()).unwrap();
    let mut back = vqsel::load_feature_store(dir.path().join("manifest.json")).unwrap();
    back.apply_scores(&vqsel::ScoreTable::read(dir.path().join("scores.csv")).unwrap())
        .unwrap();
    assert_eq!(back, t1);
}

#[test]
fn without_planted_shift_the_base_model_transfers() {
    let mut total = 0.0;
    for seed in 0..5 {
        let config = SynthConfig {
            hard_region_fraction: 0.0,
            seed,
            ..SynthConfig::default()
        };
        let (source, target) = gen_synthetic(&config).unwrap();
        total += base_srcc(&source, &target);
    }
    assert!(total / 5.0 >= 0.9, "mean SRCC {}", total / 5.0);
}

#[test]
fn noiseless_linear_quality_is_recovered() {
    let config = SynthConfig {
        noise_sigma: 0.0,
        nonlinearity: 0.0,
        ..SynthConfig::default()
    };
    let (source, _) = gen_synthetic(&config).unwrap();
    let r = base_srcc(&source, &source);
    assert!(r >= 0.99, "SRCC {r}");
}

fn linear_store(n: usize, dim: usize) -> FeatureStore {
    let mut rng = stream(7, "linear");
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let records = (0..n)
        .map(|i| {
            let x: Vec<f32> = (0..dim).map(|_| rng.random_range(-2.0f32..2.0)).collect();
            let mos = 3.0 + x.iter().zip(&w).map(|(&a, b)| a as f64 * b).sum::<f64>();
            VideoRecord::new(format!("v{i}"), dim, x)
                .unwrap()
                .with_scores(Some(mos), None)
        })
        .collect();
    FeatureStore::new(dim, records).unwrap()
}

#[test]
fn ridge_limits() {
    let store = linear_store(80, 5);
    let exact = fit_toy_base(&store, 1e-8).unwrap();
    let preds = predict_toy(&exact, &store).unwrap();
    let ids: Vec<&str> = store.ids().collect();
    let (s, _) = correlations_on(&ids, &preds, &store.mos_map()).unwrap();
    assert!(s >= 0.999, "SRCC {s}");

    let flat = fit_toy_base(&store, 1e12).unwrap();
    assert!(flat.weights.iter().all(|w| w.abs() < 1e-8));
    let mean_mos = store.records().iter().map(|r| r.mos.unwrap()).sum::<f64>() / 80.0;
    let preds = predict_toy(&flat, &store).unwrap();
    assert!(preds.values().all(|p| (p - mean_mos).abs() < 1e-6));
}

#[test]
fn empty_selection_leaves_the_model_unchanged() {
    let config = SynthConfig {
        n_source: 100,
        n_target: 100,
        ..SynthConfig::default()
    };
    let (source, target) = gen_synthetic(&config).unwrap();
    let ids: Vec<&str> = target.ids().collect();
    let pool = target.subset(&ids[..50]).unwrap();
    let test = target.subset(&ids[50..]).unwrap();
    let (before, after) = finetune_once::<&str>(&source, &pool, &test, &[], 1e-3).unwrap();
    assert_eq!(before, after);
    // selection order does not matter
    let a = finetune_once(&source, &pool, &test, &[ids[3], ids[10]], 1e-3).unwrap();
    let b = finetune_once(&source, &pool, &test, &[ids[10], ids[3]], 1e-3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bench_report_has_a_row_per_strategy() {
    let mut config = BenchConfig::desk_default();
    config.synth.n_source = 150;
    config.synth.n_target = 300;
    config.train.epochs = 2;
    config.bench.num_seeds = 2;
    config.bench.lambda_sweep = LAMBDA_GRID.to_vec();
    let report = run_bench(&config).unwrap();
    let names: Vec<&str> = report.summary.iter().map(|m| m.method.as_str()).collect();
    assert_eq!(
        names,
        [
            "random",
            "topk_difficulty",
            "difficulty_diversity",
            "oracle_error",
            "lambda_0",
            "lambda_0.125",
            "lambda_0.25",
            "lambda_0.5"
        ]
    );
    assert_eq!(report.seeds, [0, 1]);
    // lambda 0 is the top-k baseline
    assert_eq!(
        report.summary[1].mean_failure_srcc,
        report.summary[4].mean_failure_srcc
    );
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 1 + 2 * 8);
    assert_eq!(run_bench(&config).unwrap(), report);
}

fn random_scored_pool(seed: u64, n: usize) -> (FeatureStore, ScoreMap) {
    let mut rng = stream(seed, "homogeneity");
    let mut scores = ScoreMap::new();
    let records = (0..n)
        .map(|i| {
            let id = format!("v{i:02}");
            scores.insert(id.clone(), rng.random_range(-1.0..1.0));
            let x: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            VideoRecord::new(id, 3, x).unwrap()
        })
        .collect();
    (FeatureStore::new(3, records).unwrap(), scores)
}

#[test]
fn scaling_scores_and_lambda_together_keeps_the_order() {
    for seed in 0..30 {
        let (store, scores) = random_scored_pool(seed, 25);
        let mut rng = stream(seed, "scale");
        let c: f64 = rng.random_range(0.1..10.0);
        let lambda = rng.random_range(0.0..2.0);
        let config = SelectionConfig {
            lambda,
            budget: Budget::Count(8),
            ..SelectionConfig::default()
        };
        let base = greedy_select(&store, &scores, &config).unwrap().selected;
        let scaled_scores: ScoreMap = scores.iter().map(|(k, v)| (k.clone(), v * c)).collect();
        let scaled = greedy_select(
            &store,
            &scaled_scores,
            &SelectionConfig {
                lambda: lambda * c,
                ..config
            },
        )
        .unwrap()
        .selected;
        assert_eq!(base, scaled, "seed {seed}, c {c}");
    }
}
