//! Command-line front end for `vqsel`.
//!
//! Every command reads an optional TOML config, applies flag overrides on
//! top, and writes outputs that carry the effective config and seed. Reruns
//! with the same inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use vqsel::bench::{
    fit_toy_base, gen_synthetic, predict_toy, run_bench, BenchConfig, BenchOptions, SynthConfig,
    ToyBaseModel, LAMBDA_GRID,
};
use vqsel::gmad::{gmad_tournament, GmadConfig};
use vqsel::metrics::correlations_on;
use vqsel::ranker::{
    make_pair_labels, score_pool, train_ranker, write_pair_labels, LossKind, PairingStrategy,
    RankerParams, TrainConfig, TrainReport,
};
use vqsel::selection::{
    export_pair_labels, greedy_select, write_preference_pairs, Budget, SelectionConfig,
    SelectionStep,
};
use vqsel::store::{FeatureStore, ScoreTable, MANIFEST_FILE, SCORES_FILE};

/// Everything a run can be configured with. Unknown keys are rejected.
///
/// The top-level `seed` is the only seed: it is copied into the synthetic
/// generator, the trainer and the benchmark's first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub gmad: GmadConfig,
    pub bench: BenchOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let desk = BenchConfig::desk_default();
        Self {
            seed: 0,
            synth: desk.synth,
            train: desk.train,
            selection: desk.selection,
            gmad: GmadConfig::default(),
            bench: desk.bench,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn apply(&mut self, common: &Common) {
        if let Some(seed) = common.seed {
            self.seed = seed;
        }
        if let Some(lambda) = common.lambda {
            self.selection.lambda = lambda;
        }
        if let Some(budget) = common.budget {
            self.selection.budget = budget;
        }
        if let Some(loss) = common.loss {
            self.train.loss_kind = loss;
        }
        if common.normalize_terms {
            self.selection.normalize_terms = true;
        }
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.bench.first_seed = self.seed;
    }

    fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.selection.validate()?;
        self.gmad.validate()?;
        Ok(())
    }

    fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            synth: self.synth.clone(),
            train: self.train.clone(),
            selection: self.selection.clone(),
            bench: self.bench.clone(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "vqsel",
    version,
    about = "Failure-driven sample selection for video quality models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Flags a command does not use are accepted
/// and still recorded in its output config.
#[derive(Debug, Clone, Default, Args)]
struct Common {
    /// TOML config file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random stream of the run
    #[arg(long)]
    seed: Option<u64>,
    /// Diversity weight
    #[arg(long)]
    lambda: Option<f64>,
    /// Selection budget: a count ("50") or a pool fraction ("0.05")
    #[arg(long)]
    budget: Option<Budget>,
    /// Failure-predictor training loss: fidelity, classification or regression
    #[arg(long)]
    loss: Option<LossKind>,
    /// Min-max normalize both selection terms at every step
    #[arg(long)]
    normalize_terms: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic source/target pair of feature stores
    GenSynth {
        #[command(flatten)]
        common: Common,
        /// Output directory; receives source/, target/ and gen_synth.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the failure predictor on a store with MOS and base predictions
    TrainRanker {
        #[command(flatten)]
        common: Common,
        /// Store directory (manifest.json, features.bin, scores.csv)
        #[arg(long)]
        store: PathBuf,
        /// Scores file to use instead of the store's scores.csv
        #[arg(long, value_name = "FILE")]
        scores: Option<PathBuf>,
        /// Checkpoint path; a .json sidecar is written next to it
        #[arg(long)]
        out: PathBuf,
        /// Also write the labeled training pairs as CSV
        #[arg(long, value_name = "FILE")]
        export_pairs: Option<PathBuf>,
    },
    /// Select a labeling subset from an unlabeled pool
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: PathBuf,
        /// Scores file to use instead of the store's scores.csv
        #[arg(long, value_name = "FILE")]
        scores: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Selection report (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Also write MOS preference pairs among the selected videos as CSV
        #[arg(long, value_name = "FILE")]
        export_pairs: Option<PathBuf>,
    },
    /// SRCC/PLCC of base predictions against MOS
    Eval {
        #[command(flatten)]
        common: Common,
        /// Scores file with mos and base_pred columns
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        /// Restrict to the videos of a selection report
        #[arg(long, value_name = "FILE")]
        selection: Option<PathBuf>,
        /// Write the report here as well as to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// gMAD competition between models given as NAME=scores.csv
    Gmad {
        #[command(flatten)]
        common: Common,
        /// Model predictions, read from the base_pred column
        #[arg(long = "model", value_name = "NAME=FILE", required = true)]
        models: Vec<String>,
        /// Scores file whose mos column is the ground truth
        #[arg(long, value_name = "FILE")]
        mos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-seed synthetic benchmark of all selection strategies
    Bench {
        #[command(flatten)]
        common: Common,
        /// Output directory; receives bench.json and bench.csv
        #[arg(long)]
        out: PathBuf,
        /// Add difficulty-diversity runs for every lambda in {0, 0.125, 0.25, 0.5}
        #[arg(long)]
        lambda_sweep: bool,
        /// Add difficulty-diversity runs with each training loss
        #[arg(long)]
        loss_ablation: bool,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenSynth { common, .. }
            | Command::TrainRanker { common, .. }
            | Command::Select { common, .. }
            | Command::Eval { common, .. }
            | Command::Gmad { common, .. }
            | Command::Bench { common, .. } => common,
        }
    }
}

fn effective_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(common);
    config.validate()?;
    Ok(config)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Load a store directory, attaching `scores` or else the directory's own
/// scores file when present.
fn load_store(dir: &Path, scores: Option<&Path>) -> Result<FeatureStore> {
    let mut store = vqsel::load_feature_store(dir.join(MANIFEST_FILE))?;
    let default = dir.join(SCORES_FILE);
    let scores = scores.or_else(|| default.exists().then_some(default.as_path()));
    if let Some(path) = scores {
        store.apply_scores(&ScoreTable::read(path)?)?;
    }
    Ok(store)
}

#[derive(Serialize)]
struct GenSynthReport<'a> {
    config: &'a RunConfig,
    seed: u64,
    n_source: usize,
    n_target: usize,
    base_model: ToyBaseModel,
}

#[derive(Serialize)]
struct TrainSidecar<'a> {
    config: &'a RunConfig,
    seed: u64,
    store: String,
    report: TrainReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectReport {
    config: RunConfig,
    seed: u64,
    selected: Vec<String>,
    iterations: Vec<SelectionStep>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    config: &'a RunConfig,
    seed: u64,
    videos: usize,
    srcc: f64,
    plcc: f64,
}

#[derive(Serialize)]
struct GmadOutput<'a> {
    config: &'a RunConfig,
    seed: u64,
    report: vqsel::gmad::GmadReport,
}

/// Parse `args` (including the program name) and run the command, writing
/// human-readable progress to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let mut config = effective_config(cli.command.common())?;
    let seed = config.seed;

    match cli.command {
        Command::GenSynth { out, .. } => {
            let (mut source, mut target) = gen_synthetic(&config.synth)?;
            let base = fit_toy_base(&source, config.bench.ridge_reg)?;
            source.set_base_preds(&predict_toy(&base, &source)?)?;
            target.set_base_preds(&predict_toy(&base, &target)?)?;
            source.write_dir(out.join("source"))?;
            target.write_dir(out.join("target"))?;
            let report = GenSynthReport {
                config: &config,
                seed,
                n_source: source.len(),
                n_target: target.len(),
                base_model: base,
            };
            write_bytes(&out.join("gen_synth.json"), &to_json(&report)?)?;
            writeln!(
                stdout,
                "wrote {} source and {} target videos to {}",
                source.len(),
                target.len(),
                out.display()
            )?;
        }
        Command::TrainRanker {
            store: dir,
            scores,
            out,
            export_pairs,
            ..
        } => {
            let store = load_store(&dir, scores.as_deref())?;
            let pairs = make_pair_labels(&store, PairingStrategy::Auto, seed)?;
            if let Some(path) = &export_pairs {
                write_pair_labels(path, &pairs)?;
            }
            let (params, report) = train_ranker(&store, &pairs, &config.train)?;
            write_bytes(&out, &params.to_checkpoint_bytes())?;
            let losses = &report.epoch_losses;
            if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
                writeln!(
                    stdout,
                    "trained on {} pairs: epoch loss {first:.6} -> {last:.6}",
                    report.num_pairs
                )?;
            }
            let sidecar = TrainSidecar {
                config: &config,
                seed,
                store: dir.display().to_string(),
                report,
            };
            write_bytes(&sidecar_path(&out), &to_json(&sidecar)?)?;
        }
        Command::Select {
            store: dir,
            scores: scores_path,
            checkpoint,
            out,
            export_pairs,
            ..
        } => {
            let store = load_store(&dir, scores_path.as_deref())?;
            let params = RankerParams::read_checkpoint(&checkpoint)?;
            let scores = score_pool(&params, &store, config.train.pooling)?;
            let result = greedy_select(&store, &scores, &config.selection)?;
            if let Some(path) = &export_pairs {
                write_preference_pairs(path, &export_pair_labels(&result.selected, &store)?)?;
            }
            writeln!(
                stdout,
                "selected {} of {} videos",
                result.selected.len(),
                store.len()
            )?;
            let report = SelectReport {
                config: config.clone(),
                seed,
                selected: result.selected,
                iterations: result.iterations,
            };
            write_bytes(&out, &to_json(&report)?)?;
        }
        Command::Eval {
            scores,
            selection,
            out,
            ..
        } => {
            let table = ScoreTable::read(&scores)?;
            let ids: Vec<String> = match &selection {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let report: SelectReport = serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))?;
                    report.selected
                }
                None => table.rows.iter().map(|r| r.id.clone()).collect(),
            };
            let (preds, mos) = (table.base_pred_map(), table.mos_map());
            for id in &ids {
                for (map, column) in [(&preds, "base_pred"), (&mos, "mos")] {
                    if !map.contains_key(id) {
                        bail!("{id:?} has no {column} value in {}", scores.display());
                    }
                }
            }
            let (srcc, plcc) = correlations_on(&ids, &preds, &mos)?;
            let report = EvalReport {
                config: &config,
                seed,
                videos: ids.len(),
                srcc,
                plcc,
            };
            let json = to_json(&report)?;
            if let Some(path) = &out {
                write_bytes(path, &json)?;
            }
            stdout.write_all(&json)?;
        }
        Command::Gmad {
            models: specs,
            mos,
            out,
            ..
        } => {
            let mut models = BTreeMap::new();
            for spec in &specs {
                let Some((name, path)) = spec.split_once('=') else {
                    bail!("--model expects NAME=FILE, got {spec:?}");
                };
                let preds = ScoreTable::read(path)?.base_pred_map();
                if models.insert(name.to_owned(), preds).is_some() {
                    bail!("model {name:?} given twice");
                }
            }
            let truth = ScoreTable::read(&mos)?.mos_map();
            let report = gmad_tournament(&models, &truth, &config.gmad)?;
            for (name, s) in &report.tournament {
                writeln!(stdout, "{name}: rank {} with {} wins", s.rank, s.wins)?;
            }
            let output = GmadOutput {
                config: &config,
                seed,
                report,
            };
            write_bytes(&out, &to_json(&output)?)?;
        }
        Command::Bench {
            out,
            lambda_sweep,
            loss_ablation,
            ..
        } => {
            if lambda_sweep {
                config.bench.lambda_sweep = LAMBDA_GRID.to_vec();
            }
            if loss_ablation {
                config.bench.loss_ablation = vec![
                    LossKind::Fidelity,
                    LossKind::Classification,
                    LossKind::Regression,
                ];
            }
            let report = run_bench(&config.bench_config())?;
            write_bytes(
                &out.join("bench.json"),
                &to_json(&BenchOutput {
                    seed,
                    report: &report,
                })?,
            )?;
            write_bytes(&out.join("bench.csv"), report.to_csv().as_bytes())?;
            writeln!(
                stdout,
                "mean srcc before fine-tuning {:.4}",
                report.mean_srcc_before
            )?;
            for m in &report.summary {
                writeln!(
                    stdout,
                    "{:<28} failure srcc {:.4}  srcc after {:.4}",
                    m.method, m.mean_failure_srcc, m.mean_srcc_after
                )?;
            }
        }
    }
    Ok(())
}

/// The bench report already embeds its config; the seed is the first one.
#[derive(Serialize)]
struct BenchOutput<'a> {
    seed: u64,
    #[serde(flatten)]
    report: &'a vqsel::bench::BenchReport,
}

/// `model.ckpt` -> `model.ckpt.json`
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}
