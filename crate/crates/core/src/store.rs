//! Per-video frame embeddings plus optional opinion scores and base-model
//! predictions.
//!
//! On disk a pool is three files living side by side:
//!
//! ```text
//! manifest.json  {"dim": d, "records": [{"id", "num_frames", "offset_bytes"}, ...]}
//! features.bin   little-endian f32, row-major (frame-major), num_frames*d per record
//! scores.csv     id,mos,base_pred   (empty cell = absent)
//! ```
//!
//! The scores file is kept apart from the embeddings so several base models can
//! share one feature blob.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const SCORES_FILE: &str = "scores.csv";

/// Map from video id to a real-valued score. Ordered so that anything
/// serialized from it is byte-stable.
pub type ScoreMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    id: String,
    dim: usize,
    features: Vec<f32>,
    pub mos: Option<f64>,
    pub base_pred: Option<f64>,
}

impl VideoRecord {
    /// `features` is row-major `num_frames x dim`.
    pub fn new(id: impl Into<String>, dim: usize, features: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("record id must be nonempty"));
        }
        if dim == 0 {
            return Err(Error::InvalidRecord {
                id,
                message: "feature dimension must be >= 1".into(),
            });
        }
        if features.is_empty() || !features.len().is_multiple_of(dim) {
            return Err(Error::InvalidRecord {
                id,
                message: format!(
                    "{} feature values do not form whole frames of dimension {dim}",
                    features.len()
                ),
            });
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                id,
                frame: pos / dim,
                offset: (pos * 4) as u64,
            });
        }
        Ok(Self {
            id,
            dim,
            features,
            mos: None,
            base_pred: None,
        })
    }

    pub fn with_scores(mut self, mos: Option<f64>, base_pred: Option<f64>) -> Self {
        self.mos = mos;
        self.base_pred = base_pred;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_frames(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.features[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn pool(&self, method: Pooling) -> Vec<f64> {
        pool_features(self, method)
    }

    /// Absolute base-model error `|f(x) - mu(x)|`.
    pub fn abs_error(&self) -> Result<f64> {
        let mos = self.mos.ok_or_else(|| Error::MissingValue {
            id: self.id.clone(),
            field: "mos",
        })?;
        let pred = self.base_pred.ok_or_else(|| Error::MissingValue {
            id: self.id.clone(),
            field: "base_pred",
        })?;
        Ok((pred - mos).abs())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// Collapse the frame axis of a record into a single `dim`-vector.
pub fn pool_features(record: &VideoRecord, method: Pooling) -> Vec<f64> {
    let dim = record.dim();
    match method {
        Pooling::Mean => {
            let mut acc = vec![0.0f64; dim];
            for frame in record.frames() {
                for (a, &v) in acc.iter_mut().zip(frame) {
                    *a += v as f64;
                }
            }
            let n = record.num_frames() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        }
        Pooling::Max => {
            let mut acc = vec![f64::NEG_INFINITY; dim];
            for frame in record.frames() {
                for (a, &v) in acc.iter_mut().zip(frame) {
                    *a = a.max(v as f64);
                }
            }
            acc
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    records: Vec<VideoRecord>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize, records: Vec<VideoRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("store dimension must be >= 1"));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.dim(),
                });
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            dim,
            records,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&VideoRecord> {
        self.position(id).map(|i| &self.records[i])
    }

    pub fn require(&self, id: &str) -> Result<&VideoRecord> {
        self.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    /// New store holding the listed ids, in the listed order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<FeatureStore> {
        let records = ids
            .iter()
            .map(|id| self.require(id.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        FeatureStore::new(self.dim, records)
    }

    /// Concatenate two stores with the same dimension; ids must stay unique.
    pub fn concat(&self, other: &FeatureStore) -> Result<FeatureStore> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let records = self.records.iter().chain(&other.records).cloned().collect();
        FeatureStore::new(self.dim, records)
    }

    /// Copy of the store with every frame scaled to unit L2 norm. Zero frames
    /// are left untouched.
    pub fn l2_normalized(&self) -> FeatureStore {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut feats = r.features.clone();
                for frame in feats.chunks_exact_mut(self.dim) {
                    let norm = frame
                        .iter()
                        .map(|&v| (v as f64) * (v as f64))
                        .sum::<f64>()
                        .sqrt();
                    if norm > 0.0 {
                        frame
                            .iter_mut()
                            .for_each(|v| *v = (*v as f64 / norm) as f32);
                    }
                }
                VideoRecord {
                    features: feats,
                    ..r.clone()
                }
            })
            .collect();
        FeatureStore {
            dim: self.dim,
            records,
            index: self.index.clone(),
        }
    }

    pub fn mos_map(&self) -> ScoreMap {
        self.records
            .iter()
            .filter_map(|r| r.mos.map(|m| (r.id.clone(), m)))
            .collect()
    }

    pub fn base_pred_map(&self) -> ScoreMap {
        self.records
            .iter()
            .filter_map(|r| r.base_pred.map(|m| (r.id.clone(), m)))
            .collect()
    }

    /// Overwrite `mos`/`base_pred` from a scores table. Every row must name a
    /// record in the store; records without a row keep their current values.
    pub fn apply_scores(&mut self, scores: &ScoreTable) -> Result<()> {
        for row in &scores.rows {
            let i = self
                .position(&row.id)
                .ok_or_else(|| Error::UnknownId(row.id.clone()))?;
            self.records[i].mos = row.mos;
            self.records[i].base_pred = row.base_pred;
        }
        Ok(())
    }

    pub fn set_base_preds(&mut self, preds: &ScoreMap) -> Result<()> {
        for (id, &p) in preds {
            let i = self
                .position(id)
                .ok_or_else(|| Error::UnknownId(id.clone()))?;
            self.records[i].base_pred = Some(p);
        }
        Ok(())
    }

    pub fn score_table(&self) -> ScoreTable {
        ScoreTable {
            rows: self
                .records
                .iter()
                .map(|r| ScoreRow {
                    id: r.id.clone(),
                    mos: r.mos,
                    base_pred: r.base_pred,
                })
                .collect(),
        }
    }

    /// Write `manifest.json`, `features.bin` and `scores.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_files(&dir.join(MANIFEST_FILE), &dir.join(FEATURES_FILE))?;
        self.score_table().write(dir.join(SCORES_FILE))
    }

    pub fn write_files(&self, manifest_path: &Path, blob_path: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.records.len());
        let mut blob = Vec::with_capacity(
            self.records
                .iter()
                .map(|r| r.features.len() * 4)
                .sum::<usize>(),
        );
        for r in &self.records {
            entries.push(ManifestEntry {
                id: r.id.clone(),
                num_frames: r.num_frames(),
                offset_bytes: blob.len() as u64,
            });
            for v in &r.features {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            dim: self.dim,
            records: entries,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
        fs::write(blob_path, blob).map_err(|e| Error::io(blob_path, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    dim: usize,
    records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    num_frames: usize,
    offset_bytes: u64,
}

/// Load a store from a manifest, reading the blob `features.bin` next to it.
pub fn load_feature_store(manifest_path: impl AsRef<Path>) -> Result<FeatureStore> {
    let manifest_path = manifest_path.as_ref();
    let blob_path = manifest_path
        .parent()
        .map(|p| p.join(FEATURES_FILE))
        .unwrap_or_else(|| PathBuf::from(FEATURES_FILE));
    load_feature_store_from(manifest_path, &blob_path)
}

pub fn load_feature_store_from(manifest_path: &Path, blob_path: &Path) -> Result<FeatureStore> {
    let text = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|source| Error::Manifest {
        path: manifest_path.to_owned(),
        source,
    })?;
    let blob = fs::read(blob_path).map_err(|e| Error::io(blob_path, e))?;
    parse_store(&manifest, &blob)
}

fn parse_store(manifest: &Manifest, blob: &[u8]) -> Result<FeatureStore> {
    let dim = manifest.dim;
    if dim == 0 {
        return Err(Error::invalid("manifest dim must be >= 1"));
    }
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        if entry.num_frames == 0 {
            return Err(Error::InvalidRecord {
                id: entry.id.clone(),
                message: "num_frames must be >= 1".into(),
            });
        }
        let count = entry.num_frames as u64 * dim as u64;
        let end = entry.offset_bytes.checked_add(count * 4);
        let range = match end {
            Some(end) if end <= blob.len() as u64 => entry.offset_bytes as usize..end as usize,
            _ => {
                return Err(Error::Truncated {
                    id: entry.id.clone(),
                    offset: entry.offset_bytes,
                    needed: count * 4,
                    blob_len: blob.len() as u64,
                })
            }
        };
        let mut features = Vec::with_capacity(count as usize);
        for (k, bytes) in blob[range].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(bytes.try_into().expect("chunk of 4"));
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    id: entry.id.clone(),
                    frame: k / dim,
                    offset: entry.offset_bytes + 4 * k as u64,
                });
            }
            features.push(v);
        }
        records.push(VideoRecord::new(entry.id.clone(), dim, features)?);
    }
    FeatureStore::new(dim, records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub mos: Option<f64>,
    pub base_pred: Option<f64>,
}

/// Contents of a `scores.csv` file, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Scores { message, .. } => Error::Scores {
                path: path.to_owned(),
                message,
            },
            other => other,
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["id", "mos", "base_pred"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Scores {
                path: PathBuf::new(),
                message: format!("expected header id,mos,base_pred, found {:?}", headers),
            });
        }
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec[0].to_owned();
            if id.is_empty() {
                return Err(Error::Scores {
                    path: PathBuf::new(),
                    message: "empty id".into(),
                });
            }
            let field = |i: usize, name: &str| -> Result<Option<f64>> {
                let cell = &rec[i];
                if cell.is_empty() {
                    return Ok(None);
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::Scores {
                        path: PathBuf::new(),
                        message: format!("row {id:?}: bad {name} value {cell:?}"),
                    }),
                }
            };
            let mos = field(1, "mos")?;
            let base_pred = field(2, "base_pred")?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            rows.push(ScoreRow { id, mos, base_pred });
        }
        Ok(Self { rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("id,mos,base_pred\n");
        for row in &self.rows {
            let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{}\n",
                row.id,
                cell(row.mos),
                cell(row.base_pred)
            ));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn mos_map(&self) -> ScoreMap {
        self.rows
            .iter()
            .filter_map(|r| r.mos.map(|m| (r.id.clone(), m)))
            .collect()
    }

    pub fn base_pred_map(&self) -> ScoreMap {
        self.rows
            .iter()
            .filter_map(|r| r.base_pred.map(|m| (r.id.clone(), m)))
            .collect()
    }
}
