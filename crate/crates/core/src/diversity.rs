//! Content diversity between videos, measured on their frame-level
//! embedding sets with the (squared-Euclidean) Chamfer distance.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::store::{FeatureStore, VideoRecord};

/// Borrowed `rows x dim` row-major point set.
#[derive(Debug, Clone, Copy)]
pub struct FrameSet<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> FrameSet<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form a nonempty set of {dim}-dimensional points",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> impl Iterator<Item = &'a [f32]> {
        self.data.chunks_exact(self.dim)
    }
}

impl<'a> From<&'a VideoRecord> for FrameSet<'a> {
    fn from(r: &'a VideoRecord) -> Self {
        FrameSet {
            data: r.features(),
            dim: r.dim(),
        }
    }
}

fn sq_dist(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum()
}

/// Mean nearest-neighbour squared distance from `x` to `y` plus the same from
/// `y` to `x`.
///
/// Each point-to-point distance is computed once and feeds both the row and
/// column minima.
pub fn chamfer_distance(x: FrameSet<'_>, y: FrameSet<'_>) -> Result<f64> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch {
            expected: x.dim,
            found: y.dim,
        });
    }
    Ok(chamfer_unchecked(x, y))
}

fn chamfer_unchecked(x: FrameSet<'_>, y: FrameSet<'_>) -> f64 {
    let mut col_min = vec![f64::INFINITY; y.rows()];
    let mut forward = 0.0;
    for u in x.points() {
        let mut row_min = f64::INFINITY;
        for (v, cm) in y.points().zip(col_min.iter_mut()) {
            let d = sq_dist(u, v);
            row_min = row_min.min(d);
            *cm = cm.min(d);
        }
        forward += row_min;
    }
    let backward: f64 = col_min.iter().sum();
    forward / x.rows() as f64 + backward / y.rows() as f64
}

pub fn record_distance(a: &VideoRecord, b: &VideoRecord) -> Result<f64> {
    chamfer_distance(a.into(), b.into())
}

/// Lazily filled symmetric cache of Chamfer distances keyed by video id.
///
/// A cache must only be used with one store; ids are not re-validated against
/// the features they were computed from.
#[derive(Debug, Default)]
pub struct DistanceCache {
    map: Mutex<HashMap<(String, String), f64>>,
}

impl DistanceCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_owned(), b.to_owned())
        } else {
            (b.to_owned(), a.to_owned())
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        self.map.lock().unwrap().get(&Self::key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(&self, store: &FeatureStore, a: &str, b: &str) -> Result<f64> {
        if let Some(d) = self.get(a, b) {
            return Ok(d);
        }
        let d = record_distance(store.require(a)?, store.require(b)?)?;
        self.map.lock().unwrap().insert(Self::key(a, b), d);
        Ok(d)
    }
}

/// Chamfer distance between two stored videos, via the cache when given.
pub fn pair_distance(
    store: &FeatureStore,
    a: &str,
    b: &str,
    cache: Option<&DistanceCache>,
) -> Result<f64> {
    match cache {
        Some(c) => c.get_or_compute(store, a, b),
        None => record_distance(store.require(a)?, store.require(b)?),
    }
}

/// Mean Chamfer distance over all unordered pairs of `ids`.
pub fn set_diversity<S: AsRef<str>>(
    ids: &[S],
    store: &FeatureStore,
    cache: Option<&DistanceCache>,
) -> Result<f64> {
    if ids.len() < 2 {
        return Err(Error::invalid("set diversity needs at least two ids"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            total += pair_distance(store, a.as_ref(), b.as_ref(), cache)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(data: &[f32], dim: usize) -> FrameSet<'_> {
        FrameSet::new(data, dim).unwrap()
    }

    #[test]
    fn hand_examples() {
        let a = [0.3f32, -1.0, 2.0, 4.0, 0.0, 0.5];
        assert_eq!(chamfer_distance(set(&a, 2), set(&a, 2)).unwrap(), 0.0);
        assert_eq!(
            chamfer_distance(set(&[0.0, 0.0], 2), set(&[3.0, 4.0], 2)).unwrap(),
            50.0
        );
        assert_eq!(
            chamfer_distance(set(&[0.0, 0.0, 1.0, 0.0], 2), set(&[0.0, 0.0], 2)).unwrap(),
            0.5
        );
        assert!(matches!(
            chamfer_distance(set(&[0.0, 0.0], 2), set(&[0.0], 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn point_set_equality_ignores_order_and_multiplicity() {
        let a = [1.0f32, 2.0, 3.0];
        let b = [3.0f32, 1.0, 2.0, 2.0];
        assert_eq!(chamfer_distance(set(&a, 1), set(&b, 1)).unwrap(), 0.0);
    }

    fn line_store(points: &[f32]) -> FeatureStore {
        let records = points
            .iter()
            .enumerate()
            .map(|(i, &p)| VideoRecord::new(format!("v{i}"), 1, vec![p]).unwrap())
            .collect();
        FeatureStore::new(1, records).unwrap()
    }

    #[test]
    fn set_diversity_examples() {
        let store = line_store(&[0.0, 1.0, 3.0, 1.0]);
        assert_abs_diff_eq!(
            set_diversity(&["v0", "v1", "v2"], &store, None).unwrap(),
            28.0 / 3.0,
            epsilon = 1e-12
        );
        assert_eq!(set_diversity(&["v1", "v3"], &store, None).unwrap(), 0.0);
        let perm = set_diversity(&["v2", "v0", "v1"], &store, None).unwrap();
        assert_abs_diff_eq!(perm, 28.0 / 3.0, epsilon = 1e-12);
        assert!(set_diversity(&["v0"], &store, None).is_err());
        assert!(matches!(
            set_diversity(&["v0", "zz"], &store, None),
            Err(Error::UnknownId(_))
        ));
    }

    #[test]
    fn cache_is_transparent_and_symmetric() {
        let store = line_store(&[0.0, 1.0, 3.0, -2.0]);
        let cache = DistanceCache::new();
        let ids = ["v0", "v1", "v2", "v3"];
        let with = set_diversity(&ids, &store, Some(&cache)).unwrap();
        let without = set_diversity(&ids, &store, None).unwrap();
        assert_eq!(with, without);
        assert_eq!(cache.len(), 6);
        assert_eq!(cache.get("v2", "v0"), cache.get("v0", "v2"));
        assert_eq!(cache.get("v1", "v1"), Some(0.0));
        // second pass is served from the cache
        assert_eq!(set_diversity(&ids, &store, Some(&cache)).unwrap(), with);
        assert_eq!(cache.len(), 6);
    }
}
