//! Budgeted subset selection trading predicted difficulty against content
//! diversity.
//!
//! The objective for a subset `S` is `Diff(S) + lambda * Div(S)`, where
//! `Diff` is the mean difficulty score and `Div` the mean pairwise Chamfer
//! distance. [`greedy_select`] grows the subset one video at a time, each step
//! taking the candidate that maximizes
//!
//! ```text
//! g(x) + lambda / |D| * sum_{y in D} d_cd(x, y)
//! ```
//!
//! with the diversity term taken as 0 while `D` is empty. Ties go to the
//! lexicographically smallest id.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diversity::{record_distance, set_diversity, DistanceCache};
use crate::error::{Error, Result};
use crate::store::{FeatureStore, ScoreMap};

/// Largest number of subsets [`exhaustive_select`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Count(usize),
    Fraction(f64),
}

impl Default for Budget {
    fn default() -> Self {
        Budget::Fraction(0.05)
    }
}

impl Budget {
    /// Absolute subset size for a pool of `pool` videos. Fractions resolve to
    /// `max(1, floor(fraction * pool))`.
    pub fn resolve(&self, pool: usize) -> Result<usize> {
        if pool == 0 {
            return Err(Error::invalid("empty pool"));
        }
        let k = match *self {
            Budget::Count(k) => k,
            Budget::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid(format!("budget fraction {f} not in (0, 1]")));
                }
                // guard against 0.29 * 100 = 28.999999999999996
                (((f * pool as f64) + 1e-9).floor() as usize).max(1)
            }
        };
        if k == 0 {
            return Err(Error::invalid("budget must select at least one video"));
        }
        if k > pool {
            return Err(Error::BudgetTooLarge { budget: k, pool });
        }
        Ok(k)
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// `"0.05"` is a fraction, `"100"` a count.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains(['.', 'e', 'E']) {
            s.parse::<f64>()
                .map(Budget::Fraction)
                .map_err(|_| Error::invalid(format!("bad budget {s:?}")))
        } else {
            s.parse::<usize>()
                .map(Budget::Count)
                .map_err(|_| Error::invalid(format!("bad budget {s:?}")))
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Count(k) => write!(f, "{k}"),
            Budget::Fraction(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub lambda: f64,
    pub budget: Budget,
    /// Min-max normalize difficulty and mean-distance terms over the remaining
    /// candidates at every step before combining them.
    pub normalize_terms: bool,
    /// Scale every frame embedding to unit L2 norm before measuring distances.
    pub normalize_features: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            budget: Budget::default(),
            normalize_terms: false,
            normalize_features: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(
                "lambda must be a finite non-negative number",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub id: String,
    pub difficulty: f64,
    pub diversity: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub config: SelectionConfig,
    pub selected: Vec<String>,
    pub iterations: Vec<SelectionStep>,
}

/// Mean difficulty score over `ids`.
pub fn set_difficulty<S: AsRef<str>>(ids: &[S], scores: &ScoreMap) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::invalid("set difficulty of an empty set"));
    }
    let mut total = 0.0;
    for id in ids {
        let id = id.as_ref();
        total += scores
            .get(id)
            .ok_or_else(|| Error::UnknownId(id.to_owned()))?;
    }
    Ok(total / ids.len() as f64)
}

/// `Diff(S) + lambda * Div(S)`; needs at least two ids.
pub fn subset_objective<S: AsRef<str>>(
    ids: &[S],
    scores: &ScoreMap,
    store: &FeatureStore,
    lambda: f64,
    cache: Option<&DistanceCache>,
) -> Result<f64> {
    let diff = set_difficulty(ids, scores)?;
    let div = set_diversity(ids, store, cache)?;
    Ok(diff + lambda * div)
}

fn pool_scores(store: &FeatureStore, scores: &ScoreMap) -> Result<Vec<f64>> {
    store
        .records()
        .iter()
        .map(|r| match scores.get(r.id()) {
            Some(&g) if g.is_finite() => Ok(g),
            Some(_) => Err(Error::InvalidRecord {
                id: r.id().to_owned(),
                message: "non-finite difficulty score".into(),
            }),
            None => Err(Error::MissingValue {
                id: r.id().to_owned(),
                field: "difficulty score",
            }),
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Candidate {
    index: usize,
    dist_sum: f64,
}

/// Strict "a beats b": higher objective, then smaller id.
fn beats(a: (f64, &str), b: (f64, &str)) -> bool {
    match a.0.partial_cmp(&b.0).expect("finite objectives") {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn rescale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Greedy budgeted selection; see the module docs for the rule.
pub fn greedy_select(
    store: &FeatureStore,
    scores: &ScoreMap,
    config: &SelectionConfig,
) -> Result<SelectionResult> {
    config.validate()?;
    let k = config.budget.resolve(store.len())?;
    let g = pool_scores(store, scores)?;
    let normalized;
    let store = if config.normalize_features {
        normalized = store.l2_normalized();
        &normalized
    } else {
        store
    };
    let records = store.records();
    let mut remaining: Vec<Candidate> = (0..store.len())
        .map(|index| Candidate {
            index,
            dist_sum: 0.0,
        })
        .collect();
    let mut selected = Vec::with_capacity(k);
    let mut iterations = Vec::with_capacity(k);

    for step in 0..k {
        let terms = |c: &Candidate| -> (f64, f64) {
            let div = if step == 0 {
                0.0
            } else {
                c.dist_sum / step as f64
            };
            (g[c.index], div)
        };
        let (diff_range, div_range) = if config.normalize_terms {
            (
                min_max(remaining.iter().map(|c| terms(c).0)),
                min_max(remaining.iter().map(|c| terms(c).1)),
            )
        } else {
            ((0.0, 0.0), (0.0, 0.0))
        };
        let evaluate = |pos: usize, c: &Candidate| -> (usize, f64, f64, f64) {
            let (mut diff, mut div) = terms(c);
            if config.normalize_terms {
                diff = rescale(diff, diff_range);
                div = rescale(div, div_range);
            }
            (pos, diff, div, diff + config.lambda * div)
        };
        let pick = |a: (usize, f64, f64, f64), b: (usize, f64, f64, f64)| {
            let ida = records[remaining[a.0].index].id();
            let idb = records[remaining[b.0].index].id();
            if beats((b.3, idb), (a.3, ida)) {
                b
            } else {
                a
            }
        };

        #[cfg(feature = "parallel")]
        let best = remaining
            .par_iter()
            .enumerate()
            .map(|(pos, c)| evaluate(pos, c))
            .reduce_with(pick);
        #[cfg(not(feature = "parallel"))]
        let best = remaining
            .iter()
            .enumerate()
            .map(|(pos, c)| evaluate(pos, c))
            .reduce(pick);

        let (pos, diff, div, objective) = best.expect("budget never exceeds pool");
        let chosen = remaining.swap_remove(pos).index;
        let chosen_rec = &records[chosen];
        selected.push(chosen_rec.id().to_owned());
        iterations.push(SelectionStep {
            id: chosen_rec.id().to_owned(),
            difficulty: diff,
            diversity: div,
            objective,
        });

        if step + 1 < k && config.lambda != 0.0 {
            let update = |c: &mut Candidate| -> Result<()> {
                c.dist_sum += record_distance(&records[c.index], chosen_rec)?;
                Ok(())
            };
            #[cfg(feature = "parallel")]
            remaining.par_iter_mut().try_for_each(update)?;
            #[cfg(not(feature = "parallel"))]
            remaining.iter_mut().try_for_each(update)?;
        }
    }

    Ok(SelectionResult {
        config: config.clone(),
        selected,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    /// Sorted ids of the best subset.
    pub ids: Vec<String>,
    pub objective: f64,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Best size-`k` subset by brute force. Among equal objectives, the subset
/// whose sorted id list is lexicographically smallest wins.
pub fn exhaustive_select(
    store: &FeatureStore,
    scores: &ScoreMap,
    lambda: f64,
    k: usize,
) -> Result<ExhaustiveResult> {
    let n = store.len();
    if k == 0 || k > n {
        return Err(Error::BudgetTooLarge { budget: k, pool: n });
    }
    let count = binomial(n, k);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge(count));
    }
    let g = pool_scores(store, scores)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| store.records()[a].id().cmp(store.records()[b].id()));

    let mut dist = vec![0.0; n * n];
    if k >= 2 {
        for a in 0..n {
            for b in a + 1..n {
                let d = record_distance(&store.records()[order[a]], &store.records()[order[b]])?;
                dist[a * n + b] = d;
                dist[b * n + a] = d;
            }
        }
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let value = |combo: &[usize]| -> f64 {
        let diff = combo.iter().map(|&i| g[order[i]]).sum::<f64>() / k as f64;
        if k < 2 {
            return diff;
        }
        let mut div = 0.0;
        for (x, &i) in combo.iter().enumerate() {
            for &j in &combo[x + 1..] {
                div += dist[i * n + j];
            }
        }
        diff + lambda * div / pairs
    };

    // combinations of sorted positions in lexicographic order
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = combo.clone();
    let mut best_value = value(&combo);
    while let Some(i) = (0..k).rev().find(|&i| combo[i] != i + n - k) {
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
        let v = value(&combo);
        if v > best_value {
            best_value = v;
            best.clone_from(&combo);
        }
    }
    Ok(ExhaustiveResult {
        ids: best
            .iter()
            .map(|&i| store.records()[order[i]].id().to_owned())
            .collect(),
        objective: best_value,
    })
}

/// Scale-free preference between two labeled videos: `better_id` has the
/// strictly higher opinion score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub better_id: String,
    pub worse_id: String,
}

/// One preference per unordered pair of selected videos with distinct MOS,
/// in selection order. Equal-MOS pairs are skipped.
pub fn export_pair_labels<S: AsRef<str>>(
    selected: &[S],
    store: &FeatureStore,
) -> Result<Vec<PreferencePair>> {
    let mos = selected
        .iter()
        .map(|id| {
            let r = store.require(id.as_ref())?;
            r.mos
                .map(|m| (r.id(), m))
                .ok_or_else(|| Error::MissingValue {
                    id: r.id().to_owned(),
                    field: "mos",
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, &(a, ma)) in mos.iter().enumerate() {
        for &(b, mb) in &mos[i + 1..] {
            let (better, worse) = match ma.partial_cmp(&mb) {
                Some(Ordering::Greater) => (a, b),
                Some(Ordering::Less) => (b, a),
                _ => continue,
            };
            out.push(PreferencePair {
                better_id: better.to_owned(),
                worse_id: worse.to_owned(),
            });
        }
    }
    Ok(out)
}

pub fn write_preference_pairs(path: impl AsRef<Path>, pairs: &[PreferencePair]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("better_id,worse_id\n");
    for p in pairs {
        out.push_str(&format!("{},{}\n", p.better_id, p.worse_id));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
