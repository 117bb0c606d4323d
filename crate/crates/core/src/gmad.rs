//! Group maximum differentiation (gMAD) competition between quality models.
//!
//! One model (the defender) is held at a fixed quality level: its scores are
//! min-max normalized to `[0, 1]` and a pair is admissible at a level only if
//! both videos sit within `level_tolerance` of the level center. Among the
//! admissible pairs the competitor (the attacker) is asked for the pair it
//! separates most. A strong attacker finds pairs that the defender calls equal
//! but that really differ; a strong defender leaves it nothing to find.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::ScoreMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmadConfig {
    pub num_levels: usize,
    /// Half-width of each level band, in normalized defender units.
    pub level_tolerance: f64,
    pub pairs_per_level: usize,
}

impl Default for GmadConfig {
    fn default() -> Self {
        Self {
            num_levels: 5,
            level_tolerance: 0.05,
            pairs_per_level: 1,
        }
    }
}

impl GmadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_levels == 0 {
            return Err(Error::invalid("num_levels must be >= 1"));
        }
        if !(self.level_tolerance >= 0.0 && self.level_tolerance.is_finite()) {
            return Err(Error::invalid("level_tolerance must be finite and >= 0"));
        }
        if self.pairs_per_level == 0 {
            return Err(Error::invalid("pairs_per_level must be >= 1"));
        }
        Ok(())
    }

    /// Evenly spaced centers covering `[0, 1]`; a single level sits at 0.5.
    pub fn level_centers(&self) -> Vec<f64> {
        match self.num_levels {
            1 => vec![0.5],
            n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmadPair {
    /// The lexicographically smaller id of the pair.
    pub id_a: String,
    pub id_b: String,
    /// Normalized defender score of `id_a` minus that of `id_b`.
    pub defender_gap: f64,
    /// `|attacker(id_a) - attacker(id_b)|`
    pub attacker_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPairs {
    pub level: usize,
    pub center: f64,
    pub pairs: Vec<GmadPair>,
}

fn check_ids(defender: &ScoreMap, attacker: &ScoreMap) -> Result<()> {
    if defender.len() != attacker.len() || defender.keys().ne(attacker.keys()) {
        let missing = defender
            .keys()
            .find(|k| !attacker.contains_key(*k))
            .or_else(|| attacker.keys().find(|k| !defender.contains_key(*k)))
            .cloned()
            .unwrap_or_default();
        return Err(Error::invalid(format!(
            "defender and attacker cover different ids (e.g. {missing:?})"
        )));
    }
    if defender.len() < 2 {
        return Err(Error::invalid("gMAD needs at least two videos"));
    }
    if defender
        .values()
        .chain(attacker.values())
        .any(|v| !v.is_finite())
    {
        return Err(Error::invalid("gMAD scores must be finite"));
    }
    Ok(())
}

/// Defender scores mapped linearly onto `[0, 1]`.
pub fn normalize_defender(defender: &ScoreMap) -> Result<ScoreMap> {
    let lo = defender.values().copied().fold(f64::INFINITY, f64::min);
    let hi = defender.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::UndefinedCorrelation("defender scores are constant"));
    }
    Ok(defender
        .iter()
        .map(|(k, &v)| (k.clone(), (v - lo) / (hi - lo)))
        .collect())
}

/// Maximally differentiating pairs per defender level.
pub fn gmad_pairs(
    defender: &ScoreMap,
    attacker: &ScoreMap,
    config: &GmadConfig,
) -> Result<Vec<LevelPairs>> {
    config.validate()?;
    check_ids(defender, attacker)?;
    let norm = normalize_defender(defender)?;
    Ok(config
        .level_centers()
        .into_iter()
        .enumerate()
        .map(|(level, center)| {
            // BTreeMap iteration keeps admissible ids sorted
            let admissible: Vec<(&str, f64, f64)> = norm
                .iter()
                .filter(|(_, &v)| (v - center).abs() <= config.level_tolerance)
                .map(|(id, &v)| (id.as_str(), v, attacker[id]))
                .collect();
            let pairs = if config.pairs_per_level == 1 {
                widest_pair(&admissible).into_iter().collect()
            } else {
                top_pairs(&admissible, config.pairs_per_level)
            };
            LevelPairs {
                level,
                center,
                pairs,
            }
        })
        .collect())
}

fn make_pair(a: (&str, f64, f64), b: (&str, f64, f64)) -> GmadPair {
    let (a, b) = if a.0 <= b.0 { (a, b) } else { (b, a) };
    GmadPair {
        id_a: a.0.to_owned(),
        id_b: b.0.to_owned(),
        defender_gap: a.1 - b.1,
        attacker_gap: (a.2 - b.2).abs(),
    }
}

/// The widest attacker gap is always max minus min, so only the extreme ids
/// need pairing up; the smallest (id_a, id_b) among them wins.
fn widest_pair(items: &[(&str, f64, f64)]) -> Option<GmadPair> {
    if items.len() < 2 {
        return None;
    }
    let hi = items.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    let lo = items.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let tops: Vec<_> = items.iter().filter(|t| t.2 == hi).collect();
    let bottoms: Vec<_> = items.iter().filter(|t| t.2 == lo).collect();
    if hi == lo {
        // every pair ties at zero: the two smallest ids
        return Some(make_pair(items[0], items[1]));
    }
    let mut best: Option<GmadPair> = None;
    for &&t in &tops {
        for &&b in &bottoms {
            let cand = make_pair(t, b);
            let better = match &best {
                None => true,
                Some(cur) => (&cand.id_a, &cand.id_b) < (&cur.id_a, &cur.id_b),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best
}

fn top_pairs(items: &[(&str, f64, f64)], count: usize) -> Vec<GmadPair> {
    let mut all = Vec::with_capacity(items.len() * items.len().saturating_sub(1) / 2);
    for (i, &a) in items.iter().enumerate() {
        for &b in &items[i + 1..] {
            all.push(make_pair(a, b));
        }
    }
    all.sort_by(|x, y| {
        y.attacker_gap
            .total_cmp(&x.attacker_gap)
            .then_with(|| (&x.id_a, &x.id_b).cmp(&(&y.id_a, &y.id_b)))
    });
    all.truncate(count);
    all
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duel {
    pub defender: String,
    pub attacker: String,
    pub level: usize,
    pub center: f64,
    pub pair: GmadPair,
    pub mos_gap: f64,
    /// Model that tracked the MOS gap more closely, or `None` on an exact tie.
    pub winner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standing {
    pub wins: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmadReport {
    pub config: GmadConfig,
    pub duels: Vec<Duel>,
    pub tournament: BTreeMap<String, Standing>,
}

/// Round-robin over every ordered (defender, attacker) pair of models.
///
/// Each surfaced pair is scored against MOS: the model whose predicted score
/// difference `s(a) - s(b)` is closer to `mos(a) - mos(b)` takes the win; an
/// exact tie splits it. Models are ranked by total wins, equal totals sharing
/// the better rank.
pub fn gmad_tournament(
    models: &BTreeMap<String, ScoreMap>,
    mos: &ScoreMap,
    config: &GmadConfig,
) -> Result<GmadReport> {
    if models.len() < 2 {
        return Err(Error::invalid(
            "a gMAD tournament needs at least two models",
        ));
    }
    let mut wins: BTreeMap<String, f64> = models.keys().map(|k| (k.clone(), 0.0)).collect();
    let mut duels = Vec::new();
    for (def_name, def) in models {
        for (att_name, att) in models {
            if def_name == att_name {
                continue;
            }
            for level in gmad_pairs(def, att, config)? {
                for pair in level.pairs {
                    let mos_of = |id: &str| {
                        mos.get(id).copied().ok_or_else(|| Error::MissingValue {
                            id: id.to_owned(),
                            field: "mos",
                        })
                    };
                    let mos_gap = mos_of(&pair.id_a)? - mos_of(&pair.id_b)?;
                    let err = |m: &ScoreMap| ((m[&pair.id_a] - m[&pair.id_b]) - mos_gap).abs();
                    let (e_def, e_att) = (err(def), err(att));
                    let winner = if e_def < e_att {
                        *wins.get_mut(def_name).unwrap() += 1.0;
                        Some(def_name.clone())
                    } else if e_att < e_def {
                        *wins.get_mut(att_name).unwrap() += 1.0;
                        Some(att_name.clone())
                    } else {
                        *wins.get_mut(def_name).unwrap() += 0.5;
                        *wins.get_mut(att_name).unwrap() += 0.5;
                        None
                    };
                    duels.push(Duel {
                        defender: def_name.clone(),
                        attacker: att_name.clone(),
                        level: level.level,
                        center: level.center,
                        pair,
                        mos_gap,
                        winner,
                    });
                }
            }
        }
    }
    let tournament = wins
        .iter()
        .map(|(name, &w)| {
            let rank = 1 + wins.values().filter(|&&other| other > w).count();
            (name.clone(), Standing { wins: w, rank })
        })
        .collect();
    Ok(GmadReport {
        config: config.clone(),
        duels,
        tournament,
    })
}
