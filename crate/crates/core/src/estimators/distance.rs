//! Inverse-distance weighted load estimate from active neighbours.

use serde::{Deserialize, Serialize};

use crate::model::GridPos;
use crate::{Error, Result};

/// Multiplier applied to the largest finite weight for a co-located neighbour.
pub const COLOCATED_WEIGHT_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    /// Number of nearest active neighbours `N`.
    pub neighbor_count: usize,
    /// Distance exponent `n`.
    pub exponent: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            neighbor_count: 4,
            exponent: 3.0,
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_count == 0 {
            return Err(Error::config("distance.neighbor_count", "must be >= 1"));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::config("distance.exponent", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub position: GridPos,
    pub load: f64,
}

/// Estimates the load at `sleeping` as the weighted mean of the `N` nearest
/// active neighbours, with weights `d_max / d^n`.
///
/// `d_max` is the largest distance within the selected set. A neighbour at
/// distance zero gets [`COLOCATED_WEIGHT_FACTOR`] times the largest finite
/// weight; if every selected neighbour is co-located the plain mean is used.
/// Equal distances keep the order of `active`.
///
/// ```
/// use vhetnet::estimators::distance::{estimate_distance, DistanceConfig, Neighbor};
/// use vhetnet::model::GridPos;
/// let active = [
///     Neighbor { position: GridPos::new(0, 1), load: 0.3 },
///     Neighbor { position: GridPos::new(0, 2), load: 0.6 },
/// ];
/// let cfg = DistanceConfig { neighbor_count: 2, exponent: 1.0 };
/// let est = estimate_distance(GridPos::new(0, 0), &active, &cfg).unwrap();
/// assert!((est - 0.4).abs() < 1e-12);
/// ```
pub fn estimate_distance(
    sleeping: GridPos,
    active: &[Neighbor],
    cfg: &DistanceConfig,
) -> Result<f64> {
    cfg.validate()?;
    if active.is_empty() {
        return Err(Error::Estimation("no active neighbours".into()));
    }
    let mut ranked: Vec<(f64, f64)> = active
        .iter()
        .map(|n| (sleeping.distance_m(&n.position), n.load))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked.truncate(cfg.neighbor_count);

    let d_max = ranked.last().map(|r| r.0).unwrap_or(0.0);
    if d_max == 0.0 {
        return Ok(ranked.iter().map(|r| r.1).sum::<f64>() / ranked.len() as f64);
    }
    let mut weights: Vec<f64> = ranked
        .iter()
        .map(|&(d, _)| {
            if d > 0.0 {
                d_max / d.powf(cfg.exponent)
            } else {
                f64::NAN
            }
        })
        .collect();
    let max_finite = weights
        .iter()
        .copied()
        .filter(|w| !w.is_nan())
        .fold(0.0, f64::max);
    for w in &mut weights {
        if w.is_nan() {
            *w = max_finite * COLOCATED_WEIGHT_FACTOR;
        }
    }
    let num: f64 = weights.iter().zip(&ranked).map(|(w, r)| w * r.1).sum();
    let den: f64 = weights.iter().sum();
    Ok(num / den)
}
