//! Multi-level clustering (MLC) estimate of sleeping-cell loads.
//!
//! Cells are clustered on summary statistics of their history. Each sleeping
//! cell takes the mean current load of the active cells sharing its cluster.
//! From the second level on, every cell's working load is appended to its
//! features (sleepers use their previous estimate) and the clustering is
//! repeated, so the estimates refine the grouping they came from.

use serde::{Deserialize, Serialize};

use super::kmeans::{elbow_select_g, kmeans};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlcFeature {
    /// Mean historical load, a single scalar.
    MeanLoad,
    /// Mean historical load for each hour of the day.
    #[default]
    HourlyProfile24,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterCount {
    /// Elbow selection on the summary features.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlcConfig {
    pub levels: usize,
    pub clusters: ClusterCount,
    pub restarts: usize,
    pub max_iters: usize,
    pub feature: MlcFeature,
    /// Largest cluster count tried by elbow selection.
    pub g_max: usize,
    pub seed: u64,
}

impl Default for MlcConfig {
    fn default() -> Self {
        MlcConfig {
            levels: 2,
            clusters: ClusterCount::Auto,
            restarts: 10,
            max_iters: 100,
            feature: MlcFeature::HourlyProfile24,
            g_max: 8,
            seed: 0,
        }
    }
}

impl MlcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("mlc.levels", "must be >= 1"));
        }
        if self.restarts == 0 {
            return Err(Error::config("mlc.restarts", "must be >= 1"));
        }
        if matches!(self.clusters, ClusterCount::Fixed(0)) {
            return Err(Error::config("mlc.clusters", "must be >= 1"));
        }
        if self.g_max < 2 {
            return Err(Error::config("mlc.g_max", "must be >= 2"));
        }
        Ok(())
    }
}

/// Summary features of one cell's load history.
pub fn summary_features(history: &[f64], slots_per_day: usize, feature: MlcFeature) -> Vec<f64> {
    match feature {
        MlcFeature::MeanLoad => vec![history.iter().sum::<f64>() / history.len().max(1) as f64],
        MlcFeature::HourlyProfile24 => {
            let per_hour = (slots_per_day / 24).max(1);
            let mut sums = [0.0; 24];
            let mut counts = [0usize; 24];
            for (t, v) in history.iter().enumerate() {
                let hour = ((t % slots_per_day) / per_hour).min(23);
                sums[hour] += v;
                counts[hour] += 1;
            }
            sums.iter()
                .zip(counts)
                .map(|(s, c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlcFlag {
    /// The sleeper had no features; the global active mean was used.
    NoFeatures,
    /// The sleeper's cluster had no active member; the cluster's mean
    /// historical load was used.
    NoActiveMember,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlcEstimate {
    /// Final estimate per cell index; `None` for active cells.
    pub estimates: Vec<Option<f64>>,
    /// Flags raised at the final level, per sleeping cell.
    pub flags: Vec<(usize, MlcFlag)>,
    pub clusters: usize,
}

impl MlcEstimate {
    pub fn get(&self, cell: usize) -> Option<f64> {
        self.estimates[cell]
    }
}

/// Runs MLC over all cells.
///
/// `features[i]` holds the summary features of cell `i` (or `None` when it
/// has no history) and `current[i]` its measured load, `None` for sleeping
/// cells.
pub fn mlc_estimate(
    features: &[Option<Vec<f64>>],
    current: &[Option<f64>],
    cfg: &MlcConfig,
) -> Result<MlcEstimate> {
    cfg.validate()?;
    if features.len() != current.len() {
        return Err(Error::Size(
            "features and current loads differ in length".into(),
        ));
    }
    let active: Vec<f64> = current.iter().flatten().copied().collect();
    if active.is_empty() {
        return Err(Error::Estimation(
            "MLC needs at least one active cell".into(),
        ));
    }
    let global_mean = active.iter().sum::<f64>() / active.len() as f64;

    // cells that take part in clustering
    let members: Vec<usize> = (0..features.len())
        .filter(|&i| features[i].is_some())
        .collect();
    let mut working: Vec<Option<f64>> = current.to_vec();
    let mut flags = Vec::new();
    for (i, f) in features.iter().enumerate() {
        if f.is_none() && current[i].is_none() {
            working[i] = Some(global_mean);
            flags.push((i, MlcFlag::NoFeatures));
        }
    }
    if members.is_empty() {
        return Ok(MlcEstimate {
            estimates: finalize(current, &working),
            flags,
            clusters: 0,
        });
    }

    let base: Vec<Vec<f64>> = members
        .iter()
        .map(|&i| features[i].clone().unwrap())
        .collect();
    let dim = base[0].len();
    if base.iter().any(|f| f.len() != dim) {
        return Err(Error::Size("summary features differ in dimension".into()));
    }
    let g = match cfg.clusters {
        ClusterCount::Fixed(g) => g.min(members.len()),
        ClusterCount::Auto if members.len() >= 2 => {
            elbow_select_g(
                &base,
                cfg.g_max.min(members.len()),
                cfg.restarts,
                cfg.max_iters,
                cfg.seed,
            )?
            .g
        }
        ClusterCount::Auto => 1,
    };
    // the working load counts as much as the whole summary vector
    let load_weight = (dim as f64).sqrt();

    for level in 0..cfg.levels {
        let level_features: Vec<Vec<f64>> = if level == 0 {
            base.clone()
        } else {
            members
                .iter()
                .zip(&base)
                .map(|(&i, f)| {
                    let mut v = f.clone();
                    v.push(load_weight * working[i].unwrap_or(0.0));
                    v
                })
                .collect()
        };
        let run = kmeans(
            &level_features,
            g,
            cfg.restarts,
            cfg.max_iters,
            cfg.seed.wrapping_add(1000 * (level as u64 + 1)),
        )?;
        let mut sum = vec![0.0; g];
        let mut count = vec![0usize; g];
        let mut hist_sum = vec![0.0; g];
        let mut hist_count = vec![0usize; g];
        for (m, &i) in members.iter().enumerate() {
            let k = run.assignments[m];
            if let Some(l) = current[i] {
                sum[k] += l;
                count[k] += 1;
            }
            hist_sum[k] += base[m].iter().sum::<f64>() / dim as f64;
            hist_count[k] += 1;
        }
        flags.retain(|(_, f)| *f == MlcFlag::NoFeatures);
        for (m, &i) in members.iter().enumerate() {
            if current[i].is_some() {
                continue;
            }
            let k = run.assignments[m];
            working[i] = Some(if count[k] > 0 {
                sum[k] / count[k] as f64
            } else {
                flags.push((i, MlcFlag::NoActiveMember));
                hist_sum[k] / hist_count[k] as f64
            });
        }
    }
    Ok(MlcEstimate {
        estimates: finalize(current, &working),
        flags,
        clusters: g,
    })
}

fn finalize(current: &[Option<f64>], working: &[Option<f64>]) -> Vec<Option<f64>> {
    current
        .iter()
        .zip(working)
        .map(|(c, w)| if c.is_some() { None } else { *w })
        .collect()
}
