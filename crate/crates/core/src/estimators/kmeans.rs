//! Lloyd's k-means with k-means++ seeding, restarts and elbow selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of every point to its centroid.
    pub sse: f64,
    /// SSE after each Lloyd iteration of the retained run.
    pub sse_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Within-cluster sum of squared errors.
pub fn sse(features: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    features
        .iter()
        .zip(assignments)
        .map(|(x, &g)| sq_dist(x, &centroids[g]))
        .sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (g, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        // strict comparison: the lowest index wins ties
        if d < best_d {
            best_d = d;
            best = g;
        }
    }
    best
}

fn plus_plus_init(features: &[Vec<f64>], g: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut centroids = vec![features[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = features.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < g {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(features[pick].clone());
        for (i, x) in features.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, centroids.last().unwrap()));
        }
    }
    centroids
}

fn lloyd(features: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let n = features.len();
    let g = centroids.len();
    let dim = features[0].len();
    let mut assignments: Vec<usize> = features.iter().map(|x| nearest(x, &centroids)).collect();
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        // update step
        let mut sums = vec![vec![0.0; dim]; g];
        let mut counts = vec![0usize; g];
        for (x, &a) in features.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for k in 0..g {
            if counts[k] > 0 {
                for (c, s) in centroids[k].iter_mut().zip(&sums[k]) {
                    *c = s / counts[k] as f64;
                }
            } else {
                // empty cluster: move it to the point farthest from where it was
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&features[a], &centroids[k])
                            .total_cmp(&sq_dist(&features[b], &centroids[k]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[k] = features[far].clone();
            }
        }
        history.push(sse(features, &assignments, &centroids));
        // assignment step
        let next: Vec<usize> = features.iter().map(|x| nearest(x, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let sse = sse(features, &assignments, &centroids);
    if history.last() != Some(&sse) {
        history.push(sse);
    }
    KMeansResult {
        assignments,
        centroids,
        sse,
        sse_history: history,
    }
}

fn check_features(features: &[Vec<f64>]) -> Result<()> {
    let Some(first) = features.first() else {
        return Err(Error::Estimation("k-means needs at least one point".into()));
    };
    if first.is_empty() || features.iter().any(|x| x.len() != first.len()) {
        return Err(Error::Size(
            "feature vectors must share one non-zero dimension".into(),
        ));
    }
    Ok(())
}

/// Clusters `features` into `g` groups, keeping the lowest-SSE of `restarts`
/// k-means++ initialisations.
pub fn kmeans(
    features: &[Vec<f64>],
    g: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansResult> {
    check_features(features)?;
    if g == 0 || g > features.len() {
        return Err(Error::domain(format!(
            "cluster count {g} must lie in [1, {}]",
            features.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(features, g, &mut rng);
        let run = lloyd(features, init, max_iters);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowResult {
    pub g: usize,
    /// `sse_curve[k]` is the SSE for `k + 1` clusters.
    pub sse_curve: Vec<f64>,
    /// Set when the SSE curve is flat and no elbow exists.
    pub degenerate: bool,
}

/// Picks the cluster count maximising the discrete curvature
/// `SSE(g-1) - 2 SSE(g) + SSE(g+1)` for `g` in `2..=g_max`.
pub fn elbow_select_g(
    features: &[Vec<f64>],
    g_max: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ElbowResult> {
    check_features(features)?;
    if g_max < 2 {
        return Err(Error::domain("elbow selection needs g_max >= 2"));
    }
    let top = (g_max + 1).min(features.len());
    let mut curve = Vec::with_capacity(top);
    for g in 1..=top {
        curve.push(
            kmeans(
                features,
                g,
                restarts,
                max_iters,
                seed.wrapping_add(g as u64),
            )?
            .sse,
        );
    }
    let scale = curve[0].abs().max(f64::MIN_POSITIVE);
    let flat = curve.iter().all(|s| (s - curve[0]).abs() <= 1e-12 * scale) || curve[0] == 0.0;
    if flat || curve.len() < 3 {
        return Ok(ElbowResult {
            g: if flat { 1 } else { curve.len() },
            sse_curve: curve,
            degenerate: flat,
        });
    }
    let mut best_g = 2;
    let mut best = f64::NEG_INFINITY;
    for g in 2..=(g_max.min(curve.len() - 1)) {
        let d = curve[g - 2] - 2.0 * curve[g - 1] + curve[g];
        if d > best {
            best = d;
            best_g = g;
        }
    }
    Ok(ElbowResult {
        g: best_g,
        sse_curve: curve,
        degenerate: false,
    })
}
