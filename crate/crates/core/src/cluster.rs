//! k-means over candidate efficiency vectors with k picked by silhouette.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_K: usize = 10;
pub const RESTARTS: usize = 20;
const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    /// Zero-based cluster per point.
    pub assignments: Vec<usize>,
    /// Mean silhouette of the chosen partition (0 for k = 1).
    pub silhouette: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Per-dimension z-scores; dimensions without spread become 0. Non-finite
/// entries are replaced by the largest finite value of their dimension.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; d]; n];
    for j in 0..d {
        let finite_max = points
            .iter()
            .map(|p| p[j])
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let fill = if finite_max.is_finite() { finite_max } else { 0.0 };
        let col: Vec<f64> = points.iter().map(|p| if p[j].is_finite() { p[j] } else { fill }).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for (i, v) in col.iter().enumerate() {
            out[i][j] = if sd > 0.0 { (v - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = points.len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let mut assign = vec![0; n];
    for iter in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).partial_cmp(&sq_dist(p, &centers[b])).unwrap())
                .unwrap();
            if best != assign[i] || iter == 0 {
                changed |= best != assign[i];
                assign[i] = best;
            }
        }
        if !changed && iter > 0 {
            break;
        }
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centers[a])).sum();
    (assign, inertia)
}

/// Mean silhouette width; singleton clusters contribute 0.
pub fn silhouette(points: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assign[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assign[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Clusters `points` (rows are candidates) after standardizing each column.
pub fn cluster_candidates(points: &[Vec<f64>], seed: u64) -> Clustering {
    let n = points.len();
    let single = Clustering {
        k: 1,
        assignments: vec![0; n],
        silhouette: 0.0,
    };
    if n < 4 {
        return single;
    }
    let z = standardize(points);
    if z.iter().all(|p| sq_dist(p, &z[0]) == 0.0) {
        return single;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for k in 2..=MAX_K.min(n - 1) {
        let (assign, _) = (0..RESTARTS)
            .map(|_| kmeans_once(&z, k, &mut rng))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        // Relabel clusters by first appearance so ids are stable.
        let mut map = vec![usize::MAX; k];
        let mut next = 0;
        let assignments: Vec<usize> = assign
            .iter()
            .map(|&a| {
                if map[a] == usize::MAX {
                    map[a] = next;
                    next += 1;
                }
                map[a]
            })
            .collect();
        let used = next;
        let s = silhouette(&z, &assignments, used);
        if best.as_ref().is_none_or(|b| s > b.silhouette) {
            best = Some(Clustering {
                k: used,
                assignments,
                silhouette: s,
            });
        }
    }
    best.unwrap_or(single)
}
