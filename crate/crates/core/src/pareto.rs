//! Nondominated sorting (minimization) over objective vectors.

use std::cmp::Ordering;

/// `a` dominates `b`: no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Zero-based front index of every point.
///
/// Efficient nondominated sort with binary search over fronts: points are
/// visited in lexicographic order, so any dominator of a point has already
/// been placed, and a point dominated by some member of front `k` is
/// dominated by some member of every earlier front.
pub fn nondominated_sort(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut rank = vec![0; n];
    for &p in &order {
        let dominated_in = |k: usize| fronts[k].iter().rev().any(|&q| dominates(&points[q], &points[p]));
        // First front in which p is not dominated.
        let (mut lo, mut hi) = (0, fronts.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if dominated_in(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == fronts.len() {
            fronts.push(Vec::new());
        }
        fronts[lo].push(p);
        rank[p] = lo;
    }
    rank
}

/// Linear-interpolation quantile of `values` at `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Repeated removal of the nondominated set, by brute force.
    fn peel(points: &[Vec<f64>]) -> Vec<usize> {
        let mut rank = vec![usize::MAX; points.len()];
        let mut k = 0;
        while rank.contains(&usize::MAX) {
            let remaining: Vec<usize> = (0..points.len()).filter(|i| rank[*i] == usize::MAX).collect();
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
                .collect();
            for i in front {
                rank[i] = k;
            }
            k += 1;
        }
        rank
    }

    #[test]
    fn three_point_example() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(nondominated_sort(&pts), [0, 0, 1]);
    }

    #[test]
    fn single_and_ties() {
        assert_eq!(nondominated_sort(&[vec![3.0, 3.0]]), [0]);
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![0.5, 2.0]];
        assert_eq!(nondominated_sort(&pts), [0, 0, 0]);
        let single: Vec<Vec<f64>> = [3.0, 1.0, 2.0, 1.0].iter().map(|v| vec![*v]).collect();
        assert_eq!(nondominated_sort(&single), [2, 0, 1, 0]);
    }

    #[test]
    fn quantiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
    }

    proptest! {
        #[test]
        fn matches_peeling(points in prop::collection::vec(prop::collection::vec(0u8..6, 3), 1..80)) {
            let pts: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|v| *v as f64).collect()).collect();
            prop_assert_eq!(nondominated_sort(&pts), peel(&pts));
        }
    }
}
