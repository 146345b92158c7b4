//! Hierarchical agglomerative clustering with Ward's minimum-variance
//! linkage, plus the fixed-k dendrogram cut.
//!
//! Linkage values live in squared-Euclidean units and follow the
//! Lance-Williams recurrence; cluster ids are 0..n for the inputs and n+step
//! for merged clusters, and ties pick the lexicographically smallest id pair.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("clustering needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("non-finite coordinate in input vectors")]
    NonFinite,
    #[error("cut into {k} clusters impossible for {n} items")]
    BadCut { k: usize, n: usize },
}

impl ClusteringError {
    pub fn category(&self) -> &'static str {
        match self {
            ClusteringError::TooFewItems(_) => "too-few-items",
            ClusteringError::NonFinite => "non-finite-value",
            ClusteringError::BadCut { .. } => "bad-cut",
        }
    }
}

/// One agglomeration step: clusters `a` and `b` merge at `height` into a
/// cluster of `new_size` items with id `n + step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub height: f64,
    pub new_size: usize,
}

/// The full merge history of one HAC run over `num_items` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub num_items: usize,
    pub merges: Vec<Merge>,
}

/// A flat partition of the clustered items into `k` groups labeled 0..k,
/// numbered by first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cluster_of(&self, item: usize) -> usize {
        self.labels[item]
    }
}

/// Symmetric matrix of squared Euclidean distances between input rows.
pub fn pairwise_sq_distances(vectors: &Array2<f64>) -> Result<Array2<f64>, ClusteringError> {
    let n = vectors.nrows();
    if n < 2 {
        return Err(ClusteringError::TooFewItems(n));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(ClusteringError::NonFinite);
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = vectors
                .row(i)
                .iter()
                .zip(vectors.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Agglomerate all rows down to one cluster under Ward linkage.
pub fn hac_ward(vectors: &Array2<f64>) -> Result<Dendrogram, ClusteringError> {
    let n = vectors.nrows();
    let initial = pairwise_sq_distances(vectors)?;

    // Linkage state over cluster ids 0..2n-1; merged clusters take id
    // n + step so the full matrix is allocated up front.
    let total = 2 * n - 1;
    let mut dist = Array2::<f64>::zeros((total, total));
    dist.slice_mut(ndarray::s![..n, ..n]).assign(&initial);
    let mut active = vec![false; total];
    let mut size = vec![0usize; total];
    for i in 0..n {
        active[i] = true;
        size[i] = 1;
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n + step {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n + step {
                if !active[j] {
                    continue;
                }
                // Strict < keeps the first-found pair, which is the
                // lexicographically smallest (i, j) at the minimum.
                if best.is_none_or(|(bi, bj)| dist[[i, j]] < dist[[bi, bj]]) {
                    best = Some((i, j));
                }
            }
        }
        let (a, b) = best.expect("at least two active clusters remain");
        let height = dist[[a, b]];
        let merged = n + step;
        let new_size = size[a] + size[b];

        for k in 0..merged {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (na, nb, nk) = (size[a] as f64, size[b] as f64, size[k] as f64);
            let v = ((na + nk) * dist[[a, k]] + (nb + nk) * dist[[b, k]] - nk * height)
                / (na + nb + nk);
            dist[[merged, k]] = v;
            dist[[k, merged]] = v;
        }
        active[a] = false;
        active[b] = false;
        active[merged] = true;
        size[merged] = new_size;
        merges.push(Merge {
            cluster_a: a,
            cluster_b: b,
            height,
            new_size,
        });
    }
    Ok(Dendrogram {
        num_items: n,
        merges,
    })
}

/// Partition into k clusters by undoing the last k-1 merges.
pub fn cut_dendrogram(
    dendrogram: &Dendrogram,
    k: usize,
) -> Result<ClusterAssignment, ClusteringError> {
    let n = dendrogram.num_items;
    if k == 0 || k > n {
        return Err(ClusteringError::BadCut { k, n });
    }

    // Replay the first n-k merges through a union-find keyed by cluster id.
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let merged = n + step;
        let ra = find(&mut parent, m.cluster_a);
        let rb = find(&mut parent, m.cluster_b);
        parent[ra] = merged;
        parent[rb] = merged;
    }

    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    let mut label_of_root = std::collections::HashMap::new();
    for item in 0..n {
        let root = find(&mut parent, item);
        let label = *label_of_root.entry(root).or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        labels[item] = label;
    }
    debug_assert_eq!(next, k);
    Ok(ClusterAssignment { labels, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(xs: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap()
    }

    #[test]
    fn two_points_merge_at_their_squared_distance() {
        let d = hac_ward(&points_1d(&[1.0, 4.0])).unwrap();
        assert_eq!(d.merges.len(), 1);
        let m = &d.merges[0];
        assert_eq!((m.cluster_a, m.cluster_b, m.new_size), (0, 1, 2));
        assert!((m.height - 9.0).abs() < 1e-12);
    }

    #[test]
    fn obvious_geometry_cuts_cleanly() {
        let d = hac_ward(&points_1d(&[0.0, 1.0, 10.0])).unwrap();
        let cut = cut_dendrogram(&d, 2).unwrap();
        assert_eq!(cut.labels(), &[0, 0, 1]);
        assert_eq!(cut.k(), 2);
    }

    #[test]
    fn heights_are_monotone_nondecreasing() {
        let vectors = Array2::from_shape_fn((20, 3), |(i, j)| ((i * 7 + j * 3) % 13) as f64 * 0.37);
        let d = hac_ward(&vectors).unwrap();
        let mut prev = 0.0;
        for m in &d.merges {
            assert!(m.height >= prev, "height dropped: {} < {prev}", m.height);
            prev = m.height;
        }
    }

    #[test]
    fn tie_break_prefers_smallest_id_pair() {
        // Four equally spaced points: the first merge has candidates (0,1),
        // (1,2), (2,3) all at distance 1.
        let d = hac_ward(&points_1d(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        let first = &d.merges[0];
        assert_eq!((first.cluster_a, first.cluster_b), (0, 1));
        // Second merge: (2,3) at 1 beats anything involving cluster 4.
        let second = &d.merges[1];
        assert_eq!((second.cluster_a, second.cluster_b), (2, 3));
    }

    #[test]
    fn cut_extremes() {
        let vectors = points_1d(&[0.0, 2.0, 5.0, 9.0]);
        let d = hac_ward(&vectors).unwrap();
        let every = cut_dendrogram(&d, 4).unwrap();
        assert_eq!(every.labels(), &[0, 1, 2, 3]);
        let one = cut_dendrogram(&d, 1).unwrap();
        assert_eq!(one.labels(), &[0, 0, 0, 0]);
    }

    #[test]
    fn cut_rejects_out_of_range_k() {
        let d = hac_ward(&points_1d(&[0.0, 1.0])).unwrap();
        assert!(matches!(
            cut_dendrogram(&d, 0),
            Err(ClusteringError::BadCut { .. })
        ));
        assert!(matches!(
            cut_dendrogram(&d, 3),
            Err(ClusteringError::BadCut { .. })
        ));
    }

    #[test]
    fn merge_bookkeeping_is_consistent() {
        let vectors = Array2::from_shape_fn((12, 2), |(i, j)| ((i * 5 + j) % 7) as f64);
        let d = hac_ward(&vectors).unwrap();
        assert_eq!(d.merges.len(), 11);
        assert_eq!(d.merges.last().unwrap().new_size, 12);
        // Ids referenced by each merge exist and are never reused.
        let mut consumed = std::collections::HashSet::new();
        for (step, m) in d.merges.iter().enumerate() {
            assert!(m.cluster_a < m.cluster_b);
            assert!(m.cluster_b < 12 + step);
            assert!(consumed.insert(m.cluster_a));
            assert!(consumed.insert(m.cluster_b));
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            hac_ward(&points_1d(&[1.0])),
            Err(ClusteringError::TooFewItems(1))
        ));
        let bad = Array2::from_elem((3, 2), f64::NAN);
        assert!(matches!(
            hac_ward(&bad),
            Err(ClusteringError::NonFinite)
        ));
    }

    #[test]
    fn pairwise_matches_naive_loop() {
        let vectors = Array2::from_shape_fn((10, 8), |(i, j)| ((i * 31 + j * 17) % 23) as f64 * 0.1);
        let d = pairwise_sq_distances(&vectors).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let mut want = 0.0;
                for c in 0..8 {
                    let diff = vectors[[i, c]] - vectors[[j, c]];
                    want += diff * diff;
                }
                assert!((d[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dendrogram_serializes_round_trip() {
        let d = hac_ward(&points_1d(&[0.0, 3.0, 4.0])).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        let back: Dendrogram = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
