//! Independent oracles shared by the integration suites.
//!
//! Everything here recomputes results from definitions, deliberately
//! avoiding the library's incremental algorithms (Lance-Williams updates,
//! precomputed weight maps, single-scan extremes) so agreement is evidence,
//! not tautology.

use ndarray::Array2;
use rand::Rng;

use trackclust::clustering::{Dendrogram, Merge};
use trackclust::metrics::LabeledItem;

/// Uniform random matrix in [-1, 1).
pub fn uniform_matrix<R: Rng>(rng: &mut R, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

/// From-scratch Ward clustering: at every step, recompute each candidate
/// merge cost 2|A||B|/(|A|+|B|) * ||mean(A) - mean(B)||^2 directly from the
/// member points, scanning cluster-id pairs ascending and keeping the first
/// strict minimum.
pub fn naive_ward(points: &Array2<f64>) -> Dendrogram {
    let n = points.nrows();
    let dim = points.ncols();
    assert!(n >= 2);
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    members.resize(2 * n - 1, None);

    let mean = |ids: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for &i in ids {
            for (a, &v) in m.iter_mut().zip(points.row(i).iter()) {
                *a += v;
            }
        }
        for a in &mut m {
            *a /= ids.len() as f64;
        }
        m
    };
    let cost = |a: &[usize], b: &[usize]| -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let d2: f64 = ma
            .iter()
            .zip(mb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        2.0 * na * nb / (na + nb) * d2
    };

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let upper = n + step;
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..upper {
            let Some(a) = &members[i] else { continue };
            for j in i + 1..upper {
                let Some(b) = &members[j] else { continue };
                let c = cost(a, b);
                if best.is_none_or(|(_, _, bc)| c < bc) {
                    best = Some((i, j, c));
                }
            }
        }
        let (i, j, c) = best.expect("at least two active clusters");
        let mut merged = members[i].take().expect("selected cluster is active");
        merged.extend(members[j].take().expect("selected cluster is active"));
        merged.sort_unstable();
        let new_size = merged.len();
        members[n + step] = Some(merged);
        merges.push(Merge {
            cluster_a: i,
            cluster_b: j,
            height: c,
            new_size,
        });
    }
    Dendrogram {
        num_items: n,
        merges,
    }
}

/// Flat cut of a dendrogram by direct membership lookup, no union-find:
/// apply the first n-k merges, then label items by first occurrence.
pub fn naive_cut(dendrogram: &Dendrogram, k: usize) -> Vec<usize> {
    let n = dendrogram.num_items;
    assert!((1..=n).contains(&k));
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    members.resize(2 * n - 1, None);
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let mut merged = members[m.cluster_a].take().expect("active");
        merged.extend(members[m.cluster_b].take().expect("active"));
        merged.sort_unstable();
        members[n + step] = Some(merged);
    }
    let mut owner = vec![usize::MAX; n];
    for (id, m) in members.iter().enumerate() {
        if let Some(items) = m {
            for &item in items {
                owner[item] = id;
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for item in 0..n {
        if labels[item] != usize::MAX {
            continue;
        }
        let id = owner[item];
        for other in item..n {
            if owner[other] == id {
                labels[other] = next;
            }
        }
        next += 1;
    }
    assert_eq!(next, k);
    labels
}

/// Definitional weighted clustering purity: per cluster, per label, sum the
/// matching item weights in item order; take the per-cluster max; sum over
/// clusters ascending.
pub fn acc_oracle(items: &[LabeledItem]) -> f64 {
    let clusters: std::collections::BTreeSet<usize> = items.iter().map(|i| i.cluster).collect();
    let mut correct = 0.0;
    for c in clusters {
        let labels: std::collections::BTreeSet<&str> = items
            .iter()
            .filter(|i| i.cluster == c)
            .map(|i| i.label.as_str())
            .collect();
        let mut best = 0.0f64;
        for l in labels {
            let mut w = 0.0;
            for item in items {
                if item.cluster == c && item.label == l {
                    w += item.weight;
                }
            }
            best = best.max(w);
        }
        correct += best;
    }
    let total: f64 = items.iter().map(|i| i.weight).sum();
    correct / total
}

/// Definitional BCubed: for every item, rescan the whole partition for its
/// cluster weight, class weight and their overlap.
pub fn bcubed_oracle(items: &[LabeledItem]) -> (f64, f64, f64) {
    let mut precision = 0.0;
    let mut recall = 0.0;
    for e in items {
        let mut cluster_w = 0.0;
        let mut class_w = 0.0;
        let mut joint = 0.0;
        for other in items {
            if other.cluster == e.cluster {
                cluster_w += other.weight;
            }
            if other.label == e.label {
                class_w += other.weight;
            }
            if other.cluster == e.cluster && other.label == e.label {
                joint += other.weight;
            }
        }
        precision += e.weight * (joint / cluster_w);
        recall += e.weight * (joint / class_w);
    }
    let total: f64 = items.iter().map(|i| i.weight).sum();
    precision /= total;
    recall /= total;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f)
}

/// Random labeled partition with mixed weights.
pub fn random_partition<R: Rng>(rng: &mut R, max_items: usize) -> Vec<LabeledItem> {
    let n = rng.random_range(1..=max_items);
    let clusters = rng.random_range(1..=8usize);
    let labels = rng.random_range(1..=6usize);
    (0..n)
        .map(|i| {
            let mut item = LabeledItem::new(
                i as u64,
                rng.random_range(0..clusters),
                format!("p{}", rng.random_range(0..labels)),
            );
            if rng.random_bool(0.5) {
                item.weight = rng.random_range(0.1..5.0);
            }
            item
        })
        .collect()
}

/// For each query row: all other indices fully sorted by (squared distance
/// ascending, index ascending). Column extremes of this table are the
/// definitional nearest and farthest neighbors.
pub fn fullsort_neighbors(subset: &Array2<f64>) -> Vec<Vec<(usize, f64)>> {
    let n = subset.nrows();
    (0..n)
        .map(|q| {
            let mut others: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != q)
                .map(|j| {
                    let d2: f64 = subset
                        .row(q)
                        .iter()
                        .zip(subset.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (j, d2)
                })
                .collect();
            others.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            others
        })
        .collect()
}
