//! Ranked neighbor lists over a frame subset.
//!
//! Row b of the ranked index matrix lists all subset indices ordered by
//! ascending distance to b, with b itself pinned to column 0 and distance
//! ties broken by ascending index. The nearest/farthest helpers are O(B²)
//! shortcuts that agree with columns 1 and B-1 of the full matrix.

use ndarray::Array2;

use super::MiningError;

/// Symmetric matrix of squared Euclidean distances between subset rows.
pub fn pairwise_sq(subset: &Array2<f64>) -> Array2<f64> {
    let n = subset.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = subset
                .row(i)
                .iter()
                .zip(subset.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Full sorted-neighbor matrix; row b is a permutation of 0..B with b first.
pub fn ranked_index_matrix(subset: &Array2<f64>) -> Result<Array2<usize>, MiningError> {
    let n = subset.nrows();
    if n < 2 {
        return Err(MiningError::TooFewFrames { got: n, need: 2 });
    }
    let d = pairwise_sq(subset);
    let mut out = Array2::zeros((n, n));
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for b in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != b));
        order.sort_by(|&x, &y| d[[b, x]].total_cmp(&d[[b, y]]).then(x.cmp(&y)));
        out[[b, 0]] = b;
        for (c, &j) in order.iter().enumerate() {
            out[[b, c + 1]] = j;
        }
    }
    Ok(out)
}

/// Per-query nearest non-self and farthest neighbors: (index, distance) each,
/// ordered by query. Matches ranked-matrix columns 1 and B-1 exactly,
/// including tie-breaks (ascending index for nearest, descending-sort tail,
/// i.e. largest index, for farthest).
pub fn nearest_and_farthest(
    subset: &Array2<f64>,
) -> Result<(Vec<(usize, f64)>, Vec<(usize, f64)>), MiningError> {
    let n = subset.nrows();
    if n < 2 {
        return Err(MiningError::TooFewFrames { got: n, need: 2 });
    }
    let d = pairwise_sq(subset);
    let mut nearest = Vec::with_capacity(n);
    let mut farthest = Vec::with_capacity(n);
    for b in 0..n {
        let mut near = usize::MAX;
        let mut far = usize::MAX;
        for j in 0..n {
            if j == b {
                continue;
            }
            if near == usize::MAX || d[[b, j]] < d[[b, near]] {
                near = j;
            }
            if far == usize::MAX || d[[b, j]] > d[[b, far]] || (d[[b, j]] == d[[b, far]] && j > far)
            {
                far = j;
            }
        }
        nearest.push((near, d[[b, near]].sqrt()));
        farthest.push((far, d[[b, far]].sqrt()));
    }
    Ok((nearest, farthest))
}
