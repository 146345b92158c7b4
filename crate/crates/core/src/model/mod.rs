//! The linear Siamese embedder and its contrastive objective.
//!
//! `EmbedderParams` holds a single linear layer (the embedding consumed by
//! clustering) plus a low-dimensional projection head used only inside the
//! loss. Gradients are exact and hand-derived; the training loop lives in
//! [`train`].

pub mod checkpoint;
mod train;

pub use train::{train, LossReport, TrainConfig};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mining::MiningError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("projection head must be narrower than the embedding ({d2} >= {d1})")]
    HeadTooWide { d1: usize, d2: usize },
    #[error("non-finite parameter value in {0}")]
    NonFinite(&'static str),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("mining produced no pairs in epoch {epoch}; nothing to train on")]
    EmptyMining { epoch: usize },
    #[error("batch references unknown frame {0}")]
    UnknownFrame(u64),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error("malformed checkpoint: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub fn category(&self) -> &'static str {
        match self {
            ModelError::DimensionMismatch { .. } => "dimension-mismatch",
            ModelError::HeadTooWide { .. } | ModelError::BadConfig(_) => "bad-config",
            ModelError::NonFinite(_) => "non-finite-value",
            ModelError::EmptyMining { .. } => "empty-mining",
            ModelError::UnknownFrame(_) => "referential-integrity",
            ModelError::Mining(e) => e.category(),
            ModelError::BadHeader(_) | ModelError::Parse(_) => "malformed-input",
            ModelError::Io(_) => "io",
        }
    }
}

/// How the pair distance d_W is computed from the projected difference.
///
/// `Euclidean` is the canonical contrastive-loss distance. The literal
/// squared-norm reading is kept selectable because both appear in practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

/// Weights of the embedding layer and the contrastive projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    /// Input-to-embedding weights, `d_in x d_embed`.
    w1: Array2<f64>,
    /// Embedding bias, length `d_embed`.
    b1: Array1<f64>,
    /// Projection head, `d_embed x d_proj`, bias-free: a shared bias cancels
    /// in the pair difference.
    w2: Array2<f64>,
}

impl EmbedderParams {
    pub fn new(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>) -> Result<Self, ModelError> {
        let (d_in, d_embed) = w1.dim();
        let (w2_rows, d_proj) = w2.dim();
        if d_in == 0 || d_embed == 0 || d_proj == 0 {
            return Err(ModelError::BadConfig("zero-sized layer".into()));
        }
        if b1.len() != d_embed {
            return Err(ModelError::DimensionMismatch {
                what: "embedding bias",
                expected: d_embed,
                got: b1.len(),
            });
        }
        if w2_rows != d_embed {
            return Err(ModelError::DimensionMismatch {
                what: "projection head input",
                expected: d_embed,
                got: w2_rows,
            });
        }
        if d_proj >= d_embed {
            return Err(ModelError::HeadTooWide {
                d1: d_embed,
                d2: d_proj,
            });
        }
        for (name, finite) in [
            ("w1", w1.iter().all(|v| v.is_finite())),
            ("b1", b1.iter().all(|v| v.is_finite())),
            ("w2", w2.iter().all(|v| v.is_finite())),
        ] {
            if !finite {
                return Err(ModelError::NonFinite(name));
            }
        }
        Ok(EmbedderParams { w1, b1, w2 })
    }

    /// Seeded uniform init in +-bound per layer, bound = 1/sqrt(fan_in)
    /// unless `init_scale` overrides it.
    pub fn init<R: Rng + ?Sized>(
        d_in: usize,
        d_embed: usize,
        d_proj: usize,
        init_scale: Option<f64>,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let bound1 = init_scale.unwrap_or(1.0 / (d_in as f64).sqrt());
        let bound2 = init_scale.unwrap_or(1.0 / (d_embed as f64).sqrt());
        if !(bound1 > 0.0 && bound2 > 0.0) {
            return Err(ModelError::BadConfig(format!(
                "init bound must be positive, got {bound1}"
            )));
        }
        let w1 = Array2::from_shape_fn((d_in, d_embed), |_| rng.random_range(-bound1..bound1));
        let b1 = Array1::from_shape_fn(d_embed, |_| rng.random_range(-bound1..bound1));
        let w2 = Array2::from_shape_fn((d_embed, d_proj), |_| rng.random_range(-bound2..bound2));
        Self::new(w1, b1, w2)
    }

    /// Pass-through embedder (identity weights, zero bias) for tests and the
    /// raw-feature pipeline path. The head is a zero d x 1 placeholder.
    pub fn identity(d: usize) -> Self {
        assert!(d >= 2, "identity embedder needs d >= 2");
        EmbedderParams {
            w1: Array2::eye(d),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, 1)),
        }
    }

    /// (input dim, embedding dim, projection dim).
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn b1(&self) -> &Array1<f64> {
        &self.b1
    }

    pub fn w2(&self) -> &Array2<f64> {
        &self.w2
    }

    /// Embed one input: `W1^T x + b1`.
    pub fn embed(&self, x: &[f64]) -> Array1<f64> {
        assert_eq!(x.len(), self.w1.nrows(), "embed input dimension mismatch");
        let x = ndarray::ArrayView1::from(x);
        x.dot(&self.w1) + &self.b1
    }

    /// Embed every row of an `n x d_in` matrix.
    pub fn embed_all(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(
            x.ncols(),
            self.w1.nrows(),
            "embed input dimension mismatch"
        );
        x.dot(&self.w1) + &self.b1
    }

    /// Project an embedding into the loss space: `W2^T e`.
    pub fn project(&self, e: &Array1<f64>) -> Array1<f64> {
        e.dot(&self.w2)
    }

    /// One SGD update: `theta -= lr * grad`.
    pub fn apply_step(&mut self, grads: &PairGradients, learning_rate: f64) {
        self.w1.scaled_add(-learning_rate, &grads.w1);
        self.b1.scaled_add(-learning_rate, &grads.b1);
        self.w2.scaled_add(-learning_rate, &grads.w2);
    }
}

/// Gradients of the contrastive loss with respect to each parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
}

impl PairGradients {
    pub fn zeros(params: &EmbedderParams) -> Self {
        PairGradients {
            w1: Array2::zeros(params.w1.dim()),
            b1: Array1::zeros(params.b1.len()),
            w2: Array2::zeros(params.w2.dim()),
        }
    }
}

/// Loss scale factor s with dL/du = s*u for projected difference u.
///
/// Subgradient 0 is used at the non-smooth points (u = 0 for the Euclidean
/// distance, and the hinge boundary d_W = margin).
fn loss_scale(sq_norm: f64, y: u8, margin: f64, kind: DistanceKind) -> f64 {
    match (kind, y) {
        (DistanceKind::Euclidean, 0) => 1.0,
        (DistanceKind::Euclidean, _) => {
            let d = sq_norm.sqrt();
            if d >= margin || d == 0.0 {
                0.0
            } else {
                -(margin - d) / d
            }
        }
        (DistanceKind::SquaredEuclidean, 0) => 2.0 * sq_norm,
        (DistanceKind::SquaredEuclidean, _) => {
            if sq_norm >= margin {
                0.0
            } else {
                -2.0 * (margin - sq_norm)
            }
        }
    }
}

fn loss_value(sq_norm: f64, y: u8, margin: f64, kind: DistanceKind) -> (f64, f64) {
    let d = match kind {
        DistanceKind::Euclidean => sq_norm.sqrt(),
        DistanceKind::SquaredEuclidean => sq_norm,
    };
    let loss = if y == 0 {
        0.5 * d * d
    } else {
        0.5 * (margin - d).max(0.0).powi(2)
    };
    (loss, d)
}

/// Contrastive loss of one pair; returns (loss, d_W).
///
/// y = 0 marks a same-identity pair (pulled together), y = 1 a
/// different-identity pair (pushed beyond the margin).
pub fn pair_loss(
    params: &EmbedderParams,
    x1: &[f64],
    x2: &[f64],
    y: u8,
    margin: f64,
    kind: DistanceKind,
) -> (f64, f64) {
    assert!(y <= 1, "pair label must be 0 or 1");
    assert!(margin > 0.0, "margin must be positive");
    let z1 = params.project(&params.embed(x1));
    let z2 = params.project(&params.embed(x2));
    let sq_norm = z1
        .iter()
        .zip(z2.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    loss_value(sq_norm, y, margin, kind)
}

/// Exact analytic gradients of [`pair_loss`]; returns (loss, d_W, gradients).
///
/// The bias gradient is identically zero: b1 cancels in the embedded pair
/// difference.
pub fn pair_loss_gradients(
    params: &EmbedderParams,
    x1: &[f64],
    x2: &[f64],
    y: u8,
    margin: f64,
    kind: DistanceKind,
) -> (f64, f64, PairGradients) {
    assert!(y <= 1, "pair label must be 0 or 1");
    assert!(margin > 0.0, "margin must be positive");
    let e1 = params.embed(x1);
    let e2 = params.embed(x2);
    let u = params.project(&e1) - params.project(&e2);
    let sq_norm = u.iter().map(|v| v * v).sum::<f64>();
    let (loss, d) = loss_value(sq_norm, y, margin, kind);

    let s = loss_scale(sq_norm, y, margin, kind);
    let g = u.mapv(|v| s * v);
    let de = (e1 - e2).insert_axis(Axis(1));
    let gw2 = de.dot(&g.view().insert_axis(Axis(0)));
    let h = params.w2.dot(&g);
    let dx: Array1<f64> = x1.iter().zip(x2.iter()).map(|(a, b)| a - b).collect();
    let gw1 = dx.insert_axis(Axis(1)).dot(&h.view().insert_axis(Axis(0)));
    let grads = PairGradients {
        w1: gw1,
        b1: Array1::zeros(params.b1.len()),
        w2: gw2,
    };
    (loss, d, grads)
}

/// Mean loss and mean gradients over a batch of pairs given as row-aligned
/// matrices (`x1.row(i)` pairs with `x2.row(i)`, label `ys[i]`).
pub fn batch_loss_gradients(
    params: &EmbedderParams,
    x1: &Array2<f64>,
    x2: &Array2<f64>,
    ys: &[u8],
    margin: f64,
    kind: DistanceKind,
) -> (f64, PairGradients) {
    let n = ys.len();
    assert!(n > 0, "empty batch");
    assert_eq!(x1.nrows(), n);
    assert_eq!(x2.nrows(), n);
    let e1 = params.embed_all(x1);
    let e2 = params.embed_all(x2);
    let u = (&e1 - &e2).dot(&params.w2);

    let mut loss_sum = 0.0;
    let mut g = u.clone();
    for (i, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
        let sq_norm = row.iter().map(|v| v * v).sum::<f64>();
        let (loss, _) = loss_value(sq_norm, ys[i], margin, kind);
        loss_sum += loss;
        let s = loss_scale(sq_norm, ys[i], margin, kind);
        row.mapv_inplace(|v| s * v);
    }

    let inv_n = 1.0 / n as f64;
    let gw2 = (e1 - e2).t().dot(&g).mapv(|v| v * inv_n);
    let h = g.dot(&params.w2.t());
    let gw1 = (x1 - x2).t().dot(&h).mapv(|v| v * inv_n);
    let grads = PairGradients {
        w1: gw1,
        b1: Array1::zeros(params.b1.len()),
        w2: gw2,
    };
    (loss_sum * inv_n, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_params(d_in: usize, d1: usize, d2: usize, seed: u64) -> EmbedderParams {
        EmbedderParams::init(d_in, d1, d2, None, &mut rng(seed)).unwrap()
    }

    fn random_vec(len: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_embed_is_passthrough() {
        let p = EmbedderParams::identity(3);
        let x = [0.5, -1.25, 2.0];
        let e = p.embed(&x);
        assert_eq!(e.as_slice().unwrap(), &x);
    }

    #[test]
    fn zero_input_embeds_to_bias() {
        let p = random_params(4, 3, 2, 1);
        let e = p.embed(&[0.0; 4]);
        for (a, b) in e.iter().zip(p.b1().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn embed_matches_triple_loop_oracle() {
        let p = random_params(6, 4, 2, 2);
        let mut r = rng(3);
        for _ in 0..20 {
            let x = random_vec(6, &mut r);
            let got = p.embed(&x);
            for j in 0..4 {
                let mut want = p.b1()[j];
                for (i, &xi) in x.iter().enumerate() {
                    want += p.w1()[[i, j]] * xi;
                }
                assert!((got[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_is_affine() {
        let p = random_params(5, 4, 2, 4);
        let mut r = rng(5);
        for _ in 0..20 {
            let x = ndarray::Array1::from(random_vec(5, &mut r));
            let xp = ndarray::Array1::from(random_vec(5, &mut r));
            let (alpha, beta): (f64, f64) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
            let combo: Vec<f64> = (&x * alpha + &xp * beta).to_vec();
            let lhs = p.embed(&combo);
            let rhs = p.embed(x.as_slice().unwrap()).mapv(|v| alpha * v)
                + p.embed(xp.as_slice().unwrap()).mapv(|v| beta * v)
                + p.b1().mapv(|v| (1.0 - alpha - beta) * v);
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                assert!((a - b).abs() < 1e-9, "affine identity violated: {a} vs {b}");
            }
        }
    }

    #[test]
    fn coincident_same_pair_has_zero_loss() {
        let p = random_params(4, 3, 2, 6);
        let x = [0.1, 0.2, 0.3, 0.4];
        let (loss, d) = pair_loss(&p, &x, &x, 0, 1.0, DistanceKind::Euclidean);
        assert_eq!(loss, 0.0);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn coincident_different_pair_costs_half_margin_sq() {
        let p = random_params(4, 3, 2, 7);
        let x = [0.1, -0.2, 0.3, 0.4];
        let (loss, d) = pair_loss(&p, &x, &x, 1, 1.0, DistanceKind::Euclidean);
        assert_eq!(d, 0.0);
        assert_eq!(loss, 0.5);
    }

    #[test]
    fn separated_different_pair_has_zero_loss() {
        // Scale one input until the hinge saturates.
        let p = random_params(3, 3, 2, 8);
        let x1 = [5.0, -3.0, 2.0];
        let mut x2 = [5.0, -3.0, 2.0];
        let mut scale = 1.0;
        loop {
            scale *= 2.0;
            for (a, b) in x2.iter_mut().zip(x1.iter()) {
                *a = b * scale;
            }
            let (loss, d) = pair_loss(&p, &x1, &x2, 1, 1.0, DistanceKind::Euclidean);
            if d >= 1.0 {
                assert_eq!(loss, 0.0);
                break;
            }
            assert!(scale < 1e9, "could not drive pair apart; degenerate head");
        }
    }

    #[test]
    fn pair_loss_is_symmetric_bitwise() {
        let p = random_params(5, 4, 3, 9);
        let mut r = rng(10);
        for _ in 0..50 {
            let x1 = random_vec(5, &mut r);
            let x2 = random_vec(5, &mut r);
            let y = (r.random_range(0..2u8)) as u8;
            for kind in [DistanceKind::Euclidean, DistanceKind::SquaredEuclidean] {
                let a = pair_loss(&p, &x1, &x2, y, 1.0, kind);
                let b = pair_loss(&p, &x2, &x1, y, 1.0, kind);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn loss_monotonicity_in_distance() {
        // y=0 nondecreasing, y=1 nonincreasing and 0 past the margin.
        let margin = 1.0;
        let mut prev0 = -1.0;
        let mut prev1 = f64::INFINITY;
        for i in 0..200 {
            let d = i as f64 * 0.02;
            let (l0, _) = loss_value(d * d, 0, margin, DistanceKind::Euclidean);
            let (l1, _) = loss_value(d * d, 1, margin, DistanceKind::Euclidean);
            assert!(l0 >= prev0);
            assert!(l1 <= prev1);
            if d >= margin {
                assert_eq!(l1, 0.0);
            }
            prev0 = l0;
            prev1 = l1;
        }
    }

    #[test]
    fn saturated_hinge_has_exactly_zero_gradients() {
        let p = random_params(4, 3, 2, 11);
        let mut r = rng(12);
        let mut checked = 0;
        while checked < 10 {
            let x1 = random_vec(4, &mut r);
            let x2: Vec<f64> = x1.iter().map(|v| v * 50.0 + 3.0).collect();
            let (loss, d, grads) =
                pair_loss_gradients(&p, &x1, &x2, 1, 1.0, DistanceKind::Euclidean);
            if d < 1.0 {
                continue;
            }
            checked += 1;
            assert_eq!(loss, 0.0);
            assert!(grads.w1.iter().all(|&v| v == 0.0));
            assert!(grads.b1.iter().all(|&v| v == 0.0));
            assert!(grads.w2.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn coincident_same_pair_has_zero_gradients() {
        let p = random_params(4, 3, 2, 13);
        let x = [0.4, 0.1, -0.9, 0.2];
        let (loss, _, grads) = pair_loss_gradients(&p, &x, &x, 0, 1.0, DistanceKind::Euclidean);
        assert_eq!(loss, 0.0);
        assert!(grads.w1.iter().all(|&v| v == 0.0));
        assert!(grads.w2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_identically_zero() {
        let p = random_params(5, 4, 2, 14);
        let mut r = rng(15);
        for _ in 0..30 {
            let x1 = random_vec(5, &mut r);
            let x2 = random_vec(5, &mut r);
            for y in [0u8, 1] {
                for kind in [DistanceKind::Euclidean, DistanceKind::SquaredEuclidean] {
                    let (_, _, grads) = pair_loss_gradients(&p, &x1, &x2, y, 1.0, kind);
                    assert!(grads.b1.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    /// Central finite differences over every parameter entry.
    fn finite_diff_check(kind: DistanceKind, seed: u64, trials: usize) {
        let h = 1e-5;
        let margin = 1.0;
        let mut r = rng(seed);
        let mut done = 0;
        while done < trials {
            let p = EmbedderParams::init(6, 4, 2, None, &mut r).unwrap();
            let x1 = random_vec(6, &mut r);
            let x2 = random_vec(6, &mut r);
            let y = r.random_range(0..2u8);
            let (_, d, grads) = pair_loss_gradients(&p, &x1, &x2, y, margin, kind);
            // Skip the non-smooth neighborhoods; the subgradient there is a
            // choice, not a limit.
            if y == 1 && (d - margin).abs() < 1e-3 || d < 1e-3 {
                continue;
            }
            done += 1;

            let check = |get: &dyn Fn(&EmbedderParams) -> f64,
                             set: &dyn Fn(&mut EmbedderParams, f64),
                             analytic: f64| {
                let mut pp = p.clone();
                let v = get(&p);
                set(&mut pp, v + h);
                let (lp, _) = pair_loss(&pp, &x1, &x2, y, margin, kind);
                set(&mut pp, v - h);
                let (lm, _) = pair_loss(&pp, &x1, &x2, y, margin, kind);
                let numeric = (lp - lm) / (2.0 * h);
                let diff = (analytic - numeric).abs();
                // Central differences carry ~1e-12 cancellation noise, which
                // would swamp a pure relative test when the derivative is 0.
                if diff < 1e-8 {
                    return;
                }
                assert!(
                    diff / analytic.abs().max(numeric.abs()) < 1e-4,
                    "gradient mismatch: analytic {analytic}, numeric {numeric}"
                );
            };

            for i in 0..6 {
                for j in 0..4 {
                    check(
                        &|p| p.w1[[i, j]],
                        &|p, v| p.w1[[i, j]] = v,
                        grads.w1[[i, j]],
                    );
                }
            }
            for j in 0..4 {
                check(&|p| p.b1[j], &|p, v| p.b1[j] = v, grads.b1[j]);
            }
            for i in 0..4 {
                for j in 0..2 {
                    check(
                        &|p| p.w2[[i, j]],
                        &|p, v| p.w2[[i, j]] = v,
                        grads.w2[[i, j]],
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_euclidean() {
        finite_diff_check(DistanceKind::Euclidean, 16, 10);
    }

    #[test]
    fn gradients_match_finite_differences_squared() {
        finite_diff_check(DistanceKind::SquaredEuclidean, 17, 10);
    }

    #[test]
    fn batch_gradients_match_per_pair_mean() {
        let p = random_params(5, 4, 2, 18);
        let mut r = rng(19);
        let n = 16;
        let mut x1 = Array2::zeros((n, 5));
        let mut x2 = Array2::zeros((n, 5));
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..5 {
                x1[[i, j]] = r.random_range(-1.0..1.0);
                x2[[i, j]] = r.random_range(-1.0..1.0);
            }
            ys.push(r.random_range(0..2u8));
        }
        let (batch_loss, batch_grads) =
            batch_loss_gradients(&p, &x1, &x2, &ys, 1.0, DistanceKind::Euclidean);

        let mut loss_sum = 0.0;
        let mut acc = PairGradients::zeros(&p);
        for i in 0..n {
            let (l, _, g) = pair_loss_gradients(
                &p,
                x1.row(i).as_slice().unwrap(),
                x2.row(i).as_slice().unwrap(),
                ys[i],
                1.0,
                DistanceKind::Euclidean,
            );
            loss_sum += l;
            acc.w1 += &g.w1;
            acc.b1 += &g.b1;
            acc.w2 += &g.w2;
        }
        let inv = 1.0 / n as f64;
        assert!((batch_loss - loss_sum * inv).abs() < 1e-12);
        for (a, b) in batch_grads.w1.iter().zip(acc.w1.iter()) {
            assert!((a - b * inv).abs() < 1e-9);
        }
        for (a, b) in batch_grads.w2.iter().zip(acc.w2.iter()) {
            assert!((a - b * inv).abs() < 1e-9);
        }
    }

    #[test]
    fn apply_step_with_zero_gradient_is_a_noop() {
        let mut p = random_params(4, 3, 2, 20);
        let before = p.clone();
        let zero = PairGradients::zeros(&p);
        p.apply_step(&zero, 1e-3);
        assert_eq!(p, before);
        let (_, _, grads) = pair_loss_gradients(
            &p,
            &[1.0, 2.0, 3.0, 4.0],
            &[0.5, 0.2, 0.1, 0.9],
            0,
            1.0,
            DistanceKind::Euclidean,
        );
        p.apply_step(&grads, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn one_step_does_not_increase_batch_loss() {
        let mut r = rng(21);
        for trial in 0..100 {
            let mut p = EmbedderParams::init(5, 4, 2, None, &mut r).unwrap();
            let n = 8;
            let mut x1 = Array2::zeros((n, 5));
            let mut x2 = Array2::zeros((n, 5));
            let mut ys = Vec::new();
            for i in 0..n {
                for j in 0..5 {
                    x1[[i, j]] = r.random_range(-1.0..1.0);
                    x2[[i, j]] = r.random_range(-1.0..1.0);
                }
                ys.push(r.random_range(0..2u8));
            }
            let (before, grads) =
                batch_loss_gradients(&p, &x1, &x2, &ys, 1.0, DistanceKind::Euclidean);
            p.apply_step(&grads, 1e-3);
            let (after, _) = batch_loss_gradients(&p, &x1, &x2, &ys, 1.0, DistanceKind::Euclidean);
            assert!(
                after <= before + 1e-12,
                "loss rose on trial {trial}: {before} -> {after}"
            );
        }
    }

    #[test]
    fn squared_kind_reports_squared_distance() {
        let p = random_params(4, 3, 2, 22);
        let x1 = [0.3, 0.6, -0.2, 0.8];
        let x2 = [-0.1, 0.4, 0.9, 0.0];
        let (_, d_euc) = pair_loss(&p, &x1, &x2, 0, 1.0, DistanceKind::Euclidean);
        let (_, d_sq) = pair_loss(&p, &x1, &x2, 0, 1.0, DistanceKind::SquaredEuclidean);
        assert!((d_sq - d_euc * d_euc).abs() < 1e-12);
    }

    #[test]
    fn new_rejects_wide_head_and_bad_shapes() {
        let w1 = Array2::zeros((4, 3));
        let b1 = Array1::zeros(3);
        assert!(matches!(
            EmbedderParams::new(w1.clone(), b1.clone(), Array2::zeros((3, 3))),
            Err(ModelError::HeadTooWide { .. })
        ));
        assert!(matches!(
            EmbedderParams::new(w1.clone(), Array1::zeros(2), Array2::zeros((3, 2))),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            EmbedderParams::new(w1, b1, Array2::from_elem((3, 2), f64::NAN)),
            Err(ModelError::NonFinite(_))
        ));
    }
}
