//! The multi-category logit likelihood.
//!
//! Category 0 is the fixed reference. With linear predictors
//! `theta_i = X_i beta` in `R^{m-1}`, the log-partition is
//! `b(theta) = log(1 + sum_l exp(theta_l))`, the per-observation mean is
//! the softmax against the implicit zero score of category 0, and the
//! covariance block is `W_i = diag(mu_i) - mu_i mu_i^T`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{GroupedDesign, SparseCoef};
use crate::error::{Error, Result};

/// Stacked multinomial indicator response together with the raw labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseVector {
    labels: Vec<usize>,
    m: usize,
}

impl ResponseVector {
    pub fn new(labels: Vec<usize>, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("category count m={m} must be >= 2")));
        }
        if let Some(&z) = labels.iter().find(|&&z| z >= m) {
            return Err(Error::InvalidInput(format!("label {z} out of range for m={m}")));
        }
        Ok(Self { labels, m })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Indicator `Y_{il} = 1(Z_i = l)` for `l = 1..m-1`, stacked
    /// observation-major into an `n(m-1)` vector.
    pub fn stacked(&self) -> DVector<f64> {
        let mm = self.m - 1;
        let mut y = DVector::zeros(self.labels.len() * mm);
        for (i, &z) in self.labels.iter().enumerate() {
            if z >= 1 {
                y[i * mm + (z - 1)] = 1.0;
            }
        }
        y
    }
}

/// `b(theta) = log(1 + sum_l exp(theta_l))`, computed by max-shift over the
/// augmented score vector `(0, theta)`.
pub fn log_partition(theta: &DVector<f64>) -> Result<f64> {
    if theta.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("theta contains NaN".into()));
    }
    Ok(log_partition_unchecked(theta.as_slice()))
}

pub(crate) fn log_partition_unchecked(theta: &[f64]) -> f64 {
    let m = theta.iter().cloned().fold(0.0f64, f64::max);
    let mut s = (-m).exp();
    for &t in theta {
        s += (t - m).exp();
    }
    m + s.ln()
}

/// Softmax mean `mu` and covariance block `W = diag(mu) - mu mu^T` at a
/// single linear predictor.
pub fn mean_and_covariance(theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if theta.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("theta contains NaN".into()));
    }
    let mu = softmax_probs(theta.as_slice());
    let k = mu.len();
    let mut w = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            w[(a, b)] = if a == b { mu[a] * (1.0 - mu[a]) } else { -mu[a] * mu[b] };
        }
    }
    Ok((mu, w))
}

/// Probabilities of categories `1..m-1` (the reference category takes the
/// remaining mass). Max-shifted for overflow safety.
pub(crate) fn softmax_probs(theta: &[f64]) -> DVector<f64> {
    let m = theta.iter().cloned().fold(0.0f64, f64::max);
    let denom: f64 = (-m).exp() + theta.iter().map(|&t| (t - m).exp()).sum::<f64>();
    DVector::from_iterator(theta.len(), theta.iter().map(|&t| (t - m).exp() / denom))
}

/// A declared truth: coefficient vector, linear predictors, mean, and the
/// block-diagonal covariance of the response under that truth.
#[derive(Debug, Clone)]
pub struct TrueModel {
    beta0: DVector<f64>,
    theta0: Vec<DVector<f64>>,
    mu: DVector<f64>,
    w_blocks: Vec<DMatrix<f64>>,
    support: Vec<usize>,
    d0: usize,
    m: usize,
}

impl TrueModel {
    pub fn new(beta0: DVector<f64>, design: &GroupedDesign) -> Result<Self> {
        if beta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("beta0".into()));
        }
        let flat = design.predict(&beta0)?;
        let mm = design.m() - 1;
        let mut theta0 = Vec::with_capacity(design.n());
        let mut mu = DVector::zeros(design.n() * mm);
        let mut w_blocks = Vec::with_capacity(design.n());
        for i in 0..design.n() {
            let th = flat.rows(i * mm, mm).into_owned();
            let (mui, wi) = mean_and_covariance(&th)?;
            mu.rows_mut(i * mm, mm).copy_from(&mui);
            theta0.push(th);
            w_blocks.push(wi);
        }
        let sc = SparseCoef::from_dense(&beta0, design.partition())?;
        let support = sc.support().to_vec();
        let d0 = sc.block_dim(design.partition());
        Ok(Self { beta0, theta0, mu, w_blocks, support, d0, m: design.m() })
    }

    pub fn beta0(&self) -> &DVector<f64> {
        &self.beta0
    }

    pub fn n(&self) -> usize {
        self.theta0.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Linear predictor block of observation `i`.
    pub fn theta0(&self, i: usize) -> &DVector<f64> {
        &self.theta0[i]
    }

    /// Stacked mean `mu = E0 Y`.
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Covariance block `W_i`.
    pub fn w_block(&self, i: usize) -> &DMatrix<f64> {
        &self.w_blocks[i]
    }

    /// True support (groups with a nonzero block).
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Number of active groups `s_0`.
    pub fn s0(&self) -> usize {
        self.support.len()
    }

    /// Dimension of the active blocks `d_0`.
    pub fn d0(&self) -> usize {
        self.d0
    }

    /// `v^T W v` for a stacked `n(m-1)` vector, accumulated block-wise.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        let mm = self.m - 1;
        let mut total = 0.0;
        for (i, w) in self.w_blocks.iter().enumerate() {
            let vi = v.rows(i * mm, mm);
            total += (w * vi).dot(&vi.into_owned());
        }
        total
    }

    /// `W v` applied block-wise.
    pub fn apply_w(&self, v: &DVector<f64>) -> DVector<f64> {
        let mm = self.m - 1;
        let mut out = DVector::zeros(v.len());
        for (i, w) in self.w_blocks.iter().enumerate() {
            let vi = v.rows(i * mm, mm).into_owned();
            out.rows_mut(i * mm, mm).copy_from(&(w * vi));
        }
        out
    }

    /// `||W^{1/2} X (beta - beta0)||_2` evaluated without forming `W^{1/2}`.
    pub fn prediction_distance(&self, design: &GroupedDesign, beta: &DVector<f64>) -> Result<f64> {
        let delta = design.predict(&(beta - &self.beta0))?;
        Ok(self.quadratic_form(&delta).max(0.0).sqrt())
    }
}

/// Log-likelihood `sum_i { Y_i^T theta_i - b(theta_i) }` at `theta = X beta`.
pub fn log_likelihood(beta: &DVector<f64>, design: &GroupedDesign, y: &ResponseVector) -> Result<f64> {
    if y.n() != design.n() || y.m() != design.m() {
        return Err(Error::DimensionMismatch(format!(
            "response is ({}, m={}), design is ({}, m={})",
            y.n(),
            y.m(),
            design.n(),
            design.m()
        )));
    }
    let theta = design.predict(beta)?;
    Ok(log_likelihood_from_theta(theta.as_slice(), y))
}

/// Same contraction over a precomputed stacked linear predictor.
pub(crate) fn log_likelihood_from_theta(theta: &[f64], y: &ResponseVector) -> f64 {
    let mm = y.m() - 1;
    let mut total = 0.0;
    for (i, &z) in y.labels().iter().enumerate() {
        let block = &theta[i * mm..(i + 1) * mm];
        if z >= 1 {
            total += block[z - 1];
        }
        total -= log_partition_unchecked(block);
    }
    total
}

/// Score `X^T (Y - mu(beta))` and the log-likelihood Hessian
/// `-X^T W(beta) X`, the latter accumulated observation block by
/// observation block.
pub fn score_and_hessian(
    beta: &DVector<f64>,
    design: &GroupedDesign,
    y: &ResponseVector,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y.n() != design.n() || y.m() != design.m() {
        return Err(Error::DimensionMismatch("response/design shapes disagree".into()));
    }
    let theta = design.predict(beta)?;
    let mm = design.m() - 1;
    let d = design.dim();
    let ys = y.stacked();
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..design.n() {
        let th = theta.rows(i * mm, mm).into_owned();
        let (mui, wi) = mean_and_covariance(&th)?;
        let resid = ys.rows(i * mm, mm) - &mui;
        let xi = design.row_block(i);
        grad += xi.transpose() * resid;
        hess -= xi.transpose() * wi * xi;
    }
    Ok((grad, hess))
}

/// Draws labels with `P(Z_i = l)` proportional to `exp(theta_{0i,l})` for
/// `l >= 1` and to `1` for the reference category. Deterministic in `seed`.
pub fn simulate_responses(model: &TrueModel, seed: u64) -> ResponseVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mm = model.m() - 1;
    let mut labels = Vec::with_capacity(model.n());
    for i in 0..model.n() {
        let probs = softmax_probs(model.theta0(i).as_slice());
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut z = 0usize;
        for l in 0..mm {
            acc += probs[l];
            if u < acc {
                z = l + 1;
                break;
            }
        }
        labels.push(z);
    }
    ResponseVector::new(labels, model.m()).expect("labels generated in range")
}

/// The response-free centered log-likelihood ratio
/// `sum_i { b(theta_i) - b(theta_{0i}) - mu_i^T (theta_i - theta_{0i}) }`,
/// a Bregman divergence of the convex log-partition, hence nonnegative.
pub fn log_likelihood_ratio_centered(
    beta: &DVector<f64>,
    model: &TrueModel,
    design: &GroupedDesign,
) -> Result<f64> {
    if model.n() != design.n() || model.m() != design.m() {
        return Err(Error::DimensionMismatch("model/design shapes disagree".into()));
    }
    let theta = design.predict(beta)?;
    let mm = design.m() - 1;
    let mut total = 0.0;
    for i in 0..design.n() {
        let th = theta.rows(i * mm, mm);
        let th0 = model.theta0(i);
        let mut term = log_partition_unchecked(th.as_slice())
            - log_partition_unchecked(th0.as_slice());
        for l in 0..mm {
            term -= model.mu()[i * mm + l] * (th[l] - th0[l]);
        }
        total += term;
    }
    Ok(total)
}
