//! The hierarchical group spike-and-slab prior.
//!
//! A group dimension `s` is drawn from the geometric law
//! `pi_p(s) proportional to (p v n^gbar)^{-A s}`, a support of that size is
//! chosen uniformly, and each active block `beta_j` gets an isotropic
//! Kotz-type slab with density proportional to `exp(-lambda ||beta_j||_2)`.
//! Inactive blocks carry a point mass at zero. The slab scale is
//! `lambda = 8 ||X||_* sqrt(log p v gbar log n)` unless overridden.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::design::{GroupPartition, GroupedDesign, SparseCoef};
use crate::error::{Error, Result};
use crate::util::{ln_binomial, logsumexp};

/// The scale rule `lambda = 8 ||X||_* sqrt(log p v gbar log n)`.
///
/// Requires `p >= 2` or `n >= 2` so the logarithm under the root is
/// positive.
pub fn lambda_from_design(design: &GroupedDesign) -> Result<f64> {
    lambda_rule(
        design.x_star_norm(),
        design.partition().group_count(),
        design.n(),
        design.partition().max_group_size(),
    )
}

/// Same rule from raw ingredients.
pub fn lambda_rule(x_star: f64, p: usize, n: usize, gbar: usize) -> Result<f64> {
    if p < 2 && n < 2 {
        return Err(Error::InvalidInput(
            "lambda rule needs p >= 2 or n >= 2 for a positive log".into(),
        ));
    }
    if x_star <= 0.0 {
        return Err(Error::Degenerate("x_star must be positive".into()));
    }
    Ok(8.0 * x_star * log_dim_weight(p, n, gbar).sqrt())
}

/// `log(p v n^gbar) = max(log p, gbar log n)`, computed in log space so
/// `n^gbar` never overflows.
pub fn log_dim_weight(p: usize, n: usize, gbar: usize) -> f64 {
    ((p as f64).ln()).max(gbar as f64 * (n as f64).ln())
}

/// Fully specified prior: the exponent `A` of the concrete geometric
/// group-size law (playing `A_3 = A_4 = A` with `A_1 = A_2 = 1`), the
/// instance dimensions, the slab scale, and the partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    a: f64,
    p: usize,
    n: usize,
    gbar: usize,
    lambda: f64,
    partition: GroupPartition,
    /// log of the normalizing constant of `pi_p`.
    log_pi_norm: f64,
}

impl PriorSpec {
    /// Prior with the design-driven `lambda`.
    pub fn from_design(design: &GroupedDesign, a: f64) -> Result<Self> {
        let lambda = lambda_from_design(design)?;
        Self::with_lambda(design, a, lambda)
    }

    /// Prior with an explicit slab scale, e.g. for experimentation with
    /// weaker scales than the prescribed rule.
    pub fn with_lambda(design: &GroupedDesign, a: f64, lambda: f64) -> Result<Self> {
        if a <= 0.0 {
            return Err(Error::InvalidInput(format!("prior exponent A={a} must be positive")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("lambda={lambda} must be positive")));
        }
        let partition = design.partition().clone();
        let p = partition.group_count();
        let n = design.n();
        let gbar = partition.max_group_size();
        let log_ratio = -a * log_dim_weight(p, n, gbar);
        let terms: Vec<f64> = (0..=p).map(|s| s as f64 * log_ratio).collect();
        let log_pi_norm = logsumexp(&terms);
        Ok(Self { a, p, n, gbar, lambda, partition, log_pi_norm })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gbar(&self) -> usize {
        self.gbar
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    /// `log(p v n^gbar)` for this instance.
    pub fn log_dim_weight(&self) -> f64 {
        log_dim_weight(self.p, self.n, self.gbar)
    }

    /// Log of the normalized group-size prior at dimension `s`.
    ///
    /// Successive ratios are exactly `(p v n^gbar)^{-A}`.
    pub fn log_pi_p(&self, s: usize) -> Result<f64> {
        if s > self.p {
            return Err(Error::InvalidInput(format!("group dimension {s} exceeds p={}", self.p)));
        }
        Ok(-(self.a) * self.log_dim_weight() * s as f64 - self.log_pi_norm)
    }

    /// Log slab density of the active blocks. The empty support carries the
    /// point-mass convention and contributes zero.
    pub fn log_kotz_density(&self, coef: &SparseCoef) -> f64 {
        let mut total = 0.0;
        for (k, &j) in coef.support().iter().enumerate() {
            let block = coef.block(k, &self.partition);
            total += log_kotz_group(&block, self.partition.size(j), self.lambda);
        }
        total
    }

    /// Full log prior of a sparse state: group-size term, uniform support
    /// choice, and slab density.
    pub fn log_prior(&self, coef: &SparseCoef) -> Result<f64> {
        let s = coef.support_size();
        Ok(self.log_pi_p(s)? - ln_binomial(self.p, s) + self.log_kotz_density(coef))
    }

    /// Draws the active blocks of `support` from the slab: uniform
    /// direction on the unit sphere of each block, radius from
    /// Gamma(shape `g_j`, rate `lambda`).
    pub fn sample_slab<R: Rng + ?Sized>(&self, support: &[usize], rng: &mut R) -> Result<SparseCoef> {
        let mut values = Vec::new();
        for &j in support {
            if j >= self.p {
                return Err(Error::InvalidInput(format!("group index {j} out of range")));
            }
            let g = self.partition.size(j);
            let block = sample_kotz_block(g, self.lambda, rng);
            values.extend_from_slice(block.as_slice());
        }
        SparseCoef::new(support.to_vec(), DVector::from_vec(values), &self.partition)
    }
}

/// Log density of one Kotz block of size `g` at `beta_j`:
/// `g log(lambda/sqrt(pi)) + log Gamma(g/2) - log 2 - log Gamma(g)
///  - lambda ||beta_j||_2`.
pub fn log_kotz_group(beta_j: &DVector<f64>, g: usize, lambda: f64) -> f64 {
    let gf = g as f64;
    gf * (lambda.ln() - 0.5 * std::f64::consts::PI.ln()) + ln_gamma(gf / 2.0)
        - std::f64::consts::LN_2
        - ln_gamma(gf)
        - lambda * beta_j.norm()
}

/// One draw of a single block: spherically uniform direction, gamma radius.
pub fn sample_kotz_block<R: Rng + ?Sized>(g: usize, lambda: f64, rng: &mut R) -> DVector<f64> {
    let radius_law = Gamma::new(g as f64, 1.0 / lambda).expect("valid gamma parameters");
    let r: f64 = radius_law.sample(rng);
    if g == 1 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return DVector::from_vec(vec![sign * r]);
    }
    loop {
        let dir: DVector<f64> = DVector::from_fn(g, |_, _| StandardNormal.sample(rng));
        let norm = dir.norm();
        if norm > 1e-12 {
            return dir * (r / norm);
        }
    }
}
