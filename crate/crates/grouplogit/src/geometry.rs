//! Compatibility geometry of a grouped design under a declared truth.
//!
//! The quantities here measure how well the `W`-weighted prediction norm
//! controls coefficient norms over sparse or cone-restricted directions:
//!
//! - `phi(S)`: infimum of `||W^{1/2} X b||_2 sqrt(s) / (||X||_* ||b||_{2,1})`
//!   over the cone `||b_{S^c}||_{2,1} <= c ||b_S||_{2,1}` (default `c = 7`);
//! - `phi_mod(S)`: the same ratio with `||b_S||_{2,1}` in the denominator;
//! - `psi1(s)`: the uniform compatibility number over effective group
//!   dimensions up to `s`;
//! - `psi2(s)`: the smallest scaled singular value over the same range.
//!
//! The ratio objectives are non-convex, so `phi`, `phi_mod`, and the inner
//! problem of `psi1` are estimated by multi-start random cone sampling
//! followed by projected-gradient refinement with a backtracking line
//! search. Every reported value is an upper bound of the true infimum and
//! comes with the achieving coefficient vector as a certificate, so the
//! number can be reproduced by an independent re-evaluation. Candidate
//! pools are shared between paired quantities, which makes the orderings
//! `phi <= phi_mod <= 8 phi` and `psi2 <= psi1` hold for the estimates
//! exactly, not just for the underlying infima.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::design::{l21_norm_unchecked, GroupedDesign};
use crate::error::{Error, Result};
use crate::model::TrueModel;
use crate::prior::log_dim_weight;
use crate::util::derive_seed;

/// Budgets and constants for the geometry searches. Deterministic given
/// `seed`, independent of worker count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Cone constant in the definition of `phi` (the usual choice is 7).
    pub cone_constant: f64,
    /// Random cone samples for `phi`/`phi_mod`.
    pub samples: usize,
    /// Projected-gradient refinement iterations.
    pub polish_steps: usize,
    /// Initial step of the backtracking line search.
    pub initial_step: f64,
    /// Enumerate supports exhaustively when their count stays below this.
    pub enumeration_cap: usize,
    /// Random supports drawn above the cap.
    pub random_supports: usize,
    /// Random starts for the per-support inner problem of `psi1`.
    pub inner_samples: usize,
    /// Refinement iterations for the inner problem.
    pub inner_polish_steps: usize,
    /// Greedy swap passes over the incumbent support above the cap.
    pub greedy_passes: usize,
    pub seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            cone_constant: 7.0,
            samples: 100_000,
            polish_steps: 500,
            initial_step: 1e-2,
            enumeration_cap: 50_000,
            random_supports: 2_000,
            inner_samples: 2_000,
            inner_polish_steps: 300,
            greedy_passes: 4,
            seed: 1,
        }
    }
}

impl GeometryConfig {
    /// Reduced budgets for repeated use inside experiments.
    pub fn light(seed: u64) -> Self {
        Self {
            samples: 2_000,
            polish_steps: 200,
            random_supports: 120,
            inner_samples: 200,
            inner_polish_steps: 80,
            greedy_passes: 2,
            seed,
            ..Self::default()
        }
    }
}

/// `||W^{1/2} X beta||_2`, evaluated block-wise without forming `W^{1/2}`.
fn weighted_prediction_norm(beta: &DVector<f64>, design: &GroupedDesign, model: &TrueModel) -> f64 {
    let v = design.matrix() * beta;
    model.quadratic_form(&v).max(0.0).sqrt()
}

/// Objective of `phi`: `||W^{1/2} X b|| sqrt(s) / (||X||_* ||b||_{2,1})`.
pub fn evaluate_phi_objective(
    beta: &DVector<f64>,
    s: usize,
    design: &GroupedDesign,
    model: &TrueModel,
) -> f64 {
    let den = l21_norm_unchecked(beta.as_slice(), design.partition());
    weighted_prediction_norm(beta, design, model) * (s as f64).sqrt()
        / (design.x_star_norm() * den)
}

/// Objective of `phi_mod`: denominator restricted to the `S` blocks.
pub fn evaluate_phi_mod_objective(
    beta: &DVector<f64>,
    support: &[usize],
    design: &GroupedDesign,
    model: &TrueModel,
) -> f64 {
    let part = design.partition();
    let den: f64 = support
        .iter()
        .map(|&j| part.group(j).iter().map(|&c| beta[c] * beta[c]).sum::<f64>().sqrt())
        .sum();
    weighted_prediction_norm(beta, design, model) * (support.len() as f64).sqrt()
        / (design.x_star_norm() * den)
}

/// Objective of `psi1`: `||W^{1/2} X b|| sqrt(s_b) / (||X||_* ||b||_{2,1})`
/// with `s_b` the number of nonzero blocks of `beta`.
pub fn evaluate_psi1_objective(
    beta: &DVector<f64>,
    design: &GroupedDesign,
    model: &TrueModel,
) -> f64 {
    let part = design.partition();
    let s_beta = (0..part.group_count())
        .filter(|&j| part.group(j).iter().any(|&c| beta[c] != 0.0))
        .count();
    let den = l21_norm_unchecked(beta.as_slice(), part);
    weighted_prediction_norm(beta, design, model) * (s_beta as f64).sqrt()
        / (design.x_star_norm() * den)
}

/// Objective of `psi2`: `||W^{1/2} X b|| / (||X||_* ||b||_2)`.
pub fn evaluate_psi2_objective(
    beta: &DVector<f64>,
    design: &GroupedDesign,
    model: &TrueModel,
) -> f64 {
    weighted_prediction_norm(beta, design, model) / (design.x_star_norm() * beta.norm())
}

struct ConeProblem<'a> {
    design: &'a GroupedDesign,
    model: &'a TrueModel,
    support: &'a [usize],
    in_support: Vec<bool>,
    cone_constant: f64,
}

impl<'a> ConeProblem<'a> {
    fn new(
        support: &'a [usize],
        design: &'a GroupedDesign,
        model: &'a TrueModel,
        cone_constant: f64,
    ) -> Self {
        let mut in_support = vec![false; design.partition().group_count()];
        for &j in support {
            in_support[j] = true;
        }
        Self { design, model, support, in_support, cone_constant }
    }

    fn l21_split(&self, beta: &DVector<f64>) -> (f64, f64) {
        let part = self.design.partition();
        let mut on = 0.0;
        let mut off = 0.0;
        for j in 0..part.group_count() {
            let norm =
                part.group(j).iter().map(|&c| beta[c] * beta[c]).sum::<f64>().sqrt();
            if self.in_support[j] {
                on += norm;
            } else {
                off += norm;
            }
        }
        (on, off)
    }

    /// Scales the off-support blocks back to the cone boundary when the
    /// constraint is violated. Returns false when `beta_S` vanished, which
    /// makes the point infeasible.
    fn project(&self, beta: &mut DVector<f64>) -> bool {
        let (on, off) = self.l21_split(beta);
        if on <= 0.0 {
            return false;
        }
        let bound = self.cone_constant * on;
        if off > bound {
            let scale = bound / off;
            let part = self.design.partition();
            for j in 0..part.group_count() {
                if !self.in_support[j] {
                    for &c in part.group(j) {
                        beta[c] *= scale;
                    }
                }
            }
        }
        true
    }

    /// Draws a feasible point: Gaussian support blocks, Gaussian
    /// off-support direction scaled to a uniform fraction of the cone
    /// bound.
    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let part = self.design.partition();
        let d = part.dim();
        let mut beta = DVector::zeros(d);
        for &j in self.support {
            for &c in part.group(j) {
                beta[c] = StandardNormal.sample(rng);
            }
        }
        let (on, _) = self.l21_split(&beta);
        if on <= 0.0 {
            for &c in part.group(self.support[0]) {
                beta[c] = 1.0;
            }
        }
        let t: f64 = rng.random();
        let mut off_dir = DVector::zeros(d);
        for j in 0..part.group_count() {
            if !self.in_support[j] {
                for &c in part.group(j) {
                    off_dir[c] = StandardNormal.sample(rng);
                }
            }
        }
        let (_, off_norm) = self.l21_split(&off_dir);
        if off_norm > 0.0 {
            let (on_now, _) = self.l21_split(&beta);
            let target = self.cone_constant * on_now * t;
            let scale = target / off_norm;
            for j in 0..part.group_count() {
                if !self.in_support[j] {
                    for &c in part.group(j) {
                        beta[c] = off_dir[c] * scale;
                    }
                }
            }
        }
        beta
    }

    /// Deterministic starting points that are exact optimizers on highly
    /// symmetric instances and good descent seeds elsewhere.
    fn structured_starts(&self) -> Vec<DVector<f64>> {
        let part = self.design.partition();
        let d = part.dim();
        let mut starts = Vec::new();

        // Equal-magnitude support blocks, empty complement.
        let mut base = DVector::zeros(d);
        for &j in self.support {
            let g = part.size(j) as f64;
            for &c in part.group(j) {
                base[c] = 1.0 / g.sqrt();
            }
        }
        starts.push(base.clone());

        // Same support with the complement spread equally on the cone
        // boundary.
        let s_norm: f64 = self.support.len() as f64; // each block has norm 1
        let off_groups: Vec<usize> =
            (0..part.group_count()).filter(|&j| !self.in_support[j]).collect();
        if !off_groups.is_empty() {
            let per_group = self.cone_constant * s_norm / off_groups.len() as f64;
            let mut spread = base.clone();
            for &j in &off_groups {
                let g = part.size(j) as f64;
                for &c in part.group(j) {
                    spread[c] = per_group / g.sqrt();
                }
            }
            starts.push(spread);

            // Complement blocks aimed against the support's image, so the
            // weighted prediction partially cancels.
            let v = self.design.matrix() * &base;
            let grad = self.design.matrix().transpose() * self.model.apply_w(&v);
            let mut cancel = base.clone();
            for &j in &off_groups {
                let gnorm =
                    part.group(j).iter().map(|&c| grad[c] * grad[c]).sum::<f64>().sqrt();
                if gnorm > 0.0 {
                    for &c in part.group(j) {
                        cancel[c] = -grad[c] / gnorm * per_group;
                    }
                }
            }
            starts.push(cancel);
        }

        // Smallest eigenvector of the support Gram, complement empty.
        let cols = part.columns_of(self.support);
        let gram = w_weighted_gram(self.design, self.model, &cols);
        let eig = gram.symmetric_eigen();
        let mut min_idx = 0;
        for k in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[k] < eig.eigenvalues[min_idx] {
                min_idx = k;
            }
        }
        let vec = eig.eigenvectors.column(min_idx);
        let mut eigstart = DVector::zeros(d);
        for (local, &c) in cols.iter().enumerate() {
            eigstart[c] = vec[local];
        }
        starts.push(eigstart);

        starts.retain(|b| {
            let (on, _) = self.l21_split(b);
            on > 0.0
        });
        starts
    }
}

/// `X_{S}^T W X_{S}` over the selected flat columns.
pub(crate) fn w_weighted_gram(
    design: &GroupedDesign,
    model: &TrueModel,
    cols: &[usize],
) -> DMatrix<f64> {
    let sub = design.matrix().select_columns(cols);
    let mm = design.m() - 1;
    let mut gram = DMatrix::zeros(cols.len(), cols.len());
    for i in 0..design.n() {
        let rows = sub.rows(i * mm, mm);
        gram += rows.transpose() * model.w_block(i) * rows;
    }
    gram
}

/// Gradient of the ratio `f = wq * scale / l21(beta)` at `beta`.
fn ratio_gradient(
    beta: &DVector<f64>,
    scale: f64,
    design: &GroupedDesign,
    model: &TrueModel,
    support_only_den: Option<&[bool]>,
) -> DVector<f64> {
    let part = design.partition();
    let v = design.matrix() * beta;
    let wq = model.quadratic_form(&v).max(1e-300).sqrt();
    let grad_num = design.matrix().transpose() * model.apply_w(&v) / wq;
    let mut den = 0.0;
    let mut grad_den = DVector::zeros(beta.len());
    for j in 0..part.group_count() {
        if let Some(mask) = support_only_den {
            if !mask[j] {
                continue;
            }
        }
        let norm = part.group(j).iter().map(|&c| beta[c] * beta[c]).sum::<f64>().sqrt();
        den += norm;
        if norm > 0.0 {
            for &c in part.group(j) {
                grad_den[c] = beta[c] / norm;
            }
        }
    }
    let num = wq * scale;
    (grad_num * scale * den - grad_den * num) / (den * den)
}

/// Projected-gradient refinement with backtracking line search. `eval`
/// must return the exact reported objective; `project` restores
/// feasibility and returns false for irrecoverable points.
fn polish(
    start: &DVector<f64>,
    eval: &dyn Fn(&DVector<f64>) -> f64,
    gradient: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    project: &dyn Fn(&mut DVector<f64>) -> bool,
    normalize: &dyn Fn(&mut DVector<f64>),
    steps: usize,
    initial_step: f64,
) -> (f64, DVector<f64>) {
    let mut beta = start.clone();
    normalize(&mut beta);
    let mut best_val = eval(&beta);
    let mut best = beta.clone();
    let mut step = initial_step;
    let mut stale = 0usize;
    for _ in 0..steps {
        let g = gradient(&beta);
        let gnorm = g.norm();
        if !gnorm.is_finite() || gnorm == 0.0 {
            break;
        }
        let mut improved = false;
        let mut t = step;
        for _ in 0..30 {
            let mut cand = &beta - &g * t;
            if project(&mut cand) {
                normalize(&mut cand);
                let val = eval(&cand);
                if val.is_finite() && val < best_val - 1e-16 * best_val.abs() {
                    best_val = val;
                    best = cand.clone();
                    beta = cand;
                    step = (t * 1.5).min(1.0);
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            stale += 1;
            step = (step * 0.5).max(1e-18);
            if stale > 40 {
                break;
            }
        } else {
            stale = 0;
        }
    }
    (best_val, best)
}

/// Estimate of `phi(S)` together with its certificate.
pub fn phi(
    support: &[usize],
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
) -> Result<(f64, DVector<f64>)> {
    let (phi_pair, _) = phi_and_phi_mod(support, design, model, cfg)?;
    Ok(phi_pair)
}

/// Estimate of `phi_mod(S)` together with its certificate.
pub fn phi_mod(
    support: &[usize],
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
) -> Result<(f64, DVector<f64>)> {
    let (_, pair) = phi_and_phi_mod(support, design, model, cfg)?;
    Ok(pair)
}

/// Joint estimation of `phi(S)` and `phi_mod(S)` over a shared candidate
/// pool. Cross-evaluating each certificate under the other objective keeps
/// the estimates ordered the way the true infima are.
#[allow(clippy::type_complexity)]
pub fn phi_and_phi_mod(
    support: &[usize],
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
) -> Result<((f64, DVector<f64>), (f64, DVector<f64>))> {
    if support.is_empty() {
        return Err(Error::InvalidInput("phi requires a non-empty support".into()));
    }
    let p = design.partition().group_count();
    if support.iter().any(|&j| j >= p) || support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("support must be strictly increasing and in range".into()));
    }
    let problem = ConeProblem::new(support, design, model, cfg.cone_constant);
    let s = support.len();
    let eval_phi = |b: &DVector<f64>| evaluate_phi_objective(b, s, design, model);
    let eval_mod = |b: &DVector<f64>| evaluate_phi_mod_objective(b, support, design, model);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x9));
    let mut candidates = problem.structured_starts();
    candidates.reserve(cfg.samples);
    for _ in 0..cfg.samples {
        candidates.push(problem.sample(&mut rng));
    }
    let scored: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|b| (eval_phi(b), eval_mod(b)))
        .collect();

    let top_k = 8.min(candidates.len());
    let mut by_phi: Vec<usize> = (0..candidates.len()).collect();
    by_phi.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).unwrap());
    let mut by_mod: Vec<usize> = (0..candidates.len()).collect();
    by_mod.sort_by(|&a, &b| scored[a].1.partial_cmp(&scored[b].1).unwrap());

    let scale = (s as f64).sqrt() / design.x_star_norm();
    let project = |b: &mut DVector<f64>| problem.project(b);
    let normalize_l21 = |b: &mut DVector<f64>| {
        let n = l21_norm_unchecked(b.as_slice(), design.partition());
        if n > 0.0 {
            *b /= n;
        }
    };
    let grad_full = |b: &DVector<f64>| ratio_gradient(b, scale, design, model, None);
    let mask: Vec<bool> = problem.in_support.clone();
    let grad_mod = move |b: &DVector<f64>| ratio_gradient(b, scale, design, model, Some(&mask));

    let refine = |idx: &[usize], eval: &dyn Fn(&DVector<f64>) -> f64, grad: &dyn Fn(&DVector<f64>) -> DVector<f64>| {
        let mut best_val = f64::INFINITY;
        let mut best_beta = candidates[idx[0]].clone();
        for &i in idx {
            let (v, b) = polish(
                &candidates[i],
                eval,
                grad,
                &project,
                &normalize_l21,
                cfg.polish_steps,
                cfg.initial_step,
            );
            if v < best_val {
                best_val = v;
                best_beta = b;
            }
        }
        (best_val, best_beta)
    };

    let (mut phi_val, mut phi_cert) = refine(&by_phi[..top_k], &eval_phi, &grad_full);
    let (mut mod_val, mut mod_cert) = refine(&by_mod[..top_k], &eval_mod, &grad_mod);

    // Cross-evaluation; keeps phi <= phi_mod <= 8 phi on the estimates.
    let phi_at_mod = eval_phi(&mod_cert);
    if phi_at_mod < phi_val {
        phi_val = phi_at_mod;
        phi_cert = mod_cert.clone();
    }
    let mod_at_phi = eval_mod(&phi_cert);
    if mod_at_phi < mod_val {
        mod_val = mod_at_phi;
        mod_cert = phi_cert.clone();
    }

    if !(phi_val.is_finite() && mod_val.is_finite()) {
        return Err(Error::Degenerate("compatibility search produced non-finite values".into()));
    }
    Ok(((phi_val, phi_cert), (mod_val, mod_cert)))
}

fn count_supports_up_to(p: usize, s: usize) -> f64 {
    let mut total = 0.0;
    let mut choose = 1.0; // C(p, 0)
    for k in 1..=s.min(p) {
        choose *= (p - k + 1) as f64 / k as f64;
        total += choose;
        if !total.is_finite() {
            return f64::INFINITY;
        }
    }
    total
}

fn enumerate_supports(p: usize, s_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, p: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !current.is_empty() {
            out.push(current.clone());
        }
        if left == 0 {
            return;
        }
        for j in start..p {
            current.push(j);
            rec(j + 1, p, left - 1, current, out);
            current.pop();
        }
    }
    rec(0, p, s_max, &mut current, &mut out);
    out
}

fn random_support(p: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    while chosen.len() < size {
        let j = rng.random_range(0..p);
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Smallest singular value of `W^{1/2} X_{S'}` scaled by `1/||X||_*`,
/// with its certificate (the densified minimal right-singular vector).
fn psi2_on_support(
    support: &[usize],
    design: &GroupedDesign,
    model: &TrueModel,
) -> (f64, DVector<f64>) {
    let cols = design.partition().columns_of(support);
    let gram = w_weighted_gram(design, model, &cols);
    let eig = gram.symmetric_eigen();
    let mut min_idx = 0;
    for k in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[k] < eig.eigenvalues[min_idx] {
            min_idx = k;
        }
    }
    let vec = eig.eigenvectors.column(min_idx);
    let mut beta = DVector::zeros(design.dim());
    for (local, &c) in cols.iter().enumerate() {
        beta[c] = vec[local];
    }
    let value = evaluate_psi2_objective(&beta, design, model);
    (value, beta)
}

/// Inner minimization of the `psi1` ratio over coefficients supported on
/// `support`.
fn psi1_on_support(
    support: &[usize],
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
    seed: u64,
) -> (f64, DVector<f64>) {
    let part = design.partition();
    let cols = part.columns_of(support);
    let d = part.dim();
    let mut in_support = vec![false; part.group_count()];
    for &j in support {
        in_support[j] = true;
    }
    let eval = |b: &DVector<f64>| evaluate_psi1_objective(b, design, model);
    let scale = (support.len() as f64).sqrt() / design.x_star_norm();
    let cols_clone = cols.clone();
    let gradient = move |b: &DVector<f64>| {
        let mut g = ratio_gradient(b, scale, design, model, None);
        // Only support coordinates move.
        let mut masked = DVector::zeros(b.len());
        for &c in &cols_clone {
            masked[c] = g[c];
        }
        std::mem::swap(&mut g, &mut masked);
        g
    };
    let project = |b: &mut DVector<f64>| b.iter().any(|&v| v != 0.0);
    let normalize = |b: &mut DVector<f64>| {
        let n = l21_norm_unchecked(b.as_slice(), design.partition());
        if n > 0.0 {
            *b /= n;
        }
    };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    // Equal-magnitude blocks (exact on orthonormal designs).
    let mut eq = DVector::zeros(d);
    for &j in support {
        let g = part.size(j) as f64;
        for &c in part.group(j) {
            eq[c] = 1.0 / g.sqrt();
        }
    }
    starts.push(eq);
    // The psi2 minimizer restricted to this support.
    starts.push(psi2_on_support(support, design, model).1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.inner_samples {
        let mut b = DVector::zeros(d);
        for &c in &cols {
            b[c] = StandardNormal.sample(&mut rng);
        }
        starts.push(b);
    }

    let scored: Vec<f64> = starts.par_iter().map(|b| eval(b)).collect();
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| scored[a].partial_cmp(&scored[b]).unwrap());
    let top = 4.min(order.len());
    let mut best_val = f64::INFINITY;
    let mut best_beta = starts[order[0]].clone();
    for &i in &order[..top] {
        let (v, b) = polish(
            &starts[i],
            &eval,
            &gradient,
            &project,
            &normalize,
            cfg.inner_polish_steps,
            cfg.initial_step,
        );
        if v < best_val {
            best_val = v;
            best_beta = b;
        }
    }
    (best_val, best_beta)
}

/// Joint estimate of `psi1(s)` and `psi2(s)` with certificates.
///
/// All supports of size up to `s` are enumerated exactly when their count
/// stays below the enumeration cap; otherwise random supports of size `s`
/// plus greedy forward swaps explore the space. `psi2` values per support
/// are exact singular values, so the enumerated regime is exact for
/// `psi2`.
#[allow(clippy::type_complexity)]
pub fn psi_pair(
    s: usize,
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
) -> Result<((f64, DVector<f64>), (f64, DVector<f64>))> {
    let p = design.partition().group_count();
    if s < 1 || s > p {
        return Err(Error::InvalidInput(format!("sparsity level s={s} out of 1..={p}")));
    }
    let supports: Vec<Vec<usize>> = if count_supports_up_to(p, s) <= cfg.enumeration_cap as f64 {
        enumerate_supports(p, s)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x51));
        let mut sup: Vec<Vec<usize>> = (0..cfg.random_supports)
            .map(|_| random_support(p, s, &mut rng))
            .collect();
        sup.sort();
        sup.dedup();
        sup
    };

    // psi2 sweep (exact per support).
    let psi2_scored: Vec<f64> = supports
        .par_iter()
        .map(|sup| psi2_on_support(sup, design, model).0)
        .collect();
    let mut best2_idx = 0;
    for k in 0..supports.len() {
        if psi2_scored[k] < psi2_scored[best2_idx] {
            best2_idx = k;
        }
    }
    let mut best2_support = supports[best2_idx].clone();

    // Greedy swaps refine the incumbent support in the randomized regime.
    // Candidate replacements per position are capped so large p stays
    // tractable.
    if count_supports_up_to(p, s) > cfg.enumeration_cap as f64 {
        let mut best_val = psi2_scored[best2_idx];
        let mut greedy_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x6EED));
        let fan_out = 32.min(p);
        for _ in 0..cfg.greedy_passes {
            let mut improved = false;
            'outer: for pos in 0..best2_support.len() {
                for _ in 0..fan_out {
                    let j = greedy_rng.random_range(0..p);
                    if best2_support.contains(&j) {
                        continue;
                    }
                    let mut cand = best2_support.clone();
                    cand[pos] = j;
                    cand.sort_unstable();
                    let v = psi2_on_support(&cand, design, model).0;
                    if v < best_val {
                        best_val = v;
                        best2_support = cand;
                        improved = true;
                        continue 'outer;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    let (mut psi2_val, mut psi2_cert) = psi2_on_support(&best2_support, design, model);

    // psi1 sweep: inner optimization per support, refined on the most
    // promising supports (ranked by their psi2 value, which lower-bounds
    // the inner ratio up to the sqrt factor).
    let mut order: Vec<usize> = (0..supports.len()).collect();
    order.sort_by(|&a, &b| psi2_scored[a].partial_cmp(&psi2_scored[b]).unwrap());
    let budget = supports.len().min(64.max(cfg.random_supports / 4));
    let psi1_results: Vec<(f64, DVector<f64>)> = order[..budget]
        .par_iter()
        .map(|&k| {
            psi1_on_support(
                &supports[k],
                design,
                model,
                cfg,
                derive_seed(cfg.seed, 0x100 + k as u64),
            )
        })
        .collect();
    let mut psi1_val = f64::INFINITY;
    let mut psi1_cert = DVector::zeros(design.dim());
    for (v, b) in psi1_results {
        if v < psi1_val {
            psi1_val = v;
            psi1_cert = b;
        }
    }
    // Also try the empirically hardest psi2 support if ranking cut it.
    let (v_extra, b_extra) = psi1_on_support(
        &best2_support,
        design,
        model,
        cfg,
        derive_seed(cfg.seed, 0x7777),
    );
    if v_extra < psi1_val {
        psi1_val = v_extra;
        psi1_cert = b_extra;
    }

    // Cross-evaluation keeps psi2 <= psi1 structurally.
    let psi2_at_psi1 = evaluate_psi2_objective(&psi1_cert, design, model);
    if psi2_at_psi1 < psi2_val {
        psi2_val = psi2_at_psi1;
        psi2_cert = psi1_cert.clone();
    }

    Ok(((psi1_val, psi1_cert), (psi2_val, psi2_cert)))
}

/// `psi1(s)` with certificate.
pub fn psi1(
    s: usize,
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
) -> Result<(f64, DVector<f64>)> {
    Ok(psi_pair(s, design, model, cfg)?.0)
}

/// `psi2(s)` with certificate.
pub fn psi2(
    s: usize,
    design: &GroupedDesign,
    model: &TrueModel,
    cfg: &GeometryConfig,
) -> Result<(f64, DVector<f64>)> {
    Ok(psi_pair(s, design, model, cfg)?.1)
}

/// The posterior group-dimension threshold
/// `xi_0 = s_0 + (4 + 100 / phi^2(S_0)) s_0 / A_4`.
pub fn xi0(s0: usize, phi_s0: f64, a4: f64) -> Result<f64> {
    if s0 == 0 {
        return Err(Error::InvalidInput("xi0 requires s0 >= 1".into()));
    }
    if !(phi_s0 > 0.0) || !(a4 > 0.0) {
        return Err(Error::InvalidInput("xi0 requires positive phi and A4".into()));
    }
    let s0f = s0 as f64;
    Ok(s0f + (4.0 + 100.0 / (phi_s0 * phi_s0)) * s0f / a4)
}

/// The effective-dimension threshold
/// `s_0 + (M_2 / A_4)(1 + 33 / phi^2(S_0)) s_0`, valid for `M_2 > 3`.
pub fn theorem1_threshold(s0: usize, phi_s0: f64, a4: f64, m2: f64) -> Result<f64> {
    if m2 <= 3.0 {
        return Err(Error::InvalidInput(format!("M2={m2} must exceed 3")));
    }
    if s0 == 0 || !(phi_s0 > 0.0) || !(a4 > 0.0) {
        return Err(Error::InvalidInput("threshold requires s0 >= 1, phi > 0, A4 > 0".into()));
    }
    let s0f = s0 as f64;
    Ok(s0f + (m2 / a4) * (1.0 + 33.0 / (phi_s0 * phi_s0)) * s0f)
}

/// The three contraction radii, assembled from compatibility estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRates {
    pub predictor: f64,
    pub l2: f64,
    pub l21: f64,
}

/// Radii of the three posterior contraction statements:
/// prediction `sqrt(s0 L) / (psi1 phi)`, then `l2` divides further by
/// `psi2 ||X||_*`, and `l21 = s0 sqrt(L) / (psi1^2 phi^2 ||X||_*)`, with
/// `L = log p v gbar log n`.
pub fn contraction_rates(
    s0: usize,
    l_dim: f64,
    x_star: f64,
    phi_s0: f64,
    psi1_val: f64,
    psi2_val: f64,
) -> Result<ContractionRates> {
    if !(phi_s0 > 0.0 && psi1_val > 0.0 && psi2_val > 0.0 && x_star > 0.0) {
        return Err(Error::Degenerate(
            "contraction rates need strictly positive compatibility estimates".into(),
        ));
    }
    let s0f = s0 as f64;
    let predictor = (s0f * l_dim).sqrt() / (psi1_val * phi_s0);
    let l2 = predictor / (psi2_val * x_star);
    let l21 = s0f * l_dim.sqrt() / (psi1_val * psi1_val * phi_s0 * phi_s0 * x_star);
    Ok(ContractionRates { predictor, l2, l21 })
}

/// Regime ratios certifying membership in the boundedness classes of the
/// dimension and contraction statements: small values mean the instance
/// sits comfortably inside the regime for the corresponding constant.
pub fn regime_ratios(
    s0: usize,
    l_dim: f64,
    max_row_block: f64,
    x_star: f64,
    phi_s0: f64,
    psi1_val: f64,
) -> Result<(f64, f64)> {
    if s0 == 0 {
        return Err(Error::InvalidInput("regime ratios require a nonzero truth".into()));
    }
    if !(phi_s0 > 0.0 && psi1_val > 0.0 && x_star > 0.0) {
        return Err(Error::Degenerate("regime ratios need positive estimates".into()));
    }
    let s0f = s0 as f64;
    let b1 = s0f * l_dim.sqrt() * max_row_block / (phi_s0 * phi_s0 * x_star);
    let b2 = b1 / (psi1_val * psi1_val);
    Ok((b1, b2))
}

/// A reported compatibility quantity with the coefficient vector that
/// achieves it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub value: f64,
    pub beta: Vec<f64>,
}

/// Full diagnostic report for one instance: norms, compatibility numbers
/// at the relevant sparsity levels, the dimension threshold, regime
/// ratios, contraction radii, and certificates for every estimated
/// infimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub gbar: usize,
    pub s0: usize,
    pub x_star: f64,
    pub max_row_block: f64,
    pub l_dim: f64,
    pub phi_s0: f64,
    pub phi_mod_s0: f64,
    pub xi0: f64,
    /// Sparsity level `min(p, floor(xi0 + s0))` at which the psi numbers
    /// enter the rates.
    pub s_eval: usize,
    pub psi1: BTreeMap<usize, f64>,
    pub psi2: BTreeMap<usize, f64>,
    pub rate_predictor: f64,
    pub rate_l2: f64,
    pub rate_l21: f64,
    pub regime_ratio_b1: f64,
    pub regime_ratio_b2: f64,
    pub certificates: BTreeMap<String, Certificate>,
}

impl CompatReport {
    /// Computes the full report for a design under a declared truth.
    /// `a4` is the prior exponent entering `xi0`.
    pub fn compute(
        design: &GroupedDesign,
        model: &TrueModel,
        a4: f64,
        cfg: &GeometryConfig,
    ) -> Result<Self> {
        let support = model.support().to_vec();
        if support.is_empty() {
            return Err(Error::InvalidInput(
                "diagnostics require a truth with at least one active group".into(),
            ));
        }
        let p = design.partition().group_count();
        let s0 = support.len();
        let l_dim = log_dim_weight(p, design.n(), design.partition().max_group_size());
        let ((phi_val, phi_cert), (mod_val, mod_cert)) =
            phi_and_phi_mod(&support, design, model, cfg)?;
        let xi = xi0(s0, phi_val, a4)?;
        let s_eval = (((xi + s0 as f64).floor()) as usize).clamp(1, p);
        let ((psi1_val, psi1_cert), (psi2_val, psi2_cert)) =
            psi_pair(s_eval, design, model, cfg)?;
        let rates = contraction_rates(s0, l_dim, design.x_star_norm(), phi_val, psi1_val, psi2_val)?;
        let (b1, b2) = regime_ratios(
            s0,
            l_dim,
            design.max_row_block_norm(),
            design.x_star_norm(),
            phi_val,
            psi1_val,
        )?;
        let mut psi1_map = BTreeMap::new();
        let mut psi2_map = BTreeMap::new();
        psi1_map.insert(s_eval, psi1_val);
        psi2_map.insert(s_eval, psi2_val);
        if s0 != s_eval && s0 >= 1 {
            let ((p1, _), (p2, _)) = psi_pair(s0, design, model, cfg)?;
            psi1_map.insert(s0, p1);
            psi2_map.insert(s0, p2);
        }
        let mut certificates = BTreeMap::new();
        certificates.insert(
            "phi".to_string(),
            Certificate { value: phi_val, beta: phi_cert.as_slice().to_vec() },
        );
        certificates.insert(
            "phi_mod".to_string(),
            Certificate { value: mod_val, beta: mod_cert.as_slice().to_vec() },
        );
        certificates.insert(
            "psi1".to_string(),
            Certificate { value: psi1_val, beta: psi1_cert.as_slice().to_vec() },
        );
        certificates.insert(
            "psi2".to_string(),
            Certificate { value: psi2_val, beta: psi2_cert.as_slice().to_vec() },
        );
        Ok(Self {
            n: design.n(),
            m: design.m(),
            p,
            gbar: design.partition().max_group_size(),
            s0,
            x_star: design.x_star_norm(),
            max_row_block: design.max_row_block_norm(),
            l_dim,
            phi_s0: phi_val,
            phi_mod_s0: mod_val,
            xi0: xi,
            s_eval,
            psi1: psi1_map,
            psi2: psi2_map,
            rate_predictor: rates.predictor,
            rate_l2: rates.l2,
            rate_l21: rates.l21,
            regime_ratio_b1: b1,
            regime_ratio_b2: b2,
            certificates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{random_subgaussian_design, EntryDistribution, GroupPartition};
    use approx::assert_relative_eq;

    /// Identity design: X = I_p, singleton groups, binary response, zero
    /// truth, so W = I/4 and every compatibility number is analytic.
    fn identity_instance(p: usize) -> (GroupedDesign, TrueModel) {
        let design = GroupedDesign::new(
            p,
            2,
            DMatrix::identity(p, p),
            GroupPartition::singletons(p),
        )
        .unwrap();
        let model = TrueModel::new(DVector::zeros(p), &design).unwrap();
        (design, model)
    }

    fn random_instance(
        n: usize,
        m: usize,
        sizes: &[usize],
        seed: u64,
        signal: f64,
    ) -> (GroupedDesign, TrueModel) {
        let partition = GroupPartition::contiguous(sizes).unwrap();
        let design =
            random_subgaussian_design(n, m, partition, EntryDistribution::Gaussian, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let beta0 = DVector::from_fn(design.dim(), |_, _| {
            (rng.random::<f64>() * 2.0 - 1.0) * signal
        });
        let model = TrueModel::new(beta0, &design).unwrap();
        (design, model)
    }

    fn quick_cfg(seed: u64) -> GeometryConfig {
        GeometryConfig {
            samples: 4_000,
            polish_steps: 300,
            inner_samples: 400,
            inner_polish_steps: 150,
            random_supports: 200,
            seed,
            ..GeometryConfig::default()
        }
    }

    #[test]
    fn identity_psi_values_are_half() {
        let (design, model) = identity_instance(8);
        let cfg = quick_cfg(3);
        for s in [1usize, 2, 3] {
            let ((v1, c1), (v2, c2)) = psi_pair(s, &design, &model, &cfg).unwrap();
            assert!((v1 - 0.5).abs() < 1e-6, "psi1({s}) = {v1}");
            assert!((v2 - 0.5).abs() < 1e-6, "psi2({s}) = {v2}");
            // Certificate contract.
            assert_relative_eq!(
                evaluate_psi1_objective(&c1, &design, &model),
                v1,
                epsilon = 1e-10
            );
            assert_relative_eq!(
                evaluate_psi2_objective(&c2, &design, &model),
                v2,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn identity_phi_matches_analytic_optimum() {
        // With s = 1 and cone constant 7, the optimum spreads mass 7
        // equally over the p-1 complement coordinates:
        // phi = sqrt(1 + 49/(p-1)) / 16.
        let cfg = quick_cfg(5);
        let mut last = f64::INFINITY;
        for p in [8usize, 32, 128] {
            let (design, model) = identity_instance(p);
            let (val, cert) = phi(&[0], &design, &model, &cfg).unwrap();
            let analytic = (1.0 + 49.0 / (p as f64 - 1.0)).sqrt() / 16.0;
            assert!(val >= 1.0 / 16.0 - 1e-12, "phi fell below 1/16 at p={p}");
            assert!(
                (val - analytic).abs() < 1e-6,
                "p={p}: estimate {val} vs analytic {analytic}"
            );
            assert!(val <= last + 1e-12);
            last = val;
            assert_relative_eq!(
                evaluate_phi_objective(&cert, 1, &design, &model),
                val,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn identity_phi_mod_is_half() {
        // The phi_mod denominator ignores the complement, so the optimum
        // keeps the complement empty: phi_mod = 1/2.
        let (design, model) = identity_instance(16);
        let cfg = quick_cfg(6);
        let (val, _) = phi_mod(&[0], &design, &model, &cfg).unwrap();
        assert!((val - 0.5).abs() < 1e-6, "phi_mod = {val}");
    }

    #[test]
    fn phi_scaling_invariance_exact_for_power_of_two() {
        let (design, model) = random_instance(12, 3, &[2, 2, 1, 2], 9, 0.4);
        let cfg = quick_cfg(11);
        let (v, _) = phi_and_phi_mod(&[0, 2], &design, &model, &cfg).unwrap().0;
        let scaled = design.scaled(4.0).unwrap();
        let (v_scaled, _) = phi_and_phi_mod(&[0, 2], &scaled, &model, &cfg).unwrap().0;
        assert_relative_eq!(v, v_scaled, epsilon = 1e-10);
    }

    #[test]
    fn psi2_matches_brute_force_enumeration() {
        let (design, model) = random_instance(8, 2, &[1; 6], 21, 0.3);
        let cfg = quick_cfg(13);
        let (_, (val, _)) = psi_pair(2, &design, &model, &cfg).unwrap();
        // Independent oracle: all 21 supports of size <= 2, dense
        // W^{1/2} X_{S'} built explicitly, full SVD.
        let mm = design.m() - 1;
        let mut w_half = DMatrix::zeros(design.n() * mm, design.n() * mm);
        for i in 0..design.n() {
            let eig = model.w_block(i).clone().symmetric_eigen();
            let mut sqrt_block = DMatrix::zeros(mm, mm);
            for a in 0..mm {
                let root = eig.eigenvalues[a].max(0.0).sqrt();
                let col = eig.eigenvectors.column(a);
                sqrt_block += root * &col * col.transpose();
            }
            w_half.view_mut((i * mm, i * mm), (mm, mm)).copy_from(&sqrt_block);
        }
        let mut oracle = f64::INFINITY;
        let mut count = 0;
        for a in 0..6usize {
            count += 1;
            let sub = (&w_half * design.matrix()).select_columns(&[a]);
            let svd = sub.svd(false, false);
            let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            oracle = oracle.min(smin / design.x_star_norm());
            for b in a + 1..6usize {
                count += 1;
                let sub = (&w_half * design.matrix()).select_columns(&[a, b]);
                let svd = sub.svd(false, false);
                let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
                oracle = oracle.min(smin / design.x_star_norm());
            }
        }
        assert_eq!(count, 21);
        assert_relative_eq!(val, oracle, epsilon = 1e-9);
    }

    #[test]
    fn psi_monotone_nonincreasing_in_s() {
        let (design, model) = random_instance(10, 2, &[1; 7], 31, 0.5);
        let cfg = quick_cfg(17);
        let mut prev1 = f64::INFINITY;
        let mut prev2 = f64::INFINITY;
        for s in 1..=4usize {
            let ((v1, _), (v2, _)) = psi_pair(s, &design, &model, &cfg).unwrap();
            assert!(v1 <= prev1 + 1e-9, "psi1 increased at s={s}");
            assert!(v2 <= prev2 + 1e-9, "psi2 increased at s={s}");
            prev1 = v1;
            prev2 = v2;
        }
    }

    #[test]
    fn psi_ordering_and_unit_bound() {
        for seed in 0..6u64 {
            let (design, model) = random_instance(9, 3, &[2, 1, 2], seed, 0.6);
            let cfg = quick_cfg(seed);
            let ((v1, _), (v2, _)) = psi_pair(2, &design, &model, &cfg).unwrap();
            assert!(v2 <= v1 + 1e-12, "seed {seed}: psi2 {v2} > psi1 {v1}");
            assert!(v1 <= 1.0 + 1e-9, "seed {seed}: psi1 {v1} > 1");
        }
    }

    #[test]
    fn phi_sandwich_on_random_instances() {
        for seed in 0..6u64 {
            let (design, model) = random_instance(10, 2, &[2, 2, 2], seed + 50, 0.5);
            let cfg = quick_cfg(seed);
            let ((phi_v, _), (mod_v, _)) =
                phi_and_phi_mod(&[0, 1], &design, &model, &cfg).unwrap();
            assert!(phi_v <= mod_v + 1e-12, "seed {seed}: phi {phi_v} > phi_mod {mod_v}");
            assert!(mod_v <= 8.0 * phi_v + 1e-9, "seed {seed}: sandwich upper");
        }
    }

    #[test]
    fn phi_mod_close_to_pure_random_search_on_tiny_instance() {
        let (design, model) = random_instance(8, 2, &[1; 4], 71, 0.4);
        let cfg = GeometryConfig { samples: 20_000, seed: 7, ..quick_cfg(7) };
        let ((_, _), (mod_v, _)) = phi_and_phi_mod(&[1], &design, &model, &cfg).unwrap();
        // Independent cone-search oracle with a million samples.
        let problem = ConeProblem::new(&[1], &design, &model, 7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let mut oracle = f64::INFINITY;
        for _ in 0..1_000_000 {
            let b = problem.sample(&mut rng);
            let v = evaluate_phi_mod_objective(&b, &[1], &design, &model);
            if v < oracle {
                oracle = v;
            }
        }
        assert!(mod_v <= oracle + 1e-12, "estimator must not be worse than raw search");
        assert!(
            (oracle - mod_v) / mod_v < 0.05,
            "oracle {oracle} vs estimate {mod_v} differ by more than 5%"
        );
    }

    #[test]
    fn xi0_arithmetic_and_monotonicity() {
        assert_relative_eq!(xi0(1, 1.0, 104.0).unwrap(), 2.0, epsilon = 1e-12);
        let a = xi0(2, 0.5, 10.0).unwrap();
        let b = xi0(2, 0.5, 20.0).unwrap();
        assert!(b < a);
        for s0 in 1..5usize {
            assert!(xi0(s0, 0.7, 5.0).unwrap() >= s0 as f64);
        }
        assert!(xi0(0, 1.0, 1.0).is_err());
        assert!(xi0(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn threshold_arithmetic_and_hypothesis() {
        assert_relative_eq!(theorem1_threshold(2, 1.0, 34.0, 3.4).unwrap(), 8.8, epsilon = 1e-12);
        assert!(theorem1_threshold(2, 1.0, 34.0, 3.0).is_err());
        for s0 in 1..4usize {
            let t = theorem1_threshold(s0, 0.9, 10.0, 4.0).unwrap();
            assert!(t >= s0 as f64);
        }
        // Linear in s0.
        let t1 = theorem1_threshold(1, 0.8, 12.0, 5.0).unwrap();
        let t3 = theorem1_threshold(3, 0.8, 12.0, 5.0).unwrap();
        assert_relative_eq!(t3, 3.0 * t1, epsilon = 1e-12);
    }

    #[test]
    fn contraction_rates_substitution() {
        // All compatibility constants 1 and x_star = sqrt(n): the l2 rate
        // reduces to sqrt(s0 L / n).
        let n = 400.0f64;
        let l = 200f64.ln();
        let r = contraction_rates(3, l, n.sqrt(), 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(r.l2, (3.0 * l / n).sqrt(), epsilon = 1e-12);
        // l21/l2 grows like s0 term: ratio = s0 sqrt(L) / sqrt(s0 L) = sqrt(s0).
        assert_relative_eq!(r.l21 / r.l2, 3f64.sqrt(), epsilon = 1e-12);
        assert!(contraction_rates(3, l, n.sqrt(), 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn regime_ratio_ordering_and_scaling() {
        let (b1, b2) = regime_ratios(2, 5f64.ln(), 3.0, 20.0, 0.4, 0.8).unwrap();
        assert!(b2 >= b1); // psi1 <= 1
        let (b1_doubled, _) = regime_ratios(4, 5f64.ln(), 3.0, 20.0, 0.4, 0.8).unwrap();
        assert!(b1_doubled >= 2.0 * b1 - 1e-12);
    }

    #[test]
    fn compat_report_self_consistent() {
        let partition = GroupPartition::contiguous(&[2, 2, 2, 2]).unwrap();
        let design =
            random_subgaussian_design(20, 3, partition, EntryDistribution::Gaussian, 3).unwrap();
        let mut beta0 = DVector::zeros(8);
        beta0[0] = 0.8;
        beta0[1] = -0.5;
        let model = TrueModel::new(beta0, &design).unwrap();
        let report = CompatReport::compute(&design, &model, 50.0, &quick_cfg(19)).unwrap();
        // Recomputing the rates from the reported estimates reproduces the
        // emitted numbers exactly.
        let rates = contraction_rates(
            report.s0,
            report.l_dim,
            report.x_star,
            report.phi_s0,
            report.psi1[&report.s_eval],
            report.psi2[&report.s_eval],
        )
        .unwrap();
        assert_relative_eq!(rates.predictor, report.rate_predictor, epsilon = 1e-12);
        assert_relative_eq!(rates.l2, report.rate_l2, epsilon = 1e-12);
        assert_relative_eq!(rates.l21, report.rate_l21, epsilon = 1e-12);
        // Certificates reproduce their values.
        let phi_cert = DVector::from_vec(report.certificates["phi"].beta.clone());
        assert_relative_eq!(
            evaluate_phi_objective(&phi_cert, report.s0, &design, &model),
            report.phi_s0,
            epsilon = 1e-10
        );
        assert!(report.regime_ratio_b2 >= report.regime_ratio_b1);
    }
}
