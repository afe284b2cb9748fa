//! Exact posterior by support enumeration and tensor-product quadrature.
//!
//! Ground truth for validating the sampler on tiny instances. All `2^p`
//! supports are enumerated; the evidence integral of each support is
//! computed by iterated adaptive Simpson quadrature over a box around the
//! integrand's mode, nested once per dimension, refining panels until the
//! local relative tolerance is met. The caps (`p <= 10`, every support
//! dimension `<= 3`, which forces a total dimension of at most 3) are
//! hard: instances beyond them are refused rather than silently
//! approximated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::model::{log_likelihood_from_theta, ResponseVector};
use crate::prior::PriorSpec;
use crate::util::ln_binomial;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Relative tolerance of each support's evidence integral.
    pub rel_tol: f64,
    /// Initial panels per dimension before adaptive subdivision.
    pub initial_panels: usize,
    /// Hard ceiling on integrand evaluations per support.
    pub max_evals: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-6, initial_panels: 3, max_evals: 80_000_000 }
    }
}

/// Posterior weight of one support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportWeight {
    pub support: Vec<usize>,
    /// `log { pi_p(s) C(p,s)^{-1} integral exp(loglik) h_S }`.
    pub log_weight: f64,
    pub probability: f64,
}

/// Exact posterior over supports with derived summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactPosterior {
    pub supports: Vec<SupportWeight>,
    /// Per-group inclusion probabilities.
    pub inclusion: Vec<f64>,
    /// Law of the support size, indices `0..=p`.
    pub s_law: Vec<f64>,
    /// `log integral f_beta(Y) dPi(beta)`, the model evidence.
    pub log_evidence: f64,
}

fn check_caps(design: &GroupedDesign) -> Result<()> {
    let p = design.partition().group_count();
    if p > 10 {
        return Err(Error::OracleCapExceeded(format!("p={p} exceeds 10")));
    }
    // The full support is enumerated, so its dimension must obey the
    // per-support quadrature cap.
    if design.dim() > 3 {
        return Err(Error::OracleCapExceeded(format!(
            "total dimension {} exceeds the quadrature cap of 3",
            design.dim()
        )));
    }
    Ok(())
}

/// Enumerates all supports and returns `(support, log_weight)` pairs, the
/// weight being the log of `pi_p(s) C(p,s)^{-1} int exp(loglik) h_S`.
fn support_log_weights(
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
    cfg: &OracleConfig,
) -> Result<Vec<(Vec<usize>, f64)>> {
    check_caps(design)?;
    if y.n() != design.n() || y.m() != design.m() {
        return Err(Error::DimensionMismatch("response/design shapes disagree".into()));
    }
    let p = design.partition().group_count();
    let mut out = Vec::with_capacity(1 << p);
    for mask in 0u32..(1u32 << p) {
        let support: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
        let s = support.len();
        let base = prior.log_pi_p(s)? - ln_binomial(p, s);
        let log_weight = if support.is_empty() {
            let theta = vec![0.0; design.n() * (design.m() - 1)];
            base + log_likelihood_from_theta(&theta, y)
        } else {
            base + log_support_integral(&support, y, design, prior, cfg)?
        };
        out.push((support, log_weight));
    }
    Ok(out)
}

/// Exact posterior over all supports.
pub fn exact_oracle(
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
    cfg: &OracleConfig,
) -> Result<ExactPosterior> {
    let weights = support_log_weights(y, design, prior, cfg)?;
    let p = design.partition().group_count();
    let logs: Vec<f64> = weights.iter().map(|(_, w)| *w).collect();
    let log_norm = crate::util::logsumexp(&logs);
    let mut supports = Vec::with_capacity(weights.len());
    let mut inclusion = vec![0.0; p];
    let mut s_law = vec![0.0; p + 1];
    for (support, lw) in weights {
        let prob = (lw - log_norm).exp();
        for &j in &support {
            inclusion[j] += prob;
        }
        s_law[support.len()] += prob;
        supports.push(SupportWeight { support, log_weight: lw, probability: prob });
    }
    Ok(ExactPosterior { supports, inclusion, s_law, log_evidence: log_norm })
}

/// `log integral f_beta(Y) dPi(beta)` without the per-support summaries.
pub fn log_evidence(
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
    cfg: &OracleConfig,
) -> Result<f64> {
    let weights = support_log_weights(y, design, prior, cfg)?;
    let logs: Vec<f64> = weights.iter().map(|(_, w)| *w).collect();
    Ok(crate::util::logsumexp(&logs))
}

/// `log int exp(loglik(v)) h_S(v) dv` over the support blocks.
fn log_support_integral(
    support: &[usize],
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
    cfg: &OracleConfig,
) -> Result<f64> {
    let part = design.partition();
    let cols = part.columns_of(support);
    let d_s = cols.len();
    if d_s > 3 {
        return Err(Error::OracleCapExceeded(format!(
            "support dimension {d_s} exceeds the quadrature cap of 3"
        )));
    }
    let sub = design.matrix().select_columns(&cols);
    let lambda = prior.lambda();

    // The slab factorizes into a support-constant normalizer and the
    // exponential decay in the block norms; evaluate it without building
    // sparse-coefficient objects in the hot loop.
    let slab_const: f64 = support
        .iter()
        .map(|&j| {
            crate::prior::log_kotz_group(&DVector::zeros(part.size(j)), part.size(j), lambda)
        })
        .sum();
    let block_sizes: Vec<usize> = support.iter().map(|&j| part.size(j)).collect();
    let log_integrand = |v: &DVector<f64>| -> f64 {
        let theta = &sub * v;
        let mut l21 = 0.0;
        let mut offset = 0;
        for &g in &block_sizes {
            let sq: f64 = (0..g).map(|k| v[offset + k] * v[offset + k]).sum();
            l21 += sq.sqrt();
            offset += g;
        }
        log_likelihood_from_theta(theta.as_slice(), y) + slab_const - lambda * l21
    };

    // Rough mode of the log integrand by gradient ascent with a smoothed
    // group norm; only used to place the quadrature box.
    let center = rough_mode(&sub, support, y, design, prior);
    let theta_c = &sub * &center;
    let mm = design.m() - 1;
    let mut hess_diag = vec![0.0f64; d_s];
    for i in 0..design.n() {
        let th = theta_c.rows(i * mm, mm).into_owned();
        let (_, w) = crate::model::mean_and_covariance(&th)?;
        let rows = sub.rows(i * mm, mm);
        let local = rows.transpose() * w * rows;
        for k in 0..d_s {
            hess_diag[k] += local[(k, k)];
        }
    }
    let mut lo = vec![0.0f64; d_s];
    let mut hi = vec![0.0f64; d_s];
    for k in 0..d_s {
        let sigma = 1.0 / hess_diag[k].max(1e-8).sqrt();
        let w = 7.0 * sigma + 21.0 / lambda;
        lo[k] = (center[k] - w).min(-3.0 / lambda - 0.05);
        hi[k] = (center[k] + w).max(3.0 / lambda + 0.05);
    }

    // The slab density has a cusp where a block vanishes. For singleton
    // groups that cusp lies on the coordinate plane `v_k = 0`, which must
    // be a panel boundary or Simpson degrades to first order.
    let mut split = vec![false; d_s];
    let mut offset = 0;
    for &j in support {
        let g = part.size(j);
        if g == 1 {
            split[offset] = true;
        }
        offset += g;
    }

    // Shift so the scaled integrand is O(1) at the mode; everything below
    // runs in linear space on exp(g - shift).
    let shift = log_integrand(&center);
    let mut evals = 0usize;
    let scaled = |v: &DVector<f64>, evals: &mut usize| -> f64 {
        *evals += 1;
        (log_integrand(v) - shift).exp()
    };
    let value = integrate_box(
        &scaled,
        &lo,
        &hi,
        &split,
        &mut DVector::zeros(d_s),
        d_s - 1,
        cfg,
        &mut evals,
    )?;
    if evals > cfg.max_evals {
        return Err(Error::OracleCapExceeded(format!(
            "quadrature used {evals} evaluations, above the cap {}",
            cfg.max_evals
        )));
    }
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::Degenerate(format!("support integral degenerated to {value}")));
    }
    Ok(shift + value.ln())
}

/// Integrates the scaled integrand over the box by iterated adaptive
/// Simpson: dimension `dim` varies, inner dimensions integrate
/// recursively.
#[allow(clippy::too_many_arguments)]
fn integrate_box(
    f: &dyn Fn(&DVector<f64>, &mut usize) -> f64,
    lo: &[f64],
    hi: &[f64],
    split: &[bool],
    point: &mut DVector<f64>,
    dim: usize,
    cfg: &OracleConfig,
    evals: &mut usize,
) -> Result<f64> {
    // Inner integrals are computed tighter than outer ones so the outer
    // refinement never chases inner quadrature noise.
    let depth_from_outer = lo.len() - 1 - dim;
    let tol = cfg.rel_tol / 3f64.powi(depth_from_outer as i32);
    let mut eval_1d = |x: f64, evals: &mut usize| -> Result<f64> {
        point[dim] = x;
        if dim == 0 {
            Ok(f(point, evals))
        } else {
            // A fresh sub-point buffer keeps borrowers disjoint.
            let mut inner_point = point.clone();
            integrate_box(f, lo, hi, split, &mut inner_point, dim - 1, cfg, evals)
        }
    };
    let mut total = 0.0;
    let segments: Vec<(f64, f64)> = if split[dim] && lo[dim] < 0.0 && hi[dim] > 0.0 {
        vec![(lo[dim], 0.0), (0.0, hi[dim])]
    } else {
        vec![(lo[dim], hi[dim])]
    };
    for (a, b) in segments {
        total += adaptive_simpson(&mut eval_1d, a, b, tol, cfg.initial_panels, cfg.max_evals, evals)?;
    }
    Ok(total)
}

/// Adaptive Simpson on one segment with an initial uniform panel split.
///
/// A coarse pass sets the integral's scale; each panel then receives an
/// absolute error budget proportional to its width, so panels carrying
/// negligible mass are accepted immediately while the peak region refines
/// deeply. The summed budgets keep the total error below
/// `rel_tol * scale`.
fn adaptive_simpson(
    f: &mut dyn FnMut(f64, &mut usize) -> Result<f64>,
    a: f64,
    b: f64,
    rel_tol: f64,
    initial_panels: usize,
    max_evals: usize,
    evals: &mut usize,
) -> Result<f64> {
    let panels = initial_panels.max(2);
    let h = (b - a) / panels as f64;
    let mut coarse = Vec::with_capacity(panels);
    let mut scale = 0.0f64;
    for k in 0..panels {
        let pa = a + k as f64 * h;
        let pb = pa + h;
        let fa = f(pa, evals)?;
        let fm = f(0.5 * (pa + pb), evals)?;
        let fb = f(pb, evals)?;
        let s = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
        scale += s.abs();
        coarse.push((pa, pb, fa, fm, fb, s));
    }
    // Floor keeps zero-mass segments (pure underflow regions) cheap.
    let budget_total = rel_tol * scale.max(1e-280);
    let mut total = 0.0;
    for (pa, pb, fa, fm, fb, s) in coarse {
        let budget = budget_total / panels as f64;
        total += recurse_simpson(f, pa, pb, fa, fm, fb, s, budget, 28, max_evals, evals)?;
        if *evals > max_evals {
            return Err(Error::OracleCapExceeded(format!(
                "adaptive quadrature exceeded {max_evals} evaluations"
            )));
        }
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn recurse_simpson(
    f: &mut dyn FnMut(f64, &mut usize) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    abs_budget: f64,
    depth: usize,
    max_evals: usize,
    evals: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm, evals)?;
    let frm = f(rm, evals)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let refined = left + right;
    let err = (refined - whole) / 15.0;
    if depth == 0 || err.abs() <= abs_budget || *evals > max_evals {
        return Ok(refined + err);
    }
    let half = abs_budget / 2.0;
    Ok(recurse_simpson(f, a, m, fa, flm, fm, left, half, depth - 1, max_evals, evals)?
        + recurse_simpson(f, m, b, fm, frm, fb, right, half, depth - 1, max_evals, evals)?)
}

fn rough_mode(
    sub: &DMatrix<f64>,
    support: &[usize],
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
) -> DVector<f64> {
    let part = design.partition();
    let d_s = sub.ncols();
    let lambda = prior.lambda();
    let mm = design.m() - 1;
    let eps = 1e-4;
    let objective = |v: &DVector<f64>| -> f64 {
        let theta = sub * v;
        let mut smooth_l21 = 0.0;
        let mut offset = 0;
        for &j in support {
            let g = part.size(j);
            let sq: f64 = (0..g).map(|k| v[offset + k] * v[offset + k]).sum();
            smooth_l21 += (sq + eps * eps).sqrt();
            offset += g;
        }
        log_likelihood_from_theta(theta.as_slice(), y) - lambda * smooth_l21
    };
    let gradient = |v: &DVector<f64>| -> DVector<f64> {
        let theta = sub * v;
        let ys = y.stacked();
        let mut grad = DVector::zeros(d_s);
        for i in 0..design.n() {
            let th = theta.rows(i * mm, mm).into_owned();
            let mu = crate::model::softmax_probs(th.as_slice());
            let resid = ys.rows(i * mm, mm) - mu;
            grad += sub.rows(i * mm, mm).transpose() * resid;
        }
        let mut offset = 0;
        for &j in support {
            let g = part.size(j);
            let sq: f64 = (0..g).map(|k| v[offset + k] * v[offset + k]).sum();
            let denom = (sq + eps * eps).sqrt();
            for k in 0..g {
                grad[offset + k] -= lambda * v[offset + k] / denom;
            }
            offset += g;
        }
        grad
    };
    let mut v = DVector::zeros(d_s);
    let mut f = objective(&v);
    let mut step = 0.5;
    for _ in 0..120 {
        let g = gradient(&v);
        if g.norm() < 1e-10 {
            break;
        }
        let mut t = step;
        let mut moved = false;
        for _ in 0..25 {
            let cand = &v + &g * t;
            let fc = objective(&cand);
            if fc > f + 1e-14 {
                v = cand;
                f = fc;
                step = t * 1.4;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{random_subgaussian_design, EntryDistribution, GroupPartition};
    use crate::model::{simulate_responses, TrueModel};
    use crate::util::derive_seed;

    fn tiny_instance(
        n: usize,
        beta0: &[f64],
        lambda: f64,
        seed: u64,
    ) -> (GroupedDesign, ResponseVector, PriorSpec) {
        let p = beta0.len();
        let partition = GroupPartition::singletons(p);
        let design =
            random_subgaussian_design(n, 2, partition, EntryDistribution::Gaussian, seed).unwrap();
        let model = TrueModel::new(DVector::from_row_slice(beta0), &design).unwrap();
        let y = simulate_responses(&model, derive_seed(seed, 3));
        let prior = PriorSpec::with_lambda(&design, 1.0, lambda).unwrap();
        (design, y, prior)
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (design, y, prior) = tiny_instance(25, &[1.2, 0.0, 0.0], 4.0, 5);
        let cfg = OracleConfig { rel_tol: 1e-5, ..Default::default() };
        let post = exact_oracle(&y, &design, &prior, &cfg).unwrap();
        let total: f64 = post.supports.iter().map(|s| s.probability).sum();
        assert!((total - 1.0).abs() < 1e-8, "total {total}");
        assert_eq!(post.supports.len(), 8);
    }

    #[test]
    fn null_model_dominates_on_signal_free_data() {
        // Large n, zero truth: the empty support must carry the highest
        // posterior probability.
        let (design, y, prior) = tiny_instance(40, &[0.0, 0.0, 0.0], 6.0, 6);
        let cfg = OracleConfig { rel_tol: 1e-5, ..Default::default() };
        let post = exact_oracle(&y, &design, &prior, &cfg).unwrap();
        let best = post
            .supports
            .iter()
            .max_by(|a, b| a.probability.partial_cmp(&b.probability).unwrap())
            .unwrap();
        assert!(best.support.is_empty(), "winning support {:?}", best.support);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let (design, y, prior) = tiny_instance(30, &[1.0, 0.0, 0.0], 5.0, 7);
        let coarse = exact_oracle(
            &y,
            &design,
            &prior,
            &OracleConfig { rel_tol: 1e-5, initial_panels: 6, ..Default::default() },
        )
        .unwrap();
        let fine = exact_oracle(
            &y,
            &design,
            &prior,
            &OracleConfig { rel_tol: 1e-5, initial_panels: 12, ..Default::default() },
        )
        .unwrap();
        for (a, b) in coarse.supports.iter().zip(&fine.supports) {
            assert!(
                (a.probability - b.probability).abs() < 1e-4,
                "support {:?}: {} vs {}",
                a.support,
                a.probability,
                b.probability
            );
        }
    }

    #[test]
    fn refuses_dimension_beyond_caps() {
        let partition = GroupPartition::contiguous(&[2, 2]).unwrap();
        let design =
            random_subgaussian_design(10, 2, partition, EntryDistribution::Gaussian, 8).unwrap();
        let model = TrueModel::new(DVector::zeros(4), &design).unwrap();
        let y = simulate_responses(&model, 9);
        let prior = PriorSpec::with_lambda(&design, 1.0, 3.0).unwrap();
        assert!(matches!(
            exact_oracle(&y, &design, &prior, &OracleConfig::default()),
            Err(Error::OracleCapExceeded(_))
        ));
    }
}
