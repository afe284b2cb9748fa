//! Posterior inference for the group-sparse logit model: the
//! unnormalized log posterior, a transdimensional Metropolis-Hastings
//! sampler, an exact enumeration-and-quadrature oracle for tiny
//! instances, and Monte Carlo summaries.

mod mcmc;
mod oracle;

pub use mcmc::{mcmc_run, McmcConfig, MoveCounters, MoveProbs, PosteriorSample, StoredState};
pub use oracle::{exact_oracle, log_evidence, ExactPosterior, OracleConfig, SupportWeight};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::{GroupedDesign, SparseCoef};
use crate::error::{Error, Result};
use crate::model::{log_likelihood, ResponseVector, TrueModel};
use crate::prior::PriorSpec;
use crate::util::quantile;

/// `log f_beta(Y) + log prior(S, beta_S)`, the quantity every sampler move
/// ratio is built from.
pub fn log_unnormalized_posterior(
    coef: &SparseCoef,
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
) -> Result<f64> {
    let beta = coef.densify(design.partition());
    Ok(log_likelihood(&beta, design, y)? + prior.log_prior(coef)?)
}

/// Quantile levels reported by [`summarize`].
pub const SUMMARY_QUANTILES: [f64; 6] = [0.1, 0.25, 0.5, 0.75, 0.9, 0.95];

/// Monte Carlo summaries of a posterior sample measured against a declared
/// truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Per-group inclusion probabilities.
    pub inclusion: Vec<f64>,
    /// Distribution of the effective group dimension, indices `0..=p`.
    pub s_law: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    /// Quantiles of `||beta - beta0||_2`.
    pub dist_l2: Vec<f64>,
    /// Quantiles of `||beta - beta0||_{2,1}`.
    pub dist_l21: Vec<f64>,
    /// Quantiles of `||W^{1/2} X (beta - beta0)||_2`.
    pub dist_predictor: Vec<f64>,
    /// Number of post-burn-in states pooled into the summary.
    pub n_states: usize,
}

/// Pools the post-burn-in states of chains into per-group inclusion
/// probabilities and the effective-dimension law, without reference to
/// any truth.
pub fn occupancy(
    samples: &[&PosteriorSample],
    partition: &crate::design::GroupPartition,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = partition.group_count();
    let mut inclusion = vec![0.0; p];
    let mut s_law = vec![0.0; p + 1];
    let mut count = 0usize;
    for sample in samples {
        for state in sample.post_burn_in() {
            count += 1;
            let coef = state.coef(partition)?;
            s_law[coef.effective_size(partition)] += 1.0;
            let mut offset = 0usize;
            for &j in coef.support() {
                let g = partition.size(j);
                if (offset..offset + g).any(|k| coef.values()[k] != 0.0) {
                    inclusion[j] += 1.0;
                }
                offset += g;
            }
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no post-burn-in states".into()));
    }
    for v in inclusion.iter_mut() {
        *v /= count as f64;
    }
    for v in s_law.iter_mut() {
        *v /= count as f64;
    }
    Ok((inclusion, s_law))
}

/// Pools the post-burn-in states of one or more chains into inclusion
/// probabilities, the effective-dimension law, and distance quantiles
/// against `model.beta0()`.
pub fn summarize(
    samples: &[&PosteriorSample],
    model: &TrueModel,
    design: &GroupedDesign,
) -> Result<PosteriorSummary> {
    let part = design.partition();
    let p = part.group_count();
    let mut inclusion = vec![0.0; p];
    let mut s_law = vec![0.0; p + 1];
    let mut d_l2 = Vec::new();
    let mut d_l21 = Vec::new();
    let mut d_pred = Vec::new();
    let mm = design.m() - 1;
    let mut count = 0usize;
    for sample in samples {
        for state in sample.post_burn_in() {
            count += 1;
            let coef = state.coef(part)?;
            let s_beta = coef.effective_size(part);
            s_law[s_beta] += 1.0;
            let mut offset = 0usize;
            for &j in coef.support() {
                let g = part.size(j);
                if (offset..offset + g).any(|k| coef.values()[k] != 0.0) {
                    inclusion[j] += 1.0;
                }
                offset += g;
            }
            // Distances through the sparse difference: only groups in the
            // union of the state support and the truth support move.
            let mut union: Vec<usize> = coef
                .support()
                .iter()
                .chain(model.support().iter())
                .copied()
                .collect();
            union.sort_unstable();
            union.dedup();
            let dense_state = coef.densify(part);
            let mut l2_sq = 0.0;
            let mut l21 = 0.0;
            let mut xdelta = DVector::zeros(design.n() * mm);
            for &j in &union {
                let mut block_sq = 0.0;
                for &c in part.group(j) {
                    let delta = dense_state[c] - model.beta0()[c];
                    block_sq += delta * delta;
                    if delta != 0.0 {
                        for r in 0..design.n() * mm {
                            xdelta[r] += design.matrix()[(r, c)] * delta;
                        }
                    }
                }
                l2_sq += block_sq;
                l21 += block_sq.sqrt();
            }
            d_l2.push(l2_sq.sqrt());
            d_l21.push(l21);
            d_pred.push(model.quadratic_form(&xdelta).max(0.0).sqrt());
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no post-burn-in states to summarize".into()));
    }
    let total = count as f64;
    for v in inclusion.iter_mut() {
        *v /= total;
    }
    for v in s_law.iter_mut() {
        *v /= total;
    }
    let levels = SUMMARY_QUANTILES.to_vec();
    Ok(PosteriorSummary {
        inclusion,
        s_law,
        quantile_levels: levels.clone(),
        dist_l2: levels.iter().map(|&q| quantile(&d_l2, q)).collect(),
        dist_l21: levels.iter().map(|&q| quantile(&d_l21, q)).collect(),
        dist_predictor: levels.iter().map(|&q| quantile(&d_pred, q)).collect(),
        n_states: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{random_subgaussian_design, EntryDistribution, GroupPartition};
    use crate::model::simulate_responses;
    use crate::util::derive_seed;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn instance(
        n: usize,
        sizes: &[usize],
        seed: u64,
    ) -> (GroupedDesign, TrueModel, ResponseVector, PriorSpec) {
        let partition = GroupPartition::contiguous(sizes).unwrap();
        let design =
            random_subgaussian_design(n, 2, partition, EntryDistribution::Gaussian, seed).unwrap();
        let mut beta0 = DVector::zeros(design.dim());
        beta0[0] = 1.0;
        let model = TrueModel::new(beta0, &design).unwrap();
        let y = simulate_responses(&model, derive_seed(seed, 1));
        let prior = PriorSpec::with_lambda(&design, 1.0, 4.0).unwrap();
        (design, model, y, prior)
    }

    #[test]
    fn log_posterior_is_sum_of_parts() {
        let (design, _, y, prior) = instance(12, &[1, 2, 1], 3);
        let coef = SparseCoef::new(
            vec![0, 1],
            DVector::from_vec(vec![0.4, -0.2, 0.7]),
            design.partition(),
        )
        .unwrap();
        let lp = log_unnormalized_posterior(&coef, &y, &design, &prior).unwrap();
        let beta = coef.densify(design.partition());
        assert_relative_eq!(
            lp,
            log_likelihood(&beta, &design, &y).unwrap() + prior.log_prior(&coef).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_posterior_empty_state_is_null_likelihood_plus_prior() {
        let (design, _, y, prior) = instance(10, &[1, 1], 5);
        let lp = log_unnormalized_posterior(&SparseCoef::empty(), &y, &design, &prior).unwrap();
        assert_relative_eq!(
            lp,
            -10.0 * 2f64.ln() + prior.log_pi_p(0).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn posterior_ratios_unchanged_by_constant_likelihood_shift() {
        // Shifting every log-likelihood by a constant moves all states
        // equally, so differences of the unnormalized log posterior are
        // invariant. Differences only involve the prior when the
        // likelihood term is removed entirely, which the prior-only mode
        // of the sampler exploits.
        let (design, _, y, prior) = instance(8, &[1, 1, 1], 7);
        let part = design.partition();
        let a = SparseCoef::new(vec![0], DVector::from_vec(vec![0.3]), part).unwrap();
        let b = SparseCoef::new(vec![2], DVector::from_vec(vec![-0.9]), part).unwrap();
        let diff = log_unnormalized_posterior(&a, &y, &design, &prior).unwrap()
            - log_unnormalized_posterior(&b, &y, &design, &prior).unwrap();
        // Recompute both terms with the likelihood shifted by +c.
        let c = 123.456;
        let shifted = |coef: &SparseCoef| {
            let beta = coef.densify(part);
            log_likelihood(&beta, &design, &y).unwrap() + c + prior.log_prior(coef).unwrap()
        };
        assert_relative_eq!(shifted(&a) - shifted(&b), diff, epsilon = 1e-10);
    }
}
