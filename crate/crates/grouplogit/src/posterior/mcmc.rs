//! Transdimensional Metropolis-Hastings sampler for the group
//! spike-and-slab posterior.
//!
//! Moves: ADD a group with its block drawn from the slab, REMOVE a group,
//! SWAP an active group for an inactive one (new block from the slab),
//! and a WITHIN-model spherical random walk. Because births propose from
//! the slab itself, the slab density cancels from the acceptance ratio of
//! the ADD/REMOVE pair, leaving the likelihood ratio, the group-size prior
//! ratio, the support-choice correction, and the move-probability
//! correction. The walk scale adapts toward 25% acceptance during burn-in
//! and is frozen afterwards, so the post-burn-in chain is a fixed-kernel
//! Markov chain invariant for the posterior.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{GroupedDesign, SparseCoef};
use crate::error::{Error, Result};
use crate::model::{log_likelihood_from_theta, ResponseVector};
use crate::prior::{log_kotz_group, sample_kotz_block, PriorSpec};
use crate::util::ln_binomial;

/// Move mixture. Must be positive and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub add: f64,
    pub remove: f64,
    pub swap: f64,
    pub within: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        Self { add: 0.25, remove: 0.25, swap: 0.1, within: 0.4 }
    }
}

impl MoveProbs {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.add, self.remove, self.swap, self.within];
        if parts.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("move probabilities must be nonnegative".into()));
        }
        if self.add <= 0.0 || self.remove <= 0.0 {
            return Err(Error::InvalidInput(
                "add and remove probabilities must be positive for irreducibility".into(),
            ));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("move probabilities sum to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub move_probs: MoveProbs,
    /// Base scale of the within-model walk; the proposal standard
    /// deviation is `rw_scale / sqrt(d_S)`.
    pub rw_scale: f64,
    /// Keep every `thin`-th iteration.
    pub thin: usize,
    /// Adapt `rw_scale` toward 25% acceptance during burn-in.
    pub adapt: bool,
    /// Drop the likelihood term: the chain then targets the prior, which
    /// has an enumerable group-size law to validate against.
    pub prior_only: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 100_000,
            burn_in: 20_000,
            seed: 1,
            move_probs: MoveProbs::default(),
            rw_scale: 2.4,
            thin: 10,
            adapt: true,
            prior_only: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::InvalidInput(format!(
                "n_iter={} must exceed burn_in={}",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        if !(self.rw_scale > 0.0) {
            return Err(Error::InvalidInput("rw_scale must be positive".into()));
        }
        self.move_probs.validate()
    }
}

/// Acceptance bookkeeping per move type: (proposed, accepted).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MoveCounters {
    pub add: (u64, u64),
    pub remove: (u64, u64),
    pub swap: (u64, u64),
    pub within: (u64, u64),
}

/// One thinned chain state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredState {
    pub iteration: usize,
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub s_beta: usize,
    pub log_posterior: f64,
}

impl StoredState {
    pub fn coef(&self, partition: &crate::design::GroupPartition) -> Result<SparseCoef> {
        SparseCoef::new(self.support.clone(), DVector::from_vec(self.values.clone()), partition)
    }
}

/// A thinned chain with its acceptance counters and the frozen walk scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub states: Vec<StoredState>,
    pub counters: MoveCounters,
    pub final_rw_scale: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl PosteriorSample {
    /// Thinned states recorded strictly after burn-in.
    pub fn post_burn_in(&self) -> impl Iterator<Item = &StoredState> {
        self.states.iter().filter(move |s| s.iteration > self.burn_in)
    }
}

struct ChainState<'a> {
    design: &'a GroupedDesign,
    y: &'a ResponseVector,
    prior: &'a PriorSpec,
    prior_only: bool,
    support: Vec<usize>,
    values: Vec<f64>,
    theta: DVector<f64>,
    log_lik: f64,
    log_prior: f64,
}

impl<'a> ChainState<'a> {
    fn new(
        design: &'a GroupedDesign,
        y: &'a ResponseVector,
        prior: &'a PriorSpec,
        prior_only: bool,
    ) -> Result<Self> {
        let theta = DVector::zeros(design.n() * (design.m() - 1));
        let log_lik = if prior_only { 0.0 } else { log_likelihood_from_theta(theta.as_slice(), y) };
        let log_prior = prior.log_prior(&SparseCoef::empty())?;
        if !(log_lik + log_prior).is_finite() {
            return Err(Error::Degenerate("non-finite log posterior at initialization".into()));
        }
        Ok(Self {
            design,
            y,
            prior,
            prior_only,
            support: Vec::new(),
            values: Vec::new(),
            theta,
            log_lik,
            log_prior,
        })
    }

    fn log_posterior(&self) -> f64 {
        self.log_lik + self.log_prior
    }

    fn block_range(&self, pos: usize) -> (usize, usize) {
        let part = self.design.partition();
        let mut offset = 0;
        for &j in &self.support[..pos] {
            offset += part.size(j);
        }
        (offset, part.size(self.support[pos]))
    }

    /// Adds `sign * X_{.j} b` to the running linear predictor.
    fn shift_theta(&self, theta: &mut DVector<f64>, j: usize, block: &[f64], sign: f64) {
        let cols = self.design.partition().group(j);
        let x = self.design.matrix();
        for (k, &c) in cols.iter().enumerate() {
            let coeff = sign * block[k];
            if coeff != 0.0 {
                for r in 0..theta.len() {
                    theta[r] += x[(r, c)] * coeff;
                }
            }
        }
    }

    fn log_lik_of(&self, theta: &DVector<f64>) -> f64 {
        if self.prior_only {
            0.0
        } else {
            log_likelihood_from_theta(theta.as_slice(), self.y)
        }
    }

    /// Recomputes the cached predictor, likelihood, and prior from the
    /// sparse coefficients, clearing incremental rounding drift.
    fn refresh(&mut self) -> Result<()> {
        let part = self.design.partition();
        let coef = SparseCoef::new(
            self.support.clone(),
            DVector::from_vec(self.values.clone()),
            part,
        )?;
        let beta = coef.densify(part);
        self.theta = self.design.matrix() * beta;
        self.log_lik = self.log_lik_of(&self.theta.clone());
        self.log_prior = self.prior.log_prior(&coef)?;
        Ok(())
    }
}

/// Runs one chain. Deterministic in the seed: the same configuration gives
/// a bitwise-identical chain.
pub fn mcmc_run(
    y: &ResponseVector,
    design: &GroupedDesign,
    prior: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<PosteriorSample> {
    cfg.validate()?;
    if y.n() != design.n() || y.m() != design.m() {
        return Err(Error::DimensionMismatch("response/design shapes disagree".into()));
    }
    let part = design.partition();
    let p = part.group_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = ChainState::new(design, y, prior, cfg.prior_only)?;
    let mut counters = MoveCounters::default();
    let mut rw_scale = cfg.rw_scale;
    let mut within_window: (u64, u64) = (0, 0);
    let mut adapt_round = 0u64;
    let mut states = Vec::with_capacity(cfg.n_iter / cfg.thin + 1);
    let lambda = prior.lambda();
    let mp = cfg.move_probs;

    for iter in 1..=cfg.n_iter {
        let u: f64 = rng.random();
        if u < mp.add {
            counters.add.0 += 1;
            let s = state.support.len();
            if s < p {
                // Uniform inactive group.
                let mut k = rng.random_range(0..p - s);
                let mut j = 0usize;
                loop {
                    if !state.support.contains(&j) {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                    }
                    j += 1;
                }
                let g = part.size(j);
                let block = sample_kotz_block(g, lambda, &mut rng);
                let mut theta_new = state.theta.clone();
                state.shift_theta(&mut theta_new, j, block.as_slice(), 1.0);
                let lik_new = state.log_lik_of(&theta_new);
                let sf = s as f64;
                let pf = p as f64;
                // Slab proposal density cancels the slab prior factor.
                let log_acc = (lik_new - state.log_lik)
                    + (prior.log_pi_p(s + 1)? - prior.log_pi_p(s)?)
                    + (ln_binomial(p, s) - ln_binomial(p, s + 1))
                    + (mp.remove / (sf + 1.0)).ln()
                    - (mp.add / (pf - sf)).ln();
                if rng.random::<f64>().ln() < log_acc {
                    counters.add.1 += 1;
                    let pos = state.support.partition_point(|&x| x < j);
                    let mut offset = 0;
                    for &jj in &state.support[..pos] {
                        offset += part.size(jj);
                    }
                    state.support.insert(pos, j);
                    for (k, &v) in block.iter().enumerate() {
                        state.values.insert(offset + k, v);
                    }
                    state.theta = theta_new;
                    state.log_lik = lik_new;
                    state.log_prior += (prior.log_pi_p(s + 1)? - prior.log_pi_p(s)?)
                        + (ln_binomial(p, s) - ln_binomial(p, s + 1))
                        + log_kotz_group(&block, g, lambda);
                }
            }
        } else if u < mp.add + mp.remove {
            counters.remove.0 += 1;
            let s = state.support.len();
            if s > 0 {
                let pos = rng.random_range(0..s);
                let j = state.support[pos];
                let (offset, g) = state.block_range(pos);
                let block: Vec<f64> = state.values[offset..offset + g].to_vec();
                let mut theta_new = state.theta.clone();
                state.shift_theta(&mut theta_new, j, &block, -1.0);
                let lik_new = state.log_lik_of(&theta_new);
                let sf = s as f64;
                let pf = p as f64;
                let log_acc = (lik_new - state.log_lik)
                    + (prior.log_pi_p(s - 1)? - prior.log_pi_p(s)?)
                    + (ln_binomial(p, s) - ln_binomial(p, s - 1))
                    + (mp.add / (pf - sf + 1.0)).ln()
                    - (mp.remove / sf).ln();
                if rng.random::<f64>().ln() < log_acc {
                    counters.remove.1 += 1;
                    let block_v = DVector::from_vec(block);
                    state.support.remove(pos);
                    state.values.drain(offset..offset + g);
                    state.theta = theta_new;
                    state.log_lik = lik_new;
                    state.log_prior += (prior.log_pi_p(s - 1)? - prior.log_pi_p(s)?)
                        + (ln_binomial(p, s) - ln_binomial(p, s - 1))
                        - log_kotz_group(&block_v, g, lambda);
                }
            }
        } else if u < mp.add + mp.remove + mp.swap {
            counters.swap.0 += 1;
            let s = state.support.len();
            if s > 0 && s < p {
                let pos = rng.random_range(0..s);
                let j_out = state.support[pos];
                let mut k = rng.random_range(0..p - s);
                let mut j_in = 0usize;
                loop {
                    if !state.support.contains(&j_in) {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                    }
                    j_in += 1;
                }
                let (offset, g_out) = state.block_range(pos);
                let out_block: Vec<f64> = state.values[offset..offset + g_out].to_vec();
                let g_in = part.size(j_in);
                let in_block = sample_kotz_block(g_in, lambda, &mut rng);
                let mut theta_new = state.theta.clone();
                state.shift_theta(&mut theta_new, j_out, &out_block, -1.0);
                state.shift_theta(&mut theta_new, j_in, in_block.as_slice(), 1.0);
                let lik_new = state.log_lik_of(&theta_new);
                // Both slab factors cancel against the proposals; the
                // support count and move probabilities are symmetric.
                let log_acc = lik_new - state.log_lik;
                if rng.random::<f64>().ln() < log_acc {
                    counters.swap.1 += 1;
                    let out_v = DVector::from_vec(out_block);
                    state.support.remove(pos);
                    state.values.drain(offset..offset + g_out);
                    let pos_in = state.support.partition_point(|&x| x < j_in);
                    let mut off_in = 0;
                    for &jj in &state.support[..pos_in] {
                        off_in += part.size(jj);
                    }
                    state.support.insert(pos_in, j_in);
                    for (k, &v) in in_block.iter().enumerate() {
                        state.values.insert(off_in + k, v);
                    }
                    state.theta = theta_new;
                    state.log_lik = lik_new;
                    state.log_prior += log_kotz_group(&in_block, g_in, lambda)
                        - log_kotz_group(&out_v, g_out, lambda);
                }
            }
        } else {
            counters.within.0 += 1;
            let d_s = state.values.len();
            if d_s > 0 {
                within_window.0 += 1;
                let sd = rw_scale / (d_s as f64).sqrt();
                let eps: Vec<f64> =
                    (0..d_s).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) * sd).collect();
                let mut theta_new = state.theta.clone();
                let mut new_values = state.values.clone();
                let mut offset = 0;
                let mut delta_l21 = 0.0;
                for &j in &state.support {
                    let g = part.size(j);
                    let mut old_sq = 0.0;
                    let mut new_sq = 0.0;
                    let mut delta_block = vec![0.0; g];
                    for k in 0..g {
                        let old = state.values[offset + k];
                        let new = old + eps[offset + k];
                        old_sq += old * old;
                        new_sq += new * new;
                        delta_block[k] = new - old;
                        new_values[offset + k] = new;
                    }
                    state.shift_theta(&mut theta_new, j, &delta_block, 1.0);
                    delta_l21 += new_sq.sqrt() - old_sq.sqrt();
                    offset += g;
                }
                let lik_new = state.log_lik_of(&theta_new);
                // Slab normalizers cancel; only the exponential decay moves.
                let log_acc = (lik_new - state.log_lik) - lambda * delta_l21;
                if rng.random::<f64>().ln() < log_acc {
                    counters.within.1 += 1;
                    within_window.1 += 1;
                    state.values = new_values;
                    state.theta = theta_new;
                    state.log_lik = lik_new;
                    state.log_prior -= lambda * delta_l21;
                }
                // Frozen after burn-in so the recorded chain has a fixed
                // invariant kernel.
                if cfg.adapt && iter <= cfg.burn_in && within_window.0 >= 50 {
                    adapt_round += 1;
                    let rate = within_window.1 as f64 / within_window.0 as f64;
                    let gamma = (adapt_round as f64 + 10.0).powf(-0.6);
                    rw_scale = (rw_scale.ln() + gamma * (rate - 0.25)).exp();
                    rw_scale = rw_scale.clamp(1e-4, 1e4);
                    within_window = (0, 0);
                }
            }
        }

        if iter % cfg.thin == 0 {
            // Recompute caches from the sparse state; the stored log
            // posterior is exactly the value a from-scratch evaluation
            // gives, and incremental drift cannot accumulate.
            state.refresh()?;
            let coef = SparseCoef::new(
                state.support.clone(),
                DVector::from_vec(state.values.clone()),
                part,
            )?;
            states.push(StoredState {
                iteration: iter,
                support: state.support.clone(),
                values: state.values.clone(),
                s_beta: coef.effective_size(part),
                log_posterior: state.log_posterior(),
            });
        }
    }

    Ok(PosteriorSample {
        states,
        counters,
        final_rw_scale: rw_scale,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{random_subgaussian_design, EntryDistribution, GroupPartition};
    use crate::model::{simulate_responses, TrueModel};
    use crate::posterior::log_unnormalized_posterior;
    use crate::util::derive_seed;

    fn setup(
        n: usize,
        sizes: &[usize],
        a: f64,
        lambda: Option<f64>,
        seed: u64,
    ) -> (GroupedDesign, ResponseVector, PriorSpec) {
        let partition = GroupPartition::contiguous(sizes).unwrap();
        let design =
            random_subgaussian_design(n, 2, partition, EntryDistribution::Gaussian, seed).unwrap();
        let mut beta0 = DVector::zeros(design.dim());
        beta0[0] = 0.9;
        let model = TrueModel::new(beta0, &design).unwrap();
        let y = simulate_responses(&model, derive_seed(seed, 2));
        let prior = match lambda {
            Some(l) => PriorSpec::with_lambda(&design, a, l).unwrap(),
            None => PriorSpec::from_design(&design, a).unwrap(),
        };
        (design, y, prior)
    }

    #[test]
    fn chain_is_bitwise_deterministic() {
        let (design, y, prior) = setup(15, &[1, 2, 1], 1.0, Some(5.0), 8);
        let cfg = McmcConfig { n_iter: 3_000, burn_in: 500, seed: 42, ..Default::default() };
        let a = mcmc_run(&y, &design, &prior, &cfg).unwrap();
        let b = mcmc_run(&y, &design, &prior, &cfg).unwrap();
        assert_eq!(a.states.len(), b.states.len());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa.support, sb.support);
            assert_eq!(sa.values, sb.values);
            assert!(sa.log_posterior == sb.log_posterior);
        }
    }

    #[test]
    fn stored_log_posterior_matches_recomputation() {
        let (design, y, prior) = setup(20, &[2, 1, 2], 1.0, Some(6.0), 9);
        let cfg = McmcConfig { n_iter: 4_000, burn_in: 1_000, seed: 3, ..Default::default() };
        let sample = mcmc_run(&y, &design, &prior, &cfg).unwrap();
        for state in sample.states.iter().step_by(7) {
            let coef = state.coef(design.partition()).unwrap();
            let lp = log_unnormalized_posterior(&coef, &y, &design, &prior).unwrap();
            assert!(
                (lp - state.log_posterior).abs() < 1e-10,
                "iteration {}: stored {} vs recomputed {}",
                state.iteration,
                state.log_posterior,
                lp
            );
        }
    }

    #[test]
    fn prior_only_chain_matches_group_size_law() {
        // Light version of the acceptance criterion: 2e5 iterations,
        // tolerance 0.05 in total variation.
        let (design, y, prior) = setup(20, &[1; 8], 1.0, None, 10);
        let cfg = McmcConfig {
            n_iter: 200_000,
            burn_in: 20_000,
            seed: 11,
            prior_only: true,
            thin: 5,
            ..Default::default()
        };
        let sample = mcmc_run(&y, &design, &prior, &cfg).unwrap();
        let mut law = vec![0.0; 9];
        let mut count = 0.0;
        for st in sample.post_burn_in() {
            law[st.s_beta] += 1.0;
            count += 1.0;
        }
        let tv: f64 = (0..=8)
            .map(|s| (law[s] / count - prior.log_pi_p(s).unwrap().exp()).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn add_remove_flow_balance_on_tiny_state_space() {
        // Empirical detailed balance for the transdimensional pair:
        // starting from the empty state, accepted births into a cell of
        // the one-group state space must match the reverse death flow
        // predicted by the posterior densities.
        let (design, y, prior) = setup(10, &[1, 1], 1.0, Some(3.0), 12);
        let part = design.partition();
        let cfg = McmcConfig::default();
        let mp = cfg.move_probs;
        let p = 2usize;
        let empty_lp =
            log_unnormalized_posterior(&SparseCoef::empty(), &y, &design, &prior).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 400_000usize;
        let cells: Vec<(f64, f64)> = (0..12).map(|k| (-1.5 + 0.25 * k as f64, 0.25)).collect();
        let mut counts = vec![0usize; cells.len()];
        for _ in 0..trials {
            // One ADD attempt from the empty state targeting group 0.
            if rng.random::<f64>() >= mp.add {
                continue;
            }
            let j = rng.random_range(0..p);
            let block = sample_kotz_block(1, prior.lambda(), &mut rng);
            let coef = SparseCoef::new(vec![j], block.clone(), part).unwrap();
            let lp = log_unnormalized_posterior(&coef, &y, &design, &prior).unwrap();
            let log_acc = lp - empty_lp - prior.log_kotz_density(&coef)
                + (mp.remove / 1.0).ln()
                - (mp.add / p as f64).ln();
            if rng.random::<f64>().ln() < log_acc && j == 0 {
                for (c, &(lo, w)) in cells.iter().enumerate() {
                    if block[0] >= lo && block[0] < lo + w {
                        counts[c] += 1;
                    }
                }
            }
        }
        // Predicted flow: pi(empty) K(empty -> cell) = pi(cell) K(cell -> empty)
        // with K(cell -> empty) = P(remove) * acc_rem(center).
        for (c, &(lo, w)) in cells.iter().enumerate() {
            let center = lo + w / 2.0;
            let coef =
                SparseCoef::new(vec![0], DVector::from_vec(vec![center]), part).unwrap();
            let lp = log_unnormalized_posterior(&coef, &y, &design, &prior).unwrap();
            let log_acc_rem = (empty_lp - lp + prior.log_kotz_density(&coef)
                + (mp.add / p as f64).ln()
                - (mp.remove / 1.0).ln())
            .min(0.0);
            let predicted_flow = (lp - empty_lp).exp() * w * mp.remove * log_acc_rem.exp();
            // Empirical forward flow per trial, conditioned on starting at
            // the empty state.
            let empirical = counts[c] as f64 / trials as f64;
            let se = (empirical.max(1e-12) / trials as f64).sqrt();
            assert!(
                (empirical - predicted_flow).abs() < 4.0 * se + 0.002,
                "cell {c}: empirical {empirical} vs predicted {predicted_flow}"
            );
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let (design, y, prior) = setup(10, &[1, 1], 1.0, Some(3.0), 13);
        let bad = McmcConfig { n_iter: 100, burn_in: 100, ..Default::default() };
        assert!(mcmc_run(&y, &design, &prior, &bad).is_err());
        let bad2 = McmcConfig {
            move_probs: MoveProbs { add: 0.5, remove: 0.5, swap: 0.2, within: 0.0 },
            ..Default::default()
        };
        assert!(mcmc_run(&y, &design, &prior, &bad2).is_err());
    }
}
