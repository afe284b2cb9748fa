//! The six inequality checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    l21_norm, random_subgaussian_design, EntryDistribution, GroupPartition,
};
use crate::error::{Error, Result};
use crate::model::{log_likelihood, log_likelihood_ratio_centered, simulate_responses, TrueModel};
use crate::posterior::{log_evidence, OracleConfig};
use crate::prior::{log_dim_weight, PriorSpec};
use crate::util::derive_seed;
use crate::verify::CheckReport;

/// Names of the runnable checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Selfconcordance,
    LikelihoodSandwich,
    TailBound,
    MgfBound,
    XstarScaling,
    EvidenceLowerBound,
}

impl CheckName {
    pub const ALL: [CheckName; 6] = [
        CheckName::Selfconcordance,
        CheckName::LikelihoodSandwich,
        CheckName::TailBound,
        CheckName::MgfBound,
        CheckName::XstarScaling,
        CheckName::EvidenceLowerBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckName::Selfconcordance => "selfconcordance",
            CheckName::LikelihoodSandwich => "likelihood_sandwich",
            CheckName::TailBound => "tail_bound",
            CheckName::MgfBound => "mgf_bound",
            CheckName::XstarScaling => "xstar_scaling",
            CheckName::EvidenceLowerBound => "evidence_lower_bound",
        }
    }
}

impl std::str::FromStr for CheckName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selfconcordance" => Ok(CheckName::Selfconcordance),
            "likelihood_sandwich" | "sandwich" => Ok(CheckName::LikelihoodSandwich),
            "tail_bound" | "tail" => Ok(CheckName::TailBound),
            "mgf_bound" | "mgf" => Ok(CheckName::MgfBound),
            "xstar_scaling" | "xstar" => Ok(CheckName::XstarScaling),
            "evidence_lower_bound" | "evidence" => Ok(CheckName::EvidenceLowerBound),
            other => Err(Error::InvalidInput(format!("unknown check '{other}'"))),
        }
    }
}

/// Runs one check under its default configuration with the given seed.
pub fn run_check(name: CheckName, seed: u64) -> Result<CheckReport> {
    match name {
        CheckName::Selfconcordance => {
            check_selfconcordance(&SelfConcordanceConfig { seed, ..Default::default() })
        }
        CheckName::LikelihoodSandwich => {
            check_likelihood_sandwich(&LikelihoodSandwichConfig { seed, ..Default::default() })
        }
        CheckName::TailBound => check_tail_bound(&TailBoundConfig { seed, ..Default::default() }),
        CheckName::MgfBound => check_mgf_bound(&MgfBoundConfig { seed, ..Default::default() }),
        CheckName::XstarScaling => {
            check_xstar_scaling(&XStarScalingConfig { seed, ..Default::default() })
        }
        CheckName::EvidenceLowerBound => {
            check_evidence_lower_bound(&EvidenceBoundConfig { seed, ..Default::default() })
        }
    }
}

// ---------------------------------------------------------------------
// Self-concordance of the log-partition along a line.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfConcordanceConfig {
    pub instances: usize,
    pub categories: Vec<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Absolute slack on `|eta'''| <= 4 ||v|| eta''`.
    pub slack: f64,
    /// Tolerance of the analytic-vs-finite-difference cross check.
    pub fd_tol: f64,
    pub seed: u64,
}

impl Default for SelfConcordanceConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            categories: vec![2, 3, 5],
            t_min: -5.0,
            t_max: 5.0,
            t_step: 0.01,
            slack: 1e-9,
            fd_tol: 1e-6,
            seed: 1,
        }
    }
}

/// First three derivatives of `eta(t) = log(1 + sum_j exp(w_j + t v_j))`,
/// from the shifted exponential sums `S_k = sum_j v_j^k exp(a_j)` and
/// `E = 1 + sum_j exp(a_j)`.
fn eta_derivatives(v: &[f64], w: &[f64], t: f64) -> (f64, f64, f64) {
    let shift = v
        .iter()
        .zip(w)
        .map(|(&vj, &wj)| wj + t * vj)
        .fold(0.0f64, f64::max);
    let mut e = (-shift).exp();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for (&vj, &wj) in v.iter().zip(w) {
        let ex = (wj + t * vj - shift).exp();
        e += ex;
        s1 += vj * ex;
        s2 += vj * vj * ex;
        s3 += vj * vj * vj * ex;
    }
    let r1 = s1 / e;
    let r2 = s2 / e;
    let r3 = s3 / e;
    let d1 = r1;
    let d2 = r2 - r1 * r1;
    let d3 = r3 - 3.0 * r2 * r1 + 2.0 * r1 * r1 * r1;
    (d1, d2, d3)
}

fn eta_value(v: &[f64], w: &[f64], t: f64) -> f64 {
    let a: Vec<f64> = v.iter().zip(w).map(|(&vj, &wj)| wj + t * vj).collect();
    crate::model::log_partition_unchecked(&a)
}

pub fn check_selfconcordance(cfg: &SelfConcordanceConfig) -> Result<CheckReport> {
    let mut report = CheckReport::new("selfconcordance", cfg.seed);
    report.tolerances.insert("slack".into(), cfg.slack);
    report.tolerances.insert("fd_tol".into(), cfg.fd_tol);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps = ((cfg.t_max - cfg.t_min) / cfg.t_step).round() as usize;
    let mut fd_worst = 0.0f64;
    for inst in 0..cfg.instances {
        let m = cfg.categories[inst % cfg.categories.len()];
        let k = m - 1;
        // Include the degenerate direction once: equality case.
        let v: Vec<f64> = if inst == 0 {
            vec![0.0; k]
        } else {
            (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
        };
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut worst = f64::INFINITY;
        for s in 0..=steps {
            let t = cfg.t_min + s as f64 * cfg.t_step;
            let (_, d2, d3) = eta_derivatives(&v, &w, t);
            let margin = 4.0 * vnorm * d2 + cfg.slack - d3.abs();
            if margin < worst {
                worst = margin;
            }
        }
        report.record(worst);
        // Cross-check the analytic second derivative against a central
        // second difference on a thinned subset.
        if inst % 50 == 0 {
            let h = 1e-4;
            for t in [-3.0, 0.0, 2.5] {
                let (_, d2, _) = eta_derivatives(&v, &w, t);
                let fd = (eta_value(&v, &w, t + h) - 2.0 * eta_value(&v, &w, t)
                    + eta_value(&v, &w, t - h))
                    / (h * h);
                let err = (d2 - fd).abs();
                if err > fd_worst {
                    fd_worst = err;
                }
                report.record(cfg.fd_tol - err);
            }
        }
    }
    report.details.insert("fd_worst_error".into(), fd_worst);
    Ok(report.finish())
}

// ---------------------------------------------------------------------
// Two-sided likelihood-ratio sandwich.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LikelihoodSandwichConfig {
    pub instances: usize,
    pub n_max: usize,
    pub m_max: usize,
    pub d_max: usize,
    pub coef_bound: f64,
    pub slack: f64,
    pub seed: u64,
}

impl Default for LikelihoodSandwichConfig {
    fn default() -> Self {
        Self { instances: 1000, n_max: 50, m_max: 4, d_max: 20, coef_bound: 3.0, slack: 1e-9, seed: 1 }
    }
}

pub fn check_likelihood_sandwich(cfg: &LikelihoodSandwichConfig) -> Result<CheckReport> {
    let mut report = CheckReport::new("likelihood_sandwich", cfg.seed);
    report.tolerances.insert("slack".into(), cfg.slack);
    let margins: Vec<(f64, f64)> = (0..cfg.instances)
        .into_par_iter()
        .map(|inst| {
            let seed = derive_seed(cfg.seed, inst as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..=cfg.n_max);
            let m = rng.random_range(2..=cfg.m_max);
            // Random group sizes of 1..=3 filling at most d_max columns.
            let mut sizes = Vec::new();
            let mut total = 0usize;
            loop {
                let g = rng.random_range(1..=3usize);
                if total + g > cfg.d_max || (total >= 4 && rng.random::<f64>() < 0.25) {
                    break;
                }
                sizes.push(g);
                total += g;
            }
            if sizes.is_empty() {
                sizes.push(1);
                total = 1;
            }
            let partition = GroupPartition::contiguous(&sizes).expect("valid sizes");
            let design = random_subgaussian_design(
                n,
                m,
                partition,
                EntryDistribution::Gaussian,
                derive_seed(seed, 1),
            )
            .expect("valid design");
            let draw = |rng: &mut ChaCha8Rng| {
                DVector::from_fn(total, |_, _| {
                    (rng.random::<f64>() * 2.0 - 1.0) * cfg.coef_bound
                })
            };
            let beta0 = draw(&mut rng);
            let beta = draw(&mut rng);
            let model = TrueModel::new(beta0.clone(), &design).expect("finite");
            let delta = &beta - &beta0;
            let xdelta = design.predict(&delta).expect("dims");
            let weighted = model.quadratic_form(&xdelta);
            let l21 = l21_norm(&delta, design.partition()).expect("dims");
            let lower =
                weighted / (2.0 + 4.0 * design.max_row_block_norm() * l21);
            let upper = 0.5 * xdelta.norm_squared();
            let center = log_likelihood_ratio_centered(&beta, &model, &design).expect("dims");
            (center - lower + cfg.slack, upper - center + cfg.slack)
        })
        .collect();
    for (lo, hi) in margins {
        report.record(lo);
        report.record(hi);
    }
    Ok(report.finish())
}

// ---------------------------------------------------------------------
// Tail probability of the max group score.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailBoundConfig {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub group_sizes: Vec<usize>,
    /// Entries of the truth alternate `+scale, -scale`.
    pub beta0_scale: f64,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for TailBoundConfig {
    fn default() -> Self {
        Self { p: 50, n: 100, m: 2, group_sizes: vec![1, 2], beta0_scale: 0.0, n_mc: 100_000, seed: 1 }
    }
}

pub fn check_tail_bound(cfg: &TailBoundConfig) -> Result<CheckReport> {
    let mut report = CheckReport::new("tail_bound", cfg.seed);
    report.tolerances.insert("mc_slack_se".into(), 3.0);
    for (case, &g) in cfg.group_sizes.iter().enumerate() {
        let partition = GroupPartition::contiguous(&vec![g; cfg.p])?;
        let design = random_subgaussian_design(
            cfg.n,
            cfg.m,
            partition,
            EntryDistribution::Gaussian,
            derive_seed(cfg.seed, 1000 + case as u64),
        )?;
        let beta0 = DVector::from_fn(design.dim(), |i, _| {
            if i % 2 == 0 { cfg.beta0_scale } else { -cfg.beta0_scale }
        });
        let model = TrueModel::new(beta0, &design)?;
        let threshold = 4.0
            * design.x_star_norm()
            * ((cfg.p as f64).ln().max(g as f64)).sqrt();
        let log_bound = -0.75 * log_dim_weight(cfg.p, cfg.n, g);
        let bound = log_bound.exp();
        let exceed: usize = (0..cfg.n_mc)
            .into_par_iter()
            .map(|r| {
                let y = simulate_responses(&model, derive_seed(cfg.seed, (case * cfg.n_mc + r) as u64));
                let resid = y.stacked() - model.mu();
                let score = design.matrix().transpose() * resid;
                let mut max_norm: f64 = 0.0;
                for grp in design.partition().iter() {
                    let nrm = grp.iter().map(|&c| score[c] * score[c]).sum::<f64>().sqrt();
                    max_norm = max_norm.max(nrm);
                }
                usize::from(max_norm > threshold)
            })
            .sum();
        let freq = exceed as f64 / cfg.n_mc as f64;
        let slack = 3.0 * (bound * (1.0 - bound) / cfg.n_mc as f64).sqrt();
        report.record(bound + slack - freq);
        report.details.insert(format!("freq_g{g}"), freq);
        report.details.insert(format!("bound_g{g}"), bound);
        report.details.insert(format!("threshold_g{g}"), threshold);
    }
    Ok(report.finish())
}

// ---------------------------------------------------------------------
// Moment generating function of quadratic forms of bounded vectors.
// ---------------------------------------------------------------------

/// Per-block finite support: the block law is uniform over `points`,
/// which must average to zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundedVectorSpec {
    pub blocks: Vec<Vec<Vec<f64>>>,
}

impl BoundedVectorSpec {
    /// Validates mean-zero blocks and returns `(dims, b_bar, b_tilde)`:
    /// per-block dimension, max point norm, max pairwise diameter.
    pub fn validate(&self) -> Result<(Vec<usize>, f64, f64)> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidInput("bounded-vector spec needs blocks".into()));
        }
        let mut dims = Vec::with_capacity(self.blocks.len());
        let mut b_bar = 0.0f64;
        let mut b_tilde = 0.0f64;
        for (j, pts) in self.blocks.iter().enumerate() {
            if pts.is_empty() {
                return Err(Error::InvalidInput(format!("block {j} has no points")));
            }
            let r = pts[0].len();
            if pts.iter().any(|p| p.len() != r) {
                return Err(Error::InvalidInput(format!("block {j} has ragged points")));
            }
            for k in 0..r {
                let mean: f64 = pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64;
                if mean.abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "block {j} coordinate {k} has mean {mean}, not zero"
                    )));
                }
            }
            for a in pts {
                let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                b_bar = b_bar.max(norm);
                for b in pts {
                    let dist = a
                        .iter()
                        .zip(b)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    b_tilde = b_tilde.max(dist);
                }
            }
            dims.push(r);
        }
        Ok((dims, b_bar, b_tilde))
    }

    /// `n` i.i.d. Rademacher scalars.
    pub fn rademacher_scalars(n: usize) -> Self {
        Self { blocks: vec![vec![vec![1.0], vec![-1.0]]; n] }
    }

    /// Centered two-point blocks in the plane.
    pub fn planar_pairs(n: usize, point: [f64; 2]) -> Self {
        Self {
            blocks: vec![
                vec![vec![point[0], point[1]], vec![-point[0], -point[1]]];
                n
            ],
        }
    }

    /// Mean-zero triangles in the plane (asymmetric three-point law).
    pub fn planar_triangles(n: usize) -> Self {
        let pts = vec![vec![1.0, 0.0], vec![-0.5, 0.8], vec![-0.5, -0.8]];
        Self { blocks: vec![pts; n] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgfBoundConfig {
    /// Fractions of the admissible upper limit at which to test.
    pub t_fractions: Vec<f64>,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for MgfBoundConfig {
    fn default() -> Self {
        Self { t_fractions: vec![0.1, 0.3, 0.5, 0.7, 0.9], n_mc: 100_000, seed: 1 }
    }
}

/// One spec/Q combination: asserts the MGF bound at every admissible `t`.
pub fn check_mgf_bound_case(
    spec: &BoundedVectorSpec,
    q: &DMatrix<f64>,
    cfg: &MgfBoundConfig,
    report: &mut CheckReport,
    case: u64,
) -> Result<()> {
    let (dims, b_bar, b_tilde) = spec.validate()?;
    let total_dim: usize = dims.iter().sum();
    if q.nrows() != total_dim || q.ncols() != total_dim {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}x{}, blocks stack to {total_dim}",
            q.nrows(),
            q.ncols()
        )));
    }
    let eig = q.clone().symmetric_eigen();
    let q_sp = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(Error::InvalidInput("Q must be positive semidefinite".into()));
    }
    let trace = q.trace();
    let t_limit = 1.0 / (2.0 * b_tilde * b_tilde * q_sp);
    // One set of draws serves every t.
    let quad_forms: Vec<f64> = (0..cfg.n_mc)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, case * 1_000_000 + r as u64));
            let mut z = DVector::zeros(total_dim);
            let mut offset = 0;
            for (j, pts) in spec.blocks.iter().enumerate() {
                let pick = rng.random_range(0..pts.len());
                for (k, &v) in pts[pick].iter().enumerate() {
                    z[offset + k] = v;
                }
                offset += dims[j];
            }
            (q * &z).dot(&z)
        })
        .collect();
    for &frac in &cfg.t_fractions {
        let t = frac * t_limit;
        if !(t > 0.0 && t < t_limit) {
            return Err(Error::InvalidInput(format!(
                "t fraction {frac} leaves the admissible range (limit {t_limit})"
            )));
        }
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for &qf in &quad_forms {
            let e = (t * qf).exp();
            sum += e;
            sumsq += e * e;
        }
        let nf = cfg.n_mc as f64;
        let mean = sum / nf;
        let var = (sumsq / nf - mean * mean).max(0.0);
        let rel_se = var.sqrt() / (mean * nf.sqrt());
        let bound =
            (t * b_bar * b_bar * trace / (1.0 - 2.0 * t * b_tilde * b_tilde * q_sp)).exp();
        report.record(bound * (1.0 + 3.0 * rel_se) - mean);
        report
            .details
            .insert(format!("case{case}_t{frac}_ratio"), mean / bound);
    }
    Ok(())
}

pub fn check_mgf_bound(cfg: &MgfBoundConfig) -> Result<CheckReport> {
    let mut report = CheckReport::new("mgf_bound", cfg.seed);
    report.tolerances.insert("mc_rel_se".into(), 3.0);
    // Spec 1: 20 Rademacher scalars with Q = I.
    let spec1 = BoundedVectorSpec::rademacher_scalars(20);
    check_mgf_bound_case(&spec1, &DMatrix::identity(20, 20), cfg, &mut report, 0)?;
    // Spec 2: planar two-point blocks with a random PSD Q.
    let spec2 = BoundedVectorSpec::planar_pairs(8, [0.6, 0.8]);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xABC));
    let a = DMatrix::from_fn(16, 16, |_, _| rng.random::<f64>() - 0.5);
    let q2 = &a * a.transpose() / 4.0;
    check_mgf_bound_case(&spec2, &q2, cfg, &mut report, 1)?;
    // Spec 3: planar triangles with diagonal Q.
    let spec3 = BoundedVectorSpec::planar_triangles(6);
    let q3 = DMatrix::from_diagonal(&DVector::from_fn(12, |i, _| 0.5 + (i % 3) as f64 * 0.25));
    check_mgf_bound_case(&spec3, &q3, cfg, &mut report, 2)?;
    Ok(report.finish())
}

// ---------------------------------------------------------------------
// Order of the group operator norm for random designs.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XStarScalingConfig {
    pub n_grid: Vec<usize>,
    pub p: usize,
    pub group_size: usize,
    pub m: usize,
    pub distributions: Vec<EntryDistribution>,
    pub n_rep: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub seed: u64,
}

impl Default for XStarScalingConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![200, 800, 3200],
            p: 50,
            group_size: 1,
            m: 2,
            distributions: vec![EntryDistribution::Gaussian, EntryDistribution::Rademacher],
            n_rep: 20,
            ratio_lo: 0.5,
            ratio_hi: 2.5,
            seed: 1,
        }
    }
}

pub fn check_xstar_scaling(cfg: &XStarScalingConfig) -> Result<CheckReport> {
    let mut report = CheckReport::new("xstar_scaling", cfg.seed);
    report.tolerances.insert("ratio_lo".into(), cfg.ratio_lo);
    report.tolerances.insert("ratio_hi".into(), cfg.ratio_hi);
    if cfg.n_grid.len() < 2 {
        return Err(Error::InvalidInput("xstar scaling needs at least two n values".into()));
    }
    let mut sorted = cfg.n_grid.clone();
    sorted.sort_unstable();
    for (dist_idx, &dist) in cfg.distributions.iter().enumerate() {
        let mut spreads = Vec::with_capacity(sorted.len());
        for (ni, &n) in sorted.iter().enumerate() {
            let ratios: Vec<f64> = (0..cfg.n_rep)
                .into_par_iter()
                .map(|r| {
                    let partition =
                        GroupPartition::contiguous(&vec![cfg.group_size; cfg.p]).expect("sizes");
                    let design = random_subgaussian_design(
                        n,
                        cfg.m,
                        partition,
                        dist,
                        derive_seed(cfg.seed, (dist_idx * 1000 + ni * 100 + r) as u64),
                    )
                    .expect("valid design");
                    design.x_star_norm() / ((n * (cfg.m - 1)) as f64).sqrt()
                })
                .collect();
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            spreads.push(max - min);
            // Window assertions at the two largest n.
            if ni + 2 >= sorted.len() {
                for &r in &ratios {
                    report.record(r - cfg.ratio_lo);
                    report.record(cfg.ratio_hi - r);
                }
            }
            report.details.insert(
                format!("dist{dist_idx}_n{n}_mean_ratio"),
                ratios.iter().sum::<f64>() / ratios.len() as f64,
            );
            report
                .details
                .insert(format!("dist{dist_idx}_n{n}_spread"), max - min);
        }
        // The fluctuation band must tighten with n.
        report.record(spreads[0] - spreads[spreads.len() - 1]);
    }
    Ok(report.finish())
}

// ---------------------------------------------------------------------
// Evidence lower bound.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceBoundConfig {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    /// Value of the single active coordinate; zero turns the case into the
    /// null-truth extension with `s0 = 0`.
    pub beta0_value: f64,
    pub a: f64,
    pub n_datasets: usize,
    pub oracle_rel_tol: f64,
    pub seed: u64,
}

impl Default for EvidenceBoundConfig {
    fn default() -> Self {
        Self {
            p: 3,
            n: 30,
            m: 2,
            beta0_value: 0.5,
            a: 1.0,
            n_datasets: 20,
            oracle_rel_tol: 1e-5,
            seed: 1,
        }
    }
}

pub fn check_evidence_lower_bound(cfg: &EvidenceBoundConfig) -> Result<CheckReport> {
    let mut report = CheckReport::new("evidence_lower_bound", cfg.seed);
    report.tolerances.insert("oracle_rel_tol".into(), cfg.oracle_rel_tol);
    let partition = GroupPartition::singletons(cfg.p);
    let design = random_subgaussian_design(
        cfg.n,
        cfg.m,
        partition,
        EntryDistribution::Gaussian,
        derive_seed(cfg.seed, 0xE0),
    )?;
    let mut beta0 = DVector::zeros(cfg.p);
    beta0[0] = cfg.beta0_value;
    let model = TrueModel::new(beta0.clone(), &design)?;
    if model.d0() > cfg.n {
        return Err(Error::InvalidInput("evidence bound requires d0 <= n".into()));
    }
    let prior = PriorSpec::from_design(&design, cfg.a)?;
    let s0 = model.s0();
    let l21_beta0 = l21_norm(&beta0, design.partition())?;
    // With a null truth the bound extends continuously to s0 = 0.
    let log_bound = -1.0 / 128.0 - prior.lambda() * l21_beta0 + prior.log_pi_p(s0)?
        - 3.0 * s0 as f64 * prior.log_dim_weight();
    report.details.insert("log_bound".into(), log_bound);
    let oracle_cfg = OracleConfig { rel_tol: cfg.oracle_rel_tol, ..Default::default() };
    let margins: Vec<(f64, f64)> = (0..cfg.n_datasets)
        .into_par_iter()
        .map(|k| {
            let y = simulate_responses(&model, derive_seed(cfg.seed, 100 + k as u64));
            let log_ev = log_evidence(&y, &design, &prior, &oracle_cfg).expect("within caps");
            let loglik0 = log_likelihood(&beta0, &design, &y).expect("dims");
            let log_ratio = log_ev - loglik0;
            (log_ratio - log_bound, log_ratio)
        })
        .collect();
    let mut worst_ratio = f64::INFINITY;
    for (margin, log_ratio) in margins {
        report.record(margin);
        if log_ratio < worst_ratio {
            worst_ratio = log_ratio;
        }
    }
    report.details.insert("worst_log_evidence_ratio".into(), worst_ratio);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::GroupedDesign;
    use approx::assert_relative_eq;

    #[test]
    fn selfconcordance_small_run_passes() {
        let cfg = SelfConcordanceConfig { instances: 60, t_step: 0.05, ..Default::default() };
        let report = check_selfconcordance(&cfg).unwrap();
        assert!(report.pass, "worst margin {}", report.worst_margin);
    }

    #[test]
    fn selfconcordance_zero_direction_is_equality() {
        let (d1, d2, d3) = eta_derivatives(&[0.0, 0.0], &[0.3, -0.7], 1.2);
        assert_relative_eq!(d1, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d2, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d3, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn selfconcordance_binary_case_well_inside_bound() {
        // m = 2 reduces to the scalar logistic derivative chain, which
        // satisfies |eta'''| <= |v| eta'' <= 4 |v| eta''.
        let v = [1.7];
        let w = [-0.4];
        for t in [-2.0, 0.0, 1.5] {
            let (_, d2, d3) = eta_derivatives(&v, &w, t);
            assert!(d3.abs() <= v[0].abs() * d2 + 1e-12);
        }
    }

    #[test]
    fn sandwich_small_run_passes() {
        let cfg = LikelihoodSandwichConfig { instances: 120, ..Default::default() };
        let report = check_likelihood_sandwich(&cfg).unwrap();
        assert!(report.pass, "worst margin {}", report.worst_margin);
        assert_eq!(report.instances, 240);
    }

    #[test]
    fn sandwich_scalar_closed_form() {
        // One observation, binary response, scalar design: the centered
        // ratio is the Bregman divergence of log(1 + e^theta).
        let x = DMatrix::from_element(1, 1, 1.3);
        let design =
            GroupedDesign::new(1, 2, x, GroupPartition::singletons(1)).unwrap();
        let beta0 = DVector::from_vec(vec![0.4]);
        let beta = DVector::from_vec(vec![-1.1]);
        let model = TrueModel::new(beta0.clone(), &design).unwrap();
        let theta0 = 1.3 * 0.4;
        let theta = 1.3 * -1.1;
        let b = |t: f64| (1.0 + t.exp()).ln();
        let sigma = 1.0 / (1.0 + (-theta0 as f64).exp());
        let bregman = b(theta) - b(theta0) - sigma * (theta - theta0);
        assert_relative_eq!(
            log_likelihood_ratio_centered(&beta, &model, &design).unwrap(),
            bregman,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tail_bound_zero_design_is_trivial() {
        // X = 0 gives a zero statistic, below any positive threshold...
        // except the threshold is 0 too, so the exceedance count stays 0
        // because the comparison is strict.
        let partition = GroupPartition::singletons(2);
        let design = GroupedDesign::new(5, 2, DMatrix::zeros(5, 2), partition).unwrap();
        let model = TrueModel::new(DVector::zeros(2), &design).unwrap();
        let y = simulate_responses(&model, 3);
        let resid = y.stacked() - model.mu();
        let score = design.matrix().transpose() * resid;
        assert_eq!(score.norm(), 0.0);
    }

    #[test]
    fn tail_bound_small_run_passes() {
        let cfg = TailBoundConfig { p: 20, n: 40, n_mc: 4_000, ..Default::default() };
        let report = check_tail_bound(&cfg).unwrap();
        assert!(report.pass, "details {:?}", report.details);
    }

    #[test]
    fn mgf_rademacher_matches_hand_computed_bound() {
        let spec = BoundedVectorSpec::rademacher_scalars(20);
        let (dims, b_bar, b_tilde) = spec.validate().unwrap();
        assert_eq!(dims.iter().sum::<usize>(), 20);
        assert_relative_eq!(b_bar, 1.0, epsilon = 1e-15);
        assert_relative_eq!(b_tilde, 2.0, epsilon = 1e-15);
        // t = 0.05, Q = I: bound = exp(20*0.05 / (1 - 0.4)).
        let t = 0.05f64;
        let bound = (t * 1.0 * 20.0 / (1.0 - 2.0 * t * 4.0 * 1.0)).exp();
        assert_relative_eq!(bound, (1.0f64 / 0.6).exp(), epsilon = 1e-12);
        // Z^T Z = 20 deterministically for Rademacher scalars, so the MGF
        // is exactly exp(t * 20) <= bound.
        assert!((t * 20.0).exp() <= bound);
    }

    #[test]
    fn mgf_bound_small_run_passes() {
        let cfg = MgfBoundConfig { n_mc: 20_000, ..Default::default() };
        let report = check_mgf_bound(&cfg).unwrap();
        assert!(report.pass, "worst margin {}", report.worst_margin);
        assert!(report.instances >= 15);
    }

    #[test]
    fn mgf_rejects_inadmissible_t_and_non_psd() {
        let spec = BoundedVectorSpec::rademacher_scalars(4);
        let mut report = CheckReport::new("mgf_bound", 0);
        let cfg = MgfBoundConfig { t_fractions: vec![1.1], n_mc: 10, seed: 0 };
        assert!(check_mgf_bound_case(&spec, &DMatrix::identity(4, 4), &cfg, &mut report, 0)
            .is_err());
        let bad_q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5, 1.0, 1.0]));
        let cfg2 = MgfBoundConfig { t_fractions: vec![0.5], n_mc: 10, seed: 0 };
        assert!(check_mgf_bound_case(&spec, &bad_q, &cfg2, &mut report, 0).is_err());
    }

    #[test]
    fn mgf_q_zero_gives_unit_bound_and_unit_mgf() {
        let spec = BoundedVectorSpec::rademacher_scalars(3);
        let (_, b_bar, b_tilde) = spec.validate().unwrap();
        let q = DMatrix::<f64>::zeros(3, 3);
        let trace = q.trace();
        let t = 0.2;
        let bound: f64 = (t * b_bar * b_bar * trace / (1.0 - 0.0)).exp();
        assert_relative_eq!(bound, 1.0, epsilon = 1e-15);
        let _ = b_tilde;
    }

    #[test]
    fn xstar_identity_ratio_is_exact() {
        // Deterministic identity design: x_star = 1 exactly, so the
        // recorded ratio is 1/sqrt(n(m-1)).
        let d = 12usize;
        let m = 3usize;
        let n = d / (m - 1);
        let design = GroupedDesign::new(
            n,
            m,
            DMatrix::identity(d, d),
            GroupPartition::singletons(d),
        )
        .unwrap();
        let ratio = design.x_star_norm() / ((n * (m - 1)) as f64).sqrt();
        assert_relative_eq!(ratio, 1.0 / (d as f64).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn xstar_scaling_small_run_passes() {
        let cfg = XStarScalingConfig {
            n_grid: vec![100, 400],
            n_rep: 6,
            ..Default::default()
        };
        let report = check_xstar_scaling(&cfg).unwrap();
        assert!(report.pass, "details {:?}", report.details);
    }

    #[test]
    fn xstar_scaling_single_wide_group() {
        // One group holding all columns with d growing like n/10: the
        // ratio stays within the window at moderate sizes.
        let cfg = XStarScalingConfig {
            n_grid: vec![200, 400],
            p: 1,
            group_size: 40,
            n_rep: 4,
            ..Default::default()
        };
        let report = check_xstar_scaling(&cfg).unwrap();
        assert!(report.pass, "details {:?}", report.details);
    }

    #[test]
    fn evidence_bound_monotone_in_signal_norm() {
        // The bound's only dependence on beta0 is exp(-lambda l21), so it
        // decreases as the signal grows with everything else fixed.
        let lambda = 7.0;
        let bound = |l21: f64| -1.0 / 128.0 - lambda * l21;
        assert!(bound(0.5) > bound(1.0));
    }

    #[test]
    fn evidence_bound_small_run_passes() {
        let cfg = EvidenceBoundConfig { n_datasets: 3, ..Default::default() };
        let report = check_evidence_lower_bound(&cfg).unwrap();
        assert!(report.pass, "details {:?}", report.details);
    }

    #[test]
    fn evidence_bound_null_truth_extension() {
        let cfg = EvidenceBoundConfig { beta0_value: 0.0, n_datasets: 2, ..Default::default() };
        let report = check_evidence_lower_bound(&cfg).unwrap();
        assert!(report.pass);
    }
}
