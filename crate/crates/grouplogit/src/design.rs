//! Grouped design matrices and the norms attached to them.
//!
//! A design couples an `n(m-1) x d` real matrix with a partition of its
//! columns into `p` groups. Rows are stacked observation-major: the
//! `(m-1)` rows of observation `i` sit at indices `i*(m-1) .. (i+1)*(m-1)`.
//! Builders emit columns in group-major order so that each group occupies a
//! contiguous column range, but the partition type itself accepts arbitrary
//! disjoint index sets.

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// An ordered partition of the column indices `0..d` into `p` disjoint
/// non-empty groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupPartition {
    /// Validates that `groups` partitions `0..d` where `d` is the total
    /// number of indices: disjoint, no gaps, every group non-empty.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let dim: usize = groups.iter().map(|g| g.len()).sum();
        if groups.is_empty() {
            return Err(Error::InvalidPartition("no groups".into()));
        }
        let mut seen = vec![false; dim];
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidPartition(format!("group {j} is empty")));
            }
            for &c in g {
                if c >= dim {
                    return Err(Error::InvalidPartition(format!(
                        "column index {c} out of range for dimension {dim}"
                    )));
                }
                if seen[c] {
                    return Err(Error::InvalidPartition(format!(
                        "column {c} appears in more than one group"
                    )));
                }
                seen[c] = true;
            }
        }
        // Disjointness plus the count check makes full coverage automatic.
        Ok(Self { groups, dim })
    }

    /// Group-major contiguous partition: group `j` covers the next
    /// `sizes[j]` columns.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut groups = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            groups.push((start..start + s).collect());
            start += s;
        }
        Self::new(groups)
    }

    /// All groups of size one.
    pub fn singletons(d: usize) -> Self {
        Self::contiguous(&vec![1; d]).expect("singleton partition is always valid")
    }

    /// Number of groups `p`.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Total column dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Column indices of group `j`.
    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    /// Size of group `j`.
    pub fn size(&self, j: usize) -> usize {
        self.groups[j].len()
    }

    /// Largest group size.
    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(|g| g.len()).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.groups.iter().map(|g| g.as_slice())
    }

    /// Restriction to a subset of groups, renumbering columns to the
    /// order in which they appear in `support`.
    pub fn restrict(&self, support: &[usize]) -> Result<Self> {
        let sizes: Vec<usize> = support
            .iter()
            .map(|&j| {
                if j < self.groups.len() {
                    Ok(self.groups[j].len())
                } else {
                    Err(Error::InvalidInput(format!("group index {j} out of range")))
                }
            })
            .collect::<Result<_>>()?;
        Self::contiguous(&sizes)
    }

    /// Flat column indices of all groups in `support`, in support order.
    pub fn columns_of(&self, support: &[usize]) -> Vec<usize> {
        support.iter().flat_map(|&j| self.groups[j].iter().copied()).collect()
    }
}

/// A design matrix with `n(m-1)` rows, a group partition of its columns,
/// and cached norms. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    n: usize,
    m: usize,
    x: DMatrix<f64>,
    partition: GroupPartition,
    x_star: OnceLock<f64>,
    max_row_block: OnceLock<f64>,
}

impl GroupedDesign {
    pub fn new(n: usize, m: usize, x: DMatrix<f64>, partition: GroupPartition) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("category count m={m} must be >= 2")));
        }
        if n == 0 {
            return Err(Error::InvalidInput("observation count n must be positive".into()));
        }
        if x.nrows() != n * (m - 1) {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, expected n(m-1) = {}",
                x.nrows(),
                n * (m - 1)
            )));
        }
        if x.ncols() != partition.dim() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns but partition covers {}",
                x.ncols(),
                partition.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix entry".into()));
        }
        Ok(Self { n, m, x, partition, x_star: OnceLock::new(), max_row_block: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Total coefficient dimension `d`.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// The `(m-1) x d` row block of observation `i`.
    pub fn row_block(&self, i: usize) -> DMatrixView<'_, f64> {
        self.x.view((i * (self.m - 1), 0), (self.m - 1, self.dim()))
    }

    /// The `n(m-1) x g_j` column block of group `j` (copies the columns).
    pub fn group_columns(&self, j: usize) -> DMatrix<f64> {
        self.x.select_columns(self.partition.group(j))
    }

    /// Linear predictor `X beta`, stacked like the rows of the design.
    pub fn predict(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        if beta.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, design dimension is {}",
                beta.len(),
                self.dim()
            )));
        }
        Ok(&self.x * beta)
    }

    /// `max_j ||X_{.j}||_sp`: the largest spectral norm of a group column
    /// block. Cached after the first call.
    pub fn x_star_norm(&self) -> f64 {
        *self.x_star.get_or_init(|| {
            (0..self.partition.group_count())
                .map(|j| spectral_norm(&self.group_columns(j)))
                .fold(0.0, f64::max)
        })
    }

    /// `max_i ||X_i||_*`: the group norm applied to each observation's
    /// `(m-1) x d` row block, maximized over observations.
    pub fn max_row_block_norm(&self) -> f64 {
        *self.max_row_block.get_or_init(|| {
            let mut best = 0.0f64;
            for i in 0..self.n {
                let block = self.row_block(i);
                for g in self.partition.iter() {
                    let sub = block.select_columns(g);
                    best = best.max(spectral_norm(&sub));
                }
            }
            best
        })
    }

    /// Max absolute entry of the design.
    pub fn max_abs_entry(&self) -> f64 {
        self.x.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// A copy of the design with every entry multiplied by `c`, sharing the
    /// partition. Norm caches are rebuilt lazily.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.m, &self.x * c, self.partition.clone())
    }
}

/// A group-sparse coefficient vector: a sorted support of group indices and
/// the dense values of those groups, concatenated in support order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoef {
    support: Vec<usize>,
    values: DVector<f64>,
}

impl SparseCoef {
    /// `values` concatenates the coefficient blocks of the groups in
    /// `support`, which must be strictly increasing.
    pub fn new(support: Vec<usize>, values: DVector<f64>, partition: &GroupPartition) -> Result<Self> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("support must be strictly increasing".into()));
        }
        if let Some(&j) = support.iter().find(|&&j| j >= partition.group_count()) {
            return Err(Error::InvalidInput(format!("group index {j} out of range")));
        }
        let d_s: usize = support.iter().map(|&j| partition.size(j)).sum();
        if values.len() != d_s {
            return Err(Error::DimensionMismatch(format!(
                "values has length {}, support dimension is {d_s}",
                values.len()
            )));
        }
        Ok(Self { support, values })
    }

    /// The empty model: no groups, zero coefficients.
    pub fn empty() -> Self {
        Self { support: Vec::new(), values: DVector::zeros(0) }
    }

    /// Extracts the support of exactly nonzero blocks from a dense vector.
    pub fn from_dense(beta: &DVector<f64>, partition: &GroupPartition) -> Result<Self> {
        if beta.len() != partition.dim() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, partition dimension is {}",
                beta.len(),
                partition.dim()
            )));
        }
        let mut support = Vec::new();
        let mut vals = Vec::new();
        for j in 0..partition.group_count() {
            let g = partition.group(j);
            if g.iter().any(|&c| beta[c] != 0.0) {
                support.push(j);
                vals.extend(g.iter().map(|&c| beta[c]));
            }
        }
        Ok(Self { support, values: DVector::from_vec(vals) })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Number of groups in the support.
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// Effective group dimension `s_beta`: support groups whose block is
    /// not identically zero.
    pub fn effective_size(&self, partition: &GroupPartition) -> usize {
        let mut count = 0;
        let mut offset = 0;
        for &j in &self.support {
            let g = partition.size(j);
            if (offset..offset + g).any(|k| self.values[k] != 0.0) {
                count += 1;
            }
            offset += g;
        }
        count
    }

    /// Total dimension of the support blocks.
    pub fn block_dim(&self, partition: &GroupPartition) -> usize {
        self.support.iter().map(|&j| partition.size(j)).sum()
    }

    /// Dense vector with zeros off the support.
    pub fn densify(&self, partition: &GroupPartition) -> DVector<f64> {
        let mut beta = DVector::zeros(partition.dim());
        let mut offset = 0;
        for &j in &self.support {
            for &c in partition.group(j) {
                beta[c] = self.values[offset];
                offset += 1;
            }
        }
        beta
    }

    /// The block of values belonging to support entry `k` (not group id).
    pub fn block(&self, k: usize, partition: &GroupPartition) -> DVector<f64> {
        let mut offset = 0;
        for (idx, &j) in self.support.iter().enumerate() {
            let g = partition.size(j);
            if idx == k {
                return self.values.rows(offset, g).into_owned();
            }
            offset += g;
        }
        panic!("block index {k} out of range");
    }
}

/// `sum_j ||beta_j||_2` over the groups of `partition`.
pub fn l21_norm(beta: &DVector<f64>, partition: &GroupPartition) -> Result<f64> {
    if beta.len() != partition.dim() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, partition dimension is {}",
            beta.len(),
            partition.dim()
        )));
    }
    Ok(l21_norm_unchecked(beta.as_slice(), partition))
}

pub(crate) fn l21_norm_unchecked(beta: &[f64], partition: &GroupPartition) -> f64 {
    partition
        .iter()
        .map(|g| g.iter().map(|&c| beta[c] * beta[c]).sum::<f64>().sqrt())
        .sum()
}

/// `||X||_* = max_j ||X_{.j}||_sp`.
pub fn x_star_norm(design: &GroupedDesign) -> f64 {
    design.x_star_norm()
}

/// `max_i ||X_i||_*` over observation row blocks.
pub fn max_row_block_norm(design: &GroupedDesign) -> f64 {
    design.max_row_block_norm()
}

/// Spectral norm (largest singular value) of a rectangular matrix.
///
/// Exact symmetric eigensolve of the smaller-side Gram matrix when that
/// side has dimension <= 64; power iteration (relative tolerance 1e-10,
/// at most 10 000 iterations) above.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() { a * a.transpose() } else { a.transpose() * a };
    let k = gram.nrows();
    if k == 1 {
        return gram[(0, 0)].max(0.0).sqrt();
    }
    if k <= 64 {
        let eig = gram.symmetric_eigenvalues();
        eig.iter().fold(0.0f64, |acc, &v| acc.max(v)).sqrt()
    } else {
        power_iteration_lambda_max(&gram).sqrt()
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn power_iteration_lambda_max(gram: &DMatrix<f64>) -> f64 {
    let k = gram.nrows();
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    // Deterministic perturbation so symmetric starting points cannot be
    // orthogonal to the leading eigenvector.
    for i in 0..k {
        v[i] += 1e-3 * ((i as f64) + 1.0).sin();
    }
    v /= v.norm();
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-10 * next.abs().max(1e-300) {
            return next.max(0.0);
        }
        lambda = next;
    }
    lambda.max(0.0)
}

/// Entry laws for random sub-Gaussian designs. All are mean-zero with unit
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    Uniform,
}

/// Design with `n(m-1)` independent rows of i.i.d. mean-zero unit-variance
/// entries of the chosen law. Deterministic in `seed`.
pub fn random_subgaussian_design(
    n: usize,
    m: usize,
    partition: GroupPartition,
    distribution: EntryDistribution,
    seed: u64,
) -> Result<GroupedDesign> {
    let rows = n * (m - 1);
    let d = partition.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(rows, d);
    // Row-major fill order: one row at a time, matching the independence
    // structure of the rows.
    for r in 0..rows {
        for c in 0..d {
            x[(r, c)] = match distribution {
                EntryDistribution::Gaussian => StandardNormal.sample(&mut rng),
                EntryDistribution::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                EntryDistribution::Uniform => {
                    // U(-sqrt(3), sqrt(3)) has unit variance.
                    let u: f64 = rng.random();
                    (2.0 * u - 1.0) * 3f64.sqrt()
                }
            };
        }
    }
    GroupedDesign::new(n, m, x, partition)
}

/// Multinomial-logit design from an `n x p` covariate matrix.
///
/// Observation `i` carries the row block `I_{m-1} (x) Z_i^T` with columns
/// permuted to group-major order: group `j` holds the `m-1` coefficients
/// tied to covariate `j`, stored contiguously. Column `(j, l)` (category
/// `l` of covariate `j`) is `z[i][j]` on the category-`l` row and zero on
/// the others.
pub fn build_multinomial_design(z: &DMatrix<f64>, m: usize) -> Result<GroupedDesign> {
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::InvalidInput("covariate matrix must be non-empty".into()));
    }
    if m < 2 {
        return Err(Error::InvalidInput(format!("category count m={m} must be >= 2")));
    }
    let n = z.nrows();
    let p = z.ncols();
    let d = p * (m - 1);
    let mut x = DMatrix::zeros(n * (m - 1), d);
    for i in 0..n {
        for l in 0..m - 1 {
            let row = i * (m - 1) + l;
            for j in 0..p {
                x[(row, j * (m - 1) + l)] = z[(i, j)];
            }
        }
    }
    let partition = GroupPartition::contiguous(&vec![m - 1; p])?;
    GroupedDesign::new(n, m, x, partition)
}
