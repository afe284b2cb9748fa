//! Numerical verification harness.
//!
//! Each check draws randomized instances from a seeded stream, tests a
//! finite-sample inequality exactly as stated (with a small numerical
//! slack where the assertion is an identity, or a three-standard-error
//! Monte Carlo slack where it is probabilistic), and emits a
//! machine-readable [`CheckReport`]. The two `run_*` experiments simulate
//! growing sample sizes and assert finite-n trends standing in for the
//! asymptotic statements.

mod checks;
mod experiments;

pub use checks::{
    check_evidence_lower_bound, check_likelihood_sandwich, check_mgf_bound,
    check_selfconcordance, check_tail_bound, check_xstar_scaling, run_check, BoundedVectorSpec,
    CheckName, EvidenceBoundConfig, LikelihoodSandwichConfig, MgfBoundConfig,
    SelfConcordanceConfig, TailBoundConfig, XStarScalingConfig,
};
pub use experiments::{
    run_contraction_experiment, run_dimension_experiment, ContractionPoint, ContractionReport,
    DimensionPoint, DimensionReport, ExperimentConfig, SamplerValidation,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Outcome of one verification check.
///
/// `pass` holds exactly when `violations == 0` under the stated
/// tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// Instances (or grid points, or replicate batches) tested.
    pub instances: usize,
    pub violations: usize,
    /// Most adverse signed margin observed: the smallest slack before a
    /// violation (negative values are violations).
    pub worst_margin: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub pass: bool,
    /// Free-form numeric diagnostics (frequencies, bounds, ratios).
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            tolerances: BTreeMap::new(),
            seed,
            pass: false,
            details: BTreeMap::new(),
        }
    }

    /// Records one tested predicate with its signed slack margin
    /// (`margin >= 0` means the inequality held).
    fn record(&mut self, margin: f64) {
        self.instances += 1;
        if margin < 0.0 {
            self.violations += 1;
        }
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.violations == 0;
        self
    }
}
