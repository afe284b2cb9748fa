//! Run configuration: TOML sections, defaults, flag overrides, and the
//! effective-config echo.
//!
//! The output directory is deliberately not part of the file, so an
//! echoed configuration can be replayed into a fresh directory and
//! compared byte for byte.

use serde::{Deserialize, Serialize};
use std::path::Path;

use grouplogit::design::EntryDistribution;
use grouplogit::geometry::GeometryConfig;
use grouplogit::posterior::MoveProbs;
use grouplogit::verify::ExperimentConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub paths: PathsSection,
    pub simulate: SimulateSection,
    pub prior: PriorSection,
    pub sampler: SamplerSection,
    pub geometry: GeometrySection,
    pub experiment: ExperimentSection,
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub m: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { m: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub design: String,
    pub groups: String,
    pub response: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            design: "design.csv".into(),
            groups: "groups.csv".into(),
            response: "response.csv".into(),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n: usize,
    pub p: usize,
    pub group_size: usize,
    pub s0: usize,
    pub signal: f64,
    pub distribution: EntryDistribution,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: 100,
            p: 10,
            group_size: 2,
            s0: 2,
            signal: 1.0,
            distribution: EntryDistribution::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub a: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_override: Option<f64>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { a: 1.0, lambda_override: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_iter: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub thin: usize,
    pub rw_scale: f64,
    pub move_add: f64,
    pub move_remove: f64,
    pub move_swap: f64,
    pub move_within: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let mp = MoveProbs::default();
        Self {
            n_iter: 100_000,
            burn_in: 20_000,
            chains: 2,
            thin: 10,
            rw_scale: 2.4,
            move_add: mp.add,
            move_remove: mp.remove,
            move_swap: mp.swap,
            move_within: mp.within,
        }
    }
}

impl SamplerSection {
    pub fn move_probs(&self) -> MoveProbs {
        MoveProbs {
            add: self.move_add,
            remove: self.move_remove,
            swap: self.move_swap,
            within: self.move_within,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub cone_constant: f64,
    pub samples: usize,
    pub polish_steps: usize,
    pub enumeration_cap: usize,
    pub random_supports: usize,
    pub inner_samples: usize,
    pub inner_polish_steps: usize,
    pub m2: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = GeometryConfig::default();
        Self {
            cone_constant: g.cone_constant,
            samples: g.samples,
            polish_steps: g.polish_steps,
            enumeration_cap: g.enumeration_cap,
            random_supports: g.random_supports,
            inner_samples: g.inner_samples,
            inner_polish_steps: g.inner_polish_steps,
            m2: 3.4,
        }
    }
}

impl GeometrySection {
    pub fn to_config(&self, seed: u64) -> GeometryConfig {
        GeometryConfig {
            cone_constant: self.cone_constant,
            samples: self.samples,
            polish_steps: self.polish_steps,
            enumeration_cap: self.enumeration_cap,
            random_supports: self.random_supports,
            inner_samples: self.inner_samples,
            inner_polish_steps: self.inner_polish_steps,
            seed,
            ..GeometryConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: String,
    pub n_grid: Vec<usize>,
    pub p_factor: f64,
    pub s0: usize,
    pub group_size: usize,
    pub m: usize,
    pub a: f64,
    pub signal: f64,
    pub shrink_signal: bool,
    pub lambda_scale: f64,
    pub chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::dimension_default();
        Self {
            kind: "dimension".into(),
            n_grid: d.n_grid,
            p_factor: d.p_factor,
            s0: d.s0,
            group_size: d.group_size,
            m: d.m,
            a: d.a,
            signal: d.signal,
            shrink_signal: d.shrink_signal,
            lambda_scale: d.lambda_scale,
            chains: d.chains,
            n_iter: d.n_iter,
            burn_in: d.burn_in,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub checks: Vec<String>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { checks: vec!["all".into()] }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Constraint validation beyond TOML types, naming the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.m < 2 {
            return Err(CliError::Usage(format!("model.m = {} must be >= 2", self.model.m)));
        }
        if self.prior.a <= 0.0 {
            return Err(CliError::Usage(format!("prior.a = {} must be positive", self.prior.a)));
        }
        if let Some(l) = self.prior.lambda_override {
            if l <= 0.0 {
                return Err(CliError::Usage(format!(
                    "prior.lambda_override = {l} must be positive"
                )));
            }
        }
        if self.sampler.n_iter <= self.sampler.burn_in {
            return Err(CliError::Usage(format!(
                "sampler.n_iter = {} must exceed sampler.burn_in = {}",
                self.sampler.n_iter, self.sampler.burn_in
            )));
        }
        if self.sampler.chains == 0 {
            return Err(CliError::Usage("sampler.chains must be at least 1".into()));
        }
        self.sampler
            .move_probs()
            .validate()
            .map_err(|e| CliError::Usage(format!("sampler move probabilities: {e}")))?;
        if self.geometry.m2 <= 3.0 {
            return Err(CliError::Usage(format!(
                "geometry.m2 = {} must exceed 3",
                self.geometry.m2
            )));
        }
        if self.experiment.kind != "dimension" && self.experiment.kind != "contraction" {
            return Err(CliError::Usage(format!(
                "experiment.kind = '{}' must be 'dimension' or 'contraction'",
                self.experiment.kind
            )));
        }
        if self.simulate.s0 > self.simulate.p {
            return Err(CliError::Usage(format!(
                "simulate.s0 = {} exceeds simulate.p = {}",
                self.simulate.s0, self.simulate.p
            )));
        }
        if self.simulate.p == 0 || self.simulate.group_size == 0 || self.simulate.n == 0 {
            return Err(CliError::Usage(
                "simulate.n, simulate.p, simulate.group_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig, CliError> {
        let base = if self.experiment.kind == "contraction" {
            ExperimentConfig::contraction_default()
        } else {
            ExperimentConfig::dimension_default()
        };
        let cfg = ExperimentConfig {
            n_grid: self.experiment.n_grid.clone(),
            p_factor: self.experiment.p_factor,
            s0: self.experiment.s0,
            group_size: self.experiment.group_size,
            m: self.experiment.m,
            m2: self.geometry.m2,
            a: self.experiment.a,
            signal: self.experiment.signal,
            shrink_signal: self.experiment.shrink_signal,
            lambda_scale: self.experiment.lambda_scale,
            chains: self.experiment.chains,
            n_iter: self.experiment.n_iter,
            burn_in: self.experiment.burn_in,
            thin: self.sampler.thin,
            rw_scale: self.sampler.rw_scale,
            move_probs: self.sampler.move_probs(),
            seed: self.run.seed,
            ..base
        };
        cfg.validate().map_err(|e| CliError::Usage(format!("experiment: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
