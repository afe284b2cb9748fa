//! Subcommand implementations. Every command writes its artifacts into
//! the output directory, appends them to the manifest, and finishes with
//! the effective-config echo plus the manifest file.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grouplogit::design::{random_subgaussian_design, GroupPartition, GroupedDesign};
use grouplogit::geometry::CompatReport;
use grouplogit::io as glio;
use grouplogit::model::{simulate_responses, ResponseVector, TrueModel};
use grouplogit::posterior::{
    mcmc_run, occupancy, summarize, McmcConfig, MoveCounters, PosteriorSample, PosteriorSummary,
};
use grouplogit::prior::PriorSpec;
use grouplogit::util::derive_seed;
use grouplogit::verify::{
    run_check, run_contraction_experiment, run_dimension_experiment, CheckName, CheckReport,
};

use crate::config::RunConfig;
use crate::CliError;

/// Collects the files a run produces; the sorted list becomes the
/// manifest.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn finish(mut self, config: &RunConfig) -> Result<(), CliError> {
        self.files.sort();
        let manifest = serde_json::json!({ "files": self.files });
        std::fs::write(
            self.dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(self.dir.join("config_echo.toml"), config.to_toml())
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(())
    }
}

fn to_cli(err: grouplogit::Error) -> CliError {
    match err {
        grouplogit::Error::Io(e) => CliError::Io(e.to_string()),
        grouplogit::Error::Csv(e) => CliError::Io(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

/// Truth file schema: the dense coefficient vector.
#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    beta0: Vec<f64>,
}

fn read_truth(path: &str, design: &GroupedDesign) -> Result<TrueModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read truth {path}: {e}")))?;
    let truth: TruthFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid truth file {path}: {e}")))?;
    if truth.beta0.len() != design.dim() {
        return Err(CliError::Usage(format!(
            "truth has {} coefficients, design dimension is {}",
            truth.beta0.len(),
            design.dim()
        )));
    }
    TrueModel::new(DVector::from_vec(truth.beta0), design).map_err(to_cli)
}

fn load_design(config: &RunConfig) -> Result<GroupedDesign, CliError> {
    glio::read_design(Path::new(&config.paths.design), Path::new(&config.paths.groups))
        .map_err(to_cli)
}

fn build_prior(config: &RunConfig, design: &GroupedDesign) -> Result<PriorSpec, CliError> {
    match config.prior.lambda_override {
        Some(lambda) => PriorSpec::with_lambda(design, config.prior.a, lambda).map_err(to_cli),
        None => PriorSpec::from_design(design, config.prior.a).map_err(to_cli),
    }
}

// ---------------------------------------------------------------------

pub fn simulate(config: &mut RunConfig, out: &Path) -> Result<i32, CliError> {
    let mut outputs = Outputs::new(out)?;
    let sim = config.simulate.clone();
    let partition = GroupPartition::contiguous(&vec![sim.group_size; sim.p]).map_err(to_cli)?;
    let design = random_subgaussian_design(
        sim.n,
        config.model.m,
        partition,
        sim.distribution,
        derive_seed(config.run.seed, 0x51),
    )
    .map_err(to_cli)?;
    let mut beta0 = DVector::zeros(design.dim());
    for k in 0..sim.s0 {
        let group = k * sim.p / sim.s0.max(1);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for &c in design.partition().group(group) {
            beta0[c] = sign * sim.signal / (sim.group_size as f64).sqrt();
        }
    }
    let truth = TrueModel::new(beta0.clone(), &design).map_err(to_cli)?;
    let y = simulate_responses(&truth, derive_seed(config.run.seed, 0x52));

    let design_path = outputs.path("design.csv");
    let groups_path = outputs.path("groups.csv");
    glio::write_design(&design, &design_path, &groups_path).map_err(to_cli)?;
    let response_path = outputs.path("response.csv");
    glio::write_responses(&y, &response_path).map_err(to_cli)?;
    let truth_path = outputs.path("truth.json");
    glio::write_json(&TruthFile { beta0: beta0.as_slice().to_vec() }, &truth_path)
        .map_err(to_cli)?;

    // The echo points at the files this run wrote, so replaying it feeds
    // fit/diagnose the same inputs.
    config.paths.design = design_path.to_string_lossy().into_owned();
    config.paths.groups = groups_path.to_string_lossy().into_owned();
    config.paths.response = response_path.to_string_lossy().into_owned();
    config.paths.truth = Some(truth_path.to_string_lossy().into_owned());
    outputs.finish(config)?;
    Ok(0)
}

// ---------------------------------------------------------------------

/// JSON summary of a fit.
#[derive(Debug, Serialize)]
struct FitSummary {
    lambda: f64,
    a: f64,
    chains: usize,
    n_iter: usize,
    burn_in: usize,
    thin: usize,
    pooled_states: usize,
    inclusion: Vec<f64>,
    s_law: Vec<f64>,
    acceptance: Vec<MoveCounters>,
    final_rw_scale: Vec<f64>,
    /// Distance quantiles against the declared truth, when one was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    distances: Option<PosteriorSummary>,
}

pub fn fit(config: &RunConfig, out: &Path) -> Result<i32, CliError> {
    let mut outputs = Outputs::new(out)?;
    let design = load_design(config)?;
    let y: ResponseVector = glio::read_responses(
        Path::new(&config.paths.response),
        design.n(),
        design.m(),
    )
    .map_err(to_cli)?;
    let prior = build_prior(config, &design)?;
    let sampler = &config.sampler;
    let chains: Vec<PosteriorSample> = (0..sampler.chains)
        .into_par_iter()
        .map(|c| {
            let cfg = McmcConfig {
                n_iter: sampler.n_iter,
                burn_in: sampler.burn_in,
                seed: derive_seed(config.run.seed, 0xF17 + c as u64),
                move_probs: sampler.move_probs(),
                rw_scale: sampler.rw_scale,
                thin: sampler.thin,
                adapt: true,
                prior_only: false,
            };
            mcmc_run(&y, &design, &prior, &cfg)
        })
        .collect::<grouplogit::Result<_>>()
        .map_err(to_cli)?;

    for (c, chain) in chains.iter().enumerate() {
        let path = outputs.path(&format!("chain_{}.csv", c + 1));
        let mut wtr = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.to_string()))?;
        wtr.write_record(["iteration", "s_beta", "log_posterior", "support"])
            .map_err(|e| CliError::Io(e.to_string()))?;
        for state in &chain.states {
            let support = state
                .support
                .iter()
                .map(|j| (j + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ");
            wtr.write_record([
                state.iteration.to_string(),
                state.s_beta.to_string(),
                format!("{:?}", state.log_posterior),
                support,
            ])
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
        wtr.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }

    let refs: Vec<&PosteriorSample> = chains.iter().collect();
    let (inclusion, s_law) = occupancy(&refs, design.partition()).map_err(to_cli)?;
    let distances = match &config.paths.truth {
        Some(path) if Path::new(path).exists() => {
            let truth = read_truth(path, &design)?;
            Some(summarize(&refs, &truth, &design).map_err(to_cli)?)
        }
        _ => None,
    };
    let pooled_states = refs.iter().map(|s| s.post_burn_in().count()).sum();
    let summary = FitSummary {
        lambda: prior.lambda(),
        a: prior.a(),
        chains: sampler.chains,
        n_iter: sampler.n_iter,
        burn_in: sampler.burn_in,
        thin: sampler.thin,
        pooled_states,
        inclusion,
        s_law,
        acceptance: chains.iter().map(|c| c.counters).collect(),
        final_rw_scale: chains.iter().map(|c| c.final_rw_scale).collect(),
        distances,
    };
    let path = outputs.path("summary.json");
    glio::write_json(&summary, &path).map_err(to_cli)?;
    outputs.finish(config)?;
    Ok(0)
}

// ---------------------------------------------------------------------

pub fn diagnose(config: &RunConfig, out: &Path) -> Result<i32, CliError> {
    let mut outputs = Outputs::new(out)?;
    let design = load_design(config)?;
    let truth_path = config.paths.truth.as_ref().ok_or_else(|| {
        CliError::Usage(
            "diagnose requires paths.truth: the compatibility weighting is defined under a \
             declared truth"
                .into(),
        )
    })?;
    let truth = read_truth(truth_path, &design)?;
    let geo = config.geometry.to_config(derive_seed(config.run.seed, 0xD1A6));
    let report = CompatReport::compute(&design, &truth, config.prior.a, &geo).map_err(to_cli)?;
    let path = outputs.path("compat_report.json");
    glio::write_json(&report, &path).map_err(to_cli)?;
    outputs.finish(config)?;
    Ok(0)
}

// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct VerifySummary {
    checks: Vec<CheckOutcome>,
    all_pass: bool,
}

#[derive(Debug, Serialize)]
struct CheckOutcome {
    name: String,
    pass: bool,
    violations: usize,
}

pub fn verify(config: &RunConfig, out: &Path, check_flag: Option<&str>) -> Result<i32, CliError> {
    let mut outputs = Outputs::new(out)?;
    let requested: Vec<String> = match check_flag {
        Some(c) => vec![c.to_string()],
        None => config.verify.checks.clone(),
    };
    let names: Vec<CheckName> = if requested.iter().any(|c| c == "all") {
        CheckName::ALL.to_vec()
    } else {
        requested
            .iter()
            .map(|c| c.parse::<CheckName>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let mut outcomes = Vec::new();
    let mut all_pass = true;
    for name in names {
        let report: CheckReport = run_check(name, config.run.seed).map_err(to_cli)?;
        let path = outputs.path(&format!("check_{}.json", name.as_str()));
        glio::write_json(&report, &path).map_err(to_cli)?;
        println!(
            "{} {}: {} instances, {} violations, worst margin {:.3e}",
            if report.pass { "PASS" } else { "FAIL" },
            report.name,
            report.instances,
            report.violations,
            report.worst_margin
        );
        all_pass &= report.pass;
        outcomes.push(CheckOutcome {
            name: name.as_str().to_string(),
            pass: report.pass,
            violations: report.violations,
        });
    }
    let summary = VerifySummary { checks: outcomes, all_pass };
    let path = outputs.path("verify_summary.json");
    glio::write_json(&summary, &path).map_err(to_cli)?;
    outputs.finish(config)?;
    Ok(if all_pass { 0 } else { 1 })
}

// ---------------------------------------------------------------------

pub fn experiment(config: &RunConfig, out: &Path, kind_flag: Option<&str>) -> Result<i32, CliError> {
    let mut outputs = Outputs::new(out)?;
    let mut cfg = config.clone();
    if let Some(kind) = kind_flag {
        cfg.experiment.kind = kind.to_string();
        cfg.validate()?;
    }
    let exp = cfg.experiment_config()?;
    let (pass, name) = if cfg.experiment.kind == "contraction" {
        let report = run_contraction_experiment(&exp).map_err(to_cli)?;
        let path = outputs.path("experiment_contraction.json");
        glio::write_json(&report, &path).map_err(to_cli)?;
        println!(
            "{} contraction: raw l2 decreasing = {}, normalized bounded = {}",
            if report.pass { "PASS" } else { "FAIL" },
            report.raw_l2_strictly_decreasing,
            report.normalized_within_factor_three
        );
        (report.pass, "contraction")
    } else {
        let report = run_dimension_experiment(&exp).map_err(to_cli)?;
        let path = outputs.path("experiment_dimension.json");
        glio::write_json(&report, &path).map_err(to_cli)?;
        println!(
            "{} dimension: trend nonincreasing = {}, tail below 0.05 = {}",
            if report.pass { "PASS" } else { "FAIL" },
            report.trend_nonincreasing,
            report.tail_below_005
        );
        (report.pass, "dimension")
    };
    let _ = name;
    outputs.finish(&cfg)?;
    Ok(if pass { 0 } else { 1 })
}
