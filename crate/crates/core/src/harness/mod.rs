//! End-to-end experiments: ground truth, simulated measurements, spectral
//! initialization, projected descent and scoring against the truth.

pub mod matching;
pub mod render;
pub mod truth;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::initializer::{initialize_with_image, DomainBox, InitConfig, SpectralImage};
use crate::model::{
    make_gaussian_scheme, make_regular_scheme, phi, FourierScheme, MeasurementVector, ParamVector,
    SpikeTrain,
};
use crate::objective::ObjectiveContext;
use crate::solver::{solve, Scaling, SolverConfig, StepRule, StopStatus, Trace};

pub use matching::{match_spikes, Matching};
pub use render::{render_outputs, trajectory_svg};
pub use truth::{generate_ground_truth, simulate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeSpec {
    /// Gaussian random frequencies; `sigma` defaults to `π/ε`.
    Gaussian {
        m: usize,
        #[serde(default)]
        sigma: Option<f64>,
        #[serde(default = "default_true")]
        unit_weights: bool,
    },
    Regular {
        f_c: usize,
        base: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub epsilon_g: f64,
    pub k_in: usize,
}

/// Solver settings; the separation comes from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_true")]
    pub projection_enabled: bool,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub max_move: Option<f64>,
    #[serde(default)]
    pub grad_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            projection_enabled: true,
            step_rule: StepRule::default(),
            scaling: Scaling::default(),
            max_move: None,
            grad_tol: 0.0,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_max_iters() -> usize {
    500
}

fn default_amplitude_range() -> [f64; 2] {
    [0.5, 1.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub domain_box: DomainBox,
    #[serde(default = "default_amplitude_range")]
    pub amplitude_range: [f64; 2],
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub noise_level: f64,
    pub init: InitSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub seed: u64,
    /// Matching radius for scoring; defaults to `ε/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_radius: Option<f64>,
}

impl ExperimentConfig {
    /// Five spikes in the unit square from 120 Gaussian measurements,
    /// initialized from a 51×51 grid with `k_in = 20`.
    pub fn few_spikes(seed: u64) -> Self {
        let epsilon = 0.05;
        Self {
            d: 2,
            k: 5,
            epsilon,
            domain_box: DomainBox::unit(2),
            amplitude_range: default_amplitude_range(),
            scheme: SchemeSpec::Gaussian {
                m: 120,
                sigma: None,
                unit_weights: true,
            },
            noise_level: 0.0,
            init: InitSpec {
                epsilon_g: 0.02,
                k_in: 20,
            },
            solver: SolverSpec {
                max_move: Some(epsilon / 4.0),
                ..SolverSpec::default()
            },
            seed,
            match_radius: None,
        }
    }

    /// A hundred spikes separated by 0.01 in the unit square from 2000
    /// Gaussian measurements, with `ε_g = ε` and `k_in = 4k`.
    pub fn many_spikes(seed: u64) -> Self {
        let epsilon = 0.01;
        Self {
            d: 2,
            k: 100,
            epsilon,
            domain_box: DomainBox::unit(2),
            amplitude_range: default_amplitude_range(),
            scheme: SchemeSpec::Gaussian {
                m: 2000,
                sigma: Some(150.0),
                unit_weights: true,
            },
            noise_level: 0.0,
            init: InitSpec {
                epsilon_g: 0.01,
                k_in: 400,
            },
            solver: SolverSpec {
                max_move: Some(epsilon / 4.0),
                ..SolverSpec::default()
            },
            seed,
            match_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.domain_box.dimension() != self.d {
            return Err(Error::InvalidArgument(format!(
                "domain box has dimension {}, config says d = {}",
                self.domain_box.dimension(),
                self.d
            )));
        }
        self.domain_box.validate()?;
        self.init_config().validate()?;
        self.solver_config().validate()?;
        Ok(())
    }

    pub fn init_config(&self) -> InitConfig {
        InitConfig::new(self.init.k_in, self.init.epsilon_g)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iters: self.solver.max_iters,
            projection_enabled: self.solver.projection_enabled,
            step_rule: self.solver.step_rule,
            scaling: self.solver.scaling,
            max_move: self.solver.max_move,
            grad_tol: self.solver.grad_tol,
        }
    }

    pub fn match_radius(&self) -> f64 {
        self.match_radius.unwrap_or(self.epsilon / 2.0)
    }

    pub fn build_scheme(&self) -> Result<FourierScheme> {
        match self.scheme {
            SchemeSpec::Gaussian {
                m,
                sigma,
                unit_weights,
            } => {
                let sigma = sigma.unwrap_or(std::f64::consts::PI / self.epsilon);
                make_gaussian_scheme(m, self.d, sigma, unit_weights, self.seed)
            }
            SchemeSpec::Regular { f_c, base } => make_regular_scheme(f_c, self.d, base),
        }
    }
}

/// Scores of a recovery against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Truth index → recovered index.
    pub matching: Vec<Option<usize>>,
    pub matched: usize,
    pub max_position_error: Option<f64>,
    pub mean_position_error: Option<f64>,
    pub max_amplitude_error: Option<f64>,
    pub unmatched_truth: usize,
    pub unmatched_recovered: usize,
    pub truth_count: usize,
    pub final_spike_count: usize,
    pub initial_g: Option<f64>,
    pub final_g: Option<f64>,
    pub iterations: usize,
    pub status: StopStatus,
    pub wall_time_s: f64,
}

/// Matches `recovered` to `truth` within `radius` and summarizes errors and
/// the solver trace.
pub fn evaluate(
    recovered: &SpikeTrain,
    truth: &SpikeTrain,
    trace: &Trace,
    radius: f64,
) -> Result<RecoveryReport> {
    let matching = match_spikes(recovered, truth, radius)?;
    let mut position_errors = Vec::new();
    let mut amplitude_errors = Vec::new();
    for (t, r) in matching.pairs() {
        let (a, b) = (&truth.spikes()[t], &recovered.spikes()[r]);
        position_errors.push(crate::model::distance(&a.position, &b.position));
        amplitude_errors.push((a.amplitude - b.amplitude).abs());
    }
    let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
    let matched = matching.matched();
    Ok(RecoveryReport {
        matched,
        max_position_error: max(&position_errors),
        mean_position_error: (matched > 0)
            .then(|| position_errors.iter().sum::<f64>() / matched as f64),
        max_amplitude_error: max(&amplitude_errors),
        unmatched_truth: truth.len() - matched,
        unmatched_recovered: recovered.len() - matched,
        truth_count: truth.len(),
        final_spike_count: recovered.len(),
        initial_g: trace.iterations.first().map(|r| r.g),
        final_g: trace.last().map(|r| r.g),
        iterations: trace.iterations.len().saturating_sub(1),
        status: trace.status,
        wall_time_s: 0.0,
        matching: matching.truth_to_recovered,
    })
}

/// Everything produced by one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub truth: SpikeTrain,
    pub scheme: FourierScheme,
    pub measurements: MeasurementVector,
    pub image: SpectralImage,
    pub theta_init: ParamVector,
    pub theta_final: ParamVector,
    pub trace: Trace,
    pub report: RecoveryReport,
}

/// Runs the full pipeline in memory.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    let truth = generate_ground_truth(
        cfg.k,
        cfg.epsilon,
        &cfg.domain_box,
        cfg.amplitude_range,
        cfg.seed,
    )
    .map_err(Error::at(Stage::GroundTruth))?;
    let scheme = cfg.build_scheme().map_err(Error::at(Stage::Scheme))?;
    let measurements =
        simulate(&scheme, &truth, cfg.noise_level, cfg.seed).map_err(Error::at(Stage::Simulate))?;
    let (theta_init, image) =
        initialize_with_image(&scheme, &measurements, &cfg.domain_box, &cfg.init_config())
            .map_err(Error::at(Stage::Initialize))?;
    let ctx = ObjectiveContext::new(scheme.clone(), measurements.clone())
        .map_err(Error::at(Stage::Solve))?;
    let (theta_final, trace) =
        solve(&ctx, &theta_init, &cfg.solver_config()).map_err(Error::at(Stage::Solve))?;
    let recovered = phi(&theta_final).map_err(Error::at(Stage::Evaluate))?;
    let mut report = evaluate(&recovered, &truth, &trace, cfg.match_radius())
        .map_err(Error::at(Stage::Evaluate))?;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(ExperimentOutcome {
        truth,
        scheme,
        measurements,
        image,
        theta_init,
        theta_final,
        trace,
        report,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes every artifact of an outcome into `out_dir`.
pub fn write_outcome(
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    out_dir: &Path,
) -> Result<()> {
    let io = Error::at(Stage::Render);
    fs::create_dir_all(out_dir).map_err(|e| io(e.into()))?;
    let files = || -> Result<()> {
        write_json(&out_dir.join("config.json"), cfg)?;
        write_json(&out_dir.join("truth.json"), &outcome.truth)?;
        write_json(&out_dir.join("scheme.json"), &outcome.scheme)?;
        write_json(&out_dir.join("measurements.json"), &outcome.measurements)?;
        write_json(&out_dir.join("init.json"), &outcome.theta_init)?;
        write_json(&out_dir.join("final.json"), &outcome.theta_final)?;
        write_json(&out_dir.join("trace.json"), &outcome.trace)?;
        fs::write(out_dir.join("trace.csv"), outcome.trace.to_csv())?;
        write_json(&out_dir.join("report.json"), &outcome.report)?;
        render_outputs(
            &outcome.trace,
            Some(&outcome.image),
            &outcome.truth,
            &phi(&outcome.theta_init)?,
            &cfg.domain_box,
            out_dir,
        )?;
        Ok(())
    };
    files().map_err(Error::at(Stage::Render))
}

/// Runs the pipeline and writes config, scheme, trace (JSON and CSV),
/// spectral graymap, trajectory SVG and report into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RecoveryReport> {
    let outcome = run_pipeline(cfg)?;
    write_outcome(cfg, &outcome, out_dir)?;
    Ok(outcome.report)
}
