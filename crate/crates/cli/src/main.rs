//! Command-line driver for spike recovery experiments.
//!
//! Stages exchange files through the output directory, so
//! `gen-truth → simulate → init → solve → eval → plot` reproduces `run`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use offgrid::harness::{
    evaluate, generate_ground_truth, render_outputs, run_experiment, simulate, ExperimentConfig,
};
use offgrid::{
    initializer::initialize_with_image, phi, solve, FourierScheme, MeasurementVector,
    ObjectiveContext, ParamVector, SpikeTrain, Trace,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "offgrid",
    version,
    about = "Off-the-grid spike recovery by projected gradient descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a separated ground-truth spike train.
    GenTruth(Common),
    /// Build the measurement scheme and measure the ground truth.
    Simulate(Common),
    /// Backproject the measurements and keep the strongest grid points.
    Init(Common),
    /// Run (projected) gradient descent from the initialization.
    Solve(Common),
    /// Match the estimate to the ground truth and write a report.
    Eval(Common),
    /// Render the spectral image and the trajectories.
    Plot(Common),
    /// Every stage end to end.
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    FewSpikes,
    ManySpikes,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); defaults to the chosen preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(
        long,
        value_enum,
        default_value = "few-spikes",
        conflicts_with = "config"
    )]
    preset: Preset,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Plain gradient descent without the merge projection.
    #[arg(long)]
    no_projection: bool,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_json(path)?,
            None => match self.preset {
                Preset::FewSpikes => ExperimentConfig::few_spikes(0),
                Preset::ManySpikes => ExperimentConfig::many_spikes(0),
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.no_projection {
            cfg.solver.projection_enabled = false;
        }
        if let Some(n) = self.max_iters {
            cfg.solver.max_iters = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_truth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let truth = generate_ground_truth(
        cfg.k,
        cfg.epsilon,
        &cfg.domain_box,
        cfg.amplitude_range,
        cfg.seed,
    )?;
    write_json(&out.join("config.json"), cfg)?;
    write_json(&out.join("truth.json"), &truth)?;
    println!(
        "{} spikes written to {}",
        truth.len(),
        out.join("truth.json").display()
    );
    Ok(())
}

fn simulate_stage(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let truth: SpikeTrain = read_json(&out.join("truth.json"))?;
    let scheme = cfg.build_scheme()?;
    let y = simulate(&scheme, &truth, cfg.noise_level, cfg.seed)?;
    write_json(&out.join("scheme.json"), &scheme)?;
    write_json(&out.join("measurements.json"), &y)?;
    println!(
        "{} measurements written to {}",
        y.len(),
        out.join("measurements.json").display()
    );
    Ok(())
}

fn measured(out: &Path) -> Result<(FourierScheme, MeasurementVector)> {
    Ok((
        read_json(&out.join("scheme.json"))?,
        read_json(&out.join("measurements.json"))?,
    ))
}

fn init_stage(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (scheme, y) = measured(out)?;
    let (theta, image) = initialize_with_image(&scheme, &y, &cfg.domain_box, &cfg.init_config())?;
    write_json(&out.join("init.json"), &theta)?;
    if image.grid().dimension() <= 2 {
        fs::write(out.join("spectral.pgm"), image.to_pgm()?)?;
    }
    println!(
        "{} initial spikes from a {}-point grid",
        theta.k(),
        image.grid().len()
    );
    Ok(())
}

fn solve_stage(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (scheme, y) = measured(out)?;
    let init: ParamVector = read_json(&out.join("init.json"))?;
    let ctx = ObjectiveContext::new(scheme, y)?;
    let (theta, trace) = solve(&ctx, &init, &cfg.solver_config())?;
    write_json(&out.join("final.json"), &theta)?;
    write_json(&out.join("trace.json"), &trace)?;
    fs::write(out.join("trace.csv"), trace.to_csv())?;
    let last = trace.last().expect("trace holds the initial point");
    println!(
        "{} iterations ({:?}), g = {:.3e}, {} spikes",
        trace.iterations.len() - 1,
        trace.status,
        last.g,
        theta.k()
    );
    Ok(())
}

fn eval_stage(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let theta: ParamVector = read_json(&out.join("final.json"))?;
    let truth: SpikeTrain = read_json(&out.join("truth.json"))?;
    let trace: Trace = read_json(&out.join("trace.json"))?;
    let report = evaluate(&phi(&theta)?, &truth, &trace, cfg.match_radius())?;
    write_json(&out.join("report.json"), &report)?;
    println!(
        "matched {}/{}, max position error {:?}",
        report.matched, report.truth_count, report.max_position_error
    );
    Ok(())
}

fn plot_stage(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (scheme, y) = measured(out)?;
    let trace: Trace = read_json(&out.join("trace.json"))?;
    let truth: SpikeTrain = read_json(&out.join("truth.json"))?;
    let (theta, image) = initialize_with_image(&scheme, &y, &cfg.domain_box, &cfg.init_config())?;
    let written = render_outputs(
        &trace,
        Some(&image),
        &truth,
        &phi(&theta)?,
        &cfg.domain_box,
        out,
    )?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_all(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let report = run_experiment(cfg, out)?;
    println!(
        "matched {}/{}, {} final spikes, {} iterations, wrote {}",
        report.matched,
        report.truth_count,
        report.final_spike_count,
        report.iterations,
        out.display()
    );
    Ok(())
}

type Stage = fn(&ExperimentConfig, &Path) -> Result<()>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common, action): (&str, &Common, Stage) = match &cli.command {
        Command::GenTruth(c) => ("gen-truth", c, gen_truth),
        Command::Simulate(c) => ("simulate", c, simulate_stage),
        Command::Init(c) => ("init", c, init_stage),
        Command::Solve(c) => ("solve", c, solve_stage),
        Command::Eval(c) => ("eval", c, eval_stage),
        Command::Plot(c) => ("plot", c, plot_stage),
        Command::Run(c) => ("run", c, run_all),
    };
    let result = common.experiment().and_then(|cfg| {
        fs::create_dir_all(&common.out)
            .with_context(|| format!("creating {}", common.out.display()))?;
        action(&cfg, &common.out)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let text = format!("{err:#}");
            if text.contains("stage failed") {
                eprintln!("error: {text}");
            } else {
                eprintln!("error: {stage} stage failed: {text}");
            }
            ExitCode::FAILURE
        }
    }
}
