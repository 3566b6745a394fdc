//! Projected gradient descent in parameter space,
//! `θ_{n+1} = P(θ_n − τ_n D_n ∇g(θ_n))`, where `P` is the merge projection
//! and `D_n` a diagonal scaling (the identity for plain gradient steps).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{phi, phi_inverse, ParamVector};
use crate::objective::{GradientVector, ObjectiveContext};
use crate::projector::{project_separation, MergeEvent, MergeReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Fixed {
        tau: f64,
    },
    /// Armijo backtracking: start at `tau_init` and multiply by `shrink`
    /// until `g(θ − τp) ≤ g(θ) − slope · τ · ⟨∇g, p⟩` for the search
    /// direction `p`, at most `max_shrinks` times.
    Backtracking {
        tau_init: f64,
        shrink: f64,
        slope: f64,
        max_shrinks: usize,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            tau_init: 1.0,
            shrink: 0.5,
            slope: 1e-4,
            max_shrinks: 40,
        }
    }
}

/// Diagonal rescaling turning the gradient into the search direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    /// `p = ∇g`.
    Identity,
    /// Inverse diagonal of the Gauss–Newton matrix of an isolated spike:
    /// amplitudes are divided by `2 Σ c_l²` and the position of spike `r` by
    /// `2 a_r² Σ c_l² ‖ω_l‖² / d`, with `a_r²` floored at
    /// `amplitude_floor · max_s a_s²`.
    GaussNewton { amplitude_floor: f64 },
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling::GaussNewton {
            amplitude_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_true")]
    pub projection_enabled: bool,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub scaling: Scaling,
    /// Caps the step so that no position moves farther than this.
    #[serde(default)]
    pub max_move: Option<f64>,
    #[serde(default)]
    pub grad_tol: f64,
}

fn default_max_iters() -> usize {
    500
}

fn default_true() -> bool {
    true
}

impl SolverConfig {
    /// 500 iterations of projected descent with Armijo backtracking.
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_iters: default_max_iters(),
            projection_enabled: true,
            step_rule: StepRule::default(),
            scaling: Scaling::default(),
            max_move: None,
            grad_tol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.grad_tol >= 0.0) {
            return bad(format!(
                "grad_tol must be nonnegative, got {}",
                self.grad_tol
            ));
        }
        if let Some(max_move) = self.max_move {
            if !(max_move > 0.0) {
                return bad(format!("max_move must be positive, got {max_move}"));
            }
        }
        if let Scaling::GaussNewton { amplitude_floor } = self.scaling {
            if !(amplitude_floor > 0.0 && amplitude_floor <= 1.0) {
                return bad(format!(
                    "amplitude_floor must lie in (0, 1], got {amplitude_floor}"
                ));
            }
        }
        match self.step_rule {
            StepRule::Fixed { tau } if !(tau > 0.0 && tau.is_finite()) => {
                bad(format!("fixed step must be positive, got {tau}"))
            }
            StepRule::Backtracking {
                tau_init,
                shrink,
                slope,
                ..
            } if !(tau_init > 0.0
                && tau_init.is_finite()
                && shrink > 0.0
                && shrink < 1.0
                && slope > 0.0
                && slope < 1.0) =>
            {
                bad("backtracking needs tau_init > 0 and shrink, slope in (0, 1)".into())
            }
            _ => Ok(()),
        }
    }
}

/// Result of one projected descent step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub theta: ParamVector,
    pub tau: f64,
    /// Present when projection is enabled.
    pub merges: Option<MergeReport>,
    /// Backtracking ran out of shrinks without satisfying the Armijo test.
    pub stalled: bool,
}

fn direction(
    ctx: &ObjectiveContext,
    theta: &ParamVector,
    grad: &GradientVector,
    scaling: Scaling,
) -> Vec<f64> {
    let amplitude_floor = match scaling {
        Scaling::Identity => return grad.values().to_vec(),
        Scaling::GaussNewton { amplitude_floor } => amplitude_floor,
    };
    let scheme = ctx.scheme();
    let d = theta.dimension();
    let k = theta.k();
    let energy: f64 = scheme.weights().iter().map(|c| c * c).sum();
    let spread = scheme
        .frequencies()
        .zip(scheme.weights())
        .map(|(omega, c)| c * c * omega.iter().map(|w| w * w).sum::<f64>())
        .sum::<f64>()
        / d as f64;
    let amplitudes = theta.amplitudes();
    let floor = amplitude_floor * amplitudes.iter().fold(0.0, |m: f64, a| m.max(a * a));
    let (grad_amp, grad_pos) = grad.values().split_at(k);
    let mut p: Vec<f64> = grad_amp.iter().map(|g| g / (2.0 * energy)).collect();
    for (r, block) in grad_pos.chunks(d).enumerate() {
        let curvature = 2.0 * spread * (amplitudes[r] * amplitudes[r]).max(floor);
        p.extend(block.iter().map(|g| g / curvature));
    }
    // zero frequencies or amplitudes leave nothing to scale against
    if p.iter().all(|x| x.is_finite()) {
        p
    } else {
        grad.values().to_vec()
    }
}

fn moved(theta: &ParamVector, p: &[f64], tau: f64) -> ParamVector {
    theta.with_values(
        theta
            .values()
            .iter()
            .zip(p)
            .map(|(t, g)| t - tau * g)
            .collect(),
    )
}

fn step_from(
    ctx: &ObjectiveContext,
    theta: &ParamVector,
    value: f64,
    grad: &GradientVector,
    cfg: &SolverConfig,
    iteration: usize,
) -> Result<StepOutcome> {
    let p = direction(ctx, theta, grad, cfg.scaling);
    let mut tau = match cfg.step_rule {
        StepRule::Fixed { tau } => tau,
        StepRule::Backtracking { tau_init, .. } => tau_init,
    };
    if let Some(max_move) = cfg.max_move {
        let d = theta.dimension();
        let fastest = p[theta.k()..]
            .chunks(d)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if fastest * tau > max_move {
            tau = max_move / fastest;
        }
    }

    let (candidate, tau, stalled) = match cfg.step_rule {
        StepRule::Fixed { .. } => (moved(theta, &p, tau), tau, false),
        StepRule::Backtracking {
            shrink,
            slope,
            max_shrinks,
            ..
        } => {
            let decrease: f64 = grad.values().iter().zip(&p).map(|(g, q)| g * q).sum();
            let mut shrinks = 0;
            loop {
                let candidate = moved(theta, &p, tau);
                if ctx.value_unchecked(&candidate) <= value - slope * tau * decrease {
                    break (candidate, tau, false);
                }
                if shrinks == max_shrinks {
                    break (candidate, tau, true);
                }
                tau *= shrink;
                shrinks += 1;
            }
        }
    };

    if !cfg.projection_enabled {
        return Ok(StepOutcome {
            theta: candidate,
            tau,
            merges: None,
            stalled,
        });
    }
    let train = phi(&candidate).map_err(|_| Error::NonFinite {
        quantity: "parameters",
        iteration,
    })?;
    let (projected, report) = project_separation(train, cfg.epsilon);
    Ok(StepOutcome {
        theta: phi_inverse(&projected),
        tau,
        merges: Some(report),
        stalled,
    })
}

/// One iteration from `theta`: gradient, step-size selection, projection.
pub fn descent_step(
    ctx: &ObjectiveContext,
    theta: &ParamVector,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    cfg.validate()?;
    let (value, grad) = crate::objective::objective_and_gradient(ctx, theta)?;
    step_from(ctx, theta, value, &grad, cfg, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopStatus {
    MaxIters,
    GradTol,
    Stalled,
}

/// State after iteration `n`. `tau` is the step that produced this iterate
/// (zero for the initial point) and `merges` the projection merges applied
/// on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub g: f64,
    pub grad_norm: f64,
    pub tau: f64,
    pub theta: Vec<f64>,
    pub merges: Vec<MergeEvent>,
}

impl IterationRecord {
    pub fn spike_count(&self, d: usize) -> usize {
        self.theta.len() / (d + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub d: usize,
    pub status: StopStatus,
    pub iterations: Vec<IterationRecord>,
}

impl Trace {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            status: StopStatus::MaxIters,
            iterations: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }

    /// Iterate `n` as parameters.
    pub fn theta(&self, n: usize) -> Result<ParamVector> {
        let rec = &self.iterations[n];
        ParamVector::new(self.d, rec.spike_count(self.d), rec.theta.clone())
    }

    /// Stable spike identifiers for every iterate. Initial spikes are
    /// numbered by list position; a merge keeps the identifier of its lower
    /// index and retires the other.
    pub fn spike_ids(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.iterations.len());
        let mut ids: Vec<usize> = match self.iterations.first() {
            Some(rec) => (0..rec.spike_count(self.d)).collect(),
            None => return out,
        };
        for rec in &self.iterations {
            for event in &rec.merges {
                if let [_, j] = event.merged[..] {
                    ids.remove(j);
                }
            }
            out.push(ids.clone());
        }
        out
    }

    /// One row per spike per iterate: `n,spike_id,a,t_1..t_d`.
    pub fn to_csv(&self) -> String {
        let d = self.d;
        let mut out = String::from("n,spike_id,a");
        for i in 1..=d {
            write!(out, ",t_{i}").unwrap();
        }
        out.push('\n');
        for (rec, ids) in self.iterations.iter().zip(self.spike_ids()) {
            let k = rec.spike_count(d);
            for (r, id) in ids.iter().enumerate() {
                write!(out, "{},{},{}", rec.n, id, rec.theta[r]).unwrap();
                for x in &rec.theta[k + r * d..k + (r + 1) * d] {
                    write!(out, ",{x}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

fn evaluate(
    ctx: &ObjectiveContext,
    theta: &ParamVector,
    iteration: usize,
) -> Result<(f64, GradientVector)> {
    let (value, grad) = ctx.value_and_gradient_unchecked(theta);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            quantity: "objective",
            iteration,
        });
    }
    if grad.values().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            quantity: "gradient",
            iteration,
        });
    }
    Ok((value, grad))
}

/// Runs descent from `theta_init` until `max_iters` steps, the gradient norm
/// falls to `grad_tol`, or backtracking stalls. A stalled step is not taken.
pub fn solve(
    ctx: &ObjectiveContext,
    theta_init: &ParamVector,
    cfg: &SolverConfig,
) -> Result<(ParamVector, Trace)> {
    cfg.validate()?;
    crate::objective::objective_value(ctx, theta_init)?;

    let mut theta = theta_init.clone();
    let (mut value, mut grad) = evaluate(ctx, &theta, 0)?;
    let mut trace = Trace::empty(theta.dimension());
    trace.iterations.push(IterationRecord {
        n: 0,
        g: value,
        grad_norm: grad.norm(),
        tau: 0.0,
        theta: theta.values().to_vec(),
        merges: Vec::new(),
    });

    for n in 1..=cfg.max_iters {
        if grad.norm() <= cfg.grad_tol {
            trace.status = StopStatus::GradTol;
            break;
        }
        let step = step_from(ctx, &theta, value, &grad, cfg, n)?;
        if step.stalled {
            trace.status = StopStatus::Stalled;
            break;
        }
        theta = step.theta;
        (value, grad) = evaluate(ctx, &theta, n)?;
        trace.iterations.push(IterationRecord {
            n,
            g: value,
            grad_norm: grad.norm(),
            tau: step.tau,
            theta: theta.values().to_vec(),
            merges: step.merges.map(|r| r.events).unwrap_or_default(),
        });
    }
    Ok((theta, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        forward, make_gaussian_scheme, FourierScheme, MeasurementVector, Spike, SpikeTrain,
    };

    fn amplitude_only_ctx() -> ObjectiveContext {
        let scheme = FourierScheme::new(1, vec![vec![1.0]], vec![1.0]).unwrap();
        ObjectiveContext::new(scheme, MeasurementVector::zeros(1)).unwrap()
    }

    #[test]
    fn fixed_quarter_step_halves_amplitude() {
        let ctx = amplitude_only_ctx();
        let mut cfg = SolverConfig::new(0.1);
        cfg.step_rule = StepRule::Fixed { tau: 0.25 };
        cfg.scaling = Scaling::Identity;
        // at t = 0 the position derivative vanishes exactly
        let mut theta = ParamVector::new(1, 1, vec![3.0, 0.0]).unwrap();
        for expected in [1.5, 0.75, 0.375] {
            let step = descent_step(&ctx, &theta, &cfg).unwrap();
            assert_eq!(step.theta.values(), &[expected, 0.0]);
            assert_eq!(step.tau, 0.25);
            theta = step.theta;
        }
    }

    #[test]
    fn gauss_newton_scaling_solves_amplitude_in_one_step() {
        let ctx = amplitude_only_ctx();
        let mut cfg = SolverConfig::new(0.1);
        cfg.step_rule = StepRule::Fixed { tau: 1.0 };
        let theta = ParamVector::new(1, 1, vec![3.0, 0.0]).unwrap();
        let step = descent_step(&ctx, &theta, &cfg).unwrap();
        assert_eq!(step.theta.values(), &[0.0, 0.0]);
    }

    #[test]
    fn max_move_caps_position_displacement() {
        let scheme = make_gaussian_scheme(40, 2, 8.0, true, 6).unwrap();
        let truth = SpikeTrain::new(2, vec![Spike::new(1.0, vec![0.5, 0.5])]).unwrap();
        let y = forward(&scheme, &truth).unwrap();
        let ctx = ObjectiveContext::new(scheme, y).unwrap();
        let theta = ParamVector::new(2, 1, vec![1.0, 0.45, 0.52]).unwrap();
        let mut cfg = SolverConfig::new(0.1);
        cfg.max_move = Some(1e-3);
        for rule in [StepRule::Fixed { tau: 10.0 }, StepRule::default()] {
            cfg.step_rule = rule;
            let step = descent_step(&ctx, &theta, &cfg).unwrap();
            let shift = crate::model::distance(step.theta.position(0), theta.position(0));
            assert!(shift <= 1e-3 * (1.0 + 1e-12), "{shift}");
            assert!(shift > 0.0);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let ctx = amplitude_only_ctx();
        let theta = ParamVector::new(1, 1, vec![0.0, 0.4]).unwrap();
        let step = descent_step(&ctx, &theta, &SolverConfig::new(0.1)).unwrap();
        assert_eq!(step.theta, theta);
        assert!(!step.stalled);
    }

    #[test]
    fn drifting_pair_is_merged() {
        // y is a single spike at 0.5; two spikes at 0.46 and 0.54 each carry
        // amplitude 0.5 and are 0.08 apart, below ε = 0.1
        let scheme = make_gaussian_scheme(40, 1, 10.0, true, 3).unwrap();
        let truth = SpikeTrain::new(1, vec![Spike::new(1.0, vec![0.5])]).unwrap();
        let y = forward(&scheme, &truth).unwrap();
        let ctx = ObjectiveContext::new(scheme, y).unwrap();
        let theta = ParamVector::new(1, 2, vec![0.5, 0.5, 0.46, 0.54]).unwrap();
        let step = descent_step(&ctx, &theta, &SolverConfig::new(0.1)).unwrap();
        let report = step.merges.unwrap();
        assert_eq!(report.events.len(), 1);
        assert_eq!(step.theta.k(), 1);
        let out = phi(&step.theta).unwrap();
        assert!(out.is_separated(0.1, f64::INFINITY));
    }

    #[test]
    fn starting_at_truth_stops_on_gradient_tolerance() {
        let scheme = make_gaussian_scheme(50, 2, 8.0, true, 4).unwrap();
        let truth = SpikeTrain::new(
            2,
            vec![
                Spike::new(1.0, vec![0.2, 0.3]),
                Spike::new(0.7, vec![0.6, 0.8]),
            ],
        )
        .unwrap();
        let y = forward(&scheme, &truth).unwrap();
        let ctx = ObjectiveContext::new(scheme, y).unwrap();
        let mut cfg = SolverConfig::new(0.05);
        cfg.grad_tol = 1e-8;
        let (theta, trace) = solve(&ctx, &phi_inverse(&truth), &cfg).unwrap();
        assert_eq!(trace.status, StopStatus::GradTol);
        assert_eq!(trace.iterations.len(), 1);
        assert!(trace.iterations[0].g < 1e-20);
        assert_eq!(theta, phi_inverse(&truth));
    }

    #[test]
    fn single_spike_converges() {
        let scheme = make_gaussian_scheme(200, 2, 6.0, true, 5).unwrap();
        let truth = SpikeTrain::new(2, vec![Spike::new(1.2, vec![0.41, 0.63])]).unwrap();
        let y = forward(&scheme, &truth).unwrap();
        let ctx = ObjectiveContext::new(scheme, y).unwrap();
        let init = ParamVector::new(2, 1, vec![0.8, 0.45, 0.6]).unwrap();
        let mut cfg = SolverConfig::new(0.1);
        cfg.grad_tol = 1e-10;
        let (theta, trace) = solve(&ctx, &init, &cfg).unwrap();
        let err = crate::model::distance(theta.position(0), &[0.41, 0.63]);
        assert!(
            err < 1e-6,
            "position error {err}, status {:?}",
            trace.status
        );
        for pair in trace.iterations.windows(2) {
            assert!(pair[1].g <= pair[0].g);
        }
    }

    #[test]
    fn exhausted_backtracking_stalls() {
        let ctx = amplitude_only_ctx();
        let mut cfg = SolverConfig::new(0.1);
        cfg.step_rule = StepRule::Backtracking {
            tau_init: 100.0,
            shrink: 0.5,
            slope: 1e-4,
            max_shrinks: 2,
        };
        let theta = ParamVector::new(1, 1, vec![1.0, 0.0]).unwrap();
        let step = descent_step(&ctx, &theta, &cfg).unwrap();
        assert!(step.stalled);
        assert_eq!(step.tau, 25.0);
        let (out, trace) = solve(&ctx, &theta, &cfg).unwrap();
        assert_eq!(trace.status, StopStatus::Stalled);
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(out, theta);
    }

    #[test]
    fn divergence_is_reported_with_iteration() {
        let ctx = amplitude_only_ctx();
        let mut cfg = SolverConfig::new(0.1);
        cfg.step_rule = StepRule::Fixed { tau: 1e150 };
        cfg.projection_enabled = false;
        let theta = ParamVector::new(1, 1, vec![1e10, 0.0]).unwrap();
        match solve(&ctx, &theta, &cfg) {
            Err(Error::NonFinite { iteration, .. }) => assert!(iteration >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::new(0.0);
        assert!(cfg.validate().is_err());
        cfg.epsilon = 0.1;
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
        cfg.max_iters = 1;
        cfg.step_rule = StepRule::Backtracking {
            tau_init: 1.0,
            shrink: 1.0,
            slope: 1e-4,
            max_shrinks: 3,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trace_json_and_csv_shape() {
        let ctx = amplitude_only_ctx();
        let theta = ParamVector::new(1, 2, vec![1.0, 2.0, 0.0, 0.05]).unwrap();
        let mut cfg = SolverConfig::new(0.1);
        cfg.max_iters = 2;
        cfg.step_rule = StepRule::Fixed { tau: 1e-3 };
        let (_, trace) = solve(&ctx, &theta, &cfg).unwrap();
        let json = serde_json::to_value(&trace).unwrap();
        assert_eq!(json["status"], "max-iters");
        let first = &json["iterations"][1];
        for key in ["n", "g", "grad_norm", "tau", "theta", "merges"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first["merges"].as_array().unwrap().len(), 1);

        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,spike_id,a,t_1");
        // two spikes at n = 0, one afterwards
        assert_eq!(lines.len(), 1 + 2 + 1 + 1);
        assert!(lines[3].starts_with("1,0,"));
    }
}
