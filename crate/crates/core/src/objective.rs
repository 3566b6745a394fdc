//! The least-squares data fit `g(θ) = ‖A φ(θ) − y‖²` and its gradient.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, synthesize, FourierScheme, MeasurementVector, ParamVector};

/// Measurement scheme together with the observed data it is fitted to.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    scheme: FourierScheme,
    target: MeasurementVector,
}

impl ObjectiveContext {
    pub fn new(scheme: FourierScheme, target: MeasurementVector) -> Result<Self> {
        if scheme.len() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: scheme.len(),
                actual: target.len(),
            });
        }
        Ok(Self { scheme, target })
    }

    pub fn scheme(&self) -> &FourierScheme {
        &self.scheme
    }

    pub fn target(&self) -> &MeasurementVector {
        &self.target
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        if theta.dimension() != self.scheme.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.scheme.dimension(),
                actual: theta.dimension(),
            });
        }
        Ok(())
    }

    pub(crate) fn value_unchecked(&self, theta: &ParamVector) -> f64 {
        synthesize(&self.scheme, theta.amplitudes(), theta.positions())
            .iter()
            .zip(self.target.values())
            .map(|(ax, y)| (ax - y).norm_sqr())
            .sum()
    }

    pub(crate) fn value_and_gradient_unchecked(
        &self,
        theta: &ParamVector,
    ) -> (f64, GradientVector) {
        let d = theta.dimension();
        let k = theta.k();
        let m = self.scheme.len();
        let weights = self.scheme.weights();

        // kernel[r * m + l] = exp(-i <ω_l, t_r>)
        let mut kernel = Vec::with_capacity(k * m);
        for r in 0..k {
            let t = theta.position(r);
            kernel.extend(self.scheme.frequencies().map(|omega| {
                let (s, c) = dot(omega, t).sin_cos();
                Complex64::new(c, -s)
            }));
        }

        let amplitudes = theta.amplitudes();
        let mut value = 0.0;
        let residual: Vec<Complex64> = (0..m)
            .map(|l| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (r, &a) in amplitudes.iter().enumerate() {
                    acc += kernel[r * m + l] * a;
                }
                let z = acc * weights[l] - self.target.values()[l];
                value += z.norm_sqr();
                z
            })
            .collect();

        let mut grad = vec![0.0; k * (d + 1)];
        let (grad_amp, grad_pos) = grad.split_at_mut(k);
        for r in 0..k {
            let mut da = 0.0;
            let dt = &mut grad_pos[r * d..(r + 1) * d];
            for (l, omega) in self.scheme.frequencies().enumerate() {
                let w = residual[l].conj() * kernel[r * m + l] * weights[l];
                da += w.re;
                // Re(conj(z) · a · (-iω) · c e) = a ω Im(conj(z) c e)
                for (g, &o) in dt.iter_mut().zip(omega) {
                    *g += o * w.im;
                }
            }
            grad_amp[r] = 2.0 * da;
            let scale = 2.0 * amplitudes[r];
            dt.iter_mut().for_each(|g| *g *= scale);
        }
        (value, GradientVector(grad))
    }
}

/// Gradient in the same layout as [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

pub fn objective_value(ctx: &ObjectiveContext, theta: &ParamVector) -> Result<f64> {
    ctx.check(theta)?;
    Ok(ctx.value_unchecked(theta))
}

pub fn objective_gradient(ctx: &ObjectiveContext, theta: &ParamVector) -> Result<GradientVector> {
    objective_and_gradient(ctx, theta).map(|(_, g)| g)
}

/// Value and gradient sharing a single evaluation of the residual.
pub fn objective_and_gradient(
    ctx: &ObjectiveContext,
    theta: &ParamVector,
) -> Result<(f64, GradientVector)> {
    ctx.check(theta)?;
    Ok(ctx.value_and_gradient_unchecked(theta))
}

/// Central finite differences with per-coordinate step `h · max(1, |θ_i|)`.
pub fn fd_gradient(ctx: &ObjectiveContext, theta: &ParamVector, h: f64) -> Result<GradientVector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    ctx.check(theta)?;
    let base = theta.values().to_vec();
    let grad = (0..base.len())
        .map(|i| {
            let step = h * base[i].abs().max(1.0);
            let mut probe = base.clone();
            probe[i] = base[i] + step;
            let plus = ctx.value_unchecked(&theta.with_values(probe.clone()));
            probe[i] = base[i] - step;
            let minus = ctx.value_unchecked(&theta.with_values(probe));
            (plus - minus) / (2.0 * step)
        })
        .collect();
    Ok(GradientVector(grad))
}
