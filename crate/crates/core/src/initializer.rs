//! Overparametrized spectral initialization.
//!
//! Measurements are backprojected onto a regular grid with the conjugate
//! measurement kernel, `z_i = Σ_l d_l y_l exp(+i <ω_l, s_i>)`, and the `k_in`
//! grid points of largest `|z|` become the initial spikes.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    dot, phi_inverse, FourierScheme, MeasurementVector, ParamVector, Spike, SpikeTrain,
};

/// Default ceiling on the number of grid points.
pub const DEFAULT_MAX_GRID_POINTS: usize = 4_000_000;

/// Axis-aligned box `[lower, upper]` in `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let domain = Self { lower, upper };
        domain.validate()?;
        Ok(domain)
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidArgument(format!(
                "box bounds have lengths {} and {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let ordered = self
            .lower
            .iter()
            .zip(&self.upper)
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi);
        if !ordered {
            return Err(Error::InvalidArgument("box is empty or not finite".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self) -> Vec<f64> {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(hi, lo)| hi - lo)
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }
}

/// Regular grid `origin + step · n` over a box, enumerated lexicographically
/// (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    step: f64,
    origin: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
}

impl Grid {
    pub fn dimension(&self) -> usize {
        self.origin.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Points per axis.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut n = vec![0; self.counts.len()];
        for axis in (0..self.counts.len()).rev() {
            n[axis] = index % self.counts[axis];
            index /= self.counts[axis];
        }
        n
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.multi_index(index)
            .into_iter()
            .zip(self.origin.iter().zip(&self.upper))
            .map(|(n, (o, hi))| (o + self.step * n as f64).min(*hi))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

pub fn build_grid(domain: &DomainBox, epsilon_g: f64) -> Result<Grid> {
    build_grid_capped(domain, epsilon_g, DEFAULT_MAX_GRID_POINTS)
}

pub fn build_grid_capped(domain: &DomainBox, epsilon_g: f64, max_points: usize) -> Result<Grid> {
    domain.validate()?;
    if !(epsilon_g > 0.0 && epsilon_g.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid step must be positive, got {epsilon_g}"
        )));
    }
    let mut counts = Vec::with_capacity(domain.dimension());
    for extent in domain.extent() {
        let per_axis = (extent / epsilon_g + 1e-9).floor() + 1.0;
        if per_axis > max_points as f64 {
            return Err(Error::GridCapacity {
                count: per_axis.min(u128::MAX as f64) as u128,
                cap: max_points,
            });
        }
        counts.push(per_axis as usize);
    }
    let total = counts
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
        .unwrap_or(u128::MAX);
    if total > max_points as u128 {
        return Err(Error::GridCapacity {
            count: total,
            cap: max_points,
        });
    }
    Ok(Grid {
        step: epsilon_g,
        origin: domain.lower.clone(),
        upper: domain.upper.clone(),
        counts,
    })
}

/// Backprojection weights `d_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub k_in: usize,
    pub epsilon_g: f64,
    /// `None` means `1/m` for every measurement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_weights: Option<Vec<f64>>,
}

impl InitConfig {
    pub fn new(k_in: usize, epsilon_g: f64) -> Self {
        Self {
            k_in,
            epsilon_g,
            d_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_in == 0 {
            return Err(Error::InvalidArgument("k_in must be at least 1".into()));
        }
        if !(self.epsilon_g > 0.0 && self.epsilon_g.is_finite()) {
            return Err(Error::InvalidArgument("epsilon_g must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self, m: usize) -> Result<Vec<f64>> {
        match &self.d_weights {
            None => Ok(vec![1.0 / m as f64; m]),
            Some(w) if w.len() == m => Ok(w.clone()),
            Some(w) => Err(Error::DimensionMismatch {
                expected: m,
                actual: w.len(),
            }),
        }
    }
}

/// Backprojected values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpectralImage {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Index of the largest `|z|`, lowest index on ties.
    pub fn argmax(&self) -> Option<usize> {
        ranked_indices(&self.values).first().copied()
    }

    /// Plain (P2) graymap of `|z|`, min–max rescaled to `0..=65535`.
    ///
    /// The first axis runs left to right and the second axis bottom to top,
    /// so the first row holds the largest second coordinate. One-dimensional
    /// images are a single row.
    pub fn to_pgm(&self) -> Result<String> {
        let (width, height) = match *self.grid.counts() {
            [w] => (w, 1),
            [w, h] => (w, h),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "graymap export needs a 1- or 2-dimensional grid, got d={}",
                    self.grid.dimension()
                )))
            }
        };
        let magnitude: Vec<f64> = self.values.iter().map(|z| z.norm()).collect();
        let lo = magnitude.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = magnitude.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let level = |v: f64| -> u32 {
            if span > 0.0 {
                (65535.0 * (v - lo) / span).round() as u32
            } else {
                0
            }
        };

        let mut out = format!("P2\n{width} {height}\n65535\n");
        for row in 0..height {
            let y = height - 1 - row;
            let line: Vec<String> = (0..width)
                .map(|x| level(magnitude[x * height + y]).to_string())
                .collect();
            writeln!(out, "{}", line.join(" ")).expect("writing to a String");
        }
        Ok(out)
    }
}

/// `z_i = Σ_l d_l y_l exp(+i <ω_l, s_i>)`, summed in ascending `l`.
pub fn spectral_image(
    scheme: &FourierScheme,
    y: &MeasurementVector,
    grid: &Grid,
    cfg: &InitConfig,
) -> Result<SpectralImage> {
    if grid.dimension() != scheme.dimension() {
        return Err(Error::DimensionMismatch {
            expected: scheme.dimension(),
            actual: grid.dimension(),
        });
    }
    if y.len() != scheme.len() {
        return Err(Error::DimensionMismatch {
            expected: scheme.len(),
            actual: y.len(),
        });
    }
    let weights = cfg.weights(scheme.len())?;
    let weighted: Vec<Complex64> = y
        .values()
        .iter()
        .zip(&weights)
        .map(|(y, d)| y * d)
        .collect();
    let values = grid
        .points()
        .map(|s| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (omega, wy) in scheme.frequencies().zip(&weighted) {
                let (sin, cos) = dot(omega, &s).sin_cos();
                acc += wy * Complex64::new(cos, sin);
            }
            acc
        })
        .collect();
    SpectralImage::new(grid.clone(), values)
}

fn ranked_indices(values: &[Complex64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .norm_sqr()
            .total_cmp(&values[i].norm_sqr())
            .then(i.cmp(&j))
    });
    order
}

/// Keeps the `k_in` grid points of largest `|z|` (ties to the lower grid
/// index), in decreasing magnitude, with amplitude `Re z`.
pub fn hard_threshold(image: &SpectralImage, k_in: usize) -> SpikeTrain {
    let spikes = ranked_indices(&image.values)
        .into_iter()
        .take(k_in)
        .map(|i| Spike::new(image.values[i].re, image.grid.point(i)))
        .collect();
    SpikeTrain::new(image.grid.dimension(), spikes).expect("grid points are finite")
}

/// Spectral image and the thresholded initial parameters.
pub fn initialize_with_image(
    scheme: &FourierScheme,
    y: &MeasurementVector,
    domain: &DomainBox,
    cfg: &InitConfig,
) -> Result<(ParamVector, SpectralImage)> {
    cfg.validate()?;
    let grid = build_grid(domain, cfg.epsilon_g)?;
    let image = spectral_image(scheme, y, &grid, cfg)?;
    let theta = phi_inverse(&hard_threshold(&image, cfg.k_in));
    Ok((theta, image))
}

pub fn initialize(
    scheme: &FourierScheme,
    y: &MeasurementVector,
    domain: &DomainBox,
    cfg: &InitConfig,
) -> Result<ParamVector> {
    initialize_with_image(scheme, y, domain, cfg).map(|(theta, _)| theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, make_gaussian_scheme};

    fn image_from(values: &[f64]) -> SpectralImage {
        let grid = build_grid(&DomainBox::unit(1), 1.0 / (values.len() - 1) as f64).unwrap();
        let z = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        SpectralImage::new(grid, z).unwrap()
    }

    #[test]
    fn one_dimensional_grid() {
        let grid = build_grid(&DomainBox::unit(1), 0.5).unwrap();
        let pts: Vec<Vec<f64>> = grid.points().collect();
        assert_eq!(pts, vec![vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn grid_counts_and_containment() {
        let domain = DomainBox::unit(2);
        let grid = build_grid(&domain, 0.01).unwrap();
        assert_eq!(grid.len(), 10201);
        assert_eq!(grid.counts(), &[101, 101]);
        assert!(grid.points().all(|p| domain.contains(&p)));
        assert_eq!(grid.point(0), vec![0.0, 0.0]);
        assert_eq!(grid.point(1), vec![0.0, 0.01]);
        assert_eq!(grid.point(101), vec![0.01, 0.0]);
    }

    #[test]
    fn grid_capacity_error() {
        // 1001^3 ≈ 1.003e9 points
        let err = build_grid(&DomainBox::unit(3), 1e-3).unwrap_err();
        match err {
            Error::GridCapacity { count, cap } => {
                assert_eq!(count, 1001u128.pow(3));
                assert_eq!(cap, DEFAULT_MAX_GRID_POINTS);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(build_grid(&DomainBox::unit(1), 0.0).is_err());
    }

    #[test]
    fn zero_measurements_give_zero_image() {
        let scheme = make_gaussian_scheme(10, 2, 5.0, true, 1).unwrap();
        let grid = build_grid(&DomainBox::unit(2), 0.25).unwrap();
        let image = spectral_image(
            &scheme,
            &MeasurementVector::zeros(10),
            &grid,
            &InitConfig::new(1, 0.25),
        )
        .unwrap();
        assert!(image
            .values()
            .iter()
            .all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn unit_spike_on_grid_backprojects_to_one() {
        let scheme = make_gaussian_scheme(64, 2, 10.0, true, 2).unwrap();
        let grid = build_grid(&DomainBox::unit(2), 0.25).unwrap();
        let at = 7;
        let truth = SpikeTrain::new(2, vec![Spike::new(1.0, grid.point(at))]).unwrap();
        let y = forward(&scheme, &truth).unwrap();
        let image = spectral_image(&scheme, &y, &grid, &InitConfig::new(1, 0.25)).unwrap();
        let z = image.values()[at];
        assert!((z.re - 1.0).abs() < 1e-14 && z.im.abs() < 1e-14, "{z}");
        assert_eq!(image.argmax(), Some(at));
    }

    #[test]
    fn threshold_keeps_largest() {
        let x = hard_threshold(&image_from(&[3.0, 1.0, 2.0]), 2);
        let positions: Vec<f64> = x.spikes().iter().map(|s| s.position[0]).collect();
        assert_eq!(positions, vec![0.0, 1.0]);
        assert_eq!(x.spikes()[0].amplitude, 3.0);
        assert_eq!(x.spikes()[1].amplitude, 2.0);
    }

    #[test]
    fn threshold_truncates_to_grid_size() {
        let x = hard_threshold(&image_from(&[3.0, 1.0, 2.0]), 10);
        assert_eq!(x.len(), 3);
    }

    #[test]
    fn threshold_tie_prefers_lower_index() {
        // points 2 and 5 (1-based) share the largest magnitude
        let x = hard_threshold(&image_from(&[0.1, -4.0, 0.3, 0.2, 4.0, 0.0]), 1);
        assert_eq!(x.len(), 1);
        assert_eq!(x.spikes()[0].amplitude, -4.0);
        assert!((x.spikes()[0].position[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn custom_weights_length_is_checked() {
        let scheme = make_gaussian_scheme(10, 1, 5.0, true, 1).unwrap();
        let grid = build_grid(&DomainBox::unit(1), 0.5).unwrap();
        let mut cfg = InitConfig::new(1, 0.5);
        cfg.d_weights = Some(vec![1.0; 3]);
        assert!(spectral_image(&scheme, &MeasurementVector::zeros(10), &grid, &cfg).is_err());
    }

    #[test]
    fn pgm_layout() {
        let grid = build_grid(&DomainBox::unit(2), 0.5).unwrap();
        let mut values = vec![Complex64::new(0.0, 0.0); 9];
        // point (x=1.0, y=0.0) is the maximum
        values[6] = Complex64::new(0.0, 2.0);
        values[1] = Complex64::new(1.0, 0.0);
        let pgm = SpectralImage::new(grid, values).unwrap().to_pgm().unwrap();
        let lines: Vec<&str> = pgm.lines().collect();
        assert_eq!(&lines[..3], &["P2", "3 3", "65535"]);
        assert_eq!(lines[3], "0 0 0");
        assert_eq!(lines[4], "32768 0 0");
        assert_eq!(lines[5], "0 0 65535");
    }
}
