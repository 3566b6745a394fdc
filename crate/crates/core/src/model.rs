//! Spike trains, their flattened parametrization, and weighted Fourier
//! measurement schemes together with the forward operator.
//!
//! A measurement functional is `α_l(t) = c_l exp(-i <ω_l, t>)`, so a spike
//! train `Σ a_r δ_{t_r}` is observed as `y_l = c_l Σ_r a_r exp(-i <ω_l, t_r>)`.

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

/// Largest number of measurements `make_regular_scheme` will enumerate.
pub const DEFAULT_MAX_MEASUREMENTS: usize = 1 << 22;

/// A single Dirac mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub amplitude: f64,
    pub position: Vec<f64>,
}

impl Spike {
    pub fn new(amplitude: f64, position: Vec<f64>) -> Self {
        Self {
            amplitude,
            position,
        }
    }
}

/// Euclidean distance between two points of equal dimension.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A finite signed measure written as an ordered list of spikes.
///
/// The list order is meaningful: it is the parameter order used by
/// [`phi_inverse`] and the index space of merge reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrainRepr")]
pub struct SpikeTrain {
    dimension: usize,
    spikes: Vec<Spike>,
}

#[derive(Deserialize)]
struct TrainRepr {
    dimension: usize,
    spikes: Vec<Spike>,
}

impl TryFrom<TrainRepr> for SpikeTrain {
    type Error = Error;

    fn try_from(repr: TrainRepr) -> Result<Self> {
        SpikeTrain::new(repr.dimension, repr.spikes)
    }
}

impl SpikeTrain {
    pub fn new(dimension: usize, spikes: Vec<Spike>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::MalformedTrain("dimension must be at least 1".into()));
        }
        for (i, spike) in spikes.iter().enumerate() {
            if spike.position.len() != dimension {
                return Err(Error::MalformedTrain(format!(
                    "spike {i} has a {}-dimensional position in a {dimension}-dimensional train",
                    spike.position.len()
                )));
            }
            if !spike.amplitude.is_finite() || spike.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::MalformedTrain(format!("spike {i} is not finite")));
            }
        }
        Ok(Self { dimension, spikes })
    }

    pub fn empty(dimension: usize) -> Result<Self> {
        Self::new(dimension, Vec::new())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn into_spikes(self) -> Vec<Spike> {
        self.spikes
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    /// Sum of all amplitudes.
    pub fn total_mass(&self) -> f64 {
        self.spikes.iter().map(|s| s.amplitude).sum()
    }

    /// Smallest pairwise position distance, `None` for fewer than two spikes.
    pub fn min_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.spikes.iter().enumerate() {
            for b in &self.spikes[i + 1..] {
                let dist = distance(&a.position, &b.position);
                best = Some(best.map_or(dist, |v| v.min(dist)));
            }
        }
        best
    }

    /// Membership in the model set: pairwise distances at least `epsilon` and
    /// every position inside the centered ℓ² ball of radius `radius`.
    pub fn is_separated(&self, epsilon: f64, radius: f64) -> bool {
        let inside = self
            .spikes
            .iter()
            .all(|s| s.position.iter().map(|x| x * x).sum::<f64>().sqrt() <= radius);
        inside && self.min_separation().is_none_or(|d| d >= epsilon)
    }
}

/// Flattened parameters `(a_1..a_k, t_1[0..d], ..., t_k[0..d])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr")]
pub struct ParamVector {
    #[serde(rename = "d")]
    dimension: usize,
    k: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct ParamRepr {
    d: usize,
    k: usize,
    values: Vec<f64>,
}

impl TryFrom<ParamRepr> for ParamVector {
    type Error = Error;

    fn try_from(repr: ParamRepr) -> Result<Self> {
        ParamVector::new(repr.d, repr.k, repr.values)
    }
}

impl ParamVector {
    pub fn new(dimension: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::MalformedParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if values.len() != k * (dimension + 1) {
            return Err(Error::MalformedParameter(format!(
                "expected {} values for k={k}, d={dimension}, got {}",
                k * (dimension + 1),
                values.len()
            )));
        }
        Ok(Self {
            dimension,
            k,
            values,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of spikes encoded.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.values[..self.k]
    }

    /// All positions, concatenated.
    pub fn positions(&self) -> &[f64] {
        &self.values[self.k..]
    }

    pub fn position(&self, r: usize) -> &[f64] {
        let d = self.dimension;
        &self.values[self.k + r * d..self.k + (r + 1) * d]
    }

    /// Same layout, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            dimension: self.dimension,
            k: self.k,
            values,
        }
    }
}

/// Unpacks parameters into a spike train, preserving order.
pub fn phi(theta: &ParamVector) -> Result<SpikeTrain> {
    if let Some(i) = theta.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::MalformedParameter(format!(
            "value {i} is not finite"
        )));
    }
    let spikes = (0..theta.k)
        .map(|r| Spike::new(theta.values[r], theta.position(r).to_vec()))
        .collect();
    SpikeTrain::new(theta.dimension, spikes).map_err(|e| Error::MalformedParameter(e.to_string()))
}

/// Packs a spike train into parameters, preserving order.
pub fn phi_inverse(train: &SpikeTrain) -> ParamVector {
    let k = train.len();
    let mut values = Vec::with_capacity(k * (train.dimension + 1));
    values.extend(train.spikes.iter().map(|s| s.amplitude));
    for spike in &train.spikes {
        values.extend_from_slice(&spike.position);
    }
    ParamVector {
        dimension: train.dimension,
        k,
        values,
    }
}

/// Frequencies `ω_l` and weights `c_l` defining the measurement operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeRepr", into = "SchemeRepr")]
pub struct FourierScheme {
    dimension: usize,
    // row-major m × d
    frequencies: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SchemeRepr {
    d: usize,
    frequencies: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<SchemeRepr> for FourierScheme {
    type Error = Error;

    fn try_from(repr: SchemeRepr) -> Result<Self> {
        FourierScheme::new(repr.d, repr.frequencies, repr.weights)
    }
}

impl From<FourierScheme> for SchemeRepr {
    fn from(scheme: FourierScheme) -> Self {
        SchemeRepr {
            d: scheme.dimension,
            frequencies: scheme
                .frequencies
                .chunks(scheme.dimension)
                .map(<[f64]>::to_vec)
                .collect(),
            weights: scheme.weights,
        }
    }
}

impl FourierScheme {
    pub fn new(dimension: usize, frequencies: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidScheme("dimension must be at least 1".into()));
        }
        if frequencies.is_empty() {
            return Err(Error::InvalidScheme(
                "at least one frequency is required".into(),
            ));
        }
        if frequencies.len() != weights.len() {
            return Err(Error::InvalidScheme(format!(
                "{} frequencies but {} weights",
                frequencies.len(),
                weights.len()
            )));
        }
        let mut flat = Vec::with_capacity(frequencies.len() * dimension);
        for (l, omega) in frequencies.iter().enumerate() {
            if omega.len() != dimension {
                return Err(Error::InvalidScheme(format!(
                    "frequency {l} has length {}, expected {dimension}",
                    omega.len()
                )));
            }
            flat.extend_from_slice(omega);
        }
        if flat.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidScheme(
                "non-finite frequency or weight".into(),
            ));
        }
        Ok(Self {
            dimension,
            frequencies: flat,
            weights,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of measurements `m`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn frequency(&self, l: usize) -> &[f64] {
        &self.frequencies[l * self.dimension..(l + 1) * self.dimension]
    }

    pub fn frequencies(&self) -> impl Iterator<Item = &[f64]> {
        self.frequencies.chunks(self.dimension)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Complex measurements `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementRepr", into = "MeasurementRepr")]
pub struct MeasurementVector(Vec<Complex64>);

#[derive(Serialize, Deserialize)]
struct MeasurementRepr {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<MeasurementRepr> for MeasurementVector {
    type Error = Error;

    fn try_from(repr: MeasurementRepr) -> Result<Self> {
        if repr.re.len() != repr.im.len() {
            return Err(Error::DimensionMismatch {
                expected: repr.re.len(),
                actual: repr.im.len(),
            });
        }
        Ok(Self(
            repr.re
                .into_iter()
                .zip(repr.im)
                .map(|(re, im)| Complex64::new(re, im))
                .collect(),
        ))
    }
}

impl From<MeasurementVector> for MeasurementRepr {
    fn from(y: MeasurementVector) -> Self {
        MeasurementRepr {
            re: y.0.iter().map(|z| z.re).collect(),
            im: y.0.iter().map(|z| z.im).collect(),
        }
    }
}

impl MeasurementVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); m])
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Squared ℓ² norm.
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Evaluates `Σ_r a_r exp(-i <ω_l, t_r>)` weighted by `c_l` for every `l`.
///
/// Spikes are accumulated in ascending index order for every measurement so
/// results are bit-reproducible.
pub(crate) fn synthesize(
    scheme: &FourierScheme,
    amplitudes: &[f64],
    positions: &[f64],
) -> Vec<Complex64> {
    let d = scheme.dimension;
    scheme
        .frequencies()
        .zip(&scheme.weights)
        .map(|(omega, &c)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (&a, t) in amplitudes.iter().zip(positions.chunks_exact(d)) {
                let (s, co) = dot(omega, t).sin_cos();
                acc += Complex64::new(a * co, -a * s);
            }
            acc * c
        })
        .collect()
}

/// The forward operator `A` applied to a spike train.
pub fn forward(scheme: &FourierScheme, train: &SpikeTrain) -> Result<MeasurementVector> {
    if train.dimension != scheme.dimension {
        return Err(Error::DimensionMismatch {
            expected: scheme.dimension,
            actual: train.dimension,
        });
    }
    let theta = phi_inverse(train);
    Ok(MeasurementVector(synthesize(
        scheme,
        theta.amplitudes(),
        theta.positions(),
    )))
}

/// Random Fourier sampling with i.i.d. centered Gaussian frequencies of
/// per-coordinate standard deviation `sigma`.
///
/// Weights are `1` when `unit_weights` is set and `1/√m` otherwise.
pub fn make_gaussian_scheme(
    m: usize,
    d: usize,
    sigma: f64,
    unit_weights: bool,
    seed: u64,
) -> Result<FourierScheme> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidScheme("m and d must be at least 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidScheme(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked above");
    let mut rng = seeded_rng(seed, 0);
    let frequencies = (0..m)
        .map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let weight = if unit_weights {
        1.0
    } else {
        1.0 / (m as f64).sqrt()
    };
    FourierScheme::new(d, frequencies, vec![weight; m])
}

/// Regular low-frequency sampling `ω = base · n` for `n ∈ {-f_c..f_c}^d`,
/// enumerated lexicographically with unit weights.
pub fn make_regular_scheme(f_c: usize, d: usize, base: f64) -> Result<FourierScheme> {
    make_regular_scheme_capped(f_c, d, base, DEFAULT_MAX_MEASUREMENTS)
}

pub fn make_regular_scheme_capped(
    f_c: usize,
    d: usize,
    base: f64,
    max_m: usize,
) -> Result<FourierScheme> {
    if d == 0 {
        return Err(Error::InvalidScheme("dimension must be at least 1".into()));
    }
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::InvalidScheme(format!(
            "base must be positive, got {base}"
        )));
    }
    let side = 2 * f_c + 1;
    let m = u32::try_from(d)
        .ok()
        .and_then(|d| side.checked_pow(d))
        .filter(|&m| m <= max_m)
        .ok_or_else(|| {
            Error::InvalidScheme(format!(
                "(2·{f_c}+1)^{d} measurements exceed the maximum of {max_m}"
            ))
        })?;

    let mut frequencies = Vec::with_capacity(m);
    let mut index = vec![0usize; d];
    for _ in 0..m {
        frequencies.push(
            index
                .iter()
                .map(|&n| base * (n as f64 - f_c as f64))
                .collect::<Vec<_>>(),
        );
        // odometer increment, last axis fastest
        for axis in (0..d).rev() {
            index[axis] += 1;
            if index[axis] < side {
                break;
            }
            index[axis] = 0;
        }
    }
    FourierScheme::new(d, frequencies, vec![1.0; m])
}
