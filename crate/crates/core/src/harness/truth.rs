use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::initializer::DomainBox;
use crate::model::{distance, forward, FourierScheme, MeasurementVector, Spike, SpikeTrain};
use crate::seeded_rng;
use num_complex::Complex64;

pub const DEFAULT_MAX_ATTEMPTS: usize = 100_000;

const TRUTH_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

fn ball_volume(d: usize, r: f64) -> f64 {
    // V_d = V_{d-2} · 2πr²/d
    let (mut v, start) = if d.is_multiple_of(2) { (1.0, 2) } else { (2.0 * r, 3) };
    let mut n = start;
    while n <= d {
        v *= 2.0 * std::f64::consts::PI * r * r / n as f64;
        n += 2;
    }
    v
}

pub fn generate_ground_truth(
    k: usize,
    epsilon: f64,
    domain: &DomainBox,
    amplitude_range: [f64; 2],
    seed: u64,
) -> Result<SpikeTrain> {
    generate_ground_truth_capped(
        k,
        epsilon,
        domain,
        amplitude_range,
        seed,
        DEFAULT_MAX_ATTEMPTS,
    )
}

/// Uniform positions in `domain` by rejection sampling until every pair is at
/// least `epsilon` apart, with amplitudes uniform in `amplitude_range`.
pub fn generate_ground_truth_capped(
    k: usize,
    epsilon: f64,
    domain: &DomainBox,
    amplitude_range: [f64; 2],
    seed: u64,
    max_attempts: usize,
) -> Result<SpikeTrain> {
    domain.validate()?;
    let [lo, hi] = amplitude_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "amplitude range [{lo}, {hi}] is empty"
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let d = domain.dimension();
    let infeasible = || Error::InfeasiblePacking {
        k,
        epsilon,
        attempts: 0,
    };
    // disjoint balls of radius ε/2 must fit in the box grown by ε/2
    let room: f64 = domain.extent().iter().map(|e| e + epsilon).product();
    if k as f64 * ball_volume(d, epsilon / 2.0) > room {
        return Err(infeasible());
    }

    let mut rng = seeded_rng(seed, TRUTH_STREAM);
    let mut spikes: Vec<Spike> = Vec::with_capacity(k);
    let mut attempts = 0;
    while spikes.len() < k {
        if attempts == max_attempts {
            return Err(Error::InfeasiblePacking {
                k,
                epsilon,
                attempts,
            });
        }
        attempts += 1;
        let candidate: Vec<f64> = domain
            .lower
            .iter()
            .zip(&domain.upper)
            .map(|(&a, &b)| if a < b { rng.gen_range(a..b) } else { a })
            .collect();
        if spikes
            .iter()
            .all(|s| distance(&s.position, &candidate) >= epsilon)
        {
            let amplitude = rng.gen_range(lo..=hi);
            spikes.push(Spike::new(amplitude, candidate));
        }
    }
    SpikeTrain::new(d, spikes)
}

/// `y = A x + e` with `e` complex Gaussian rescaled to `‖e‖₂ = noise_level`.
pub fn simulate(
    scheme: &FourierScheme,
    truth: &SpikeTrain,
    noise_level: f64,
    seed: u64,
) -> Result<MeasurementVector> {
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be nonnegative, got {noise_level}"
        )));
    }
    let clean = forward(scheme, truth)?;
    if noise_level == 0.0 {
        return Ok(clean);
    }
    let mut rng = seeded_rng(seed, NOISE_STREAM);
    let noise: Vec<Complex64> = (0..clean.len())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = noise.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt();
    let scale = noise_level / norm;
    Ok(MeasurementVector::new(
        clean
            .values()
            .iter()
            .zip(&noise)
            .map(|(y, e)| y + e * scale)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_gaussian_scheme;

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(1, 0.5) - 1.0).abs() < 1e-15);
        assert!((ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_volume(3, 1.0) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn single_spike_in_box() {
        let domain = DomainBox::unit(2);
        for seed in 0..20 {
            let x = generate_ground_truth(1, 0.1, &domain, [0.5, 1.5], seed).unwrap();
            assert_eq!(x.len(), 1);
            assert!(domain.contains(&x.spikes()[0].position));
            let a = x.spikes()[0].amplitude;
            assert!((0.5..=1.5).contains(&a));
        }
    }

    #[test]
    fn hundred_spikes_at_one_percent_separation() {
        let x = generate_ground_truth(100, 0.01, &DomainBox::unit(2), [0.5, 1.5], 3).unwrap();
        assert_eq!(x.len(), 100);
        assert!(x.min_separation().unwrap() >= 0.01);
    }

    #[test]
    fn truth_is_deterministic() {
        let domain = DomainBox::unit(3);
        let a = generate_ground_truth(10, 0.2, &domain, [0.5, 1.5], 9).unwrap();
        let b = generate_ground_truth(10, 0.2, &domain, [0.5, 1.5], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_packing() {
        let domain = DomainBox::unit(1);
        // twenty disjoint intervals of length 0.5 do not fit in [-0.25, 1.25]
        assert!(matches!(
            generate_ground_truth(20, 0.5, &domain, [1.0, 1.0], 0),
            Err(Error::InfeasiblePacking { .. })
        ));
        // passes the volume test but rejection sampling gives up
        assert!(matches!(
            generate_ground_truth_capped(3, 0.5, &domain, [1.0, 1.0], 0, 3),
            Err(Error::InfeasiblePacking { attempts: 3, .. })
        ));
    }

    #[test]
    fn noise_has_requested_norm() {
        let scheme = make_gaussian_scheme(64, 2, 5.0, true, 1).unwrap();
        let truth = generate_ground_truth(3, 0.1, &DomainBox::unit(2), [0.5, 1.5], 1).unwrap();
        let clean = forward(&scheme, &truth).unwrap();
        assert_eq!(simulate(&scheme, &truth, 0.0, 5).unwrap(), clean);

        let noisy = simulate(&scheme, &truth, 0.3, 5).unwrap();
        let err = noisy
            .values()
            .iter()
            .zip(clean.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!((err - 0.3).abs() < 1e-12);
        assert_eq!(simulate(&scheme, &truth, 0.3, 5).unwrap(), noisy);
        assert_ne!(simulate(&scheme, &truth, 0.3, 6).unwrap(), noisy);
    }
}
