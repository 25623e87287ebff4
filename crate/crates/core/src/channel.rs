//! Fading gains with path loss, channel-estimation error and AWGN.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One draw of `CN(0, 1)`: real and imaginary parts i.i.d. `N(0, ½)`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Amplitude path loss `√(d^−ζ)`.
pub fn path_loss_amplitude(distance: f64, exponent: f64) -> Result<f64> {
    if !(distance > 0.0 && distance.is_finite()) {
        return invalid(format!("distance must be positive, got {distance}"));
    }
    if !exponent.is_finite() {
        return invalid("path-loss exponent must be finite");
    }
    Ok(distance.powf(-exponent / 2.0))
}

pub fn rayleigh_gain<R: Rng + ?Sized>(distance: f64, exponent: f64, rng: &mut R) -> Result<Complex64> {
    Ok(complex_normal(rng) * path_loss_amplitude(distance, exponent)?)
}

/// Nakagami-m envelope (`|g|² ~ Gamma(m, Ω/m)`, `Ω = d^−ζ`) with uniform phase.
#[derive(Debug, Clone, Copy)]
pub struct Nakagami {
    power: Gamma<f64>,
}

impl Nakagami {
    pub fn new(m_shape: f64, omega: f64) -> Result<Self> {
        if !(m_shape >= 0.5 && m_shape.is_finite()) {
            return invalid(format!("Nakagami shape must be at least 0.5, got {m_shape}"));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return invalid(format!("Nakagami spread must be positive, got {omega}"));
        }
        let power = Gamma::new(m_shape, omega / m_shape)
            .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        Ok(Nakagami { power })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let envelope = self.power.sample(rng).sqrt();
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        Complex64::from_polar(envelope, phase)
    }
}

pub fn nakagami_gain<R: Rng + ?Sized>(distance: f64, exponent: f64, m_shape: f64, rng: &mut R) -> Result<Complex64> {
    let omega = path_loss_amplitude(distance, exponent)?.powi(2);
    Ok(Nakagami::new(m_shape, omega)?.sample(rng))
}

/// Scaling of the estimate and error components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CsiMode {
    /// Standard-deviation factors `(1 − σ²)` and `σ²`, each with an extra `1/√2`.
    #[default]
    Linear,
    /// Factors `√(1 − σ²)` and `√σ²`, so `E|g|² = d^−ζ`.
    VarianceConsistent,
}

impl CsiMode {
    /// Amplitude factors applied to the estimate and the error.
    pub fn factors(&self, sigma_e2: f64) -> (f64, f64) {
        match self {
            CsiMode::Linear => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                ((1.0 - sigma_e2) * s, sigma_e2 * s)
            }
            CsiMode::VarianceConsistent => ((1.0 - sigma_e2).sqrt(), sigma_e2.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub g: Complex64,
    pub g_hat: Complex64,
    pub g_tilde: Complex64,
    pub distance: f64,
    pub exponent: f64,
    pub sigma_e2: f64,
}

/// Draws an estimate and an independent error; the true gain is their sum.
pub fn imperfect_csi_split<R: Rng + ?Sized>(
    distance: f64,
    exponent: f64,
    sigma_e2: f64,
    mode: CsiMode,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(0.0..=1.0).contains(&sigma_e2) {
        return invalid(format!("estimation-error variance {sigma_e2} is outside [0, 1]"));
    }
    let pl = path_loss_amplitude(distance, exponent)?;
    let (fh, ft) = mode.factors(sigma_e2);
    let g_hat = complex_normal(rng) * (fh * pl);
    let g_tilde = complex_normal(rng) * (ft * pl);
    Ok(ChannelRealization {
        g: g_hat + g_tilde,
        g_hat,
        g_tilde,
        distance,
        exponent,
        sigma_e2,
    })
}

/// Adds i.i.d. `CN(0, N0)` to each sample.
pub fn awgn<R: Rng + ?Sized>(samples: &[Complex64], n0: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    if !(n0 >= 0.0 && n0.is_finite()) {
        return invalid(format!("noise variance must be finite and nonnegative, got {n0}"));
    }
    if n0 == 0.0 {
        return Ok(samples.to_vec());
    }
    let sd = n0.sqrt();
    Ok(samples.iter().map(|s| s + complex_normal(rng) * sd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub bandwidth_hz: f64,
    pub n0_dbm: f64,
    pub n0_linear: f64,
}

/// Thermal noise floor `−174 + 10·log10(B)` dBm.
pub fn noise_from_bandwidth(bandwidth_hz: f64) -> Result<NoiseSpec> {
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
        return invalid(format!("bandwidth must be positive, got {bandwidth_hz}"));
    }
    let n0_dbm = -174.0 + 10.0 * bandwidth_hz.log10();
    Ok(NoiseSpec {
        bandwidth_hz,
        n0_dbm,
        n0_linear: 10f64.powf((n0_dbm - 30.0) / 10.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_power(v: &[Complex64]) -> f64 {
        v.iter().map(|g| g.norm_sqr()).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn rayleigh_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g: Vec<_> = (0..1_000_000).map(|_| rayleigh_gain(6.015, 2.0, &mut rng).unwrap()).collect();
        let want = 6.015f64.powi(-2);
        assert!((want - 0.02764).abs() < 1e-5);
        assert!((mean_power(&g) / want - 1.0).abs() < 0.02);
        assert!(rayleigh_gain(0.0, 2.0, &mut rng).is_err());
        assert!(rayleigh_gain(-1.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn seeded_draws_repeat() {
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..5).map(|_| rayleigh_gain(2.0, 3.0, &mut rng).unwrap()).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let b: Vec<_> = (0..5).map(|_| rayleigh_gain(2.0, 3.0, &mut rng).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn nakagami_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [0.5, 1.0, 2.5] {
            let g: Vec<_> = (0..200_000).map(|_| nakagami_gain(3.0, 2.0, m, &mut rng).unwrap()).collect();
            assert!((mean_power(&g) * 9.0 - 1.0).abs() < 0.02, "m={m}");
        }
        let p: Vec<f64> = (0..200_000)
            .map(|_| nakagami_gain(1.0, 0.0, 3.0, &mut rng).unwrap().norm_sqr())
            .collect();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (p.len() - 1) as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert!((var - 1.0 / 3.0).abs() < 0.01);
        assert!(nakagami_gain(1.0, 2.0, 0.4, &mut rng).is_err());
    }

    #[test]
    fn csi_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [CsiMode::Linear, CsiMode::VarianceConsistent] {
            let r = imperfect_csi_split(2.0, 2.0, 0.0, mode, &mut rng).unwrap();
            assert_eq!(r.g_tilde, Complex64::new(0.0, 0.0));
            assert_eq!(r.g, r.g_hat);
            let r = imperfect_csi_split(2.0, 2.0, 1.0, mode, &mut rng).unwrap();
            assert_eq!(r.g_hat, Complex64::new(0.0, 0.0));
            let r = imperfect_csi_split(2.0, 2.0, 0.4, mode, &mut rng).unwrap();
            assert_eq!(r.g, r.g_hat + r.g_tilde);
        }
        assert!(imperfect_csi_split(1.0, 2.0, 1.2, CsiMode::Linear, &mut rng).is_err());
        assert!(imperfect_csi_split(1.0, 2.0, -0.1, CsiMode::Linear, &mut rng).is_err());
    }

    #[test]
    fn csi_linear_mode_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws: Vec<_> = (0..1_000_000)
            .map(|_| imperfect_csi_split(1.0, 0.0, 0.3, CsiMode::Linear, &mut rng).unwrap())
            .collect();
        let hat: f64 = draws.iter().map(|r| r.g_hat.norm_sqr()).sum::<f64>() / draws.len() as f64;
        let tilde: f64 = draws.iter().map(|r| r.g_tilde.norm_sqr()).sum::<f64>() / draws.len() as f64;
        assert!((hat / (0.49 * 0.5) - 1.0).abs() < 0.01);
        assert!((tilde / (0.09 * 0.5) - 1.0).abs() < 0.01);
        let vc: Vec<_> = (0..200_000)
            .map(|_| imperfect_csi_split(1.0, 0.0, 0.3, CsiMode::VarianceConsistent, &mut rng).unwrap().g)
            .collect();
        assert!((mean_power(&vc) - 1.0).abs() < 0.02);
    }

    #[test]
    fn awgn_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = vec![Complex64::new(0.25, -1.5); 3];
        assert_eq!(awgn(&x, 0.0, &mut rng).unwrap(), x);
        assert!(awgn(&[], 1.0, &mut rng).unwrap().is_empty());
        assert!(awgn(&x, -1.0, &mut rng).is_err());
        let y = awgn(&vec![Complex64::new(0.0, 0.0); 1_000_000], 2.0, &mut rng).unwrap();
        let vr = y.iter().map(|v| v.re * v.re).sum::<f64>() / y.len() as f64;
        let vi = y.iter().map(|v| v.im * v.im).sum::<f64>() / y.len() as f64;
        assert!((vr - 1.0).abs() < 0.02 && (vi - 1.0).abs() < 0.02);
    }

    #[test]
    fn noise_floor() {
        let n = noise_from_bandwidth(1e6).unwrap();
        assert!((n.n0_dbm + 114.0).abs() < 1e-12);
        assert!((n.n0_linear / 3.981e-15 - 1.0).abs() < 1e-3);
        assert_eq!(noise_from_bandwidth(1.0).unwrap().n0_dbm, -174.0);
        assert!(noise_from_bandwidth(0.0).is_err());
    }
}
