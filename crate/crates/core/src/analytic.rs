//! Closed-form two-user BER for square-QAM NOMA over Rayleigh fading.
//!
//! Per axis the received point is `a·A1 + b·A2 + n` with odd integer
//! levels `a`, `b`, amplitudes `A_k = √(α_k/E_k)`, `E_k = 2(M_k − 1)/3`,
//! and real noise of standard deviation `1/s`, `s = √(2γ·q^−ζ)`. Here
//! `γ = Ps·|h|²/N0` is the instantaneous SNR before path loss, so
//! `ε = √(2γ)` and the path loss enters through `√(q^−ζ)`.
//!
//! User 1 uses the bit-wise Gray-QAM sum with interference averaged over
//! user 2's levels. User 2 is exact: every noise interval on which the
//! SIC receiver decides a wrong bit contributes `Q(s·lo) − Q(s·hi)`, and
//! the Rayleigh average of each tail is closed form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Gaussian tail `Q(x) = ½·erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// How the Rayleigh-averaged tail is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PcVariant {
    /// `½·[1 − √(x/(x+2))]`, the exact average of `Q(c√γ)`.
    #[default]
    Half,
    /// `[1 − √(x/(x+2))]` without the leading ½.
    AsWritten,
}

/// Rayleigh average of `Q(c·√γ)` for exponential `γ` with mean `gamma_bar`.
pub fn averaged_tail(c: f64, gamma_bar: f64, variant: PcVariant) -> f64 {
    let x = c * c * gamma_bar;
    let root = if x.is_infinite() { 1.0 } else { (x / (x + 2.0)).sqrt() };
    let half = 0.5 * (1.0 - c.signum() * root);
    match variant {
        PcVariant::Half => half,
        PcVariant::AsWritten => 2.0 * half,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConfig {
    pub m1: u32,
    pub m2: u32,
    pub alpha1: f64,
    pub alpha2: f64,
    pub q1: f64,
    pub q2: f64,
    pub zeta: f64,
    pub snr_grid_db: Vec<f64>,
    #[serde(default)]
    pub pc_variant: PcVariant,
}

impl AnalyticConfig {
    pub fn new(m1: u32, m2: u32, alpha1: f64, q1: f64, q2: f64, zeta: f64, snr_grid_db: Vec<f64>) -> Result<Self> {
        let cfg = AnalyticConfig {
            m1,
            m2,
            alpha1,
            alpha2: 1.0 - alpha1,
            q1,
            q2,
            zeta,
            snr_grid_db,
            pc_variant: PcVariant::Half,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, m) in [("m1", self.m1), ("m2", self.m2)] {
            if !matches!(m, 4 | 16 | 64) {
                out.push(format!("{name} = {m} is not a supported square QAM order (4, 16 or 64)"));
            }
        }
        if (self.alpha1 + self.alpha2 - 1.0).abs() > 1e-12 {
            out.push(format!("alpha1 + alpha2 = {}, expected 1", self.alpha1 + self.alpha2));
        }
        if !(self.alpha1 > self.alpha2 && self.alpha2 > 0.0) {
            out.push("power coefficients must satisfy alpha1 > alpha2 > 0".to_string());
        }
        for (name, q) in [("q1", self.q1), ("q2", self.q2)] {
            if !(q > 0.0 && q.is_finite()) {
                out.push(format!("{name} must be a positive distance, got {q}"));
            }
        }
        if !self.zeta.is_finite() {
            out.push("zeta must be finite".to_string());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            out.push("SNR grid values must be finite".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p))
        }
    }

    fn order(&self, user: usize) -> u32 {
        if user == 1 {
            self.m1
        } else {
            self.m2
        }
    }

    /// `√M_k`.
    pub fn side(&self, user: usize) -> usize {
        (self.order(user) as f64).sqrt().round() as usize
    }

    /// Bits per axis `v_k = log2 √M_k`.
    pub fn axis_bits(&self, user: usize) -> u32 {
        self.side(user).trailing_zeros()
    }

    /// Mean energy of the odd-integer grid, `2(M_k − 1)/3`.
    pub fn energy(&self, user: usize) -> f64 {
        2.0 * (self.order(user) as f64 - 1.0) / 3.0
    }

    /// Per-axis amplitude of one grid step `√(α_k/E_k)`.
    pub fn amplitude(&self, user: usize) -> f64 {
        let alpha = if user == 1 { self.alpha1 } else { self.alpha2 };
        (alpha / self.energy(user)).sqrt()
    }

    /// Power path loss `q_k^−ζ`.
    pub fn path_loss(&self, user: usize) -> f64 {
        let q = if user == 1 { self.q1 } else { self.q2 };
        q.powf(-self.zeta)
    }

    fn check_user(user: usize) -> Result<()> {
        if user == 1 || user == 2 {
            Ok(())
        } else {
            invalid(format!("user must be 1 or 2, got {user}"))
        }
    }

    fn check_bit(&self, user: usize, k: u32) -> Result<()> {
        let v = self.axis_bits(user);
        if k < 1 || k > v {
            return invalid(format!("bit index {k} is outside 1..={v} for user {user}"));
        }
        Ok(())
    }
}

/// `g_k^±(a, b)` at instantaneous SNR `gamma` for user `user`.
pub fn g_pm(a: f64, b: f64, cfg: &AnalyticConfig, user: usize, gamma: f64) -> Result<(f64, f64)> {
    AnalyticConfig::check_user(user)?;
    let eps = (2.0 * gamma).sqrt() * cfg.path_loss(user).sqrt();
    let x = a * cfg.amplitude(1);
    let y = b * cfg.amplitude(2);
    Ok((eps * (x + y), eps * (x - y)))
}

/// Coefficient and floor argument of the Gray-QAM bit sum for bit `k`.
fn gray_coefficient(i: usize, k: u32, side: usize) -> f64 {
    let p = 1usize << (k - 1);
    let lambda = (i * p) / side;
    let sign = if lambda.is_multiple_of(2) { 1.0 } else { -1.0 };
    let round = ((i * p) as f64 / side as f64 + 0.5).floor();
    sign * (p as f64 - round)
}

/// Error probability of user 1's axis bit `k` (1 = most significant) at
/// instantaneous SNR `gamma`.
pub fn user1_conditional_ber(cfg: &AnalyticConfig, gamma: f64, k: u32) -> Result<f64> {
    cfg.validate()?;
    cfg.check_bit(1, k)?;
    Ok(user1_bit(cfg, gamma, k))
}

fn user1_bit(cfg: &AnalyticConfig, gamma: f64, k: u32) -> f64 {
    let s1 = cfg.side(1);
    let s2 = cfg.side(2);
    let upper = ((1.0 - 0.5f64.powi(k as i32)) * s1 as f64) as usize - 1;
    let mut sum = 0.0;
    for i in 0..=upper {
        let d1 = gray_coefficient(i, k, s1);
        for l in 0..s2 {
            let b = 2.0 * l as f64 - s2 as f64 + 1.0;
            let (gp, _) = g_pm(2.0 * i as f64 + 1.0, b, cfg, 1, gamma).expect("user 1");
            sum += d1 * q_function(gp);
        }
    }
    // the double sum is half the bit error probability
    2.0 * sum / (s1 * s2) as f64
}

/// User 1 BER averaged over its axis bits, at instantaneous SNR `gamma`.
pub fn user1_conditional_total(cfg: &AnalyticConfig, gamma: f64) -> f64 {
    let v = cfg.axis_bits(1);
    (1..=v).map(|k| user1_bit(cfg, gamma, k)).sum::<f64>() / v as f64
}

/// Relative tolerance of the fading-average quadrature.
pub const QUADRATURE_REL_TOL: f64 = 1e-8;

/// User 1 BER averaged over `γ ~ Exp(gamma_bar)` by numerical quadrature.
pub fn user1_average_ber(cfg: &AnalyticConfig, gamma_bar: f64) -> Result<f64> {
    cfg.validate()?;
    if !(gamma_bar >= 0.0) {
        return invalid(format!("mean SNR must be nonnegative, got {gamma_bar}"));
    }
    if gamma_bar == 0.0 {
        return Ok(user1_conditional_total(cfg, 0.0));
    }
    // γ = γ̄·t, t = x/(1 − x): ∫ P(γ̄t)·e^(−t) dt over x ∈ [0, 1)
    let f = |x: f64| {
        let t = x / (1.0 - x);
        user1_conditional_total(cfg, gamma_bar * t) * (-t).exp() / ((1.0 - x) * (1.0 - x))
    };
    // most of the mass sits below t ~ 1/(c²γ̄); split there so both pieces are smooth
    let knee = {
        let t = 1.0 / (cfg.amplitude(1).powi(2) * cfg.path_loss(1) * gamma_bar);
        (t / (1.0 + t)).clamp(1e-12, 0.5)
    };
    let pieces = [(0.0, knee), (knee, 1.0)];
    let rough: f64 = pieces
        .iter()
        .map(|&(a, b)| quadrature::double_exponential::integrate(f, a, b, 1e-6).integral)
        .sum();
    let target = QUADRATURE_REL_TOL * rough.abs() / 4.0;
    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    for &(a, b) in &pieces {
        let out = quadrature::double_exponential::integrate(f, a, b, target);
        value += out.integral;
        err += out.error_estimate;
        evals += out.num_function_evaluations;
    }
    if !value.is_finite() || err > QUADRATURE_REL_TOL * value.abs() {
        return Err(Error::Numerical(format!(
            "fading average did not converge at mean SNR {gamma_bar}: estimate {value}, error {err}, {evals} evaluations"
        )));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Signed tail terms: probability `= Σ w·Q(s·u)` for noise scale `s`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TailTable {
    pub terms: Vec<(f64, f64)>,
}

impl TailTable {
    pub fn conditional(&self, s: f64) -> f64 {
        self.terms.iter().map(|&(u, w)| w * q_function(s * u)).sum()
    }

    /// Rayleigh average when `s = √(2γ·pl)` and `γ ~ Exp(gamma_bar)`.
    pub fn faded(&self, pl: f64, gamma_bar: f64, variant: PcVariant) -> f64 {
        let scale = (2.0 * pl).sqrt();
        self.terms
            .iter()
            .map(|&(u, w)| w * averaged_tail(u * scale, gamma_bar, variant))
            .sum()
    }
}

fn nearest_level(x: f64, side: usize) -> usize {
    let idx = ((x + (side as f64 - 1.0)) / 2.0).round();
    idx.clamp(0.0, side as f64 - 1.0) as usize
}

fn level(idx: usize, side: usize) -> f64 {
    2.0 * idx as f64 - (side as f64 - 1.0)
}

fn gray_bit(idx: usize, bits: u32, k: u32) -> usize {
    ((idx ^ (idx >> 1)) >> (bits - k)) & 1
}

/// SIC decision on one axis at received amplitude `z`: layer-1 level
/// index, then layer-2 level index from the residual.
pub fn sic_axis_decision(cfg: &AnalyticConfig, z: f64) -> (usize, usize) {
    let a1 = cfg.amplitude(1);
    let a2 = cfg.amplitude(2);
    let i1 = nearest_level(z / a1, cfg.side(1));
    let r = z - level(i1, cfg.side(1)) * a1;
    (i1, nearest_level(r / a2, cfg.side(2)))
}

/// Exact tail table of `user`'s axis bit `k` under SIC with perfect CSI.
pub fn error_table(cfg: &AnalyticConfig, user: usize, k: u32) -> Result<TailTable> {
    cfg.validate()?;
    AnalyticConfig::check_user(user)?;
    cfg.check_bit(user, k)?;
    let (s1, s2) = (cfg.side(1), cfg.side(2));
    let (a1, a2) = (cfg.amplitude(1), cfg.amplitude(2));
    let bits = cfg.axis_bits(user);
    let weight = 1.0 / (s1 * s2) as f64;
    let mut terms = Vec::new();
    for ia in 0..s1 {
        for ib in 0..s2 {
            let offset = level(ia, s1) * a1 + level(ib, s2) * a2;
            // decision boundaries expressed as noise values
            let mut cuts: Vec<f64> = Vec::new();
            for t in 1..s1 {
                cuts.push(level(t, s1 + 1) * a1 - offset);
            }
            if user == 2 {
                for ja in 0..s1 {
                    let lo = if ja == 0 { f64::NEG_INFINITY } else { level(ja, s1 + 1) * a1 };
                    let hi = if ja + 1 == s1 { f64::INFINITY } else { level(ja + 1, s1 + 1) * a1 };
                    for t in 1..s2 {
                        let z = level(ja, s1) * a1 + level(t, s2 + 1) * a2;
                        if z > lo && z < hi {
                            cuts.push(z - offset);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let truth = if user == 1 { ia } else { ib };
            let wrong = |n: f64| {
                let (d1, d2) = sic_axis_decision(cfg, offset + n);
                let d = if user == 1 { d1 } else { d2 };
                gray_bit(d, bits, k) != gray_bit(truth, bits, k)
            };
            let mut edges = Vec::with_capacity(cuts.len() + 2);
            edges.push(f64::NEG_INFINITY);
            edges.extend(cuts);
            edges.push(f64::INFINITY);
            for w in edges.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let mid = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (false, true) => hi - 1.0,
                    (true, false) => lo + 1.0,
                    (false, false) => 0.0,
                };
                if !wrong(mid) {
                    continue;
                }
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => {
                        terms.push((lo, weight));
                        terms.push((hi, -weight));
                    }
                    (false, true) => terms.push((-hi, weight)),
                    (true, false) => terms.push((lo, weight)),
                    (false, false) => terms.push((f64::NEG_INFINITY, weight)),
                }
            }
        }
    }
    Ok(TailTable { terms })
}

/// Error probability of user 2's axis bit `k` at instantaneous SNR `gamma`.
pub fn user2_conditional_ber(cfg: &AnalyticConfig, gamma: f64, k: u32) -> Result<f64> {
    let t = error_table(cfg, 2, k)?;
    Ok(t.conditional((2.0 * gamma * cfg.path_loss(2)).sqrt()).clamp(0.0, 1.0))
}

/// Rayleigh-averaged error probability of user 2's axis bit `k`.
pub fn user2_average_ber(cfg: &AnalyticConfig, gamma_bar: f64, k: u32) -> Result<f64> {
    let t = error_table(cfg, 2, k)?;
    Ok(t.faded(cfg.path_loss(2), gamma_bar, cfg.pc_variant))
}

/// User 2 BER averaged over its axis bits and the fading.
pub fn user2_average_total(cfg: &AnalyticConfig, gamma_bar: f64) -> Result<f64> {
    let v = cfg.axis_bits(2);
    let mut sum = 0.0;
    for k in 1..=v {
        sum += user2_average_ber(cfg, gamma_bar, k)?;
    }
    Ok(sum / v as f64)
}

/// User 1 average from its exact tail table, without quadrature.
pub fn user1_average_closed_form(cfg: &AnalyticConfig, gamma_bar: f64) -> Result<f64> {
    let v = cfg.axis_bits(1);
    let mut sum = 0.0;
    for k in 1..=v {
        sum += error_table(cfg, 1, k)?.faded(cfg.path_loss(1), gamma_bar, PcVariant::Half);
    }
    Ok(sum / v as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerCurvePoint {
    pub snr_db: f64,
    pub ber_user1: f64,
    pub ber_user2: f64,
}

/// Both users' average BER at every grid point; SNR is `Ps/N0`.
pub fn analytic_curve(cfg: &AnalyticConfig) -> Result<Vec<BerCurvePoint>> {
    cfg.validate()?;
    if cfg.snr_grid_db.is_empty() {
        return invalid("SNR grid is empty");
    }
    cfg.snr_grid_db
        .iter()
        .map(|&snr_db| {
            let gamma_bar = 10f64.powf(snr_db / 10.0);
            Ok(BerCurvePoint {
                snr_db,
                ber_user1: user1_average_ber(cfg, gamma_bar)?,
                ber_user2: user2_average_total(cfg, gamma_bar)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_user() -> AnalyticConfig {
        AnalyticConfig::new(4, 4, 0.7, 6.015, 1.0, 2.0, vec![0.0, 10.0, 20.0]).unwrap()
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.281552) - 0.1).abs() < 1e-6);
        // reference value from a 40-digit evaluation of erfc
        assert!((q_function(3.0) / 1.349_898_031_630_094_5e-3 - 1.0).abs() < 1e-12);
        assert!((q_function(-0.7) - (1.0 - q_function(0.7))).abs() < 1e-15);
    }

    #[test]
    fn g_pm_examples() {
        let mut c = two_user();
        let (p, m) = g_pm(1.0, 0.0, &c, 2, 3.0).unwrap();
        assert_eq!(p, m);
        c.alpha1 = 0.5;
        c.alpha2 = 0.5;
        assert_eq!(g_pm(1.0, 1.0, &c, 2, 3.0).unwrap().1, 0.0);
        // with E1 = E2 = 1 the amplitudes are √α
        let c = two_user();
        let (p, m) = g_pm(1.0, 1.0, &c, 2, 1.0).unwrap();
        let e = c.energy(1).sqrt();
        assert!((p * e - 2f64.sqrt() * (0.7f64.sqrt() + 0.3f64.sqrt())).abs() < 1e-14);
        assert!((m * e - 2f64.sqrt() * (0.7f64.sqrt() - 0.3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn user1_limits() {
        let c = two_user();
        assert!((user1_conditional_ber(&c, 0.0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(user1_conditional_ber(&c, 1e9, 1).unwrap() < 1e-12);
        assert!(user1_conditional_ber(&c, 1.0, 2).is_err());
        assert!((user1_average_ber(&c, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pc_variants() {
        assert_eq!(averaged_tail(1.0, 0.0, PcVariant::Half), 0.5);
        assert_eq!(averaged_tail(1.0, 0.0, PcVariant::AsWritten), 1.0);
        assert!(averaged_tail(1.0, 1e12, PcVariant::Half) < 1e-12);
    }

    #[test]
    fn config_rejects_bad_orders() {
        assert!(AnalyticConfig::new(8, 4, 0.7, 1.0, 1.0, 2.0, vec![]).is_err());
        assert!(AnalyticConfig::new(4, 4, 0.3, 1.0, 1.0, 2.0, vec![]).is_err());
    }
}
