//! Constellations, symbol mapping and minimum-distance demapping.
//!
//! Square QAM uses reflected-Gray labels per axis. A label with `B` bits
//! splits into its upper `B/2` bits (in-phase axis) and lower `B/2` bits
//! (quadrature axis); each half is Gray-decoded to a level index `0..√M`
//! and placed at amplitude `(2·level − (√M − 1))·κ`, lowest level most
//! negative. For 4-QAM this gives
//!
//! ```text
//!   label  bits  point
//!     0     00   (-1 - j)/√2
//!     1     01   (-1 + j)/√2
//!     2     10   (+1 - j)/√2
//!     3     11   (+1 + j)/√2
//! ```
//!
//! Points are stored in label order, so the point index is the label.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Relative tolerance on the unit-average-energy invariant.
pub const ENERGY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: String,
    points: Vec<Complex64>,
    labels: Vec<u32>,
    /// Grid spacing factor κ.
    scale: f64,
    /// Input distribution the unit-energy normalization refers to.
    distribution: Vec<f64>,
    bits_per_label: u32,
}

/// Mapped symbols together with the labels they carry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolStream {
    pub symbols: Vec<Complex64>,
    pub source_labels: Vec<u32>,
}

/// Per-layer modulation for the conventional NOMA chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Bpsk,
    Qam(u32),
}

impl Modulation {
    /// `2` is BPSK, `4`/`16`/`64` are square QAM.
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            2 => Ok(Modulation::Bpsk),
            4 | 16 | 64 => Ok(Modulation::Qam(order)),
            _ => invalid(format!("unsupported modulation order {order} (expected 2, 4, 16 or 64)")),
        }
    }

    pub fn order(&self) -> u32 {
        match self {
            Modulation::Bpsk => 2,
            Modulation::Qam(m) => *m,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order().trailing_zeros() as usize
    }

    pub fn constellation(&self) -> Result<Constellation> {
        match self {
            Modulation::Bpsk => build_shifted_integer_pam(2, None),
            Modulation::Qam(m) => build_square_qam(*m),
        }
    }
}

impl Constellation {
    /// Scales `raw_points` to unit average energy under `distribution`.
    /// Labels are the point indices.
    pub fn from_raw_points(name: &str, raw_points: &[Complex64], distribution: Vec<f64>) -> Result<Self> {
        if raw_points.len() < 2 {
            return invalid("a constellation needs at least two points");
        }
        if distribution.len() != raw_points.len() {
            return invalid(format!(
                "distribution has {} entries for {} points",
                distribution.len(),
                raw_points.len()
            ));
        }
        if distribution.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (distribution.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return invalid("point distribution must be a probability vector");
        }
        let raw_energy: f64 = raw_points
            .iter()
            .zip(&distribution)
            .map(|(p, w)| w * p.norm_sqr())
            .sum();
        if !(raw_energy > 0.0) {
            return invalid("point distribution has zero energy");
        }
        let kappa = 1.0 / raw_energy.sqrt();
        let n = raw_points.len() as u32;
        let c = Constellation {
            name: name.to_string(),
            points: raw_points.iter().map(|p| p * kappa).collect(),
            labels: (0..n).collect(),
            scale: kappa,
            distribution,
            bits_per_label: n.next_power_of_two().trailing_zeros(),
        };
        c.check_energy()?;
        Ok(c)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The κ the grid was scaled by.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bits_per_label(&self) -> u32 {
        self.bits_per_label
    }

    pub fn distribution(&self) -> &[f64] {
        &self.distribution
    }

    /// Average energy under the declared input distribution.
    pub fn avg_energy(&self) -> f64 {
        self.mean_energy(&self.distribution)
    }

    /// Average energy when point `i` is sent with probability `weights[i]`.
    pub fn mean_energy(&self, weights: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(weights)
            .map(|(p, w)| w * p.norm_sqr())
            .sum()
    }

    pub fn index_of(&self, label: u32) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Elementwise label lookup.
    pub fn map(&self, labels: &[u32]) -> Result<SymbolStream> {
        let symbols = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| match self.index_of(l) {
                Some(idx) => Ok(self.points[idx]),
                None => invalid(format!("label {l} at index {i} is not in constellation {}", self.name)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolStream { symbols, source_labels: labels.to_vec() })
    }

    /// Label of the point minimizing `|y − scale·p|²`, ties to the lowest index.
    pub fn ml_demap(&self, y: Complex64, scale: Complex64) -> Result<u32> {
        if scale.norm_sqr() == 0.0 || !scale.is_finite() {
            return invalid("demapping scale must be finite and nonzero");
        }
        Ok(self.labels[self.nearest_index(y, scale)])
    }

    /// Unchecked minimum-distance search used on the hot path.
    #[inline]
    pub fn nearest_index(&self, y: Complex64, scale: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - scale * p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn check_energy(&self) -> Result<()> {
        let e = self.avg_energy();
        if (e - 1.0).abs() > ENERGY_TOLERANCE {
            return invalid(format!("constellation {} has average energy {e}", self.name));
        }
        Ok(())
    }
}

/// Real PAM over integer levels `0..level_count`, level `l` at `(2l − (L−1))·κ`.
///
/// `distribution` gives the probability of each level; `None` means uniform.
/// κ makes the average energy under that distribution exactly one.
pub fn build_shifted_integer_pam(level_count: usize, distribution: Option<&[f64]>) -> Result<Constellation> {
    if level_count < 2 {
        return invalid(format!("PAM needs at least 2 levels, got {level_count}"));
    }
    let dist = match distribution {
        Some(d) => {
            if d.len() != level_count {
                return invalid(format!(
                    "distribution has {} entries for {level_count} levels",
                    d.len()
                ));
            }
            if d.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (d.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return invalid("level distribution must be a probability vector");
            }
            d.to_vec()
        }
        None => vec![1.0 / level_count as f64; level_count],
    };
    let offset = (level_count - 1) as f64;
    let raw_energy: f64 = dist
        .iter()
        .enumerate()
        .map(|(l, p)| p * (2.0 * l as f64 - offset).powi(2))
        .sum();
    if raw_energy <= 0.0 {
        return invalid("level distribution has zero energy");
    }
    let kappa = 1.0 / raw_energy.sqrt();
    let points = (0..level_count)
        .map(|l| Complex64::new((2.0 * l as f64 - offset) * kappa, 0.0))
        .collect();
    let name = if level_count == 2 && distribution.is_none() {
        "bpsk".to_string()
    } else {
        format!("pam{level_count}")
    };
    let c = Constellation {
        name,
        points,
        labels: (0..level_count as u32).collect(),
        scale: kappa,
        distribution: dist,
        bits_per_label: (level_count as u32).next_power_of_two().trailing_zeros(),
    };
    c.check_energy()?;
    Ok(c)
}

/// Gray-labeled square QAM with unit average energy, `M ∈ {4, 16, 64}`.
pub fn build_square_qam(m: u32) -> Result<Constellation> {
    if !matches!(m, 4 | 16 | 64) {
        return invalid(format!("unsupported square QAM order {m} (expected 4, 16 or 64)"));
    }
    let bits = m.trailing_zeros();
    let half = bits / 2;
    let side = 1u32 << half;
    let kappa = (3.0 / (2.0 * (m as f64 - 1.0))).sqrt();
    let offset = (side - 1) as f64;
    let amp = |g: u32| (2.0 * gray_decode(g) as f64 - offset) * kappa;
    let points = (0..m)
        .map(|label| Complex64::new(amp(label >> half), amp(label & (side - 1))))
        .collect();
    let c = Constellation {
        name: format!("qam{m}"),
        points,
        labels: (0..m).collect(),
        scale: kappa,
        distribution: vec![1.0 / m as f64; m as usize],
        bits_per_label: bits,
    };
    c.check_energy()?;
    Ok(c)
}

/// Level index of a reflected-Gray codeword.
pub fn gray_decode(mut g: u32) -> u32 {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

/// Packs `bits` (MSB first) into a label.
pub fn bits_to_label(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u32)
}

/// Unpacks `count` bits (MSB first) of `label` into `out`.
pub fn label_to_bits(label: u32, count: usize, out: &mut Vec<u8>) {
    out.extend((0..count).rev().map(|i| ((label >> i) & 1) as u8));
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bpsk_is_two_symmetric_unit_levels() {
        let c = build_shifted_integer_pam(2, None).unwrap();
        assert_eq!(c.points(), &[Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)]);
        assert_eq!(c.scale(), 1.0);
    }

    #[test]
    fn pam4_uniform_kappa() {
        let c = build_shifted_integer_pam(4, None).unwrap();
        let k = 1.0 / 5f64.sqrt();
        assert!((c.scale() - k).abs() < 1e-15);
        let s = c.map(&[2, 2]).unwrap();
        assert!((s.symbols[0].re - k).abs() < 1e-15);
        assert_eq!(s.symbols[0], s.symbols[1]);
    }

    #[test]
    fn pam_rejects_short_alphabets() {
        assert!(build_shifted_integer_pam(1, None).is_err());
        assert!(build_shifted_integer_pam(3, Some(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn qpsk_table() {
        let c = build_square_qam(4).unwrap();
        let want = [
            Complex64::new(-S, -S),
            Complex64::new(-S, S),
            Complex64::new(S, -S),
            Complex64::new(S, S),
        ];
        for (p, w) in c.points().iter().zip(want) {
            assert!((p - w).norm() < 1e-15);
        }
        // label of (1 + j)/√2 is 0b11
        assert_eq!(c.ml_demap(Complex64::new(S, S), Complex64::new(1.0, 0.0)).unwrap(), 3);
    }

    #[test]
    fn qam16_grid_spacing() {
        let c = build_square_qam(16).unwrap();
        let k = 1.0 / 10f64.sqrt();
        assert!((c.scale() - k).abs() < 1e-15);
        let mut re: Vec<i64> = c.points().iter().map(|p| (p.re / k).round() as i64).collect();
        re.sort();
        re.dedup();
        assert_eq!(re, vec![-3, -1, 1, 3]);
    }

    #[test]
    fn unsupported_qam_orders() {
        for m in [2, 8, 32, 256] {
            assert!(build_square_qam(m).is_err());
        }
        assert!(Modulation::from_order(8).is_err());
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for m in [4u32, 16, 64] {
            let c = build_square_qam(m).unwrap();
            let step = 2.0 * c.scale();
            for (i, p) in c.points().iter().enumerate() {
                for (j, q) in c.points().iter().enumerate() {
                    let d = p - q;
                    let adjacent = ((d.re.abs() - step).abs() < 1e-9 && d.im.abs() < 1e-9)
                        || ((d.im.abs() - step).abs() < 1e-9 && d.re.abs() < 1e-9);
                    if adjacent {
                        assert_eq!((c.labels()[i] ^ c.labels()[j]).count_ones(), 1, "M={m} {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn demap_examples() {
        let q = build_square_qam(4).unwrap();
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(q.ml_demap(Complex64::new(0.9, -0.1), one).unwrap(), 2);
        let b = build_shifted_integer_pam(2, None).unwrap();
        assert_eq!(b.ml_demap(Complex64::new(0.0, 0.0), one).unwrap(), 0);
        assert!(b.ml_demap(one, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn map_reports_offending_index() {
        let b = build_shifted_integer_pam(2, None).unwrap();
        assert_eq!(
            b.map(&[0, 1]).unwrap().symbols,
            vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)]
        );
        assert!(b.map(&[]).unwrap().symbols.is_empty());
        let err = b.map(&[0, 1, 7]).unwrap_err().to_string();
        assert!(err.contains("index 2"), "{err}");
    }

    #[test]
    fn label_bit_packing() {
        let mut out = Vec::new();
        label_to_bits(0b1011, 4, &mut out);
        assert_eq!(out, vec![1, 0, 1, 1]);
        assert_eq!(bits_to_label(&out), 0b1011);
    }
}
