//! Superposition coding, successive interference cancellation and the
//! three transceiver chains (T-NOMA, H-NOMA, Usman-NOMA).
//!
//! Chains work at unit total power. A caller at transmit power `Ps` sends
//! `√Ps·x` and hands the receiver the effective gain `√Ps·ĝ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hadamard::{BitBlock, HadamardMatrix};
use crate::modem::{
    bits_to_label, build_square_qam, label_to_bits, Constellation, Modulation,
};

pub const ALPHA_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    total_power: f64,
    alphas: Vec<f64>,
}

impl PowerProfile {
    pub fn new(total_power: f64, alphas: Vec<f64>) -> Result<Self> {
        let mut problems = Self::check_alphas(&alphas);
        if !(total_power >= 0.0 && total_power.is_finite()) {
            problems.push(format!("total power must be finite and nonnegative, got {total_power}"));
        }
        if !problems.is_empty() {
            return invalid(problems.join("; "));
        }
        Ok(PowerProfile { total_power, alphas })
    }

    /// Every violated allocation invariant, empty when valid.
    pub fn check_alphas(alphas: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        if alphas.is_empty() {
            out.push("at least one power coefficient is required".to_string());
            return out;
        }
        for (k, &a) in alphas.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                out.push(format!("alpha[{k}] = {a} is outside (0, 1]"));
            }
        }
        if alphas.windows(2).any(|w| !(w[0] > w[1])) {
            out.push("alphas must be strictly decreasing".to_string());
        }
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
            out.push(format!("alphas sum to {sum}, expected 1"));
        }
        out
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn with_total_power(&self, total_power: f64) -> Result<Self> {
        Self::new(total_power, self.alphas.clone())
    }

    /// `√(Ps·α_k / E_k)`.
    pub fn amplitude(&self, k: usize, energy: f64) -> f64 {
        (self.total_power * self.alphas[k] / energy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperposedSignal {
    pub samples: Vec<Complex64>,
    pub layer_count: usize,
}

/// `x = Σ_k √(Ps·α_k / E_k)·x_k` samplewise.
pub fn superpose(layers: &[Vec<Complex64>], p: &PowerProfile, energies: &[f64]) -> Result<SuperposedSignal> {
    if layers.len() != p.len() || energies.len() != p.len() {
        return invalid(format!(
            "{} layers and {} energies for {} power coefficients",
            layers.len(),
            energies.len(),
            p.len()
        ));
    }
    if let Some(e) = energies.iter().find(|&&e| !(e > 0.0)) {
        return invalid(format!("layer energy must be positive, got {e}"));
    }
    let len = layers.first().map_or(0, Vec::len);
    if let Some(k) = layers.iter().position(|l| l.len() != len) {
        return invalid(format!("layer {k} has {} samples, expected {len}", layers[k].len()));
    }
    let amps: Vec<f64> = (0..p.len()).map(|k| p.amplitude(k, energies[k])).collect();
    let samples = (0..len)
        .map(|i| layers.iter().zip(&amps).map(|(l, a)| l[i] * a).sum())
        .collect();
    Ok(SuperposedSignal { samples, layer_count: p.len() })
}

/// Layer indices sorted by decreasing power, ties kept in input order.
pub fn decoding_order(alphas: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    order
}

#[derive(Debug, Clone, Copy)]
pub struct SicLayer<'a> {
    pub alpha: f64,
    /// Amplitude the layer was sent with, `√(Ps·α/E)`.
    pub amplitude: f64,
    pub alphabet: &'a Constellation,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SicOptions {
    /// Fraction of each decided layer's power left behind after subtraction.
    pub residual_rho: f64,
    /// `(layer, label)` pairs overriding the decision for that input layer.
    pub forced: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SicReport {
    /// Input layer indices in decoding order.
    pub order: Vec<usize>,
    /// Decided labels, in decoding order.
    pub decisions: Vec<u32>,
    /// Signal left after each subtraction, in decoding order.
    pub residuals: Vec<Complex64>,
    /// Whether each decision was injected, in decoding order.
    pub forced: Vec<bool>,
}

impl SicReport {
    pub fn decision_for(&self, layer: usize) -> Option<u32> {
        self.order.iter().position(|&l| l == layer).map(|i| self.decisions[i])
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return invalid(format!("residual interference coefficient {rho} is outside [0, 1]"));
    }
    Ok(())
}

/// Decodes the `depth` strongest layers of one received sample.
pub fn sic_decode(
    y: Complex64,
    g_hat: Complex64,
    layers: &[SicLayer<'_>],
    depth: usize,
    opts: &SicOptions,
) -> Result<SicReport> {
    if g_hat.norm_sqr() == 0.0 || !g_hat.is_finite() {
        return invalid("channel gain must be finite and nonzero");
    }
    if depth > layers.len() {
        return invalid(format!("cannot decode {depth} of {} layers", layers.len()));
    }
    check_rho(opts.residual_rho)?;
    for &(layer, label) in &opts.forced {
        match layers.get(layer) {
            Some(l) if l.alphabet.index_of(label).is_some() => {}
            Some(_) => return invalid(format!("forced label {label} is not in layer {layer}'s alphabet")),
            None => return invalid(format!("forced layer {layer} does not exist")),
        }
    }
    let alphas: Vec<f64> = layers.iter().map(|l| l.alpha).collect();
    let order: Vec<usize> = decoding_order(&alphas).into_iter().take(depth).collect();
    let keep = 1.0 - opts.residual_rho.sqrt();
    let mut r = y;
    let mut report = SicReport {
        order: order.clone(),
        decisions: Vec::with_capacity(depth),
        residuals: Vec::with_capacity(depth),
        forced: Vec::with_capacity(depth),
    };
    for j in order {
        let layer = &layers[j];
        let scale = g_hat * layer.amplitude;
        let forced = opts.forced.iter().find(|f| f.0 == j).map(|f| f.1);
        let idx = match forced {
            Some(label) => layer.alphabet.index_of(label).expect("checked above"),
            None => layer.alphabet.nearest_index(r, scale),
        };
        r -= scale * layer.alphabet.point(idx) * keep;
        report.decisions.push(layer.alphabet.labels()[idx]);
        report.residuals.push(r);
        report.forced.push(forced.is_some());
    }
    Ok(report)
}

/// Precomputed SIC receiver for the simulation hot path.
#[derive(Debug, Clone)]
pub struct SicPlan {
    order: Vec<usize>,
    amplitudes: Vec<f64>,
    alphabets: Vec<Constellation>,
    keep: f64,
}

impl SicPlan {
    pub fn new(alphas: &[f64], amplitudes: Vec<f64>, alphabets: Vec<Constellation>, residual_rho: f64) -> Result<Self> {
        if alphas.len() != amplitudes.len() || alphas.len() != alphabets.len() {
            return invalid("SIC plan needs one amplitude and alphabet per layer");
        }
        check_rho(residual_rho)?;
        Ok(SicPlan {
            order: decoding_order(alphas),
            amplitudes,
            alphabets,
            keep: 1.0 - residual_rho.sqrt(),
        })
    }

    pub fn layers(&self) -> usize {
        self.order.len()
    }

    pub fn amplitude(&self, layer: usize) -> f64 {
        self.amplitudes[layer]
    }

    pub fn alphabet(&self, layer: usize) -> &Constellation {
        &self.alphabets[layer]
    }

    /// Decodes the `depth` strongest layers, writing each decided point
    /// index into `out[layer]`. A zero gain decodes every layer to index 0.
    #[inline]
    pub fn decode_into(&self, y: Complex64, g_hat: Complex64, depth: usize, out: &mut [usize]) {
        let mut r = y;
        for &j in &self.order[..depth] {
            let scale = g_hat * self.amplitudes[j];
            let idx = self.alphabets[j].nearest_index(r, scale);
            out[j] = idx;
            r -= scale * self.alphabets[j].point(idx) * self.keep;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "t-noma")]
    Tnoma,
    #[serde(rename = "h-noma")]
    Hnoma,
    #[serde(rename = "usman-noma")]
    Usman,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Tnoma, Scheme::Hnoma, Scheme::Usman];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Tnoma => "t-noma",
            Scheme::Hnoma => "h-noma",
            Scheme::Usman => "usman-noma",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t-noma" | "tnoma" => Ok(Scheme::Tnoma),
            "h-noma" | "hnoma" => Ok(Scheme::Hnoma),
            "usman-noma" | "usman" => Ok(Scheme::Usman),
            _ => invalid(format!("unknown scheme {s:?} (expected t-noma, h-noma or usman-noma)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Alphabet carrying the shifted transform outputs in H-NOMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HnomaAlphabet {
    /// Shifted value used as the label of the smallest square QAM that holds it.
    #[default]
    Qam,
    /// Real PAM over all shifted values.
    Pam,
}

/// Number of distinct shifted transform values, `3N/2 + 1`.
pub fn hnoma_level_count(n: usize) -> usize {
    3 * n / 2 + 1
}

fn binomial_half(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![0.0; row.len() + 1];
        for (i, v) in row.iter().enumerate() {
            next[i] += v * 0.5;
            next[i + 1] += v * 0.5;
        }
        row = next;
    }
    row
}

/// Distribution of the shifted value of transform row `row` over the
/// `3N/2 + 1` levels, for uniform independent bits.
///
/// Row 0 is the bit count, so it is binomial shifted by `N/2`. Any other
/// row has `N/2` plus and `N/2` minus entries; `X − Y + N/2` with both
/// binomial is again `Binomial(N, ½)` on `0..=N`.
pub fn shifted_level_distribution(n: usize, row: usize) -> Vec<f64> {
    let mut out = vec![0.0; hnoma_level_count(n)];
    let offset = if row == 0 { n / 2 } else { 0 };
    for (c, p) in binomial_half(n).into_iter().enumerate() {
        out[c + offset] = p;
    }
    out
}

/// Shared H-NOMA alphabet, normalized under the pooled level distribution.
pub fn build_hnoma_alphabet(n: usize, kind: HnomaAlphabet) -> Result<Constellation> {
    if n < 2 || !n.is_power_of_two() {
        return invalid(format!("H-NOMA needs a power-of-two user count of at least 2, got {n}"));
    }
    let levels = hnoma_level_count(n);
    let mut pooled = vec![0.0; levels];
    for row in 0..n {
        for (p, q) in pooled.iter_mut().zip(shifted_level_distribution(n, row)) {
            *p += q / n as f64;
        }
    }
    match kind {
        HnomaAlphabet::Pam => crate::modem::build_shifted_integer_pam(levels, Some(&pooled)),
        HnomaAlphabet::Qam => {
            let m = [4u32, 16, 64]
                .into_iter()
                .find(|&m| m as usize >= levels)
                .ok_or_else(|| {
                    crate::Error::InvalidArgument(format!(
                        "H-NOMA QAM alphabet supports at most 32 users, got {n}"
                    ))
                })?;
            let grid = build_square_qam(m)?;
            let raw: Vec<Complex64> = grid.points()[..levels].iter().map(|p| p / grid.scale()).collect();
            Constellation::from_raw_points(&format!("hnoma-qam{m}"), &raw, pooled)
        }
    }
}

/// Distinct values of one unitary-transformed symbol when each of `n`
/// users sends a uniform point of `modulation`; labels index the
/// returned points. Every transform row has the same distribution.
pub fn build_usman_alphabet(n: usize, modulation: Modulation) -> Result<Constellation> {
    if n < 1 || !n.is_power_of_two() {
        return invalid(format!("user count must be a power of two, got {n}"));
    }
    let user = modulation.constellation()?;
    let axis = |f: fn(&Complex64) -> f64| -> Vec<i64> {
        let mut v: Vec<i64> = user.points().iter().map(|p| (f(p) / user.scale()).round() as i64).collect();
        v.sort();
        v
    };
    let convolve = |levels: &[i64]| -> (i64, Vec<f64>) {
        // distribution of the sum of n uniform draws from `levels`
        let lo = levels[0];
        let hi = levels[levels.len() - 1];
        let mut dist = vec![1.0f64];
        for _ in 0..n {
            let width = (hi - lo) as usize;
            let mut next = vec![0.0; dist.len() + width];
            for (i, p) in dist.iter().enumerate() {
                for &l in levels {
                    next[i + (l - lo) as usize] += p / levels.len() as f64;
                }
            }
            dist = next;
        }
        (lo * n as i64, dist)
    };
    let (re0, re_dist) = convolve(&axis(|p| p.re));
    let (im0, im_dist) = convolve(&axis(|p| p.im));
    let mut raw = Vec::new();
    let mut dist = Vec::new();
    for (i, pr) in re_dist.iter().enumerate() {
        if *pr == 0.0 {
            continue;
        }
        for (j, pi) in im_dist.iter().enumerate() {
            if *pi == 0.0 {
                continue;
            }
            raw.push(Complex64::new((re0 + i as i64) as f64, (im0 + j as i64) as f64));
            dist.push(pr * pi);
        }
    }
    Constellation::from_raw_points(&format!("usman-{}x{n}", user.name()), &raw, dist)
}

fn check_users(users: usize, p: &PowerProfile) -> Result<()> {
    if users != p.len() {
        return invalid(format!("{users} users but {} power coefficients", p.len()));
    }
    Ok(())
}

/// Conventional NOMA: user `k` sends one symbol of its own modulation per
/// channel use on layer `k`.
#[derive(Debug, Clone)]
pub struct TnomaChain {
    plan: SicPlan,
    bits: Vec<usize>,
    offsets: Vec<usize>,
}

impl TnomaChain {
    pub fn new(alphas: &[f64], modulations: &[Modulation], residual_rho: f64) -> Result<Self> {
        let p = PowerProfile::new(1.0, alphas.to_vec())?;
        check_users(modulations.len(), &p)?;
        let alphabets = modulations
            .iter()
            .map(|m| m.constellation())
            .collect::<Result<Vec<_>>>()?;
        let amps = (0..p.len()).map(|k| p.amplitude(k, 1.0)).collect();
        let bits: Vec<usize> = modulations.iter().map(Modulation::bits_per_symbol).collect();
        Ok(TnomaChain {
            plan: SicPlan::new(alphas, amps, alphabets, residual_rho)?,
            offsets: offsets(&bits),
            bits,
        })
    }

    pub fn plan(&self) -> &SicPlan {
        &self.plan
    }
}

/// Bit-domain Hadamard NOMA: one bit per user per block, `N` transformed
/// layers superposed in one channel use.
#[derive(Debug, Clone)]
pub struct HnomaChain {
    h: HadamardMatrix,
    plan: SicPlan,
    energies: Vec<f64>,
}

impl HnomaChain {
    pub fn new(alphas: &[f64], kind: HnomaAlphabet, residual_rho: f64) -> Result<Self> {
        let p = PowerProfile::new(1.0, alphas.to_vec())?;
        let n = p.len();
        let h = HadamardMatrix::new(n)?;
        let alphabet = build_hnoma_alphabet(n, kind)?;
        let energies: Vec<f64> = (0..n)
            .map(|row| alphabet.mean_energy(&shifted_level_distribution(n, row)))
            .collect();
        let amps = (0..n).map(|k| p.amplitude(k, energies[k])).collect();
        Ok(HnomaChain {
            plan: SicPlan::new(alphas, amps, vec![alphabet; n], residual_rho)?,
            h,
            energies,
        })
    }

    pub fn hadamard(&self) -> &HadamardMatrix {
        &self.h
    }

    pub fn alphabet(&self) -> &Constellation {
        self.plan.alphabet(0)
    }

    /// Mean energy `E_k` of each layer before power scaling.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn plan(&self) -> &SicPlan {
        &self.plan
    }

    /// Shifted transform value of row `row` for the bits in `d`.
    #[inline]
    fn shifted(&self, d: &[u8], row: usize) -> usize {
        let w: i64 = d
            .iter()
            .enumerate()
            .map(|(c, &b)| self.h.entry(row, c) as i64 * b as i64)
            .sum();
        (w + self.h.shift()) as usize
    }

    /// Sliced bit of `user` from decided shifted labels.
    #[inline]
    fn recover(&self, labels: &[usize], user: usize) -> u8 {
        let n = self.h.order() as i64;
        let dot: i64 = labels
            .iter()
            .enumerate()
            .map(|(c, &l)| self.h.entry(user, c) as i64 * (l as i64 - self.h.shift()))
            .sum();
        (2 * dot >= n) as u8
    }
}

/// Post-modulation Hadamard NOMA: users' symbols are mixed by the unitary
/// transform, and transformed symbol `k` rides on layer `k`.
#[derive(Debug, Clone)]
pub struct UsmanChain {
    h: HadamardMatrix,
    user: Constellation,
    plan: SicPlan,
    bits: usize,
}

impl UsmanChain {
    pub fn new(alphas: &[f64], modulation: Modulation, residual_rho: f64) -> Result<Self> {
        let p = PowerProfile::new(1.0, alphas.to_vec())?;
        let n = p.len();
        let h = HadamardMatrix::new(n)?;
        let alphabet = build_usman_alphabet(n, modulation)?;
        let amps = (0..n).map(|k| p.amplitude(k, 1.0)).collect();
        Ok(UsmanChain {
            plan: SicPlan::new(alphas, amps, vec![alphabet; n], residual_rho)?,
            user: modulation.constellation()?,
            bits: modulation.bits_per_symbol(),
            h,
        })
    }

    pub fn plan(&self) -> &SicPlan {
        &self.plan
    }

    #[inline]
    fn mix(&self, symbols: impl Fn(usize) -> Complex64, row: usize) -> Complex64 {
        let n = self.h.order();
        let sum: Complex64 = (0..n).map(|c| symbols(c) * self.h.entry(row, c) as f64).sum();
        sum / (n as f64).sqrt()
    }
}

fn offsets(bits: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(bits.len() + 1);
    let mut acc = 0;
    out.push(0);
    for b in bits {
        acc += b;
        out.push(acc);
    }
    out
}

/// Any of the three chains behind one interface.
#[derive(Debug, Clone)]
pub enum Chain {
    Tnoma(TnomaChain),
    Hnoma(HnomaChain),
    Usman(UsmanChain),
}

impl Chain {
    pub fn scheme(&self) -> Scheme {
        match self {
            Chain::Tnoma(_) => Scheme::Tnoma,
            Chain::Hnoma(_) => Scheme::Hnoma,
            Chain::Usman(_) => Scheme::Usman,
        }
    }

    pub fn users(&self) -> usize {
        self.plan().layers()
    }

    pub fn plan(&self) -> &SicPlan {
        match self {
            Chain::Tnoma(c) => &c.plan,
            Chain::Hnoma(c) => &c.plan,
            Chain::Usman(c) => &c.plan,
        }
    }

    /// Bits user `user` sends per channel use.
    pub fn bits_per_block(&self, user: usize) -> usize {
        match self {
            Chain::Tnoma(c) => c.bits[user],
            Chain::Hnoma(_) => 1,
            Chain::Usman(c) => c.bits,
        }
    }

    /// Total bits of all users per channel use.
    pub fn block_bits(&self) -> usize {
        (0..self.users()).map(|u| self.bits_per_block(u)).sum()
    }

    /// Offset of user `user`'s bits within a block.
    pub fn bit_offset(&self, user: usize) -> usize {
        (0..user).map(|u| self.bits_per_block(u)).sum()
    }

    /// Unit-power composite symbol for one block of concatenated user bits.
    pub fn transmit(&self, bits: &[u8]) -> Complex64 {
        match self {
            Chain::Tnoma(c) => (0..c.bits.len())
                .map(|k| {
                    let label = bits_to_label(&bits[c.offsets[k]..c.offsets[k + 1]]) as usize;
                    c.plan.alphabet(k).point(label) * c.plan.amplitude(k)
                })
                .sum(),
            Chain::Hnoma(c) => (0..c.h.order())
                .map(|row| c.plan.alphabet(row).point(c.shifted(bits, row)) * c.plan.amplitude(row))
                .sum(),
            Chain::Usman(c) => {
                let sym = |u: usize| {
                    let label = bits_to_label(&bits[u * c.bits..(u + 1) * c.bits]) as usize;
                    c.user.point(label)
                };
                (0..c.h.order())
                    .map(|row| c.mix(sym, row) * c.plan.amplitude(row))
                    .sum()
            }
        }
    }

    /// Decodes user `user`'s bits from one received sample into `out`.
    /// `scratch` must hold at least one entry per layer.
    pub fn receive(&self, y: Complex64, g_hat: Complex64, user: usize, scratch: &mut [usize], out: &mut Vec<u8>) {
        match self {
            Chain::Tnoma(c) => {
                c.plan.decode_into(y, g_hat, user + 1, scratch);
                label_to_bits(scratch[user] as u32, c.bits[user], out);
            }
            Chain::Hnoma(c) => {
                c.plan.decode_into(y, g_hat, c.h.order(), scratch);
                out.push(c.recover(&scratch[..c.h.order()], user));
            }
            Chain::Usman(c) => {
                let n = c.h.order();
                c.plan.decode_into(y, g_hat, n, scratch);
                let t = |k: usize| c.plan.alphabet(k).point(scratch[k]);
                let s = c.mix(t, user);
                let label = c.user.nearest_index(s, Complex64::new(1.0, 0.0));
                label_to_bits(label as u32, c.bits, out);
            }
        }
    }
}

/// Decodes layers `0..=own_layer` of each sample through a T-NOMA receiver.
/// Returns one label vector per sample, in layer order.
pub fn tnoma_sic_receive(
    y: &[Complex64],
    g: Complex64,
    p: &PowerProfile,
    constellations: &[Constellation],
    own_layer: usize,
) -> Result<Vec<Vec<u32>>> {
    check_users(constellations.len(), p)?;
    if own_layer >= p.len() {
        return invalid(format!("layer {own_layer} does not exist among {}", p.len()));
    }
    let layers: Vec<SicLayer> = constellations
        .iter()
        .enumerate()
        .map(|(k, c)| SicLayer {
            alpha: p.alphas()[k],
            amplitude: p.amplitude(k, c.avg_energy()),
            alphabet: c,
        })
        .collect();
    y.iter()
        .map(|&s| {
            let report = sic_decode(s, g, &layers, own_layer + 1, &SicOptions::default())?;
            Ok((0..=own_layer).map(|k| report.decision_for(k).expect("decoded")).collect())
        })
        .collect()
}

/// H-NOMA transmitter over a sequence of bit blocks, one sample per block.
pub fn hnoma_transmit(blocks: &[BitBlock], p: &PowerProfile, kind: HnomaAlphabet) -> Result<Vec<Complex64>> {
    let chain = HnomaChain::new(p.alphas(), kind, 0.0)?;
    let n = chain.h.order();
    let scale = p.total_power().sqrt();
    blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if b.len() != n {
                return invalid(format!("block {i} has {} bits, expected {n}", b.len()));
            }
            Ok(Chain::Hnoma(chain.clone()).transmit(b.bits()) * scale)
        })
        .collect()
}

/// H-NOMA receiver: SIC over all `N` layers of each sample, then the
/// inverse transform. Returns every user's bits for each block.
pub fn hnoma_receive(y: &[Complex64], g: Complex64, p: &PowerProfile, kind: HnomaAlphabet) -> Result<Vec<BitBlock>> {
    if g.norm_sqr() == 0.0 || !g.is_finite() {
        return invalid("channel gain must be finite and nonzero");
    }
    let chain = Chain::Hnoma(HnomaChain::new(p.alphas(), kind, 0.0)?);
    let n = chain.users();
    let g_eff = g * p.total_power().sqrt();
    let mut scratch = vec![0; n];
    y.iter()
        .map(|&s| {
            let mut bits = Vec::with_capacity(n);
            for u in 0..n {
                chain.receive(s, g_eff, u, &mut scratch, &mut bits);
            }
            BitBlock::new(bits)
        })
        .collect()
}

/// Usman-NOMA transmitter: each block holds one symbol per user.
pub fn usman_transmit(symbols: &[Vec<Complex64>], p: &PowerProfile, h: &HadamardMatrix) -> Result<Vec<Complex64>> {
    check_users(h.order(), p)?;
    symbols
        .iter()
        .enumerate()
        .map(|(i, block)| {
            if block.len() != h.order() {
                return invalid(format!("block {i} has {} symbols, expected {}", block.len(), h.order()));
            }
            let t = h.apply_unitary(block)?;
            Ok(t.iter().enumerate().map(|(k, v)| v * p.amplitude(k, 1.0)).sum())
        })
        .collect()
}

/// Usman-NOMA receiver: SIC over the transformed layers, inverse unitary
/// transform, then per-user demapping. Returns user labels per block.
pub fn usman_receive(
    y: &[Complex64],
    g: Complex64,
    p: &PowerProfile,
    h: &HadamardMatrix,
    modulation: Modulation,
) -> Result<Vec<Vec<u32>>> {
    check_users(h.order(), p)?;
    if g.norm_sqr() == 0.0 || !g.is_finite() {
        return invalid("channel gain must be finite and nonzero");
    }
    let chain = UsmanChain::new(p.alphas(), modulation, 0.0)?;
    let n = h.order();
    let g_eff = g * p.total_power().sqrt();
    let mut scratch = vec![0; n];
    Ok(y
        .iter()
        .map(|&s| {
            chain.plan.decode_into(s, g_eff, n, &mut scratch);
            let t: Vec<Complex64> = (0..n).map(|k| chain.plan.alphabet(k).point(scratch[k])).collect();
            let s_hat = h.apply_unitary(&t).expect("length checked");
            s_hat
                .iter()
                .map(|&v| chain.user.labels()[chain.user.nearest_index(v, Complex64::new(1.0, 0.0))])
                .collect()
        })
        .collect())
}

/// Both sides of the two-user combining identities for one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SicIdentityReport {
    /// Conventional near-user estimate `x1 + n/(g√P2)`.
    pub near_direct: Complex64,
    /// Half the sum of the stated sum combination and the directly
    /// substituted difference combination.
    pub near_combined: Complex64,
    /// The same with the difference combination's noise sign as printed.
    pub near_combined_printed_sign: Complex64,
    /// `x1 − n/(2g√P2)`.
    pub near_formula: Complex64,
    pub near_residual: f64,
    pub near_printed_sign_residual: f64,
    /// Half the sum of the stated far-user sum and difference combinations.
    pub far_combined: Complex64,
    /// `½(2 + √(P2/P1))x1 − ½√(P2/P1)x2 + n/(2g√P1) + n/(2g√P2)`.
    pub far_formula: Complex64,
    pub far_residual: f64,
    /// The far-user combination built from the directly substituted estimates.
    pub far_substituted: Complex64,
    /// Gap between the substituted combination and the closed form.
    pub far_substitution_gap: f64,
    /// Conventional far-user estimate `x1 + √(P2/P1)x2 + n/(g√P1)`.
    pub far_direct: Complex64,
}

pub fn sic_identity_check(
    x1: Complex64,
    x2: Complex64,
    p1: f64,
    p2: f64,
    g: Complex64,
    n: Complex64,
) -> Result<SicIdentityReport> {
    if !(p1 > 0.0 && p2 > 0.0) {
        return invalid("both layer powers must be positive");
    }
    if g.norm_sqr() == 0.0 {
        return invalid("channel gain must be nonzero");
    }
    let e1 = n / (g * p1.sqrt());
    let e2 = n / (g * p2.sqrt());
    let ratio = (p2 / p1).sqrt();

    // near user: x̂1 = x1 after decision, x̂2 = x2 + n/(g√P2)
    let x2_hat = x2 + e2;
    let sum = x1 + x2;
    let diff_substituted = x1 - x2_hat;
    let diff_printed = x1 - x2 + e2;
    let near_combined = (sum + diff_substituted) / 2.0;
    let near_combined_printed_sign = (sum + diff_printed) / 2.0;
    let near_formula = x1 - e2 / 2.0;

    // far user
    let far_sum = x1 + x2 + (x1 - x2) * ratio + e1;
    let far_diff = x1 - x2 + e2;
    let far_combined = (far_sum + far_diff) / 2.0;
    let far_formula = x1 * ((2.0 + ratio) / 2.0) - x2 * (ratio / 2.0) + e1 / 2.0 + e2 / 2.0;
    let far_x1_hat = x1 + x2 * ratio + e1;
    let far_x2_hat = x2 + e2;
    let far_substituted = ((far_x1_hat + far_x2_hat) + (far_x1_hat - far_x2_hat)) / 2.0;

    Ok(SicIdentityReport {
        near_direct: x1 + e2,
        near_combined,
        near_combined_printed_sign,
        near_formula,
        near_residual: (near_combined - near_formula).norm(),
        near_printed_sign_residual: (near_combined_printed_sign - near_formula).norm(),
        far_combined,
        far_formula,
        far_residual: (far_combined - far_formula).norm(),
        far_substituted,
        far_substitution_gap: (far_substituted - far_formula).norm(),
        far_direct: far_x1_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::build_shifted_integer_pam;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn power_profile_invariants() {
        assert!(PowerProfile::new(1.0, vec![0.7, 0.3]).is_ok());
        assert!(PowerProfile::new(1.0, vec![1.0, 0.0]).is_err());
        assert!(PowerProfile::new(1.0, vec![0.3, 0.7]).is_err());
        assert!(PowerProfile::new(1.0, vec![0.5, 0.4]).is_err());
        assert!(PowerProfile::new(-1.0, vec![1.0]).is_err());
        assert!(PowerProfile::new(1.0, vec![]).is_err());
    }

    #[test]
    fn superpose_example() {
        let p = PowerProfile::new(1.0, vec![0.7, 0.3]).unwrap();
        let s = superpose(&[vec![c(1.0, 0.0)], vec![c(-1.0, 0.0)]], &p, &[1.0, 1.0]).unwrap();
        assert!((s.samples[0].re - (0.7f64.sqrt() - 0.3f64.sqrt())).abs() < 1e-15);
        assert!((s.samples[0].re - 0.2889).abs() < 1e-4);
        assert!(superpose(&[vec![c(1.0, 0.0)], vec![]], &p, &[1.0, 1.0]).is_err());
        assert!(superpose(&[vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]], &p, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_layer_drops_out() {
        let p = PowerProfile::new(2.0, vec![0.6, 0.4]).unwrap();
        let a = vec![c(0.3, -0.2), c(1.0, 1.0)];
        let s = superpose(&[a.clone(), vec![c(0.0, 0.0); 2]], &p, &[1.0, 1.0]).unwrap();
        for (x, y) in s.samples.iter().zip(&a) {
            assert!((x - y * (1.2f64).sqrt()).norm() < 1e-15);
        }
    }

    #[test]
    fn noiseless_tnoma_qpsk_all_sixteen_pairs() {
        let p = PowerProfile::new(1.0, vec![0.7, 0.3]).unwrap();
        let q = build_square_qam(4).unwrap();
        let consts = vec![q.clone(), q.clone()];
        for a in 0..4u32 {
            for b in 0..4u32 {
                let x = q.map(&[a]).unwrap().symbols[0] * 0.7f64.sqrt()
                    + q.map(&[b]).unwrap().symbols[0] * 0.3f64.sqrt();
                let g = c(0.3, -0.8);
                let d = tnoma_sic_receive(&[g * x], g, &p, &consts, 1).unwrap();
                assert_eq!(d[0], vec![a, b]);
            }
        }
    }

    #[test]
    fn single_layer_sic_is_plain_mld() {
        let p = PowerProfile::new(1.0, vec![1.0]).unwrap();
        let q = build_square_qam(16).unwrap();
        let g = c(0.5, 0.5);
        for y in [c(0.1, 0.9), c(-0.4, 0.02), c(2.0, -3.0)] {
            let d = tnoma_sic_receive(&[y], g, &p, std::slice::from_ref(&q), 0).unwrap();
            assert_eq!(d[0][0], q.ml_demap(y, g).unwrap());
        }
        assert!(tnoma_sic_receive(&[g], c(0.0, 0.0), &p, std::slice::from_ref(&q), 0).is_err());
    }

    #[test]
    fn forced_first_decision_corrupts_second() {
        let q = build_square_qam(4).unwrap();
        let layers = [
            SicLayer { alpha: 0.7, amplitude: 0.7f64.sqrt(), alphabet: &q },
            SicLayer { alpha: 0.3, amplitude: 0.3f64.sqrt(), alphabet: &q },
        ];
        let y = q.point(3) * 0.7f64.sqrt() + q.point(0) * 0.3f64.sqrt();
        let g = c(1.0, 0.0);
        let clean = sic_decode(y, g, &layers, 2, &SicOptions::default()).unwrap();
        assert_eq!(clean.decisions, vec![3, 0]);
        let opts = SicOptions { residual_rho: 0.0, forced: vec![(0, 0)] };
        let bad = sic_decode(y, g, &layers, 2, &opts).unwrap();
        assert_eq!(bad.forced, vec![true, false]);
        // residual after wrong subtraction is y − √0.7·p0; layer 2 decodes it
        let r = y - q.point(0) * 0.7f64.sqrt();
        assert_eq!(bad.residuals[0], r);
        assert_eq!(bad.decisions[1], q.ml_demap(r, c(0.3f64.sqrt(), 0.0)).unwrap());
        assert_ne!(bad.decisions[1], 0);
    }

    #[test]
    fn decoding_follows_power_not_input_order() {
        let q = build_square_qam(4).unwrap();
        let y = q.point(1) * 0.8f64.sqrt() + q.point(2) * 0.2f64.sqrt();
        let strong = SicLayer { alpha: 0.8, amplitude: 0.8f64.sqrt(), alphabet: &q };
        let weak = SicLayer { alpha: 0.2, amplitude: 0.2f64.sqrt(), alphabet: &q };
        let a = sic_decode(y, c(1.0, 0.0), &[strong, weak], 2, &SicOptions::default()).unwrap();
        let b = sic_decode(y, c(1.0, 0.0), &[weak, strong], 2, &SicOptions::default()).unwrap();
        assert_eq!(a.order, vec![0, 1]);
        assert_eq!(b.order, vec![1, 0]);
        assert_eq!(a.decision_for(0), b.decision_for(1));
        assert_eq!(a.decision_for(1), b.decision_for(0));
    }

    #[test]
    fn residual_rho_leaves_interference() {
        let q = build_square_qam(4).unwrap();
        let layer = SicLayer { alpha: 1.0, amplitude: 1.0, alphabet: &q };
        let y = q.point(3);
        let opts = SicOptions { residual_rho: 0.25, forced: vec![] };
        let r = sic_decode(y, c(1.0, 0.0), &[layer], 1, &opts).unwrap();
        assert!((r.residuals[0] - q.point(3) * 0.5).norm() < 1e-15);
        let opts = SicOptions { residual_rho: 1.5, forced: vec![] };
        assert!(sic_decode(y, c(1.0, 0.0), &[layer], 1, &opts).is_err());
    }

    #[test]
    fn shifted_distribution_row_supports() {
        let d0 = shifted_level_distribution(2, 0);
        assert_eq!(d0, vec![0.0, 0.25, 0.5, 0.25]);
        let d1 = shifted_level_distribution(2, 1);
        assert_eq!(d1, vec![0.25, 0.5, 0.25, 0.0]);
        assert_eq!(hnoma_level_count(8), 13);
    }

    #[test]
    fn pam_alphabet_for_two_users_uses_enumerated_kappa() {
        // levels 0..3; row 0 gives {1,2,3} with (¼,½,¼), row 1 gives {0,1,2}
        let a = build_hnoma_alphabet(2, HnomaAlphabet::Pam).unwrap();
        let pooled = [0.125, 0.375, 0.375, 0.125];
        let raw: f64 = pooled.iter().zip([-3.0f64, -1.0, 1.0, 3.0]).map(|(p, v)| p * v * v).sum();
        assert!((a.scale() - 1.0 / raw.sqrt()).abs() < 1e-15);
        let direct = build_shifted_integer_pam(4, Some(&pooled)).unwrap();
        assert_eq!(a.points(), direct.points());
    }

    #[test]
    fn hnoma_two_user_round_trip() {
        let p = PowerProfile::new(3.0, vec![0.7, 0.3]).unwrap();
        let blocks: Vec<BitBlock> = BitBlock::enumerate(2).collect();
        let g = c(-0.4, 0.9);
        let x = hnoma_transmit(&blocks, &p, HnomaAlphabet::Qam).unwrap();
        let y: Vec<Complex64> = x.iter().map(|v| v * g).collect();
        assert_eq!(hnoma_receive(&y, g, &p, HnomaAlphabet::Qam).unwrap(), blocks);
        let one = BitBlock::new(vec![1, 0]).unwrap();
        let x = hnoma_transmit(std::slice::from_ref(&one), &p, HnomaAlphabet::Qam).unwrap();
        assert_eq!(hnoma_receive(&[x[0] * g], g, &p, HnomaAlphabet::Qam).unwrap()[0], one);
    }

    #[test]
    fn hnoma_layer_error_follows_inverse_arithmetic() {
        // d = [1,0] gives shifted [2,2]; a wrong first layer of 3 gives
        // ŵ = [2,1], (1/2)H·ŵ = [1.5, 0.5] → bits [1,1]
        let chain = HnomaChain::new(&[0.7, 0.3], HnomaAlphabet::Qam, 0.0).unwrap();
        assert_eq!(chain.recover(&[2, 2], 0), 1);
        assert_eq!(chain.recover(&[2, 2], 1), 0);
        assert_eq!(chain.recover(&[3, 2], 0), 1);
        assert_eq!(chain.recover(&[3, 2], 1), 1);
        // a wrong first layer of 1 gives ŵ = [0,1] → [0.5, −0.5] → [1, 0]
        assert_eq!(chain.recover(&[1, 2], 0), 1);
        assert_eq!(chain.recover(&[1, 2], 1), 0);
    }

    #[test]
    fn usman_two_by_two_example() {
        let s = 0.5f64.sqrt();
        let h = HadamardMatrix::new(2).unwrap();
        let t = h.apply_unitary(&[c(s, s), c(s, -s)]).unwrap();
        assert!((t[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((t[1] - c(0.0, 1.0)).norm() < 1e-15);
        let a = build_usman_alphabet(2, Modulation::Qam(4)).unwrap();
        assert_eq!(a.len(), 9);
        assert!(a.index_of(0).is_some());
        assert!((a.avg_energy() - 1.0).abs() < 1e-12);
        assert!(a.points().iter().any(|p| (p - t[1]).norm() < 1e-12));
    }

    #[test]
    fn usman_noiseless_round_trip() {
        let p = PowerProfile::new(1.0, vec![0.9, 0.1]).unwrap();
        let h = HadamardMatrix::new(2).unwrap();
        let q = build_square_qam(4).unwrap();
        let mut blocks = Vec::new();
        let mut labels = Vec::new();
        for a in 0..4u32 {
            for b in 0..4u32 {
                blocks.push(vec![q.point(a as usize), q.point(b as usize)]);
                labels.push(vec![a, b]);
            }
        }
        let x = usman_transmit(&blocks, &p, &h).unwrap();
        let g = c(0.2, 0.7);
        let y: Vec<Complex64> = x.iter().map(|v| v * g).collect();
        assert_eq!(usman_receive(&y, g, &p, &h, Modulation::Qam(4)).unwrap(), labels);
    }

    #[test]
    fn identity_check_examples() {
        let x1 = c(0.7, -0.7);
        let x2 = c(-0.7, -0.7);
        let r = sic_identity_check(x1, x2, 0.8, 0.2, c(1.0, 0.5), c(0.0, 0.0)).unwrap();
        let want = x1 + (x1 - x2) * 0.5 * (0.2f64 / 0.8).sqrt();
        assert!((r.far_formula - want).norm() < 1e-15);
        let r = sic_identity_check(x1, x1, 0.5, 0.5, c(1.0, 0.5), c(0.0, 0.0)).unwrap();
        assert!((r.far_formula - x1).norm() < 1e-15);
        assert!(sic_identity_check(x1, x2, 0.0, 1.0, c(1.0, 0.0), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn identity_check_sign_conventions() {
        let r = sic_identity_check(c(1.0, 0.0), c(-1.0, 0.0), 0.7, 0.3, c(0.4, 0.1), c(0.3, -0.2)).unwrap();
        assert!(r.near_residual < 1e-12);
        assert!(r.near_printed_sign_residual > 1e-3);
        assert!(r.far_residual < 1e-12);
        assert!(r.far_substitution_gap > 1e-3);
    }
}
