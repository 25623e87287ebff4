//! Reproducible BER simulation over an SNR grid.
//!
//! Every scheme in a run sees the same per-block gains and noise. Each
//! (SNR point, batch) pair owns its own ChaCha8 streams: one for the
//! channel and one per scheme kind for the data, so listing a scheme
//! twice reproduces it exactly and the worker count never changes a bit.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, imperfect_csi_split, noise_from_bandwidth, path_loss_amplitude, Nakagami};
use crate::config::{Fading, ScenarioConfig};
use crate::error::{invalid, Error, Result};
use crate::noma::{Chain, HnomaChain, Scheme, TnomaChain, UsmanChain};
use crate::stats::{ber_interval, clustered_standard_error};

const CHANNEL_STREAM: u64 = 0;
const MAX_BATCHES_PER_ROUND: u64 = 64;

/// RNG for one `(point, batch, purpose)` triple.
pub fn stream_rng(seed: u64, point: usize, batch: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | (batch << 8) | purpose);
    rng
}

/// Data stream purpose for a scheme; depends on the kind, not list position.
pub fn data_purpose(scheme: Scheme) -> u64 {
    1 + Scheme::ALL.iter().position(|s| *s == scheme).expect("known scheme") as u64
}

pub fn build_chain(cfg: &ScenarioConfig, scheme: Scheme) -> Result<Chain> {
    let alphas = cfg.alphas();
    let rho = cfg.sic.residual_rho;
    let mods = cfg.modulations()?;
    Ok(match scheme {
        Scheme::Tnoma => Chain::Tnoma(TnomaChain::new(alphas, &mods, rho)?),
        Scheme::Hnoma => Chain::Hnoma(HnomaChain::new(alphas, cfg.modulation.hnoma_alphabet, rho)?),
        Scheme::Usman => {
            let m = *mods.first().ok_or_else(|| Error::InvalidArgument("no users".into()))?;
            Chain::Usman(UsmanChain::new(alphas, m, rho)?)
        }
    })
}

/// True and estimated gain plus the unit noise sample of one user in one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserDraw {
    pub g: Complex64,
    pub g_hat: Complex64,
    pub noise: Complex64,
}

/// Per-user channel model of a scenario.
#[derive(Debug, Clone)]
pub struct Link {
    fading: Fading,
    amplitudes: Vec<f64>,
    distances: Vec<f64>,
    exponent: f64,
    nakagami: Vec<Nakagami>,
    sigma_e2: f64,
    mode: crate::channel::CsiMode,
    n0: f64,
    noiseless: bool,
}

impl Link {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let ch = &cfg.channel;
        let amplitudes = cfg
            .distances()
            .iter()
            .map(|&d| path_loss_amplitude(d, ch.exponent))
            .collect::<Result<Vec<_>>>()?;
        let nakagami = if ch.fading == Fading::Nakagami {
            amplitudes
                .iter()
                .map(|a| Nakagami::new(ch.nakagami_m, a * a))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Link {
            fading: ch.fading,
            amplitudes,
            distances: cfg.distances().to_vec(),
            exponent: ch.exponent,
            nakagami,
            sigma_e2: cfg.csi.sigma_e2,
            mode: cfg.csi.mode,
            n0: noise_from_bandwidth(ch.bandwidth_hz)?.n0_linear,
            noiseless: ch.noiseless,
        })
    }

    pub fn users(&self) -> usize {
        self.amplitudes.len()
    }

    /// Noise power spectral density `N0` (W/Hz) fixed by the bandwidth.
    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Draws every user's gain and noise for one block.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [UserDraw]) {
        for (u, d) in out.iter_mut().enumerate() {
            let (g, g_hat) = match self.fading {
                Fading::None => {
                    let g = Complex64::new(self.amplitudes[u], 0.0);
                    (g, g)
                }
                Fading::Nakagami => {
                    let g = self.nakagami[u].sample(rng);
                    (g, g)
                }
                Fading::Rayleigh if self.sigma_e2 == 0.0 => {
                    let g = complex_normal(rng) * self.amplitudes[u];
                    (g, g)
                }
                Fading::Rayleigh => {
                    let r = imperfect_csi_split(self.distances[u], self.exponent, self.sigma_e2, self.mode, rng)
                        .expect("validated CSI parameters");
                    (r.g, r.g_hat)
                }
            };
            d.g = g;
            d.g_hat = g_hat;
            d.noise = complex_normal(rng);
        }
    }

    /// Received sample and receiver gain for transmit power `ps`.
    #[inline]
    pub fn receive(&self, x: Complex64, d: &UserDraw, ps: f64) -> (Complex64, Complex64) {
        let a = ps.sqrt();
        let mut y = d.g * a * x;
        if !self.noiseless {
            y += d.noise * self.n0.sqrt();
        }
        (y, d.g_hat * a)
    }
}

/// Fills `bits` with uniform random bits.
pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, bits: &mut [u8]) {
    for chunk in bits.chunks_mut(64) {
        let w: u64 = rng.random();
        for (i, b) in chunk.iter_mut().enumerate() {
            *b = ((w >> i) & 1) as u8;
        }
    }
}

/// Error tally for one scheme, user and SNR point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub bits: u64,
    pub errors: u64,
    pub blocks: u64,
    /// Sum over blocks of the squared per-block error count.
    pub sum_sq: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.bits += o.bits;
        self.errors += o.errors;
        self.blocks += o.blocks;
        self.sum_sq += o.sum_sq;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Standard error with blocks as clusters.
    pub se: f64,
    pub blocks: u64,
}

impl BerPoint {
    pub fn from_tally(snr_db: f64, t: &Tally) -> Self {
        let (ci_low, ci_high) = ber_interval(t.errors, t.bits);
        BerPoint {
            snr_db,
            bits: t.bits,
            errors: t.errors,
            ber: if t.bits == 0 { 0.0 } else { t.errors as f64 / t.bits as f64 },
            ci_low,
            ci_high,
            se: clustered_standard_error(t.errors, t.bits, t.blocks, t.sum_sq),
            blocks: t.blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub scheme: Scheme,
    /// 1-based, user 1 farthest.
    pub user: usize,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn snr_at_ber(&self, target: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.snr_db, p.ber)).collect();
        snr_at_ber(&pts, target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub curves: Vec<BerCurve>,
}

impl RunResult {
    pub fn curve(&self, scheme: Scheme, user: usize) -> Option<&BerCurve> {
        self.curves.iter().find(|c| c.scheme == scheme && c.user == user)
    }
}

/// Run-time knobs that never change the results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    link: Link,
    chains: Vec<(Chain, u64)>,
}

impl Sim<'_> {
    /// Simulates `blocks` blocks of one batch; tallies indexed `[scheme][user]`.
    fn batch(&self, point: usize, batch: u64, blocks: u64, ps: f64) -> Vec<Vec<Tally>> {
        let seed = self.cfg.scenario.seed;
        let users = self.link.users();
        let mut crng = stream_rng(seed, point, batch, CHANNEL_STREAM);
        let mut drngs: Vec<ChaCha8Rng> = self
            .chains
            .iter()
            .map(|(_, p)| stream_rng(seed, point, batch, *p))
            .collect();
        let mut out = vec![vec![Tally::default(); users]; self.chains.len()];
        let mut draws = vec![
            UserDraw {
                g: Complex64::default(),
                g_hat: Complex64::default(),
                noise: Complex64::default()
            };
            users
        ];
        let mut scratch = vec![0usize; users];
        let mut bits = Vec::new();
        let mut decoded = Vec::new();
        for _ in 0..blocks {
            self.link.draw(&mut crng, &mut draws);
            for (s, (chain, _)) in self.chains.iter().enumerate() {
                bits.resize(chain.block_bits(), 0);
                random_bits(&mut drngs[s], &mut bits);
                let x = chain.transmit(&bits);
                for (u, d) in draws.iter().enumerate() {
                    let (y, gh) = self.link.receive(x, d, ps);
                    decoded.clear();
                    chain.receive(y, gh, u, &mut scratch, &mut decoded);
                    let off = chain.bit_offset(u);
                    let e = decoded
                        .iter()
                        .zip(&bits[off..off + decoded.len()])
                        .filter(|(a, b)| a != b)
                        .count() as u64;
                    let t = &mut out[s][u];
                    t.bits += decoded.len() as u64;
                    t.errors += e;
                    t.blocks += 1;
                    t.sum_sq += e * e;
                }
            }
        }
        out
    }

    fn point(&self, point: usize, snr_db: f64) -> Vec<Vec<Tally>> {
        let st = &self.cfg.stop;
        let ps = 10f64.powf(snr_db / 10.0) * self.link.n0();
        let users = self.link.users();
        let mut total = vec![vec![Tally::default(); users]; self.chains.len()];
        let mut next_batch = 0u64;
        let mut round = 1u64;
        loop {
            // blocks still needed by the slowest unfinished counter
            let mut needed = 0u64;
            for (s, (chain, _)) in self.chains.iter().enumerate() {
                for (u, t) in total[s].iter().enumerate() {
                    if t.errors < st.min_errors && t.bits < st.max_bits {
                        let per = chain.bits_per_block(u) as u64;
                        needed = needed.max((st.max_bits - t.bits).div_ceil(per));
                    }
                }
            }
            if needed == 0 {
                break;
            }
            let batches = round.min(needed.div_ceil(st.batch_blocks));
            let parts: Vec<Vec<Vec<Tally>>> = (next_batch..next_batch + batches)
                .into_par_iter()
                .map(|b| self.batch(point, b, st.batch_blocks, ps))
                .collect();
            for part in &parts {
                for (s, row) in part.iter().enumerate() {
                    for (u, t) in row.iter().enumerate() {
                        total[s][u].add(t);
                    }
                }
            }
            next_batch += batches;
            round = (round * 2).min(MAX_BATCHES_PER_ROUND);
        }
        total
    }
}

/// Runs every scheme of `cfg` over its SNR grid.
pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    let grid = cfg.snr_grid()?;
    let chains = cfg
        .scenario
        .schemes
        .iter()
        .map(|&s| Ok((build_chain(cfg, s)?, data_purpose(s))))
        .collect::<Result<Vec<_>>>()?;
    let sim = Sim {
        cfg,
        link: Link::new(cfg)?,
        chains,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let tallies: Vec<Vec<Vec<Tally>>> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, &snr)| sim.point(i, snr))
            .collect()
    });
    let users = cfg.user_count();
    let mut curves = Vec::new();
    for (s, &scheme) in cfg.scenario.schemes.iter().enumerate() {
        for u in 0..users {
            curves.push(BerCurve {
                scheme,
                user: u + 1,
                points: grid
                    .iter()
                    .zip(&tallies)
                    .map(|(&snr, t)| BerPoint::from_tally(snr, &t[s][u]))
                    .collect(),
            });
        }
    }
    Ok(RunResult {
        seed: cfg.scenario.seed,
        config: cfg.clone(),
        curves,
    })
}

/// SNR where the curve crosses `target`, interpolating `log10(BER)`
/// linearly between the first bracketing pair of nonzero points.
pub fn snr_at_ber(points: &[(f64, f64)], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return invalid(format!("target BER must be in (0, 1), got {target}"));
    }
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    let lt = target.log10();
    for w in pts.windows(2) {
        let ((x0, b0), (x1, b1)) = (w[0], w[1]);
        let (l0, l1) = (b0.log10(), b1.log10());
        if (l0 - lt) * (l1 - lt) <= 0.0 {
            if l0 == l1 {
                return Ok(x0);
            }
            return Ok(x0 + (lt - l0) * (x1 - x0) / (l1 - l0));
        }
    }
    if pts.len() == 1 && pts[0].1 == target {
        return Ok(pts[0].0);
    }
    Err(Error::NotBracketed { target })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub scheme: Scheme,
    pub user: usize,
    pub snr_db: f64,
    pub ber_baseline: f64,
    pub ber: f64,
    /// `ber − ber_baseline`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub scheme: Scheme,
    pub user: usize,
    pub target_ber: f64,
    pub snr_baseline: Option<f64>,
    pub snr: Option<f64>,
    /// `snr_baseline − snr`; positive when the scheme needs less SNR.
    pub gain_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: Scheme,
    pub run: RunResult,
    pub deltas: Vec<DeltaRow>,
    pub gaps: Vec<GapRow>,
}

/// Runs `schemes` on shared channel draws and compares each one after the
/// first against the first.
pub fn compare_schemes(base: &ScenarioConfig, schemes: &[Scheme], opts: RunOptions) -> Result<Comparison> {
    if schemes.is_empty() {
        return invalid("no schemes to compare");
    }
    let mut cfg = base.clone();
    cfg.scenario.schemes = schemes.to_vec();
    cfg.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let run = run_scenario(&cfg, opts)?;
    let users = cfg.user_count();
    let mut deltas = Vec::new();
    let mut gaps = Vec::new();
    for s in 1..schemes.len() {
        for u in 0..users {
            let b = &run.curves[u];
            let c = &run.curves[s * users + u];
            for (pb, pc) in b.points.iter().zip(&c.points) {
                deltas.push(DeltaRow {
                    scheme: c.scheme,
                    user: u + 1,
                    snr_db: pc.snr_db,
                    ber_baseline: pb.ber,
                    ber: pc.ber,
                    delta: pc.ber - pb.ber,
                });
            }
            for &t in &cfg.scenario.targets_ber {
                let sb = b.snr_at_ber(t).ok();
                let sc = c.snr_at_ber(t).ok();
                gaps.push(GapRow {
                    scheme: c.scheme,
                    user: u + 1,
                    target_ber: t,
                    snr_baseline: sb,
                    snr: sc,
                    gain_db: sb.zip(sc).map(|(a, b)| a - b),
                });
            }
        }
    }
    Ok(Comparison {
        baseline: schemes[0],
        run,
        deltas,
        gaps,
    })
}

/// CSV with columns `scheme,user,snr_db,bits,errors,ber,ci_low,ci_high`.
pub fn write_csv<W: Write>(curves: &[BerCurve], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["scheme", "user", "snr_db", "bits", "errors", "ber", "ci_low", "ci_high"])
        .map_err(io)?;
    for c in curves {
        for p in &c.points {
            out.write_record([
                c.scheme.to_string(),
                c.user.to_string(),
                p.snr_db.to_string(),
                p.bits.to_string(),
                p.errors.to_string(),
                p.ber.to_string(),
                p.ci_low.to_string(),
                p.ci_high.to_string(),
            ])
            .map_err(io)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One object with `seed`, the full `config` and the `curves`.
pub fn write_json<W: Write>(run: &RunResult, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, run).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_linear_midpoint() {
        let c = [(0.0, 1e-2), (10.0, 1e-4)];
        assert!((snr_at_ber(&c, 1e-3).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(snr_at_ber(&c, 0.5), Err(Error::NotBracketed { .. })));
        assert!(matches!(snr_at_ber(&c, 1e-6), Err(Error::NotBracketed { .. })));
        // zero-BER points are skipped
        let z = [(0.0, 1e-1), (10.0, 0.0), (20.0, 1e-3)];
        assert!((snr_at_ber(&z, 1e-2).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn streams_differ_by_purpose_and_batch() {
        let a: u64 = stream_rng(1, 0, 0, 0).random();
        let b: u64 = stream_rng(1, 0, 0, 1).random();
        let c: u64 = stream_rng(1, 0, 1, 0).random();
        let d: u64 = stream_rng(1, 1, 0, 0).random();
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, stream_rng(1, 0, 0, 0).random::<u64>());
    }

    #[test]
    fn random_bits_are_binary() {
        let mut rng = stream_rng(5, 0, 0, 0);
        let mut v = vec![9u8; 200];
        random_bits(&mut rng, &mut v);
        assert!(v.iter().all(|&b| b <= 1));
        let ones = v.iter().filter(|&&b| b == 1).count();
        assert!(ones > 60 && ones < 140);
    }
}
