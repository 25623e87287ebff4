//! Grayscale images through the NOMA chains: binary PGM I/O, bit packing,
//! MSE/PSNR scoring and synthetic test images.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::config::ScenarioConfig;
use crate::error::{invalid, Error, Result};
use crate::montecarlo::{build_chain, stream_rng, Link, RunOptions, UserDraw};
use crate::noma::Scheme;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("image dimensions must be positive, got {width}x{height}"));
        }
        if pixels.len() != width * height {
            return invalid(format!("{} pixels for a {width}x{height} image", pixels.len()));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Reads a header token, skipping whitespace and `#` comments.
fn header_token(data: &[u8], pos: &mut usize) -> Result<(usize, String)> {
    loop {
        match data.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while data.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(parse_err(*pos, "unexpected end of header")),
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        *pos += 1;
    }
    Ok((start, String::from_utf8_lossy(&data[start..*pos]).into_owned()))
}

fn header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let (at, tok) = header_token(data, pos)?;
    tok.parse::<usize>()
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| parse_err(at, format!("invalid {what} `{tok}`")))
}

/// Parses a binary PGM (`P5`, maxval 255).
pub fn parse_pgm(data: &[u8]) -> Result<GrayImage> {
    if data.len() < 2 || &data[..2] != b"P5" {
        let found = String::from_utf8_lossy(&data[..data.len().min(2)]).into_owned();
        return Err(parse_err(0, format!("expected binary PGM magic `P5`, found `{found}`")));
    }
    let mut pos = 2;
    let width = header_number(data, &mut pos, "width")?;
    let height = header_number(data, &mut pos, "height")?;
    let (at, tok) = header_token(data, &mut pos)?;
    if tok != "255" {
        return Err(parse_err(at, format!("maxval must be 255, got `{tok}`")));
    }
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(parse_err(pos, "expected a single whitespace byte after maxval")),
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| parse_err(0, "image dimensions overflow"))?;
    let have = data.len() - pos;
    if have < need {
        return Err(parse_err(
            data.len(),
            format!("truncated payload: {have} of {need} bytes"),
        ));
    }
    GrayImage::new(width, height, data[pos..pos + need].to_vec())
}

/// Canonical encoding: `P5\n<w> <h>\n255\n` then the pixels.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_pgm(&data)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// MSB first within each byte.
pub fn image_to_bits(img: &GrayImage) -> Vec<u8> {
    img.pixels
        .iter()
        .flat_map(|&p| (0..8).rev().map(move |i| (p >> i) & 1))
        .collect()
}

pub fn bits_to_image(bits: &[u8], width: usize, height: usize) -> Result<GrayImage> {
    if bits.len() != 8 * width * height {
        return invalid(format!(
            "{} bits for a {width}x{height} image, expected {}",
            bits.len(),
            8 * width * height
        ));
    }
    let pixels = bits
        .chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect();
    GrayImage::new(width, height, pixels)
}

fn same_size(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return invalid(format!(
            "image sizes differ: {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        ));
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_size(a, b)?;
    let sum: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.pixels.len() as f64)
}

/// `10·log10(255²/MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / m).log10()
    })
}

/// Writes infinite PSNR as the string `"inf"`.
fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsnrReport {
    pub scheme: Scheme,
    pub user: usize,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr_db: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePairResult {
    pub scheme: Scheme,
    pub recon_far: GrayImage,
    pub recon_near: GrayImage,
    pub reports: [PsnrReport; 2],
}

/// Sends `far` to user 1 and `near` to user 2 through `scheme` at the
/// config's `image.snr_db`. Block `b` sees the same channel draw for every
/// scheme. Each user's bits are zero-padded to a whole number of blocks.
pub fn transmit_image_pair(
    far: &GrayImage,
    near: &GrayImage,
    cfg: &ScenarioConfig,
    scheme: Scheme,
    opts: RunOptions,
) -> Result<ImagePairResult> {
    same_size(far, near)?;
    cfg.validate()?;
    if cfg.user_count() != 2 {
        return Err(Error::InvalidConfig(vec![format!(
            "users: image transmission needs two users, got {}",
            cfg.user_count()
        )]));
    }
    let chain = build_chain(cfg, scheme)?;
    let link = Link::new(cfg)?;
    let ps = 10f64.powf(cfg.image.snr_db / 10.0) * link.n0();
    let sources = [image_to_bits(far), image_to_bits(near)];
    let per: Vec<usize> = (0..2).map(|u| chain.bits_per_block(u)).collect();
    let blocks = (0..2).map(|u| sources[u].len().div_ceil(per[u])).max().unwrap_or(0) as u64;
    let padded: Vec<Vec<u8>> = (0..2)
        .map(|u| {
            let mut v = sources[u].clone();
            v.resize(blocks as usize * per[u], 0);
            v
        })
        .collect();

    let chunk = cfg.stop.batch_blocks;
    let seed = cfg.scenario.seed;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let parts: Vec<[Vec<u8>; 2]> = pool.install(|| {
        (0..blocks.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut rng = stream_rng(seed, 0, c, 0);
                let mut draws = [UserDraw {
                    g: Default::default(),
                    g_hat: Default::default(),
                    noise: Default::default(),
                }; 2];
                let mut scratch = [0usize; 2];
                let mut bits = vec![0u8; chain.block_bits()];
                let mut out = [Vec::new(), Vec::new()];
                for b in c * chunk..((c + 1) * chunk).min(blocks) {
                    let b = b as usize;
                    for u in 0..2 {
                        let off = chain.bit_offset(u);
                        bits[off..off + per[u]].copy_from_slice(&padded[u][b * per[u]..(b + 1) * per[u]]);
                    }
                    link.draw(&mut rng, &mut draws);
                    let x = chain.transmit(&bits);
                    for (u, d) in draws.iter().enumerate() {
                        let (y, gh) = link.receive(x, d, ps);
                        chain.receive(y, gh, u, &mut scratch, &mut out[u]);
                    }
                }
                out
            })
            .collect()
    });
    let mut recon = [Vec::new(), Vec::new()];
    for p in parts {
        for u in 0..2 {
            recon[u].extend_from_slice(&p[u]);
        }
    }
    let imgs = [far, near];
    let mut images = Vec::with_capacity(2);
    let mut reports = Vec::with_capacity(2);
    for u in 0..2 {
        recon[u].truncate(sources[u].len());
        let img = bits_to_image(&recon[u], imgs[u].width, imgs[u].height)?;
        reports.push(PsnrReport {
            scheme,
            user: u + 1,
            psnr_db: psnr(imgs[u], &img)?,
            mse: mse(imgs[u], &img)?,
        });
        images.push(img);
    }
    let near_img = images.pop().expect("two images");
    let far_img = images.pop().expect("two images");
    let [r1, r2]: [PsnrReport; 2] = reports.try_into().expect("two reports");
    Ok(ImagePairResult {
        scheme,
        recon_far: far_img,
        recon_near: near_img,
        reports: [r1, r2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Synthetic {
    /// Diagonal ramp.
    Gradient,
    /// Squares of `cell` pixels.
    Checkerboard { cell: usize },
    /// Random cosines with amplitude `f^(−beta/2)`; larger `beta` is smoother.
    Noise { beta: f64 },
}

/// Deterministic synthetic image.
pub fn synthetic_image(kind: Synthetic, width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return invalid(format!("image dimensions must be positive, got {width}x{height}"));
    }
    let mut px = vec![0u8; width * height];
    match kind {
        Synthetic::Gradient => {
            let span = (width + height - 2).max(1) as f64;
            for y in 0..height {
                for x in 0..width {
                    px[y * width + x] = ((x + y) as f64 / span * 255.0).round() as u8;
                }
            }
        }
        Synthetic::Checkerboard { cell } => {
            if cell == 0 {
                return invalid("checkerboard cell must be positive");
            }
            for y in 0..height {
                for x in 0..width {
                    px[y * width + x] = if (x / cell + y / cell) % 2 == 0 { 32 } else { 224 };
                }
            }
        }
        Synthetic::Noise { beta } => {
            if !beta.is_finite() {
                return invalid("noise spectral exponent must be finite");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let waves: Vec<(f64, f64, f64, f64)> = (0..96)
                .map(|_| {
                    let fx = rng.random_range(-32i32..=32) as f64;
                    let fy = rng.random_range(-32i32..=32) as f64;
                    let f = (fx * fx + fy * fy).sqrt().max(1.0);
                    let phase = rng.random::<f64>() * std::f64::consts::TAU;
                    (fx, fy, f.powf(-beta / 2.0), phase)
                })
                .collect();
            let tau = std::f64::consts::TAU;
            let field: Vec<f64> = (0..width * height)
                .map(|i| {
                    let (x, y) = ((i % width) as f64 / width as f64, (i / width) as f64 / height as f64);
                    waves
                        .iter()
                        .map(|(fx, fy, a, p)| a * (tau * (fx * x + fy * y) + p).cos())
                        .sum()
                })
                .collect();
            let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            for (p, v) in px.iter_mut().zip(&field) {
                *p = ((v - lo) / span * 255.0).round() as u8;
            }
        }
    }
    GrayImage::new(width, height, px)
}
