//! Error-rate confidence intervals and goodness-of-fit helpers.

use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{invalid, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Below this many errors the exact interval is used as well.
pub const EXACT_BELOW_ERRORS: u64 = 30;

/// Clopper–Pearson interval for `errors` out of `trials` at `confidence`.
pub fn clopper_pearson(errors: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || errors > trials {
        return invalid(format!("{errors} errors out of {trials} trials"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid(format!("confidence must be in (0, 1), got {confidence}"));
    }
    let tail = (1.0 - confidence) / 2.0;
    let (k, n) = (errors as f64, trials as f64);
    let lo = if errors == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .map_err(|e| crate::Error::Numerical(e.to_string()))?
            .inverse_cdf(tail)
    };
    let hi = if errors == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .map_err(|e| crate::Error::Numerical(e.to_string()))?
            .inverse_cdf(1.0 - tail)
    };
    Ok((lo, hi))
}

/// 95% interval: normal approximation, widened to cover the
/// Clopper–Pearson interval when there are fewer than 30 errors.
pub fn ber_interval(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 1.0);
    }
    let p = errors as f64 / bits as f64;
    let half = Z95 * (p * (1.0 - p) / bits as f64).sqrt();
    let (mut lo, mut hi) = ((p - half).max(0.0), (p + half).min(1.0));
    if errors < EXACT_BELOW_ERRORS {
        if let Ok((cl, ch)) = clopper_pearson(errors, bits, 0.95) {
            lo = lo.min(cl);
            hi = hi.max(ch);
        }
    }
    (lo, hi)
}

/// Standard error of a BER estimate whose bits come in blocks that share
/// a fading draw. `sum_sq` is the sum over blocks of squared error counts.
pub fn clustered_standard_error(errors: u64, bits: u64, blocks: u64, sum_sq: u64) -> f64 {
    if blocks < 2 || bits == 0 {
        return f64::NAN;
    }
    let p = errors as f64 / bits as f64;
    let m = bits as f64 / blocks as f64;
    let n = blocks as f64;
    let ss = sum_sq as f64 - 2.0 * p * m * errors as f64 + n * m * m * p * p;
    (ss.max(0.0) * n / (n - 1.0)).sqrt() / bits as f64
}

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample critical value `c(α)·√((n + m)/(n·m))`; pass `m = None`
/// for the one-sample test.
pub fn ks_critical(alpha: f64, n: usize, m: Option<usize>) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    match m {
        None => c / (n as f64).sqrt(),
        Some(m) => c * ((n + m) as f64 / (n * m) as f64).sqrt(),
    }
}
