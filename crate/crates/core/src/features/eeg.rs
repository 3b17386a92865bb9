//! Single-channel EEG descriptors.

use crate::dsp::spectrum::welch;
use crate::dsp::wavelet::{pad_zero, wavedec};
use crate::error::{Error, Result};

/// `(name, low, high)` in Hz, low inclusive, high exclusive.
pub const EEG_BANDS: [(&str, f64, f64); 5] = [
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 14.0),
    ("beta", 14.0, 31.0),
    ("gamma", 31.0, 50.0),
];

pub const DWT_LEVELS: usize = 5;
pub const DWT_BANDS: [&str; 6] = ["a5", "d5", "d4", "d3", "d2", "d1"];
pub const DWT_STATS: [&str; 3] = ["logenergy", "meanabs", "std"];
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPowers {
    pub absolute: [f64; 5],
    /// Fraction of the 1-50 Hz total.
    pub relative: [f64; 5],
}

/// Welch PSD (1 s Hann segments, 50 % overlap) integrated over the five
/// classical bands.
pub fn band_powers(x: &[f64], rate_hz: f64) -> Result<BandPowers> {
    let seg = rate_hz.round() as usize;
    if x.len() < seg || seg < 2 {
        return Err(Error::TooShort {
            need: seg,
            got: x.len(),
        });
    }
    let psd = welch(x, rate_hz, seg, seg / 2);
    let mut absolute = [0.0; 5];
    for (slot, (_, lo, hi)) in absolute.iter_mut().zip(EEG_BANDS) {
        *slot = psd.band_power(lo, hi);
    }
    let total = psd.band_power(EEG_BANDS[0].1, EEG_BANDS[4].2);
    let mut relative = [0.0; 5];
    if total > 0.0 {
        for (r, a) in relative.iter_mut().zip(absolute) {
            *r = a / total;
        }
    }
    Ok(BandPowers { absolute, relative })
}

pub const NSI_SEGMENTS: usize = 10;

/// Non-stationarity index: spread (population std) of the means of
/// `segments` equal-length pieces of the z-scored signal. Trailing samples
/// that do not fill a segment are ignored.
pub fn nsi(x: &[f64], segments: usize) -> Result<f64> {
    if x.len() < segments || segments == 0 {
        return Err(Error::TooShort {
            need: segments.max(1),
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Ok(0.0);
    }
    let len = x.len() / segments;
    let means: Vec<f64> = x
        .chunks_exact(len)
        .take(segments)
        .map(|c| c.iter().map(|v| (v - mean) / sd).sum::<f64>() / len as f64)
        .collect();
    let m = means.iter().sum::<f64>() / segments as f64;
    Ok((means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / segments as f64).sqrt())
}

/// Higuchi fractal dimension, clamped to `[1, 2]`.
pub fn higuchi_fd(x: &[f64], k_max: usize) -> Result<f64> {
    let n = x.len();
    if k_max < 2 || n < 2 * k_max {
        return Err(Error::TooShort {
            need: 2 * k_max.max(2),
            got: n,
        });
    }
    let mut log_k = Vec::with_capacity(k_max);
    let mut log_l = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut lk = 0.0;
        let mut count = 0usize;
        for m in 0..k {
            let steps = (n - 1 - m) / k;
            if steps == 0 {
                continue;
            }
            let len: f64 = (1..=steps)
                .map(|i| (x[m + i * k] - x[m + (i - 1) * k]).abs())
                .sum();
            lk += len * (n - 1) as f64 / (steps * k) as f64 / k as f64;
            count += 1;
        }
        let lk = lk / count as f64;
        if lk <= 0.0 {
            // flat signal: curve length vanishes at every scale
            return Ok(1.0);
        }
        log_k.push((k as f64).ln());
        log_l.push(lk.ln());
    }
    let slope = ols_slope(&log_k, &log_l);
    Ok((-slope).clamp(1.0, 2.0))
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Sign changes of `x`, treating `v >= 0` as positive.
pub fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count()
}

/// Higher-order crossings: order `k` counts sign changes after `k - 1`
/// backward differences of the mean-removed signal.
pub fn hoc(x: &[f64], max_order: usize) -> Result<Vec<usize>> {
    if x.len() < max_order + 2 {
        return Err(Error::TooShort {
            need: max_order + 2,
            got: x.len(),
        });
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut cur: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let mut out = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        if order > 1 {
            cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
        }
        out.push(zero_crossings(&cur));
    }
    Ok(out)
}

/// Sub-band coefficients of the zero-padded 5-level db4 transform, ordered
/// A5, D5, D4, D3, D2, D1.
pub fn dwt_subbands(x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let need = 1 << DWT_LEVELS;
    if x.len() < need {
        return Err(Error::TooShort {
            need,
            got: x.len(),
        });
    }
    let dec = wavedec(&pad_zero(x, DWT_LEVELS), DWT_LEVELS);
    let mut bands = vec![dec.approx];
    bands.extend(dec.details.into_iter().rev());
    Ok(bands)
}

/// Per sub-band: log energy, mean |c|, std of c (18 values).
pub fn dwt_features(x: &[f64]) -> Result<Vec<f64>> {
    let bands = dwt_subbands(x)?;
    let mut out = Vec::with_capacity(18);
    for b in &bands {
        let n = b.len() as f64;
        let energy: f64 = b.iter().map(|c| c * c).sum();
        let mean_abs = b.iter().map(|c| c.abs()).sum::<f64>() / n;
        let mean = b.iter().sum::<f64>() / n;
        let sd = (b.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
        out.push(energy.max(LOG_FLOOR).ln());
        out.push(mean_abs);
        out.push(sd);
    }
    Ok(out)
}
