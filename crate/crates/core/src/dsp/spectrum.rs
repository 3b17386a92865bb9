//! One-sided power spectral density estimates.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    /// Bin centres in Hz, uniformly spaced from 0.
    pub freqs: Vec<f64>,
    /// Density in units²/Hz.
    pub density: Vec<f64>,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Rectangle-rule integral over bins with `lo <= f < hi`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution();
        self.freqs
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo - 1e-9 && **f < hi - 1e-9)
            .map(|(_, p)| p * df)
            .sum()
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    // periodic Hann, as used for spectral estimation
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn power_spectrum(frame: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = frame.len();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Doubles every bin that has a mirror image in the negative half.
fn fold_one_sided(p: &mut [f64], n: usize) {
    let last = p.len() - 1;
    for (k, v) in p.iter_mut().enumerate() {
        let nyquist = n.is_multiple_of(2) && k == last;
        if k != 0 && !nyquist {
            *v *= 2.0;
        }
    }
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
/// `x.len()` must be at least `seg_len`.
pub fn welch(x: &[f64], rate_hz: f64, seg_len: usize, overlap: usize) -> Psd {
    debug_assert!(seg_len > 0 && overlap < seg_len && x.len() >= seg_len);
    let w = hann(seg_len);
    let wss: f64 = w.iter().map(|v| v * v).sum();
    let step = seg_len - overlap;
    let mut planner = FftPlanner::new();
    let mut acc = vec![0.0; seg_len / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg_len <= x.len() {
        let seg = &x[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        let frame: Vec<f64> = seg.iter().zip(&w).map(|(v, wv)| (v - mean) * wv).collect();
        for (a, p) in acc.iter_mut().zip(power_spectrum(&frame, &mut planner)) {
            *a += p;
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (rate_hz * wss * count as f64);
    acc.iter_mut().for_each(|v| *v *= scale);
    fold_one_sided(&mut acc, seg_len);
    Psd {
        freqs: (0..acc.len())
            .map(|k| k as f64 * rate_hz / seg_len as f64)
            .collect(),
        density: acc,
    }
}

/// Periodogram of the even (mirror) extension `[x, reverse(x)]`.
///
/// The extension removes the edge discontinuity of a short record, so a slowly
/// varying signal keeps its energy near DC. The mean is kept. Resolution is
/// `rate / (2 n)`.
pub fn mirrored_periodogram(x: &[f64], rate_hz: f64) -> Psd {
    let n2 = 2 * x.len();
    let mut ext = x.to_vec();
    ext.extend(x.iter().rev());
    let mut planner = FftPlanner::new();
    let mut p = power_spectrum(&ext, &mut planner);
    let scale = 1.0 / (rate_hz * n2 as f64);
    p.iter_mut().for_each(|v| *v *= scale);
    fold_one_sided(&mut p, n2);
    Psd {
        freqs: (0..p.len()).map(|k| k as f64 * rate_hz / n2 as f64).collect(),
        density: p,
    }
}
