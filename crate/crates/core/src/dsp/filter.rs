//! IIR filters as cascaded second-order sections with zero-phase application.

use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Normalized biquad (`a0 = 1`), transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// DC gain.
    fn gain_at_dc(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section sit in steady state for a unit step.
    fn step_state(&self) -> [f64; 2] {
        let y = self.gain_at_dc();
        let z2 = self.b[2] - self.a[1] * y;
        let z1 = y - self.b[0];
        [z1, z2]
    }

    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }
}

fn butter_section(q: f64, k: f64, highpass: bool) -> Biquad {
    let k2 = k * k;
    let norm = 1.0 / (1.0 + k / q + k2);
    let a = [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm];
    if highpass {
        Biquad {
            b: [norm, -2.0 * norm, norm],
            a,
        }
    } else {
        let b0 = k2 * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a,
        }
    }
}

/// Butterworth sections of even `order` via the bilinear transform with
/// pre-warping.
fn butterworth(order: usize, cutoff_hz: f64, rate_hz: f64, highpass: bool) -> Vec<Biquad> {
    debug_assert!(order >= 2 && order.is_multiple_of(2));
    let k = (PI * cutoff_hz / rate_hz).tan();
    (0..order / 2)
        .map(|i| {
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let q = 1.0 / (2.0 * theta.sin());
            butter_section(q, k, highpass)
        })
        .collect()
}

pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Vec<Biquad> {
    butterworth(order, cutoff_hz, rate_hz, false)
}

pub fn butterworth_highpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Vec<Biquad> {
    butterworth(order, cutoff_hz, rate_hz, true)
}

/// Second-order notch with unity gain away from `f0`.
pub fn notch(f0_hz: f64, q: f64, rate_hz: f64) -> Biquad {
    let w0 = 2.0 * PI * f0_hz / rate_hz;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let c = -2.0 * w0.cos();
    Biquad {
        b: [1.0 / a0, c / a0, 1.0 / a0],
        a: [c / a0, (1.0 - alpha) / a0],
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SosChain {
    pub sections: Vec<Biquad>,
}

impl SosChain {
    pub fn new(sections: Vec<Biquad>) -> Self {
        Self { sections }
    }

    /// Single forward pass with optional initial states.
    fn run(&self, x: &mut [f64], init: Option<&[[f64; 2]]>) {
        for (si, sec) in self.sections.iter().enumerate() {
            let [mut z1, mut z2] = init.map(|s| s[si]).unwrap_or([0.0, 0.0]);
            for v in x.iter_mut() {
                let xin = *v;
                let y = sec.b[0] * xin + z1;
                z1 = sec.b[1] * xin - sec.a[0] * y + z2;
                z2 = sec.b[2] * xin - sec.a[1] * y;
                *v = y;
            }
        }
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, None);
        y
    }

    /// Steady-state initial conditions for a unit step, per section.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut gain = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let z = s.step_state();
                let scaled = [z[0] * gain, z[1] * gain];
                gain *= s.gain_at_dc();
                scaled
            })
            .collect()
    }

    /// Forward-backward filtering. The input is mirror-padded at both ends and
    /// each pass starts in the steady state of its input's mean level, so an
    /// oscillation that ends mid-cycle does not leave a step for very
    /// low cut-offs to ring on. Output length equals input length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 || self.sections.is_empty() {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| x[n - 1 - i]));

        let zi = self.step_states();
        let start_state = |v: &[f64]| -> Vec<[f64; 2]> {
            let level = v.iter().sum::<f64>() / v.len() as f64;
            zi.iter().map(|s| [s[0] * level, s[1] * level]).collect()
        };
        let z0 = start_state(&ext);
        self.run(&mut ext, Some(&z0));
        ext.reverse();
        let z0 = start_state(&ext);
        self.run(&mut ext, Some(&z0));
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Complex response of one pass at `freq_hz`.
    pub fn response(&self, freq_hz: f64, rate_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / rate_hz;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    /// Magnitude of the forward-backward response (the squared single-pass magnitude).
    pub fn zero_phase_gain(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        self.response(freq_hz, rate_hz).norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandpass_matches_reference_design() {
        // Separate 4th-order high-pass (0.01 Hz) and low-pass (120 Hz) at 250 Hz,
        // denominators from a standard Butterworth design tool.
        let lp = butterworth_lowpass(4, 120.0, 250.0);
        let hp = butterworth_highpass(4, 0.01, 250.0);
        let mut a1: Vec<f64> = lp.iter().chain(&hp).map(|s| s.a[0]).collect();
        a1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [-1.9998076, -1.99953565, 1.77831349, 1.8934156];
        for (got, want) in a1.iter().zip(want) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn notch_zeroes_center_frequency() {
        let chain = SosChain::new(vec![notch(60.0, 30.0, 250.0)]);
        assert!(chain.response(60.0, 250.0).norm() < 1e-12);
        assert!((chain.response(10.0, 250.0).norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn filtfilt_of_constant_through_lowpass_is_constant() {
        let chain = SosChain::new(butterworth_lowpass(4, 4.0, 250.0));
        let y = chain.filtfilt(&vec![3.0; 400]);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn filtfilt_short_inputs() {
        let chain = SosChain::new(butterworth_lowpass(4, 4.0, 250.0));
        assert!(chain.filtfilt(&[]).is_empty());
        assert_eq!(chain.filtfilt(&[2.0]).len(), 1);
    }
}
