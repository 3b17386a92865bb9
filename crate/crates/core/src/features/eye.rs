//! Eye-tracking descriptors over one epoch.
//!
//! The 12 values, in order: pupil mean, pupil std, pupil power in
//! 0-0.2 / 0.2-0.4 / 0.4-0.6 / 0.6-1 Hz, fixation count, mean fixation
//! duration, total fixation duration, mean gaze speed, gaze dispersion and
//! saccade count. Fixations come from a dispersion-threshold (I-DT) pass over
//! valid gaze samples; saccades are runs of sample-to-sample speed above a
//! threshold.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp::spectrum::mirrored_periodogram;
use crate::error::{Error, Result};
use crate::io::fill_nan_runs;
use crate::model::eye_col;
use crate::preprocess::pupil_series;

pub const EYE_FEATURES: [&str; 12] = [
    "pupil_mean",
    "pupil_std",
    "pupil_psd_0_0.2",
    "pupil_psd_0.2_0.4",
    "pupil_psd_0.4_0.6",
    "pupil_psd_0.6_1",
    "fixation_freq",
    "fixation_mean_dur",
    "fixation_total_dur",
    "gaze_velocity",
    "gaze_dispersion",
    "saccade_count",
];

pub const PUPIL_BANDS: [(f64, f64); 4] = [(0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EyeFeatureConfig {
    /// I-DT dispersion bound, `(max x - min x) + (max y - min y)`, normalized units.
    pub max_dispersion: f64,
    pub min_fixation_s: f64,
    /// Speed above which a sample step counts as saccadic, units/s.
    pub saccade_speed: f64,
}

impl Default for EyeFeatureConfig {
    fn default() -> Self {
        Self {
            max_dispersion: 0.04,
            min_fixation_s: 0.1,
            saccade_speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    /// Index range into the valid-gaze sequence, end exclusive.
    pub start: usize,
    pub end: usize,
}

fn dispersion(points: &[(f64, f64)]) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    (x1 - x0) + (y1 - y0)
}

/// Dispersion-threshold fixation detection.
pub fn detect_fixations(points: &[(f64, f64)], max_dispersion: f64, min_len: usize) -> Vec<Fixation> {
    let min_len = min_len.max(1);
    let n = points.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i + min_len <= n {
        let mut j = i + min_len;
        if dispersion(&points[i..j]) <= max_dispersion {
            while j < n && dispersion(&points[i..=j]) <= max_dispersion {
                j += 1;
            }
            out.push(Fixation { start: i, end: j });
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

pub fn eye_features(eye_epoch: &Array2<f64>, rate_hz: f64, cfg: &EyeFeatureConfig) -> Result<[f64; 12]> {
    let n = eye_epoch.nrows();
    let need = rate_hz.round() as usize;
    if n < need {
        return Err(Error::TooShort { need, got: n });
    }
    if eye_epoch.ncols() <= eye_col::VALID_RIGHT {
        return Err(Error::NoValidPupil("pupil channels missing".into()));
    }

    let pupil = pupil_series(eye_epoch);
    let valid = pupil.iter().filter(|p| p.is_some()).count();
    if 2 * (n - valid) > n {
        return Err(Error::NoValidPupil(format!(
            "{} of {n} samples lack a valid eye",
            n - valid
        )));
    }
    let vals: Vec<f64> = pupil.iter().flatten().copied().collect();
    let pm = vals.iter().sum::<f64>() / vals.len() as f64;
    let psd_ = (vals.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();

    let mut filled: Vec<f64> = pupil.iter().map(|p| p.unwrap_or(f64::NAN)).collect();
    fill_nan_runs(&mut filled, usize::MAX).map_err(|_| Error::NoValidPupil("no valid sample".into()))?;
    let spec = mirrored_periodogram(&filled, rate_hz);
    let bands: Vec<f64> = PUPIL_BANDS.iter().map(|&(lo, hi)| spec.band_power(lo, hi)).collect();

    let gaze: Vec<(f64, f64)> = eye_epoch
        .rows()
        .into_iter()
        .filter(|r| r[eye_col::VALID_LEFT] >= 0.5 || r[eye_col::VALID_RIGHT] >= 0.5)
        .map(|r| (r[eye_col::GAZE_X], r[eye_col::GAZE_Y]))
        .collect();
    let min_len = (cfg.min_fixation_s * rate_hz).ceil() as usize;
    let fix = detect_fixations(&gaze, cfg.max_dispersion, min_len);
    let durations: Vec<f64> = fix
        .iter()
        .map(|f| (f.end - f.start) as f64 / rate_hz)
        .collect();
    let total_dur: f64 = durations.iter().sum();
    let mean_dur = if durations.is_empty() {
        0.0
    } else {
        total_dur / durations.len() as f64
    };

    let speeds: Vec<f64> = gaze
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt() * rate_hz)
        .collect();
    let velocity = if speeds.is_empty() {
        0.0
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    };
    let mut saccades = 0usize;
    let mut in_saccade = false;
    for &s in &speeds {
        let fast = s > cfg.saccade_speed;
        if fast && !in_saccade {
            saccades += 1;
        }
        in_saccade = fast;
    }

    let dispersion_rms = if gaze.is_empty() {
        0.0
    } else {
        let gn = gaze.len() as f64;
        let cx = gaze.iter().map(|p| p.0).sum::<f64>() / gn;
        let cy = gaze.iter().map(|p| p.1).sum::<f64>() / gn;
        (gaze
            .iter()
            .map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2))
            .sum::<f64>()
            / gn)
            .sqrt()
    };

    Ok([
        pm,
        psd_,
        bands[0],
        bands[1],
        bands[2],
        bands[3],
        fix.len() as f64,
        mean_dur,
        total_dur,
        velocity,
        dispersion_rms,
        saccades as f64,
    ])
}
