use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eye_col, Trial};

pub const MIN_LUMINANCE_TRIALS: usize = 5;

/// Linear pupil-on-luminance fit across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlrFit {
    /// mm per unit luminance.
    pub slope: f64,
    pub intercept: f64,
    pub mean_luminance: f64,
    pub n_trials: usize,
}

/// Per-sample pupil diameter: mean of the valid eyes, `None` when neither is valid.
pub fn pupil_series(eye_epoch: &ndarray::Array2<f64>) -> Vec<Option<f64>> {
    eye_epoch
        .rows()
        .into_iter()
        .map(|r| {
            let l = (r[eye_col::VALID_LEFT] >= 0.5).then_some(r[eye_col::PUPIL_LEFT]);
            let rr = (r[eye_col::VALID_RIGHT] >= 0.5).then_some(r[eye_col::PUPIL_RIGHT]);
            match (l, rr) {
                (Some(a), Some(b)) => Some(0.5 * (a + b)),
                (Some(a), None) | (None, Some(a)) => Some(a),
                (None, None) => None,
            }
        })
        .collect()
}

fn mean_pupil(trial: &Trial) -> Option<f64> {
    let (s, n) = pupil_series(&trial.eye_epoch)
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Regresses trial-mean pupil diameter on stimulus luminance.
///
/// A constant luminance gives a degenerate design; the slope is then 0.
pub fn pupil_light_reflex_remove(trials: &[Trial]) -> Result<PlrFit> {
    let pts: Vec<(f64, f64)> = trials
        .iter()
        .filter_map(|t| Some((t.luminance?, mean_pupil(t)?)))
        .collect();
    if pts.len() < MIN_LUMINANCE_TRIALS {
        return Err(Error::InsufficientLuminance {
            need: MIN_LUMINANCE_TRIALS,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let ml = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mp = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - ml).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - ml) * (p.1 - mp)).sum();
    let slope = if sxx <= 1e-12 * n { 0.0 } else { sxy / sxx };
    Ok(PlrFit {
        slope,
        intercept: mp - slope * ml,
        mean_luminance: ml,
        n_trials: pts.len(),
    })
}

impl PlrFit {
    pub fn offset(&self, luminance: f64) -> f64 {
        self.slope * (luminance - self.mean_luminance)
    }

    /// Corrected per-sample pupil series; unchanged when the trial has no luminance.
    pub fn correct(&self, trial: &Trial) -> Vec<Option<f64>> {
        let off = trial.luminance.map(|l| self.offset(l)).unwrap_or(0.0);
        pupil_series(&trial.eye_epoch)
            .into_iter()
            .map(|v| v.map(|p| p - off))
            .collect()
    }
}

/// Subtracts the luminance term from both raw pupil channels in place.
pub fn apply_plr(trials: &mut [Trial], fit: &PlrFit) {
    for t in trials.iter_mut() {
        let Some(l) = t.luminance else { continue };
        let off = fit.offset(l);
        for mut row in t.eye_epoch.rows_mut() {
            row[eye_col::PUPIL_LEFT] -= off;
            row[eye_col::PUPIL_RIGHT] -= off;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Category, Trial};
    use ndarray::Array2;
    use std::collections::BTreeSet;

    fn trial(lum: Option<f64>, pupil: f64) -> Trial {
        let eye = Array2::from_shape_fn((120, 6), |(i, c)| match c {
            0 | 1 => pupil + if i % 2 == 0 { 0.01 } else { -0.01 },
            2 | 3 => 0.5,
            _ => 1.0,
        });
        Trial {
            event_id: "t".into(),
            category: Category::Face,
            eeg_epoch: Array2::zeros((0, 6)),
            eeg_rate_hz: 250.0,
            eye_epoch: eye,
            eye_rate_hz: 60.0,
            label: None,
            luminance: lum,
            quality_flags: BTreeSet::new(),
        }
    }

    #[test]
    fn exact_linear_relation_is_removed() {
        let trials: Vec<Trial> = (0..8)
            .map(|i| {
                let l = i as f64 / 8.0;
                trial(Some(l), 4.0 - 0.8 * l)
            })
            .collect();
        let fit = pupil_light_reflex_remove(&trials).unwrap();
        assert!((fit.slope + 0.8).abs() < 1e-9);
        let means: Vec<f64> = trials
            .iter()
            .map(|t| {
                let v: Vec<f64> = fit.correct(t).into_iter().flatten().collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        for m in &means {
            assert!((m - means[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_luminance_gives_zero_correction() {
        let trials: Vec<Trial> = (0..6).map(|i| trial(Some(0.4), 3.0 + i as f64 * 0.1)).collect();
        let fit = pupil_light_reflex_remove(&trials).unwrap();
        assert_eq!(fit.slope, 0.0);
        let mut corrected = trials.clone();
        apply_plr(&mut corrected, &fit);
        assert_eq!(corrected, trials);
    }

    #[test]
    fn needs_five_luminance_trials() {
        let mut trials: Vec<Trial> = (0..4).map(|i| trial(Some(i as f64 / 4.0), 3.0)).collect();
        trials.push(trial(None, 3.0));
        assert!(matches!(
            pupil_light_reflex_remove(&trials),
            Err(Error::InsufficientLuminance { need: 5, got: 4 })
        ));
    }

    #[test]
    fn invalid_eye_is_ignored_in_pupil_mean() {
        let mut t = trial(Some(0.1), 3.0);
        for mut r in t.eye_epoch.rows_mut() {
            r[eye_col::VALID_RIGHT] = 0.0;
            r[eye_col::PUPIL_RIGHT] = 0.0;
        }
        let s = pupil_series(&t.eye_epoch);
        assert!(s.iter().all(|v| (v.unwrap() - 3.0).abs() < 0.02));
    }
}
