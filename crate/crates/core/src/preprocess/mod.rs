//! EEG cleaning and pupil luminance correction.
//!
//! The chain runs on one session: the continuous EEG is band-passed and
//! notched, an ICA decomposition is fitted on the whole recording, and then
//! each epoch is remixed without the rejected components, despiked in the
//! wavelet domain and passed on. Pupil diameter is corrected for stimulus
//! luminance across trials.

mod despike;
mod ica;
mod plr;

pub use despike::{wavelet_despike, DespikeConfig};
pub use ica::{fit_ica, ica_artifact_reject, ComponentStats, FittedIca, IcaConfig};
pub use plr::{apply_plr, pupil_light_reflex_remove, pupil_series, PlrFit};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dsp::filter::{butterworth_highpass, butterworth_lowpass, notch, SosChain};
use crate::error::{Error, Result};
use crate::model::{extract_trials, Session, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub filter_order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            band_low_hz: 0.01,
            band_high_hz: 120.0,
            notch_hz: 60.0,
            notch_q: 30.0,
            filter_order: 4,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        if rate_hz < 2.0 * self.band_high_hz {
            return Err(Error::NyquistViolation {
                cutoff_hz: self.band_high_hz,
                rate_hz,
            });
        }
        if !(self.band_low_hz > 0.0 && self.band_low_hz < self.band_high_hz) {
            return Err(Error::InvalidFilter(format!(
                "band {}-{} Hz must satisfy 0 < low < high",
                self.band_low_hz, self.band_high_hz
            )));
        }
        if !(self.notch_hz > self.band_low_hz && self.notch_hz < self.band_high_hz) {
            return Err(Error::InvalidFilter(format!(
                "notch {} Hz outside the pass band",
                self.notch_hz
            )));
        }
        if self.notch_q <= 0.0 {
            return Err(Error::InvalidFilter("notch Q must be positive".into()));
        }
        if self.filter_order < 2 || !self.filter_order.is_multiple_of(2) {
            return Err(Error::InvalidFilter(format!(
                "filter order {} must be even and >= 2",
                self.filter_order
            )));
        }
        Ok(())
    }

    /// High-pass, low-pass and notch sections in application order.
    pub fn chain(&self, rate_hz: f64) -> Result<SosChain> {
        self.validate(rate_hz)?;
        let mut sections = butterworth_highpass(self.filter_order, self.band_low_hz, rate_hz);
        // The low-pass edge may sit at Nyquist exactly, where the bilinear map degenerates.
        if self.band_high_hz < rate_hz / 2.0 {
            sections.extend(butterworth_lowpass(
                self.filter_order,
                self.band_high_hz,
                rate_hz,
            ));
        }
        sections.push(notch(self.notch_hz, self.notch_q, rate_hz));
        Ok(SosChain::new(sections))
    }
}

/// Zero-phase band-pass + notch applied to every column of `[n_samples, n_channels]`.
pub fn bandpass_notch(epoch: ArrayView2<f64>, rate_hz: f64, spec: &FilterSpec) -> Result<Array2<f64>> {
    let chain = spec.chain(rate_hz)?;
    let mut out = Array2::zeros(epoch.raw_dim());
    for (src, mut dst) in epoch.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        let y = chain.filtfilt(&src.to_vec());
        dst.assign(&ndarray::ArrayView1::from(&y));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactReport {
    pub n_components_removed: usize,
    pub removed_indices: Vec<usize>,
    /// Clipped wavelet coefficients per channel, summed over all epochs.
    pub despiked_coefficients: Vec<usize>,
    pub ica_converged: bool,
    pub ica_iterations: usize,
    pub components: Vec<ComponentStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub filter_applied: bool,
    pub ica_applied: bool,
    pub despike_applied: bool,
    pub plr_applied: bool,
    pub artifacts: Option<ArtifactReport>,
    pub plr: Option<PlrFit>,
    /// Set when luminance correction was requested but could not be fitted.
    pub plr_skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub filter: FilterSpec,
    pub ica: IcaConfig,
    pub despike: DespikeConfig,
    pub enable_filter: bool,
    pub enable_ica: bool,
    pub enable_despike: bool,
    pub enable_plr: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            ica: IcaConfig::default(),
            despike: DespikeConfig::default(),
            enable_filter: true,
            enable_ica: true,
            enable_despike: true,
            enable_plr: true,
        }
    }
}

/// Runs the full chain on a session and returns cleaned, event-ordered trials.
pub fn preprocess_session(session: &Session, cfg: &PreprocessConfig) -> Result<(Vec<Trial>, PreprocessReport)> {
    let eeg = session.eeg()?;
    let rate = eeg.sample_rate_hz;
    let continuous = if cfg.enable_filter {
        bandpass_notch(eeg.samples.view(), rate, &cfg.filter)
            .map_err(|e| e.at_stage("filter", None))?
    } else {
        eeg.samples.clone()
    };

    let mut filtered = session.clone();
    if let Some(st) = filtered.streams.iter_mut().find(|s| s.kind == eeg.kind) {
        st.samples = continuous;
    }
    let mut trials = extract_trials(&filtered)?;

    let mut artifacts = None;
    if cfg.enable_ica || cfg.enable_despike {
        let mut report = ArtifactReport {
            n_components_removed: 0,
            removed_indices: vec![],
            despiked_coefficients: vec![0; eeg.channel_names.len()],
            ica_converged: true,
            ica_iterations: 0,
            components: vec![],
        };
        if cfg.enable_ica {
            let st = filtered.eeg()?;
            let (ica, fit) = fit_ica(st.samples.view(), rate, &cfg.ica)
                .map_err(|e| e.at_stage("ica", None))?;
            report.n_components_removed = fit.n_components_removed;
            report.removed_indices = fit.removed_indices;
            report.ica_converged = fit.ica_converged;
            report.ica_iterations = fit.ica_iterations;
            report.components = fit.components;
            for t in trials.iter_mut() {
                if t.eeg_epoch.nrows() > 0 {
                    t.eeg_epoch = ica.apply(t.eeg_epoch.view());
                }
            }
        }
        if cfg.enable_despike {
            for t in trials.iter_mut() {
                if t.eeg_epoch.nrows() < (1 << cfg.despike.levels) {
                    continue;
                }
                for (c, mut col) in t.eeg_epoch.axis_iter_mut(Axis(1)).enumerate() {
                    let (y, n) = wavelet_despike(&col.to_vec(), &cfg.despike)
                        .map_err(|e| e.at_stage("despike", Some(&t.event_id)))?;
                    col.assign(&ndarray::ArrayView1::from(&y));
                    report.despiked_coefficients[c] += n;
                }
            }
        }
        artifacts = Some(report);
    }

    let mut plr = None;
    let mut plr_skipped_reason = None;
    if cfg.enable_plr {
        match pupil_light_reflex_remove(&trials) {
            Ok(fit) => {
                apply_plr(&mut trials, &fit);
                plr = Some(fit);
            }
            Err(e @ Error::InsufficientLuminance { .. }) => {
                log::warn!("skipping pupil luminance correction: {e}");
                plr_skipped_reason = Some(e.to_string());
            }
            Err(e) => return Err(e.at_stage("plr", None)),
        }
    }

    Ok((
        trials,
        PreprocessReport {
            filter_applied: cfg.enable_filter,
            ica_applied: cfg.enable_ica,
            despike_applied: cfg.enable_despike,
            plr_applied: plr.is_some(),
            artifacts,
            plr,
            plr_skipped_reason,
        },
    ))
}
