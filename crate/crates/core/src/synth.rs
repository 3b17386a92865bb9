//! Seeded synthetic sessions with a planted like/dislike signature.
//!
//! EEG is amplitude-modulated pink noise (flat below 1 Hz, 1/f above) plus a 10 Hz alpha rhythm,
//! 60 Hz line noise and blink transients on the frontal channels. Eye data is a
//! first-order pupil response to stimulus luminance, fixation/saccade gaze
//! paths over the stimulus ROIs, and blink dropouts. On Like trials the alpha
//! power on AF3/AF4 rises by `alpha_power_delta * effect_size` and the pupil
//! dilates by `pupil_dilation_mm * effect_size` while the stimulus is shown.
//! The signature is synthetic and exists only to give the pipeline a known
//! answer.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analysis::Composition;
use crate::error::{Error, Result};
use crate::io::write_session;
use crate::model::{
    Category, Label, Rect, Roi, SampleStream, Session, StimulusEvent, StreamKind, EEG_CHANNELS, EYE_CHANNELS,
    EYE_RATE_HZ,
};

pub const TRUTH_FILE: &str = "truth.json";
const START_US: i64 = 1_000_000_000;
const EYE_OFFSET_US: i64 = 4_000;
const LEAD_S: f64 = 3.0;
const BLANK_LUMINANCE: f64 = 0.5;
const PUPIL_TAU_S: f64 = 0.02;
const ENVELOPE_TAU_S: f64 = 2.0;
const ENVELOPE_SD: f64 = 0.4;
const COMPOSITE_WEIGHTS: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_face: usize,
    pub n_cloth: usize,
    pub n_color: usize,
    pub n_composite: usize,
    pub n_subjects: usize,
    /// Scales the planted Like signature; 0 makes signals label-independent.
    pub effect_size: f64,
    pub eeg_rate_hz: f64,
    pub pink_rms_uv: f64,
    pub line_amplitude_uv: f64,
    pub blink_rate_hz: f64,
    pub blink_amplitude_uv: f64,
    pub alpha_amplitude_uv: f64,
    /// Relative sd of the per-trial alpha amplitude.
    pub alpha_jitter: f64,
    pub alpha_power_delta: f64,
    pub pupil_baseline_mm: f64,
    /// mm per unit luminance (negative: constriction).
    pub reflex_gain_mm: f64,
    pub pupil_dilation_mm: f64,
    pub pupil_trial_sd_mm: f64,
    pub epoch_length_s: f64,
    pub isi_min_s: f64,
    pub isi_max_s: f64,
    /// sd of each subject's taste around the shared image appeal.
    pub taste_sd: f64,
    pub composite_noise_sd: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_face: 30,
            n_cloth: 30,
            n_color: 30,
            n_composite: 54,
            n_subjects: 13,
            effect_size: 1.0,
            eeg_rate_hz: 250.0,
            pink_rms_uv: 10.0,
            line_amplitude_uv: 5.0,
            blink_rate_hz: 0.25,
            blink_amplitude_uv: 100.0,
            alpha_amplitude_uv: 8.0,
            alpha_jitter: 0.05,
            alpha_power_delta: 0.4,
            pupil_baseline_mm: 3.5,
            reflex_gain_mm: -0.8,
            pupil_dilation_mm: 0.4,
            pupil_trial_sd_mm: 0.05,
            epoch_length_s: 2.0,
            isi_min_s: 4.0,
            isi_max_s: 4.5,
            taste_sd: 0.7,
            composite_noise_sd: 0.3,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("pink_rms_uv", self.pink_rms_uv),
            ("line_amplitude_uv", self.line_amplitude_uv),
            ("blink_rate_hz", self.blink_rate_hz),
            ("blink_amplitude_uv", self.blink_amplitude_uv),
            ("alpha_amplitude_uv", self.alpha_amplitude_uv),
            ("alpha_jitter", self.alpha_jitter),
            ("alpha_power_delta", self.alpha_power_delta),
            ("pupil_dilation_mm", self.pupil_dilation_mm),
            ("pupil_trial_sd_mm", self.pupil_trial_sd_mm),
            ("taste_sd", self.taste_sd),
            ("composite_noise_sd", self.composite_noise_sd),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.effect_size) {
            return Err(Error::InvalidConfig(format!(
                "effect_size {} outside [0, 1]",
                self.effect_size
            )));
        }
        if !(self.pupil_baseline_mm > 0.0) {
            return Err(Error::InvalidConfig("pupil baseline must be positive".into()));
        }
        if !(self.eeg_rate_hz > 0.0) || !(self.epoch_length_s > 0.0) {
            return Err(Error::InvalidConfig("rates and epoch length must be positive".into()));
        }
        if !(self.isi_min_s >= self.epoch_length_s && self.isi_max_s >= self.isi_min_s) {
            return Err(Error::InvalidConfig(
                "inter-stimulus interval must cover the epoch and satisfy min <= max".into(),
            ));
        }
        if self.n_face + self.n_cloth + self.n_color + self.n_composite == 0 {
            return Err(Error::InvalidConfig("no stimuli".into()));
        }
        if self.n_composite > 0 && (self.n_face == 0 || self.n_cloth == 0 || self.n_color == 0) {
            return Err(Error::InvalidConfig("composites need face, cloth and color images".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTruth {
    pub category: Category,
    /// Appeal shared by all subjects.
    pub appeal: f64,
    pub image_sex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub session_id: String,
    pub subject_id: String,
    pub viewer_sex: String,
    /// Subject-specific attraction score per event; Like iff score >= 0.
    pub scores: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, Label>,
    pub ratings: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTruth {
    pub config: GeneratorConfig,
    pub images: BTreeMap<String, ImageTruth>,
    pub composition: BTreeMap<String, Composition>,
    pub subjects: Vec<SessionTruth>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    pub truth: CorpusTruth,
}

fn image_set(cfg: &GeneratorConfig) -> (BTreeMap<String, ImageTruth>, BTreeMap<String, Composition>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut images = BTreeMap::new();
    let sex = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { "female" } else { "male" }.to_string();
    let groups = [
        (Category::Face, "face", cfg.n_face),
        (Category::Cloth, "cloth", cfg.n_cloth),
        (Category::Color, "color", cfg.n_color),
    ];
    let mut ids: Vec<Vec<String>> = Vec::new();
    for (cat, prefix, n) in groups {
        let mut v = Vec::new();
        for i in 0..n {
            let id = format!("{prefix}_{i:02}");
            let appeal: f64 = rng.sample(StandardNormal);
            let image_sex = sex(&mut rng);
            images.insert(
                id.clone(),
                ImageTruth {
                    category: cat,
                    appeal,
                    image_sex,
                },
            );
            v.push(id);
        }
        ids.push(v);
    }
    let mut composition = BTreeMap::new();
    for i in 0..cfg.n_composite {
        let id = format!("comp_{i:02}");
        let c = Composition {
            face: ids[0][rng.random_range(0..ids[0].len())].clone(),
            cloth: ids[1][rng.random_range(0..ids[1].len())].clone(),
            color: ids[2][rng.random_range(0..ids[2].len())].clone(),
        };
        let parts = [&c.face, &c.cloth, &c.color];
        let noise: f64 = rng.sample(StandardNormal);
        let appeal = parts
            .iter()
            .zip(COMPOSITE_WEIGHTS)
            .map(|(p, w)| w * images[*p].appeal)
            .sum::<f64>()
            + cfg.composite_noise_sd * noise;
        let image_sex = images[&c.face].image_sex.clone();
        images.insert(
            id.clone(),
            ImageTruth {
                category: Category::Composite,
                appeal,
                image_sex,
            },
        );
        composition.insert(id, c);
    }
    (images, composition)
}

fn rois_for(cat: Category) -> Vec<Roi> {
    let roi = |name: &str, x, y, w, h| Roi {
        name: name.into(),
        rect: Rect { x, y, w, h },
    };
    let face = roi("face", 0.4, 0.05, 0.2, 0.25);
    let clothes = roi("clothes", 0.35, 0.35, 0.3, 0.55);
    let color = roi("color", 0.0, 0.0, 0.25, 1.0);
    match cat {
        Category::Face => vec![roi("face", 0.3, 0.2, 0.4, 0.6)],
        Category::Cloth => vec![roi("clothes", 0.25, 0.15, 0.5, 0.75)],
        Category::Color => vec![roi("color", 0.1, 0.1, 0.8, 0.8)],
        Category::Composite | Category::Other => vec![face, clothes, color],
    }
}

/// Pink noise with a flat spectrum below 1 Hz, scaled to unit RMS.
pub fn pink_noise(n: usize, rate_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = k.min(n - k);
        let f = kk as f64 * rate_hz / n as f64;
        *c *= 1.0 / f.max(1.0).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let m = x.iter().sum::<f64>() / n as f64;
    let rms = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    x.iter().map(|v| (v - m) / rms).collect()
}

/// Slow log-normal amplitude envelope applied to unit-RMS noise; keeps the
/// background non-Gaussian so that ICA has a well-defined solution.
fn bursty(x: &[f64], rate_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rho = (-1.0 / (rate_hz * ENVELOPE_TAU_S)).exp();
    let innov = (1.0 - rho * rho).sqrt();
    let mut u: f64 = rng.sample(StandardNormal);
    let y: Vec<f64> = x
        .iter()
        .map(|v| {
            u = rho * u + innov * rng.sample::<f64, _>(StandardNormal);
            v * (ENVELOPE_SD * u).exp()
        })
        .collect();
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt();
    y.iter().map(|v| v / rms.max(f64::MIN_POSITIVE)).collect()
}

struct Shown {
    onset_s: f64,
    end_s: f64,
    luminance: f64,
    like: bool,
    rois: Vec<Roi>,
    alpha_gain: f64,
    pupil_offset: f64,
}

fn shown_at(shown: &[Shown], t: f64) -> Option<&Shown> {
    let i = shown.partition_point(|s| s.onset_s <= t);
    (i > 0 && t < shown[i - 1].end_s).then(|| &shown[i - 1])
}

fn subject_rating(score: f64) -> i64 {
    ((4.5 + 1.5 * score).round() as i64).clamp(1, 7)
}

fn generate_subject(
    cfg: &GeneratorConfig,
    subject: usize,
    images: &BTreeMap<String, ImageTruth>,
    composition: &BTreeMap<String, Composition>,
) -> (Session, SessionTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(subject as u64);
    let session_id = format!("subject_{:02}", subject + 1);
    let viewer_sex = if subject.is_multiple_of(2) { "male" } else { "female" }.to_string();

    let mut order: Vec<&String> = images.keys().collect();
    order.shuffle(&mut rng);

    let taste = Normal::new(0.0, cfg.taste_sd.max(1e-300)).expect("finite sd");
    let mut truth = SessionTruth {
        session_id: session_id.clone(),
        subject_id: format!("P{:02}", subject + 1),
        viewer_sex: viewer_sex.clone(),
        scores: BTreeMap::new(),
        labels: BTreeMap::new(),
        ratings: BTreeMap::new(),
    };
    // A subject's taste attaches to component images; composites inherit it
    // through the same weights as their appeal.
    let mut scores: BTreeMap<&String, f64> = BTreeMap::new();
    for (id, img) in images.iter().filter(|(id, _)| !composition.contains_key(*id)) {
        let t = if cfg.taste_sd > 0.0 { taste.sample(&mut rng) } else { 0.0 };
        scores.insert(id, img.appeal + t);
    }
    for (id, c) in composition {
        let parts = [&c.face, &c.cloth, &c.color];
        let planted: f64 = parts.iter().zip(COMPOSITE_WEIGHTS).map(|(p, w)| w * images[*p].appeal).sum();
        let personal: f64 = parts.iter().zip(COMPOSITE_WEIGHTS).map(|(p, w)| w * scores[*p]).sum();
        scores.insert(id, images[id].appeal - planted + personal);
    }
    let e = cfg.effect_size;
    let display_s = cfg.epoch_length_s + 0.5;
    let mut events = Vec::with_capacity(order.len());
    let mut shown = Vec::with_capacity(order.len());
    let mut t = LEAD_S;
    for id in order {
        let img = &images[id];
        let score = scores[id];
        let rating = subject_rating(score);
        let label = if rating >= crate::model::DEFAULT_LIKE_THRESHOLD {
            Label::Like
        } else {
            Label::Dislike
        };
        let like = label == Label::Like;
        let luminance = rng.random_range(0.1..0.9);
        let jitter: f64 = rng.sample(StandardNormal);
        let pupil_noise: f64 = rng.sample(StandardNormal);
        let mut alpha_gain = (1.0 + cfg.alpha_jitter * jitter).max(0.0);
        if like {
            alpha_gain *= (1.0 + cfg.alpha_power_delta * e).sqrt();
        }
        let pupil_offset = cfg.pupil_trial_sd_mm * pupil_noise + if like { cfg.pupil_dilation_mm * e } else { 0.0 };
        let rois = rois_for(img.category);
        let mut metadata = BTreeMap::new();
        metadata.insert("viewer_sex".to_string(), viewer_sex.clone());
        metadata.insert("image_sex".to_string(), img.image_sex.clone());
        if let Some(c) = composition.get(id) {
            metadata.insert("face_id".into(), c.face.clone());
            metadata.insert("cloth_id".into(), c.cloth.clone());
            metadata.insert("color_id".into(), c.color.clone());
        }
        events.push(StimulusEvent {
            event_id: id.clone(),
            timestamp_us: START_US + (t * 1e6).round() as i64,
            category: img.category,
            rating: Some(rating),
            binary_label: None,
            luminance: Some(luminance),
            rois: rois.clone(),
            metadata,
        });
        shown.push(Shown {
            onset_s: t,
            end_s: t + display_s,
            luminance,
            like,
            rois,
            alpha_gain,
            pupil_offset,
        });
        truth.scores.insert(id.clone(), score);
        truth.labels.insert(id.clone(), label);
        truth.ratings.insert(id.clone(), rating);
        t += rng.random_range(cfg.isi_min_s..=cfg.isi_max_s);
    }
    let duration_s = t - cfg.isi_min_s + display_s + LEAD_S;

    let eeg = eeg_stream(cfg, &shown, duration_s, &mut rng);
    let (eye, blinks) = eye_stream(cfg, &shown, duration_s, &mut rng);
    let eeg = add_blinks(cfg, eeg, &blinks);

    let session = Session {
        session_id,
        subject_id: truth.subject_id.clone(),
        streams: vec![eeg, eye],
        events,
        epoch_length_s: cfg.epoch_length_s,
    };
    (session, truth)
}

const ALPHA_WEIGHTS: [f64; 6] = [0.5, 0.5, 1.0, 1.0, 0.7, 0.7];
const BLINK_WEIGHTS: [f64; 6] = [1.0, 1.0, 0.3, 0.3, 0.5, 0.5];
const MODULATED: [bool; 6] = [false, false, true, true, false, false];

fn eeg_stream(cfg: &GeneratorConfig, shown: &[Shown], duration_s: f64, rng: &mut ChaCha8Rng) -> SampleStream {
    let rate = cfg.eeg_rate_hz;
    let n = (duration_s * rate).round() as usize;
    let mut x = Array2::<f64>::zeros((n, 6));
    for c in 0..6 {
        let noise = bursty(&pink_noise(n, rate, rng), rate, rng);
        let line_phase = rng.random_range(0.0..2.0 * PI);
        for i in 0..n {
            let t = i as f64 / rate;
            x[[i, c]] = cfg.pink_rms_uv * noise[i] + cfg.line_amplitude_uv * (2.0 * PI * 60.0 * t + line_phase).sin();
        }
    }
    let mut phase = rng.random_range(0.0..2.0 * PI);
    for i in 0..n {
        let t = i as f64 / rate;
        phase += 2.0 * PI * 10.0 / rate;
        let s = cfg.alpha_amplitude_uv * phase.sin();
        let (base, like_gain) = match shown_at(shown, t) {
            Some(sh) => {
                let plain = sh.alpha_gain
                    / if sh.like {
                        (1.0 + cfg.alpha_power_delta * cfg.effect_size).sqrt()
                    } else {
                        1.0
                    };
                (plain, sh.alpha_gain)
            }
            None => (1.0, 1.0),
        };
        for c in 0..6 {
            let g = if MODULATED[c] { like_gain } else { base };
            x[[i, c]] += ALPHA_WEIGHTS[c] * g * s;
        }
    }
    SampleStream {
        stream_id: "eeg".into(),
        kind: StreamKind::Eeg,
        channel_names: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
        sample_rate_hz: rate,
        start_timestamp_us: START_US,
        samples: x,
    }
}

fn add_blinks(cfg: &GeneratorConfig, mut eeg: SampleStream, blinks: &[f64]) -> SampleStream {
    let rate = eeg.sample_rate_hz;
    let sigma = 0.05;
    let half = (4.0 * sigma * rate).ceil() as i64;
    let n = eeg.n_samples() as i64;
    for &center in blinks {
        let ci = (center * rate).round() as i64;
        for i in (ci - half).max(0)..(ci + half + 1).min(n) {
            let dt = i as f64 / rate - center;
            let bump = cfg.blink_amplitude_uv * (-0.5 * (dt / sigma).powi(2)).exp();
            for c in 0..6 {
                eeg.samples[[i as usize, c]] += BLINK_WEIGHTS[c] * bump;
            }
        }
    }
    eeg
}

/// Eye stream plus blink centre times in seconds (stream-relative to the EEG start).
fn eye_stream(cfg: &GeneratorConfig, shown: &[Shown], duration_s: f64, rng: &mut ChaCha8Rng) -> (SampleStream, Vec<f64>) {
    let rate = EYE_RATE_HZ;
    let offset_s = EYE_OFFSET_US as f64 / 1e6;
    let n = ((duration_s - offset_s) * rate).floor() as usize;
    let mut x = Array2::<f64>::zeros((n, 6));

    let mut blinks = Vec::new();
    if cfg.blink_rate_hz > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            t += -u.ln() / cfg.blink_rate_hz;
            if t >= duration_s - 0.2 {
                break;
            }
            blinks.push(t);
        }
    }
    let blink_half_s = 0.075;

    let mut pupil = cfg.pupil_baseline_mm + cfg.reflex_gain_mm * BLANK_LUMINANCE;
    let k = 1.0 - (-1.0 / (rate * PUPIL_TAU_S)).exp();
    let mut fix_left = 0usize;
    let mut target = (0.5, 0.5);
    let mut prev = target;
    let mut saccade_left = 0usize;
    let mut bi = 0usize;
    for i in 0..n {
        let t = offset_s + i as f64 / rate;
        let sh = shown_at(shown, t);
        let lum = sh.map_or(BLANK_LUMINANCE, |s| s.luminance);
        let level = cfg.pupil_baseline_mm + cfg.reflex_gain_mm * lum + sh.map_or(0.0, |s| s.pupil_offset);
        pupil += k * (level - pupil);

        if fix_left == 0 {
            prev = target;
            target = gaze_target(sh.map(|s| s.rois.as_slice()), rng);
            fix_left = rng.random_range(12..36);
            saccade_left = 2;
        }
        fix_left -= 1;
        let (gx, gy) = if saccade_left > 0 {
            let f = (3 - saccade_left) as f64 / 3.0;
            saccade_left -= 1;
            (prev.0 + f * (target.0 - prev.0), prev.1 + f * (target.1 - prev.1))
        } else {
            let jx: f64 = rng.sample(StandardNormal);
            let jy: f64 = rng.sample(StandardNormal);
            ((target.0 + 0.002 * jx).clamp(0.0, 1.0), (target.1 + 0.002 * jy).clamp(0.0, 1.0))
        };

        while bi < blinks.len() && blinks[bi] + blink_half_s < t {
            bi += 1;
        }
        let blinking = bi < blinks.len() && (blinks[bi] - t).abs() <= blink_half_s;
        let nl: f64 = rng.sample(StandardNormal);
        let nr: f64 = rng.sample(StandardNormal);
        if blinking {
            x.row_mut(i).assign(&ndarray::arr1(&[0.0, 0.0, gx, gy, 0.0, 0.0]));
        } else {
            x.row_mut(i).assign(&ndarray::arr1(&[
                pupil + 0.02 * nl,
                pupil + 0.05 + 0.02 * nr,
                gx,
                gy,
                1.0,
                1.0,
            ]));
        }
    }
    (
        SampleStream {
            stream_id: "eye".into(),
            kind: StreamKind::Eye,
            channel_names: EYE_CHANNELS.iter().map(|s| s.to_string()).collect(),
            sample_rate_hz: rate,
            start_timestamp_us: START_US + EYE_OFFSET_US,
            samples: x,
        },
        blinks,
    )
}

fn gaze_target(rois: Option<&[Roi]>, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match rois {
        Some(r) if !r.is_empty() && rng.random::<f64>() < 0.85 => {
            let roi = &r[rng.random_range(0..r.len())].rect;
            (
                roi.x + roi.w * rng.random_range(0.1..0.9),
                roi.y + roi.h * rng.random_range(0.1..0.9),
            )
        }
        _ => (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)),
    }
}

/// One subject's session (subject index 0 of the corpus defined by `cfg`).
pub fn generate_session(cfg: &GeneratorConfig) -> Result<(Session, SessionTruth)> {
    generate_subject_session(cfg, 0)
}

pub fn generate_subject_session(cfg: &GeneratorConfig, subject: usize) -> Result<(Session, SessionTruth)> {
    cfg.validate()?;
    let (images, composition) = image_set(cfg);
    Ok(generate_subject(cfg, subject, &images, &composition))
}

pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Corpus> {
    cfg.validate()?;
    if cfg.n_subjects == 0 {
        return Err(Error::InvalidConfig("n_subjects must be >= 1".into()));
    }
    let (images, composition) = image_set(cfg);
    let pairs: Vec<(Session, SessionTruth)> = (0..cfg.n_subjects)
        .into_par_iter()
        .map(|s| generate_subject(cfg, s, &images, &composition))
        .collect();
    let (sessions, subjects) = pairs.into_iter().unzip();
    Ok(Corpus {
        sessions,
        truth: CorpusTruth {
            config: cfg.clone(),
            images,
            composition,
            subjects,
        },
    })
}

/// `<dir>/<session_id>/...` per session plus `<dir>/truth.json`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in &corpus.sessions {
        write_session(s, &dir.join(&s.session_id))?;
    }
    std::fs::write(
        dir.join(TRUTH_FILE),
        serde_json::to_string_pretty(&corpus.truth)? + "\n",
    )?;
    Ok(())
}

/// Logistic of each subject score: a posterior that carries the planted
/// composite structure exactly.
pub fn planted_posteriors(truth: &SessionTruth) -> BTreeMap<String, f64> {
    truth
        .scores
        .iter()
        .map(|(k, s)| (k.clone(), 1.0 / (1.0 + (-s).exp())))
        .collect()
}
