//! Domain types for recorded sessions and event-locked epoching.
//!
//! All streams share one clock in integer microseconds. A stream is uniform:
//! sample `i` sits at `start + round(i * 1e6 / rate)`. Epochs are cut at the
//! first sample at or after the event timestamp, without interpolation.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EEG_CHANNELS: [&str; 6] = ["Fp1", "Fp2", "AF3", "AF4", "AF7", "AF8"];
pub const EYE_CHANNELS: [&str; 6] = [
    "pupil_left_mm",
    "pupil_right_mm",
    "gaze_x",
    "gaze_y",
    "valid_left",
    "valid_right",
];
pub const EEG_RATES_HZ: [f64; 2] = [250.0, 500.0];
pub const EYE_RATE_HZ: f64 = 60.0;
pub const DEFAULT_EPOCH_S: f64 = 2.0;
pub const DEFAULT_LIKE_THRESHOLD: i64 = 5;

/// Column indices into an eye epoch.
pub mod eye_col {
    pub const PUPIL_LEFT: usize = 0;
    pub const PUPIL_RIGHT: usize = 1;
    pub const GAZE_X: usize = 2;
    pub const GAZE_Y: usize = 3;
    pub const VALID_LEFT: usize = 4;
    pub const VALID_RIGHT: usize = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "Eye")]
    Eye,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Eeg => "EEG",
            StreamKind::Eye => "Eye",
        }
    }
}

/// One sensor's uniform-rate recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub stream_id: String,
    pub kind: StreamKind,
    pub channel_names: Vec<String>,
    pub sample_rate_hz: f64,
    pub start_timestamp_us: i64,
    /// `[n_samples, n_channels]`
    pub samples: Array2<f64>,
}

impl SampleStream {
    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn timestamp_us(&self, index: usize) -> i64 {
        self.start_timestamp_us + (index as f64 * 1e6 / self.sample_rate_hz).round() as i64
    }

    /// One sample period past the last sample; the span is `[start, end)`.
    pub fn end_timestamp_us(&self) -> i64 {
        self.timestamp_us(self.n_samples())
    }

    pub fn contains(&self, t_us: i64) -> bool {
        t_us >= self.start_timestamp_us && t_us < self.end_timestamp_us()
    }

    /// Index of the first sample whose timestamp is `>= t_us`.
    pub fn first_index_at_or_after(&self, t_us: i64) -> usize {
        let n = self.n_samples();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.timestamp_us(mid) < t_us {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Face,
    Cloth,
    Color,
    Composite,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Face,
        Category::Cloth,
        Category::Color,
        Category::Composite,
        Category::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Face => "face",
            Category::Cloth => "cloth",
            Category::Color => "color",
            Category::Composite => "composite",
            Category::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Like,
    Dislike,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Like => 1.0,
            Label::Dislike => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v > 0.0 {
            Label::Like
        } else {
            Label::Dislike
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Like => Label::Dislike,
            Label::Dislike => Label::Like,
        }
    }
}

/// Axis-aligned rectangle in normalized screen coordinates. Closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.x + self.w && py >= self.y && py <= self.y + self.h
    }

    pub fn within_unit_square(&self) -> bool {
        self.w >= 0.0
            && self.h >= 0.0
            && self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= 1.0 + 1e-12
            && self.y + self.h <= 1.0 + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub name: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub event_id: String,
    pub timestamp_us: i64,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub luminance: Option<f64>,
    #[serde(default)]
    pub rois: Vec<Roi>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl StimulusEvent {
    /// Explicit binary label if present, else the rating binarized at `threshold`.
    pub fn label(&self, threshold: i64) -> Option<Label> {
        self.binary_label
            .or_else(|| self.rating.and_then(|r| binarize_label(r, threshold).ok()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub subject_id: String,
    pub streams: Vec<SampleStream>,
    /// Time-ordered.
    pub events: Vec<StimulusEvent>,
    pub epoch_length_s: f64,
}

impl Session {
    pub fn stream(&self, kind: StreamKind) -> Option<&SampleStream> {
        self.streams.iter().find(|s| s.kind == kind)
    }

    pub fn eeg(&self) -> Result<&SampleStream> {
        self.stream(StreamKind::Eeg).ok_or(Error::MissingStream("EEG"))
    }

    pub fn eye(&self) -> Result<&SampleStream> {
        self.stream(StreamKind::Eye).ok_or(Error::MissingStream("Eye"))
    }

    pub fn event(&self, event_id: &str) -> Option<&StimulusEvent> {
        self.events.iter().find(|e| e.event_id == event_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualityFlag {
    /// EEG window holds fewer samples than a full epoch.
    EegGap,
    /// Eye window is short, or more than half of its samples have no valid eye.
    EyeGap,
    /// Some EEG sample reached the clipping level.
    Clipped,
    /// The epoch window extends past a stream's span.
    OutOfSpan,
}

/// EEG magnitude treated as amplifier saturation.
pub const CLIP_LEVEL_UV: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub event_id: String,
    pub category: Category,
    /// `[n_eeg, 6]`
    pub eeg_epoch: Array2<f64>,
    pub eeg_rate_hz: f64,
    /// `[n_eye, 6]`, see [`eye_col`].
    pub eye_epoch: Array2<f64>,
    pub eye_rate_hz: f64,
    pub label: Option<Label>,
    pub luminance: Option<f64>,
    pub quality_flags: BTreeSet<QualityFlag>,
}

impl Trial {
    pub fn is_usable(&self) -> bool {
        !self.quality_flags.contains(&QualityFlag::EegGap)
            && !self.quality_flags.contains(&QualityFlag::EyeGap)
    }
}

pub fn epoch_samples(epoch_length_s: f64, rate_hz: f64) -> usize {
    (epoch_length_s * rate_hz).round() as usize
}

/// Window of `epoch_samples` starting at the first sample at or after `t_us`.
/// Returns the (possibly truncated) slice and whether the window left the span.
fn window(stream: &SampleStream, t_us: i64, epoch_length_s: f64) -> (Array2<f64>, bool) {
    let want = epoch_samples(epoch_length_s, stream.sample_rate_hz);
    let n = stream.n_samples();
    let start = stream.first_index_at_or_after(t_us);
    let end = (start + want).min(n);
    let out_of_span = t_us < stream.start_timestamp_us || start + want > n;
    let data = stream.samples.slice(s![start..end.max(start), ..]).to_owned();
    (data, out_of_span)
}

pub fn epoch_extract(session: &Session, event: &StimulusEvent) -> Result<Trial> {
    if session.epoch_length_s <= 0.0 || !session.epoch_length_s.is_finite() {
        return Err(Error::InvalidSession(format!(
            "epoch length {} s must be positive",
            session.epoch_length_s
        )));
    }
    let eeg = session.eeg()?;
    let eye = session.eye()?;
    let mut flags = BTreeSet::new();

    let (eeg_epoch, eeg_oos) = window(eeg, event.timestamp_us, session.epoch_length_s);
    let (eye_epoch, eye_oos) = window(eye, event.timestamp_us, session.epoch_length_s);
    if eeg_oos || eye_oos {
        flags.insert(QualityFlag::OutOfSpan);
    }
    if eeg_epoch.nrows() < epoch_samples(session.epoch_length_s, eeg.sample_rate_hz) {
        flags.insert(QualityFlag::EegGap);
    }
    let eye_want = epoch_samples(session.epoch_length_s, eye.sample_rate_hz);
    let eye_invalid = eye_epoch
        .rows()
        .into_iter()
        .filter(|r| {
            r.len() > eye_col::VALID_RIGHT
                && r[eye_col::VALID_LEFT] < 0.5
                && r[eye_col::VALID_RIGHT] < 0.5
        })
        .count();
    if eye_epoch.nrows() < eye_want || 2 * eye_invalid > eye_epoch.nrows() {
        flags.insert(QualityFlag::EyeGap);
    }
    if eeg_epoch.iter().any(|v| v.abs() >= CLIP_LEVEL_UV) {
        flags.insert(QualityFlag::Clipped);
    }

    Ok(Trial {
        event_id: event.event_id.clone(),
        category: event.category,
        eeg_epoch,
        eeg_rate_hz: eeg.sample_rate_hz,
        eye_epoch,
        eye_rate_hz: eye.sample_rate_hz,
        label: event.label(DEFAULT_LIKE_THRESHOLD),
        luminance: event.luminance,
        quality_flags: flags,
    })
}

/// Every event of the session, epoched in event order.
pub fn extract_trials(session: &Session) -> Result<Vec<Trial>> {
    session
        .events
        .iter()
        .map(|e| epoch_extract(session, e))
        .collect()
}

pub fn binarize_label(rating: i64, threshold: i64) -> Result<Label> {
    if !(1..=7).contains(&rating) {
        return Err(Error::OutOfRange(rating));
    }
    Ok(if rating >= threshold {
        Label::Like
    } else {
        Label::Dislike
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    Rate,
    ChannelLayout,
    NonFinite,
    Rating,
    Luminance,
    Roi,
    Span,
    Ordering,
    EpochLength,
    DuplicateId,
    MissingStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Stream id or event id the violation refers to.
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{:?}] {}: {}", self.kind, self.location, self.message)
    }
}

pub fn validate_session(session: &Session) -> Vec<Diagnostic> {
    validate_session_with(session, false)
}

pub fn validate_session_with(session: &Session, allow_any_rate: bool) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |kind, location: &str, message: String| {
        out.push(Diagnostic {
            kind,
            location: location.to_string(),
            message,
        })
    };

    if !(session.epoch_length_s > 0.0 && session.epoch_length_s.is_finite()) {
        diag(
            DiagnosticKind::EpochLength,
            &session.session_id,
            format!("epoch length {} s is not positive", session.epoch_length_s),
        );
    }
    for kind in [StreamKind::Eeg, StreamKind::Eye] {
        if session.stream(kind).is_none() {
            diag(
                DiagnosticKind::MissingStream,
                &session.session_id,
                format!("no {} stream", kind.name()),
            );
        }
    }

    for st in &session.streams {
        let id = st.stream_id.as_str();
        let rate_ok = match st.kind {
            StreamKind::Eeg => EEG_RATES_HZ.contains(&st.sample_rate_hz),
            StreamKind::Eye => st.sample_rate_hz == EYE_RATE_HZ,
        };
        if !(st.sample_rate_hz > 0.0 && st.sample_rate_hz.is_finite()) {
            diag(
                DiagnosticKind::Rate,
                id,
                format!("sample rate {} Hz is not positive", st.sample_rate_hz),
            );
        } else if !rate_ok && !allow_any_rate {
            diag(
                DiagnosticKind::Rate,
                id,
                format!(
                    "{} stream at {} Hz; expected {}",
                    st.kind.name(),
                    st.sample_rate_hz,
                    match st.kind {
                        StreamKind::Eeg => "250 or 500 Hz",
                        StreamKind::Eye => "60 Hz",
                    }
                ),
            );
        }
        let expected: &[&str] = match st.kind {
            StreamKind::Eeg => &EEG_CHANNELS,
            StreamKind::Eye => &EYE_CHANNELS,
        };
        if st.channel_names.iter().map(String::as_str).ne(expected.iter().copied()) {
            diag(
                DiagnosticKind::ChannelLayout,
                id,
                format!("channels {:?}, expected {:?}", st.channel_names, expected),
            );
        }
        if st.samples.ncols() != st.channel_names.len() {
            diag(
                DiagnosticKind::ChannelLayout,
                id,
                format!(
                    "{} sample columns for {} channel names",
                    st.samples.ncols(),
                    st.channel_names.len()
                ),
            );
        }
        if let Some(pos) = st.samples.iter().position(|v| !v.is_finite()) {
            diag(
                DiagnosticKind::NonFinite,
                id,
                format!("non-finite sample at flat index {pos}"),
            );
        }
    }

    let mut seen = HashSet::new();
    let mut prev_t = i64::MIN;
    for ev in &session.events {
        let id = ev.event_id.as_str();
        if !seen.insert(id) {
            diag(DiagnosticKind::DuplicateId, id, "duplicate event id".into());
        }
        if ev.timestamp_us < prev_t {
            diag(
                DiagnosticKind::Ordering,
                id,
                format!("timestamp {} precedes previous {}", ev.timestamp_us, prev_t),
            );
        }
        prev_t = prev_t.max(ev.timestamp_us);
        if let Some(r) = ev.rating {
            if !(1..=7).contains(&r) {
                diag(DiagnosticKind::Rating, id, format!("rating {r} outside 1..=7"));
            }
        }
        if let Some(l) = ev.luminance {
            if !(0.0..=1.0).contains(&l) {
                diag(
                    DiagnosticKind::Luminance,
                    id,
                    format!("luminance {l} outside [0,1]"),
                );
            }
        }
        let mut names = HashSet::new();
        for roi in &ev.rois {
            if !roi.rect.within_unit_square() {
                diag(
                    DiagnosticKind::Roi,
                    id,
                    format!("ROI `{}` leaves the unit square", roi.name),
                );
            }
            if !names.insert(roi.name.as_str()) {
                diag(
                    DiagnosticKind::Roi,
                    id,
                    format!("duplicate ROI name `{}`", roi.name),
                );
            }
        }
        for st in &session.streams {
            if !st.contains(ev.timestamp_us) {
                diag(
                    DiagnosticKind::Span,
                    id,
                    format!(
                        "timestamp {} outside stream `{}` span [{}, {})",
                        ev.timestamp_us,
                        st.stream_id,
                        st.start_timestamp_us,
                        st.end_timestamp_us()
                    ),
                );
            }
        }
    }
    out
}
