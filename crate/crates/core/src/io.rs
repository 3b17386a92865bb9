//! Session directory format.
//!
//! ```text
//! <dir>/session.json   ids, stream rates/starts, epoch length
//! <dir>/eeg.csv        timestamp_us,Fp1,Fp2,AF3,AF4,AF7,AF8
//! <dir>/eye.csv        timestamp_us,pupil_left_mm,pupil_right_mm,gaze_x,gaze_y,valid_left,valid_right
//! <dir>/events.jsonl   one StimulusEvent per line
//! ```
//!
//! Missing values (`NaN` or empty cells) are linearly interpolated when they
//! form runs of at most [`MAX_NAN_RUN`] samples; longer runs fail ingest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_session_with, DiagnosticKind, SampleStream, Session, StimulusEvent, StreamKind,
    EEG_CHANNELS, EYE_CHANNELS,
};

pub const MAX_NAN_RUN: usize = 3;
pub const SESSION_FILE: &str = "session.json";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub allow_any_rate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamHeader {
    stream_id: String,
    kind: StreamKind,
    file: String,
    sample_rate_hz: f64,
    start_timestamp_us: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionHeader {
    session_id: String,
    subject_id: String,
    epoch_length_s: f64,
    streams: Vec<StreamHeader>,
}

fn stream_file(kind: StreamKind) -> &'static str {
    match kind {
        StreamKind::Eeg => "eeg.csv",
        StreamKind::Eye => "eye.csv",
    }
}

fn expected_channels(kind: StreamKind) -> &'static [&'static str] {
    match kind {
        StreamKind::Eeg => &EEG_CHANNELS,
        StreamKind::Eye => &EYE_CHANNELS,
    }
}

pub fn write_session(session: &Session, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = SessionHeader {
        session_id: session.session_id.clone(),
        subject_id: session.subject_id.clone(),
        epoch_length_s: session.epoch_length_s,
        streams: session
            .streams
            .iter()
            .map(|s| StreamHeader {
                stream_id: s.stream_id.clone(),
                kind: s.kind,
                file: stream_file(s.kind).to_string(),
                sample_rate_hz: s.sample_rate_hz,
                start_timestamp_us: s.start_timestamp_us,
            })
            .collect(),
    };
    let mut f = BufWriter::new(File::create(dir.join(SESSION_FILE))?);
    serde_json::to_writer_pretty(&mut f, &header)?;
    writeln!(f)?;
    f.flush()?;

    for stream in &session.streams {
        write_stream_csv(stream, &dir.join(stream_file(stream.kind)))?;
    }

    let mut f = BufWriter::new(File::create(dir.join(EVENTS_FILE))?);
    for ev in &session.events {
        serde_json::to_writer(&mut f, ev)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

fn write_stream_csv(stream: &SampleStream, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp_us".to_string()];
    header.extend(stream.channel_names.iter().cloned());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (i, row) in stream.samples.rows().into_iter().enumerate() {
        rec.clear();
        rec.push(stream.timestamp_us(i).to_string());
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_session(dir: &Path, opts: IngestOptions) -> Result<Session> {
    let header_path = dir.join(SESSION_FILE);
    let header: SessionHeader = serde_json::from_reader(BufReader::new(
        File::open(&header_path).map_err(|e| {
            Error::ingest(header_path.display().to_string(), e.to_string())
        })?,
    ))?;

    let mut streams = Vec::with_capacity(header.streams.len());
    for sh in &header.streams {
        streams.push(read_stream_csv(dir, sh)?);
    }

    let events_path = dir.join(EVENTS_FILE);
    let f = File::open(&events_path)
        .map_err(|e| Error::ingest(events_path.display().to_string(), e.to_string()))?;
    let mut events = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: StimulusEvent = serde_json::from_str(&line).map_err(|e| {
            Error::ingest(EVENTS_FILE, format!("line {}: {e}", lineno + 1))
        })?;
        events.push(ev);
    }

    let session = Session {
        session_id: header.session_id,
        subject_id: header.subject_id,
        streams,
        events,
        epoch_length_s: header.epoch_length_s,
    };

    // Rate and layout violations are fatal at ingest; span issues stay diagnostics.
    for d in validate_session_with(&session, opts.allow_any_rate) {
        if matches!(
            d.kind,
            DiagnosticKind::Rate | DiagnosticKind::ChannelLayout | DiagnosticKind::NonFinite
        ) {
            return Err(Error::ingest(d.location.clone(), d.message));
        }
    }
    Ok(session)
}

fn read_stream_csv(dir: &Path, sh: &StreamHeader) -> Result<SampleStream> {
    let path = dir.join(&sh.file);
    let fname = sh.file.clone();
    let mut rdr = csv::Reader::from_path(&path)
        .map_err(|e| Error::ingest(path.display().to_string(), e.to_string()))?;
    let headers = rdr.headers()?.clone();
    let expected = expected_channels(sh.kind);
    if headers.get(0) != Some("timestamp_us")
        || headers.iter().skip(1).ne(expected.iter().copied())
    {
        return Err(Error::ingest(
            fname,
            format!(
                "header {:?}, expected timestamp_us,{}",
                headers.iter().collect::<Vec<_>>(),
                expected.join(",")
            ),
        ));
    }
    if !(sh.sample_rate_hz > 0.0 && sh.sample_rate_hz.is_finite()) {
        return Err(Error::ingest(fname, "sample rate must be positive"));
    }
    let n_ch = expected.len();
    let period_us = 1e6 / sh.sample_rate_hz;
    let mut flat = Vec::new();
    let mut prev_ts = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n_ch + 1 {
            return Err(Error::ingest(
                &fname,
                format!("row {}: {} fields, expected {}", i + 1, rec.len(), n_ch + 1),
            ));
        }
        let ts: i64 = rec[0].trim().parse().map_err(|_| {
            Error::ingest(&fname, format!("row {}: bad timestamp `{}`", i + 1, &rec[0]))
        })?;
        if let Some(p) = prev_ts {
            if ts <= p {
                return Err(Error::ingest(
                    &fname,
                    format!("row {}: timestamps not strictly increasing", i + 1),
                ));
            }
        }
        prev_ts = Some(ts);
        let implied = sh.start_timestamp_us as f64 + i as f64 * period_us;
        if (ts as f64 - implied).abs() > period_us / 2.0 {
            return Err(Error::ingest(
                &fname,
                format!(
                    "row {}: timestamp {ts} off the {} Hz grid (expected ~{implied:.0})",
                    i + 1,
                    sh.sample_rate_hz
                ),
            ));
        }
        for cell in rec.iter().skip(1) {
            let cell = cell.trim();
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::ingest(&fname, format!("row {}: bad value `{cell}`", i + 1))
                })?
            };
            flat.push(v);
        }
    }
    let n = flat.len() / n_ch;
    let mut samples = Array2::from_shape_vec((n, n_ch), flat)
        .map_err(|e| Error::ingest(&fname, e.to_string()))?;
    for (c, mut col) in samples.columns_mut().into_iter().enumerate() {
        let mut v = col.to_vec();
        fill_nan_runs(&mut v, MAX_NAN_RUN).map_err(|start| {
            Error::ingest(
                &fname,
                format!(
                    "channel {}: NaN run longer than {MAX_NAN_RUN} samples at row {}",
                    expected[c],
                    start + 1
                ),
            )
        })?;
        col.assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(SampleStream {
        stream_id: sh.stream_id.clone(),
        kind: sh.kind,
        channel_names: expected.iter().map(|s| s.to_string()).collect(),
        sample_rate_hz: sh.sample_rate_hz,
        start_timestamp_us: sh.start_timestamp_us,
        samples,
    })
}

/// Linearly interpolates NaN runs of length `<= max_run`. Runs touching an edge
/// take the nearest finite value. Returns the start index of the first run
/// that is too long (or of an all-NaN series).
pub fn fill_nan_runs(v: &mut [f64], max_run: usize) -> std::result::Result<(), usize> {
    let n = v.len();
    let mut i = 0;
    while i < n {
        if !v[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && v[i].is_nan() {
            i += 1;
        }
        let end = i; // exclusive
        if end - start > max_run {
            return Err(start);
        }
        match (start.checked_sub(1), (end < n).then_some(end)) {
            (Some(a), Some(b)) => {
                let (va, vb) = (v[a], v[b]);
                let span = (b - a) as f64;
                for (k, slot) in v[start..end].iter_mut().enumerate() {
                    let t = (k + 1) as f64 / span;
                    *slot = va + t * (vb - va);
                }
            }
            (Some(a), None) => {
                let va = v[a];
                v[start..end].fill(va);
            }
            (None, Some(b)) => {
                let vb = v[b];
                v[start..end].fill(vb);
            }
            (None, None) => return Err(start),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_runs_are_interpolated() {
        let mut v = vec![0.0, f64::NAN, f64::NAN, f64::NAN, 4.0];
        fill_nan_runs(&mut v, 3).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 2.0, 3.0, 4.0]);

        let mut v = vec![f64::NAN, 2.0, 3.0, f64::NAN];
        fill_nan_runs(&mut v, 3).unwrap();
        assert_eq!(v, vec![2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn long_runs_are_rejected() {
        let mut v = vec![0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN, 4.0];
        assert_eq!(fill_nan_runs(&mut v, 3), Err(1));
        let mut v = vec![f64::NAN];
        assert_eq!(fill_nan_runs(&mut v, 3), Err(0));
    }
}
