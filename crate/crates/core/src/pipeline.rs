//! End-to-end orchestration behind one configuration file.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml                 resolved configuration
//! run.log                     one line per finished stage, append-only
//! status.json                 {"status":"ok"} or the failing stage and error
//! model.json                  one trained model per session
//! report.json / .csv / .svg   accuracy, ablation, sweep and factor analysis
//! sessions/<id>/preprocess.json
//! sessions/<id>/features.csv
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    accuracy_csv_rows, accuracy_report, composition_from_events, factor_correlation, gaze_ratio, render_svg,
    summarize_gaze, write_csv, AccuracyReport, FactorCorrelation, GazeSummary, ReportConfig, PAPER_REFERENCE,
};
use crate::classify::{incremental_session, train, CvConfig, ModelFile, ReplayRecord, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureConfig, FeatureMatrix, SkippedTrial};
use crate::io::{read_session, IngestOptions};
use crate::model::{validate_session_with, Category, Label, Session, Trial};
use crate::preprocess::{preprocess_session, PreprocessConfig, PreprocessReport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    /// 1-based prediction-phase trials after which the model is retrained.
    pub schedule: Vec<usize>,
    pub n_training: usize,
    pub n_prediction: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            schedule: vec![3, 6, 9],
            n_training: 30,
            n_prediction: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub allow_any_rate: bool,
    /// Event metadata keys used to group gaze and factor statistics.
    pub group_keys: Vec<String>,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
    pub report: ReportConfig,
    pub replay: ReplayConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            allow_any_rate: false,
            group_keys: vec!["viewer_sex".into(), "image_sex".into()],
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            cv: CvConfig::default(),
            report: ReportConfig::default(),
            replay: ReplayConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            allow_any_rate: self.allow_any_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFlags {
    pub filter: bool,
    pub ica: bool,
    pub despike: bool,
    pub plr: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub subject_id: String,
    pub n_events: usize,
    pub n_trials: usize,
    pub skipped: Vec<SkippedTrial>,
    pub stages: StageFlags,
    pub n_ica_removed: Option<usize>,
    pub plr_slope: Option<f64>,
    pub accuracy: AccuracyReport,
    pub gaze: Vec<GazeSummary>,
    pub factors: Option<FactorCorrelation>,
    pub factors_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub key: String,
    pub mean: f64,
    pub n_sessions: usize,
    pub paper_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// Accuracies reported by the original study; their data is not available,
    /// so they are shown for orientation and never compared numerically.
    pub paper_reference: BTreeMap<String, f64>,
    pub seed: u64,
    pub summary: Vec<SummaryEntry>,
    pub sessions: Vec<SessionReport>,
}

/// Per-session products before they are written out.
pub struct SessionOutput {
    pub report: SessionReport,
    pub preprocess: PreprocessReport,
    pub matrix: FeatureMatrix,
    pub model: TrainedModel,
}

fn check_valid(session: &Session, allow_any_rate: bool) -> Result<()> {
    let diags = validate_session_with(session, allow_any_rate);
    if diags.is_empty() {
        return Ok(());
    }
    let msg = diags
        .iter()
        .map(|d| format!("{:?} at {}: {}", d.kind, d.location, d.message))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::InvalidSession(msg))
}

/// Validation, preprocessing and feature extraction for one session.
pub fn session_features(session: &Session, cfg: &PipelineConfig) -> Result<(Vec<Trial>, PreprocessReport, FeatureMatrix, Vec<SkippedTrial>)> {
    check_valid(session, cfg.allow_any_rate).map_err(|e| e.at_stage("validate", None))?;
    let (trials, pre) = preprocess_session(session, &cfg.preprocess).map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => e.at_stage("preprocess", None),
    })?;
    let (matrix, skipped) = build_matrix(&trials, &cfg.features)?;
    Ok((trials, pre, matrix, skipped))
}

fn group_label(meta: &BTreeMap<String, String>, keys: &[String]) -> BTreeMap<String, String> {
    keys.iter()
        .filter_map(|k| Some((k.clone(), meta.get(k)?.clone())))
        .collect()
}

pub fn analyze_session(session: &Session, cfg: &PipelineConfig) -> Result<SessionOutput> {
    let (trials, pre, matrix, skipped) = session_features(session, cfg)?;
    let accuracy = accuracy_report(&matrix, &cfg.train, &cfg.cv, &cfg.report, cfg.seed)
        .map_err(|e| e.at_stage("evaluate", None))?;
    let mut model = train(&matrix, &cfg.train, cfg.seed).map_err(|e| e.at_stage("train", None))?;
    model.session_id = Some(session.session_id.clone());

    let mut gaze = Vec::new();
    for t in trials.iter().filter(|t| t.is_usable()) {
        let Some(ev) = session.event(&t.event_id) else { continue };
        if ev.rois.is_empty() {
            continue;
        }
        match gaze_ratio(t, &ev.rois, group_label(&ev.metadata, &cfg.group_keys)) {
            Ok(g) => gaze.push(g),
            Err(Error::NoValidGaze(id)) => log::warn!("no valid gaze in trial {id}"),
            Err(e) => return Err(e.at_stage("gaze", Some(&t.event_id))),
        }
    }

    let composition = composition_from_events(&session.events);
    let groups: BTreeMap<String, String> = session
        .events
        .iter()
        .filter(|e| composition.contains_key(&e.event_id))
        .map(|e| {
            let g = group_label(&e.metadata, &cfg.group_keys);
            (e.event_id.clone(), g.values().cloned().collect::<Vec<_>>().join("/"))
        })
        .collect();
    let (factors, factors_note) = if composition.is_empty() {
        (None, Some("no composite events".to_string()))
    } else {
        match factor_correlation(&accuracy.pooled_posteriors, &composition, Some(&groups)) {
            Ok(f) => (Some(f), None),
            Err(e @ Error::InsufficientPairs(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e.at_stage("factors", None)),
        }
    };

    let report = SessionReport {
        session_id: session.session_id.clone(),
        subject_id: session.subject_id.clone(),
        n_events: session.events.len(),
        n_trials: matrix.n_rows(),
        skipped,
        stages: StageFlags {
            filter: pre.filter_applied,
            ica: pre.ica_applied,
            despike: pre.despike_applied,
            plr: pre.plr_applied,
        },
        n_ica_removed: pre.artifacts.as_ref().filter(|_| pre.ica_applied).map(|a| a.n_components_removed),
        plr_slope: pre.plr.as_ref().map(|p| p.slope),
        accuracy,
        gaze: summarize_gaze(&gaze),
        factors,
        factors_note,
    };
    Ok(SessionOutput {
        report,
        preprocess: pre,
        matrix,
        model,
    })
}

fn summarize(sessions: &[SessionReport]) -> Vec<SummaryEntry> {
    let reference: BTreeMap<&str, f64> = PAPER_REFERENCE.into_iter().collect();
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for s in sessions {
        for e in s.accuracy.categories.iter().chain(std::iter::once(&s.accuracy.pooled)) {
            if let Some(m) = e.mean {
                if !acc.contains_key(&e.key) {
                    order.push(e.key.clone());
                }
                let a = acc.entry(e.key.clone()).or_default();
                a.0 += m;
                a.1 += 1;
            }
        }
    }
    order.sort_by_key(|k| {
        Category::ALL
            .iter()
            .position(|c| c.name() == k)
            .unwrap_or(Category::ALL.len())
    });
    order
        .into_iter()
        .map(|k| {
            let (sum, n) = acc[&k];
            SummaryEntry {
                paper_reference: reference.get(k.as_str()).copied(),
                key: k,
                mean: sum / n as f64,
                n_sessions: n,
            }
        })
        .collect()
}

pub fn build_report(cfg: &PipelineConfig, sessions: Vec<SessionReport>) -> Report {
    Report {
        schema_version: REPORT_SCHEMA_VERSION,
        paper_reference: PAPER_REFERENCE.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        seed: cfg.seed,
        summary: summarize(&sessions),
        sessions,
    }
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn log(&self, line: &str) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("run.log"))?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    fn status(&self, value: serde_json::Value) -> Result<()> {
        fs::write(self.root.join("status.json"), serde_json::to_string_pretty(&value)? + "\n")?;
        Ok(())
    }
}

fn stage_of(e: &Error) -> (&'static str, Option<String>) {
    match e {
        Error::Stage { stage, trial, .. } => (stage, trial.clone()),
        _ => ("run", None),
    }
}

/// Runs every stage on every session and writes the run directory.
pub fn run_pipeline(cfg: &PipelineConfig, session_dirs: &[PathBuf], out: &Path) -> Result<Report> {
    fs::create_dir_all(out)?;
    let run = RunDir { root: out.to_path_buf() };
    run.status(serde_json::json!({ "status": "running" }))?;
    let result = run_inner(cfg, session_dirs, &run);
    match &result {
        Ok(_) => run.status(serde_json::json!({ "status": "ok" }))?,
        Err(e) => {
            let (stage, trial) = stage_of(e);
            let _ = run.log(&format!("failed stage={stage} error={e}"));
            run.status(serde_json::json!({
                "status": "failed",
                "stage": stage,
                "trial": trial,
                "error": e.to_string(),
            }))?;
        }
    }
    result
}

fn run_inner(cfg: &PipelineConfig, session_dirs: &[PathBuf], run: &RunDir) -> Result<Report> {
    if session_dirs.is_empty() {
        return Err(Error::InvalidConfig("no sessions given".into()));
    }
    fs::write(run.root.join("config.toml"), cfg.to_toml()?)?;
    let mut reports = Vec::new();
    let mut models = Vec::new();
    for dir in session_dirs {
        let session = read_session(dir, cfg.ingest_options()).map_err(|e| e.at_stage("ingest", None))?;
        run.log(&format!("ingest {}", session.session_id))?;
        let outp = analyze_session(&session, cfg)?;
        let sdir = run.root.join("sessions").join(&session.session_id);
        fs::create_dir_all(&sdir)?;
        fs::write(
            sdir.join("preprocess.json"),
            serde_json::to_string_pretty(&outp.preprocess)? + "\n",
        )?;
        outp.matrix.write_csv(&sdir.join("features.csv"))?;
        run.log(&format!(
            "session {} trials={} pooled_accuracy={}",
            session.session_id,
            outp.report.n_trials,
            outp.report
                .accuracy
                .pooled
                .mean
                .map_or("n/a".to_string(), |m| format!("{m:.4}"))
        ))?;
        reports.push(outp.report);
        models.push(outp.model);
    }
    ModelFile::new(models).write(&run.root.join("model.json"))?;
    let report = build_report(cfg, reports);
    write_report(&report, &run.root)?;
    run.log("report written")?;
    Ok(report)
}

pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    let mut rows = Vec::new();
    for s in &report.sessions {
        rows.extend(accuracy_csv_rows(&s.session_id, &s.accuracy));
    }
    for e in &report.summary {
        rows.push([
            "summary".into(),
            "category".into(),
            e.key.clone(),
            e.n_sessions.to_string(),
            format!("{:.6}", e.mean),
            String::new(),
            e.paper_reference
                .map(|p| format!("paper reference {p}"))
                .unwrap_or_default(),
        ]);
    }
    write_csv(&dir.join("report.csv"), &rows)?;

    let acc: Vec<(String, f64)> = report.summary.iter().map(|e| (e.key.clone(), e.mean)).collect();
    let mut gaze: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for s in &report.sessions {
        for g in &s.gaze {
            let e = gaze.entry(g.roi.clone()).or_default();
            e.0 += g.mean_ratio * g.n_trials as f64;
            e.1 += g.n_trials;
        }
    }
    let gaze: Vec<(String, f64)> = gaze
        .into_iter()
        .map(|(k, (s, n))| (k, s / n.max(1) as f64))
        .collect();
    fs::write(dir.join("report.svg"), render_svg(&acc, &gaze))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayLog {
    pub session_id: String,
    pub schedule: Vec<usize>,
    pub n_training: usize,
    pub records: Vec<ReplayRecord>,
    pub versions_used: usize,
    pub agreement: f64,
}

impl ReplayLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "event_id", "predicted", "posterior", "user_label", "model_version"])?;
        let name = |l: Label| match l {
            Label::Like => "like",
            Label::Dislike => "dislike",
        };
        for r in &self.records {
            w.write_record([
                r.trial.to_string(),
                r.event_id.clone(),
                name(r.prediction.label).to_string(),
                format!("{:.6}", r.prediction.posterior),
                name(r.truth).to_string(),
                r.model_version.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Offline replay: the first `n_training` usable trials (arrival order) train
/// the initial model, the next `n_prediction` are predicted one by one with
/// retraining after each scheduled trial.
pub fn session_replay(session: &Session, cfg: &PipelineConfig, schedule: &[usize]) -> Result<ReplayLog> {
    let (_, _, m, _) = session_features(session, cfg)?;
    let (nt, np) = (cfg.replay.n_training, cfg.replay.n_prediction);
    if m.n_rows() < nt + np {
        return Err(Error::TooFewSamples {
            need: nt + np,
            got: m.n_rows(),
        });
    }
    let initial = m.select_rows(&(0..nt).collect::<Vec<_>>());
    let arriving = m.select_rows(&(nt..nt + np).collect::<Vec<_>>());
    let run = incremental_session(&initial, &arriving, schedule, &cfg.train, cfg.seed)?;
    let agreement = run.accuracy(1, np);
    Ok(ReplayLog {
        session_id: session.session_id.clone(),
        schedule: schedule.to_vec(),
        n_training: nt,
        versions_used: run.versions_used(),
        records: run.records,
        agreement,
    })
}
