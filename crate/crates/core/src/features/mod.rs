//! Per-trial feature vectors.
//!
//! Canonical layout: for each EEG channel in `Fp1, Fp2, AF3, AF4, AF7, AF8`
//! order, 40 columns
//!
//! | columns | names |
//! |---|---|
//! | 5 band powers | `eeg.<ch>.<band>_power` |
//! | 5 relative powers | `eeg.<ch>.<band>_rel` |
//! | NSI | `eeg.<ch>.nsi` |
//! | Higuchi FD | `eeg.<ch>.fd` |
//! | 10 HOC counts | `eeg.<ch>.hoc1` .. `eeg.<ch>.hoc10` |
//! | 18 DWT stats | `eeg.<ch>.dwt_<a5,d5..d1>_<logenergy,meanabs,std>` |
//!
//! followed by the 12 `eye.*` columns of [`eye::EYE_FEATURES`]: 252 in total.

pub mod eeg;
pub mod eye;

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Category, Label, QualityFlag, Trial, EEG_CHANNELS};

pub use eye::EyeFeatureConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "Eye")]
    Eye,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub modality: Modality,
}

impl Column {
    fn new(name: String) -> Self {
        let modality = if name.starts_with("eye.") {
            Modality::Eye
        } else {
            Modality::Eeg
        };
        Self { name, modality }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub hoc_max_order: usize,
    pub fd_k_max: usize,
    pub nsi_segments: usize,
    pub eye: EyeFeatureConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            hoc_max_order: 10,
            fd_k_max: 8,
            nsi_segments: eeg::NSI_SEGMENTS,
            eye: EyeFeatureConfig::default(),
        }
    }
}

pub fn layout(cfg: &FeatureConfig) -> Vec<Column> {
    let mut names = Vec::new();
    for ch in EEG_CHANNELS {
        for (band, _, _) in eeg::EEG_BANDS {
            names.push(format!("eeg.{ch}.{band}_power"));
        }
        for (band, _, _) in eeg::EEG_BANDS {
            names.push(format!("eeg.{ch}.{band}_rel"));
        }
        names.push(format!("eeg.{ch}.nsi"));
        names.push(format!("eeg.{ch}.fd"));
        for k in 1..=cfg.hoc_max_order {
            names.push(format!("eeg.{ch}.hoc{k}"));
        }
        for band in eeg::DWT_BANDS {
            for stat in eeg::DWT_STATS {
                names.push(format!("eeg.{ch}.dwt_{band}_{stat}"));
            }
        }
    }
    for f in eye::EYE_FEATURES {
        names.push(format!("eye.{f}"));
    }
    names.into_iter().map(Column::new).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub modalities: Vec<Modality>,
}

fn channel_features(x: &[f64], rate: f64, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(22 + cfg.hoc_max_order);
    let bp = eeg::band_powers(x, rate)?;
    out.extend(bp.absolute);
    out.extend(bp.relative);
    out.push(eeg::nsi(x, cfg.nsi_segments)?);
    out.push(eeg::higuchi_fd(x, cfg.fd_k_max)?);
    out.extend(eeg::hoc(x, cfg.hoc_max_order)?.into_iter().map(|c| c as f64));
    out.extend(eeg::dwt_features(x)?);
    Ok(out)
}

/// Full feature vector for one trial. Trials with gap flags are rejected.
pub fn extract_all(trial: &Trial, cfg: &FeatureConfig) -> Result<FeatureVector> {
    for flag in [QualityFlag::EegGap, QualityFlag::EyeGap] {
        if trial.quality_flags.contains(&flag) {
            return Err(Error::UnusableTrial {
                trial: trial.event_id.clone(),
                reason: format!("{flag:?}"),
            });
        }
    }
    if trial.eeg_epoch.ncols() != EEG_CHANNELS.len() {
        return Err(Error::UnusableTrial {
            trial: trial.event_id.clone(),
            reason: format!("{} EEG channels", trial.eeg_epoch.ncols()),
        });
    }
    let mut values = Vec::new();
    for col in trial.eeg_epoch.axis_iter(Axis(1)) {
        values.extend(channel_features(&col.to_vec(), trial.eeg_rate_hz, cfg)?);
    }
    values.extend(eye::eye_features(&trial.eye_epoch, trial.eye_rate_hz, &cfg.eye)?);
    let cols = layout(cfg);
    debug_assert_eq!(cols.len(), values.len());
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::UnusableTrial {
            trial: trial.event_id.clone(),
            reason: format!("non-finite feature {}", cols[i].name),
        });
    }
    let (names, modalities) = cols.into_iter().map(|c| (c.name, c.modality)).unzip();
    Ok(FeatureVector {
        values,
        names,
        modalities,
    })
}

/// Labelled trials as rows, with shared column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<Column>,
    /// `[n_trials, n_columns]`
    pub values: Array2<f64>,
    pub labels: Vec<Label>,
    pub event_ids: Vec<String>,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrial {
    pub event_id: String,
    pub reason: String,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            values: self.values.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            event_ids: idx.iter().map(|&i| self.event_ids[i].clone()).collect(),
            categories: idx.iter().map(|&i| self.categories[i]).collect(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            values: self.values.select(Axis(1), idx),
            labels: self.labels.clone(),
            event_ids: self.event_ids.clone(),
            categories: self.categories.clone(),
        }
    }

    pub fn modality_columns(&self, m: Modality) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&i| self.columns[i].modality == m)
            .collect()
    }

    pub fn category_rows(&self, c: Category) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.categories[i] == c)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.nrows();
        if self.values.ncols() != self.columns.len()
            || self.labels.len() != n
            || self.event_ids.len() != n
            || self.categories.len() != n
        {
            return Err(Error::ColumnMismatch("feature matrix is not rectangular".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::ColumnMismatch(format!("duplicate column {}", c.name)));
            }
        }
        Ok(())
    }

    /// `event_id,category,<feature columns...>,label`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["event_id".to_string(), "category".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        header.push("label".into());
        w.write_record(&header)?;
        for (i, row) in self.values.rows().into_iter().enumerate() {
            let mut rec = vec![
                self.event_ids[i].clone(),
                self.categories[i].name().to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(
                match self.labels[i] {
                    Label::Like => "like",
                    Label::Dislike => "dislike",
                }
                .into(),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 4 || &header[0] != "event_id" || &header[1] != "category" || &header[n - 1] != "label" {
            return Err(Error::ingest(
                path.display().to_string(),
                "expected header event_id,category,<features>,label",
            ));
        }
        let columns: Vec<Column> = header
            .iter()
            .skip(2)
            .take(n - 3)
            .map(|s| Column::new(s.to_string()))
            .collect();
        let mut flat = Vec::new();
        let (mut labels, mut ids, mut cats) = (vec![], vec![], vec![]);
        for rec in r.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            cats.push(
                Category::ALL
                    .into_iter()
                    .find(|c| c.name() == &rec[1])
                    .ok_or_else(|| Error::ingest(path.display().to_string(), format!("category `{}`", &rec[1])))?,
            );
            for cell in rec.iter().skip(2).take(n - 3) {
                flat.push(cell.parse::<f64>().map_err(|_| {
                    Error::ingest(path.display().to_string(), format!("bad value `{cell}`"))
                })?);
            }
            labels.push(match &rec[n - 1] {
                "like" => Label::Like,
                "dislike" => Label::Dislike,
                other => {
                    return Err(Error::ingest(
                        path.display().to_string(),
                        format!("label `{other}`"),
                    ))
                }
            });
        }
        let values = Array2::from_shape_vec((labels.len(), columns.len()), flat)
            .map_err(|e| Error::ingest(path.display().to_string(), e.to_string()))?;
        let m = FeatureMatrix {
            columns,
            values,
            labels,
            event_ids: ids,
            categories: cats,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Extracts every labelled, usable trial in parallel. Unlabelled or flagged
/// trials are returned as skipped, in trial order.
pub fn build_matrix(trials: &[Trial], cfg: &FeatureConfig) -> Result<(FeatureMatrix, Vec<SkippedTrial>)> {
    let results: Vec<(usize, Result<FeatureVector>)> = trials
        .par_iter()
        .enumerate()
        .filter(|(_, t)| t.label.is_some())
        .map(|(i, t)| (i, extract_all(t, cfg)))
        .collect();
    let columns = layout(cfg);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let (mut labels, mut ids, mut cats) = (vec![], vec![], vec![]);
    for t in trials.iter().filter(|t| t.label.is_none()) {
        skipped.push(SkippedTrial {
            event_id: t.event_id.clone(),
            reason: "no label".into(),
        });
    }
    for (i, r) in results {
        let t = &trials[i];
        match r {
            Ok(v) => {
                rows.extend(v.values);
                labels.push(t.label.expect("filtered above"));
                ids.push(t.event_id.clone());
                cats.push(t.category);
            }
            Err(e @ (Error::UnusableTrial { .. } | Error::NoValidPupil(_) | Error::TooShort { .. })) => {
                skipped.push(SkippedTrial {
                    event_id: t.event_id.clone(),
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e.at_stage("features", Some(&t.event_id))),
        }
    }
    let values = Array2::from_shape_vec((labels.len(), columns.len()), rows)
        .map_err(|e| Error::ColumnMismatch(e.to_string()))?;
    Ok((
        FeatureMatrix {
            columns,
            values,
            labels,
            event_ids: ids,
            categories: cats,
        },
        skipped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    pub(crate) fn toy_trial(seed: u64) -> Trial {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let eeg = Array2::from_shape_fn((500, 6), |_| 10.0 * next());
        let eye = Array2::from_shape_fn((120, 6), |(_, c)| match c {
            0 | 1 => 3.0,
            2 | 3 => 0.5,
            _ => 1.0,
        });
        Trial {
            event_id: format!("t{seed}"),
            category: Category::Face,
            eeg_epoch: eeg,
            eeg_rate_hz: 250.0,
            eye_epoch: eye,
            eye_rate_hz: 60.0,
            label: Some(Label::Like),
            luminance: None,
            quality_flags: BTreeSet::new(),
        }
    }

    #[test]
    fn layout_has_252_columns() {
        let cols = layout(&FeatureConfig::default());
        assert_eq!(cols.len(), 252);
        assert_eq!(cols.iter().filter(|c| c.modality == Modality::Eeg).count(), 240);
        assert_eq!(cols.iter().filter(|c| c.modality == Modality::Eye).count(), 12);
        let names: HashSet<_> = cols.iter().map(|c| &c.name).collect();
        assert_eq!(names.len(), 252);
        assert_eq!(cols[0].name, "eeg.Fp1.delta_power");
        assert_eq!(cols[251].name, "eye.saccade_count");
    }

    #[test]
    fn extraction_is_deterministic() {
        let t = toy_trial(1);
        let a = extract_all(&t, &FeatureConfig::default()).unwrap();
        let b = extract_all(&t.clone(), &FeatureConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 252);
    }

    #[test]
    fn gap_flag_is_an_error() {
        let mut t = toy_trial(2);
        t.quality_flags.insert(QualityFlag::EegGap);
        assert!(matches!(
            extract_all(&t, &FeatureConfig::default()),
            Err(Error::UnusableTrial { .. })
        ));
    }

    #[test]
    fn doubling_a_channel_quadruples_its_power() {
        let t = toy_trial(3);
        let mut t2 = t.clone();
        t2.eeg_epoch.column_mut(2).mapv_inplace(|v| v * 2.0);
        let cfg = FeatureConfig::default();
        let a = extract_all(&t, &cfg).unwrap();
        let b = extract_all(&t2, &cfg).unwrap();
        for (i, name) in a.names.iter().enumerate() {
            if name.starts_with("eeg.AF3.") && name.ends_with("_power") {
                assert!((b.values[i] / a.values[i] - 4.0).abs() < 1e-9, "{name}");
            }
            if name.starts_with("eeg.AF3.hoc") {
                assert_eq!(a.values[i], b.values[i]);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let trials: Vec<Trial> = (0..3).map(toy_trial).collect();
        let (m, skipped) = build_matrix(&trials, &FeatureConfig::default()).unwrap();
        assert!(skipped.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        m.write_csv(&p).unwrap();
        assert_eq!(FeatureMatrix::read_csv(&p).unwrap(), m);
    }
}
