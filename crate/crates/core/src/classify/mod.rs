//! Polynomial-kernel SVM with calibrated posteriors, cross-validation and
//! scheduled retraining.

mod calibrate;
mod cv;
mod incremental;
mod svm;

pub use calibrate::{calibrate, Sigmoid, CALIBRATION_TOL};
pub use cv::{cross_validate, deal_folds, fold_models, CvConfig, CvResult};
pub use incremental::{incremental_session, IncrementalRun, ReplayRecord};
pub use svm::{dual_objective, smo_solve, DualSolution, KernelParams, SmoConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureVector};
use crate::model::Label;
use crate::select::{choose_columns, FeatureRanking, SelectionConfig};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub kernel: KernelParams,
    pub selection: SelectionConfig,
    pub smo: SmoConfig,
}

/// Per-column z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population moments of each column of `rows`.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        std.iter_mut().for_each(|s| *s = s.sqrt());
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub session_id: Option<String>,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelParams,
    pub calibration: Sigmoid,
    pub seed: u64,
    pub n_train: usize,
    pub smo_iterations: usize,
    pub ranking: Option<FeatureRanking>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub decision: f64,
    pub posterior: f64,
    pub label: Label,
}

impl Prediction {
    pub fn from_posterior(decision: f64, posterior: f64) -> Self {
        let label = if posterior > 0.5 { Label::Like } else { Label::Dislike };
        Self {
            decision,
            posterior,
            label,
        }
    }
}

impl TrainedModel {
    /// Decision value for a row already restricted to `feature_names` order.
    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.apply(row);
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, &z))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        let f = self.decision(row);
        Prediction::from_posterior(f, self.calibration.posterior(f))
    }

    fn column_map(&self, names: &[String]) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|f| {
                names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::ColumnMismatch(format!("input lacks model column {f}")))
            })
            .collect()
    }

    pub fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        let idx = self.column_map(&v.names)?;
        let row: Vec<f64> = idx.iter().map(|&i| v.values[i]).collect();
        Ok(self.predict_row(&row))
    }

    pub fn predict_matrix(&self, m: &FeatureMatrix) -> Result<Vec<Prediction>> {
        let names: Vec<String> = m.columns.iter().map(|c| c.name.clone()).collect();
        let idx = self.column_map(&names)?;
        Ok(m.values
            .rows()
            .into_iter()
            .map(|r| {
                let row: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
                self.predict_row(&row)
            })
            .collect())
    }
}

/// Versioned on-disk container for one or more models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub models: Vec<TrainedModel>,
}

impl ModelFile {
    pub fn new(models: Vec<TrainedModel>) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            models,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        Ok(f)
    }

    /// The model for `session_id`, or the only model when the id is omitted.
    pub fn get(&self, session_id: Option<&str>) -> Result<&TrainedModel> {
        match session_id {
            Some(id) => self
                .models
                .iter()
                .find(|m| m.session_id.as_deref() == Some(id))
                .ok_or_else(|| Error::InvalidConfig(format!("no model for session {id}"))),
            None if self.models.len() == 1 => Ok(&self.models[0]),
            None => Err(Error::InvalidConfig(format!(
                "model file holds {} models; name a session",
                self.models.len()
            ))),
        }
    }
}

/// Selection, standardization, SVM and calibration fitted on `m`.
pub fn train(m: &FeatureMatrix, cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    cfg.kernel.validate()?;
    let n = m.n_rows();
    if n < 4 {
        return Err(Error::TooFewSamples { need: 4, got: n });
    }
    let likes = m.labels.iter().filter(|l| **l == Label::Like).count();
    if likes == 0 || likes == n {
        return Err(Error::SingleClass);
    }
    let (mut cols, ranking) = choose_columns(m, &cfg.selection)?;
    cols.retain(|&j| {
        let c = m.values.column(j);
        let keep = c.iter().any(|v| *v != c[0]);
        if !keep {
            log::warn!("dropping zero-variance column {}", m.columns[j].name);
        }
        keep
    });
    if cols.is_empty() {
        return Err(Error::ColumnMismatch("no usable feature columns".into()));
    }
    let raw: Vec<Vec<f64>> = m
        .values
        .rows()
        .into_iter()
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect();
    let standardizer = Standardizer::fit(&raw);
    let z: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
    let y = m.signs();
    let kernel = cfg.kernel.resolved(cols.len());
    let gram = kernel.gram(&z);
    let sol = smo_solve(&gram, &y, kernel.c, &cfg.smo)?;

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, a) in sol.alpha.iter().enumerate() {
        if *a > 0.0 {
            support_vectors.push(z[i].clone());
            dual_coef.push(a * y[i]);
        }
    }
    let decisions: Vec<f64> = (0..n)
        .map(|i| {
            (0..n).map(|j| sol.alpha[j] * y[j] * gram[j][i]).sum::<f64>() + sol.bias
        })
        .collect();
    let positive: Vec<bool> = m.labels.iter().map(|l| *l == Label::Like).collect();
    let calibration = calibrate(&decisions, &positive)?;

    Ok(TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        session_id: None,
        feature_names: cols.iter().map(|&j| m.columns[j].name.clone()).collect(),
        standardizer,
        support_vectors,
        dual_coef,
        bias: sol.bias,
        kernel,
        calibration,
        seed,
        n_train: n,
        smo_iterations: sol.iterations,
        ranking,
    })
}
