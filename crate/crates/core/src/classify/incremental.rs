use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};

use super::{train, Prediction, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    /// 1-based position in the prediction phase.
    pub trial: usize,
    pub event_id: String,
    pub prediction: Prediction,
    pub truth: Label,
    pub model_version: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalRun {
    pub records: Vec<ReplayRecord>,
    /// `models[v]` is model version `v`.
    pub models: Vec<TrainedModel>,
}

impl IncrementalRun {
    pub fn versions_used(&self) -> usize {
        let mut v: Vec<usize> = self.records.iter().map(|r| r.model_version).collect();
        v.dedup();
        v.len()
    }

    /// Agreement rate over 1-based trials `from..=to`.
    pub fn accuracy(&self, from: usize, to: usize) -> f64 {
        let sel: Vec<&ReplayRecord> = self
            .records
            .iter()
            .filter(|r| r.trial >= from && r.trial <= to)
            .collect();
        sel.iter().filter(|r| r.prediction.label == r.truth).count() as f64 / sel.len().max(1) as f64
    }
}

fn stack(a: &FeatureMatrix, b: &FeatureMatrix) -> FeatureMatrix {
    FeatureMatrix {
        columns: a.columns.clone(),
        values: concatenate(Axis(0), &[a.values.view(), b.values.view()]).expect("same column count"),
        labels: a.labels.iter().chain(&b.labels).copied().collect(),
        event_ids: a.event_ids.iter().chain(&b.event_ids).cloned().collect(),
        categories: a.categories.iter().chain(&b.categories).copied().collect(),
    }
}

/// Predicts each arriving trial with the current model; after every 1-based
/// trial index listed in `schedule` the model is retrained from scratch on the
/// initial set plus all trials seen so far.
pub fn incremental_session(
    initial: &FeatureMatrix,
    arriving: &FeatureMatrix,
    schedule: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<IncrementalRun> {
    if initial.columns != arriving.columns {
        return Err(Error::ColumnMismatch("initial and arriving layouts differ".into()));
    }
    let mut models = vec![train(initial, cfg, seed).map_err(|e| e.at_stage("train", None))?];
    let mut records = Vec::with_capacity(arriving.n_rows());
    for i in 0..arriving.n_rows() {
        let current = models.last().expect("initial model");
        let row = arriving.select_rows(&[i]);
        let prediction = current.predict_matrix(&row)?[0];
        records.push(ReplayRecord {
            trial: i + 1,
            event_id: arriving.event_ids[i].clone(),
            prediction,
            truth: arriving.labels[i],
            model_version: models.len() - 1,
        });
        if schedule.contains(&(i + 1)) {
            let seen: Vec<usize> = (0..=i).collect();
            let pool = stack(initial, &arriving.select_rows(&seen));
            let model = train(&pool, cfg, seed)
                .map_err(|e| e.at_stage("retrain", Some(&arriving.event_ids[i])))?;
            models.push(model);
        }
    }
    Ok(IncrementalRun { records, models })
}
