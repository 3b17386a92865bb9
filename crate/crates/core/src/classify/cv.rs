use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::Label;

const MAX_DEALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub n_folds: usize,
    pub n_repeats: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            n_folds: 10,
            n_repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub mean: f64,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub std: f64,
    pub repeat_accuracies: Vec<f64>,
    pub n_folds: usize,
    pub n_repeats: usize,
    /// Test-fold sizes of the first repeat.
    pub fold_sizes: Vec<usize>,
    /// Out-of-fold posterior per row, from the first repeat.
    pub oof_posteriors: Vec<f64>,
}

fn has_both(labels: &[Label], idx: impl Iterator<Item = usize>) -> bool {
    let (mut like, mut dislike) = (false, false);
    for i in idx {
        match labels[i] {
            Label::Like => like = true,
            Label::Dislike => dislike = true,
        }
    }
    like && dislike
}

/// Stratified folds: each class is shuffled, the classes are concatenated and
/// dealt round-robin, so fold sizes differ by at most one and class counts per
/// fold differ by at most one. Test folds must hold both classes whenever each
/// class has at least `n_folds` members; every training split must hold both
/// classes. Failing deals are reshuffled.
pub fn deal_folds(labels: &[Label], n_folds: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if n_folds < 2 || n < n_folds {
        return Err(Error::TooFewSamples {
            need: n_folds.max(2),
            got: n,
        });
    }
    let mut likes: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::Like).collect();
    let mut dislikes: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::Dislike).collect();
    let strict = likes.len() >= n_folds && dislikes.len() >= n_folds;
    for _ in 0..MAX_DEALS {
        likes.shuffle(rng);
        dislikes.shuffle(rng);
        let mut folds = vec![Vec::new(); n_folds];
        for (k, &i) in likes.iter().chain(&dislikes).enumerate() {
            folds[k % n_folds].push(i);
        }
        let ok = folds.iter().enumerate().all(|(f, test)| {
            let train_ok = has_both(
                labels,
                folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, v)| v.iter().copied()),
            );
            train_ok && (!strict || has_both(labels, test.iter().copied()))
        });
        if ok {
            for f in folds.iter_mut() {
                f.sort_unstable();
            }
            return Ok(folds);
        }
    }
    Err(Error::UnstratifiableFolds(MAX_DEALS))
}

fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in test {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}

/// Random training subset of `limit` rows that still holds both classes.
fn limit_rows(rows: &[usize], labels: &[Label], limit: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if limit >= rows.len() {
        return Ok(rows.to_vec());
    }
    for _ in 0..MAX_DEALS {
        let mut pick: Vec<usize> = rows.choose_multiple(rng, limit).copied().collect();
        if has_both(labels, pick.iter().copied()) {
            pick.sort_unstable();
            return Ok(pick);
        }
    }
    Err(Error::UnstratifiableFolds(MAX_DEALS))
}

/// Folds and fitted models of one repeat, in fold order.
pub fn fold_models(
    m: &FeatureMatrix,
    cfg: &TrainConfig,
    cv: &CvConfig,
    seed: u64,
    repeat: usize,
) -> Result<Vec<(Vec<usize>, TrainedModel)>> {
    let mut rng = repeat_rng(seed, repeat);
    let folds = deal_folds(&m.labels, cv.n_folds, &mut rng)?;
    folds
        .into_par_iter()
        .map(|test| {
            let tr = complement(m.n_rows(), &test);
            let model = train(&m.select_rows(&tr), cfg, seed)?;
            Ok((test, model))
        })
        .collect()
}

struct RepeatOutcome {
    accuracy: f64,
    fold_sizes: Vec<usize>,
    posteriors: Vec<f64>,
}

fn run_repeat(
    m: &FeatureMatrix,
    cfg: &TrainConfig,
    cv: &CvConfig,
    seed: u64,
    repeat: usize,
    train_limit: Option<usize>,
) -> Result<RepeatOutcome> {
    let n = m.n_rows();
    let mut rng = repeat_rng(seed, repeat);
    let folds = deal_folds(&m.labels, cv.n_folds, &mut rng)?;
    let mut splits = Vec::with_capacity(folds.len());
    for test in &folds {
        let mut tr = complement(n, test);
        if let Some(limit) = train_limit {
            tr = limit_rows(&tr, &m.labels, limit, &mut rng)?;
        }
        splits.push((test.clone(), tr));
    }
    let per_fold: Vec<Vec<(usize, f64, bool)>> = splits
        .par_iter()
        .map(|(test, tr)| {
            let model = train(&m.select_rows(tr), cfg, seed)?;
            let preds = model.predict_matrix(&m.select_rows(test))?;
            Ok(test
                .iter()
                .zip(preds)
                .map(|(&i, p)| (i, p.posterior, p.label == m.labels[i]))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut posteriors = vec![f64::NAN; n];
    let mut correct = 0usize;
    for (i, p, ok) in per_fold.into_iter().flatten() {
        posteriors[i] = p;
        correct += ok as usize;
    }
    Ok(RepeatOutcome {
        accuracy: correct as f64 / n as f64,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        posteriors,
    })
}

/// Repeated stratified k-fold accuracy. Selection, standardization and
/// calibration are refitted inside every training split. `train_limit`
/// subsamples each training split to at most that many rows.
pub fn cross_validate(
    m: &FeatureMatrix,
    cfg: &TrainConfig,
    cv: &CvConfig,
    seed: u64,
    train_limit: Option<usize>,
) -> Result<CvResult> {
    if cv.n_repeats == 0 {
        return Err(Error::InvalidConfig("n_repeats must be >= 1".into()));
    }
    if m.n_rows() < cv.n_folds {
        return Err(Error::TooFewSamples {
            need: cv.n_folds,
            got: m.n_rows(),
        });
    }
    let outcomes: Vec<RepeatOutcome> = (0..cv.n_repeats)
        .into_par_iter()
        .map(|r| run_repeat(m, cfg, cv, seed, r, train_limit))
        .collect::<Result<_>>()?;
    let accs: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let k = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / k;
    let std = if accs.len() > 1 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let first = outcomes.into_iter().next().expect("n_repeats >= 1");
    Ok(CvResult {
        mean,
        std,
        repeat_accuracies: accs,
        n_folds: cv.n_folds,
        n_repeats: cv.n_repeats,
        fold_sizes: first.fold_sizes,
        oof_posteriors: first.posteriors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n_like: usize, n: usize) -> Vec<Label> {
        (0..n).map(|i| if i < n_like { Label::Like } else { Label::Dislike }).collect()
    }

    #[test]
    fn fold_sizes_for_144() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let folds = deal_folds(&labels(70, 144), 10, &mut rng).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![14, 14, 14, 14, 14, 14, 15, 15, 15, 15]);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..144).collect::<Vec<_>>());
    }

    #[test]
    fn thirty_rows_give_three_per_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let folds = deal_folds(&labels(12, 30), 10, &mut rng).unwrap();
        assert!(folds.iter().all(|f| f.len() == 3));
        for f in &folds {
            assert!(has_both(&labels(12, 30), f.iter().copied()));
        }
    }

    #[test]
    fn too_few_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            deal_folds(&labels(3, 8), 10, &mut rng),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn same_seed_same_result() {
        let m = super::super::tests::blobs(40, 1.0, 9);
        let cfg = TrainConfig::default();
        let cv = CvConfig {
            n_folds: 5,
            n_repeats: 3,
        };
        let a = cross_validate(&m, &cfg, &cv, 11, None).unwrap();
        let b = cross_validate(&m, &cfg, &cv, 11, None).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
