//! Graph ranking of feature columns by summed path weights.
//!
//! Every pair of features is joined by an edge weighted by class relevance
//! (Fisher score) and non-redundancy (one minus absolute Spearman rank
//! correlation). A feature's score is the weight of all paths of every length
//! leaving it, which has the closed form `((I - rA)^-1 - I) 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Column, FeatureMatrix};
use crate::model::Label;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TOP_K: usize = 20;
/// Product `r * rho(A)`; must stay below 1 for the path series to converge.
pub const DAMPING: f64 = 0.9;
const FISHER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub top_k: usize,
    /// Explicit column names (`*` matches any run of characters). Overrides ranking.
    pub features: Option<Vec<String>>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            top_k: DEFAULT_TOP_K,
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub names: Vec<String>,
    /// `-inf` marks zero-variance columns that were left out of the graph.
    #[serde(with = "nonfinite")]
    pub scores: Vec<f64>,
    pub order: Vec<usize>,
    pub alpha: f64,
    pub r: f64,
    pub k: Option<usize>,
}

mod nonfinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

/// Fisher score per column, `(mu1 - mu0)^2 / (var1 + var0 + eps)`.
pub fn fisher_scores(x: ArrayView2<f64>, labels: &[Label]) -> Vec<f64> {
    x.axis_iter(Axis(1))
        .map(|col| {
            let (mut s, mut n) = ([0.0; 2], [0usize; 2]);
            for (v, l) in col.iter().zip(labels) {
                let c = (*l == Label::Like) as usize;
                s[c] += v;
                n[c] += 1;
            }
            let mu = [s[0] / n[0] as f64, s[1] / n[1] as f64];
            let mut var = [0.0; 2];
            for (v, l) in col.iter().zip(labels) {
                let c = (*l == Label::Like) as usize;
                var[c] += (v - mu[c]).powi(2);
            }
            let var = [var[0] / n[0] as f64, var[1] / n[1] as f64];
            (mu[1] - mu[0]).powi(2) / (var[0] + var[1] + FISHER_EPS)
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            out[k] = r;
        }
        i = j;
    }
    out
}

/// Spearman correlation matrix of the columns of `x`. Columns must not be constant.
pub fn spearman_matrix(x: ArrayView2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut z = Array2::<f64>::zeros((n, p));
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let r = ranks(&col.to_vec());
        let m = r.iter().sum::<f64>() / n as f64;
        let sd = r.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt();
        for i in 0..n {
            z[[i, j]] = (r[i] - m) / sd;
        }
    }
    let mut c = z.t().dot(&z);
    c.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    c
}

/// Edge weights `alpha * max(h_i, h_j) + (1 - alpha) * (1 - |rho_ij|)`.
pub fn adjacency(relevance: &[f64], spearman: &Array2<f64>, alpha: f64) -> DMatrix<f64> {
    let p = relevance.len();
    DMatrix::from_fn(p, p, |i, j| {
        alpha * relevance[i].max(relevance[j]) + (1.0 - alpha) * (1.0 - spearman[[i, j]].abs())
    })
}

/// Row sums of `(I - rA)^-1 - I` with `r = DAMPING / rho(A)`. Returns the scores and `r`.
pub fn path_scores(a: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let p = a.nrows();
    let rho = SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if rho <= f64::EPSILON {
        return Ok((vec![0.0; p], 0.0));
    }
    let r = DAMPING / rho;
    let m = DMatrix::identity(p, p) - a * r;
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("I - rA".into()))?;
    let s = inv - DMatrix::identity(p, p);
    Ok(((0..p).map(|i| s.row(i).sum()).collect(), r))
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn rank_features(m: &FeatureMatrix, alpha: f64) -> Result<FeatureRanking> {
    rank_columns(m.values.view(), &m.labels, &m.columns, alpha)
}

pub fn rank_columns(x: ArrayView2<f64>, labels: &[Label], columns: &[Column], alpha: f64) -> Result<FeatureRanking> {
    let p = x.ncols();
    if p < 2 {
        return Err(Error::ColumnMismatch(format!("ranking needs at least 2 features, got {p}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    let likes = labels.iter().filter(|l| **l == Label::Like).count();
    if likes == 0 || likes == labels.len() {
        return Err(Error::DegenerateLabels("ranking needs both classes".into()));
    }
    let live: Vec<usize> = (0..p)
        .filter(|&j| {
            let c = x.column(j);
            c.iter().any(|v| *v != c[0])
        })
        .collect();
    let mut scores = vec![f64::NEG_INFINITY; p];
    let mut r = 0.0;
    if !live.is_empty() {
        let xs = x.select(Axis(1), &live);
        let h = min_max(&fisher_scores(xs.view(), labels));
        let rho = spearman_matrix(xs.view());
        let (s, rr) = path_scores(&adjacency(&h, &rho, alpha))?;
        r = rr;
        for (k, &j) in live.iter().enumerate() {
            scores[j] = s[k];
        }
    }
    Ok(FeatureRanking {
        names: columns.iter().map(|c| c.name.clone()).collect(),
        order: descending_order(&scores),
        scores,
        alpha,
        r,
        k: None,
    })
}

/// First `k` entries of the ranking order.
pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<usize>> {
    let n = ranking.order.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(ranking.order[..k].to_vec())
}

fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}

/// Resolves names or `*` patterns to column indices, in pattern order then
/// column order, without duplicates.
pub fn resolve_features(columns: &[Column], patterns: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for pat in patterns {
        let hits: Vec<usize> = (0..columns.len())
            .filter(|&i| glob_match(pat, &columns[i].name))
            .collect();
        if hits.is_empty() {
            return Err(Error::UnknownFeature(pat.clone()));
        }
        for h in hits {
            if !out.contains(&h) {
                out.push(h);
            }
        }
    }
    Ok(out)
}

/// Column indices chosen by `cfg`: the override list when present, else the
/// top-k of the ranking (clamped to the number of ranked, non-constant columns).
pub fn choose_columns(m: &FeatureMatrix, cfg: &SelectionConfig) -> Result<(Vec<usize>, Option<FeatureRanking>)> {
    if let Some(names) = &cfg.features {
        return Ok((resolve_features(&m.columns, names)?, None));
    }
    let mut ranking = rank_features(m, cfg.alpha)?;
    let finite = ranking.scores.iter().filter(|s| s.is_finite()).count();
    let k = cfg.top_k.min(finite.max(1));
    if cfg.top_k == 0 {
        return Err(Error::KOutOfRange { k: 0, n: finite });
    }
    ranking.k = Some(k);
    Ok((select_top_k(&ranking, k)?, Some(ranking)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Modality;

    fn cols(n: usize) -> Vec<Column> {
        (0..n)
            .map(|i| Column {
                name: format!("eeg.f{i}"),
                modality: Modality::Eeg,
            })
            .collect()
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_features_tie_by_index() {
        let labels: Vec<Label> = (0..20).map(|i| Label::from_sign(if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
        let x = Array2::from_shape_fn((20, 2), |(i, _)| (i * 7 % 11) as f64);
        let r = rank_columns(x.view(), &labels, &cols(2), 0.5).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.order, vec![0, 1]);
    }

    #[test]
    fn constant_column_goes_last() {
        let labels: Vec<Label> = (0..10).map(|i| Label::from_sign(if i < 5 { 1.0 } else { -1.0 })).collect();
        let x = Array2::from_shape_fn((10, 3), |(i, j)| if j == 0 { 1.0 } else { (i * (j + 3) % 7) as f64 });
        let r = rank_columns(x.view(), &labels, &cols(3), 0.5).unwrap();
        assert_eq!(r.scores[0], f64::NEG_INFINITY);
        assert_eq!(*r.order.last().unwrap(), 0);
        let json = serde_json::to_string(&r).unwrap();
        let back: FeatureRanking = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn single_class_is_degenerate() {
        let labels = vec![Label::Like; 6];
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64);
        assert!(matches!(
            rank_columns(x.view(), &labels, &cols(2), 0.5),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn top_k_bounds() {
        let r = FeatureRanking {
            names: vec!["a".into(), "b".into()],
            scores: vec![1.0, 2.0],
            order: vec![1, 0],
            alpha: 0.5,
            r: 0.1,
            k: None,
        };
        assert_eq!(select_top_k(&r, 2).unwrap(), vec![1, 0]);
        assert!(matches!(select_top_k(&r, 3), Err(Error::KOutOfRange { k: 3, n: 2 })));
        assert!(select_top_k(&r, 0).is_err());
    }

    #[test]
    fn glob_patterns() {
        assert!(glob_match("eeg.*.hoc1", "eeg.Fp1.hoc1"));
        assert!(!glob_match("eeg.*.hoc1", "eeg.Fp1.hoc10"));
        assert!(glob_match("*", "anything"));
        assert!(glob_match("a*b*c", "a-b-c"));
        assert!(!glob_match("a*b*c", "a-c"));
    }
}
