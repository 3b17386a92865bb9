//! Accuracy reporting and factor analysis: ROI gaze ratios and Pearson
//! correlation between composite-image and component-image posteriors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{cross_validate, CvConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::model::{eye_col, Category, Roi, StimulusEvent, Trial};

/// Reference accuracies from the original study, shown for comparison only.
pub const PAPER_REFERENCE: [(&str, f64); 5] = [
    ("face", 0.644),
    ("cloth", 0.645),
    ("color", 0.605),
    ("composite", 0.744),
    ("all", 0.692),
];

/// Component images of one composite stimulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub face: String,
    pub cloth: String,
    pub color: String,
}

/// Reads `face_id`, `cloth_id` and `color_id` metadata of composite events.
pub fn composition_from_events(events: &[StimulusEvent]) -> BTreeMap<String, Composition> {
    events
        .iter()
        .filter(|e| e.category == Category::Composite)
        .filter_map(|e| {
            Some((
                e.event_id.clone(),
                Composition {
                    face: e.metadata.get("face_id")?.clone(),
                    cloth: e.metadata.get("cloth_id")?.clone(),
                    color: e.metadata.get("color_id")?.clone(),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiGaze {
    pub name: String,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeStats {
    pub event_id: String,
    pub group: BTreeMap<String, String>,
    /// Samples with at least one valid eye; the ratio denominator.
    pub n_valid: usize,
    pub rois: Vec<RoiGaze>,
}

/// Per-ROI share of valid gaze samples. Boundary points count as inside.
pub fn gaze_ratio(trial: &Trial, rois: &[Roi], group: BTreeMap<String, String>) -> Result<GazeStats> {
    let mut counts = vec![0usize; rois.len()];
    let mut n_valid = 0usize;
    for r in trial.eye_epoch.rows() {
        if r[eye_col::VALID_LEFT] < 0.5 && r[eye_col::VALID_RIGHT] < 0.5 {
            continue;
        }
        n_valid += 1;
        let (x, y) = (r[eye_col::GAZE_X], r[eye_col::GAZE_Y]);
        for (c, roi) in counts.iter_mut().zip(rois) {
            if roi.rect.contains(x, y) {
                *c += 1;
            }
        }
    }
    if n_valid == 0 {
        return Err(Error::NoValidGaze(trial.event_id.clone()));
    }
    Ok(GazeStats {
        event_id: trial.event_id.clone(),
        group,
        n_valid,
        rois: rois
            .iter()
            .zip(counts)
            .map(|(roi, count)| RoiGaze {
                name: roi.name.clone(),
                count,
                ratio: count as f64 / n_valid as f64,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSummary {
    pub group: String,
    pub roi: String,
    pub mean_ratio: f64,
    pub n_trials: usize,
}

/// Mean ratio per (group, ROI name). Group label joins the group values with `/`.
pub fn summarize_gaze(stats: &[GazeStats]) -> Vec<GazeSummary> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for s in stats {
        let g = if s.group.is_empty() {
            "all".to_string()
        } else {
            s.group.values().cloned().collect::<Vec<_>>().join("/")
        };
        for r in &s.rois {
            let e = acc.entry((g.clone(), r.name.clone())).or_default();
            e.0 += r.ratio;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((group, roi), (sum, n))| GazeSummary {
            group,
            roi,
            mean_ratio: sum / n as f64,
            n_trials: n,
        })
        .collect()
}

/// Single-pass Pearson correlation (running co-moments). `None` for fewer than
/// two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        n += 1.0;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if n < 2.0 || sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub const FACTORS: [&str; 3] = ["face", "clothes", "color"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorR {
    pub factor: String,
    pub group: String,
    pub r: Option<f64>,
    pub n: usize,
    /// Composites skipped because a posterior was missing.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCorrelation {
    pub factors: Vec<FactorR>,
}

impl FactorCorrelation {
    /// Factor with the largest r in the pooled group.
    pub fn strongest(&self) -> Option<&str> {
        self.factors
            .iter()
            .filter(|f| f.group == "all")
            .filter_map(|f| Some((f.factor.as_str(), f.r?)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(f, _)| f)
    }
}

/// Pearson r between composite posteriors and each component's posterior,
/// pooled (`"all"`) and per group. `groups` maps composite id to group label.
pub fn factor_correlation(
    posteriors: &BTreeMap<String, f64>,
    composition: &BTreeMap<String, Composition>,
    groups: Option<&BTreeMap<String, String>>,
) -> Result<FactorCorrelation> {
    let mut labels = vec!["all".to_string()];
    if let Some(g) = groups {
        let mut v: Vec<String> = g.values().cloned().collect();
        v.sort();
        v.dedup();
        labels.extend(v);
    }
    let mut factors = Vec::new();
    for group in &labels {
        for (fi, factor) in FACTORS.iter().enumerate() {
            let (mut xs, mut ys, mut dropped) = (vec![], vec![], 0);
            for (comp, parts) in composition {
                if group != "all" && groups.and_then(|g| g.get(comp)) != Some(group) {
                    continue;
                }
                let part = [&parts.face, &parts.cloth, &parts.color][fi];
                match (posteriors.get(comp), posteriors.get(part)) {
                    (Some(a), Some(b)) if a.is_finite() && b.is_finite() => {
                        xs.push(*a);
                        ys.push(*b);
                    }
                    _ => dropped += 1,
                }
            }
            if group == "all" && xs.len() < 3 {
                return Err(Error::InsufficientPairs(xs.len()));
            }
            let r = if xs.len() >= 3 { pearson(&xs, &ys) } else { None };
            factors.push(FactorR {
                factor: factor.to_string(),
                group: group.clone(),
                r,
                n: xs.len(),
                dropped,
            });
        }
    }
    Ok(FactorCorrelation { factors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Training-set sizes for the sweep; sizes beyond a split's size use the whole split.
    pub sweep_sizes: Vec<usize>,
    pub ablation: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            sweep_sizes: vec![20, 40, 60, 80, 100, 130],
            ablation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub key: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Why the entry has no value.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub categories: Vec<AccuracyEntry>,
    pub pooled: AccuracyEntry,
    pub ablation: Vec<AccuracyEntry>,
    pub sweep: Vec<AccuracyEntry>,
    /// Out-of-fold posterior per event of the pooled run (first repeat).
    pub pooled_posteriors: BTreeMap<String, f64>,
}

fn entry(key: String, m: &FeatureMatrix, run: impl FnOnce() -> Result<crate::classify::CvResult>) -> (AccuracyEntry, Option<crate::classify::CvResult>) {
    match run() {
        Ok(r) => (
            AccuracyEntry {
                key,
                n: m.n_rows(),
                mean: Some(r.mean),
                std: Some(r.std),
                note: None,
            },
            Some(r),
        ),
        Err(e) => (
            AccuracyEntry {
                key,
                n: m.n_rows(),
                mean: None,
                std: None,
                note: Some(e.to_string()),
            },
            None,
        ),
    }
}

/// Per-category and pooled repeated k-fold accuracy, modality ablation on the
/// pooled set, and a training-size sweep.
pub fn accuracy_report(
    m: &FeatureMatrix,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
    cfg: &ReportConfig,
    seed: u64,
) -> Result<AccuracyReport> {
    m.validate()?;
    let cats: Vec<Category> = Category::ALL
        .into_iter()
        .filter(|c| m.categories.contains(c))
        .collect();
    let categories: Vec<AccuracyEntry> = cats
        .par_iter()
        .map(|&c| {
            let sub = m.select_rows(&m.category_rows(c));
            entry(c.name().to_string(), &sub, || cross_validate(&sub, train_cfg, cv, seed, None)).0
        })
        .collect();
    let (pooled, pooled_run) = entry("all".into(), m, || cross_validate(m, train_cfg, cv, seed, None));
    let pooled_posteriors = pooled_run
        .map(|r| {
            m.event_ids
                .iter()
                .cloned()
                .zip(r.oof_posteriors)
                .collect()
        })
        .unwrap_or_default();

    let mut ablation = Vec::new();
    if cfg.ablation {
        let variants = [("eeg", Some(Modality::Eeg)), ("eye", Some(Modality::Eye)), ("both", None)];
        ablation = variants
            .par_iter()
            .map(|(name, modality)| match modality {
                Some(md) => {
                    let sub = m.select_columns(&m.modality_columns(*md));
                    entry(name.to_string(), &sub, || cross_validate(&sub, train_cfg, cv, seed, None)).0
                }
                None => AccuracyEntry {
                    key: name.to_string(),
                    ..pooled.clone()
                },
            })
            .collect();
    }
    let sweep = cfg
        .sweep_sizes
        .par_iter()
        .map(|&s| {
            let (mut e, _) = entry(format!("train_{s}"), m, || cross_validate(m, train_cfg, cv, seed, Some(s)));
            e.n = s;
            e
        })
        .collect();
    Ok(AccuracyReport {
        categories,
        pooled,
        ablation,
        sweep,
        pooled_posteriors,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Flat CSV rows `scope,section,key,n,mean,std,note`.
pub fn accuracy_csv_rows(scope: &str, r: &AccuracyReport) -> Vec<[String; 7]> {
    let mut out = Vec::new();
    let sections = [
        ("category", r.categories.as_slice()),
        ("pooled", std::slice::from_ref(&r.pooled)),
        ("modality", r.ablation.as_slice()),
        ("train_size", r.sweep.as_slice()),
    ];
    for (sec, entries) in sections {
        for e in entries {
            out.push([
                scope.to_string(),
                sec.to_string(),
                e.key.clone(),
                e.n.to_string(),
                fmt_opt(e.mean),
                fmt_opt(e.std),
                e.note.clone().unwrap_or_default(),
            ]);
        }
    }
    out
}

pub fn write_csv(path: &Path, rows: &[[String; 7]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scope", "section", "key", "n", "mean", "std", "note"])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Two static bar charts: accuracy per key and mean gaze ratio per ROI.
pub fn render_svg(accuracy: &[(String, f64)], gaze: &[(String, f64)]) -> String {
    let bar_w = 60.0;
    let gap = 20.0;
    let h = 200.0;
    let n = accuracy.len().max(gaze.len()).max(1) as f64;
    let width = 60.0 + n * (bar_w + gap);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * h + 120.0
    );
    for (panel, (title, bars)) in [("Accuracy", accuracy), ("Gaze ratio", gaze)].iter().enumerate() {
        let top = 20.0 + panel as f64 * (h + 60.0);
        let _ = writeln!(s, r#"<text x="10" y="{}">{title}</text>"#, top - 5.0);
        let _ = writeln!(
            s,
            r#"<line x1="40" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
            top + h,
            width - 10.0
        );
        for (i, (label, v)) in bars.iter().enumerate() {
            let x = 50.0 + i as f64 * (bar_w + gap);
            let bh = v.clamp(0.0, 1.0) * h;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{:.2}" width="{bar_w}" height="{bh:.2}" fill="#4a7ab5"/>"##,
                top + h - bh
            );
            let _ = writeln!(s, r#"<text x="{x}" y="{:.2}">{v:.3}</text>"#, top + h - bh - 3.0);
            let _ = writeln!(s, r#"<text x="{x}" y="{}">{label}</text>"#, top + h + 14.0);
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, Rect};
    use ndarray::Array2;
    use std::collections::BTreeSet;

    fn trial_with(points: &[(f64, f64, bool)]) -> Trial {
        let eye = Array2::from_shape_fn((points.len(), 6), |(i, c)| {
            let (x, y, v) = points[i];
            match c {
                0 | 1 => 3.0,
                2 => x,
                3 => y,
                _ => v as u8 as f64,
            }
        });
        Trial {
            event_id: "t".into(),
            category: Category::Composite,
            eeg_epoch: Array2::zeros((0, 6)),
            eeg_rate_hz: 250.0,
            eye_epoch: eye,
            eye_rate_hz: 60.0,
            label: Some(Label::Like),
            luminance: None,
            quality_flags: BTreeSet::new(),
        }
    }

    fn rois() -> Vec<Roi> {
        let r = |n: &str, x, y| Roi {
            name: n.into(),
            rect: Rect { x, y, w: 0.5, h: 0.5 },
        };
        vec![r("face", 0.0, 0.0), r("clothes", 0.5, 0.5)]
    }

    #[test]
    fn all_inside_face() {
        let pts = vec![(0.25, 0.25, true); 120];
        let g = gaze_ratio(&trial_with(&pts), &rois(), BTreeMap::new()).unwrap();
        assert_eq!(g.rois[0].ratio, 1.0);
        assert_eq!(g.rois[1].ratio, 0.0);
    }

    #[test]
    fn invalid_samples_leave_the_denominator() {
        let mut pts = vec![(0.75, 0.75, true); 60];
        pts.extend(vec![(0.1, 0.1, false); 60]);
        let g = gaze_ratio(&trial_with(&pts), &rois(), BTreeMap::new()).unwrap();
        assert_eq!(g.n_valid, 60);
        assert_eq!(g.rois[1].ratio, 1.0);
    }

    #[test]
    fn boundary_counts_and_no_gaze() {
        let g = gaze_ratio(&trial_with(&[(0.5, 0.5, true)]), &rois(), BTreeMap::new()).unwrap();
        assert_eq!(g.rois[0].count, 1);
        assert_eq!(g.rois[1].count, 1);
        assert!(matches!(
            gaze_ratio(&trial_with(&[(0.5, 0.5, false)]), &rois(), BTreeMap::new()),
            Err(Error::NoValidGaze(_))
        ));
    }

    fn setup(n: usize, f: impl Fn(f64) -> [f64; 4]) -> (BTreeMap<String, f64>, BTreeMap<String, Composition>) {
        let mut post = BTreeMap::new();
        let mut comp = BTreeMap::new();
        for i in 0..n {
            let v = f(i as f64 / n as f64 + 0.01 * ((i * 7) % 5) as f64);
            let ids = [format!("c{i}"), format!("f{i}"), format!("k{i}"), format!("b{i}")];
            for (id, p) in ids.iter().zip(v) {
                post.insert(id.clone(), p);
            }
            comp.insert(
                ids[0].clone(),
                Composition {
                    face: ids[1].clone(),
                    cloth: ids[2].clone(),
                    color: ids[3].clone(),
                },
            );
        }
        (post, comp)
    }

    #[test]
    fn identical_and_mirrored_factors() {
        let (post, comp) = setup(10, |u| [u, u, (u * 13.0).sin(), 1.0 - u]);
        let fc = factor_correlation(&post, &comp, None).unwrap();
        assert!((fc.factors[0].r.unwrap() - 1.0).abs() < 1e-12);
        assert!((fc.factors[2].r.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(fc.strongest(), Some("face"));
    }

    #[test]
    fn too_few_pairs() {
        let (post, comp) = setup(2, |u| [u, u, u, u]);
        assert!(matches!(factor_correlation(&post, &comp, None), Err(Error::InsufficientPairs(2))));
    }

    #[test]
    fn missing_posteriors_are_dropped() {
        let (mut post, comp) = setup(6, |u| [u, u, u, u]);
        post.remove("f0");
        let fc = factor_correlation(&post, &comp, None).unwrap();
        assert_eq!(fc.factors[0].n, 5);
        assert_eq!(fc.factors[0].dropped, 1);
    }

    #[test]
    fn svg_is_well_formed() {
        let s = render_svg(&[("face".into(), 0.7)], &[("face".into(), 0.4)]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
    }
}
