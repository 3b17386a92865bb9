//! Fixed-point ICA (symmetric decorrelation, log-cosh contrast) and
//! component rejection against an ocular proxy.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ArtifactReport;
use crate::dsp::filter::{butterworth_lowpass, SosChain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcaConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Reject when |corr(component, ocular proxy)| exceeds this.
    pub eog_corr_threshold: f64,
    /// Reject when |excess kurtosis| exceeds this.
    pub kurtosis_threshold: f64,
    /// Low-pass cutoff of the ocular proxy (mean of the two frontopolar channels).
    pub eog_lowpass_hz: f64,
    /// Channel indices averaged into the ocular proxy.
    pub eog_channels: Vec<usize>,
    pub min_duration_s: f64,
    pub min_channels: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            seed: 0,
            eog_corr_threshold: 0.7,
            kurtosis_threshold: 5.0,
            eog_lowpass_hz: 4.0,
            eog_channels: vec![0, 1],
            min_duration_s: 10.0,
            min_channels: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub index: usize,
    pub eog_corr: f64,
    pub excess_kurtosis: f64,
    pub rejected: bool,
}

/// A fitted decomposition, applied to new data as
/// `x ↦ M·diag(keep)·U·(x − μ) + μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedIca {
    pub mean: DVector<f64>,
    pub unmixing: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
    pub rejected: Vec<usize>,
    pub converged: bool,
}

impl FittedIca {
    pub fn identity(n_channels: usize) -> Self {
        Self {
            mean: DVector::zeros(n_channels),
            unmixing: DMatrix::identity(n_channels, n_channels),
            mixing: DMatrix::identity(n_channels, n_channels),
            rejected: vec![],
            converged: false,
        }
    }

    /// Source activations `[n_components, n_samples]`.
    pub fn sources(&self, data: ArrayView2<f64>) -> DMatrix<f64> {
        let x = centered(data, &self.mean);
        &self.unmixing * x
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Array2<f64> {
        self.remix(data, &self.rejected)
    }

    /// Reconstructs `data` with the listed components zeroed.
    pub fn remix(&self, data: ArrayView2<f64>, zeroed: &[usize]) -> Array2<f64> {
        let mut s = self.sources(data);
        for &k in zeroed {
            s.row_mut(k).fill(0.0);
        }
        let y = &self.mixing * s;
        let (n, c) = data.dim();
        Array2::from_shape_fn((n, c), |(i, j)| y[(j, i)] + self.mean[j])
    }
}

/// `[channels, samples]` with the per-channel mean removed.
fn centered(data: ArrayView2<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let (n, c) = data.dim();
    DMatrix::from_fn(c, n, |j, i| data[[i, j]] - mean[j])
}

fn sym_inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| l <= max * 1e-12 || l <= 0.0) {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

fn decorrelate(w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    sym_inv_sqrt(&(w * w.transpose())).map(|s| s * w)
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub(crate) fn excess_kurtosis(a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in a {
        let d = (x - m) * (x - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

struct Unmixing {
    w: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

fn fastica_symmetric(z: &DMatrix<f64>, cfg: &IcaConfig) -> Option<Unmixing> {
    let (c, n) = z.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::from_fn(c, c, |_, _| StandardNormal.sample(&mut rng));
    let mut w = decorrelate(&init)?;
    let nf = n as f64;
    for it in 1..=cfg.max_iter {
        let mut u = &w * z;
        let mut gprime_mean = DVector::zeros(c);
        for i in 0..c {
            let mut acc = 0.0;
            for v in u.row_mut(i).iter_mut() {
                let t = v.tanh();
                *v = t;
                acc += 1.0 - t * t;
            }
            gprime_mean[i] = acc / nf;
        }
        let mut w_new = (u * z.transpose()) / nf;
        for i in 0..c {
            let row = w.row(i) * gprime_mean[i];
            let mut r = w_new.row_mut(i);
            r -= row;
        }
        let w_new = decorrelate(&w_new)?;
        let lim = (0..c)
            .map(|i| (1.0 - w_new.row(i).dot(&w.row(i)).abs()).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < cfg.tol {
            return Some(Unmixing {
                w,
                iterations: it,
                converged: true,
            });
        }
    }
    Some(Unmixing {
        w,
        iterations: cfg.max_iter,
        converged: false,
    })
}

/// Fits ICA on continuous multichannel data `[n_samples, n_channels]` and
/// marks ocular or spiky components for rejection.
///
/// A decomposition that fails to converge (or rank-deficient data) falls back
/// to the identity transform with `ica_converged = false`; nothing is rejected.
pub fn fit_ica(data: ArrayView2<f64>, rate_hz: f64, cfg: &IcaConfig) -> Result<(FittedIca, ArtifactReport)> {
    let (n, c) = data.dim();
    if c < cfg.min_channels {
        return Err(Error::TooFewChannels {
            need: cfg.min_channels,
            got: c,
        });
    }
    let need = (cfg.min_duration_s * rate_hz).ceil() as usize;
    if n < need {
        return Err(Error::TooShort { need, got: n });
    }

    let mean = DVector::from_fn(c, |j, _| data.column(j).sum() / n as f64);
    let x = centered(data, &mean);
    let cov = (&x * x.transpose()) / n as f64;
    let fallback = |iterations| {
        log::warn!("ICA did not converge; using identity transform");
        (
            FittedIca::identity(c),
            ArtifactReport {
                n_components_removed: 0,
                removed_indices: vec![],
                despiked_coefficients: vec![0; c],
                ica_converged: false,
                ica_iterations: iterations,
                components: vec![],
            },
        )
    };
    let Some(whitening) = sym_inv_sqrt(&cov) else {
        return Ok(fallback(0));
    };
    let z = &whitening * &x;
    let Some(fit) = fastica_symmetric(&z, cfg) else {
        return Ok(fallback(0));
    };
    if !fit.converged {
        return Ok(fallback(fit.iterations));
    }
    let unmixing = &fit.w * &whitening;
    let Some(mixing) = unmixing.clone().try_inverse() else {
        return Ok(fallback(fit.iterations));
    };

    let sources = &unmixing * &x;
    let proxy = ocular_proxy(data, rate_hz, cfg);
    let mut components = Vec::with_capacity(c);
    let mut rejected = Vec::new();
    for k in 0..c {
        let s: Vec<f64> = sources.row(k).iter().copied().collect();
        let eog_corr = proxy.as_ref().map(|p| pearson(&s, p)).unwrap_or(0.0);
        let excess_kurtosis = excess_kurtosis(&s);
        let reject = eog_corr.abs() > cfg.eog_corr_threshold
            || excess_kurtosis.abs() > cfg.kurtosis_threshold;
        if reject {
            rejected.push(k);
        }
        components.push(ComponentStats {
            index: k,
            eog_corr,
            excess_kurtosis,
            rejected: reject,
        });
    }

    let report = ArtifactReport {
        n_components_removed: rejected.len(),
        removed_indices: rejected.clone(),
        despiked_coefficients: vec![0; c],
        ica_converged: true,
        ica_iterations: fit.iterations,
        components,
    };
    Ok((
        FittedIca {
            mean,
            unmixing,
            mixing,
            rejected,
            converged: true,
        },
        report,
    ))
}

fn ocular_proxy(data: ArrayView2<f64>, rate_hz: f64, cfg: &IcaConfig) -> Option<Vec<f64>> {
    if cfg.eog_channels.is_empty() || cfg.eog_channels.iter().any(|&j| j >= data.ncols()) {
        return None;
    }
    let k = cfg.eog_channels.len() as f64;
    let avg: Vec<f64> = data
        .rows()
        .into_iter()
        .map(|r| cfg.eog_channels.iter().map(|&j| r[j]).sum::<f64>() / k)
        .collect();
    if cfg.eog_lowpass_hz > 0.0 && cfg.eog_lowpass_hz < rate_hz / 2.0 {
        Some(SosChain::new(butterworth_lowpass(4, cfg.eog_lowpass_hz, rate_hz)).filtfilt(&avg))
    } else {
        Some(avg)
    }
}

/// Fits on `data` and returns it cleaned.
pub fn ica_artifact_reject(data: ArrayView2<f64>, rate_hz: f64, cfg: &IcaConfig) -> Result<(Array2<f64>, ArtifactReport)> {
    let (ica, report) = fit_ica(data, rate_hz, cfg)?;
    Ok((ica.apply(data), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn mixed_noise(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Laplacian-ish sources (identifiable) through a fixed mixing matrix
        let src = Array2::from_shape_fn((n, 6), |_| {
            let u: f64 = rng.random::<f64>() - 0.5;
            -u.signum() * (1.0 - 2.0 * u.abs()).max(1e-12).ln()
        });
        let mix = Array2::from_shape_fn((6, 6), |(i, j)| if i == j { 1.0 } else { 0.3 / (1 + i + j) as f64 });
        src.dot(&mix.t())
    }

    #[test]
    fn preconditions() {
        let x = Array2::<f64>::zeros((5000, 4));
        assert!(matches!(
            fit_ica(x.view(), 250.0, &IcaConfig::default()),
            Err(Error::TooFewChannels { need: 6, got: 4 })
        ));
        let x = Array2::<f64>::zeros((1000, 6));
        assert!(matches!(
            fit_ica(x.view(), 250.0, &IcaConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn empty_rejection_reconstructs_input() {
        let x = mixed_noise(5000, 3);
        let (ica, report) = fit_ica(x.view(), 250.0, &IcaConfig::default()).unwrap();
        assert!(report.ica_converged);
        let y = ica.remix(x.view(), &[]);
        let num = (&y - &x).mapv(|v| v * v).sum().sqrt();
        let den = x.mapv(|v| v * v).sum().sqrt();
        assert!(num / den < 1e-9, "{}", num / den);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = mixed_noise(4000, 5);
        let a = fit_ica(x.view(), 250.0, &IcaConfig::default()).unwrap().0;
        let b = fit_ica(x.view(), 250.0, &IcaConfig::default()).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn rank_deficient_data_falls_back_to_identity() {
        let x = Array2::<f64>::zeros((5000, 6));
        let (ica, report) = fit_ica(x.view(), 250.0, &IcaConfig::default()).unwrap();
        assert!(!report.ica_converged);
        assert_eq!(ica.apply(x.view()), x);
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let x = mixed_noise(4000, 9);
        let cfg = IcaConfig {
            max_iter: 1,
            tol: 0.0,
            ..Default::default()
        };
        let (_, report) = fit_ica(x.view(), 250.0, &cfg).unwrap();
        assert!(!report.ica_converged);
        assert_eq!(report.n_components_removed, 0);
    }

    #[test]
    fn moments() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
        // two-point symmetric distribution has excess kurtosis -2
        assert!((excess_kurtosis(&[1.0, -1.0, 1.0, -1.0]) + 2.0).abs() < 1e-12);
    }
}
