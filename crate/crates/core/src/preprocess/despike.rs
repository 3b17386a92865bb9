use serde::{Deserialize, Serialize};

use crate::dsp::wavelet::{pad_symmetric, wavedec, waverec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DespikeConfig {
    pub levels: usize,
    /// Threshold in robust standard deviations (`MAD / 0.6745`).
    pub threshold_sigmas: f64,
}

impl Default for DespikeConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            threshold_sigmas: 4.0,
        }
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mad(v: &[f64]) -> f64 {
    let mut w = v.to_vec();
    let m = median(&mut w);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev)
}

/// Clips outlying detail coefficients of a db4 decomposition to
/// `±k·MAD/0.6745` per level and reconstructs. Returns the cleaned signal and
/// the number of coefficients that were clipped.
pub fn wavelet_despike(x: &[f64], cfg: &DespikeConfig) -> Result<(Vec<f64>, usize)> {
    let need = 1usize << cfg.levels;
    if x.len() < need {
        return Err(Error::TooShort {
            need,
            got: x.len(),
        });
    }
    let padded = pad_symmetric(x, cfg.levels);
    let mut dec = wavedec(&padded, cfg.levels);
    let mut clipped = 0;
    for d in dec.details.iter_mut() {
        let thr = cfg.threshold_sigmas * mad(d) / 0.6745;
        for c in d.iter_mut() {
            if c.abs() > thr {
                *c = thr.copysign(*c);
                clipped += 1;
            }
        }
    }
    let mut y = waverec(&dec);
    y.truncate(x.len());
    Ok((y, clipped))
}
