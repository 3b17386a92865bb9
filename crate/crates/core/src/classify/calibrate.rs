//! Sigmoid posterior fit `p(like | f) = 1 / (1 + exp(A f + B))`.
//!
//! Regularized maximum likelihood with Platt's smoothed targets, solved by
//! Newton steps with backtracking (Lin, Lin and Weng, 2007).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const SIGMA: f64 = 1e-12;
pub const CALIBRATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid {
    pub a: f64,
    pub b: f64,
}

impl Sigmoid {
    pub fn posterior(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

fn neg_log_lik(dec: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    dec.iter()
        .zip(t)
        .map(|(f, t)| {
            let z = f * a + b;
            if z >= 0.0 {
                t * z + (-z).exp().ln_1p()
            } else {
                (t - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// `positive[i]` is true for Like.
pub fn calibrate(decision: &[f64], positive: &[bool]) -> Result<Sigmoid> {
    let n1 = positive.iter().filter(|p| **p).count() as f64;
    let n0 = positive.len() as f64 - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::DegenerateLabels("calibration needs both classes".into()));
    }
    let hi = (n1 + 1.0) / (n1 + 2.0);
    let lo = 1.0 / (n0 + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let (mut a, mut b) = (0.0, ((n0 + 1.0) / (n1 + 1.0)).ln());
    let mut fval = neg_log_lik(decision, &t, a, b);

    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (f, ti) in decision.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < CALIBRATION_TOL && g2.abs() < CALIBRATION_TOL {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = neg_log_lik(decision, &t, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(Sigmoid { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        let dec: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { -1.0 }).collect();
        let pos: Vec<bool> = (0..40).map(|i| i < 20).collect();
        let s = calibrate(&dec, &pos).unwrap();
        assert!(s.a < 0.0);
        assert!(s.posterior(1.0) >= 0.9);
        assert!(s.posterior(-1.0) <= 0.1);
    }

    #[test]
    fn uninformative_scores_give_the_prior() {
        let dec = vec![0.0; 50];
        let pos: Vec<bool> = (0..50).map(|i| i < 15).collect();
        let p = calibrate(&dec, &pos).unwrap().posterior(0.0);
        assert!((p - 0.3).abs() < 0.02, "{p}");
    }

    #[test]
    fn flipped_labels_mirror() {
        let dec: Vec<f64> = (0..30).map(|i| ((i * 13 % 17) as f64 - 8.0) / 4.0).collect();
        let pos: Vec<bool> = dec.iter().enumerate().map(|(i, d)| *d + (i % 3) as f64 - 1.0 > 0.0).collect();
        let neg: Vec<bool> = pos.iter().map(|p| !p).collect();
        let s = calibrate(&dec, &pos).unwrap();
        let m = calibrate(&dec, &neg).unwrap();
        for f in &dec {
            assert!((s.posterior(*f) - (1.0 - m.posterior(*f))).abs() < 1e-6);
        }
    }

    #[test]
    fn one_class_fails() {
        assert!(matches!(calibrate(&[1.0, 2.0], &[true, true]), Err(Error::DegenerateLabels(_))));
    }
}
