//! Soft-margin SVM dual solved by sequential minimal optimization.
//!
//! Working pairs follow the second-order rule of Fan, Chen and Lin (2005):
//! `i` maximizes the first-order violation, `j` minimizes the second-order
//! gain bound. Selection is fully deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    pub degree: u32,
    /// `None` resolves to `1 / n_features` at training time.
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub c: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            degree: 4,
            gamma: None,
            coef0: 1.0,
            c: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidConfig("kernel degree must be >= 1".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("C = {} must be positive", self.c)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig(format!("gamma = {g} must be positive")));
            }
        }
        Ok(())
    }

    pub fn resolved(&self, n_features: usize) -> KernelParams {
        KernelParams {
            gamma: Some(self.gamma.unwrap_or(1.0 / n_features.max(1) as f64)),
            ..*self
        }
    }

    /// `(gamma <x, z> + coef0)^degree`; gamma must be resolved.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
        (self.gamma.unwrap_or(1.0) * dot + self.coef0).powi(self.degree as i32)
    }

    pub fn gram(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&rows[i], &rows[j]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Intercept: `f(x) = sum_i alpha_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    /// `0.5 a'Qa - sum(a)` at the solution.
    pub objective: f64,
    pub iterations: usize,
    /// Maximal violating-pair gap at exit.
    pub kkt_gap: f64,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Solves `min 0.5 a'Qa - e'a` s.t. `y'a = 0`, `0 <= a <= C` with `Q_ij = y_i y_j K_ij`.
pub fn smo_solve(k: &[Vec<f64>], y: &[f64], c: f64, cfg: &SmoConfig) -> Result<DualSolution> {
    let n = y.len();
    if n < 4 {
        return Err(Error::TooFewSamples { need: 4, got: n });
    }
    if y.iter().all(|v| *v > 0.0) || y.iter().all(|v| *v < 0.0) {
        return Err(Error::SingleClass);
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iter = 0;
    let gap = loop {
        let (mut gmax, mut i_sel) = (f64::NEG_INFINITY, usize::MAX);
        for t in 0..n {
            if in_up(y[t], alpha[t], c) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let (mut gmax2, mut j_sel, mut obj_min) = (f64::NEG_INFINITY, usize::MAX, f64::INFINITY);
        for t in 0..n {
            if !in_low(y[t], alpha[t], c) {
                continue;
            }
            gmax2 = gmax2.max(y[t] * grad[t]);
            if i_sel == usize::MAX {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let mut a = k[i_sel][i_sel] + k[t][t] - 2.0 * k[i_sel][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < cfg.tol || j_sel == usize::MAX {
            break gap.max(0.0);
        }
        if iter >= cfg.max_iter {
            return Err(Error::NotConverged {
                what: "SMO",
                iterations: iter,
            });
        }
        iter += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    };

    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() / 2.0;
    Ok(DualSolution {
        alpha,
        bias: -rho,
        objective,
        iterations: iter,
        kkt_gap: gap,
    })
}

/// Dual objective `0.5 a'Qa - sum(a)` evaluated directly.
pub fn dual_objective(k: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_degree_two() {
        let x = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let kp = KernelParams {
            degree: 2,
            gamma: Some(1.0),
            coef0: 1.0,
            c: 10.0,
        };
        let k = kp.gram(&x);
        let sol = smo_solve(&k, &y, kp.c, &SmoConfig::default()).unwrap();
        for (i, xi) in x.iter().enumerate() {
            let f: f64 = (0..4).map(|j| sol.alpha[j] * y[j] * kp.eval(&x[j], xi)).sum::<f64>() + sol.bias;
            assert!(f * y[i] > 0.0);
        }
        let s: f64 = sol.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(s.abs() < 1e-9);
        assert!((sol.objective - dual_objective(&k, &y, &sol.alpha)).abs() < 1e-9);
    }

    #[test]
    fn conflicting_duplicates_hit_the_box() {
        let x = vec![vec![0.0], vec![0.0], vec![2.0], vec![-2.0]];
        let y = [1.0, -1.0, 1.0, -1.0];
        let kp = KernelParams {
            degree: 1,
            gamma: Some(1.0),
            coef0: 0.0,
            c: 1.0,
        };
        let sol = smo_solve(&kp.gram(&x), &y, 1.0, &SmoConfig::default()).unwrap();
        assert!((sol.alpha[0] - 1.0).abs() < 1e-9 && (sol.alpha[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let k = vec![vec![1.0; 4]; 4];
        assert!(matches!(
            smo_solve(&k, &[1.0; 4], 1.0, &SmoConfig::default()),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            smo_solve(&k[..3], &[1.0, -1.0, 1.0], 1.0, &SmoConfig::default()),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
