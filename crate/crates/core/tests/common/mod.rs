//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vrattract::features::{Column, FeatureMatrix, Modality};
use vrattract::model::{Category, Label};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn tone(freq: f64, amp: f64, rate: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin())
        .collect()
}

/// One-sided periodogram from a direct O(n^2) DFT, integrated over bins in `[lo, hi)`.
pub fn dft_band_power(x: &[f64], rate: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let df = rate / n as f64;
    let mut total = 0.0;
    for k in 0..=n / 2 {
        let f = k as f64 * df;
        if f < lo || f >= hi {
            continue;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let ph = -2.0 * PI * (k * t) as f64 / n as f64;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        let mut p = (re * re + im * im) / (n as f64 * rate);
        if k != 0 && !(n.is_multiple_of(2) && k == n / 2) {
            p *= 2.0;
        }
        total += p * df;
    }
    total
}

/// Exact minimum of `0.5 a'Qa - e'a` s.t. `y'a = 0`, `0 <= a <= c`, by
/// enumerating which coordinates sit at 0, at `c`, or strictly inside, and
/// solving the equality-constrained stationarity system of the free block.
pub fn brute_force_dual(k: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[i][j]);
    let objective = |a: &DVector<f64>| 0.5 * (a.transpose() * &q * a)[(0, 0)] - a.sum();
    let mut best = f64::INFINITY;
    let total = 3usize.pow(n as u32);
    let mut state = vec![0u8; n];
    for code in 0..total {
        let mut v = code;
        for s in state.iter_mut() {
            *s = (v % 3) as u8;
            v /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a = DVector::from_fn(n, |i, _| if state[i] == 1 { c } else { 0.0 });
        let fixed_balance: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| y[i] * a[i]).sum();
        if free.is_empty() {
            if fixed_balance.abs() < 1e-9 {
                best = best.min(objective(&a));
            }
            continue;
        }
        let m = free.len();
        let mut lhs = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                lhs[(r, s)] = q[(i, j)];
            }
            lhs[(r, m)] = y[i];
            lhs[(m, r)] = y[i];
            let fixed_grad: f64 = (0..n).filter(|&j| state[j] != 2).map(|j| q[(i, j)] * a[j]).sum();
            rhs[r] = 1.0 - fixed_grad;
        }
        rhs[m] = -fixed_balance;
        let svd = lhs.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
        if (&lhs * &sol - &rhs).norm() > 1e-8 * (1.0 + rhs.norm()) {
            continue;
        }
        let mut ok = true;
        for (r, &i) in free.iter().enumerate() {
            if sol[r] < -1e-9 || sol[r] > c + 1e-9 {
                ok = false;
                break;
            }
            a[i] = sol[r].clamp(0.0, c);
        }
        if ok {
            best = best.min(objective(&a));
        }
    }
    best
}

/// Row sums of `sum_{l=1..terms} (rA)^l` by repeated matrix-vector products.
pub fn truncated_path_scores(a: &DMatrix<f64>, r: f64, terms: usize) -> Vec<f64> {
    let p = a.nrows();
    let ra = a * r;
    let mut v = DVector::from_element(p, 1.0);
    let mut acc = DVector::zeros(p);
    for _ in 0..terms {
        v = &ra * v;
        acc += &v;
    }
    acc.iter().copied().collect()
}

/// Largest eigenvalue modulus by power iteration (for non-negative symmetric `a`).
pub fn power_radius(a: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_element(a.nrows(), 1.0);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / v.norm();
        v = w / norm;
        if (next - lambda).abs() < 1e-15 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub fn matrix(values: Array2<f64>, labels: Vec<Label>) -> FeatureMatrix {
    let n = values.nrows();
    FeatureMatrix {
        columns: (0..values.ncols())
            .map(|j| Column {
                name: format!("f{j}"),
                modality: Modality::Eeg,
            })
            .collect(),
        values,
        labels,
        event_ids: (0..n).map(|i| format!("e{i:03}")).collect(),
        categories: vec![Category::Face; n],
    }
}

pub fn alternating_labels(n: usize) -> Vec<Label> {
    (0..n)
        .map(|i| if i % 2 == 0 { Label::Like } else { Label::Dislike })
        .collect()
}
