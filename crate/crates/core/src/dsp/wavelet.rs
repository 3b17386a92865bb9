//! Periodized orthogonal discrete wavelet transform (Daubechies-4, 8 taps).

/// Scaling (reconstruction low-pass) filter of db4.
pub const DB4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_6,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_08,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

fn wavelet_filter(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * h[l - 1 - k])
        .collect()
}

/// Multi-level decomposition: `approx` is the coarsest approximation,
/// `details[0]` the finest detail band (D1).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    /// Length of the (padded) signal that was transformed.
    pub padded_len: usize,
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for k in 0..h.len() {
            let v = x[(2 * i + k) % n];
            sa += h[k] * v;
            sd += g[k] * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for i in 0..a.len() {
        for k in 0..h.len() {
            x[(2 * i + k) % n] += h[k] * a[i] + g[k] * d[i];
        }
    }
    x
}

/// Decomposes a signal whose length is a multiple of `2^levels`.
pub fn wavedec(x: &[f64], levels: usize) -> Decomposition {
    debug_assert!(x.len().is_multiple_of(1 << levels));
    let h = DB4;
    let g = wavelet_filter(&h);
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx, &h, &g);
        details.push(d);
        approx = a;
    }
    Decomposition {
        approx,
        details,
        padded_len: x.len(),
    }
}

pub fn waverec(dec: &Decomposition) -> Vec<f64> {
    let h = DB4;
    let g = wavelet_filter(&h);
    let mut x = dec.approx.clone();
    for d in dec.details.iter().rev() {
        x = synthesis_step(&x, d, &h, &g);
    }
    x
}

pub fn padded_len(n: usize, levels: usize) -> usize {
    let block = 1usize << levels;
    n.div_ceil(block) * block
}

/// Zero padding; keeps total energy unchanged.
pub fn pad_zero(x: &[f64], levels: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(padded_len(x.len(), levels), 0.0);
    v
}

/// Mirror padding (`... x[n-2], x[n-1] | x[n-1], x[n-2] ...`); keeps constants constant.
pub fn pad_symmetric(x: &[f64], levels: usize) -> Vec<f64> {
    let n = x.len();
    let target = padded_len(n, levels);
    let mut v = x.to_vec();
    let mut j = 0usize;
    while v.len() < target {
        let idx = n - 1 - (j % n);
        v.push(x[idx]);
        j += 1;
    }
    v
}
