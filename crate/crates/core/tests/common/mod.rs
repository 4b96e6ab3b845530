//! Test-only oracles and data generators shared by the integration suites.
//! Nothing here calls into the implementation path it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vocalpath::embedding::{elbo_terms, VaeModel};

/// Central finite difference of `recon + beta·kl` for every parameter, in
/// `[weights row-major, bias]` order per layer.
pub fn numeric_gradients(model: &VaeModel, batch: &DMatrix<f64>, eps: &DMatrix<f64>, beta: f64, h: f64) -> Vec<Vec<f64>> {
    let loss = |m: &VaeModel| elbo_terms(m, batch, eps).unwrap().loss(beta);
    let mut out = Vec::new();
    for layer in 0..4 {
        let (rows, cols) = model.layers()[layer].weights.shape();
        let mut g = Vec::with_capacity(rows * cols + rows);
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = model.clone();
                plus.layers_mut()[layer].weights[(r, c)] += h;
                let mut minus = model.clone();
                minus.layers_mut()[layer].weights[(r, c)] -= h;
                g.push((loss(&plus) - loss(&minus)) / (2.0 * h));
            }
        }
        for r in 0..rows {
            let mut plus = model.clone();
            plus.layers_mut()[layer].bias[r] += h;
            let mut minus = model.clone();
            minus.layers_mut()[layer].bias[r] -= h;
            g.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Exhaustive minimum over all monotone warping paths from (0,0) to (n-1,m-1)
/// with steps (1,0), (0,1), (1,1), optionally restricted to |i-j| <= band.
pub fn brute_force_dtw(cost: &[Vec<f64>], band: Option<usize>) -> f64 {
    fn walk(cost: &[Vec<f64>], band: Option<usize>, i: usize, j: usize, acc: f64, best: &mut f64) {
        if let Some(w) = band {
            if i.abs_diff(j) > w {
                return;
            }
        }
        let acc = acc + cost[i][j];
        let (n, m) = (cost.len(), cost[0].len());
        if i == n - 1 && j == m - 1 {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < n {
            walk(cost, band, i + 1, j, acc, best);
        }
        if j + 1 < m {
            walk(cost, band, i, j + 1, acc, best);
        }
        if i + 1 < n && j + 1 < m {
            walk(cost, band, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(cost, band, 0, 0, 0.0, &mut best);
    best
}

/// Cosine distance computed directly from the definition.
pub fn cosine_reference(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return if na < 1e-12 && nb < 1e-12 { 0.0 } else { 1.0 };
    }
    1.0 - dot / (na * nb)
}

/// Index of the largest-magnitude bin of a direct O(n²) DFT over `x`.
pub fn dft_peak_bin(x: &[f64]) -> usize {
    let n = x.len();
    let mut best = (0, 0.0);
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        let mag = re * re + im * im;
        if mag > best.1 {
            best = (k, mag);
        }
    }
    best.0
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn sine(freq_hz: f64, rate_hz: f64, n: usize, amplitude: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / rate_hz).sin())
        .collect()
}

pub const ROWS: usize = 32;
pub const COLS: usize = 32;
pub const UNIT_DIM: usize = ROWS * COLS;

/// Unit images of two kinds: a steady band (cluster 0) and a rising sweep
/// (cluster 1), with jittered position over low-level background noise.
pub fn two_cluster_images(n_each: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(2 * n_each, ROWS * COLS);
    let mut labels = Vec::new();
    for i in 0..2 * n_each {
        let kind = i % 2;
        let shift: f64 = rng.random_range(-1.5..1.5);
        for r in 0..ROWS {
            let centre = if kind == 0 { 8.0 + shift } else { 4.0 + 0.75 * r as f64 + shift };
            for c in 0..COLS {
                let d = c as f64 - centre;
                let v = 0.9 * (-0.5 * d * d / 2.0).exp() + rng.random_range(0.0..0.08);
                data[(i, r * COLS + c)] = v.clamp(0.0, 1.0);
            }
        }
        labels.push(kind);
    }
    (data, labels)
}

/// Iterates `z_t = A z_{t-1} + noise` from `z0` for `steps` states.
pub fn simulate_var1(a: &DMatrix<f64>, z0: &[f64], steps: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut z = DVector::from_column_slice(z0);
    let mut out = vec![z0.to_vec()];
    for _ in 1..steps {
        z = a * &z;
        for v in z.iter_mut() {
            *v += noise * rng.sample::<f64, _>(StandardNormal);
        }
        out.push(z.iter().copied().collect());
    }
    out
}
