//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random array for threshold tests: length 32..=4096, drawn from a
/// two-component Gaussian mixture, a single Gaussian, a uniform or an
/// exponential, chosen by the seed.
pub fn threshold_case(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let n = r.random_range(32..=4096);
    match seed % 4 {
        0 => {
            let m0 = r.random_range(-2.0..2.0);
            let m1 = m0 + r.random_range(0.5..6.0);
            let (s0, s1) = (r.random_range(0.1..1.5), r.random_range(0.1..1.5));
            let w = r.random_range(0.05..0.95);
            let a = Normal::new(m0, s0).unwrap();
            let b = Normal::new(m1, s1).unwrap();
            (0..n)
                .map(|_| if r.random::<f64>() < w { a.sample(&mut r) } else { b.sample(&mut r) })
                .collect()
        }
        1 => {
            let d = Normal::new(r.random_range(-5.0..5.0), r.random_range(0.01..3.0)).unwrap();
            (0..n).map(|_| d.sample(&mut r)).collect()
        }
        2 => (0..n).map(|_| r.random_range(0.0..1.0)).collect(),
        _ => {
            let d = Exp::new(r.random_range(0.2..5.0)).unwrap();
            (0..n).map(|_| d.sample(&mut r)).collect()
        }
    }
}

/// Every split `k` (lower class = bins `0..=k`) whose between-class variance
/// `w0·w1·(μ0 − μ1)²` is within a relative 1e-12 of the maximum, computed
/// exhaustively over a 256-bin histogram of the min–max scaled values.
pub fn otsu_best_splits(values: &[f64]) -> Vec<usize> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut hist = [0.0f64; 256];
    for &v in values {
        let b = ((v - lo) / (hi - lo) * 256.0).floor() as usize;
        hist[b.min(255)] += 1.0;
    }
    let n: f64 = hist.iter().sum();
    let scores: Vec<f64> = (0..255)
        .map(|k| {
            let n0: f64 = hist[..=k].iter().sum();
            let n1 = n - n0;
            if n0 == 0.0 || n1 == 0.0 {
                return f64::NEG_INFINITY;
            }
            let m0 = (0..=k).map(|i| i as f64 * hist[i]).sum::<f64>() / n0;
            let m1 = (k + 1..256).map(|i| i as f64 * hist[i]).sum::<f64>() / n1;
            (n0 / n) * (n1 / n) * (m0 - m1).powi(2)
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..255).filter(|&k| scores[k] >= best * (1.0 - 1e-12)).collect()
}

/// Bin of `v` in the same 256-bin layout.
pub fn bin_of(v: f64, lo: f64, hi: f64) -> usize {
    (((v - lo) / (hi - lo) * 256.0).floor() as usize).min(255)
}

/// `P(score₊ > score₋) + ½·P(score₊ = score₋)` over all positive/negative
/// pairs.
pub fn auc_by_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &q) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn cubic_kernel(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
    }
    (dot / a.len() as f64 + 1.0).powi(3)
}

/// Squared MMD, averaging the kernel over every pair including self-pairs.
pub fn kid_by_loops(r: &[Vec<f64>], t: &[Vec<f64>]) -> f64 {
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in a {
            for y in b {
                s += cubic_kernel(x, y);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    mean(r, r) + mean(t, t) - 2.0 * mean(r, t)
}

pub fn random_rows(seed: u64, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0) + shift).collect()).collect()
}
