//! Reference computations written independently of the library.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub fn fbm_cov(hurst: f64, s: f64, t: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * (s.powf(p) + t.powf(p) - (t - s).abs().powf(p))
}

pub fn fgn_gamma(hurst: f64, lag: f64, tau: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * ((tau - lag).abs().powf(p) - 2.0 * tau.abs().powf(p) + (tau + lag).abs().powf(p))
}

/// |t + h|^{2H} − |t|^{2H}
pub fn fgn_increment(hurst: f64, lag: f64, t: f64) -> f64 {
    let p = 2.0 * hurst;
    (t + lag).abs().powf(p) - t.abs().powf(p)
}

/// Covariance of Y(·+h) − Y(·) from the covariance of Y.
pub fn increment_cov(base: impl Fn(f64, f64) -> f64, lag: f64, s: f64, t: f64) -> f64 {
    base(s + lag, t + lag) - base(s + lag, t) - base(s, t + lag) + base(s, t)
}

pub fn central_diff(f: impl Fn(f64) -> f64, t: f64, step: f64) -> f64 {
    (f(t + step) - f(t - step)) / (2.0 * step)
}

pub fn central_diff2(f: impl Fn(f64) -> f64, t: f64, step: f64) -> f64 {
    (f(t + step) - 2.0 * f(t) + f(t - step)) / (step * step)
}

/// Smallest energy wᵀMw over measures with at most three atoms and weights
/// on the lattice {0, 0.01, …, 1}.
pub fn brute_force_min(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i..n {
            for l in j..n {
                let (a, b, c) = (m[i][i], m[j][j], m[l][l]);
                let (ab, ac, bc) = (m[i][j], m[i][l], m[j][l]);
                for k1 in 0..=100 {
                    let w1 = k1 as f64 / 100.0;
                    for k2 in 0..=(100 - k1) {
                        let w2 = k2 as f64 / 100.0;
                        let w3 = (100 - k1 - k2) as f64 / 100.0;
                        let e = w1 * w1 * a
                            + w2 * w2 * b
                            + w3 * w3 * c
                            + 2.0 * (w1 * w2 * ab + w1 * w3 * ac + w2 * w3 * bc);
                        if e < best {
                            best = e;
                        }
                    }
                }
            }
        }
    }
    best
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// P(min_{t∈[a,b]} W(t) > u) for standard Brownian motion, by conditioning on
/// W(a) and the reflection principle.
pub fn reflection_probability(u: f64, a: f64, b: f64) -> f64 {
    let start = Normal::new(0.0, a.sqrt()).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let s = (b - a).sqrt();
    let f = |x: f64| start.pdf(x) * (2.0 * std.cdf((x - u) / s) - 1.0);
    integrate(f, u, u + 14.0 * a.sqrt(), 1e-15)
}

/// P(min_i W(t_i) > u) for Brownian motion observed on the n-node grid of
/// [a, b]: the density of W(t_i) on (u, ∞) is propagated through the
/// Gaussian transition kernel node by node (trapezoid rule on `m` points).
pub fn discrete_brownian_probability(u: f64, a: f64, b: f64, n: usize, m: usize) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let top = u + 7.0 * a.sqrt().max(1.0);
    let dx = (top - u) / (m - 1) as f64;
    let xs: Vec<f64> = (0..m).map(|i| u + i as f64 * dx).collect();
    let mut w = vec![dx; m];
    w[0] *= 0.5;
    w[m - 1] *= 0.5;
    let sd0 = a.sqrt();
    let mut density: Vec<f64> = xs.iter().map(|&x| std.pdf(x / sd0) / sd0).collect();
    let dt = (b - a) / (n - 1) as f64;
    let sd = dt.sqrt();
    let band = ((9.0 * sd / dx).ceil() as usize).min(m - 1);
    let kernel: Vec<f64> = (0..=band).map(|k| std.pdf(k as f64 * dx / sd) / sd).collect();
    for _ in 1..n {
        let weighted: Vec<f64> = density.iter().zip(&w).map(|(d, w)| d * w).collect();
        let mut next = vec![0.0; m];
        for (i, out) in next.iter_mut().enumerate() {
            let lo = i.saturating_sub(band);
            let hi = (i + band).min(m - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += weighted[j] * kernel[i.abs_diff(j)];
            }
            *out = s;
        }
        density = next;
    }
    density.iter().zip(&w).map(|(d, w)| d * w).sum()
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_gaussmin"))
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Runs the binary and returns (exit code, stdout).
pub fn run(args: &[&str]) -> (i32, String) {
    let out = std::process::Command::new(bin()).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

/// `key=value` lookup in command output.
pub fn value(text: &str, key: &str) -> Option<f64> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .and_then(|v| v.trim().parse().ok())
}

pub fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}
