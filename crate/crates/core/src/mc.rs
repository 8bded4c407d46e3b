//! Crude Monte Carlo for P(min_i X(t_i) > u) on a grid.
//!
//! Paths are x = Lz with L the lower Cholesky factor of the covariance
//! matrix. Trial k draws its normals from the ChaCha8 stream k of the seeded
//! generator, so the estimate does not depend on how trials are scheduled
//! across threads.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::matrix::Matrix;
use crate::measure::Grid;
use crate::solver::{discretize, DiscretizedProblem};

pub const DEFAULT_JITTER: f64 = 1e-12;
pub const MAX_JITTER: f64 = 1e-6;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const BLOCK: usize = 1 << 14;

/// Lower-triangular factor stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    rows: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.rows[start..start + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self.get(i, j))
    }

    /// L Lᵀ.
    pub fn reconstruct(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| {
            let (ri, rj) = (self.row(i), self.row(j));
            ri.iter().zip(rj).map(|(a, b)| a * b).sum()
        })
    }
}

pub fn factorize(problem: &DiscretizedProblem, jitter: f64) -> Result<CholeskyFactor> {
    factorize_matrix(&problem.matrix, jitter)
}

/// Cholesky factor of M + jitter·I. On failure the jitter is raised tenfold
/// (starting from 1e-12 when zero was requested) until it would exceed 1e-6.
pub fn factorize_matrix(matrix: &Matrix, jitter: f64) -> Result<CholeskyFactor> {
    if !(jitter >= 0.0) || !jitter.is_finite() {
        return Err(Error::Domain(format!("jitter must be nonnegative, got {jitter}")));
    }
    let scale = (0..matrix.dim()).map(|i| matrix.get(i, i).abs()).fold(1.0, f64::max);
    if matrix.asymmetry() > 1e-12 * scale {
        return Err(Error::Factorization(format!(
            "matrix is not symmetric (asymmetry {:e})",
            matrix.asymmetry()
        )));
    }
    let mut j = jitter;
    loop {
        if let Some(rows) = cholesky(matrix, j) {
            let factor = CholeskyFactor { n: matrix.dim(), rows, jitter: j };
            let mut target = matrix.clone();
            for i in 0..matrix.dim() {
                target.set(i, i, target.get(i, i) + j);
            }
            let err = factor.reconstruct().max_abs_diff(&target);
            if err <= RECONSTRUCTION_TOL {
                return Ok(factor);
            }
        }
        j = if j == 0.0 { DEFAULT_JITTER } else { j * 10.0 };
        if j > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::Factorization(format!(
                "matrix is not positive definite with jitter up to {MAX_JITTER:e}"
            )));
        }
    }
}

fn cholesky(m: &Matrix, jitter: f64) -> Option<Vec<f64>> {
    let n = m.dim();
    let mut rows = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let si = i * (i + 1) / 2;
        for j in 0..=i {
            let sj = j * (j + 1) / 2;
            let mut s = m.get(i, j);
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= rows[si + k] * rows[sj + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                rows[si + i] = s.sqrt();
            } else {
                rows[si + j] = s / rows[sj + j];
            }
        }
    }
    Some(rows)
}

/// Draws paths on a fixed list of points.
#[derive(Debug, Clone)]
pub struct PathSampler {
    factor: CholeskyFactor,
    seed: u64,
}

impl PathSampler {
    pub fn new(factor: CholeskyFactor, seed: u64) -> Self {
        PathSampler { factor, seed }
    }

    /// Factorizes the covariance of `kernel` at `points`, in that order.
    pub fn from_points(kernel: &Kernel, points: &[f64], jitter: f64, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Grid("no sample points".into()));
        }
        let n = points.len();
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, kernel.covariance(points[i], points[j])?);
            }
        }
        m.symmetrize();
        Ok(PathSampler::new(factorize_matrix(&m, jitter)?, seed))
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.n
    }

    fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }

    /// Full path of the given trial.
    pub fn path(&self, trial: u64, out: &mut [f64]) {
        let mut rng = self.rng(trial);
        let n = self.dim();
        let mut z = vec![0.0; n];
        for i in 0..n {
            z[i] = StandardNormal.sample(&mut rng);
            out[i] = self.factor.row(i).iter().zip(&z).map(|(l, z)| l * z).sum();
        }
    }

    /// Minimum over the first `prefix` coordinates of the path, or `None`
    /// as soon as the running minimum drops to `floor` or below.
    pub fn min_above(&self, trial: u64, prefix: usize, floor: f64, z: &mut [f64]) -> Option<f64> {
        let mut rng = self.rng(trial);
        let mut min = f64::INFINITY;
        for i in 0..prefix.min(self.dim()) {
            z[i] = StandardNormal.sample(&mut rng);
            let x: f64 = self.factor.row(i).iter().zip(&z[..=i]).map(|(l, z)| l * z).sum();
            if x <= floor {
                return None;
            }
            min = min.min(x);
        }
        Some(min)
    }

    /// Hit counts #{trials : min over the first `prefix` points > u} for
    /// every u in `thresholds`, using the same paths for all thresholds.
    pub fn count_hits(&self, thresholds: &[f64], prefix: usize, trials: u64) -> Vec<u64> {
        let floor = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
        let blocks = trials.div_ceil(BLOCK as u64);
        (0..blocks)
            .into_par_iter()
            .map(|blk| {
                let mut hits = vec![0u64; thresholds.len()];
                let mut z = vec![0.0; self.dim()];
                let end = ((blk + 1) * BLOCK as u64).min(trials);
                for trial in blk * BLOCK as u64..end {
                    if let Some(m) = self.min_above(trial, prefix, floor, &mut z) {
                        for (h, &u) in hits.iter_mut().zip(thresholds) {
                            if m > u {
                                *h += 1;
                            }
                        }
                    }
                }
                hits
            })
            .reduce(
                || vec![0u64; thresholds.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }

    /// Sample covariance of `trials` full paths (mean taken as zero).
    pub fn sample_covariance(&self, trials: u64) -> Matrix {
        let n = self.dim();
        let acc = (0..trials)
            .into_par_iter()
            .fold(
                || (vec![0.0; n * n], vec![0.0; n]),
                |(mut acc, mut x), trial| {
                    self.path(trial, &mut x);
                    for i in 0..n {
                        for j in 0..n {
                            acc[i * n + j] += x[i] * x[j];
                        }
                    }
                    (acc, x)
                },
            )
            .map(|(acc, _)| acc)
            .reduce(
                || vec![0.0; n * n],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Matrix::from_fn(n, |i, j| acc[i * n + j] / trials as f64)
    }
}

/// Points of the (2n−1)-node grid on [a, b], listing the n-node grid first.
pub fn nested_points(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    let coarse = Grid::new(a, b, n)?;
    let fine = Grid::new(a, b, 2 * n - 1)?;
    let mut pts: Vec<f64> = (0..n).map(|i| fine.node(2 * i)).collect();
    debug_assert!(pts.iter().zip(coarse.nodes()).all(|(p, c)| (p - c).abs() <= 1e-12 * (b - a)));
    pts.extend((0..n - 1).map(|i| fine.node(2 * i + 1)));
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub hits: u64,
    pub trials: u64,
}

impl TailEstimate {
    /// √(p̂(1−p̂)/trials).
    pub fn std_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

fn sample_points(interval: (f64, f64), n: usize) -> Result<Vec<f64>> {
    if n == 1 {
        if !interval.0.is_finite() {
            return Err(Error::Interval(format!("{interval:?}")));
        }
        return Ok(vec![interval.0]);
    }
    Ok(Grid::new(interval.0, interval.1, n)?.nodes())
}

/// Estimates P(min_i X(t_i) > u) over the n-node grid on the interval
/// (the single point a when n = 1).
pub fn estimate_tail(
    kernel: &Kernel,
    interval: (f64, f64),
    n: usize,
    u: f64,
    trials: u64,
    seed: u64,
) -> Result<TailEstimate> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("threshold must be nonnegative, got {u}")));
    }
    let sampler = PathSampler::from_points(kernel, &sample_points(interval, n)?, DEFAULT_JITTER, seed)?;
    let hits = sampler.count_hits(&[u], n, trials)[0];
    Ok(TailEstimate { p_hat: hits as f64 / trials as f64, hits, trials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpEstimate {
    pub grid: Grid,
    pub thresholds: Vec<f64>,
    pub trials: u64,
    pub hits: Vec<u64>,
    /// log p̂, or log(1/trials) for entries without hits.
    pub log_p: Vec<f64>,
    /// log p̂ / u²
    pub normalized: Vec<f64>,
    pub rate: f64,
    /// 95% half-width of `normalized`, from the normal approximation of
    /// log p̂ (standard error √((1−p̂)/hits)).
    pub ci_halfwidth: Vec<f64>,
    /// Entry is a lower bound because no trial hit.
    pub lower_bound: Vec<bool>,
    pub seed: u64,
    pub jitter: f64,
}

impl LdpEstimate {
    /// Normalized values strictly increase with u.
    pub fn trend_increasing(&self) -> bool {
        self.normalized.windows(2).all(|w| w[1] > w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,trials,hits,p_hat,log_p_over_u2,ci_halfwidth,flag\n");
        for i in 0..self.thresholds.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.thresholds[i],
                self.trials,
                self.hits[i],
                self.hits[i] as f64 / self.trials as f64,
                self.normalized[i],
                self.ci_halfwidth[i],
                if self.lower_bound[i] { "lower_bound" } else { "ok" }
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rate={}", self.rate);
        let _ = writeln!(out, "grid_a={}", self.grid.a());
        let _ = writeln!(out, "grid_b={}", self.grid.b());
        let _ = writeln!(out, "grid_n={}", self.grid.len());
        let _ = writeln!(out, "trials={}", self.trials);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "jitter={}", self.jitter);
        if let Some(last) = self.normalized.last() {
            let _ = writeln!(out, "final_normalized={last}");
        }
        let _ = writeln!(out, "trend_increasing={}", self.trend_increasing());
        out
    }
}

/// log p̂(u)/u² for every u in `thresholds`, on common random numbers.
pub fn ldp_curve(
    kernel: &Kernel,
    interval: (f64, f64),
    n: usize,
    thresholds: &[f64],
    trials: u64,
    seed: u64,
    sigma_sq: f64,
) -> Result<LdpEstimate> {
    if thresholds.is_empty() {
        return Err(Error::Domain("no thresholds".into()));
    }
    if thresholds.iter().any(|&u| !(u > 0.0) || !u.is_finite())
        || thresholds.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Domain(format!(
            "thresholds must be positive and strictly increasing: {thresholds:?}"
        )));
    }
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    let rate = crate::energy::rate(sigma_sq)?;
    let grid = Grid::new(interval.0, interval.1, n)?;
    let problem = discretize(kernel, &grid)?;
    let sampler = PathSampler::new(factorize(&problem, DEFAULT_JITTER)?, seed);
    let hits = sampler.count_hits(thresholds, n, trials);

    let t = trials as f64;
    let mut log_p = Vec::with_capacity(hits.len());
    let mut normalized = Vec::with_capacity(hits.len());
    let mut ci_halfwidth = Vec::with_capacity(hits.len());
    let mut lower_bound = Vec::with_capacity(hits.len());
    for (&u, &h) in thresholds.iter().zip(&hits) {
        let u2 = u * u;
        if h == 0 {
            let lp = -t.ln();
            log_p.push(lp);
            normalized.push(lp / u2);
            ci_halfwidth.push(f64::INFINITY);
            lower_bound.push(true);
        } else {
            let p = h as f64 / t;
            let lp = p.ln();
            log_p.push(lp);
            normalized.push(lp / u2);
            ci_halfwidth.push(1.96 * ((1.0 - p) / h as f64).sqrt() / u2);
            lower_bound.push(false);
        }
    }
    Ok(LdpEstimate {
        grid,
        thresholds: thresholds.to_vec(),
        trials,
        hits,
        log_p,
        normalized,
        rate,
        ci_halfwidth,
        lower_bound,
        seed,
        jitter: sampler.factor().jitter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Hurst, Lag};

    fn fgn(h: f64, lag: f64) -> Kernel {
        Kernel::fgn(Hurst::new(h).unwrap(), Lag::new(lag).unwrap())
    }

    #[test]
    fn identity_factor() {
        let f = factorize_matrix(&Matrix::identity(5), 0.0).unwrap();
        assert_eq!(f.to_matrix(), Matrix::identity(5));
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn brownian_reconstruction() {
        let grid = Grid::new(1.0, 2.0, 50).unwrap();
        let p = discretize(&Kernel::BrownianMotion, &grid).unwrap();
        let f = factorize(&p, DEFAULT_JITTER).unwrap();
        assert!(f.reconstruct().max_abs_diff(&p.matrix) <= 1e-8);
    }

    #[test]
    fn fgn_factorizes_with_small_jitter() {
        let grid = Grid::new(0.0, 2.0, 100).unwrap();
        let p = discretize(&fgn(0.75, 1.0), &grid).unwrap();
        let f = factorize(&p, DEFAULT_JITTER).unwrap();
        assert!(f.jitter() <= 1e-10, "jitter {}", f.jitter());
    }

    #[test]
    fn pinned_brownian_needs_jitter() {
        let grid = Grid::new(0.0, 1.0, 11).unwrap();
        let p = discretize(&Kernel::BrownianMotion, &grid).unwrap();
        let f = factorize(&p, 0.0).unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(factorize_matrix(&m, 1e-12), Err(Error::Factorization(_))));
        assert!(factorize_matrix(&m, -1.0).is_err());
    }

    #[test]
    fn prefix_property() {
        let k = fgn(0.7, 1.0);
        let pts = nested_points(0.0, 2.0, 9).unwrap();
        let fine = PathSampler::from_points(&k, &pts, DEFAULT_JITTER, 1).unwrap();
        let coarse = PathSampler::from_points(&k, &pts[..9], DEFAULT_JITTER, 1).unwrap();
        assert_eq!(fine.factor().jitter(), coarse.factor().jitter());
        for i in 0..9 {
            assert_eq!(fine.factor().row(i), coarse.factor().row(i));
        }
    }

    #[test]
    fn single_point_is_a_coin_flip() {
        let trials = 100_000;
        let est = estimate_tail(&fgn(0.75, 1.0), (0.0, 0.0), 1, 0.0, trials, 3).unwrap();
        let se = (0.25 / trials as f64).sqrt();
        assert!((est.p_hat - 0.5).abs() < 3.0 * se, "{est:?}");
    }

    #[test]
    fn estimate_rejects_bad_input() {
        let k = Kernel::BrownianMotion;
        assert!(estimate_tail(&k, (1.0, 2.0), 10, 1.0, 0, 1).is_err());
        assert!(estimate_tail(&k, (1.0, 2.0), 10, -1.0, 10, 1).is_err());
        assert!(ldp_curve(&k, (1.0, 2.0), 10, &[1.0, 1.0], 10, 1, 1.0).is_err());
        assert!(ldp_curve(&k, (1.0, 2.0), 10, &[], 10, 1, 1.0).is_err());
        assert!(ldp_curve(&k, (1.0, 2.0), 10, &[1.0], 10, 1, 0.0).is_err());
    }

    #[test]
    fn hits_are_nonincreasing_in_u() {
        let est = ldp_curve(&Kernel::BrownianMotion, (1.0, 2.0), 40, &[0.5, 1.0, 1.5, 2.0], 20_000, 5, 1.0)
            .unwrap();
        assert!(est.hits.windows(2).all(|w| w[1] <= w[0]));
        assert!(est.log_p.iter().all(|&l| l <= 0.0));
        assert!(est.hits.iter().all(|&h| h <= est.trials));
        assert_eq!(est.rate, -0.5);
    }

    #[test]
    fn zero_hits_flagged() {
        let est = ldp_curve(&Kernel::BrownianMotion, (1.0, 2.0), 20, &[1.0, 6.0], 1000, 2, 1.0).unwrap();
        assert_eq!(est.hits[1], 0);
        assert!(est.lower_bound[1]);
        assert_eq!(est.log_p[1], -(1000f64).ln());
        assert!(!est.lower_bound[0]);
        assert!(est.to_csv().lines().nth(2).unwrap().ends_with("lower_bound"));
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let k = fgn(0.75, 1.0);
        let a = ldp_curve(&k, (0.0, 2.0), 30, &[0.5, 1.0], 50_000, 11, 0.574473).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| ldp_curve(&k, (0.0, 2.0), 30, &[0.5, 1.0], 50_000, 11, 0.574473).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let c = ldp_curve(&k, (0.0, 2.0), 30, &[0.5, 1.0], 50_000, 12, 0.574473).unwrap();
        assert_ne!(a.hits, c.hits);
    }

    #[test]
    fn csv_layout() {
        let est = ldp_curve(&Kernel::BrownianMotion, (1.0, 2.0), 10, &[1.0], 1000, 1, 1.0).unwrap();
        let csv = est.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "u,trials,hits,p_hat,log_p_over_u2,ci_halfwidth,flag");
        assert_eq!(csv.lines().count(), 2);
        assert!(est.summary().contains("rate=-0.5"));
    }
}
