//! Discretized minimum-energy problem: minimize wᵀMw over the probability
//! simplex, M_ij = R(t_i, t_j) on a grid.
//!
//! The solver is Frank–Wolfe with away steps and exact line search. Its
//! duality gap ⟨g, w⟩ − min_i g_i with g = 2Mw equals twice the deviation
//! between the energy and the minimum of the discrete potential Mw, so a
//! converged run certifies the equilibrium condition on the grid.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::matrix::{dot, Matrix};
use crate::measure::{DiscreteMeasure, Grid};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200_000;
pub const DEFAULT_PRUNE: f64 = 1e-3;

/// Full recomputation of Mw every this many iterations.
const REFRESH_EVERY: usize = 512;

#[derive(Debug, Clone)]
pub struct DiscretizedProblem {
    pub grid: Grid,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub weights: Vec<f64>,
    pub energy: f64,
    pub equilibrium_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverResult {
    /// CSV with header `node,weight`; `node` is the grid coordinate.
    pub fn to_csv(&self, grid: &Grid) -> String {
        let mut out = String::from("node,weight\n");
        for (i, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "{},{}", grid.node(i), w);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "energy={}", self.energy);
        let _ = writeln!(out, "gap={}", self.equilibrium_gap);
        let _ = writeln!(out, "iterations={}", self.iterations);
        let _ = writeln!(out, "converged={}", self.converged);
        out
    }

    /// The discrete potential φ_i = (Mw)_i.
    pub fn potential(&self, problem: &DiscretizedProblem) -> Vec<f64> {
        problem.matrix.mul_vec(&self.weights)
    }
}

/// M_ij = R(t_i, t_j), symmetrized as (M + Mᵀ)/2.
pub fn discretize(kernel: &Kernel, grid: &Grid) -> Result<DiscretizedProblem> {
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut matrix = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            matrix.set(i, j, kernel.covariance(nodes[i], nodes[j])?);
        }
    }
    matrix.symmetrize();
    Ok(DiscretizedProblem { grid: *grid, matrix })
}

pub fn solve(problem: &DiscretizedProblem, tol: f64, max_iter: usize) -> Result<SolverResult> {
    solve_observed(problem, tol, max_iter, |_, _| {})
}

/// Like [`solve`], calling `observe(iteration, energy)` after every step.
pub fn solve_observed(
    problem: &DiscretizedProblem,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(usize, f64),
) -> Result<SolverResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Domain("max_iter must be at least 1".into()));
    }
    let m = &problem.matrix;
    let n = m.dim();
    let mut w = vec![1.0 / n as f64; n];
    let mut mw = m.mul_vec(&w);
    let mut iterations = 0;

    while iterations < max_iter {
        let wmw = dot(&w, &mw);
        let (fw_idx, fw_min) = argmin(&mw);
        // gradient is 2Mw
        let fw_gap = 2.0 * (wmw - fw_min);
        if fw_gap <= tol {
            break;
        }
        let (away_idx, away_max) = argmax_active(&mw, &w);
        let away_gap = 2.0 * (away_max - wmw);

        if fw_gap >= away_gap {
            let i = fw_idx;
            let slope = mw[i] - wmw;
            let curvature = m.get(i, i) - 2.0 * mw[i] + wmw;
            let step = line_search(slope, curvature, 1.0);
            for (k, (wk, mk)) in w.iter_mut().zip(mw.iter_mut()).enumerate() {
                *wk *= 1.0 - step;
                *mk = (1.0 - step) * *mk + step * m.get(k, i);
            }
            w[i] += step;
        } else {
            let j = away_idx;
            let wj = w[j];
            let max_step = wj / (1.0 - wj);
            let slope = wmw - mw[j];
            let curvature = wmw - 2.0 * mw[j] + m.get(j, j);
            let step = line_search(slope, curvature, max_step);
            for (k, (wk, mk)) in w.iter_mut().zip(mw.iter_mut()).enumerate() {
                *wk *= 1.0 + step;
                *mk = (1.0 + step) * *mk - step * m.get(k, j);
            }
            if step >= max_step {
                w[j] = 0.0;
            } else {
                w[j] -= step;
                if w[j] < 0.0 {
                    w[j] = 0.0;
                }
            }
        }
        iterations += 1;
        if iterations % REFRESH_EVERY == 0 {
            renormalize(&mut w);
            mw = m.mul_vec(&w);
        }
        observe(iterations, dot(&w, &mw));
    }

    renormalize(&mut w);
    mw = m.mul_vec(&w);
    let energy = dot(&w, &mw);
    let (_, fw_min) = argmin(&mw);
    let equilibrium_gap = (2.0 * (energy - fw_min)).max(0.0);
    Ok(SolverResult {
        weights: w,
        energy,
        equilibrium_gap,
        iterations,
        converged: equilibrium_gap <= tol,
    })
}

/// Minimizer of slope·2γ + curvature·γ² on [0, max_step].
fn line_search(slope: f64, curvature: f64, max_step: f64) -> f64 {
    if curvature > 0.0 {
        (-slope / curvature).clamp(0.0, max_step)
    } else if slope < 0.0 {
        max_step
    } else {
        0.0
    }
}

/// Lowest index attaining the minimum.
fn argmin(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

/// Lowest index attaining the maximum of `v` over the support of `w`.
fn argmax_active(v: &[f64], w: &[f64]) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&x, &wi)) in v.iter().zip(w).enumerate() {
        if wi > 0.0 && best.is_none_or(|b| x > b.1) {
            best = Some((i, x));
        }
    }
    best.expect("weights always have nonempty support")
}

fn renormalize(w: &mut [f64]) {
    for x in w.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
}

/// Atoms at nodes carrying more than `prune`; runs of adjacent surviving
/// nodes collapse to their weighted centroid.
pub fn extract_measure(result: &SolverResult, grid: &Grid, prune: f64) -> Result<DiscreteMeasure> {
    if !(0.0..=0.01).contains(&prune) {
        return Err(Error::Domain(format!("prune threshold {prune} outside [0, 0.01]")));
    }
    if result.weights.len() != grid.len() {
        return Err(Error::Grid("weight vector does not match the grid".into()));
    }
    let mut clusters: Vec<(usize, f64, f64)> = Vec::new(); // (last index, Σw, Σw·t)
    for (i, &w) in result.weights.iter().enumerate() {
        if w <= prune {
            continue;
        }
        let t = grid.node(i);
        match clusters.last_mut() {
            Some(c) if c.0 + 1 == i => {
                c.0 = i;
                c.1 += w;
                c.2 += w * t;
            }
            _ => clusters.push((i, w, w * t)),
        }
    }
    let total: f64 = clusters.iter().map(|c| c.1).sum();
    if clusters.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    DiscreteMeasure::new(clusters.into_iter().map(|(_, w, wt)| (wt / w, w / total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Hurst, Lag};

    fn fgn(h: f64, lag: f64) -> Kernel {
        Kernel::fgn(Hurst::new(h).unwrap(), Lag::new(lag).unwrap())
    }

    #[test]
    fn discretize_examples() {
        let p = discretize(&Kernel::BrownianMotion, &Grid::new(1.0, 2.0, 3).unwrap()).unwrap();
        let expected = Matrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, 1.5, 1.5], vec![1.0, 1.5, 2.0]]).unwrap();
        assert_eq!(p.matrix, expected);
        let p = discretize(&fgn(0.5, 1.0), &Grid::new(0.0, 2.0, 3).unwrap()).unwrap();
        assert!(p.matrix.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        let p = discretize(&fgn(0.77, 0.3), &Grid::new(0.0, 2.0, 37).unwrap()).unwrap();
        assert_eq!(p.matrix.asymmetry(), 0.0);
    }

    #[test]
    fn identity_problem_gives_uniform_weights() {
        let p = DiscretizedProblem {
            grid: Grid::new(0.0, 1.0, 4).unwrap(),
            matrix: Matrix::identity(4),
        };
        let r = solve(&p, 1e-12, 100).unwrap();
        assert!(r.converged);
        assert!((r.energy - 0.25).abs() < 1e-15);
        assert!(r.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn fgn_half_three_atoms() {
        let grid = Grid::new(0.0, 2.0, 201).unwrap();
        let p = discretize(&fgn(0.5, 1.0), &grid).unwrap();
        let r = solve(&p, 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert!(r.converged);
        assert!((r.energy - 1.0 / 3.0).abs() < 1e-6);
        let mu = extract_measure(&r, &grid, DEFAULT_PRUNE).unwrap();
        let locs: Vec<f64> = mu.locations().collect();
        assert_eq!(locs.len(), 3, "{mu:?}");
        for (x, target) in locs.iter().zip([0.0, 1.0, 2.0]) {
            assert!((x - target).abs() <= grid.step());
        }
    }

    #[test]
    fn fbm_concentrates_at_left_end() {
        let grid = Grid::new(1.0, 2.0, 201).unwrap();
        let p = discretize(&Kernel::fbm(Hurst::new(0.75).unwrap()), &grid).unwrap();
        let r = solve(&p, 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert!((r.energy - 1.0).abs() < 1e-6);
        assert!(r.weights[0] >= 1.0 - 1e-4);
    }

    #[test]
    fn gap_matches_potential_deviation() {
        let grid = Grid::new(0.0, 1.5, 151).unwrap();
        let p = discretize(&fgn(0.7, 1.0), &grid).unwrap();
        let r = solve(&p, 1e-9, DEFAULT_MAX_ITER).unwrap();
        let phi = r.potential(&p);
        let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((r.equilibrium_gap - 2.0 * (r.energy - min)).abs() < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_never_increases() {
        let grid = Grid::new(0.0, 2.0, 101).unwrap();
        let p = discretize(&fgn(0.75, 1.0), &grid).unwrap();
        let mut last = f64::INFINITY;
        let mut worst_rise = 0.0_f64;
        solve_observed(&p, 1e-12, 5000, |_, e| {
            worst_rise = worst_rise.max(e - last);
            last = e;
        })
        .unwrap();
        assert!(worst_rise <= 1e-15, "energy rose by {worst_rise}");
    }

    #[test]
    fn forced_non_convergence() {
        let grid = Grid::new(0.0, 2.0, 101).unwrap();
        let p = discretize(&fgn(0.75, 1.0), &grid).unwrap();
        let r = solve(&p, 1e-9, 1).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.equilibrium_gap > 1e-9);
        assert!(solve(&p, 0.0, 10).is_err());
    }

    #[test]
    fn extract_examples() {
        let grid = Grid::new(0.0, 1.0, 5).unwrap();
        let r = SolverResult {
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            energy: 0.0,
            equilibrium_gap: 0.0,
            iterations: 0,
            converged: true,
        };
        assert_eq!(extract_measure(&r, &grid, 1e-3).unwrap().atoms(), &[(0.0, 1.0)]);

        let r = SolverResult {
            weights: vec![0.0, 0.25, 0.25, 0.0, 0.5],
            ..r
        };
        let mu = extract_measure(&r, &grid, 1e-3).unwrap();
        assert_eq!(mu.atoms(), &[(0.375, 0.5), (1.0, 0.5)]);

        let r = SolverResult {
            weights: vec![0.2; 5],
            ..r
        };
        assert!(extract_measure(&r, &grid, 0.02).is_err());
        let flat = SolverResult {
            weights: vec![0.001; 5],
            ..r
        };
        assert!(matches!(extract_measure(&flat, &grid, 0.005), Err(Error::EmptyMeasure)));
    }
}
