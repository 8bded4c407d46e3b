//! Energy functional, potential and the equilibrium check for candidate
//! optimal measures.
//!
//! For a probability measure μ the energy is ∬ R(s,t) μ(ds) μ(dt) and the
//! potential is φ(t) = ∫ R(s,t) μ(ds). A measure is optimal iff the minimum
//! of φ over the interval equals the energy and φ equals the energy
//! μ-almost everywhere. For atomic μ the latter is checked at every atom.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::measure::{DiscreteMeasure, Grid};

/// Tolerance for verifying closed-form measures.
pub const CLOSED_FORM_TOL: f64 = 1e-8;
/// Tolerance for verifying measures extracted from the solver.
pub const SOLVER_TOL: f64 = 1e-5;
pub const DEFAULT_GRID_SIZE: usize = 401;

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialProfile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl PotentialProfile {
    /// Minimum value and the first node attaining it.
    pub fn argmin(&self) -> (usize, f64) {
        let mut best = (0, self.values[0]);
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v < best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// CSV with header `t,phi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,phi\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.grid.node(i), v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub energy: f64,
    pub min_potential: f64,
    pub argmin: f64,
    /// max over atoms of |φ(atom) − energy|
    pub support_deviation: f64,
    /// min over the grid of φ(t) − energy
    pub global_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub profile: PotentialProfile,
}

impl OptimalityReport {
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "energy={}", self.energy);
        let _ = writeln!(out, "min_potential={}", self.min_potential);
        let _ = writeln!(out, "argmin={}", self.argmin);
        let _ = writeln!(out, "support_deviation={}", self.support_deviation);
        let _ = writeln!(out, "global_slack={}", self.global_slack);
        let _ = writeln!(out, "tolerance={}", self.tolerance);
        let _ = writeln!(out, "passed={}", self.passed);
        out
    }
}

/// Σ_i Σ_j w_i w_j R(x_i, x_j).
pub fn energy(kernel: &Kernel, mu: &DiscreteMeasure) -> Result<f64> {
    let atoms = mu.atoms();
    let mut total = 0.0;
    for (i, &(xi, wi)) in atoms.iter().enumerate() {
        total += wi * wi * kernel.covariance(xi, xi)?;
        for &(xj, wj) in &atoms[i + 1..] {
            total += 2.0 * wi * wj * kernel.covariance(xi, xj)?;
        }
    }
    Ok(total)
}

/// φ(t) = Σ_j w_j R(x_j, t).
pub fn potential_at(kernel: &Kernel, mu: &DiscreteMeasure, t: f64) -> Result<f64> {
    mu.atoms()
        .iter()
        .map(|&(x, w)| kernel.covariance(x, t).map(|r| w * r))
        .sum()
}

pub fn potential(kernel: &Kernel, mu: &DiscreteMeasure, grid: &Grid) -> Result<PotentialProfile> {
    let values = grid
        .nodes()
        .into_iter()
        .map(|t| potential_at(kernel, mu, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialProfile { grid: *grid, values })
}

/// Grid-based equilibrium check. Never fails on a non-optimal measure; the
/// outcome is recorded in `passed`.
pub fn check_optimality(
    kernel: &Kernel,
    mu: &DiscreteMeasure,
    grid: &Grid,
    tol: f64,
) -> Result<OptimalityReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let energy = energy(kernel, mu)?;
    let profile = potential(kernel, mu, grid)?;
    let (imin, min_potential) = profile.argmin();
    let mut support_deviation = 0.0_f64;
    for x in mu.locations() {
        support_deviation = support_deviation.max((potential_at(kernel, mu, x)? - energy).abs());
    }
    let global_slack = min_potential - energy;
    let passed = support_deviation <= tol && global_slack >= -tol;
    Ok(OptimalityReport {
        energy,
        min_potential,
        argmin: grid.node(imin),
        support_deviation,
        global_slack,
        tolerance: tol,
        passed,
        profile,
    })
}

/// −1/(2σ²), the exponential decay rate of P(min X > u) in u².
pub fn rate(sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(Error::Domain(format!("σ*² must be positive, got {sigma_sq}")));
    }
    Ok(-1.0 / (2.0 * sigma_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Hurst, Lag};
    use crate::measure::{c_star, dirac, three_point, two_point};

    fn fgn(h: f64, lag: f64) -> Kernel {
        Kernel::fgn(Hurst::new(h).unwrap(), Lag::new(lag).unwrap())
    }

    fn fbm(h: f64) -> Kernel {
        Kernel::fbm(Hurst::new(h).unwrap())
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn energy_examples() {
        assert_eq!(energy(&fbm(0.75), &dirac(1.0)).unwrap(), 1.0);
        let e = energy(&fgn(0.5, 1.0), &three_point(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-15);
        let e = energy(&fgn(0.75, 1.0), &two_point(0.0, 1.0).unwrap()).unwrap();
        assert!((e - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert!((e - 0.707107).abs() < 1e-6);
        let e = energy(&fgn(0.5, 1.0), &two_point(0.0, 1.0).unwrap()).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn potential_examples() {
        let k = fgn(0.5, 1.0);
        let mu = three_point(0.0, 1.0, 1.0).unwrap();
        let grid = Grid::new(0.0, 2.0, 401).unwrap();
        let p = potential(&k, &mu, &grid).unwrap();
        assert!(p.values.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));

        let p = potential(&fbm(0.75), &dirac(1.0), &Grid::new(1.0, 2.0, 101).unwrap()).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!(p.values.windows(2).all(|w| w[1] >= w[0]));

        let k = fgn(0.75, 1.0);
        let mu = two_point(0.0, 1.0).unwrap();
        let p = potential(&k, &mu, &Grid::new(0.0, 1.0, 11).unwrap()).unwrap();
        let expected = 0.5 * (k.gamma(0.0).unwrap() + k.gamma(1.0).unwrap());
        assert!((p.values[0] - expected).abs() < 1e-15);
        assert!((p.values[10] - expected).abs() < 1e-15);
    }

    #[test]
    fn optimality_examples() {
        let r = check_optimality(&fbm(0.75), &dirac(1.0), &Grid::new(1.0, 2.0, 401).unwrap(), 1e-8).unwrap();
        assert!(r.passed);
        let k = fgn(0.75, 1.0);
        let grid = Grid::new(0.0, 1.0, 401).unwrap();
        let r = check_optimality(&k, &two_point(0.0, 1.0).unwrap(), &grid, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
        let r = check_optimality(&k, &dirac(0.0), &grid, 1e-8).unwrap();
        assert!(!r.passed);
        assert_eq!(r.argmin, 1.0);
        assert!(r.global_slack < -0.5);

        let c = c_star(&k, 1.0).unwrap();
        let mu = three_point(0.0, 1.0, c).unwrap();
        let r = check_optimality(&k, &mu, &Grid::new(0.0, 2.0, 401).unwrap(), 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(check_optimality(&k, &mu, &grid, 0.0).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(1.0).unwrap(), -0.5);
        assert_eq!(rate(1f64.powf(1.5)).unwrap(), -0.5);
        assert!(rate(0.0).is_err());
        assert!(rate(-1.0).is_err());

        let k = fgn(0.75, 1.0);
        let c = c_star(&k, 1.0).unwrap();
        let sigma = energy(&k, &three_point(0.0, 1.0, c).unwrap()).unwrap();
        let formula = (k.gamma(0.0).unwrap() + c * k.gamma(1.0).unwrap() + k.gamma(2.0).unwrap()) / (2.0 + c);
        assert!((sigma - formula).abs() < 1e-14);
        assert!((sigma - 0.574473).abs() < 5e-6);
        assert!((rate(sigma).unwrap() - (-0.870362)).abs() < 1e-5);
    }

    #[test]
    fn energy_is_weighted_potential() {
        let k = fgn(0.8, 1.0);
        let mu = DiscreteMeasure::new([(0.0, 0.2), (0.4, 0.3), (1.3, 0.5)]).unwrap();
        let e = energy(&k, &mu).unwrap();
        let avg: f64 = mu.atoms().iter().map(|&(x, w)| w * potential_at(&k, &mu, x).unwrap()).sum();
        assert!((e - avg).abs() < 1e-12);
    }

    #[test]
    fn two_point_potential_peaks_in_the_middle() {
        for &h in &[0.6, 0.75, 0.9] {
            for &b in &[0.3, 0.7, 1.0] {
                let k = fgn(h, 1.0);
                let mu = two_point(0.0, b).unwrap();
                let grid = Grid::new(0.0, b, 201).unwrap();
                let p = potential(&k, &mu, &grid).unwrap();
                for i in 0..201 {
                    assert!((p.values[i] - p.values[200 - i]).abs() < 1e-12);
                }
                let mid = potential_at(&k, &mu, b / 2.0).unwrap();
                assert!(p.values.iter().all(|&v| v <= mid + 1e-15));
                assert!(p.values[..=100].windows(2).all(|w| w[1] > w[0]));
                assert!(p.values[100..].windows(2).all(|w| w[1] < w[0]));
            }
        }
    }
}
