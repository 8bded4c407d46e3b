//! Uniform grids and atomic probability measures on an interval, including
//! the three closed-form optimal measures (one, two and three atoms).

use std::io::Read;

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Locations closer than this fraction of the support span are merged.
pub const MERGE_TOL: f64 = 1e-12;
/// Atoms with weight at or below this are dropped.
pub const PRUNE_TOL: f64 = 1e-12;
const RESCALE_TOL: f64 = 1e-14;
/// Accepted deviation of the raw weight sum from 1 before renormalizing.
const SUM_TOL: f64 = 1e-9;

/// Uniform discretization of `[a, b]` with `n ≥ 2` nodes, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::Interval(format!("need a < b, got [{a}, {b}]")));
        }
        if n < 2 {
            return Err(Error::Grid(format!("need at least 2 nodes, got {n}")));
        }
        Ok(Self { a, b, n })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    /// The i-th node; the last node is exactly `b`.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        if i + 1 == self.n {
            self.b
        } else {
            self.a + i as f64 * (self.b - self.a) / (self.n - 1) as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node equal to `t` (up to 1e-9 of a grid step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let step = self.step();
        let pos = ((t - self.a) / step).round();
        if !pos.is_finite() || pos < 0.0 || pos > (self.n - 1) as f64 {
            return None;
        }
        let i = pos as usize;
        ((self.node(i) - t).abs() <= 1e-9 * step).then_some(i)
    }
}

/// A probability measure made of finitely many atoms.
///
/// Locations are strictly increasing, weights are positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteMeasure {
    /// Normalizes a list of `(location, weight)` pairs: sorts, merges
    /// near-duplicate locations, prunes negligible weights and rescales the
    /// weights to sum to one unless they already do within 1e-14.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::Measure(format!("non-finite atom ({x}, {w})")));
            }
            if w < 0.0 {
                return Err(Error::Measure(format!("negative weight {w} at {x}")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Measure(format!("weights sum to {total}, not 1")));
        }
        atoms.sort_by(|p, q| p.0.total_cmp(&q.0));

        let span = match (atoms.first(), atoms.last()) {
            (Some(lo), Some(hi)) if hi.0 > lo.0 => hi.0 - lo.0,
            _ => 1.0,
        };
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if x - last.0 <= MERGE_TOL * span => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        merged.retain(|a| a.1 > PRUNE_TOL);
        if merged.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > RESCALE_TOL {
            for a in &mut merged {
                a.1 /= total;
            }
        }
        Ok(Self { atoms: merged })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.1)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(1 − λ)·self + λ·other`.
    pub fn mix(&self, other: &DiscreteMeasure, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Measure(format!("mixing weight {lambda} outside [0, 1]")));
        }
        let lhs = self.atoms.iter().map(|&(x, w)| (x, (1.0 - lambda) * w));
        let rhs = other.atoms.iter().map(|&(x, w)| (x, lambda * w));
        Self::new(lhs.chain(rhs))
    }

    /// CSV with header `location,weight`; values use the shortest
    /// representation that parses back to the same number.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,weight\n");
        for &(x, w) in &self.atoms {
            out.push_str(&format!("{x},{w}\n"));
        }
        out
    }

    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "location" || &headers[1] != "weight" {
            return Err(Error::Parse(format!(
                "expected header `location,weight`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut atoms = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |k: usize| -> Result<f64> {
                record
                    .get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad number on data line {}", line + 1)))
            };
            atoms.push((field(0)?, field(1)?));
        }
        if atoms.is_empty() {
            return Err(Error::Parse("measure file has no atoms".into()));
        }
        Self::new(atoms)
    }
}

/// δ_a.
pub fn dirac(a: f64) -> DiscreteMeasure {
    DiscreteMeasure {
        atoms: vec![(a, 1.0)],
    }
}

/// ½(δ_a + δ_b), the optimum for increment processes on intervals no longer
/// than the lag.
pub fn two_point(a: f64, b: f64) -> Result<DiscreteMeasure> {
    if !(a < b) {
        return Err(Error::Interval(format!("need a < b, got [{a}, {b}]")));
    }
    Ok(DiscreteMeasure {
        atoms: vec![(a, 0.5), (b, 0.5)],
    })
}

/// (δ_a + C·δ_{a+h} + δ_{a+2h}) / (2 + C), the optimum on intervals of
/// length twice the lag.
pub fn three_point(a: f64, lag: f64, c_star: f64) -> Result<DiscreteMeasure> {
    if !(c_star > 0.0) || !c_star.is_finite() {
        return Err(Error::Assumption(format!("C* must be positive, got {c_star}")));
    }
    if !(lag > 0.0) {
        return Err(Error::Interval(format!("lag must be positive, got {lag}")));
    }
    let norm = 2.0 + c_star;
    let end = 1.0 / norm;
    Ok(DiscreteMeasure {
        atoms: vec![(a, end), (a + lag, c_star / norm), (a + 2.0 * lag, end)],
    })
}

/// C* = 1 + (Γ(h) − Γ(2h)) / (Γ(h) − Γ(0)).
pub fn c_star(kernel: &Kernel, lag: f64) -> Result<f64> {
    let g0 = kernel.gamma(0.0)?;
    let g1 = kernel.gamma(lag)?;
    let g2 = kernel.gamma(2.0 * lag)?;
    let denom = g1 - g0;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateKernel(format!("Γ(h) = Γ(0) = {g0}")));
    }
    Ok(1.0 + (g1 - g2) / denom)
}
