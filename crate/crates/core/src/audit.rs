//! Numerical audits of the hypotheses behind the closed-form optimal
//! measures.
//!
//! Every audit samples a margin that is positive when the hypothesis holds
//! at that sample. `worst_violation` is the smallest margin seen and
//! `witness` is where it occurred. Strict hypotheses (f' > 0, the f''
//! condition) pass only when the worst margin is strictly positive, so the
//! degenerate Brownian case H = 1/2 fails them.

use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::measure::c_star;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_B_SAMPLES: usize = 11;
pub const DEFAULT_AUDIT_GRID: usize = 501;
pub const DEFAULT_SECOND_CASE_GRID: usize = 1001;
/// Slack allowed on non-strict covariance inequalities (rounding only).
pub const COVARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionName {
    NonnegIncrements,
    Converse,
    IncrementMonotone,
    FirstCase,
    SecondCase,
}

impl fmt::Display for AssumptionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AssumptionName::NonnegIncrements => "nonneg_increments",
            AssumptionName::Converse => "converse",
            AssumptionName::IncrementMonotone => "increment_monotone",
            AssumptionName::FirstCase => "first_case",
            AssumptionName::SecondCase => "second_case",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Margin {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub name: AssumptionName,
    pub passed: bool,
    pub worst_violation: f64,
    pub witness: Vec<f64>,
    pub samples: usize,
    pub tolerance: f64,
    /// Strict audits require `worst_violation > 0`; the others accept
    /// `worst_violation ≥ −tolerance`.
    pub strict: bool,
    /// Second-case audit only: sign changes of the discrete slope of γ.
    pub sign_changes: Option<usize>,
    pub c_star: Option<f64>,
    pub note: Option<String>,
    pub point_names: &'static [&'static str],
    pub margins: Vec<Margin>,
}

impl AssumptionReport {
    fn from_margins(
        name: AssumptionName,
        strict: bool,
        tolerance: f64,
        point_names: &'static [&'static str],
        margins: Vec<Margin>,
    ) -> Self {
        let mut worst: Option<&Margin> = None;
        for m in &margins {
            if worst.is_none_or(|w| m.value < w.value) {
                worst = Some(m);
            }
        }
        let (worst_violation, witness) = match worst {
            Some(m) => (m.value, m.point.clone()),
            None => (f64::INFINITY, Vec::new()),
        };
        let passed = if strict {
            worst_violation > 0.0
        } else {
            worst_violation >= -tolerance
        };
        Self {
            name,
            passed,
            worst_violation,
            witness,
            samples: margins.len(),
            tolerance,
            strict,
            sign_changes: None,
            c_star: None,
            note: None,
            point_names,
            margins,
        }
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[{}]", self.name);
        let _ = writeln!(out, "passed={}", self.passed);
        let _ = writeln!(out, "worst_violation={}", self.worst_violation);
        let witness: Vec<String> = self.witness.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "witness={}", witness.join(";"));
        let _ = writeln!(out, "samples={}", self.samples);
        let _ = writeln!(out, "strict={}", self.strict);
        let _ = writeln!(out, "tolerance={}", self.tolerance);
        if let Some(c) = self.c_star {
            let _ = writeln!(out, "c_star={c}");
        }
        if let Some(k) = self.sign_changes {
            let _ = writeln!(out, "sign_changes={k}");
        }
        if let Some(note) = &self.note {
            let _ = writeln!(out, "note={note}");
        }
        out
    }

    pub fn margins_csv(&self) -> String {
        let mut out = self.point_names.join(",");
        out.push_str(",margin\n");
        for m in &self.margins {
            for x in &m.point {
                let _ = write!(out, "{x},");
            }
            let _ = writeln!(out, "{}", m.value);
        }
        out
    }
}

/// `n` nodes strictly inside (lo, hi): the endpoints are offset by one step.
pub fn open_grid(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let step = (hi - lo) / (n + 1) as f64;
    ((1..=n).map(|i| lo + i as f64 * step).collect(), step)
}

fn near_any(t: f64, points: &[f64], radius: f64) -> bool {
    points.iter().any(|p| (t - p).abs() < radius)
}

fn require_lag(kernel: &Kernel) -> Result<f64> {
    kernel
        .lag()
        .ok_or_else(|| Error::Domain(format!("{} is not an increment kernel", kernel.name())))
}

/// E[(X(t₂) − X(s₂))(X(t₁) − X(s₁))] via four covariance evaluations.
fn increment_correlation(kernel: &Kernel, s1: f64, t1: f64, s2: f64, t2: f64) -> Result<f64> {
    let plus = kernel.covariance(t1, t2)? + kernel.covariance(s1, s2)?;
    let minus = kernel.covariance(t1, s2)? + kernel.covariance(s1, t2)?;
    Ok(plus - minus)
}

/// Samples ordered quadruples a ≤ s₁ ≤ t₁ ≤ s₂ ≤ t₂ ≤ b and checks that the
/// increments over [s₁,t₁] and [s₂,t₂] are nonnegatively correlated.
/// Tabulated kernels are sampled on their grid nodes.
pub fn audit_nonneg_increments(
    kernel: &Kernel,
    range: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let (a, b) = range;
    if !(a < b) {
        return Err(Error::Interval(format!("need a < b, got [{a}, {b}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = match kernel {
        Kernel::Tabulated(tab) => {
            let nodes: Vec<f64> = tab.grid().nodes().into_iter().filter(|t| (a..=b).contains(t)).collect();
            if nodes.is_empty() {
                return Err(Error::Grid("no tabulated node inside the audit range".into()));
            }
            Some(nodes)
        }
        _ => None,
    };
    let mut margins = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut q = [0.0; 4];
        for x in &mut q {
            *x = match &nodes {
                Some(nodes) => nodes[rng.random_range(0..nodes.len())],
                None => a + (b - a) * rng.random::<f64>(),
            };
        }
        q.sort_by(f64::total_cmp);
        let value = increment_correlation(kernel, q[0], q[1], q[2], q[3])?;
        margins.push(Margin {
            point: q.to_vec(),
            value,
        });
    }
    Ok(AssumptionReport::from_margins(
        AssumptionName::NonnegIncrements,
        false,
        COVARIANCE_TOL,
        &["s1", "t1", "s2", "t2"],
        margins,
    ))
}

/// Checks E[(X(t) − X(a))(X(a) − X(0))] = R(a,t) − R(a,a) ≥ 0 for sampled
/// 0 ≤ a ≤ t ≤ L. The process must be pinned at the origin.
pub fn audit_converse(kernel: &Kernel, horizon: f64, pairs: usize, seed: u64) -> Result<AssumptionReport> {
    if pairs == 0 {
        return Err(Error::Domain("need at least one pair".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Interval(format!("horizon must be positive, got {horizon}")));
    }
    let v0 = kernel.covariance(0.0, 0.0)?;
    if v0.abs() > 1e-12 {
        return Err(Error::PinnedOrigin(v0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x = horizon * rng.random::<f64>();
        let y = horizon * rng.random::<f64>();
        let (a, t) = if x <= y { (x, y) } else { (y, x) };
        let value = kernel.covariance(a, t)? - kernel.covariance(a, a)?;
        margins.push(Margin {
            point: vec![a, t],
            value,
        });
    }
    Ok(AssumptionReport::from_margins(
        AssumptionName::Converse,
        false,
        COVARIANCE_TOL,
        &["a", "t"],
        margins,
    ))
}

/// f'(t) > 0 on an open grid over (lo, hi), skipping one grid step around
/// the singular points 0 and −h.
pub fn audit_increment_monotone(kernel: &Kernel, range: (f64, f64), n: usize) -> Result<AssumptionReport> {
    require_lag(kernel)?;
    if n < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {n}")));
    }
    let (grid, step) = open_grid(range.0, range.1, n);
    let singular = kernel.singular_points();
    let mut margins = Vec::with_capacity(n);
    for t in grid {
        if near_any(t, &singular, step) {
            continue;
        }
        margins.push(Margin {
            point: vec![t],
            value: kernel.increment_d1(t)?,
        });
    }
    Ok(AssumptionReport::from_margins(
        AssumptionName::IncrementMonotone,
        true,
        0.0,
        &["t"],
        margins,
    ))
}

/// f''(t) + f''(t − b) < 0 for sampled b ∈ [0, h] and t on an open grid over
/// (0, L). The margin is −(f''(t) + f''(t − b)).
pub fn audit_first_case(kernel: &Kernel, b_samples: usize, horizon: f64, n: usize) -> Result<AssumptionReport> {
    let lag = require_lag(kernel)?;
    if b_samples == 0 {
        return Err(Error::Domain("need at least one b sample".into()));
    }
    if n < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {n}")));
    }
    let (grid, step) = open_grid(0.0, horizon, n);
    let b_values: Vec<f64> = if b_samples == 1 {
        vec![0.5 * lag]
    } else {
        let lo = step.min(0.25 * lag);
        let hi = lag - lo;
        (0..b_samples)
            .map(|k| lo + (hi - lo) * k as f64 / (b_samples - 1) as f64)
            .collect()
    };
    let mut margins = Vec::with_capacity(b_values.len() * n);
    for &b in &b_values {
        let singular = [0.0, b, b - lag];
        for &t in &grid {
            if near_any(t, &singular, step) {
                continue;
            }
            let sum = kernel.increment_d2(t)? + kernel.increment_d2(t - b)?;
            margins.push(Margin {
                point: vec![b, t],
                value: -sum,
            });
        }
    }
    Ok(AssumptionReport::from_margins(
        AssumptionName::FirstCase,
        true,
        0.0,
        &["b", "t"],
        margins,
    ))
}

/// γ(t) = Γ(t) + C*·Γ(h − t) + Γ(2h − t).
pub fn gamma_profile(kernel: &Kernel, c_star: f64, t: f64) -> Result<f64> {
    let lag = require_lag(kernel)?;
    Ok(kernel.gamma(t)? + c_star * kernel.gamma(lag - t)? + kernel.gamma(2.0 * lag - t)?)
}

/// γ'(t) = Γ'(t) − C*·Γ'(h − t) − Γ'(2h − t).
pub fn gamma_profile_d1(kernel: &Kernel, c_star: f64, t: f64) -> Result<f64> {
    let lag = require_lag(kernel)?;
    Ok(kernel.gamma_d1(t)? - c_star * kernel.gamma_d1(lag - t)? - kernel.gamma_d1(2.0 * lag - t)?)
}

/// Signs of consecutive differences, dropping differences that are flat at
/// rounding level relative to `scale`.
pub fn slope_signs(values: &[f64], scale: f64) -> Vec<(usize, i8)> {
    let flat = 1e-12 * scale.max(1.0);
    values
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let d = w[1] - w[0];
            if d > flat {
                Some((i, 1))
            } else if d < -flat {
                Some((i, -1))
            } else {
                None
            }
        })
        .collect()
}

/// Number of sign changes and the difference indices where they occur.
pub fn count_sign_changes(signs: &[(usize, i8)]) -> (usize, Vec<usize>) {
    let mut changes = Vec::new();
    for w in signs.windows(2) {
        if w[0].1 != w[1].1 {
            changes.push(w[1].0);
        }
    }
    (changes.len(), changes)
}

/// C* > 0 and γ has at most one critical point on (0, h), a maximum.
/// Critical points are counted as sign changes of the forward differences of
/// γ on an open n-node grid.
pub fn audit_second_case(kernel: &Kernel, n: usize) -> Result<AssumptionReport> {
    let lag = require_lag(kernel)?;
    if n < 11 {
        return Err(Error::Grid(format!("need at least 11 nodes, got {n}")));
    }
    let c = c_star(kernel, lag)?;
    let (grid, _) = open_grid(0.0, lag, n);
    let values = grid
        .iter()
        .map(|&t| gamma_profile(kernel, c, t))
        .collect::<Result<Vec<_>>>()?;
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let signs = slope_signs(&values, scale);
    let (count, at) = count_sign_changes(&signs);
    let shape_ok = match count {
        0 => true,
        1 => signs.first().map(|s| s.1) == Some(1),
        _ => false,
    };
    let passed = c > 0.0 && shape_ok;
    let witness = match at.first() {
        Some(&i) => vec![grid[i]],
        None => vec![grid[0]],
    };
    let margins = grid
        .iter()
        .zip(&values)
        .map(|(&t, &v)| Margin { point: vec![t], value: v })
        .collect();
    Ok(AssumptionReport {
        name: AssumptionName::SecondCase,
        passed,
        worst_violation: c,
        witness,
        samples: n,
        tolerance: 0.0,
        strict: true,
        sign_changes: Some(count),
        c_star: Some(c),
        note: (count == 0).then(|| "gamma is monotone or flat on (0, h)".to_string()),
        point_names: &["t"],
        margins,
    })
}
