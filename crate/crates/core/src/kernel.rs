//! Covariance kernels for Brownian motion, fractional Brownian motion,
//! fractional Gaussian noise, increment processes built from a base process
//! and user-tabulated matrices.
//!
//! For an increment process X(t) = Y(t+h) − Y(t) of a base Y with
//! stationary increments and variance V (extended evenly to the negative
//! axis), the covariance only depends on the lag τ = t − s:
//!
//! ```text
//! Γ(τ) = ½ (f(τ) + f(−τ)),    f(t) = V(t + h) − V(t)
//! ```
//!
//! `f` is the increment function. Its derivatives are analytic for fractional
//! Gaussian noise and central finite differences for generic increment
//! kernels.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measure::Grid;

/// Hurst index in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("Hurst index must lie in (0, 1), got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// 2H, the exponent of the variance function.
    pub fn exponent(self) -> f64 {
        2.0 * self.0
    }
}

/// Positive increment lag h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lag(f64);

impl Lag {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("lag must be positive and finite, got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Covariance matrix given only at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    grid: Grid,
    values: Matrix,
}

impl TabulatedKernel {
    pub fn new(grid: Grid, values: Matrix) -> Result<Self> {
        if values.dim() != grid.len() {
            return Err(Error::Grid(format!(
                "matrix is {0}x{0} but the grid has {1} nodes",
                values.dim(),
                grid.len()
            )));
        }
        let asym = values.asymmetry();
        if asym > 1e-12 {
            return Err(Error::Domain(format!("tabulated matrix is not symmetric (max gap {asym:e})")));
        }
        let mut values = values;
        values.symmetrize();
        Ok(Self { grid, values })
    }

    /// Reads `(i, j, value)` triples with a header row. Missing mirrored
    /// entries are filled from their transpose.
    pub fn from_csv(grid: Grid, reader: impl std::io::Read) -> Result<Self> {
        let n = grid.len();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries: Vec<Option<f64>> = vec![None; n * n];
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let bad = || Error::Parse(format!("bad triple on data line {}", line + 1));
            if record.len() != 3 {
                return Err(bad());
            }
            let i: usize = record[0].parse().map_err(|_| bad())?;
            let j: usize = record[1].parse().map_err(|_| bad())?;
            let v: f64 = record[2].parse().map_err(|_| bad())?;
            if i >= n || j >= n || !v.is_finite() {
                return Err(bad());
            }
            entries[i * n + j] = Some(v);
        }
        let mut values = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j]
                    .or(entries[j * n + i])
                    .ok_or_else(|| Error::Parse(format!("missing entry ({i}, {j})")))?;
                values.set(i, j, v);
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    fn lookup(&self, s: f64, t: f64) -> Result<f64> {
        let off = |x: f64| Error::Grid(format!("{x} is not a node of the tabulated grid"));
        let i = self.grid.index_of(s).ok_or_else(|| off(s))?;
        let j = self.grid.index_of(t).ok_or_else(|| off(t))?;
        Ok(self.values.get(i, j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// R(s,t) = min(s,t) on [0, ∞).
    BrownianMotion,
    /// R(s,t) = ½(s^{2H} + t^{2H} − |t−s|^{2H}) on [0, ∞).
    FractionalBm(Hurst),
    /// Γ(τ) = ½(|τ−h|^{2H} − 2|τ|^{2H} + |τ+h|^{2H}) on ℝ.
    FractionalGaussianNoise(Hurst, Lag),
    /// X(t) = Y(t+h) − Y(t) for a base process Y with stationary increments.
    IncrementOf(Box<Kernel>, Lag),
    Tabulated(TabulatedKernel),
}

impl Kernel {
    pub fn fbm(hurst: Hurst) -> Self {
        Kernel::FractionalBm(hurst)
    }

    pub fn fgn(hurst: Hurst, lag: Lag) -> Self {
        Kernel::FractionalGaussianNoise(hurst, lag)
    }

    /// Increment kernel over a catalogue base (Brownian or fractional
    /// Brownian motion).
    pub fn increment_of(base: Kernel, lag: Lag) -> Result<Self> {
        if !base.has_stationary_increments() {
            return Err(Error::Stationarity(
                "increment kernels need a base with stationary increments".into(),
            ));
        }
        Ok(Kernel::IncrementOf(Box::new(base), lag))
    }

    /// True iff R(s,t) depends only on t − s.
    pub fn is_stationary(&self) -> bool {
        matches!(self, Kernel::FractionalGaussianNoise(..) | Kernel::IncrementOf(..))
    }

    pub fn has_stationary_increments(&self) -> bool {
        matches!(self, Kernel::BrownianMotion | Kernel::FractionalBm(_))
    }

    /// The lag h of increment-type kernels.
    pub fn lag(&self) -> Option<f64> {
        match self {
            Kernel::FractionalGaussianNoise(_, lag) | Kernel::IncrementOf(_, lag) => Some(lag.value()),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Kernel::BrownianMotion => "bm".into(),
            Kernel::FractionalBm(h) => format!("fbm(H={})", h.value()),
            Kernel::FractionalGaussianNoise(h, lag) => format!("fgn(H={}, h={})", h.value(), lag.value()),
            Kernel::IncrementOf(base, lag) => format!("increment({}, h={})", base.name(), lag.value()),
            Kernel::Tabulated(t) => format!("tabulated({} nodes)", t.grid.len()),
        }
    }

    /// R(s, t).
    pub fn covariance(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            Kernel::BrownianMotion => {
                check_nonneg(s, t)?;
                Ok(s.min(t))
            }
            Kernel::FractionalBm(h) => {
                check_nonneg(s, t)?;
                Ok(fbm_covariance(h.exponent(), s, t))
            }
            Kernel::FractionalGaussianNoise(..) => {
                check_finite(s, t)?;
                self.gamma(t - s)
            }
            Kernel::IncrementOf(base, lag) => {
                check_nonneg(s, t)?;
                increment_covariance(base, lag.value(), s, t)
            }
            Kernel::Tabulated(tab) => tab.lookup(s, t),
        }
    }

    /// Γ(τ) for stationary kernels; even in τ.
    pub fn gamma(&self, tau: f64) -> Result<f64> {
        if !tau.is_finite() {
            return Err(Error::Domain(format!("lag {tau} is not finite")));
        }
        let tau = tau.abs();
        match self {
            Kernel::FractionalGaussianNoise(h, lag) => {
                let p = h.exponent();
                let l = lag.value();
                Ok(0.5 * (((tau - l).abs().powf(p) + (tau + l).powf(p)) - 2.0 * tau.powf(p)))
            }
            Kernel::IncrementOf(..) => {
                let f_pos = self.increment(tau)?;
                let f_neg = self.increment(-tau)?;
                Ok(0.5 * (f_pos + f_neg))
            }
            _ => Err(Error::Stationarity(self.name())),
        }
    }

    /// V(t) = R(t, t) for base processes, extended evenly to t < 0.
    pub fn variance(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("time {t} is not finite")));
        }
        let t = t.abs();
        match self {
            Kernel::BrownianMotion => Ok(t),
            Kernel::FractionalBm(h) => Ok(t.powf(h.exponent())),
            _ => Err(Error::Domain(format!(
                "{} has no variance function with stationary increments",
                self.name()
            ))),
        }
    }

    /// V'(t) for t ≠ 0, on the even extension.
    fn variance_d1(&self, t: f64) -> Result<f64> {
        match self {
            Kernel::BrownianMotion => Ok(t.signum()),
            Kernel::FractionalBm(h) => {
                let p = h.exponent();
                Ok(p * t.signum() * t.abs().powf(p - 1.0))
            }
            _ => Err(Error::Domain(self.name())),
        }
    }

    /// f(t) = V(t+h) − V(t).
    pub fn increment(&self, t: f64) -> Result<f64> {
        match self {
            Kernel::FractionalGaussianNoise(h, lag) => {
                check_finite(t, t)?;
                let p = h.exponent();
                Ok((t + lag.value()).abs().powf(p) - t.abs().powf(p))
            }
            Kernel::IncrementOf(base, lag) => Ok(base.variance(t + lag.value())? - base.variance(t)?),
            _ => Err(Error::Domain(format!("{} has no increment function", self.name()))),
        }
    }

    /// f'(t).
    pub fn increment_d1(&self, t: f64) -> Result<f64> {
        match self {
            Kernel::FractionalGaussianNoise(h, lag) => {
                let p = h.exponent();
                let l = lag.value();
                if p <= 1.0 && (t == 0.0 || t == -l) {
                    return Err(Error::Singularity(format!("f' is singular at t = {t}")));
                }
                Ok(p * (signed_pow(t + l, p - 1.0) - signed_pow(t, p - 1.0)))
            }
            Kernel::IncrementOf(..) => {
                let d = fd_step(t);
                Ok((self.increment(t + d)? - self.increment(t - d)?) / (2.0 * d))
            }
            _ => Err(Error::Domain(format!("{} has no increment function", self.name()))),
        }
    }

    /// f''(t).
    pub fn increment_d2(&self, t: f64) -> Result<f64> {
        match self {
            Kernel::FractionalGaussianNoise(h, lag) => {
                let p = h.exponent();
                let l = lag.value();
                if t == 0.0 || t == -l {
                    return Err(Error::Singularity(format!("f'' is singular at t = {t}")));
                }
                Ok(p * (p - 1.0) * ((t + l).abs().powf(p - 2.0) - t.abs().powf(p - 2.0)))
            }
            Kernel::IncrementOf(..) => {
                let d = fd_step(t);
                let f0 = self.increment(t)?;
                Ok((self.increment(t + d)? - 2.0 * f0 + self.increment(t - d)?) / (d * d))
            }
            _ => Err(Error::Domain(format!("{} has no increment function", self.name()))),
        }
    }

    /// Γ'(τ) = ½(f'(τ) − f'(−τ)).
    pub fn gamma_d1(&self, tau: f64) -> Result<f64> {
        if !self.is_stationary() {
            return Err(Error::Stationarity(self.name()));
        }
        Ok(0.5 * (self.increment_d1(tau)? - self.increment_d1(-tau)?))
    }

    /// Singular points of the analytic increment-function derivatives.
    pub fn singular_points(&self) -> Vec<f64> {
        match self.lag() {
            Some(l) => vec![-l, 0.0],
            None => Vec::new(),
        }
    }

    /// Analytic derivative of the increment function, used by
    /// `IncrementOf` tests as a reference for the finite differences.
    pub fn increment_d1_exact(&self, t: f64) -> Result<f64> {
        match self {
            Kernel::IncrementOf(base, lag) => Ok(base.variance_d1(t + lag.value())? - base.variance_d1(t)?),
            _ => self.increment_d1(t),
        }
    }
}

/// Central-difference step: max(1e-5, 1e-7·|t|).
pub fn fd_step(t: f64) -> f64 {
    (1e-7 * t.abs()).max(1e-5)
}

/// |R_X(s,t) − ½(f(t−s) + f(s−t))| where R_X is the covariance of
/// X(t) = Y(t+h) − Y(t) expanded directly from the base covariances.
pub fn decomposition_residual(base: &Kernel, lag: f64, s: f64, t: f64) -> Result<f64> {
    let lag_v = Lag::new(lag)?;
    let inc = Kernel::increment_of(base.clone(), lag_v)?;
    let direct = increment_covariance(base, lag, s, t)?;
    let via_f = 0.5 * (inc.increment(t - s)? + inc.increment(s - t)?);
    Ok((direct - via_f).abs())
}

/// R(s+h, t+h) − R(s+h, t) − R(s, t+h) + R(s, t), grouped so that swapping
/// s and t gives a bit-identical result.
fn increment_covariance(base: &Kernel, lag: f64, s: f64, t: f64) -> Result<f64> {
    let diag = base.covariance(s + lag, t + lag)? + base.covariance(s, t)?;
    let cross = base.covariance(s + lag, t)? + base.covariance(s, t + lag)?;
    Ok(diag - cross)
}

fn fbm_covariance(p: f64, s: f64, t: f64) -> f64 {
    if p == 1.0 {
        return s.min(t);
    }
    0.5 * (s.powf(p) + t.powf(p) - (t - s).abs().powf(p))
}

/// sign(x)·|x|^q with 0^q = 0.
fn signed_pow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(q)
    }
}

fn check_finite(s: f64, t: f64) -> Result<()> {
    if s.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite time ({s}, {t})")))
    }
}

fn check_nonneg(s: f64, t: f64) -> Result<()> {
    check_finite(s, t)?;
    if s < 0.0 || t < 0.0 {
        return Err(Error::Domain(format!("times must be nonnegative, got ({s}, {t})")));
    }
    Ok(())
}
