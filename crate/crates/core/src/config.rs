//! Run configuration, read from a sectioned TOML file.
//!
//! ```toml
//! [kernel]
//! kind = "fgn"        # bm | fbm | fgn | increment | tabulated
//! H = 0.75
//! h = 1.0
//!
//! [interval]
//! a = 0.0
//! b = 2.0
//!
//! [grid]
//! n = 401
//! ```
//!
//! Every section is optional; unknown keys are rejected. Relative paths are
//! resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernel::{Hurst, Kernel, Lag, TabulatedKernel};
use crate::measure::Grid;
use crate::{audit, energy, solver};

pub const MAX_GRID: usize = 20_000;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kernel: KernelSpec,
    pub interval: Option<IntervalSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub figures: FiguresSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Bm,
    Fbm,
    #[default]
    Fgn,
    Increment,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(rename = "H")]
    pub hurst: Option<f64>,
    #[serde(rename = "h")]
    pub lag: Option<f64>,
    /// Base process of an increment kernel: `bm` or `fbm`.
    pub base: Option<KernelKind>,
    /// CSV of (i, j, value) triples for tabulated kernels, on the run grid.
    pub path: Option<PathBuf>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { kind: KernelKind::Fgn, hurst: Some(0.75), lag: Some(1.0), base: None, path: None }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: energy::DEFAULT_GRID_SIZE }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub prune: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { tol: solver::DEFAULT_TOL, max_iter: solver::DEFAULT_MAX_ITER, prune: solver::DEFAULT_PRUNE }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    pub samples: usize,
    pub seed: u64,
    pub b_samples: usize,
    pub n: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            samples: audit::DEFAULT_SAMPLES,
            seed: 1,
            b_samples: audit::DEFAULT_B_SAMPLES,
            n: audit::DEFAULT_AUDIT_GRID,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub u: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub n: usize,
    pub sigma_sq: Option<f64>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        SimulateSpec { u: vec![1.0, 1.5, 2.0], trials: 1_000_000, seed: 1, n: 200, sigma_sq: None }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub tol: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { tol: energy::CLOSED_FORM_TOL }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FiguresSpec {
    pub points: usize,
    /// f and its derivatives are drawn on [−range·h, range·h].
    pub range: f64,
}

impl Default for FiguresSpec {
    fn default() -> Self {
        FiguresSpec { points: 600, range: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("out"), formats: vec![Format::Csv] }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validation; relative paths resolve against the
    /// current directory.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.kernel;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| bad(format!("kernel.{key} is required")));
        match k.kind {
            KernelKind::Bm => {}
            KernelKind::Fbm => {
                Hurst::new(need(k.hurst, "H")?)?;
            }
            KernelKind::Fgn => {
                Hurst::new(need(k.hurst, "H")?)?;
                Lag::new(need(k.lag, "h")?)?;
            }
            KernelKind::Increment => {
                Lag::new(need(k.lag, "h")?)?;
                match k.base {
                    Some(KernelKind::Bm) => {}
                    Some(KernelKind::Fbm) => {
                        Hurst::new(need(k.hurst, "H")?)?;
                    }
                    _ => return Err(bad("kernel.base must be \"bm\" or \"fbm\"")),
                }
            }
            KernelKind::Tabulated => {
                let p = k.path.as_ref().ok_or_else(|| bad("kernel.path is required"))?;
                if self.interval.is_none() {
                    return Err(bad("tabulated kernels need an [interval] section"));
                }
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(bad(format!("kernel file {} does not exist", full.display())));
                }
            }
        }
        if let Some(iv) = self.interval {
            if !(iv.a.is_finite() && iv.b.is_finite() && iv.a < iv.b) {
                return Err(Error::Interval(format!("need a < b, got [{}, {}]", iv.a, iv.b)));
            }
        }
        if !(2..=MAX_GRID).contains(&self.grid.n) {
            return Err(bad(format!("grid.n must be in [2, {MAX_GRID}]")));
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 || !(0.0..=0.01).contains(&s.prune) {
            return Err(bad("solver needs tol > 0, max_iter ≥ 1 and prune in [0, 0.01]"));
        }
        let a = &self.audit;
        if a.samples == 0 || a.b_samples == 0 || a.n < 11 {
            return Err(bad("audit needs samples ≥ 1, b_samples ≥ 1 and n ≥ 11"));
        }
        let m = &self.simulate;
        if m.u.is_empty()
            || m.u.iter().any(|&u| !(u > 0.0) || !u.is_finite())
            || m.u.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(bad("simulate.u must be positive and strictly increasing"));
        }
        if m.trials == 0 || !(2..=MAX_GRID).contains(&m.n) {
            return Err(bad("simulate needs trials ≥ 1 and n in [2, 20000]"));
        }
        if m.sigma_sq.is_some_and(|s| !(s > 0.0) || !s.is_finite()) {
            return Err(bad("simulate.sigma_sq must be positive"));
        }
        if !(self.verify.tol > 0.0) {
            return Err(bad("verify.tol must be positive"));
        }
        let f = &self.figures;
        if f.points < 11 || !(f.range > 1.0) || !f.range.is_finite() {
            return Err(bad("figures needs points ≥ 11 and range > 1"));
        }
        Ok(())
    }

    pub fn interval(&self) -> Result<(f64, f64)> {
        self.interval
            .map(|iv| (iv.a, iv.b))
            .ok_or_else(|| bad("an [interval] section is required for this command"))
    }

    pub fn grid(&self) -> Result<Grid> {
        let (a, b) = self.interval()?;
        Grid::new(a, b, self.grid.n)
    }

    pub fn build_kernel(&self) -> Result<Kernel> {
        let k = &self.kernel;
        let hurst = || Hurst::new(k.hurst.unwrap_or(f64::NAN));
        let lag = || Lag::new(k.lag.unwrap_or(f64::NAN));
        Ok(match k.kind {
            KernelKind::Bm => Kernel::BrownianMotion,
            KernelKind::Fbm => Kernel::fbm(hurst()?),
            KernelKind::Fgn => Kernel::fgn(hurst()?, lag()?),
            KernelKind::Increment => {
                let base = match k.base {
                    Some(KernelKind::Fbm) => Kernel::fbm(hurst()?),
                    _ => Kernel::BrownianMotion,
                };
                Kernel::increment_of(base, lag()?)?
            }
            KernelKind::Tabulated => {
                let path = self.resolve(k.path.as_deref().unwrap_or(Path::new("")));
                let file = fs::File::open(&path)?;
                Kernel::Tabulated(TabulatedKernel::from_csv(self.grid()?, file)?)
            }
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
