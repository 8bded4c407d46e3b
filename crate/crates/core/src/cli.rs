//! The `gaussmin` command line.
//!
//! Exit codes: 0 success, 2 verification or convergence failure, 3 no
//! closed form applies, 4 malformed input, 5 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::audit::{self, AssumptionReport};
use crate::config::{Format, RunConfig};
use crate::energy::{self, check_optimality};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::measure::{c_star, dirac, three_point, two_point, DiscreteMeasure, Grid};
use crate::{mc, solver};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_NO_CLOSED_FORM: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "gaussmin", version, about = "Large-deviation rates for high minima of Gaussian processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Closed-form σ*², rate and optimal measure.
    Rate,
    /// Numerical minimum-energy measure on the grid.
    Solve,
    /// Check a measure given with --measure.
    Verify {
        #[arg(long)]
        measure: Option<PathBuf>,
    },
    /// Audit the hypotheses behind the closed forms.
    Assumptions,
    /// Monte Carlo estimate of log P(min > u)/u².
    Simulate,
    /// Data for the increment function, Γ and γ plots.
    Figures,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Factorization(_) | Error::Singularity(_) | Error::DegenerateKernel(_) | Error::Io(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("GAUSSMIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("GAUSSMIN_THREADS must be a positive integer, got {v:?}")))?;
    // A pool that already exists (repeated calls in one process) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let out = match &cli.out {
        Some(dir) => dir.clone(),
        None => cfg.resolve(&cfg.output.dir),
    };
    let ctx = Context { cfg, out };
    match &cli.command {
        Command::Rate => cmd_rate(&ctx),
        Command::Solve => cmd_solve(&ctx),
        Command::Verify { measure } => {
            let m = measure
                .as_deref()
                .ok_or_else(|| Error::Config("verify needs --measure <csv>".into()))?;
            cmd_verify(&ctx, m)
        }
        Command::Assumptions => cmd_assumptions(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Figures => cmd_figures(&ctx),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    /// Writes `name` under the output directory via a temporary file and a
    /// rename.
    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let target = self.out.join(name);
        let tmp = self.out.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(())
    }
}

/// The closed-form candidate for the configured kernel and interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub regime: &'static str,
    pub measure: DiscreteMeasure,
}

/// Picks δ_a, the two-point or the three-point measure, or `None` when none
/// of them applies.
pub fn closed_form(cfg: &RunConfig, kernel: &Kernel) -> Result<Option<ClosedForm>> {
    let (a, b) = cfg.interval()?;
    let len = b - a;
    match kernel.lag() {
        Some(h) => {
            if len <= h * (1.0 + 1e-12) {
                return Ok(Some(ClosedForm { regime: "two-point", measure: two_point(a, b)? }));
            }
            if (len - 2.0 * h).abs() <= 1e-9 * h {
                let report = audit::audit_second_case(kernel, audit::DEFAULT_SECOND_CASE_GRID)?;
                if report.passed {
                    let c = c_star(kernel, h)?;
                    return Ok(Some(ClosedForm { regime: "three-point", measure: three_point(a, h, c)? }));
                }
            }
            Ok(None)
        }
        None => {
            let report = audit::audit_nonneg_increments(kernel, (a, b), cfg.audit.samples, cfg.audit.seed)?;
            Ok(report.passed.then(|| ClosedForm { regime: "dirac", measure: dirac(a) }))
        }
    }
}

pub fn cmd_rate(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let kernel = cfg.build_kernel()?;
    let Some(cf) = closed_form(cfg, &kernel)? else {
        let (a, b) = cfg.interval()?;
        eprintln!(
            "no closed-form measure applies to {} on [{a}, {b}]; use `gaussmin solve`",
            kernel.name()
        );
        return Ok(EXIT_NO_CLOSED_FORM);
    };
    let report = check_optimality(&kernel, &cf.measure, &cfg.grid()?, cfg.verify.tol)?;
    let sigma_sq = report.energy;
    let rate = energy::rate(sigma_sq)?;
    let mut text = String::new();
    let _ = writeln!(text, "kernel={}", kernel.name());
    let _ = writeln!(text, "regime={}", cf.regime);
    let _ = writeln!(text, "sigma_sq={sigma_sq}");
    let _ = writeln!(text, "rate={rate}");
    let _ = writeln!(text, "verified={}", report.passed);
    text.push_str(&report.to_key_value());
    emit(&text);
    emit(&cf.measure.to_csv());
    ctx.write("rate.txt", &text)?;
    ctx.write("rate_measure.csv", &cf.measure.to_csv())?;
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

pub fn cmd_solve(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let kernel = cfg.build_kernel()?;
    let grid = cfg.grid()?;
    let problem = solver::discretize(&kernel, &grid)?;
    let result = solver::solve(&problem, cfg.solver.tol, cfg.solver.max_iter)?;
    let mut text = result.summary();
    ctx.write("solve_weights.csv", &result.to_csv(&grid))?;
    if result.converged {
        let measure = solver::extract_measure(&result, &grid, cfg.solver.prune)?;
        if let Ok(rate) = energy::rate(result.energy) {
            let _ = writeln!(text, "rate={rate}");
        }
        let _ = writeln!(text, "atoms={}", measure.len());
        ctx.write("solve_measure.csv", &measure.to_csv())?;
    }
    emit(&text);
    ctx.write("solve_summary.txt", &text)?;
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "solver stopped after {} iterations with gap {:e} > tol {:e}",
            result.iterations, result.equilibrium_gap, cfg.solver.tol
        );
        Ok(EXIT_FAILED)
    }
}

pub fn cmd_verify(ctx: &Context, measure_path: &Path) -> Result<i32> {
    let cfg = &ctx.cfg;
    let kernel = cfg.build_kernel()?;
    let file = fs::File::open(measure_path)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", measure_path.display())))?;
    let mu = DiscreteMeasure::from_csv(file)?;
    let grid = cfg.grid()?;
    let report = check_optimality(&kernel, &mu, &grid, cfg.verify.tol)?;
    let text = report.to_key_value();
    emit(&text);
    ctx.write("verify_report.txt", &text)?;
    ctx.write("verify_potential.csv", &report.profile.to_csv())?;
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

fn is_degenerate(kernel: &Kernel) -> bool {
    match kernel {
        Kernel::FractionalGaussianNoise(h, _) => h.value() == 0.5,
        Kernel::IncrementOf(base, _) => match base.as_ref() {
            Kernel::BrownianMotion => true,
            Kernel::FractionalBm(h) => h.value() == 0.5,
            _ => false,
        },
        _ => false,
    }
}

/// Every audit that applies to the configured kernel.
pub fn run_audits(cfg: &RunConfig, kernel: &Kernel) -> Result<Vec<AssumptionReport>> {
    let a = &cfg.audit;
    let mut reports = Vec::new();
    match kernel.lag() {
        Some(h) => {
            let horizon = match cfg.interval {
                Some(iv) => (iv.b - iv.a).max(2.0 * h),
                None => 3.0 * h,
            };
            reports.push(audit::audit_increment_monotone(kernel, (-3.0 * h, 3.0 * h), a.n)?);
            reports.push(audit::audit_first_case(kernel, a.b_samples, horizon, a.n)?);
            reports.push(audit::audit_second_case(kernel, audit::DEFAULT_SECOND_CASE_GRID.max(a.n))?);
        }
        None => {
            let range = match cfg.interval {
                Some(iv) => (iv.a, iv.b),
                None => (0.0, 3.0),
            };
            reports.push(audit::audit_nonneg_increments(kernel, range, a.samples, a.seed)?);
            match audit::audit_converse(kernel, range.1.max(range.0.abs()), a.samples, a.seed) {
                Ok(r) => reports.push(r),
                Err(Error::PinnedOrigin(_)) | Err(Error::Grid(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if is_degenerate(kernel) {
        for r in reports.iter_mut().filter(|r| r.strict && !r.passed) {
            r.note = Some(
                "degenerate H = 1/2: the strict inequality holds only with equality for this kernel".into(),
            );
        }
    }
    Ok(reports)
}

pub fn cmd_assumptions(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let kernel = cfg.build_kernel()?;
    let reports = run_audits(cfg, &kernel)?;
    let mut text = format!("kernel={}\n", kernel.name());
    for r in &reports {
        text.push_str(&r.to_key_value());
        ctx.write(&format!("audit_{}.csv", r.name), &r.margins_csv())?;
    }
    let all = reports.iter().all(|r| r.passed);
    let _ = writeln!(text, "all_passed={all}");
    emit(&text);
    ctx.write("assumptions.txt", &text)?;
    Ok(if all { EXIT_OK } else { EXIT_FAILED })
}

/// σ*² for simulation: the configured value, else the verified closed form,
/// else the solver energy.
fn simulation_sigma(cfg: &RunConfig, kernel: &Kernel) -> Result<(f64, &'static str)> {
    if let Some(s) = cfg.simulate.sigma_sq {
        return Ok((s, "config"));
    }
    let grid = cfg.grid()?;
    if let Some(cf) = closed_form(cfg, kernel)? {
        let report = check_optimality(kernel, &cf.measure, &grid, cfg.verify.tol)?;
        if report.passed {
            return Ok((report.energy, cf.regime));
        }
    }
    let problem = solver::discretize(kernel, &grid)?;
    let result = solver::solve(&problem, cfg.solver.tol, cfg.solver.max_iter)?;
    Ok((result.energy, "solver"))
}

pub fn cmd_simulate(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let kernel = cfg.build_kernel()?;
    let (sigma_sq, source) = simulation_sigma(cfg, &kernel)?;
    let m = &cfg.simulate;
    let est = mc::ldp_curve(&kernel, cfg.interval()?, m.n, &m.u, m.trials, m.seed, sigma_sq)?;
    let mut summary = format!("kernel={}\nsigma_sq={sigma_sq}\nsigma_source={source}\n", kernel.name());
    summary.push_str(&est.summary());
    emit(&est.to_csv());
    emit(&summary);
    ctx.write("ldp.csv", &est.to_csv())?;
    ctx.write("ldp_summary.txt", &summary)?;
    Ok(EXIT_OK)
}

/// A named curve sampled at increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub file: &'static str,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub title: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.x_label, self.y_label);
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }

    /// Polyline in a fixed 640×400 viewport.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const M: f64 = 40.0;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &self.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
        let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
        let mut pts = String::new();
        for &(x, y) in &self.points {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
        }
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
        );
        let _ = writeln!(svg, "<rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>", W - 2.0 * M, H - 2.0 * M);
        if y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(svg, "<line x1=\"{M}\" x2=\"{}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#ccc\"/>", W - M, py(0.0), py(0.0));
        }
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"{}\"/>", pts.trim_end());
        let _ = writeln!(svg, "<text x=\"{M}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>", self.title);
        let _ = writeln!(svg, "<text x=\"{M}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{x0} .. {x1}</text>", H - 12.0);
        svg.push_str("</svg>\n");
        svg
    }
}

fn sample(points: &[f64], mut f: impl FnMut(f64) -> Result<f64>) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(points.len());
    for &t in points {
        match f(t) {
            Ok(v) => out.push((t, v)),
            Err(Error::Singularity(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// The six figure curves: f, f′, f″ on [−r·h, r·h], Γ on [0, 3h], γ and γ′
/// on (0, h).
pub fn figure_curves(cfg: &RunConfig, kernel: &Kernel) -> Result<Vec<Curve>> {
    let h = kernel
        .lag()
        .ok_or_else(|| Error::Config(format!("figures need an increment kernel, got {}", kernel.name())))?;
    let n = cfg.figures.points;
    let r = cfg.figures.range;
    let (sym, _) = audit::open_grid(-r * h, r * h, n);
    let cov = Grid::new(0.0, 3.0 * h, n)?.nodes();
    let (inner, _) = audit::open_grid(0.0, h, n);
    let c = c_star(kernel, h)?;
    let name = kernel.name();
    Ok(vec![
        Curve {
            file: "fig1_increment",
            x_label: "t",
            y_label: "f",
            title: format!("increment function f, {name}"),
            points: sample(&sym, |t| kernel.increment(t))?,
        },
        Curve {
            file: "fig2_increment_d1",
            x_label: "t",
            y_label: "f_d1",
            title: format!("f', {name}"),
            points: sample(&sym, |t| kernel.increment_d1(t))?,
        },
        Curve {
            file: "fig3_increment_d2",
            x_label: "t",
            y_label: "f_d2",
            title: format!("f'', {name}"),
            points: sample(&sym, |t| kernel.increment_d2(t))?,
        },
        Curve {
            file: "fig4_covariance",
            x_label: "tau",
            y_label: "gamma",
            title: format!("covariance function, {name}"),
            points: sample(&cov, |t| kernel.gamma(t))?,
        },
        Curve {
            file: "fig5_profile",
            x_label: "t",
            y_label: "profile",
            title: format!("gamma(t) with C* = {c}, {name}"),
            points: sample(&inner, |t| audit::gamma_profile(kernel, c, t))?,
        },
        Curve {
            file: "fig6_profile_d1",
            x_label: "t",
            y_label: "profile_d1",
            title: format!("gamma'(t), {name}"),
            points: sample(&inner, |t| audit::gamma_profile_d1(kernel, c, t))?,
        },
    ])
}

pub fn cmd_figures(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let kernel = cfg.build_kernel()?;
    for curve in figure_curves(cfg, &kernel)? {
        if cfg.wants(Format::Csv) {
            ctx.write(&format!("{}.csv", curve.file), &curve.to_csv())?;
        }
        if cfg.wants(Format::Svg) {
            ctx.write(&format!("{}.svg", curve.file), &curve.to_svg())?;
        }
        emit(&format!("{}: {} points\n", curve.file, curve.points.len()));
    }
    Ok(EXIT_OK)
}
