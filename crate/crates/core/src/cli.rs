//! Command-line front end: argument types, subcommand runners and the ranking benchmark.
//!
//! Exit codes: 0 success, 1 i/o or other failure, 2 parse error, 3 domain error,
//! 4 calibration failure, 5 invalid input or dimension error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::calibration::{self, CalibrationMode, PsiFamily};
use crate::certify::{self, Minimizer};
use crate::datagen::{self, DataGenConfig};
use crate::error::{Error, Result};
use crate::fidelity::FidelityKind;
use crate::generating::Relaxation;
use crate::io::{self, SCHEMA_VERSION};
use crate::problem::Problem;
use crate::solver::{self, Penalty, SolverConfig, StepRule};
use crate::testoracle;

/// Relative tolerance under which two final objective values tie in the ranking.
pub const RANK_TIE_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "brex", version, about = "Sparse optimization through l0 Bregman relaxations")]
pub struct Cli {
    /// Run the built-in oracle consistency checks and exit.
    #[arg(long)]
    pub self_check: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize J_0 directly or through a relaxation and certify the result.
    Solve(SolveArgs),
    /// Report curvature thresholds and the resulting relaxation intervals.
    Calibrate(CalibrateArgs),
    /// Evaluate J_0 and J_Psi on a dense grid (N = 1 or 2).
    Landscape(LandscapeArgs),
    /// Rank methods by final J_0 over generated instances.
    Benchmark(BenchmarkArgs),
    /// List all local minimizers of J_0 by support enumeration.
    Enumerate(EnumerateArgs),
    /// Generate a synthetic problem file.
    Gen(GenCommandArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Brex,
    L0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepArg {
    Backtracking,
    Fixed,
}

#[derive(Debug, Clone, Args)]
pub struct RelaxArgs {
    /// Generator family: power:<p>, shannon, kl[:y[,b]] or matched.
    #[arg(long, default_value = "power:2")]
    pub psi: String,
    /// Curvatures: thr, thrx<factor> or list:<g1,...,gN>.
    #[arg(long, default_value = "thr")]
    pub gamma: String,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = StepArg::Backtracking)]
    pub step: StepArg,
    /// Fixed step size, or the initial step for backtracking.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 20000)]
    pub max_iter: usize,
    /// Relative stopping tolerance on the iterate change.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Starting point as comma-separated values; zero by default.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
}

impl SolverArgs {
    pub fn to_config(&self, n: usize) -> Result<SolverConfig> {
        let step = match (self.step, self.rho) {
            (StepArg::Fixed, Some(rho)) => StepRule::Fixed { rho },
            (StepArg::Fixed, None) => return Err(Error::Invalid("--step fixed needs --rho".into())),
            (StepArg::Backtracking, rho0) => match StepRule::default() {
                StepRule::Backtracking { shrink, growth, sufficient_decrease, .. } => {
                    StepRule::Backtracking { rho0, shrink, growth, sufficient_decrease }
                }
                other => other,
            },
        };
        let x0 = match &self.x0 {
            Some(s) => {
                let v = parse_list(s)?;
                if v.len() != n {
                    return Err(Error::Dimension(format!("x0 has {} entries, expected {n}", v.len())));
                }
                Some(v)
            }
            None => None,
        };
        Ok(SolverConfig { step, max_iter: self.max_iter, rel_tol: self.tol, x0, record_trace: true })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Problem file (JSON).
    pub problem: PathBuf,
    #[arg(long, value_enum, default_value_t = PenaltyArg::Brex)]
    pub penalty: PenaltyArg,
    #[command(flatten)]
    pub relax: RelaxArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Tolerance of the optimality certificate.
    #[arg(long, default_value_t = certify::DEFAULT_TOL)]
    pub cert_tol: f64,
    /// Result file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Write the iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    pub problem: PathBuf,
    #[command(flatten)]
    pub relax: RelaxArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    pub problem: PathBuf,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// Grid per axis as lo:hi:points.
    #[arg(long, default_value = "-2:2:201", allow_hyphen_values = true)]
    pub grid: String,
    /// Landscape CSV; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Side table of enumerated minimizers (CSV); defaults to `<output>.minimizers.csv`.
    #[arg(long)]
    pub minimizers: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Ls)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub eta: f64,
    /// SNR in dB (least squares).
    #[arg(long, default_value_t = 8.0)]
    pub tau: f64,
    /// Sigmoid scale (logistic).
    #[arg(long, default_value_t = 10.0)]
    pub s: f64,
    /// Poisson gain (KL).
    #[arg(long, default_value_t = 50.0)]
    pub alpha: f64,
    /// Background (KL).
    #[arg(long, default_value_t = 0.1)]
    pub b: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// λ0 as a multiple of F_y(0).
    #[arg(long, default_value_t = 4e-3)]
    pub lambda0_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
}

impl GenArgs {
    pub fn to_config(&self) -> DataGenConfig {
        DataGenConfig {
            kind: self.kind.into(),
            m: self.m,
            n: self.n,
            k: self.k,
            eta: self.eta,
            tau: self.tau,
            s: self.s,
            alpha: self.alpha,
            b: self.b,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenCommandArgs {
    #[command(flatten)]
    pub gen: GenArgs,
    /// Problem file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write the ground truth as a JSON array.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ls,
    Lr,
    Kl,
}

impl From<KindArg> for FidelityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ls => FidelityKind::LeastSquares,
            KindArg::Lr => FidelityKind::Logistic,
            KindArg::Kl => FidelityKind::KullbackLeibler,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub gen: GenArgs,
    /// Number of instances, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Comma-separated methods: l0, power:<p>, shannon, kl[:y[,b]].
    #[arg(long, default_value = "l0,power:2,power:3/2,power:4/3")]
    pub methods: String,
    #[arg(long, default_value = "thr")]
    pub gamma: String,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Report JSON; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Per-instance CSV of final J_0 values.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EnumerateArgs {
    pub problem: PathBuf,
    /// Largest support size considered; N when absent.
    #[arg(long)]
    pub max_support: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) => 2,
        Error::Domain(_) => 3,
        Error::UnsupportedPairing(_) | Error::Convergence(_) => 4,
        Error::Invalid(_) | Error::Dimension(_) | Error::CombinatorialLimit(_) => 5,
        Error::Io(_) => 1,
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        CliError { code: exit_code(&error), error }
    }
}

/// Calibration failures exit with 4 unless the input itself was unreadable.
fn calibration_error(error: Error) -> CliError {
    let code = match error {
        Error::Parse(_) => 2,
        _ => 4,
    };
    CliError { code, error }
}

/// Curvature choice parsed from `--gamma`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSpec {
    Threshold,
    Scaled(f64),
    List(Vec<f64>),
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))?;
            let b: f64 = b.trim().parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))?;
            a / b
        }
        None => s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("non-finite number '{s}'")))
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

/// `power:<p>` (p may be a fraction), `shannon`, `kl`, `kl:<y>`, `kl:<y>,<b>` or `matched`.
pub fn parse_psi(s: &str) -> Result<PsiFamily> {
    let (head, rest) = match s.split_once(':') {
        Some((h, r)) => (h.trim(), Some(r)),
        None => (s.trim(), None),
    };
    match (head, rest) {
        ("power", Some(p)) => Ok(PsiFamily::Power { p: parse_number(p)? }),
        ("shannon", None) => Ok(PsiFamily::Shannon),
        ("kl", None) => Ok(PsiFamily::Kl { y: None, b: None }),
        ("kl", Some(r)) => {
            let v = parse_list(r)?;
            match v.as_slice() {
                [y] => Ok(PsiFamily::Kl { y: Some(*y), b: None }),
                [y, b] => Ok(PsiFamily::Kl { y: Some(*y), b: Some(*b) }),
                _ => Err(Error::Parse(format!("kl takes at most two parameters, got '{r}'"))),
            }
        }
        ("matched", None) => Ok(PsiFamily::Matched),
        _ => Err(Error::Parse(format!("unknown generator '{s}'"))),
    }
}

pub fn parse_gamma(s: &str) -> Result<GammaSpec> {
    let s = s.trim();
    if s == "thr" {
        Ok(GammaSpec::Threshold)
    } else if let Some(f) = s.strip_prefix("thrx") {
        let f = parse_number(f)?;
        if f <= 0.0 {
            return Err(Error::Parse(format!("gamma factor must be positive, got {f}")));
        }
        Ok(GammaSpec::Scaled(f))
    } else if let Some(l) = s.strip_prefix("list:") {
        Ok(GammaSpec::List(parse_list(l)?))
    } else {
        Err(Error::Parse(format!("unknown gamma specification '{s}'")))
    }
}

/// `lo:hi:points`.
pub fn parse_grid(s: &str) -> Result<testoracle::GridSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, pts] = parts.as_slice() else {
        return Err(Error::Parse(format!("grid must be lo:hi:points, got '{s}'")));
    };
    let lo = parse_number(lo)?;
    let hi = parse_number(hi)?;
    let points: usize = pts.trim().parse().map_err(|_| Error::Parse(format!("bad point count '{pts}'")))?;
    if !(lo < hi) || points < 3 {
        return Err(Error::Parse(format!("grid needs lo < hi and at least 3 points, got '{s}'")));
    }
    Ok(testoracle::GridSpec::new(lo, hi, points))
}

pub fn build_relaxation(problem: &Problem, family: PsiFamily, gamma: &GammaSpec) -> Result<Relaxation> {
    match gamma {
        GammaSpec::Threshold => calibration::calibrate(problem, family, CalibrationMode::AtThreshold),
        GammaSpec::Scaled(f) if *f >= 1.0 => {
            calibration::calibrate(problem, family, CalibrationMode::Strict { margin: f - 1.0 })
        }
        GammaSpec::Scaled(f) => {
            let thr = calibration::thresholds(problem, family)?;
            let g: Vec<f64> = thr.iter().map(|t| t * f).collect();
            calibration::calibrate_explicit(problem, family, &g)
        }
        GammaSpec::List(g) => calibration::calibrate_explicit(problem, family, g),
    }
}

fn relaxation_from_args(problem: &Problem, args: &RelaxArgs) -> std::result::Result<Relaxation, CliError> {
    let family = parse_psi(&args.psi)?;
    let gamma = parse_gamma(&args.gamma)?;
    build_relaxation(problem, family, &gamma).map_err(calibration_error)
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs a solve and assembles the result document.
pub fn solve_report(problem: &Problem, relax: Option<&Relaxation>, config: &SolverConfig, cert_tol: f64) -> Result<(serde_json::Value, solver::SolveResult)> {
    let penalty = match relax {
        Some(r) => Penalty::Relaxation(r),
        None => Penalty::L0,
    };
    let res = solver::solve(problem, penalty, config)?;
    let x = res.x_vector();
    let j0 = problem.objective_j0(&x)?;
    let (jpsi, cert, xt) = match relax {
        Some(r) => {
            let jpsi = solver::objective_jpsi(problem, r, &x)?;
            let cert = certify::check_localmin_jpsi(problem, r, &x, cert_tol)?;
            (Some(jpsi), cert, certify::threshold_to_j0(r, &x))
        }
        None => (None, certify::certify_j0(problem, &x, cert_tol)?, x.clone()),
    };
    let j0t = problem.objective_j0(&xt)?;
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "x": res.x,
        "J0": j0,
        "JPsi": jpsi,
        "iterations": res.iterations,
        "stop_reason": res.stop_reason,
        "cert": cert,
        "x_thresholded": xt.as_slice(),
        "J0_thresholded": j0t,
    });
    Ok((doc, res))
}

pub fn cmd_solve(args: &SolveArgs) -> std::result::Result<(), CliError> {
    let problem = io::read_problem(&args.problem)?;
    let relax = match args.penalty {
        PenaltyArg::Brex => Some(relaxation_from_args(&problem, &args.relax)?),
        PenaltyArg::L0 => None,
    };
    let config = args.solver.to_config(problem.n())?;
    let (doc, res) = solve_report(&problem, relax.as_ref(), &config, args.cert_tol)?;
    if let Some(path) = &args.trace {
        res.write_trace_csv(BufWriter::new(File::create(path).map_err(Error::from)?))?;
    }
    write_json(args.output.as_deref(), &doc)?;
    Ok(())
}

pub fn calibrate_report(problem: &Problem, relax: &Relaxation) -> serde_json::Value {
    let alpha: Vec<Option<[f64; 2]>> = (0..relax.len())
        .map(|n| relax.generator(n).map(|g| {
            let (lo, hi) = g.alpha_bounds();
            [lo, hi]
        }))
        .collect();
    json!({
        "schema": SCHEMA_VERSION,
        "lambda0": problem.lambda0,
        "report": relax.report,
        "alpha": alpha,
        "exact": relax.is_exact(),
    })
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> std::result::Result<(), CliError> {
    let problem = io::read_problem(&args.problem)?;
    let relax = relaxation_from_args(&problem, &args.relax)?;
    write_json(args.output.as_deref(), &calibrate_report(&problem, &relax))?;
    Ok(())
}

/// Rows `(x_1[, x_2], J_0, J_Psi)` on the tensor grid; points outside the domain give `inf`.
pub fn landscape(problem: &Problem, relax: &Relaxation, grid: &testoracle::GridSpec) -> Result<Vec<Vec<f64>>> {
    let n = problem.n();
    if n == 0 || n > 2 {
        return Err(Error::Dimension(format!("landscapes need N = 1 or 2, got {n}")));
    }
    let eval = |pt: Vec<f64>| -> Vec<f64> {
        let x = DVector::from_column_slice(&pt);
        let j0 = problem.objective_j0(&x).unwrap_or(f64::INFINITY);
        let jp = solver::objective_jpsi(problem, relax, &x).unwrap_or(f64::INFINITY);
        let mut row = pt;
        row.push(j0);
        row.push(jp);
        row
    };
    let pts: Vec<f64> = grid.iter().collect();
    Ok(if n == 1 {
        pts.iter().map(|&t| eval(vec![t])).collect()
    } else {
        pts.par_iter()
            .flat_map_iter(|&u| pts.iter().map(move |&v| (u, v)).collect::<Vec<_>>())
            .map(|(u, v)| eval(vec![u, v]))
            .collect()
    })
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn axis_headers(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

pub fn write_landscape_csv<W: Write>(w: W, n: usize, rows: &[Vec<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = axis_headers(n);
    header.extend(["J0".to_string(), "J_Psi".to_string()]);
    wr.write_record(&header)?;
    for r in rows {
        wr.write_record(r.iter().map(|v| fmt_float(*v)))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_minimizers_csv<W: Write>(w: W, n: usize, mins: &[Minimizer]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["support".to_string()];
    header.extend(axis_headers(n));
    header.extend(["J0".to_string(), "strict".to_string()]);
    wr.write_record(&header)?;
    for m in mins {
        let supp: Vec<String> = m.support.iter().map(|i| i.to_string()).collect();
        let mut rec = vec![supp.join(" ")];
        rec.extend(m.x.iter().map(|v| fmt_float(*v)));
        rec.push(fmt_float(m.j0));
        rec.push(m.cert.is_strict.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn cmd_landscape(args: &LandscapeArgs) -> std::result::Result<(), CliError> {
    let problem = io::read_problem(&args.problem)?;
    let grid = parse_grid(&args.grid)?;
    let relax = relaxation_from_args(&problem, &args.relax)?;
    let rows = landscape(&problem, &relax, &grid)?;
    let n = problem.n();
    write_landscape_csv(writer(args.output.as_deref())?, n, &rows)?;
    let side = args.minimizers.clone().or_else(|| {
        args.output.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".minimizers.csv");
            PathBuf::from(s)
        })
    });
    let mins = certify::enumerate_minimizers(&problem, n)?;
    match side {
        Some(p) => write_minimizers_csv(File::create(p).map_err(Error::from)?, n, &mins)?,
        None => {
            println!();
            write_minimizers_csv(std::io::stdout(), n, &mins)?;
        }
    }
    Ok(())
}

pub fn cmd_enumerate(args: &EnumerateArgs) -> std::result::Result<(), CliError> {
    let problem = io::read_problem(&args.problem)?;
    let k = args.max_support.unwrap_or(problem.n());
    let mins = certify::enumerate_minimizers(&problem, k)?;
    let doc = json!({ "schema": SCHEMA_VERSION, "max_support": k, "minimizers": mins });
    write_json(args.output.as_deref(), &doc)?;
    Ok(())
}

pub fn cmd_gen(args: &GenCommandArgs) -> std::result::Result<(), CliError> {
    let inst = datagen::generate(&args.gen.to_config())?;
    let problem = inst.to_problem(args.gen.lambda0_scale, args.gen.lambda2)?;
    let text = io::problem_to_json(&problem)?;
    let mut w = writer(args.output.as_deref())?;
    writeln!(w, "{text}").map_err(Error::from)?;
    w.flush().map_err(Error::from)?;
    if let Some(p) = &args.truth {
        write_json(Some(p), &inst.x_true)?;
    }
    Ok(())
}

/// A benchmark method: direct ℓ0 descent or a relaxation family.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    L0,
    Relaxed(PsiFamily),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::L0 => "l0".into(),
            Method::Relaxed(f) => f.label(),
        }
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    // Commas separate methods except inside kl parameters, so split on tokens that start a
    // new method name.
    let mut out = Vec::new();
    let mut cur = String::new();
    for tok in s.split(',') {
        let t = tok.trim();
        let starts_new = t == "l0"
            || t.starts_with("power")
            || t.starts_with("shannon")
            || t.starts_with("kl")
            || t.starts_with("matched");
        if starts_new && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !cur.is_empty() {
            cur.push(',');
        }
        cur.push_str(t);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if out.is_empty() {
        return Err(Error::Parse("no methods given".into()));
    }
    out.iter()
        .map(|m| if m == "l0" { Ok(Method::L0) } else { parse_psi(m).map(Method::Relaxed) })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub gen: DataGenConfig,
    pub lambda0_scale: f64,
    pub lambda2: f64,
    pub instances: usize,
    pub methods: Vec<Method>,
    pub gamma: GammaSpec,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub instance: usize,
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub schema: u32,
    pub methods: Vec<String>,
    pub instances: usize,
    /// `j0[i][m]`: final `J_0` of method `m` on instance `i`; `None` on failure.
    pub j0: Vec<Vec<Option<f64>>>,
    /// `ranks[i][m]`, 1-based; tied values share the smallest rank of their block and
    /// failed runs share the last rank.
    pub ranks: Vec<Vec<usize>>,
    /// `rank_counts[m][r]`: how often method `m` took rank `r + 1`.
    pub rank_counts: Vec<Vec<usize>>,
    pub time_mean: Vec<f64>,
    pub time_std: Vec<f64>,
    pub failures: Vec<Failure>,
}

/// Competition ranks of `values` (smaller is better): each method's rank is one plus the
/// number of methods strictly better than it by more than `RANK_TIE_TOL` relative.
pub fn rank_values(values: &[Option<f64>]) -> Vec<usize> {
    let k = values.len();
    values
        .iter()
        .map(|v| match v {
            None => k,
            Some(v) => {
                let tol = RANK_TIE_TOL * v.abs().max(1.0);
                1 + values.iter().filter(|w| matches!(w, Some(w) if *w < v - tol)).count()
            }
        })
        .collect()
}

fn run_method(problem: &Problem, method: &Method, gamma: &GammaSpec, config: &SolverConfig) -> Result<f64> {
    match method {
        Method::L0 => {
            let res = solver::solve(problem, Penalty::L0, config)?;
            problem.objective_j0(&res.x_vector())
        }
        Method::Relaxed(family) => {
            let relax = build_relaxation(problem, *family, gamma)?;
            let res = solver::solve(problem, Penalty::Relaxation(&relax), config)?;
            problem.objective_j0(&certify::threshold_to_j0(&relax, &res.x_vector()))
        }
    }
}

/// Generates the instances and runs every method from `x0 = 0`; failures are recorded per
/// instance and never abort the run.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let mut solver = cfg.solver.clone();
    solver.x0 = None;
    solver.record_trace = false;
    let k = cfg.methods.len();
    type Row = (Vec<Option<f64>>, Vec<f64>, Vec<Failure>);
    let rows: Vec<Row> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let mut gen = cfg.gen.clone();
            gen.seed = cfg.gen.seed.wrapping_add(i as u64);
            let problem = datagen::generate(&gen).and_then(|inst| inst.to_problem(cfg.lambda0_scale, cfg.lambda2));
            let mut vals = Vec::with_capacity(k);
            let mut times = Vec::with_capacity(k);
            let mut fails = Vec::new();
            for m in &cfg.methods {
                let t = Instant::now();
                let r = problem.as_ref().map_err(Clone::clone).and_then(|p| run_method(p, m, &cfg.gamma, &solver));
                times.push(t.elapsed().as_secs_f64());
                match r {
                    Ok(v) if v.is_finite() => vals.push(Some(v)),
                    Ok(v) => {
                        fails.push(Failure { instance: i, method: m.label(), error: format!("non-finite J0 {v}") });
                        vals.push(None);
                    }
                    Err(e) => {
                        fails.push(Failure { instance: i, method: m.label(), error: e.to_string() });
                        vals.push(None);
                    }
                }
            }
            (vals, times, fails)
        })
        .collect();

    let mut j0 = Vec::with_capacity(cfg.instances);
    let mut ranks = Vec::with_capacity(cfg.instances);
    let mut rank_counts = vec![vec![0usize; k]; k];
    let mut times = vec![Vec::with_capacity(cfg.instances); k];
    let mut failures = Vec::new();
    for (vals, ts, fails) in rows {
        let r = rank_values(&vals);
        for m in 0..k {
            rank_counts[m][r[m] - 1] += 1;
            times[m].push(ts[m]);
        }
        j0.push(vals);
        ranks.push(r);
        failures.extend(fails);
    }
    let (time_mean, time_std) = times
        .iter()
        .map(|t| {
            let n = t.len().max(1) as f64;
            let mean = t.iter().sum::<f64>() / n;
            let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip();
    Ok(BenchmarkReport {
        schema: SCHEMA_VERSION,
        methods: cfg.methods.iter().map(Method::label).collect(),
        instances: cfg.instances,
        j0,
        ranks,
        rank_counts,
        time_mean,
        time_std,
        failures,
    })
}

pub fn write_benchmark_csv<W: Write>(w: W, report: &BenchmarkReport) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["instance", "method", "J0", "rank"])?;
    for (i, (vals, ranks)) in report.j0.iter().zip(&report.ranks).enumerate() {
        for (m, name) in report.methods.iter().enumerate() {
            let v = vals[m].map_or_else(|| "nan".to_string(), |v| format!("{v:.17e}"));
            wr.write_record([i.to_string(), name.clone(), v, ranks[m].to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> std::result::Result<(), CliError> {
    let cfg = BenchmarkConfig {
        gen: args.gen.to_config(),
        lambda0_scale: args.gen.lambda0_scale,
        lambda2: args.gen.lambda2,
        instances: args.instances,
        methods: parse_methods(&args.methods)?,
        gamma: parse_gamma(&args.gamma)?,
        solver: SolverConfig { max_iter: args.max_iter, rel_tol: args.tol, ..Default::default() },
    };
    cfg.gen.validate()?;
    let report = run_benchmark(&cfg)?;
    if let Some(p) = &args.csv {
        write_benchmark_csv(File::create(p).map_err(Error::from)?, &report)?;
    }
    write_json(args.output.as_deref(), &report)?;
    Ok(())
}

/// Prints one line per built-in check; fails when any check fails.
pub fn cmd_self_check() -> std::result::Result<(), CliError> {
    let outcomes = testoracle::self_check();
    let mut ok = true;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        ok &= o.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError { code: 1, error: Error::Convergence("self-check failed".into()) })
    }
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    if cli.self_check {
        return cmd_self_check();
    }
    match cli.command {
        Some(Command::Solve(a)) => cmd_solve(&a),
        Some(Command::Calibrate(a)) => cmd_calibrate(&a),
        Some(Command::Landscape(a)) => cmd_landscape(&a),
        Some(Command::Benchmark(a)) => cmd_benchmark(&a),
        Some(Command::Enumerate(a)) => cmd_enumerate(&a),
        Some(Command::Gen(a)) => cmd_gen(&a),
        None => Err(CliError { code: 2, error: Error::Parse("no subcommand given; see --help".into()) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_grammar() {
        assert_eq!(parse_psi("power:2").unwrap(), PsiFamily::Power { p: 2.0 });
        assert_eq!(parse_psi("power:4/3").unwrap(), PsiFamily::Power { p: 4.0 / 3.0 });
        assert_eq!(parse_psi("shannon").unwrap(), PsiFamily::Shannon);
        assert_eq!(parse_psi("kl").unwrap(), PsiFamily::Kl { y: None, b: None });
        assert_eq!(parse_psi("kl:2,0.5").unwrap(), PsiFamily::Kl { y: Some(2.0), b: Some(0.5) });
        assert_eq!(parse_psi("matched").unwrap(), PsiFamily::Matched);
        assert!(parse_psi("power").is_err());
        assert!(parse_psi("cubic:3").is_err());
    }

    #[test]
    fn gamma_grammar() {
        assert_eq!(parse_gamma("thr").unwrap(), GammaSpec::Threshold);
        assert_eq!(parse_gamma("thrx1.5").unwrap(), GammaSpec::Scaled(1.5));
        assert_eq!(parse_gamma("list:1,2.5").unwrap(), GammaSpec::List(vec![1.0, 2.5]));
        assert!(parse_gamma("thrx-1").is_err());
        assert!(parse_gamma("list:a").is_err());
    }

    #[test]
    fn method_list_keeps_kl_parameters() {
        let m = parse_methods("l0,kl:2,0.5,power:2").unwrap();
        assert_eq!(
            m,
            vec![
                Method::L0,
                Method::Relaxed(PsiFamily::Kl { y: Some(2.0), b: Some(0.5) }),
                Method::Relaxed(PsiFamily::Power { p: 2.0 }),
            ]
        );
    }

    #[test]
    fn ranks_share_the_minimum_of_tied_blocks() {
        assert_eq!(rank_values(&[Some(1.0)]), vec![1]);
        assert_eq!(rank_values(&[Some(2.0), Some(2.0)]), vec![1, 1]);
        assert_eq!(rank_values(&[Some(3.0), Some(1.0), Some(1.0 + 1e-12), Some(2.0)]), vec![4, 1, 1, 3]);
        assert_eq!(rank_values(&[None, Some(5.0), None]), vec![3, 1, 3]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parse(String::new())), 2);
        assert_eq!(exit_code(&Error::Domain(String::new())), 3);
        assert_eq!(exit_code(&Error::UnsupportedPairing(String::new())), 4);
    }
}
