//! Command-line front end: sweeps to CSV (plus an SVG plot), tester
//! optimizations to JSON.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{average_gate_fidelity, QubitChannel, Rotation};
use crate::discrimination::{
    asymptotic_success, average_success, control_entropy, maximally_mixed, overlap, setup_truncation, success_pair,
    GridSpec, PairSample, Setup, TaskConfig,
};
use crate::error::{invalid, Error, Result};
use crate::fock::{truncation_order, DEFAULT_TAIL_TOL};
use crate::linalg::{c64, M2};
use crate::record::TesterRecord;
use crate::sdp::{optimize_fco, FcoSolution, SolverSettings, Status};
use crate::tester::{
    assemble_g_finite, assemble_g_ideal, optimal_circuit_ba, success_probability, tester_from_circuit,
    verify_perfect_discrimination, Order, PayoffPair,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "CAUSALBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "causalbench", version, about = "Quantum switch vs four-box vs fixed-order benchmarks with energy-limited gates")]
pub struct Cli {
    /// Worker threads (0 = all cores); CAUSALBENCH_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average gate fidelity of the field-driven rotations against n̄.
    FidelitySweep(FidelityArgs),
    /// Average success probabilities of QS, 4B and the best isotropic FCO tester.
    SuccessSweep(SuccessArgs),
    /// Optimal fixed-order testers by semidefinite programming.
    FcoOptimize(FcoArgs),
    /// Checks the perfect B-before-A circuit on random unitary pairs.
    VerifyCircuit(VerifyArgs),
    /// Control-qubit entanglement entropy for representative pairs.
    Entropy(EntropyArgs),
    /// First-order success probabilities and the QS-4B gap.
    Asymptotics(AsymptoticsArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NbarRange {
    #[arg(long, default_value_t = 1.0)]
    pub nbar_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub nbar_max: f64,
    #[arg(long, default_value_t = 20)]
    pub nbar_steps: usize,
}

impl NbarRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.nbar_min.is_finite() && self.nbar_min > 0.0 && self.nbar_max.is_finite() && self.nbar_max >= self.nbar_min) {
            return Err(invalid(format!("need 0 < nbar-min <= nbar-max, got {} and {}", self.nbar_min, self.nbar_max)));
        }
        match self.nbar_steps {
            0 => Err(invalid("nbar-steps must be at least 1")),
            1 => Ok(vec![self.nbar_min]),
            n => Ok((0..n).map(|k| self.nbar_min + (self.nbar_max - self.nbar_min) * k as f64 / (n - 1) as f64).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoSpec {
    Mixed,
    Zero,
    One,
}

impl RhoSpec {
    pub fn matrix(self) -> M2 {
        match self {
            RhoSpec::Mixed => maximally_mixed(),
            RhoSpec::Zero => M2::new(c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)),
            RhoSpec::One => M2::new(c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    Ab,
    Ba,
    Both,
}

impl OrderArg {
    fn orders(self) -> Vec<Order> {
        match self {
            OrderArg::Ab => vec![Order::AThenB],
            OrderArg::Ba => vec![Order::BThenA],
            OrderArg::Both => vec![Order::AThenB, Order::BThenA],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetupArg {
    Qs,
    #[value(name = "4b")]
    #[serde(rename = "4b")]
    FourBox,
    FcoIso,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FidelityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub range: NbarRange,
    /// Rotation angles (radians).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2, std::f64::consts::PI])]
    pub theta: Vec<f64>,
    /// Poisson tail tolerance for the Fock truncation.
    #[arg(long, default_value_t = DEFAULT_TAIL_TOL)]
    pub tail_tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SuccessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub range: NbarRange,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["qs", "4b", "fco-iso"])]
    pub setups: Vec<SetupArg>,
    /// Quadrature nodes per angle.
    #[arg(long, default_value_t = 48)]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = RhoSpec::Mixed)]
    pub rho: RhoSpec,
    /// SDP tolerance for the FCO rows.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_TAIL_TOL)]
    pub tail_tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// SVG plot path; defaults to the CSV path with an .svg extension.
    #[arg(long)]
    #[serde(skip)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FcoArgs {
    /// Comma-separated n̄ values or "ideal".
    #[arg(long, value_delimiter = ',', default_values_t = vec!["ideal".to_string()])]
    pub nbar: Vec<String>,
    #[arg(long, value_enum, default_value_t = OrderArg::Both)]
    pub order: OrderArg,
    #[arg(long)]
    pub isotropic: bool,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 48)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_TAIL_TOL)]
    pub tail_tol: f64,
    /// Include the optimal tester operators in the output.
    #[arg(long)]
    pub with_tester: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EntropyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub range: NbarRange,
    #[arg(long, value_enum, default_value_t = RhoSpec::Mixed)]
    pub rho: RhoSpec,
    #[arg(long, default_value_t = DEFAULT_TAIL_TOL)]
    pub tail_tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub range: NbarRange,
    #[arg(long, value_enum, default_value_t = RhoSpec::Mixed)]
    pub rho: RhoSpec,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Dimension(_) | Error::MemoryCap { .. } | Error::Rank { .. } => 2,
        Error::Solver { .. } => 3,
        Error::Io { .. } | Error::Serde(_) => 4,
    }
}

/// Thread count after applying the environment override.
pub fn effective_threads(flag: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| invalid(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = effective_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::FidelitySweep(a) => cmd_fidelity_sweep(a),
        Command::SuccessSweep(a) => cmd_success_sweep(a),
        Command::FcoOptimize(a) => cmd_fco_optimize(a),
        Command::VerifyCircuit(a) => cmd_verify_circuit(a),
        Command::Entropy(a) => cmd_entropy(a),
        Command::Asymptotics(a) => cmd_asymptotics(a),
    })
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

/// CSV text: a `# causalbench schema=1 config={...}` comment line, a header
/// row, then the records.
pub fn render_csv<C: Serialize>(command: &str, config: &C, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = format!("# causalbench schema={SCHEMA_VERSION} command={command} config={}\n", serde_json::to_string(config)?).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| invalid(format!("csv encoding failed: {e}"));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| io_err(Path::new("<buffer>"), e))?;
    }
    Ok(buf)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn check_tol(tol: f64, what: &str) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid(format!("{what} must lie in (0, 1), got {tol}")));
    }
    Ok(())
}

fn check_grid(grid: usize) -> Result<()> {
    if grid < 2 {
        return Err(invalid(format!("grid needs at least 2 nodes, got {grid}")));
    }
    Ok(())
}

/// 1 - (1 - cos θ + θ²/2) / (12 n̄)
pub fn fidelity_first_order(theta: f64, nbar: f64) -> f64 {
    1.0 - (1.0 - theta.cos() + theta * theta / 2.0) / (12.0 * nbar)
}

pub fn cmd_fidelity_sweep(a: &FidelityArgs) -> Result<()> {
    let nbars = a.range.values()?;
    check_tol(a.tail_tol, "tail-tol")?;
    let jobs: Vec<(f64, f64)> = a.theta.iter().flat_map(|&t| nbars.iter().map(move |&n| (t, n))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(theta, nbar)| -> Result<Vec<String>> {
            let ch = QubitChannel::jaynes_cummings(theta, 0.0, nbar, truncation_order(nbar, a.tail_tol)?)?;
            let f = average_gate_fidelity(&ch, &Rotation::equatorial(theta, 0.0));
            Ok(vec![fmt(theta), fmt(nbar), fmt(f), fmt(fidelity_first_order(theta, nbar))])
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = render_csv("fidelity-sweep", a, &["theta", "nbar", "f_exact", "f_first_order"], &rows)?;
    write_output(a.out.as_deref(), &csv)
}

/// One success-sweep row; `nbar = None` marks the infinite-energy limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessRow {
    pub nbar: Option<f64>,
    pub setup: &'static str,
    pub p_avg: f64,
    pub p_com: f64,
    pub p_anti: f64,
    pub quad_err: Option<f64>,
    pub p_first_order: Option<f64>,
}

impl SuccessRow {
    fn cells(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
        vec![
            self.nbar.map(fmt).unwrap_or_else(|| "inf".into()),
            self.setup.into(),
            fmt(self.p_avg),
            fmt(self.p_com),
            fmt(self.p_anti),
            opt(self.quad_err),
            opt(self.p_first_order),
        ]
    }
}

/// Best isotropic FCO tester over both orders for a payoff.
pub fn best_isotropic_fco(payoff: &PayoffPair, tol: f64) -> Result<(Order, FcoSolution)> {
    let mut best: Option<(Order, FcoSolution)> = None;
    for order in [Order::AThenB, Order::BThenA] {
        let s = optimize_fco(payoff, order, true, &SolverSettings::with_tol(tol))?;
        if s.status != Status::Optimal {
            return Err(Error::Solver { status: s.status.to_string(), detail: format!("isotropic {} tester after {} iterations", order.label(), s.iterations) });
        }
        if best.as_ref().is_none_or(|(_, b)| s.p_star > b.p_star) {
            best = Some((order, s));
        }
    }
    Ok(best.expect("two orders tried"))
}

fn fco_row(nbar: Option<f64>, payoff: &PayoffPair, tol: f64) -> Result<SuccessRow> {
    let (_, s) = best_isotropic_fco(payoff, tol)?;
    let t = &s.tester;
    let p_com = crate::linalg::hs_inner(&t.w_plus.conjugate(), &payoff.g_plus).re;
    let p_anti = crate::linalg::hs_inner(&t.w_minus.conjugate(), &payoff.g_minus).re;
    Ok(SuccessRow { nbar, setup: "FCO-iso", p_avg: s.p_star, p_com, p_anti, quad_err: None, p_first_order: None })
}

pub fn success_rows(a: &SuccessArgs) -> Result<Vec<SuccessRow>> {
    let nbars = a.range.values()?;
    check_grid(a.grid)?;
    check_tol(a.tol, "tol")?;
    check_tol(a.tail_tol, "tail-tol")?;
    if a.setups.is_empty() {
        return Err(invalid("need at least one setup"));
    }
    let rho = a.rho.matrix();
    let mut rows = Vec::new();
    for &nbar in &nbars {
        for &s in &a.setups {
            let row = match s {
                SetupArg::Qs | SetupArg::FourBox => {
                    let setup = if s == SetupArg::Qs { Setup::Qs } else { Setup::FourBox };
                    let mut cfg = TaskConfig::new(setup, nbar);
                    cfg.rho_s = rho;
                    cfg.grid = GridSpec::uniform(a.grid);
                    cfg.tail_tol = a.tail_tol;
                    let r = average_success(&cfg)?;
                    let first = asymptotic_success(setup, nbar, &rho)?;
                    SuccessRow {
                        nbar: Some(nbar),
                        setup: setup.label(),
                        p_avg: r.p_average,
                        p_com: r.p_commuting,
                        p_anti: r.p_anticommuting,
                        quad_err: Some(r.quadrature_error_estimate),
                        p_first_order: Some(first.p_average),
                    }
                }
                SetupArg::FcoIso => fco_row(Some(nbar), &assemble_g_finite(nbar, &GridSpec::uniform(a.grid), a.tail_tol)?, a.tol)?,
            };
            rows.push(row);
        }
    }
    if a.setups.contains(&SetupArg::FcoIso) {
        rows.push(fco_row(None, &assemble_g_ideal(), a.tol)?);
    }
    Ok(rows)
}

pub fn cmd_success_sweep(a: &SuccessArgs) -> Result<()> {
    let rows = success_rows(a)?;
    let cells: Vec<Vec<String>> = rows.iter().map(SuccessRow::cells).collect();
    let csv = render_csv("success-sweep", a, &["nbar", "setup", "p_avg", "p_com", "p_anti", "quad_err", "p_first_order"], &cells)?;
    write_output(a.out.as_deref(), &csv)?;
    let svg_path = a.svg.clone().or_else(|| a.out.as_ref().map(|p| p.with_extension("svg")));
    if let Some(path) = svg_path {
        let svg = success_plot(&rows);
        std::fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub color: &'static str,
}

fn success_plot(rows: &[SuccessRow]) -> String {
    let mut series = Vec::new();
    for (label, color) in [("QS", "#1f77b4"), ("4B", "#d62728"), ("FCO-iso", "#2ca02c")] {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.setup == label).filter_map(|r| r.nbar.map(|n| (n, r.p_avg))).collect();
        if pts.is_empty() {
            continue;
        }
        let first: Vec<(f64, f64)> = rows.iter().filter(|r| r.setup == label).filter_map(|r| Some((r.nbar?, r.p_first_order?))).collect();
        series.push(Series { name: label.into(), points: pts, dashed: false, color });
        if !first.is_empty() {
            series.push(Series { name: format!("{label} first order"), points: first, dashed: true, color });
        }
    }
    line_plot(&series, "mean photon number", "average success probability")
}

/// Minimal SVG line plot: axes, ticks, polylines and a legend.
pub fn line_plot(series: &[Series], x_label: &str, y_label: &str) -> String {
    let (w, h, ml, mr, mt, mb) = (720.0, 480.0, 70.0, 190.0, 20.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1e-3;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{ml}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - mb,
        r = w - mr
    );
    for k in 0..=5 {
        let x = x0 + (x1 - x0) * k as f64 / 5.0;
        let y = y0 + (y1 - y0) * k as f64 / 5.0;
        s += &format!(
            "<line x1=\"{X:.1}\" y1=\"{b}\" x2=\"{X:.1}\" y2=\"{b5}\" stroke=\"black\"/><text x=\"{X:.1}\" y=\"{bt}\" text-anchor=\"middle\">{x:.3}</text>\n\
             <line x1=\"{ml}\" y1=\"{Y:.1}\" x2=\"{m5}\" y2=\"{Y:.1}\" stroke=\"black\"/><text x=\"{mt2}\" y=\"{Y:.1}\" text-anchor=\"end\" dominant-baseline=\"middle\">{y:.4}</text>\n",
            X = px(x),
            Y = py(y),
            b = h - mb,
            b5 = h - mb + 5.0,
            bt = h - mb + 18.0,
            m5 = ml - 5.0,
            mt2 = ml - 8.0,
        );
    }
    s += &format!(
        "<text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\">{x_label}</text>\n<text transform=\"translate(14 {cy}) rotate(-90)\" text-anchor=\"middle\">{y_label}</text>\n",
        cx = (ml + w - mr) / 2.0,
        ly = h - 10.0,
        cy = (mt + h - mb) / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let dash = if ser.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        s += &format!("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n", ser.color, pts.join(" "));
        let ly = mt + 16.0 * i as f64 + 10.0;
        let lx = w - mr + 12.0;
        s += &format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/><text x=\"{}\" y=\"{ly}\" dominant-baseline=\"middle\">{}</text>\n",
            lx + 24.0,
            ser.color,
            lx + 30.0,
            ser.name
        );
    }
    s += "</svg>\n";
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct FcoRecord {
    /// None for ideal unitaries.
    pub nbar: Option<f64>,
    pub order: Order,
    pub isotropic: bool,
    pub p_star: f64,
    pub dual_certificate: f64,
    pub solver_iters: usize,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tester: Option<TesterRecord>,
}

pub fn fco_records(a: &FcoArgs) -> Result<Vec<FcoRecord>> {
    check_grid(a.grid)?;
    check_tol(a.tail_tol, "tail-tol")?;
    if !(1e-10..=1e-3).contains(&a.tol) {
        return Err(invalid(format!("tol must lie in [1e-10, 1e-3], got {}", a.tol)));
    }
    let nbars: Vec<Option<f64>> = a
        .nbar
        .iter()
        .map(|s| match s.trim() {
            "ideal" | "inf" => Ok(None),
            v => match v.parse::<f64>() {
                Ok(x) if x.is_finite() && x > 0.0 => Ok(Some(x)),
                _ => Err(invalid(format!("nbar must be a positive number or \"ideal\", got {v:?}"))),
            },
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(Option<f64>, Order)> = nbars.iter().flat_map(|&n| a.order.orders().into_iter().map(move |o| (n, o))).collect();
    jobs.par_iter()
        .map(|&(nbar, order)| {
            let payoff = match nbar {
                None => assemble_g_ideal(),
                Some(n) => assemble_g_finite(n, &GridSpec::uniform(a.grid), a.tail_tol)?,
            };
            let s = optimize_fco(&payoff, order, a.isotropic, &SolverSettings::with_tol(a.tol))?;
            Ok(FcoRecord {
                nbar,
                order,
                isotropic: a.isotropic,
                p_star: s.p_star,
                dual_certificate: s.certificate,
                solver_iters: s.iterations,
                status: s.status,
                tester: a.with_tester.then(|| TesterRecord::from(&s.tester)),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct JsonOutput<'a, C: Serialize, R: Serialize> {
    schema: u32,
    command: &'a str,
    config: &'a C,
    results: R,
}

fn render_json<C: Serialize, R: Serialize>(command: &str, config: &C, results: R) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(&JsonOutput { schema: SCHEMA_VERSION, command, config, results })?;
    v.push(b'\n');
    Ok(v)
}

pub fn cmd_fco_optimize(a: &FcoArgs) -> Result<()> {
    let records = fco_records(a)?;
    write_output(a.out.as_deref(), &render_json("fco-optimize", a, &records)?)?;
    if let Some(r) = records.iter().find(|r| r.status != Status::Optimal) {
        return Err(Error::Solver {
            status: r.status.to_string(),
            detail: format!("nbar {:?}, order {} after {} iterations", r.nbar, r.order.label(), r.solver_iters),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRecord {
    pub samples: usize,
    pub seed: u64,
    pub max_abs_overlap: f64,
    pub max_norm_defect: f64,
    pub tester_success_ideal: f64,
    pub tester_residual: f64,
}

pub fn verify_record(a: &VerifyArgs) -> Result<VerifyRecord> {
    if a.samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let c = optimal_circuit_ba();
    let check = verify_perfect_discrimination(&c, a.samples, a.seed)?;
    let t = tester_from_circuit(&c)?;
    Ok(VerifyRecord {
        samples: a.samples,
        seed: a.seed,
        max_abs_overlap: check.max_abs_overlap,
        max_norm_defect: check.max_norm_defect,
        tester_success_ideal: success_probability(&t, &assemble_g_ideal()),
        tester_residual: t.residuals.max(),
    })
}

pub fn cmd_verify_circuit(a: &VerifyArgs) -> Result<()> {
    write_output(a.out.as_deref(), &render_json("verify-circuit", a, verify_record(a)?)?)
}

fn representative_pairs() -> [(&'static str, PairSample); 2] {
    use std::f64::consts::FRAC_PI_2;
    [
        ("commuting", PairSample::commuting(0.0, FRAC_PI_2, FRAC_PI_2)),
        ("anticommuting", PairSample::anticommuting(0.0, FRAC_PI_2)),
    ]
}

pub fn cmd_entropy(a: &EntropyArgs) -> Result<()> {
    let nbars = a.range.values()?;
    check_tol(a.tail_tol, "tail-tol")?;
    let rho = a.rho.matrix();
    let mut jobs = Vec::new();
    for &n in &nbars {
        for setup in [Setup::Qs, Setup::FourBox] {
            for (name, pair) in representative_pairs() {
                jobs.push((n, setup, name, pair));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(nbar, setup, name, ref pair)| -> Result<Vec<String>> {
            let trunc = setup_truncation(setup, nbar, a.tail_tol)?;
            let ov = overlap(setup, pair, nbar, &rho, trunc)?;
            let (p, _) = success_pair(setup, pair, nbar, &rho, trunc)?;
            Ok(vec![fmt(nbar), setup.label().into(), name.into(), fmt(ov.re), fmt(ov.im), fmt(p), fmt(control_entropy(ov))])
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = render_csv("entropy", a, &["nbar", "setup", "pair", "overlap_re", "overlap_im", "p_success", "entropy_bits"], &rows)?;
    write_output(a.out.as_deref(), &csv)
}

pub fn cmd_asymptotics(a: &AsymptoticsArgs) -> Result<()> {
    let rho = a.rho.matrix();
    let rows = a
        .range
        .values()?
        .into_iter()
        .map(|n| -> Result<Vec<String>> {
            let qs = asymptotic_success(Setup::Qs, n, &rho)?.p_average;
            let fb = asymptotic_success(Setup::FourBox, n, &rho)?.p_average;
            Ok(vec![fmt(n), fmt(qs), fmt(fb), fmt(qs - fb)])
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = render_csv("asymptotics", a, &["nbar", "p_qs_first_order", "p_4b_first_order", "gap"], &rows)?;
    write_output(a.out.as_deref(), &csv)
}
