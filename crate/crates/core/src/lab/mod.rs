//! End-to-end studies behind the `permlim` command line tool.

pub mod config;
pub mod fit;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::balance::{balance_diagnostics, balance_fixed_point, BalanceDiagnostics};
use crate::bridge::{solve_potential, DensitySource, PotentialSolution};
use crate::cost::{validate_cost, ValidationReport};
use crate::error::{Error, Result};
use crate::grid::sample_kernel;
use crate::permanent::{compute_dn, compute_dn_hat, compute_ln, SLOW_ORDER};
use crate::spectral::{fredholm_limit, mccullagh_estimate, FredholmEstimate, GAP_WARNING};

pub use config::{CostSpec, KernelSpec, RunConfig};
pub use fit::{fit_rate, RateFit};

pub const VALIDATION_GRID: usize = 100;
pub const VALIDATION_TOL: f64 = 1e-12;

pub const CONVERGE_HEADER: &str = "n,D_n,D_n_hat,L_n_scaled,mccullagh,fredholm_limit,err_Dn,err_ratio_mcc,h_norm_2n,h_norm_inf,sum_log,m_n,wall_ms_permanent,wall_ms_balance";
pub const BALANCE_HEADER: &str = "n,h_norm_2n,h_norm_inf,sum_log,m_n,scaled_h_norm_2n,scaled_h_norm_inf,scaled_sum_log,scaled_m_n,line_sum_dev,iterations";

/// Ratio bounds for the four scaled balance columns, in column order.
pub const BALANCE_RATIO_LIMITS: [f64; 4] = [4.0, 4.0, 4.0, 8.0];

/// Validates the `[cost]` block on a 100-cell grid.
pub fn run_validate_cost(cfg: &RunConfig) -> Result<ValidationReport> {
    let cost = cfg.require_cost()?.build()?;
    validate_cost(&cost, VALIDATION_GRID, VALIDATION_TOL)
}

/// Solves the bridge for the `[cost]` block and writes `node,a_value` to
/// the configured CSV path, if any.
pub fn run_solve_bridge(cfg: &RunConfig) -> Result<PotentialSolution> {
    let cost = cfg.require_cost()?.build()?;
    let sol = solve_potential(&cost, &cfg.bridge.solver)?;
    if let Some(path) = &cfg.output.csv_path {
        sol.write_csv(path)?;
    }
    Ok(sol)
}

/// The kernel a study runs on: the synthetic `[kernel]` block, or the bridge
/// density of the `[cost]` block (solved here).
pub fn build_source(cfg: &RunConfig) -> Result<DensitySource> {
    if let Some(k) = &cfg.kernel {
        return k.build();
    }
    let cost = cfg.cost.as_ref().ok_or_else(|| Error::Config("missing [cost] or [kernel] block".into()))?.build()?;
    let sol = solve_potential(&cost, &cfg.bridge.solver)?;
    let mut src = DensitySource::bridge(sol, cost);
    if let DensitySource::Bridge(b) = &mut src {
        b.interpolation = cfg.bridge.interpolation;
    }
    Ok(src)
}

fn source_warnings(src: &DensitySource) -> Vec<String> {
    let mut w = Vec::new();
    if src.is_rough() {
        w.push("cost only claims C0 regularity; the limit theorem assumes C2".into());
    }
    w
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub d_n: f64,
    pub d_n_hat: f64,
    /// `L_n exp(n Γ_0)`; bridge sources only.
    pub l_n_scaled: Option<f64>,
    pub mccullagh: f64,
    pub fredholm_limit: f64,
    pub err_dn: f64,
    pub err_ratio_mcc: f64,
    pub diagnostics: BalanceDiagnostics,
    pub wall_ms_permanent: f64,
    pub wall_ms_balance: f64,
}

impl ConvergenceRecord {
    pub fn csv_row(&self) -> String {
        let l = self.l_n_scaled.map(|v| format!("{v:e}")).unwrap_or_default();
        let d = &self.diagnostics;
        format!(
            "{},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:.3},{:.3}",
            self.n,
            self.d_n,
            self.d_n_hat,
            l,
            self.mccullagh,
            self.fredholm_limit,
            self.err_dn,
            self.err_ratio_mcc,
            d.norm_2n_h,
            d.norm_inf_h,
            d.sum_log,
            d.m_n,
            self.wall_ms_permanent,
            self.wall_ms_balance,
        )
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub source: String,
    pub records: Vec<ConvergenceRecord>,
    pub fredholm: FredholmEstimate,
    pub rate: RateFit,
    pub warnings: Vec<String>,
}

impl ConvergenceStudy {
    pub fn csv(&self) -> String {
        let mut out = format!("{CONVERGE_HEADER}\n");
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source: {}", self.source);
        let _ = writeln!(
            out,
            "fredholm limit: {:.10} (m = {}, refined {:.10}, {})",
            self.fredholm.value,
            self.fredholm.m,
            self.fredholm.refined,
            if self.fredholm.converged { "converged" } else { "NOT converged" }
        );
        let _ = writeln!(
            out,
            "{:>4} {:>16} {:>16} {:>16} {:>12} {:>12}",
            "n", "D_n", "D_n_hat", "mccullagh", "err_Dn", "err_mcc"
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:>4} {:>16.12} {:>16.12} {:>16.12} {:>12.4e} {:>12.4e}",
                r.n, r.d_n, r.d_n_hat, r.mccullagh, r.err_dn, r.err_ratio_mcc
            );
        }
        let _ = writeln!(out, "rate: {}", self.rate);
        out
    }
}

fn converge_record(src: &DensitySource, cfg: &RunConfig, n: usize, limit: f64) -> Result<ConvergenceRecord> {
    let study = &cfg.study;
    let k = sample_kernel(src, n)?;
    let t = Instant::now();
    let res = balance_fixed_point(&k, study.balance_tol, study.balance_max_iter)?;
    let wall_ms_balance = millis(t);
    let diagnostics = balance_diagnostics(&res);

    let t = Instant::now();
    let d_n = compute_dn(&k, &study.permanent)?.value;
    let d_n_hat = compute_dn_hat(&res, &study.permanent)?.value;
    let l_n_scaled = match src.as_bridge() {
        Some(b) => Some(compute_ln(&b.cost, n, &study.permanent)?.value * (n as f64 * b.solution.gamma0).exp()),
        None => None,
    };
    let wall_ms_permanent = millis(t);

    let mccullagh = mccullagh_estimate(&res.a_matrix())?;
    Ok(ConvergenceRecord {
        n,
        d_n,
        d_n_hat,
        l_n_scaled,
        mccullagh,
        fredholm_limit: limit,
        err_dn: (d_n - limit).abs(),
        err_ratio_mcc: (mccullagh / d_n_hat - 1.0).abs(),
        diagnostics,
        wall_ms_permanent,
        wall_ms_balance,
    })
}

/// Stage errors inside a study carry the `n` they failed at.
#[derive(Debug)]
pub struct StudyAbort {
    pub n: usize,
    pub error: Error,
}

impl std::fmt::Display for StudyAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "aborted at n={}: {}", self.n, self.error)
    }
}

#[derive(Debug)]
pub enum StudyError {
    Setup(Error),
    Aborted(StudyAbort),
}

impl StudyError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StudyError::Setup(e) => e.exit_code(),
            StudyError::Aborted(a) => a.error.exit_code(),
        }
    }
}

impl std::fmt::Display for StudyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyError::Setup(e) => e.fmt(f),
            StudyError::Aborted(a) => a.fmt(f),
        }
    }
}

impl std::error::Error for StudyError {}

impl From<Error> for StudyError {
    fn from(e: Error) -> Self {
        StudyError::Setup(e)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Path of the eigenvalue dump that sits next to a study CSV.
pub fn eigen_dump_path(csv: &Path) -> PathBuf {
    csv.with_extension("eigen.txt")
}

/// Runs `D_n` through the whole pipeline for every `n` in the study list.
///
/// Rows are computed concurrently but emitted in ascending `n`. On a stage
/// failure the rows before it are still written, followed by
/// `# aborted at n=<n>`.
pub fn run_converge(cfg: &RunConfig) -> std::result::Result<ConvergenceStudy, StudyError> {
    cfg.check_cap()?;
    let src = build_source(cfg)?;
    let mut warnings = source_warnings(&src);
    let study = &cfg.study;
    if let Some(&n) = study.n_list.iter().find(|&&n| n > SLOW_ORDER) {
        warnings.push(format!("exact permanents above n = {SLOW_ORDER} are slow (largest n = {n})"));
    }

    let fredholm = fredholm_limit(&src, study.nystrom_m, study.eig_cutoff, study.refinement_tol)?;
    if !fredholm.converged {
        warnings.push(format!(
            "Fredholm limit not converged: m={} gives {:.12}, 2m gives {:.12}",
            fredholm.m, fredholm.value, fredholm.refined
        ));
    }
    if fredholm.lambda_star >= GAP_WARNING {
        warnings.push(format!("spectral gap nearly closed: lambda* = {:.6}", fredholm.lambda_star));
    }

    let limit = fredholm.value;
    let results: Vec<Result<ConvergenceRecord>> =
        in_pool(study.workers, || study.n_list.par_iter().map(|&n| converge_record(&src, cfg, n, limit)).collect())?;

    let mut records = Vec::with_capacity(results.len());
    let mut abort = None;
    for (r, &n) in results.into_iter().zip(&study.n_list) {
        match r {
            Ok(rec) => records.push(rec),
            Err(error) => {
                abort = Some(StudyAbort { n, error });
                break;
            }
        }
    }

    let ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    let errs: Vec<f64> = records.iter().map(|r| r.err_dn).collect();
    let out = ConvergenceStudy { source: src.describe(), rate: fit_rate(&ns, &errs), records, fredholm, warnings };

    if let Some(path) = &cfg.output.csv_path {
        let mut text = out.csv();
        if let Some(a) = &abort {
            let _ = writeln!(text, "# aborted at n={}", a.n);
        }
        write_text(path, &text)?;
        if cfg.output.eigen_dump {
            let dump: String = out.fredholm.eigenvalues.iter().map(|v| format!("{v:e}\n")).collect();
            write_text(&eigen_dump_path(path), &dump)?;
        }
    }
    match abort {
        Some(a) => Err(StudyError::Aborted(a)),
        None => Ok(out),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceRow {
    pub n: usize,
    pub diagnostics: BalanceDiagnostics,
    /// `n‖h‖_{2,n}`, `√n‖h‖_∞`, `n|Σ log(1+h_i)|`, `n²|m_n|`.
    pub scaled: [f64; 4],
    pub line_sum_dev: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceStudy {
    pub source: String,
    pub rows: Vec<BalanceRow>,
    /// max/min of each scaled column; 1 for an all-zero column.
    pub ratios: [f64; 4],
    pub warnings: Vec<String>,
}

impl BalanceStudy {
    pub fn within_limits(&self) -> bool {
        self.ratios.iter().zip(BALANCE_RATIO_LIMITS).all(|(r, l)| *r <= l)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("{BALANCE_HEADER}\n");
        for r in &self.rows {
            let d = &r.diagnostics;
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.n,
                d.norm_2n_h,
                d.norm_inf_h,
                d.sum_log,
                d.m_n,
                r.scaled[0],
                r.scaled[1],
                r.scaled[2],
                r.scaled[3],
                r.line_sum_dev,
                r.iterations
            );
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source: {}", self.source);
        let _ = writeln!(
            out,
            "{:>6} {:>14} {:>14} {:>14} {:>14} {:>12}",
            "n", "n|h|_2n", "sqrt(n)|h|_inf", "n|sum log|", "n^2|m_n|", "row dev"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>12.3e}",
                r.n, r.scaled[0], r.scaled[1], r.scaled[2], r.scaled[3], r.line_sum_dev
            );
        }
        let _ = writeln!(
            out,
            "{:>6} {:>14.4} {:>14.4} {:>14.4} {:>14.4}",
            "ratio", self.ratios[0], self.ratios[1], self.ratios[2], self.ratios[3]
        );
        let _ = writeln!(
            out,
            "{:>6} {:>14} {:>14} {:>14} {:>14}",
            "limit", BALANCE_RATIO_LIMITS[0], BALANCE_RATIO_LIMITS[1], BALANCE_RATIO_LIMITS[2], BALANCE_RATIO_LIMITS[3]
        );
        out
    }
}

fn max_min_ratio(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == 0.0 {
        1.0
    } else {
        hi / lo
    }
}

/// Balancing diagnostics over the study list; no permanents, so `n` may
/// exceed the permanent cap.
pub fn run_balance_study(cfg: &RunConfig) -> std::result::Result<BalanceStudy, StudyError> {
    let src = build_source(cfg)?;
    let study = &cfg.study;
    let results: Vec<Result<BalanceRow>> = in_pool(study.workers, || {
        study
            .n_list
            .par_iter()
            .map(|&n| {
                let k = sample_kernel(&src, n)?;
                let res = balance_fixed_point(&k, study.balance_tol, study.balance_max_iter)?;
                let d = balance_diagnostics(&res);
                let nf = n as f64;
                Ok(BalanceRow {
                    n,
                    scaled: [nf * d.norm_2n_h, nf.sqrt() * d.norm_inf_h, nf * d.sum_log.abs(), nf * nf * d.m_n.abs()],
                    diagnostics: d,
                    line_sum_dev: res.line_sum_deviation(),
                    iterations: res.iterations,
                })
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (r, &n) in results.into_iter().zip(&study.n_list) {
        rows.push(r.map_err(|error| StudyError::Aborted(StudyAbort { n, error }))?);
    }
    let ratios = std::array::from_fn(|c| max_min_ratio(rows.iter().map(|r| r.scaled[c])));
    let out = BalanceStudy { source: src.describe(), rows, ratios, warnings: source_warnings(&src) };
    if let Some(path) = &cfg.output.csv_path {
        write_text(path, &out.csv())?;
    }
    Ok(out)
}
