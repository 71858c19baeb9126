//! Schrödinger potential for uniform marginals and the resulting density.
//!
//! The potential `a` solves the symmetric marginal equation
//!
//! ```text
//! exp(a(x)) = ∫ exp(-c(x, y) - a(y)) dy
//! ```
//!
//! so that `rho(x, y) = exp(-c(x, y) - a(x) - a(y))` has unit row and
//! column integrals. The integral is discretized by the composite midpoint
//! rule on `m` cells and the equation is solved by a damped fixed point in
//! log space, starting from `a = 0`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::cost::{CostFunction, Smoothness};
use crate::error::{Error, Result};
use crate::table::Table;

/// Smallest damping the solver halves down to.
pub const MIN_DAMPING: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Abort when any exponent `-c - a - a` exceeds this in magnitude.
    pub exponent_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { m: 400, tol: 1e-10, max_iter: 10_000, damping: 1.0, exponent_bound: 700.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSolution {
    pub m: usize,
    /// Midpoint nodes `(i - 1/2) / m`.
    pub nodes: Vec<f64>,
    pub a_values: Vec<f64>,
    pub gamma0: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub damping_used: f64,
    /// Marginal residual of every accepted iterate, starting with `a = 0`.
    pub residual_trace: Vec<f64>,
}

pub fn midpoint_nodes(m: usize) -> Vec<f64> {
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
}

// Gibbs kernel exp(-c) on the midpoint grid, row-major, plus max c.
fn gibbs_kernel(cost: &CostFunction, nodes: &[f64], bound: f64) -> Result<(Vec<f64>, f64)> {
    let m = nodes.len();
    let mut g = vec![0.0; m * m];
    let mut c_max = 0.0f64;
    for (i, &x) in nodes.iter().enumerate() {
        for (j, &y) in nodes.iter().enumerate() {
            let c = cost.eval_unchecked(x, y);
            if !c.is_finite() || c.abs() > bound {
                return Err(Error::Overflow { value: c, bound });
            }
            c_max = c_max.max(c.abs());
            g[i * m + j] = (-c).exp();
        }
    }
    Ok((g, c_max))
}

// v_i = (1/m) sum_j G_ij exp(-a_j)
fn marginal_sums(g: &[f64], a: &[f64], out: &mut [f64]) {
    let m = a.len();
    let w = 1.0 / m as f64;
    let e: Vec<f64> = a.iter().map(|v| (-v).exp()).collect();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &g[i * m..(i + 1) * m];
        *o = w * row.iter().zip(&e).map(|(k, v)| k * v).sum::<f64>();
    }
}

fn residual_of(a: &[f64], sums: &[f64]) -> f64 {
    a.iter().zip(sums).map(|(ai, si)| ((-ai).exp() * si - 1.0).abs()).fold(0.0, f64::max)
}

fn check_exponents(a: &[f64], c_max: f64, bound: f64) -> Result<()> {
    let a_max = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let worst = c_max + 2.0 * a_max;
    if !worst.is_finite() || worst > bound {
        return Err(Error::Overflow { value: worst, bound });
    }
    Ok(())
}

/// Solves for the potential on `opts.m` midpoint nodes.
///
/// Each step proposes `a <- (1 - θ) a + θ log(∫ exp(-c - a))`. A proposal
/// that does not lower the marginal residual is rejected and θ is halved
/// (down to [`MIN_DAMPING`]), so the accepted residual trace is
/// non-increasing.
pub fn solve_potential(cost: &CostFunction, opts: &SolverOptions) -> Result<PotentialSolution> {
    if opts.m < 8 {
        return Err(Error::InvalidParameter("bridge resolution m must be at least 8".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("bridge tol must be positive".into()));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter("damping must lie in (0, 1]".into()));
    }
    let m = opts.m;
    let nodes = midpoint_nodes(m);
    let (g, c_max) = gibbs_kernel(cost, &nodes, opts.exponent_bound)?;

    let mut a = vec![0.0; m];
    let mut sums = vec![0.0; m];
    marginal_sums(&g, &a, &mut sums);
    let mut residual = residual_of(&a, &sums);
    let mut trace = vec![residual];
    let mut theta = opts.damping;
    let mut iterations = 0;

    let mut cand = vec![0.0; m];
    let mut cand_sums = vec![0.0; m];
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::BridgeNonConvergence { iterations, residual });
        }
        iterations += 1;
        for ((c, ai), si) in cand.iter_mut().zip(&a).zip(&sums) {
            *c = (1.0 - theta) * ai + theta * si.ln();
        }
        check_exponents(&cand, c_max, opts.exponent_bound)?;
        marginal_sums(&g, &cand, &mut cand_sums);
        let r = residual_of(&cand, &cand_sums);
        if r < residual || theta <= MIN_DAMPING {
            std::mem::swap(&mut a, &mut cand);
            std::mem::swap(&mut sums, &mut cand_sums);
            residual = r;
            trace.push(r);
        } else {
            theta = (theta / 2.0).max(MIN_DAMPING);
        }
    }

    let gamma0 = gamma0_of(&a);
    Ok(PotentialSolution {
        m,
        nodes,
        a_values: a,
        gamma0,
        iterations,
        final_residual: residual,
        damping_used: theta,
        residual_trace: trace,
    })
}

fn gamma0_of(a: &[f64]) -> f64 {
    -2.0 * a.iter().sum::<f64>() / a.len() as f64
}

/// `-2 ∫ a`, by the midpoint rule.
pub fn gamma0(sol: &PotentialSolution) -> f64 {
    gamma0_of(&sol.a_values)
}

/// Sup over nodes of `|∫ rho(x_i, y) dy - 1|`, recomputed from scratch.
pub fn marginal_residual(sol: &PotentialSolution, cost: &CostFunction) -> f64 {
    let m = sol.m;
    let w = 1.0 / m as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sol.nodes.iter().enumerate() {
        let s: f64 = sol
            .nodes
            .iter()
            .zip(&sol.a_values)
            .map(|(&y, aj)| (-cost.eval_unchecked(x, y) - sol.a_values[i] - aj).exp())
            .sum();
        worst = worst.max((w * s - 1.0).abs());
    }
    worst
}

/// How the potential is extended off the quadrature nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// `a(x) = log ∫ exp(-c(x, y) - a(y)) dy` with the midpoint rule, which
    /// reproduces the node values at convergence.
    #[default]
    Nystrom,
    /// Piecewise linear between nodes, constant on the two boundary
    /// half-cells.
    Linear,
}

impl PotentialSolution {
    pub fn potential_at(&self, cost: &CostFunction, x: f64, interp: Interpolation) -> f64 {
        match interp {
            Interpolation::Nystrom => {
                let s: f64 =
                    self.nodes.iter().zip(&self.a_values).map(|(&y, ay)| (-cost.eval_unchecked(x, y) - ay).exp()).sum();
                (s / self.m as f64).ln()
            }
            Interpolation::Linear => {
                let s = x * self.m as f64 - 0.5;
                if s <= 0.0 {
                    return self.a_values[0];
                }
                let i = s.floor() as usize;
                if i + 1 >= self.m {
                    return self.a_values[self.m - 1];
                }
                let t = s - i as f64;
                self.a_values[i] * (1.0 - t) + self.a_values[i + 1] * t
            }
        }
    }

    /// CSV with header `node,a_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,a_value\n");
        for (x, a) in self.nodes.iter().zip(&self.a_values) {
            let _ = writeln!(out, "{x:e},{a:e}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `exp(-c(x,y) - a(x) - a(y))` with the default interpolation.
pub fn evaluate_density(sol: &PotentialSolution, cost: &CostFunction, x: f64, y: f64) -> Result<f64> {
    cost.evaluate(x, y)?;
    let ax = sol.potential_at(cost, x, Interpolation::default());
    let ay = sol.potential_at(cost, y, Interpolation::default());
    Ok((-cost.eval_unchecked(x, y) - ax - ay).exp())
}

/// The bridge density bundled with the cost it was solved for.
#[derive(Clone, Debug)]
pub struct BridgeDensity {
    pub solution: Arc<PotentialSolution>,
    pub cost: Arc<CostFunction>,
    pub interpolation: Interpolation,
}

impl BridgeDensity {
    pub fn new(solution: PotentialSolution, cost: CostFunction) -> Self {
        Self { solution: Arc::new(solution), cost: Arc::new(cost), interpolation: Interpolation::default() }
    }
}

/// A kernel `rho` on `[0,1]^2`: either the bridge density or one of the
/// synthetic test kernels that bypass the cost layer.
#[derive(Clone, Debug)]
pub enum DensitySource {
    Bridge(BridgeDensity),
    /// `rho ≡ 1`.
    Constant,
    /// `rho = 1 + 2 ε cos(πx) cos(πy)`; mean-zero part is rank one with
    /// eigenvalue ε. Nonnegative only for ε ≤ 1/2.
    Cosine {
        epsilon: f64,
    },
    TabulatedKernel(Arc<Table>),
}

impl DensitySource {
    pub fn constant() -> Self {
        DensitySource::Constant
    }

    /// Accepts `ε ∈ [0, 1)`; values above 1/2 give a kernel with negative
    /// entries, which `sample_kernel` rejects but the spectral routines
    /// accept.
    pub fn cosine(epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("cosine epsilon must lie in [0, 1), got {epsilon}")));
        }
        Ok(DensitySource::Cosine { epsilon })
    }

    pub fn tabulated(table: Table) -> Self {
        DensitySource::TabulatedKernel(Arc::new(table))
    }

    pub fn bridge(solution: PotentialSolution, cost: CostFunction) -> Self {
        DensitySource::Bridge(BridgeDensity::new(solution, cost))
    }

    pub fn describe(&self) -> String {
        match self {
            DensitySource::Bridge(b) => format!("bridge[{}; m={}]", b.cost.describe(), b.solution.m),
            DensitySource::Constant => "constant".into(),
            DensitySource::Cosine { epsilon } => format!("cosine(epsilon={epsilon})"),
            DensitySource::TabulatedKernel(t) => format!("tabulated-kernel(m={})", t.order()),
        }
    }

    pub fn as_bridge(&self) -> Option<&BridgeDensity> {
        match self {
            DensitySource::Bridge(b) => Some(b),
            _ => None,
        }
    }

    /// True when the underlying cost only claims C0 regularity.
    pub fn is_rough(&self) -> bool {
        matches!(self, DensitySource::Bridge(b) if b.cost.smoothness() == Smoothness::C0)
    }

    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain { x, y });
        }
        Ok(match self {
            DensitySource::Bridge(b) => {
                let ax = b.solution.potential_at(&b.cost, x, b.interpolation);
                let ay = b.solution.potential_at(&b.cost, y, b.interpolation);
                (-b.cost.eval_unchecked(x, y) - ax - ay).exp()
            }
            _ => self.eval_simple(x, y),
        })
    }

    fn eval_simple(&self, x: f64, y: f64) -> f64 {
        match self {
            DensitySource::Constant => 1.0,
            DensitySource::Cosine { epsilon } => {
                1.0 + 2.0 * epsilon * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
            }
            DensitySource::TabulatedKernel(t) => t.interpolate(x, y),
            DensitySource::Bridge(_) => unreachable!("bridge handled by caller"),
        }
    }

    /// `[rho(p_i, p_j)]` for points in `[0,1]`. The bridge potential is
    /// evaluated once per point.
    pub fn sample(&self, points: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        if let Some(&p) = points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain { x: p, y: p });
        }
        let k = points.len();
        Ok(match self {
            DensitySource::Bridge(b) => {
                let pot: Vec<f64> =
                    points.iter().map(|&x| b.solution.potential_at(&b.cost, x, b.interpolation)).collect();
                nalgebra::DMatrix::from_fn(k, k, |i, j| {
                    (-b.cost.eval_unchecked(points[i], points[j]) - pot[i] - pot[j]).exp()
                })
            }
            _ => nalgebra::DMatrix::from_fn(k, k, |i, j| self.eval_simple(points[i], points[j])),
        })
    }
}
