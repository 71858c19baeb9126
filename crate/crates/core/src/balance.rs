//! Symmetric balancing of a sampled kernel to exact double stochasticity.
//!
//! Writing the scaling as `u = 1 + h`, the condition
//! `u_i (R_n u)_i = 1` is equivalent to
//!
//! ```text
//! (I + R_n) h = -q - h∘q - h∘(R_n h),    q = R_n 1 - 1,
//! ```
//!
//! which [`balance_fixed_point`] solves by iterating
//! `h <- -(I + R_n)^{-1} (q + h∘q + h∘(R_n h))` from `h = 0`.
//! [`balance_symmetric_scaling`] reaches the same `u` by geometric-mean
//! scaling and serves as the independent cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{norm_2n, norm_inf, row_defect, KernelMatrix};

/// Abort threshold on `‖h‖_{2,n}` for the fixed-point iterate.
pub const BALL_RADIUS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BalanceMethod {
    FixedPoint,
    SymmetricScaling,
}

impl BalanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            BalanceMethod::FixedPoint => "fixed-point",
            BalanceMethod::SymmetricScaling => "symmetric-scaling",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceResult {
    pub n: usize,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    /// `u_i * entries[i][j] * u_j`, i.e. `n A_n`.
    pub balanced: DMatrix<f64>,
    pub method: BalanceMethod,
    pub iterations: usize,
    /// Fixed-point equation residual in `‖·‖_{2,n}` for the fixed-point
    /// method; `max_i |u_i (R_n u)_i - 1|` for symmetric scaling.
    pub residual: f64,
}

impl BalanceResult {
    /// `A_n = balanced / n`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        &self.balanced / self.n as f64
    }

    /// Largest deviation of a row or column sum of `A_n` from 1.
    pub fn line_sum_deviation(&self) -> f64 {
        line_sum_deviation(&self.a_matrix())
    }
}

pub fn line_sum_deviation(a: &DMatrix<f64>) -> f64 {
    let rows = a.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = a.column_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

fn check_rows(k: &KernelMatrix) -> Result<()> {
    for (i, row) in k.entries.row_iter().enumerate() {
        if !row.iter().any(|&v| v > 0.0) {
            return Err(Error::ZeroRow { row: i });
        }
    }
    Ok(())
}

fn finish(k: &KernelMatrix, u: Vec<f64>, method: BalanceMethod, iterations: usize, residual: f64) -> BalanceResult {
    let n = k.n;
    let balanced = DMatrix::from_fn(n, n, |i, j| k.entries[(i, j)] * (u[i] * u[j]));
    BalanceResult { n, h: u.iter().map(|v| v - 1.0).collect(), u, balanced, method, iterations, residual }
}

// (I + R) h + q + h∘q + h∘(R h)
fn fixed_point_residual(r: &DMatrix<f64>, q: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
    let rh = r * h;
    let mut out = h + &rh + q;
    for i in 0..h.len() {
        out[i] += h[i] * (q[i] + rh[i]);
    }
    out
}

/// Iterates the fixed-point map with one LU factorization of `I + R_n`.
///
/// Stops once every component of the equation residual is within `tol`,
/// which also bounds the `‖·‖_{2,n}` residual by `tol`.
pub fn balance_fixed_point(k: &KernelMatrix, tol: f64, max_iter: usize) -> Result<BalanceResult> {
    check_rows(k)?;
    let n = k.n;
    let r = k.r_matrix();
    let q = DVector::from_vec(row_defect(k).q);
    let system = DMatrix::identity(n, n) + &r;
    let lu = system.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularSystem { n });
    }

    let mut h = DVector::zeros(n);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let rh = &r * &h;
        let mut rhs = q.clone();
        for i in 0..n {
            rhs[i] += h[i] * (q[i] + rh[i]);
        }
        let z = lu.solve(&rhs).ok_or(Error::SingularSystem { n })?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { n });
        }
        h = -z;
        let h_norm = norm_2n(h.as_slice());
        if h_norm > BALL_RADIUS {
            return Err(Error::BallExit { norm: h_norm });
        }
        let res = fixed_point_residual(&r, &q, &h);
        if norm_inf(res.as_slice()) <= tol {
            let residual = norm_2n(res.as_slice());
            let u: Vec<f64> = h.iter().map(|v| 1.0 + v).collect();
            if let Some((index, &value)) = u.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                return Err(Error::NonPositiveScaling { index, value });
            }
            let out = finish(k, u, BalanceMethod::FixedPoint, iterations, residual);
            let dev = out.line_sum_deviation();
            if dev > 10.0 * tol {
                return Err(Error::BalanceNonConvergence {
                    method: BalanceMethod::FixedPoint.name(),
                    iterations,
                    residual: dev,
                });
            }
            return Ok(out);
        }
        if iterations >= max_iter {
            return Err(Error::BalanceNonConvergence {
                method: BalanceMethod::FixedPoint.name(),
                iterations,
                residual: norm_2n(res.as_slice()),
            });
        }
    }
}

/// Geometric-mean symmetric scaling `u <- sqrt(u / (R_n u))` from `u = 1`.
pub fn balance_symmetric_scaling(k: &KernelMatrix, tol: f64, max_iter: usize) -> Result<BalanceResult> {
    check_rows(k)?;
    let r = k.r_matrix();
    let mut u = DVector::from_element(k.n, 1.0);
    let mut ru = &r * &u;
    let mut iterations = 0;
    loop {
        iterations += 1;
        for i in 0..k.n {
            let next = (u[i] / ru[i]).sqrt();
            if !(next > 0.0) || !next.is_finite() {
                return Err(Error::NonPositiveScaling { index: i, value: next });
            }
            u[i] = next;
        }
        ru = &r * &u;
        let residual = u.iter().zip(ru.iter()).map(|(a, b)| (a * b - 1.0).abs()).fold(0.0, f64::max);
        if residual <= tol {
            return Ok(finish(k, u.as_slice().to_vec(), BalanceMethod::SymmetricScaling, iterations, residual));
        }
        if iterations >= max_iter {
            return Err(Error::BalanceNonConvergence {
                method: BalanceMethod::SymmetricScaling.name(),
                iterations,
                residual,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceDiagnostics {
    pub norm_2n_h: f64,
    pub norm_inf_h: f64,
    /// `Σ log(1 + h_i)`.
    pub sum_log: f64,
    /// Mean of `h`.
    pub m_n: f64,
    /// `Π u_i^2`, multiplied out directly.
    pub prod_u_sq: f64,
}

pub fn balance_diagnostics(res: &BalanceResult) -> BalanceDiagnostics {
    let h = &res.h;
    BalanceDiagnostics {
        norm_2n_h: norm_2n(h),
        norm_inf_h: norm_inf(h),
        sum_log: h.iter().map(|v| v.ln_1p()).sum(),
        m_n: h.iter().sum::<f64>() / h.len() as f64,
        prod_u_sq: res.u.iter().map(|v| v * v).product(),
    }
}
