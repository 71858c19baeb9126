//! Spectral quantities: the centered matrix `B_n = A_n - J_n`, the
//! McCullagh determinant, the spectral gap and the Fredholm-determinant
//! limit via a Nyström discretization of the centered kernel `rho - 1`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::balance::{line_sum_deviation, BalanceResult};
use crate::bridge::{midpoint_nodes, DensitySource};
use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const ANNIHILATION_TOL: f64 = 1e-10;
pub const STOCHASTIC_TOL: f64 = 1e-10;
/// Nontrivial eigenvalue moduli at or above `1 - GAP_MARGIN` are rejected.
pub const GAP_MARGIN: f64 = 1e-8;
pub const DEFAULT_EIG_CUTOFF: f64 = 1e-12;
pub const GAP_WARNING: f64 = 0.99;
/// Relative tolerance for `det(I + J - A^T A) = det(I - B^2)`.
pub const IDENTITY_TOL: f64 = 1e-9;

/// All eigenvalues of a symmetric matrix, ascending.
pub fn eigen_symmetric(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidParameter("eigenvalues need a square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let deviation = (m - m.transpose()).amax();
    if deviation > SYMMETRY_TOL {
        return Err(Error::AsymmetricMatrix { deviation });
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// `Π (1 - λ_k^2)`.
pub fn det_one_minus_square(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|l| 1.0 - l * l).product()
}

/// `(Π_{|λ| > cutoff} (1 - λ^2))^{-1/2}`.
pub fn fredholm_from_eigenvalues(eigenvalues: &[f64], eig_cutoff: f64) -> f64 {
    eigenvalues.iter().filter(|l| l.abs() > eig_cutoff).map(|l| 1.0 - l * l).product::<f64>().powf(-0.5)
}

pub fn lambda_star(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().fold(0.0, |m, l| m.max(l.abs()))
}

/// `A_n - J_n` for a balanced result, after checking `B J = J B = 0`.
pub fn bn_matrix(res: &BalanceResult) -> Result<DMatrix<f64>> {
    let n = res.n;
    let b = res.a_matrix().add_scalar(-1.0 / n as f64);
    // (B J)_ij = rowsum_i(B) / n and (J B)_ij = colsum_j(B) / n.
    let rows = b.row_iter().map(|r| r.sum().abs());
    let cols = b.column_iter().map(|c| c.sum().abs());
    let deviation = rows.chain(cols).fold(0.0, f64::max) / n as f64;
    if deviation > ANNIHILATION_TOL {
        return Err(Error::Annihilation { deviation });
    }
    Ok(b)
}

/// `det(I + J_n - A^T A)^{-1/2}` for a doubly stochastic `A`.
///
/// For symmetric `A` the value is cross-checked against
/// `det(I - B_n^2)^{-1/2}` with `B_n = A - J_n`.
pub fn mccullagh_estimate(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidParameter("McCullagh estimate needs a square matrix".into()));
    }
    let deviation = line_sum_deviation(a);
    if deviation > STOCHASTIC_TOL {
        return Err(Error::NotDoublyStochastic { deviation });
    }
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let m = DMatrix::identity(n, n) + &j - a.transpose() * a;
    let eig = eigen_symmetric(&((&m + m.transpose()) * 0.5))?;
    // Nontrivial eigenvalues of M are 1 - σ^2 over the singular values σ of
    // A off the constant vector, which equal |λ| when A is symmetric.
    let floor = 1.0 - (1.0 - GAP_MARGIN) * (1.0 - GAP_MARGIN);
    if eig[0] <= floor {
        return Err(Error::SpectralGap { modulus: (1.0 - eig[0]).max(0.0).sqrt() });
    }
    let det: f64 = eig.iter().product();
    let value = det.powf(-0.5);

    if (a - a.transpose()).amax() <= SYMMETRY_TOL {
        let b = a - &j;
        let via_b = det_one_minus_square(&eigen_symmetric(&b)?);
        if (det - via_b).abs() > IDENTITY_TOL * via_b.abs() {
            return Err(Error::IdentityMismatch { lhs: det, rhs: via_b });
        }
    }
    Ok(value)
}

/// `(rho(z_i, z_j) - 1) / m` at midpoint nodes.
pub fn centered_nystrom(source: &DensitySource, m: usize) -> Result<DMatrix<f64>> {
    let k = source.sample(&midpoint_nodes(m))?;
    Ok(k.add_scalar(-1.0) / m as f64)
}

pub fn nystrom_eigenvalues(source: &DensitySource, m: usize) -> Result<Vec<f64>> {
    eigen_symmetric(&centered_nystrom(source, m)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FredholmEstimate {
    pub m: usize,
    /// Estimate at resolution `m`.
    pub value: f64,
    /// Estimate at resolution `2m`.
    pub refined: f64,
    /// `|value - refined| <= refinement_tol * |refined|`.
    pub converged: bool,
    /// Nyström eigenvalues at resolution `m`, ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_star: f64,
}

fn fredholm_at(source: &DensitySource, m: usize, eig_cutoff: f64) -> Result<(f64, Vec<f64>)> {
    let eig = nystrom_eigenvalues(source, m)?;
    let star = lambda_star(&eig);
    if star >= 1.0 {
        return Err(Error::SpectralGap { modulus: star });
    }
    Ok((fredholm_from_eigenvalues(&eig, eig_cutoff), eig))
}

/// `det_F(I - (T|_H)^2)^{-1/2}` from the Nyström eigenvalues at `m`, with a
/// refinement check against resolution `2m`.
pub fn fredholm_limit(
    source: &DensitySource,
    m: usize,
    eig_cutoff: f64,
    refinement_tol: f64,
) -> Result<FredholmEstimate> {
    if m < 32 {
        return Err(Error::InvalidParameter("Nyström resolution must be at least 32".into()));
    }
    let (value, eigenvalues) = fredholm_at(source, m, eig_cutoff)?;
    let (refined, _) = fredholm_at(source, 2 * m, eig_cutoff)?;
    Ok(FredholmEstimate {
        m,
        value,
        refined,
        converged: (value - refined).abs() <= refinement_tol * refined.abs(),
        lambda_star: lambda_star(&eigenvalues),
        eigenvalues,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub lambda_star: f64,
    pub warning: Option<String>,
}

/// Estimates `‖T|_H‖` as the largest Nyström eigenvalue modulus.
pub fn spectral_gap_check(source: &DensitySource, m: usize) -> Result<GapReport> {
    if m < 32 {
        return Err(Error::InvalidParameter("Nyström resolution must be at least 32".into()));
    }
    let star = lambda_star(&nystrom_eigenvalues(source, m)?);
    let warning =
        (star >= GAP_WARNING).then(|| format!("spectral gap nearly closed: lambda* = {star:.6} >= {GAP_WARNING}"));
    Ok(GapReport { lambda_star: star, warning })
}

/// Spectral summary of one balanced instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub n: usize,
    /// Eigenvalues of `B_n`, ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_star: f64,
    pub det_i_minus_b2: f64,
    pub mccullagh_value: f64,
    pub fredholm_limit: f64,
}

pub fn spectrum_report(res: &BalanceResult, fredholm_limit: f64) -> Result<SpectrumReport> {
    let b = bn_matrix(res)?;
    let eigenvalues = eigen_symmetric(&b)?;
    Ok(SpectrumReport {
        n: res.n,
        lambda_star: lambda_star(&eigenvalues),
        det_i_minus_b2: det_one_minus_square(&eigenvalues),
        mccullagh_value: mccullagh_estimate(&res.a_matrix())?,
        fredholm_limit,
        eigenvalues,
    })
}
