//! Numerical laboratory for the large-`n` limit of normalized permanents of
//! entropic optimal-transport kernels.
//!
//! The pipeline runs from a cost function `c` on `[0,1]^2` to the density
//! `rho = exp(-c - a(x) - a(y))` with uniform marginals ([`bridge`]), samples
//! it on the grid `i/n` ([`grid`]), rescales the sample to an exactly doubly
//! stochastic matrix ([`balance`]), and compares exact permanents
//! ([`permanent`]) with determinant formulas and the Fredholm-determinant
//! limit ([`spectral`]). [`lab`] strings the stages together.

pub mod balance;
pub mod bridge;
pub mod cost;
pub mod error;
pub mod grid;
pub mod lab;
pub mod permanent;
pub mod spectral;
pub mod table;

pub use balance::{
    balance_diagnostics, balance_fixed_point, balance_symmetric_scaling, BalanceDiagnostics, BalanceMethod,
    BalanceResult,
};
pub use bridge::{
    evaluate_density, gamma0, marginal_residual, solve_potential, DensitySource, Interpolation, PotentialSolution,
    SolverOptions,
};
pub use cost::{evaluate_cost, validate_cost, CheckStatus, CostFamily, CostFunction, Smoothness, ValidationReport};
pub use error::{Error, Result};
pub use grid::{
    riemann_correction_check, riemann_sum, row_defect, sample_kernel, DefectVector, DoubleDouble, KernelMatrix,
};
pub use permanent::{
    compute_dn, compute_dn_hat, compute_ln, permanent_brute, permanent_exact, PermanentConfig, PermanentMethod,
    PermanentValue,
};
pub use spectral::{
    bn_matrix, eigen_symmetric, fredholm_limit, mccullagh_estimate, spectral_gap_check, FredholmEstimate, GapReport,
    SpectrumReport,
};
pub use table::Table;
