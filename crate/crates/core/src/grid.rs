//! Right-endpoint discretization of a density, the row-defect vector and
//! the Riemann-sum endpoint correction.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::bridge::DensitySource;
use crate::error::{Error, Result};

/// Largest `|rho(x,y) - rho(y,x)|` tolerated before sampling fails.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// `entries[i][j] = rho((i+1)/n, (j+1)/n)`, i.e. `n R_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub entries: DMatrix<f64>,
    pub source: String,
}

impl KernelMatrix {
    /// Wraps an explicit matrix, e.g. one read from a matrix file.
    pub fn from_matrix(entries: DMatrix<f64>, source: impl Into<String>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidParameter("kernel matrix must be square and nonempty".into()));
        }
        let entries = symmetrized(entries)?;
        Ok(Self { n, entries, source: source.into() })
    }

    /// The normalized matrix `R_n = entries / n`.
    pub fn r_matrix(&self) -> DMatrix<f64> {
        &self.entries / self.n as f64
    }
}

fn symmetrized(v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    let mut deviation = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let x = v[(i, j)];
            if !x.is_finite() {
                return Err(Error::NonFinite);
            }
            if x < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j, value: x });
            }
            deviation = deviation.max((x - v[(j, i)]).abs());
        }
    }
    if deviation > SYMMETRY_TOL {
        return Err(Error::AsymmetricSource { deviation });
    }
    Ok((&v + v.transpose()) * 0.5)
}

/// Samples the source on the right-endpoint grid `i/n`, `i = 1..=n`.
pub fn sample_kernel(source: &DensitySource, n: usize) -> Result<KernelMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let points: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let raw = source.sample(&points)?;
    Ok(KernelMatrix { n, entries: symmetrized(raw)?, source: source.describe() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefectVector {
    pub n: usize,
    pub q: Vec<f64>,
    pub q_bar: f64,
    pub norm_inf: f64,
    /// `sqrt((1/n) Σ q_i^2)`.
    pub norm_2n: f64,
}

/// Normalized norm `‖v‖_{2,n} = sqrt((1/n) Σ v_i^2)`.
pub fn norm_2n(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `q = R_n 1 - 1`.
pub fn row_defect(k: &KernelMatrix) -> DefectVector {
    let n = k.n;
    let q: Vec<f64> = (0..n).map(|i| k.entries.row(i).iter().sum::<f64>() / n as f64 - 1.0).collect();
    let q_bar = q.iter().sum::<f64>() / n as f64;
    DefectVector { n, norm_inf: norm_inf(&q), norm_2n: norm_2n(&q), q_bar, q }
}

/// `(1/n) Σ f(i/n)` given the values `f(i/n)`, `i = 1..=n`.
///
/// Summed as deviations from the first value, so a constant input returns
/// that constant exactly.
pub fn riemann_sum(f_values: &[f64]) -> f64 {
    let Some(&anchor) = f_values.first() else {
        return 0.0;
    };
    anchor + f_values.iter().map(|v| v - anchor).sum::<f64>() / f_values.len() as f64
}

/// Unevaluated double-double number `hi + lo` with `|lo| <= ulp(hi)/2`.
///
/// Only what the endpoint-correction check needs: the residual it measures
/// is `O(n^-2)` while the Riemann sum is `O(1)`, which leaves too few
/// significant digits in plain `f64` at `n = 1000`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// `p / q` to double-double accuracy.
    pub fn ratio(p: f64, q: f64) -> Self {
        Self::new(p) / Self::new(q)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self { hi: s, lo: b - (s - a) }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::new(x)
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = Self::quick_two_sum(s, e + t);
        Self::quick_two_sum(r.hi, r.lo + f)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        Self::quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * Self::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::new(q2);
        let q3 = r.hi / o.hi;
        let q = Self::quick_two_sum(q1, q2);
        q + Self::new(q3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannResidual {
    pub n: usize,
    /// `R_n(f) - ∫f - (f(1) - f(0)) / (2n)`, signed.
    pub residual: f64,
    /// `n^2 * residual`.
    pub scaled: f64,
}

/// Measures the remainder of the endpoint-corrected right Riemann sum.
///
/// `f` and `integral` are taken in double-double so the `O(n^-2)` remainder
/// keeps full relative precision; plain `f64` functions can be lifted with
/// `|t| DoubleDouble::new(f(t.hi))` at the cost of that precision.
pub fn riemann_correction_check<F>(f: F, integral: DoubleDouble, n_list: &[usize]) -> Vec<RiemannResidual>
where
    F: Fn(DoubleDouble) -> DoubleDouble,
{
    let f0 = f(DoubleDouble::ZERO);
    let f1 = f(DoubleDouble::new(1.0));
    n_list
        .iter()
        .map(|&n| {
            let nn = DoubleDouble::new(n as f64);
            let mut sum = DoubleDouble::ZERO;
            for i in 1..=n {
                sum = sum + f(DoubleDouble::new(i as f64) / nn);
            }
            let r = sum / nn - integral - (f1 - f0) / (DoubleDouble::new(2.0) * nn);
            RiemannResidual { n, residual: r.to_f64(), scaled: (r * nn * nn).to_f64() }
        })
        .collect()
}
