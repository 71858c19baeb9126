//! Exact permanents (Ryser, Glynn, brute force) and the normalized
//! permanent ratios `D_n`, `D̂_n`, `L_n`.
//!
//! Both inclusion–exclusion formulas walk subsets in Gray-code order so each
//! step updates the running line sums in `O(n)`. The subset range is cut
//! into a fixed number of contiguous blocks; each block rebuilds its own
//! starting sums, blocks run on the rayon pool and the block totals are
//! added in ascending order. The result is therefore independent of the
//! number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::balance::BalanceResult;
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::grid::KernelMatrix;

pub const DEFAULT_CAP: usize = 26;
/// Orders above this take seconds or more per permanent.
pub const SLOW_ORDER: usize = 22;
pub const BRUTE_MAX: usize = 9;

// Subset enumerations shorter than this run as a single block.
const PARALLEL_MIN_LOG2: u32 = 14;
const BLOCKS_LOG2: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermanentMethod {
    Ryser,
    Glynn,
    Brute,
}

impl PermanentMethod {
    pub fn name(self) -> &'static str {
        match self {
            PermanentMethod::Ryser => "ryser",
            PermanentMethod::Glynn => "glynn",
            PermanentMethod::Brute => "brute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermanentValue {
    pub n: usize,
    /// `per(M)`, or `per(M) / n!` in normalized mode.
    pub value: f64,
    pub log_value: f64,
    pub method: PermanentMethod,
    pub normalized: bool,
}

impl PermanentValue {
    fn new(n: usize, value: f64, method: PermanentMethod, normalized: bool) -> Self {
        Self { n, value, log_value: value.ln(), method, normalized }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PermanentConfig {
    pub cap: usize,
    pub method: PermanentMethod,
}

impl Default for PermanentConfig {
    fn default() -> Self {
        // Glynn's terms are ~2^n smaller than Ryser's for near-constant
        // matrices, so cancellation costs far fewer digits.
        Self { cap: DEFAULT_CAP, method: PermanentMethod::Glynn }
    }
}

/// Neumaier's variant of compensated summation.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.carry
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidParameter("permanent needs a nonempty square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m.nrows())
}

fn gray(k: u64) -> u64 {
    k ^ (k >> 1)
}

// Splits [0, total) into the fixed block layout and sums block results in order.
fn blocked_sum<F>(total: u64, block: F) -> f64
where
    F: Fn(u64, u64) -> Compensated + Sync,
{
    let log2 = 63 - total.leading_zeros();
    let blocks: u64 = if log2 >= PARALLEL_MIN_LOG2 { 1 << BLOCKS_LOG2 } else { 1 };
    let len = total / blocks;
    let parts: Vec<Compensated> = (0..blocks)
        .into_par_iter()
        .map(|b| block(b * len, if b + 1 == blocks { total } else { (b + 1) * len }))
        .collect();
    let mut acc = Compensated::default();
    for p in parts {
        acc.add(p.sum);
        acc.add(p.carry);
    }
    acc.total()
}

/// Ryser: `per(A) = (-1)^n Σ_S (-1)^{|S|} Π_i Σ_{j∈S} a_ij`.
fn ryser(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let total = 1u64 << n;
    let sum = blocked_sum(total, |start, end| {
        let mut acc = Compensated::default();
        let mut subset = gray(start);
        let mut rows = vec![0.0; n];
        for j in 0..n {
            if subset >> j & 1 == 1 {
                for i in 0..n {
                    rows[i] += a[(i, j)];
                }
            }
        }
        let mut k = start;
        loop {
            if subset != 0 {
                let prod: f64 = rows.iter().product();
                let sign = if subset.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                acc.add(sign * prod);
            }
            k += 1;
            if k >= end {
                break;
            }
            let j = k.trailing_zeros() as usize;
            subset ^= 1 << j;
            let col = a.column(j);
            if subset >> j & 1 == 1 {
                rows.iter_mut().zip(col.iter()).for_each(|(r, v)| *r += v);
            } else {
                rows.iter_mut().zip(col.iter()).for_each(|(r, v)| *r -= v);
            }
        }
        acc
    });
    if n.is_multiple_of(2) {
        sum
    } else {
        -sum
    }
}

/// Glynn: `per(A) = 2^{1-n} Σ_{δ, δ_1 = 1} (Π δ_k) Π_j Σ_i δ_i a_ij`.
fn glynn(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 1 {
        return a[(0, 0)];
    }
    let total = 1u64 << (n - 1);
    // Bit k of the Gray code flips the sign of row k + 1.
    let sum = blocked_sum(total, |start, end| {
        let mut acc = Compensated::default();
        let mut flips = gray(start);
        let mut cols: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| if i > 0 && flips >> (i - 1) & 1 == 1 { -a[(i, j)] } else { a[(i, j)] }).sum())
            .collect();
        let mut k = start;
        loop {
            let prod: f64 = cols.iter().product();
            acc.add(if flips.count_ones().is_multiple_of(2) { prod } else { -prod });
            k += 1;
            if k >= end {
                break;
            }
            let bit = k.trailing_zeros() as usize;
            flips ^= 1 << bit;
            let row = a.row(bit + 1);
            if flips >> bit & 1 == 1 {
                cols.iter_mut().zip(row.iter()).for_each(|(c, v)| *c -= 2.0 * v);
            } else {
                cols.iter_mut().zip(row.iter()).for_each(|(c, v)| *c += 2.0 * v);
            }
        }
        acc
    });
    sum / (1u64 << (n - 1)) as f64
}

/// Exact permanent by Ryser's or Glynn's formula.
pub fn permanent_exact(m: &DMatrix<f64>, method: PermanentMethod, cap: usize) -> Result<PermanentValue> {
    let n = check_square(m)?;
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let value = match method {
        PermanentMethod::Ryser => ryser(m),
        PermanentMethod::Glynn => glynn(m),
        PermanentMethod::Brute => return permanent_brute(m),
    };
    Ok(PermanentValue::new(n, value, method, false))
}

/// Direct sum over all `n!` permutations (Heap's algorithm), `n <= 9`.
pub fn permanent_brute(m: &DMatrix<f64>) -> Result<PermanentValue> {
    let n = check_square(m)?;
    if n > BRUTE_MAX {
        return Err(Error::CapExceeded { n, cap: BRUTE_MAX });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut acc = Compensated::default();
    let term = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| m[(i, j)]).product::<f64>();
    acc.add(term(&perm));
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            acc.add(term(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(PermanentValue::new(n, acc.total(), PermanentMethod::Brute, false))
}

/// `per(M) / n!`, computed as `per(s M)` with `s = (n!)^{-1/n}` so neither
/// `n!` nor the raw permanent is ever formed. A uniform scale keeps the
/// cancellation pattern of the unscaled sums; scaling row `k` by `1/k`
/// instead costs several digits at `n = 16`.
pub fn normalized_permanent(m: &DMatrix<f64>, cfg: &PermanentConfig) -> Result<PermanentValue> {
    let n = check_square(m)?;
    let log_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    let s = (-log_fact / n as f64).exp();
    let scaled = m * s;
    let raw = match cfg.method {
        PermanentMethod::Brute => permanent_brute(&scaled)?,
        method => permanent_exact(&scaled, method, cfg.cap)?,
    };
    Ok(PermanentValue { normalized: true, ..raw })
}

/// `D_n = per(n R_n) / n!`.
pub fn compute_dn(k: &KernelMatrix, cfg: &PermanentConfig) -> Result<PermanentValue> {
    normalized_permanent(&k.entries, cfg)
}

/// `D̂_n = per(n A_n) / n!` for the balanced matrix.
pub fn compute_dn_hat(res: &BalanceResult, cfg: &PermanentConfig) -> Result<PermanentValue> {
    normalized_permanent(&res.balanced, cfg)
}

/// `L_n = per(exp(-c(i/n, j/n))) / n!`.
pub fn compute_ln(cost: &CostFunction, n: usize, cfg: &PermanentConfig) -> Result<PermanentValue> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if n > cfg.cap {
        return Err(Error::CapExceeded { n, cap: cfg.cap });
    }
    let p = |i: usize| (i + 1) as f64 / n as f64;
    let m = DMatrix::from_fn(n, n, |i, j| (-cost.eval_unchecked(p(i), p(j))).exp());
    normalized_permanent(&m, cfg)
}
