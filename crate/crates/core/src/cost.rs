//! Cost functions `c : [0,1]^2 -> [0, inf)` and their validation.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use exmex::prelude::*;

use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostFamily {
    Quadratic,
    Absolute,
    Tabulated,
    Custom,
}

impl CostFamily {
    pub fn name(self) -> &'static str {
        match self {
            CostFamily::Quadratic => "quadratic",
            CostFamily::Absolute => "absolute",
            CostFamily::Tabulated => "tabulated",
            CostFamily::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    C2,
    C0,
}

#[derive(Clone)]
enum Evaluator {
    Quadratic { beta: f64 },
    Absolute { beta: f64 },
    Tabulated(Arc<Table>),
    Custom(Arc<CustomExpr>),
}

struct CustomExpr {
    source: String,
    expr: FlatEx<f64>,
    // For each variable of the parsed expression: true for y, false for x.
    slots: Vec<bool>,
}

/// An evaluatable cost together with the metadata describing it.
///
/// Construction validates parameters; evaluation is pure and thread safe.
#[derive(Clone)]
pub struct CostFunction {
    family: CostFamily,
    params: Vec<f64>,
    smoothness: Smoothness,
    eval: Evaluator,
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction")
            .field("family", &self.family)
            .field("params", &self.params)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl CostFunction {
    /// `beta * (x - y)^2`.
    pub fn quadratic(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            family: CostFamily::Quadratic,
            params: vec![beta],
            smoothness: Smoothness::C2,
            eval: Evaluator::Quadratic { beta },
        })
    }

    /// The zero cost, i.e. `quadratic(0)`.
    pub fn zero() -> Self {
        Self::quadratic(0.0).expect("zero is a valid inverse temperature")
    }

    /// `beta * |x - y|`. Only continuous, so it carries a C0 claim.
    pub fn absolute(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            family: CostFamily::Absolute,
            params: vec![beta],
            smoothness: Smoothness::C0,
            eval: Evaluator::Absolute { beta },
        })
    }

    /// Bilinear interpolation of a tabulated grid on `k / (m - 1)`.
    pub fn tabulated(table: Table) -> Self {
        Self {
            family: CostFamily::Tabulated,
            params: vec![table.order() as f64],
            smoothness: Smoothness::C0,
            eval: Evaluator::Tabulated(Arc::new(table)),
        }
    }

    pub fn tabulated_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::tabulated(Table::from_file(path)?))
    }

    /// Arithmetic expression in the variables `x` and `y`, e.g.
    /// `"(x - y)^2 + 0.1"`. Smoothness is taken on trust as C2.
    pub fn custom(expression: &str) -> Result<Self> {
        let expr = exmex::parse::<f64>(expression).map_err(|e| Error::Expression(e.to_string()))?;
        let mut slots = Vec::new();
        for name in expr.var_names() {
            match name.as_str() {
                "x" => slots.push(false),
                "y" => slots.push(true),
                other => {
                    return Err(Error::Expression(format!("unknown variable {other:?}; only x and y are allowed")))
                }
            }
        }
        Ok(Self {
            family: CostFamily::Custom,
            params: Vec::new(),
            smoothness: Smoothness::C2,
            eval: Evaluator::Custom(Arc::new(CustomExpr { source: expression.to_string(), expr, slots })),
        })
    }

    pub fn family(&self) -> CostFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// Short human readable description, e.g. `quadratic(beta=1)`.
    pub fn describe(&self) -> String {
        match &self.eval {
            Evaluator::Quadratic { beta } => format!("quadratic(beta={beta})"),
            Evaluator::Absolute { beta } => format!("absolute(beta={beta})"),
            Evaluator::Tabulated(t) => format!("tabulated(m={})", t.order()),
            Evaluator::Custom(c) => format!("custom({})", c.source),
        }
    }

    /// Evaluates `c(x, y)`; both arguments must lie in `[0,1]`.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain { x, y });
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluation without the domain check, for callers that construct
    /// their own in-range grids.
    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        match &self.eval {
            Evaluator::Quadratic { beta } => beta * (x - y) * (x - y),
            Evaluator::Absolute { beta } => beta * (x - y).abs(),
            Evaluator::Tabulated(t) => t.interpolate(x, y),
            Evaluator::Custom(c) => {
                let mut args = [0.0; 2];
                for (slot, is_y) in args.iter_mut().zip(&c.slots) {
                    *slot = if *is_y { y } else { x };
                }
                c.expr.eval(&args[..c.slots.len()]).unwrap_or(f64::NAN)
            }
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("inverse temperature must be finite and nonnegative, got {beta}")))
    }
}

/// `c(x, y)` with a domain check.
pub fn evaluate_cost(cost: &CostFunction, x: f64, y: f64) -> Result<f64> {
    cost.evaluate(x, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Warn => "warn",
            CheckStatus::Fail => "fail",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub max_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub grid_size: usize,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn has_failure(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cost validation on a {0}x{0} grid", self.grid_size + 1)?;
        for c in &self.checks {
            writeln!(f, "  {:<14} {:<4}  max violation {:e}", c.name, c.status, c.max_violation)?;
        }
        Ok(())
    }
}

pub const CHECK_NAMES: [&str; 6] = ["finiteness", "nonnegativity", "symmetry", "diagonal", "reflection", "smoothness"];

/// Checks the cost on the grid `{i / grid_size : i = 0..=grid_size}`.
///
/// Nonnegativity, symmetry and finiteness fail on violation; the diagonal
/// and reflection conditions, and a C0 smoothness claim, only warn.
pub fn validate_cost(cost: &CostFunction, grid_size: usize, tol: f64) -> Result<ValidationReport> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter("grid_size must be at least 2".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let pts: Vec<f64> = (0..=grid_size).map(|i| i as f64 / grid_size as f64).collect();
    let k = pts.len();
    let mut grid = vec![0.0; k * k];
    for (i, &x) in pts.iter().enumerate() {
        for (j, &y) in pts.iter().enumerate() {
            grid[i * k + j] = cost.eval_unchecked(x, y);
        }
    }
    let at = |i: usize, j: usize| grid[i * k + j];

    let mut non_finite = 0usize;
    let mut negative = 0.0f64;
    let mut asym = 0.0f64;
    let mut diag = 0.0f64;
    let mut refl = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let v = at(i, j);
            if !v.is_finite() {
                non_finite += 1;
                continue;
            }
            negative = negative.max(-v);
            let t = at(j, i);
            if t.is_finite() {
                asym = asym.max((v - t).abs());
            }
            // Grid is closed under x -> 1 - x.
            let r = at(k - 1 - i, k - 1 - j);
            if r.is_finite() {
                refl = refl.max((v - r).abs());
            }
        }
        let d = at(i, i);
        if d.is_finite() {
            diag = diag.max(d.abs());
        }
    }

    let grade = |violation: f64, severe: CheckStatus| {
        if violation <= tol {
            CheckStatus::Pass
        } else {
            severe
        }
    };
    let checks = vec![
        Check {
            name: "finiteness",
            status: if non_finite == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
            max_violation: non_finite as f64,
        },
        Check {
            name: "nonnegativity",
            status: grade(negative.max(0.0), CheckStatus::Fail),
            max_violation: negative.max(0.0),
        },
        Check { name: "symmetry", status: grade(asym, CheckStatus::Fail), max_violation: asym },
        Check { name: "diagonal", status: grade(diag, CheckStatus::Warn), max_violation: diag },
        Check { name: "reflection", status: grade(refl, CheckStatus::Warn), max_violation: refl },
        Check {
            name: "smoothness",
            status: match cost.smoothness() {
                Smoothness::C2 => CheckStatus::Pass,
                Smoothness::C0 => CheckStatus::Warn,
            },
            max_violation: 0.0,
        },
    ];
    Ok(ValidationReport { checks, grid_size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn closed_form_values() {
        let q = CostFunction::quadratic(1.0).unwrap();
        assert_eq!(evaluate_cost(&q, 0.25, 0.75).unwrap(), 0.25);
        assert_eq!(evaluate_cost(&q, 0.3, 0.3).unwrap(), 0.0);
        let a = CostFunction::absolute(2.0).unwrap();
        assert!((evaluate_cost(&a, 0.1, 0.6).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(evaluate_cost(&a, 0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        let q = CostFunction::quadratic(1.0).unwrap();
        assert!(matches!(q.evaluate(1.1, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(q.evaluate(0.0, -1e-9), Err(Error::Domain { .. })));
        assert!(q.evaluate(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_beta() {
        assert!(CostFunction::quadratic(-1.0).is_err());
        assert!(CostFunction::absolute(f64::INFINITY).is_err());
    }

    #[test]
    fn quadratic_validates_clean() {
        let q = CostFunction::quadratic(1.0).unwrap();
        let rep = validate_cost(&q, 50, 1e-12).unwrap();
        assert!(rep.checks.iter().all(|c| c.status == CheckStatus::Pass), "{rep}");
        for name in CHECK_NAMES {
            assert_eq!(rep.checks.iter().filter(|c| c.name == name).count(), 1);
        }
    }

    #[test]
    fn asymmetric_table_fails_symmetry() {
        let mut v = DMatrix::from_fn(6, 6, |i, j| {
            let (x, y) = (i as f64 / 5.0, j as f64 / 5.0);
            (x - y) * (x - y)
        });
        v[(1, 4)] += 1e-3;
        let cost = CostFunction::tabulated(Table::new(v).unwrap());
        let rep = validate_cost(&cost, 5, 1e-12).unwrap();
        let sym = rep.check("symmetry").unwrap();
        assert_eq!(sym.status, CheckStatus::Fail);
        assert!((sym.max_violation - 1e-3).abs() < 1e-12);
        assert!(rep.has_failure());
    }

    #[test]
    fn offset_cost_only_warns_on_diagonal() {
        let cost = CostFunction::custom("(x-y)^2 + 0.1").unwrap();
        let rep = validate_cost(&cost, 40, 1e-12).unwrap();
        let d = rep.check("diagonal").unwrap();
        assert_eq!(d.status, CheckStatus::Warn);
        assert!((d.max_violation - 0.1).abs() < 1e-12);
        for c in rep.checks.iter().filter(|c| c.name != "diagonal") {
            assert_eq!(c.status, CheckStatus::Pass, "{}", c.name);
        }
        assert!(!rep.has_failure());
    }

    #[test]
    fn absolute_warns_on_smoothness() {
        let rep = validate_cost(&CostFunction::absolute(1.0).unwrap(), 10, 1e-12).unwrap();
        assert_eq!(rep.check("smoothness").unwrap().status, CheckStatus::Warn);
        assert_eq!(rep.check("symmetry").unwrap().status, CheckStatus::Pass);
    }

    #[test]
    fn custom_expression_variables() {
        let only_x = CostFunction::custom("x^2").unwrap();
        assert_eq!(only_x.evaluate(0.5, 0.9).unwrap(), 0.25);
        let only_y = CostFunction::custom("2*y").unwrap();
        assert_eq!(only_y.evaluate(0.5, 0.25).unwrap(), 0.5);
        let constant = CostFunction::custom("0").unwrap();
        assert_eq!(constant.evaluate(0.5, 0.25).unwrap(), 0.0);
        assert!(matches!(CostFunction::custom("x+z"), Err(Error::Expression(_))));
        assert!(CostFunction::custom("x+").is_err());
    }

    #[test]
    fn non_finite_fails() {
        let cost = CostFunction::custom("1/(x-y)").unwrap();
        let rep = validate_cost(&cost, 4, 1e-12).unwrap();
        assert_eq!(rep.check("finiteness").unwrap().status, CheckStatus::Fail);
    }

    #[test]
    fn negative_cost_fails() {
        let cost = CostFunction::custom("x - y").unwrap();
        let rep = validate_cost(&cost, 4, 1e-12).unwrap();
        let c = rep.check("nonnegativity").unwrap();
        assert_eq!(c.status, CheckStatus::Fail);
        assert!((c.max_violation - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn builtin_families_symmetric_nonnegative(beta in 0.0f64..20.0, grid in 2usize..40) {
                for cost in [CostFunction::quadratic(beta).unwrap(), CostFunction::absolute(beta).unwrap()] {
                    let rep = validate_cost(&cost, grid, 1e-12).unwrap();
                    prop_assert_eq!(rep.check("symmetry").unwrap().max_violation, 0.0);
                    prop_assert_eq!(rep.check("nonnegativity").unwrap().max_violation, 0.0);
                }
            }

            #[test]
            fn evaluation_deterministic(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
                let cost = CostFunction::custom("exp(-x*y) + (x-y)^2").unwrap();
                let a = cost.evaluate(x, y).unwrap();
                let b = cost.evaluate(x, y).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
