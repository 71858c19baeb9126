//! WebAssembly bindings behind `www/index.html`.
//!
//! Three operations: the Schrödinger potential for a quadratic cost, the
//! `D_n` sequence of a cosine kernel against its McCullagh value and limit,
//! and the leading Nyström eigenvalues of either kernel.

use wasm_bindgen::prelude::*;

use permlim::spectral::{fredholm_limit, nystrom_eigenvalues, DEFAULT_EIG_CUTOFF};
use permlim::{
    balance_fixed_point, compute_dn, compute_dn_hat, mccullagh_estimate, sample_kernel, solve_potential, CostFunction,
    DensitySource, PermanentConfig, SolverOptions,
};

/// Largest order the page will ask for; keeps a click under a second.
pub const MAX_ORDER: usize = 18;
pub const MAX_NODES: usize = 1024;

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct BridgeCurve {
    nodes: Vec<f64>,
    values: Vec<f64>,
    pub gamma0: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[wasm_bindgen]
impl BridgeCurve {
    #[wasm_bindgen(getter)]
    pub fn nodes(&self) -> Vec<f64> {
        self.nodes.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Sequence {
    orders: Vec<u32>,
    d_n: Vec<f64>,
    d_n_hat: Vec<f64>,
    mccullagh: Vec<f64>,
    pub limit: f64,
}

#[wasm_bindgen]
impl Sequence {
    #[wasm_bindgen(getter)]
    pub fn orders(&self) -> Vec<u32> {
        self.orders.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn d_n(&self) -> Vec<f64> {
        self.d_n.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn d_n_hat(&self) -> Vec<f64> {
        self.d_n_hat.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mccullagh(&self) -> Vec<f64> {
        self.mccullagh.clone()
    }
}

fn check_nodes(m: usize) -> Result<(), String> {
    if !(8..=MAX_NODES).contains(&m) {
        return Err(format!("m must lie in 8..={MAX_NODES}"));
    }
    Ok(())
}

pub fn bridge_curve(beta: f64, m: usize) -> Result<BridgeCurve, String> {
    check_nodes(m)?;
    let cost = CostFunction::quadratic(beta).map_err(|e| e.to_string())?;
    let sol = solve_potential(&cost, &SolverOptions { m, ..SolverOptions::default() }).map_err(|e| e.to_string())?;
    Ok(BridgeCurve {
        gamma0: sol.gamma0,
        iterations: sol.iterations,
        residual: sol.final_residual,
        nodes: sol.nodes,
        values: sol.a_values,
    })
}

pub fn cosine_sequence(epsilon: f64, n_max: usize) -> Result<Sequence, String> {
    if !(1..=MAX_ORDER).contains(&n_max) {
        return Err(format!("n_max must lie in 1..={MAX_ORDER}"));
    }
    let src = DensitySource::cosine(epsilon).map_err(|e| e.to_string())?;
    let limit = fredholm_limit(&src, 128, DEFAULT_EIG_CUTOFF, 1e-6).map_err(|e| e.to_string())?;
    let cfg = PermanentConfig::default();
    let mut out = Sequence { orders: vec![], d_n: vec![], d_n_hat: vec![], mccullagh: vec![], limit: limit.value };
    for n in 1..=n_max {
        let step = || -> permlim::Result<(f64, f64, f64)> {
            let k = sample_kernel(&src, n)?;
            let res = balance_fixed_point(&k, 1e-12, 1000)?;
            Ok((compute_dn(&k, &cfg)?.value, compute_dn_hat(&res, &cfg)?.value, mccullagh_estimate(&res.a_matrix())?))
        };
        // Orders where balancing fails (negative samples, ball exit) are
        // skipped so the rest of the curve still draws.
        if let Ok((d, dh, mc)) = step() {
            out.orders.push(n as u32);
            out.d_n.push(d);
            out.d_n_hat.push(dh);
            out.mccullagh.push(mc);
        }
    }
    Ok(out)
}

/// Nyström eigenvalues of `rho - 1`, largest modulus first, at most `count`.
pub fn leading_spectrum(kernel: &str, param: f64, m: usize, count: usize) -> Result<Vec<f64>, String> {
    check_nodes(m)?;
    let src = match kernel {
        "cosine" => DensitySource::cosine(param).map_err(|e| e.to_string())?,
        "quadratic" => {
            let cost = CostFunction::quadratic(param).map_err(|e| e.to_string())?;
            let sol =
                solve_potential(&cost, &SolverOptions { m, ..SolverOptions::default() }).map_err(|e| e.to_string())?;
            DensitySource::bridge(sol, cost)
        }
        other => return Err(format!("unknown kernel {other:?}")),
    };
    let mut eig = nystrom_eigenvalues(&src, m).map_err(|e| e.to_string())?;
    eig.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    eig.truncate(count);
    Ok(eig)
}

#[wasm_bindgen(js_name = bridgeCurve)]
pub fn js_bridge_curve(beta: f64, m: usize) -> Result<BridgeCurve, JsError> {
    bridge_curve(beta, m).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = cosineSequence)]
pub fn js_cosine_sequence(epsilon: f64, n_max: usize) -> Result<Sequence, JsError> {
    cosine_sequence(epsilon, n_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = leadingSpectrum)]
pub fn js_leading_spectrum(kernel: &str, param: f64, m: usize, count: usize) -> Result<Vec<f64>, JsError> {
    leading_spectrum(kernel, param, m, count).map_err(|e| JsError::new(&e))
}
