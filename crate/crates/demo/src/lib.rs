//! Browser demo. Each export takes plain numbers and returns JSON text;
//! the `*_json` functions behind them are ordinary Rust and run natively.

use serde_json::{json, Value};
use upfn_core::bandwidth::{GeometricNet, MultiBandwidth};
use upfn_core::error::Result;
use upfn_core::field::{lattice_for, sample_noise, FieldPlan, DEFAULT_CELL_CAP};
use upfn_core::grid::Grid;
use upfn_core::kernel::Kernel;
use upfn_core::upper::{psi, psi_eps, theorem_bound, Constants, Theorem, UpperFnConfig};
use upfn_core::error::Error;
use upfn_core::verify::{run_scenario, BandwidthSpec, Scenario};
use wasm_bindgen::prelude::*;

const B: f64 = 0.5;
const GRID_N: usize = 128;
const DELTA: f64 = 2e-3;
const MAX_S: u32 = 6;

fn base() -> f64 {
    (-2.0f64).exp()
}

fn config(p: f64, ln_a: f64) -> Result<UpperFnConfig> {
    UpperFnConfig::new(p, 1.0, base(), B, 1, base(), 0.5, 1.0, ln_a)
}

fn parse_levels(s: &str) -> Vec<u32> {
    s.split(',').filter_map(|t| t.trim().parse().ok()).filter(|&v| v <= MAX_S).collect()
}

fn constant(net: GeometricNet, s: u32) -> Result<MultiBandwidth> {
    MultiBandwidth::constant(B, net, vec![s])
}

/// One replicate of the field on `(-1/2, 1/2)` for each level in `levels`
/// (comma separated), all driven by the same noise.
pub fn simulate_field_json(kernel: &str, levels: &str, seed: u64) -> Result<Value> {
    let kernel = Kernel::from_catalog(kernel, 1)?;
    let net = GeometricNet::new(base(), MAX_S)?;
    let ss = parse_levels(levels);
    let hs = ss.iter().map(|&s| constant(net, s)).collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(B, 1, GRID_N)?;
    let spec = lattice_for(&kernel, &hs, DELTA, DEFAULT_CELL_CAP)?;
    let noise = sample_noise(&spec, seed, 0, DEFAULT_CELL_CAP)?;
    let values = FieldPlan::new(&kernel, &hs, &grid, &spec)?.evaluate(&noise)?;
    let x: Vec<f64> = (0..GRID_N).map(|i| grid.coord(i)).collect();
    Ok(json!({ "x": x, "levels": ss, "fields": values }))
}

/// Upper functions of the constant bandwidths `h = e^{-2-s}`, `s = 0..=MAX_S`,
/// and the moment bound they feed.
pub fn upper_table_json(kernel: &str, p: f64, ln_a: f64) -> Result<Value> {
    let kernel = Kernel::from_catalog(kernel, 1)?;
    let k = Constants::new(config(p, ln_a)?, kernel)?;
    let net = GeometricNet::new(base(), MAX_S)?;
    let mut rows = Vec::new();
    for s in 0..=MAX_S {
        let h = constant(net, s)?;
        let scan = psi(&h, &k)?;
        rows.push(json!({
            "s": s,
            "h": net.value(s),
            "psi_eps": psi_eps(&h, &k)?,
            "psi": scan.value,
            "r_star": scan.r_star,
        }));
    }
    let bound = theorem_bound(Theorem::T1, &k)?;
    Ok(json!({ "rows": rows, "bound": bound.value }))
}

/// Empirical and reference exceedance curves for one constant bandwidth.
pub fn exceedance_json(kernel: &str, s: u32, replicates: usize, seed: u64) -> Result<Value> {
    let sc = Scenario {
        name: "demo".into(),
        kernel: kernel.into(),
        bandwidths: vec![BandwidthSpec::Constant { s: vec![s.min(MAX_S)] }],
        cfg: config(2.0, 4.0)?,
        replicates,
        delta: DELTA,
        grid_n: GRID_N,
        seed,
        upper: vec![],
        oracles: Default::default(),
        exceedance_levels: 24,
    };
    let curve = run_scenario(&sc)?
        .exceedance
        .into_iter()
        .next()
        .ok_or_else(|| Error::Domain("no exceedance curve".into()))?;
    Ok(serde_json::to_value(curve)?)
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate_field(kernel: &str, levels: &str, seed: u64) -> std::result::Result<String, JsError> {
    to_js(simulate_field_json(kernel, levels, seed))
}

#[wasm_bindgen]
pub fn upper_table(kernel: &str, p: f64, ln_a: f64) -> std::result::Result<String, JsError> {
    to_js(upper_table_json(kernel, p, ln_a))
}

#[wasm_bindgen]
pub fn exceedance(kernel: &str, s: u32, replicates: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_js(exceedance_json(kernel, s, replicates, seed))
}
