//! Entropy constants `λ*(ω, μ)` and `λ_d*(r)`.
//!
//! Neither has a closed form. They are either supplied (a constant or a
//! table) or calibrated with the sampling estimator from [`crate::entropy`]
//! on a fixed node grid, cached per process.

use crate::entropy::{estimate_lambda_star, SsBall};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use std::sync::{Mutex, OnceLock};

pub const CALIBRATED_FLAG: &str = "calibrated, not proved";
pub const SUPPLIED_FLAG: &str = "supplied";

/// Source of `λ*(ω, μ)`, the entropy constant of the one-dimensional ball
/// with smoothness `ω`, exponent `μ` and radius 1 on `[−a−b, a+b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaStarSource {
    Constant {
        value: f64,
    },
    /// Rows `(ω, μ, value)`.
    Table {
        rows: Vec<(f64, f64, f64)>,
    },
    #[default]
    Calibrated,
}

/// Source of `λ_d*(r)`, the entropy constant of the `d`-dimensional ball
/// with smoothness `γ_r`, exponent 1 and radius 1 on `[−a−b, a+b]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaDSource {
    Constant {
        value: f64,
    },
    /// Rows `(r, value)`.
    Table {
        rows: Vec<(u32, f64)>,
    },
    #[default]
    Calibrated,
}

/// Sampling budget and seed of the calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub budget: usize,
    pub seed: u64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { budget: 256, seed: 0 }
    }
}

/// Either kind of override table, as read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaOverride {
    Star(LambdaStarSource),
    D(LambdaDSource),
}

/// Reads an override table: three columns `ω, μ, value` or two columns
/// `r, value`. A header row is optional.
pub fn read_lambda_csv<R: Read>(r: R) -> Result<LambdaOverride> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if rows.is_empty() => continue, // header
            Err(_) => return Err(Error::Parse(format!("bad row {:?}", rec))),
        }
    }
    let width = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse("lambda table must have rows of equal width".into()));
    }
    if rows.iter().any(|r| !(r[width - 1] > 0.0 && r[width - 1].is_finite())) {
        return Err(Error::Parse("lambda values must be positive and finite".into()));
    }
    match width {
        3 => Ok(LambdaOverride::Star(LambdaStarSource::Table {
            rows: rows.into_iter().map(|r| (r[0], r[1], r[2])).collect(),
        })),
        2 => {
            let mut out = Vec::with_capacity(rows.len());
            for r in rows {
                if r[0] < 1.0 || r[0].fract() != 0.0 {
                    return Err(Error::Parse(format!("r must be a positive integer, got {}", r[0])));
                }
                out.push((r[0] as u32, r[1]));
            }
            Ok(LambdaOverride::D(LambdaDSource::Table { rows: out }))
        }
        _ => Err(Error::Parse("expected columns (omega, mu, value) or (r, value)".into())),
    }
}

/// `λ(γ, m, R, Δ) = R^{k/γ} λ(γ, m, 1, Δ)`.
pub fn scale_lambda(unit_value: f64, radius: f64, k: usize, gamma: f64) -> f64 {
    radius.powf(k as f64 / gamma) * unit_value
}

/// A looked-up value with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaValue {
    pub value: f64,
    /// The query fell outside the valid node range and was clamped.
    pub extrapolated: bool,
}

pub const OMEGA_NODES: usize = 19;
pub const MU_NODES: usize = 17;

fn omega_node(i: usize) -> f64 {
    0.05 * (i + 1) as f64
}

fn mu_node(j: usize) -> f64 {
    1.0 + j as f64 / 16.0
}

fn node_valid(omega: f64, mu: f64) -> bool {
    omega > 1.0 / mu - 0.5 + 1e-9
}

type NodeKey = (usize, usize, u64, usize, u64);

fn star_cache() -> &'static Mutex<HashMap<NodeKey, f64>> {
    static C: OnceLock<Mutex<HashMap<NodeKey, f64>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

fn d_cache() -> &'static Mutex<HashMap<(usize, u64, u64, usize, u64), f64>> {
    static C: OnceLock<Mutex<HashMap<(usize, u64, u64, usize, u64), f64>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

fn calibrated_node(i: usize, j: usize, length: f64, cal: Calibration) -> Result<f64> {
    let key = (i, j, length.to_bits(), cal.budget, cal.seed);
    if let Some(v) = star_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(*v);
    }
    let ball = SsBall::new(omega_node(i), mu_node(j), 1.0, length, 1);
    let v = estimate_lambda_star(&ball, cal.budget, cal.seed)?.value;
    star_cache().lock().expect("cache poisoned").insert(key, v);
    Ok(v)
}

/// Every valid calibration node `(ω, μ, λ*)` for the domain length, in
/// the row format accepted by [`read_lambda_csv`].
pub fn calibrated_star_table(length: f64, cal: Calibration) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for i in 0..19 {
        for j in 0..17 {
            if node_valid(omega_node(i), mu_node(j)) {
                out.push((omega_node(i), mu_node(j), calibrated_node(i, j, length, cal)?));
            }
        }
    }
    Ok(out)
}

/// Calibrated `λ_d(γ, 1, 1, [0, length]^d)`.
pub fn calibrated_lambda_d(dim: usize, gamma: f64, length: f64, cal: Calibration) -> Result<f64> {
    let key = (dim, gamma.to_bits(), length.to_bits(), cal.budget, cal.seed);
    if let Some(v) = d_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(*v);
    }
    let ball = SsBall::new(gamma, 1.0, 1.0, length, dim);
    let v = estimate_lambda_star(&ball, cal.budget, cal.seed)?.value;
    d_cache().lock().expect("cache poisoned").insert(key, v);
    Ok(v)
}

fn bracket(nodes: &[f64], x: f64) -> (usize, usize, f64) {
    let n = nodes.len();
    if n == 1 || x <= nodes[0] {
        return (0, 0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let k = nodes.iter().rposition(|&v| v <= x).unwrap_or(0).min(n - 2);
    (k, k + 1, (x - nodes[k]) / (nodes[k + 1] - nodes[k]))
}

/// Bilinear interpolation over a rectangular node set where some nodes may
/// be missing: missing corners are dropped and the remaining weights
/// renormalised; with no valid corner the nearest valid node is used.
fn interpolate(
    omegas: &[f64],
    mus: &[f64],
    omega: f64,
    mu: f64,
    mut value: impl FnMut(usize, usize) -> Result<Option<f64>>,
) -> Result<LambdaValue> {
    let (i0, i1, tw) = bracket(omegas, omega);
    let (j0, j1, tm) = bracket(mus, mu);
    let clamped = omega < omegas[0] || omega > omegas[omegas.len() - 1] || mu < mus[0] || mu > mus[mus.len() - 1];
    let corners = [
        (i0, j0, (1.0 - tw) * (1.0 - tm)),
        (i1, j0, tw * (1.0 - tm)),
        (i0, j1, (1.0 - tw) * tm),
        (i1, j1, tw * tm),
    ];
    let mut acc = 0.0;
    let mut wsum = 0.0;
    let mut dropped = false;
    for (i, j, w) in corners {
        if w == 0.0 {
            continue;
        }
        match value(i, j)? {
            Some(v) => {
                acc += w * v;
                wsum += w;
            }
            None => dropped = true,
        }
    }
    if wsum > 0.0 {
        return Ok(LambdaValue {
            value: acc / wsum,
            extrapolated: clamped || dropped,
        });
    }
    // nearest valid node by index distance, lowest indices first
    let mut best: Option<(f64, f64)> = None;
    for (j, &m) in mus.iter().enumerate() {
        for (i, &o) in omegas.iter().enumerate() {
            let dist = ((o - omega) / 0.05).powi(2) + ((m - mu) * 16.0).powi(2);
            if best.map_or(true, |(d, _)| dist < d) {
                if let Some(v) = value(i, j)? {
                    best = Some((dist, v));
                }
            }
        }
    }
    best.map(|(_, v)| LambdaValue {
        value: v,
        extrapolated: true,
    })
    .ok_or_else(|| Error::MissingConstant("no valid lambda* node".into()))
}

/// Resolves `λ*(ω, μ)` and `λ_d*(r)` for one domain.
#[derive(Debug, Clone)]
pub struct LambdaProvider {
    pub star: LambdaStarSource,
    pub d: LambdaDSource,
    pub calibration: Calibration,
    /// Length of the interval `[−a−b, a+b]`.
    pub length: f64,
    pub dim: usize,
}

impl LambdaProvider {
    pub fn star_flag(&self) -> &'static str {
        match self.star {
            LambdaStarSource::Calibrated => CALIBRATED_FLAG,
            _ => SUPPLIED_FLAG,
        }
    }

    pub fn d_flag(&self) -> &'static str {
        match self.d {
            LambdaDSource::Calibrated => CALIBRATED_FLAG,
            _ => SUPPLIED_FLAG,
        }
    }

    pub fn star(&self, omega: f64, mu: f64) -> Result<LambdaValue> {
        match &self.star {
            LambdaStarSource::Constant { value } => Ok(LambdaValue {
                value: *value,
                extrapolated: false,
            }),
            LambdaStarSource::Table { rows } => table_star(rows, omega, mu),
            LambdaStarSource::Calibrated => {
                let omegas: Vec<f64> = (0..OMEGA_NODES).map(omega_node).collect();
                let mus: Vec<f64> = (0..MU_NODES).map(mu_node).collect();
                interpolate(&omegas, &mus, omega, mu, |i, j| {
                    if node_valid(omega_node(i), mu_node(j)) {
                        calibrated_node(i, j, self.length, self.calibration).map(Some)
                    } else {
                        Ok(None)
                    }
                })
            }
        }
    }

    pub fn d_star(&self, r: u32, gamma_r: f64) -> Result<LambdaValue> {
        match &self.d {
            LambdaDSource::Constant { value } => Ok(LambdaValue {
                value: *value,
                extrapolated: false,
            }),
            LambdaDSource::Table { rows } => {
                if rows.is_empty() {
                    return Err(Error::MissingConstant("empty lambda_d* table".into()));
                }
                let mut rows = rows.clone();
                rows.sort_by_key(|r| r.0);
                if let Some(&(_, v)) = rows.iter().find(|x| x.0 == r) {
                    return Ok(LambdaValue {
                        value: v,
                        extrapolated: false,
                    });
                }
                let nodes: Vec<f64> = rows.iter().map(|x| x.0 as f64).collect();
                let (k0, k1, t) = bracket(&nodes, r as f64);
                Ok(LambdaValue {
                    value: (1.0 - t) * rows[k0].1 + t * rows[k1].1,
                    extrapolated: k0 == k1,
                })
            }
            LambdaDSource::Calibrated => Ok(LambdaValue {
                value: calibrated_lambda_d(self.dim, gamma_r, self.length, self.calibration)?,
                extrapolated: false,
            }),
        }
    }
}

fn table_star(rows: &[(f64, f64, f64)], omega: f64, mu: f64) -> Result<LambdaValue> {
    if rows.is_empty() {
        return Err(Error::MissingConstant("empty lambda* table".into()));
    }
    let mut omegas: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut mus: Vec<f64> = rows.iter().map(|r| r.1).collect();
    for v in [&mut omegas, &mut mus] {
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
    }
    let lookup = |o: f64, m: f64| rows.iter().find(|r| r.0 == o && r.1 == m).map(|r| r.2);
    if omegas.len() * mus.len() == rows.len() {
        return interpolate(&omegas, &mus, omega, mu, |i, j| Ok(lookup(omegas[i], mus[j])));
    }
    // scattered rows: nearest neighbour
    let best = rows
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, r| {
            let d = (r.0 - omega).powi(2) + (r.1 - mu).powi(2);
            if acc.map_or(true, |(bd, _)| d < bd) {
                Some((d, r.2))
            } else {
                acc
            }
        })
        .expect("nonempty");
    Ok(LambdaValue {
        value: best.1,
        extrapolated: best.0 > 0.0,
    })
}
