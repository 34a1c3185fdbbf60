//! Discretised white noise and the kernel-smoothed fields
//! `ξ_h(x) = Σ_c V_h(x)^{-1} K((t_c - x)/h⃗(x)) W_c`.

mod dump;

pub use dump::{read_dump, write_dump, DumpHeader};

use crate::bandwidth::MultiBandwidth;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{Kernel, NormOptions, Structure};
use crate::numerics::{integrate, normal_abs_moment};
use crate::rng::NormalStream;
use serde::Serialize;
use std::collections::BTreeMap;

/// Default cap on lattice cells per replicate.
pub const DEFAULT_CELL_CAP: usize = 1 << 24;

/// Geometry of a cubic noise lattice centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeSpec {
    pub dim: usize,
    pub delta: f64,
    /// Cells per axis.
    pub n: usize,
}

impl LatticeSpec {
    /// Smallest lattice with spacing `δ` covering `(-half, half)^d`.
    pub fn covering(dim: usize, half: f64, delta: f64, cap: usize) -> Result<Self> {
        if !(delta > 0.0) || !(half > 0.0) {
            return Err(Error::Domain(format!("invalid lattice half-width {half} or spacing {delta}")));
        }
        let n = (2.0 * half / delta).ceil() as usize + 2;
        let cells = (n as f64).powi(dim as i32);
        if cells > cap as f64 {
            return Err(Error::Capacity(format!(
                "noise lattice needs {cells:.3e} cells, cap is {cap}"
            )));
        }
        Ok(Self { dim, delta, n })
    }

    pub fn lo(&self) -> f64 {
        -0.5 * self.n as f64 * self.delta
    }

    pub fn hi(&self) -> f64 {
        0.5 * self.n as f64 * self.delta
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn centre(&self, i: usize) -> f64 {
        self.lo() + (i as f64 + 0.5) * self.delta
    }
}

/// White-noise increments `W_c ~ N(0, δ^d)`, one per lattice cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseLattice {
    pub spec: LatticeSpec,
    pub increments: Vec<f64>,
    pub seed: u64,
    pub replicate: u64,
}

/// Draws the increments for `(seed, replicate)`; the value of cell `c` is a
/// pure function of `(seed, replicate, c)`.
pub fn sample_noise(spec: &LatticeSpec, seed: u64, replicate: u64, cap: usize) -> Result<NoiseLattice> {
    if spec.cells() > cap {
        return Err(Error::Capacity(format!("{} cells exceed cap {cap}", spec.cells())));
    }
    let mut inc = vec![0.0; spec.cells()];
    NormalStream::new(seed, replicate).fill(&mut inc);
    let scale = spec.delta.powf(spec.dim as f64 / 2.0);
    inc.iter_mut().for_each(|v| *v *= scale);
    Ok(NoiseLattice {
        spec: spec.clone(),
        increments: inc,
        seed,
        replicate,
    })
}

impl NoiseLattice {
    /// Lattice with the given increments (used for linearity checks).
    pub fn from_increments(spec: LatticeSpec, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != spec.cells() {
            return Err(Error::Domain("increment count does not match lattice".into()));
        }
        Ok(Self {
            spec,
            increments,
            seed: 0,
            replicate: 0,
        })
    }
}

/// One replicate's field values for a bandwidth collection.
#[derive(Debug, Clone, Serialize)]
pub struct FieldSample {
    pub grid: Grid,
    /// `values[k][i]` is `ξ_{h_k}(x_i)`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    pub replicate: u64,
    pub delta: f64,
    pub kernel: String,
}

/// Precomputed evaluation plan for a bandwidth collection: which levels `s`
/// are needed at which grid nodes, so that each `η_s(x)` is computed once
/// per replicate and shared by every bandwidth using it.
#[derive(Debug, Clone)]
pub struct FieldPlan {
    kernel: Kernel,
    grid: Grid,
    spec: LatticeSpec,
    levels: Vec<Vec<u32>>,
    /// `points[l]`: grid nodes needing level `l`.
    points: Vec<Vec<usize>>,
    /// `lookup[k][i]`: (level, position in `points[level]`).
    lookup: Vec<Vec<(usize, usize)>>,
    h_values: Vec<Vec<f64>>,
}

impl FieldPlan {
    pub fn new(kernel: &Kernel, hs: &[MultiBandwidth], grid: &Grid, spec: &LatticeSpec) -> Result<Self> {
        if hs.is_empty() {
            return Err(Error::Domain("empty bandwidth collection".into()));
        }
        let d = grid.dim;
        if kernel.dim() != d || spec.dim != d || hs.iter().any(|h| h.dim() != d) {
            return Err(Error::Domain("dimension mismatch between kernel, grid, lattice and bandwidths".into()));
        }
        let mut ids: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut levels = Vec::new();
        let mut point_sets: Vec<BTreeMap<usize, usize>> = Vec::new();
        let mut lookup = Vec::with_capacity(hs.len());
        let xs: Vec<Vec<f64>> = grid.points().collect();
        for h in hs {
            let mut row = Vec::with_capacity(xs.len());
            for (i, x) in xs.iter().enumerate() {
                let s = h.index_at(x).to_vec();
                let l = *ids.entry(s.clone()).or_insert_with(|| {
                    levels.push(s);
                    point_sets.push(BTreeMap::new());
                    levels.len() - 1
                });
                let next = point_sets[l].len();
                let pos = *point_sets[l].entry(i).or_insert(next);
                row.push((l, pos));
            }
            lookup.push(row);
        }
        let points: Vec<Vec<usize>> = point_sets
            .iter()
            .map(|m| {
                let mut v = vec![0; m.len()];
                for (&i, &pos) in m {
                    v[pos] = i;
                }
                v
            })
            .collect();
        let net = hs[0].net();
        let h_values: Vec<Vec<f64>> = levels
            .iter()
            .map(|s| s.iter().map(|&v| net.value(v)).collect())
            .collect();
        // coverage: every window must sit inside the lattice
        let a = kernel.support();
        for (l, pts) in points.iter().enumerate() {
            for &i in pts {
                let x = &xs[i];
                for j in 0..d {
                    let r = a * h_values[l][j];
                    if x[j] - r < spec.lo() || x[j] + r > spec.hi() {
                        return Err(Error::Coverage(format!(
                            "support of level {:?} at x = {:?} exits the lattice [{}, {}]",
                            levels[l],
                            x,
                            spec.lo(),
                            spec.hi()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            kernel: kernel.clone(),
            grid: *grid,
            spec: spec.clone(),
            levels,
            points,
            lookup,
            h_values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn bandwidth_count(&self) -> usize {
        self.lookup.len()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Field values for every bandwidth of the collection.
    pub fn evaluate(&self, noise: &NoiseLattice) -> Result<Vec<Vec<f64>>> {
        if noise.spec != self.spec {
            return Err(Error::Coverage("noise lattice differs from the planned lattice".into()));
        }
        let eta: Vec<Vec<f64>> = (0..self.levels.len())
            .map(|l| {
                let x_all: Vec<Vec<f64>> = self.points[l].iter().map(|&i| self.grid.point(i)).collect();
                x_all.iter().map(|x| self.eta(noise, x, &self.h_values[l])).collect()
            })
            .collect();
        Ok(self
            .lookup
            .iter()
            .map(|row| row.iter().map(|&(l, pos)| eta[l][pos]).collect())
            .collect())
    }

    /// `V_h^{-1} Σ_c K((t_c - x)/h) W_c` over the cells meeting the support.
    fn eta(&self, noise: &NoiseLattice, x: &[f64], h: &[f64]) -> f64 {
        let d = x.len();
        let spec = &self.spec;
        let a = self.kernel.support();
        let mut lo_idx = vec![0usize; d];
        let mut hi_idx = vec![0usize; d];
        for j in 0..d {
            let lo = ((x[j] - a * h[j] - spec.lo()) / spec.delta).floor().max(0.0) as usize;
            let hi = (((x[j] + a * h[j] - spec.lo()) / spec.delta).ceil() as usize).min(spec.n);
            lo_idx[j] = lo;
            hi_idx[j] = hi.max(lo);
        }
        let v: f64 = h.iter().product();
        let sum = match self.kernel.structure() {
            Structure::Product(p) => {
                let weights: Vec<Vec<f64>> = (0..d)
                    .map(|j| {
                        (lo_idx[j]..hi_idx[j])
                            .map(|i| p.eval((spec.centre(i) - x[j]) / h[j]))
                            .collect()
                    })
                    .collect();
                separable_sum(&noise.increments, spec.n, &lo_idx, &weights)
            }
            _ => {
                let counts: Vec<usize> = (0..d).map(|j| hi_idx[j] - lo_idx[j]).collect();
                let total: usize = counts.iter().product();
                let mut u = vec![0.0; d];
                let mut acc = 0.0;
                for c in 0..total {
                    let mut r = c;
                    let mut flat = 0;
                    let mut idx = vec![0; d];
                    for j in (0..d).rev() {
                        idx[j] = lo_idx[j] + r % counts[j];
                        r /= counts[j];
                    }
                    for j in 0..d {
                        u[j] = (spec.centre(idx[j]) - x[j]) / h[j];
                        flat = flat * spec.n + idx[j];
                    }
                    let k = self.kernel.eval(&u);
                    if k != 0.0 {
                        acc += k * noise.increments[flat];
                    }
                }
                acc
            }
        };
        sum / v
    }
}

/// `Σ_{i_1..i_d} ∏_j w_j[i_j] · inc[lo + i]` for a row-major lattice.
fn separable_sum(inc: &[f64], n: usize, lo: &[usize], weights: &[Vec<f64>]) -> f64 {
    fn rec(inc: &[f64], n: usize, lo: &[usize], weights: &[Vec<f64>], j: usize, offset: usize) -> f64 {
        let w = &weights[j];
        if j + 1 == weights.len() {
            let base = offset * n + lo[j];
            w.iter().zip(&inc[base..base + w.len()]).map(|(a, b)| a * b).sum()
        } else {
            w.iter()
                .enumerate()
                .filter(|(_, wv)| **wv != 0.0)
                .map(|(i, wv)| wv * rec(inc, n, lo, weights, j + 1, offset * n + lo[j] + i))
                .sum()
        }
    }
    rec(inc, n, lo, weights, 0, 0)
}

/// Convenience wrapper: fields of a collection for one noise realisation.
pub fn evaluate_field(kernel: &Kernel, hs: &[MultiBandwidth], noise: &NoiseLattice, grid: &Grid) -> Result<FieldSample> {
    let plan = FieldPlan::new(kernel, hs, grid, &noise.spec)?;
    Ok(FieldSample {
        grid: *grid,
        values: plan.evaluate(noise)?,
        seed: noise.seed,
        replicate: noise.replicate,
        delta: noise.spec.delta,
        kernel: kernel.name().to_string(),
    })
}

/// Lattice large enough for every bandwidth in the collection.
pub fn lattice_for(kernel: &Kernel, hs: &[MultiBandwidth], delta: f64, cap: usize) -> Result<LatticeSpec> {
    let b = hs
        .first()
        .map(|h| h.b())
        .ok_or_else(|| Error::Domain("empty bandwidth collection".into()))?;
    let h_max = hs.iter().map(|h| h.h_max()).fold(0.0, f64::max);
    LatticeSpec::covering(kernel.dim(), b + kernel.support() * h_max, delta, cap)
}

/// `(Δx Σ_i |ξ(x_i)|^p)^{1/p}`.
pub fn lp_norm(values: &[f64], grid: &Grid, p: f64) -> f64 {
    let s: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
    (grid.cell_volume() * s).powf(1.0 / p)
}

/// `V_h(x)^{-1} V_h(y)^{-1} ∫ K((t-x)/h⃗(x)) K((t-y)/h⃗(y)) dt`.
pub fn exact_covariance(kernel: &Kernel, h: &MultiBandwidth, x: &[f64], y: &[f64]) -> f64 {
    let hx = h.h_at(x);
    let hy = h.h_at(y);
    covariance_with(kernel, x, &hx, y, &hy)
}

/// Covariance for explicit bandwidth vectors at the two points.
pub fn covariance_with(kernel: &Kernel, x: &[f64], hx: &[f64], y: &[f64], hy: &[f64]) -> f64 {
    let d = x.len();
    let a = kernel.support();
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for j in 0..d {
        lo[j] = (x[j] - a * hx[j]).max(y[j] - a * hy[j]);
        hi[j] = (x[j] + a * hx[j]).min(y[j] + a * hy[j]);
        if hi[j] <= lo[j] {
            return 0.0;
        }
    }
    let vx: f64 = hx.iter().product();
    let vy: f64 = hy.iter().product();
    let integral = match kernel.structure() {
        Structure::Product(p) => (0..d)
            .map(|j| {
                let f = |t: f64| p.eval((t - x[j]) / hx[j]) * p.eval((t - y[j]) / hy[j]);
                // split at the kernel centres where the profile may kink
                let mut cuts = vec![lo[j], hi[j], x[j], y[j]];
                cuts.retain(|c| *c >= lo[j] && *c <= hi[j]);
                cuts.sort_by(|a, b| a.total_cmp(b));
                cuts.dedup();
                cuts.windows(2)
                    .map(|w| integrate(f, w[0], w[1], 1e-12, 1e-300, 2000).value)
                    .sum::<f64>()
            })
            .product(),
        _ => {
            let n: usize = if d == 1 { 4096 } else { 256 };
            let steps: Vec<f64> = (0..d).map(|j| (hi[j] - lo[j]) / n as f64).collect();
            let vol: f64 = steps.iter().product();
            let mut t = vec![0.0; d];
            let mut u = vec![0.0; d];
            let mut w = vec![0.0; d];
            let mut acc = 0.0;
            for c in 0..n.pow(d as u32) {
                let mut r = c;
                for j in 0..d {
                    t[j] = lo[j] + ((r % n) as f64 + 0.5) * steps[j];
                    r /= n;
                    u[j] = (t[j] - x[j]) / hx[j];
                    w[j] = (t[j] - y[j]) / hy[j];
                }
                acc += kernel.eval(&u) * kernel.eval(&w);
            }
            acc * vol
        }
    };
    integral / (vx * vy)
}

/// Covariance of the discretised field, `Σ_c K_x(t_c) K_y(t_c) δ^d`; the
/// quantity the lattice simulation reproduces exactly.
pub fn lattice_covariance(kernel: &Kernel, spec: &LatticeSpec, x: &[f64], hx: &[f64], y: &[f64], hy: &[f64]) -> f64 {
    let d = x.len();
    let a = kernel.support();
    let mut lo = vec![0usize; d];
    let mut cnt = vec![0usize; d];
    for j in 0..d {
        let l = ((x[j] - a * hx[j]).max(y[j] - a * hy[j]) - spec.lo()) / spec.delta;
        let h = ((x[j] + a * hx[j]).min(y[j] + a * hy[j]) - spec.lo()) / spec.delta;
        if h <= l {
            return 0.0;
        }
        lo[j] = l.floor().max(0.0) as usize;
        cnt[j] = (h.ceil() as usize).min(spec.n) - lo[j];
    }
    let vx: f64 = hx.iter().product();
    let vy: f64 = hy.iter().product();
    let mut acc = 0.0;
    let mut u = vec![0.0; d];
    let mut w = vec![0.0; d];
    for c in 0..cnt.iter().product::<usize>() {
        let mut r = c;
        for j in 0..d {
            let t = spec.centre(lo[j] + r % cnt[j]);
            r /= cnt[j];
            u[j] = (t - x[j]) / hx[j];
            w[j] = (t - y[j]) / hy[j];
        }
        acc += kernel.eval(&u) * kernel.eval(&w);
    }
    acc * spec.delta.powi(d as i32) / (vx * vy)
}

/// `E‖ξ_h‖_p^p = γ_p ‖K‖_2^p ‖V_h^{-1/2}‖_p^p`.
pub fn exact_lp_moment(kernel: &Kernel, h: &MultiBandwidth, p: f64, opts: &NormOptions) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p must be >= 1, got {p}")));
    }
    let k2 = kernel.norm(2.0, opts)?.value;
    Ok(normal_abs_moment(p) * k2.powf(p) * (p * h.ln_v_norm(p)).exp())
}
