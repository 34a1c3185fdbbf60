//! Smoothness-adaptive bandwidth selection over anisotropic Nikolskii
//! classes, and the class bounds satisfied by its output.

use super::{GeometricNet, MultiBandwidth};
use crate::error::{Error, Result};
use crate::grid::GriddedFunction;
use crate::kernel::Kernel;
use crate::numerics::snap_to_integer;
use crate::par::map_indexed;
use serde::{Deserialize, Serialize};

/// Smoothness parameters `(β⃗, r⃗, L⃗)`, the order `ℓ` of the `w_ℓ`
/// kernel and the bias constant `C̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NikolskiiParams {
    pub beta: Vec<f64>,
    pub r: Vec<f64>,
    pub l: Vec<f64>,
    pub ell: usize,
    /// Catalog name of the base function `w`.
    #[serde(default = "default_base")]
    pub base: String,
    #[serde(default = "default_c_tilde")]
    pub c_tilde: f64,
}

fn default_base() -> String {
    "bump".into()
}

fn default_c_tilde() -> f64 {
    1.0
}

impl NikolskiiParams {
    pub fn new(beta: Vec<f64>, r: Vec<f64>, l: Vec<f64>, ell: usize) -> Self {
        Self {
            beta,
            r,
            l,
            ell,
            base: default_base(),
            c_tilde: default_c_tilde(),
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Checks `β⃗ ∈ (0, ℓ]^d`, `r⃗ ∈ [1, p]^d`, `L⃗ > 0`.
    pub fn validate(&self, p: f64) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.r.len() != d || self.l.len() != d {
            return Err(Error::Domain("beta, r and L must have the same positive length".into()));
        }
        if self.ell < 1 {
            return Err(Error::Domain("ell must be >= 1".into()));
        }
        for j in 0..d {
            if !(self.beta[j] > 0.0 && self.beta[j] <= self.ell as f64) {
                return Err(Error::Hypothesis(format!("beta_{} = {} outside (0, ell]", j + 1, self.beta[j])));
            }
            if !(self.r[j] >= 1.0 && self.r[j] <= p) {
                return Err(Error::Hypothesis(format!("r_{} = {} outside [1, p]", j + 1, self.r[j])));
            }
            if !(self.l[j] > 0.0) {
                return Err(Error::Domain(format!("L_{} must be positive", j + 1)));
            }
        }
        if !(self.c_tilde > 0.0) {
            return Err(Error::Domain("bias constant must be positive".into()));
        }
        Ok(())
    }

    /// `β` with `1/β = Σ 1/β_j`.
    pub fn beta_bar(&self) -> f64 {
        1.0 / self.beta.iter().map(|b| 1.0 / b).sum::<f64>()
    }

    /// `υ` with `1/υ = Σ 1/(r_j β_j)`.
    pub fn upsilon(&self) -> f64 {
        1.0 / self.beta.iter().zip(&self.r).map(|(b, r)| 1.0 / (b * r)).sum::<f64>()
    }
}

/// The integer `S` with `e^{-1} ε^c < 𝔥 e^{-S} <= ε^c`,
/// `c = 2β / ((2β+1) β_j)`.
pub fn s_epsilon_grid(np: &NikolskiiParams, eps: f64, base: f64, j: usize) -> Result<u32> {
    if j >= np.dim() {
        return Err(Error::Domain(format!("coordinate {j} out of range")));
    }
    let beta = np.beta_bar();
    let c = 2.0 * beta / ((2.0 * beta + 1.0) * np.beta[j]);
    let x = snap_to_integer(base.ln() - c * eps.ln(), 1e-9);
    let s = x.ceil();
    if s < 0.0 {
        return Err(Error::Domain(format!(
            "epsilon = {eps} too large: no admissible level for coordinate {}",
            j + 1
        )));
    }
    Ok(s as u32)
}

/// `𝓛 = Σ_j κ_j^τ (1 - e^{-τ r_j / 2})^{-d} + (2b)^d`,
/// `κ_j = {d (e^{β_j} - e^{β_j - 1/2}) C̃ L_j}^{r_j}`.
pub fn nikolskii_class_bound(np: &NikolskiiParams, tau: f64, b: f64, dim: usize) -> f64 {
    let d = dim as f64;
    let mut sum = 0.0;
    for j in 0..np.dim() {
        let bj = np.beta[j];
        let kappa = (d * (bj.exp() - (bj - 0.5).exp()) * np.c_tilde * np.l[j]).powf(np.r[j]);
        sum += kappa.powf(tau) * (1.0 - (-tau * np.r[j] / 2.0).exp()).powf(-d);
    }
    sum + (2.0 * b).powf(d)
}

/// Membership bound `h⃗_f ∈ 𝔹(C ε^{-1/(2β+1)})` in the dense zone
/// `υ(2 + 1/β) > p`, with the norm exponent `𝔭 ∈ (p, υ(2+1/β))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBound {
    /// Norm exponent `𝔭`.
    pub pp: f64,
    pub c: f64,
    /// `ln(C ε^{-1/(2β+1)})`.
    pub ln_a: f64,
}

pub fn nikolskii_b_bound(np: &NikolskiiParams, p: f64, eps: f64, pp: Option<f64>) -> Result<BBound> {
    let d = np.dim() as f64;
    let beta = np.beta_bar();
    let top = np.upsilon() * (2.0 + 1.0 / beta);
    if !(top > p) {
        return Err(Error::Hypothesis(format!("dense-zone condition fails: υ(2+1/β) = {top} <= p = {p}")));
    }
    let pp = pp.unwrap_or(0.5 * (p + top));
    if !(pp > p && pp < top) {
        return Err(Error::Domain(format!("norm exponent {pp} must lie in ({p}, {top})")));
    }
    let sum: f64 = (0..np.dim()).map(|j| (np.c_tilde * np.l[j]).powf(np.r[j])).sum();
    let inner = (2.0 * (d / 2.0).exp()).powf(pp)
        + (2.0 * (d / 2.0 + 1.0).exp()).powf(pp) * sum / (1.0 - (-(top - pp)).exp());
    let c = inner.powf(1.0 / pp);
    Ok(BBound {
        pp,
        c,
        ln_a: c.ln() - eps.ln() / (2.0 * beta + 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorOptions {
    /// Largest admissible level per coordinate.
    pub s_max: u32,
    /// Midpoint nodes per axis for the bias integral.
    pub quad_nodes: usize,
}

impl Default for SelectorOptions {
    fn default() -> Self {
        Self {
            s_max: super::DEFAULT_S_MAX,
            quad_nodes: 128,
        }
    }
}

/// Selector output: the bandwidth on the grid-cell partition plus per-cell
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub bandwidth: MultiBandwidth,
    pub s_eps: Vec<u32>,
    pub objective: Vec<f64>,
    /// Kernel support of the largest candidate leaves `(-b, b)^d`, so the
    /// zero extension of `f` enters at least one bias term.
    pub halo: Vec<bool>,
}

/// Quadrature nodes `u` and weights `K(u) Δu^d` on `[-a, a]^d`, zero
/// weights dropped.
fn kernel_nodes(k: &Kernel, n: usize) -> Vec<(Vec<f64>, f64)> {
    let d = k.dim();
    let a = k.support();
    let h = 2.0 * a / n as f64;
    let vol = h.powi(d as i32);
    let mut out = Vec::new();
    let mut u = vec![0.0; d];
    for idx in 0..n.pow(d as u32) {
        let mut r = idx;
        for x in u.iter_mut().rev() {
            *x = -a + ((r % n) as f64 + 0.5) * h;
            r /= n;
        }
        let w = k.eval(&u);
        if w != 0.0 {
            out.push((u.clone(), w * vol));
        }
    }
    out
}

fn bias(f: &GriddedFunction, x: &[f64], fx: f64, h: &[f64], nodes: &[(Vec<f64>, f64)]) -> f64 {
    let mut y = vec![0.0; x.len()];
    let mut acc = 0.0;
    for (u, w) in nodes {
        for j in 0..x.len() {
            y[j] = x[j] + h[j] * u[j];
        }
        acc += w * f.interpolate(&y);
    }
    (acc - fx).abs()
}

/// `|∫K_h(t - x) f(t) dt - f(x)| + ε V_h^{-1/2}` at grid node `idx`.
pub fn selector_objective(
    f: &GriddedFunction,
    k: &Kernel,
    idx: usize,
    s: &[u32],
    eps: f64,
    net: GeometricNet,
    quad_nodes: usize,
) -> f64 {
    let nodes = kernel_nodes(k, quad_nodes);
    objective_with(f, &nodes, idx, s, eps, net)
}

fn objective_with(f: &GriddedFunction, nodes: &[(Vec<f64>, f64)], idx: usize, s: &[u32], eps: f64, net: GeometricNet) -> f64 {
    let x = f.grid.point(idx);
    let h: Vec<f64> = s.iter().map(|&v| net.value(v)).collect();
    let ln_v: f64 = h.iter().map(|v| v.ln()).sum();
    bias(f, &x, f.values[idx], &h, nodes) + eps * (-0.5 * ln_v).exp()
}

/// Pointwise arg-inf of bias plus `ε V_h^{-1/2}` over
/// `∏_j {𝔥 e^{-s} : S_ε(j) <= s <= s_max}`. Ties go to the
/// lexicographically smallest `s`.
pub fn nikolskii_select(
    np: &NikolskiiParams,
    f: &GriddedFunction,
    k: &Kernel,
    eps: f64,
    base: f64,
    opts: &SelectorOptions,
) -> Result<Selection> {
    let d = f.grid.dim;
    if np.dim() != d || k.dim() != d {
        return Err(Error::Domain("dimension mismatch between parameters, function and kernel".into()));
    }
    let net = GeometricNet::new(base, opts.s_max)?;
    let s_eps: Vec<u32> = (0..d).map(|j| s_epsilon_grid(np, eps, base, j)).collect::<Result<_>>()?;
    if let Some(j) = (0..d).find(|&j| s_eps[j] > opts.s_max) {
        return Err(Error::EmptyCandidates(format!(
            "S_eps({}) = {} exceeds s_max = {}",
            j + 1,
            s_eps[j],
            opts.s_max
        )));
    }
    let per_axis: Vec<u32> = s_eps.iter().map(|&s| opts.s_max - s + 1).collect();
    let n_cand: usize = per_axis.iter().map(|&c| c as usize).product();
    let nodes = kernel_nodes(k, opts.quad_nodes);
    let work = (f.grid.len() as f64) * n_cand as f64 * nodes.len() as f64 * (1 << d) as f64;
    if work > 2e10 {
        return Err(Error::Capacity(format!(
            "selector work {work:.2e} exceeds 2e10; reduce the grid, s_max or quadrature nodes"
        )));
    }
    // candidates in lexicographic order
    let candidates: Vec<Vec<u32>> = (0..n_cand)
        .map(|mut c| {
            let mut s = vec![0u32; d];
            for j in (0..d).rev() {
                s[j] = s_eps[j] + (c % per_axis[j] as usize) as u32;
                c /= per_axis[j] as usize;
            }
            s
        })
        .collect();
    let a = k.support();
    let b = f.grid.b;
    let chosen: Vec<(Vec<u32>, f64, bool)> = map_indexed(f.grid.len(), |idx| {
        let mut best = (candidates[0].clone(), f64::INFINITY);
        for s in &candidates {
            let v = objective_with(f, &nodes, idx, s, eps, net);
            if v < best.1 {
                best = (s.clone(), v);
            }
        }
        let x = f.grid.point(idx);
        let halo = (0..d).any(|j| x[j].abs() + a * net.value(s_eps[j]) > b);
        (best.0, best.1, halo)
    });
    let mut s_cells = Vec::with_capacity(chosen.len());
    let mut objective = Vec::with_capacity(chosen.len());
    let mut halo = Vec::with_capacity(chosen.len());
    for (s, v, hb) in chosen {
        s_cells.push(s);
        objective.push(v);
        halo.push(hb);
    }
    Ok(Selection {
        bandwidth: MultiBandwidth::on_grid(&f.grid, net, s_cells)?,
        s_eps,
        objective,
        halo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::class_h_functional;
    use crate::grid::Grid;
    use crate::kernel::Profile;
    use approx::assert_relative_eq;

    fn np1() -> NikolskiiParams {
        NikolskiiParams::new(vec![1.0], vec![1.0], vec![1.0], 1)
    }

    #[test]
    fn s_epsilon_examples() {
        let base = (-2.0f64).exp();
        assert_eq!(s_epsilon_grid(&np1(), (-6.0f64).exp(), base, 0).unwrap(), 2);
        assert_eq!(s_epsilon_grid(&np1(), (-6.75f64).exp(), base, 0).unwrap(), 3);
        assert!(s_epsilon_grid(&np1(), 0.9, 0.01, 0).is_err());
    }

    #[test]
    fn s_epsilon_window_is_unique() {
        let base = (-2.0f64).exp();
        for k in 0..50 {
            let eps = (-(3.0 + 0.137 * k as f64)).exp();
            let s = s_epsilon_grid(&np1(), eps, base, 0).unwrap();
            let target = eps.powf(2.0 / 3.0);
            let hits: Vec<u32> = (0..60)
                .filter(|&t| {
                    let lv = base.ln() - t as f64;
                    lv > target.ln() - 1.0 + 1e-9 && lv <= target.ln() + 1e-9
                })
                .collect();
            assert_eq!(hits, vec![s]);
        }
    }

    #[test]
    fn class_bound_examples() {
        assert!((nikolskii_class_bound(&np1(), 0.5, 0.5, 1) - 5.675).abs() < 1e-3);
        let tiny = NikolskiiParams::new(vec![1.0], vec![1.0], vec![1e-12], 1);
        assert_relative_eq!(nikolskii_class_bound(&tiny, 0.5, 0.5, 1), 1.0, max_relative = 1e-5);
    }

    #[test]
    fn b_bound_requires_dense_zone() {
        let np = NikolskiiParams::new(vec![1.0], vec![1.0], vec![1.0], 1);
        // υ(2 + 1/β) = 3
        let bb = nikolskii_b_bound(&np, 2.0, (-6.0f64).exp(), None).unwrap();
        assert_eq!(bb.pp, 2.5);
        assert!(bb.c > 0.0 && bb.ln_a > bb.c.ln());
        assert!(matches!(nikolskii_b_bound(&np, 3.0, 0.01, None), Err(Error::Hypothesis(_))));
    }

    fn setup(f: impl Fn(f64) -> f64) -> (GriddedFunction, Kernel) {
        let g = Grid::new(0.5, 1, 64).unwrap();
        let gf = GriddedFunction::from_fn(g, |x| f(x[0]));
        let k = Kernel::product(Profile::bump(), 1).unwrap();
        (gf, k)
    }

    #[test]
    fn zero_function_selects_largest_bandwidth() {
        let (f, k) = setup(|_| 0.0);
        let opts = SelectorOptions { s_max: 8, quad_nodes: 32 };
        let sel = nikolskii_select(&np1(), &f, &k, (-6.0f64).exp(), (-2.0f64).exp(), &opts).unwrap();
        assert!(sel.bandwidth.cell_indices().iter().all(|s| s == &vec![2]));
    }

    #[test]
    fn constant_function_matches_zero_away_from_halo() {
        let (f, k) = setup(|_| 0.7);
        let opts = SelectorOptions { s_max: 8, quad_nodes: 64 };
        let sel = nikolskii_select(&np1(), &f, &k, (-6.0f64).exp(), (-2.0f64).exp(), &opts).unwrap();
        for (s, halo) in sel.bandwidth.cell_indices().iter().zip(&sel.halo) {
            if !halo {
                assert_eq!(s, &vec![2]);
            }
        }
    }

    #[test]
    fn empty_candidates() {
        let (f, k) = setup(|_| 0.0);
        let opts = SelectorOptions { s_max: 1, quad_nodes: 16 };
        assert!(matches!(
            nikolskii_select(&np1(), &f, &k, (-6.0f64).exp(), (-2.0f64).exp(), &opts),
            Err(Error::EmptyCandidates(_))
        ));
    }

    #[test]
    fn bump_selection_matches_brute_force_and_class_bound() {
        let (f, k) = setup(|x| 0.3 * Profile::bump().eval(4.0 * x));
        let eps = (-6.0f64).exp();
        let base = (-2.0f64).exp();
        let opts = SelectorOptions { s_max: 3, quad_nodes: 48 };
        let sel = nikolskii_select(&np1(), &f, &k, eps, base, &opts).unwrap();
        let net = GeometricNet::new(base, 3).unwrap();
        for idx in 0..f.grid.len() {
            let objs: Vec<f64> = (2..=3)
                .map(|s| selector_objective(&f, &k, idx, &[s], eps, net, 48))
                .collect();
            let want = if objs[1] < objs[0] { 3 } else { 2 };
            assert_eq!(sel.bandwidth.cell_indices()[idx], vec![want]);
        }
        assert!(class_h_functional(&sel.bandwidth, 0.5) <= nikolskii_class_bound(&np1(), 0.5, 0.5, 1));
    }
}
