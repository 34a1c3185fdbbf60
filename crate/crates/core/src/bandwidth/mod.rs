//! Multi-bandwidths on the geometric net `{𝔥 e^{-s}}`, their level-set
//! functionals and the bandwidth classes built from them.

mod io;
mod select;

pub use select::{
    nikolskii_b_bound, nikolskii_class_bound, nikolskii_select, s_epsilon_grid, selector_objective,
    NikolskiiParams, Selection, SelectorOptions,
};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::numerics::log_sum_exp;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default truncation of the net.
pub const DEFAULT_S_MAX: u32 = 40;
/// Default cap on the `r` scan in [`r_a`].
pub const DEFAULT_R_CAP: u32 = 10_000;

/// `{𝔥 e^{-s} : 0 <= s <= s_max}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricNet {
    pub base: f64,
    pub s_max: u32,
}

impl GeometricNet {
    pub fn new(base: f64, s_max: u32) -> Result<Self> {
        if !(base > 0.0 && base <= (-2.0f64).exp() * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("net base must lie in (0, e^-2], got {base}")));
        }
        Ok(Self { base, s_max })
    }

    pub fn value(&self, s: u32) -> f64 {
        self.base * (-(s as f64)).exp()
    }

    pub fn ln_value(&self, s: u32) -> f64 {
        self.base.ln() - s as f64
    }
}

/// Piecewise-constant multi-bandwidth on a rectilinear partition of
/// `(-b, b)^d`.
///
/// Axis `j` is cut at `breaks[j]` (starting at `-b`, ending at `b`); every
/// cell of the resulting grid carries a multi-index `s`, so that
/// `h_j = 𝔥 e^{-s_j}` on that cell. Cells are stored row-major with the last
/// axis varying fastest. Tiling holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiBandwidth {
    b: f64,
    net: GeometricNet,
    breaks: Vec<Vec<f64>>,
    s: Vec<Vec<u32>>,
}

impl MultiBandwidth {
    pub fn new(b: f64, net: GeometricNet, breaks: Vec<Vec<f64>>, s: Vec<Vec<u32>>) -> Result<Self> {
        let d = breaks.len();
        if d == 0 || !(b > 0.0) {
            return Err(Error::Domain("bandwidth needs d >= 1 and b > 0".into()));
        }
        for (j, br) in breaks.iter().enumerate() {
            if br.len() < 2 {
                return Err(Error::Domain(format!("axis {j} needs at least one cell")));
            }
            let tol = 1e-12 * b.max(1.0);
            if (br[0] + b).abs() > tol || (br[br.len() - 1] - b).abs() > tol {
                return Err(Error::Domain(format!("axis {j} breakpoints must span [-b, b]")));
            }
            if br.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain(format!("axis {j} breakpoints must increase")));
            }
        }
        let cells: usize = breaks.iter().map(|br| br.len() - 1).product();
        if s.len() != cells {
            return Err(Error::Domain(format!("expected {cells} cell indices, got {}", s.len())));
        }
        for idx in &s {
            if idx.len() != d {
                return Err(Error::Domain("multi-index length differs from dimension".into()));
            }
            if idx.iter().any(|&v| v > net.s_max) {
                return Err(Error::Domain(format!("index {idx:?} exceeds s_max = {}", net.s_max)));
            }
        }
        let mut breaks = breaks;
        for br in breaks.iter_mut() {
            let n = br.len();
            br[0] = -b;
            br[n - 1] = b;
        }
        Ok(Self { b, net, breaks, s })
    }

    /// Constant bandwidth `h_j = 𝔥 e^{-s_j}`.
    pub fn constant(b: f64, net: GeometricNet, s: Vec<u32>) -> Result<Self> {
        let d = s.len();
        Self::new(b, net, vec![vec![-b, b]; d], vec![s])
    }

    /// Constant isotropic bandwidth.
    pub fn constant_isotropic(b: f64, dim: usize, net: GeometricNet, s: u32) -> Result<Self> {
        Self::constant(b, net, vec![s; dim])
    }

    /// One multi-index per cell of a uniform grid.
    pub fn on_grid(grid: &Grid, net: GeometricNet, s: Vec<Vec<u32>>) -> Result<Self> {
        let br: Vec<f64> = (0..=grid.n)
            .map(|i| -grid.b + i as f64 * grid.spacing())
            .collect();
        Self::new(grid.b, net, vec![br; grid.dim], s)
    }

    /// Builds a bandwidth from arbitrary axis-aligned boxes. The boxes must
    /// tile `(-b, b)^d`; they are refined onto the rectilinear grid spanned
    /// by all their faces.
    pub fn from_boxes(b: f64, net: GeometricNet, boxes: &[(Vec<f64>, Vec<f64>, Vec<u32>)]) -> Result<Self> {
        let d = boxes
            .first()
            .map(|bx| bx.0.len())
            .ok_or_else(|| Error::Domain("no boxes".into()))?;
        let tol = 1e-9 * b.max(1.0);
        let mut breaks = vec![vec![-b, b]; d];
        for (lo, hi, s) in boxes {
            if lo.len() != d || hi.len() != d || s.len() != d {
                return Err(Error::Domain("box dimensions disagree".into()));
            }
            for j in 0..d {
                if !(hi[j] > lo[j]) || lo[j] < -b - tol || hi[j] > b + tol {
                    return Err(Error::Domain(format!("box [{lo:?}, {hi:?}] is empty or leaves the domain")));
                }
                breaks[j].push(lo[j].clamp(-b, b));
                breaks[j].push(hi[j].clamp(-b, b));
            }
        }
        for br in breaks.iter_mut() {
            br.sort_by(|x, y| x.total_cmp(y));
            br.dedup_by(|x, y| (*x - *y).abs() <= tol);
        }
        let counts: Vec<usize> = breaks.iter().map(|br| br.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut s = Vec::with_capacity(total);
        for cell in 0..total {
            let idx = unravel(cell, &counts);
            let centre: Vec<f64> = (0..d)
                .map(|j| 0.5 * (breaks[j][idx[j]] + breaks[j][idx[j] + 1]))
                .collect();
            let owners: Vec<&Vec<u32>> = boxes
                .iter()
                .filter(|(lo, hi, _)| (0..d).all(|j| lo[j] < centre[j] && centre[j] < hi[j]))
                .map(|bx| &bx.2)
                .collect();
            match owners.len() {
                1 => s.push(owners[0].clone()),
                0 => return Err(Error::Domain(format!("boxes leave a gap at {centre:?}"))),
                _ => return Err(Error::Domain(format!("boxes overlap at {centre:?}"))),
            }
        }
        Self::new(b, net, breaks, s)
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn dim(&self) -> usize {
        self.breaks.len()
    }
    pub fn net(&self) -> GeometricNet {
        self.net
    }
    pub fn breaks(&self) -> &[Vec<f64>] {
        &self.breaks
    }
    pub fn cell_indices(&self) -> &[Vec<u32>] {
        &self.s
    }

    fn counts(&self) -> Vec<usize> {
        self.breaks.iter().map(|br| br.len() - 1).collect()
    }

    /// `(min corner, max corner, s)` for every cell.
    pub fn boxes(&self) -> Vec<(Vec<f64>, Vec<f64>, Vec<u32>)> {
        let counts = self.counts();
        (0..self.s.len())
            .map(|c| {
                let idx = unravel(c, &counts);
                let lo = (0..self.dim()).map(|j| self.breaks[j][idx[j]]).collect();
                let hi = (0..self.dim()).map(|j| self.breaks[j][idx[j] + 1]).collect();
                (lo, hi, self.s[c].clone())
            })
            .collect()
    }

    fn cell_volume(&self, cell: usize, counts: &[usize]) -> f64 {
        let idx = unravel(cell, counts);
        (0..self.dim())
            .map(|j| self.breaks[j][idx[j] + 1] - self.breaks[j][idx[j]])
            .product()
    }

    /// Multi-index at `x`. Points on a face belong to the upper cell; points
    /// at or beyond `b` to the last one.
    pub fn index_at(&self, x: &[f64]) -> &[u32] {
        let counts = self.counts();
        let mut flat = 0;
        for j in 0..self.dim() {
            let br = &self.breaks[j];
            let k = br.partition_point(|&v| v <= x[j]).clamp(1, br.len() - 1) - 1;
            flat = flat * counts[j] + k;
        }
        &self.s[flat]
    }

    /// `h⃗(x)`.
    pub fn h_at(&self, x: &[f64]) -> Vec<f64> {
        self.index_at(x).iter().map(|&s| self.net.value(s)).collect()
    }

    /// `ln V_h` for a multi-index: `d ln 𝔥 - Σ s_j`.
    pub fn ln_v(&self, s: &[u32]) -> f64 {
        s.len() as f64 * self.net.base.ln() - s.iter().map(|&v| v as f64).sum::<f64>()
    }

    /// Level sets `s ↦ ν_d(Λ_s[h⃗])`, ordered by multi-index.
    pub fn level_sets(&self) -> BTreeMap<Vec<u32>, f64> {
        let counts = self.counts();
        let mut out = BTreeMap::new();
        for (c, s) in self.s.iter().enumerate() {
            *out.entry(s.clone()).or_insert(0.0) += self.cell_volume(c, &counts);
        }
        out
    }

    pub fn level_set_measure(&self, s: &[u32]) -> f64 {
        self.level_sets().get(s).copied().unwrap_or(0.0)
    }

    /// All coordinates of `s` equal on every cell.
    pub fn is_isotropic(&self) -> bool {
        self.s.iter().all(|s| s.iter().all(|&v| v == s[0]))
    }

    /// `ln ‖V_h^{-1/2}‖_m`, computed in log space.
    pub fn ln_v_norm(&self, m: f64) -> f64 {
        let terms: Vec<f64> = self
            .level_sets()
            .iter()
            .map(|(s, nu)| -0.5 * m * self.ln_v(s) + nu.ln())
            .collect();
        log_sum_exp(&terms) / m
    }

    /// `‖V_h^{-1/2}‖_m = (Σ_s V_s^{-m/2} ν_d(Λ_s))^{1/m}`.
    pub fn v_norm(&self, m: f64) -> f64 {
        self.ln_v_norm(m).exp()
    }

    /// `max_x V_h(x)^{-1/2}`.
    pub fn max_v_inv_sqrt(&self) -> f64 {
        self.s.iter().map(|s| (-0.5 * self.ln_v(s)).exp()).fold(0.0, f64::max)
    }

    /// `min_x V_h(x)^{-1/2}`.
    pub fn min_v_inv_sqrt(&self) -> f64 {
        self.s
            .iter()
            .map(|s| (-0.5 * self.ln_v(s)).exp())
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest bandwidth value over all cells and coordinates.
    pub fn h_min(&self) -> f64 {
        let s = self.s.iter().flatten().copied().max().unwrap_or(0);
        self.net.value(s)
    }

    pub fn h_max(&self) -> f64 {
        let s = self.s.iter().flatten().copied().min().unwrap_or(0);
        self.net.value(s)
    }
}

fn unravel(mut flat: usize, counts: &[usize]) -> Vec<usize> {
    let mut out = vec![0; counts.len()];
    for j in (0..counts.len()).rev() {
        out[j] = flat % counts[j];
        flat /= counts[j];
    }
    out
}

/// `Σ_s ν_d^τ(Λ_s[h⃗])`; `h ∈ ℍ_d(τ, 𝓛)` iff the value is at most `𝓛`.
pub fn class_h_functional(h: &MultiBandwidth, tau: f64) -> f64 {
    h.level_sets().values().map(|nu| nu.powf(tau)).sum()
}

/// Parameters of the classes `ℍ_d(τ, 𝓛)` and `𝔹(𝒜)`. `𝒜` is stored as its
/// logarithm because the natural choices overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub tau: f64,
    pub big_l: f64,
    pub ln_a: f64,
    pub p: f64,
}

impl ClassParams {
    /// Validates `τ ∈ (0,1)`, `𝓛 > 0`, `p >= 1` and `𝒜 >= 𝔥^{-d/2}`.
    pub fn new(tau: f64, big_l: f64, ln_a: f64, p: f64, base: f64, dim: usize) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("tau must lie in (0,1), got {tau}")));
        }
        if !(big_l > 0.0) {
            return Err(Error::Domain(format!("class bound must be positive, got {big_l}")));
        }
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("p must be >= 1, got {p}")));
        }
        let floor = -0.5 * dim as f64 * base.ln();
        if !(ln_a >= floor * (1.0 - 1e-12)) {
            return Err(Error::Domain(format!(
                "ln A = {ln_a} is below the floor ln h^(-d/2) = {floor}"
            )));
        }
        Ok(Self { tau, big_l, ln_a, p })
    }

    /// First element of `ℕ*_p = {⌊p⌋+1, ⌊p⌋+2, …}`.
    pub fn r_min(&self) -> u32 {
        self.p.floor() as u32 + 1
    }
}

/// Exponent `rp/(r-p)` of the `𝔹_r(𝒜)` norm.
pub fn dual_exponent(r: f64, p: f64) -> f64 {
    r * p / (r - p)
}

/// Outcome of the `r_𝒜` scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RaResult {
    Member(u32),
    NotMember { r_cap: u32 },
}

impl RaResult {
    pub fn member(self) -> Option<u32> {
        match self {
            RaResult::Member(r) => Some(r),
            RaResult::NotMember { .. } => None,
        }
    }
}

/// `r_𝒜(h⃗) = inf{r ∈ ℕ*_p : ‖V_h^{-1/2}‖_{rp/(r-p)} <= 𝒜}`, scanning up to
/// `r_cap`.
pub fn r_a(h: &MultiBandwidth, cp: &ClassParams, r_cap: u32) -> RaResult {
    for r in cp.r_min()..=r_cap {
        if h.ln_v_norm(dual_exponent(r as f64, cp.p)) <= cp.ln_a {
            return RaResult::Member(r);
        }
    }
    RaResult::NotMember { r_cap }
}

/// Evaluation of the parameter relation
/// `d ln ln 𝒜 <= 2 √(2(1-τ)|ln 𝔥|) - d ln 4`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub warning: Option<String>,
}

pub fn check_param_relation(base: f64, ln_a: f64, tau: f64, dim: usize) -> Result<RelationCheck> {
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::Domain(format!("net base must lie in (0,1), got {base}")));
    }
    let d = dim as f64;
    let rhs = 2.0 * (2.0 * (1.0 - tau) * base.ln().abs()).sqrt() - d * 4f64.ln();
    if ln_a <= 1.0 {
        return Ok(RelationCheck {
            holds: true,
            lhs: f64::NEG_INFINITY,
            rhs,
            warning: Some(format!("A = e^{ln_a} <= e: ln ln A undefined or nonpositive, treated as satisfied")),
        });
    }
    let lhs = d * ln_a.ln();
    Ok(RelationCheck {
        holds: lhs <= rhs,
        lhs,
        rhs,
        warning: None,
    })
}

/// `(𝔥_ε, ln 𝒜_ε) = (e^{-√|ln ε|}, ln² ε)`.
pub fn epsilon_driven_params(eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps <= (-2.0f64).exp() * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("epsilon must lie in (0, e^-2], got {eps}")));
    }
    Ok(epsilon_driven_params_ln(eps.ln()))
}

/// Log-space form of [`epsilon_driven_params`] taking `ln ε`.
pub fn epsilon_driven_params_ln(ln_eps: f64) -> (f64, f64) {
    ((-ln_eps.abs().sqrt()).exp(), ln_eps * ln_eps)
}

/// Largest `ln ε` on the grid (by value) at which the relation holds under
/// the `ε`-driven parameterisation. The net base underflows for the
/// relevant `ε`, so the relation is evaluated with `ln 𝔥 = -√|ln ε|`.
pub fn largest_ln_eps_with_relation(tau: f64, dim: usize, ln_eps_grid: &[f64]) -> Option<f64> {
    let d = dim as f64;
    ln_eps_grid
        .iter()
        .copied()
        .filter(|&le| {
            let x = le.abs();
            let rhs = 2.0 * (2.0 * (1.0 - tau) * x.sqrt()).sqrt() - d * 4f64.ln();
            let ln_a = x * x;
            ln_a <= 1.0 || d * ln_a.ln() <= rhs
        })
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

pub use io::{read_bandwidth_csv, write_bandwidth_csv};

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn net() -> GeometricNet {
        GeometricNet::new((-2.0f64).exp(), DEFAULT_S_MAX).unwrap()
    }

    fn two_box() -> MultiBandwidth {
        MultiBandwidth::new(1.0, net(), vec![vec![-1.0, 0.0, 1.0]], vec![vec![1], vec![4]]).unwrap()
    }

    #[test]
    fn level_sets_examples() {
        let c = MultiBandwidth::constant_isotropic(1.0, 1, net(), 2).unwrap();
        assert_eq!(c.level_set_measure(&[2]), 2.0);
        assert_eq!(c.level_set_measure(&[3]), 0.0);
        assert_eq!(two_box().level_set_measure(&[1]), 1.0);
    }

    #[test]
    fn v_norm_examples() {
        let n = net();
        let h = n.value(3);
        let c = MultiBandwidth::constant_isotropic(0.5, 2, n, 3).unwrap();
        assert_relative_eq!(c.v_norm(1.7), 1.0 / h, max_relative = 1e-12);
        let c1 = MultiBandwidth::constant_isotropic(1.0, 1, n, 3).unwrap();
        assert_relative_eq!(c1.v_norm(2.0), h.powf(-0.5) * 2f64.sqrt(), max_relative = 1e-12);
        let expect = (n.value(1).powf(-1.5) + n.value(4).powf(-1.5)).powf(1.0 / 3.0);
        assert_relative_eq!(two_box().v_norm(3.0), expect, max_relative = 1e-12);
    }

    #[test]
    fn class_functional_examples() {
        let c = MultiBandwidth::constant(0.7, net(), vec![1, 2]).unwrap();
        assert_relative_eq!(class_h_functional(&c, 0.3), 1.4f64.powf(0.6), max_relative = 1e-12);
        assert_relative_eq!(class_h_functional(&two_box(), 0.5), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn from_boxes_refines_and_detects_overlap() {
        let boxes = vec![
            (vec![-1.0, -1.0], vec![0.0, 1.0], vec![1, 1]),
            (vec![0.0, -1.0], vec![1.0, 0.5], vec![2, 0]),
            (vec![0.0, 0.5], vec![1.0, 1.0], vec![1, 1]),
        ];
        let h = MultiBandwidth::from_boxes(1.0, net(), &boxes).unwrap();
        let ls = h.level_sets();
        assert_relative_eq!(ls[&vec![1, 1]], 2.5, max_relative = 1e-12);
        assert_relative_eq!(ls[&vec![2, 0]], 1.5, max_relative = 1e-12);
        assert_eq!(h.index_at(&[0.5, 0.9]), &[1, 1]);
        let bad = vec![
            (vec![-1.0, -1.0], vec![0.5, 1.0], vec![1, 1]),
            (vec![0.0, -1.0], vec![1.0, 1.0], vec![2, 0]),
        ];
        assert!(MultiBandwidth::from_boxes(1.0, net(), &bad).is_err());
        let gap = vec![(vec![-1.0, -1.0], vec![0.5, 1.0], vec![1, 1])];
        assert!(MultiBandwidth::from_boxes(1.0, net(), &gap).is_err());
    }

    #[test]
    fn relation_examples() {
        let base = (-8.0f64).exp();
        let ok = check_param_relation(base, 16.0, 0.5, 1).unwrap();
        assert!(ok.holds);
        assert_relative_eq!(ok.lhs, 16f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(ok.rhs, 4.0 * 2f64.sqrt() - 4f64.ln(), max_relative = 1e-12);
        let bad = check_param_relation(base, 5f64.exp(), 0.5, 1).unwrap();
        assert!(!bad.holds);
        assert_relative_eq!(bad.lhs, 5.0, max_relative = 1e-12);
        assert!(!check_param_relation(base, 20.0, 1.0 - 1e-12, 1).unwrap().holds);
        let weak = check_param_relation(base, 0.5, 0.5, 1).unwrap();
        assert!(weak.holds && weak.warning.is_some());
    }

    #[test]
    fn epsilon_params_examples() {
        let (h, la) = epsilon_driven_params((-4.0f64).exp()).unwrap();
        assert_relative_eq!(h, (-2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(la, 16.0, max_relative = 1e-12);
        let (h, la) = epsilon_driven_params((-9.0f64).exp()).unwrap();
        assert_relative_eq!(h, (-3.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(la, 81.0, max_relative = 1e-12);
        assert!(epsilon_driven_params(0.5).is_err());
    }

    #[test]
    fn relation_threshold_exists_far_out() {
        let grid: Vec<f64> = (1..=400).map(|k| -(k as f64) * 100.0).collect();
        let le = largest_ln_eps_with_relation(0.5, 1, &grid).unwrap();
        assert!(le < -4.0);
        // relation fails at the moderate epsilons used in practice
        assert!(largest_ln_eps_with_relation(0.5, 1, &[-4.0, -9.0, -100.0]).is_none());
    }

    #[test]
    fn r_a_first_element_when_a_is_large() {
        let h = two_box();
        let big = (h.max_v_inv_sqrt() * 2f64.max(1.0)).ln();
        let cp = ClassParams::new(0.5, 10.0, big, 1.5, net().base, 1).unwrap();
        assert_eq!(r_a(&h, &cp, DEFAULT_R_CAP), RaResult::Member(2));
    }

    #[test]
    fn r_a_not_member() {
        let h = MultiBandwidth::constant_isotropic(1.0, 1, net(), 5).unwrap();
        // A equal to the floor h^-1/2 with |domain| = 2 is never reached
        let cp = ClassParams::new(0.5, 10.0, -0.5 * net().base.ln(), 1.0, net().base, 1).unwrap();
        assert_eq!(r_a(&h, &cp, 50), RaResult::NotMember { r_cap: 50 });
    }
}
