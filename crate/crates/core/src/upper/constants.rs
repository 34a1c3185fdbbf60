use super::config::{CmuVariant, UpperFnConfig};
use super::lambda::LambdaProvider;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Profile};
use crate::numerics::{integrate, integrate_to_infinity, normal_abs_moment, rel_diff, unit_sphere_area};
use statrs::function::gamma::ln_gamma;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::{E, PI, SQRT_2};
use std::sync::Mutex;

/// `C_3` by quadrature and by its gamma-function closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C3Value {
    pub value: f64,
    pub quadrature: f64,
    pub closed_form: f64,
    pub rel_diff: f64,
}

/// A truncated series with the index of its last retained term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub sum: f64,
    pub last_index: u32,
}

/// Minimiser of the `C_μ` objective over one half of `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaMin {
    pub omega: f64,
    pub value: f64,
    /// The minimiser sits at an end of the admissible interval.
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CmuValue {
    pub value: f64,
    pub omega1: OmegaMin,
    pub omega2: OmegaMin,
    pub lambda_extrapolated: bool,
}

/// One row of the `C_2` table with its intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C2Entry {
    pub r: u32,
    pub mu: f64,
    pub r_mu: f64,
    pub c_mu: CmuValue,
    pub c_tilde: f64,
    pub c_hat: f64,
    pub value: f64,
}

/// One row of the `C_2*` table with its intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C2StarEntry {
    pub r: u32,
    pub gamma_r: f64,
    pub alpha: f64,
    pub t_star: f64,
    /// Relative gap between closed-form and quadrature radial integrals.
    pub t_star_check: f64,
    pub t: f64,
    pub lambda_d: f64,
    pub lambda_extrapolated: bool,
    pub value: f64,
}

/// Precomputed kernel data and caches for one `(config, kernel)` pair.
pub struct Constants {
    pub cfg: UpperFnConfig,
    pub kernel: Kernel,
    pub lambda: LambdaProvider,
    knorms: Mutex<BTreeMap<u64, f64>>,
    pnorms: Mutex<BTreeMap<u64, f64>>,
    c2: Mutex<BTreeMap<u32, C2Entry>>,
    c2s: Mutex<BTreeMap<u32, C2StarEntry>>,
}

impl std::fmt::Debug for Constants {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Constants")
            .field("cfg", &self.cfg)
            .field("kernel", &self.kernel.name())
            .finish()
    }
}

impl Constants {
    pub fn new(cfg: UpperFnConfig, kernel: Kernel) -> Result<Self> {
        cfg.validate()?;
        if kernel.dim() != cfg.d {
            return Err(Error::Domain(format!(
                "kernel dimension {} differs from d = {}",
                kernel.dim(),
                cfg.d
            )));
        }
        let lambda = LambdaProvider {
            star: cfg.overrides.lambda_star.clone(),
            d: cfg.overrides.lambda_d_star.clone(),
            calibration: cfg.overrides.calibration,
            length: 2.0 * (kernel.support() + cfg.b),
            dim: cfg.d,
        };
        Ok(Self {
            cfg,
            kernel,
            lambda,
            knorms: Mutex::new(BTreeMap::new()),
            pnorms: Mutex::new(BTreeMap::new()),
            c2: Mutex::new(BTreeMap::new()),
            c2s: Mutex::new(BTreeMap::new()),
        })
    }

    fn d(&self) -> f64 {
        self.cfg.d as f64
    }

    /// `‖K‖_m`.
    pub fn kernel_norm(&self, m: f64) -> Result<f64> {
        if let Some(v) = self.knorms.lock().expect("poisoned").get(&m.to_bits()) {
            return Ok(*v);
        }
        let v = self.kernel.norm(m, &self.cfg.tolerances.norm)?.value;
        self.knorms.lock().expect("poisoned").insert(m.to_bits(), v);
        Ok(v)
    }

    pub fn profile(&self) -> Result<&Profile> {
        self.kernel.profile().ok_or_else(|| {
            Error::StructureMismatch(format!("kernel `{}` has no product structure", self.kernel.name()))
        })
    }

    /// `‖𝒦‖_m` of the one-dimensional profile.
    pub fn profile_norm(&self, m: f64) -> Result<f64> {
        let prof = self.profile()?;
        if let Some(v) = self.pnorms.lock().expect("poisoned").get(&m.to_bits()) {
            return Ok(*v);
        }
        let v = prof.norm(m, &self.cfg.tolerances.norm)?.value;
        self.pnorms.lock().expect("poisoned").insert(m.to_bits(), v);
        Ok(v)
    }

    /// `γ_{q+1} = E|N(0,1)|^{q+1}`.
    pub fn gamma_q1(&self) -> f64 {
        normal_abs_moment(self.cfg.q + 1.0)
    }

    /// `C_1 = 2(q∨p) + 2√(2d)[√π + ‖K‖₂(√|ln(4bL‖K‖₂)| + 1)]`.
    pub fn c1(&self) -> Result<f64> {
        let c = &self.cfg;
        let n2 = self.kernel_norm(2.0)?;
        let l = self.kernel.lipschitz();
        Ok(2.0 * c.q.max(c.p)
            + 2.0 * (2.0 * self.d()).sqrt() * (PI.sqrt() + n2 * ((4.0 * c.b * l * n2).ln().abs().sqrt() + 1.0)))
    }

    /// `C_3 = 2^{d/p}[2q̃ ∫_0^∞ z^{q̃−1} exp(−z^{2/p}/(8‖K‖₂²)) dz]^{1/(pq̃)}`.
    pub fn c3(&self) -> Result<C3Value> {
        let p = self.cfg.p;
        let qt = self.cfg.q_tilde();
        let c = 8.0 * self.kernel_norm(2.0)?.powi(2);
        // z = c^{p/2} y removes the scale from the integrand
        let scale = c.powf(p * qt / 2.0);
        let quad = integrate_to_infinity(
            |y: f64| y.powf(qt - 1.0) * (-y.powf(2.0 / p)).exp(),
            0.0,
            self.cfg.tolerances.quad_rel_tol.min(1e-12),
            0.0,
        )
        .value
            * scale;
        let closed = 0.5 * p * scale * ln_gamma(p * qt / 2.0).exp();
        let f = |i: f64| 2f64.powf(self.d() / p) * (2.0 * qt * i).powf(1.0 / (p * qt));
        Ok(C3Value {
            value: f(closed),
            quadrature: f(quad),
            closed_form: f(closed),
            rel_diff: rel_diff(quad, closed),
        })
    }

    /// `C_4 = (γ_{q+1}√(π/2)[1∨(2b)^{qd}] Σ_{r>p} e^{−e^r}[(r√e)^d‖𝒦‖^d_{2r/(r+2)}]^{q/2})^{1/q}`.
    pub fn c4(&self) -> Result<SeriesValue> {
        let (q, d, b) = (self.cfg.q, self.d(), self.cfg.b);
        let r0 = self.cfg.p.floor() as u32 + 1;
        let mut ln_terms: Vec<f64> = Vec::new();
        let mut r = r0;
        loop {
            let rf = r as f64;
            let n = self.profile_norm(2.0 * rf / (rf + 2.0))?;
            let t = -rf.exp() + 0.5 * q * d * (rf.ln() + 0.5 + n.ln());
            let partial = crate::numerics::log_sum_exp(&ln_terms);
            if !ln_terms.is_empty() && t < partial + self.cfg.tolerances.series_rel_tol.ln() {
                break;
            }
            ln_terms.push(t);
            r += 1;
        }
        let sum = crate::numerics::log_sum_exp(&ln_terms).exp();
        let pre = self.gamma_q1() * (PI / 2.0).sqrt() * (2.0 * b).powf(q * d).max(1.0);
        Ok(SeriesValue {
            value: (pre * sum).powf(1.0 / q),
            sum,
            last_index: r - 1,
        })
    }

    /// `σ_* = √(2^{d+1} a^d ‖K‖_∞ ‖K‖₁ 𝐜(d)) (2b)^{d(p−1)/p}`.
    pub fn sigma_star(&self) -> Result<f64> {
        let (d, p, b) = (self.d(), self.cfg.p, self.cfg.b);
        let a = self.kernel.support();
        let inner = 2f64.powf(d + 1.0)
            * a.powf(d)
            * self.kernel_norm(f64::INFINITY)?
            * self.kernel_norm(1.0)?
            * self.cfg.c_d();
        Ok(inner.sqrt() * (2.0 * b).powf(d * (p - 1.0) / p))
    }

    /// `C_5 = [√(8π) σ_*^{q−1} γ_{q+1}]^{1/q} Σ_{r>d} Σ_{l≥1} e^{−2^l e^r}`.
    pub fn c5(&self) -> Result<SeriesValue> {
        let q = self.cfg.q;
        let tol = self.cfg.tolerances.series_rel_tol.ln();
        let mut ln_terms: Vec<f64> = Vec::new();
        let mut r = self.cfg.d as u32 + 1;
        loop {
            let er = (r as f64).exp();
            let first = -2.0 * er;
            if !ln_terms.is_empty() && first < crate::numerics::log_sum_exp(&ln_terms) + tol {
                break;
            }
            let mut l = 1;
            loop {
                let t = -(2f64.powi(l)) * er;
                if l > 1 && t < crate::numerics::log_sum_exp(&ln_terms) + tol {
                    break;
                }
                ln_terms.push(t);
                l += 1;
            }
            r += 1;
        }
        let sum = crate::numerics::log_sum_exp(&ln_terms).exp();
        let pre = ((8.0 * PI).sqrt() * self.sigma_star()?.powf(q - 1.0) * self.gamma_q1()).powf(1.0 / q);
        Ok(SeriesValue {
            value: pre * sum,
            sum,
            last_index: r - 1,
        })
    }

    /// `R_μ = max{½‖𝒦‖_{2μ/(3μ−2)}, ‖𝒦‖₁ + 2[5(4L(a+1))^μ + 4(2‖𝒦‖₁)^μ/(2−μ)]^{1/μ}}`.
    pub fn r_mu(&self, mu: f64) -> Result<f64> {
        let prof = self.profile()?;
        let (l, a) = (prof.lipschitz(), prof.support());
        let n1 = self.profile_norm(1.0)?;
        let nm = self.profile_norm(2.0 * mu / (3.0 * mu - 2.0))?;
        let second = n1 + 2.0 * (5.0 * (4.0 * l * (a + 1.0)).powf(mu) + 4.0 * (2.0 * n1).powf(mu) / (2.0 - mu)).powf(1.0 / mu);
        Ok((0.5 * nm).max(second))
    }

    /// `C_μ = 4√2 ‖𝒦‖₂^{d−1} inf_Ω [√λ*(ω₂,μ) R^{1/(2ω₂)}/(1 − 1/(2ω₂)) + √λ*(ω₁,μ) R^{1/(2ω₁)}/(1/(2ω₁) − 1)]`
    /// over `1/μ − ½ < ω₁ < ½ < ω₂ < 1`. The objective separates, so each
    /// half is minimised on its own.
    pub fn c_mu(&self, mu: f64, r_mu: f64) -> Result<CmuValue> {
        if !(mu > 1.0 && mu < 2.0) {
            return Err(Error::Domain(format!("mu must lie in (1, 2), got {mu}")));
        }
        let variant = self.cfg.cmu_variant;
        let extrap = std::cell::Cell::new(false);
        let err: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let lam = |omega: f64| -> f64 {
            match self.lambda.star(omega, mu) {
                Ok(v) => {
                    if v.extrapolated {
                        extrap.set(true);
                    }
                    v.value
                }
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let term = |omega: f64, factor: f64| -> f64 {
            let base = lam(omega).sqrt() * r_mu.powf(1.0 / (2.0 * omega));
            match variant {
                CmuVariant::Dudley => base / factor,
                CmuVariant::AsPrinted => base * factor,
            }
        };
        let n = self.cfg.tolerances.omega_grid;
        let w2 = minimize_open(|w| term(w, 1.0 - 1.0 / (2.0 * w)), 0.5, 1.0, n);
        let w1 = minimize_open(|w| term(w, 1.0 / (2.0 * w) - 1.0), 1.0 / mu - 0.5, 0.5, n);
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        let pre = 4.0 * SQRT_2 * self.profile_norm(2.0)?.powf(self.d() - 1.0);
        Ok(CmuValue {
            value: pre * (w1.value + w2.value),
            omega1: w1,
            omega2: w2,
            lambda_extrapolated: extrap.get(),
        })
    }

    /// `ln Ĉ_μ`, with
    /// `Ĉ_μ = [r/(1−τ) ∫_0^∞ (u + C̃_μ)^{(r+τ−1)/(1−τ)} exp(−u²/(2‖𝒦‖₂^{d−1}‖𝒦‖_{2μ/(3μ−2)})) du]^{(1−τ)/r}`,
    /// integrated in log space around the peak of the integrand.
    pub fn ln_c_hat(&self, r: u32, c_tilde: f64, width: f64) -> f64 {
        let tau = self.cfg.tau;
        let rf = r as f64;
        let e = (rf + tau - 1.0) / (1.0 - tau);
        let phi = |u: f64| e * (u + c_tilde).ln() - u * u / (2.0 * width);
        let ustar = 0.5 * (-c_tilde + (c_tilde * c_tilde + 4.0 * e * width).sqrt());
        let peak = phi(ustar);
        let g = |u: f64| (phi(u) - peak).exp();
        let tol = self.cfg.tolerances.quad_rel_tol;
        let left = if ustar > 0.0 {
            integrate(g, 0.0, ustar, tol, 0.0, 2000).value
        } else {
            0.0
        };
        let s = width.sqrt();
        let right = integrate_to_infinity(|v| g(ustar + s * v) * s, 0.0, tol, 0.0).value;
        ((1.0 - tau) / rf) * ((rf / (1.0 - tau)).ln() + peak + (left + right).ln())
    }

    /// `C_2(r, τ, 𝓛)` with all intermediates.
    pub fn c2(&self, r: u32) -> Result<C2Entry> {
        if let Some(e) = self.c2.lock().expect("poisoned").get(&r) {
            return Ok(*e);
        }
        let c = &self.cfg;
        if (r as f64) <= c.p {
            return Err(Error::Domain(format!("r = {r} must exceed p = {}", c.p)));
        }
        let (d, b, tau, big_l) = (self.d(), c.b, c.tau, c.big_l);
        let rf = r as f64;
        let mu = c.mu(r);
        let r_mu = self.r_mu(mu)?;
        let c_mu = self.c_mu(mu, r_mu)?;
        let n2 = self.profile_norm(2.0)?;
        let nm = self.profile_norm(2.0 * mu / (3.0 * mu - 2.0))?;
        let width = n2.powf(d - 1.0) * nm;
        let c_tilde = c_mu.value + 4f64.powf(d) * ((2.0 * rf.exp()).sqrt() + (8.0 * PI).sqrt()) * width;
        let c_hat = self.ln_c_hat(r, c_tilde, width).exp();
        let bracket = big_l.powf(1.0 / rf) + big_l.powf(tau / rf) * (1.0 - (-tau * c.p / 4.0).exp()).powf((tau - 1.0) / rf);
        let last = rf.exp() * (2.0 * (1.0 + c.q)).sqrt() * (rf * E.sqrt()).powf(d) * self.profile_norm(2.0 * rf / (rf + 2.0))?.powf(d);
        let value = (2.0 * b).powf(d - 1.0).max(1.0) * bracket * (c_tilde + c_hat) + last;
        let e = C2Entry {
            r,
            mu,
            r_mu,
            c_mu,
            c_tilde,
            c_hat,
            value,
        };
        self.c2.lock().expect("poisoned").insert(r, e);
        Ok(e)
    }

    /// `T*(r)` in closed radial form and the relative gap to quadrature.
    pub fn t_star(&self, r: u32) -> Result<(f64, f64, f64)> {
        let gamma = self.cfg.gamma_r(r);
        let alpha = gamma - gamma.floor();
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Hypothesis(format!("gamma_r = {gamma} is an integer")));
        }
        let (ck, _) = self.kernel.deriv_norm_sup(&self.cfg.tolerances.norm)?;
        let l = self.kernel.smooth_lipschitz().unwrap_or(self.kernel.lipschitz());
        let d = self.d();
        let (inner, outer) = radial_integrals(self.cfg.d, alpha);
        let (qi, qo) = radial_integrals_quadrature(self.cfg.d, alpha);
        let check = rel_diff(inner, qi).max(rel_diff(outer, qo));
        let a = self.kernel.support();
        Ok((2f64.powf(1.0 - d) * (l * (a + 2.0).powf(d) * inner + ck * outer), alpha, check))
    }

    /// `C_2*(r) = 8√(2λ_d*(r)) T(r)^{d/(2γ_r)} (σ_*/2)^{1/(2pr)} + 4√(q e^r) σ_*`.
    pub fn c2_star(&self, r: u32) -> Result<C2StarEntry> {
        if let Some(e) = self.c2s.lock().expect("poisoned").get(&r) {
            return Ok(*e);
        }
        let c = &self.cfg;
        if r as usize <= c.d {
            return Err(Error::Domain(format!("r = {r} must exceed d = {}", c.d)));
        }
        let d = self.d();
        let gamma_r = c.gamma_r(r);
        let (t_star, alpha, t_star_check) = self.t_star(r)?;
        let sigma = self.sigma_star()?;
        let t = (sigma / 2.0).max((d / 2.0 + 1.0).powf(d) * t_star + self.kernel_norm(1.0)? * (2.0 * c.b).powf(1.0 / c.p));
        let lam = self.lambda.d_star(r, gamma_r)?;
        let rf = r as f64;
        let value = 8.0 * (2.0 * lam.value).sqrt() * t.powf(d / (2.0 * gamma_r)) * (sigma / 2.0).powf(1.0 / (2.0 * c.p * rf))
            + 4.0 * (c.q * rf.exp()).sqrt() * sigma;
        let e = C2StarEntry {
            r,
            gamma_r,
            alpha,
            t_star,
            t_star_check,
            t,
            lambda_d: lam.value,
            lambda_extrapolated: lam.extrapolated,
            value,
        };
        self.c2s.lock().expect("poisoned").insert(r, e);
        Ok(e)
    }
}

/// `(∫_{|z|≤1} |z|^{−d−α+1} dz, ∫_{|z|>1} |z|^{−d−α} dz) = (S/(1−α), S/α)`
/// with `S` the area of the unit sphere.
pub fn radial_integrals(d: usize, alpha: f64) -> (f64, f64) {
    let s = unit_sphere_area(d);
    (s / (1.0 - alpha), s / alpha)
}

/// The same integrals by quadrature in polar form, after power
/// substitutions that remove the endpoint singularities.
pub fn radial_integrals_quadrature(d: usize, alpha: f64) -> (f64, f64) {
    let s = unit_sphere_area(d);
    // ∫_0^1 ρ^{−α} dρ with ρ = t^n
    let n = (2.0 / (1.0 - alpha)).ceil();
    let inner = integrate(|t: f64| n * t.powf(n * (1.0 - alpha) - 1.0), 0.0, 1.0, 1e-13, 0.0, 200).value;
    // ∫_1^∞ ρ^{−1−α} dρ with ρ = 1/t, t = s^m
    let m = (2.0 / alpha).ceil();
    let outer = integrate(|t: f64| m * t.powf(m * alpha - 1.0), 0.0, 1.0, 1e-13, 0.0, 200).value;
    (s * inner, s * outer)
}

/// Minimises `f` over the open interval `(lo, hi)`: a grid of `n` cell
/// midpoints, then golden-section search on the bracket around the best
/// grid point. Ties go to the smaller argument.
pub fn minimize_open(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> OmegaMin {
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut k = 0;
    for i in 1..n {
        if vals[i] < vals[k] {
            k = i;
        }
    }
    let (mut a, mut b) = (xs[k] - h, xs[k] + h);
    let edge = 1e-12 * (hi - lo);
    a = a.max(lo + edge);
    b = b.min(hi - edge);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let (mut x, mut v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if !(v <= vals[k]) {
        x = xs[k];
        v = vals[k];
    }
    let tol = 1e-6 * (hi - lo);
    OmegaMin {
        omega: x,
        value: v,
        at_boundary: x - lo < tol || hi - x < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::upper::lambda::LambdaStarSource;

    fn cfg(p: f64, q: f64) -> UpperFnConfig {
        UpperFnConfig::new(p, q, (-4.0f64).exp(), 0.5, 1, (-2.0f64).exp(), 0.5, 2.0, 4.0).unwrap()
    }

    fn triangle() -> Kernel {
        Kernel::from_catalog("triangle", 1).unwrap()
    }

    #[test]
    fn c1_worked_value() {
        let k = Constants::new(cfg(1.0, 1.0), triangle()).unwrap();
        let n2 = (2.0f64 / 3.0).sqrt();
        let want = 2.0 + 2.0 * SQRT_2 * (PI.sqrt() + n2 * ((2.0 * n2).ln().abs().sqrt() + 1.0));
        let got = k.c1().unwrap();
        assert!((got - want).abs() < 1e-9 && (got - 10.94).abs() < 0.005, "{got}");
        let k3 = Constants::new(cfg(1.0, 3.0), triangle()).unwrap();
        assert!((k3.c1().unwrap() - got - 4.0).abs() < 1e-12);
    }

    #[test]
    fn c3_routes_agree() {
        for (p, q) in [(1.0, 1.0), (2.0, 2.0), (1.5, 4.0), (3.0, 1.0)] {
            let k = Constants::new(cfg(p, q), triangle()).unwrap();
            let c = k.c3().unwrap();
            assert!(c.rel_diff < 1e-8, "{p} {q}: {c:?}");
        }
        // p = q = 2: integral is 8‖K‖₂²
        let k = Constants::new(cfg(2.0, 2.0), triangle()).unwrap();
        let i: f64 = 8.0 * 2.0 / 3.0;
        let want = 2f64.powf(0.5) * (2.0 * i).sqrt();
        assert!(rel_diff(k.c3().unwrap().value, want) < 1e-8);
        // p = q = 1: ∫ exp(−z²/(8‖K‖₂²)) = √(2π)‖K‖₂
        let k = Constants::new(cfg(1.0, 1.0), triangle()).unwrap();
        let i = (2.0 * PI).sqrt() * (2.0f64 / 3.0).sqrt();
        assert!(rel_diff(k.c3().unwrap().value, 4.0 * i) < 1e-8);
        let big = Constants::new(cfg(1.0, 1.0), triangle().scaled(2.0)).unwrap();
        assert!(big.c3().unwrap().value > k.c3().unwrap().value);
    }

    #[test]
    fn c4_truncation() {
        let k = Constants::new(cfg(1.0, 1.0), triangle()).unwrap();
        let c = k.c4().unwrap();
        assert!(c.last_index <= 6, "{c:?}");
        assert!(c.value > 0.0 && c.value.is_finite());
    }

    #[test]
    fn c5_and_sigma() {
        let k = Constants::new(cfg(1.0, 1.0), triangle()).unwrap();
        let s = k.sigma_star().unwrap();
        // p = 1: no (2b) factor; ‖K‖∞ = ‖K‖₁ = 1, a = 1
        assert!((s - (4.0f64 * 2.0 * 5f64.sqrt()).sqrt()).abs() < 1e-9);
        let c5 = k.c5().unwrap();
        let lead = (-2.0 * 2f64.exp()).exp();
        assert!(c5.sum >= lead && c5.sum < lead * 1.001);
    }

    #[test]
    fn gamma_r_and_radial_forms() {
        let k = Constants::new(cfg(1.0, 1.0), triangle()).unwrap();
        assert!((k.cfg.gamma_r(2) - 0.75).abs() < 1e-15);
        let (i, o) = radial_integrals(1, 0.75);
        assert!((i - 8.0).abs() < 1e-12 && (o - 2.0 / 0.75).abs() < 1e-12);
        for d in 1..=3 {
            for alpha in [0.1, 0.5, 0.75, 0.95] {
                let (a, b) = radial_integrals(d, alpha);
                let (qa, qb) = radial_integrals_quadrature(d, alpha);
                assert!(rel_diff(a, qa) < 1e-6 && rel_diff(b, qb) < 1e-6);
            }
        }
    }

    #[test]
    fn golden_minimiser() {
        let m = minimize_open(|x| (x - 0.3).powi(2), 0.0, 1.0, 64);
        assert!((m.omega - 0.3).abs() < 1e-7 && !m.at_boundary);
        let m = minimize_open(|x| 1.0 / x, 0.0, 1.0, 64);
        assert!(m.at_boundary && m.omega > 0.999);
    }

    fn constant_lambda() -> UpperFnConfig {
        let mut c = cfg(1.0, 1.0);
        c.overrides.lambda_star = LambdaStarSource::Constant { value: 1.0 };
        c
    }

    #[test]
    fn c2_grid_refinement_and_growth() {
        let mut c = constant_lambda();
        let k = Constants::new(c.clone(), triangle()).unwrap();
        let a = k.c2(2).unwrap();
        c.tolerances.omega_grid = 128;
        let k2 = Constants::new(c, triangle()).unwrap();
        let b = k2.c2(2).unwrap();
        assert!(rel_diff(a.c_mu.value, b.c_mu.value) < 1e-4);
        let table: Vec<f64> = (2..14).map(|r| k.c2(r).unwrap().value).collect();
        assert!(table.windows(2).skip(4).all(|w| w[1] > w[0]));
        let mut bigger = constant_lambda();
        bigger.big_l = 5.0;
        let kb = Constants::new(bigger, triangle()).unwrap();
        assert!(kb.c2(3).unwrap().value > k.c2(3).unwrap().value);
    }

    #[test]
    fn as_printed_variant_collapses_c_mu() {
        let mut c = constant_lambda();
        c.cmu_variant = CmuVariant::AsPrinted;
        let k = Constants::new(c, triangle()).unwrap();
        let e = k.c2(2).unwrap();
        assert!(e.c_mu.value < 1e-6 && e.c_mu.omega2.at_boundary);
    }

    #[test]
    fn product_structure_required() {
        use std::sync::Arc;
        let g = Kernel::generic("g", 1, 1.0, 1.0, Arc::new(|t: &[f64]| (1.0 - t[0].abs()).max(0.0))).unwrap();
        let k = Constants::new(constant_lambda(), g).unwrap();
        assert!(matches!(k.c2(2), Err(Error::StructureMismatch(_))));
        assert!(k.c1().is_ok());
    }
}
