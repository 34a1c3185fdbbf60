//! Compactly supported kernels, their norms and the numerical checks of the
//! three kernel assumptions (Lipschitz kernel, Lipschitz derivatives,
//! product structure).
//!
//! A [`Profile`] is a univariate function `𝒦: R → R` with support
//! `[-a, a]`; a [`Kernel`] is a function on `R^d`, optionally carrying the
//! profile it factorizes over. Norms are computed by the composite midpoint
//! rule with a halving convergence gate.

use crate::error::{Error, Result};
use crate::numerics::rel_diff;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub type UniFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type MultiFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Relative tolerance used when comparing an estimated Lipschitz constant
/// against the declared one.
pub const LIPSCHITZ_TOL: f64 = 1e-3;

/// Univariate compactly supported profile.
#[derive(Clone)]
pub struct Profile {
    name: String,
    support: f64,
    lipschitz: f64,
    /// Highest derivative order `k` for which `𝒦^{(k)}` is Lipschitz.
    smoothness: usize,
    value: UniFn,
    /// Analytic derivatives, `derivs[k - 1]` is the `k`-th derivative.
    derivs: Vec<UniFn>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("lipschitz", &self.lipschitz)
            .field("smoothness", &self.smoothness)
            .field("analytic_derivatives", &self.derivs.len())
            .finish()
    }
}

fn inside(t: f64, a: f64) -> bool {
    t.abs() <= a
}

macro_rules! supported {
    ($a:expr, |$t:ident| $body:expr) => {{
        let a: f64 = $a;
        Arc::new(move |$t: f64| if inside($t, a) { $body } else { 0.0 }) as UniFn
    }};
}

/// `∫ exp(-1/(1-t²)) dt` over `(-1, 1)`.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

impl Profile {
    pub fn new(name: impl Into<String>, support: f64, lipschitz: f64, value: UniFn) -> Result<Self> {
        if !(support > 0.0 && support.is_finite()) {
            return Err(Error::InvalidKernel(format!("support radius must be positive, got {support}")));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidKernel(format!("Lipschitz constant must be positive, got {lipschitz}")));
        }
        let a = support;
        let inner = value;
        let value: UniFn = Arc::new(move |t| if inside(t, a) { inner(t) } else { 0.0 });
        Ok(Self {
            name: name.into(),
            support,
            lipschitz,
            smoothness: 0,
            value,
            derivs: Vec::new(),
        })
    }

    /// Attaches analytic derivatives and the order up to which they are
    /// Lipschitz on the whole line.
    pub fn with_derivatives(mut self, derivs: Vec<UniFn>, smoothness: usize) -> Self {
        let a = self.support;
        self.derivs = derivs
            .into_iter()
            .map(|d| Arc::new(move |t: f64| if inside(t, a) { d(t) } else { 0.0 }) as UniFn)
            .collect();
        self.smoothness = smoothness.min(self.derivs.len());
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    /// Replaces the declared Lipschitz constant by a dense chord scan.
    pub fn with_scanned_lipschitz(self, density: usize) -> Self {
        let l = scan_slope_1d(&*self.value, self.support, density).0;
        self.with_lipschitz(l * (1.0 + 1e-9))
    }

    /// `(1 - |t|)_+`
    pub fn triangle() -> Self {
        Self {
            name: "triangle".into(),
            support: 1.0,
            lipschitz: 1.0,
            smoothness: 0,
            value: supported!(1.0, |t| 1.0 - t.abs()),
            derivs: vec![supported!(1.0, |t| if t > 0.0 { -1.0 } else if t < 0.0 { 1.0 } else { 0.0 })],
        }
    }

    /// `¾ (1 - t²)_+`
    pub fn epanechnikov() -> Self {
        Self {
            name: "epanechnikov".into(),
            support: 1.0,
            lipschitz: 1.5,
            smoothness: 0,
            value: supported!(1.0, |t| 0.75 * (1.0 - t * t)),
            derivs: vec![
                supported!(1.0, |t| -1.5 * t),
                supported!(1.0, |_t| -1.5),
                supported!(1.0, |_t| 0.0),
            ],
        }
    }

    /// `15/16 (1 - t²)²_+`
    pub fn quartic() -> Self {
        Self {
            name: "quartic".into(),
            support: 1.0,
            lipschitz: 2.5 / 3f64.sqrt(),
            smoothness: 1,
            value: supported!(1.0, |t| {
                let u = 1.0 - t * t;
                15.0 / 16.0 * u * u
            }),
            derivs: vec![
                supported!(1.0, |t| -3.75 * t * (1.0 - t * t)),
                supported!(1.0, |t| -3.75 * (1.0 - 3.0 * t * t)),
                supported!(1.0, |t| 22.5 * t),
            ],
        }
    }

    /// `35/32 (1 - t²)³_+`
    pub fn triweight() -> Self {
        // sup |𝒦'| is attained at t = 1/√5
        let t0 = 1.0 / 5f64.sqrt();
        let l = 105.0 / 16.0 * t0 * (1.0 - t0 * t0).powi(2);
        Self {
            name: "triweight".into(),
            support: 1.0,
            lipschitz: l,
            smoothness: 2,
            value: supported!(1.0, |t| {
                let u = 1.0 - t * t;
                35.0 / 32.0 * u * u * u
            }),
            derivs: vec![
                supported!(1.0, |t| {
                    let u = 1.0 - t * t;
                    -105.0 / 16.0 * t * u * u
                }),
                supported!(1.0, |t| -105.0 / 16.0 * (1.0 - t * t) * (1.0 - 5.0 * t * t)),
                supported!(1.0, |t| 105.0 / 4.0 * (3.0 * t - 5.0 * t * t * t)),
            ],
        }
    }

    /// Unit-mass C^∞ bump `exp(-1/(1-t²)) / BUMP_MASS` on `(-1, 1)`.
    pub fn bump() -> Self {
        fn g1(t: f64) -> f64 {
            let u = 1.0 - t * t;
            -2.0 * t / (u * u)
        }
        fn g2(t: f64) -> f64 {
            let u = 1.0 - t * t;
            -2.0 / (u * u) - 8.0 * t * t / (u * u * u)
        }
        fn g3(t: f64) -> f64 {
            let u = 1.0 - t * t;
            -24.0 * t / (u * u * u) - 48.0 * t * t * t / (u * u * u * u)
        }
        fn base(t: f64) -> f64 {
            if t.abs() >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - t * t)).exp() / BUMP_MASS
            }
        }
        let value: UniFn = Arc::new(base);
        let d1: UniFn = Arc::new(|t| if t.abs() >= 1.0 { 0.0 } else { g1(t) * base(t) });
        let d2: UniFn = Arc::new(|t| {
            if t.abs() >= 1.0 {
                0.0
            } else {
                (g2(t) + g1(t) * g1(t)) * base(t)
            }
        });
        let d3: UniFn = Arc::new(|t| {
            if t.abs() >= 1.0 {
                0.0
            } else {
                let (a, b, c) = (g1(t), g2(t), g3(t));
                (c + 3.0 * a * b + a * a * a) * base(t)
            }
        });
        let l = scan_sup_1d(&*d1, 1.0, 1 << 16) * (1.0 + 1e-4);
        Self {
            name: "bump".into(),
            support: 1.0,
            lipschitz: l,
            smoothness: 3,
            value,
            derivs: vec![d1, d2, d3],
        }
    }

    /// Piecewise-linear profile through `(t, value)` rows, zero outside the
    /// tabulated range. End values must vanish so the zero extension stays
    /// Lipschitz.
    pub fn tabulated(name: impl Into<String>, rows: &[(f64, f64)]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidKernel("tabulated kernel needs at least two rows".into()));
        }
        let mut rows = rows.to_vec();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.iter().any(|r| !r.0.is_finite() || !r.1.is_finite()) {
            return Err(Error::InvalidKernel("non-finite tabulated value".into()));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidKernel("tabulated abscissae must be distinct".into()));
        }
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        if first.1.abs() > 1e-12 || last.1.abs() > 1e-12 {
            return Err(Error::InvalidKernel(
                "tabulated kernel must vanish at both ends of its table".into(),
            ));
        }
        let support = first.0.abs().max(last.0.abs());
        let slope = rows
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        let table = Arc::new(rows);
        let t2 = table.clone();
        let value: UniFn = Arc::new(move |t| interpolate(&t2, t));
        Profile::new(name, support, slope.max(f64::MIN_POSITIVE), value)
    }

    /// Catalog lookup: `triangle`, `epanechnikov`, `quartic`, `triweight`,
    /// `bump`, or `w_ell:<name>:<ℓ>`.
    pub fn from_catalog(name: &str) -> Result<Self> {
        if let Some(rest) = name.strip_prefix("w_ell:") {
            let (base, ell) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::Parse(format!("expected w_ell:<name>:<ell>, got {name}")))?;
            let ell: usize = ell
                .parse()
                .map_err(|_| Error::Parse(format!("bad ell in {name}")))?;
            return Profile::from_catalog(base)?.w_ell(ell);
        }
        match name {
            "triangle" => Ok(Self::triangle()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            "quartic" => Ok(Self::quartic()),
            "triweight" => Ok(Self::triweight()),
            "bump" => Ok(Self::bump()),
            other => Err(Error::Parse(format!("unknown kernel `{other}`"))),
        }
    }

    /// `w_ℓ(y) = Σ_{i=1}^ℓ C(ℓ,i) (-1)^{i+1} i^{-1} w(y/i)`.
    ///
    /// Support grows to `ℓ·a`; the declared Lipschitz constant is the
    /// triangle-inequality bound `L_w Σ C(ℓ,i) / i²`.
    pub fn w_ell(&self, ell: usize) -> Result<Self> {
        if ell < 1 {
            return Err(Error::Domain("w_ell requires ell >= 1".into()));
        }
        let coeffs: Vec<(f64, f64)> = (1..=ell)
            .map(|i| {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                (i as f64, sign * binomial(ell, i) / i as f64)
            })
            .collect();
        let lip = self.lipschitz
            * (1..=ell)
                .map(|i| binomial(ell, i) / (i * i) as f64)
                .sum::<f64>();
        let combine = |f: &UniFn, extra: i32| -> UniFn {
            let f = f.clone();
            let coeffs = coeffs.clone();
            Arc::new(move |y| {
                coeffs
                    .iter()
                    .map(|&(i, c)| c * i.powi(-extra) * f(y / i))
                    .sum()
            })
        };
        let value = combine(&self.value, 0);
        let derivs = self
            .derivs
            .iter()
            .enumerate()
            .map(|(k, d)| combine(d, k as i32 + 1))
            .collect();
        let name = format!("w_ell:{}:{}", self.name, ell);
        Ok(Profile::new(name, self.support * ell as f64, lip, value)?
            .with_derivatives(derivs, self.smoothness))
    }

    /// `c·𝒦`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.value.clone();
        let derivs = self
            .derivs
            .iter()
            .map(|d| {
                let d = d.clone();
                Arc::new(move |t| c * d(t)) as UniFn
            })
            .collect();
        Self {
            name: format!("{}*{}", c, self.name),
            support: self.support,
            lipschitz: (self.lipschitz * c.abs()).max(f64::MIN_POSITIVE),
            smoothness: self.smoothness,
            value: Arc::new(move |t| c * f(t)),
            derivs,
        }
    }

    /// `α·self + β·other`.
    pub fn combine(&self, alpha: f64, other: &Profile, beta: f64) -> Self {
        let (f, g) = (self.value.clone(), other.value.clone());
        let n = self.derivs.len().min(other.derivs.len());
        let derivs = (0..n)
            .map(|k| {
                let (df, dg) = (self.derivs[k].clone(), other.derivs[k].clone());
                Arc::new(move |t| alpha * df(t) + beta * dg(t)) as UniFn
            })
            .collect();
        Self {
            name: format!("{}*{}+{}*{}", alpha, self.name, beta, other.name),
            support: self.support.max(other.support),
            lipschitz: alpha.abs() * self.lipschitz + beta.abs() * other.lipschitz,
            smoothness: self.smoothness.min(other.smoothness).min(n),
            value: Arc::new(move |t| alpha * f(t) + beta * g(t)),
            derivs,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn support(&self) -> f64 {
        self.support
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn smoothness(&self) -> usize {
        self.smoothness
    }
    pub fn eval(&self, t: f64) -> f64 {
        (self.value)(t)
    }
    pub fn function(&self) -> &UniFn {
        &self.value
    }
    /// `k`-th analytic derivative, `k >= 1`.
    pub fn derivative(&self, k: usize) -> Option<&UniFn> {
        if k == 0 {
            Some(&self.value)
        } else {
            self.derivs.get(k - 1)
        }
    }

    /// `(∫|𝒦|^m)^{1/m}` (or the sup for `m = ∞`) with the convergence gate.
    pub fn norm(&self, m: f64, opts: &NormOptions) -> Result<NormValue> {
        gated_norm_1d(&*self.value, self.support, m, opts)
    }
}

fn interpolate(rows: &[(f64, f64)], t: f64) -> f64 {
    if t < rows[0].0 || t > rows[rows.len() - 1].0 {
        return 0.0;
    }
    let idx = rows.partition_point(|r| r.0 <= t);
    if idx == 0 {
        return rows[0].1;
    }
    if idx >= rows.len() {
        return rows[rows.len() - 1].1;
    }
    let (t0, v0) = rows[idx - 1];
    let (t1, v1) = rows[idx];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn scan_sup_1d(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, density: usize) -> f64 {
    (0..=density)
        .map(|i| f(-a + 2.0 * a * i as f64 / density as f64).abs())
        .fold(0.0, f64::max)
}

/// Maximum chord slope over adjacent nodes of an endpoint grid on
/// `[-1.1a, 1.1a]`, plus the pair realizing it.
fn scan_slope_1d(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, density: usize) -> (f64, f64, f64) {
    let lo = -1.1 * a;
    let h = 2.2 * a / density as f64;
    let mut best = (0.0, lo, lo + h);
    let mut prev = f(lo);
    for i in 1..=density {
        let t = lo + h * i as f64;
        let v = f(t);
        let s = (v - prev).abs() / h;
        if s > best.0 {
            best = (s, t - h, t);
        }
        prev = v;
    }
    best
}

/// Kernel structure: which assumptions the kernel can be checked against.
#[derive(Clone)]
pub enum Structure {
    Generic,
    Product(Profile),
    /// Analytic partial derivatives keyed by multi-index.
    Smooth(BTreeMap<Vec<u32>, MultiFn>),
}

impl fmt::Debug for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Structure::Generic => write!(f, "Generic"),
            Structure::Product(p) => write!(f, "Product({})", p.name()),
            Structure::Smooth(m) => write!(f, "Smooth({} derivatives)", m.len()),
        }
    }
}

/// Kernel on `R^d` with support in `[-a, a]^d`.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    dim: usize,
    support: f64,
    lipschitz: f64,
    smooth_lipschitz: Option<f64>,
    value: MultiFn,
    structure: Structure,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("lipschitz", &self.lipschitz)
            .field("smooth_lipschitz", &self.smooth_lipschitz)
            .field("structure", &self.structure)
            .finish()
    }
}

impl Kernel {
    /// Product kernel `K(t) = ∏ 𝒦(t_j)`.
    ///
    /// The Euclidean Lipschitz constant is `√d · L_𝒦 · sup|𝒦|^{d-1}`. When
    /// the profile is smooth enough, a Lipschitz bound for every `D^n K`
    /// with `|n| <= ⌊d/2⌋ + 1` is derived from sups of the analytic
    /// profile derivatives.
    pub fn product(profile: Profile, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        let a = profile.support;
        let s0 = scan_sup_1d(&*profile.value, a, 1 << 14) * (1.0 + 1e-6);
        let lipschitz = (dim as f64).sqrt() * profile.lipschitz * s0.powi(dim as i32 - 1);
        let need = dim / 2 + 1;
        let smooth_lipschitz = if profile.smoothness >= need && profile.derivs.len() > need {
            let sups: Vec<f64> = (0..=need + 1)
                .map(|k| scan_sup_1d(&**profile.derivative(k).unwrap(), a, 1 << 14) * (1.0 + 1e-4))
                .collect();
            let mut worst: f64 = 0.0;
            for n in multi_indices(dim, need) {
                let grad2: f64 = (0..dim)
                    .map(|j| {
                        let g: f64 = (0..dim)
                            .map(|i| if i == j { sups[n[i] as usize + 1] } else { sups[n[i] as usize] })
                            .product();
                        g * g
                    })
                    .sum();
                worst = worst.max(grad2.sqrt());
            }
            Some(worst.max(lipschitz))
        } else {
            None
        };
        let p = profile.clone();
        let value: MultiFn = Arc::new(move |t: &[f64]| {
            let mut acc = 1.0;
            for &x in t {
                let v = p.eval(x);
                if v == 0.0 {
                    return 0.0;
                }
                acc *= v;
            }
            acc
        });
        let name = if dim == 1 {
            profile.name.clone()
        } else {
            format!("{}^{}", profile.name, dim)
        };
        Ok(Self {
            name,
            dim,
            support: a,
            lipschitz,
            smooth_lipschitz,
            value,
            structure: Structure::Product(profile),
        })
    }

    /// Catalog kernel in product form.
    pub fn from_catalog(name: &str, dim: usize) -> Result<Self> {
        Kernel::product(Profile::from_catalog(name)?, dim)
    }

    /// Kernel given only by its evaluator.
    pub fn generic(name: impl Into<String>, dim: usize, support: f64, lipschitz: f64, value: MultiFn) -> Result<Self> {
        if dim == 0 || !(support > 0.0) || !(lipschitz > 0.0) {
            return Err(Error::InvalidKernel("dimension, support and Lipschitz constant must be positive".into()));
        }
        let a = support;
        let inner = value;
        let value: MultiFn = Arc::new(move |t: &[f64]| {
            if t.iter().any(|x| x.abs() > a) {
                0.0
            } else {
                inner(t)
            }
        });
        Ok(Self {
            name: name.into(),
            dim,
            support,
            lipschitz,
            smooth_lipschitz: None,
            value,
            structure: Structure::Generic,
        })
    }

    /// Kernel with analytic partial derivatives `D^n K` and a declared
    /// Lipschitz bound valid for all of them.
    pub fn smooth(
        name: impl Into<String>,
        dim: usize,
        support: f64,
        lipschitz: f64,
        value: MultiFn,
        derivatives: BTreeMap<Vec<u32>, MultiFn>,
    ) -> Result<Self> {
        let mut k = Kernel::generic(name, dim, support, lipschitz, value)?;
        k.smooth_lipschitz = Some(lipschitz);
        k.structure = Structure::Smooth(derivatives);
        Ok(k)
    }

    /// Same kernel with a product evaluator that may differ from the profile
    /// (used to exercise the product-structure check).
    pub fn with_evaluator(mut self, value: MultiFn) -> Self {
        self.value = value;
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn support(&self) -> f64 {
        self.support
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    /// Lipschitz constant covering `D^n K`, `|n| <= ⌊d/2⌋ + 1`, when known.
    pub fn smooth_lipschitz(&self) -> Option<f64> {
        self.smooth_lipschitz
    }
    pub fn structure(&self) -> &Structure {
        &self.structure
    }
    pub fn profile(&self) -> Option<&Profile> {
        match &self.structure {
            Structure::Product(p) => Some(p),
            _ => None,
        }
    }
    pub fn eval(&self, t: &[f64]) -> f64 {
        (self.value)(t)
    }
    pub fn evaluator(&self) -> &MultiFn {
        &self.value
    }

    /// `c·K`.
    pub fn scaled(&self, c: f64) -> Self {
        match &self.structure {
            Structure::Product(p) if self.dim == 1 => Kernel::product(p.scaled(c), 1).expect("valid"),
            _ => {
                let f = self.value.clone();
                let mut k = self.clone();
                k.value = Arc::new(move |t: &[f64]| c * f(t));
                k.lipschitz = (self.lipschitz * c.abs()).max(f64::MIN_POSITIVE);
                k.structure = Structure::Generic;
                k.name = format!("{}*{}", c, self.name);
                k
            }
        }
    }

    /// Evaluator for `D^n K` and whether it is a finite-difference
    /// approximation. `None` when the structure carries no derivative
    /// information.
    pub fn derivative(&self, n: &[u32]) -> Option<(MultiFn, bool)> {
        if n.iter().all(|&k| k == 0) {
            return Some((self.value.clone(), false));
        }
        match &self.structure {
            Structure::Generic => None,
            Structure::Smooth(map) => map.get(n).map(|f| (f.clone(), false)),
            Structure::Product(p) => {
                let analytic = n.iter().all(|&k| p.derivative(k as usize).is_some());
                if analytic {
                    let fs: Vec<UniFn> = n.iter().map(|&k| p.derivative(k as usize).unwrap().clone()).collect();
                    Some((
                        Arc::new(move |t: &[f64]| t.iter().zip(&fs).map(|(x, f)| f(*x)).product()),
                        false,
                    ))
                } else {
                    let step = 1e-5 * p.support();
                    let base = p.function().clone();
                    let fs: Vec<UniFn> = n
                        .iter()
                        .map(|&k| finite_difference(base.clone(), k as usize, step))
                        .collect();
                    Some((
                        Arc::new(move |t: &[f64]| t.iter().zip(&fs).map(|(x, f)| f(*x)).product()),
                        true,
                    ))
                }
            }
        }
    }

    /// `‖K‖_m`; product kernels factor as `‖𝒦‖_m^d`.
    pub fn norm(&self, m: f64, opts: &NormOptions) -> Result<NormValue> {
        if let Structure::Product(p) = &self.structure {
            let one = p.norm(m, opts)?;
            return Ok(NormValue {
                value: one.value.powi(self.dim as i32),
                ..one
            });
        }
        norm_nd(&*self.value, self.dim, self.support, m, opts)
    }

    /// `C(K) = sup_{|n| = ⌊d/2⌋} ‖D^n K‖_1`.
    pub fn deriv_norm_sup(&self, opts: &NormOptions) -> Result<(f64, bool)> {
        let order = self.dim / 2;
        let mut best: f64 = 0.0;
        let mut approx = false;
        for n in multi_indices(self.dim, order).into_iter().filter(|n| n.iter().sum::<u32>() as usize == order) {
            let (f, fd) = self.derivative(&n).ok_or_else(|| {
                Error::StructureMismatch(format!("no derivative evaluator for multi-index {n:?}"))
            })?;
            approx |= fd;
            let v = if let (Structure::Product(p), false) = (&self.structure, fd) {
                let mut acc = 1.0;
                for &k in &n {
                    let g = p.derivative(k as usize).unwrap();
                    acc *= gated_norm_1d(&**g, p.support(), 1.0, opts)?.value;
                }
                acc
            } else {
                norm_nd(&*f, self.dim, self.support, 1.0, opts)?.value
            };
            best = best.max(v);
        }
        Ok((best, approx))
    }
}

fn finite_difference(f: UniFn, order: usize, h: f64) -> UniFn {
    match order {
        0 => f,
        _ => {
            let inner = finite_difference(f, order - 1, h);
            Arc::new(move |t| (inner(t + h) - inner(t - h)) / (2.0 * h))
        }
    }
}

/// All multi-indices in `N^d` with `|n| <= order`, lexicographic.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    fn rec(pos: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[pos] = k as u32;
            rec(pos + 1, left - k, cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, order, &mut cur, &mut out);
    out
}

/// Quadrature controls for kernel norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct NormOptions {
    /// Midpoint step as a fraction of the support radius (`a / 512` by default).
    pub step_fraction: f64,
    /// Relative change allowed between two consecutive halvings.
    pub gate_tol: f64,
    /// Maximum number of halvings before giving up.
    pub max_halvings: u32,
    /// Probe nodes per axis for sup norms.
    pub probe_density: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            step_fraction: 1.0 / 512.0,
            gate_tol: 1e-9,
            max_halvings: 10,
            probe_density: 1024,
        }
    }
}

impl NormOptions {
    pub fn halved(&self) -> Self {
        Self {
            step_fraction: self.step_fraction / 2.0,
            ..*self
        }
    }
}

/// A gated norm value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormValue {
    pub value: f64,
    /// Step at which the gate was met.
    pub step: f64,
    pub halvings: u32,
    pub converged: bool,
}

fn midpoint_1d(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, m: f64, cells: usize) -> Result<f64> {
    let h = 2.0 * a / cells as f64;
    let mut acc = 0.0;
    for i in 0..cells {
        let v = f(-a + (i as f64 + 0.5) * h);
        if !v.is_finite() {
            return Err(Error::InvalidKernel(format!("non-finite value at t = {}", -a + (i as f64 + 0.5) * h)));
        }
        acc += v.abs().powf(m);
    }
    Ok((acc * h).powf(1.0 / m))
}

fn sup_grid_1d(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, density: usize) -> Result<f64> {
    let density = density + density % 2;
    let mut best: f64 = 0.0;
    for i in 0..=density {
        let v = f(-a + 2.0 * a * i as f64 / density as f64);
        if !v.is_finite() {
            return Err(Error::InvalidKernel("non-finite kernel value".into()));
        }
        best = best.max(v.abs());
    }
    Ok(best)
}

fn gated_norm_1d(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, m: f64, opts: &NormOptions) -> Result<NormValue> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("norm exponent must be >= 1, got {m}")));
    }
    if m.is_infinite() {
        let v = sup_grid_1d(f, a, opts.probe_density)?;
        return Ok(NormValue {
            value: v,
            step: 2.0 * a / opts.probe_density as f64,
            halvings: 0,
            converged: true,
        });
    }
    let mut cells = ((2.0 / opts.step_fraction).round() as usize).max(2);
    let mut prev = midpoint_1d(f, a, m, cells)?;
    for k in 1..=opts.max_halvings {
        cells *= 2;
        let cur = midpoint_1d(f, a, m, cells)?;
        if rel_diff(cur, prev) < opts.gate_tol {
            return Ok(NormValue {
                value: cur,
                step: 2.0 * a / cells as f64,
                halvings: k,
                converged: true,
            });
        }
        prev = cur;
    }
    Ok(NormValue {
        value: prev,
        step: 2.0 * a / cells as f64,
        halvings: opts.max_halvings,
        converged: false,
    })
}

fn midpoint_nd(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), dim: usize, a: f64, m: f64, cells: usize) -> Result<f64> {
    let h = 2.0 * a / cells as f64;
    let total = cells.pow(dim as u32);
    let mut t = vec![0.0; dim];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut r = idx;
        for x in t.iter_mut() {
            *x = -a + ((r % cells) as f64 + 0.5) * h;
            r /= cells;
        }
        let v = f(&t);
        if !v.is_finite() {
            return Err(Error::InvalidKernel(format!("non-finite value at {t:?}")));
        }
        if m.is_infinite() {
            acc = f64::max(acc, v.abs());
        } else {
            acc += v.abs().powf(m);
        }
    }
    if m.is_infinite() {
        Ok(acc)
    } else {
        Ok((acc * h.powi(dim as i32)).powf(1.0 / m))
    }
}

fn norm_nd(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), dim: usize, a: f64, m: f64, opts: &NormOptions) -> Result<NormValue> {
    if dim == 1 {
        return gated_norm_1d(&|t: f64| f(&[t]), a, m, opts);
    }
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("norm exponent must be >= 1, got {m}")));
    }
    // multi-d midpoint grids are expensive; cap at 2^24 nodes and relax the gate
    let cap: usize = 1 << 24;
    let gate = opts.gate_tol.max(1e-6);
    let mut cells = ((2.0 / opts.step_fraction).round() as usize).clamp(2, 256);
    if m.is_infinite() {
        let v = midpoint_nd(f, dim, a, m, cells.max(opts.probe_density.min(512)))?;
        return Ok(NormValue {
            value: v,
            step: 2.0 * a / cells as f64,
            halvings: 0,
            converged: true,
        });
    }
    let mut prev = midpoint_nd(f, dim, a, m, cells)?;
    let mut halvings = 0;
    while (cells * 2).pow(dim as u32) <= cap {
        cells *= 2;
        halvings += 1;
        let cur = midpoint_nd(f, dim, a, m, cells)?;
        if rel_diff(cur, prev) < gate {
            return Ok(NormValue {
                value: cur,
                step: 2.0 * a / cells as f64,
                halvings,
                converged: true,
            });
        }
        prev = cur;
    }
    Ok(NormValue {
        value: prev,
        step: 2.0 * a / cells as f64,
        halvings,
        converged: false,
    })
}

/// Free-function form of [`Kernel::norm`].
pub fn kernel_norm(k: &Kernel, m: f64, opts: &NormOptions) -> Result<f64> {
    Ok(k.norm(m, opts)?.value)
}

/// Cached table of kernel norms plus `C(K)`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelNorms {
    /// `(exponent, norm)` pairs; `f64::INFINITY` encodes the sup norm.
    pub table: Vec<(f64, f64)>,
    pub deriv_norm_sup: Option<f64>,
    pub deriv_norm_approximate: bool,
    pub quadrature_step: f64,
}

impl KernelNorms {
    /// Computes `‖K‖_m` for the requested exponents (always including
    /// 1, 2 and ∞) and `C(K)` when derivative information is available.
    pub fn compute(k: &Kernel, exponents: &[f64], opts: &NormOptions) -> Result<Self> {
        let mut exps: Vec<f64> = vec![1.0, 2.0, f64::INFINITY];
        exps.extend_from_slice(exponents);
        exps.sort_by(|a, b| a.total_cmp(b));
        exps.dedup();
        let mut table = Vec::with_capacity(exps.len());
        for m in exps {
            table.push((m, k.norm(m, opts)?.value));
        }
        let (deriv_norm_sup, approx) = match k.deriv_norm_sup(opts) {
            Ok((v, a)) => (Some(v), a),
            Err(_) => (None, false),
        };
        Ok(Self {
            table,
            deriv_norm_sup,
            deriv_norm_approximate: approx,
            quadrature_step: opts.step_fraction * k.support(),
        })
    }

    pub fn get(&self, m: f64) -> Option<f64> {
        self.table.iter().find(|(e, _)| *e == m).map(|(_, v)| *v)
    }
}

/// Which kernel assumption to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum AssumptionLevel {
    /// Support in `[-a, a]^d` and `K` Lipschitz.
    A1,
    /// Support and `D^n K` Lipschitz for `|n| <= ⌊d/2⌋ + 1`.
    A2,
    /// Product structure with a Lipschitz profile.
    A3,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub level: AssumptionLevel,
    pub pass: bool,
    pub support_ok: bool,
    pub product_ok: bool,
    pub declared_lipschitz: f64,
    pub estimated_lipschitz: f64,
    pub worst_pair: (Vec<f64>, Vec<f64>),
    /// Derivatives were approximated by finite differences.
    pub approximate: bool,
}

/// Probe controls for assumption checks.
#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub density: usize,
    pub tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            density: 1024,
            tol: LIPSCHITZ_TOL,
        }
    }
}

fn probe_density(dim: usize, density: usize) -> usize {
    match dim {
        1 => density,
        2 => density.min(384),
        _ => density.min(48),
    }
}

/// Max chord slope of `f` over axis-adjacent nodes of a grid on
/// `[-1.1a, 1.1a]^d`, together with the worst pair.
fn scan_slope_nd(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), dim: usize, a: f64, density: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let n = density + 1;
    let lo = -1.1 * a;
    let h = 2.2 * a / density as f64;
    let total = n.pow(dim as u32);
    let mut vals = Vec::with_capacity(total);
    let mut t = vec![0.0; dim];
    for idx in 0..total {
        let mut r = idx;
        for x in t.iter_mut() {
            *x = lo + (r % n) as f64 * h;
            r /= n;
        }
        vals.push(f(&t));
    }
    let mut best = (0.0, vec![lo; dim], vec![lo; dim]);
    let coords = |idx: usize| -> Vec<f64> {
        let mut r = idx;
        (0..dim)
            .map(|_| {
                let v = lo + (r % n) as f64 * h;
                r /= n;
                v
            })
            .collect()
    };
    for idx in 0..total {
        let mut stride = 1;
        let mut r = idx;
        for _ in 0..dim {
            if r % n + 1 < n {
                let s = (vals[idx + stride] - vals[idx]).abs() / h;
                if s > best.0 {
                    best = (s, coords(idx), coords(idx + stride));
                }
            }
            r /= n;
            stride *= n;
        }
    }
    best
}

fn support_ok(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), dim: usize, a: f64, density: usize) -> Result<bool> {
    let n = density + 1;
    let lo = -1.5 * a;
    let h = 3.0 * a / density as f64;
    let mut t = vec![0.0; dim];
    for idx in 0..n.pow(dim as u32) {
        let mut r = idx;
        for x in t.iter_mut() {
            *x = lo + (r % n) as f64 * h;
            r /= n;
        }
        let v = f(&t);
        if !v.is_finite() {
            return Err(Error::InvalidKernel(format!("non-finite value at {t:?}")));
        }
        if t.iter().any(|x| x.abs() > a * (1.0 + 1e-12)) && v != 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Numerical check of a kernel assumption.
pub fn check_assumptions(k: &Kernel, level: AssumptionLevel, opts: &ProbeOptions) -> Result<AssumptionReport> {
    let d = k.dim();
    let a = k.support();
    let density = probe_density(d, opts.density);
    let sup_ok = support_ok(&**k.evaluator(), d, a, density.min(if d == 1 { 4096 } else { 96 }))?;
    match level {
        AssumptionLevel::A1 => {
            let (l, p, q) = scan_slope_nd(&**k.evaluator(), d, a, density);
            Ok(AssumptionReport {
                level,
                pass: sup_ok && l <= k.lipschitz() * (1.0 + opts.tol),
                support_ok: sup_ok,
                product_ok: true,
                declared_lipschitz: k.lipschitz(),
                estimated_lipschitz: l,
                worst_pair: (p, q),
                approximate: false,
            })
        }
        AssumptionLevel::A3 => {
            let profile = k.profile().ok_or_else(|| {
                Error::StructureMismatch(format!("kernel `{}` has no product structure", k.name()))
            })?;
            let (l, p, q) = scan_slope_1d(&**profile.function(), profile.support(), opts.density);
            // factorization on a probe grid
            let n = probe_density(d, 64) + 1;
            let lo = -1.2 * a;
            let h = 2.4 * a / (n - 1) as f64;
            let mut product_ok = true;
            let mut t = vec![0.0; d];
            for idx in 0..n.pow(d as u32) {
                let mut r = idx;
                for x in t.iter_mut() {
                    *x = lo + (r % n) as f64 * h;
                    r /= n;
                }
                let direct = k.eval(&t);
                let prod: f64 = t.iter().map(|x| profile.eval(*x)).product();
                if (direct - prod).abs() > 1e-12 * (1.0 + prod.abs()) {
                    product_ok = false;
                    break;
                }
            }
            Ok(AssumptionReport {
                level,
                pass: sup_ok && product_ok && l <= profile.lipschitz() * (1.0 + opts.tol),
                support_ok: sup_ok,
                product_ok,
                declared_lipschitz: profile.lipschitz(),
                estimated_lipschitz: l,
                worst_pair: (vec![p], vec![q]),
                approximate: false,
            })
        }
        AssumptionLevel::A2 => {
            if matches!(k.structure(), Structure::Generic) {
                return Err(Error::StructureMismatch(format!(
                    "kernel `{}` carries no derivative evaluators",
                    k.name()
                )));
            }
            let declared = k.smooth_lipschitz().unwrap_or(k.lipschitz());
            let mut worst = (0.0, vec![], vec![]);
            let mut approximate = false;
            for n in multi_indices(d, d / 2 + 1) {
                let (f, fd) = k.derivative(&n).ok_or_else(|| {
                    Error::StructureMismatch(format!("missing derivative evaluator for multi-index {n:?}"))
                })?;
                approximate |= fd;
                let s = scan_slope_nd(&*f, d, a, density);
                if s.0 > worst.0 {
                    worst = s;
                }
            }
            Ok(AssumptionReport {
                level,
                pass: sup_ok && worst.0 <= declared * (1.0 + opts.tol),
                support_ok: sup_ok,
                product_ok: true,
                declared_lipschitz: declared,
                estimated_lipschitz: worst.0,
                worst_pair: (worst.1, worst.2),
                approximate,
            })
        }
    }
}

/// Product kernel built from `w_ℓ`, the finite-difference-type combination
/// of a base profile `w`.
pub fn build_w_kernel(w: &Profile, ell: usize, dim: usize) -> Result<Kernel> {
    Kernel::product(w.w_ell(ell)?, dim)
}
