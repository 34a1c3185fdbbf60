use super::lambda::{Calibration, LambdaDSource, LambdaStarSource};
use crate::bandwidth::ClassParams;
use crate::error::{Error, Result};
use crate::kernel::NormOptions;
use serde::{Deserialize, Serialize};

/// How the Dudley bound enters `C_μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CmuVariant {
    /// `√λ R^{1/(2ω)}` divided by `1 − 1/(2ω₂)` and by `1/(2ω₁) − 1`, the
    /// value of the entropy integral.
    #[default]
    Dudley,
    /// The same factors multiplied instead; the infimum is then 0.
    AsPrinted,
}

/// Numerical controls. Every value is echoed into reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub norm: NormOptions,
    /// Series stop when the next term is below this fraction of the sum.
    pub series_rel_tol: f64,
    /// Relative tolerance of adaptive quadratures.
    pub quad_rel_tol: f64,
    /// Grid points per axis for the `(ω₁, ω₂)` minimisation.
    pub omega_grid: usize,
    /// Largest `r` tried by `r_𝒜` and the `ψ`, `ψ*` scans.
    pub r_cap: u32,
    /// Rows in the `C_2` and `C_2*` tables of a report.
    pub report_rows: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm: NormOptions::default(),
            series_rel_tol: 1e-10,
            quad_rel_tol: 1e-10,
            omega_grid: 64,
            r_cap: crate::bandwidth::DEFAULT_R_CAP,
            report_rows: 10,
        }
    }
}

impl Tolerances {
    /// Halved quadrature step and ten times tighter series and quadrature
    /// tolerances.
    pub fn tightened(&self) -> Self {
        Self {
            norm: self.norm.halved(),
            series_rel_tol: self.series_rel_tol / 10.0,
            quad_rel_tol: self.quad_rel_tol / 10.0,
            ..*self
        }
    }
}

/// Externally supplied constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Overrides {
    pub lambda_star: LambdaStarSource,
    pub lambda_d_star: LambdaDSource,
    pub calibration: Calibration,
    /// Maximal-function constant; default `2·5^{d/2}`.
    pub c_d: Option<f64>,
}

/// Parameters shared by all upper functions.
///
/// `q` is the moment order. The exponent dual to `r` is never stored; it
/// is derived where needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperFnConfig {
    pub p: f64,
    pub q: f64,
    pub eps: f64,
    pub b: f64,
    pub d: usize,
    /// Net base `𝔥`.
    pub base: f64,
    pub tau: f64,
    pub big_l: f64,
    /// `ln 𝒜`.
    pub ln_a: f64,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub cmu_variant: CmuVariant,
}

impl UpperFnConfig {
    /// Config with default overrides and tolerances.
    #[allow(clippy::too_many_arguments)]
    pub fn new(p: f64, q: f64, eps: f64, b: f64, d: usize, base: f64, tau: f64, big_l: f64, ln_a: f64) -> Result<Self> {
        let c = Self {
            p,
            q,
            eps,
            b,
            d,
            base,
            tau,
            big_l,
            ln_a,
            overrides: Overrides::default(),
            tolerances: Tolerances::default(),
            cmu_variant: CmuVariant::default(),
        };
        c.validate()?;
        Ok(c)
    }

    /// `(𝔥, 𝒜) = (e^{−√|ln ε|}, e^{ln² ε})`.
    pub fn epsilon_driven(p: f64, q: f64, eps: f64, b: f64, d: usize, tau: f64, big_l: f64) -> Result<Self> {
        let (base, ln_a) = crate::bandwidth::epsilon_driven_params(eps)?;
        Self::new(p, q, eps, b, d, base, tau, big_l, ln_a)
    }

    pub fn validate(&self) -> Result<()> {
        let e2 = (-2.0f64).exp() * (1.0 + 1e-12);
        if !(self.p >= 1.0 && self.q >= 1.0) {
            return Err(Error::Domain(format!("need p, q >= 1, got p = {}, q = {}", self.p, self.q)));
        }
        if !(self.eps > 0.0 && self.eps <= e2) {
            return Err(Error::Domain(format!("epsilon must lie in (0, e^-2], got {}", self.eps)));
        }
        if !(self.b > 0.0) || self.d == 0 {
            return Err(Error::Domain("need b > 0 and d >= 1".into()));
        }
        if !(self.base > 0.0 && self.base <= e2) {
            return Err(Error::Domain(format!("net base must lie in (0, e^-2], got {}", self.base)));
        }
        if let Some(c) = self.overrides.c_d {
            if !(c > 0.0) {
                return Err(Error::Domain("c(d) must be positive".into()));
            }
        }
        if self.tolerances.omega_grid < 2 {
            return Err(Error::Domain("omega grid needs at least 2 points".into()));
        }
        self.class_params().map(|_| ())
    }

    pub fn class_params(&self) -> Result<ClassParams> {
        ClassParams::new(self.tau, self.big_l, self.ln_a, self.p, self.base, self.d)
    }

    /// `q̃ = (q/p) ∨ 1`.
    pub fn q_tilde(&self) -> f64 {
        (self.q / self.p).max(1.0)
    }

    pub fn c_d(&self) -> f64 {
        self.overrides.c_d.unwrap_or(2.0 * 5f64.powf(self.d as f64 / 2.0))
    }

    /// `μ` with `μ^{-1} = 1 − (1 − τ)/r`.
    pub fn mu(&self, r: u32) -> f64 {
        1.0 / (1.0 - (1.0 - self.tau) / r as f64)
    }

    /// `γ_r = d/2 + d/(2pr)`.
    pub fn gamma_r(&self, r: u32) -> f64 {
        let d = self.d as f64;
        d / 2.0 + d / (2.0 * self.p * r as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let c = UpperFnConfig::new(2.0, 2.0, (-4.0f64).exp(), 0.5, 1, (-2.0f64).exp(), 0.5, 2.0, 1.0).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: UpperFnConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let minimal = r#"{"p":1,"q":1,"eps":0.01,"b":0.5,"d":1,"base":0.1,"tau":0.5,"big_l":1,"ln_a":2}"#;
        let m: UpperFnConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(m.tolerances, Tolerances::default());
        assert_eq!(m.overrides.lambda_star, LambdaStarSource::Calibrated);
        assert!((m.c_d() - 2.0 * 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mu_and_gamma() {
        let c = UpperFnConfig::new(1.0, 1.0, 0.01, 0.5, 1, 0.1, 0.5, 1.0, 2.0).unwrap();
        assert!((c.mu(2) - 4.0 / 3.0).abs() < 1e-15);
        assert!((c.gamma_r(2) - 0.75).abs() < 1e-15);
        assert!(UpperFnConfig::new(0.5, 1.0, 0.01, 0.5, 1, 0.1, 0.5, 1.0, 2.0).is_err());
        assert!(UpperFnConfig::new(1.0, 1.0, 0.5, 0.5, 1, 0.1, 0.5, 1.0, 2.0).is_err());
    }
}
