//! Upper functions `ψ_ε`, `ψ`, `ψ*`, their minima and the constants they
//! are built from.

mod config;
mod constants;
pub mod lambda;

pub use config::{CmuVariant, Overrides, Tolerances, UpperFnConfig};
pub use constants::{
    minimize_open, radial_integrals, radial_integrals_quadrature, C2Entry, C2StarEntry, C3Value, CmuValue, Constants,
    OmegaMin, SeriesValue,
};
pub use lambda::{
    calibrated_star_table, read_lambda_csv, scale_lambda, Calibration, LambdaDSource, LambdaOverride, LambdaProvider, LambdaStarSource,
    LambdaValue, CALIBRATED_FLAG, SUPPLIED_FLAG,
};

use crate::bandwidth::{check_param_relation, dual_exponent, r_a, MultiBandwidth, RaResult};
use crate::error::{Error, Result};
use serde::Serialize;

/// `ψ_ε(h) = C_1 (Σ_s |ln(ε V_s)|^{p/2} V_s^{−p/2} ν(Λ_s))^{1/p}`.
pub fn psi_eps(h: &MultiBandwidth, k: &Constants) -> Result<f64> {
    check_shape(h, k)?;
    let c = &k.cfg;
    let ln_eps = c.eps.ln();
    let terms: Vec<f64> = h
        .level_sets()
        .iter()
        .map(|(s, nu)| {
            let lv = h.ln_v(s);
            0.5 * c.p * (ln_eps + lv).abs().ln() - 0.5 * c.p * lv + nu.ln()
        })
        .collect();
    Ok(k.c1()? * (crate::numerics::log_sum_exp(&terms) / c.p).exp())
}

fn check_shape(h: &MultiBandwidth, k: &Constants) -> Result<()> {
    let c = &k.cfg;
    if h.dim() != c.d || (h.b() - c.b).abs() > 1e-12 * c.b || (h.net().base - c.base).abs() > 1e-12 * c.base {
        return Err(Error::Domain("bandwidth does not match the configured b, d and net base".into()));
    }
    Ok(())
}

/// Result of an `r` scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub value: f64,
    pub r_star: u32,
    /// Values tried, in order.
    pub evaluated: Vec<(u32, f64)>,
    /// The scan stopped on the lower bound rather than the cap.
    pub terminated_early: bool,
    pub warnings: Vec<String>,
}

fn scan(
    start: u32,
    cap: u32,
    early: bool,
    mut ln_value: impl FnMut(u32) -> Result<f64>,
    ln_lower: impl Fn(u32) -> f64,
) -> Result<ScanResult> {
    let mut best: Option<(u32, f64)> = None;
    let mut evaluated = Vec::new();
    let mut terminated_early = false;
    for r in start..=cap {
        if early {
            if let Some((_, b)) = best {
                if ln_lower(r) >= b {
                    terminated_early = true;
                    break;
                }
            }
        }
        let v = ln_value(r)?;
        evaluated.push((r, v.exp()));
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((r, v));
        }
    }
    let (r_star, v) = best.ok_or_else(|| Error::EmptyCandidates(format!("no r in [{start}, {cap}]")))?;
    Ok(ScanResult {
        value: v.exp(),
        r_star,
        evaluated,
        terminated_early,
        warnings: vec![],
    })
}

/// `ψ(h) = inf_{r ≥ r_𝒜(h)} C_2(r) ‖V_h^{−1/2}‖_{rp/(r−p)}`.
///
/// The scan stops once a lower bound valid for every remaining `r` reaches
/// the current best. The bound keeps only the last term of `C_2(r)`, uses
/// `‖𝒦‖_m ≥ ‖𝒦‖₁ min(1, (2a)^{−1/2})` for `m ∈ [1, 2]` and
/// `‖V^{−1/2}‖_m ≥ min V^{−1/2} (2b)^{d/m}`, and is nondecreasing in `r`.
pub fn psi(h: &MultiBandwidth, k: &Constants) -> Result<ScanResult> {
    psi_scan(h, k, k.cfg.tolerances.r_cap, true)
}

/// `ψ` scanned without early termination up to `r_max`; an oracle for
/// [`psi`].
pub fn psi_exhaustive(h: &MultiBandwidth, k: &Constants, r_max: u32) -> Result<ScanResult> {
    psi_scan(h, k, r_max, false)
}

fn psi_scan(h: &MultiBandwidth, k: &Constants, cap: u32, early: bool) -> Result<ScanResult> {
    check_shape(h, k)?;
    let c = &k.cfg;
    let cp = c.class_params()?;
    k.profile()?;
    let start = match r_a(h, &cp, c.tolerances.r_cap) {
        RaResult::Member(r) => r,
        RaResult::NotMember { r_cap } => {
            return Err(Error::NotInClass(format!(
                "no r <= {r_cap} with ||V^-1/2||_(rp/(r-p)) <= A"
            )))
        }
    };
    let rel = check_param_relation(c.base, c.ln_a, c.tau, c.d)?;
    let mut warnings: Vec<String> = rel.warning.into_iter().collect();
    if !rel.holds {
        warnings.push(format!(
            "parameter relation fails: d ln ln A = {:.4} > {:.4}",
            rel.lhs, rel.rhs
        ));
    }
    let (d, p, b, q) = (c.d as f64, c.p, c.b, c.q);
    let a = k.profile()?.support();
    let n_low = k.profile_norm(1.0)? * (2.0 * a).powf(-0.5).min(1.0);
    let ln_min_v = h.min_v_inv_sqrt().ln();
    let lower = |r: u32| {
        let rf = r as f64;
        let vol = (d / p * (2.0 * b).ln()).min(d * (rf - p) / (rf * p) * (2.0 * b).ln());
        rf + 0.5 * (2.0 * (1.0 + q)).ln() + d * (rf.ln() + 0.5 + n_low.ln()) + ln_min_v + vol
    };
    let mut out = scan(
        start,
        cap.max(start),
        early,
        |r| Ok(k.c2(r)?.value.ln() + h.ln_v_norm(dual_exponent(r as f64, p))),
        lower,
    )?;
    out.warnings = warnings;
    Ok(out)
}

/// `ψ*(h) = inf_{r > d} C_2*(r) ‖h^{−d/2}‖_{p+1/r}` for isotropic `h` and
/// `p ∈ [1, 2]`, with the same kind of early termination as [`psi`]; the
/// bound keeps only `4√(q e^r) σ_*`.
pub fn psi_star(h: &MultiBandwidth, k: &Constants) -> Result<ScanResult> {
    psi_star_scan(h, k, k.cfg.tolerances.r_cap, true)
}

pub fn psi_star_exhaustive(h: &MultiBandwidth, k: &Constants, r_max: u32) -> Result<ScanResult> {
    psi_star_scan(h, k, r_max, false)
}

fn psi_star_scan(h: &MultiBandwidth, k: &Constants, cap: u32, early: bool) -> Result<ScanResult> {
    check_shape(h, k)?;
    let c = &k.cfg;
    if !(1.0..=2.0).contains(&c.p) {
        return Err(Error::Hypothesis(format!("psi* needs p in [1, 2], got {}", c.p)));
    }
    if !h.is_isotropic() {
        return Err(Error::Hypothesis("psi* needs an isotropic bandwidth".into()));
    }
    let (d, p, b, q) = (c.d as f64, c.p, c.b, c.q);
    let ln_sigma = k.sigma_star()?.ln();
    let ln_min_v = h.min_v_inv_sqrt().ln();
    let lower = |r: u32| {
        let rf = r as f64;
        let vol = (d / p * (2.0 * b).ln()).min(d / (p + 1.0 / rf) * (2.0 * b).ln());
        (4.0f64).ln() + 0.5 * (q.ln() + rf) + ln_sigma + ln_min_v + vol
    };
    let start = c.d as u32 + 1;
    scan(
        start,
        cap.max(start),
        early,
        |r| Ok(k.c2_star(r)?.value.ln() + h.ln_v_norm(p + 1.0 / r as f64)),
        lower,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    PsiEps,
    Psi,
    PsiStar,
}

/// Companion of `ψ_ε` in a combined upper function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Companion {
    Psi,
    PsiStar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Combined {
    pub value: f64,
    pub branch: Branch,
    pub psi_eps: f64,
    pub companion: Option<f64>,
    /// Why the companion is missing, if it is.
    pub flag: Option<String>,
}

/// `ψ_ε ∧ ψ` or `ψ_ε ∧ ψ*`. When the companion cannot be computed for this
/// `h` (not in the class, hypothesis not met) `ψ_ε` is returned with a flag.
pub fn combined_psi(h: &MultiBandwidth, k: &Constants, with: Companion) -> Result<Combined> {
    let pe = psi_eps(h, k)?;
    let (comp, branch) = match with {
        Companion::Psi => (psi(h, k), Branch::Psi),
        Companion::PsiStar => (psi_star(h, k), Branch::PsiStar),
    };
    match comp {
        Ok(s) => Ok(Combined {
            value: pe.min(s.value),
            branch: if s.value < pe { branch } else { Branch::PsiEps },
            psi_eps: pe,
            companion: Some(s.value),
            flag: None,
        }),
        Err(e) if e.is_contract() => Ok(Combined {
            value: pe,
            branch: Branch::PsiEps,
            psi_eps: pe,
            companion: None,
            flag: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Theorem {
    T1,
    T2,
    T3,
    Cor1,
    Cor2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremBound {
    pub which: Theorem,
    pub value: f64,
    pub ln_value: f64,
    /// For `T3`: `(C_5 e^{−𝔥^{−d}})^q`, the sign consistent with the series
    /// the constant is built from. `value` is the bound as stated,
    /// `(C_5 e^{𝔥^{−d}})^q`.
    pub variant: Option<f64>,
}

/// Right-hand side of the probability bound for `which`.
pub fn theorem_bound(which: Theorem, k: &Constants) -> Result<TheoremBound> {
    let c = &k.cfg;
    let q = c.q;
    let (ln_value, variant) = match which {
        Theorem::T1 => (q * (k.c3()?.value * c.eps).ln(), None),
        Theorem::T2 => {
            let t = (2.0 * (2.0 * c.d as f64 * c.base.ln().abs()).sqrt()).exp();
            (q * (k.c4()?.value.ln() + c.ln_a - t), None)
        }
        Theorem::T3 => {
            let c5 = k.c5()?.value.ln();
            let e = c.base.powf(-(c.d as f64));
            (q * (c5 + e), Some((q * (c5 - e)).exp()))
        }
        Theorem::Cor1 => (q * ((k.c3()?.value + k.c4()?.value) * c.eps).ln(), None),
        Theorem::Cor2 => (q * ((k.c3()?.value + k.c5()?.value) * c.eps).ln(), None),
    };
    Ok(TheoremBound {
        which,
        value: ln_value.exp(),
        ln_value,
        variant,
    })
}

/// Provenance of every constant not computed from the kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub lambda_star: String,
    pub lambda_d_star: String,
    pub c_d: String,
    pub cmu_variant: CmuVariant,
    pub calibration: Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSummary {
    pub name: String,
    pub dim: usize,
    pub support: f64,
    pub lipschitz: f64,
    pub norm_1: f64,
    pub norm_2: f64,
    pub norm_inf: f64,
}

/// Every constant for one configuration and kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub config: UpperFnConfig,
    pub kernel: KernelSummary,
    pub gamma_q1: f64,
    pub c1: f64,
    pub c3: C3Value,
    pub c4: Option<SeriesValue>,
    pub c5: SeriesValue,
    pub sigma_star: f64,
    pub c_d: f64,
    pub c2_table: Vec<C2Entry>,
    /// First `r` from which the `C_2` table increases.
    pub c2_increasing_from: Option<u32>,
    pub c2_star_table: Vec<C2StarEntry>,
    pub c2_star_increasing_from: Option<u32>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

fn increasing_from<T>(rows: &[T], key: impl Fn(&T) -> (u32, f64)) -> Option<u32> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let mut start = n - 1;
    while start > 0 && key(&rows[start]).1 > key(&rows[start - 1]).1 {
        start -= 1;
    }
    if start == n - 1 {
        None
    } else {
        Some(key(&rows[start]).0)
    }
}

/// Flags for the constants a configuration does not compute from the kernel.
pub fn provenance(k: &Constants) -> Provenance {
    let c = &k.cfg;
    Provenance {
        lambda_star: k.lambda.star_flag().into(),
        lambda_d_star: k.lambda.d_flag().into(),
        c_d: if c.overrides.c_d.is_some() {
            SUPPLIED_FLAG.to_string()
        } else {
            "default 2*5^(d/2)".to_string()
        },
        cmu_variant: c.cmu_variant,
        calibration: c.overrides.calibration,
    }
}

/// Builds the full report. Missing kernel structure empties the affected
/// tables and records a warning instead of failing.
pub fn constants_report(k: &Constants) -> Result<ConstantsReport> {
    let c = &k.cfg;
    let mut warnings = Vec::new();
    let rows = c.tolerances.report_rows;
    let c4 = match k.c4() {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("C_4 unavailable: {e}"));
            None
        }
    };
    let r0 = c.p.floor() as u32 + 1;
    let mut c2_table = Vec::new();
    for r in r0..r0 + rows {
        match k.c2(r) {
            Ok(e) => c2_table.push(e),
            Err(e) => {
                warnings.push(format!("C_2 table unavailable: {e}"));
                break;
            }
        }
    }
    let mut c2_star_table = Vec::new();
    let s0 = c.d as u32 + 1;
    for r in s0..s0 + rows {
        match k.c2_star(r) {
            Ok(e) => c2_star_table.push(e),
            Err(e) => {
                warnings.push(format!("C_2* table unavailable: {e}"));
                break;
            }
        }
    }
    if c2_table.iter().any(|e| e.c_mu.lambda_extrapolated) || c2_star_table.iter().any(|e| e.lambda_extrapolated) {
        warnings.push("some lambda lookups were clamped to the edge of the node range".into());
    }
    Ok(ConstantsReport {
        config: c.clone(),
        kernel: KernelSummary {
            name: k.kernel.name().to_string(),
            dim: k.kernel.dim(),
            support: k.kernel.support(),
            lipschitz: k.kernel.lipschitz(),
            norm_1: k.kernel_norm(1.0)?,
            norm_2: k.kernel_norm(2.0)?,
            norm_inf: k.kernel_norm(f64::INFINITY)?,
        },
        gamma_q1: k.gamma_q1(),
        c1: k.c1()?,
        c3: k.c3()?,
        c4,
        c5: k.c5()?,
        sigma_star: k.sigma_star()?,
        c_d: c.c_d(),
        c2_increasing_from: increasing_from(&c2_table, |e| (e.r, e.value)),
        c2_table,
        c2_star_increasing_from: increasing_from(&c2_star_table, |e| (e.r, e.value)),
        c2_star_table,
        provenance: provenance(k),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::GeometricNet;
    use crate::kernel::Kernel;

    fn setup(lambda_const: bool) -> Constants {
        let mut c = UpperFnConfig::new(1.0, 1.0, (-4.0f64).exp(), 0.5, 1, (-2.0f64).exp(), 0.5, 2.0, 6.0).unwrap();
        if lambda_const {
            c.overrides.lambda_star = LambdaStarSource::Constant { value: 1.0 };
            c.overrides.lambda_d_star = LambdaDSource::Constant { value: 1.0 };
        }
        Constants::new(c, Kernel::from_catalog("triangle", 1).unwrap()).unwrap()
    }

    fn net() -> GeometricNet {
        GeometricNet::new((-2.0f64).exp(), 40).unwrap()
    }

    #[test]
    fn psi_eps_constant_bandwidth() {
        let k = setup(true);
        let s = 2;
        let h = MultiBandwidth::constant_isotropic(0.5, 1, net(), s).unwrap();
        let hv = net().value(s);
        let want = k.c1().unwrap() * (k.cfg.eps.ln().abs() + hv.ln().abs()).sqrt() * hv.powf(-0.5);
        assert!((psi_eps(&h, &k).unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn psi_eps_two_boxes_and_floor() {
        let k = setup(true);
        let h = MultiBandwidth::new(0.5, net(), vec![vec![-0.5, 0.1, 0.5]], vec![vec![1], vec![3]]).unwrap();
        let term = |s: u32, nu: f64| {
            let v = net().value(s);
            (k.cfg.eps * v).ln().abs().sqrt() * v.powf(-0.5) * nu
        };
        let want = k.c1().unwrap() * (term(1, 0.6) + term(3, 0.4));
        let got = psi_eps(&h, &k).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
        assert!(got >= k.c1().unwrap() * k.cfg.eps.ln().abs().sqrt() * h.v_norm(1.0));
    }

    #[test]
    fn psi_matches_exhaustive_scan() {
        let k = setup(true);
        for s in [0u32, 1, 2] {
            let h = MultiBandwidth::new(0.5, net(), vec![vec![-0.5, 0.0, 0.5]], vec![vec![s], vec![s + 1]]).unwrap();
            let a = psi(&h, &k).unwrap();
            let b = psi_exhaustive(&h, &k, 60).unwrap();
            assert_eq!((a.value, a.r_star), (b.value, b.r_star));
            assert!(a.terminated_early);
        }
    }

    #[test]
    fn psi_star_matches_exhaustive_scan() {
        let k = setup(true);
        let h = MultiBandwidth::new(0.5, net(), vec![vec![-0.5, 0.2, 0.5]], vec![vec![1], vec![2]]).unwrap();
        let a = psi_star(&h, &k).unwrap();
        let b = psi_star_exhaustive(&h, &k, 200).unwrap();
        assert_eq!((a.value, a.r_star), (b.value, b.r_star));
    }

    #[test]
    fn psi_star_hypotheses() {
        let mut c = setup(true).cfg.clone();
        c.p = 3.0;
        let k = Constants::new(c, Kernel::from_catalog("triangle", 1).unwrap()).unwrap();
        let h = MultiBandwidth::constant_isotropic(0.5, 1, net(), 1).unwrap();
        assert!(matches!(psi_star(&h, &k), Err(Error::Hypothesis(_))));
        let k2 = Constants::new(
            UpperFnConfig::new(1.0, 1.0, 0.01, 0.5, 2, 0.1, 0.5, 2.0, 6.0).unwrap(),
            Kernel::from_catalog("triangle", 2).unwrap(),
        )
        .unwrap();
        let aniso = MultiBandwidth::constant(0.5, GeometricNet::new(0.1, 40).unwrap(), vec![1, 2]).unwrap();
        assert!(matches!(psi_star(&aniso, &k2), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn combined_takes_minimum_and_flags() {
        let k = setup(true);
        let h = MultiBandwidth::constant_isotropic(0.5, 1, net(), 1).unwrap();
        let c = combined_psi(&h, &k, Companion::Psi).unwrap();
        assert!(c.value <= c.psi_eps && c.value <= c.companion.unwrap());
        // far outside B(A)
        let mut cfg = k.cfg.clone();
        cfg.ln_a = 1.0;
        let k2 = Constants::new(cfg, Kernel::from_catalog("triangle", 1).unwrap()).unwrap();
        let fine = MultiBandwidth::constant_isotropic(0.5, 1, net(), 30).unwrap();
        let c = combined_psi(&fine, &k2, Companion::Psi).unwrap();
        assert_eq!(c.branch, Branch::PsiEps);
        assert!(c.flag.is_some());
    }

    #[test]
    fn theorem_bounds() {
        let k = setup(true);
        let t1 = theorem_bound(Theorem::T1, &k).unwrap();
        assert!((t1.value - k.c3().unwrap().value * (-4.0f64).exp()).abs() < 1e-12);
        let t3 = theorem_bound(Theorem::T3, &k).unwrap();
        assert!(t3.variant.unwrap() < t3.value);
        let c1 = theorem_bound(Theorem::Cor1, &k).unwrap();
        assert!(c1.value > t1.value);
    }

    #[test]
    fn report_is_deterministic_and_stable() {
        let a = constants_report(&setup(true)).unwrap();
        let b = constants_report(&setup(true)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.provenance.lambda_star, SUPPLIED_FLAG);
        assert!(a.c2_increasing_from.is_some());
    }
}
