//! Monte Carlo verification of the upper-function inequalities.
//!
//! A [`Scenario`] fixes a kernel, a finite bandwidth collection, the
//! configuration of the upper functions and the simulation size.
//! [`run_scenario`] draws one noise lattice per replicate, evaluates every
//! field of the collection on it and averages
//! `(sup_h [‖ξ_h‖_p − Ψ(h)]_+)^q` over replicates.

mod output;
pub mod svg;

pub use output::{write_report, ReportFiles};

use crate::bandwidth::{
    check_param_relation, class_h_functional, dual_exponent, r_a, GeometricNet, MultiBandwidth, RaResult,
    DEFAULT_S_MAX,
};
use crate::error::{Error, Result};
use crate::field::{
    exact_covariance, exact_lp_moment, lattice_covariance, lattice_for, lp_norm, sample_noise, FieldPlan,
    LatticeSpec, DEFAULT_CELL_CAP,
};
use crate::grid::Grid;
use crate::kernel::{Kernel, Structure};
use crate::numerics::normal_abs_moment;
use crate::upper::{
    combined_psi, provenance, psi, psi_eps, psi_star, theorem_bound, Companion, Constants, Provenance, Theorem,
    UpperFnConfig,
};
use serde::{Deserialize, Serialize};

pub const MAX_BANDWIDTHS: usize = 64;
pub const MAX_REPLICATES: usize = 10_000;
pub const MAX_GRID_PER_AXIS: usize = 256;

/// One bandwidth of a scenario; the net is taken from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthSpec {
    /// `h_j = 𝔥 e^{−s_j}` everywhere.
    Constant { s: Vec<u32> },
    /// Boxes tiling `(−b, b)^d`.
    Boxes { boxes: Vec<BoxSpec> },
    /// Rectilinear partition, cells row-major.
    Partition { breaks: Vec<Vec<f64>>, s: Vec<Vec<u32>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub s: Vec<u32>,
}

impl BandwidthSpec {
    fn max_s(&self) -> u32 {
        let it: Box<dyn Iterator<Item = &u32>> = match self {
            BandwidthSpec::Constant { s } => Box::new(s.iter()),
            BandwidthSpec::Boxes { boxes } => Box::new(boxes.iter().flat_map(|b| b.s.iter())),
            BandwidthSpec::Partition { s, .. } => Box::new(s.iter().flatten()),
        };
        it.copied().max().unwrap_or(0)
    }

    pub fn build(&self, cfg: &UpperFnConfig) -> Result<MultiBandwidth> {
        let net = GeometricNet::new(cfg.base, DEFAULT_S_MAX.max(self.max_s()))?;
        let h = match self {
            BandwidthSpec::Constant { s } => MultiBandwidth::constant(cfg.b, net, s.clone())?,
            BandwidthSpec::Boxes { boxes } => {
                let bx: Vec<_> = boxes.iter().map(|b| (b.lo.clone(), b.hi.clone(), b.s.clone())).collect();
                MultiBandwidth::from_boxes(cfg.b, net, &bx)?
            }
            BandwidthSpec::Partition { breaks, s } => MultiBandwidth::new(cfg.b, net, breaks.clone(), s.clone())?,
        };
        if h.dim() != cfg.d {
            return Err(Error::Domain(format!("bandwidth has dimension {}, config has {}", h.dim(), cfg.d)));
        }
        Ok(h)
    }
}

/// Envelope `Ψ` tested by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpperKind {
    PsiEps,
    Psi,
    PsiStar,
    /// `ψ_ε ∧ ψ`.
    PsiEpsAndPsi,
    /// `ψ_ε ∧ ψ*`.
    PsiEpsAndPsiStar,
    /// `factor · (E‖ξ_h‖_p^p)^{1/p}`. No theorem is attached; only the
    /// fraction of zero deficits is informative.
    Envelope { factor: f64 },
}

impl UpperKind {
    pub fn theorem(&self) -> Option<Theorem> {
        match self {
            UpperKind::PsiEps => Some(Theorem::T1),
            UpperKind::Psi => Some(Theorem::T2),
            UpperKind::PsiStar => Some(Theorem::T3),
            UpperKind::PsiEpsAndPsi => Some(Theorem::Cor1),
            UpperKind::PsiEpsAndPsiStar => Some(Theorem::Cor2),
            UpperKind::Envelope { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            UpperKind::PsiEps => "psi_eps".into(),
            UpperKind::Psi => "psi".into(),
            UpperKind::PsiStar => "psi_star".into(),
            UpperKind::PsiEpsAndPsi => "psi_eps_and_psi".into(),
            UpperKind::PsiEpsAndPsiStar => "psi_eps_and_psi_star".into(),
            UpperKind::Envelope { factor } => format!("envelope_{factor}"),
        }
    }

    fn needs_product(&self) -> bool {
        matches!(self, UpperKind::Psi)
    }
}

/// Which oracles to run and their tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub moment: bool,
    pub covariance: bool,
    pub holder: bool,
    /// Moment oracle passes within this many standard errors...
    pub moment_se: f64,
    /// ...and within this relative error.
    pub moment_rel: f64,
    pub covariance_se: f64,
    /// Grid-index pairs for the covariance oracle, on the first bandwidth.
    /// Ten pairs along the last axis from the centre when absent.
    pub covariance_pairs: Option<Vec<(usize, usize)>>,
    pub holder_rel_tol: f64,
    /// Hölder exponents `r = ⌊p⌋+1, …, ⌊p⌋+holder_count`.
    pub holder_count: u32,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            moment: false,
            covariance: false,
            holder: false,
            moment_se: 3.0,
            moment_rel: 0.05,
            covariance_se: 5.0,
            covariance_pairs: None,
            holder_rel_tol: 1e-10,
            holder_count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Catalog id, e.g. `epanechnikov` or `w_ell:bump:2`.
    pub kernel: String,
    pub bandwidths: Vec<BandwidthSpec>,
    pub cfg: UpperFnConfig,
    pub replicates: usize,
    /// Noise lattice spacing.
    pub delta: f64,
    /// Evaluation grid cells per axis.
    pub grid_n: usize,
    pub seed: u64,
    #[serde(default)]
    pub upper: Vec<UpperKind>,
    #[serde(default)]
    pub oracles: OracleSettings,
    /// Levels per exceedance curve; 0 disables the curves.
    #[serde(default)]
    pub exceedance_levels: usize,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::from_catalog(&self.kernel, self.cfg.d)
    }

    pub fn bandwidths(&self) -> Result<Vec<MultiBandwidth>> {
        self.bandwidths.iter().map(|b| b.build(&self.cfg)).collect()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.cfg.b, self.cfg.d, self.grid_n)
    }

    /// Size caps and shape checks that do not need any constant.
    pub fn check_envelope(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(1..=2).contains(&self.cfg.d) {
            return Err(Error::Capacity(format!("d = {} outside {{1, 2}}", self.cfg.d)));
        }
        if self.bandwidths.is_empty() {
            return Err(Error::EmptyCandidates("empty bandwidth collection".into()));
        }
        if self.bandwidths.len() > MAX_BANDWIDTHS {
            return Err(Error::Capacity(format!(
                "{} bandwidths exceed the cap {MAX_BANDWIDTHS}",
                self.bandwidths.len()
            )));
        }
        if self.replicates < 2 || self.replicates > MAX_REPLICATES {
            return Err(Error::Capacity(format!(
                "replicate count {} outside [2, {MAX_REPLICATES}]",
                self.replicates
            )));
        }
        if self.grid_n == 0 || self.grid_n > MAX_GRID_PER_AXIS {
            return Err(Error::Capacity(format!(
                "grid size {} outside [1, {MAX_GRID_PER_AXIS}] per axis",
                self.grid_n
            )));
        }
        for u in &self.upper {
            if let UpperKind::Envelope { factor } = u {
                if !(*factor > 0.0) {
                    return Err(Error::Domain("envelope factor must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// A hypothesis of a requested theorem that is checked but not enforced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

fn summary(xs: &[f64]) -> Summary {
    Summary {
        mean: xs.iter().sum::<f64>() / xs.len() as f64,
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperResult {
    pub kind: UpperKind,
    pub theorem: Option<Theorem>,
    /// `Ψ(h)` per bandwidth.
    pub psi: Vec<f64>,
    /// Minimising `r` or the active branch, per bandwidth.
    pub notes: Vec<String>,
    pub e_hat: f64,
    pub se: f64,
    pub bound: Option<f64>,
    pub ln_bound: Option<f64>,
    /// `T3` only: the bound with `e^{−𝔥^{−d}}`.
    pub bound_variant: Option<f64>,
    pub pass: Option<bool>,
    /// `bound − Ê`.
    pub margin: Option<f64>,
    /// Replicates with zero sup-deficit.
    pub zero_fraction: f64,
    pub tightness: Summary,
    /// `sup_h [‖ξ_h‖_p − Ψ(h)]_+` per replicate.
    pub deficits: Vec<f64>,
    /// `max_h ‖ξ_h‖_p / Ψ(h)` per replicate.
    pub tightness_ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub bandwidth: usize,
    pub estimate: f64,
    pub se: f64,
    /// Closed form on the evaluation grid, `γ_p ‖K‖₂^p Δ Σ_i V_h(x_i)^{−p/2}`.
    pub target: f64,
    /// Continuous closed form `γ_p ‖K‖₂^p ‖V_h^{−1/2}‖_p^p`.
    pub exact: f64,
    pub z: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub i: usize,
    pub j: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub exact: f64,
    /// Covariance of the discretised field.
    pub lattice: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderCheck {
    pub exponents: Vec<u32>,
    pub checks: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct OracleReport {
    pub moment: Option<Vec<MomentCheck>>,
    pub covariance: Option<Vec<CovarianceCheck>>,
    pub holder: Option<HolderCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceRow {
    pub u: f64,
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub se: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceCurve {
    pub bandwidth: usize,
    pub mean: f64,
    pub sigma2: f64,
    pub rows: Vec<ExceedanceRow>,
    /// `empirical ≤ reference · (1 + 3 se)` at every level.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeMeta {
    pub version: String,
    pub parallel: bool,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub scenario: Scenario,
    pub lattice: LatticeSpec,
    pub hypotheses: Vec<HypothesisCheck>,
    pub upper: Vec<UpperResult>,
    pub oracles: OracleReport,
    pub exceedance: Vec<ExceedanceCurve>,
    pub provenance: Option<Provenance>,
    pub warnings: Vec<String>,
    pub runtime: RuntimeMeta,
    /// Every upper result passes, every oracle passes and every recorded
    /// hypothesis holds.
    pub pass: bool,
}

fn runtime() -> RuntimeMeta {
    #[cfg(feature = "parallel")]
    let threads = rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    let threads = 1;
    RuntimeMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        parallel: cfg!(feature = "parallel"),
        threads,
    }
}

/// Everything fixed before the replicates run.
struct Prepared {
    kernel: Kernel,
    hs: Vec<MultiBandwidth>,
    grid: Grid,
    spec: LatticeSpec,
    plan: FieldPlan,
    /// `V_h(x_i)^{1/2}` per bandwidth and node.
    v_sqrt: Vec<Vec<f64>>,
}

fn prepare(sc: &Scenario) -> Result<Prepared> {
    sc.check_envelope()?;
    let kernel = sc.kernel()?;
    let hs = sc.bandwidths()?;
    let grid = sc.grid()?;
    let spec = lattice_for(&kernel, &hs, sc.delta, DEFAULT_CELL_CAP)?;
    let plan = FieldPlan::new(&kernel, &hs, &grid, &spec)?;
    let v_sqrt = hs
        .iter()
        .map(|h| {
            grid.points()
                .map(|x| h.h_at(&x).iter().product::<f64>().sqrt())
                .collect()
        })
        .collect();
    Ok(Prepared {
        kernel,
        hs,
        grid,
        spec,
        plan,
        v_sqrt,
    })
}

/// Per-replicate output.
struct Rep {
    norms: Vec<f64>,
    cov: Vec<f64>,
    holder_checks: usize,
    holder_violations: usize,
    holder_max: f64,
}

struct HolderPlan {
    /// `(r, ‖V^{−1/2}‖_{rp/(r−p)})` per bandwidth.
    weights: Vec<Vec<(f64, f64)>>,
    exponents: Vec<u32>,
    tol: f64,
}

fn holder_plan(sc: &Scenario, pr: &Prepared) -> HolderPlan {
    let p = sc.cfg.p;
    let r0 = p.floor() as u32 + 1;
    let exponents: Vec<u32> = (r0..r0 + sc.oracles.holder_count).collect();
    let dx = pr.grid.cell_volume();
    let weights = pr
        .v_sqrt
        .iter()
        .map(|vs| {
            exponents
                .iter()
                .map(|&r| {
                    let rf = r as f64;
                    let m = dual_exponent(rf, p);
                    let s: f64 = vs.iter().map(|v| v.powf(-m)).sum();
                    (rf, (dx * s).powf(1.0 / m))
                })
                .collect()
        })
        .collect();
    HolderPlan {
        weights,
        exponents,
        tol: sc.oracles.holder_rel_tol,
    }
}

fn default_pairs(grid: &Grid, h: &MultiBandwidth, a: f64) -> Vec<(usize, usize)> {
    let n = grid.n;
    let centre = if grid.dim == 1 { n / 2 } else { (n / 2) * n + n / 2 };
    let c_last = n / 2;
    let h_last = h.h_at(&grid.point(centre))[grid.dim - 1];
    let lag = ((2.0 * a * h_last / (9.0 * grid.spacing())).round() as usize).max(1);
    (0..10)
        .map(|j| {
            let off = j * lag;
            let last = if c_last + off < n { c_last + off } else { c_last.saturating_sub(off) };
            (centre, centre - c_last + last)
        })
        .collect()
}

fn covariance_pairs(sc: &Scenario, pr: &Prepared) -> Result<Vec<(usize, usize)>> {
    let pairs = match &sc.oracles.covariance_pairs {
        Some(p) => p.clone(),
        None => default_pairs(&pr.grid, &pr.hs[0], pr.kernel.support()),
    };
    if pairs.iter().any(|&(i, j)| i >= pr.grid.len() || j >= pr.grid.len()) {
        return Err(Error::Domain("covariance pair index outside the evaluation grid".into()));
    }
    Ok(pairs)
}

fn simulate(sc: &Scenario, pr: &Prepared, pairs: &[(usize, usize)], holder: Option<&HolderPlan>) -> Result<Vec<Rep>> {
    let p = sc.cfg.p;
    let reps = crate::par::map_indexed(sc.replicates, |rep| -> Result<Rep> {
        let noise = sample_noise(&pr.spec, sc.seed, rep as u64, DEFAULT_CELL_CAP)?;
        let vals = pr.plan.evaluate(&noise)?;
        let norms: Vec<f64> = vals.iter().map(|v| lp_norm(v, &pr.grid, p)).collect();
        let cov = pairs.iter().map(|&(i, j)| vals[0][i] * vals[0][j]).collect();
        let (mut checks, mut violations, mut worst) = (0, 0, 0.0f64);
        if let Some(hp) = holder {
            for (k, v) in vals.iter().enumerate() {
                for &(r, w) in &hp.weights[k] {
                    let scaled: Vec<f64> = v.iter().zip(&pr.v_sqrt[k]).map(|(x, s)| x * s).collect();
                    let rhs = lp_norm(&scaled, &pr.grid, r) * w;
                    checks += 1;
                    if rhs > 0.0 {
                        worst = worst.max(norms[k] / rhs);
                    }
                    if norms[k] > rhs * (1.0 + hp.tol) {
                        violations += 1;
                    }
                }
            }
        }
        Ok(Rep {
            norms,
            cov,
            holder_checks: checks,
            holder_violations: violations,
            holder_max: worst,
        })
    });
    reps.into_iter().collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `Ψ(h)` for every bandwidth, with a note per bandwidth.
fn envelope(kind: UpperKind, k: &Constants, hs: &[MultiBandwidth], kernel: &Kernel) -> Result<(Vec<f64>, Vec<String>)> {
    let mut vals = Vec::with_capacity(hs.len());
    let mut notes = Vec::with_capacity(hs.len());
    for h in hs {
        let (v, note) = match kind {
            UpperKind::PsiEps => (psi_eps(h, k)?, String::new()),
            UpperKind::Psi => {
                let s = psi(h, k)?;
                (s.value, format!("r*={}", s.r_star))
            }
            UpperKind::PsiStar => {
                let s = psi_star(h, k)?;
                (s.value, format!("r*={}", s.r_star))
            }
            UpperKind::PsiEpsAndPsi | UpperKind::PsiEpsAndPsiStar => {
                let with = if kind == UpperKind::PsiEpsAndPsi { Companion::Psi } else { Companion::PsiStar };
                let c = combined_psi(h, k, with)?;
                let note = match c.flag {
                    Some(f) => format!("{:?} ({f})", c.branch),
                    None => format!("{:?}", c.branch),
                };
                (c.value, note)
            }
            UpperKind::Envelope { factor } => {
                let m = exact_lp_moment(kernel, h, k.cfg.p, &k.cfg.tolerances.norm)?;
                (factor * m.powf(1.0 / k.cfg.p), String::new())
            }
        };
        vals.push(v);
        notes.push(note);
    }
    Ok((vals, notes))
}

/// Hypotheses of the requested theorems. Structural ones (kernel
/// structure, isotropy, class membership) refuse the scenario; the
/// parameter relation is recorded.
fn check_hypotheses(sc: &Scenario, kernel: &Kernel, hs: &[MultiBandwidth]) -> Result<Vec<HypothesisCheck>> {
    let c = &sc.cfg;
    let mut out = Vec::new();
    for (i, h) in hs.iter().enumerate() {
        if (h.b() - c.b).abs() > 1e-12 * c.b || (h.net().base - c.base).abs() > 1e-12 * c.base {
            return Err(Error::Domain(format!("bandwidth {i} does not share b and the net base")));
        }
    }
    if kernel.dim() != c.d {
        return Err(Error::Domain("kernel dimension differs from the configuration".into()));
    }
    let wants_psi = sc.upper.iter().any(|u| matches!(u, UpperKind::Psi | UpperKind::PsiEpsAndPsi));
    let wants_star = sc.upper.contains(&UpperKind::PsiStar);
    if sc.upper.iter().any(|u| u.needs_product()) && !matches!(kernel.structure(), Structure::Product(_)) {
        return Err(Error::Hypothesis("psi needs a product kernel".into()));
    }
    if wants_psi {
        let cp = c.class_params()?;
        for (i, h) in hs.iter().enumerate() {
            let f = class_h_functional(h, c.tau);
            if sc.upper.contains(&UpperKind::Psi) && f > c.big_l {
                return Err(Error::Hypothesis(format!(
                    "bandwidth {i} is not in H_d(tau, L): functional {f} > {}",
                    c.big_l
                )));
            }
            if sc.upper.contains(&UpperKind::Psi) {
                if let RaResult::NotMember { r_cap } = r_a(h, &cp, c.tolerances.r_cap) {
                    return Err(Error::NotInClass(format!("bandwidth {i}: no r <= {r_cap}")));
                }
            }
        }
        let rel = check_param_relation(c.base, c.ln_a, c.tau, c.d)?;
        out.push(HypothesisCheck {
            name: "parameter relation".into(),
            holds: rel.holds,
            detail: format!("d ln ln A = {:.6} vs {:.6}", rel.lhs, rel.rhs),
        });
    }
    if wants_star {
        if !(1.0..=2.0).contains(&c.p) {
            return Err(Error::Hypothesis(format!("psi* needs p in [1, 2], got {}", c.p)));
        }
        if let Some(i) = hs.iter().position(|h| !h.is_isotropic()) {
            return Err(Error::Hypothesis(format!("psi* needs isotropic bandwidths; bandwidth {i} is not")));
        }
    }
    Ok(out)
}

/// Runs a scenario end to end.
pub fn run_scenario(sc: &Scenario) -> Result<VerificationReport> {
    let pr = prepare(sc)?;
    let hypotheses = check_hypotheses(sc, &pr.kernel, &pr.hs)?;
    let needs_constants = sc.upper.iter().any(|u| u.theorem().is_some());
    let k = Constants::new(sc.cfg.clone(), pr.kernel.clone())?;
    let envelopes = sc
        .upper
        .iter()
        .map(|&u| envelope(u, &k, &pr.hs, &pr.kernel))
        .collect::<Result<Vec<_>>>()?;

    let pairs = if sc.oracles.covariance { covariance_pairs(sc, &pr)? } else { vec![] };
    let hp = sc.oracles.holder.then(|| holder_plan(sc, &pr));
    let reps = simulate(sc, &pr, &pairs, hp.as_ref())?;

    let q = sc.cfg.q;
    let mut upper = Vec::new();
    for (&kind, (psi_v, notes)) in sc.upper.iter().zip(envelopes) {
        let deficits: Vec<f64> = reps
            .iter()
            .map(|r| {
                r.norms
                    .iter()
                    .zip(&psi_v)
                    .map(|(n, s)| (n - s).max(0.0))
                    .fold(0.0, f64::max)
            })
            .collect();
        let tight: Vec<f64> = reps
            .iter()
            .map(|r| r.norms.iter().zip(&psi_v).map(|(n, s)| n / s).fold(0.0, f64::max))
            .collect();
        let powered: Vec<f64> = deficits.iter().map(|d| d.powf(q)).collect();
        let (e_hat, se) = mean_se(&powered);
        let bound = kind.theorem().map(|t| theorem_bound(t, &k)).transpose()?;
        let zero = deficits.iter().filter(|d| **d == 0.0).count() as f64 / deficits.len() as f64;
        upper.push(UpperResult {
            kind,
            theorem: kind.theorem(),
            psi: psi_v,
            notes,
            e_hat,
            se,
            bound: bound.as_ref().map(|b| b.value),
            ln_bound: bound.as_ref().map(|b| b.ln_value),
            bound_variant: bound.as_ref().and_then(|b| b.variant),
            pass: bound.as_ref().map(|b| e_hat <= b.value),
            margin: bound.as_ref().map(|b| b.value - e_hat),
            zero_fraction: zero,
            tightness: summary(&tight),
            deficits,
            tightness_ratios: tight,
        });
    }

    let oracles = oracle_report(sc, &pr, &reps, &pairs, hp.as_ref())?;
    let exceedance = if sc.exceedance_levels > 0 {
        (0..pr.hs.len())
            .map(|i| {
                let norms: Vec<f64> = reps.iter().map(|r| r.norms[i]).collect();
                let hi = norms.iter().copied().fold(0.0, f64::max) * 1.1;
                let n = sc.exceedance_levels;
                let levels: Vec<f64> = (0..n).map(|j| hi * j as f64 / (n - 1).max(1) as f64).collect();
                exceedance_from_norms(&pr.kernel, &pr.hs[i], i, &norms, &levels, &sc.cfg)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![]
    };

    let mut warnings = Vec::new();
    for u in &upper {
        for n in &u.notes {
            if n.contains('(') && !warnings.contains(n) {
                warnings.push(format!("{}: {n}", u.kind.label()));
            }
        }
    }
    let pass = upper.iter().all(|u| u.pass.unwrap_or(true))
        && oracles.pass
        && hypotheses.iter().all(|h| h.holds)
        && exceedance.iter().all(|e| e.consistent);
    Ok(VerificationReport {
        scenario: sc.clone(),
        lattice: pr.spec.clone(),
        hypotheses,
        upper,
        oracles,
        exceedance,
        provenance: needs_constants.then(|| provenance(&k)),
        warnings,
        runtime: runtime(),
        pass,
    })
}

fn oracle_report(
    sc: &Scenario,
    pr: &Prepared,
    reps: &[Rep],
    pairs: &[(usize, usize)],
    hp: Option<&HolderPlan>,
) -> Result<OracleReport> {
    let o = &sc.oracles;
    let p = sc.cfg.p;
    let mut out = OracleReport {
        pass: true,
        ..Default::default()
    };
    if o.moment {
        let k2 = pr.kernel.norm(2.0, &sc.cfg.tolerances.norm)?.value;
        let gp = normal_abs_moment(p);
        let dx = pr.grid.cell_volume();
        let mut rows = Vec::new();
        for (i, h) in pr.hs.iter().enumerate() {
            let xs: Vec<f64> = reps.iter().map(|r| r.norms[i].powf(p)).collect();
            let (m, se) = mean_se(&xs);
            let target = gp * k2.powf(p) * dx * pr.v_sqrt[i].iter().map(|v| v.powf(-p)).sum::<f64>();
            let exact = exact_lp_moment(&pr.kernel, h, p, &sc.cfg.tolerances.norm)?;
            let z = if se > 0.0 { (m - target).abs() / se } else { f64::INFINITY };
            let rel_err = (m - target).abs() / target;
            rows.push(MomentCheck {
                bandwidth: i,
                estimate: m,
                se,
                target,
                exact,
                z,
                rel_err,
                pass: z <= o.moment_se && rel_err <= o.moment_rel,
            });
        }
        out.pass &= rows.iter().all(|r| r.pass);
        out.moment = Some(rows);
    }
    if o.covariance {
        let h = &pr.hs[0];
        let mut rows = Vec::new();
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let xs: Vec<f64> = reps.iter().map(|r| r.cov[c]).collect();
            let (m, se) = mean_se(&xs);
            let x = pr.grid.point(i);
            let y = pr.grid.point(j);
            let exact = exact_covariance(&pr.kernel, h, &x, &y);
            let lattice = lattice_covariance(&pr.kernel, &pr.spec, &x, &h.h_at(&x), &y, &h.h_at(&y));
            let z = if se > 0.0 { (m - exact).abs() / se } else { 0.0 };
            rows.push(CovarianceCheck {
                i,
                j,
                x,
                y,
                estimate: m,
                se,
                exact,
                lattice,
                z,
                pass: z <= o.covariance_se,
            });
        }
        out.pass &= rows.iter().all(|r| r.pass);
        out.covariance = Some(rows);
    }
    if let Some(hp) = hp {
        let checks = reps.iter().map(|r| r.holder_checks).sum();
        let violations = reps.iter().map(|r| r.holder_violations).sum::<usize>();
        let max_ratio = reps.iter().map(|r| r.holder_max).fold(0.0, f64::max);
        out.pass &= violations == 0;
        out.holder = Some(HolderCheck {
            exponents: hp.exponents.clone(),
            checks,
            violations,
            max_ratio,
            pass: violations == 0,
        });
    }
    Ok(out)
}

/// Runs only the oracles of a scenario (all three, whatever the toggles).
pub fn oracle_suite(sc: &Scenario) -> Result<OracleReport> {
    let mut sc = sc.clone();
    sc.oracles.moment = true;
    sc.oracles.covariance = true;
    sc.oracles.holder = true;
    let pr = prepare(&sc)?;
    let pairs = covariance_pairs(&sc, &pr)?;
    let hp = holder_plan(&sc, &pr);
    let reps = simulate(&sc, &pr, &pairs, Some(&hp))?;
    oracle_report(&sc, &pr, &reps, &pairs, Some(&hp))
}

fn exceedance_from_norms(
    kernel: &Kernel,
    h: &MultiBandwidth,
    index: usize,
    norms: &[f64],
    levels: &[f64],
    cfg: &UpperFnConfig,
) -> Result<ExceedanceCurve> {
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let k2 = kernel.norm(2.0, &cfg.tolerances.norm)?.value;
    let sigma2 = k2 * k2 * h.max_v_inv_sqrt().powi(2);
    let rows: Vec<ExceedanceRow> = levels
        .iter()
        .map(|&u| {
            let emp = norms.iter().filter(|&&x| x >= u).count() as f64 / n;
            let reference = if u <= mean { 1.0 } else { (-(u - mean).powi(2) / (2.0 * sigma2)).exp() };
            ExceedanceRow {
                u,
                empirical: emp,
                se: (emp * (1.0 - emp) / n).sqrt(),
                reference,
            }
        })
        .collect();
    let consistent = rows.iter().all(|r| r.empirical <= r.reference * (1.0 + 3.0 * r.se));
    Ok(ExceedanceCurve {
        bandwidth: index,
        mean,
        sigma2,
        rows,
        consistent,
    })
}

/// Empirical `P{‖ξ_h‖_p ≥ u}` for bandwidth `index` of the scenario, with
/// the Gaussian concentration reference `e^{−(u − m)²/(2σ²)}` anchored at
/// the empirical mean `m`, `σ² = sup_x ‖K‖₂² / V_h(x)`.
pub fn exceedance_curve(sc: &Scenario, index: usize, levels: &[f64]) -> Result<ExceedanceCurve> {
    let pr = prepare(sc)?;
    if index >= pr.hs.len() {
        return Err(Error::Domain(format!("bandwidth index {index} out of range")));
    }
    let reps = simulate(sc, &pr, &[], None)?;
    let norms: Vec<f64> = reps.iter().map(|r| r.norms[index]).collect();
    exceedance_from_norms(&pr.kernel, &pr.hs[index], index, &norms, levels, &sc.cfg)
}

/// `‖ξ_h‖_p` per replicate (rows) and bandwidth (columns).
pub fn simulate_norms(sc: &Scenario) -> Result<Vec<Vec<f64>>> {
    let pr = prepare(sc)?;
    Ok(simulate(sc, &pr, &[], None)?.into_iter().map(|r| r.norms).collect())
}
