use super::{fit_line, greedy_from_radii, log_grid, traversal_radii, ClassDescriptor, FunctionCloud, QClassParams};
use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::rng::NormalStream;
use serde::Serialize;
use std::f64::consts::PI;

/// Sobolev–Slobodetskii ball of radius `radius` on `[0, length]^dim`,
/// tabulated on `n` cell-centred points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsBall {
    pub gamma: f64,
    pub m: f64,
    pub radius: f64,
    pub length: f64,
    pub dim: usize,
    pub n: usize,
}

impl SsBall {
    /// Default resolution: 64 points in one dimension, 24 per axis in two.
    pub fn new(gamma: f64, m: f64, radius: f64, length: f64, dim: usize) -> Self {
        Self {
            gamma,
            m,
            radius,
            length,
            dim,
            n: if dim == 1 { 64 } else { 24 },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Domain(format!("Sobolev-Slobodetskii ball supports dim 1 or 2, got {}", self.dim)));
        }
        if !(self.gamma > 0.0 && self.gamma < 2.0) || self.gamma.fract() == 0.0 {
            return Err(Error::Domain(format!("gamma must be a non-integer in (0, 2), got {}", self.gamma)));
        }
        if !(self.m >= 1.0) || !(self.radius > 0.0) || !(self.length > 0.0) || self.n < 4 {
            return Err(Error::Domain("need m >= 1, radius > 0, length > 0 and n >= 4".into()));
        }
        let k = self.dim as f64;
        if self.gamma <= k / self.m - k / 2.0 {
            return Err(Error::Domain(format!(
                "gamma = {} must exceed k/m - k/2 = {}",
                self.gamma,
                k / self.m - k / 2.0
            )));
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
}

fn gradient(values: &[f64], n: usize, dim: usize, h: f64) -> Vec<Vec<f64>> {
    let at = |idx: &[usize]| -> f64 { values[idx.iter().fold(0, |acc, &i| acc * n + i)] };
    (0..dim)
        .map(|axis| {
            (0..values.len())
                .map(|flat| {
                    let mut idx = vec![0; dim];
                    let mut r = flat;
                    for j in (0..dim).rev() {
                        idx[j] = r % n;
                        r /= n;
                    }
                    let i = idx[axis];
                    let (lo, hi, span) = if i == 0 {
                        (0, 1, h)
                    } else if i == n - 1 {
                        (n - 2, n - 1, h)
                    } else {
                        (i - 1, i + 1, 2.0 * h)
                    };
                    let mut a = idx.clone();
                    a[axis] = lo;
                    let mut b = idx;
                    b[axis] = hi;
                    (at(&b) - at(&a)) / span
                })
                .collect()
        })
        .collect()
}

/// Discrete Sobolev–Slobodetskii norm
/// `‖F‖_m + (Σ_{|n|=⌊γ⌋} ∫∫ |D^nF(y) − D^nF(z)|^m / |y−z|^{k+m(γ−⌊γ⌋)})^{1/m}`
/// of a tabulated function (midpoint rule, diagonal cells dropped,
/// derivatives by finite differences).
pub fn ss_norm(values: &[f64], ball: &SsBall) -> Result<f64> {
    let SsBall { gamma, m, dim, n, .. } = *ball;
    if !(1..=2).contains(&dim) || n.pow(dim as u32) != values.len() {
        return Err(Error::Domain("values do not match the ball grid".into()));
    }
    if !(gamma > 0.0 && gamma < 2.0) || gamma.fract() == 0.0 || !(m >= 1.0) {
        return Err(Error::Domain(format!("need non-integer gamma in (0, 2) and m >= 1, got {gamma}, {m}")));
    }
    let h = ball.spacing();
    let w = ball.weight();
    let lm = (w * values.iter().map(|v| v.abs().powf(m)).sum::<f64>()).powf(1.0 / m);
    let parts: Vec<Vec<f64>> = if gamma < 1.0 {
        vec![values.to_vec()]
    } else {
        gradient(values, n, dim, h)
    };
    let frac = gamma - gamma.floor();
    let expo = (dim as f64 + m * frac) / 2.0;
    let coords: Vec<Vec<f64>> = (0..values.len())
        .map(|flat| {
            let mut idx = vec![0.0; dim];
            let mut r = flat;
            for j in (0..dim).rev() {
                idx[j] = (r % n) as f64 * h;
                r /= n;
            }
            idx
        })
        .collect();
    let len = values.len();
    let mut semi = 0.0;
    for g in &parts {
        let rows = map_indexed(len, |i| {
            let mut acc = 0.0;
            for j in i + 1..len {
                let d2: f64 = coords[i].iter().zip(&coords[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                acc += (g[i] - g[j]).abs().powf(m) / d2.powf(expo);
            }
            acc
        });
        semi += 2.0 * w * w * rows.iter().sum::<f64>();
    }
    Ok(lm + semi.powf(1.0 / m))
}

/// Norm of a function given pointwise, refined by doubling the grid until
/// two consecutive values agree within `rel_tol`. Returns the value, the
/// final resolution and whether the gate was met.
pub fn ss_norm_fn(
    f: impl Fn(&[f64]) -> f64,
    ball: &SsBall,
    rel_tol: f64,
    max_n: usize,
) -> Result<(f64, usize, bool)> {
    let mut b = *ball;
    let tab = |b: &SsBall| -> Vec<f64> {
        let h = b.spacing();
        (0..b.n.pow(b.dim as u32))
            .map(|flat| {
                let mut x = vec![0.0; b.dim];
                let mut r = flat;
                for j in (0..b.dim).rev() {
                    x[j] = ((r % b.n) as f64 + 0.5) * h;
                    r /= b.n;
                }
                f(&x)
            })
            .collect()
    };
    let mut prev = ss_norm(&tab(&b), &b)?;
    while b.n * 2 <= max_n {
        b.n *= 2;
        let cur = ss_norm(&tab(&b), &b)?;
        if (cur - prev).abs() <= rel_tol * cur.abs() {
            return Ok((cur, b.n, true));
        }
        prev = cur;
    }
    Ok((prev, b.n, false))
}

/// Dyadic frequency blocks: block `L` holds the cosine modes whose largest
/// frequency index lies in `[2^L, 2^{L+1})`.
fn blocks(dim: usize, n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut lo = 1;
    while 2 * lo <= n {
        let hi = 2 * lo;
        let mut modes = Vec::new();
        if dim == 1 {
            modes.extend((lo..hi).map(|k| vec![k]));
        } else {
            for a in 0..hi {
                for b in 0..hi {
                    if a.max(b) >= lo {
                        modes.push(vec![a, b]);
                    }
                }
            }
        }
        out.push(modes);
        lo = hi;
    }
    out
}

/// Draws `count` functions from the ball: random cosine sums with block
/// amplitudes `2^{-Lγ}/√n_L` and Gaussian coefficients, each rescaled by
/// `1/max(1, ‖F‖)` and then by the radius. Sample `i` depends only on
/// `(seed, i)`.
pub fn sample_ss_ball(ball: &SsBall, count: usize, seed: u64) -> Result<FunctionCloud> {
    ball.validate()?;
    let n = ball.n;
    let dim = ball.dim;
    let blocks = blocks(dim, n);
    let basis_at = |mode: &[usize], flat: usize| -> f64 {
        let mut r = flat;
        let mut v = 1.0;
        for j in (0..dim).rev() {
            let x = ((r % n) as f64 + 0.5) / n as f64;
            r /= n;
            v *= (PI * mode[j] as f64 * x).cos();
        }
        v
    };
    let len = n.pow(dim as u32);
    let functions = map_indexed(count, |i| -> Result<Vec<f64>> {
        let mut s = NormalStream::new(seed, i as u64);
        let mut f = vec![0.0; len];
        for (l, modes) in blocks.iter().enumerate() {
            let amp = 2f64.powf(-(l as f64) * ball.gamma) / (modes.len() as f64).sqrt();
            for mode in modes {
                let c = amp * s.next_normal();
                for (flat, v) in f.iter_mut().enumerate() {
                    *v += c * basis_at(mode, flat);
                }
            }
        }
        let norm = ss_norm(&f, ball)?;
        let scale = ball.radius / norm.max(1.0);
        Ok(f.into_iter().map(|v| v * scale).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    FunctionCloud::new(
        ball.weight(),
        functions,
        ClassDescriptor::SobolevSlobodetskii {
            gamma: ball.gamma,
            m: ball.m,
            radius: ball.radius,
            length: ball.length,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEstimate {
    /// `sup_δ δ^{k/γ} ln N(δ)` over the sample prefixes.
    pub value: f64,
    pub budget: usize,
    /// Always true: a finite-sample estimate, not a proved constant.
    pub calibrated: bool,
}

/// Relative `δ` grid (multiplied by the radius).
fn relative_deltas() -> Vec<f64> {
    log_grid(1e-3, 2.0, 16)
}

fn prefix_sizes(budget: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..).map(|j| 1usize << j).take_while(|&p| p <= budget).collect();
    out.extend((1..).map(|i| 256 * i).take_while(|&p| p <= budget));
    out.sort_unstable();
    out.dedup();
    out
}

/// Estimates `λ(γ, m, R, Δ)`, the constant in `ln N(δ) ≤ λ δ^{-k/γ}` for the
/// ball, as `sup_δ δ^{k/γ} ln N(δ)` maximised over nested sample prefixes
/// (powers of two and multiples of 256 up to `budget`), so the estimate is
/// nondecreasing in the budget. The `δ` grid is a fixed relative grid times
/// `R`, which makes `λ(R) = R^{k/γ} λ(1)` hold exactly.
pub fn estimate_lambda_star(ball: &SsBall, budget: usize, seed: u64) -> Result<LambdaEstimate> {
    ball.validate()?;
    if budget <= 1 {
        return Ok(LambdaEstimate {
            value: 0.0,
            budget,
            calibrated: true,
        });
    }
    let unit = SsBall { radius: 1.0, ..*ball };
    let cloud = sample_ss_ball(&unit, budget, seed)?;
    let dm = cloud.distance_matrix();
    let k_over_g = ball.dim as f64 / ball.gamma;
    let deltas = relative_deltas();
    let mut best: f64 = 0.0;
    for p in prefix_sizes(budget) {
        let radii = traversal_radii(&dm.prefix(p));
        for &d in &deltas {
            let n = greedy_from_radii(&radii, d);
            best = best.max(d.powf(k_over_g) * (n as f64).ln());
        }
    }
    Ok(LambdaEstimate {
        value: ball.radius.powf(k_over_g) * best,
        budget,
        calibrated: true,
    })
}

/// Class whose entropy growth is checked.
#[derive(Debug, Clone)]
pub enum EntropyClass {
    /// Expected slope `k/γ` (two-sided check).
    SsBall(SsBall),
    /// Expected slope at most `1/ω` (one-sided check).
    QClass(QClassParams, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingCheck {
    pub slope: f64,
    pub expected: f64,
    pub residual_rms: f64,
    pub points: usize,
    pub pass: bool,
}

/// Fits `ln ln N(δ)` against `ln(1/δ)` over the unsaturated range
/// (`2 < N(δ) ≤ M^{0.6}` for a cloud of `M` functions) and compares the
/// slope with the entropy exponent of the class: within 25% for a ball,
/// at most 1.25 times the bound for a Q-class.
pub fn check_entropy_scaling(class: &EntropyClass, budget: usize, seed: u64) -> Result<ScalingCheck> {
    entropy_table(class, budget, seed).map(|(_, c)| c)
}

/// One scale of an entropy table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyRow {
    pub delta: f64,
    pub n: usize,
    pub ln_n: f64,
    /// Scale used by the slope fit.
    pub in_fit: bool,
}

/// Covering numbers on a log grid (32 per decade over four decades below
/// the largest traversal radius) together with the scaling check.
pub fn entropy_table(class: &EntropyClass, budget: usize, seed: u64) -> Result<(Vec<EntropyRow>, ScalingCheck)> {
    let (cloud, expected, two_sided) = match class {
        EntropyClass::SsBall(b) => (sample_ss_ball(b, budget, seed)?, b.dim as f64 / b.gamma, true),
        EntropyClass::QClass(q, omega) => {
            if !(*omega > 0.0) {
                return Err(Error::Domain("omega must be positive".into()));
            }
            (super::sample_q_class(q, budget, seed)?, 1.0 / omega, false)
        }
    };
    let radii = traversal_radii(&cloud.distance_matrix());
    let top = radii.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        // a single point: zero entropy at every scale
        return Ok((
            vec![],
            ScalingCheck {
                slope: 0.0,
                expected,
                residual_rms: 0.0,
                points: 0,
                pass: true,
            },
        ));
    }
    let cap = (cloud.len() as f64).powf(0.6);
    let (mut xs, mut ys) = (vec![], vec![]);
    let mut rows = Vec::new();
    for d in log_grid(top * 1e-4, top, 32) {
        let count = greedy_from_radii(&radii, d);
        let n = count as f64;
        let in_fit = n > 2.0 && n <= cap;
        if in_fit {
            xs.push((1.0 / d).ln());
            ys.push(n.ln().ln());
        }
        rows.push(EntropyRow {
            delta: d,
            n: count,
            ln_n: n.ln(),
            in_fit,
        });
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientResolution(format!(
            "only {} usable scales; increase the budget",
            xs.len()
        )));
    }
    let (slope, _, rms) = fit_line(&xs, &ys);
    let pass = if two_sided {
        (slope / expected - 1.0).abs() <= 0.25
    } else {
        slope <= 1.25 * expected
    };
    Ok((
        rows,
        ScalingCheck {
            slope,
            expected,
            residual_rms: rms,
            points: xs.len(),
            pass,
        },
    ))
}
