//! Covering numbers and Dudley integrals of finite function clouds, plus
//! the Sobolev–Slobodetskii machinery used to calibrate entropy constants.

mod qclass;
mod sobolev;

pub use qclass::{sample_q_class, QClassParams};
pub use sobolev::{
    check_entropy_scaling, entropy_table, estimate_lambda_star, sample_ss_ball, ss_norm, ss_norm_fn, EntropyClass,
    EntropyRow, LambdaEstimate, ScalingCheck, SsBall,
};

use crate::error::{Error, Result};
use crate::par::map_indexed;
use serde::Serialize;

/// Class a cloud was sampled from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ClassDescriptor {
    Custom,
    LipschitzBall,
    SobolevSlobodetskii { gamma: f64, m: f64, radius: f64, length: f64 },
    QClass,
}

/// Functions tabulated on a common grid, compared in `L_2` with the grid
/// cell volume as quadrature weight.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionCloud {
    pub weight: f64,
    pub functions: Vec<Vec<f64>>,
    pub class: ClassDescriptor,
}

impl FunctionCloud {
    pub fn new(weight: f64, functions: Vec<Vec<f64>>, class: ClassDescriptor) -> Result<Self> {
        if let Some(f) = functions.first() {
            if functions.iter().any(|g| g.len() != f.len()) {
                return Err(Error::Domain("cloud functions must share one grid".into()));
            }
        }
        if !(weight > 0.0) {
            return Err(Error::Domain("quadrature weight must be positive".into()));
        }
        Ok(Self {
            weight,
            functions,
            class,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let s: f64 = self.functions[i]
            .iter()
            .zip(&self.functions[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (self.weight * s).sqrt()
    }

    /// Full symmetric distance matrix, row-major.
    pub fn distance_matrix(&self) -> DistanceMatrix {
        let n = self.len();
        let rows: Vec<Vec<f64>> = map_indexed(n, |i| (0..n).map(|j| if i == j { 0.0 } else { self.distance(i, j) }).collect());
        DistanceMatrix {
            n,
            d: rows.into_iter().flatten().collect(),
        }
    }

    /// Same cloud with every function multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weight: self.weight,
            functions: self
                .functions
                .iter()
                .map(|f| f.iter().map(|v| c * v).collect())
                .collect(),
            class: self.class.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn prefix(&self, m: usize) -> Self {
        let m = m.min(self.n);
        let mut d = Vec::with_capacity(m * m);
        for i in 0..m {
            d.extend_from_slice(&self.d[i * self.n..i * self.n + m]);
        }
        Self { n: m, d }
    }
}

/// Farthest-point traversal from sample 0 (ties to the lowest index).
/// `radii[k - 1]` is the covering radius with the first `k` centres, so the
/// greedy covering number at `δ` is the least `k` with `radii[k-1] <= δ`.
pub fn traversal_radii(dm: &DistanceMatrix) -> Vec<f64> {
    let n = dm.n;
    if n == 0 {
        return vec![];
    }
    let mut mind = vec![f64::INFINITY; n];
    let mut radii = Vec::with_capacity(n);
    let mut centre = 0;
    loop {
        for (j, m) in mind.iter_mut().enumerate() {
            *m = m.min(dm.get(centre, j));
        }
        let (far, r) = mind
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        radii.push(r);
        if r <= 0.0 || radii.len() == n {
            break;
        }
        centre = far;
    }
    radii
}

/// Greedy covering number from precomputed traversal radii.
pub fn greedy_from_radii(radii: &[f64], delta: f64) -> usize {
    radii.iter().position(|&r| r <= delta).map_or(radii.len(), |k| k + 1)
}

/// Greedy farthest-point covering with centres at the samples.
pub fn greedy_covering(cloud: &FunctionCloud, delta: f64) -> usize {
    greedy_from_radii(&traversal_radii(&cloud.distance_matrix()), delta)
}

/// Largest cloud solved exactly.
pub const EXACT_LIMIT: usize = 12;

/// Exact minimum number of closed `δ`-balls covering the cloud, with
/// centres at the samples or at midpoints of sample pairs. Only for clouds
/// of at most [`EXACT_LIMIT`] functions.
pub fn exact_covering(dm: &DistanceMatrix, delta: f64) -> Result<usize> {
    let n = dm.n;
    if n > EXACT_LIMIT {
        return Err(Error::Capacity(format!("exact covering limited to {EXACT_LIMIT} points, got {n}")));
    }
    if n == 0 {
        return Ok(0);
    }
    let masks = candidate_masks(dm, delta);
    let full = (1usize << n) - 1;
    let mut dp = vec![usize::MAX; 1 << n];
    dp[0] = 0;
    for mask in 0..=full {
        if dp[mask] == usize::MAX {
            continue;
        }
        if mask == full {
            break;
        }
        // the lowest uncovered point must be covered by some candidate
        let low = (!mask & full).trailing_zeros() as usize;
        for &c in &masks {
            if c & (1 << low) != 0 {
                let next = mask | c;
                dp[next] = dp[next].min(dp[mask] + 1);
            }
        }
    }
    Ok(dp[full])
}

fn candidate_masks(dm: &DistanceMatrix, delta: f64) -> Vec<usize> {
    let n = dm.n;
    let tol = 1e-12 * (1.0 + delta);
    let mut masks = Vec::new();
    for i in 0..n {
        let m = (0..n).filter(|&k| dm.get(i, k) <= delta + tol).fold(0, |acc, k| acc | 1 << k);
        masks.push(m);
        for j in i + 1..n {
            let dij = dm.get(i, j);
            let m = (0..n)
                .filter(|&k| {
                    let d2 = 0.5 * dm.get(i, k).powi(2) + 0.5 * dm.get(j, k).powi(2) - 0.25 * dij * dij;
                    d2.max(0.0).sqrt() <= delta + tol
                })
                .fold(0, |acc, k| acc | 1 << k);
            masks.push(m);
        }
    }
    masks.sort_unstable();
    masks.dedup();
    masks
}

/// Covering number: exact for clouds of at most [`EXACT_LIMIT`] functions,
/// greedy farthest-point otherwise.
pub fn covering_number(cloud: &FunctionCloud, delta: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let dm = cloud.distance_matrix();
    if cloud.len() <= EXACT_LIMIT {
        exact_covering(&dm, delta)
    } else {
        Ok(greedy_from_radii(&traversal_radii(&dm), delta))
    }
}

/// `4√2 ∫_0^{σ/2} √(ln N(δ)) dδ` together with the resolution of the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dudley {
    pub value: f64,
    /// Smallest positive pairwise distance; below it `N(δ)` is the cloud size.
    pub delta_min: f64,
}

/// Dudley integral with `N(δ)` piecewise constant between its breakpoints,
/// integrated exactly.
pub fn dudley_integral(cloud: &FunctionCloud, sigma_top: f64) -> Result<Dudley> {
    if !(sigma_top > 0.0) {
        return Err(Error::Domain("sigma_top must be positive".into()));
    }
    let dm = cloud.distance_matrix();
    let n = dm.n;
    let delta_min = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| dm.get(i, j))
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let top = sigma_top / 2.0;
    let value = if n <= EXACT_LIMIT {
        // N changes only where δ crosses a centre-to-point distance
        let mut cuts: Vec<f64> = vec![0.0, top];
        for i in 0..n {
            for k in 0..n {
                cuts.push(dm.get(i, k));
                for j in i + 1..n {
                    let dij = dm.get(i, j);
                    let d2 = 0.5 * dm.get(i, k).powi(2) + 0.5 * dm.get(j, k).powi(2) - 0.25 * dij * dij;
                    cuts.push(d2.max(0.0).sqrt());
                }
            }
        }
        cuts.retain(|&c| c >= 0.0 && c <= top);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                let mid = 0.5 * (w[0] + w[1]);
                let nn = exact_covering(&dm, mid)?;
                acc += (nn as f64).ln().sqrt() * (w[1] - w[0]);
            }
        }
        acc
    } else {
        let radii = traversal_radii(&dm);
        // N(δ) = k on [radii[k-1], radii[k-2])
        let mut acc = 0.0;
        let mut upper = top;
        for k in (1..=radii.len()).rev() {
            let lo = radii[k - 1].max(0.0);
            let hi = if k >= 2 { radii[k - 2] } else { f64::INFINITY };
            let a = lo.min(upper);
            let b = hi.min(upper);
            if b > a {
                acc += (k as f64).ln().sqrt() * (b - a);
            }
            upper = upper.min(top);
        }
        acc
    };
    Ok(Dudley {
        value: 4.0 * 2f64.sqrt() * value,
        delta_min: if delta_min.is_finite() { delta_min } else { 0.0 },
    })
}

/// Dudley integral on a log-spaced `δ` grid (`per_decade` points per decade
/// down to `delta_min`), right-endpoint rule. Used to check the exact
/// version against grid refinement.
pub fn dudley_integral_on_grid(cloud: &FunctionCloud, sigma_top: f64, per_decade: usize) -> Result<f64> {
    let d = dudley_integral(cloud, sigma_top)?;
    let top = sigma_top / 2.0;
    let dm = cloud.distance_matrix();
    let radii = traversal_radii(&dm);
    let lo = (d.delta_min / 10.0).max(top * 1e-12);
    let decades = (top / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(2);
    let grid: Vec<f64> = (0..=n).map(|i| lo * (top / lo).powf(i as f64 / n as f64)).collect();
    let count = |delta: f64| -> Result<usize> {
        if cloud.len() <= EXACT_LIMIT {
            exact_covering(&dm, delta)
        } else {
            Ok(greedy_from_radii(&radii, delta))
        }
    };
    let mut acc = (count(lo)? as f64).ln().sqrt() * lo;
    for w in grid.windows(2) {
        let mid = (w[0] * w[1]).sqrt();
        acc += (count(mid)? as f64).ln().sqrt() * (w[1] - w[0]);
    }
    Ok(4.0 * 2f64.sqrt() * acc)
}

/// Log-spaced grid with `per_decade` points per decade on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect()
}

/// Least-squares slope and residual RMS of `y` on `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    fn cloud_from(points: &[Vec<f64>]) -> FunctionCloud {
        FunctionCloud::new(1.0, points.to_vec(), ClassDescriptor::Custom).unwrap()
    }

    fn random_cloud(m: usize, dim: usize, seed: u64) -> FunctionCloud {
        let mut s = NormalStream::new(seed, 0);
        cloud_from(&(0..m).map(|_| (0..dim).map(|_| s.next_normal()).collect()).collect::<Vec<_>>())
    }

    #[test]
    fn trivial_coverings() {
        let one = cloud_from(&[vec![1.0, 2.0]]);
        for d in [1e-6, 0.5, 10.0] {
            assert_eq!(covering_number(&one, d).unwrap(), 1);
        }
        let two = cloud_from(&[vec![0.0], vec![1.0]]);
        assert_eq!(covering_number(&two, 0.4).unwrap(), 2);
        assert_eq!(covering_number(&two, 0.6).unwrap(), 1);
    }

    #[test]
    fn greedy_dominates_exact() {
        for seed in 0..20 {
            let c = random_cloud(10, 3, seed);
            let dm = c.distance_matrix();
            let radii = traversal_radii(&dm);
            for delta in [0.3, 0.7, 1.2, 2.0] {
                let g = greedy_from_radii(&radii, delta);
                let e = exact_covering(&dm, delta).unwrap();
                assert!(g >= e, "seed {seed} delta {delta}: {g} < {e}");
                // greedy centres are δ-separated, so no δ/2-ball holds two
                assert!(g <= exact_covering(&dm, delta / 2.0).unwrap());
            }
        }
    }

    #[test]
    fn covering_monotone_and_scale_equivariant() {
        let c = random_cloud(60, 4, 5);
        let mut prev = usize::MAX;
        for k in 0..40 {
            let d = 0.05 * (k + 1) as f64;
            let n = covering_number(&c, d).unwrap();
            assert!(n <= prev);
            prev = n;
            assert_eq!(covering_number(&c.scaled(3.0), 3.0 * d).unwrap(), n);
        }
        let diam = (0..60).flat_map(|i| (0..60).map(move |j| (i, j))).map(|(i, j)| c.distance(i, j)).fold(0.0, f64::max);
        assert_eq!(covering_number(&c, diam).unwrap(), 1);
    }

    #[test]
    fn dudley_examples() {
        let one = cloud_from(&[vec![0.3]]);
        assert_eq!(dudley_integral(&one, 1.0).unwrap().value, 0.0);
        let two = cloud_from(&[vec![0.0], vec![1.0]]);
        // N = 2 below the midpoint radius 1/2, N = 1 above
        let want = 4.0 * 2f64.sqrt() * 2f64.ln().sqrt() * 0.5;
        assert!((dudley_integral(&two, 2.0).unwrap().value - want).abs() < 1e-12);
        let g = dudley_integral_on_grid(&two, 2.0, 64).unwrap();
        assert!((g - want).abs() / want < 0.05);
    }

    #[test]
    fn dudley_grid_refinement() {
        let c = random_cloud(50, 6, 9);
        let a = dudley_integral_on_grid(&c, 4.0, 32).unwrap();
        let b = dudley_integral_on_grid(&c, 4.0, 64).unwrap();
        let exact = dudley_integral(&c, 4.0).unwrap().value;
        assert!((a - b).abs() / b < 0.01);
        assert!((b - exact).abs() / exact < 0.01);
    }

    #[test]
    fn dudley_scale_equivariance() {
        let c = random_cloud(40, 5, 2);
        let a = dudley_integral(&c, 3.0).unwrap().value;
        let b = dudley_integral(&c.scaled(2.0), 6.0).unwrap().value;
        assert!((b - 2.0 * a).abs() < 1e-9 * b);
    }

    #[test]
    fn triangle_inequality_spot_check() {
        let c = random_cloud(15, 7, 4);
        for i in 0..15 {
            for j in 0..15 {
                assert_eq!(c.distance(i, j), c.distance(j, i));
                for k in 0..15 {
                    assert!(c.distance(i, k) <= c.distance(i, j) + c.distance(j, k) + 1e-12);
                }
            }
        }
    }
}
