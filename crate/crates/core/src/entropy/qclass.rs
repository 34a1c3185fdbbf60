use super::{ClassDescriptor, FunctionCloud};
use crate::error::{Error, Result};
use crate::kernel::Profile;
use crate::par::map_indexed;
use crate::rng::NormalStream;

/// One-dimensional class of normalised smoothed functions
/// `Q = λ^{-1} ∫ h^{-1/2} 𝒦((· − x)/h) ℓ(x) 1_Λ(x) dx` with `‖ℓ‖_q ≤ 1`,
/// `1/q = 1 − 1/r`, `Λ ⊆ [−b, b]` and `λ = ν(Λ)^{τ/r}`.
#[derive(Debug, Clone)]
pub struct QClassParams {
    pub profile: Profile,
    pub h: f64,
    pub b: f64,
    pub tau: f64,
    pub r: f64,
    /// Source grid points on `[−b, b]`.
    pub n: usize,
    /// Cells of `[−b, b]` from which `Λ` is assembled.
    pub pieces: usize,
}

impl QClassParams {
    pub fn new(profile: Profile, h: f64, b: f64, tau: f64, r: f64) -> Self {
        Self {
            profile,
            h,
            b,
            tau,
            r,
            n: 128,
            pieces: 8,
        }
    }
}

/// Samples `count` members: `Λ` a random union of cells, `ℓ` Gaussian on
/// `Λ` normalised to `‖ℓ‖_q = 1`. Members are tabulated on
/// `[−b − a h, b + a h]` with the source spacing.
pub fn sample_q_class(p: &QClassParams, count: usize, seed: u64) -> Result<FunctionCloud> {
    if !(p.h > 0.0 && p.b > 0.0 && p.tau > 0.0 && p.tau < 1.0 && p.r > 1.0 && p.n >= p.pieces && p.pieces > 0) {
        return Err(Error::Domain("Q-class needs h, b > 0, tau in (0, 1), r > 1".into()));
    }
    let q = p.r / (p.r - 1.0);
    let dx = 2.0 * p.b / p.n as f64;
    let src: Vec<f64> = (0..p.n).map(|i| -p.b + (i as f64 + 0.5) * dx).collect();
    let a = p.profile.support();
    let halo = (a * p.h / dx).ceil() as usize;
    let out: Vec<f64> = (0..p.n + 2 * halo)
        .map(|i| -p.b - halo as f64 * dx + (i as f64 + 0.5) * dx)
        .collect();
    let per_piece = p.n / p.pieces;
    let functions = map_indexed(count, |i| {
        let mut s = NormalStream::new(seed, i as u64);
        let mut inside: Vec<bool> = (0..p.pieces).map(|_| s.next_uniform() < 0.5).collect();
        if !inside.iter().any(|&v| v) {
            inside[(s.next_uniform() * p.pieces as f64) as usize % p.pieces] = true;
        }
        let mask: Vec<bool> = (0..p.n).map(|j| inside[(j / per_piece).min(p.pieces - 1)]).collect();
        let measure = mask.iter().filter(|&&v| v).count() as f64 * dx;
        let mut ell: Vec<f64> = mask.iter().map(|&m| if m { s.next_normal() } else { 0.0 }).collect();
        let lq = (dx * ell.iter().map(|v| v.abs().powf(q)).sum::<f64>()).powf(1.0 / q);
        ell.iter_mut().for_each(|v| *v /= lq);
        let lambda = measure.powf(p.tau / p.r);
        let c = dx / (lambda * p.h.sqrt());
        out.iter()
            .map(|&x| {
                c * src
                    .iter()
                    .zip(&ell)
                    .filter(|(_, &l)| l != 0.0)
                    .map(|(&t, &l)| p.profile.eval((x - t) / p.h) * l)
                    .sum::<f64>()
            })
            .collect()
    });
    FunctionCloud::new(dx, functions, ClassDescriptor::QClass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{check_entropy_scaling, EntropyClass};

    #[test]
    fn q_class_slope_below_bound() {
        let p = QClassParams::new(Profile::triangle(), 0.2, 0.5, 0.5, 2.0);
        let chk = check_entropy_scaling(&EntropyClass::QClass(p, 0.75), 1024, 4).unwrap();
        assert!(chk.pass, "{chk:?}");
    }

    #[test]
    fn singleton_class_is_flat() {
        let p = QClassParams::new(Profile::triangle(), 0.2, 0.5, 0.5, 2.0);
        let chk = check_entropy_scaling(&EntropyClass::QClass(p, 0.75), 1, 0).unwrap();
        assert_eq!((chk.slope, chk.pass), (0.0, true));
    }
}
