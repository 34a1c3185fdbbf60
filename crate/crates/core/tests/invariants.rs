mod common;

use common::{e, random_bandwidths, scenario};
use proptest::prelude::*;
use upfn_core::bandwidth::{read_bandwidth_csv, write_bandwidth_csv, GeometricNet, MultiBandwidth};
use upfn_core::entropy::{exact_covering, greedy_covering, sample_ss_ball, FunctionCloud, SsBall};
use upfn_core::field::lp_norm;
use upfn_core::grid::Grid;
use upfn_core::kernel::Kernel;
use upfn_core::upper::{psi_eps, Constants, UpperFnConfig};
use upfn_core::verify::{run_scenario, BandwidthSpec, UpperKind};

fn config() -> UpperFnConfig {
    UpperFnConfig::new(2.0, 1.0, e(-3.0), 0.5, 1, e(-2.0), 0.5, 2.0, 4.0).unwrap()
}

fn net() -> GeometricNet {
    GeometricNet::new(e(-2.0), 8).unwrap()
}

fn cloud(seed: u64) -> FunctionCloud {
    sample_ss_ball(&SsBall::new(0.75, 2.0, 1.0, 1.0, 1), 12, seed).unwrap()
}

/// Piecewise-constant bandwidth from cut slots on the 1/32 lattice.
fn bandwidth(cuts: &[usize], levels: &[u32]) -> MultiBandwidth {
    let mut pts: Vec<usize> = cuts.iter().map(|c| 1 + c % 31).collect();
    pts.sort_unstable();
    pts.dedup();
    let mut breaks = vec![-0.5];
    breaks.extend(pts.iter().map(|&c| -0.5 + c as f64 / 32.0));
    breaks.push(0.5);
    let s = (0..breaks.len() - 1).map(|i| vec![levels[i % levels.len()]]).collect();
    MultiBandwidth::new(0.5, net(), vec![breaks], s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_norm_is_a_norm(
        v in prop::collection::vec(-5.0f64..5.0, 32),
        w in prop::collection::vec(-5.0f64..5.0, 32),
        c in -4.0f64..4.0,
        p in 1.0f64..4.0,
    ) {
        let g = Grid::new(0.5, 1, 32).unwrap();
        let cv: Vec<f64> = v.iter().map(|x| c * x).collect();
        let n = lp_norm(&v, &g, p);
        prop_assert!((lp_norm(&cv, &g, p) - c.abs() * n).abs() <= 1e-12 * (1.0 + n * c.abs()));
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        prop_assert!(lp_norm(&sum, &g, p) <= n + lp_norm(&w, &g, p) + 1e-12);
    }

    #[test]
    fn covering_monotone_in_delta(seed in 0u64..1000, d1 in 0.01f64..1.0, d2 in 0.01f64..1.0) {
        let c = cloud(seed);
        let dm = c.distance_matrix();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(exact_covering(&dm, lo).unwrap() >= exact_covering(&dm, hi).unwrap());
        prop_assert!(greedy_covering(&c, hi) >= exact_covering(&dm, hi).unwrap());
    }

    #[test]
    fn covering_scale_equivariant(seed in 0u64..1000, delta in 0.01f64..1.0, k in -3i32..4) {
        let c = cloud(seed);
        let f = 2f64.powi(k);
        let a = exact_covering(&c.distance_matrix(), delta).unwrap();
        let b = exact_covering(&c.scaled(f).distance_matrix(), f * delta).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn psi_eps_grows_as_bandwidth_shrinks(
        cuts in prop::collection::vec(0usize..64, 0..4),
        levels in prop::collection::vec(0u32..6, 1..5),
        bump in 1u32..3,
    ) {
        let k = Constants::new(config(), Kernel::from_catalog("triangle", 1).unwrap()).unwrap();
        let h = bandwidth(&cuts, &levels);
        let finer: Vec<u32> = levels.iter().map(|s| s + bump).collect();
        let g = bandwidth(&cuts, &finer);
        prop_assert!(psi_eps(&g, &k).unwrap() >= psi_eps(&h, &k).unwrap());
    }

    #[test]
    fn bandwidth_csv_round_trip(
        cuts in prop::collection::vec(0usize..64, 0..6),
        levels in prop::collection::vec(0u32..9, 1..6),
    ) {
        let h = bandwidth(&cuts, &levels);
        let mut buf = Vec::new();
        write_bandwidth_csv(&h, &mut buf).unwrap();
        let back = read_bandwidth_csv(buf.as_slice(), net()).unwrap();
        for i in 0..64 {
            let x = [-0.5 + (i as f64 + 0.5) / 64.0];
            prop_assert_eq!(h.h_at(&x), back.h_at(&x));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Adding bandwidths to the collection never lowers a replicate's deficit.
    #[test]
    fn deficit_monotone_in_collection(seed in 0u64..10_000, extra in 1usize..4) {
        // the s = 0 member fixes the noise lattice for both collections
        let mut small = vec![BandwidthSpec::Constant { s: vec![0] }];
        small.extend(random_bandwidths(3, 0.5, 3, 3, seed));
        let mut large = small.clone();
        large.extend(random_bandwidths(extra, 0.5, 3, 3, seed + 1));
        let mut sc = scenario("monotone", "epanechnikov", config(), small);
        sc.upper = vec![UpperKind::PsiEps, UpperKind::Envelope { factor: 0.5 }];
        sc.replicates = 40;
        sc.seed = seed;
        let a = run_scenario(&sc).unwrap();
        sc.bandwidths = large;
        let b = run_scenario(&sc).unwrap();
        for (ua, ub) in a.upper.iter().zip(&b.upper) {
            for (x, y) in ua.deficits.iter().zip(&ub.deficits) {
                prop_assert!(y >= x, "{} {} < {}", ua.kind.label(), y, x);
            }
        }
    }
}
