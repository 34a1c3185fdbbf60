#![allow(dead_code)]

use upfn_core::rng::NormalStream;
use upfn_core::upper::UpperFnConfig;
use upfn_core::verify::{BandwidthSpec, BoxSpec, OracleSettings, Scenario};

/// `count` piecewise-constant bandwidths on `(-b, b)`, breakpoints on the
/// `1/32` lattice, at most `max_pieces` pieces, levels in `0..=max_s`.
pub fn random_bandwidths(count: usize, b: f64, max_pieces: usize, max_s: u32, seed: u64) -> Vec<BandwidthSpec> {
    let mut rng = NormalStream::new(seed, 99);
    let slots = (64.0 * b) as usize;
    (0..count)
        .map(|_| {
            let pieces = 1 + (rng.next_uniform() * max_pieces as f64) as usize % max_pieces;
            let mut cuts: Vec<usize> = (0..pieces - 1)
                .map(|_| 1 + (rng.next_uniform() * (slots - 1) as f64) as usize)
                .collect();
            cuts.sort_unstable();
            cuts.dedup();
            let mut pts = vec![0usize];
            pts.extend(cuts);
            pts.push(slots);
            let boxes = pts
                .windows(2)
                .map(|w| BoxSpec {
                    lo: vec![-b + w[0] as f64 / 32.0],
                    hi: vec![-b + w[1] as f64 / 32.0],
                    s: vec![(rng.next_uniform() * (max_s + 1) as f64) as u32 % (max_s + 1)],
                })
                .collect();
            BandwidthSpec::Boxes { boxes }
        })
        .collect()
}

pub fn scenario(name: &str, kernel: &str, cfg: UpperFnConfig, bandwidths: Vec<BandwidthSpec>) -> Scenario {
    Scenario {
        name: name.into(),
        kernel: kernel.into(),
        bandwidths,
        cfg,
        replicates: 200,
        delta: 1e-3,
        grid_n: 128,
        seed: 1,
        upper: vec![],
        oracles: OracleSettings::default(),
        exceedance_levels: 0,
    }
}

pub fn e(x: f64) -> f64 {
    x.exp()
}
