mod common;

use common::{e, scenario};
use upfn_core::field::{read_dump, write_dump, DumpHeader};
use upfn_core::grid::{Grid, GriddedFunction};
use upfn_core::upper::UpperFnConfig;
use upfn_core::verify::{oracle_suite, run_scenario, BandwidthSpec, Scenario};

fn config() -> UpperFnConfig {
    UpperFnConfig::new(2.0, 1.0, e(-3.0), 0.5, 1, e(-2.0), 0.5, 2.0, 4.0).unwrap()
}

#[test]
fn dump_round_trip() {
    let header = DumpHeader { dims: vec![3], replicates: 2, bandwidths: 2 };
    let values = vec![
        vec![vec![1.0, -2.0, 3.5], vec![0.0, 1e-300, -0.0]],
        vec![vec![f64::MAX, 4.0, 5.0], vec![6.0, 7.0, 8.0]],
    ];
    let mut buf = Vec::new();
    write_dump(&mut buf, &header, &values).unwrap();
    let (h, v) = read_dump(buf.as_slice()).unwrap();
    assert_eq!(h, header);
    assert_eq!(v, values);
    assert!(read_dump(&buf[..buf.len() - 1]).is_err());
}

#[test]
fn grid_csv_round_trip_both_dims() {
    for dim in [1, 2] {
        let g = Grid::new(0.5, dim, 8).unwrap();
        let f = GriddedFunction::from_fn(g, |x| x.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum());
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GriddedFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid.dim, dim);
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn scenario_json_round_trip() {
    let mut sc = scenario("json", "triangle", config(), vec![BandwidthSpec::Constant { s: vec![1] }]);
    sc.oracles.covariance_pairs = Some(vec![(10, 12)]);
    let text = serde_json::to_string(&sc).unwrap();
    assert_eq!(Scenario::from_json(&text).unwrap(), sc);
}

#[test]
fn oracles_pass_on_triangle_two_dims() {
    let cfg = UpperFnConfig::new(2.0, 1.0, e(-3.0), 0.5, 2, e(-2.0), 0.5, 2.0, 4.0).unwrap();
    let mut sc = scenario("2d", "triangle", cfg, vec![BandwidthSpec::Constant { s: vec![1, 1] }]);
    sc.grid_n = 32;
    sc.delta = 4e-3;
    sc.replicates = 400;
    let r = oracle_suite(&sc).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.holder.as_ref().unwrap().violations == 0);
}

#[test]
fn same_seed_same_report() {
    let mut sc = scenario("seed", "epanechnikov", config(), vec![BandwidthSpec::Constant { s: vec![0] }, BandwidthSpec::Constant { s: vec![2] }]);
    sc.replicates = 60;
    sc.exceedance_levels = 6;
    let a = serde_json::to_string(&run_scenario(&sc).unwrap()).unwrap();
    let b = serde_json::to_string(&run_scenario(&sc).unwrap()).unwrap();
    assert_eq!(a, b);
    sc.seed += 1;
    assert_ne!(a, serde_json::to_string(&run_scenario(&sc).unwrap()).unwrap());
}
