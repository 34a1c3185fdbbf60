use upfn_demo::{exceedance_json, simulate_field_json, upper_table_json};

#[test]
fn field_shares_noise_and_is_reproducible() {
    let a = simulate_field_json("epanechnikov", "0,2", 7).unwrap();
    let b = simulate_field_json("epanechnikov", "0,2", 7).unwrap();
    assert_eq!(a, b);
    let fields = a["fields"].as_array().unwrap();
    assert_eq!(fields.len(), 2);
    assert_eq!(fields[0].as_array().unwrap().len(), a["x"].as_array().unwrap().len());
    let c = simulate_field_json("epanechnikov", "0,2", 8).unwrap();
    assert_ne!(a["fields"], c["fields"]);
}

#[test]
fn upper_table_grows_as_bandwidth_shrinks() {
    let t = upper_table_json("triangle", 2.0, 4.0).unwrap();
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    let pe: Vec<f64> = rows.iter().map(|r| r["psi_eps"].as_f64().unwrap()).collect();
    assert!(pe.windows(2).all(|w| w[1] > w[0]), "{pe:?}");
    assert!(t["bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn exceedance_curve_is_a_survival_function() {
    let c = exceedance_json("epanechnikov", 1, 200, 3).unwrap();
    let rows = c["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    let emp: Vec<f64> = rows.iter().map(|r| r["empirical"].as_f64().unwrap()).collect();
    assert!(emp.windows(2).all(|w| w[1] <= w[0]));
    assert!(emp.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn bad_input_is_an_error() {
    assert!(simulate_field_json("no-such-kernel", "0", 1).is_err());
    assert!(upper_table_json("triangle", 2.0, 0.0).is_err());
}
