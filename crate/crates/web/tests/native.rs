use serde_json::Value;
use tokenpool_web::{certify_json, curves_json, preset, simulate_json};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn presets_are_at_unit_load() {
    for name in ["toy", "half-pool", "two-type", "overtaking"] {
        let m = preset(name, 2).unwrap();
        assert!((m.load() - 1.0).abs() < 1e-12, "{name}");
    }
    assert!(preset("nope", 1).is_err());
    assert!(preset("toy", 0).is_err());
}

#[test]
fn toy_curves() {
    let v = parse(curves_json("toy", 1, 2.0, 4).unwrap());
    assert_eq!(v["rho"].as_array().unwrap().len(), 4);
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 4);
    assert_eq!(curves[0]["policy"], "exact-dynamic");
    let exact = curves[0]["beta"][1].as_f64().unwrap();
    let ideal = curves[3]["beta"][1].as_f64().unwrap();
    assert!(ideal <= exact);
    assert!(v["errors"].as_array().unwrap().is_empty());
    assert!(curves_json("toy", 1, 2.0, 0).is_err());
}

#[test]
fn half_pool_best_static_is_one_seventh_at_unit_load() {
    let v = parse(curves_json("half-pool", 6, 1.0, 1).unwrap());
    let best = v["curves"][1]["beta"][0].as_f64().unwrap();
    assert!((best - 1.0 / 7.0).abs() < 1e-12);
}

#[test]
fn simulation_tracks_exact() {
    let v = parse(simulate_json("toy", 1, 0.8, 4, 40_000, 5).unwrap());
    let exact = v["exact_beta"].as_f64().unwrap();
    for side in ["fcfs", "balanced_fairness"] {
        let b = v[side]["beta"].as_f64().unwrap();
        assert!((b - exact).abs() < 0.02, "{side}: {b} vs {exact}");
    }
    assert!(simulate_json("toy", 1, 0.8, 1, 100, 5).is_err());
}

#[test]
fn certificates() {
    let v = parse(certify_json("toy", 2).unwrap());
    assert_eq!(v["irreducible"], true);
    assert!(v["tv"].as_f64().unwrap() < 1e-10);
    assert!(v["rate_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["ordering"], serde_json::json!([0, 1]));
    let v = parse(certify_json("overtaking", 1).unwrap());
    assert!(v["tv"].as_f64().unwrap() < 1e-10);
    assert!(certify_json("two-type", 4).unwrap_err().contains("cap"));
}
