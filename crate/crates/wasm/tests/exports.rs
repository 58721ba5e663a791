use cpwloss_wasm::{fit_s21, fit_tls, participation_budget, synth_s21, synth_tls};
use serde_json::Value;

fn parse(reply: String) -> Value {
    let v: Value = serde_json::from_str(&reply).unwrap();
    assert!(v.get("error").is_none(), "{v}");
    v
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn budget_at_coarse_level() {
    let r = parse(participation_budget("400C", "ref", 1, 3.7, 6.0, 2.5));
    let total = r["total"].as_f64().unwrap();
    assert!((total / 9.34e-7 - 1.0).abs() < 0.25, "{total}");
    let shares: f64 = r["shares"].as_array().unwrap().iter().map(|s| s["percent"].as_f64().unwrap()).sum();
    assert!((shares - 100.0).abs() < 1e-9);
}

#[test]
fn bad_inputs_come_back_as_errors() {
    let v: Value = serde_json::from_str(&participation_budget("390C", "ref", 1, 3.7, 6.0, 2.5)).unwrap();
    assert!(v["error"].as_str().is_some());
    let v: Value = serde_json::from_str(&fit_s21(vec![1.0, 2.0], vec![1.0], vec![0.0])).unwrap();
    assert!(v["error"].as_str().is_some());
}

#[test]
fn s21_generate_then_fit() {
    let data = parse(synth_s21(6e9, 2e5, 4e5, 0.15, 30e-9, f64::NAN, 6.0, 1001, 1));
    let r = parse(fit_s21(floats(&data["frequency"]), floats(&data["re"]), floats(&data["im"])));
    let q_c = 4e5 / 0.15f64.cos();
    let q_i = 1.0 / (1.0 / 2e5 - 1.0 / q_c);
    assert!((r["fit"]["q_i"].as_f64().unwrap() / q_i - 1.0).abs() < 5e-3);
    assert_eq!(r["model"]["re"].as_array().unwrap().len(), 1001);
}

#[test]
fn tls_generate_then_fit() {
    let pts = parse(synth_tls(1e-6, 10.0, 0.4, 5e-8, 6e9, 0.01, 0.1, 1e6, 25, 0.0, 3));
    let pts = pts.as_array().unwrap();
    let col = |k: &str| pts.iter().map(|p| p[k].as_f64().unwrap()).collect::<Vec<_>>();
    let r = parse(fit_tls(col("n_photon"), col("q_i"), col("q_i_sigma"), 6e9, 0.01));
    assert!((r["fit"]["f_tan_delta0"].as_f64().unwrap() / 1e-6 - 1.0).abs() < 0.01);
    assert_eq!(r["curve"].as_array().unwrap().len(), 101);
}
