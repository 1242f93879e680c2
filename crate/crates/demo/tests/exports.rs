//! The exported functions return JSON the page can parse. Error paths build
//! a `JsError`, which only exists on wasm32, so only successes are run here.

use dimeron_demo::{correlation_maps, phase_curves, two_atom_spectrum};
use serde_json::Value;

fn parse(text: String) -> Value {
    serde_json::from_str(&text).expect("valid JSON")
}

#[test]
fn exports_return_parseable_json() {
    let s = parse(two_atom_spectrum(4.4, 0.0, 0.15).ok().unwrap());
    assert!(s["positive"]["width"].as_f64().unwrap() > 0.0);
    let p = parse(phase_curves(4.4, 0.0).ok().unwrap());
    assert!(p["even"]["phase"].is_array());
    let c = parse(correlation_maps(0.04, 0.0, 200, 3).ok().unwrap());
    assert_eq!(c["ratio"], "large");
    assert!(c["events"]["pairs"].as_u64().unwrap() > 0);
}
