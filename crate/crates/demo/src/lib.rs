//! Browser bindings for the interactive page in `www/`. Every export takes
//! plain numbers in MHz and returns a JSON string; the page draws it on a
//! canvas.

use dimeron_core::correlations::{g2_map, g3_map, CorrMap};
use dimeron_core::fano2::{absorption_spectrum, find_macrodimerons, scattering_phases, solve_two_atom, TwoAtomModel};
use dimeron_core::sampler::{generate, EventRatio, SampleConfig};
use dimeron_core::spectrum::detuning_axis;
use dimeron_core::{mhz, to_mhz, Parity, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const HALF_WINDOW: i32 = 3;

fn mhz_vec(xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    xs.into_iter().map(to_mhz).collect()
}

/// Broadened two-atom spectrum with the macrodimeron summary.
pub fn spectrum_json(omega_c: f64, delta_c: f64, broadening: f64) -> Result<Value> {
    let model = TwoAtomModel::with_defaults(mhz(omega_c), mhz(delta_c))?;
    let eigs = solve_two_atom(&model)?;
    let axis = detuning_axis(mhz(-10.0), mhz(10.0), mhz(0.02))?;
    let s = absorption_spectrum(&eigs, &model, &axis, mhz(broadening))?;
    let report = find_macrodimerons(&eigs, &model)?;
    Ok(json!({
        "axis": mhz_vec(s.axis.iter().copied()),
        "loss": s.broadened,
        "maxima": mhz_vec(s.maxima()),
        "negative": report.negative.map(|n| json!({
            "energy": to_mhz(n.energy),
            "macrodimer_weight": n.macrodimer_weight,
            "motional_overlap": n.motional_overlap,
        })),
        "positive": report.positive.map(|p| json!({ "energy": to_mhz(p.energy), "width": to_mhz(p.width) })),
    }))
}

/// Unwrapped scattering phase of both channels against energy.
pub fn phases_json(omega_c: f64, delta_c: f64) -> Result<Value> {
    let model = TwoAtomModel::with_defaults(mhz(omega_c), mhz(delta_c))?;
    let eigs = solve_two_atom(&model)?;
    let mut out = serde_json::Map::new();
    for parity in [Parity::Even, Parity::Odd] {
        let curve = scattering_phases(&eigs, &model, parity)?;
        let (e, phase): (Vec<f64>, Vec<f64>) =
            curve.points.iter().filter(|p| p.reliable).map(|p| (to_mhz(p.energy), p.unwrapped)).unzip();
        out.insert(parity.as_str().into(), json!({ "energy": e, "phase": phase }));
    }
    Ok(Value::Object(out))
}

fn map_json(map: &CorrMap) -> Value {
    let cells: Vec<Value> = map
        .cells
        .iter()
        .map(|(o, r)| json!([o.dx, o.dy, r.map(|r| r.value)]))
        .collect();
    json!({ "half": map.half, "cells": cells, "argmax": map.argmax() })
}

/// Samples a lattice image set and returns its G2 and G3 maps.
pub fn correlations_json(p2: f64, p3: f64, n_shots: usize, seed: u64) -> Result<Value> {
    let cfg = SampleConfig { p2, p3, n_shots, seed, ..Default::default() };
    let sample = generate(&cfg)?;
    let r0 = cfg.pair_offset();
    Ok(json!({
        "r0": r0,
        "g2": map_json(&g2_map(&sample.images, HALF_WINDOW)),
        "g3": map_json(&g3_map(&sample.images, r0, HALF_WINDOW)),
        "events": sample.events,
        "ratio": EventRatio::from_counts(sample.events).to_string(),
    }))
}

fn js(result: Result<Value>) -> std::result::Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn two_atom_spectrum(omega_c_mhz: f64, delta_c_mhz: f64, broadening_mhz: f64) -> std::result::Result<String, JsError> {
    js(spectrum_json(omega_c_mhz, delta_c_mhz, broadening_mhz))
}

#[wasm_bindgen]
pub fn phase_curves(omega_c_mhz: f64, delta_c_mhz: f64) -> std::result::Result<String, JsError> {
    js(phases_json(omega_c_mhz, delta_c_mhz))
}

#[wasm_bindgen]
pub fn correlation_maps(p2: f64, p3: f64, n_shots: u32, seed: u32) -> std::result::Result<String, JsError> {
    js(correlations_json(p2, p3, n_shots as usize, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_has_three_maxima() {
        let v = spectrum_json(6.2, 0.0, 0.15).unwrap();
        assert_eq!(v["maxima"].as_array().unwrap().len(), 3);
        assert_eq!(v["axis"].as_array().unwrap().len(), v["loss"].as_array().unwrap().len());
        assert!(v["negative"]["energy"].as_f64().unwrap() < -3.0);
    }

    #[test]
    fn phases_cover_both_channels() {
        let v = phases_json(5.0, 0.0).unwrap();
        assert!(!v["even"]["energy"].as_array().unwrap().is_empty());
        assert!(!v["odd"]["phase"].as_array().unwrap().is_empty());
    }

    #[test]
    fn triple_loss_peaks_opposite_the_pair() {
        let v = correlations_json(0.0, 0.05, 400, 1).unwrap();
        assert_eq!(v["g3"]["argmax"], json!({ "dx": 1, "dy": -1 }));
        assert_eq!(v["g2"]["cells"].as_array().unwrap().len(), 49);
        assert!(correlations_json(1.5, 0.0, 10, 0).is_err());
    }
}
