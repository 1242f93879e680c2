use std::path::Path;
use std::process::Command;

use dimeron_core::correlations::Offset;
use dimeron_core::io::image_set_from_json;
use dimeron_core::sampler::{generate_images, SampleConfig};

fn lab(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dimeron-lab"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("DIMERON_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn spectrum2_header_and_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["spectrum2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("spectrum2_omega_6.2.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta_p_mhz,c_abs,loss_signal,broadened"));
    let axis: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(axis.len(), 2001);
    assert!(axis.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn sample_then_correlate_is_lossless_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sampler.p3 = 0.05\nsampler.n_shots = 1500\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert!(lab(d, &["--config", &cfg, "--seed", "9", "sample"]).status.success());
    }
    let bytes = std::fs::read(a.join("images.json")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("images.json")).unwrap());

    // the file holds exactly what the library generates
    let parsed = image_set_from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
    let direct = generate_images(&SampleConfig { p3: 0.05, n_shots: 1500, seed: 9, ..Default::default() }).unwrap();
    assert_eq!(parsed, direct);

    for d in [&a, &b] {
        let images = d.join("images.json");
        let out = lab(d, &["--config", &cfg, "correlate", images.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["g2_map.csv", "g3_map.csv", "correlate.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("correlate.json")).unwrap()).unwrap();
    let argmax: Offset = serde_json::from_value(summary["g3_argmax"].clone()).unwrap();
    assert_eq!(argmax, Offset::new(1, -1));

    let g3 = std::fs::read_to_string(a.join("g3_map.csv")).unwrap();
    assert!(g3.starts_with("dx,dy,value,error\n"));
    // excluded offsets are present but empty
    assert!(g3.lines().any(|l| l == "0,0,,"));
    assert!(g3.lines().any(|l| l == "-1,1,,"));
}

#[test]
fn unknown_key_exits_with_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "spectrum.stepsize = 0.1\n");
    let out = lab(dir.path(), &["--config", &cfg, "spectrum2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stepsize") && err.lines().count() == 1, "{err}");
}

#[test]
fn invalid_physics_exits_with_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "model.n_k = 20\n");
    assert_eq!(lab(dir.path(), &["--config", &cfg, "spectrum2"]).status.code(), Some(1));
    let missing = dir.path().join("nope.json");
    assert_eq!(lab(dir.path(), &["correlate", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn unreachable_fit_exits_with_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sampler.n_shots = 200\n");
    // a G2 this large cannot be produced on a 90 % filled lattice
    let out = lab(dir.path(), &["--config", &cfg, "fit-ratio", "--g2", "0.9", "--g3", "-0.001"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("fit_ratio.json").exists());
}

#[test]
fn splitting_and_phases_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "model.omega_c_mhz = [3.0, 5.0]\nmodel.n_k = 300\n");
    assert!(lab(dir.path(), &["--config", &cfg, "--threads", "2", "splitting"]).status.success());
    let s = std::fs::read_to_string(dir.path().join("splitting.csv")).unwrap();
    assert!(s.starts_with("omega_c_mhz,e_neg_mhz,e_pos_mhz,splitting_mhz\n"));
    assert_eq!(s.lines().count(), 3);
    assert!(lab(dir.path(), &["--config", &cfg, "phases"]).status.success());
    let p = std::fs::read_to_string(dir.path().join("phases_omega_3.csv")).unwrap();
    assert!(p.starts_with("energy_mhz,phase,phase_unwrapped,dphase_de,reliable,parity\n"));
    assert!(p.contains(",even\n") && p.contains(",odd\n"));
}
