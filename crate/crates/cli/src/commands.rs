use std::path::{Path, PathBuf};

use dimeron_core::correlations::{g2, g2_map, g3, g3_map, CorrMap, CorrResult, Offset};
use dimeron_core::fano2::{absorption_spectrum, find_macrodimerons, scattering_phases, solve_two_atom, splitting_curve};
use dimeron_core::fano3::{
    absorption_spectrum3, analyze_states, identify_trimeron, solve_three_atom, spectral_features,
    stick_spectrum3, FeatureKind, StateClass,
};
use dimeron_core::io::{image_set_to_json, read_image_set};
use dimeron_core::sampler::{fit_ratio, generate, EventCounts, EventRatio, RatioFit, SampleConfig};
use dimeron_core::spectrum::SpectrumResult;
use dimeron_core::{to_mhz, Error, Parity, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{csv_bytes, json_bytes, write_atomic, Cell};

pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False when a search stopped above its tolerance; outputs are still
    /// written.
    pub converged: bool,
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out: &'a Path,
    pub verbose: bool,
}

impl Context<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn write(&self, files: &mut Vec<PathBuf>, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = write_atomic(self.out, name, &bytes)?;
        self.log(format!("wrote {}", path.display()));
        files.push(path);
        Ok(())
    }
}

/// File-name tag for a frequency as written in the config.
fn tag(mhz: f64) -> String {
    format!("{mhz}").replace('-', "m")
}

fn spectrum_csv(s: &SpectrumResult) -> Result<Vec<u8>> {
    csv_bytes(
        &["delta_p_mhz", "c_abs", "loss_signal", "broadened"],
        (0..s.axis.len()).map(|i| {
            vec![to_mhz(s.axis[i]).into(), s.c_abs[i].into(), s.loss_signal[i].into(), s.broadened[i].into()]
        }),
    )
}

fn mhz_list(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| to_mhz(x)).collect()
}

#[derive(Serialize)]
struct NegativeSummary {
    energy_mhz: f64,
    macrodimer_weight: f64,
    mode: usize,
    motional_overlap: f64,
}

#[derive(Serialize)]
struct PositiveSummary {
    energy_mhz: f64,
    width_mhz: f64,
}

#[derive(Serialize)]
struct TwoAtomSummary {
    omega_c_mhz: f64,
    maxima_mhz: Vec<f64>,
    negative: Option<NegativeSummary>,
    positive: Option<PositiveSummary>,
}

pub fn spectrum2(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.config;
    let (axis, broadening) = (cfg.axis()?, cfg.broadening()?);
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for (&listed, omega_c) in cfg.model.omega_c_mhz.iter().zip(cfg.omegas()?) {
        ctx.log(format!("two-atom spectrum at {listed} MHz"));
        let model = cfg.two_atom(omega_c)?;
        let eigs = solve_two_atom(&model)?;
        let spectrum = absorption_spectrum(&eigs, &model, &axis, broadening)?;
        let report = find_macrodimerons(&eigs, &model)?;
        ctx.write(&mut files, &format!("spectrum2_omega_{}.csv", tag(listed)), spectrum_csv(&spectrum)?)?;
        summary.push(TwoAtomSummary {
            omega_c_mhz: to_mhz(omega_c),
            maxima_mhz: mhz_list(&spectrum.maxima()),
            negative: report.negative.map(|n| NegativeSummary {
                energy_mhz: to_mhz(n.energy),
                macrodimer_weight: n.macrodimer_weight,
                mode: n.mode,
                motional_overlap: n.motional_overlap,
            }),
            positive: report
                .positive
                .map(|p| PositiveSummary { energy_mhz: to_mhz(p.energy), width_mhz: to_mhz(p.width) }),
        });
    }
    ctx.write(&mut files, "spectrum2.json", json_bytes(&summary)?)?;
    Ok(Outcome { files, converged: true })
}

#[derive(Serialize)]
struct FeatureSummary {
    kind: FeatureKind,
    centroid_mhz: Option<f64>,
    weight: f64,
    n_states: usize,
}

#[derive(Serialize)]
struct TrimeronSummary {
    energy_mhz: f64,
    analytic_overlap: f64,
    sector_weights: [f64; 5],
    class: StateClass,
}

#[derive(Serialize)]
struct ThreeAtomSummary {
    omega_c_mhz: f64,
    basis_size: usize,
    maxima_mhz: Vec<f64>,
    features: Vec<FeatureSummary>,
    trimeron: Option<TrimeronSummary>,
}

pub fn spectrum3(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.config;
    let (axis, broadening) = (cfg.axis()?, cfg.broadening()?);
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for (&listed, omega_c) in cfg.model.omega_c_mhz.iter().zip(cfg.omegas()?) {
        let model = cfg.three_atom(omega_c)?;
        ctx.log(format!("three-atom spectrum at {listed} MHz, basis {}", model.n_basis()));
        let eigs = solve_three_atom(&model)?;
        let spectrum = absorption_spectrum3(&eigs, &model, &axis, broadening)?;
        let analysis = analyze_states(&eigs, &model, broadening);
        let features = spectral_features(&stick_spectrum3(&eigs, &model), &analysis);
        let trimeron = identify_trimeron(&eigs, &model, broadening)?;
        ctx.write(&mut files, &format!("spectrum3_omega_{}.csv", tag(listed)), spectrum_csv(&spectrum)?)?;
        summary.push(ThreeAtomSummary {
            omega_c_mhz: to_mhz(omega_c),
            basis_size: model.n_basis(),
            maxima_mhz: mhz_list(&spectrum.maxima()),
            features: features
                .iter()
                .map(|f| FeatureSummary {
                    kind: f.kind,
                    centroid_mhz: f.centroid.map(to_mhz),
                    weight: f.weight,
                    n_states: f.n_states,
                })
                .collect(),
            trimeron: trimeron.map(|t| TrimeronSummary {
                energy_mhz: to_mhz(t.energy),
                analytic_overlap: t.analytic_overlap,
                sector_weights: t.sector_weights,
                class: t.analysis.class,
            }),
        });
    }
    ctx.write(&mut files, "spectrum3.json", json_bytes(&summary)?)?;
    Ok(Outcome { files, converged: true })
}

pub fn phases(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.config;
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for (&listed, omega_c) in cfg.model.omega_c_mhz.iter().zip(cfg.omegas()?) {
        ctx.log(format!("scattering phases at {listed} MHz"));
        let model = cfg.two_atom(omega_c)?;
        let eigs = solve_two_atom(&model)?;
        let mut rows = Vec::new();
        for parity in [Parity::Even, Parity::Odd] {
            let curve = scattering_phases(&eigs, &model, parity)?;
            for p in &curve.points {
                rows.push(vec![
                    to_mhz(p.energy).into(),
                    p.phase.into(),
                    p.unwrapped.into(),
                    // rad per MHz
                    (p.derivative * dimeron_core::mhz(1.0)).into(),
                    Cell::Bool(p.reliable),
                    Cell::Text(parity.as_str().to_string()),
                ]);
            }
        }
        let header = ["energy_mhz", "phase", "phase_unwrapped", "dphase_de", "reliable", "parity"];
        ctx.write(&mut files, &format!("phases_omega_{}.csv", tag(listed)), csv_bytes(&header, rows)?)?;
        let report = find_macrodimerons(&eigs, &model)?;
        summary.push(TwoAtomSummary {
            omega_c_mhz: to_mhz(omega_c),
            maxima_mhz: Vec::new(),
            negative: None,
            positive: report
                .positive
                .map(|p| PositiveSummary { energy_mhz: to_mhz(p.energy), width_mhz: to_mhz(p.width) }),
        });
    }
    ctx.write(&mut files, "phases.json", json_bytes(&summary)?)?;
    Ok(Outcome { files, converged: true })
}

#[derive(Serialize)]
struct LineFit {
    slope: f64,
    intercept_mhz: f64,
    /// Largest deviation from the line relative to the largest splitting.
    max_relative_residual: f64,
}

/// Least-squares line through (x, y).
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn splitting(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.config;
    let omegas = cfg.omegas()?;
    let model = cfg.two_atom(omegas[0])?;
    ctx.log(format!("splitting over {} couplings", omegas.len()));
    let rows = splitting_curve(&model, &omegas)?;
    let opt = |x: Option<f64>| Cell::from(x.map(to_mhz));
    let csv = csv_bytes(
        &["omega_c_mhz", "e_neg_mhz", "e_pos_mhz", "splitting_mhz"],
        rows.iter().map(|r| vec![to_mhz(r.omega_c).into(), opt(r.e_neg), opt(r.e_pos), opt(r.splitting)]),
    )?;
    let mut files = Vec::new();
    ctx.write(&mut files, "splitting.csv", csv)?;
    let (x, y): (Vec<f64>, Vec<f64>) =
        rows.iter().filter_map(|r| r.splitting.map(|s| (to_mhz(r.omega_c), to_mhz(s)))).unzip();
    let fit = fit_line(&x, &y).map(|(slope, intercept)| {
        let top = y.iter().cloned().fold(0.0, f64::max);
        let worst = x.iter().zip(&y).map(|(a, b)| (b - slope * a - intercept).abs()).fold(0.0, f64::max);
        LineFit { slope, intercept_mhz: intercept, max_relative_residual: worst / top }
    });
    ctx.write(&mut files, "splitting.json", json_bytes(&fit)?)?;
    Ok(Outcome { files, converged: true })
}

fn map_csv(map: &CorrMap) -> Result<Vec<u8>> {
    csv_bytes(
        &["dx", "dy", "value", "error"],
        map.cells.iter().map(|(o, r)| {
            vec![
                Cell::Text(o.dx.to_string()),
                Cell::Text(o.dy.to_string()),
                r.map(|r| r.value).into(),
                r.map(|r| r.error).into(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct CorrelateSummary {
    n_shots: usize,
    roi: [usize; 4],
    r0: Offset,
    g2_r0: Option<CorrResult>,
    g3_r0_minus_r0: Option<CorrResult>,
    g2_argmax: Option<Offset>,
    g3_argmax: Option<Offset>,
}

pub fn correlate(ctx: &Context, images: &Path) -> Result<Outcome> {
    let cfg = ctx.config;
    let file = std::fs::File::open(images)
        .map_err(|e| Error::Config(format!("cannot open image set {}: {e}", images.display())))?;
    let mut set = read_image_set(std::io::BufReader::new(file))?;
    if let Some(roi) = cfg.roi()? {
        set = set.with_roi(roi)?;
    }
    let (r0, window) = (cfg.r0(), cfg.correlation.window);
    ctx.log(format!("{} shots, window ±{window}", set.n_shots()));
    let m2 = g2_map(&set, window);
    let m3 = g3_map(&set, r0, window);
    let mut files = Vec::new();
    ctx.write(&mut files, "g2_map.csv", map_csv(&m2)?)?;
    ctx.write(&mut files, "g3_map.csv", map_csv(&m3)?)?;
    let roi = set.roi();
    let summary = CorrelateSummary {
        n_shots: set.n_shots(),
        roi: [roi.x0, roi.y0, roi.x1, roi.y1],
        r0,
        g2_r0: g2(&set, r0).ok(),
        g3_r0_minus_r0: g3(&set, r0, -r0).ok(),
        g2_argmax: m2.argmax(),
        g3_argmax: m3.argmax(),
    };
    ctx.write(&mut files, "correlate.json", json_bytes(&summary)?)?;
    Ok(Outcome { files, converged: true })
}

#[derive(Serialize)]
struct SampleSummary<'a> {
    config: &'a SampleConfig,
    events: EventCounts,
    ratio: String,
}

pub fn sample(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.config.sample_config();
    ctx.log(format!("{} shots of {}x{}", cfg.n_shots, cfg.width, cfg.height));
    let sample = generate(&cfg)?;
    let mut files = Vec::new();
    let mut json = image_set_to_json(&sample.images).into_bytes();
    json.push(b'\n');
    ctx.write(&mut files, "images.json", json)?;
    let summary =
        SampleSummary { config: &cfg, events: sample.events, ratio: EventRatio::from_counts(sample.events).to_string() };
    ctx.write(&mut files, "sample.json", json_bytes(&summary)?)?;
    Ok(Outcome { files, converged: true })
}

#[derive(Serialize)]
struct FitSummary<'a> {
    target_g2: f64,
    target_g3: f64,
    /// Pair events per triple event, e.g. "3.04:1", or "large".
    ratio: String,
    fit: &'a RatioFit,
}

pub fn fit(ctx: &Context, g2_target: Option<f64>, g3_target: Option<f64>) -> Result<Outcome> {
    let cfg = ctx.config;
    let t2 = g2_target.unwrap_or(cfg.fit.g2);
    let t3 = g3_target.unwrap_or(cfg.fit.g3);
    ctx.log(format!("fitting G2 = {t2:e}, G3 = {t3:e}"));
    let result = fit_ratio(t2, t3, &cfg.sample_config(), cfg.fit.tolerance)?;
    let summary = FitSummary { target_g2: t2, target_g3: t3, ratio: result.ratio.to_string(), fit: &result };
    let mut files = Vec::new();
    ctx.write(&mut files, "fit_ratio.json", json_bytes(&summary)?)?;
    Ok(Outcome { files, converged: result.converged })
}
