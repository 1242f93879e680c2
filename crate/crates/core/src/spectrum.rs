//! Stick spectra on a detuning axis: binning, Gaussian broadening, peak
//! finding and Lorentzian fits.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// One eigenstate's contribution to a probe spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stick {
    pub energy: f64,
    /// |⟨Ψ_n|H_P|Φ_g⟩|².
    pub c_abs: f64,
    /// Loss fraction f(E_n).
    pub loss_fraction: f64,
    pub macrodimer_weight: f64,
}

impl Stick {
    pub fn loss_signal(&self) -> f64 {
        self.loss_fraction * self.c_abs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    /// Weighted centroid of the broadened signal around the maximum.
    pub center: f64,
    pub peak: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub axis: Vec<f64>,
    pub c_abs: Vec<f64>,
    pub loss_signal: Vec<f64>,
    pub broadened: Vec<f64>,
    /// Gaussian standard deviation in rad/μs.
    pub broadening: f64,
    pub sticks: Vec<Stick>,
    pub lines: Vec<SpectralLine>,
}

/// Relative prominence below which maxima are treated as ripple.
pub const DEFAULT_PROMINENCE: f64 = 0.01;

impl SpectrumResult {
    /// Bins sticks onto `axis` and convolves the loss signal.
    pub fn from_sticks(axis: Vec<f64>, sticks: Vec<Stick>, broadening: f64) -> Result<Self> {
        let step = axis_step(&axis)?;
        let energies: Vec<f64> = sticks.iter().map(|s| s.energy).collect();
        let c: Vec<f64> = sticks.iter().map(|s| s.c_abs).collect();
        let l: Vec<f64> = sticks.iter().map(Stick::loss_signal).collect();
        let c_abs = bin_sticks(&axis, &energies, &c);
        let loss_signal = bin_sticks(&axis, &energies, &l);
        let broadened = gaussian_convolve(&loss_signal, step, broadening);
        Ok(Self::assemble(axis, c_abs, loss_signal, broadened, broadening, sticks))
    }

    /// Assembles a spectrum whose signals were evaluated point by point.
    pub fn assemble(
        axis: Vec<f64>,
        c_abs: Vec<f64>,
        loss_signal: Vec<f64>,
        broadened: Vec<f64>,
        broadening: f64,
        sticks: Vec<Stick>,
    ) -> Self {
        let lines = local_maxima(&broadened, DEFAULT_PROMINENCE)
            .into_iter()
            .map(|i| SpectralLine {
                center: weighted_centroid(&axis, &broadened, axis[i], 2.0 * broadening),
                peak: broadened[i],
                index: i,
            })
            .collect();
        Self { axis, c_abs, loss_signal, broadened, broadening, sticks, lines }
    }

    /// Axis positions of the broadened maxima.
    pub fn maxima(&self) -> Vec<f64> {
        self.lines.iter().map(|l| self.axis[l.index]).collect()
    }
}

/// Uniform axis from `min` to `max` inclusive.
pub fn detuning_axis(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && min.is_finite() && max.is_finite() && max > min) {
        return Err(config(format!("invalid axis [{min}, {max}] step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    if n > 10_000_000 {
        return Err(config("axis has too many points"));
    }
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

fn axis_step(axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(config("axis needs at least two points"));
    }
    Ok((axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64)
}

/// Linear (cloud-in-cell) binning of weighted sticks onto a uniform axis.
/// Weight is conserved for sticks inside the axis range; outside sticks are
/// dropped.
pub fn bin_sticks(axis: &[f64], positions: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; axis.len()];
    if axis.len() < 2 {
        return out;
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    for (&e, &w) in positions.iter().zip(weights) {
        let t = (e - axis[0]) / step;
        if !(t >= 0.0 && t <= (axis.len() - 1) as f64) {
            continue;
        }
        let i = (t.floor() as usize).min(axis.len() - 2);
        let frac = t - i as f64;
        out[i] += w * (1.0 - frac);
        out[i + 1] += w * frac;
    }
    out
}

/// Tent kernel matching [`bin_sticks`], evaluated at offset `d`.
pub fn tent(d: f64, step: f64) -> f64 {
    (1.0 - d.abs() / step).max(0.0)
}

/// Discrete Gaussian kernel weight at offset `d` for a grid of spacing
/// `step`; the weights sum to one over the grid.
pub fn gaussian_weight(d: f64, step: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return tent(d, step);
    }
    step / (TAU.sqrt() * sigma) * (-0.5 * d * d / (sigma * sigma)).exp()
}

/// Convolution with a Gaussian of standard deviation `sigma`, kernel
/// truncated at ±6σ and normalized to unit sum. Zero padding at the edges.
pub fn gaussian_convolve(signal: &[f64], step: f64, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return signal.to_vec();
    }
    let half = ((6.0 * sigma / step).ceil() as usize).max(1);
    let mut kernel: Vec<f64> =
        (0..=2 * half).map(|i| (-0.5 * ((i as f64 - half as f64) * step / sigma).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let n = signal.len();
    let mut out = vec![0.0; n];
    for (i, &s) in signal.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        for j in lo..=hi {
            out[j] += s * kernel[j + half - i];
        }
    }
    out
}

/// Indices of local maxima whose topographic prominence exceeds
/// `relative_prominence` times the global maximum. Plateaus report their
/// first point.
pub fn local_maxima(signal: &[f64], relative_prominence: f64) -> Vec<usize> {
    let n = signal.len();
    let global = signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if n < 3 || !(global > 0.0) {
        return Vec::new();
    }
    let threshold = relative_prominence * global;
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if signal[i] > signal[i - 1] {
            let mut j = i;
            while j + 1 < n && signal[j + 1] == signal[i] {
                j += 1;
            }
            if j + 1 < n && signal[j + 1] < signal[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
        .into_iter()
        .filter(|&p| {
            let h = signal[p];
            let mut left_min = h;
            for k in (0..p).rev() {
                if signal[k] > h {
                    break;
                }
                left_min = left_min.min(signal[k]);
            }
            let mut right_min = h;
            for &s in &signal[p + 1..] {
                if s > h {
                    break;
                }
                right_min = right_min.min(s);
            }
            h - left_min.max(right_min) >= threshold
        })
        .collect()
}

/// Signal-weighted mean position within `center ± half_window`.
pub fn weighted_centroid(axis: &[f64], signal: &[f64], center: f64, half_window: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&x, &s) in axis.iter().zip(signal) {
        if (x - center).abs() <= half_window {
            num += x * s;
            den += s;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        center
    }
}

/// y ≈ amplitude·(Γ/2)/((x−x₀)² + Γ²/4) + background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    /// Full width at half maximum Γ.
    pub fwhm: f64,
    pub amplitude: f64,
    pub background: f64,
    /// Root-mean-square deviation of the fit.
    pub rms: f64,
}

fn lorentz_profile(x: f64, center: f64, fwhm: f64) -> f64 {
    let h = 0.5 * fwhm;
    h / ((x - center).powi(2) + h * h)
}

/// Least-squares amplitude and background for fixed centre and width.
fn linear_part(x: &[f64], y: &[f64], center: f64, fwhm: f64) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mut sb, mut sbb, mut sy, mut sby) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let b = lorentz_profile(xi, center, fwhm);
        sb += b;
        sbb += b * b;
        sy += yi;
        sby += b * yi;
    }
    let det = n * sbb - sb * sb;
    let (amp, bg) = if det.abs() > 1e-300 {
        ((n * sby - sb * sy) / det, (sbb * sy - sb * sby) / det)
    } else {
        (0.0, sy / n)
    };
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (amp * lorentz_profile(xi, center, fwhm) + bg - yi).powi(2))
        .sum();
    (amp, bg, sse)
}

/// Fits a Lorentzian peak to the samples with `lo ≤ x ≤ hi`. Grid search in
/// centre and log-width, linear solve for amplitude and background, then
/// pattern-search refinement. `None` with fewer than five samples.
pub fn fit_lorentzian(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<LorentzianFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(&xi, _)| xi >= lo && xi <= hi).map(|(a, b)| (*a, *b)).unzip();
    if xs.len() < 5 {
        return None;
    }
    let span = hi - lo;
    let min_spacing = xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let (w_lo, w_hi) = ((0.2 * min_spacing).max(1e-6 * span), 5.0 * span);
    let n_grid = 160;
    let mut best = (f64::INFINITY, lo, w_lo);
    for i in 0..n_grid {
        let c = lo + span * i as f64 / (n_grid - 1) as f64;
        for j in 0..n_grid {
            let w = w_lo * (w_hi / w_lo).powf(j as f64 / (n_grid - 1) as f64);
            let (amp, _, sse) = linear_part(&xs, &ys, c, w);
            if amp > 0.0 && sse < best.0 {
                best = (sse, c, w);
            }
        }
    }
    if !best.0.is_finite() {
        return None;
    }
    let (mut sse, mut c, mut lw) = (best.0, best.1, best.2.ln());
    let (mut dc, mut dw) = (span / n_grid as f64, (w_hi / w_lo).ln() / n_grid as f64);
    for _ in 0..200 {
        let mut improved = false;
        for (tc, tw) in [(c + dc, lw), (c - dc, lw), (c, lw + dw), (c, lw - dw)] {
            let (amp, _, s) = linear_part(&xs, &ys, tc, tw.exp());
            if amp > 0.0 && s < sse {
                sse = s;
                c = tc;
                lw = tw;
                improved = true;
            }
        }
        if !improved {
            dc *= 0.5;
            dw *= 0.5;
            if dc < 1e-12 * span.max(1e-300) {
                break;
            }
        }
    }
    let (amplitude, background, sse) = linear_part(&xs, &ys, c, lw.exp());
    Some(LorentzianFit {
        center: c,
        fwhm: lw.exp(),
        amplitude,
        background,
        rms: (sse / xs.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axis_is_inclusive_and_uniform() {
        let a = detuning_axis(-1.0, 1.0, 0.25).unwrap();
        assert_eq!(a.len(), 9);
        assert_eq!(a[8], 1.0);
        assert!(detuning_axis(1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn single_gaussian_peak_found_at_center() {
        let axis = detuning_axis(-5.0, 5.0, 0.01).unwrap();
        let binned = bin_sticks(&axis, &[0.503], &[2.0]);
        let b = gaussian_convolve(&binned, 0.01, 0.3);
        let peaks = local_maxima(&b, 0.01);
        assert_eq!(peaks.len(), 1);
        assert!((axis[peaks[0]] - 0.5).abs() < 0.011);
        assert!((weighted_centroid(&axis, &b, axis[peaks[0]], 0.6) - 0.503).abs() < 3e-3);
    }

    #[test]
    fn small_ripples_filtered() {
        let x: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|&t| (-(t - 10.0).powi(2)).exp() + 1e-4 * (7.0 * t).sin()).collect();
        assert_eq!(local_maxima(&y, 0.01).len(), 1);
    }

    #[test]
    fn lorentzian_recovered() {
        let x: Vec<f64> = (0..300).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|&t| 3.0 * lorentz_profile(t, 6.3, 0.8) + 0.1).collect();
        let fit = fit_lorentzian(&x, &y, 2.0, 12.0).unwrap();
        assert!((fit.center - 6.3).abs() < 1e-6);
        assert!((fit.fwhm - 0.8).abs() < 1e-6);
        assert!((fit.amplitude - 3.0).abs() < 1e-5);
        assert!((fit.background - 0.1).abs() < 1e-6);
    }

    #[test]
    fn lorentzian_needs_samples() {
        assert!(fit_lorentzian(&[0.0, 1.0], &[1.0, 2.0], 0.0, 1.0).is_none());
    }

    proptest! {
        #[test]
        fn binning_and_broadening_conserve_weight(
            pos in prop::collection::vec(-3.0f64..3.0, 1..30),
            w in prop::collection::vec(0.0f64..1.0, 30),
        ) {
            let axis = detuning_axis(-10.0, 10.0, 0.02).unwrap();
            let weights = &w[..pos.len()];
            let total: f64 = weights.iter().sum();
            let binned = bin_sticks(&axis, &pos, weights);
            prop_assert!((binned.iter().sum::<f64>() - total).abs() < 1e-12);
            let b = gaussian_convolve(&binned, 0.02, 0.15);
            prop_assert!((b.iter().sum::<f64>() - total).abs() < 1e-10);
        }

        #[test]
        fn gaussian_weights_sum_to_one(sigma in 0.05f64..1.0, shift in 0.0f64..1.0) {
            let step = 0.01;
            let s: f64 = (-2000..=2000).map(|i| gaussian_weight(i as f64 * step + shift * step, step, sigma)).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
