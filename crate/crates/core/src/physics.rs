//! Constants, the harmonic macrodimer potential and lattice ground states.
//!
//! Internal units: angular frequencies in rad/μs, lengths in nm, times in μs.
//! Linear frequencies in MHz only appear at the I/O boundary; see [`mhz`] and
//! [`to_mhz`].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::continuum::{ContinuumGrid, Parity};
use crate::error::{config, domain, Result};

/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Unified atomic mass unit in kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of ⁸⁷Rb in kg.
pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS_UNIT;

/// Largest number of vibrational modes a potential may carry.
pub const MAX_MODES: usize = 6;

/// Converts a linear frequency in MHz to rad/μs.
pub fn mhz(nu: f64) -> f64 {
    TAU * nu
}

/// Converts an angular frequency in rad/μs to linear MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / TAU
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// ħ/m in nm²/μs.
    pub hbar_over_m: f64,
    /// Macrodimer decay rate γ in μs⁻¹.
    pub macrodimer_decay: f64,
}

impl Constants {
    pub const RUBIDIUM_87: Constants = Constants {
        // J s / kg = m²/s = 1e18 nm² / 1e6 μs
        hbar_over_m: HBAR / RB87_MASS * 1e12,
        macrodimer_decay: 1.0 / 20.0,
    };
}

impl Default for Constants {
    fn default() -> Self {
        Self::RUBIDIUM_87
    }
}

/// Harmonic approximation of the macrodimer potential well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    /// Equilibrium distance R_v in nm.
    pub bond_length: f64,
    /// Vibrational quantum ω_v in rad/μs.
    pub omega_v: f64,
    pub n_modes: usize,
    pub constants: Constants,
}

impl PotentialModel {
    pub fn new(bond_length: f64, omega_v: f64, n_modes: usize) -> Result<Self> {
        Self::with_constants(bond_length, omega_v, n_modes, Constants::default())
    }

    pub fn with_constants(
        bond_length: f64,
        omega_v: f64,
        n_modes: usize,
        constants: Constants,
    ) -> Result<Self> {
        if !(bond_length > 0.0 && bond_length.is_finite()) {
            return Err(config(format!("bond length must be positive, got {bond_length}")));
        }
        if !(omega_v > 0.0 && omega_v.is_finite()) {
            return Err(config(format!("vibrational quantum must be positive, got {omega_v}")));
        }
        if n_modes == 0 || n_modes > MAX_MODES {
            return Err(config(format!("n_modes must lie in 1..={MAX_MODES}, got {n_modes}")));
        }
        if !(constants.hbar_over_m > 0.0) {
            return Err(config("hbar_over_m must be positive"));
        }
        let model = Self { bond_length, omega_v, n_modes, constants };
        if model.harmonic_length() > 0.1 * bond_length {
            return Err(config(format!(
                "harmonic length {:.3} nm is not small compared with R_v = {bond_length} nm",
                model.harmonic_length()
            )));
        }
        Ok(model)
    }

    /// The 0u⁻ macrodimer: R_v = 712 nm, ω_v = 2π·3.8 MHz.
    pub fn macrodimer(n_modes: usize) -> Result<Self> {
        Self::new(712.0, mhz(3.8), n_modes)
    }

    /// l = sqrt(2ħ/(m ω_v)), the oscillator length of the relative coordinate
    /// (reduced mass m/2).
    pub fn harmonic_length(&self) -> f64 {
        (2.0 * self.constants.hbar_over_m / self.omega_v).sqrt()
    }

    /// Energy of mode v above the potential minimum, v·ω_v.
    pub fn mode_energy(&self, v: usize) -> f64 {
        v as f64 * self.omega_v
    }

    fn check_mode(&self, v: usize) -> Result<()> {
        if v >= self.n_modes {
            return Err(domain(format!("mode {v} outside 0..{}", self.n_modes)));
        }
        Ok(())
    }

    /// Φ_v at offset x = R − R_v. Exactly parity-symmetric in x.
    pub fn mode_at_offset(&self, v: usize, x: f64) -> Result<f64> {
        self.check_mode(v)?;
        let l = self.harmonic_length();
        Ok(hermite_function(v, x / l) / l.sqrt())
    }

    /// ∫Φ_v(x) cos(κx) dx for the even-channel and ∫Φ_v(x) sin(κx) dx for the
    /// odd-channel; x measured from R_v. Zero when v has the other parity.
    pub fn mode_transform(&self, v: usize, parity: Parity, kappa: f64) -> Result<f64> {
        self.check_mode(v)?;
        // ∫Φ_v e^{-iκx} = (-i)^v √(2π l) h_v(κl)
        let sign = match (parity, v % 4) {
            (Parity::Even, 0) | (Parity::Odd, 1) => 1.0,
            (Parity::Even, 2) | (Parity::Odd, 3) => -1.0,
            _ => return Ok(0.0),
        };
        let l = self.harmonic_length();
        Ok(sign * (TAU * l).sqrt() * hermite_function(v, kappa * l))
    }
}

/// Normalized Hermite function h_n(ξ) = (2ⁿ n! √π)^{-1/2} H_n(ξ) e^{-ξ²/2}.
pub fn hermite_function(n: usize, xi: f64) -> f64 {
    hermite_functions(n, xi)[n]
}

/// h_0(ξ) through h_n(ξ) by the stable three-term recurrence.
pub fn hermite_functions(n: usize, xi: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(PI.powf(-0.25) * (-0.5 * xi * xi).exp());
    if n >= 1 {
        h.push(2f64.sqrt() * xi * h[0]);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * xi * h[k] - (kf / (kf + 1.0)).sqrt() * h[k - 1];
        h.push(next);
    }
    h
}

/// Φ_v(R) in nm^{-1/2}.
pub fn vibrational_wavefunction(model: &PotentialModel, v: usize, r: f64) -> Result<f64> {
    model.mode_at_offset(v, r - model.bond_length)
}

/// Overlaps f_j = ⟨κ_j|Φ_v⟩ with the standing-wave continuum states of one
/// parity channel. Opposite-parity channels give exact zeros.
pub fn franck_condon(
    model: &PotentialModel,
    v: usize,
    grid: &ContinuumGrid,
    parity: Parity,
) -> Result<Vec<f64>> {
    model.check_mode(v)?;
    let resolution = grid.spacing() * model.harmonic_length();
    if resolution > 0.5 {
        return Err(config(format!(
            "continuum grid too coarse: Δκ·l = {resolution:.3} exceeds 0.5"
        )));
    }
    let norm = (2.0 / grid.box_length()).sqrt();
    (0..grid.n_k())
        .map(|j| Ok(norm * model.mode_transform(v, parity, grid.kappa(parity, j))?))
        .collect()
}

/// ⟨Φ_v| -ħ²/m ∂²|Φ_v⟩ evaluated in the continuum basis, Σ f_j² ħκ_j²/m.
pub fn kinetic_energy_expectation(
    model: &PotentialModel,
    v: usize,
    grid: &ContinuumGrid,
) -> Result<f64> {
    let hom = model.constants.hbar_over_m;
    let mut sum = 0.0;
    for parity in [Parity::Even, Parity::Odd] {
        let f = franck_condon(model, v, grid, parity)?;
        for (j, fj) in f.iter().enumerate() {
            let k = grid.kappa(parity, j);
            sum += fj * fj * hom * k * k;
        }
    }
    Ok(sum)
}

/// Square optical lattice whose diagonal neighbours sit near R_v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Lattice constant in nm.
    pub lattice_constant: f64,
    /// On-site trap frequency in rad/μs.
    pub omega_lat: f64,
    pub constants: Constants,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self { lattice_constant: 532.0, omega_lat: mhz(0.128), constants: Constants::default() }
    }
}

impl LatticeParams {
    pub fn new(lattice_constant: f64, omega_lat: f64) -> Result<Self> {
        if !(lattice_constant > 0.0 && lattice_constant.is_finite()) {
            return Err(config("lattice constant must be positive"));
        }
        if !(omega_lat > 0.0 && omega_lat.is_finite()) {
            return Err(config("lattice trap frequency must be positive"));
        }
        Ok(Self { lattice_constant, omega_lat, constants: Constants::default() })
    }

    /// Diagonal neighbour distance √2·a.
    pub fn diagonal_spacing(&self) -> f64 {
        2f64.sqrt() * self.lattice_constant
    }

    /// Single-atom position spread sqrt(ħ/(2mω)).
    pub fn site_width(&self) -> f64 {
        (self.constants.hbar_over_m / (2.0 * self.omega_lat)).sqrt()
    }
}

/// A Gaussian relative-coordinate wave packet. `width` is the standard
/// deviation of |ψ|².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub center: f64,
    pub width: f64,
    pub normalized: bool,
}

impl GaussianState {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && center.is_finite()) {
            return Err(config(format!("invalid Gaussian state: center {center}, width {width}")));
        }
        Ok(Self { center, width, normalized: true })
    }

    fn prefactor(&self) -> f64 {
        if self.normalized {
            (TAU * self.width * self.width).powf(-0.25)
        } else {
            1.0
        }
    }

    pub fn amplitude(&self, r: f64) -> f64 {
        let d = r - self.center;
        self.prefactor() * (-d * d / (4.0 * self.width * self.width)).exp()
    }

    /// Overlaps with the standing waves of `grid` whose box is centred on
    /// `origin`.
    pub fn standing_wave_overlaps(
        &self,
        grid: &ContinuumGrid,
        origin: f64,
        parity: Parity,
    ) -> Vec<f64> {
        let d = self.center - origin;
        let w2 = self.width * self.width;
        let scale = (2.0 / grid.box_length()).sqrt() * self.prefactor() * (4.0 * PI * w2).sqrt();
        (0..grid.n_k())
            .map(|j| {
                let k = grid.kappa(parity, j);
                let phase = match parity {
                    Parity::Even => (k * d).cos(),
                    Parity::Odd => (k * d).sin(),
                };
                scale * (-w2 * k * k).exp() * phase
            })
            .collect()
    }
}

/// Relative-coordinate ground state of two atoms on diagonal neighbour
/// sites: centred at √2·a with width √2 times the single-site spread.
pub fn lattice_relative_ground_state(lattice: &LatticeParams) -> GaussianState {
    GaussianState {
        center: lattice.diagonal_spacing(),
        width: 2f64.sqrt() * lattice.site_width(),
        normalized: true,
    }
}

/// Composite Simpson rule on [a, b] with an even number of panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(n: usize) -> PotentialModel {
        PotentialModel::macrodimer(n).unwrap()
    }

    #[test]
    fn hbar_over_m_from_codata() {
        let c = Constants::default();
        // 1.054571817e-34 / (86.909180527 * 1.66053906660e-27) m²/s
        let si = 1.054571817e-34 / (86.909180527 * 1.66053906660e-27);
        assert_relative_eq!(c.hbar_over_m, si * 1e12, max_relative = 1e-14);
        assert!((c.hbar_over_m - 730.74).abs() < 0.01);
    }

    #[test]
    fn ground_mode_rms_width() {
        let m = model(1);
        let l = m.harmonic_length();
        assert_relative_eq!(l, (2.0 * m.constants.hbar_over_m / m.omega_v).sqrt());
        let second = simpson(
            |x| x * x * m.mode_at_offset(0, x).unwrap().powi(2),
            -10.0 * l,
            10.0 * l,
            4000,
        );
        assert_relative_eq!(second.sqrt(), l / 2f64.sqrt(), max_relative = 1e-9);
        assert!((second.sqrt() - 5.53).abs() < 0.01);
    }

    #[test]
    fn modes_are_orthonormal() {
        let m = model(6);
        let l = m.harmonic_length();
        for a in 0..6 {
            for b in 0..6 {
                let s = simpson(
                    |x| m.mode_at_offset(a, x).unwrap() * m.mode_at_offset(b, x).unwrap(),
                    -12.0 * l,
                    12.0 * l,
                    6000,
                );
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-10, "<{a}|{b}> = {s}");
            }
        }
    }

    #[test]
    fn odd_mode_vanishes_at_equilibrium() {
        let m = model(4);
        assert_eq!(vibrational_wavefunction(&m, 1, m.bond_length).unwrap(), 0.0);
        assert_eq!(vibrational_wavefunction(&m, 3, m.bond_length).unwrap(), 0.0);
    }

    #[test]
    fn mode_parity_is_exact() {
        let m = model(6);
        for v in 0..6 {
            for &x in &[0.3, 1.7, 4.1, 9.9, 17.0] {
                let sign = if v % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(
                    m.mode_at_offset(v, x).unwrap(),
                    sign * m.mode_at_offset(v, -x).unwrap()
                );
            }
        }
    }

    #[test]
    fn analytic_transform_matches_quadrature() {
        let m = model(6);
        let l = m.harmonic_length();
        for v in 0..6 {
            for &k in &[0.0, 0.05, 0.13, 0.31] {
                let cos = simpson(|x| m.mode_at_offset(v, x).unwrap() * (k * x).cos(), -8.0 * l, 8.0 * l, 4000);
                let sin = simpson(|x| m.mode_at_offset(v, x).unwrap() * (k * x).sin(), -8.0 * l, 8.0 * l, 4000);
                assert!((m.mode_transform(v, Parity::Even, k).unwrap() - cos).abs() < 1e-9);
                assert!((m.mode_transform(v, Parity::Odd, k).unwrap() - sin).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn franck_condon_is_complete() {
        let m = model(6);
        let grid = ContinuumGrid::new(400, 1.5).unwrap();
        for v in 0..6 {
            let total: f64 = [Parity::Even, Parity::Odd]
                .iter()
                .map(|&p| franck_condon(&m, v, &grid, p).unwrap().iter().map(|f| f * f).sum::<f64>())
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "v={v}: {total}");
        }
    }

    #[test]
    fn franck_condon_parity_selection() {
        let m = model(2);
        let grid = ContinuumGrid::new(200, 1.0).unwrap();
        assert!(franck_condon(&m, 0, &grid, Parity::Odd).unwrap().iter().all(|&f| f == 0.0));
        assert!(franck_condon(&m, 1, &grid, Parity::Even).unwrap().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = model(1);
        let grid = ContinuumGrid::new(10, 1.0).unwrap();
        assert!(franck_condon(&m, 0, &grid, Parity::Even).is_err());
    }

    #[test]
    fn virial_kinetic_energy() {
        // For a harmonic mode <T> = (v + 1/2) ω_v / 2.
        let m = model(3);
        let grid = ContinuumGrid::new(400, 1.2).unwrap();
        for v in 0..3 {
            let t = kinetic_energy_expectation(&m, v, &grid).unwrap();
            let expect = (v as f64 + 0.5) * m.omega_v / 2.0;
            assert_relative_eq!(t, expect, max_relative = 1e-2);
        }
    }

    #[test]
    fn invalid_potentials_rejected() {
        assert!(PotentialModel::new(712.0, mhz(3.8), 0).is_err());
        assert!(PotentialModel::new(712.0, mhz(3.8), 7).is_err());
        assert!(PotentialModel::new(712.0, -1.0, 1).is_err());
        assert!(PotentialModel::new(30.0, mhz(3.8), 1).is_err());
        assert!(model(2).mode_at_offset(2, 0.0).is_err());
    }

    #[test]
    fn lattice_ground_state_geometry() {
        let lat = LatticeParams::default();
        let g = lattice_relative_ground_state(&lat);
        assert_relative_eq!(g.center, 532.0 * 2f64.sqrt(), max_relative = 1e-15);
        let sigma = (lat.constants.hbar_over_m / (2.0 * mhz(0.128))).sqrt();
        assert_relative_eq!(g.width, 2f64.sqrt() * sigma, max_relative = 1e-14);
        assert!((g.width - 30.14).abs() < 0.05);
        let stiff = LatticeParams::new(532.0, 4.0 * mhz(0.128)).unwrap();
        assert_relative_eq!(lattice_relative_ground_state(&stiff).width, g.width / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_state_normalized() {
        let g = GaussianState::new(100.0, 7.0).unwrap();
        let n = simpson(|r| g.amplitude(r).powi(2), 100.0 - 56.0, 100.0 + 56.0, 4000);
        assert!((n - 1.0).abs() < 1e-10);
        assert!(GaussianState::new(0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_standing_wave_overlaps_match_quadrature() {
        let g = GaussianState::new(740.0, 20.0).unwrap();
        let grid = ContinuumGrid::new(100, 0.5).unwrap();
        let origin = 712.0;
        let l = grid.box_length();
        for parity in [Parity::Even, Parity::Odd] {
            let ov = g.standing_wave_overlaps(&grid, origin, parity);
            for j in [0, 3, 17] {
                let k = grid.kappa(parity, j);
                let basis = |x: f64| {
                    let phase = match parity {
                        Parity::Even => (k * x).cos(),
                        Parity::Odd => (k * x).sin(),
                    };
                    (2.0 / l).sqrt() * phase
                };
                let q = simpson(|x| basis(x) * g.amplitude(origin + x), 28.0 - 200.0, 28.0 + 200.0, 8000);
                assert!((ov[j] - q).abs() < 1e-10);
            }
        }
    }
}
