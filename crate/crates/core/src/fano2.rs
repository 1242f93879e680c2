//! Two-atom Fano model: macrodimer vibrational levels coupled by the dressing
//! laser to the singly-excited pair continuum.
//!
//! Only the symmetric electronic channel (|ge⟩ + |eg⟩)/√2 is kept; the
//! antisymmetric one is dark to both the dressing and the probe laser.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::continuum::{ContinuumGrid, Parity};
use crate::error::{config, Result};
use crate::linalg::{BasisLabel, Embedding, EigenSystem, Sector, SparseSymmetric};
use crate::parallel::par_map;
use crate::physics::{
    franck_condon, lattice_relative_ground_state, GaussianState, LatticeParams, PotentialModel,
};
use crate::spectrum::{
    fit_lorentzian, gaussian_weight, tent, LorentzianFit, SpectrumResult, Stick,
};

/// Relative eigenvector residual accepted from the dense solver.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// How the probe detuning relates to the macrodimer detuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    /// Δ_C fixed, probe detuning swept.
    Sideband,
    /// Δ_C = δ_p at every point of the scan.
    Common,
}

/// Fraction of atoms lost from an eigenstate, given its sector weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossModel {
    /// Expected number of lost atoms over the atom number: one per singly
    /// excited component, all of them per macrodimer component.
    ExpectedLostFraction,
    /// Singly-excited weight only.
    SinglyExcitedOnly,
}

impl LossModel {
    /// `lost_per_macrodimer` atoms leave with every macrodimer component, one
    /// with every singly-excited component, out of `n_atoms`.
    pub fn fraction(&self, w_se: f64, w_md: f64, lost_per_macrodimer: f64, n_atoms: f64) -> f64 {
        match self {
            LossModel::ExpectedLostFraction => (w_se + lost_per_macrodimer * w_md) / n_atoms,
            LossModel::SinglyExcitedOnly => w_se,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoAtomModel {
    /// Dressing Rabi frequency Ω_C in rad/μs.
    pub omega_c: f64,
    /// Macrodimer detuning Δ_C in rad/μs; the v = 0 level sits at −Δ_C.
    pub delta_c: f64,
    pub potential: PotentialModel,
    pub grid: ContinuumGrid,
    /// Relative-coordinate ground state probed from.
    pub ground: GaussianState,
    pub scan: ScanMode,
    pub loss: LossModel,
}

impl TwoAtomModel {
    pub fn new(
        omega_c: f64,
        delta_c: f64,
        potential: PotentialModel,
        grid: ContinuumGrid,
        ground: GaussianState,
    ) -> Result<Self> {
        let model = Self {
            omega_c,
            delta_c,
            potential,
            grid,
            ground,
            scan: ScanMode::Sideband,
            loss: LossModel::ExpectedLostFraction,
        };
        model.validate()?;
        Ok(model)
    }

    /// Lattice ground state, single vibrational mode, n_k = 400 and
    /// κ_max = 1.2 nm⁻¹.
    pub fn with_defaults(omega_c: f64, delta_c: f64) -> Result<Self> {
        Self::new(
            omega_c,
            delta_c,
            PotentialModel::macrodimer(1)?,
            ContinuumGrid::new(400, 1.2)?,
            lattice_relative_ground_state(&LatticeParams::default()),
        )
    }

    pub fn with_delta_c(&self, delta_c: f64) -> Self {
        Self { delta_c, ..*self }
    }

    pub fn with_omega_c(&self, omega_c: f64) -> Self {
        Self { omega_c, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_c >= 0.0 && self.omega_c.is_finite()) {
            return Err(config(format!("omega_C must be non-negative, got {}", self.omega_c)));
        }
        if !self.delta_c.is_finite() {
            return Err(config("delta_C must be finite"));
        }
        let hom = self.potential.constants.hbar_over_m;
        let needed = 10.0 * self.omega_c.max(self.potential.omega_v * self.potential.n_modes as f64);
        if self.grid.max_energy(hom) < needed {
            return Err(config(format!(
                "energy coverage: hbar/m·kappa_max² = {:.1} rad/us is below 10·max(omega_C, n_modes·omega_v) = {needed:.1}",
                self.grid.max_energy(hom)
            )));
        }
        let resolution = self.grid.spacing() * self.potential.harmonic_length();
        if resolution > 0.2 {
            return Err(config(format!("resolution: dkappa·l = {resolution:.3} exceeds 0.2")));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.potential.n_modes + 2 * self.grid.n_k()
    }

    /// Basis index of continuum state j of a channel.
    pub fn continuum_index(&self, parity: Parity, j: usize) -> usize {
        let base = self.potential.n_modes;
        match parity {
            Parity::Even => base + j,
            Parity::Odd => base + self.grid.n_k() + j,
        }
    }

    pub fn labels(&self) -> Vec<BasisLabel> {
        let mut labels: Vec<BasisLabel> =
            (0..self.potential.n_modes).map(|v| BasisLabel::Macrodimer { v }).collect();
        for parity in [Parity::Even, Parity::Odd] {
            labels.extend((0..self.grid.n_k()).map(|index| BasisLabel::Continuum { parity, index }));
        }
        labels
    }

    pub fn hamiltonian(&self) -> Result<SparseSymmetric> {
        self.validate()?;
        let hom = self.potential.constants.hbar_over_m;
        let mut h = SparseSymmetric::new(self.n_basis());
        for v in 0..self.potential.n_modes {
            h.set_diagonal(v, -self.delta_c + self.potential.mode_energy(v));
        }
        for parity in [Parity::Even, Parity::Odd] {
            for (j, e) in self.grid.energies(parity, hom).into_iter().enumerate() {
                h.set_diagonal(self.continuum_index(parity, j), e);
            }
        }
        let coupling = self.omega_c * FRAC_1_SQRT_2;
        for v in 0..self.potential.n_modes {
            let parity = Parity::of_mode(v);
            let f = franck_condon(&self.potential, v, &self.grid, parity)?;
            for (j, fj) in f.into_iter().enumerate() {
                h.add_coupling(v, self.continuum_index(parity, j), coupling * fj);
            }
        }
        Ok(h)
    }

    /// Parity blocks of the Hamiltonian.
    pub fn blocks(&self) -> Vec<(Sector, Embedding)> {
        [Parity::Even, Parity::Odd]
            .into_iter()
            .map(|parity| {
                let modes = (0..self.potential.n_modes).filter(|&v| Parity::of_mode(v) == parity);
                let cont = (0..self.grid.n_k()).map(|j| self.continuum_index(parity, j));
                (
                    Sector { parity, reflection: None },
                    Embedding::subset(self.n_basis(), modes.chain(cont).collect::<Vec<_>>()),
                )
            })
            .collect()
    }

    /// Probe matrix elements ⟨basis|H_P|Φ_g⟩ up to a constant; zero on the
    /// macrodimer states.
    pub fn probe_vector(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_basis()];
        for parity in [Parity::Even, Parity::Odd] {
            let ov = self.ground.standing_wave_overlaps(&self.grid, self.potential.bond_length, parity);
            for (j, x) in ov.into_iter().enumerate() {
                g[self.continuum_index(parity, j)] = x;
            }
        }
        g
    }
}

pub fn solve_two_atom(model: &TwoAtomModel) -> Result<EigenSystem> {
    let h = model.hamiltonian()?;
    let eigs = EigenSystem::solve(&h, model.labels(), model.blocks())?;
    eigs.verify(&h, RESIDUAL_TOLERANCE)?;
    Ok(eigs)
}

/// Two-level limit: the macrodimer coupled to a single continuum state at
/// zero energy with unit overlap.
pub fn solve_single_mode_toy(omega_c: f64, delta_c: f64) -> Result<EigenSystem> {
    let mut h = SparseSymmetric::new(2);
    h.set_diagonal(0, -delta_c);
    h.add_coupling(0, 1, omega_c * FRAC_1_SQRT_2);
    let labels = vec![BasisLabel::Macrodimer { v: 0 }, BasisLabel::Continuum { parity: Parity::Even, index: 0 }];
    let sector = Sector { parity: Parity::Even, reflection: None };
    EigenSystem::solve(&h, labels, vec![(sector, Embedding::subset(2, 0..2))])
}

/// Probe sticks of every eigenstate.
pub fn stick_spectrum(eigs: &EigenSystem, model: &TwoAtomModel) -> Vec<Stick> {
    let amps = eigs.project(&model.probe_vector());
    amps.iter()
        .enumerate()
        .map(|(n, a)| {
            let w_md = eigs.macrodimer_weight(n);
            Stick {
                energy: eigs.energies()[n],
                c_abs: a * a,
                loss_fraction: model.loss.fraction(1.0 - w_md, w_md, 2.0, 2.0),
                macrodimer_weight: w_md,
            }
        })
        .collect()
}

fn check_axis(axis: &[f64], max_energy: f64) -> Result<()> {
    if axis.len() < 2 {
        return Err(config("spectrum axis needs at least two points"));
    }
    let top = axis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top > 0.5 * max_energy {
        return Err(config(format!(
            "axis reaches {top:.1} rad/us, beyond half the continuum coverage {max_energy:.1}"
        )));
    }
    Ok(())
}

/// Probe spectrum on `axis` (rad/μs) with Gaussian broadening `broadening`
/// (standard deviation, rad/μs). For [`ScanMode::Common`] the Hamiltonian is
/// rebuilt at every axis point and `eigs` is not used.
pub fn absorption_spectrum(
    eigs: &EigenSystem,
    model: &TwoAtomModel,
    axis: &[f64],
    broadening: f64,
) -> Result<SpectrumResult> {
    check_axis(axis, model.grid.max_energy(model.potential.constants.hbar_over_m))?;
    match model.scan {
        ScanMode::Sideband => {
            SpectrumResult::from_sticks(axis.to_vec(), stick_spectrum(eigs, model), broadening)
        }
        ScanMode::Common => common_scan(axis, broadening, |d| {
            let m = model.with_delta_c(d);
            Ok(stick_spectrum(&solve_two_atom(&m)?, &m))
        }),
    }
}

/// Evaluates a spectrum whose Hamiltonian depends on the axis point.
pub(crate) fn common_scan(
    axis: &[f64],
    broadening: f64,
    sticks_at: impl Fn(f64) -> Result<Vec<Stick>> + Sync + Send,
) -> Result<SpectrumResult> {
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    let points = par_map(axis, |&d| {
        sticks_at(d).map(|sticks| {
            let mut out = (0.0, 0.0, 0.0);
            for s in &sticks {
                let t = tent(s.energy - d, step);
                out.0 += t * s.c_abs;
                out.1 += t * s.loss_signal();
                out.2 += gaussian_weight(s.energy - d, step, broadening) * s.loss_signal();
            }
            out
        })
    });
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult::assemble(
        axis.to_vec(),
        points.iter().map(|p| p.0).collect(),
        points.iter().map(|p| p.1).collect(),
        points.iter().map(|p| p.2).collect(),
        broadening,
        Vec::new(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Eigenenergy in rad/μs.
    pub energy: f64,
    /// Phase folded into (−π/2, π/2].
    pub phase: f64,
    pub unwrapped: f64,
    /// dδ/dE in rad per rad/μs.
    pub derivative: f64,
    /// Fit residual relative to the norm of the asymptotic wave function.
    pub residual: f64,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurve {
    pub parity: Parity,
    pub points: Vec<PhasePoint>,
}

impl PhaseCurve {
    /// Finite-difference dδ/dE at the midpoints between adjacent energies.
    pub fn midpoint_derivative(&self) -> (Vec<f64>, Vec<f64>) {
        self.points
            .windows(2)
            .map(|w| {
                (
                    0.5 * (w[0].energy + w[1].energy),
                    (w[1].unwrapped - w[0].unwrapped) / (w[1].energy - w[0].energy),
                )
            })
            .unzip()
    }

    /// Change of the unwrapped phase between the first points at or above
    /// `lo` and the last point at or below `hi`.
    pub fn accumulated(&self, lo: f64, hi: f64) -> f64 {
        let inside: Vec<&PhasePoint> =
            self.points.iter().filter(|p| p.energy >= lo && p.energy <= hi).collect();
        match (inside.first(), inside.last()) {
            (Some(a), Some(b)) => b.unwrapped - a.unwrapped,
            _ => 0.0,
        }
    }
}

/// Points in the asymptotic fitting window.
const PHASE_WINDOW_POINTS: usize = 1500;
/// Relative fit residual above which a point is flagged unreliable.
const PHASE_RESIDUAL_LIMIT: f64 = 0.05;

/// Scattering phases of the positive-energy eigenstates of one channel,
/// from a fit of the continuum wave function to
/// A·cos(kx) + B·sin(kx) on 6l ≤ |R − R_v| ≤ L/3.
///
/// The branch of each fitted phase is fixed by the hard-wall quantization
/// condition, which relates the phase to the state's rank in its block.
pub fn scattering_phases(
    eigs: &EigenSystem,
    model: &TwoAtomModel,
    parity: Parity,
) -> Result<PhaseCurve> {
    let block = eigs
        .blocks()
        .iter()
        .find(|b| b.sector.parity == parity)
        .ok_or_else(|| config("eigensystem has no block of the requested parity"))?;
    let labels = eigs.labels();
    let mut continuum_cols = Vec::new();
    let mut n_macrodimer = 0usize;
    for c in 0..block.embedding.len() {
        let (i, _) = block.embedding.column(c)[0];
        match labels[i] {
            BasisLabel::Continuum { index, .. } => continuum_cols.push((c, index)),
            _ => n_macrodimer += 1,
        }
    }
    let grid = &model.grid;
    let hom = model.potential.constants.hbar_over_m;
    let box_len = grid.box_length();
    let (x0, x1) = (6.0 * model.potential.harmonic_length(), box_len / 3.0);
    if x1 <= x0 {
        return Err(config("box too short for an asymptotic phase window"));
    }
    let xs: Vec<f64> = (0..PHASE_WINDOW_POINTS)
        .map(|i| x0 + (x1 - x0) * i as f64 / (PHASE_WINDOW_POINTS - 1) as f64)
        .collect();
    let norm = (2.0 / box_len).sqrt();
    let basis: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            continuum_cols
                .iter()
                .map(|&(_, j)| {
                    let k = grid.kappa(parity, j);
                    norm * match parity {
                        Parity::Even => (k * x).cos(),
                        Parity::Odd => (k * x).sin(),
                    }
                })
                .collect()
        })
        .collect();
    let offset = match parity {
        Parity::Even => 0.5,
        Parity::Odd => 1.0,
    };
    let mut points = Vec::new();
    for (m, &energy) in block.energies.iter().enumerate() {
        if energy <= 0.0 {
            continue;
        }
        let coeffs: Vec<f64> = continuum_cols.iter().map(|&(c, _)| block.vectors[(c, m)]).collect();
        let psi: Vec<f64> =
            basis.iter().map(|row| row.iter().zip(&coeffs).map(|(b, u)| b * u).sum()).collect();
        let k = (energy / hom).sqrt();
        let (a, b, residual) = fit_cos_sin(&xs, &psi, k);
        let phase = match parity {
            Parity::Even => fold_phase(-(b / a).atan()),
            Parity::Odd => fold_phase((a / b).atan()),
        };
        let counting = (m as f64 - n_macrodimer as f64 + offset) * PI - 0.5 * k * box_len;
        let unwrapped = phase + PI * ((counting - phase) / PI).round();
        points.push(PhasePoint {
            energy,
            phase,
            unwrapped,
            derivative: 0.0,
            residual,
            reliable: residual <= PHASE_RESIDUAL_LIMIT,
        });
    }
    fill_derivatives(&mut points);
    Ok(PhaseCurve { parity, points })
}

fn fold_phase(p: f64) -> f64 {
    if p.is_nan() {
        return 0.0;
    }
    if p <= -PI / 2.0 {
        p + PI
    } else {
        p
    }
}

/// Least-squares A, B for A cos(kx) + B sin(kx) and the relative residual.
fn fit_cos_sin(xs: &[f64], y: &[f64], k: f64) -> (f64, f64, f64) {
    let (mut cc, mut ss, mut cs, mut cy, mut sy, mut yy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &v) in xs.iter().zip(y) {
        let (s, c) = (k * x).sin_cos();
        cc += c * c;
        ss += s * s;
        cs += c * s;
        cy += c * v;
        sy += s * v;
        yy += v * v;
    }
    let det = cc * ss - cs * cs;
    let a = (ss * cy - cs * sy) / det;
    let b = (cc * sy - cs * cy) / det;
    let sse = xs
        .iter()
        .zip(y)
        .map(|(&x, &v)| (a * (k * x).cos() + b * (k * x).sin() - v).powi(2))
        .sum::<f64>();
    let rel = if yy > 0.0 { (sse / yy).sqrt() } else { 1.0 };
    (a, b, rel)
}

fn fill_derivatives(points: &mut [PhasePoint]) {
    let n = points.len();
    if n < 2 {
        return;
    }
    let slope = |a: &PhasePoint, b: &PhasePoint| (b.unwrapped - a.unwrapped) / (b.energy - a.energy);
    let d: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                slope(&points[0], &points[1])
            } else if i == n - 1 {
                slope(&points[n - 2], &points[n - 1])
            } else {
                // three-point derivative on a non-uniform grid
                let (h1, h2) = (points[i].energy - points[i - 1].energy, points[i + 1].energy - points[i].energy);
                let (s1, s2) = (slope(&points[i - 1], &points[i]), slope(&points[i], &points[i + 1]));
                (h2 * s1 + h1 * s2) / (h1 + h2)
            }
        })
        .collect();
    for (p, di) in points.iter_mut().zip(d) {
        p.derivative = di;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeMacrodimeron {
    pub index: usize,
    pub energy: f64,
    pub macrodimer_weight: f64,
    pub singly_excited_weight: f64,
    /// Vibrational mode whose motional overlap is largest.
    pub mode: usize,
    /// |⟨Φ_v|u⟩|² / ‖u‖² for the singly-excited part u.
    pub motional_overlap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveMacrodimeron {
    pub energy: f64,
    /// FWHM of the Lorentzian fitted to dδ/dE.
    pub width: f64,
    pub fit: LorentzianFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacrodimeronReport {
    /// `None` when no eigenstate lies below zero energy.
    pub negative: Option<NegativeMacrodimeron>,
    /// `None` when no resonance is resolved in the even channel.
    pub positive: Option<PositiveMacrodimeron>,
}

pub fn find_macrodimerons(eigs: &EigenSystem, model: &TwoAtomModel) -> Result<MacrodimeronReport> {
    let negative = match eigs.energies().first() {
        Some(&e) if e < 0.0 && model.omega_c > 0.0 => Some(negative_macrodimeron(eigs, model, 0)?),
        _ => None,
    };
    let positive = positive_macrodimeron(eigs, model)?;
    Ok(MacrodimeronReport { negative, positive })
}

fn negative_macrodimeron(
    eigs: &EigenSystem,
    model: &TwoAtomModel,
    n: usize,
) -> Result<NegativeMacrodimeron> {
    let v = eigs.vector(n);
    let w_md = eigs.macrodimer_weight(n);
    let se_norm: f64 = v[model.potential.n_modes..].iter().map(|x| x * x).sum();
    let mut best = (0, 0.0);
    for mode in 0..model.potential.n_modes {
        let parity = Parity::of_mode(mode);
        let f = franck_condon(&model.potential, mode, &model.grid, parity)?;
        let f_norm: f64 = f.iter().map(|x| x * x).sum();
        let dot: f64 =
            f.iter().enumerate().map(|(j, fj)| fj * v[model.continuum_index(parity, j)]).sum();
        let overlap = if se_norm > 0.0 { dot * dot / (se_norm * f_norm) } else { 0.0 };
        if overlap > best.1 {
            best = (mode, overlap);
        }
    }
    Ok(NegativeMacrodimeron {
        index: n,
        energy: eigs.energies()[n],
        macrodimer_weight: w_md,
        singly_excited_weight: 1.0 - w_md,
        mode: best.0,
        motional_overlap: best.1,
    })
}

/// Search window for the embedded resonance: around the upper root of the
/// two-level problem, extended by one vibrational quantum.
fn resonance_window(model: &TwoAtomModel) -> (f64, f64) {
    let g = model.omega_c * FRAC_1_SQRT_2;
    let upper = 0.5 * (-model.delta_c + (model.delta_c.powi(2) + 4.0 * g * g).sqrt());
    (0.5 * upper, 2.0 * upper + model.potential.omega_v)
}

fn positive_macrodimeron(eigs: &EigenSystem, model: &TwoAtomModel) -> Result<Option<PositiveMacrodimeron>> {
    if model.omega_c <= 0.0 {
        return Ok(None);
    }
    let curve = scattering_phases(eigs, model, Parity::Even)?;
    let (x, y) = curve.midpoint_derivative();
    let (lo, hi) = resonance_window(model);
    Ok(fit_lorentzian(&x, &y, lo, hi).map(|fit| PositiveMacrodimeron { energy: fit.center, width: fit.fwhm, fit }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingRow {
    pub omega_c: f64,
    pub e_neg: Option<f64>,
    pub e_pos: Option<f64>,
    pub splitting: Option<f64>,
}

/// E_neg, E_pos and their splitting for every Ω_C in `omegas`, all other
/// parameters taken from `model`.
pub fn splitting_curve(model: &TwoAtomModel, omegas: &[f64]) -> Result<Vec<SplittingRow>> {
    let rows = par_map(omegas, |&omega_c| {
        let m = model.with_omega_c(omega_c);
        let eigs = solve_two_atom(&m)?;
        let report = find_macrodimerons(&eigs, &m)?;
        let e_neg = report.negative.map(|r| r.energy);
        let e_pos = report.positive.map(|r| r.energy);
        let splitting = e_neg.zip(e_pos).map(|(n, p)| p - n);
        Ok(SplittingRow { omega_c, e_neg, e_pos, splitting })
    });
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::mhz;
    use crate::spectrum::detuning_axis;

    fn small(omega_mhz: f64) -> TwoAtomModel {
        TwoAtomModel::new(
            mhz(omega_mhz),
            0.0,
            PotentialModel::macrodimer(1).unwrap(),
            ContinuumGrid::new(200, 1.0).unwrap(),
            lattice_relative_ground_state(&LatticeParams::default()),
        )
        .unwrap()
    }

    #[test]
    fn uncoupled_macrodimer_at_zero() {
        let m = small(0.0);
        let eigs = solve_two_atom(&m).unwrap();
        let n = eigs.energies().iter().position(|&e| e == 0.0).expect("zero eigenvalue");
        assert_eq!(eigs.macrodimer_weight(n), 1.0);
    }

    #[test]
    fn toy_limit_is_analytic() {
        let om = mhz(4.0);
        let eigs = solve_single_mode_toy(om, 0.0).unwrap();
        let g = om / 2f64.sqrt();
        assert!((eigs.energies()[0] + g).abs() < 1e-12);
        assert!((eigs.energies()[1] - g).abs() < 1e-12);
        for n in 0..2 {
            assert!((eigs.macrodimer_weight(n) - 0.5).abs() < 1e-12);
        }
        assert!((eigs.energies()[1] - eigs.energies()[0] - 2f64.sqrt() * om).abs() < 1e-8);
    }

    #[test]
    fn trace_is_preserved() {
        let m = small(5.0);
        let h = m.hamiltonian().unwrap();
        let eigs = solve_two_atom(&m).unwrap();
        let trace: f64 = h.diagonal().iter().sum();
        let sum: f64 = eigs.energies().iter().sum();
        assert!((trace - sum).abs() < 1e-8 * h.norm_bound());
    }

    #[test]
    fn stick_weights_sum_to_probe_norm() {
        let m = small(3.0);
        let eigs = solve_two_atom(&m).unwrap();
        let g = m.probe_vector();
        let total: f64 = g.iter().map(|x| x * x).sum();
        let sticks = stick_spectrum(&eigs, &m);
        let s: f64 = sticks.iter().map(|s| s.c_abs).sum();
        assert!((s - total).abs() < 1e-8);
    }

    #[test]
    fn centered_ground_state_has_no_odd_weight() {
        let mut m = small(3.0);
        m.ground.center = m.potential.bond_length;
        let g = m.probe_vector();
        let odd: f64 = (0..m.grid.n_k()).map(|j| g[m.continuum_index(Parity::Odd, j)].powi(2)).sum();
        assert_eq!(odd, 0.0);
    }

    #[test]
    fn free_spectrum_is_a_single_line_at_zero() {
        let m = TwoAtomModel::with_defaults(0.0, 0.0).unwrap();
        let eigs = solve_two_atom(&m).unwrap();
        let axis = detuning_axis(mhz(-3.0), mhz(3.0), mhz(0.01)).unwrap();
        let s = absorption_spectrum(&eigs, &m, &axis, mhz(0.15)).unwrap();
        assert_eq!(s.lines.len(), 1);
        assert!(s.lines[0].center.abs() < mhz(0.15));
    }

    #[test]
    fn uncoupled_phases_vanish_modulo_pi() {
        let m = small(0.0);
        let eigs = solve_two_atom(&m).unwrap();
        for parity in [Parity::Even, Parity::Odd] {
            let curve = scattering_phases(&eigs, &m, parity).unwrap();
            assert!(!curve.points.is_empty());
            for p in &curve.points {
                let folded = p.phase - PI * (p.phase / PI).round();
                assert!(folded.abs() < 1e-8, "{parity:?} E={} phase={}", p.energy, p.phase);
                assert!(p.unwrapped.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn phase_fit_agrees_with_quantization_condition() {
        let m = small(4.0);
        let eigs = solve_two_atom(&m).unwrap();
        let curve = scattering_phases(&eigs, &m, Parity::Even).unwrap();
        let l = m.grid.box_length();
        for p in curve.points.iter().filter(|p| p.reliable) {
            // cos(kL/2 + δ) = 0 at the wall
            let k = (p.energy / m.potential.constants.hbar_over_m).sqrt();
            assert!((k * l / 2.0 + p.unwrapped).cos().abs() < 1e-6);
        }
        assert!(curve.points.iter().filter(|p| p.energy < 0.5 * m.grid.max_energy(730.0)).all(|p| p.reliable));
    }

    #[test]
    fn coverage_violation_named() {
        let err = TwoAtomModel::new(
            mhz(6.2),
            0.0,
            PotentialModel::macrodimer(1).unwrap(),
            ContinuumGrid::new(100, 0.2).unwrap(),
            lattice_relative_ground_state(&LatticeParams::default()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("coverage"));
    }

    #[test]
    fn loss_fraction_conventions() {
        let lm = LossModel::ExpectedLostFraction;
        assert_eq!(lm.fraction(1.0, 0.0, 2.0, 2.0), 0.5);
        assert_eq!(lm.fraction(0.0, 1.0, 2.0, 2.0), 1.0);
        assert_eq!(LossModel::SinglyExcitedOnly.fraction(0.3, 0.7, 2.0, 2.0), 0.3);
    }
}
