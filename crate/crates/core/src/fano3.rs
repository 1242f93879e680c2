//! Three atoms on a lattice diagonal: two relative links, each of which can
//! host the macrodimer while the third atom moves freely.
//!
//! Motion is expanded in plane waves of the two link coordinates on a
//! periodic box; the centre of mass is conserved and dropped. Link origins
//! sit at R_v, which makes the momentum-space vibrational mode real and the
//! Hamiltonian real symmetric. The lattice ground state then carries the
//! phase of its offset a − R_v.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::continuum::Parity;
use crate::error::{config, domain, Result};
use crate::fano2::{common_scan, LossModel, ScanMode, RESIDUAL_TOLERANCE};
use crate::linalg::{involution_blocks, BasisLabel, Embedding, EigenSystem, Sector, SparseSymmetric};
use crate::parallel::par_map;
use crate::physics::{simpson, GaussianState, LatticeParams, PotentialModel};
use crate::spectrum::{SpectrumResult, Stick};

/// Largest basis accepted unless configured otherwise.
pub const DEFAULT_BASIS_CAP: usize = 25_000;

/// Classification thresholds.
pub const TRIMERON_THRESHOLD: f64 = 0.5;
pub const DIMERON_THRESHOLD: f64 = 0.5;
pub const CENTRAL_MACRODIMER_LIMIT: f64 = 0.05;

/// Symmetric momentum grid k_n = (n − (n3−1)/2)·Δk with Δk = 2k_max/(n3−1),
/// periodic on a box of length 2π/Δk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    n3: usize,
    k_max: f64,
}

impl Grid3 {
    pub fn new(n3: usize, k_max: f64) -> Result<Self> {
        if n3 < 4 {
            return Err(config(format!("grid3 needs at least 4 points per link, got {n3}")));
        }
        if !(k_max > 0.0 && k_max.is_finite()) {
            return Err(config(format!("k_max must be positive, got {k_max}")));
        }
        Ok(Self { n3, k_max })
    }

    pub fn n3(&self) -> usize {
        self.n3
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.k_max / (self.n3 - 1) as f64
    }

    pub fn box_length(&self) -> f64 {
        TAU / self.spacing()
    }

    pub fn momentum(&self, n: usize) -> f64 {
        (n as f64 - 0.5 * (self.n3 - 1) as f64) * self.spacing()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n3).map(|n| self.momentum(n)).collect()
    }

    /// Index of −k_n.
    pub fn mirror(&self, n: usize) -> usize {
        self.n3 - 1 - n
    }
}

/// Which links the dressing laser couples to the macrodimer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkCoupling {
    Both,
    /// Only atoms 0 and 1 can form the macrodimer; used to compare with the
    /// two-atom model.
    FirstOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeAtomModel {
    pub omega_c: f64,
    pub delta_c: f64,
    pub potential: PotentialModel,
    pub grid: Grid3,
    pub lattice: LatticeParams,
    pub scan: ScanMode,
    pub loss: LossModel,
    pub links: LinkCoupling,
    pub basis_cap: usize,
}

impl ThreeAtomModel {
    pub fn new(
        omega_c: f64,
        delta_c: f64,
        potential: PotentialModel,
        grid: Grid3,
        lattice: LatticeParams,
    ) -> Result<Self> {
        let model = Self {
            omega_c,
            delta_c,
            potential,
            grid,
            lattice,
            scan: ScanMode::Sideband,
            loss: LossModel::ExpectedLostFraction,
            links: LinkCoupling::Both,
            basis_cap: DEFAULT_BASIS_CAP,
        };
        model.validate()?;
        Ok(model)
    }

    /// n3 = 48, k_max = 0.6 nm⁻¹, default lattice and potential.
    pub fn with_defaults(omega_c: f64, delta_c: f64) -> Result<Self> {
        Self::new(
            omega_c,
            delta_c,
            PotentialModel::macrodimer(1)?,
            Grid3::new(48, 0.6)?,
            LatticeParams::default(),
        )
    }

    pub fn with_delta_c(&self, delta_c: f64) -> Self {
        Self { delta_c, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.potential.n_modes != 1 {
            return Err(config("the three-atom model keeps a single vibrational mode (n_modes = 1)"));
        }
        if !(self.omega_c >= 0.0 && self.omega_c.is_finite()) {
            return Err(config(format!("omega_C must be non-negative, got {}", self.omega_c)));
        }
        if !self.delta_c.is_finite() {
            return Err(config("delta_C must be finite"));
        }
        let needed = 10.0 * self.omega_c.max(self.potential.omega_v);
        if self.max_kinetic_energy() < needed {
            return Err(config(format!(
                "energy coverage: 3·hbar/m·k_max² = {:.1} rad/us is below 10·max(omega_C, omega_v) = {needed:.1}",
                self.max_kinetic_energy()
            )));
        }
        let resolution = self.grid.spacing() * self.potential.harmonic_length();
        if resolution > 0.2 + 1e-12 {
            return Err(config(format!("resolution: dk·l = {resolution:.4} exceeds 0.2")));
        }
        if self.n_basis() > self.basis_cap {
            return Err(config(format!(
                "basis of {} states exceeds the cap of {}; reduce n3",
                self.n_basis(),
                self.basis_cap
            )));
        }
        Ok(())
    }

    /// Largest singly-excited kinetic energy ħ(k₁² + k₂² − k₁k₂)/m on the grid.
    pub fn max_kinetic_energy(&self) -> f64 {
        3.0 * self.potential.constants.hbar_over_m * self.grid.k_max.powi(2)
    }

    fn n3(&self) -> usize {
        self.grid.n3
    }

    pub fn n_basis(&self) -> usize {
        3 * self.n3() * self.n3() + 2 * self.n3()
    }

    pub fn se_index(&self, site: usize, k1: usize, k2: usize) -> usize {
        (site * self.n3() + k1) * self.n3() + k2
    }

    pub fn md_index(&self, link: usize, spectator: usize) -> usize {
        3 * self.n3() * self.n3() + link * self.n3() + spectator
    }

    pub fn labels(&self) -> Vec<BasisLabel> {
        let n = self.n3();
        let mut labels = Vec::with_capacity(self.n_basis());
        for site in 0..3 {
            for k1 in 0..n {
                for k2 in 0..n {
                    labels.push(BasisLabel::SinglyExcited { site, k1, k2 });
                }
            }
        }
        for link in 0..2 {
            labels.extend((0..n).map(|spectator| BasisLabel::LinkMacrodimer { link, spectator }));
        }
        labels
    }

    /// ⟨k|Φ_v⟩ on the periodic box, real and even in k.
    pub fn mode_momentum(&self, k: f64) -> f64 {
        let t = self
            .potential
            .mode_transform(0, Parity::Even, k)
            .expect("n_modes = 1 validated");
        t / self.grid.box_length().sqrt()
    }

    /// The vibrational mode sampled on the grid and normalized.
    pub fn mode_vector(&self) -> Vec<f64> {
        let v: Vec<f64> = self.grid.momenta().iter().map(|&k| self.mode_momentum(k)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }

    pub fn hamiltonian(&self) -> Result<SparseSymmetric> {
        self.validate()?;
        let n = self.n3();
        let hom = self.potential.constants.hbar_over_m;
        let k = self.grid.momenta();
        let mut h = SparseSymmetric::new(self.n_basis());
        for site in 0..3 {
            for a in 0..n {
                for b in 0..n {
                    h.set_diagonal(self.se_index(site, a, b), hom * (k[a] * k[a] + k[b] * k[b] - k[a] * k[b]));
                }
            }
        }
        for link in 0..2 {
            for q in 0..n {
                h.set_diagonal(self.md_index(link, q), -self.delta_c + hom * k[q] * k[q]);
            }
        }
        let c = 0.5 * self.omega_c;
        let phi: Vec<f64> = k.iter().map(|&x| self.mode_momentum(x)).collect();
        // link 0 joins atoms 0 and 1; its spectator coordinate is link 1
        for site in [0, 1] {
            for a in 0..n {
                for q in 0..n {
                    h.add_coupling(self.se_index(site, a, q), self.md_index(0, q), c * phi[a]);
                }
            }
        }
        if self.links == LinkCoupling::Both {
            for site in [1, 2] {
                for b in 0..n {
                    for q in 0..n {
                        h.add_coupling(self.se_index(site, q, b), self.md_index(1, q), c * phi[b]);
                    }
                }
            }
        }
        Ok(h)
    }

    /// Reverses the chain: site i → 2 − i, link momenta swapped, link 0 ↔ 1.
    pub fn reflect(&self, x: usize) -> usize {
        let n = self.n3();
        if x < 3 * n * n {
            let (site, a, b) = (x / (n * n), (x / n) % n, x % n);
            self.se_index(2 - site, b, a)
        } else {
            let (link, q) = ((x - 3 * n * n) / n, (x - 3 * n * n) % n);
            self.md_index(1 - link, q)
        }
    }

    /// All momenta k → −k.
    pub fn invert(&self, x: usize) -> usize {
        let n = self.n3();
        if x < 3 * n * n {
            let (site, a, b) = (x / (n * n), (x / n) % n, x % n);
            self.se_index(site, self.grid.mirror(a), self.grid.mirror(b))
        } else {
            let (link, q) = ((x - 3 * n * n) / n, (x - 3 * n * n) % n);
            self.md_index(link, self.grid.mirror(q))
        }
    }

    pub fn blocks(&self) -> Vec<(Sector, Embedding)> {
        let dim = self.n_basis();
        let inv = |x| self.invert(x);
        let refl = |x| self.reflect(x);
        match self.links {
            LinkCoupling::Both => involution_blocks(dim, &[&inv, &refl])
                .into_iter()
                .map(|(p, e)| (Sector { parity: p[0], reflection: Some(p[1]) }, e))
                .collect(),
            LinkCoupling::FirstOnly => involution_blocks(dim, &[&inv])
                .into_iter()
                .map(|(p, e)| (Sector { parity: p[0], reflection: None }, e))
                .collect(),
        }
    }

    /// Probe amplitude ⟨basis|H_P|Φ_g⟩ split into real and imaginary parts:
    /// an equal-weight sum over the excited site times the lattice ground
    /// state of the two links in momentum space, normalized on the grid.
    pub fn probe_vectors(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n3();
        let k = self.grid.momenta();
        let s2 = self.lattice.site_width().powi(2);
        let d = self.lattice.diagonal_spacing() - self.potential.bond_length;
        let mut amp = vec![(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                let (ka, kb) = (k[a], k[b]);
                // covariance σ²[[2, −1], [−1, 2]] of the two link coordinates
                let envelope = (-s2 * (2.0 * ka * ka + 2.0 * kb * kb - 2.0 * ka * kb)).exp();
                let phase = -d * (ka + kb);
                amp[a * n + b] = (envelope * phase.cos(), envelope * phase.sin());
            }
        }
        let norm = amp.iter().map(|(r, i)| r * r + i * i).sum::<f64>().sqrt() * 3f64.sqrt();
        let mut re = vec![0.0; self.n_basis()];
        let mut im = vec![0.0; self.n_basis()];
        for site in 0..3 {
            for a in 0..n {
                for b in 0..n {
                    let (r, i) = amp[a * n + b];
                    re[self.se_index(site, a, b)] = r / norm;
                    im[self.se_index(site, a, b)] = i / norm;
                }
            }
        }
        (re, im)
    }

    /// Normalized macrotrimeron: −½ on each link macrodimer with the
    /// spectator in Φ_v, and (½, 1, ½)/√3 on the excited sites with both
    /// links in Φ_v.
    pub fn analytic_trimeron(&self) -> Vec<f64> {
        let n = self.n3();
        let phi = self.mode_vector();
        let mut t = vec![0.0; self.n_basis()];
        let site_weights = [0.5, 1.0, 0.5].map(|w| w / 3f64.sqrt());
        for (site, w) in site_weights.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    t[self.se_index(site, a, b)] = w * phi[a] * phi[b];
                }
            }
        }
        for link in 0..2 {
            for q in 0..n {
                t[self.md_index(link, q)] = -0.5 * phi[q];
            }
        }
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        t.into_iter().map(|x| x / norm).collect()
    }
}

pub fn solve_three_atom(model: &ThreeAtomModel) -> Result<EigenSystem> {
    let h = model.hamiltonian()?;
    let eigs = EigenSystem::solve(&h, model.labels(), model.blocks())?;
    eigs.verify(&h, RESIDUAL_TOLERANCE)?;
    Ok(eigs)
}

pub fn stick_spectrum3(eigs: &EigenSystem, model: &ThreeAtomModel) -> Vec<Stick> {
    let (re, im) = model.probe_vectors();
    let (ar, ai) = (eigs.project(&re), eigs.project(&im));
    (0..eigs.len())
        .map(|n| {
            let w_md = eigs.macrodimer_weight(n);
            Stick {
                energy: eigs.energies()[n],
                c_abs: ar[n] * ar[n] + ai[n] * ai[n],
                loss_fraction: model.loss.fraction(1.0 - w_md, w_md, 2.0, 3.0),
                macrodimer_weight: w_md,
            }
        })
        .collect()
}

pub fn absorption_spectrum3(
    eigs: &EigenSystem,
    model: &ThreeAtomModel,
    axis: &[f64],
    broadening: f64,
) -> Result<SpectrumResult> {
    if axis.len() < 2 {
        return Err(config("spectrum axis needs at least two points"));
    }
    let top = axis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top > 0.5 * model.max_kinetic_energy() {
        return Err(config(format!(
            "axis reaches {top:.1} rad/us, beyond half the grid coverage {:.1}",
            model.max_kinetic_energy()
        )));
    }
    match model.scan {
        ScanMode::Sideband => SpectrumResult::from_sticks(axis.to_vec(), stick_spectrum3(eigs, model), broadening),
        ScanMode::Common => common_scan(axis, broadening, |d| {
            let m = model.with_delta_c(d);
            Ok(stick_spectrum3(&solve_three_atom(&m)?, &m))
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    /// Both links confined to the vibrational mode.
    Trimeron,
    /// One link confined, the third atom free.
    DimeronFree,
    /// Negligible macrodimer weight near zero detuning.
    Central,
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateAnalysis {
    pub index: usize,
    pub energy: f64,
    pub macrodimer_weight: f64,
    /// Weight with link λ in Φ_v.
    pub link_overlaps: [f64; 2],
    /// Weight with both links in Φ_v.
    pub double_link_overlap: f64,
    /// Weight with at least one link in Φ_v.
    pub confined_overlap: f64,
    /// Position variance of the spectator coordinate in the macrodimer
    /// components (nm²); `None` without macrodimer weight.
    pub spectator_variance: Option<f64>,
    pub class: StateClass,
}

/// Weights on the singly-excited sites and link macrodimers.
pub fn sector_weights(model: &ThreeAtomModel, psi: &[f64]) -> [f64; 5] {
    let n = model.n3();
    let mut w = [0.0; 5];
    for (site, wi) in w.iter_mut().take(3).enumerate() {
        let start = model.se_index(site, 0, 0);
        *wi = psi[start..start + n * n].iter().map(|x| x * x).sum();
    }
    for link in 0..2 {
        let start = model.md_index(link, 0);
        w[3 + link] = psi[start..start + n].iter().map(|x| x * x).sum();
    }
    w
}

fn position_variance(model: &ThreeAtomModel, amplitudes: &[f64]) -> f64 {
    let k = model.grid.momenta();
    let len = model.grid.box_length();
    let m = 8 * model.n3();
    let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for j in 0..m {
        let x = -0.5 * len + (j as f64 + 0.5) * len / m as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (kq, a) in k.iter().zip(amplitudes) {
            let (s, c) = (kq * x).sin_cos();
            re += a * c;
            im += a * s;
        }
        let p = re * re + im * im;
        w += p;
        s1 += p * x;
        s2 += p * x * x;
    }
    let mean = s1 / w;
    s2 / w - mean * mean
}

/// Confinement measures and classification of one eigenvector.
pub fn analyze_vector(
    model: &ThreeAtomModel,
    index: usize,
    energy: f64,
    psi: &[f64],
    broadening: f64,
) -> StateAnalysis {
    let n = model.n3();
    let phi = model.mode_vector();
    let mut link = [0.0; 2];
    let mut double = 0.0;
    for site in 0..3 {
        let block = &psi[model.se_index(site, 0, 0)..model.se_index(site, 0, 0) + n * n];
        // link 0 is the first momentum index
        for b in 0..n {
            let p: f64 = (0..n).map(|a| phi[a] * block[a * n + b]).sum();
            link[0] += p * p;
        }
        let mut both = 0.0;
        for a in 0..n {
            let p: f64 = (0..n).map(|b| phi[b] * block[a * n + b]).sum();
            link[1] += p * p;
            both += phi[a] * p;
        }
        double += both * both;
    }
    let mut md_weight = 0.0;
    let mut variance_acc = 0.0;
    for l in 0..2 {
        let start = model.md_index(l, 0);
        let amps = &psi[start..start + n];
        let w: f64 = amps.iter().map(|x| x * x).sum();
        let p: f64 = amps.iter().zip(&phi).map(|(a, f)| a * f).sum();
        link[l] += w;
        link[1 - l] += p * p;
        double += p * p;
        md_weight += w;
        if w > 1e-14 {
            variance_acc += w * position_variance(model, amps);
        }
    }
    let confined = link[0] + link[1] - double;
    let class = if double > TRIMERON_THRESHOLD {
        StateClass::Trimeron
    } else if confined > DIMERON_THRESHOLD {
        StateClass::DimeronFree
    } else if md_weight < CENTRAL_MACRODIMER_LIMIT && energy.abs() < broadening {
        StateClass::Central
    } else {
        StateClass::Continuum
    };
    StateAnalysis {
        index,
        energy,
        macrodimer_weight: md_weight,
        link_overlaps: link,
        double_link_overlap: double,
        confined_overlap: confined,
        spectator_variance: (md_weight > 1e-12).then(|| variance_acc / md_weight),
        class,
    }
}

/// Analyzes every eigenstate; `broadening` sets the central window.
pub fn analyze_states(eigs: &EigenSystem, model: &ThreeAtomModel, broadening: f64) -> Vec<StateAnalysis> {
    let indices: Vec<usize> = (0..eigs.len()).collect();
    par_map(&indices, |&n| analyze_vector(model, n, eigs.energies()[n], &eigs.vector(n), broadening))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Trimeron,
    DimeronFree,
    Central,
    /// Continuum states above zero energy.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub kind: FeatureKind,
    /// Loss-signal-weighted mean energy.
    pub centroid: Option<f64>,
    pub weight: f64,
    pub n_states: usize,
}

/// Groups the probe sticks by state class.
pub fn spectral_features(sticks: &[Stick], analysis: &[StateAnalysis]) -> Vec<Feature> {
    let kind_of = |a: &StateAnalysis| match a.class {
        StateClass::Trimeron => Some(FeatureKind::Trimeron),
        StateClass::DimeronFree => Some(FeatureKind::DimeronFree),
        StateClass::Central => Some(FeatureKind::Central),
        StateClass::Continuum if a.energy > 0.0 => Some(FeatureKind::Positive),
        StateClass::Continuum => None,
    };
    [FeatureKind::Trimeron, FeatureKind::DimeronFree, FeatureKind::Central, FeatureKind::Positive]
        .into_iter()
        .map(|kind| {
            let (mut w, mut we, mut count) = (0.0, 0.0, 0);
            for (s, a) in sticks.iter().zip(analysis) {
                if kind_of(a) == Some(kind) {
                    w += s.loss_signal();
                    we += s.loss_signal() * s.energy;
                    count += 1;
                }
            }
            Feature { kind, centroid: (w > 0.0).then(|| we / w), weight: w, n_states: count }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimeronReport {
    pub index: usize,
    pub energy: f64,
    /// |⟨ψ|analytic trimeron⟩|².
    pub analytic_overlap: f64,
    /// Sites 0..3 then links 0..2.
    pub sector_weights: [f64; 5],
    pub analysis: StateAnalysis,
}

/// The negative-energy eigenstate closest to the analytic macrotrimeron, or
/// `None` when no eigenstate lies below zero.
pub fn identify_trimeron(
    eigs: &EigenSystem,
    model: &ThreeAtomModel,
    broadening: f64,
) -> Result<Option<TrimeronReport>> {
    let target = model.analytic_trimeron();
    let amps = eigs.project(&target);
    let best = (0..eigs.len())
        .filter(|&n| eigs.energies()[n] < 0.0)
        .max_by(|&a, &b| (amps[a] * amps[a]).total_cmp(&(amps[b] * amps[b])));
    Ok(best.map(|n| {
        let psi = eigs.vector(n);
        TrimeronReport {
            index: n,
            energy: eigs.energies()[n],
            analytic_overlap: amps[n] * amps[n],
            sector_weights: sector_weights(model, &psi),
            analysis: analyze_vector(model, n, eigs.energies()[n], &psi, broadening),
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoppingRate {
    /// |Ω_C² f̃ / (2Δ_C)| in rad/μs.
    pub magnitude: f64,
    /// Sign of the effective hopping amplitude, that of Δ_C.
    pub sign: f64,
}

/// Two-photon macrodimer hopping rate Ω_C²·f̃/(2|Δ_C|) in the dispersive
/// regime.
pub fn hopping_rate(omega_c: f64, delta_c: f64, f_tilde: f64) -> Result<HoppingRate> {
    if delta_c == 0.0 || !delta_c.is_finite() {
        return Err(domain("hopping rate needs a finite non-zero macrodimer detuning"));
    }
    Ok(HoppingRate {
        magnitude: omega_c * omega_c * f_tilde / (2.0 * delta_c.abs()),
        sign: delta_c.signum(),
    })
}

/// Relative-coordinate state of the next link once the macrodimer has
/// formed on its neighbour: centred at the lattice diagonal, with the
/// spread of one lattice site, half the pair centre of mass and half the
/// vibrational mode.
pub fn spectator_link_state(potential: &PotentialModel, lattice: &LatticeParams) -> GaussianState {
    let s2 = lattice.site_width().powi(2);
    let mode_var = potential.harmonic_length().powi(2) / 2.0;
    GaussianState {
        center: lattice.diagonal_spacing(),
        width: (1.5 * s2 + 0.25 * mode_var).sqrt(),
        normalized: true,
    }
}

/// |⟨Φ_0|χ⟩| by quadrature.
pub fn mode_overlap(potential: &PotentialModel, state: &GaussianState) -> Result<f64> {
    let l = potential.harmonic_length();
    let lo = (potential.bond_length - 12.0 * l).min(state.center - 12.0 * state.width);
    let hi = (potential.bond_length + 12.0 * l).max(state.center + 12.0 * state.width);
    let panels = (((hi - lo) / (0.02 * l.min(state.width))).ceil() as usize).clamp(2000, 2_000_000);
    potential.mode_at_offset(0, 0.0)?;
    let v = simpson(
        |r| potential.mode_at_offset(0, r - potential.bond_length).unwrap_or(0.0) * state.amplitude(r),
        lo,
        hi,
        panels,
    );
    Ok(v.abs())
}

/// Motional overlap f̃ entering the hopping rate: the vibrational mode on
/// one link against the state that link is left in after the neighbouring
/// link bound.
pub fn motional_state_overlap_f_tilde(potential: &PotentialModel, lattice: &LatticeParams) -> Result<f64> {
    mode_overlap(potential, &spectator_link_state(potential, lattice))
}

/// Analytic energy of the macrotrimeron coupling term, −√3·Ω_C/2.
pub fn trimeron_coupling_energy(omega_c: f64) -> f64 {
    -(3f64.sqrt()) * omega_c / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::mhz;

    fn small(omega_mhz: f64) -> ThreeAtomModel {
        ThreeAtomModel::new(
            mhz(omega_mhz),
            0.0,
            PotentialModel::macrodimer(1).unwrap(),
            Grid3::new(28, 0.34).unwrap(),
            LatticeParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn basis_size_and_labels() {
        let m = small(3.0);
        assert_eq!(m.n_basis(), 3 * 28 * 28 + 2 * 28);
        let labels = m.labels();
        assert_eq!(labels[m.se_index(2, 5, 7)], BasisLabel::SinglyExcited { site: 2, k1: 5, k2: 7 });
        assert_eq!(labels[m.md_index(1, 3)], BasisLabel::LinkMacrodimer { link: 1, spectator: 3 });
    }

    #[test]
    fn kinetic_form_is_positive_definite() {
        // k1² + k2² − k1k2 has eigenvalues 1/2 and 3/2
        let m = small(0.0);
        let h = m.hamiltonian().unwrap();
        let k = m.grid.momenta();
        for a in 0..28 {
            for b in 0..28 {
                let e = h.diagonal()[m.se_index(0, a, b)];
                let r2 = k[a] * k[a] + k[b] * k[b];
                assert!(e >= 0.5 * 730.0 * r2 - 1e-9 && e > 0.0);
            }
        }
    }

    #[test]
    fn symmetries_commute_with_hamiltonian() {
        let m = small(4.0);
        let h = m.hamiltonian().unwrap();
        for x in (0..m.n_basis()).step_by(37) {
            for &(y, v) in h.row(x) {
                assert_eq!(h.get(m.reflect(x), m.reflect(y)), v);
                assert_eq!(h.get(m.invert(x), m.invert(y)), v);
            }
            assert_eq!(h.diagonal()[m.reflect(x)], h.diagonal()[x]);
        }
    }

    #[test]
    fn uncoupled_bands() {
        let m = small(0.0);
        let eigs = solve_three_atom(&m).unwrap();
        let hom = m.potential.constants.hbar_over_m;
        let md: Vec<f64> = (0..eigs.len()).filter(|&n| eigs.macrodimer_weight(n) > 0.5).map(|n| eigs.energies()[n]).collect();
        assert_eq!(md.len(), 2 * 28);
        let mut expected: Vec<f64> = m.grid.momenta().iter().flat_map(|k| [hom * k * k; 2]).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in md.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0));
        }
        assert!(eigs.energies().iter().all(|&e| e >= -1e-9));
    }

    #[test]
    fn probe_sum_rule() {
        let m = small(3.0);
        let eigs = solve_three_atom(&m).unwrap();
        let total: f64 = stick_spectrum3(&eigs, &m).iter().map(|s| s.c_abs).sum();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn analytic_trimeron_normalization() {
        // 1/4 + 1/4 + (1/4 + 1 + 1/4)/3 = 1 before grid normalization
        let w: f64 = 0.25 + 0.25 + (0.25 + 1.0 + 0.25) / 3.0;
        assert!((w - 1.0).abs() < 1e-15);
        let m = small(1.0);
        let t = m.analytic_trimeron();
        let sw = sector_weights(&m, &t);
        assert!((sw.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((sw[3] - 0.25).abs() < 1e-3 && (sw[1] - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn hopping_rate_formula() {
        let r = hopping_rate(mhz(2.9), mhz(-367.6), 0.35).unwrap();
        assert!((r.magnitude / mhz(1e-3) - 4.0).abs() < 0.2);
        assert_eq!(r.sign, -1.0);
        let r2 = hopping_rate(mhz(5.8), mhz(-367.6), 0.35).unwrap();
        assert!((r2.magnitude / r.magnitude - 4.0).abs() < 1e-12);
        assert_eq!(hopping_rate(1.0, 1.0, 0.0).unwrap().magnitude, 0.0);
        assert!(hopping_rate(1.0, 0.0, 0.3).is_err());
    }

    #[test]
    fn f_tilde_limits() {
        let p = PotentialModel::macrodimer(1).unwrap();
        let lat = LatticeParams::default();
        let f = motional_state_overlap_f_tilde(&p, &lat).unwrap();
        assert!((0.2..=0.5).contains(&f));
        // closed-form overlap of two normalized Gaussians
        let chi = spectator_link_state(&p, &lat);
        let (s1, s2) = (p.harmonic_length() / 2f64.sqrt(), chi.width);
        let d = chi.center - p.bond_length;
        let exact = (2.0 * s1 * s2 / (s1 * s1 + s2 * s2)).sqrt() * (-d * d / (4.0 * (s1 * s1 + s2 * s2))).exp();
        assert!((f - exact).abs() < 1e-9);
        let same = GaussianState::new(p.bond_length, s1).unwrap();
        assert!((mode_overlap(&p, &same).unwrap() - 1.0).abs() < 1e-9);
        let far = GaussianState::new(p.bond_length + 500.0, s1).unwrap();
        assert!(mode_overlap(&p, &far).unwrap() < 1e-12);
    }

    #[test]
    fn basis_cap_enforced() {
        let mut m = small(1.0);
        m.basis_cap = 100;
        assert!(m.validate().unwrap_err().to_string().contains("cap"));
    }
}
