//! Run configuration: flat `section.key = value` lines (TOML dotted keys),
//! `#` comments, unknown keys rejected. Frequencies are linear MHz and are
//! converted to rad/μs once, here.

use std::path::Path;

use dimeron_core::correlations::{Offset, Roi};
use dimeron_core::fano2::{LossModel, ScanMode, TwoAtomModel};
use dimeron_core::fano3::{Grid3, ThreeAtomModel};
use dimeron_core::physics::lattice_relative_ground_state;
use dimeron_core::sampler::SampleConfig;
use dimeron_core::spectrum::detuning_axis;
use dimeron_core::{mhz, ContinuumGrid, Error, LatticeParams, PotentialModel, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub model: ModelSection,
    pub spectrum: SpectrumSection,
    pub correlation: CorrelationSection,
    pub sampler: SamplerSection,
    pub fit: FitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub bond_length_nm: f64,
    pub omega_v_mhz: f64,
    pub omega_lat_mhz: f64,
    pub lattice_constant_nm: f64,
    /// Electronic factor multiplying every listed Rabi frequency.
    pub alpha: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { bond_length_nm: 712.0, omega_v_mhz: 3.8, omega_lat_mhz: 0.128, lattice_constant_nm: 532.0, alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanName {
    Sideband,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Expected,
    SinglyExcited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub omega_c_mhz: Vec<f64>,
    pub delta_c_mhz: f64,
    pub scan: ScanName,
    pub loss: LossName,
    pub n_modes: usize,
    pub n_k: usize,
    pub kappa_max: f64,
    pub n3: usize,
    pub k_max3: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            omega_c_mhz: vec![6.2],
            delta_c_mhz: 0.0,
            scan: ScanName::Sideband,
            loss: LossName::Expected,
            n_modes: 1,
            n_k: 400,
            kappa_max: 1.2,
            n3: 48,
            k_max3: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub step_mhz: f64,
    pub broadening_mhz: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { min_mhz: -10.0, max_mhz: 10.0, step_mhz: 0.01, broadening_mhz: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSection {
    /// `[x0, y0, x1, y1]`, half-open; empty keeps the ROI stored in the file.
    pub roi: Vec<usize>,
    pub r0: [i32; 2],
    /// Half-width of the offset window of the maps.
    pub window: i32,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        Self { roi: Vec::new(), r0: [-1, 1], window: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub width: usize,
    pub height: usize,
    pub roi_size: usize,
    pub n_shots: usize,
    pub filling: f64,
    pub p2: f64,
    pub p3: f64,
    pub p_bg: f64,
    pub directions: Vec<[i32; 2]>,
    pub seed: u64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SampleConfig::default();
        Self {
            width: d.width,
            height: d.height,
            roi_size: d.roi_size,
            n_shots: d.n_shots,
            filling: d.filling,
            p2: d.p2,
            p3: d.p3,
            p_bg: d.p_bg,
            directions: d.directions.iter().map(|o| [o.dx, o.dy]).collect(),
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub g2: f64,
    pub g3: f64,
    pub tolerance: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { g2: 2.40e-2, g3: 4.8e-3, tolerance: 0.05 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key with its default, one `section.key = value` line each.
    pub fn defaults_text() -> String {
        let value = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
        let mut out = String::new();
        if let toml::Value::Table(sections) = value {
            for (section, keys) in sections {
                if let toml::Value::Table(keys) = keys {
                    for (key, v) in keys {
                        out.push_str(&format!("  {section}.{key} = {v}\n"));
                    }
                }
            }
        }
        out
    }

    pub fn omegas(&self) -> Result<Vec<f64>> {
        if self.model.omega_c_mhz.is_empty() {
            return Err(Error::Config("model.omega_c_mhz must list at least one value".into()));
        }
        Ok(self.model.omega_c_mhz.iter().map(|&o| mhz(o * self.physics.alpha)).collect())
    }

    pub fn lattice(&self) -> Result<LatticeParams> {
        LatticeParams::new(self.physics.lattice_constant_nm, mhz(self.physics.omega_lat_mhz))
    }

    pub fn potential(&self, n_modes: usize) -> Result<PotentialModel> {
        PotentialModel::new(self.physics.bond_length_nm, mhz(self.physics.omega_v_mhz), n_modes)
    }

    fn loss(&self) -> LossModel {
        match self.model.loss {
            LossName::Expected => LossModel::ExpectedLostFraction,
            LossName::SinglyExcited => LossModel::SinglyExcitedOnly,
        }
    }

    fn scan(&self) -> ScanMode {
        match self.model.scan {
            ScanName::Sideband => ScanMode::Sideband,
            ScanName::Common => ScanMode::Common,
        }
    }

    pub fn two_atom(&self, omega_c: f64) -> Result<TwoAtomModel> {
        let mut m = TwoAtomModel::new(
            omega_c,
            mhz(self.model.delta_c_mhz),
            self.potential(self.model.n_modes)?,
            ContinuumGrid::new(self.model.n_k, self.model.kappa_max)?,
            lattice_relative_ground_state(&self.lattice()?),
        )?;
        m.scan = self.scan();
        m.loss = self.loss();
        Ok(m)
    }

    pub fn three_atom(&self, omega_c: f64) -> Result<ThreeAtomModel> {
        let mut m = ThreeAtomModel::new(
            omega_c,
            mhz(self.model.delta_c_mhz),
            self.potential(1)?,
            Grid3::new(self.model.n3, self.model.k_max3)?,
            self.lattice()?,
        )?;
        m.scan = self.scan();
        m.loss = self.loss();
        Ok(m)
    }

    pub fn axis(&self) -> Result<Vec<f64>> {
        let s = &self.spectrum;
        detuning_axis(mhz(s.min_mhz), mhz(s.max_mhz), mhz(s.step_mhz))
    }

    pub fn broadening(&self) -> Result<f64> {
        let b = self.spectrum.broadening_mhz;
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!("spectrum.broadening_mhz must be positive, got {b}")));
        }
        Ok(mhz(b))
    }

    pub fn roi(&self) -> Result<Option<Roi>> {
        match self.correlation.roi.as_slice() {
            [] => Ok(None),
            &[x0, y0, x1, y1] => Ok(Some(Roi { x0, y0, x1, y1 })),
            other => Err(Error::Config(format!("correlation.roi needs 4 entries, got {}", other.len()))),
        }
    }

    pub fn r0(&self) -> Offset {
        Offset::new(self.correlation.r0[0], self.correlation.r0[1])
    }

    pub fn sample_config(&self) -> SampleConfig {
        let s = &self.sampler;
        SampleConfig {
            width: s.width,
            height: s.height,
            roi_size: s.roi_size,
            n_shots: s.n_shots,
            filling: s.filling,
            p2: s.p2,
            p3: s.p3,
            p_bg: s.p_bg,
            directions: s.directions.iter().map(|d| Offset::new(d[0], d[1])).collect(),
            seed: s.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_keys_and_comments() {
        let c = RunConfig::parse(
            "# two-atom sweep\nmodel.omega_c_mhz = [2.3, 6.2]\nmodel.scan = \"common\"\nspectrum.step_mhz = 0.02 # coarse\n",
        )
        .unwrap();
        assert_eq!(c.model.omega_c_mhz, vec![2.3, 6.2]);
        assert_eq!(c.model.scan, ScanName::Common);
        assert_eq!(c.spectrum.step_mhz, 0.02);
        assert_eq!(c.physics, PhysicsSection::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::parse("model.omega = 1.0\n").unwrap_err().to_string();
        assert!(e.contains("omega"), "{e}");
        assert!(RunConfig::parse("nosuch.key = 1\n").is_err());
    }

    #[test]
    fn defaults_listing_reparses() {
        let text: String = RunConfig::defaults_text().lines().map(|l| format!("{}\n", l.trim())).collect();
        assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn frequencies_enter_as_megahertz() {
        let c = RunConfig::parse("physics.alpha = 2.0\nmodel.omega_c_mhz = [1.5]\n").unwrap();
        assert!((c.omegas().unwrap()[0] - mhz(3.0)).abs() < 1e-12);
    }
}
