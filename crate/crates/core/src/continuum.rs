//! Discretized relative-motion continuum.
//!
//! The free pair continuum is represented by standing waves in a hard-wall
//! box of length L = 2π/Δκ centred on the potential minimum. Even waves are
//! √(2/L) cos(κx) with κ_j = (j + ½)Δκ, odd waves √(2/L) sin(κx) with
//! κ_j = (j + 1)Δκ. Both families together are complete on the box.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Parity of a relative-coordinate state under x → −x about R_v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Parity of vibrational mode v.
    pub fn of_mode(v: usize) -> Self {
        if v % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumGrid {
    n_k: usize,
    kappa_max: f64,
}

impl ContinuumGrid {
    pub fn new(n_k: usize, kappa_max: f64) -> Result<Self> {
        if n_k < 2 {
            return Err(config(format!("continuum grid needs at least 2 points, got {n_k}")));
        }
        if !(kappa_max > 0.0 && kappa_max.is_finite()) {
            return Err(config(format!("kappa_max must be positive, got {kappa_max}")));
        }
        Ok(Self { n_k, kappa_max })
    }

    /// Points per parity channel.
    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    /// Δκ in nm⁻¹.
    pub fn spacing(&self) -> f64 {
        self.kappa_max / self.n_k as f64
    }

    /// Box length L = 2π/Δκ in nm.
    pub fn box_length(&self) -> f64 {
        std::f64::consts::TAU / self.spacing()
    }

    pub fn kappa(&self, parity: Parity, j: usize) -> f64 {
        let offset = match parity {
            Parity::Even => 0.5,
            Parity::Odd => 1.0,
        };
        (j as f64 + offset) * self.spacing()
    }

    pub fn kappas(&self, parity: Parity) -> Vec<f64> {
        (0..self.n_k).map(|j| self.kappa(parity, j)).collect()
    }

    /// Kinetic energies ħκ²/m of one channel.
    pub fn energies(&self, parity: Parity, hbar_over_m: f64) -> Vec<f64> {
        self.kappas(parity).into_iter().map(|k| hbar_over_m * k * k).collect()
    }

    /// Highest kinetic energy ħκ_max²/m resolved by the grid.
    pub fn max_energy(&self, hbar_over_m: f64) -> f64 {
        hbar_over_m * self.kappa_max * self.kappa_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standing_waves_vanish_at_walls() {
        let g = ContinuumGrid::new(50, 0.8).unwrap();
        let half = g.box_length() / 2.0;
        for j in 0..g.n_k() {
            assert!((g.kappa(Parity::Even, j) * half).cos().abs() < 1e-12);
            assert!((g.kappa(Parity::Odd, j) * half).sin().abs() < 1e-12);
        }
    }

    #[test]
    fn channels_interleave() {
        let g = ContinuumGrid::new(20, 1.0).unwrap();
        for j in 0..20 {
            assert!(g.kappa(Parity::Even, j) < g.kappa(Parity::Odd, j));
        }
        assert!((g.kappa(Parity::Odd, 19) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(ContinuumGrid::new(1, 1.0).is_err());
        assert!(ContinuumGrid::new(10, 0.0).is_err());
        assert!(ContinuumGrid::new(10, f64::NAN).is_err());
    }
}
