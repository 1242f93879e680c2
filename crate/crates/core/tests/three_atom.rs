//! The three-atom model with only one dressed link must reproduce the
//! two-atom bound state, shifted by the kinetic energy of the free spectator.

use dimeron_core::fano2::{find_macrodimerons, solve_two_atom, TwoAtomModel};
use dimeron_core::fano3::{solve_three_atom, Grid3, LinkCoupling, ThreeAtomModel};
use dimeron_core::{mhz, to_mhz, LatticeParams, PotentialModel};

fn one_link(omega_mhz: f64, n3: usize, k_max: f64) -> ThreeAtomModel {
    let mut m = ThreeAtomModel::new(
        mhz(omega_mhz),
        0.0,
        PotentialModel::macrodimer(1).unwrap(),
        Grid3::new(n3, k_max).unwrap(),
        LatticeParams::default(),
    )
    .unwrap();
    m.links = LinkCoupling::FirstOnly;
    m
}

#[test]
fn single_link_reduces_to_two_atoms() {
    for omega in [3.0, 6.2] {
        let two = TwoAtomModel::with_defaults(mhz(omega), 0.0).unwrap();
        let bound = find_macrodimerons(&solve_two_atom(&two).unwrap(), &two).unwrap().negative.unwrap();
        let m = one_link(omega, 36, 0.44);
        let eigs = solve_three_atom(&m).unwrap();
        let q = m.grid.momenta().iter().fold(f64::INFINITY, |a, k| a.min(k.abs()));
        let spectator = m.potential.constants.hbar_over_m * q * q;
        let shifted = eigs.energies()[0] - spectator;
        assert!((shifted - bound.energy).abs() < 2e-3 * bound.energy.abs(), "{} vs {}", to_mhz(shifted), to_mhz(bound.energy));
        assert!((eigs.macrodimer_weight(0) - bound.macrodimer_weight).abs() < 2e-3);
        // ±q spectator states are degenerate
        assert!((eigs.energies()[1] - eigs.energies()[0]).abs() < 1e-9 * bound.energy.abs());
    }
}
