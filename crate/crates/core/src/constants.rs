//! Physical constants (CODATA 2018 exact or recommended values) and the unit
//! conversions used across the crate.
//!
//! Internal units: frequencies in GHz, magnetic fields in mT, temperatures in
//! K, times in s, energies of activation in meV.

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Elementary charge, C (also J per eV).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permeability over 4 pi, T m / A.
pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// mu_B / h in GHz per tesla.
    pub bohr_magneton_over_h: f64,
    /// k_B / h in GHz per kelvin.
    pub boltzmann_over_h: f64,
    /// Joules per electron-volt.
    pub ev_to_joule: f64,
    /// GHz per meV (E / h).
    pub mev_to_ghz: f64,
    /// k_B in meV per kelvin.
    pub boltzmann_mev_per_k: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    bohr_magneton_over_h: BOHR_MAGNETON / PLANCK * 1e-9,
    boltzmann_over_h: BOLTZMANN / PLANCK * 1e-9,
    ev_to_joule: ELEMENTARY_CHARGE,
    mev_to_ghz: ELEMENTARY_CHARGE * 1e-3 / PLANCK * 1e-9,
    boltzmann_mev_per_k: BOLTZMANN / (ELEMENTARY_CHARGE * 1e-3),
};

impl PhysicalConstants {
    pub const fn codata() -> Self {
        CODATA
    }

    /// mu_B / h in GHz per millitesla.
    pub fn bohr_ghz_per_mt(&self) -> f64 {
        self.bohr_magneton_over_h * 1e-3
    }
}

/// Thermal activation factor exp(-E_a / kT) with E_a in meV.
pub fn activation_factor(activation_mev: f64, temperature_k: f64) -> f64 {
    (-activation_mev / (CODATA.boltzmann_mev_per_k * temperature_k)).exp()
}

/// Temperature (K) equivalent to a frequency, h f / k.
pub fn frequency_to_kelvin(freq_ghz: f64) -> f64 {
    freq_ghz / CODATA.boltzmann_over_h
}
