//! Orbach relaxation through an orbital-singlet excited state.
//!
//! A ground sublevel m couples to the excited state with weight |t_m|^2. At
//! high field the weights follow from the zero-field values by the
//! phi-averaged spin-1 rotation into the field frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{activation_factor, frequency_to_kelvin};
use crate::error::{invalid, OrbachError, Result};
use crate::rates::{relaxation_modes, RateMatrix3, RelaxationModes, RelaxationTime};
use crate::spin::Transition;
use crate::wigner::mixing_matrix;

/// Zero-field overlaps |t0_0|^2, |t0_+1|^2, |t0_-1|^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroFieldOverlaps {
    pub t0_sq: f64,
    pub tp_sq: f64,
    pub tm_sq: f64,
}

impl ZeroFieldOverlaps {
    pub fn new(t0_sq: f64, tp_sq: f64, tm_sq: f64) -> Result<Self> {
        if [t0_sq, tp_sq, tm_sq].iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(invalid("zero-field overlaps must be finite and nonnegative"));
        }
        Ok(Self { t0_sq, tp_sq, tm_sq })
    }

    /// Overlaps with |t0_0|^2 = 1 and |t0_0 / t0_+-1| = `ratio`.
    pub fn from_ratio(ratio: f64) -> Self {
        let outer = 1.0 / (ratio * ratio);
        Self { t0_sq: 1.0, tp_sq: outer, tm_sq: outer }
    }

    pub fn isotropic(value: f64) -> Self {
        Self { t0_sq: value, tp_sq: value, tm_sq: value }
    }

    /// Ordered (-1, 0, +1).
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.tm_sq, self.t0_sq, self.tp_sq)
    }

    pub fn total(&self) -> f64 {
        self.t0_sq + self.tp_sq + self.tm_sq
    }

    pub fn is_symmetric(&self) -> bool {
        (self.tp_sq - self.tm_sq).abs() <= 1e-12 * self.tp_sq.max(self.tm_sq)
    }
}

/// Field-frame overlaps |t_m|^2 ordered (-1, 0, +1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapTriple(pub [f64; 3]);

impl OverlapTriple {
    pub fn minus(&self) -> f64 {
        self.0[0]
    }

    pub fn zero(&self) -> f64 {
        self.0[1]
    }

    pub fn plus(&self) -> f64 {
        self.0[2]
    }

    /// Mean of the m = +-1 weights.
    pub fn outer(&self) -> f64 {
        0.5 * (self.0[0] + self.0[2])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbachParams {
    /// C, 1/s.
    pub rate_coefficient_c: f64,
    /// E_a, meV.
    pub activation_energy: f64,
    /// K.
    pub temperature: f64,
    /// Zeeman frequency entering the Boltzmann factor, GHz.
    pub zeeman_freq: f64,
}

impl OrbachParams {
    pub fn new(rate_coefficient_c: f64, activation_energy: f64, temperature: f64, zeeman_freq: f64) -> Result<Self> {
        let p = Self { rate_coefficient_c, activation_energy, temperature, zeeman_freq };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_coefficient_c >= 0.0 && self.rate_coefficient_c.is_finite()) {
            return Err(invalid("rate coefficient must be finite and nonnegative"));
        }
        if !(self.activation_energy >= 0.0) {
            return Err(invalid("activation energy must be nonnegative"));
        }
        if !(self.temperature > 0.0) {
            return Err(invalid("temperature must be positive"));
        }
        if !(self.zeeman_freq >= 0.0) {
            return Err(invalid("Zeeman frequency must be nonnegative"));
        }
        Ok(())
    }

    /// C exp(-E_a / kT), 1/s.
    pub fn thermal_rate(&self) -> f64 {
        self.rate_coefficient_c * activation_factor(self.activation_energy, self.temperature)
    }

    pub fn mu(&self) -> f64 {
        boltzmann_factor(self.zeeman_freq, self.temperature)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// Same parameters with the Boltzmann asymmetry removed.
    pub fn high_temperature_limit(mut self) -> Self {
        self.zeeman_freq = 0.0;
        self
    }
}

/// mu = exp(h f / kT).
pub fn boltzmann_factor(zeeman_freq_ghz: f64, temperature_k: f64) -> f64 {
    (frequency_to_kelvin(zeeman_freq_ghz) / temperature_k).exp()
}

pub fn mixed_overlaps(zf: &ZeroFieldOverlaps, theta: f64) -> OverlapTriple {
    let v = mixing_matrix(theta) * zf.as_vector();
    OverlapTriple([v[0], v[1], v[2]])
}

/// Pair couplings K |t_m|^2 |t_m'|^2 (before the Boltzmann asymmetry).
fn pair_couplings(ov: &OverlapTriple, thermal_rate: f64) -> Matrix3<f64> {
    let t = ov.0;
    Matrix3::from_fn(|m, mp| if m == mp { 0.0 } else { thermal_rate * t[m] * t[mp] })
}

pub fn singlet_rate_matrix(ov: &OverlapTriple, p: &OrbachParams) -> Result<RateMatrix3> {
    p.validate()?;
    RateMatrix3::from_pair_couplings(&pair_couplings(ov, p.thermal_rate()), p.mu())
}

/// Numeric T1 modes of the singlet model at field angle `theta`.
pub fn singlet_relaxation_times(zf: &ZeroFieldOverlaps, theta: f64, p: &OrbachParams) -> Result<RelaxationModes> {
    relaxation_modes(&singlet_rate_matrix(&mixed_overlaps(zf, theta), p)?)
}

/// Closed-form T1 modes for |t0_+1| = |t0_-1| without Boltzmann asymmetry.
pub fn relaxation_times_analytic(zf: &ZeroFieldOverlaps, theta: f64, p: &OrbachParams) -> Result<RelaxationModes> {
    if !zf.is_symmetric() {
        return Err(OrbachError::Precondition(format!(
            "closed form needs |t0_+1|^2 = |t0_-1|^2 (got {} and {})",
            zf.tp_sq, zf.tm_sq
        )));
    }
    p.validate()?;
    let ov = mixed_overlaps(zf, theta);
    let k = p.thermal_rate();
    let rate_a = 1.5 * k * ov.zero() * (ov.plus() + ov.minus());
    let rate_b = k * ov.minus() * (2.0 * ov.plus() + ov.zero());
    Ok(RelaxationModes { t1_a: RelaxationTime::from_rate(rate_a), t1_b: RelaxationTime::from_rate(rate_b) })
}

/// Leading-order T1 modes for a large zero-field imbalance (|t0_0| >> |t0_+-1|).
pub fn relaxation_times_large_imbalance(zf: &ZeroFieldOverlaps, theta: f64, p: &OrbachParams) -> RelaxationModes {
    let k = p.thermal_rate() * zf.t0_sq * zf.t0_sq;
    let rate_a = 0.375 * k * (2.0 * theta).sin().powi(2);
    let rate_b = 0.5 * k * theta.sin().powi(2);
    RelaxationModes { t1_a: RelaxationTime::from_rate(rate_a), t1_b: RelaxationTime::from_rate(rate_b) }
}

/// Orbach dephasing rate of the given transition, 1/s.
pub fn orbach_t2_rate(zf: &ZeroFieldOverlaps, theta: f64, p: &OrbachParams, transition: Transition) -> f64 {
    let ov = mixed_overlaps(zf, theta);
    let outer_zf = 0.5 * (zf.tp_sq + zf.tm_sq);
    let outer = ov.0[transition.outer_index()];
    p.thermal_rate() * (zf.t0_sq + 2.0 * outer_zf) * (ov.zero() + outer)
}

/// Hahn-echo T2 including instantaneous and spectral diffusion backgrounds.
/// Pass `f64::INFINITY` to disable a background channel.
pub fn t2_singlet(
    zf: &ZeroFieldOverlaps,
    theta: f64,
    p: &OrbachParams,
    t2_id: f64,
    t2_sd: f64,
    transition: Transition,
) -> RelaxationTime {
    let rate = orbach_t2_rate(zf, theta, p, transition) + 1.0 / t2_id + 1.0 / t2_sd;
    RelaxationTime::from_rate(rate)
}

/// T1_a / T2 for the m = 0 <-> +-1 transition with no background dephasing.
pub fn t1_t2_ratio(zf: &ZeroFieldOverlaps, theta: f64) -> f64 {
    let ov = mixed_overlaps(zf, theta);
    let outer_zf = 0.5 * (zf.tp_sq + zf.tm_sq);
    let (a, b) = (ov.outer(), ov.zero());
    let num = (a + b) * (zf.t0_sq + 2.0 * outer_zf);
    let den = 3.0 * a * b;
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::relaxation_times_numeric;
    use proptest::prelude::*;

    fn params(c: f64, t: f64) -> OrbachParams {
        OrbachParams::new(c, 16.8, t, 9.7).unwrap()
    }

    #[test]
    fn boltzmann_factor_values() {
        let oracle = (crate::constants::PLANCK * 9.7e9 / (crate::constants::BOLTZMANN * 30.0)).exp();
        assert!((boltzmann_factor(9.7, 30.0) - oracle).abs() < 1e-14);
        assert!((boltzmann_factor(9.7, 30.0) - 1.0156).abs() < 1e-4);
        let t_unit = frequency_to_kelvin(9.7);
        assert!((boltzmann_factor(9.7, t_unit) - std::f64::consts::E).abs() < 1e-14);
        assert!((boltzmann_factor(9.7, 1e12) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn mixing_preserves_weight_and_identity() {
        let zf = ZeroFieldOverlaps::new(0.7, 0.2, 0.05).unwrap();
        let same = mixed_overlaps(&zf, 0.0);
        assert_eq!(same.0, [0.05, 0.7, 0.2]);
        let ov = mixed_overlaps(&zf, 1.1);
        assert!((ov.total() - zf.total()).abs() < 1e-14);
    }

    #[test]
    fn pure_t0_at_right_angle() {
        let zf = ZeroFieldOverlaps::new(1.0, 0.0, 0.0).unwrap();
        let ov = mixed_overlaps(&zf, std::f64::consts::FRAC_PI_2);
        // middle column of the mixing matrix at 90 degrees
        assert!(ov.zero().abs() < 1e-15);
        assert!((ov.minus() - 0.5).abs() < 1e-15 && (ov.plus() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn isotropic_overlaps_are_angle_independent() {
        let zf = ZeroFieldOverlaps::isotropic(0.3);
        for deg in [0.0, 17.0, 54.7, 90.0, 133.0] {
            let ov = mixed_overlaps(&zf, f64::to_radians(deg));
            for x in ov.0 {
                assert!((x - 0.3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rate_matrix_trivial_cases() {
        let p = params(1e6, 30.0);
        let lone = OverlapTriple([0.0, 0.8, 0.0]);
        assert_eq!(*singlet_rate_matrix(&lone, &p).unwrap().matrix(), Matrix3::zeros());

        let flat = OverlapTriple([1.0, 1.0, 1.0]);
        let p1 = p.high_temperature_limit();
        let r = singlet_rate_matrix(&flat, &p1).unwrap();
        let k = p1.thermal_rate();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { -2.0 * k } else { k };
                assert!((r.matrix()[(i, j)] - want).abs() < 1e-12 * k);
            }
        }
    }

    #[test]
    fn no_spin_flip_channel_is_unbounded() {
        let zf = ZeroFieldOverlaps::new(1.0, 0.0, 0.0).unwrap();
        let m = relaxation_times_analytic(&zf, 0.0, &params(1e6, 30.0)).unwrap();
        assert!(m.t1_a.is_unbounded() && m.t1_b.is_unbounded());
    }

    #[test]
    fn analytic_rejects_asymmetric_overlaps() {
        let zf = ZeroFieldOverlaps::new(1.0, 0.1, 0.2).unwrap();
        assert!(matches!(
            relaxation_times_analytic(&zf, 0.3, &params(1.0, 30.0)),
            Err(OrbachError::Precondition(_))
        ));
    }

    #[test]
    fn large_imbalance_limit() {
        let zf = ZeroFieldOverlaps::from_ratio(125.0);
        let p = params(1e6, 30.0).high_temperature_limit();
        for deg in (10..=80).step_by(5) {
            let th = f64::to_radians(deg as f64);
            let exact = relaxation_times_analytic(&zf, th, &p).unwrap();
            let approx = relaxation_times_large_imbalance(&zf, th, &p);
            assert!((exact.t1_a.rate() / approx.t1_a.rate() - 1.0).abs() < 0.02);
            assert!((exact.t1_b.rate() / approx.t1_b.rate() - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn background_only_t2_is_harmonic_sum() {
        let zf = ZeroFieldOverlaps::from_ratio(125.0);
        let p = params(0.0, 30.0);
        let t2 = t2_singlet(&zf, 0.4, &p, 0.319e-3, 0.95e-3, Transition::ZeroToPlus).seconds().unwrap();
        let oracle = 1.0 / (1.0 / 0.319e-3 + 1.0 / 0.95e-3);
        assert!((t2 - oracle).abs() < 1e-15);
        assert!((t2 - 0.239e-3).abs() < 1e-6);
    }

    #[test]
    fn ratio_equals_t1a_over_t2_without_background() {
        let zf = ZeroFieldOverlaps::from_ratio(40.0);
        let p = params(1e6, 30.0).high_temperature_limit();
        for deg in [3.0, 30.0, 55.0, 80.0] {
            let th = f64::to_radians(deg);
            let t1a = relaxation_times_analytic(&zf, th, &p).unwrap().t1_a.seconds().unwrap();
            let t2 = t2_singlet(&zf, th, &p, f64::INFINITY, f64::INFINITY, Transition::ZeroToPlus);
            let r = t1a / t2.seconds().unwrap();
            assert!((r / t1_t2_ratio(&zf, th) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_symmetric_overlaps_on_axis() {
        let zf = ZeroFieldOverlaps::isotropic(1.0);
        assert!((t1_t2_ratio(&zf, 0.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ratio_grows_with_imbalance() {
        let th = f64::to_radians(2.0);
        let mut last = 0.0;
        for r in [1.0, 3.0, 10.0, 30.0, 100.0, 125.0, 300.0] {
            let v = t1_t2_ratio(&ZeroFieldOverlaps::from_ratio(r), th);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn t2_anisotropy_mostly_cancels_for_isotropic_overlaps() {
        let zf = ZeroFieldOverlaps::isotropic(0.5);
        let p = params(1e6, 30.0);
        let at = |deg: f64| {
            t2_singlet(&zf, deg.to_radians(), &p, f64::INFINITY, f64::INFINITY, Transition::ZeroToPlus)
                .seconds()
                .unwrap()
        };
        assert!((at(0.0) / at(70.0) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn closed_form_matches_eigenvalues(
            t0 in 1e-3f64..1.0, tpm in 1e-4f64..1.0, theta in 0.0f64..std::f64::consts::PI, c in 1e3f64..1e7
        ) {
            let zf = ZeroFieldOverlaps::new(t0, tpm, tpm).unwrap();
            let p = params(c, 30.0).high_temperature_limit();
            let analytic = relaxation_times_analytic(&zf, theta, &p).unwrap();
            let numeric = singlet_relaxation_times(&zf, theta, &p).unwrap();
            for (a, n) in [(analytic.t1_a, numeric.t1_a), (analytic.t1_b, numeric.t1_b)] {
                let (a, n) = (a.rate(), n.rate());
                prop_assert!((a - n).abs() <= 1e-10 * a.max(n));
            }
            let sorted = relaxation_times_numeric(&singlet_rate_matrix(&mixed_overlaps(&zf, theta), &p).unwrap()).unwrap();
            let lo = analytic.t1_a.rate().min(analytic.t1_b.rate());
            prop_assert!((sorted[1].rate() - lo).abs() <= 1e-10 * lo.max(1e-300));
        }

        #[test]
        fn stationary_state_is_boltzmann(
            t in proptest::array::uniform3(0.01f64..1.0), temp in 2.0f64..100.0
        ) {
            let p = params(1e5, temp);
            let r = singlet_rate_matrix(&OverlapTriple(t), &p).unwrap();
            let mu = p.mu();
            let w = Vector3::new(mu, 1.0, 1.0 / mu);
            let w = w / w.sum();
            prop_assert!((r.matrix() * w).norm() <= 1e-12 * r.scale());
            prop_assert!(r.max_column_sum() <= 1e-12 * r.scale());
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        prop_assert!(r.matrix()[(i, j)] >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn isotropic_overlaps_give_isotropic_times(v in 0.01f64..1.0, theta in 0.0f64..std::f64::consts::PI) {
            let zf = ZeroFieldOverlaps::isotropic(v);
            let p = params(1e6, 30.0).high_temperature_limit();
            let a0 = relaxation_times_analytic(&zf, 0.0, &p).unwrap();
            let a = relaxation_times_analytic(&zf, theta, &p).unwrap();
            prop_assert!((a.t1_a.rate() / a0.t1_a.rate() - 1.0).abs() < 1e-10);
            prop_assert!((a.t1_b.rate() / a0.t1_b.rate() - 1.0).abs() < 1e-10);
        }
    }
}
