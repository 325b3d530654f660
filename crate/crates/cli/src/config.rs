//! Run configuration: one JSON or TOML document, every field optional.

use std::path::Path;

use orbach::bath::EchoFormula;
use orbach::presets;
use orbach::spin::Transition;
use orbach::triplet::TripletT2Model;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    Singlet,
    Triplet,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub seed: u64,
    pub spin: SpinConfig,
    pub orbach: OrbachConfig,
    pub background: BackgroundConfig,
    pub triplet: TripletConfig,
    pub esr: EsrConfig,
    pub orientation: OrientationConfig,
    pub temperature: TemperatureConfig,
    pub decay: DecayConfig,
    pub bath: BathConfig,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinConfig {
    pub d_ghz: f64,
    pub e_ghz: f64,
    pub g_parallel: f64,
    pub g_perpendicular: f64,
    pub microwave_ghz: f64,
    pub field_mt: f64,
}

impl Default for SpinConfig {
    fn default() -> Self {
        Self {
            d_ghz: presets::GROUND_D_GHZ,
            e_ghz: 0.0,
            g_parallel: presets::G_PARALLEL,
            g_perpendicular: presets::G_PERPENDICULAR,
            microwave_ghz: presets::MICROWAVE_GHZ,
            field_mt: presets::CENTER_FIELD_MT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbachConfig {
    pub activation_mev: f64,
    pub temperature_k: f64,
    /// Rate coefficient C in 1/s; calibrated from the off-axis prefactor when absent.
    pub rate_coefficient: Option<f64>,
    /// |t0_0 / t0_+-1| at zero field.
    pub ratio: f64,
}

impl Default for OrbachConfig {
    fn default() -> Self {
        Self {
            activation_mev: presets::ACTIVATION_MEV,
            temperature_k: presets::TEMPERATURE_K,
            rate_coefficient: None,
            ratio: presets::OVERLAP_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub t2_sd_s: f64,
    pub t2_id_s: f64,
    /// Add both background channels to modeled T2.
    pub enabled: bool,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            t2_sd_s: presets::T2_SPECTRAL_DIFFUSION_S,
            t2_id_s: presets::T2_INSTANTANEOUS_DIFFUSION_S,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    pub d_e_ghz: f64,
    pub t2_model: TripletT2Model,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { d_e_ghz: 5.0, t2_model: TripletT2Model::FullDephasing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsrConfig {
    pub misalignment_deg: f64,
    pub field_min_mt: f64,
    pub field_max_mt: f64,
}

impl Default for EsrConfig {
    fn default() -> Self {
        Self { misalignment_deg: presets::MISALIGNMENT_D1_DEG, field_min_mt: 300.0, field_max_mt: 400.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientationConfig {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub points: usize,
    pub transition: Transition,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        Self { theta_min_deg: 0.0, theta_max_deg: 90.0, points: 91, transition: Transition::ZeroToPlus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sample {
    #[default]
    D1,
    D2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureConfig {
    pub sample: Sample,
    pub t_min_k: f64,
    pub t_max_k: f64,
    pub points: usize,
    /// Overrides the on-axis T1, off-axis T1 and T2 prefactors (Hz).
    pub prefactors_hz: Option<[f64; 3]>,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self { sample: Sample::D1, t_min_k: 5.0, t_max_k: 60.0, points: 111, prefactors_hz: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    #[default]
    InversionRecovery,
    SaturationRecovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub kind: DecayKind,
    pub theta_deg: f64,
    /// Time window in seconds; spans the model time constants when absent.
    pub t_min_s: Option<f64>,
    pub t_max_s: Option<f64>,
    pub points: usize,
    pub relative_noise: f64,
    pub polarization: f64,
    pub transition: Transition,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            kind: DecayKind::InversionRecovery,
            theta_deg: 80.0,
            t_min_s: None,
            t_max_s: None,
            points: 200,
            relative_noise: 0.02,
            polarization: presets::OPTICAL_POLARIZATION,
            transition: Transition::ZeroToPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    pub densities_cm3: Vec<f64>,
    pub temperatures_k: Vec<f64>,
    pub g1z: f64,
    pub g2z: f64,
    /// Arrhenius law of the partner flip rate W(T).
    pub flip_prefactor_hz: f64,
    pub flip_t_sat_s: f64,
    pub formula: EchoFormula,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            densities_cm3: vec![5e15, 1e16, 5e16, 1e17, 5e17, 1e18, 5e18],
            temperatures_k: vec![20.0, 25.0, 30.0, 35.0, 40.0],
            g1z: presets::G_PARALLEL,
            g2z: presets::G_PARALLEL,
            flip_prefactor_hz: presets::PREFACTORS_D1[1].value_hz,
            flip_t_sat_s: presets::T1_SAT_D1_S,
            formula: EchoFormula::Squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// One activation energy across all Arrhenius datasets.
    pub share_ea: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { share_ea: true }
    }
}

impl RunConfig {
    /// Parse by extension: `.toml` as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg: Self = if is_toml {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let s = &self.spin;
        if !(1.9..=2.1).contains(&s.g_parallel) || !(1.9..=2.1).contains(&s.g_perpendicular) {
            return bad("g values must lie in [1.9, 2.1]");
        }
        if !(s.microwave_ghz > 0.0) || !(s.field_mt >= 0.0) {
            return bad("microwave frequency must be positive and field nonnegative");
        }
        let o = &self.orbach;
        if !(o.temperature_k > 0.0) || !(o.activation_mev >= 0.0) || !(o.ratio > 0.0) {
            return bad("temperature and ratio must be positive, activation energy nonnegative");
        }
        if o.rate_coefficient.is_some_and(|c| !(c >= 0.0)) {
            return bad("rate coefficient must be nonnegative");
        }
        if !(self.background.t2_sd_s > 0.0) || !(self.background.t2_id_s > 0.0) {
            return bad("background times must be positive");
        }
        let or = &self.orientation;
        if or.points < 2 || !(or.theta_max_deg > or.theta_min_deg) || or.theta_min_deg < 0.0 || or.theta_max_deg > 180.0 {
            return bad("orientation grid needs 0 <= theta_min < theta_max <= 180 and at least 2 points");
        }
        let t = &self.temperature;
        if t.points < 2 || !(t.t_max_k > t.t_min_k) || !(t.t_min_k > 0.0) {
            return bad("temperature grid needs 0 < t_min < t_max and at least 2 points");
        }
        let d = &self.decay;
        if d.points < 2 || !(0.0..=1.0).contains(&d.polarization) || !(d.relative_noise >= 0.0) {
            return bad("decay needs at least 2 points, polarization in [0, 1] and nonnegative noise");
        }
        if let (Some(a), Some(b)) = (d.t_min_s, d.t_max_s) {
            if !(a > 0.0 && b > a) {
                return bad("decay window needs 0 < t_min_s < t_max_s");
            }
        }
        let b = &self.bath;
        if b.densities_cm3.is_empty() || b.densities_cm3.iter().any(|&n| !(n > 0.0)) {
            return bad("bath densities must be positive");
        }
        if b.temperatures_k.iter().any(|&x| !(x > 0.0)) || !(b.flip_t_sat_s > 0.0) {
            return bad("bath temperatures and flip plateau must be positive");
        }
        if !(self.triplet.d_e_ghz.is_finite()) {
            return bad("excited-state splitting must be finite");
        }
        Ok(())
    }
}

/// Provenance tag for each default parameter.
pub const SOURCES: &[(&str, &str)] = &[
    ("d_ghz", "ground-state ESR fit"),
    ("g_parallel", "ground-state ESR fit"),
    ("g_perpendicular", "ground-state ESR fit"),
    ("microwave_ghz", "X-band measurement frequency"),
    ("activation_mev", "Arrhenius fit of T1 and T2"),
    ("ratio", "orientation fit at 30 K"),
    ("t2_sd_s", "instantaneous-diffusion extrapolation"),
    ("t2_id_s", "instantaneous-diffusion extrapolation"),
    ("rate_coefficient", "calibrated to the off-axis T1 prefactor"),
];
