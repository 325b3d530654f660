use std::path::Path;

use orbach::bath::{echo_t2, PairBathParams};
use orbach::dynamics::{inversion_recovery_curve, log_times, saturation_recovery_curve, synthesize_noisy, DecayCurve};
use orbach::fitting::{
    arrhenius_time, fit_arrhenius, fit_biexponential, fit_instantaneous_diffusion, global_orientation_fit,
    ArrheniusDataset, ArrheniusPoint, FitResult, Observable, OrientationData, OrientationPoint,
};
use orbach::presets;
use orbach::rates::{relaxation_modes, RateMatrix3, RelaxationTime};
use orbach::singlet::{
    mixed_overlaps, singlet_rate_matrix, singlet_relaxation_times, t2_singlet, OrbachParams, ZeroFieldOverlaps,
};
use orbach::spin::{esr_spectrum_111, FieldConfig, FieldWindow, GTensor, SpinSystemParams, ZfsTensor};
use orbach::triplet::{triplet_rate_matrix, triplet_relaxation_times, triplet_t2_model, TripletModelParams};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{DecayKind, Model, RunConfig, Sample};
use crate::output::{num, time, Table};
use crate::CliError;

/// Result of one subcommand.
pub struct Report {
    pub table: Table,
    /// Full fit record, for fit commands.
    pub fit: Option<FitResult>,
    pub converged: bool,
}

impl Report {
    fn table(table: Table) -> Self {
        Self { table, fit: None, converged: true }
    }
}

fn ground(cfg: &RunConfig, theta: f64) -> SpinSystemParams {
    let s = &cfg.spin;
    SpinSystemParams {
        zfs: ZfsTensor { axial_d: s.d_ghz, rhombic_e: s.e_ghz, axis_polar: 0.0, axis_azimuth: 0.0 },
        g: GTensor { g_parallel: s.g_parallel, g_perpendicular: s.g_perpendicular },
        field: FieldConfig { magnitude: s.field_mt, theta, phi: 0.0, site_label: Default::default() },
    }
}

fn overlaps(cfg: &RunConfig) -> ZeroFieldOverlaps {
    ZeroFieldOverlaps::from_ratio(cfg.orbach.ratio)
}

fn orbach_with(cfg: &RunConfig, c: f64) -> Result<OrbachParams, CliError> {
    let o = &cfg.orbach;
    Ok(OrbachParams::new(c, o.activation_mev, o.temperature_k, cfg.spin.microwave_ghz)?)
}

/// Rate coefficient: configured, or set so the fast off-axis T1 mode carries
/// the measured off-axis prefactor.
fn rate_coefficient(cfg: &RunConfig) -> Result<f64, CliError> {
    if let Some(c) = cfg.orbach.rate_coefficient {
        return Ok(c);
    }
    match cfg.model {
        Model::Singlet => Ok(presets::rate_coefficient_for_ratio(cfg.orbach.ratio)),
        Model::Triplet => {
            let theta = presets::CALIBRATION_THETA_DEG.to_radians();
            let unit = triplet_params(cfg, 1.0)?.with_theta(theta);
            let modes = triplet_relaxation_times(&unit)?;
            let fast = modes.t1_a.rate().max(modes.t1_b.rate());
            if fast == 0.0 {
                return Err(CliError::Numeric("triplet model has no relaxation at the calibration angle".into()));
            }
            Ok(presets::PREFACTORS_D1[1].value_hz * unit.orbach.thermal_rate() / fast)
        }
    }
}

fn triplet_params(cfg: &RunConfig, c: f64) -> Result<TripletModelParams, CliError> {
    Ok(TripletModelParams::coaxial(ground(cfg, 0.0), cfg.triplet.d_e_ghz, orbach_with(cfg, c)?))
}

fn background_rate(cfg: &RunConfig) -> f64 {
    let b = &cfg.background;
    if b.enabled {
        1.0 / b.t2_sd_s + 1.0 / b.t2_id_s
    } else {
        0.0
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn esr_spectrum(cfg: &RunConfig) -> Result<Report, CliError> {
    let e = &cfg.esr;
    let window = FieldWindow::new(e.field_min_mt, e.field_max_mt);
    let sticks = esr_spectrum_111(&ground(cfg, 0.0), cfg.spin.microwave_ghz, e.misalignment_deg.to_radians(), window)?;
    let mut t = Table::new(&["field_mt", "intensity", "site", "transition"]);
    for s in sticks {
        t.push(vec![num(s.field_mt), num(s.intensity), s.site.to_string(), format!("{}-{}", s.lower, s.upper)]);
    }
    Ok(Report::table(t))
}

pub fn orientation_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let o = &cfg.orientation;
    let thetas = linspace(o.theta_min_deg, o.theta_max_deg, o.points);
    let c = rate_coefficient(cfg)?;
    let bg = background_rate(cfg);
    let rows: Vec<[RelaxationTime; 3]> = match cfg.model {
        Model::Singlet => {
            let zf = overlaps(cfg);
            let p = orbach_with(cfg, c)?;
            let (id, sd) = if cfg.background.enabled {
                (cfg.background.t2_id_s, cfg.background.t2_sd_s)
            } else {
                (f64::INFINITY, f64::INFINITY)
            };
            thetas
                .par_iter()
                .map(|deg| {
                    let th = deg.to_radians();
                    let m = singlet_relaxation_times(&zf, th, &p)?;
                    Ok([m.t1_a, m.t1_b, t2_singlet(&zf, th, &p, id, sd, o.transition)])
                })
                .collect::<Result<_, CliError>>()?
        }
        Model::Triplet => {
            let base = triplet_params(cfg, c)?;
            thetas
                .par_iter()
                .map(|deg| {
                    let p = base.with_theta(deg.to_radians());
                    let m = triplet_relaxation_times(&p)?;
                    let t2 = triplet_t2_model(&p, o.transition, cfg.triplet.t2_model)?;
                    Ok([m.t1_a, m.t1_b, RelaxationTime::from_rate(t2.rate() + bg)])
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    let mut t = Table::new(&["theta_deg", "t1a_s", "t1b_s", "t2_s"]);
    for (deg, r) in thetas.iter().zip(rows) {
        t.push(vec![num(*deg), time(r[0]), time(r[1]), time(r[2])]);
    }
    Ok(Report::table(t))
}

pub fn temperature_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let tc = &cfg.temperature;
    let (sets, t1_sat, t2_sat) = match tc.sample {
        Sample::D1 => (presets::PREFACTORS_D1, presets::T1_SAT_D1_S, presets::T2_SAT_D1_S),
        Sample::D2 => (presets::PREFACTORS_D2, presets::T1_SAT_D2_S, presets::T2_SAT_D2_S),
    };
    let a = tc.prefactors_hz.unwrap_or([sets[0].value_hz, sets[1].value_hz, sets[2].value_hz]);
    let ea = cfg.orbach.activation_mev;
    let mut t = Table::new(&["temperature_k", "t1_on_axis_s", "t1_off_axis_s", "t2_s"]);
    for k in linspace(tc.t_min_k, tc.t_max_k, tc.points) {
        t.push(vec![
            num(k),
            num(arrhenius_time(t1_sat, a[0], ea, k)),
            num(arrhenius_time(t1_sat, a[1], ea, k)),
            num(arrhenius_time(t2_sat, a[2], ea, k)),
        ]);
    }
    Ok(Report::table(t))
}

fn model_rate_matrix(cfg: &RunConfig, theta: f64) -> Result<RateMatrix3, CliError> {
    let c = rate_coefficient(cfg)?;
    Ok(match cfg.model {
        Model::Singlet => singlet_rate_matrix(&mixed_overlaps(&overlaps(cfg), theta), &orbach_with(cfg, c)?)?,
        Model::Triplet => triplet_rate_matrix(&triplet_params(cfg, c)?.with_theta(theta))?.0,
    })
}

pub fn decay(cfg: &RunConfig) -> Result<Report, CliError> {
    let d = &cfg.decay;
    let r = model_rate_matrix(cfg, d.theta_deg.to_radians())?;
    let (t_min, t_max) = match (d.t_min_s, d.t_max_s) {
        (Some(a), Some(b)) => (a, b),
        (lo, hi) => {
            let m = relaxation_modes(&r)?;
            let finite: Vec<f64> = [m.t1_a, m.t1_b].iter().filter_map(|t| t.seconds()).collect();
            if finite.is_empty() {
                return Err(CliError::Numeric("no finite relaxation time; set decay.t_min_s and t_max_s".into()));
            }
            let fast = finite.iter().cloned().fold(f64::INFINITY, f64::min);
            let slow = finite.iter().cloned().fold(0.0, f64::max);
            (lo.unwrap_or(0.02 * fast), hi.unwrap_or(8.0 * slow))
        }
    };
    if !(t_max > t_min && t_min > 0.0) {
        return Err(CliError::Config("decay window needs 0 < t_min_s < t_max_s".into()));
    }
    let times = log_times(t_min, t_max, d.points);
    let clean = match d.kind {
        DecayKind::InversionRecovery => inversion_recovery_curve(&r, d.transition, d.polarization, &times)?,
        DecayKind::SaturationRecovery => saturation_recovery_curve(&r, d.transition, d.polarization, &times)?,
    };
    let curve = synthesize_noisy(&clean, d.relative_noise, cfg.seed)?;
    let mut t = Table::new(&["time_s", "signal", "sigma"]);
    for i in 0..curve.len() {
        let sigma = curve.sigma.as_ref().map_or(String::new(), |s| num(s[i]));
        t.push(vec![num(curve.times[i]), num(curve.signal[i]), sigma]);
    }
    Ok(Report::table(t))
}

pub fn bath_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = &cfg.bath;
    let ea = cfg.orbach.activation_mev;
    let grid: Vec<(f64, f64)> =
        b.temperatures_k.iter().flat_map(|&t| b.densities_cm3.iter().map(move |&n| (t, n))).collect();
    let rows = grid
        .par_iter()
        .map(|&(temp, n)| {
            let w = 1.0 / arrhenius_time(b.flip_t_sat_s, b.flip_prefactor_hz, ea, temp);
            let p = PairBathParams {
                density: n,
                flip_rate: w,
                g1z: b.g1z,
                g2z: b.g2z,
                t2_sd_background: cfg.background.t2_sd_s,
            };
            let e = echo_t2(&p, b.formula)?;
            Ok(vec![num(temp), num(n), num(w), num(e.t2), e.non_monotone.to_string()])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut t = Table::new(&["temperature_k", "density_cm3", "flip_rate_hz", "t2_s", "non_monotone"]);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(Report::table(t))
}

fn fit_report(fit: FitResult) -> Report {
    let mut t = Table::new(&["parameter", "value", "uncertainty"]);
    for (i, name) in fit.names.iter().enumerate() {
        let u = fit.uncertainties.as_ref().map_or(String::new(), |u| num(u[i]));
        t.push(vec![name.clone(), num(fit.values[i]), u]);
    }
    for (name, v) in &fit.extras {
        t.push(vec![name.clone(), num(*v), String::new()]);
    }
    let converged = fit.converged;
    Report { table: t, fit: Some(fit), converged }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn fit_biexp(input: &Path) -> Result<Report, CliError> {
    let file = std::fs::File::open(input).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let curve = DecayCurve::read_csv(file)?;
    Ok(fit_report(fit_biexponential(&curve)?))
}

#[derive(Debug, Deserialize)]
struct ArrheniusRow {
    label: String,
    observable: Observable,
    temperature_k: f64,
    time_s: f64,
    #[serde(default)]
    sigma_s: Option<f64>,
}

pub fn fit_arrhenius_cmd(cfg: &RunConfig, input: &Path) -> Result<Report, CliError> {
    let rows: Vec<ArrheniusRow> = read_rows(input)?;
    let mut sets: Vec<(String, Observable, Vec<ArrheniusPoint>)> = Vec::new();
    for r in rows {
        let point = ArrheniusPoint { temperature: r.temperature_k, time: r.time_s, sigma: r.sigma_s };
        match sets.iter_mut().find(|(l, _, _)| *l == r.label) {
            Some((_, _, pts)) => pts.push(point),
            None => sets.push((r.label, r.observable, vec![point])),
        }
    }
    let datasets = sets
        .into_iter()
        .map(|(l, o, p)| ArrheniusDataset::new(l, o, p))
        .collect::<orbach::Result<Vec<_>>>()?;
    let fit = fit_arrhenius(&datasets, cfg.fit.share_ea)?;
    let mut t = Table::new(&["dataset", "parameter", "value", "uncertainty"]);
    t.push(vec!["all".into(), "ea_mev".into(), num(fit.activation_mev), num(fit.activation_err_mev)]);
    let mut converged = true;
    for (d, r) in datasets.iter().zip(&fit.datasets) {
        converged &= r.converged;
        for (i, name) in r.names.iter().enumerate() {
            let u = r.uncertainties.as_ref().map_or(String::new(), |u| num(u[i]));
            t.push(vec![d.label.clone(), name.clone(), num(r.values[i]), u]);
        }
    }
    let record = fit.joint.clone().unwrap_or_else(|| fit.datasets[0].clone());
    Ok(Report { table: t, fit: Some(record), converged })
}

#[derive(Debug, Deserialize)]
struct DiffusionRow {
    theta2_deg: f64,
    t2_s: f64,
    #[serde(default)]
    sigma_s: Option<f64>,
}

pub fn fit_id(input: &Path) -> Result<Report, CliError> {
    let rows: Vec<DiffusionRow> = read_rows(input)?;
    if rows.iter().any(|r| !(r.t2_s > 0.0)) {
        return Err(CliError::Config("T2 values must be positive".into()));
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.theta2_deg.to_radians(), 1.0 / r.t2_s)).collect();
    let sigma: Option<Vec<f64>> = rows.iter().map(|r| r.sigma_s.map(|s| s / (r.t2_s * r.t2_s))).collect();
    Ok(fit_report(fit_instantaneous_diffusion(&points, sigma.as_deref())?))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Series {
    T1a,
    T1b,
    T2,
}

#[derive(Debug, Deserialize)]
struct OrientationRow {
    series: Series,
    theta_deg: f64,
    time_s: f64,
    #[serde(default)]
    sigma_s: Option<f64>,
}

pub fn fit_orientation(cfg: &RunConfig, input: &Path) -> Result<Report, CliError> {
    let rows: Vec<OrientationRow> = read_rows(input)?;
    let mut data = OrientationData::default();
    for r in rows {
        let p = OrientationPoint { theta: r.theta_deg.to_radians(), time: r.time_s, sigma: r.sigma_s };
        match r.series {
            Series::T1a => data.t1a.push(p),
            Series::T1b => data.t1b.push(p),
            Series::T2 => data.t2.push(p),
        }
    }
    let base = orbach_with(cfg, 1.0)?;
    let (id, sd) = if cfg.background.enabled {
        (cfg.background.t2_id_s, cfg.background.t2_sd_s)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(fit_report(global_orientation_fit(&data, &base, id, sd, cfg.orientation.transition)?))
}
