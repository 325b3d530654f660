//! Instantaneous-diffusion extrapolation: 1/T2 = 1/T2_SD + sin^2(theta2/2) / T2_ID,
//! with theta2 the refocusing pulse angle.

use super::FitResult;
use crate::error::{OrbachError, Result};

/// Hahn-echo T2 from the spectral- and instantaneous-diffusion times.
pub fn hahn_echo_t2(t2_sd: f64, t2_id: f64, theta2: f64) -> f64 {
    1.0 / (1.0 / t2_sd + (0.5 * theta2).sin().powi(2) / t2_id)
}

/// Weighted straight-line fit of decoherence rate against sin^2(theta2/2).
/// `points` holds (theta2 in radians, rate in 1/s); `sigma` are rate errors.
pub fn fit_instantaneous_diffusion(points: &[(f64, f64)], sigma: Option<&[f64]>) -> Result<FitResult> {
    if let Some(s) = sigma {
        if s.len() != points.len() || s.iter().any(|&x| !(x > 0.0)) {
            return Err(OrbachError::Data("sigma must be positive, one per point".into()));
        }
    }
    let x: Vec<f64> = points.iter().map(|(th, _)| (0.5 * th).sin().powi(2)).collect();
    let mut distinct = x.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 3 {
        return Err(OrbachError::Underdetermined(format!(
            "need at least 3 distinct pulse angles, got {}",
            distinct.len()
        )));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        None => vec![1.0; points.len()],
    };
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = points.iter().zip(&w).map(|((_, y), b)| y * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(points).zip(&w).map(|((a, (_, y)), b)| b * (a - xm) * (y - ym)).sum();
    if sxx <= 1e-14 * sw {
        return Err(OrbachError::Underdetermined("pulse angles are collinear".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(points)
        .zip(&w)
        .map(|((a, (_, y)), b)| b * (y - intercept - slope * a).powi(2))
        .sum();
    let n = points.len();
    let s2 = rss / (n - 2) as f64;
    let var_slope = s2 / sxx;
    let var_intercept = s2 * (1.0 / sw + xm * xm / sxx);

    let mut notices = Vec::new();
    if intercept <= 0.0 || slope <= 0.0 {
        notices.push("non-positive rate component: corresponding time is unphysical".to_string());
    }
    let t2_sd = 1.0 / intercept;
    let t2_id = 1.0 / slope;
    Ok(FitResult {
        model: "instantaneous-diffusion".into(),
        names: vec!["t2_sd_s".into(), "t2_id_s".into(), "rate_sd".into(), "rate_id".into()],
        values: vec![t2_sd, t2_id, intercept, slope],
        uncertainties: Some(vec![
            var_intercept.sqrt() * t2_sd * t2_sd,
            var_slope.sqrt() * t2_id * t2_id,
            var_intercept.sqrt(),
            var_slope.sqrt(),
        ]),
        rss,
        points: n,
        iterations: 1,
        converged: true,
        notices,
        extras: Default::default(),
    })
}
