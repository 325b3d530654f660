//! Joint fit of the singlet-model T1 and T2 orientation curves for the rate
//! coefficient C |t0_0|^4 and the zero-field overlap ratio |t0_0 / t0_+-1|.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{best_outcome, levenberg_marquardt, numeric_jacobian, LmOptions, LmOutcome};
use super::{log_grid, FitResult};
use crate::error::{OrbachError, Result};
use crate::rates::RelaxationTime;
use crate::singlet::{singlet_relaxation_times, t2_singlet, OrbachParams, ZeroFieldOverlaps};
use crate::spin::Transition;

const RATIO_STARTS: usize = 8;
const RATIO_MIN: f64 = 0.3;
const RATIO_MAX: f64 = 1000.0;
/// Chi-square quantile for one parameter at 95 %.
const CHI2_95: f64 = 3.84;
/// Penalty residual for a prediction with no relaxation channel.
const UNBOUNDED_PENALTY: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationPoint {
    /// Field angle from the defect axis, radians.
    pub theta: f64,
    pub time: f64,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrientationData {
    pub t1a: Vec<OrientationPoint>,
    pub t1b: Vec<OrientationPoint>,
    pub t2: Vec<OrientationPoint>,
}

impl OrientationData {
    fn len(&self) -> usize {
        self.t1a.len() + self.t1b.len() + self.t2.len()
    }

    fn validate(&self) -> Result<()> {
        for p in self.t1a.iter().chain(&self.t1b).chain(&self.t2) {
            if !(p.time > 0.0) || p.sigma.is_some_and(|s| !(s > 0.0)) || !p.theta.is_finite() {
                return Err(OrbachError::Data("orientation points need positive times and sigmas".into()));
            }
        }
        if self.t1a.len() + self.t1b.len() == 0 {
            return Err(OrbachError::Data("at least one T1 point is required".into()));
        }
        Ok(())
    }

    /// Widest angular span covered (degrees).
    fn coverage_deg(&self) -> (f64, f64) {
        let all = self.t1a.iter().chain(&self.t1b).chain(&self.t2).map(|p| p.theta.to_degrees());
        all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    }
}

struct Model<'a> {
    data: &'a OrientationData,
    base: OrbachParams,
    t2_id: f64,
    t2_sd: f64,
    transition: Transition,
}

fn log_time(t: RelaxationTime) -> Option<f64> {
    t.seconds().map(f64::ln)
}

impl<'a> Model<'a> {
    fn params(&self, ln_c: f64) -> OrbachParams {
        OrbachParams { rate_coefficient_c: ln_c.exp(), ..self.base }
    }

    fn residual(&self, p: &DVector<f64>) -> DVector<f64> {
        let orbach = self.params(p[0]);
        let zf = ZeroFieldOverlaps::from_ratio(p[1].exp());
        let weight = |pt: &OrientationPoint| pt.sigma.map_or(1.0, |s| pt.time / s);
        let mut out = Vec::with_capacity(self.data.len());
        for (points, is_a) in [(&self.data.t1a, true), (&self.data.t1b, false)] {
            for pt in points.iter() {
                let pred = singlet_relaxation_times(&zf, pt.theta, &orbach)
                    .ok()
                    .and_then(|m| log_time(if is_a { m.t1_a } else { m.t1_b }));
                out.push(match pred {
                    Some(lt) => weight(pt) * (lt - pt.time.ln()),
                    None => UNBOUNDED_PENALTY,
                });
            }
        }
        for pt in &self.data.t2 {
            let t2 = t2_singlet(&zf, pt.theta, &orbach, self.t2_id, self.t2_sd, self.transition);
            out.push(log_time(t2).map_or(UNBOUNDED_PENALTY, |lt| weight(pt) * (lt - pt.time.ln())));
        }
        DVector::from_vec(out)
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        numeric_jacobian(&|q: &DVector<f64>| self.residual(q), p)
    }

    /// Closed-form ln C matching the T1 data on average at fixed ratio.
    fn initial_ln_c(&self, ratio: f64) -> f64 {
        let unit = self.params(0.0);
        let zf = ZeroFieldOverlaps::from_ratio(ratio);
        let mut sum = 0.0;
        let mut n = 0usize;
        for (points, is_a) in [(&self.data.t1a, true), (&self.data.t1b, false)] {
            for pt in points.iter() {
                if let Some(lt) = singlet_relaxation_times(&zf, pt.theta, &unit)
                    .ok()
                    .and_then(|m| log_time(if is_a { m.t1_a } else { m.t1_b }))
                {
                    sum += lt - pt.time.ln();
                    n += 1;
                }
            }
        }
        if n == 0 { 0.0 } else { sum / n as f64 }
    }

    fn fit_from(&self, ln_c: f64, ln_ratio: f64) -> LmOutcome {
        let res = |q: &DVector<f64>| self.residual(q);
        let jac = |q: &DVector<f64>| self.jacobian(q);
        levenberg_marquardt(&res, &jac, &DVector::from_vec(vec![ln_c, ln_ratio]), &LmOptions::default())
    }

    /// Residual sum of squares minimized over C at fixed ratio.
    fn profile(&self, ratio: f64, ln_c_hint: f64) -> (f64, f64) {
        let lr = ratio.ln();
        let res = |q: &DVector<f64>| self.residual(&DVector::from_vec(vec![q[0], lr]));
        let jac = |q: &DVector<f64>| numeric_jacobian(&res, q);
        let starts = [ln_c_hint, self.initial_ln_c(ratio)];
        let best = starts
            .iter()
            .map(|&c| levenberg_marquardt(&res, &jac, &DVector::from_vec(vec![c]), &LmOptions::default()))
            .min_by(|a, b| a.rss.total_cmp(&b.rss))
            .unwrap();
        (best.rss, best.params[0])
    }
}

/// Profiled residual sum of squares over the given ratios: (ratio, C, rss).
pub fn ratio_profile(
    data: &OrientationData,
    base: &OrbachParams,
    t2_id: f64,
    t2_sd: f64,
    transition: Transition,
    ratios: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    data.validate()?;
    let model = Model { data, base: *base, t2_id, t2_sd, transition };
    Ok(ratios
        .iter()
        .map(|&r| {
            let (rss, ln_c) = model.profile(r, model.initial_ln_c(r));
            (r, ln_c.exp(), rss)
        })
        .collect())
}

/// Fit C |t0_0|^4 (with |t0_0|^2 = 1) and the overlap ratio to T1 and T2
/// orientation data in log-time space. `base` supplies E_a, T and the Zeeman
/// frequency; its rate coefficient is ignored.
pub fn global_orientation_fit(
    data: &OrientationData,
    base: &OrbachParams,
    t2_id: f64,
    t2_sd: f64,
    transition: Transition,
) -> Result<FitResult> {
    data.validate()?;
    let model = Model { data, base: *base, t2_id, t2_sd, transition };
    let n = data.len();
    if n < 3 {
        return Err(OrbachError::Underdetermined("need at least three orientation points".into()));
    }
    let outcomes = log_grid(RATIO_MIN, RATIO_MAX, RATIO_STARTS)
        .into_iter()
        .map(|r| model.fit_from(model.initial_ln_c(r), r.ln()))
        .collect();
    let best = best_outcome(outcomes).ok_or_else(|| OrbachError::NonConvergence("no finite start".into()))?;

    let mut notices = Vec::new();
    let (lo, hi) = data.coverage_deg();
    if lo > 5.0 || hi < 85.0 {
        notices.push(format!("angular coverage [{lo:.1}, {hi:.1}] deg is narrower than [5, 85] deg"));
    }

    let ratio = best.params[1].exp();
    let s2 = best.rss / (n - 2).max(1) as f64;
    let threshold = best.rss + CHI2_95 * s2;
    let lower = lower_bound(&model, ratio, best.params[0], threshold);
    let mut extras = std::collections::BTreeMap::new();
    match lower {
        Some(b) => {
            extras.insert("ratio_lower_bound".to_string(), b);
        }
        None => notices.push("no ratio lower bound within the scanned range".into()),
    }
    extras.insert("residual_variance".to_string(), s2);

    let cov = best.covariance();
    let sd = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
    let c = best.params[0].exp();
    let sig = vec![c * sd(0), ratio * sd(1)];
    Ok(FitResult {
        model: "singlet-orientation".into(),
        names: vec!["c_t0_4".into(), "ratio".into()],
        values: vec![c, ratio],
        uncertainties: (best.converged && sig.iter().all(|s| s.is_finite())).then_some(sig),
        rss: best.rss,
        points: n,
        iterations: best.iterations,
        converged: best.converged,
        notices,
        extras,
    })
}

/// Smallest ratio below the optimum whose profiled residual stays within
/// `threshold`, located by a downward scan and bisection in log ratio.
fn lower_bound(model: &Model, best_ratio: f64, best_ln_c: f64, threshold: f64) -> Option<f64> {
    let step = 10f64.powf(0.05);
    let mut inside = best_ratio;
    let mut hint = best_ln_c;
    let mut outside = None;
    let mut r = best_ratio / step;
    while r >= RATIO_MIN * 0.1 {
        let (rss, ln_c) = model.profile(r, hint);
        if rss > threshold {
            outside = Some(r);
            break;
        }
        inside = r;
        hint = ln_c;
        r /= step;
    }
    let mut out = outside?;
    for _ in 0..30 {
        let mid = (inside * out).sqrt();
        let (rss, ln_c) = model.profile(mid, hint);
        if rss > threshold {
            out = mid;
        } else {
            inside = mid;
            hint = ln_c;
        }
        if inside / out - 1.0 < 1e-6 {
            break;
        }
    }
    Some(inside)
}
