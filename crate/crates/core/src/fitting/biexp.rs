//! Mono- and biexponential decay fits, y = sum_k a_k exp(-t / tau_k) + c.

use nalgebra::{DMatrix, DVector};

use super::lm::{best_outcome, levenberg_marquardt, LmOptions, LmOutcome};
use super::{inverse_sigma, log_grid, FitResult};
use crate::dynamics::DecayCurve;
use crate::error::{OrbachError, Result};

const MIN_POINTS: usize = 7;
const TAU_STARTS: usize = 8;
/// Time constants closer than this ratio are not resolved separately.
const MIN_TAU_RATIO: f64 = 1.5;

struct Data<'a> {
    t: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl<'a> Data<'a> {
    fn new(curve: &'a DecayCurve) -> Result<Self> {
        if curve.len() < MIN_POINTS {
            return Err(OrbachError::Data(format!("need at least {MIN_POINTS} points, got {}", curve.len())));
        }
        if curve.times[0] < 0.0 || *curve.times.last().unwrap() <= 0.0 {
            return Err(OrbachError::Data("times must be nonnegative with a positive span".into()));
        }
        Ok(Self { t: &curve.times, y: &curve.signal, w: inverse_sigma(curve.sigma.as_deref(), curve.len()) })
    }

    /// Exponential terms with parameters (a, ln tau) pairs followed by c.
    fn residual(&self, p: &DVector<f64>) -> DVector<f64> {
        let terms = (p.len() - 1) / 2;
        DVector::from_iterator(
            self.t.len(),
            self.t.iter().zip(self.y).zip(&self.w).map(|((&t, &y), &w)| {
                let model: f64 = (0..terms).map(|k| p[2 * k] * (-t * (-p[2 * k + 1]).exp()).exp()).sum::<f64>()
                    + p[p.len() - 1];
                w * (model - y)
            }),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let terms = (p.len() - 1) / 2;
        let mut j = DMatrix::zeros(self.t.len(), p.len());
        for (i, (&t, &w)) in self.t.iter().zip(&self.w).enumerate() {
            for k in 0..terms {
                let rate = (-p[2 * k + 1]).exp();
                let e = (-t * rate).exp();
                j[(i, 2 * k)] = w * e;
                // d/d(ln tau) of a exp(-t / tau) = a exp(-t/tau) t / tau
                j[(i, 2 * k + 1)] = w * p[2 * k] * e * t * rate;
            }
            j[(i, p.len() - 1)] = w;
        }
        j
    }

    /// Amplitudes and offset for fixed time constants by weighted linear least squares.
    fn linear_amplitudes(&self, taus: &[f64]) -> Option<DVector<f64>> {
        let cols = taus.len() + 1;
        let mut a = DMatrix::zeros(self.t.len(), cols);
        let mut b = DVector::zeros(self.t.len());
        for (i, (&t, &w)) in self.t.iter().zip(&self.w).enumerate() {
            for (k, tau) in taus.iter().enumerate() {
                a[(i, k)] = w * (-t / tau).exp();
            }
            a[(i, cols - 1)] = w;
            b[i] = w * self.y[i];
        }
        let x = a.svd(true, true).solve(&b, 1e-12).ok()?;
        let mut p = DVector::zeros(2 * taus.len() + 1);
        for (k, tau) in taus.iter().enumerate() {
            p[2 * k] = x[k];
            p[2 * k + 1] = tau.ln();
        }
        p[2 * taus.len()] = x[cols - 1];
        Some(p)
    }

    fn tau_grid(&self) -> Vec<f64> {
        let t_max = *self.t.last().unwrap();
        let t_min = self.t.iter().copied().find(|&t| t > 0.0).unwrap_or(t_max).max(t_max * 1e-6);
        log_grid(t_min, t_max, TAU_STARTS)
    }

    fn fit(&self, starts: Vec<Vec<f64>>) -> Option<LmOutcome> {
        let opts = LmOptions::default();
        let res = |p: &DVector<f64>| self.residual(p);
        let jac = |p: &DVector<f64>| self.jacobian(p);
        let outcomes = starts
            .iter()
            .filter_map(|taus| self.linear_amplitudes(taus))
            .map(|p0| levenberg_marquardt(&res, &jac, &p0, &opts))
            .collect();
        best_outcome(outcomes)
    }
}

fn to_result(model: &str, data: &Data, out: &LmOutcome) -> FitResult {
    let terms = (out.params.len() - 1) / 2;
    let mut order: Vec<usize> = (0..terms).collect();
    order.sort_by(|&a, &b| out.params[2 * a + 1].total_cmp(&out.params[2 * b + 1]));
    let cov = out.covariance();
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut sig = Vec::new();
    let sd = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
    for (slot, &k) in order.iter().enumerate() {
        let suffix = if terms == 1 { String::new() } else { (slot + 1).to_string() };
        let tau = out.params[2 * k + 1].exp();
        names.push(format!("a{suffix}"));
        values.push(out.params[2 * k]);
        sig.push(sd(2 * k));
        names.push(format!("tau{suffix}"));
        values.push(tau);
        sig.push(tau * sd(2 * k + 1));
    }
    names.push("offset".into());
    values.push(out.params[2 * terms]);
    sig.push(sd(2 * terms));
    FitResult {
        model: model.into(),
        names,
        values,
        uncertainties: (out.converged && sig.iter().all(|s| s.is_finite())).then_some(sig),
        rss: out.rss,
        points: data.t.len(),
        iterations: out.iterations,
        converged: out.converged,
        notices: Vec::new(),
        extras: Default::default(),
    }
}

pub fn fit_monoexponential(curve: &DecayCurve) -> Result<FitResult> {
    let data = Data::new(curve)?;
    let starts = data.tau_grid().into_iter().map(|t| vec![t]).collect();
    let out = data.fit(starts).ok_or_else(|| OrbachError::NonConvergence("no finite start".into()))?;
    Ok(to_result("monoexponential", &data, &out))
}

fn bic(rss: f64, scale: f64, m: usize, k: usize) -> f64 {
    let m_f = m as f64;
    m_f * (rss.max(1e-28 * scale) / m_f).ln() + k as f64 * m_f.ln()
}

/// Two-exponential fit with tau1 <= tau2. Falls back to a single exponential
/// (with a notice) when the two time constants are not resolved.
pub fn fit_biexponential(curve: &DecayCurve) -> Result<FitResult> {
    let data = Data::new(curve)?;
    let grid = data.tau_grid();
    let mut starts = Vec::new();
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            starts.push(vec![grid[i], grid[j]]);
        }
    }
    let bi = data.fit(starts).ok_or_else(|| OrbachError::NonConvergence("no finite start".into()))?;
    let bi_result = to_result("biexponential", &data, &bi);
    let mono = fit_monoexponential(curve)?;

    let (a1, tau1, a2, tau2) = (
        bi_result.values[0],
        bi_result.values[1],
        bi_result.values[2],
        bi_result.values[3],
    );
    let scale: f64 = data.y.iter().zip(&data.w).map(|(y, w)| (y * w).powi(2)).sum();
    let m = data.t.len();
    let reason = if tau2 / tau1 < MIN_TAU_RATIO {
        Some(format!("time constants {tau1:.4e} s and {tau2:.4e} s differ by less than {MIN_TAU_RATIO}x"))
    } else if a1.abs().min(a2.abs()) < 1e-3 * (a1.abs() + a2.abs()) {
        Some("one exponential component has negligible amplitude".to_string())
    } else if bic(mono.rss, scale, m, 3) <= bic(bi.rss, scale, m, 5) {
        Some("single exponential preferred by information criterion".to_string())
    } else {
        None
    };
    match reason {
        Some(why) => {
            let mut r = mono;
            r.notices.push(format!("collapsed to monoexponential: {why}"));
            Ok(r)
        }
        None => Ok(bi_result),
    }
}
