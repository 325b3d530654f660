//! Temperature dependence 1/T(T) = 1/T_sat + A exp(-E_a / kT), fitted in
//! log-rate space with an optionally shared activation energy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{best_outcome, levenberg_marquardt, LmOptions, LmOutcome};
use super::FitResult;
use crate::constants::CODATA;
use crate::error::{OrbachError, Result};

const EA_STARTS_MEV: [f64; 8] = [4.0, 8.0, 12.0, 16.0, 20.0, 25.0, 32.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    T1,
    T2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusPoint {
    pub temperature: f64,
    /// Decay time, s.
    pub time: f64,
    /// One-sigma error of `time`, s.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusDataset {
    pub label: String,
    pub sample: String,
    pub orientation: String,
    pub observable: Observable,
    pub points: Vec<ArrheniusPoint>,
    /// Hold the low-temperature plateau at this time instead of fitting it.
    pub fixed_t_sat: Option<f64>,
}

impl ArrheniusDataset {
    pub fn new(label: impl Into<String>, observable: Observable, points: Vec<ArrheniusPoint>) -> Result<Self> {
        let d = Self {
            label: label.into(),
            sample: String::new(),
            orientation: String::new(),
            observable,
            points,
            fixed_t_sat: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(OrbachError::Data(format!("dataset '{}' is empty", self.label)));
        }
        for p in &self.points {
            if !(p.temperature > 0.0) || !(p.time > 0.0) {
                return Err(OrbachError::Data(format!("dataset '{}': temperatures and times must be positive", self.label)));
            }
            if p.sigma.is_some_and(|s| !(s > 0.0)) {
                return Err(OrbachError::Data(format!("dataset '{}': sigma must be positive", self.label)));
            }
        }
        if self.fixed_t_sat.is_some_and(|t| !(t > 0.0)) {
            return Err(OrbachError::Data("fixed T_sat must be positive".into()));
        }
        Ok(())
    }
}

/// Decay time predicted by the Arrhenius model.
pub fn arrhenius_time(t_sat: f64, prefactor_hz: f64, ea_mev: f64, temperature: f64) -> f64 {
    1.0 / (1.0 / t_sat + prefactor_hz * crate::constants::activation_factor(ea_mev, temperature))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusFit {
    pub shared: bool,
    pub activation_mev: f64,
    pub activation_err_mev: f64,
    /// Per-dataset parameters (ea_mev, t_sat_s, prefactor_hz).
    pub datasets: Vec<FitResult>,
    /// All parameters of the joint regression (shared mode only).
    pub joint: Option<FitResult>,
}

struct Layout {
    /// Parameter index of ln(1/T_sat) per dataset, if free.
    sat: Vec<Option<usize>>,
    amp: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new(sets: &[&ArrheniusDataset]) -> Self {
        let mut next = 1;
        let mut sat = Vec::new();
        let mut amp = Vec::new();
        for d in sets {
            if d.fixed_t_sat.is_none() {
                sat.push(Some(next));
                next += 1;
            } else {
                sat.push(None);
            }
            amp.push(next);
            next += 1;
        }
        Self { sat, amp, len: next }
    }
}

struct Problem<'a> {
    sets: Vec<&'a ArrheniusDataset>,
    layout: Layout,
}

impl<'a> Problem<'a> {
    fn new(sets: Vec<&'a ArrheniusDataset>) -> Self {
        let layout = Layout::new(&sets);
        Self { sets, layout }
    }

    fn n_points(&self) -> usize {
        self.sets.iter().map(|d| d.points.len()).sum()
    }

    fn sat_rate(&self, d: usize, p: &DVector<f64>) -> f64 {
        match self.layout.sat[d] {
            Some(i) => p[i].exp(),
            None => 1.0 / self.sets[d].fixed_t_sat.unwrap(),
        }
    }

    fn for_each_point(&self, mut f: impl FnMut(usize, usize, &ArrheniusPoint, f64)) {
        let mut row = 0;
        for (d, set) in self.sets.iter().enumerate() {
            for pt in &set.points {
                let w = pt.sigma.map_or(1.0, |s| pt.time / s);
                f(row, d, pt, w);
                row += 1;
            }
        }
    }

    fn residual(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.n_points());
        self.for_each_point(|row, d, pt, w| {
            let x = (-p[0] / (CODATA.boltzmann_mev_per_k * pt.temperature)).exp();
            let model = self.sat_rate(d, p) + p[self.layout.amp[d]].exp() * x;
            r[row] = w * (model.ln() + pt.time.ln());
        });
        r
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n_points(), self.layout.len);
        self.for_each_point(|row, d, pt, w| {
            let kt = CODATA.boltzmann_mev_per_k * pt.temperature;
            let x = (-p[0] / kt).exp();
            let sat = self.sat_rate(d, p);
            let act = p[self.layout.amp[d]].exp() * x;
            let model = sat + act;
            j[(row, 0)] = -w * act / (kt * model);
            if let Some(i) = self.layout.sat[d] {
                j[(row, i)] = w * sat / model;
            }
            j[(row, self.layout.amp[d])] = w * act / model;
        });
        j
    }

    fn start(&self, ea: f64) -> DVector<f64> {
        let mut p = DVector::zeros(self.layout.len);
        p[0] = ea;
        for (d, set) in self.sets.iter().enumerate() {
            let rates: Vec<f64> = set.points.iter().map(|pt| 1.0 / pt.time).collect();
            let r_min = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let sat = set.fixed_t_sat.map_or(r_min, |t| 1.0 / t);
            if let Some(i) = self.layout.sat[d] {
                p[i] = (0.5 * r_min).ln();
            }
            let hot = set.points.iter().max_by(|a, b| a.temperature.total_cmp(&b.temperature)).unwrap();
            let x = (-ea / (CODATA.boltzmann_mev_per_k * hot.temperature)).exp();
            let excess = (1.0 / hot.time - sat).max(0.5 / hot.time);
            p[self.layout.amp[d]] = (excess / x).ln();
        }
        p
    }

    fn solve(&self) -> Result<LmOutcome> {
        let res = |p: &DVector<f64>| self.residual(p);
        let jac = |p: &DVector<f64>| self.jacobian(p);
        let opts = LmOptions::default();
        let outcomes = EA_STARTS_MEV.iter().map(|&ea| levenberg_marquardt(&res, &jac, &self.start(ea), &opts)).collect();
        best_outcome(outcomes).ok_or_else(|| OrbachError::NonConvergence("no finite Arrhenius start".into()))
    }

    fn dataset_result(&self, d: usize, out: &LmOutcome, cov: Option<&DMatrix<f64>>) -> FitResult {
        let sd = |i: usize| cov.map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
        let (t_sat, t_sat_err) = match self.layout.sat[d] {
            Some(i) => {
                let t = (-out.params[i]).exp();
                (t, t * sd(i))
            }
            None => (self.sets[d].fixed_t_sat.unwrap(), 0.0),
        };
        let ai = self.layout.amp[d];
        let a = out.params[ai].exp();
        let sig = vec![sd(0), t_sat_err, a * sd(ai)];
        let mut notices = Vec::new();
        if sig[0] > 0.5 * out.params[0].abs() || sd(ai) > 1.0 {
            notices.push("wide uncertainties: temperature span does not constrain the activated region".into());
        }
        FitResult {
            model: "arrhenius".into(),
            names: vec!["ea_mev".into(), "t_sat_s".into(), "prefactor_hz".into()],
            values: vec![out.params[0], t_sat, a],
            uncertainties: (out.converged && sig.iter().all(|s| s.is_finite())).then_some(sig),
            rss: out.rss,
            points: self.sets[d].points.len(),
            iterations: out.iterations,
            converged: out.converged,
            notices,
            extras: Default::default(),
        }
    }
}

/// Fit every dataset; with `share_ea` one activation energy is estimated
/// jointly, otherwise each dataset gets its own and the reported value is
/// their inverse-variance weighted mean.
pub fn fit_arrhenius(datasets: &[ArrheniusDataset], share_ea: bool) -> Result<ArrheniusFit> {
    if datasets.is_empty() {
        return Err(OrbachError::Data("no datasets".into()));
    }
    for d in datasets {
        d.validate()?;
    }
    if share_ea {
        let problem = Problem::new(datasets.iter().collect());
        if problem.n_points() < problem.layout.len {
            return Err(OrbachError::Underdetermined("fewer points than parameters".into()));
        }
        let out = problem.solve()?;
        let cov = out.covariance();
        let per: Vec<FitResult> = (0..datasets.len()).map(|d| problem.dataset_result(d, &out, cov.as_ref())).collect();
        let sd = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
        let mut names = vec!["ea_mev".to_string()];
        let mut values = vec![out.params[0]];
        let mut sig = vec![sd(0)];
        for (d, set) in datasets.iter().enumerate() {
            if let Some(i) = problem.layout.sat[d] {
                let t = (-out.params[i]).exp();
                names.push(format!("{}.t_sat_s", set.label));
                values.push(t);
                sig.push(t * sd(i));
            }
            let ai = problem.layout.amp[d];
            let a = out.params[ai].exp();
            names.push(format!("{}.prefactor_hz", set.label));
            values.push(a);
            sig.push(a * sd(ai));
        }
        let notices: Vec<String> = per.iter().flat_map(|r| r.notices.iter().cloned()).take(1).collect();
        let joint = FitResult {
            model: "arrhenius-shared".into(),
            names,
            values,
            uncertainties: (out.converged && sig.iter().all(|s| s.is_finite())).then_some(sig),
            rss: out.rss,
            points: problem.n_points(),
            iterations: out.iterations,
            converged: out.converged,
            notices,
            extras: Default::default(),
        };
        Ok(ArrheniusFit {
            shared: true,
            activation_mev: out.params[0],
            activation_err_mev: sd(0),
            datasets: per,
            joint: Some(joint),
        })
    } else {
        let mut per = Vec::new();
        for d in datasets {
            let problem = Problem::new(vec![d]);
            if problem.n_points() < problem.layout.len {
                return Err(OrbachError::Underdetermined(format!("dataset '{}' has too few points", d.label)));
            }
            let out = problem.solve()?;
            let cov = out.covariance();
            per.push(problem.dataset_result(0, &out, cov.as_ref()));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for r in &per {
            let s = r.uncertainty("ea_mev").unwrap_or(f64::NAN);
            if s.is_finite() && s > 0.0 {
                num += r.values[0] / (s * s);
                den += 1.0 / (s * s);
            }
        }
        let (ea, err) = if den > 0.0 {
            (num / den, den.powf(-0.5))
        } else {
            (per.iter().map(|r| r.values[0]).sum::<f64>() / per.len() as f64, f64::NAN)
        };
        Ok(ArrheniusFit { shared: false, activation_mev: ea, activation_err_mev: err, datasets: per, joint: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{ACTIVATION_MEV, PREFACTORS_D1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn temps() -> Vec<f64> {
        (0..40).map(|i| 5.0 + 55.0 * i as f64 / 39.0).collect()
    }

    fn synth(label: &str, t_sat: f64, a: f64, noise: f64, seed: u64) -> ArrheniusDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let points = temps()
            .into_iter()
            .map(|t| {
                let time = arrhenius_time(t_sat, a, ACTIVATION_MEV, t);
                let e = if noise > 0.0 { n.sample(&mut rng) } else { 0.0 };
                ArrheniusPoint { temperature: t, time: time * (1.0 + e), sigma: None }
            })
            .collect();
        ArrheniusDataset::new(label, Observable::T1, points).unwrap()
    }

    #[test]
    fn noiseless_shared_fit_is_exact() {
        let sets: Vec<_> = PREFACTORS_D1.iter().map(|p| synth(p.label, p.t_sat_s, p.value_hz, 0.0, 0)).collect();
        let fit = fit_arrhenius(&sets, true).unwrap();
        assert!((fit.activation_mev / ACTIVATION_MEV - 1.0).abs() < 1e-6);
        for (r, p) in fit.datasets.iter().zip(PREFACTORS_D1.iter()) {
            assert!((r.value("prefactor_hz").unwrap() / p.value_hz - 1.0).abs() < 1e-6);
            assert!((r.value("t_sat_s").unwrap() / p.t_sat_s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn off_axis_recovery_with_noise() {
        let set = synth("off-axis", 1e-3, 378e3, 0.05, 9);
        let fit = fit_arrhenius(&[set], true).unwrap();
        assert!((fit.activation_mev - ACTIVATION_MEV).abs() < 1.5);
    }

    #[test]
    fn zero_prefactor_is_flat() {
        for t in [5.0, 30.0, 60.0] {
            assert_eq!(arrhenius_time(46.0, 0.0, ACTIVATION_MEV, t), 46.0);
        }
    }

    #[test]
    fn separate_mode_averages() {
        let sets: Vec<_> = PREFACTORS_D1.iter().map(|p| synth(p.label, p.t_sat_s, p.value_hz, 0.0, 0)).collect();
        let fit = fit_arrhenius(&sets, false).unwrap();
        assert!(!fit.shared && fit.joint.is_none());
        assert!((fit.activation_mev - ACTIVATION_MEV).abs() < 1e-5);
    }

    #[test]
    fn fixed_plateau_is_respected() {
        let mut set = synth("fixed", 46.0, 2.1e3, 0.0, 0);
        set.fixed_t_sat = Some(46.0);
        let fit = fit_arrhenius(&[set], true).unwrap();
        assert_eq!(fit.datasets[0].value("t_sat_s"), Some(46.0));
        assert!((fit.activation_mev / ACTIVATION_MEV - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scale_invariance_of_activation_energy() {
        let set = synth("scaled", 1e-3, 378e3, 0.03, 4);
        let mut scaled = set.clone();
        for p in &mut scaled.points {
            p.time *= 1e3;
        }
        let a = fit_arrhenius(&[set], true).unwrap();
        let b = fit_arrhenius(&[scaled], true).unwrap();
        assert!((a.activation_mev - b.activation_mev).abs() < 1e-8 * a.activation_mev);
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let sets = [synth("a", 1e-3, 3e5, 0.0, 0), synth("b", 40.0, 2e3, 0.0, 0)];
        let problem = Problem::new(sets.iter().collect());
        let p = DVector::from_vec(vec![15.0, 3.0, 12.0, -3.0, 8.0]);
        let f = |q: &DVector<f64>| problem.residual(q);
        let num = super::super::lm::numeric_jacobian(&f, &p);
        let exact = problem.jacobian(&p);
        assert!((num - &exact).abs().max() <= 1e-6 * exact.abs().max());
    }
}
