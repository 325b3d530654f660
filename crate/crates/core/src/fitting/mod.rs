//! Least-squares estimators for relaxation data.

mod arrhenius;
mod biexp;
mod diffusion;
pub mod lm;
mod orientation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use arrhenius::{arrhenius_time, fit_arrhenius, ArrheniusDataset, ArrheniusFit, ArrheniusPoint, Observable};
pub use biexp::{fit_biexponential, fit_monoexponential};
pub use diffusion::{fit_instantaneous_diffusion, hahn_echo_t2};
pub use orientation::{global_orientation_fit, ratio_profile, OrientationData, OrientationPoint};

/// Estimated parameters with linearized one-sigma uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Present only for converged fits.
    pub uncertainties: Option<Vec<f64>>,
    pub rss: f64,
    pub points: usize,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default)]
    pub notices: Vec<String>,
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        let i = self.index(name)?;
        self.uncertainties.as_ref().map(|u| u[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results serialize")
    }

    pub fn dof(&self) -> usize {
        self.points.saturating_sub(self.names.len())
    }
}

/// Weights 1/sigma, or ones.
fn inverse_sigma(sigma: Option<&[f64]>, n: usize) -> Vec<f64> {
    match sigma {
        Some(s) => s.iter().map(|x| 1.0 / x).collect(),
        None => vec![1.0; n],
    }
}

/// `n` values spaced logarithmically over [lo, hi].
fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp()).collect()
}
