//! Population dynamics dP/dt = R P and synthetic relaxation traces.

use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OrbachError, Result};
use crate::rates::RateMatrix3;
use crate::spin::Transition;

/// Negative populations down to this size are rounding noise.
const CLAMP_TOL: f64 = 1e-12;

/// Occupations of m_s = -1, 0, +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationState(pub [f64; 3]);

impl PopulationState {
    pub fn new(p: [f64; 3]) -> Result<Self> {
        if p.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("populations must be nonnegative"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("populations sum to {sum}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::from(self.0)
    }

    fn from_vector_clamped(v: &Vector3<f64>) -> Self {
        let mut p = [v[0], v[1], v[2]];
        if p.iter().any(|&x| x < -CLAMP_TOL) {
            log::warn!("negative population {:?} clamped", p);
        }
        for x in &mut p {
            *x = x.max(0.0);
        }
        let sum: f64 = p.iter().sum();
        Self(p.map(|x| x / sum))
    }
}

/// exp(R t) for one generator, factored once and reused over many times.
#[derive(Debug, Clone)]
pub struct Propagator {
    kind: PropagatorKind,
}

#[derive(Debug, Clone)]
enum PropagatorKind {
    Spectral { rates: Vector3<f64>, right: Matrix3<f64>, left: Matrix3<f64> },
    Pade { generator: Matrix3<f64> },
}

impl Propagator {
    pub fn new(r: &RateMatrix3) -> Self {
        let kind = match r.spectral() {
            Ok((rates, right)) => {
                // right = sqrt(P) Q with Q orthogonal, so the inverse is Q^T / sqrt(P)
                let inv_sqrt_p = r.equilibrium().map(|p| 1.0 / p.sqrt());
                let sqrt_p = r.equilibrium().map(f64::sqrt);
                let q = Matrix3::from_fn(|i, k| right[(i, k)] / sqrt_p[i]);
                let left = Matrix3::from_fn(|k, j| q[(j, k)] * inv_sqrt_p[j]);
                PropagatorKind::Spectral { rates, right, left }
            }
            Err(_) => PropagatorKind::Pade { generator: *r.matrix() },
        };
        Self { kind }
    }

    pub fn matrix(&self, t: f64) -> Matrix3<f64> {
        match &self.kind {
            PropagatorKind::Spectral { rates, right, left } => {
                let d = Matrix3::from_diagonal(&rates.map(|l| (l * t).exp()));
                right * d * left
            }
            PropagatorKind::Pade { generator } => expm_pade(&(generator * t)),
        }
    }

    pub fn apply(&self, p0: &PopulationState, t: f64) -> Result<PopulationState> {
        if !(t >= 0.0) {
            return Err(invalid(format!("propagation time {t} must be >= 0")));
        }
        let v = self.matrix(t) * p0.as_vector();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(OrbachError::Defective("non-finite propagated populations".into()));
        }
        Ok(PopulationState::from_vector_clamped(&v))
    }
}

/// Degree-6 diagonal Pade approximant with scaling and squaring.
fn expm_pade(a: &Matrix3<f64>) -> Matrix3<f64> {
    const C: [f64; 7] = [1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0];
    let norm = a.abs().row_sum().max();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = a / 2f64.powi(s);
    let mut num = Matrix3::identity() * C[0];
    let mut den = Matrix3::identity() * C[0];
    let mut pow = Matrix3::identity();
    for (k, &c) in C.iter().enumerate().skip(1) {
        pow *= x;
        num += pow * c;
        den += pow * if k % 2 == 0 { c } else { -c };
    }
    let mut e = den.try_inverse().unwrap_or_else(Matrix3::identity) * num;
    for _ in 0..s {
        e = e * e;
    }
    e
}

pub fn propagate(r: &RateMatrix3, p0: &PopulationState, t: f64) -> Result<PopulationState> {
    Propagator::new(r).apply(p0, t)
}

/// Time series of a measured or synthesized signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub signal: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    time_s: f64,
    signal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

impl DecayCurve {
    pub fn new(times: Vec<f64>, signal: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if times.len() != signal.len() || sigma.as_ref().is_some_and(|s| s.len() != times.len()) {
            return Err(OrbachError::Data("column lengths differ".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OrbachError::Data("times must be strictly ascending".into()));
        }
        if times.iter().chain(&signal).any(|x| !x.is_finite()) {
            return Err(OrbachError::Data("non-finite value".into()));
        }
        if let Some(s) = &sigma {
            if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(OrbachError::Data("sigma must be positive".into()));
            }
        }
        Ok(Self { times, signal, sigma })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Copy with the signal multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            times: self.times.clone(),
            signal: self.signal.iter().map(|s| s * factor).collect(),
            sigma: self.sigma.as_ref().map(|s| s.iter().map(|x| x * factor.abs()).collect()),
        }
    }

    /// CSV with columns `time_s,signal[,sigma]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| OrbachError::Data(e.to_string());
        for (i, (&t, &s)) in self.times.iter().zip(&self.signal).enumerate() {
            let sigma = self.sigma.as_ref().map(|v| v[i]);
            w.serialize(CurveRow { time_s: t, signal: s, sigma }).map_err(io)?;
        }
        w.flush().map_err(|e| OrbachError::Data(e.to_string()))
    }

    /// Read `time_s,signal[,sigma]`; lines starting with '#' are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let mut times = Vec::new();
        let mut signal = Vec::new();
        let mut sigma = Vec::new();
        for row in rdr.deserialize::<CurveRow>() {
            let row = row.map_err(|e| OrbachError::Data(e.to_string()))?;
            times.push(row.time_s);
            signal.push(row.signal);
            sigma.push(row.sigma);
        }
        let sigma = if sigma.iter().all(Option::is_some) && !sigma.is_empty() {
            Some(sigma.into_iter().flatten().collect())
        } else if sigma.iter().all(Option::is_none) {
            None
        } else {
            return Err(OrbachError::Data("sigma column partially filled".into()));
        };
        Self::new(times, signal, sigma)
    }
}

/// Thermal populations of `r` with a fraction `polarization` moved into m_s = 0.
pub fn polarized_equilibrium(r: &RateMatrix3, polarization: f64) -> Result<PopulationState> {
    if !(0.0..=1.0).contains(&polarization) {
        return Err(invalid(format!("polarization {polarization} outside [0, 1]")));
    }
    let eq = r.equilibrium();
    let mut p = eq * (1.0 - polarization);
    p[1] += polarization;
    Ok(PopulationState::from_vector_clamped(&p))
}

fn recovery_curve(r: &RateMatrix3, transition: Transition, p0: PopulationState, times: &[f64]) -> Result<DecayCurve> {
    let (lo, hi) = transition.levels();
    let prop = Propagator::new(r);
    let signal = times
        .iter()
        .map(|&t| prop.apply(&p0, t).map(|p| p.0[lo] - p.0[hi]))
        .collect::<Result<Vec<_>>>()?;
    DecayCurve::new(times.to_vec(), signal, None)
}

/// Inversion recovery: the pair populations of `transition` are swapped at
/// t = 0 and the signal is P_lower - P_upper.
pub fn inversion_recovery_curve(
    r: &RateMatrix3,
    transition: Transition,
    polarization: f64,
    times: &[f64],
) -> Result<DecayCurve> {
    let mut p0 = polarized_equilibrium(r, polarization)?;
    let (lo, hi) = transition.levels();
    p0.0.swap(lo, hi);
    recovery_curve(r, transition, p0, times)
}

/// Saturation recovery: the pair populations of `transition` are equalized.
pub fn saturation_recovery_curve(
    r: &RateMatrix3,
    transition: Transition,
    polarization: f64,
    times: &[f64],
) -> Result<DecayCurve> {
    let mut p0 = polarized_equilibrium(r, polarization)?;
    let (lo, hi) = transition.levels();
    let mean = 0.5 * (p0.0[lo] + p0.0[hi]);
    p0.0[lo] = mean;
    p0.0[hi] = mean;
    recovery_curve(r, transition, p0, times)
}

/// `n` times spaced logarithmically over [t_min, t_max].
pub fn log_times(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp()).collect()
}

/// Add Gaussian noise with standard deviation `relative_noise * max|signal|`.
pub fn synthesize_noisy(curve: &DecayCurve, relative_noise: f64, seed: u64) -> Result<DecayCurve> {
    if !(relative_noise >= 0.0 && relative_noise.is_finite()) {
        return Err(invalid("relative noise must be finite and nonnegative"));
    }
    if relative_noise == 0.0 {
        return Ok(curve.clone());
    }
    let scale = curve.signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let sd = relative_noise * scale;
    if sd == 0.0 {
        return Ok(curve.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal = curve.signal.iter().map(|s| s + normal.sample(&mut rng)).collect();
    DecayCurve::new(curve.times.clone(), signal, Some(vec![sd; curve.len()]))
}
