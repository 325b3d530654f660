//! Population-transfer generators for the three ground sublevels.
//!
//! `R[(m, m')]` is the rate from sublevel m' into sublevel m (index m + 1), so
//! populations evolve as dP/dt = R P and every column of R sums to zero.

use nalgebra::{Matrix3, Schur, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::error::{OrbachError, Result};

/// Relative size below which an eigenvalue of R is treated as zero.
const ZERO_RATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RelaxationTime {
    Finite(f64),
    Unbounded,
}

impl RelaxationTime {
    pub fn from_rate(rate: f64) -> Self {
        if rate > 0.0 && rate.is_finite() {
            RelaxationTime::Finite(1.0 / rate)
        } else {
            RelaxationTime::Unbounded
        }
    }

    pub fn seconds(self) -> Option<f64> {
        match self {
            RelaxationTime::Finite(t) => Some(t),
            RelaxationTime::Unbounded => None,
        }
    }

    /// Rate 1/T, zero when unbounded.
    pub fn rate(self) -> f64 {
        match self {
            RelaxationTime::Finite(t) => 1.0 / t,
            RelaxationTime::Unbounded => 0.0,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, RelaxationTime::Unbounded)
    }
}

/// A 3x3 rate generator together with its stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix3 {
    matrix: Matrix3<f64>,
    equilibrium: Vector3<f64>,
}

impl RateMatrix3 {
    /// Generator from symmetric pair couplings `k[(m, m')]` (1/s) and the
    /// adjacent-level Boltzmann factor `mu` = exp(h f / kT).
    ///
    /// The rate from m' to m is k * mu^((m' - m)/2), so each pair obeys detailed
    /// balance with ratio mu per unit of m and the stationary state is
    /// P_m ~ mu^(-m), the Boltzmann distribution over Zeeman levels E_m = m h f.
    pub fn from_pair_couplings(k: &Matrix3<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(OrbachError::InvalidParameter(format!("Boltzmann factor {mu} must be positive")));
        }
        let mut r = Matrix3::zeros();
        for m in 0..3 {
            for mp in 0..3 {
                if m != mp {
                    let kk = 0.5 * (k[(m, mp)] + k[(mp, m)]);
                    if kk < 0.0 {
                        return Err(OrbachError::InvalidParameter("negative pair coupling".into()));
                    }
                    r[(m, mp)] = kk * mu.powf((mp as f64 - m as f64) / 2.0);
                }
            }
        }
        for c in 0..3 {
            let out: f64 = (0..3).filter(|&m| m != c).map(|m| r[(m, c)]).sum();
            r[(c, c)] = -out;
        }
        let w = Vector3::new(mu.powi(1), 1.0, mu.powi(-1));
        let equilibrium = w / w.sum();
        Ok(Self { matrix: r, equilibrium })
    }

    /// Wrap an arbitrary generator. The stationary distribution is computed from
    /// the null space.
    pub fn from_generator(matrix: Matrix3<f64>) -> Result<Self> {
        let scale = matrix.abs().max();
        for c in 0..3 {
            let sum: f64 = matrix.column(c).sum();
            if sum.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(OrbachError::Defective(format!("column {c} sums to {sum:.3e}")));
            }
            for m in 0..3 {
                if m != c && matrix[(m, c)] < -1e-15 * scale {
                    return Err(OrbachError::Defective("negative off-diagonal rate".into()));
                }
            }
        }
        let equilibrium = if scale == 0.0 {
            Vector3::repeat(1.0 / 3.0)
        } else {
            null_vector(&matrix)
        };
        Ok(Self { matrix, equilibrium })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Normalized stationary populations (-1, 0, +1).
    pub fn equilibrium(&self) -> &Vector3<f64> {
        &self.equilibrium
    }

    pub fn scale(&self) -> f64 {
        self.matrix.abs().max()
    }

    pub fn max_column_sum(&self) -> f64 {
        (0..3).map(|c| self.matrix.column(c).sum().abs()).fold(0.0, f64::max)
    }

    /// Similarity transform to a symmetric matrix, if detailed balance holds.
    pub(crate) fn symmetrized(&self) -> Option<Matrix3<f64>> {
        if self.equilibrium.iter().any(|&p| !(p > 0.0)) {
            return None;
        }
        let sqrt_p = self.equilibrium.map(f64::sqrt);
        let s = Matrix3::from_fn(|i, j| self.matrix[(i, j)] * sqrt_p[j] / sqrt_p[i]);
        let asym = (s - s.transpose()).abs().max();
        if asym > 1e-10 * self.scale() {
            return None;
        }
        Some((s + s.transpose()) * 0.5)
    }

    /// Eigenvalues and right eigenvectors (columns), real by detailed balance.
    pub fn spectral(&self) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let s = self.symmetrized().ok_or_else(|| {
            OrbachError::Defective("generator does not satisfy detailed balance".into())
        })?;
        let eig = SymmetricEigen::new(s);
        let sqrt_p = self.equilibrium.map(f64::sqrt);
        let right = Matrix3::from_fn(|i, k| sqrt_p[i] * eig.eigenvectors[(i, k)]);
        Ok((eig.eigenvalues, right))
    }
}

fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    // columns of the adjugate span the null space of a rank-2 matrix
    let minor = |row: usize, col: usize| {
        let rs: Vec<usize> = (0..3).filter(|&r| r != row).collect();
        let cs: Vec<usize> = (0..3).filter(|&c| c != col).collect();
        m[(rs[0], cs[0])] * m[(rs[1], cs[1])] - m[(rs[0], cs[1])] * m[(rs[1], cs[0])]
    };
    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let best = (0..3)
        .map(|j| Vector3::from_fn(|i, _| sign(i + j) * minor(j, i)))
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_else(Vector3::zeros);
    if best.norm() == 0.0 {
        return Vector3::repeat(1.0 / 3.0);
    }
    let v = (best / best.sum()).map(|x| x.max(0.0));
    v / v.sum()
}

/// Relaxation times from the two nonzero eigenvalues of R, shortest first.
pub fn relaxation_times_numeric(r: &RateMatrix3) -> Result<[RelaxationTime; 2]> {
    let scale = r.scale();
    if scale == 0.0 {
        return Ok([RelaxationTime::Unbounded; 2]);
    }
    let mut lambdas: Vec<f64> = match r.spectral() {
        Ok((vals, _)) => vals.iter().copied().collect(),
        Err(_) => {
            let eig = Schur::new(*r.matrix()).complex_eigenvalues();
            if eig.iter().any(|z| z.im.abs() > 1e-9 * scale) {
                return Err(OrbachError::Defective("complex rate eigenvalues".into()));
            }
            eig.iter().map(|z| z.re).collect()
        }
    };
    // drop the stationary eigenvalue
    lambdas.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    if lambdas[0].abs() > 1e-9 * scale {
        return Err(OrbachError::Defective(format!(
            "no zero eigenvalue (smallest |lambda| = {:.3e})",
            lambdas[0].abs()
        )));
    }
    let mut times = [lambdas[1], lambdas[2]].map(|l| {
        if l.abs() <= ZERO_RATE_TOL * scale {
            RelaxationTime::Unbounded
        } else if l > 0.0 {
            // unstable mode cannot arise from a valid generator
            RelaxationTime::Finite(f64::NAN)
        } else {
            RelaxationTime::Finite(-1.0 / l)
        }
    });
    if times.iter().any(|t| t.seconds().is_some_and(f64::is_nan)) {
        return Err(OrbachError::Defective("positive rate eigenvalue".into()));
    }
    times.sort_by(|a, b| a.rate().total_cmp(&b.rate()).reverse());
    Ok(times)
}

/// The two relaxation modes labeled by symmetry under m -> -m.
///
/// `a` is the even mode, dominated by exchange between m = 0 and the outer pair
/// (eigenvector ~ (1, -2, 1)); `b` is the odd mode exchanging m = -1 and m = +1
/// (eigenvector ~ (1, 0, -1)). This labeling stays continuous through the
/// crossing of the two rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationModes {
    pub t1_a: RelaxationTime,
    pub t1_b: RelaxationTime,
}

pub fn relaxation_modes(r: &RateMatrix3) -> Result<RelaxationModes> {
    let scale = r.scale();
    if scale == 0.0 {
        return Ok(RelaxationModes { t1_a: RelaxationTime::Unbounded, t1_b: RelaxationTime::Unbounded });
    }
    let (vals, vecs) = r.spectral()?;
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()));
    if vals[idx[0]].abs() > 1e-9 * scale {
        return Err(OrbachError::Defective("no zero eigenvalue".into()));
    }
    let center_weight = |k: usize| {
        let v = vecs.column(k);
        v[1].abs() / v.norm()
    };
    let (ia, ib) = if center_weight(idx[1]) >= center_weight(idx[2]) { (idx[1], idx[2]) } else { (idx[2], idx[1]) };
    let to_time = |l: f64| {
        if l.abs() <= ZERO_RATE_TOL * scale {
            RelaxationTime::Unbounded
        } else {
            RelaxationTime::Finite(-1.0 / l)
        }
    };
    Ok(RelaxationModes { t1_a: to_time(vals[ia]), t1_b: to_time(vals[ib]) })
}
