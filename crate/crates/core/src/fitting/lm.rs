//! Levenberg-Marquardt least squares with diagonal (Marquardt) scaling.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when every |step_i| <= step_tol * (|p_i| + step_tol).
    pub step_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, step_tol: 1e-9, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    /// Linearized covariance s^2 (J^T J)^-1, with s^2 the residual variance.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let m = self.residuals.len();
        let n = self.params.len();
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = jtj.clone().try_inverse().or_else(|| jtj.pseudo_inverse(1e-14).ok())?;
        let s2 = if m > n { self.rss / (m - n) as f64 } else { 0.0 };
        Some(inv * s2)
    }
}

/// Central-difference Jacobian of `f` at `p`.
pub fn numeric_jacobian(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, p: &DVector<f64>) -> DMatrix<f64> {
    let r0 = f(p);
    let mut jac = DMatrix::zeros(r0.len(), p.len());
    for j in 0..p.len() {
        let h = 1e-6 * (p[j].abs() + 1e-3);
        let mut hi = p.clone();
        let mut lo = p.clone();
        hi[j] += h;
        lo[j] -= h;
        let d = (f(&hi) - f(&lo)) / (2.0 * h);
        jac.set_column(j, &d);
    }
    jac
}

pub fn levenberg_marquardt(
    residual: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    jacobian: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    start: &DVector<f64>,
    opts: &LmOptions,
) -> LmOutcome {
    let mut p = start.clone();
    let mut r = residual(&p);
    let mut rss = r.norm_squared();
    let mut jac = jacobian(&p);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    if !rss.is_finite() {
        return LmOutcome { params: p, residuals: r, jacobian: jac, rss: f64::INFINITY, iterations, converged };
    }

    while iterations < opts.max_iterations {
        iterations += 1;
        if rss == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let diag = jtj.diagonal().map(|d| if d > 0.0 { d } else { 1.0 });

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * diag[i];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial = &p + &step;
            let r_trial = residual(&trial);
            let rss_trial = r_trial.norm_squared();
            if rss_trial.is_finite() && rss_trial <= rss {
                let small = step
                    .iter()
                    .zip(trial.iter())
                    .all(|(d, x)| d.abs() <= opts.step_tol * (x.abs() + opts.step_tol));
                p = trial;
                r = r_trial;
                rss = rss_trial;
                jac = jacobian(&p);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                converged = small;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent left at machine precision: stationary point
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LmOutcome { params: p, residuals: r, jacobian: jac, rss, iterations, converged }
}

/// Best of several outcomes: lowest residual, ties broken by the
/// lexicographically smallest parameter vector.
pub fn best_outcome(outcomes: Vec<LmOutcome>) -> Option<LmOutcome> {
    outcomes.into_iter().filter(|o| o.rss.is_finite()).min_by(|a, b| {
        let tie = 1e-12 * a.rss.max(b.rss);
        if (a.rss - b.rss).abs() <= tie {
            a.params.iter().zip(b.params.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        } else {
            a.rss.total_cmp(&b.rss)
        }
    })
}
