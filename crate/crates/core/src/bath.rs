//! Hahn-echo decay of a slow central spin dipolar-coupled to a partner that
//! flips randomly at rate W (random telegraph noise on the coupling).

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, HBAR, MU0_OVER_4PI};
use crate::dynamics::DecayCurve;
use crate::error::{invalid, Result};

/// Gauss-Legendre nodes per panel of the orientation average.
pub const QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBathParams {
    /// Partner density, 1/cm^3.
    pub density: f64,
    /// Partner flip rate W, 1/s.
    pub flip_rate: f64,
    pub g1z: f64,
    pub g2z: f64,
    /// Spectral-diffusion background T2, s.
    pub t2_sd_background: f64,
}

impl PairBathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(invalid("density must be positive"));
        }
        if !(self.flip_rate >= 0.0 && self.flip_rate.is_finite()) {
            return Err(invalid("flip rate must be finite and nonnegative"));
        }
        if !(self.t2_sd_background > 0.0) {
            return Err(invalid("background T2 must be positive"));
        }
        Ok(())
    }

    /// Mean partner distance n^(-1/3), m.
    pub fn distance_m(&self) -> f64 {
        mean_distance_m(self.density)
    }
}

/// n^(-1/3) in meters for a density in 1/cm^3.
pub fn mean_distance_m(density_cm3: f64) -> f64 {
    (density_cm3 * 1e6).powf(-1.0 / 3.0)
}

/// Secular dipolar coupling (mu0/4pi) g1 g2 mu_B^2 (1 - 3 cos^2) / (hbar r^3), rad/s.
pub fn dipolar_coupling(r12_m: f64, theta12: f64, g1z: f64, g2z: f64) -> f64 {
    let c = theta12.cos();
    MU0_OVER_4PI * g1z * g2z * BOHR_MAGNETON * BOHR_MAGNETON * (1.0 - 3.0 * c * c) / (HBAR * r12_m.powi(3))
}

/// Which form of the pair echo expression to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EchoFormula {
    /// (A^2 / 4R^2) sinh^2(R tau) in the second term.
    #[default]
    Squared,
    /// (A^2 / 4R^2) sinh(R tau), real part; kept for comparison only.
    Linear,
}

/// cosh(sqrt(x)) and sinh(sqrt(x))/sqrt(x) by series, valid for either sign of x.
fn hyperbolic_series(x: f64) -> (f64, f64) {
    let (mut c, mut s) = (1.0, 1.0);
    let (mut tc, mut ts) = (1.0, 1.0);
    for k in 1..30 {
        let k = k as f64;
        tc *= x / ((2.0 * k - 1.0) * (2.0 * k));
        ts *= x / ((2.0 * k) * (2.0 * k + 1.0));
        c += tc;
        s += ts;
        if tc.abs() < 1e-18 && ts.abs() < 1e-18 {
            break;
        }
    }
    (c, s)
}

/// Echo amplitude V(2 tau) of one pair with coupling `a` (rad/s) and partner
/// flip rate `w` (1/s).
pub fn pair_echo_decay(a: f64, w: f64, tau: f64, formula: EchoFormula) -> f64 {
    if tau == 0.0 {
        return 1.0;
    }
    match formula {
        EchoFormula::Squared => pair_echo_squared(a, w, tau),
        EchoFormula::Linear => pair_echo_linear(a, w, tau),
    }
}

fn pair_echo_squared(a: f64, w: f64, tau: f64) -> f64 {
    let r2 = w * w - 0.25 * a * a;
    let x = r2 * tau * tau;
    let decay = (-w * tau).exp();
    // c = cosh(R tau) e^{-W tau}, s = sinh(R tau)/R e^{-W tau}
    let (c, s) = if x.abs() < 1.0 {
        let (ch, sh) = hyperbolic_series(x);
        (ch * decay, sh * tau * decay)
    } else if x > 0.0 {
        let r = r2.sqrt();
        let up = ((r - w) * tau).exp();
        let down = (-(r + w) * tau).exp();
        (0.5 * (up + down), 0.5 * (up - down) / r)
    } else {
        let omega = (-r2).sqrt();
        let (sn, cs) = (omega * tau).sin_cos();
        (cs * decay, sn / omega * decay)
    };
    (c + w * s).powi(2) + 0.25 * a * a * s * s
}

fn pair_echo_linear(a: f64, w: f64, tau: f64) -> f64 {
    let r2 = Complex::new(w * w - 0.25 * a * a, 0.0);
    let r = r2.sqrt();
    if r.norm() == 0.0 {
        return f64::NAN;
    }
    // cosh and sinh of R tau, each carrying e^{-W tau}
    let up = (r * tau - w * tau).exp();
    let down = (-r * tau - w * tau).exp();
    let (ch, sh) = ((up + down) * 0.5, (up - down) * 0.5);
    let first = (ch + sh * (w / r)).powi(2);
    let second = sh * (-w * tau).exp() * (0.25 * a * a) / r2;
    (first + second).re
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Panel refinement stops once halving changes a panel by less than this.
const PANEL_TOL: f64 = 1e-13;
const MAX_PANEL_DEPTH: u32 = 24;

fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[(f64, f64)]) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    nodes.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

fn adaptive_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, nodes: &[(f64, f64)], depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (left, right) = (panel(f, a, m, nodes), panel(f, m, b, nodes));
    if depth == 0 || (left + right - whole).abs() <= PANEL_TOL {
        return left + right;
    }
    adaptive_panel(f, a, m, left, nodes, depth - 1) + adaptive_panel(f, m, b, right, nodes, depth - 1)
}

/// Orientation-averaged pair factor at one delay. The integrand is even in
/// cos(theta12), so [0, 1] is integrated with panels split at the magic angle
/// and halved until they agree.
pub fn orientation_average(p: &PairBathParams, tau: f64, formula: EchoFormula, nodes: &[(f64, f64)]) -> f64 {
    let r = p.distance_m();
    let f = |u: f64| pair_echo_decay(dipolar_coupling(r, u.acos(), p.g1z, p.g2z), p.flip_rate, tau, formula);
    let magic = 1.0 / 3f64.sqrt();
    [(0.0, magic), (magic, 1.0)]
        .iter()
        .map(|&(a, b)| adaptive_panel(&f, a, b, panel(&f, a, b, nodes), nodes, MAX_PANEL_DEPTH))
        .sum()
}

/// Total echo signal V(2 tau) exp(-2 tau / T2_SD).
pub fn total_echo(p: &PairBathParams, tau: f64, formula: EchoFormula, nodes: &[(f64, f64)]) -> f64 {
    orientation_average(p, tau, formula, nodes) * (-2.0 * tau / p.t2_sd_background).exp()
}

/// Averaged decay sampled at inter-pulse delays `tau_grid`; curve times are
/// the echo times 2 tau.
pub fn averaged_echo_decay(p: &PairBathParams, tau_grid: &[f64], formula: EchoFormula) -> Result<DecayCurve> {
    p.validate()?;
    let nodes = gauss_legendre(QUADRATURE_NODES);
    let signal = tau_grid.iter().map(|&t| total_echo(p, t, formula, &nodes)).collect();
    DecayCurve::new(tau_grid.iter().map(|t| 2.0 * t).collect(), signal, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EchoT2 {
    /// Echo time 2 tau at which the total signal first reaches 1/e, s.
    pub t2: f64,
    /// The signal rose somewhere before the crossing.
    pub non_monotone: bool,
}

/// T2 from the first 1/e crossing of the total echo signal.
pub fn echo_t2(p: &PairBathParams, formula: EchoFormula) -> Result<EchoT2> {
    p.validate()?;
    let nodes = gauss_legendre(QUADRATURE_NODES);
    let target = (-1.0f64).exp();
    let f = |tau: f64| total_echo(p, tau, formula, &nodes) - target;
    // the background alone crosses at tau = T2_SD / 2
    let t_end = p.t2_sd_background;
    let steps = 400;
    let mut prev_tau = 0.0;
    let mut prev = f(0.0);
    let mut non_monotone = false;
    for i in 1..=steps {
        let tau = t_end * i as f64 / steps as f64;
        let val = f(tau);
        if val > prev + 1e-12 {
            non_monotone = true;
        }
        if val <= 0.0 {
            let (mut lo, mut hi) = (prev_tau, tau);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if non_monotone {
                log::warn!("echo signal is non-monotone before its 1/e crossing");
            }
            return Ok(EchoT2 { t2: lo + hi, non_monotone });
        }
        prev_tau = tau;
        prev = val;
    }
    Err(invalid("echo signal did not reach 1/e"))
}

/// One row of a density sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityRow {
    pub density_cm3: f64,
    pub temperature_k: f64,
    pub t2_s: f64,
    pub non_monotone: bool,
}

/// T2 over a density grid at each temperature, with the partner flip rate
/// `flip_rate(T)`.
pub fn density_sweep(
    base: &PairBathParams,
    densities: &[f64],
    temperatures: &[f64],
    flip_rate: impl Fn(f64) -> f64,
    formula: EchoFormula,
) -> Result<Vec<DensityRow>> {
    let mut rows = Vec::with_capacity(densities.len() * temperatures.len());
    for &t in temperatures {
        let w = flip_rate(t);
        for &n in densities {
            let p = PairBathParams { density: n, flip_rate: w, ..*base };
            let e = echo_t2(&p, formula)?;
            rows.push(DensityRow { density_cm3: n, temperature_k: t, t2_s: e.t2, non_monotone: e.non_monotone });
        }
    }
    Ok(rows)
}
