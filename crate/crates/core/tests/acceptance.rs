//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_SHORTFALLS` are reported but do not fail the run;
//! any other failure exits nonzero.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use orbach::bath::{density_sweep, echo_t2, pair_echo_decay, EchoFormula, PairBathParams};
use orbach::constants::{activation_factor, BOLTZMANN, PLANCK};
use orbach::dynamics::{inversion_recovery_curve, log_times, synthesize_noisy};
use orbach::fitting::{
    arrhenius_time, fit_arrhenius, fit_biexponential, fit_instantaneous_diffusion, hahn_echo_t2, ArrheniusDataset,
    ArrheniusPoint, Observable,
};
use orbach::presets::{self, PREFACTORS_D1};
use orbach::rates::{relaxation_modes, RateMatrix3, RelaxationTime};
use orbach::singlet::{
    mixed_overlaps, orbach_t2_rate, relaxation_times_analytic, relaxation_times_large_imbalance,
    singlet_rate_matrix, singlet_relaxation_times, t1_t2_ratio, t2_singlet, OrbachParams, ZeroFieldOverlaps,
};
use orbach::spin::{resonance_fields, FieldWindow, Transition};
use orbach::triplet::{
    score_splittings, triplet_overlap_table, triplet_rate_matrix, OrientationReference, TripletModelParams,
    TripletT2Model,
};
use orbach::wigner::mixing_matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criteria whose targets the model does not reach; see the printed detail.
const KNOWN_SHORTFALLS: &[u32] = &[11];

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn orbach_30k() -> OrbachParams {
    OrbachParams::new(presets::rate_coefficient(), presets::ACTIVATION_MEV, presets::TEMPERATURE_K, presets::MICROWAVE_GHZ)
        .unwrap()
}

fn esr_positions() -> Outcome {
    let params = presets::ground_state(presets::CENTER_FIELD_MT, 0.0);
    let lines = resonance_fields(&params, presets::MICROWAVE_GHZ, FieldWindow::new(250.0, 450.0)).unwrap();
    let allowed: Vec<f64> = lines.iter().filter(|l| l.upper - l.lower == 1).map(|l| l.field_mt).collect();
    if allowed.len() != 2 {
        return outcome(false, format!("expected two allowed lines, found {}", allowed.len()));
    }
    let split = allowed[1] - allowed[0];
    outcome((split - 67.0).abs() <= 0.5, format!("splitting {split:.3} mT, target 67.0 +- 0.5"))
}

fn mixing_stochastic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let m = mixing_matrix(rng.random_range(0.0..PI));
        for i in 0..3 {
            worst = worst.max((m.row(i).sum() - 1.0).abs()).max((m.column(i).sum() - 1.0).abs());
        }
    }
    let row = mixing_matrix((-1.0f64 / 3.0).acos()).row(0).into_owned();
    let want = [1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0];
    let row_err = (0..3).map(|i| (row[i] - want[i]).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 1e-12 && row_err <= 1e-12,
        format!("max row/column deviation {worst:.2e}, tetrahedral row error {row_err:.2e}"),
    )
}

fn sorted_rates(t: [RelaxationTime; 2]) -> [f64; 2] {
    let (a, b) = (t[0].rate(), t[1].rate());
    [a.min(b), a.max(b)]
}

fn analytic_numeric() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let outer = rng.random_range(1e-4..1.0);
        let zf = ZeroFieldOverlaps::new(rng.random_range(1e-4..1.0), outer, outer).unwrap();
        let theta = rng.random_range(0.0..PI);
        let p = OrbachParams::new(rng.random_range(1.0..1e6), 16.8, rng.random_range(10.0..80.0), 9.7)
            .unwrap()
            .high_temperature_limit();
        let exact = relaxation_times_analytic(&zf, theta, &p).unwrap();
        let numeric = singlet_relaxation_times(&zf, theta, &p).unwrap();
        let a = sorted_rates([exact.t1_a, exact.t1_b]);
        let n = sorted_rates([numeric.t1_a, numeric.t1_b]);
        for k in 0..2 {
            if a[k] > 0.0 {
                worst = worst.max(rel(n[k], a[k]));
            }
        }
    }
    outcome(worst <= 1e-10, format!("max relative difference {worst:.2e} over 1000 draws"))
}

fn approximation_regime() -> Outcome {
    let mut worst = 0.0f64;
    for ratio in [100.0, 125.0, 300.0, 1000.0] {
        let zf = ZeroFieldOverlaps::from_ratio(ratio);
        let p = orbach_30k().high_temperature_limit();
        for deg in 10..=80 {
            let theta = (deg as f64).to_radians();
            let exact = relaxation_times_analytic(&zf, theta, &p).unwrap();
            let approx = relaxation_times_large_imbalance(&zf, theta, &p);
            worst = worst.max(rel(approx.t1_a.rate(), exact.t1_a.rate())).max(rel(approx.t1_b.rate(), exact.t1_b.rate()));
        }
    }
    outcome(worst <= 0.02, format!("max deviation {:.3}% for ratios 100..1000, 10-80 deg", 100.0 * worst))
}

fn anisotropy() -> Outcome {
    let zf = ZeroFieldOverlaps::from_ratio(presets::OVERLAP_RATIO);
    let p = orbach_30k();
    let modes = |deg: f64| singlet_relaxation_times(&zf, deg.to_radians(), &p).unwrap();
    let near = modes(5.8).t1_a.rate() / modes(0.8).t1_a.rate();
    let times: Vec<f64> = [modes(0.0), modes(90.0)]
        .iter()
        .flat_map(|m| [m.t1_a.seconds().unwrap(), m.t1_b.seconds().unwrap()])
        .collect();
    let span = times.iter().cloned().fold(0.0, f64::max) / times.iter().cloned().fold(f64::INFINITY, f64::min);
    let at_90 = times[2].max(times[3]) / times[2].min(times[3]);
    outcome(
        (30.0..=300.0).contains(&near) && span > 1e3,
        format!("T1_a rate gain 0.8->5.8 deg {near:.1}, time span on-axis..90 deg {span:.3e} (two modes at 90 deg differ {at_90:.3e})"),
    )
}

fn t1_t2() -> Outcome {
    let zf = ZeroFieldOverlaps::from_ratio(presets::OVERLAP_RATIO);
    let closed = t1_t2_ratio(&zf, 0.0);
    let p = orbach_30k();
    let t1 = singlet_relaxation_times(&zf, 0.0, &p).unwrap().t1_a.seconds().unwrap();
    let t2 = t2_singlet(&zf, 0.0, &p, f64::INFINITY, f64::INFINITY, Transition::ZeroToPlus).seconds().unwrap();
    let numeric = t1 / t2;
    outcome(
        (2000.0..=8000.0).contains(&numeric) && rel(closed, numeric) < 1e-3,
        format!("T1_a/T2 = {numeric:.0} (closed form {closed:.0}), target 4000 within x2"),
    )
}

fn arrhenius_recovery() -> Outcome {
    const TRIALS: u64 = 100;
    const POINTS: usize = 40;
    let temps: Vec<f64> = (0..POINTS).map(|i| 5.0 + 55.0 * i as f64 / (POINTS - 1) as f64).collect();
    let mut successes = 0;
    let mut worst_ea = 0.0f64;
    for seed in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let sets: Vec<ArrheniusDataset> = PREFACTORS_D1
            .iter()
            .map(|pf| {
                let observable = if pf.label.contains("T2") { Observable::T2 } else { Observable::T1 };
                let points = temps
                    .iter()
                    .map(|&t| {
                        let clean = arrhenius_time(pf.t_sat_s, pf.value_hz, presets::ACTIVATION_MEV, t);
                        let n: f64 = StandardNormal.sample(&mut rng);
                        ArrheniusPoint { temperature: t, time: clean * (1.0 + 0.05 * n), sigma: Some(0.05 * clean) }
                    })
                    .collect();
                ArrheniusDataset::new(pf.label, observable, points).unwrap()
            })
            .collect();
        let Ok(fit) = fit_arrhenius(&sets, true) else { continue };
        let ea_ok = (fit.activation_mev - presets::ACTIVATION_MEV).abs() <= presets::ACTIVATION_MEV_ERR;
        worst_ea = worst_ea.max((fit.activation_mev - presets::ACTIVATION_MEV).abs());
        let pf_ok = PREFACTORS_D1.iter().zip(&fit.datasets).all(|(pf, r)| {
            r.value("prefactor_hz").is_some_and(|a| (a - pf.value_hz).abs() <= pf.error_hz)
        });
        if ea_ok && pf_ok {
            successes += 1;
        }
    }
    outcome(
        successes >= 95,
        format!("{successes}/{TRIALS} trials within tolerance ({POINTS} temperatures 5-60 K, worst |dEa| {worst_ea:.2} meV)"),
    )
}

fn instantaneous_diffusion() -> Outcome {
    let (sd, id) = (presets::T2_SPECTRAL_DIFFUSION_S, presets::T2_INSTANTANEOUS_DIFFUSION_S);
    let points: Vec<(f64, f64)> = (1..=6)
        .map(|k| {
            let th = PI * k as f64 / 6.0;
            (th, 1.0 / sd + (th / 2.0).sin().powi(2) / id)
        })
        .collect();
    let fit = fit_instantaneous_diffusion(&points, None).unwrap();
    let err_sd = rel(fit.value("t2_sd_s").unwrap(), sd);
    let err_id = rel(fit.value("t2_id_s").unwrap(), id);
    let composed = hahn_echo_t2(sd, id, PI);
    let harmonic = sd * id / (sd + id);
    let err_t2 = rel(composed, harmonic);
    outcome(
        err_sd <= 1e-10 && err_id <= 1e-10 && err_t2 <= 1e-6 && (composed * 1e3 - 0.239).abs() < 5e-4,
        format!("recovery errors {err_sd:.1e} / {err_id:.1e}; T2(pi) = {:.6} ms", composed * 1e3),
    )
}

/// Boltzmann weights over ascending energies for Zeeman frequency `f` (GHz).
fn boltzmann(f_ghz: f64, t: f64) -> Vector3<f64> {
    let mu = (PLANCK * f_ghz * 1e9 / (BOLTZMANN * t)).exp();
    let w = Vector3::new(mu, 1.0, 1.0 / mu);
    w / w.sum()
}

fn null_vector(r: &RateMatrix3) -> Vector3<f64> {
    let svd = r.matrix().svd(false, true);
    let vt = svd.v_t.unwrap();
    let k = (0..3).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
    let v = vt.row(k).transpose();
    v / v.sum()
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut col, mut residual, mut null) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..2000 {
        let t = rng.random_range(5.0..80.0);
        let p = OrbachParams::new(rng.random_range(1.0..1e6), rng.random_range(5.0..30.0), t, 9.7).unwrap();
        let r = if i % 2 == 0 {
            let zf = ZeroFieldOverlaps::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))
                .unwrap();
            let ov = mixed_overlaps(&zf, rng.random_range(0.05..PI - 0.05));
            singlet_rate_matrix(&ov, &p).unwrap()
        } else {
            let ground = presets::ground_state(rng.random_range(200.0..450.0), rng.random_range(0.1..PI - 0.1));
            triplet_rate_matrix(&TripletModelParams::coaxial(ground, rng.random_range(0.5..10.0), p)).unwrap().0
        };
        let scale = r.scale();
        col = col.max(r.max_column_sum() / scale);
        let want = boltzmann(9.7, t);
        residual = residual.max((r.matrix() * want).norm() / scale);
        null = null.max((null_vector(&r) - want).abs().max());
    }
    outcome(
        col <= 1e-12 && residual <= 1e-12 && null <= 1e-6,
        format!(
            "max column sum {col:.1e} and |R p_B| {residual:.1e} relative to rate scale; null vector vs Boltzmann {null:.1e}; \
             1000 singlet + 1000 triplet draws"
        ),
    )
}

fn triplet_limits() -> Outcome {
    let orbach = orbach_30k();
    let same = TripletModelParams::coaxial(presets::ground_state(345.8, 0.6), presets::GROUND_D_GHZ, orbach);
    let table = triplet_overlap_table(&same).unwrap().table;
    let (r_same, _) = triplet_rate_matrix(&same).unwrap();
    let identity = table == Matrix3::identity() && *r_same.matrix() == Matrix3::zeros();
    let mut flip = 0.0f64;
    for d_e in [0.5, 2.0, 5.0, 9.0] {
        let axial = TripletModelParams::coaxial(presets::ground_state(345.8, 0.0), d_e, orbach);
        let (r, _) = triplet_rate_matrix(&axial).unwrap();
        flip = flip.max(r.matrix().abs().max());
    }
    outcome(
        identity && flip == 0.0,
        format!("identical Hamiltonians exact identity: {identity}; largest on-axis flip rate {flip:.1e} 1/s"),
    )
}

fn off_axis_flip_rate(t: f64) -> f64 {
    1.0 / arrhenius_time(presets::T1_SAT_D1_S, PREFACTORS_D1[1].value_hz, presets::ACTIVATION_MEV, t)
}

fn bath_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = rng.random_range(0.0..1e6);
        let w = rng.random_range(0.0..1e6);
        let tau = rng.random_range(0.0..1e-3);
        let f = EchoFormula::Squared;
        worst = worst
            .max((pair_echo_decay(a, w, 0.0, f) - 1.0).abs())
            .max((pair_echo_decay(0.0, w, tau, f) - 1.0).abs())
            .max((pair_echo_decay(a, 0.0, tau, f) - 1.0).abs());
    }

    let base = PairBathParams {
        density: 1e16,
        flip_rate: 0.0,
        g1z: presets::G_PARALLEL,
        g2z: presets::G_PARALLEL,
        t2_sd_background: presets::T2_SPECTRAL_DIFFUSION_S,
    };
    let densities = [5e15, 1e16, 5e16, 1e17, 5e17, 1e18, 5e18];
    let temps = [20.0, 30.0, 40.0];
    let rows = density_sweep(&base, &densities, &temps, off_axis_flip_rate, EchoFormula::Squared).unwrap();
    let decreasing = rows.chunks(densities.len()).all(|c| c.windows(2).all(|w| w[1].t2_s < w[0].t2_s));

    let w30 = off_axis_flip_rate(30.0);
    let at = PairBathParams { density: 5e16, flip_rate: w30, ..base };
    let t2 = echo_t2(&at, EchoFormula::Squared).unwrap().t2;
    let bath_rate = 1.0 / t2 - 1.0 / presets::T2_SPECTRAL_DIFFUSION_S;
    let orbach_rate = PREFACTORS_D1[2].value_hz * activation_factor(presets::ACTIVATION_MEV, 30.0);
    let share = bath_rate / orbach_rate;
    outcome(
        worst <= 1e-12 && decreasing && share < 0.1,
        format!(
            "limit error {worst:.1e}; T2(n) decreasing: {decreasing}; at 5e16 cm^-3, 30 K (W = {w30:.0} 1/s) the bath adds \
             {bath_rate:.0} 1/s = {:.1}% of the Orbach T2 rate {orbach_rate:.0} 1/s (target < 10%)",
            100.0 * share
        ),
    )
}

fn dynamics_consistency() -> Outcome {
    let zf = ZeroFieldOverlaps::from_ratio(presets::OVERLAP_RATIO);
    let p = orbach_30k();
    let theta = 80f64.to_radians();
    let r = singlet_rate_matrix(&mixed_overlaps(&zf, theta), &p).unwrap();
    let modes = relaxation_modes(&r).unwrap();
    let (ta, tb) = (modes.t1_a.seconds().unwrap(), modes.t1_b.seconds().unwrap());
    let (fast, slow) = (ta.min(tb), ta.max(tb));
    let times = log_times(0.02 * fast, 8.0 * slow, 200);
    let clean = inversion_recovery_curve(&r, Transition::ZeroToPlus, presets::OPTICAL_POLARIZATION, &times).unwrap();
    let noisy = synthesize_noisy(&clean, 0.02, 12).unwrap();
    let fit = fit_biexponential(&noisy).unwrap();
    let (Some(t1), Some(t2)) = (fit.value("tau1"), fit.value("tau2")) else {
        return outcome(false, format!("fit collapsed to one exponential: {:?}", fit.notices));
    };
    let (e1, e2) = (rel(t1, fast), rel(t2, slow));
    outcome(
        e1 <= 0.05 && e2 <= 0.05,
        format!("fitted {t1:.4e} s / {t2:.4e} s vs eigen {fast:.4e} s / {slow:.4e} s ({:.2}%, {:.2}%)", 100.0 * e1, 100.0 * e2),
    )
}

fn triplet_ordering() -> Outcome {
    let zf = ZeroFieldOverlaps::from_ratio(presets::OVERLAP_RATIO);
    let p = orbach_30k();
    let transition = Transition::ZeroToPlus;
    let reference: Vec<OrientationReference> = (0..=18)
        .map(|k| {
            let theta = (5.0 * k as f64).to_radians();
            let modes = singlet_relaxation_times(&zf, theta, &p).unwrap();
            let t2 = RelaxationTime::from_rate(orbach_t2_rate(&zf, theta, &p, transition));
            OrientationReference { theta, t1_a: modes.t1_a, t1_b: modes.t1_b, t2 }
        })
        .collect();
    let base = TripletModelParams::coaxial(presets::ground_state(presets::CENTER_FIELD_MT, 0.0), 5.0, p);
    let scores =
        score_splittings(&base, &reference, &[1.0, 3.0, 5.0, 7.0], transition, TripletT2Model::FullDephasing).unwrap();
    let rss: Vec<f64> = scores.iter().map(|s| s.t2_log_rss).collect();
    let pass = rss[2].max(rss[3]) < rss[0].min(rss[1]);
    let listing: Vec<String> = scores.iter().map(|s| format!("{} GHz: {:.3}", s.d_e_ghz, s.t2_log_rss)).collect();
    outcome(pass, format!("T2 log-RSS {}", listing.join(", ")))
}

fn main() {
    let criteria: [Criterion; 13] = [
        (1, "esr-positions", esr_positions),
        (2, "mixing-matrix", mixing_stochastic),
        (3, "analytic-numeric", analytic_numeric),
        (4, "approximation-regime", approximation_regime),
        (5, "anisotropy-magnitude", anisotropy),
        (6, "t1-t2-ratio", t1_t2),
        (7, "arrhenius-recovery", arrhenius_recovery),
        (8, "instantaneous-diffusion", instantaneous_diffusion),
        (9, "rate-conservation", conservation),
        (10, "triplet-limits", triplet_limits),
        (11, "bath-limits", bath_limits),
        (12, "dynamics-consistency", dynamics_consistency),
        (13, "triplet-splitting-range", triplet_ordering),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let secs = start.elapsed().as_secs_f64();
        println!("{tag} {id:>2} {name}: {} [{secs:.2} s]", o.detail);
        if !o.pass && !KNOWN_SHORTFALLS.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
