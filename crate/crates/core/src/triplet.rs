//! Orbach relaxation through a spin-triplet excited state whose zero-field
//! splitting differs from the ground state.
//!
//! A phonon lifts a ground eigenstate |m> into the excited manifold without
//! changing the spin wavefunction; it then returns from excited eigenstate |n>.
//! Spin flips m' -> m occur with weight sum_n |<m|n><n|m'>|^2.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rates::{relaxation_modes, RateMatrix3, RelaxationModes, RelaxationTime};
use crate::singlet::OrbachParams;
use crate::spin::{solve_spin_system, EigenSystem3, FieldConfig, SpinSystemParams, Transition, ZfsTensor, C64};

/// Eigenvalue gaps (GHz) below which overlaps depend on the chosen basis.
pub const TRIPLET_DEGENERACY_GHZ: f64 = 1e-6;
/// Random unitaries drawn per degenerate subspace.
pub const SUBSPACE_SAMPLES: usize = 64;
/// Excited-state splittings swept when comparing against reference curves, GHz.
pub const DE_SWEEP_GHZ: [f64; 5] = [1.0, 3.0, 5.0, 7.0, 9.0];

const SUBSPACE_SEED: u64 = 0x0b5e_55ed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletModelParams {
    pub ground: SpinSystemParams,
    pub excited: SpinSystemParams,
    pub orbach: OrbachParams,
}

impl TripletModelParams {
    /// Excited state sharing the ground g tensor and field, with an axial
    /// splitting `d_e` along the same axis.
    pub fn coaxial(ground: SpinSystemParams, d_e_ghz: f64, orbach: OrbachParams) -> Self {
        let excited = SpinSystemParams { zfs: ZfsTensor::axial(d_e_ghz), ..ground };
        Self { ground, excited, orbach }
    }

    pub fn with_field(mut self, field: FieldConfig) -> Self {
        self.ground.field = field;
        self.excited.field = field;
        self
    }

    pub fn with_theta(self, theta: f64) -> Self {
        let field = FieldConfig { theta, ..self.ground.field };
        self.with_field(field)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ground.g != self.excited.g || self.ground.field != self.excited.field {
            return Err(invalid("ground and excited states must share the g tensor and field"));
        }
        self.orbach.validate()
    }
}

/// Squared overlaps between ground and excited eigenstates.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletOverlapTable {
    /// `table[(m, n)] = |<m|n>|^2`, ground states by row.
    pub table: Matrix3<f64>,
    /// `pair_weights[(m, m')] = sum_n |<m|n><n|m'>|^2`.
    pub pair_weights: Matrix3<f64>,
    /// Some eigenvalue gap fell below [`TRIPLET_DEGENERACY_GHZ`].
    pub basis_sensitive: bool,
    pub ground: EigenSystem3,
    pub excited_energies: [f64; 3],
    /// One excited basis, or the sampled bases for a degenerate spectrum.
    excited_bases: Vec<Matrix3<C64>>,
    /// Ground and excited Hamiltonians coincide.
    identical: bool,
}

impl TripletOverlapTable {
    /// Complex products `<m|n><n|m'>` indexed `[m][m'][n]` in the first
    /// excited basis.
    pub fn raw_products(&self) -> [[[C64; 3]; 3]; 3] {
        products(&self.ground.states, &self.excited_bases[0])
    }

    pub fn basis_count(&self) -> usize {
        self.excited_bases.len()
    }

    fn overlaps_in(&self, basis: &Matrix3<C64>) -> Matrix3<f64> {
        if self.identical {
            Matrix3::identity()
        } else {
            squared_overlaps(&self.ground.states, basis)
        }
    }

    pub fn max_stochastic_deviation(&self) -> f64 {
        (0..3)
            .flat_map(|i| [self.table.row(i).sum(), self.table.column(i).sum()])
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn products(ground: &Matrix3<C64>, excited: &Matrix3<C64>) -> [[[C64; 3]; 3]; 3] {
    let overlap = ground.adjoint() * excited;
    let mut out = [[[C64::new(0.0, 0.0); 3]; 3]; 3];
    for (m, row) in out.iter_mut().enumerate() {
        for (mp, cell) in row.iter_mut().enumerate() {
            for (n, v) in cell.iter_mut().enumerate() {
                *v = overlap[(m, n)] * overlap[(mp, n)].conj();
            }
        }
    }
    out
}

fn squared_overlaps(ground: &Matrix3<C64>, excited: &Matrix3<C64>) -> Matrix3<f64> {
    (ground.adjoint() * excited).map(|z| z.norm_sqr())
}

/// Index ranges of eigenvalue clusters closer than `tol`.
fn degenerate_groups(energies: &[f64; 3], tol: f64) -> Vec<Vec<usize>> {
    let mut groups = vec![vec![0]];
    for k in 1..3 {
        if energies[k] - energies[k - 1] < tol {
            groups.last_mut().unwrap().push(k);
        } else {
            groups.push(vec![k]);
        }
    }
    groups
}

/// Replace the columns `idx` of `basis` by the candidates that lie inside their
/// span, if exactly enough of them do.
fn align_subspace(basis: &mut Matrix3<C64>, idx: &[usize], candidates: &[Vector3<C64>]) -> bool {
    let inside: Vec<Vector3<C64>> = candidates
        .iter()
        .filter_map(|r| {
            let proj: Vector3<C64> = idx.iter().map(|&k| basis.column(k) * basis.column(k).dotc(r)).sum();
            ((proj.norm_squared() - 1.0).abs() < 1e-8).then_some(proj)
        })
        .collect();
    if inside.len() != idx.len() {
        return false;
    }
    let mut chosen: Vec<Vector3<C64>> = Vec::new();
    for mut v in inside {
        for u in &chosen {
            v -= u * u.dotc(&v);
        }
        chosen.push(v.normalize());
    }
    for (&k, v) in idx.iter().zip(chosen) {
        basis.set_column(k, &v);
    }
    true
}

fn random_unitary(k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<C64> = (0..k)
            .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        for u in &cols {
            let dot: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    cols
}

fn rotate_subspace(basis: &Matrix3<C64>, idx: &[usize], u: &[Vec<C64>]) -> Matrix3<C64> {
    let mut out = *basis;
    for (j, &kj) in idx.iter().enumerate() {
        let col: Vector3<C64> = idx.iter().enumerate().map(|(i, &ki)| basis.column(ki) * u[j][i]).sum();
        out.set_column(kj, &col);
    }
    out
}

pub fn triplet_overlap_table(p: &TripletModelParams) -> Result<TripletOverlapTable> {
    p.validate()?;
    let mut ground = solve_spin_system(&p.ground);
    let excited = solve_spin_system(&p.excited);
    let ground_groups = degenerate_groups(&ground.energies, TRIPLET_DEGENERACY_GHZ);
    let excited_groups = degenerate_groups(&excited.energies, TRIPLET_DEGENERACY_GHZ);
    let basis_sensitive = ground_groups.len() < 3 || excited_groups.len() < 3;

    let axis_basis: Vec<Vector3<C64>> = (0..3)
        .map(|k| Vector3::from_fn(|i, _| C64::new(if i == k { 1.0 } else { 0.0 }, 0.0)))
        .collect();
    for g in ground_groups.iter().filter(|g| g.len() > 1) {
        align_subspace(&mut ground.states, g, &axis_basis);
    }

    let ground_vecs: Vec<Vector3<C64>> = (0..3).map(|k| ground.state(k)).collect();
    let mut base = excited.states;
    let mut free: Vec<&Vec<usize>> = Vec::new();
    for g in excited_groups.iter().filter(|g| g.len() > 1) {
        if !align_subspace(&mut base, g, &ground_vecs) {
            free.push(g);
        }
    }
    let excited_bases = if free.is_empty() {
        vec![base]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
        (0..SUBSPACE_SAMPLES)
            .map(|_| free.iter().fold(base, |b, g| rotate_subspace(&b, g, &random_unitary(g.len(), &mut rng))))
            .collect()
    };
    if basis_sensitive {
        log::warn!("degenerate spectrum: overlaps averaged over {} excited bases", excited_bases.len());
    }

    let count = excited_bases.len() as f64;
    let mut out = TripletOverlapTable {
        table: Matrix3::zeros(),
        pair_weights: Matrix3::zeros(),
        basis_sensitive,
        ground,
        excited_energies: excited.energies,
        excited_bases: Vec::new(),
        identical: p.excited == p.ground,
    };
    for b in &excited_bases {
        let o = out.overlaps_in(b);
        out.table += o / count;
        out.pair_weights += o * o.transpose() / count;
    }
    out.excited_bases = excited_bases;
    Ok(out)
}

fn rate_matrix_from_table(t: &TripletOverlapTable, orbach: &OrbachParams) -> Result<RateMatrix3> {
    let k = orbach.thermal_rate();
    let couplings = Matrix3::from_fn(|m, mp| if m == mp { 0.0 } else { k * t.pair_weights[(m, mp)] });
    RateMatrix3::from_pair_couplings(&couplings, orbach.mu())
}

/// Rate matrix over the ground eigenstates in ascending energy order.
pub fn triplet_rate_matrix(p: &TripletModelParams) -> Result<(RateMatrix3, bool)> {
    let t = triplet_overlap_table(p)?;
    Ok((rate_matrix_from_table(&t, &p.orbach)?, t.basis_sensitive))
}

pub fn triplet_relaxation_times(p: &TripletModelParams) -> Result<RelaxationModes> {
    let (r, _) = triplet_rate_matrix(p)?;
    relaxation_modes(&r)
}

/// How coherence survives a round trip through the excited manifold.
///
/// Neither choice is a closed form from the literature: both follow from
/// tracking a ground coherence through one excursion with exponentially
/// distributed dwell time and comparing its phase with the ground precession.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TripletT2Model {
    /// Dwell long against every frequency mismatch: only excited pairs whose
    /// precession matches the ground transition return coherence.
    FullDephasing,
    /// Mean dwell time `tau_e` (s) in the excited manifold.
    PartialCoherence { tau_e: f64 },
}

/// Frequency mismatch (GHz) treated as exact resonance under full dephasing.
const PHASE_MATCH_GHZ: f64 = 1e-6;

/// Fraction of the coherence returned per excursion, averaged over bases.
fn coherent_return(t: &TripletOverlapTable, transition: Transition, model: TripletT2Model) -> f64 {
    let (m, mp) = transition.levels();
    let e = &t.excited_energies;
    let g = &t.ground.energies;
    let ground_freq = g[m] - g[mp];
    let weight = |n: usize, np: usize| {
        let detuning = (e[n] - e[np]) - ground_freq;
        match model {
            TripletT2Model::FullDephasing => f64::from(detuning.abs() < PHASE_MATCH_GHZ),
            TripletT2Model::PartialCoherence { tau_e } => {
                let x = 2.0 * std::f64::consts::PI * detuning * 1e9 * tau_e;
                1.0 / (1.0 + x * x)
            }
        }
    };
    let mut total = 0.0;
    for b in &t.excited_bases {
        let o = t.overlaps_in(b);
        for n in 0..3 {
            for np in 0..3 {
                total += o[(m, n)] * o[(mp, np)] * weight(n, np);
            }
        }
    }
    total / t.excited_bases.len() as f64
}

/// Orbach T2 of `transition` in the triplet model (no background channels).
pub fn triplet_t2_model(p: &TripletModelParams, transition: Transition, model: TripletT2Model) -> Result<RelaxationTime> {
    if let TripletT2Model::PartialCoherence { tau_e } = model {
        if !(tau_e >= 0.0 && tau_e.is_finite()) {
            return Err(invalid("excited-state dwell time must be finite and nonnegative"));
        }
    }
    let t = triplet_overlap_table(p)?;
    let mut loss = (1.0 - coherent_return(&t, transition, model)).max(0.0);
    if loss < 1e-12 {
        loss = 0.0;
    }
    Ok(RelaxationTime::from_rate(p.orbach.thermal_rate() * loss))
}

/// Agreement of one excited-state splitting with reference orientation curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplittingScore {
    pub d_e_ghz: f64,
    /// Rate coefficient that best matches the reference T1 values, 1/s.
    pub rate_coefficient: f64,
    /// Sum of squared log residuals of T1 (both modes).
    pub t1_log_rss: f64,
    /// Sum of squared log residuals of T2.
    pub t2_log_rss: f64,
}

/// Reference T1 modes and T2 at one field angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrientationReference {
    pub theta: f64,
    pub t1_a: RelaxationTime,
    pub t1_b: RelaxationTime,
    pub t2: RelaxationTime,
}

/// Score each candidate splitting: the rate coefficient is set so the triplet
/// T1 curves match the reference in log space, then the T2 curves are
/// compared at that coefficient.
pub fn score_splittings(
    base: &TripletModelParams,
    reference: &[OrientationReference],
    candidates: &[f64],
    transition: Transition,
    model: TripletT2Model,
) -> Result<Vec<SplittingScore>> {
    candidates
        .iter()
        .map(|&d_e| {
            let mut unit = TripletModelParams::coaxial(base.ground, d_e, base.orbach);
            unit.excited.zfs = ZfsTensor { axial_d: d_e, ..base.excited.zfs };
            unit.orbach.rate_coefficient_c = 1.0;
            let mut t1_pairs = Vec::new();
            let mut t2_pairs = Vec::new();
            for r in reference {
                let p = unit.with_theta(r.theta);
                let modes = triplet_relaxation_times(&p)?;
                for (model_t, ref_t) in [(modes.t1_a, r.t1_a), (modes.t1_b, r.t1_b)] {
                    if let (Some(a), Some(b)) = (model_t.seconds(), ref_t.seconds()) {
                        t1_pairs.push((a.ln(), b.ln()));
                    }
                }
                if let (Some(a), Some(b)) = (triplet_t2_model(&p, transition, model)?.seconds(), r.t2.seconds()) {
                    t2_pairs.push((a.ln(), b.ln()));
                }
            }
            if t1_pairs.is_empty() {
                return Err(invalid(format!("no finite T1 values to compare for D_e = {d_e} GHz")));
            }
            // log T1 = log T1(C = 1) - log C
            let log_c = t1_pairs.iter().map(|(m, r)| m - r).sum::<f64>() / t1_pairs.len() as f64;
            let rss = |pairs: &[(f64, f64)]| pairs.iter().map(|(m, r)| (m - log_c - r).powi(2)).sum::<f64>();
            Ok(SplittingScore {
                d_e_ghz: d_e,
                rate_coefficient: log_c.exp(),
                t1_log_rss: rss(&t1_pairs),
                t2_log_rss: rss(&t2_pairs),
            })
        })
        .collect()
}
