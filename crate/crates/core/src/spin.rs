//! S = 1 spin Hamiltonians, exact diagonalization, and field-swept ESR line
//! positions for the four <111> defect orientations.
//!
//! All matrices use the ordered basis |m_s = -1>, |0>, |+1> quantized along the
//! defect symmetry axis (the z axis of the coordinate frame). The magnetic field
//! direction is given by its polar angle `theta` from that axis and an azimuth.

use nalgebra::{Complex, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::CODATA;
use crate::error::{invalid, OrbachError, Result};

pub type C64 = Complex<f64>;

/// Eigenvalue gaps below this (GHz) are reported as degenerate.
pub const DEGENERACY_TOL_GHZ: f64 = 1e-9;
/// Frequency tolerance for resonance-field root finding (GHz).
pub const RESONANCE_TOL_GHZ: f64 = 1e-4;

/// Zero-field splitting tensor: D(S_z^2 - S(S+1)/3) + E(S_x^2 - S_y^2) in its
/// principal frame, whose z axis points along (`axis_polar`, `axis_azimuth`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZfsTensor {
    pub axial_d: f64,
    pub rhombic_e: f64,
    pub axis_polar: f64,
    pub axis_azimuth: f64,
}

impl ZfsTensor {
    pub fn axial(d_ghz: f64) -> Self {
        Self { axial_d: d_ghz, rhombic_e: 0.0, axis_polar: 0.0, axis_azimuth: 0.0 }
    }

    /// Cartesian tensor in the defect frame (GHz), traceless and symmetric.
    pub fn cartesian(&self) -> Matrix3<f64> {
        let d = self.axial_d;
        let e = self.rhombic_e;
        let principal = Matrix3::from_diagonal(&Vector3::new(
            -d / 3.0 + e,
            -d / 3.0 - e,
            2.0 * d / 3.0,
        ));
        let rot = rotation_zy(self.axis_polar, self.axis_azimuth);
        rot * principal * rot.transpose()
    }
}

/// Axial g tensor, symmetry axis along the defect z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GTensor {
    pub g_parallel: f64,
    pub g_perpendicular: f64,
}

impl GTensor {
    pub fn new(g_parallel: f64, g_perpendicular: f64) -> Result<Self> {
        for g in [g_parallel, g_perpendicular] {
            if !(1.9..=2.1).contains(&g) {
                return Err(invalid(format!("g value {g} outside [1.9, 2.1]")));
            }
        }
        Ok(Self { g_parallel, g_perpendicular })
    }

    pub fn isotropic(g: f64) -> Self {
        Self { g_parallel: g, g_perpendicular: g }
    }

    pub fn cartesian(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            self.g_perpendicular,
            self.g_perpendicular,
            self.g_parallel,
        ))
    }
}

/// The four <111> orientations of the defect axis in the cubic crystal frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteLabel {
    /// [111]
    #[default]
    P111,
    /// [-1-11]
    MM1,
    /// [1-1-1]
    PMM,
    /// [-11-1]
    MPM,
}

impl SiteLabel {
    pub const ALL: [SiteLabel; 4] = [SiteLabel::P111, SiteLabel::MM1, SiteLabel::PMM, SiteLabel::MPM];

    pub fn direction(self) -> Vector3<f64> {
        let v = match self {
            SiteLabel::P111 => Vector3::new(1.0, 1.0, 1.0),
            SiteLabel::MM1 => Vector3::new(-1.0, -1.0, 1.0),
            SiteLabel::PMM => Vector3::new(1.0, -1.0, -1.0),
            SiteLabel::MPM => Vector3::new(-1.0, 1.0, -1.0),
        };
        v / 3f64.sqrt()
    }

    pub fn miller(self) -> &'static str {
        match self {
            SiteLabel::P111 => "[111]",
            SiteLabel::MM1 => "[-1-11]",
            SiteLabel::PMM => "[1-1-1]",
            SiteLabel::MPM => "[-11-1]",
        }
    }
}

impl std::fmt::Display for SiteLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.miller())
    }
}

/// Applied field: magnitude in mT and direction relative to the defect axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub magnitude: f64,
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    pub site_label: SiteLabel,
}

impl FieldConfig {
    pub fn new(magnitude_mt: f64, theta: f64) -> Result<Self> {
        if !(magnitude_mt >= 0.0) {
            return Err(invalid(format!("field magnitude {magnitude_mt} mT must be >= 0")));
        }
        if !(0.0..=std::f64::consts::PI + 1e-12).contains(&theta) {
            return Err(invalid(format!("theta {theta} outside [0, pi]")));
        }
        Ok(Self { magnitude: magnitude_mt, theta, phi: 0.0, site_label: SiteLabel::P111 })
    }

    pub fn with_site(mut self, site: SiteLabel) -> Self {
        self.site_label = site;
        self
    }

    /// Unit vector along B in the defect frame.
    pub fn direction(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }

    /// Field vector in tesla.
    pub fn vector_tesla(&self) -> Vector3<f64> {
        self.direction() * (self.magnitude * 1e-3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    pub zfs: ZfsTensor,
    pub g: GTensor,
    pub field: FieldConfig,
}

impl SpinSystemParams {
    pub fn with_field_magnitude(mut self, magnitude_mt: f64) -> Self {
        self.field.magnitude = magnitude_mt;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.field.theta = theta;
        self
    }
}

/// Which pair of adjacent sublevels an experiment addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// m_s = -1 <-> 0
    MinusToZero,
    /// m_s = 0 <-> +1
    ZeroToPlus,
}

impl Transition {
    /// Indices (lower, upper) into the (-1, 0, +1) ordering.
    pub fn levels(self) -> (usize, usize) {
        match self {
            Transition::MinusToZero => (0, 1),
            Transition::ZeroToPlus => (1, 2),
        }
    }

    /// Index of the m_s = +-1 member of the pair.
    pub fn outer_index(self) -> usize {
        match self {
            Transition::MinusToZero => 0,
            Transition::ZeroToPlus => 2,
        }
    }
}

impl std::str::FromStr for Transition {
    type Err = OrbachError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "-1,0" | "-1<->0" | "minus-zero" | "MinusToZero" => Ok(Transition::MinusToZero),
            "0,+1" | "0,1" | "0<->+1" | "zero-plus" | "ZeroToPlus" => Ok(Transition::ZeroToPlus),
            other => Err(invalid(format!("unknown transition '{other}'"))),
        }
    }
}

/// Spin-1 operators (S_x, S_y, S_z) in the (-1, 0, +1) basis.
pub fn spin_operators() -> [Matrix3<C64>; 3] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let zero = C64::new(0.0, 0.0);
    let re = |x: f64| C64::new(x, 0.0);
    let im = |x: f64| C64::new(0.0, x);
    let sx = Matrix3::new(zero, re(r), zero, re(r), zero, re(r), zero, re(r), zero);
    let sy = Matrix3::new(zero, im(r), zero, im(-r), zero, im(r), zero, im(-r), zero);
    let sz = Matrix3::new(re(-1.0), zero, zero, zero, zero, zero, zero, zero, re(1.0));
    [sx, sy, sz]
}

/// H = S.D.S + (mu_B/h) S.g.B in GHz.
pub fn build_hamiltonian(params: &SpinSystemParams) -> Matrix3<C64> {
    let ops = spin_operators();
    let d = params.zfs.cartesian();
    let gb = params.g.cartesian() * params.field.vector_tesla() * CODATA.bohr_magneton_over_h;

    let mut h = Matrix3::<C64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            if d[(i, j)] != 0.0 {
                h += ops[i] * ops[j] * C64::new(d[(i, j)], 0.0);
            }
        }
        h += ops[i] * C64::new(gb[i], 0.0);
    }
    h
}

/// Eigen-decomposition of a 3x3 Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem3 {
    /// Ascending eigenvalues.
    pub energies: [f64; 3],
    /// Columns are the orthonormal eigenvectors matching `energies`.
    pub states: Matrix3<C64>,
    /// Some pair of eigenvalues lies closer than [`DEGENERACY_TOL_GHZ`].
    pub degenerate: bool,
}

impl EigenSystem3 {
    pub fn state(&self, k: usize) -> Vector3<C64> {
        self.states.column(k).into_owned()
    }

    pub fn min_gap(&self) -> f64 {
        (self.energies[1] - self.energies[0]).min(self.energies[2] - self.energies[1])
    }
}

pub fn hermitian_deviation(h: &Matrix3<C64>) -> f64 {
    (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn eigensolve(h: &Matrix3<C64>) -> Result<EigenSystem3> {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let deviation = hermitian_deviation(h);
    if deviation > 1e-12 * scale {
        return Err(OrbachError::NonHermitian { deviation });
    }
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.map(|k| eig.eigenvalues[k]);
    let mut states = Matrix3::<C64>::zeros();
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        // fix the global phase: largest component real and positive
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, z)| {
            if z.norm() > acc.1 + 1e-12 { (i, z.norm()) } else { acc }
        });
        let phase = v[imax] / v[imax].norm();
        v /= phase;
        states.set_column(col, &v);
    }
    let degenerate = energies[1] - energies[0] < DEGENERACY_TOL_GHZ
        || energies[2] - energies[1] < DEGENERACY_TOL_GHZ;
    Ok(EigenSystem3 { energies, states, degenerate })
}

/// Spin Hamiltonian eigen-system for the given parameters.
pub fn solve_spin_system(params: &SpinSystemParams) -> EigenSystem3 {
    eigensolve(&build_hamiltonian(params)).expect("spin Hamiltonian is Hermitian by construction")
}

/// sqrt(g_par^2 cos^2 + g_perp^2 sin^2).
pub fn effective_g(g: &GTensor, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (g.g_parallel.powi(2) * c * c + g.g_perpendicular.powi(2) * s * s).sqrt()
}

/// One field-swept resonance between eigenstates `lower` < `upper` (indices in
/// ascending energy order at the resonance field).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceLine {
    pub lower: usize,
    pub upper: usize,
    pub field_mt: f64,
    /// |<lower|S_perp|upper>|^2 with S_perp transverse to B.
    pub moment: f64,
    /// Residual |E_upper - E_lower - f| at the returned field (GHz).
    pub frequency_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldWindow {
    pub min_mt: f64,
    pub max_mt: f64,
    /// Number of scan segments used to bracket roots.
    pub segments: usize,
}

impl FieldWindow {
    pub fn new(min_mt: f64, max_mt: f64) -> Self {
        Self { min_mt, max_mt, segments: 2000 }
    }
}

impl Default for FieldWindow {
    fn default() -> Self {
        Self::new(250.0, 450.0)
    }
}

fn transverse_moment(params: &SpinSystemParams, eig: &EigenSystem3, i: usize, j: usize) -> f64 {
    let (st, ct) = params.field.theta.sin_cos();
    let (sp, cp) = params.field.phi.sin_cos();
    let perp = [ct * cp, ct * sp, -st];
    let ops = spin_operators();
    let op = ops[0] * C64::new(perp[0], 0.0) + ops[1] * C64::new(perp[1], 0.0) + ops[2] * C64::new(perp[2], 0.0);
    let vi = eig.state(i);
    let vj = eig.state(j);
    (vi.adjoint() * op * vj)[(0, 0)].norm_sqr()
}

/// Fields inside `window` where some level pair is resonant with `microwave_ghz`.
/// The field magnitude in `params` is ignored. Lines are sorted by field.
pub fn resonance_fields(
    params: &SpinSystemParams,
    microwave_ghz: f64,
    window: FieldWindow,
) -> Result<Vec<ResonanceLine>> {
    if !(microwave_ghz > 0.0) {
        return Err(invalid("microwave frequency must be positive"));
    }
    if !(window.min_mt >= 0.0 && window.max_mt > window.min_mt) || window.segments == 0 {
        return Err(invalid("field window must satisfy 0 <= min < max"));
    }
    let pairs = [(0usize, 1usize), (1, 2), (0, 2)];
    let mismatch = |b: f64, (i, j): (usize, usize)| {
        let e = solve_spin_system(&params.with_field_magnitude(b)).energies;
        e[j] - e[i] - microwave_ghz
    };

    let n = window.segments;
    let step = (window.max_mt - window.min_mt) / n as f64;
    let mut lines = Vec::new();
    for pair in pairs {
        let mut b_lo = window.min_mt;
        let mut f_lo = mismatch(b_lo, pair);
        for k in 1..=n {
            let b_hi = window.min_mt + step * k as f64;
            let f_hi = mismatch(b_hi, pair);
            let root = if f_lo == 0.0 {
                Some(b_lo)
            } else if f_lo * f_hi < 0.0 {
                Some(bisect(|b| mismatch(b, pair), b_lo, b_hi, f_lo))
            } else if k == n && f_hi == 0.0 {
                Some(b_hi)
            } else {
                None
            };
            if let Some(b) = root {
                let at = params.with_field_magnitude(b);
                let eig = solve_spin_system(&at);
                let err = (eig.energies[pair.1] - eig.energies[pair.0] - microwave_ghz).abs();
                if err <= RESONANCE_TOL_GHZ {
                    lines.push(ResonanceLine {
                        lower: pair.0,
                        upper: pair.1,
                        field_mt: b,
                        moment: transverse_moment(&at, &eig, pair.0, pair.1),
                        frequency_error: err,
                    });
                }
            }
            b_lo = b_hi;
            f_lo = f_hi;
        }
    }
    lines.sort_by(|a, b| a.field_mt.total_cmp(&b.field_mt));
    Ok(lines)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < 1e-12 * hi.abs().max(1.0) {
            return mid;
        }
        if f_lo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// Default rotation axis for a small crystal misalignment: [-101].
pub fn misalignment_axis() -> Vector3<f64> {
    Vector3::new(-1.0, 0.0, 1.0).normalize()
}

/// Field direction in the crystal frame for B nominally along [111], tilted by
/// `misalignment` radians about `axis` (which must be perpendicular to [111]).
pub fn tilted_111_direction(misalignment: f64, axis: &Vector3<f64>) -> Vector3<f64> {
    let u = SiteLabel::P111.direction();
    let a = axis.normalize();
    u * misalignment.cos() + a.cross(&u) * misalignment.sin()
}

/// Angle between the field direction and the defect axis of `site`.
pub fn site_theta(field_dir: &Vector3<f64>, site: SiteLabel) -> f64 {
    field_dir.normalize().dot(&site.direction()).clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StickLine {
    pub site: SiteLabel,
    pub theta: f64,
    pub field_mt: f64,
    pub intensity: f64,
    pub lower: usize,
    pub upper: usize,
}

/// Stick spectrum over all four <111> sites for B near [111].
///
/// `base` supplies the ZFS and g tensors; its field direction and magnitude are
/// replaced per site. Every site carries unit weight, so the three off-axis
/// sites together give the 1:3 degeneracy ratio.
pub fn esr_spectrum_111(
    base: &SpinSystemParams,
    microwave_ghz: f64,
    misalignment: f64,
    window: FieldWindow,
) -> Result<Vec<StickLine>> {
    let dir = tilted_111_direction(misalignment, &misalignment_axis());
    let mut sticks = Vec::new();
    for site in SiteLabel::ALL {
        let theta = site_theta(&dir, site);
        let mut params = *base;
        params.field.theta = theta;
        params.field.phi = 0.0;
        params.field.site_label = site;
        for line in resonance_fields(&params, microwave_ghz, window)? {
            sticks.push(StickLine {
                site,
                theta,
                field_mt: line.field_mt,
                intensity: line.moment,
                lower: line.lower,
                upper: line.upper,
            });
        }
    }
    sticks.sort_by(|a, b| a.field_mt.total_cmp(&b.field_mt).then(a.site.cmp(&b.site)));
    Ok(sticks)
}

/// Lines that coincide within `tol_mt`, merged with summed intensity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineGroup {
    pub field_mt: f64,
    pub intensity: f64,
    pub multiplicity: usize,
}

pub fn group_lines(sticks: &[StickLine], tol_mt: f64) -> Vec<LineGroup> {
    let mut sorted: Vec<&StickLine> = sticks.iter().collect();
    sorted.sort_by(|a, b| a.field_mt.total_cmp(&b.field_mt));
    let mut groups: Vec<LineGroup> = Vec::new();
    for s in sorted {
        match groups.last_mut() {
            Some(g) if (s.field_mt - g.field_mt).abs() <= tol_mt => {
                let n = g.multiplicity as f64;
                g.field_mt = (g.field_mt * n + s.field_mt) / (n + 1.0);
                g.intensity += s.intensity;
                g.multiplicity += 1;
            }
            _ => groups.push(LineGroup { field_mt: s.field_mt, intensity: s.intensity, multiplicity: 1 }),
        }
    }
    groups
}

fn rotation_zy(polar: f64, azimuth: f64) -> Matrix3<f64> {
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    let rz = Matrix3::new(ca, -sa, 0.0, sa, ca, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    rz * ry
}
