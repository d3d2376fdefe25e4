//! First-order Zeeman analysis around the zero-field clock point.
//!
//! At B = 0 the anisotropic hyperfine interaction fully lifts the degeneracy
//! and every state has ⟨S⟩ = 0, so all transitions are insensitive to the
//! field to first order. A small field mixes each state `l` with one partner
//! `l'` per principal axis `m`, giving an effective spin
//!
//! ```text
//! ⟨l|S_m|l⟩ ≈ ½ μ_B g_m B_m / (E_l − E_l')
//! ```
//!
//! and an energy gradient dE_l/dB_m = μ_B g_m ⟨l|S_m|l⟩ (principal frame).
//! [`ZeemanAnalyzer`] evaluates both this closed form and the exact values
//! from diagonalisation, transition gradients (S1), maps and ZEFOZ searches.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::linalg::hermitian_eigen;
use crate::optimize::NelderMead;
use crate::spin::{
    build_hamiltonian, diagonalize, zeeman_term, EigenSystem, ElectronicLevel, FieldVector,
    LevelPair, SpinOperators, SpinSystem,
};
use crate::{Error, Result};

/// Zero-field gaps below this (Hz) disable the closed-form expressions.
pub const DEGENERACY_GUARD_HZ: f64 = 1e3;

/// Above this ratio μ_B·|g·B| / (smallest zero-field gap) first-order results
/// are flagged as unreliable.
pub const PERTURBATION_WARNING_RATIO: f64 = 0.1;

/// Largest perturbation ratio covered by one tracking step from zero field.
const TRACKING_STEP_RATIO: f64 = 0.05;
const MAX_TRACKING_STEPS: usize = 4096;

/// |⟨l'|S_m|l⟩| above this counts as a coupling when searching partners.
const PARTNER_THRESHOLD: f64 = 1e-6;

/// A pair of crystal axes spanning a field plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    D1D2,
    D1B,
    D2B,
}

impl Plane {
    /// (first, second, normal) axis indices.
    pub fn axes(&self) -> (usize, usize, usize) {
        match self {
            Plane::D1D2 => (0, 1, 2),
            Plane::D1B => (0, 2, 1),
            Plane::D2B => (1, 2, 0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Plane::D1D2 => "D1-D2",
            Plane::D1B => "D1-b",
            Plane::D2B => "D2-b",
        }
    }

    pub fn axis_names(&self) -> (&'static str, &'static str, &'static str) {
        const NAMES: [&str; 3] = ["D1", "D2", "b"];
        let (a, b, c) = self.axes();
        (NAMES[a], NAMES[b], NAMES[c])
    }

    /// Field with in-plane coordinates (u, v) and `offset` along the normal.
    pub fn field(&self, u: f64, v: f64, offset: f64) -> Result<FieldVector> {
        let (a, b, c) = self.axes();
        let mut x = Vector3::zeros();
        x[a] = u;
        x[b] = v;
        x[c] = offset;
        FieldVector::from_vector(x)
    }

    /// In-plane field of magnitude `magnitude` at angle `phi` (radians) from
    /// the first axis towards the second.
    pub fn polar(&self, magnitude: f64, phi: f64, offset: f64) -> Result<FieldVector> {
        self.field(magnitude * phi.cos(), magnitude * phi.sin(), offset)
    }
}

impl std::str::FromStr for Plane {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "d1-d2" | "d1d2" => Ok(Plane::D1D2),
            "d1-b" | "d1b" => Ok(Plane::D1B),
            "d2-b" | "d2b" => Ok(Plane::D2B),
            other => Err(Error::invalid(format!("unknown plane '{other}'"))),
        }
    }
}

/// Evenly spaced samples `start..=stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(start: f64, stop: f64, steps: usize) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite()) {
            return Err(Error::invalid("grid bounds must be finite"));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        if steps > 1 && start == stop {
            return Err(Error::invalid("grid range is empty"));
        }
        Ok(GridAxis { start, stop, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let d = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.stop
                } else {
                    self.start + d * i as f64
                }
            })
            .collect()
    }
}

/// Closed-form and exact effective spin of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinExpectation {
    pub level: usize,
    /// First-order value from the zero-field partner levels (crystal frame).
    pub closed_form: Vector3<f64>,
    /// ⟨k(B)|S|k(B)⟩ from diagonalisation (crystal frame).
    pub exact: Vector3<f64>,
    /// μ_B·|g·B| / smallest zero-field gap.
    pub perturbation_ratio: f64,
}

impl SpinExpectation {
    pub fn is_perturbative(&self) -> bool {
        self.perturbation_ratio <= PERTURBATION_WARNING_RATIO
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelGradient {
    pub level: usize,
    pub field: FieldVector,
    /// Exact ⟨k|S|k⟩, crystal frame.
    pub spin: Vector3<f64>,
    /// dE_k/dB = μ_B g·⟨k|S|k⟩, Hz/T.
    pub gradient: Vector3<f64>,
    /// Same with the first-order closed-form ⟨S⟩; `None` when the
    /// degeneracy guard or tensor misalignment disables it.
    pub closed_form: Option<Vector3<f64>>,
    /// Central differences of the tracked eigenvalue, Hz/T.
    pub finite_difference: Vector3<f64>,
    /// Step used for the finite differences, T.
    pub step: f64,
}

/// Transition frequency gradient df/dB = ∇E_upper − ∇E_lower.
#[derive(Debug, Clone, PartialEq)]
pub struct S1Result {
    pub pair: LevelPair,
    pub field: FieldVector,
    /// Hz/T, crystal frame.
    pub gradient: Vector3<f64>,
    /// Euclidean norm of `gradient`, Hz/T.
    pub norm: f64,
}

impl S1Result {
    /// df/dB along `direction` (normalised internally; zero vector gives 0).
    pub fn directional(&self, direction: &Vector3<f64>) -> f64 {
        let n = direction.norm();
        if n == 0.0 {
            0.0
        } else {
            self.gradient.dot(direction) / n
        }
    }
}

/// S1 norm over a rectangular grid in a crystal plane.
///
/// `values[i * axis2.len() + j]` is the norm at `axis1[i]`, `axis2[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    pub pair: LevelPair,
    pub plane: Plane,
    pub offset: f64,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
}

impl GradientMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.len(), self.axis2.len())
    }

    pub fn field(&self, i: usize, j: usize) -> Result<FieldVector> {
        self.plane.field(self.axis1[i], self.axis2[j], self.offset)
    }

    /// Grid index and value of the smallest entry.
    pub fn argmin(&self) -> Option<((usize, usize), f64)> {
        let n2 = self.axis2.len();
        self.values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(idx, &v)| ((idx / n2, idx % n2), v))
    }
}

/// S1 norm on a half circle of fixed field magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleScan {
    pub pair: LevelPair,
    pub plane: Plane,
    pub magnitude: f64,
    /// Degrees in [0, 180), uniformly spaced.
    pub angles_deg: Vec<f64>,
    pub norms: Vec<f64>,
}

impl AngleScan {
    /// Angle of the smallest norm, refined by a parabola through the
    /// neighbouring samples (the scan is 180°-periodic since S1(−B) = −S1(B)).
    pub fn minimum(&self) -> Option<(f64, f64)> {
        let n = self.norms.len();
        let (i, &v) = self
            .norms
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        if n < 3 {
            return Some((self.angles_deg[i], v));
        }
        let step = 180.0 / n as f64;
        let ym = self.norms[(i + n - 1) % n];
        let yp = self.norms[(i + 1) % n];
        let denom = ym - 2.0 * v + yp;
        let shift = if denom > 0.0 { 0.5 * (ym - yp) / denom } else { 0.0 };
        let shift = shift.clamp(-0.5, 0.5);
        let angle = (self.angles_deg[i] + shift * step).rem_euclid(180.0);
        let value = v - 0.25 * (ym - yp) * shift;
        Some((angle, value))
    }

    pub fn maximum(&self) -> Option<(f64, f64)> {
        self.norms
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (self.angles_deg[i], v))
    }

    /// Number of strict local minima on the periodic scan.
    pub fn local_minima(&self) -> usize {
        let n = self.norms.len();
        if n < 3 {
            return usize::from(n > 0);
        }
        (0..n)
            .filter(|&i| {
                let v = self.norms[i];
                v < self.norms[(i + n - 1) % n] && v < self.norms[(i + 1) % n]
            })
            .count()
    }
}

/// Settings for [`ZeemanAnalyzer::zefoz_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZefozOptions {
    /// Box for the applied field, (min, max) per crystal axis, T.
    pub bounds: [(f64, f64); 3],
    /// Constant background field added to the applied field, T.
    pub lab_bias: FieldVector,
    /// Simplex size at which the search stops, T.
    pub simplex_tolerance: f64,
    /// Largest |S1| (Hz/T) accepted as a gradient zero.
    pub s1_tolerance: f64,
    /// Initial simplex edge, T.
    pub initial_step: f64,
    pub max_iterations: usize,
    pub restarts: usize,
}

impl Default for ZefozOptions {
    fn default() -> Self {
        ZefozOptions {
            bounds: [(-500e-6, 500e-6); 3],
            lab_bias: FieldVector::zero(),
            simplex_tolerance: 1e-12,
            s1_tolerance: 1e6,
            initial_step: 50e-6,
            max_iterations: 20_000,
            restarts: 8,
        }
    }
}

impl ZefozOptions {
    pub fn symmetric_bounds(half_width: f64) -> Self {
        ZefozOptions {
            bounds: [(-half_width, half_width); 3],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZefozResult {
    pub pair: LevelPair,
    /// Applied field at the gradient zero, T.
    pub applied: FieldVector,
    /// Applied field plus lab bias, T.
    pub total: FieldVector,
    pub s1_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Partner {
    index: usize,
    /// |⟨l'|S_m|l⟩|²
    weight: f64,
}

/// Zeeman analysis of one electronic level of a [`SpinSystem`].
///
/// Construction diagonalises the zero-field Hamiltonian once; level labels
/// at finite field follow the zero-field states by maximal eigenvector
/// overlap along the straight path from B = 0, not by energy order.
#[derive(Debug, Clone)]
pub struct ZeemanAnalyzer {
    system: SpinSystem,
    level: ElectronicLevel,
    g: Matrix3<f64>,
    g_principal: [f64; 3],
    orientation: Matrix3<f64>,
    zero: EigenSystem,
    min_gap: f64,
    partners: Result<[[Partner; 3]; 4]>,
}

impl ZeemanAnalyzer {
    pub fn new(system: &SpinSystem, level: ElectronicLevel) -> Result<Self> {
        let tensors = system.tensors(level)?.clone();
        let zero = diagonalize(&build_hamiltonian(system, level, &FieldVector::zero())?)?;
        let min_gap = zero
            .energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let g = tensors.g.matrix();
        let g_principal = tensors.g.principal_values();
        let orientation = *tensors.g.orientation();

        let partners = if min_gap < DEGENERACY_GUARD_HZ {
            Err(Error::DegenerateLevels { min_gap_hz: min_gap })
        } else if !tensors.frames_aligned() {
            Err(Error::MisalignedTensors)
        } else {
            find_partners(&zero, &orientation)
        };
        if let Err(e) = &partners {
            log::debug!("closed-form Zeeman expressions disabled: {e}");
        }

        Ok(ZeemanAnalyzer {
            system: system.clone(),
            level,
            g,
            g_principal,
            orientation,
            zero,
            min_gap,
            partners,
        })
    }

    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    pub fn level(&self) -> ElectronicLevel {
        self.level
    }

    pub fn zero_field(&self) -> &EigenSystem {
        &self.zero
    }

    /// Smallest zero-field level gap, Hz.
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// Crystal-frame g matrix.
    pub fn g_matrix(&self) -> &Matrix3<f64> {
        &self.g
    }

    /// Whether the first-order closed form is available, and why not.
    pub fn closed_form_status(&self) -> Result<()> {
        self.partners.as_ref().map(|_| ()).map_err(Clone::clone)
    }

    /// Zero-field partner of `level` along principal axis `axis`.
    pub fn partner(&self, level: usize, axis: usize) -> Result<usize> {
        check_level(level)?;
        if axis >= 3 {
            return Err(Error::invalid(format!("axis {axis} out of range")));
        }
        Ok(self.partners.as_ref().map_err(Clone::clone)?[level][axis].index)
    }

    pub fn perturbation_ratio(&self, field: &FieldVector) -> f64 {
        let zeeman = self.system.bohr_magneton * (self.g.transpose() * field.vector()).norm();
        if self.min_gap > 0.0 {
            zeeman / self.min_gap
        } else {
            f64::INFINITY
        }
    }

    fn raw(&self, field: &FieldVector) -> Result<EigenSystem> {
        diagonalize(&build_hamiltonian(&self.system, self.level, field)?)
    }

    /// Eigensystem at `field` with states labelled by continuity from the
    /// zero-field ordering.
    pub fn eigensystem(&self, field: &FieldVector) -> Result<EigenSystem> {
        if self.min_gap < DEGENERACY_GUARD_HZ {
            return self.raw(field);
        }
        let ratio = self.perturbation_ratio(field);
        let steps = ((ratio / TRACKING_STEP_RATIO).ceil() as usize).clamp(1, MAX_TRACKING_STEPS);
        let mut current = self.zero.clone();
        for i in 1..=steps {
            let b = field.scaled(i as f64 / steps as f64);
            current = relabel(&current, self.raw(&b)?);
        }
        Ok(current)
    }

    /// Eigensystems along a path, each labelled by overlap with the previous
    /// point; the first point is tracked from zero field.
    pub fn track_path(&self, path: &[FieldVector]) -> Result<Vec<EigenSystem>> {
        let mut out: Vec<EigenSystem> = Vec::with_capacity(path.len());
        for field in path {
            let next = match out.last() {
                None => self.eigensystem(field)?,
                Some(prev) => relabel(prev, self.raw(field)?),
            };
            out.push(next);
        }
        Ok(out)
    }

    /// Exact ⟨k|S|k⟩ (crystal frame).
    pub fn exact_spin_expectation(&self, k: usize, field: &FieldVector) -> Result<Vector3<f64>> {
        check_level(k)?;
        Ok(self.eigensystem(field)?.spin_expectation(k))
    }

    /// First-order ⟨k|S|k⟩ from the zero-field partners (crystal frame).
    pub fn closed_form_spin_expectation(
        &self,
        k: usize,
        field: &FieldVector,
    ) -> Result<Vector3<f64>> {
        check_level(k)?;
        let partners = self.partners.as_ref().map_err(Clone::clone)?;
        let b_principal = self.orientation.transpose() * field.vector();
        let mut s = Vector3::zeros();
        for m in 0..3 {
            let p = partners[k][m];
            let gap = self.zero.energies[k] - self.zero.energies[p.index];
            s[m] = 2.0 * p.weight * self.system.bohr_magneton * self.g_principal[m] * b_principal[m]
                / gap;
        }
        Ok(self.orientation * s)
    }

    /// Both closed-form and exact effective spin.
    ///
    /// Fails with [`Error::DegenerateLevels`] (or the misalignment / partner
    /// error) when the closed form is undefined; use
    /// [`exact_spin_expectation`](Self::exact_spin_expectation) in that case.
    pub fn effective_spin_expectation(
        &self,
        k: usize,
        field: &FieldVector,
    ) -> Result<SpinExpectation> {
        let closed_form = self.closed_form_spin_expectation(k, field)?;
        let exact = self.exact_spin_expectation(k, field)?;
        let perturbation_ratio = self.perturbation_ratio(field);
        if perturbation_ratio > PERTURBATION_WARNING_RATIO {
            log::warn!(
                "field {:?} T is outside the first-order regime (ratio {perturbation_ratio:.3})",
                field.components()
            );
        }
        Ok(SpinExpectation {
            level: k,
            closed_form,
            exact,
            perturbation_ratio,
        })
    }

    /// Effective magnetic moment g·⟨k|S|k⟩ in units of μ_B.
    pub fn effective_moment(&self, k: usize, field: &FieldVector) -> Result<Vector3<f64>> {
        Ok(self.g * self.exact_spin_expectation(k, field)?)
    }

    /// Difference of effective moments (upper − lower) of a transition, μ_B.
    pub fn moment_difference(&self, pair: LevelPair, field: &FieldVector) -> Result<Vector3<f64>> {
        let eig = self.eigensystem(field)?;
        Ok(self.g * (eig.spin_expectation(pair.upper) - eig.spin_expectation(pair.lower)))
    }

    /// Finite-difference step rule: max(1e-8 T, 1e-4·|B|).
    pub fn finite_difference_step(field: &FieldVector) -> f64 {
        (1e-4 * field.magnitude()).max(1e-8)
    }

    pub fn level_gradient(&self, k: usize, field: &FieldVector) -> Result<LevelGradient> {
        check_level(k)?;
        let eig = self.eigensystem(field)?;
        let spin = eig.spin_expectation(k);
        let gradient = self.g * spin * self.system.bohr_magneton;
        let closed_form = match self.closed_form_spin_expectation(k, field) {
            Ok(s) => Some(self.g * s * self.system.bohr_magneton),
            Err(_) => None,
        };
        let h = Self::finite_difference_step(field);
        let mut finite_difference = Vector3::zeros();
        for a in 0..3 {
            let mut d = Vector3::zeros();
            d[a] = h;
            let plus = self.eigenvalue_shift(&eig, k, &d)?;
            let minus = self.eigenvalue_shift(&eig, k, &(-d))?;
            finite_difference[a] = (plus - minus) / (2.0 * h);
        }
        Ok(LevelGradient {
            level: k,
            field: *field,
            spin,
            gradient,
            closed_form,
            finite_difference,
            step: h,
        })
    }

    /// E_k(B + δ) − E_k(B), exact.
    ///
    /// H(B + δ) is diagonalised in the eigenbasis of H(B) with E_k subtracted
    /// from the diagonal, so the shift is not lost in the rounding of the
    /// GHz-scale level energies. The tracked state is the one with the
    /// largest weight on |k(B)⟩.
    fn eigenvalue_shift(&self, eig: &EigenSystem, k: usize, delta: &Vector3<f64>) -> Result<f64> {
        let dh = zeeman_term(&self.g, self.system.bohr_magneton, delta);
        let mut m = eig.vectors.adjoint() * dh * eig.vectors;
        for i in 0..4 {
            m[(i, i)] += Complex64::from(eig.energies[i] - eig.energies[k]);
        }
        let local = hermitian_eigen(&m)?;
        let j = (0..4)
            .max_by(|&x, &y| local.vectors[(k, x)].norm().total_cmp(&local.vectors[(k, y)].norm()))
            .unwrap_or(k);
        Ok(local.values[j])
    }

    /// Transition gradient from exact spin expectations (Hellmann–Feynman).
    pub fn s1(&self, pair: LevelPair, field: &FieldVector) -> Result<S1Result> {
        check_pair(pair)?;
        let eig = self.eigensystem(field)?;
        let ds = eig.spin_expectation(pair.upper) - eig.spin_expectation(pair.lower);
        let gradient = self.g * ds * self.system.bohr_magneton;
        Ok(S1Result {
            pair,
            field: *field,
            norm: gradient.norm(),
            gradient,
        })
    }

    /// S1 norm over a plane grid, evaluated in parallel.
    pub fn s1_map(
        &self,
        pair: LevelPair,
        plane: Plane,
        axis1: &GridAxis,
        axis2: &GridAxis,
        offset: f64,
    ) -> Result<GradientMap> {
        check_pair(pair)?;
        if axis1.steps < 2 || axis2.steps < 2 {
            return Err(Error::invalid("gradient map needs at least a 2x2 grid"));
        }
        if !offset.is_finite() {
            return Err(Error::invalid("plane offset must be finite"));
        }
        let u = axis1.values();
        let v = axis2.values();
        let n2 = v.len();
        let values = (0..u.len() * n2)
            .into_par_iter()
            .map(|idx| {
                let field = plane.field(u[idx / n2], v[idx % n2], offset)?;
                Ok(self.s1(pair, &field)?.norm)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(GradientMap {
            pair,
            plane,
            offset,
            axis1: u,
            axis2: v,
            values,
        })
    }

    /// S1 norm at `steps` uniformly spaced angles in [0°, 180°).
    pub fn s1_angle_scan(
        &self,
        pair: LevelPair,
        plane: Plane,
        magnitude: f64,
        steps: usize,
    ) -> Result<AngleScan> {
        check_pair(pair)?;
        if steps == 0 {
            return Err(Error::invalid("angle scan needs at least one step"));
        }
        let angles_deg: Vec<f64> = (0..steps).map(|i| 180.0 * i as f64 / steps as f64).collect();
        let norms = angles_deg
            .par_iter()
            .map(|deg| {
                let field = plane.polar(magnitude, deg.to_radians(), 0.0)?;
                Ok(self.s1(pair, &field)?.norm)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(AngleScan {
            pair,
            plane,
            magnitude,
            angles_deg,
            norms,
        })
    }

    /// Minimise |S1| of `pair` over the applied field inside `options.bounds`.
    ///
    /// The simplex works in microtesla so the default tolerances are well
    /// scaled. Points outside the box are evaluated at the nearest box point
    /// plus a steep linear penalty.
    pub fn zefoz_search(
        &self,
        pair: LevelPair,
        initial: &FieldVector,
        options: &ZefozOptions,
    ) -> Result<ZefozResult> {
        check_pair(pair)?;
        for (lo, hi) in options.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid("search bounds must be finite with min < max"));
            }
        }
        const SCALE: f64 = 1e-6;
        const PENALTY: f64 = 1e9;
        let bounds = options.bounds;
        let bias = options.lab_bias;

        let objective = |x: &[f64]| -> f64 {
            let mut clamped = Vector3::zeros();
            let mut outside = 0.0;
            for a in 0..3 {
                let t = x[a] * SCALE;
                let c = t.clamp(bounds[a].0, bounds[a].1);
                outside += (t - c).abs() / SCALE;
                clamped[a] = c;
            }
            let field = FieldVector::from_vector(clamped).map(|f| f + bias);
            match field.and_then(|f| self.s1(pair, &f)) {
                Ok(s) => s.norm + PENALTY * outside,
                Err(_) => f64::INFINITY,
            }
        };

        let x0: Vec<f64> = initial.components().iter().map(|c| c / SCALE).collect();
        let nm = NelderMead::new(vec![options.initial_step / SCALE; 3], options.simplex_tolerance / SCALE)
            .with_max_iterations(options.max_iterations)
            .with_restarts(options.restarts);
        let best = nm.minimize(objective, &x0);

        let mut applied = Vector3::zeros();
        for a in 0..3 {
            applied[a] = (best.x[a] * SCALE).clamp(bounds[a].0, bounds[a].1);
        }
        let applied = FieldVector::from_vector(applied)?;
        let total = applied + bias;
        let s1_norm = self.s1(pair, &total)?.norm;
        if !best.converged || s1_norm > options.s1_tolerance {
            return Err(Error::NoConvergence {
                iterations: best.iterations,
                best_value: s1_norm,
                best_point: applied.components().to_vec(),
            });
        }
        Ok(ZefozResult {
            pair,
            applied,
            total,
            s1_norm,
            iterations: best.iterations,
            evaluations: best.evaluations,
        })
    }
}

fn check_level(k: usize) -> Result<()> {
    if k < 4 {
        Ok(())
    } else {
        Err(Error::invalid(format!("level index {k} out of range 0..4")))
    }
}

fn check_pair(pair: LevelPair) -> Result<()> {
    LevelPair::new(pair.lower, pair.upper).map(|_| ())
}

/// For each zero-field state and principal axis, the unique other state
/// coupled by the principal-frame spin operator.
fn find_partners(zero: &EigenSystem, orientation: &Matrix3<f64>) -> Result<[[Partner; 3]; 4]> {
    let ops = SpinOperators::get();
    let mut out = [[Partner { index: 0, weight: 0.0 }; 3]; 4];
    for m in 0..3 {
        let axis: Vector3<f64> = orientation.column(m).into_owned();
        let op = ops.electron_along(&axis);
        for l in 0..4 {
            let coupled: Vec<(usize, f64)> = (0..4)
                .filter(|&p| p != l)
                .map(|p| (p, zero.matrix_element(&op, p, l).norm()))
                .filter(|&(_, x)| x > PARTNER_THRESHOLD)
                .collect();
            match coupled.as_slice() {
                [(index, x)] => out[l][m] = Partner { index: *index, weight: x * x },
                _ => return Err(Error::NoUniquePartner { level: l, axis: m }),
            }
        }
    }
    Ok(out)
}

/// Reorder `next` so that state k has maximal total overlap with state k of
/// `reference` (best of the 24 permutations).
pub fn relabel(reference: &EigenSystem, next: EigenSystem) -> EigenSystem {
    let mut overlap = [[0.0f64; 4]; 4];
    for (i, row) in overlap.iter_mut().enumerate() {
        let r = reference.state(i);
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = r.dotc(&next.state(j)).norm_sqr();
        }
    }
    let mut best = [0, 1, 2, 3];
    let mut best_score = f64::NEG_INFINITY;
    let mut perm = [0, 1, 2, 3];
    permutations(&mut perm, 0, &mut |p| {
        let score: f64 = (0..4).map(|i| overlap[i][p[i]]).sum();
        if score > best_score + 1e-12 {
            best_score = score;
            best = *p;
        }
    });
    if best == [0, 1, 2, 3] {
        next
    } else {
        next.permuted(&best)
    }
}

fn permutations(p: &mut [usize; 4], start: usize, visit: &mut impl FnMut(&[usize; 4])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permutations(p, start + 1, visit);
        p.swap(start, i);
    }
}
