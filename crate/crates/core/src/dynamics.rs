//! Synthetic observables: inhomogeneously broadened Rabi oscillations and
//! Hahn-echo decay maps.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::constants::FWHM_PER_SIGMA;
use crate::eseem::{larmor_period, two_pulse_envelope, HostNucleus};
use crate::fitting::{StretchedExponential, T2FieldLaw};
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::spin::{FieldVector, LevelPair};
use crate::zeeman::ZeemanAnalyzer;
use crate::{Error, Result};

/// Default number of Gauss–Hermite nodes for detuning averages.
pub const DEFAULT_RABI_NODES: usize = 128;

/// Gaussian standard deviation for a full width at half maximum.
pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

/// Ensemble-averaged excited-state population under a resonant drive.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiTrace {
    pub times: Vec<f64>,
    /// Excited-state population P(t) ∈ [0, 1].
    pub population: Vec<f64>,
    /// Rabi angular frequency Ω, rad/s.
    pub omega: f64,
    /// Detuning standard deviation, Hz.
    pub sigma: f64,
}

impl RabiTrace {
    /// Population difference 1 − 2P, starting from the ground state.
    pub fn population_difference(&self) -> Vec<f64> {
        self.population.iter().map(|p| 1.0 - 2.0 * p).collect()
    }

    /// Undriven-detuning Rabi period 2π/Ω, s.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// max − min of P within the `n`-th period (n ≥ 1), or `None` when the
    /// grid does not cover it. Undamped oscillations have contrast 1.
    pub fn period_contrast(&self, n: usize) -> Option<f64> {
        if n == 0 {
            return None;
        }
        let t = self.period();
        let (lo, hi) = ((n - 1) as f64 * t, n as f64 * t);
        let last = *self.times.last()?;
        if last < hi * (1.0 - 1e-9) {
            return None;
        }
        let window = self
            .times
            .iter()
            .zip(&self.population)
            .filter(|(&ti, _)| ti >= lo && ti <= hi)
            .map(|(_, &p)| p);
        let (mn, mx) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p), b.max(p))
        });
        (mx >= mn).then_some(mx - mn)
    }

    /// Time of the first local maximum of P, parabola-refined.
    pub fn first_maximum(&self) -> Option<f64> {
        let p = &self.population;
        let i = (1..p.len().saturating_sub(1)).find(|&i| p[i] >= p[i - 1] && p[i] > p[i + 1])?;
        let (ym, y0, yp) = (p[i - 1], p[i], p[i + 1]);
        let denom = ym - 2.0 * y0 + yp;
        let h = 0.5 * (self.times[i + 1] - self.times[i - 1]);
        let shift = if denom < 0.0 {
            (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        Some(self.times[i] + shift * h)
    }
}

/// Largest Gauss–Hermite rule; faster oscillation in Δ switches to panels.
const MAX_HERMITE_NODES: usize = 2048;

/// Node count that resolves cos(kx) against a unit Gaussian.
fn required_nodes(k: f64) -> usize {
    (1.2 * k * k + 32.0).ceil().min(1e9) as usize
}

enum DetuningRule {
    Hermite(GaussHermite),
    Panels { rule: GaussLegendre, panels: usize },
}

impl DetuningRule {
    /// Rule for integrands oscillating up to `k` radians per standard
    /// deviation of Δ.
    fn new(k: f64, nodes: usize) -> Result<Self> {
        let n = nodes.max(required_nodes(k));
        if n <= MAX_HERMITE_NODES {
            return Ok(DetuningRule::Hermite(GaussHermite::new(n)?));
        }
        // about π/2 of phase per panel over ±10σ
        Ok(DetuningRule::Panels {
            rule: GaussLegendre::new(16)?,
            panels: (40.0 * k / PI).ceil() as usize,
        })
    }

    /// ⟨f(Δ)⟩ for Δ ~ N(0, spread²).
    fn average(&self, spread: f64, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            DetuningRule::Hermite(rule) => rule.gaussian_expectation(spread, f),
            DetuningRule::Panels { rule, panels } => {
                let norm = 1.0 / (spread * (2.0 * PI).sqrt());
                rule.integrate(-10.0 * spread, 10.0 * spread, *panels, |d| {
                    norm * (-0.5 * (d / spread).powi(2)).exp() * f(d)
                })
            }
        }
    }
}

/// P(t) = ⟨Ω²/(Ω²+Δ²) sin²(√(Ω²+Δ²) t/2)⟩ over Gaussian detunings Δ with
/// standard deviation 2πσ. `nodes` is a floor: long time grids make the
/// integrand oscillate faster in Δ and get more nodes, and beyond
/// 2048 Gauss–Hermite nodes composite Gauss–Legendre panels take over.
pub fn rabi_trace(omega: f64, sigma: f64, times: &[f64], nodes: usize) -> Result<RabiTrace> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid(format!("Rabi frequency must be positive, got {omega}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("detuning spread must be non-negative, got {sigma}")));
    }
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::invalid(format!("time grid contains invalid value {t}")));
    }
    let single = |t: f64, delta: f64| {
        let w2 = omega * omega + delta * delta;
        let s = (w2.sqrt() * t / 2.0).sin();
        omega * omega / w2 * s * s
    };
    let population = if sigma == 0.0 {
        times.iter().map(|&t| single(t, 0.0)).collect()
    } else {
        let spread = 2.0 * PI * sigma;
        let t_max = times.iter().fold(0.0f64, |a, &t| a.max(t));
        let rule = DetuningRule::new(spread * t_max / 2.0, nodes)?;
        times
            .par_iter()
            .map(|&t| rule.average(spread, |d| single(t, d)).clamp(0.0, 1.0))
            .collect()
    };
    Ok(RabiTrace {
        times: times.to_vec(),
        population,
        omega,
        sigma,
    })
}

/// Hahn-echo model: stretched-exponential decay with T₂ from the field law,
/// times the ESEEM envelope magnitude of the configured host nuclei.
#[derive(Debug, Clone)]
pub struct EchoModel {
    pub analyzer: ZeemanAnalyzer,
    pub pair: LevelPair,
    pub nuclei: Vec<HostNucleus>,
    pub e0: f64,
    pub mims_m: f64,
    /// Evaluated at the field magnitude |B|.
    pub law: T2FieldLaw,
}

/// Decay and modulation of one field.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoCurve {
    pub field: FieldVector,
    pub t2: f64,
    pub taus: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// ESEEM envelope magnitude |V(2τ)|.
    pub modulation: Vec<f64>,
}

impl EchoModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0.is_finite() && self.e0 >= 0.0) {
            return Err(Error::invalid("echo amplitude E0 must be non-negative"));
        }
        if !(self.mims_m.is_finite() && self.mims_m > 0.0) {
            return Err(Error::invalid("Mims exponent must be positive"));
        }
        if !(self.law.t2_zero > 0.0 && self.law.kappa >= 0.0 && self.law.b0.is_finite()) {
            return Err(Error::invalid("T2 law needs T2(0) > 0 and kappa >= 0"));
        }
        Ok(())
    }

    pub fn t2(&self, field: &FieldVector) -> f64 {
        self.law.value(field.magnitude())
    }

    pub fn curve(&self, field: &FieldVector, taus: &[f64]) -> Result<EchoCurve> {
        self.validate()?;
        let moment: Vector3<f64> = self.analyzer.moment_difference(self.pair, field)?;
        let env = two_pulse_envelope(&self.nuclei, field, &moment, taus)?;
        let t2 = self.t2(field);
        let decay = StretchedExponential {
            e0: self.e0,
            t2,
            m: self.mims_m,
        };
        let modulation = env.magnitude();
        let amplitude = taus
            .iter()
            .zip(&modulation)
            .map(|(&t, &v)| decay.value(t) * v)
            .collect();
        Ok(EchoCurve {
            field: *field,
            t2,
            taus: taus.to_vec(),
            amplitude,
            modulation,
        })
    }

    /// E(τ) = E₀ exp(−(2τ/T₂(B))^m) · |V(2τ; B)|.
    pub fn echo_amplitude(&self, tau: f64, field: &FieldVector) -> Result<f64> {
        Ok(self.curve(field, &[tau])?.amplitude[0])
    }
}

/// Echo decays for a sweep of one crystal axis.
///
/// Row `i` belongs to `fields[i]`; `amplitude[i * taus.len() + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoMap {
    /// Swept coordinate (applied value along the sweep axis), T.
    pub sweep: Vec<f64>,
    /// Total field acting on the ion at each sweep point, T.
    pub fields: Vec<FieldVector>,
    pub taus: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub modulation: Vec<f64>,
    pub t2: Vec<f64>,
    pub gamma: f64,
}

impl EchoMap {
    pub fn amplitude_at(&self, i: usize, j: usize) -> f64 {
        self.amplitude[i * self.taus.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.taus.len();
        &self.amplitude[i * n..(i + 1) * n]
    }

    pub fn modulation_row(&self, i: usize) -> &[f64] {
        let n = self.taus.len();
        &self.modulation[i * n..(i + 1) * n]
    }

    /// Trapezoidal area under the decay at sweep point `i`.
    pub fn area(&self, i: usize) -> f64 {
        trapezoid(&self.taus, self.row(i))
    }

    /// Sweep index with the largest decay area.
    pub fn dominant_column(&self) -> Option<usize> {
        (0..self.fields.len()).max_by(|&a, &b| self.area(a).total_cmp(&self.area(b)))
    }

    /// First ESEEM revival at sweep point `i`: the largest modulation sample
    /// within (½, 3⁄2)·T_Y, parabola-refined. `None` at zero field or when
    /// the τ grid does not reach the window.
    pub fn first_revival(&self, i: usize) -> Option<f64> {
        let period = larmor_period(self.fields[i].magnitude(), self.gamma).ok()?.seconds()?;
        let (lo, hi) = (0.5 * period, 1.5 * period);
        if *self.taus.last()? < hi {
            return None;
        }
        let m = self.modulation_row(i);
        let idx = (0..self.taus.len())
            .filter(|&j| self.taus[j] > lo && self.taus[j] < hi)
            .max_by(|&a, &b| m[a].total_cmp(&m[b]))?;
        if idx == 0 || idx + 1 >= m.len() {
            return Some(self.taus[idx]);
        }
        let (ym, y0, yp) = (m[idx - 1], m[idx], m[idx + 1]);
        let denom = ym - 2.0 * y0 + yp;
        let h = 0.5 * (self.taus[idx + 1] - self.taus[idx - 1]);
        let shift = if denom < 0.0 {
            (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        Some(self.taus[idx] + shift * h)
    }

    /// Least-squares line through (T_Y(B), first revival) over the sweep
    /// points where a revival with modulation depth above `min_depth` exists.
    pub fn ridge_regression(&self, min_depth: f64) -> Option<RidgeFit> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..self.fields.len() {
            let depth = 1.0 - self.modulation_row(i).iter().cloned().fold(1.0, f64::min);
            if depth < min_depth {
                continue;
            }
            let Some(period) = larmor_period(self.fields[i].magnitude(), self.gamma)
                .ok()
                .and_then(|p| p.seconds())
            else {
                continue;
            };
            if let Some(t) = self.first_revival(i) {
                xs.push(period);
                ys.push(t);
            }
        }
        RidgeFit::new(&xs, &ys)
    }
}

/// y = slope·x + intercept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl RidgeFit {
    pub fn new(xs: &[f64], ys: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return None;
        }
        let nf = n as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Some(RidgeFit {
            slope,
            intercept: my - slope * mx,
            r_squared,
            points: n,
        })
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Echo map over `sweep` values along crystal axis `axis`, added to the
/// constant `fixed` field (which should already include any lab bias). The
/// model field at each point is the full vector, so its magnitude follows
/// B = sqrt(|fixed|² + B_swept²) for an orthogonal offset.
pub fn echo_map(
    model: &EchoModel,
    axis: usize,
    sweep: &[f64],
    fixed: &FieldVector,
    taus: &[f64],
) -> Result<EchoMap> {
    if axis >= 3 {
        return Err(Error::invalid(format!("sweep axis {axis} out of range")));
    }
    if sweep.is_empty() || taus.is_empty() {
        return Err(Error::invalid("echo map needs a non-empty sweep and delay grid"));
    }
    model.validate()?;
    let fields = sweep
        .iter()
        .map(|&v| {
            let mut d = Vector3::zeros();
            d[axis] = v;
            Ok(*fixed + FieldVector::from_vector(d)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let curves = fields
        .par_iter()
        .map(|f| model.curve(f, taus))
        .collect::<Result<Vec<_>>>()?;
    let gamma = model
        .nuclei
        .first()
        .map(|n| n.gamma)
        .unwrap_or(model.analyzer.system().gamma_host);
    Ok(EchoMap {
        sweep: sweep.to_vec(),
        fields,
        taus: taus.to_vec(),
        amplitude: curves.iter().flat_map(|c| c.amplitude.iter().copied()).collect(),
        modulation: curves.iter().flat_map(|c| c.modulation.iter().copied()).collect(),
        t2: curves.iter().map(|c| c.t2).collect(),
        gamma,
    })
}
