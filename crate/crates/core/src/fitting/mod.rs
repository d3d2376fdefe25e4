//! Least-squares fits of the echo-decay and coherence-time models.
//!
//! * Stretched exponential (Mims): E(τ) = E₀ exp(−(2τ/T₂)^m)
//! * Field law: T₂(B) = 1 / (1/T₂(0) + πκ|B − B₀|)
//!
//! Both fits run on data rescaled to order one, so results do not depend on
//! the unit system of the input. Uncertainties come from the linearised
//! covariance (JᵀJ)⁻¹ scaled by the reduced χ²; treat them as approximate.

mod lm;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};

pub use lm::{normal_inverse, LevenbergMarquardt, LmSolution, LmStatus};

use crate::optimize::NelderMead;
use crate::{Error, Result};

/// Minimum number of samples for a decay fit.
pub const MIN_DECAY_POINTS: usize = 5;
/// Minimum number of (B, T₂) points for the field-law fit.
pub const MIN_FIELD_POINTS: usize = 4;

/// Sampled echo decay.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    taus: Vec<f64>,
    amplitudes: Vec<f64>,
    sigmas: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(taus: Vec<f64>, amplitudes: Vec<f64>, sigmas: Option<Vec<f64>>) -> Result<Self> {
        if taus.len() != amplitudes.len() {
            return Err(Error::invalid(format!(
                "{} delays but {} amplitudes",
                taus.len(),
                amplitudes.len()
            )));
        }
        if let Some(s) = &sigmas {
            if s.len() != taus.len() {
                return Err(Error::invalid("uncertainty column has the wrong length"));
            }
            if let Some(i) = s.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::invalid(format!("uncertainty at index {i} must be positive")));
            }
        }
        if let Some(i) = taus
            .iter()
            .chain(&amplitudes)
            .position(|x| !x.is_finite())
        {
            return Err(Error::invalid(format!("non-finite value at index {}", i % taus.len().max(1))));
        }
        if let Some(i) = taus.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "delays must be strictly increasing (index {})",
                i + 1
            )));
        }
        Ok(DecayCurve {
            taus,
            amplitudes,
            sigmas,
        })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn sigmas(&self) -> Option<&[f64]> {
        self.sigmas.as_deref()
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// E₀ exp(−(2τ/T₂)^m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchedExponential {
    pub e0: f64,
    pub t2: f64,
    pub m: f64,
}

impl StretchedExponential {
    pub fn value(&self, tau: f64) -> f64 {
        self.e0 * (-(2.0 * tau / self.t2).powf(self.m)).exp()
    }

    /// ∂E/∂(E₀, T₂, m).
    pub fn gradient(&self, tau: f64) -> [f64; 3] {
        let x = 2.0 * tau / self.t2;
        if x <= 0.0 {
            return [1.0, 0.0, 0.0];
        }
        let u = x.powf(self.m);
        let e = (-u).exp();
        [e, self.e0 * e * u * self.m / self.t2, -self.e0 * e * u * x.ln()]
    }
}

/// 1/(1/T₂(0) + πκ|B − B₀|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2FieldLaw {
    pub t2_zero: f64,
    pub kappa: f64,
    pub b0: f64,
}

impl T2FieldLaw {
    pub fn value(&self, b: f64) -> f64 {
        1.0 / (1.0 / self.t2_zero + PI * self.kappa * (b - self.b0).abs())
    }

    /// ∂T₂/∂(T₂(0), κ, B₀); the kink uses the zero subgradient.
    pub fn gradient(&self, b: f64) -> [f64; 3] {
        let d = b - self.b0;
        let denom = 1.0 / self.t2_zero + PI * self.kappa * d.abs();
        let inv2 = 1.0 / (denom * denom);
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        [
            inv2 / (self.t2_zero * self.t2_zero),
            -PI * d.abs() * inv2,
            PI * self.kappa * sign * inv2,
        ]
    }
}

/// Estimated value with 1-σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub status: LmStatus,
    /// Weighted residual norm sqrt(Σ r²).
    pub residual_norm: f64,
    pub reduced_chi_square: f64,
    pub degrees_of_freedom: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchedExpFit {
    pub e0: Estimate,
    pub t2: Estimate,
    pub m: Estimate,
    /// Order (E₀, T₂, m), SI units of the input.
    pub covariance: Matrix3<f64>,
    pub diagnostics: FitDiagnostics,
}

impl StretchedExpFit {
    pub fn model(&self) -> StretchedExponential {
        StretchedExponential {
            e0: self.e0.value,
            t2: self.t2.value,
            m: self.m.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2FieldFit {
    pub t2_zero: Estimate,
    pub kappa: Estimate,
    pub b0: Estimate,
    /// Order (T₂(0), κ, B₀); B₀ row/column are zero when it was held fixed.
    pub covariance: Matrix3<f64>,
    pub b0_fixed: bool,
    pub diagnostics: FitDiagnostics,
}

impl T2FieldFit {
    pub fn model(&self) -> T2FieldLaw {
        T2FieldLaw {
            t2_zero: self.t2_zero.value,
            kappa: self.kappa.value,
            b0: self.b0.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchedExpOptions {
    pub initial: Option<StretchedExponential>,
    pub m_bounds: (f64, f64),
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for StretchedExpOptions {
    fn default() -> Self {
        StretchedExpOptions {
            initial: None,
            m_bounds: (0.5, 4.0),
            max_iterations: 500,
            gradient_tolerance: 1e-10,
        }
    }
}

/// Initial (E₀, T₂, m): the first amplitude, twice the delay at which the
/// curve first drops below E₀/e (log-linear extrapolation when it never
/// does), and m = 1.
pub fn stretched_exp_initial_guess(curve: &DecayCurve) -> StretchedExponential {
    let taus = curve.taus();
    let amps = curve.amplitudes();
    let e0 = amps[0];
    let target = e0 / std::f64::consts::E;
    let t2 = match (1..amps.len()).find(|&i| amps[i] < target) {
        Some(i) => {
            // linear interpolation between the bracketing samples
            let (t0, t1, a0, a1) = (taus[i - 1], taus[i], amps[i - 1], amps[i]);
            let t = if a0 != a1 {
                t0 + (a0 - target) * (t1 - t0) / (a0 - a1)
            } else {
                t1
            };
            2.0 * t
        }
        None => {
            let last = *amps.last().unwrap_or(&e0);
            let tl = *taus.last().unwrap_or(&1.0);
            let ratio = e0 / last;
            if last > 0.0 && ratio > 1.0 {
                2.0 * tl / ratio.ln()
            } else {
                8.0 * tl.abs().max(f64::MIN_POSITIVE)
            }
        }
    };
    let t2 = if t2.is_finite() && t2 > 0.0 {
        t2
    } else {
        taus.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE)
    };
    StretchedExponential { e0, t2, m: 1.0 }
}

fn weights(sigmas: Option<&[f64]>, n: usize, fallback: f64) -> Vec<f64> {
    match sigmas {
        Some(s) => s.iter().map(|x| 1.0 / x).collect(),
        None => vec![1.0 / fallback; n],
    }
}

/// Weighted least-squares fit of the stretched exponential.
pub fn fit_stretched_exponential(
    curve: &DecayCurve,
    options: &StretchedExpOptions,
) -> Result<StretchedExpFit> {
    let n = curve.len();
    if n < MIN_DECAY_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_DECAY_POINTS,
            got: n,
        });
    }
    let (m_lo, m_hi) = options.m_bounds;
    if !(m_lo.is_finite() && m_hi.is_finite() && 0.0 < m_lo && m_lo <= m_hi) {
        return Err(Error::invalid("Mims exponent bounds must satisfy 0 < min <= max"));
    }
    let amps = curve.amplitudes();
    let a_scale = amps.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let spread = amps.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - amps.iter().cloned().fold(f64::INFINITY, f64::min);
    if a_scale == 0.0 || spread <= 1e-12 * a_scale {
        return Err(Error::DegenerateCurve);
    }
    let t_scale = curve.taus().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if t_scale == 0.0 {
        return Err(Error::invalid("delays are all zero"));
    }

    let init = options.initial.unwrap_or_else(|| stretched_exp_initial_guess(curve));
    let x: Vec<f64> = curve.taus().iter().map(|t| t / t_scale).collect();
    let y: Vec<f64> = amps.iter().map(|a| a / a_scale).collect();
    // weights act on normalised amplitudes
    let w: Vec<f64> = weights(curve.sigmas(), n, 1.0)
        .into_iter()
        .map(|w| if curve.sigmas().is_some() { w * a_scale } else { w })
        .collect();

    let residuals = |p: &[f64]| {
        let model = StretchedExponential {
            e0: p[0],
            t2: p[1],
            m: p[2],
        };
        let r = DVector::from_iterator(n, (0..n).map(|i| w[i] * (model.value(x[i]) - y[i])));
        let j = DMatrix::from_fn(n, 3, |i, c| w[i] * model.gradient(x[i])[c]);
        (r, j)
    };
    let p0 = [
        init.e0 / a_scale,
        (init.t2 / t_scale).max(1e-6),
        init.m.clamp(m_lo, m_hi),
    ];
    let lm = LevenbergMarquardt {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        ..Default::default()
    };
    let sol = lm.minimize(
        residuals,
        &p0,
        &[f64::NEG_INFINITY, 1e-12, m_lo],
        &[f64::INFINITY, f64::INFINITY, m_hi],
    );
    if !sol.converged() {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
            best_value: sol.cost,
            best_point: vec![sol.x[0] * a_scale, sol.x[1] * t_scale, sol.x[2]],
        });
    }

    let (r, j) = residuals(&sol.x);
    let dof = n.saturating_sub(3);
    let chi2 = r.norm_squared();
    let reduced = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let cov_n = normal_inverse(&j) * reduced;
    let scale = [a_scale, t_scale, 1.0];
    let covariance = Matrix3::from_fn(|a, b| cov_n[(a, b)] * scale[a] * scale[b]);
    // residual norm reported in the input's own weighting
    let residual_norm = if curve.sigmas().is_some() {
        chi2.sqrt()
    } else {
        chi2.sqrt() * a_scale
    };
    let est = |i: usize| Estimate {
        value: sol.x[i] * scale[i],
        sigma: covariance[(i, i)].max(0.0).sqrt(),
    };
    Ok(StretchedExpFit {
        e0: est(0),
        t2: est(1),
        m: est(2),
        covariance,
        diagnostics: FitDiagnostics {
            iterations: sol.iterations,
            status: sol.status,
            residual_norm,
            reduced_chi_square: if curve.sigmas().is_some() {
                reduced
            } else {
                reduced * a_scale * a_scale
            },
            degrees_of_freedom: dof,
        },
    })
}

/// One (B, T₂) sample with optional uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub field: f64,
    pub t2: f64,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2FieldOptions {
    pub initial: Option<T2FieldLaw>,
    /// Hold B₀ at this value instead of fitting it.
    pub fixed_b0: Option<f64>,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for T2FieldOptions {
    fn default() -> Self {
        T2FieldOptions {
            initial: None,
            fixed_b0: None,
            max_iterations: 500,
            gradient_tolerance: 1e-10,
        }
    }
}

/// Initial (T₂(0), κ, B₀): B₀ at the largest T₂, T₂(0) that largest value,
/// κ from the two-point slope to the sample farthest from B₀.
pub fn t2_field_initial_guess(points: &[FieldPoint]) -> T2FieldLaw {
    let best = points
        .iter()
        .max_by(|a, b| a.t2.total_cmp(&b.t2))
        .copied()
        .unwrap_or(FieldPoint {
            field: 0.0,
            t2: 1.0,
            sigma: None,
        });
    let far = points
        .iter()
        .max_by(|a, b| (a.field - best.field).abs().total_cmp(&(b.field - best.field).abs()))
        .copied()
        .unwrap_or(best);
    let db = (far.field - best.field).abs();
    let kappa = if db > 0.0 && far.t2 > 0.0 {
        ((1.0 / far.t2 - 1.0 / best.t2) / (PI * db)).max(0.0)
    } else {
        0.0
    };
    T2FieldLaw {
        t2_zero: best.t2,
        kappa,
        b0: best.field,
    }
}

/// Fit the empirical T₂(B) law.
///
/// B₀ is fitted only when samples lie on both sides of the initial kink
/// estimate; otherwise it is held at 0 (or `fixed_b0`) and a warning is
/// logged. A Nelder–Mead polish from the Levenberg–Marquardt optimum
/// handles the non-smooth |B − B₀| term.
pub fn fit_t2_vs_field(points: &[FieldPoint], options: &T2FieldOptions) -> Result<T2FieldFit> {
    let n = points.len();
    if n < MIN_FIELD_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIELD_POINTS,
            got: n,
        });
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.field.is_finite() && p.t2.is_finite() && p.t2 > 0.0) {
            return Err(Error::invalid(format!("point {i}: field must be finite and T2 positive")));
        }
        if let Some(s) = p.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!("point {i}: uncertainty must be positive")));
            }
        }
    }
    let weighted = points.iter().all(|p| p.sigma.is_some());

    let init = options.initial.unwrap_or_else(|| t2_field_initial_guess(points));
    let (b0_fixed, fixed_value) = match options.fixed_b0 {
        Some(b) => (true, b),
        None => {
            let below = points.iter().any(|p| p.field < init.b0);
            let above = points.iter().any(|p| p.field > init.b0);
            if below && above {
                (false, 0.0)
            } else {
                log::warn!("field samples do not span both sides of the kink; holding B0 = 0");
                (true, 0.0)
            }
        }
    };

    let b_scale = points.iter().fold(0.0f64, |a, p| a.max(p.field.abs())).max(if b0_fixed {
        fixed_value.abs()
    } else {
        0.0
    });
    let b_scale = if b_scale > 0.0 { b_scale } else { 1.0 };
    let t_scale = points.iter().fold(0.0f64, |a, p| a.max(p.t2));
    let x: Vec<f64> = points.iter().map(|p| p.field / b_scale).collect();
    let y: Vec<f64> = points.iter().map(|p| p.t2 / t_scale).collect();
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted { t_scale / p.sigma.unwrap_or(1.0) } else { 1.0 })
        .collect();
    let kappa_scale = 1.0 / (t_scale * b_scale);
    let fixed_n = fixed_value / b_scale;

    let law = |p: &[f64]| T2FieldLaw {
        t2_zero: p[0],
        kappa: p[1],
        b0: if b0_fixed { fixed_n } else { p[2] },
    };
    let free = if b0_fixed { 2 } else { 3 };
    let residuals = |p: &[f64]| {
        let model = law(p);
        let r = DVector::from_iterator(n, (0..n).map(|i| w[i] * (model.value(x[i]) - y[i])));
        let j = DMatrix::from_fn(n, free, |i, c| w[i] * model.gradient(x[i])[c]);
        (r, j)
    };
    let cost = |p: &[f64]| {
        if p[0] <= 0.0 || p[1] < 0.0 {
            return f64::INFINITY;
        }
        0.5 * residuals(p).0.norm_squared()
    };

    let mut p0 = vec![init.t2_zero / t_scale, (init.kappa / kappa_scale).max(0.0)];
    if !b0_fixed {
        p0.push(init.b0 / b_scale);
    }
    let lower = [1e-12, 0.0, f64::NEG_INFINITY];
    let upper = [f64::INFINITY; 3];
    let lm = LevenbergMarquardt {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        ..Default::default()
    };
    let sol = lm.minimize(residuals, &p0, &lower[..free], &upper[..free]);
    if !sol.converged() {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
            best_value: sol.cost,
            best_point: sol.x.clone(),
        });
    }

    let mut best = sol.x.clone();
    let mut best_cost = cost(&best);
    let steps: Vec<f64> = best.iter().map(|v| 0.05 * v.abs().max(1e-3)).collect();
    let polished = NelderMead::new(steps, 1e-13)
        .with_max_iterations(4000)
        .minimize(cost, &best);
    if polished.value < best_cost * (1.0 - 1e-10) {
        best = polished.x;
        best_cost = polished.value;
        // LM again from the polished point in case the kink was the obstacle
        let again = lm.minimize(residuals, &best, &lower[..free], &upper[..free]);
        if again.converged() && cost(&again.x) < best_cost {
            best = again.x;
        }
    }

    let (r, j) = residuals(&best);
    let dof = n.saturating_sub(free);
    let chi2 = r.norm_squared();
    let reduced = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let cov_n = normal_inverse(&j) * reduced;
    let scale = [t_scale, kappa_scale, b_scale];
    let covariance = Matrix3::from_fn(|a, b| {
        if a < free && b < free {
            cov_n[(a, b)] * scale[a] * scale[b]
        } else {
            0.0
        }
    });
    let model = law(&best);
    let est = |i: usize, v: f64| Estimate {
        value: v * scale[i],
        sigma: covariance[(i, i)].max(0.0).sqrt(),
    };
    Ok(T2FieldFit {
        t2_zero: est(0, model.t2_zero),
        kappa: est(1, model.kappa),
        b0: est(2, model.b0),
        covariance,
        b0_fixed,
        diagnostics: FitDiagnostics {
            iterations: sol.iterations,
            status: sol.status,
            residual_norm: if weighted { chi2.sqrt() } else { chi2.sqrt() * t_scale },
            reduced_chi_square: if weighted { reduced } else { reduced * t_scale * t_scale },
            degrees_of_freedom: dof,
        },
    })
}

/// Loaded quality factor Q = f₀/Δf.
pub fn resonator_q(f0: f64, fwhm: f64) -> Result<f64> {
    if !(fwhm.is_finite() && fwhm > 0.0) {
        return Err(Error::invalid(format!("linewidth must be positive, got {fwhm}")));
    }
    if !f0.is_finite() {
        return Err(Error::invalid("resonance frequency must be finite"));
    }
    Ok(f0 / fwhm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_curve(t2: f64, m: f64, n: usize) -> DecayCurve {
        let model = StretchedExponential { e0: 1.0, t2, m };
        let taus: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 * t2 / n as f64).collect();
        let amps = taus.iter().map(|&t| model.value(t)).collect();
        DecayCurve::new(taus, amps, None).unwrap()
    }

    #[test]
    fn noiseless_exponential_is_recovered_exactly() {
        let curve = exp_curve(5e-3, 1.0, 40);
        let fit = fit_stretched_exponential(&curve, &StretchedExpOptions::default()).unwrap();
        assert!((fit.t2.value / 5e-3 - 1.0).abs() < 1e-8, "{fit:?}");
        assert!((fit.m.value - 1.0).abs() < 1e-8);
        assert!((fit.e0.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_short_and_constant_curves() {
        let short = DecayCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.2], None).unwrap();
        assert!(matches!(
            fit_stretched_exponential(&short, &StretchedExpOptions::default()),
            Err(Error::InsufficientData { needed: 5, got: 3 })
        ));
        let flat = DecayCurve::new((0..6).map(f64::from).collect(), vec![0.3; 6], None).unwrap();
        assert_eq!(
            fit_stretched_exponential(&flat, &StretchedExpOptions::default()),
            Err(Error::DegenerateCurve)
        );
    }

    #[test]
    fn curve_validation() {
        assert!(DecayCurve::new(vec![0.0, 0.0], vec![1.0, 1.0], None).is_err());
        assert!(DecayCurve::new(vec![0.0, 1.0], vec![1.0], None).is_err());
        assert!(DecayCurve::new(vec![0.0, 1.0], vec![1.0, 0.5], Some(vec![0.1, 0.0])).is_err());
        assert!(DecayCurve::new(vec![0.0, f64::NAN], vec![1.0, 0.5], None).is_err());
    }

    #[test]
    fn field_law_round_trip() {
        let truth = T2FieldLaw {
            t2_zero: 10.3e-3,
            kappa: 1.48e6,
            b0: 14.1e-6,
        };
        let points: Vec<FieldPoint> = (-10..=10)
            .map(|i| {
                let b = i as f64 * 30e-6;
                FieldPoint {
                    field: b,
                    t2: truth.value(b),
                    sigma: None,
                }
            })
            .collect();
        let fit = fit_t2_vs_field(&points, &T2FieldOptions::default()).unwrap();
        assert!(!fit.b0_fixed);
        assert!((fit.t2_zero.value / truth.t2_zero - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.kappa.value / truth.kappa - 1.0).abs() < 1e-6);
        assert!((fit.b0.value / truth.b0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_sided_data_holds_b0() {
        let truth = T2FieldLaw {
            t2_zero: 10e-3,
            kappa: 1e6,
            b0: 0.0,
        };
        let points: Vec<FieldPoint> = (0..8)
            .map(|i| {
                let b = i as f64 * 50e-6;
                FieldPoint {
                    field: b,
                    t2: truth.value(b),
                    sigma: None,
                }
            })
            .collect();
        let fit = fit_t2_vs_field(&points, &T2FieldOptions::default()).unwrap();
        assert!(fit.b0_fixed);
        assert_eq!(fit.b0.value, 0.0);
        assert!((fit.kappa.value / 1e6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quality_factor() {
        assert!((resonator_q(2497e6, 4.5e6).unwrap() - 554.9).abs() < 0.1);
        assert_eq!(resonator_q(3.0, 3.0).unwrap(), 1.0);
        assert!(resonator_q(1.0, 0.0).is_err());
    }
}
