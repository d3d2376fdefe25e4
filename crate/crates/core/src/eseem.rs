//! Two-pulse ESEEM from superhyperfine coupling to host nuclei.
//!
//! The dopant's field-induced moment couples to each nearby host nucleus
//! through the point-dipole interaction. For a nucleus with secular and
//! pseudo-secular couplings `a`, `b` (angular units) and Larmor frequency
//! ω_I, the two-pulse echo is modulated by
//!
//! ```text
//! V_j(2τ) = 1 − (k_j/2)(1 − cos ω_α τ)(1 − cos ω_β τ)
//! ω_α,β   = sqrt((ω_I ± a/2)² + (b/2)²),   k_j = (b ω_I / (ω_α ω_β))²
//! ```
//!
//! and the envelope of several nuclei is the product of the single-nucleus
//! factors. In the weak-coupling limit all modulation refocuses at multiples
//! of the host Larmor period, and since the couplings scale with the
//! dopant moment the modulation vanishes where that moment is quenched.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::constants::{BOHR_MAGNETON_J_PER_T, MU0_OVER_4PI};
use crate::spin::{FieldVector, LevelPair};
use crate::zeeman::ZeemanAnalyzer;
use crate::{Error, Result};

/// Closest allowed distance of a positional nucleus, m.
pub const MIN_NUCLEUS_DISTANCE: f64 = 0.15e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Position relative to the dopant, m, crystal frame.
    Position(Vector3<f64>),
    /// Fixed couplings, Hz.
    Explicit { secular: f64, pseudo_secular: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostNucleus {
    pub coupling: Coupling,
    /// Gyromagnetic ratio magnitude, Hz/T.
    pub gamma: f64,
}

impl HostNucleus {
    pub fn at(position: Vector3<f64>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !position.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("nucleus position must be finite"));
        }
        let r = position.norm();
        if r <= MIN_NUCLEUS_DISTANCE {
            return Err(Error::invalid(format!(
                "nucleus at {:.4} nm is closer than {:.2} nm",
                r * 1e9,
                MIN_NUCLEUS_DISTANCE * 1e9
            )));
        }
        Ok(HostNucleus {
            coupling: Coupling::Position(position),
            gamma,
        })
    }

    pub fn explicit(secular: f64, pseudo_secular: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(secular.is_finite() && pseudo_secular.is_finite()) {
            return Err(Error::invalid("couplings must be finite"));
        }
        Ok(HostNucleus {
            coupling: Coupling::Explicit {
                secular,
                pseudo_secular,
            },
            gamma,
        })
    }

    /// Couplings for a given dopant moment (μ_B) and field direction.
    pub fn couplings(&self, moment: &Vector3<f64>, direction: &Vector3<f64>) -> Result<Couplings> {
        match self.coupling {
            Coupling::Explicit {
                secular,
                pseudo_secular,
            } => Ok(Couplings {
                secular,
                pseudo_secular: pseudo_secular.abs(),
            }),
            Coupling::Position(_) => dipolar_couplings(moment, self, direction),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("gyromagnetic ratio must be positive, got {gamma}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LarmorPeriod {
    Finite(f64),
    /// Zero field: no precession, no revival.
    Unbounded,
}

impl LarmorPeriod {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            LarmorPeriod::Finite(t) => Some(*t),
            LarmorPeriod::Unbounded => None,
        }
    }
}

/// T = 1/(B γ).
pub fn larmor_period(field_magnitude: f64, gamma: f64) -> Result<LarmorPeriod> {
    check_gamma(gamma)?;
    if !field_magnitude.is_finite() || field_magnitude < 0.0 {
        return Err(Error::invalid(format!(
            "field magnitude must be finite and non-negative, got {field_magnitude}"
        )));
    }
    if field_magnitude == 0.0 {
        Ok(LarmorPeriod::Unbounded)
    } else {
        Ok(LarmorPeriod::Finite(1.0 / (field_magnitude * gamma)))
    }
}

/// Secular (along B) and pseudo-secular (perpendicular) couplings, Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub secular: f64,
    pub pseudo_secular: f64,
}

/// Point-dipole couplings of a positional nucleus to a dopant moment
/// `moment` (units of μ_B), projected on the unit field `direction`.
///
/// The dipolar field of the moment at the nucleus, times γ, gives the
/// coupling vector h; a = h·b̂ and b = |h − a b̂|.
pub fn dipolar_couplings(
    moment: &Vector3<f64>,
    nucleus: &HostNucleus,
    direction: &Vector3<f64>,
) -> Result<Couplings> {
    let Coupling::Position(r) = nucleus.coupling else {
        return Err(Error::invalid("dipolar couplings need a positional nucleus"));
    };
    let dist = r.norm();
    if dist == 0.0 || !dist.is_finite() {
        return Err(Error::invalid("nucleus distance must be positive"));
    }
    if !moment.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("moment must be finite"));
    }
    let dn = direction.norm();
    if dn == 0.0 {
        return Ok(Couplings {
            secular: 0.0,
            pseudo_secular: 0.0,
        });
    }
    let b_hat = direction / dn;
    let r_hat = r / dist;
    let mu = moment * BOHR_MAGNETON_J_PER_T;
    let field = (r_hat * (3.0 * r_hat.dot(&mu)) - mu) * (MU0_OVER_4PI / dist.powi(3));
    let h = field * nucleus.gamma;
    let secular = h.dot(&b_hat);
    let pseudo_secular = (h - b_hat * secular).norm();
    Ok(Couplings {
        secular,
        pseudo_secular,
    })
}

/// Modulation parameters of one nucleus, angular units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearFrequencies {
    pub omega_i: f64,
    pub omega_alpha: f64,
    pub omega_beta: f64,
    /// Modulation depth k ∈ [0, 1].
    pub depth: f64,
}

impl NuclearFrequencies {
    /// From couplings in Hz and the nuclear Larmor frequency ω_I in rad/s.
    pub fn new(couplings: &Couplings, omega_i: f64) -> Self {
        let a = 2.0 * PI * couplings.secular;
        let b = 2.0 * PI * couplings.pseudo_secular;
        let omega_alpha = ((omega_i + a / 2.0).powi(2) + (b / 2.0).powi(2)).sqrt();
        let omega_beta = ((omega_i - a / 2.0).powi(2) + (b / 2.0).powi(2)).sqrt();
        let denom = omega_alpha * omega_beta;
        let depth = if omega_i == 0.0 || denom == 0.0 {
            0.0
        } else {
            ((b * omega_i / denom).powi(2)).min(1.0)
        };
        NuclearFrequencies {
            omega_i,
            omega_alpha,
            omega_beta,
            depth,
        }
    }

    /// V(2τ) of this nucleus alone.
    pub fn factor(&self, tau: f64) -> f64 {
        1.0 - 0.5
            * self.depth
            * (1.0 - (self.omega_alpha * tau).cos())
            * (1.0 - (self.omega_beta * tau).cos())
    }
}

/// Two-pulse envelope sampled on a τ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EseemEnvelope {
    pub taus: Vec<f64>,
    /// Signed product Π_j V_j(2τ); lies in [1 − 2k, 1] per factor.
    pub values: Vec<f64>,
    /// Per-nucleus modulation depths k_j.
    pub depths: Vec<f64>,
    pub nuclei: Vec<NuclearFrequencies>,
}

impl EseemEnvelope {
    /// Observed echo magnitude |V| ∈ [0, 1].
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }

    /// 1 − min |V| over the grid.
    pub fn modulation_depth(&self) -> f64 {
        1.0 - self.values.iter().map(|v| v.abs()).fold(1.0, f64::min)
    }

    /// Position of the largest |V| with `lo < τ < hi`, refined by a parabola
    /// through the neighbouring samples.
    pub fn peak_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let mag = self.magnitude();
        let idx = (0..self.taus.len())
            .filter(|&i| self.taus[i] > lo && self.taus[i] < hi)
            .max_by(|&i, &j| mag[i].total_cmp(&mag[j]))?;
        if idx == 0 || idx + 1 >= self.taus.len() {
            return Some(self.taus[idx]);
        }
        let (ym, y0, yp) = (mag[idx - 1], mag[idx], mag[idx + 1]);
        let denom = ym - 2.0 * y0 + yp;
        let h = 0.5 * (self.taus[idx + 1] - self.taus[idx - 1]);
        let shift = if denom < 0.0 {
            (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        Some(self.taus[idx] + shift * h)
    }
}

/// Product-rule two-pulse envelope for `nuclei` at `field`, given the
/// dopant moment difference `moment` (μ_B) between the two electron states.
pub fn two_pulse_envelope(
    nuclei: &[HostNucleus],
    field: &FieldVector,
    moment: &Vector3<f64>,
    taus: &[f64],
) -> Result<EseemEnvelope> {
    if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("delays must be finite and non-negative"));
    }
    let magnitude = field.magnitude();
    let direction = if magnitude > 0.0 {
        field.vector() / magnitude
    } else {
        Vector3::zeros()
    };
    let freqs = nuclei
        .iter()
        .map(|n| {
            let c = n.couplings(moment, &direction)?;
            Ok(NuclearFrequencies::new(&c, 2.0 * PI * magnitude * n.gamma))
        })
        .collect::<Result<Vec<_>>>()?;
    let values = taus
        .par_iter()
        .map(|&t| freqs.iter().map(|f| f.factor(t)).product::<f64>())
        .collect();
    Ok(EseemEnvelope {
        taus: taus.to_vec(),
        values,
        depths: freqs.iter().map(|f| f.depth).collect(),
        nuclei: freqs,
    })
}

/// One point of [`moment_vs_field_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentScanPoint {
    pub field: FieldVector,
    /// Moment difference upper − lower, μ_B.
    pub moment: Vector3<f64>,
    pub larmor: LarmorPeriod,
    pub envelope: EseemEnvelope,
}

impl MomentScanPoint {
    pub fn moment_magnitude(&self) -> f64 {
        self.moment.norm()
    }

    pub fn modulation_depth(&self) -> f64 {
        self.envelope.modulation_depth()
    }
}

/// Effective moment and envelope at each field of a path.
pub fn moment_vs_field_scan(
    analyzer: &ZeemanAnalyzer,
    pair: LevelPair,
    path: &[FieldVector],
    nuclei: &[HostNucleus],
    taus: &[f64],
) -> Result<Vec<MomentScanPoint>> {
    let gamma = nuclei
        .first()
        .map(|n| n.gamma)
        .unwrap_or(analyzer.system().gamma_host);
    path.par_iter()
        .map(|field| {
            let moment = analyzer.moment_difference(pair, field)?;
            Ok(MomentScanPoint {
                field: *field,
                moment,
                larmor: larmor_period(field.magnitude(), gamma)?,
                envelope: two_pulse_envelope(nuclei, field, &moment, taus)?,
            })
        })
        .collect()
}
