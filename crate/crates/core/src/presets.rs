//! Shipped default model for the ¹⁷¹Yb³⁺ site-II ground state and a few
//! reference experimental constants.
//!
//! The hyperfine principal values reproduce the zero-field ladder
//! 528 / 655 / 1841.55 MHz. The g tensor and the common A/g orientation
//! (a rotation of 55.9° about b) are illustrative: they put the minimum of
//! the 2.497 GHz transition gradient in the D1–D2 plane at 55.9° from D1.
//! The host nuclei are likewise illustrative, not crystallographic.

use nalgebra::Vector3;

use crate::constants::GAMMA_Y89_HZ_PER_T;
use crate::eseem::HostNucleus;
use crate::spin::{hyperfine_from_ladder, rot_z, InteractionTensor, LevelPair, LevelTensors, SpinSystem};
use crate::Result;

/// Zero-field gaps (E₂−E₁, E₃−E₂, E₄−E₃), Hz.
pub const GROUND_LADDER_HZ: [f64; 3] = [528e6, 655e6, 1841.55e6];

/// Principal g values along (x', y', z').
pub const GROUND_G: [f64; 3] = [0.2, 1.6, 6.0];

/// Rotation of the principal frame about b, degrees.
pub const PRINCIPAL_ANGLE_DEG: f64 = 55.9;

/// Rabi angular frequency reached in the experiment, rad/s.
pub const RABI_OMEGA: f64 = 2.0 * std::f64::consts::PI * 560e3;
/// Inhomogeneous spin linewidth (FWHM), Hz.
pub const SPIN_INHOMOGENEOUS_FWHM_HZ: f64 = 680e3;

/// Coherence-time field law: T₂(0) (s), κ (Hz/T), B₀ (T).
pub const T2_ZERO: f64 = 10.3e-3;
pub const KAPPA: f64 = 1.48e6;
pub const B0: f64 = 14.1e-6;

/// Lab bias compensated by an applied D2 field of −155 µT.
pub const LAB_BIAS_D2: f64 = 155e-6;

/// The 2.497 GHz clock transition |2⟩–|4⟩.
pub fn clock_pair() -> LevelPair {
    LevelPair { lower: 1, upper: 3 }
}

pub fn ground_tensors() -> Result<LevelTensors> {
    let orientation = rot_z(PRINCIPAL_ANGLE_DEG.to_radians());
    let a = InteractionTensor::new(hyperfine_from_ladder(GROUND_LADDER_HZ), orientation)?;
    let g = InteractionTensor::new(GROUND_G, orientation)?;
    Ok(LevelTensors::new(a, g))
}

/// Ground-state model with no excited level configured.
pub fn default_system() -> Result<SpinSystem> {
    SpinSystem::new(ground_tensors()?, None, GAMMA_Y89_HZ_PER_T)
}

/// Distances (nm) and sign pattern of the default ⁸⁹Y shell.
const NUCLEUS_DISTANCES_NM: [f64; 6] = [0.365, 0.38, 0.41, 0.43, 0.48, 0.53];
const NUCLEUS_SIGNS: [(f64, f64); 6] = [
    (1.0, 1.0),
    (1.0, -1.0),
    (-1.0, 1.0),
    (-1.0, -1.0),
    (1.0, 1.0),
    (-1.0, -1.0),
];

/// Direction of the default nucleus `i`: in the plane spanned by y' and b,
/// at the magic angle from b, so its dipolar field from an in-plane moment
/// along y' points along b.
pub fn nucleus_direction(i: usize) -> Vector3<f64> {
    let phi = PRINCIPAL_ANGLE_DEG.to_radians();
    let y_prime = Vector3::new(-phi.sin(), phi.cos(), 0.0);
    let (sy, sz) = NUCLEUS_SIGNS[i % NUCLEUS_SIGNS.len()];
    y_prime * (sy / 3f64.sqrt()) + Vector3::z() * (sz * (2.0f64 / 3.0).sqrt())
}

/// Six ⁸⁹Y nuclei at 0.365–0.53 nm.
pub fn default_nuclei() -> Result<Vec<HostNucleus>> {
    NUCLEUS_DISTANCES_NM
        .iter()
        .enumerate()
        .map(|(i, d)| HostNucleus::at(nucleus_direction(i) * (d * 1e-9), GAMMA_Y89_HZ_PER_T))
        .collect()
}
