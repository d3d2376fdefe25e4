//! Physical constants in the units used by the crate.

/// Bohr magneton over Planck's constant, Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 13.996_245e9;

/// Bohr magneton, J/T.
pub const BOHR_MAGNETON_J_PER_T: f64 = 9.274_010_078_3e-24;

/// μ₀ / 4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1.0e-7;

/// Gyromagnetic ratio of ⁸⁹Y (magnitude), Hz/T.
pub const GAMMA_Y89_HZ_PER_T: f64 = 2.095e6;

/// Gaussian FWHM = this factor × standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
