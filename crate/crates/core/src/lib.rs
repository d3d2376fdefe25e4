//! Spin-Hamiltonian analysis of low-field hyperfine clock transitions in
//! S = 1/2, I = 1/2 Kramers ions (the ¹⁷¹Yb³⁺ case).
//!
//! The crate is organised bottom-up:
//!
//! * [`spin`] builds and diagonalises the hyperfine + electronic Zeeman
//!   Hamiltonian and tabulates transitions.
//! * [`zeeman`] computes effective spin expectations, level and transition
//!   gradients (S1), gradient maps and zero-first-order-Zeeman (ZEFOZ) points.
//! * [`eseem`] turns effective moments into superhyperfine couplings and
//!   two-pulse echo envelopes.
//! * [`dynamics`] synthesises Rabi traces and Hahn-echo decay maps.
//! * [`fitting`] fits stretched-exponential decays and the empirical
//!   coherence-time field law.
//!
//! Energies are in Hz, fields in tesla, times in seconds throughout.

pub mod constants;
pub mod dynamics;
pub mod eseem;
pub mod fitting;
pub mod linalg;
pub mod optimize;
pub mod presets;
pub mod quadrature;
pub mod spin;
pub mod zeeman;

mod error;

pub use error::{Error, Result};
pub use spin::{
    build_hamiltonian, diagonalize, transition_table, zero_field_levels, ElectronicLevel,
    EigenSystem, FieldVector, HamiltonianMatrix, InteractionTensor, LevelPair, LevelTensors,
    SpinSystem, TransitionTable,
};
