//! Simulator and verification harness for a nonlinear, non-signaling
//! Schrödinger equation whose nonlinear term is a pointwise real phase
//! rotation. Heavy packets (M > μ) contract instead of spreading.

pub mod error;
pub mod grid;
pub mod wavefield;
pub mod dynamics;
pub mod oracle;
pub mod verify;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
pub use grid::{make_grid, ComplexField, Grid, RealField};
pub use wavefield::{
    gaussian_packet, madelung_decompose, madelung_recompose, mass_ratio, observables,
    MadelungField, Observables, PhysParams, PotentialSpec, WaveField,
};
