//! Semiclassical spin transport for the Dirac equation.
//!
//! Classical relativistic orbits, spinor transport through the Berry and
//! curvature spin Hamiltonians, the BMT comparison, a generic multi-band
//! matrix-symbol framework and a split-step Dirac solver on 1D/2D grids.

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bmt;
pub mod calculus;
pub mod config;
pub mod dynamics;
pub mod fields;
pub mod gamma;
pub mod grid;
pub mod harness;
pub mod identities;
pub mod multiband;
pub mod pde;
pub mod plot;
pub mod sampling;
pub mod snapshot;
pub mod symbol;
