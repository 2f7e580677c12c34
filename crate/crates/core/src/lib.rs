// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Finite-dimensional cavity-QED models of small chemical systems.
//!
//! The crate is layered bottom-up:
//!
//! - [`hilbert`] enumerates constrained basis states of bosonic modes and
//!   finite registers.
//! - [`operators`] builds sparse operators and the model Hamiltonians.
//! - [`dynamics`] propagates states (spectral or Lindblad) and evaluates
//!   observables.
//! - [`models`] wires the four scenarios together.
//! - [`reduction`] prunes the basis by amplitude and repairs connectivity.
//! - [`config`] parses and validates TOML run configurations.
//! - [`analysis`] has small series statistics (means, correlation, spectra).

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod hilbert;
pub mod models;
pub mod operators;
pub mod reduction;

pub use num_complex::Complex64;
