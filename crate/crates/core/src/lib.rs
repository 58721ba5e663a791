//! Loss analysis for superconducting coplanar-waveguide resonators.
//!
//! The crate covers the full chain from cross-section geometry to chip-level
//! statistics:
//!
//! - [`geometry`]: CPW stack, interface layers, materials and chip presets
//! - [`fieldsolve`]: 2D electrostatic solve on a graded mesh
//! - [`participation`]: bulk and thin-layer participation ratios, loss budgets
//! - [`s21fit`]: notch-port S21 circle fitting
//! - [`tlsfit`]: TLS power-dependence model and its bounded least-squares fit
//! - [`stats`]: weighted means, boxplot statistics, measured vs simulated

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fieldsolve;
pub mod geometry;
pub mod lm;
pub mod participation;
pub mod reference_data;
pub mod s21fit;
pub mod stats;
pub mod tlsfit;

pub use error::{Error, Result};

/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.8541878128e-12;
/// Planck constant (J s), exact.
pub const PLANCK: f64 = 6.62607015e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Boltzmann constant (J/K), exact.
pub const BOLTZMANN: f64 = 1.380649e-23;
