//! Multi-currency FX option pricing and calibration driven by
//! CBI-time-changed Lévy (CBITCL) factors.
//!
//! The crate is organised bottom-up:
//!
//! * [`mechanisms`] evaluates the immigration, branching and Lévy exponents,
//!   their effective domains and the Esscher parameter transforms.
//! * [`affine`] solves the generalized Riccati system for the joint
//!   Laplace–Fourier transform of `(X, Y, Z)`.
//! * [`fxmarket`] assembles the N-currency model and its log-FX transforms.
//! * [`pricing`] holds the COS pricer, Black inversion and FX quote conventions.
//! * [`mc_oracle`] simulates factors and FX rates for independent verification.
//! * [`calibration`] and [`deep_surrogate`] fit the model to vol surfaces.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod affine;
pub mod calibration;
pub mod deep_surrogate;
pub mod error;
pub mod fxmarket;
pub mod mc_oracle;
pub mod mechanisms;
pub mod presets;
pub mod pricing;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64;
