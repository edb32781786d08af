//! Blind set-membership constrained constant-modulus (SM-CCM) interference
//! suppression for synchronous DS-CDMA.
//!
//! The crate is organised bottom-up:
//!
//! * [`gold`], [`channel`] and [`model`] synthesise the multiuser multipath uplink.
//! * [`receiver`] holds the SM-CCM-SG and SM-CCM-RLS receivers and their
//!   fixed-parameter baselines.
//! * [`bounds`] computes the time-varying error bounds (PDB / PIDB) together
//!   with the blind interference-power and amplitude trackers.
//! * [`channel_est`] is the blind set-membership channel estimator.
//! * [`analysis`] evaluates the closed-form excess-MSE, stability and
//!   convexity predictions.
//! * [`harness`] runs reproducible Monte Carlo ensembles, and [`config`] /
//!   [`output`] provide the declarative configuration and CSV/SVG emission.

pub mod analysis;
pub mod bounds;
pub mod channel;
pub mod channel_est;
pub mod config;
pub mod error;
pub mod gold;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod output;
pub mod receiver;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
/// Column vector of complex samples.
pub type CVector = nalgebra::DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
