//! Time-varying error bounds and the blind trackers that feed them.
//!
//! The RAKE output `x = f^H r` of the desired user is combined with the
//! symbol detected by the linear receiver to isolate the interference
//! residual `d = x - A b`, whose power `v` drives the interference-dependent
//! bound. The amplitude `A` itself is estimated from `x` with the
//! interference contribution removed.

use crate::linalg::norm_sqr;
use crate::{CVector, Error, Result, C64};

/// How the amplitude tracker forms `q` and `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// `q` tracks `E|x|^2` and `A = sqrt(max(0, q - v))`.
    #[default]
    Power,
    /// `q` tracks `E|x|` and `A` tracks `max(0, q - sqrt v)`, both as convex
    /// combinations.
    Convex,
    /// Un-weighted innovations: `q <- (1-beta) q + |x|` and
    /// `A <- (1-beta) A + max(0, q - sqrt v)`.
    Literal,
}

/// Bound and tracker state for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub gamma: f64,
    pub v_hat: f64,
    pub q: f64,
    pub a_hat: f64,
    pub alpha: f64,
    /// Weight of the newest sample.
    pub beta: f64,
    pub tau: f64,
    /// Known noise power.
    pub sigma2: f64,
    pub mode: AmplitudeMode,
}

impl BoundState {
    /// Cold start: `v = q = A = 0`, `gamma = gamma_init`.
    pub fn new(gamma_init: f64, alpha: f64, beta: f64, tau: f64, sigma2: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::config("bound.beta", format!("{beta} outside (0, 1)")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config("bound.alpha", format!("{alpha} must be positive")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::config("bound.tau", format!("{tau} must be non-negative")));
        }
        if !(gamma_init.is_finite() && gamma_init >= 0.0) {
            return Err(Error::config("bound.gamma", format!("{gamma_init} must be non-negative")));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::domain("noise power must be finite and non-negative"));
        }
        Ok(Self {
            gamma: gamma_init,
            v_hat: 0.0,
            q: 0.0,
            a_hat: 0.0,
            alpha,
            beta,
            tau,
            sigma2,
            mode: AmplitudeMode::default(),
        })
    }

    pub fn with_mode(mut self, mode: AmplitudeMode) -> Self {
        self.mode = mode;
        self
    }

    fn noise_term(&self, w: &CVector) -> f64 {
        (self.alpha * norm_sqr(w) * self.sigma2).sqrt()
    }
}

/// `gamma <- (1-beta) gamma + beta sqrt(alpha ||w||^2 sigma^2)`.
pub fn pdb_update(s: &mut BoundState, w: &CVector) {
    s.gamma = (1.0 - s.beta) * s.gamma + s.beta * s.noise_term(w);
}

/// `gamma <- (1-beta) gamma + beta (sqrt(tau v^2) + sqrt(alpha ||w||^2 sigma^2))`.
pub fn pidb_update(s: &mut BoundState, w: &CVector) {
    let interference = (s.tau * s.v_hat * s.v_hat).sqrt();
    s.gamma = (1.0 - s.beta) * s.gamma + s.beta * (interference + s.noise_term(w));
}

/// RAKE output `f^H r`.
pub fn rake_output(f: &CVector, r: &CVector) -> C64 {
    f.dotc(r)
}

/// `d = x - A b`.
pub fn interference_residual(x: C64, a_hat: f64, b_hat: C64) -> C64 {
    x - b_hat * a_hat
}

/// `v <- (1-beta) v + beta |d|^2`.
pub fn track_interference(s: &mut BoundState, d: C64) {
    s.v_hat = (1.0 - s.beta) * s.v_hat + s.beta * d.norm_sqr();
}

/// Amplitude tracker step for the RAKE output `x`.
pub fn amplitude_update(s: &mut BoundState, x: C64) {
    let b = s.beta;
    match s.mode {
        AmplitudeMode::Power => {
            s.q = (1.0 - b) * s.q + b * x.norm_sqr();
            s.a_hat = (s.q - s.v_hat).max(0.0).sqrt();
        }
        AmplitudeMode::Convex => {
            s.q = (1.0 - b) * s.q + b * x.norm();
            s.a_hat = (1.0 - b) * s.a_hat + b * (s.q - s.v_hat.sqrt()).max(0.0);
        }
        AmplitudeMode::Literal => {
            s.q = (1.0 - b) * s.q + x.norm();
            s.a_hat = (1.0 - b) * s.a_hat + (s.q - s.v_hat.sqrt()).max(0.0);
        }
    }
}

/// Which bound recursion drives `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundKind {
    Fixed(f64),
    Pdb,
    Pidb,
}

impl BoundKind {
    /// Advances `s.gamma` according to the selected recursion.
    pub fn apply(&self, s: &mut BoundState, w: &CVector) {
        match *self {
            BoundKind::Fixed(g) => s.gamma = g,
            BoundKind::Pdb => pdb_update(s, w),
            BoundKind::Pidb => pidb_update(s, w),
        }
    }
}
