//! Blind set-membership channel estimation (SM-BCE).
//!
//! The channel of the desired user is the minimum eigenvector of
//! `Upsilon = A^2 C^H R^-p C`. `Upsilon` is accumulated with the
//! innovation-check weights of the receiver and one shifted power-method
//! step `h <- (I - Upsilon / tr Upsilon) h` is taken per symbol.

use crate::linalg::{all_finite_mat, hermitize, min_eigenvector, norm_sqr};
use crate::model::ConstraintMatrix;
use crate::receiver::{rank_one_downdate, variable_forgetting};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Initial diagonal loading of the accumulator.
pub const UPSILON_INIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstState {
    h_hat: CVector,
    upsilon: CMatrix,
    p_power: u32,
}

impl ChannelEstState {
    /// Starts from the first basis vector and `Upsilon = 1e-3 I`.
    pub fn new(taps: usize, p_power: u32) -> Result<Self> {
        if taps == 0 {
            return Err(Error::domain("channel estimator needs at least one tap"));
        }
        if !(1..=2).contains(&p_power) {
            return Err(Error::config("channel.p_power", format!("{p_power} not in {{1, 2}}")));
        }
        let mut h_hat = CVector::zeros(taps);
        h_hat[0] = C64::new(1.0, 0.0);
        Ok(Self {
            h_hat,
            upsilon: CMatrix::identity(taps, taps) * C64::new(UPSILON_INIT, 0.0),
            p_power,
        })
    }

    /// Replaces the accumulator (tests and warm starts).
    pub fn with_upsilon(mut self, upsilon: CMatrix, h_hat: CVector) -> Result<Self> {
        if upsilon.nrows() != self.h_hat.len() || upsilon.ncols() != self.h_hat.len() || h_hat.len() != self.h_hat.len() {
            return Err(Error::domain("dimension mismatch"));
        }
        let n = norm_sqr(&h_hat).sqrt();
        if n == 0.0 {
            return Err(Error::domain("initial channel must be non-zero"));
        }
        self.upsilon = upsilon;
        self.h_hat = h_hat / C64::new(n, 0.0);
        Ok(self)
    }

    pub fn h_hat(&self) -> &CVector {
        &self.h_hat
    }

    pub fn upsilon(&self) -> &CMatrix {
        &self.upsilon
    }

    pub fn p_power(&self) -> u32 {
        self.p_power
    }

    /// `R^-p` for the configured power.
    pub fn inverse_power(&self, r_inv: &CMatrix) -> CMatrix {
        if self.p_power == 2 {
            let mut sq = r_inv * r_inv;
            hermitize(&mut sq);
            sq
        } else {
            r_inv.clone()
        }
    }
}

/// `Upsilon <- Upsilon + lambda |A|^2 C^H R^-p C`.
pub fn upsilon_update(
    s: &mut ChannelEstState,
    c: &ConstraintMatrix,
    a_hat: f64,
    r_inv_pow: &CMatrix,
    lambda: f64,
) -> Result<()> {
    let l = s.h_hat.len();
    let m = c.rows();
    if c.taps() != l || r_inv_pow.nrows() != m || r_inv_pow.ncols() != m {
        return Err(Error::domain("dimension mismatch in accumulator update"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain("accumulator weight must be non-negative"));
    }
    let weight = lambda * a_hat * a_hat;
    if weight == 0.0 {
        return Ok(());
    }
    let pc = r_inv_pow * c.matrix();
    let mut inc = c.matrix().ad_mul(&pc);
    inc *= C64::new(weight, 0.0);
    let mut next = &s.upsilon + inc;
    hermitize(&mut next);
    if !all_finite_mat(&next) {
        return Err(Error::numerical("non-finite channel accumulator"));
    }
    s.upsilon = next;
    Ok(())
}

/// One shifted power-method step toward the minimum eigenvector.
pub fn sm_bce_step(s: &mut ChannelEstState) {
    let trace: f64 = (0..s.upsilon.nrows()).map(|i| s.upsilon[(i, i)].re).sum();
    if !(trace > 0.0 && trace.is_finite()) {
        return;
    }
    let next = &s.h_hat - &s.upsilon * &s.h_hat * C64::new(1.0 / trace, 0.0);
    let n = norm_sqr(&next).sqrt();
    if n == 0.0 || !n.is_finite() {
        log::warn!("channel estimate collapsed, restarting from the first basis vector");
        s.h_hat.fill(C64::new(0.0, 0.0));
        s.h_hat[0] = C64::new(1.0, 0.0);
        return;
    }
    s.h_hat = next / C64::new(n, 0.0);
}

/// Reference estimate: minimum eigenvector of `C^H R^-1 C`.
pub fn evd_channel_estimate(r_inv: &CMatrix, c: &ConstraintMatrix) -> Result<CVector> {
    if r_inv.nrows() != c.rows() {
        return Err(Error::domain("dimension mismatch"));
    }
    if !all_finite_mat(r_inv) || r_inv.clone().cholesky().is_none() {
        return Err(Error::numerical("inverse correlation is not positive definite"));
    }
    let mut m = c.matrix().ad_mul(&(r_inv * c.matrix()));
    hermitize(&mut m);
    let (_, v) = min_eigenvector(&m);
    let n = norm_sqr(&v).sqrt();
    Ok(v / C64::new(n, 0.0))
}

/// RAKE filter `f = C h`.
pub fn rake_filter(c: &ConstraintMatrix, h_hat: &CVector) -> CVector {
    c.apply(h_hat)
}

/// Rotates `h` so that its first non-zero tap is real and positive.
pub fn resolve_phase_ambiguity(h_hat: &CVector) -> CVector {
    let lead = match h_hat.iter().find(|t| t.norm() > 0.0) {
        Some(t) => *t,
        None => return h_hat.clone(),
    };
    if h_hat[0].norm() == 0.0 {
        log::debug!("first tap is zero, using the first non-zero tap as phase reference");
    }
    h_hat * (lead.conj() / lead.norm())
}

/// Rotates `h_hat` so that its first tap has the phase of `reference[0]`
/// (ideal phase reference).
pub fn align_phase(h_hat: &CVector, reference: &CVector) -> CVector {
    let a = h_hat[0];
    let b = reference[0];
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return h_hat.clone();
    }
    h_hat * ((b / b.norm()) * (a.conj() / a.norm()))
}

/// `min_phi ||e^{j phi} h_hat - h||^2`.
pub fn channel_mse(h_hat: &CVector, h: &CVector) -> f64 {
    (norm_sqr(h_hat) + norm_sqr(h) - 2.0 * h_hat.dotc(h).norm()).max(0.0)
}

/// `|<a, b>|` for unit-norm vectors.
pub fn alignment(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm() / (norm_sqr(a) * norm_sqr(b)).sqrt()
}

/// Inverse-correlation estimate for receivers that do not maintain one.
/// Uses the same innovation-check weights and rank-one recursion as the RLS
/// receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTracker {
    r_inv: CMatrix,
    delta: f64,
}

impl CorrelationTracker {
    pub fn new(m: usize, delta: f64) -> Self {
        Self {
            r_inv: CMatrix::identity(m, m) * C64::new(1.0 / delta, 0.0),
            delta,
        }
    }

    pub fn r_inv(&self) -> &CMatrix {
        &self.r_inv
    }

    /// Returns the innovation weight applied (0 when skipped).
    pub fn update(&mut self, r: &CVector, z: C64, gamma: f64) -> f64 {
        let e = z.norm_sqr() - 1.0;
        let lambda = match variable_forgetting(e, gamma.max(f64::MIN_POSITIVE), r, &self.r_inv) {
            Ok(l) => l,
            Err(err) => {
                log::warn!("{err}; re-initialising the correlation tracker");
                self.r_inv = CMatrix::identity(r.len(), r.len()) * C64::new(1.0 / self.delta, 0.0);
                return 0.0;
            }
        };
        if lambda == 0.0 {
            return 0.0;
        }
        match rank_one_downdate(&self.r_inv, r, lambda * z.norm_sqr()) {
            Ok(m) => {
                self.r_inv = m;
                lambda
            }
            Err(err) => {
                log::warn!("{err}; correlation tracker update skipped");
                0.0
            }
        }
    }
}
