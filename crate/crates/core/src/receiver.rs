//! Constrained constant-modulus receivers.
//!
//! All receivers minimise a CM cost on `z = w^H r` subject to `w^H p = nu`,
//! with `p` the (estimated) effective signature of the desired user. The
//! set-membership variants only adapt when the output leaves the hyper-strip
//! `sqrt(1 - gamma) <= |z| <= sqrt(1 + gamma)`.

use crate::linalg::{all_finite_mat, all_finite_vec, hermitize, norm_sqr};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Result of one receiver step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub updated: bool,
    /// Step size (SG) or forgetting weight (RLS); 0 when skipped.
    pub step_or_lambda: f64,
    pub output: C64,
    /// `|z|^2 - 1`.
    pub error: f64,
}

impl UpdateOutcome {
    fn skipped(output: C64, error: f64) -> Self {
        Self {
            updated: false,
            step_or_lambda: 0.0,
            output,
            error,
        }
    }
}

/// `I - p (p^H p)^-1 p^H`.
pub fn projection_matrix(p: &CVector) -> Result<CMatrix> {
    let pp = norm_sqr(p);
    if pp == 0.0 || !pp.is_finite() {
        return Err(Error::domain("projection needs a non-zero finite vector"));
    }
    let m = p.len();
    let mut pi = CMatrix::identity(m, m);
    pi.gerc(C64::new(-1.0 / pp, 0.0), p, p, C64::new(1.0, 0.0));
    hermitize(&mut pi);
    Ok(pi)
}

/// Data-selective step size that puts the a-posteriori output on the nearest
/// hyper-strip boundary. `quad = r^H Pi r`.
pub fn variable_step(z: C64, e: f64, gamma: f64, quad: f64) -> f64 {
    let mag = z.norm();
    let upper = (1.0 + gamma).sqrt();
    let lower = (1.0 - gamma).max(0.0).sqrt();
    let target = if mag >= upper {
        upper
    } else if mag <= lower {
        lower
    } else {
        return 0.0;
    };
    if mag == 0.0 || e == 0.0 || quad <= 0.0 {
        log::debug!("degenerate output at step-size trigger, update skipped");
        return 0.0;
    }
    (1.0 - target / mag) / (e * quad)
}

/// Operation tally for the SG receivers (one complex multiply = 1 mult).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub adds: u64,
    pub mults: u64,
}

impl OpCount {
    fn add(&mut self, adds: usize, mults: usize) {
        self.adds += adds as u64;
        self.mults += mults as u64;
    }
}

/// State of a constrained SG receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SgState {
    w: CVector,
    p: CVector,
    nu: f64,
    /// `1 / (p^H p)`.
    inv_pp: f64,
    degenerate_events: u64,
}

impl SgState {
    /// Starts from `w = nu p / (p^H p)`.
    pub fn new(p: CVector, nu: f64) -> Result<Self> {
        let inv_pp = check_signature(&p)?;
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::domain("nu must be positive"));
        }
        let w = &p * C64::new(nu * inv_pp, 0.0);
        Ok(Self {
            w,
            p,
            nu,
            inv_pp,
            degenerate_events: 0,
        })
    }

    pub fn w(&self) -> &CVector {
        &self.w
    }

    pub fn p(&self) -> &CVector {
        &self.p
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn degenerate_events(&self) -> u64 {
        self.degenerate_events
    }

    /// `Pi` for the current signature.
    pub fn projection(&self) -> CMatrix {
        projection_matrix(&self.p).expect("signature validated on entry")
    }

    /// `Pi x` without forming the matrix.
    pub fn project(&self, x: &CVector) -> CVector {
        let coef = self.p.dotc(x) * self.inv_pp;
        x - &self.p * coef
    }

    /// Replaces the signature and re-imposes the constraint on `w`.
    pub fn set_signature(&mut self, p: CVector) -> Result<()> {
        let inv_pp = check_signature(&p)?;
        if p.len() != self.w.len() {
            return Err(Error::domain("signature length differs from filter length"));
        }
        self.p = p;
        self.inv_pp = inv_pp;
        let projected = self.project(&self.w);
        self.w = projected + &self.p * C64::new(self.nu * self.inv_pp, 0.0);
        Ok(())
    }

    /// `|w^H p - nu| / nu`.
    pub fn constraint_violation(&self) -> f64 {
        (self.w.dotc(&self.p) - C64::new(self.nu, 0.0)).norm() / self.nu
    }

    pub fn output(&self, r: &CVector) -> C64 {
        self.w.dotc(r)
    }

    /// `w <- Pi (w - mu e z* r) + nu p / (p^H p)`, which reduces to
    /// `w - mu e z* Pi r` for a constrained `w`.
    fn apply_step(
        &mut self,
        r: &CVector,
        z: C64,
        e: f64,
        step: impl FnOnce(f64) -> f64,
        ops: &mut OpCount,
    ) -> Result<UpdateOutcome> {
        let m = r.len();
        let u = self.project(r);
        ops.add(2 * m - 1, 2 * m + 1);
        let quad = r.dotc(&u).re;
        ops.add(m - 1, m);
        let mu = step(quad);
        ops.add(1, 3);
        if mu == 0.0 {
            return Ok(UpdateOutcome::skipped(z, e));
        }
        let coef = z.conj() * (mu * e);
        ops.add(0, 2);
        let w_new = &self.w - &u * coef;
        ops.add(m, m);
        if !all_finite_vec(&w_new) || !mu.is_finite() {
            return Err(Error::numerical("non-finite filter update rejected"));
        }
        self.w = w_new;
        Ok(UpdateOutcome {
            updated: true,
            step_or_lambda: mu,
            output: z,
            error: e,
        })
    }
}

fn check_signature(p: &CVector) -> Result<f64> {
    let pp = norm_sqr(p);
    if !(pp.is_finite() && pp > 0.0) {
        return Err(Error::domain("effective signature must be non-zero and finite"));
    }
    Ok(1.0 / pp)
}

fn check_input(r: &CVector, m: usize) -> Result<()> {
    if r.len() != m {
        return Err(Error::domain(format!(
            "received vector has length {}, filter has {m}",
            r.len()
        )));
    }
    if !all_finite_vec(r) {
        return Err(Error::numerical("non-finite received vector"));
    }
    Ok(())
}

/// One SM-CCM-SG step. The state is left untouched on error.
pub fn sm_ccm_sg_update(
    state: &mut SgState,
    r: &CVector,
    gamma: f64,
    ops: &mut OpCount,
) -> Result<UpdateOutcome> {
    check_input(r, state.w.len())?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::domain(format!("bound {gamma} must be finite and non-negative")));
    }
    let m = r.len();
    let z = state.output(r);
    let e = z.norm_sqr() - 1.0;
    ops.add(m, m + 1);
    let mag2 = z.norm_sqr();
    if mag2 > 1.0 - gamma && mag2 < 1.0 + gamma {
        return Ok(UpdateOutcome::skipped(z, e));
    }
    if z.norm() == 0.0 {
        state.degenerate_events += 1;
        log::debug!("zero output at a step-size trigger, update skipped");
        return Ok(UpdateOutcome::skipped(z, e));
    }
    state.apply_step(r, z, e, |quad| variable_step(z, e, gamma, quad), ops)
}

/// Always-update CCM-SG with a constant step.
pub fn baseline_ccm_sg_update(
    state: &mut SgState,
    r: &CVector,
    mu_fixed: f64,
    ops: &mut OpCount,
) -> Result<UpdateOutcome> {
    check_input(r, state.w.len())?;
    if !(mu_fixed.is_finite() && mu_fixed >= 0.0) {
        return Err(Error::domain("fixed step must be finite and non-negative"));
    }
    let m = r.len();
    let z = state.output(r);
    let e = z.norm_sqr() - 1.0;
    ops.add(m, m + 1);
    state.apply_step(r, z, e, |_| mu_fixed, ops)
}

/// Innovation-check forgetting weight.
pub fn variable_forgetting(e: f64, gamma: f64, r: &CVector, r_inv: &CMatrix) -> Result<f64> {
    let quad = r.dotc(&(r_inv * r)).re;
    if !(quad.is_finite() && quad > 0.0) {
        return Err(Error::numerical(format!(
            "r^H P r = {quad:e}: inverse correlation lost positive definiteness"
        )));
    }
    Ok(forgetting_from_quad(e, gamma, quad))
}

fn forgetting_from_quad(e: f64, gamma: f64, quad: f64) -> f64 {
    if e.abs() > gamma {
        (e.abs() / gamma - 1.0) / quad
    } else {
        0.0
    }
}

/// How the RLS correlation estimates weigh past and new data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RlsMode {
    /// Innovation-check weight on new data only.
    SetMembership,
    /// Classical exponential forgetting, updating every symbol.
    Exponential { lambda: f64 },
}

/// State of a constrained RLS receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    w: CVector,
    p: CVector,
    r_inv: CMatrix,
    d_hat: CVector,
    nu: f64,
    delta: f64,
    reinitializations: u64,
}

impl RlsState {
    /// `w = nu p / (p^H p)`, `R^-1 = I / delta`, `d = 0`.
    pub fn new(p: CVector, nu: f64, delta: f64) -> Result<Self> {
        let inv_pp = check_signature(&p)?;
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::domain("nu must be positive"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::domain("delta must be positive"));
        }
        let m = p.len();
        let w = &p * C64::new(nu * inv_pp, 0.0);
        Ok(Self {
            w,
            p,
            r_inv: CMatrix::identity(m, m) * C64::new(1.0 / delta, 0.0),
            d_hat: CVector::zeros(m),
            nu,
            delta,
            reinitializations: 0,
        })
    }

    pub fn w(&self) -> &CVector {
        &self.w
    }

    pub fn p(&self) -> &CVector {
        &self.p
    }

    pub fn r_inv(&self) -> &CMatrix {
        &self.r_inv
    }

    pub fn d_hat(&self) -> &CVector {
        &self.d_hat
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn reinitializations(&self) -> u64 {
        self.reinitializations
    }

    pub fn output(&self, r: &CVector) -> C64 {
        self.w.dotc(r)
    }

    pub fn constraint_violation(&self) -> f64 {
        (self.w.dotc(&self.p) - C64::new(self.nu, 0.0)).norm() / self.nu
    }

    /// Replaces the signature and recomputes the filter.
    pub fn set_signature(&mut self, p: CVector) -> Result<()> {
        check_signature(&p)?;
        if p.len() != self.w.len() {
            return Err(Error::domain("signature length differs from filter length"));
        }
        let old = std::mem::replace(&mut self.p, p);
        match constrained_solution(&self.r_inv, &self.d_hat, &self.p, self.nu) {
            Ok(w) => {
                self.w = w;
                Ok(())
            }
            Err(err) => {
                self.p = old;
                Err(err)
            }
        }
    }

    fn reinitialize(&mut self) {
        let m = self.p.len();
        self.r_inv = CMatrix::identity(m, m) * C64::new(1.0 / self.delta, 0.0);
        self.reinitializations += 1;
    }
}

/// `w = P [d - (p^H P p)^-1 (p^H P d - nu) p]`.
fn constrained_solution(r_inv: &CMatrix, d: &CVector, p: &CVector, nu: f64) -> Result<CVector> {
    let pp = p.dotc(&(r_inv * p)).re;
    if !(pp.is_finite() && pp > 0.0) {
        return Err(Error::numerical("p^H P p is not positive"));
    }
    let pd = p.dotc(&(r_inv * d));
    let inner = d - p * ((pd - C64::new(nu, 0.0)) / pp);
    let w = r_inv * inner;
    if !all_finite_vec(&w) {
        return Err(Error::numerical("non-finite RLS filter"));
    }
    Ok(w)
}

/// `P <- P - weight P r r^H P / (1 + weight r^H P r)`, Hermitian-symmetrized.
pub fn rank_one_downdate(r_inv: &CMatrix, r: &CVector, weight: f64) -> Result<CMatrix> {
    let k = r_inv * r;
    let denom = 1.0 + weight * r.dotc(&k).re;
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::numerical(format!("rank-one denominator {denom:e} is not positive")));
    }
    let mut out = r_inv.clone();
    out.gerc(C64::new(-weight / denom, 0.0), &k, &k, C64::new(1.0, 0.0));
    hermitize(&mut out);
    if !all_finite_mat(&out) {
        return Err(Error::numerical("non-finite inverse correlation"));
    }
    Ok(out)
}

/// One RLS step in the given mode. The state is left untouched on error,
/// except that a lost positive definiteness re-initialises `R^-1`.
pub fn rls_update(state: &mut RlsState, r: &CVector, gamma: f64, mode: RlsMode) -> Result<UpdateOutcome> {
    check_input(r, state.w.len())?;
    let z = state.output(r);
    let e = z.norm_sqr() - 1.0;
    let z2 = z.norm_sqr();

    let (r_inv, d_hat, lambda) = match mode {
        RlsMode::SetMembership => {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(Error::domain(format!("bound {gamma} must be positive")));
            }
            let lambda = match variable_forgetting(e, gamma, r, &state.r_inv) {
                Ok(l) => l,
                Err(err) => {
                    log::warn!("{err}; re-initialising the inverse correlation");
                    state.reinitialize();
                    return Ok(UpdateOutcome::skipped(z, e));
                }
            };
            if lambda == 0.0 {
                return Ok(UpdateOutcome::skipped(z, e));
            }
            let r_inv = match rank_one_downdate(&state.r_inv, r, lambda * z2) {
                Ok(m) => m,
                Err(err) => {
                    log::warn!("{err}; re-initialising the inverse correlation");
                    state.reinitialize();
                    return Ok(UpdateOutcome::skipped(z, e));
                }
            };
            let d_hat = &state.d_hat + r * (z.conj() * lambda);
            (r_inv, d_hat, lambda)
        }
        RlsMode::Exponential { lambda } => {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::domain("forgetting factor must lie in (0, 1]"));
            }
            let scaled = &state.r_inv * C64::new(1.0 / lambda, 0.0);
            let r_inv = rank_one_downdate(&scaled, r, z2)?;
            let d_hat = &state.d_hat * C64::new(lambda, 0.0) + r * z.conj();
            (r_inv, d_hat, lambda)
        }
    };

    let w = constrained_solution(&r_inv, &d_hat, &state.p, state.nu)?;
    state.r_inv = r_inv;
    state.d_hat = d_hat;
    state.w = w;
    Ok(UpdateOutcome {
        updated: true,
        step_or_lambda: lambda,
        output: z,
        error: e,
    })
}

/// SM-CCM-RLS step.
pub fn sm_ccm_rls_update(state: &mut RlsState, r: &CVector, gamma: f64) -> Result<UpdateOutcome> {
    rls_update(state, r, gamma, RlsMode::SetMembership)
}

/// Nearest QPSK point, ties toward the positive axes.
pub fn detect(z: C64) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(
        if z.re >= 0.0 { s } else { -s },
        if z.im >= 0.0 { s } else { -s },
    )
}

/// Fraction of the two Gray-mapped bits in error.
pub fn bit_errors(detected: C64, sent: C64) -> f64 {
    let mut wrong = 0.0;
    if (detected.re >= 0.0) != (sent.re >= 0.0) {
        wrong += 0.5;
    }
    if (detected.im >= 0.0) != (sent.im >= 0.0) {
        wrong += 0.5;
    }
    wrong
}
