//! Property checks shared by the proptest suite and the acceptance run.
//! Each check takes concrete inputs and reports the first violation.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use smccm::analysis::{convexity_condition, q_function, transformed_cm_cost};
use smccm::bounds::{amplitude_update, pdb_update, pidb_update, track_interference, AmplitudeMode, BoundState};
use smccm::linalg::{hermitian_defect, norm_sqr};
use smccm::receiver::{
    projection_matrix, rls_update, sm_ccm_rls_update, sm_ccm_sg_update, variable_forgetting, variable_step, OpCount,
    RlsMode, RlsState, SgState,
};
use smccm::{CMatrix, CVector, C64};

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn cvec(parts: &[(f64, f64)]) -> CVector {
    CVector::from_iterator(parts.len(), parts.iter().map(|&(re, im)| C64::new(re, im)))
}

pub fn random_cvec<R: Rng>(rng: &mut R, m: usize, scale: f64) -> CVector {
    CVector::from_fn(m, |_, _| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}

/// Hermitian positive definite `A A^H + 0.1 I`.
pub fn random_hpd<R: Rng>(rng: &mut R, m: usize) -> CMatrix {
    let a = CMatrix::from_fn(m, m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    &a * a.adjoint() + CMatrix::identity(m, m) * C64::new(0.1, 0.0)
}

/// A constrained filter `w^H p = 1` with a null-space component set by `q`.
pub fn offset_filter(p: &CVector, q: &CVector) -> SgState {
    let mut st = SgState::new(q.clone(), 1.0).expect("q non-zero");
    st.set_signature(p.clone()).expect("p non-zero");
    st
}

/// Every update path keeps `|w^H p - nu| <= 1e-8 nu`.
pub fn constraint_preserved(p: &CVector, q: &CVector, stream: &[CVector], gamma: f64) -> Check {
    let mut sg = offset_filter(p, q);
    let mut rls = RlsState::new(p.clone(), 1.0, 0.01).map_err(|e| e.to_string())?;
    let mut fixed = RlsState::new(p.clone(), 1.0, 0.01).map_err(|e| e.to_string())?;
    ensure(sg.constraint_violation() <= 1e-8, || format!("initial SG violation {:e}", sg.constraint_violation()))?;
    for (i, r) in stream.iter().enumerate() {
        sm_ccm_sg_update(&mut sg, r, gamma, &mut OpCount::default()).map_err(|e| e.to_string())?;
        ensure(sg.constraint_violation() <= 1e-8, || {
            format!("SG violation {:e} at step {i}", sg.constraint_violation())
        })?;
        if gamma > 0.0 {
            sm_ccm_rls_update(&mut rls, r, gamma).map_err(|e| e.to_string())?;
            ensure(rls.constraint_violation() <= 1e-8, || {
                format!("SM-RLS violation {:e} at step {i}", rls.constraint_violation())
            })?;
            let scale = rls.r_inv().norm();
            ensure(hermitian_defect(rls.r_inv()) <= 1e-10 * scale.max(1.0), || {
                format!("inverse correlation not Hermitian at step {i}")
            })?;
        }
        rls_update(&mut fixed, r, 0.0, RlsMode::Exponential { lambda: 0.99 }).map_err(|e| e.to_string())?;
        ensure(fixed.constraint_violation() <= 1e-8, || {
            format!("exponential RLS violation {:e} at step {i}", fixed.constraint_violation())
        })?;
    }
    Ok(())
}

/// `Pi p = 0`, `Pi^2 = Pi`, `Pi = Pi^H`.
pub fn projection_properties(p: &CVector) -> Check {
    let pi = projection_matrix(p).map_err(|e| e.to_string())?;
    let null = (&pi * p).norm();
    ensure(null <= 1e-12 * p.norm(), || format!("|Pi p| = {null:e}"))?;
    let idem = (&pi * &pi - &pi).norm();
    ensure(idem <= 1e-12, || format!("|Pi^2 - Pi|_F = {idem:e}"))?;
    let herm = (&pi - pi.adjoint()).norm();
    ensure(herm <= 1e-12, || format!("|Pi - Pi^H|_F = {herm:e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripBranch {
    Above,
    Below,
    Inside,
}

/// After an SM-CCM-SG update the output against the same `r` sits on the
/// triggered strip boundary; without an update the state is unchanged.
pub fn hyper_strip_exact(p: &CVector, q: &CVector, r: &CVector, gamma: f64) -> Result<StripBranch, String> {
    let mut st = offset_filter(p, q);
    let before = st.clone();
    let z = st.output(r);
    let out = sm_ccm_sg_update(&mut st, r, gamma, &mut OpCount::default()).map_err(|e| e.to_string())?;
    let mag2 = z.norm_sqr();
    if !out.updated {
        ensure(st == before, || "skipped update changed the state".into())?;
        let inside = mag2 > 1.0 - gamma && mag2 < 1.0 + gamma;
        // a zero output or an empty projection is a documented skip
        let degenerate = z.norm() == 0.0 || st.project(r).norm() == 0.0;
        ensure(inside || degenerate, || format!("no update with |z|^2 = {mag2} outside the strip"))?;
        return Ok(StripBranch::Inside);
    }
    let (target, branch) = if mag2 >= 1.0 + gamma {
        ((1.0 + gamma).sqrt(), StripBranch::Above)
    } else {
        ((1.0 - gamma).sqrt(), StripBranch::Below)
    };
    let post = st.output(r).norm();
    ensure((post / target - 1.0).abs() <= 1e-8, || {
        format!("a-posteriori |z| = {post}, boundary {target} ({branch:?})")
    })?;
    Ok(branch)
}

/// `variable_step` is zero exactly inside the strip, non-negative, and
/// scales `|z|` onto the nearer boundary: `|z| |1 - mu e quad| = target`.
pub fn step_branch_table(mag: f64, gamma: f64, quad: f64) -> Check {
    let z = C64::from_polar(mag, 0.7);
    let e = mag * mag - 1.0;
    let mu = variable_step(z, e, gamma, quad);
    let upper = (1.0 + gamma).sqrt();
    let lower = (1.0 - gamma).sqrt();
    if mag > lower && mag < upper {
        return ensure(mu == 0.0, || format!("mu = {mu} inside the strip"));
    }
    if mag == 0.0 || e == 0.0 {
        return ensure(mu == 0.0, || "degenerate trigger must skip".into());
    }
    ensure(mu >= 0.0, || format!("negative step {mu}"))?;
    let target = if mag >= upper { upper } else { lower };
    let post = mag * (1.0 - mu * e * quad).abs();
    ensure((post - target).abs() <= 1e-10 * target.max(1.0), || {
        format!("|z| {mag} maps to {post}, boundary {target}")
    })
}

/// Innovation check: `lambda = 0` iff `|e| <= gamma`, otherwise
/// `(|e|/gamma - 1) / r^H P r > 0`.
pub fn forgetting_branch_table(e: f64, gamma: f64, r: &CVector, p: &CMatrix) -> Check {
    let lambda = variable_forgetting(e, gamma, r, p).map_err(|err| err.to_string())?;
    if e.abs() <= gamma {
        return ensure(lambda == 0.0, || format!("lambda = {lambda} with |e| = {} <= gamma = {gamma}", e.abs()));
    }
    let quad = r.dotc(&(p * r)).re;
    let expect = (e.abs() / gamma - 1.0) / quad;
    ensure(lambda > 0.0 && (lambda - expect).abs() <= 1e-12 * expect.abs().max(1e-300), || {
        format!("lambda = {lambda}, expected {expect}")
    })
}

/// Raising the bound never turns a skip into an update for a frozen filter.
pub fn data_selectivity_monotone(p: &CVector, q: &CVector, r: &CVector, g1: f64, g2: f64) -> Check {
    let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
    let st = offset_filter(p, q);
    let fire = |g: f64| -> Result<bool, String> {
        let mut s = st.clone();
        sm_ccm_sg_update(&mut s, r, g, &mut OpCount::default())
            .map(|o| o.updated)
            .map_err(|e| e.to_string())
    };
    let (a, b) = (fire(lo)?, fire(hi)?);
    ensure(!b || a, || format!("update at gamma {hi} but not at {lo}"))
}

/// Trackers and bounds stay inside the convex hull of their start value and
/// inputs.
pub fn recursion_convex_hull(beta: f64, inputs: &[(f64, f64)]) -> Check {
    let mut s = BoundState::new(0.0, 8.0, beta, 0.35, 0.01)
        .map_err(|e| e.to_string())?
        .with_mode(AmplitudeMode::Convex);
    let (mut v_lo, mut v_hi) = (0.0f64, 0.0f64);
    let (mut q_lo, mut q_hi) = (0.0f64, 0.0f64);
    let (mut g_lo, mut g_hi) = (0.0f64, 0.0f64);
    let slack = 1e-12;
    for (i, &(dmag, wn)) in inputs.iter().enumerate() {
        let d = C64::from_polar(dmag, 0.3 * i as f64);
        track_interference(&mut s, d);
        v_lo = v_lo.min(dmag * dmag);
        v_hi = v_hi.max(dmag * dmag);
        ensure(s.v_hat >= v_lo - slack && s.v_hat <= v_hi * (1.0 + slack) + slack, || {
            format!("v_hat {} outside [{v_lo}, {v_hi}]", s.v_hat)
        })?;
        amplitude_update(&mut s, d);
        q_lo = q_lo.min(dmag);
        q_hi = q_hi.max(dmag);
        ensure(s.q >= q_lo - slack && s.q <= q_hi * (1.0 + slack) + slack, || {
            format!("q {} outside [{q_lo}, {q_hi}]", s.q)
        })?;
        ensure(s.a_hat >= 0.0 && s.a_hat <= q_hi * (1.0 + slack) + slack, || format!("a_hat {}", s.a_hat))?;
        let w = CVector::from_element(1, C64::new(wn, 0.0));
        pdb_update(&mut s, &w);
        let g_in = (8.0 * wn * wn * 0.01f64).sqrt();
        g_lo = g_lo.min(g_in);
        g_hi = g_hi.max(g_in);
        ensure(s.gamma >= g_lo - slack && s.gamma <= g_hi * (1.0 + slack) + slack, || {
            format!("gamma {} outside [{g_lo}, {g_hi}]", s.gamma)
        })?;
    }
    Ok(())
}

/// Constant inputs drive each recursion to its steady map value, halving
/// the error at least every `ceil(ln 0.5 / ln(1 - beta))` steps.
pub fn recursion_fixed_points(beta: f64, level: f64, w_norm: f64, sigma2: f64, tau: f64) -> Check {
    let period = ((0.5f64).ln() / (1.0 - beta).ln()).ceil().max(1.0) as usize;
    let w = CVector::from_element(1, C64::new(w_norm, 0.0));
    let noise = (8.0 * w_norm * w_norm * sigma2).sqrt();
    let d = C64::from_polar(level, 1.1);

    let halving = |name: &str, mut step: Box<dyn FnMut() -> f64 + '_>, target: f64| -> Check {
        let mut errs = Vec::new();
        for _ in 0..(40 * period + 100) {
            errs.push((step() - target).abs());
        }
        for k in 0..errs.len() - period {
            let (now, later) = (errs[k], errs[k + period]);
            ensure(later <= 0.5 * now + 1e-12 * target.max(1.0), || {
                format!("{name}: error {now:e} -> {later:e} after {period} steps")
            })?;
        }
        let last = *errs.last().expect("non-empty");
        ensure(last <= 1e-9 * target.max(1.0), || format!("{name}: final error {last:e}"))
    };

    let mut s = BoundState::new(0.0, 8.0, beta, tau, sigma2).map_err(|e| e.to_string())?;
    halving("interference", Box::new(|| {
        track_interference(&mut s, d);
        s.v_hat
    }), level * level)?;

    let mut s = BoundState::new(0.0, 8.0, beta, tau, sigma2).map_err(|e| e.to_string())?;
    halving("pdb", Box::new(|| {
        pdb_update(&mut s, &w);
        s.gamma
    }), noise)?;

    let mut s = BoundState::new(0.0, 8.0, beta, tau, sigma2).map_err(|e| e.to_string())?;
    s.v_hat = level;
    halving("pidb", Box::new(|| {
        pidb_update(&mut s, &w);
        s.gamma
    }), tau.sqrt() * level + noise)?;

    let mut s = BoundState::new(0.0, 8.0, beta, tau, sigma2).map_err(|e| e.to_string())?;
    halving("q (power)", Box::new(|| {
        amplitude_update(&mut s, d);
        s.q
    }), level * level)?;
    ensure((s.a_hat - level).abs() <= 1e-9 * level.max(1.0), || format!("power amplitude {} vs {level}", s.a_hat))?;

    let mut s = BoundState::new(0.0, 8.0, beta, tau, sigma2)
        .map_err(|e| e.to_string())?
        .with_mode(AmplitudeMode::Convex);
    halving("q (convex)", Box::new(|| {
        amplitude_update(&mut s, d);
        s.q
    }), level)?;
    for _ in 0..(40 * period + 100) {
        amplitude_update(&mut s, d);
    }
    ensure((s.a_hat - level).abs() <= 1e-9 * level.max(1.0), || format!("convex amplitude {} vs {level}", s.a_hat))
}

/// PIDB never falls below PDB on identical histories.
pub fn pidb_dominates_pdb(beta: f64, tau: f64, sigma2: f64, inputs: &[(f64, f64)]) -> Check {
    let mut a = BoundState::new(0.65, 8.0, beta, tau, sigma2).map_err(|e| e.to_string())?;
    let mut b = a.clone();
    for (i, &(dmag, wn)) in inputs.iter().enumerate() {
        let d = C64::new(dmag, 0.0);
        let w = CVector::from_element(1, C64::new(wn, 0.0));
        track_interference(&mut a, d);
        track_interference(&mut b, d);
        pdb_update(&mut a, &w);
        pidb_update(&mut b, &w);
        ensure(b.gamma >= a.gamma, || format!("PIDB {} < PDB {} at step {i}", b.gamma, a.gamma))?;
    }
    Ok(())
}

/// Always-update RLS (`lambda = 1`) against a direct solve of the
/// constrained problem with brute-force accumulated correlations.
pub fn rls_batch_oracle(p: &CVector, stream: &[CVector], delta: f64) -> Check {
    let m = p.len();
    let mut st = RlsState::new(p.clone(), 1.0, delta).map_err(|e| e.to_string())?;
    let mut r_acc = CMatrix::identity(m, m) * C64::new(delta, 0.0);
    let mut d_acc = CVector::zeros(m);
    let mut w = p / C64::new(norm_sqr(p), 0.0);
    for (i, r) in stream.iter().enumerate() {
        let z = w.dotc(r);
        r_acc += r * r.adjoint() * C64::new(z.norm_sqr(), 0.0);
        d_acc += r * z.conj();
        let inv = r_acc.clone().try_inverse().ok_or("singular accumulated correlation")?;
        let rp = &inv * p;
        let rd = &inv * &d_acc;
        let coef = (p.dotc(&rd) - C64::new(1.0, 0.0)) / p.dotc(&rp);
        w = rd - rp * coef;

        rls_update(&mut st, r, 0.0, RlsMode::Exponential { lambda: 1.0 }).map_err(|e| e.to_string())?;
        let rel = (st.w() - &w).norm() / w.norm();
        ensure(rel <= 1e-6, || format!("recursion departs from batch solve by {rel:e} at step {i}"))?;
    }
    Ok(())
}

/// `e_p = eps_{i+1}^H r` and `e_a = eps_i^H r` with `eps = w_ref - w`
/// satisfy `eps_{i+1} - u e_p* / |u|^2 = eps_i - u e_a* / |u|^2` for any
/// reference, and the energy relation
/// `|eps_{i+1}|^2 + |e_a|^2 / |u|^2 = |eps_i|^2 + |e_p|^2 / |u|^2`
/// for a reference that satisfies the constraint.
pub fn energy_conservation(p: &CVector, q: &CVector, r: &CVector, w_ref: &CVector, gamma: f64) -> Check {
    let mut st = offset_filter(p, q);
    let eps0 = w_ref - st.w();
    sm_ccm_sg_update(&mut st, r, gamma, &mut OpCount::default()).map_err(|e| e.to_string())?;
    let eps1 = w_ref - st.w();
    let u = st.project(r);
    let uu = norm_sqr(&u);
    if uu == 0.0 {
        return Ok(());
    }
    let ea = eps0.dotc(r);
    let ep = eps1.dotc(r);
    let lhs = &eps1 - &u * (ep.conj() / uu);
    let rhs = &eps0 - &u * (ea.conj() / uu);
    let scale = eps0.norm().max(eps1.norm()).max(1.0);
    let gap = (&lhs - &rhs).norm();
    ensure(gap <= 1e-8 * scale, || format!("vector identity off by {gap:e}"))?;

    // project the reference onto the constraint set
    let w_c = st.project(w_ref) + p * C64::new(1.0 / norm_sqr(p), 0.0);
    let mut st2 = offset_filter(p, q);
    let e0 = &w_c - st2.w();
    sm_ccm_sg_update(&mut st2, r, gamma, &mut OpCount::default()).map_err(|e| e.to_string())?;
    let e1 = &w_c - st2.w();
    let (ea, ep) = (e0.dotc(r), e1.dotc(r));
    let left = norm_sqr(&e1) + ea.norm_sqr() / uu;
    let right = norm_sqr(&e0) + ep.norm_sqr() / uu;
    ensure((left - right).abs() <= 1e-8 * left.abs().max(right.abs()).max(1.0), || {
        format!("energy relation {left} vs {right}")
    })
}

/// Real Hessian of the transformed CM cost by central differences.
pub fn fd_hessian(d: f64, t: &[C64], h: f64) -> DMatrix<f64> {
    let n = 2 * t.len();
    let cost = |x: &[f64]| {
        let tc: Vec<C64> = x.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        transformed_cm_cost(d, &tc)
    };
    let x0: Vec<f64> = t.iter().flat_map(|c| [c.re, c.im]).collect();
    let at = |i: usize, si: f64, j: usize, sj: f64| {
        let mut x = x0.clone();
        x[i] += si * h;
        x[j] += sj * h;
        cost(&x)
    };
    DMatrix::from_fn(n, n, |i, j| {
        (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0)) / (4.0 * h * h)
    })
}

/// The threshold test `D >= 1/4` agrees with a numerical PSD test of the
/// cost Hessian. Near-threshold `D` in [0.2, 0.3] is not tested; below it
/// the point is pulled into `|t|^2 <= 0.04`, where the cost is not convex.
pub fn hessian_convexity_agreement(nu: f64, amp: f64, inner: f64, t: &[C64]) -> Check {
    let (d, convex) = convexity_condition(nu, amp, inner);
    if (0.2..=0.3).contains(&d) {
        return Ok(());
    }
    let mut t = t.to_vec();
    let s: f64 = t.iter().map(|x| x.norm_sqr()).sum();
    if d < 0.2 && s > 0.04 {
        let k = (0.04 / s).sqrt();
        t.iter_mut().for_each(|x| *x *= k);
    }
    let hess = fd_hessian(d, &t, 1e-4);
    let min = SymmetricEigen::new(hess).eigenvalues.min();
    let psd = min >= -1e-6;
    ensure(psd == convex, || format!("D = {d}: threshold says {convex}, Hessian min eigenvalue {min}"))
}

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `Q(x)` by quadrature of the Gaussian density.
pub fn q_quadrature(x: f64) -> f64 {
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if x >= 0.0 {
        simpson(phi, x, x + 14.0, 20_000)
    } else {
        0.5 + simpson(phi, x, 0.0, 20_000)
    }
}

pub fn q_function_values(x: f64) -> Check {
    let q = q_function(x);
    let oracle = q_quadrature(x);
    ensure((q - oracle).abs() <= 1e-12, || format!("Q({x}) = {q}, quadrature {oracle}"))?;
    let sym = q_function(-x) + q;
    ensure((sym - 1.0).abs() <= 1e-12, || format!("Q(-x) + Q(x) = {sym}"))
}
