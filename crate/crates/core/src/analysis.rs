//! Closed-form predictions for the SM-CCM-SG receiver: step-size moments,
//! update probability, steady-state and tracking excess MSE, stability and
//! the convexity condition of the constrained CM cost.

use crate::linalg::complex_eigenvalues;
use crate::{CMatrix, Error, Result};

/// Residual interference powers at the output of the optimum filter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoisePartition {
    pub sigma2_mai: f64,
    pub sigma2_isi: f64,
    pub sigma2_noise: f64,
}

impl NoisePartition {
    pub fn new(sigma2_mai: f64, sigma2_isi: f64, sigma2_noise: f64) -> Result<Self> {
        for (name, v) in [("MAI", sigma2_mai), ("ISI", sigma2_isi), ("noise", sigma2_noise)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} variance {v} must be finite and non-negative")));
            }
        }
        Ok(Self {
            sigma2_mai,
            sigma2_isi,
            sigma2_noise,
        })
    }

    pub fn total(&self) -> f64 {
        self.sigma2_mai + self.sigma2_isi + self.sigma2_noise
    }
}

/// First and second moments of the steady-state step size and the update
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepMoments {
    pub mean_mu: f64,
    pub mean_mu2: f64,
    pub p_up: f64,
}

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `P_up = 2 Q(gamma / sigma_e)`, clamped to [0, 1].
pub fn prob_update(gamma_mean: f64, sigma_e: f64) -> Result<f64> {
    if !(sigma_e > 0.0) {
        return Err(Error::domain(format!("error deviation {sigma_e} must be positive")));
    }
    Ok((2.0 * q_function(gamma_mean / sigma_e)).clamp(0.0, 1.0))
}

/// Step-size moments from the mean bound, the update probability, the
/// amplitude moments `(E[A], E[A^2])` and `(E||u||^2, E||u||^4)`.
pub fn step_moments(gamma_mean: f64, p_up: f64, amp_moments: (f64, f64), u_moments: (f64, f64)) -> Result<StepMoments> {
    if gamma_mean == 0.0 || !gamma_mean.is_finite() {
        return Err(Error::domain("mean bound must be non-zero"));
    }
    if !(0.0..=1.0).contains(&p_up) {
        return Err(Error::domain(format!("update probability {p_up} outside [0, 1]")));
    }
    let (a1, a2) = amp_moments;
    let (u2, u4) = u_moments;
    if !(a1 > 0.0 && a2 > 0.0 && u2 > 0.0 && u4 > 0.0) {
        return Err(Error::domain("moments must be positive"));
    }
    let off = (1.0 - p_up) / gamma_mean;
    Ok(StepMoments {
        mean_mu: gamma_mean * p_up + off * a1 / u2,
        mean_mu2: gamma_mean * p_up + off * a2 / u4,
        p_up,
    })
}

/// The constants `A` and `B` of the excess-MSE expressions.
///
/// With `m`, `v`, `n` the MAI, noise and ISI variances:
///
/// `A = 3 + 3m^2 + 6mv + 6mn + 3v^2 + 6vn + 3n^2`
///
/// `B = n^3 + 3vn^2 + 3mn^2 + v^3 + 6v + nm + 3m^2 n + 3m^2 v + m^3 + m^2
///    + 2vn + v^2 + 2m + 2mv + m^2 + 4v + 2n + 2m + 2`
///
/// including the repeated terms as they appear in the source expression.
pub fn emse_constants(p: &NoisePartition) -> (f64, f64) {
    let m = p.sigma2_mai;
    let v = p.sigma2_noise;
    let n = p.sigma2_isi;
    let a = 3.0 + 3.0 * m * m + 6.0 * m * v + 6.0 * m * n + 3.0 * v * v + 6.0 * v * n + 3.0 * n * n;
    let b = n.powi(3)
        + 3.0 * v * n * n
        + 3.0 * m * n * n
        + v.powi(3)
        + 6.0 * v
        + n * m
        + 3.0 * m * m * n
        + 3.0 * m * m * v
        + m.powi(3)
        + m * m
        + 2.0 * v * n
        + v * v
        + 2.0 * m
        + 2.0 * m * v
        + m * m
        + 4.0 * v
        + 2.0 * n
        + 2.0 * m
        + 2.0;
    (a, b)
}

fn excess_mse(moments: &StepMoments, u2: f64, partition: &NoisePartition, trace_q: f64) -> Result<f64> {
    let (a, b) = emse_constants(partition);
    let num = moments.mean_mu2 * u2 * b + trace_q;
    let den = 2.0 * moments.mean_mu * partition.total() - moments.mean_mu2 * u2 * a;
    if !(den > 0.0) {
        return Err(Error::PredictedInstability { margin: den });
    }
    Ok(num / den)
}

/// Steady-state excess MSE.
pub fn excess_mse_steady(moments: &StepMoments, u2: f64, partition: &NoisePartition) -> Result<f64> {
    excess_mse(moments, u2, partition, 0.0)
}

/// Excess MSE with a random-walk optimum of increment covariance trace `trace_q`.
pub fn excess_mse_tracking(moments: &StepMoments, u2: f64, partition: &NoisePartition, trace_q: f64) -> Result<f64> {
    if !(trace_q.is_finite() && trace_q >= 0.0) {
        return Err(Error::domain("Tr(Q) must be finite and non-negative"));
    }
    excess_mse(moments, u2, partition, trace_q)
}

/// `Tr(Q) = 2 (1 - J0(2 pi f_d T)) ||w_opt||^2`.
pub fn jakes_trace_q(fd_t: f64, w_opt_norm2: f64, dim: usize) -> Result<f64> {
    if !(fd_t.is_finite() && fd_t >= 0.0) {
        return Err(Error::domain("normalized Doppler must be non-negative"));
    }
    if dim == 0 {
        return Err(Error::domain("filter dimension must be positive"));
    }
    let x = 2.0 * std::f64::consts::PI * fd_t;
    Ok(2.0 * (1.0 - libm::j0(x)) * w_opt_norm2)
}

/// `D = nu^2 A^2 |h_hat^H h|^2` and whether `D >= 1/4`.
pub fn convexity_condition(nu: f64, amp: f64, h_inner: f64) -> (f64, bool) {
    let d = nu * nu * amp * amp * h_inner * h_inner;
    (d, d >= 0.25)
}

/// Noise-free CM cost in the interference coordinates `t` (all users except
/// the desired one), with `D` the desired-user term:
/// `8 (D + |t|^2)^2 - 4 (D^2 + sum |t_j|^4) - 4 (D + |t|^2) + 1`.
pub fn transformed_cm_cost(d: f64, t: &[num_complex::Complex64]) -> f64 {
    let s: f64 = t.iter().map(|x| x.norm_sqr()).sum();
    let s4: f64 = t.iter().map(|x| x.norm_sqr().powi(2)).sum();
    8.0 * (d + s).powi(2) - 4.0 * (d * d + s4) - 4.0 * (d + s) + 1.0
}

/// `min_k 2 / |lambda_k|` over the eigenvalues of `R_vr`; `+inf` when every
/// eigenvalue is zero.
pub fn stability_bound(r_vr: &CMatrix) -> Result<f64> {
    if r_vr.nrows() != r_vr.ncols() {
        return Err(Error::domain("stability bound needs a square matrix"));
    }
    if !crate::linalg::all_finite_mat(r_vr) {
        return Err(Error::numerical("non-finite matrix"));
    }
    let eig = complex_eigenvalues(r_vr)?;
    Ok(eig
        .iter()
        .map(|l| 2.0 / l.norm())
        .fold(f64::INFINITY, f64::min))
}
