//! Monte Carlo trials and ensembles.
//!
//! Per-symbol processing order (changing it changes every trace):
//!
//! 1. scripted events for this symbol
//! 2. receive `r[i]`
//! 3. one SM-BCE power step (blind mode) and signature update `p = C h_hat`
//! 4. linear receiver output `z = w^H r` and detection `b_hat`
//! 5. RAKE output, interference residual with the previous amplitude,
//!    amplitude tracker, interference power
//! 6. bound update
//! 7. receiver adaptation
//! 8. channel accumulator update with the innovation weight
//! 9. metrics, then all users move to the next symbol

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::analysis::{
    excess_mse_steady, excess_mse_tracking, jakes_trace_q, prob_update, step_moments, NoisePartition, StepMoments,
};
use crate::bounds::{amplitude_update, interference_residual, rake_output, track_interference, BoundState};
use crate::channel_est::{
    align_phase, channel_mse, evd_channel_estimate, rake_filter, sm_bce_step, upsilon_update, ChannelEstState, CorrelationTracker,
};
use crate::config::{AlgorithmKind, ChannelEstimation, Event, ExperimentConfig};
use crate::gold::gen_gold_set;
use crate::linalg::{hpd_solve, norm_sqr};
use crate::model::{Uplink, UplinkParams};
use crate::receiver::{
    baseline_ccm_sg_update, bit_errors, detect, rls_update, sm_ccm_sg_update, OpCount, RlsMode, RlsState, SgState,
    UpdateOutcome,
};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Per-symbol metrics of the desired user.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricsRecord {
    pub symbol_index: usize,
    /// `|b - z|^2` with the a-priori output.
    pub mse: f64,
    /// Fraction of the two bits detected in error.
    pub ber: f64,
    pub updated: f64,
    pub gamma: f64,
    pub v_hat: f64,
    pub a_hat: f64,
    /// Phase-invariant `||h_hat - h||^2` with unit-norm `h`.
    pub channel_mse: f64,
    pub users: f64,
}

/// Running sums over the steady-state window, mergeable across trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct WindowStats {
    pub count: f64,
    pub mse: f64,
    /// Output MSE of the constrained optimum.
    pub mse_opt: f64,
    pub mai: f64,
    pub isi: f64,
    pub noise: f64,
    pub w_opt_norm2: f64,
    pub e: f64,
    pub e2: f64,
    pub u2: f64,
    pub u4: f64,
    pub gamma: f64,
    pub mu: f64,
    pub mu2: f64,
    pub updates: f64,
    /// Step numerator `mu ||u||^2` over updates.
    pub step_num: f64,
    pub step_num2: f64,
    pub v_hat: f64,
    /// MAI + ISI + noise power at the RAKE filter in use.
    pub v_true: f64,
    pub a_hat: f64,
}

impl WindowStats {
    pub fn merge(&mut self, o: &WindowStats) {
        self.count += o.count;
        self.mse += o.mse;
        self.mse_opt += o.mse_opt;
        self.mai += o.mai;
        self.isi += o.isi;
        self.noise += o.noise;
        self.w_opt_norm2 += o.w_opt_norm2;
        self.e += o.e;
        self.e2 += o.e2;
        self.u2 += o.u2;
        self.u4 += o.u4;
        self.gamma += o.gamma;
        self.mu += o.mu;
        self.mu2 += o.mu2;
        self.updates += o.updates;
        self.step_num += o.step_num;
        self.step_num2 += o.step_num2;
        self.v_hat += o.v_hat;
        self.v_true += o.v_true;
        self.a_hat += o.a_hat;
    }

    pub fn mean(&self, sum: f64) -> f64 {
        sum / self.count
    }

    /// Simulated excess MSE over the constrained optimum.
    pub fn excess_mse(&self) -> f64 {
        (self.mse - self.mse_opt) / self.count
    }

    pub fn partition(&self) -> Result<NoisePartition> {
        NoisePartition::new(self.mai / self.count, self.isi / self.count, self.noise / self.count)
    }

    pub fn sigma_e(&self) -> f64 {
        let m = self.e / self.count;
        (self.e2 / self.count - m * m).max(0.0).sqrt()
    }
}

/// Final blind channel estimate next to the subspace reference computed from
/// the same inverse-correlation estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub h_hat: CVector,
    pub h_true: CVector,
    pub h_evd: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_index: usize,
    pub records: Vec<MetricsRecord>,
    pub updates: usize,
    pub symbols: usize,
    pub ops: OpCount,
    pub window: WindowStats,
    pub channel: Option<ChannelSnapshot>,
}

enum Receiver {
    Sg(SgState),
    Rls(RlsState),
}

impl Receiver {
    fn w(&self) -> &CVector {
        match self {
            Receiver::Sg(s) => s.w(),
            Receiver::Rls(s) => s.w(),
        }
    }

    fn output(&self, r: &CVector) -> C64 {
        match self {
            Receiver::Sg(s) => s.output(r),
            Receiver::Rls(s) => s.output(r),
        }
    }

    fn set_signature(&mut self, p: CVector) -> Result<()> {
        match self {
            Receiver::Sg(s) => s.set_signature(p),
            Receiver::Rls(s) => s.set_signature(p),
        }
    }
}

/// RNG of the channel/noise/symbol stream of a trial.
pub fn trial_rng(seed: u64, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index as u64);
    rng
}

/// RNG for scenario-level draws (interferer power spread).
fn power_rng(seed: u64, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 63) | trial_index as u64);
    rng
}

struct OptimumCache {
    valid_until: usize,
    mse: f64,
    partition: (f64, f64, f64),
    w_norm2: f64,
}

/// Constrained optimum `R^-1 p / (p^H R^-1 p)` of the desired user and its
/// output residuals.
fn optimum_stats(uplink: &Uplink) -> Result<OptimumCache> {
    let r = uplink.covariance();
    let p = uplink.desired_signature();
    let rp = hpd_solve(&r, &p)?;
    let gain = p.dotc(&rp).re;
    let w = rp / C64::new(gain, 0.0);
    let res = uplink.residual_powers(&w);
    Ok(OptimumCache {
        valid_until: 0,
        mse: res.mai + res.isi + res.noise,
        partition: (res.mai, res.isi, res.noise),
        w_norm2: norm_sqr(&w),
    })
}

/// Runs one trial at the given `E_b/N_0`. Deterministic in
/// `(cfg.seed, trial_index)`.
pub fn run_trial(cfg: &ExperimentConfig, ebn0_db: f64, trial_index: usize) -> Result<TrialResult> {
    let sys = &cfg.system;
    let codes = gen_gold_set(sys.gold_degree())?;
    let mut spread_rng = power_rng(cfg.seed, trial_index);
    let spread = if sys.power_spread_db > 0.0 {
        Some(Normal::new(0.0, sys.power_spread_db).map_err(|e| Error::config("system.power_spread_db", e.to_string()))?)
    } else {
        None
    };
    let mut draw_power = |base: f64| match &spread {
        Some(d) => base + d.sample(&mut spread_rng),
        None => base,
    };
    let interferers: Vec<f64> = (0..sys.users - 1)
        .map(|k| draw_power(sys.interferer_powers_db.get(k).copied().unwrap_or(0.0)))
        .collect();
    let params = UplinkParams {
        taps: sys.taps,
        paths_db: sys.paths_db.clone(),
        doppler: sys.doppler,
        ebn0_db,
    };
    let mut uplink = Uplink::new(params, codes, &interferers, trial_rng(cfg.seed, trial_index))?;
    let constraint = uplink.desired().constraint().clone();
    let m = uplink.dim();
    let alg = &cfg.algorithm;
    let blind = cfg.channel.estimation == ChannelEstimation::Blind;

    let mut ce = ChannelEstState::new(sys.taps, cfg.channel.p_power)?;
    let true_h = |u: &Uplink| u.desired().current_taps().clone();
    let estimate = |ce: &ChannelEstState, u: &Uplink| -> CVector {
        if blind {
            align_phase(ce.h_hat(), &true_h(u))
        } else {
            true_h(u)
        }
    };
    let p0 = constraint.apply(&estimate(&ce, &uplink));
    let mut receiver = if alg.kind.is_rls() {
        Receiver::Rls(RlsState::new(p0, alg.nu, alg.delta)?)
    } else {
        Receiver::Sg(SgState::new(p0, alg.nu)?)
    };
    let mut tracker = CorrelationTracker::new(m, alg.delta);
    let mut bound = BoundState::new(cfg.bound.gamma, cfg.bound.alpha, cfg.bound.beta, cfg.bound.tau, uplink.noise_power())?
        .with_mode(cfg.bound.amplitude_mode);
    let bound_kind = cfg.bound.bound_kind();

    let mut ops = OpCount::default();
    let mut records = Vec::with_capacity(cfg.scenario.duration);
    let mut window = WindowStats::default();
    let mut updates = 0usize;
    let mut events = cfg.scenario.events.iter().peekable();
    let mut optimum: Option<OptimumCache> = None;

    for i in 0..cfg.scenario.duration {
        while let Some(ev) = events.next_if(|e| e.at == i) {
            match ev.event {
                Event::AddUser { power_db } => {
                    uplink.add_user(draw_power(power_db))?;
                }
                Event::RemoveUser { id } => uplink.remove_user(id)?,
                Event::SetSnr { db } => {
                    uplink.set_ebn0(db);
                    bound.sigma2 = uplink.noise_power();
                }
                Event::SetDoppler { fd_t } => uplink.set_doppler(fd_t)?,
            }
            optimum = None;
        }

        let rv = uplink.receive()?;
        let r = &rv.samples;

        if blind {
            sm_bce_step(&mut ce);
        }
        let h_est = estimate(&ce, &uplink);
        if blind || uplink.params().doppler > 0.0 {
            receiver.set_signature(constraint.apply(&h_est))?;
        }

        let z = receiver.output(r);
        let b_hat = detect(z);

        let f = rake_filter(&constraint, &h_est);
        let x = rake_output(&f, r);
        let d = interference_residual(x, bound.a_hat, b_hat);
        amplitude_update(&mut bound, x);
        track_interference(&mut bound, d);

        bound_kind.apply(&mut bound, receiver.w());
        let gamma = bound.gamma;

        let (outcome, projected): (UpdateOutcome, Option<CVector>) = match (&mut receiver, alg.kind) {
            (Receiver::Sg(s), AlgorithmKind::SmCcmSg) => {
                let u = cfg.analysis.enabled.then(|| s.project(r));
                (sm_ccm_sg_update(s, r, gamma, &mut ops)?, u)
            }
            (Receiver::Sg(s), _) => {
                let u = cfg.analysis.enabled.then(|| s.project(r));
                (baseline_ccm_sg_update(s, r, alg.mu_fixed, &mut ops)?, u)
            }
            (Receiver::Rls(s), AlgorithmKind::SmCcmRls) => (rls_update(s, r, gamma, RlsMode::SetMembership)?, None),
            (Receiver::Rls(s), _) => (
                rls_update(s, r, gamma, RlsMode::Exponential { lambda: alg.lambda_fixed })?,
                None,
            ),
        };
        if outcome.updated {
            updates += 1;
        }

        if blind {
            let (r_inv, weight): (&CMatrix, f64) = match &receiver {
                Receiver::Sg(_) => {
                    let w = tracker.update(r, z, gamma);
                    (tracker.r_inv(), w)
                }
                Receiver::Rls(s) => (s.r_inv(), if outcome.updated { outcome.step_or_lambda } else { 0.0 }),
            };
            if alg.kind == AlgorithmKind::CcmRlsFixed {
                let scaled = ce.upsilon() * C64::new(alg.lambda_fixed, 0.0);
                ce = ce.clone().with_upsilon(scaled, ce.h_hat().clone())?;
                let pw = ce.inverse_power(r_inv);
                upsilon_update(&mut ce, &constraint, bound.a_hat, &pw, 1.0)?;
            } else if weight > 0.0 {
                let pw = ce.inverse_power(r_inv);
                upsilon_update(&mut ce, &constraint, bound.a_hat, &pw, weight)?;
            }
        }

        let b = rv.desired_symbol;
        let h = true_h(&uplink);
        let h_unit = &h / C64::new(norm_sqr(&h).sqrt(), 0.0);
        let rec = MetricsRecord {
            symbol_index: i,
            mse: (b - outcome.output).norm_sqr(),
            ber: bit_errors(b_hat, b),
            updated: if outcome.updated { 1.0 } else { 0.0 },
            gamma,
            v_hat: bound.v_hat,
            a_hat: bound.a_hat,
            channel_mse: channel_mse(&align_phase(ce.h_hat(), &h_unit), &h_unit),
            users: uplink.users().len() as f64,
        };
        if !(rec.mse.is_finite() && rec.gamma.is_finite() && rec.v_hat.is_finite() && rec.a_hat.is_finite()) {
            return Err(Error::numerical(format!("non-finite metrics at symbol {i}")));
        }
        records.push(rec);

        if cfg.analysis.enabled && i >= cfg.analysis.window_start {
            let stale = optimum.as_ref().is_none_or(|o| uplink.params().doppler > 0.0 && i >= o.valid_until);
            if stale {
                let mut o = optimum_stats(&uplink)?;
                o.valid_until = i + 10;
                optimum = Some(o);
            }
            let o = optimum.as_ref().expect("computed above");
            let e = outcome.error;
            window.count += 1.0;
            window.mse += rec.mse;
            window.mse_opt += o.mse;
            window.mai += o.partition.0;
            window.isi += o.partition.1;
            window.noise += o.partition.2;
            window.w_opt_norm2 += o.w_norm2;
            window.e += e;
            window.e2 += e * e;
            window.gamma += gamma;
            window.v_hat += bound.v_hat;
            let rake = uplink.residual_powers(&f);
            window.v_true += rake.mai + rake.isi + rake.noise;
            window.a_hat += bound.a_hat;
            if let Some(u) = projected {
                let u2 = norm_sqr(&u);
                window.u2 += u2;
                window.u4 += u2 * u2;
                let mu = outcome.step_or_lambda;
                window.mu += mu;
                window.mu2 += mu * mu;
                if outcome.updated {
                    window.updates += 1.0;
                    window.step_num += mu * u2;
                    window.step_num2 += (mu * u2).powi(2);
                }
            }
        }

        uplink.advance();
    }

    let channel = if blind {
        let r_inv = match &receiver {
            Receiver::Sg(_) => tracker.r_inv(),
            Receiver::Rls(s) => s.r_inv(),
        };
        let h = true_h(&uplink);
        Some(ChannelSnapshot {
            h_hat: ce.h_hat().clone(),
            h_evd: evd_channel_estimate(r_inv, &constraint)?,
            h_true: &h / C64::new(norm_sqr(&h).sqrt(), 0.0),
        })
    } else {
        None
    };

    Ok(TrialResult {
        trial_index,
        records,
        updates,
        symbols: cfg.scenario.duration,
        ops,
        window,
        channel,
    })
}

/// `(1/T) sum_t N_u,t / N_s,t`.
pub fn update_rate(trials: &[(usize, usize)]) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::domain("update rate of an empty ensemble"));
    }
    let mut acc = 0.0;
    for &(u, s) in trials {
        if s == 0 {
            return Err(Error::domain("trial with zero symbols"));
        }
        acc += u as f64 / s as f64;
    }
    Ok(acc / trials.len() as f64)
}

fn record_fields(r: &MetricsRecord) -> [f64; 8] {
    [r.mse, r.ber, r.updated, r.gamma, r.v_hat, r.a_hat, r.channel_mse, r.users]
}

fn record_from(symbol_index: usize, v: [f64; 8]) -> MetricsRecord {
    MetricsRecord {
        symbol_index,
        mse: v[0],
        ber: v[1],
        updated: v[2],
        gamma: v[3],
        v_hat: v[4],
        a_hat: v[5],
        channel_mse: v[6],
        users: v[7],
    }
}

/// Pointwise mean and 95% normal-approximation half-width of equal-length
/// record streams. A single trial has zero half-width.
pub fn ensemble_average(per_trial: &[Vec<MetricsRecord>]) -> Result<(Vec<MetricsRecord>, Vec<MetricsRecord>)> {
    let first = per_trial.first().ok_or_else(|| Error::domain("empty ensemble"))?;
    let len = first.len();
    if per_trial.iter().any(|t| t.len() != len) {
        return Err(Error::domain("record streams have different lengths"));
    }
    let n = per_trial.len() as f64;
    let mut means = Vec::with_capacity(len);
    let mut halves = Vec::with_capacity(len);
    for i in 0..len {
        let mut sum = [0.0; 8];
        for t in per_trial {
            for (s, v) in sum.iter_mut().zip(record_fields(&t[i])) {
                *s += v;
            }
        }
        let mean = sum.map(|s| s / n);
        let mut half = [0.0; 8];
        if per_trial.len() > 1 {
            let mut ss = [0.0; 8];
            for t in per_trial {
                for ((s, v), m) in ss.iter_mut().zip(record_fields(&t[i])).zip(mean) {
                    *s += (v - m) * (v - m);
                }
            }
            half = ss.map(|s| 1.96 * (s / (n - 1.0)).sqrt() / n.sqrt());
        }
        means.push(record_from(first[i].symbol_index, mean));
        halves.push(record_from(first[i].symbol_index, half));
    }
    Ok((means, halves))
}

/// Outcome of an ensemble at one `E_b/N_0`.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub ebn0_db: f64,
    pub trials: Vec<TrialResult>,
    pub failed: usize,
    pub mean: Vec<MetricsRecord>,
    pub half_width: Vec<MetricsRecord>,
    pub update_rate: f64,
    pub window: WindowStats,
}

impl EnsembleResult {
    /// Mean BER over `[from, to)`.
    pub fn segment_ber(&self, from: usize, to: usize) -> f64 {
        segment_mean(&self.mean, from, to, |r| r.ber)
    }
}

pub fn segment_mean(records: &[MetricsRecord], from: usize, to: usize, f: impl Fn(&MetricsRecord) -> f64) -> f64 {
    let to = to.min(records.len());
    let slice = &records[from.min(to)..to];
    slice.iter().map(f).sum::<f64>() / slice.len().max(1) as f64
}

/// Runs all trials at one `E_b/N_0` on `cfg.threads` workers. Results do
/// not depend on the worker count.
pub fn run_ensemble(cfg: &ExperimentConfig, ebn0_db: f64) -> Result<EnsembleResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::numerical(format!("thread pool: {e}")))?;
    let results: Vec<Result<TrialResult>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, ebn0_db, t)).collect());
    let mut trials = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (t, res) in results.into_iter().enumerate() {
        match res {
            Ok(tr) => trials.push(tr),
            Err(e) => {
                log::warn!("trial {t} at {ebn0_db} dB failed and is excluded: {e}");
                failed += 1;
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::numerical(format!("all {failed} trials failed")));
    }
    let streams: Vec<Vec<MetricsRecord>> = trials.iter().map(|t| t.records.clone()).collect();
    let (mean, half_width) = ensemble_average(&streams)?;
    let ur = update_rate(&trials.iter().map(|t| (t.updates, t.symbols)).collect::<Vec<_>>())?;
    let mut window = WindowStats::default();
    for t in &trials {
        window.merge(&t.window);
    }
    Ok(EnsembleResult {
        ebn0_db,
        trials,
        failed,
        mean,
        half_width,
        update_rate: ur,
        window,
    })
}

/// Simulated-vs-predicted comparison in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub simulated: f64,
    pub predicted: f64,
    pub diff_db: f64,
    pub pass: bool,
}

pub fn compare_analytical(sim_steady_mse: f64, predicted: f64, tolerance_db: f64) -> Result<Comparison> {
    if !(sim_steady_mse.is_finite() && sim_steady_mse > 0.0 && predicted.is_finite() && predicted > 0.0) {
        return Err(Error::domain(format!(
            "comparison needs positive finite values, got {sim_steady_mse:e} and {predicted:e}"
        )));
    }
    let diff_db = 10.0 * (predicted / sim_steady_mse).log10();
    Ok(Comparison {
        simulated: sim_steady_mse,
        predicted,
        diff_db,
        pass: diff_db.abs() <= tolerance_db,
    })
}

/// Closed-form prediction assembled from the steady-state window.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub partition: NoisePartition,
    pub gamma_mean: f64,
    pub sigma_e: f64,
    pub u2: f64,
    pub u4: f64,
    pub moments: StepMoments,
    pub trace_q: f64,
    pub xi: Result<f64>,
    /// Same formula with the step moments measured directly.
    pub empirical_moments: StepMoments,
    pub xi_empirical: Result<f64>,
    pub simulated: f64,
}

pub fn predict(window: &WindowStats, doppler: f64, dim: usize) -> Result<Prediction> {
    if window.count == 0.0 || window.updates == 0.0 {
        return Err(Error::domain("steady-state window has no samples or no updates"));
    }
    let partition = window.partition()?;
    let gamma_mean = window.mean(window.gamma);
    let sigma_e = window.sigma_e();
    let u2 = window.mean(window.u2);
    let u4 = window.mean(window.u4);
    let p_up = prob_update(gamma_mean, sigma_e)?;
    let amp = (window.step_num / window.updates, window.step_num2 / window.updates);
    let moments = step_moments(gamma_mean, p_up, amp, (u2, u4))?;
    let trace_q = jakes_trace_q(doppler, window.mean(window.w_opt_norm2), dim)?;
    let xi = if doppler > 0.0 {
        excess_mse_tracking(&moments, u2, &partition, trace_q)
    } else {
        excess_mse_steady(&moments, u2, &partition)
    };
    let empirical_moments = StepMoments {
        mean_mu: window.mean(window.mu),
        mean_mu2: window.mean(window.mu2),
        p_up: window.updates / window.count,
    };
    let xi_empirical = excess_mse_tracking(&empirical_moments, u2, &partition, trace_q);
    Ok(Prediction {
        partition,
        gamma_mean,
        sigma_e,
        u2,
        u4,
        moments,
        trace_q,
        xi,
        empirical_moments,
        xi_empirical,
        simulated: window.excess_mse(),
    })
}
