//! Synchronous DS-CDMA uplink: constraint matrices, user slots and the
//! received-vector synthesis with MAI, ISI and noise.
//!
//! A symbol of user `j` is spread and passed through the chip-spaced channel,
//! giving a waveform `s_j = C_j h_j` of `M = N + L_p - 1` chips. The
//! observation window for symbol `i` covers chips `[iN, iN + M)`; the
//! waveform of symbol `i + m` starts `mN` chips into it, so neighbouring
//! symbols leak into the window as pre- and post-cursor ISI.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelState;
use crate::gold::Signature;
use crate::{CMatrix, CVector, Error, Result, C64};

/// `M x L_p` matrix whose column `j` is the signature delayed by `j` chips.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    entries: CMatrix,
}

impl ConstraintMatrix {
    pub fn new(sig: &Signature, taps: usize) -> Result<Self> {
        if taps < 1 {
            return Err(Error::domain("constraint matrix needs L_p >= 1"));
        }
        let n = sig.len();
        let m = n + taps - 1;
        let chips = sig.chips();
        let entries = CMatrix::from_fn(m, taps, |row, col| {
            if row >= col && row - col < n {
                C64::new(chips[row - col], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(Self { entries })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    /// Observation length M.
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of modelled taps L_p.
    pub fn taps(&self) -> usize {
        self.entries.ncols()
    }

    /// `C h`.
    pub fn apply(&self, h: &CVector) -> CVector {
        &self.entries * h
    }

    /// `C^H v`.
    pub fn adjoint_apply(&self, v: &CVector) -> CVector {
        self.entries.ad_mul(v)
    }
}

/// Number of symbols touched by the channel: 1 without multipath, then
/// 3, 5, ... as the channel length crosses multiples of N.
pub fn isi_span(taps: usize, n: usize) -> usize {
    assert!(taps >= 1 && n >= 1, "isi_span needs L_p >= 1 and N >= 1");
    if taps == 1 {
        1
    } else {
        2 * taps.div_ceil(n) + 1
    }
}

/// Uniform draw from the unit-modulus QPSK constellation `(+-1 +-j)/sqrt 2`.
pub fn qpsk_symbol<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bits: u8 = rng.random_range(0..4);
    C64::new(
        if bits & 1 == 0 { s } else { -s },
        if bits & 2 == 0 { s } else { -s },
    )
}

/// One symbol of a user's transmission together with the channel it saw.
#[derive(Debug, Clone)]
struct Emission {
    symbol: C64,
    taps: CVector,
    /// `C h` for this symbol (without amplitude or symbol).
    waveform: CVector,
}

/// A user of the uplink.
#[derive(Debug, Clone)]
pub struct UserSlot {
    id: usize,
    signature: Signature,
    constraint: ConstraintMatrix,
    amplitude: f64,
    channel: ChannelState,
    /// Emissions for symbols `i - half .. i + half`.
    history: VecDeque<Emission>,
    half_span: usize,
}

impl UserSlot {
    /// Creates a user whose transmission starts at the current symbol.
    pub fn new<R: Rng + ?Sized>(
        id: usize,
        signature: Signature,
        taps: usize,
        amplitude: f64,
        channel: ChannelState,
        rng: &mut R,
    ) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::domain("active users need a positive amplitude"));
        }
        if channel.len() != taps {
            return Err(Error::domain("channel length must equal the modelled taps"));
        }
        let constraint = ConstraintMatrix::new(&signature, taps)?;
        let half_span = (isi_span(taps, signature.len()) - 1) / 2;
        let mut user = Self {
            id,
            signature,
            constraint,
            amplitude,
            channel,
            history: VecDeque::with_capacity(2 * half_span + 1),
            half_span,
        };
        let silent = Emission {
            symbol: C64::new(0.0, 0.0),
            taps: CVector::zeros(taps),
            waveform: CVector::zeros(user.constraint.rows()),
        };
        for _ in 0..half_span {
            user.history.push_back(silent.clone());
        }
        // current symbol uses the channel as it is now; look-ahead symbols
        // advance it
        let first = user.emit(rng);
        user.history.push_back(first);
        for _ in 0..half_span {
            user.channel.fading_step();
            let e = user.emit(rng);
            user.history.push_back(e);
        }
        Ok(user)
    }

    fn emit<R: Rng + ?Sized>(&self, rng: &mut R) -> Emission {
        let taps = self.channel.taps_vector();
        let waveform = self.constraint.apply(&taps);
        Emission {
            symbol: qpsk_symbol(rng),
            taps,
            waveform,
        }
    }

    /// Moves to the next symbol interval.
    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.history.pop_front();
        self.channel.fading_step();
        let e = self.emit(rng);
        self.history.push_back(e);
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn constraint(&self) -> &ConstraintMatrix {
        &self.constraint
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn channel_mut(&mut self) -> &mut ChannelState {
        &mut self.channel
    }

    /// Symbol transmitted in the current interval.
    pub fn current_symbol(&self) -> C64 {
        self.history[self.half_span].symbol
    }

    /// Channel taps for the current interval.
    pub fn current_taps(&self) -> &CVector {
        &self.history[self.half_span].taps
    }

    /// Effective signature `C h` for the current interval.
    pub fn effective_signature(&self) -> &CVector {
        &self.history[self.half_span].waveform
    }

    /// Windowed contributions (scaled by the amplitude, without symbols) of
    /// every symbol that reaches the current observation, keyed by offset.
    pub fn components(&self) -> Vec<(i64, C64, CVector)> {
        let n = self.signature.len() as i64;
        let m = self.constraint.rows();
        let half = self.half_span as i64;
        self.history
            .iter()
            .enumerate()
            .map(|(slot, e)| {
                let offset = slot as i64 - half;
                let mut v = CVector::zeros(m);
                for pos in 0..m as i64 {
                    let idx = pos - offset * n;
                    if (0..m as i64).contains(&idx) {
                        v[pos as usize] = e.waveform[idx as usize] * self.amplitude;
                    }
                }
                (offset, e.symbol, v)
            })
            .collect()
    }
}

/// Observation for one symbol interval with its exact decomposition.
#[derive(Debug, Clone)]
pub struct ReceivedVector {
    pub samples: CVector,
    pub desired: CVector,
    pub mai: CVector,
    pub isi: CVector,
    pub noise: CVector,
    /// Transmitted symbol of the desired user.
    pub desired_symbol: C64,
}

impl ReceivedVector {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Builds `r = sum_k A_k b_k C_k h_k + eta + n` for the current interval.
/// `users[0]` is the desired user.
pub fn compose_received<R: Rng + ?Sized>(
    users: &[UserSlot],
    noise_power: f64,
    rng: &mut R,
) -> Result<ReceivedVector> {
    let first = users
        .first()
        .ok_or_else(|| Error::domain("at least the desired user is required"))?;
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return Err(Error::domain("noise power must be finite and non-negative"));
    }
    let m = first.constraint.rows();
    let n = first.signature.len();
    if users
        .iter()
        .any(|u| u.constraint.rows() != m || u.signature.len() != n)
    {
        return Err(Error::domain("all users must share N and L_p"));
    }

    let zero = C64::new(0.0, 0.0);
    let mut desired = CVector::from_element(m, zero);
    let mut mai = CVector::from_element(m, zero);
    let mut isi = CVector::from_element(m, zero);
    for (k, user) in users.iter().enumerate() {
        for (offset, symbol, v) in user.components() {
            let target = match (k, offset) {
                (0, 0) => &mut desired,
                (_, 0) => &mut mai,
                _ => &mut isi,
            };
            target.axpy(symbol, &v, C64::new(1.0, 0.0));
        }
    }

    let scale = (noise_power / 2.0).sqrt();
    let noise = CVector::from_fn(m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let samples = CVector::from_fn(m, |i, _| desired[i] + mai[i] + isi[i] + noise[i]);
    Ok(ReceivedVector {
        samples,
        desired,
        mai,
        isi,
        noise,
        desired_symbol: first.current_symbol(),
    })
}

/// Noise power per complex chip for a given `E_b/N_0` of the desired user
/// under QPSK (two bits per unit-norm symbol of energy `A^2`).
pub fn noise_power_for_ebn0(amplitude: f64, ebn0_db: f64) -> f64 {
    amplitude * amplitude / (2.0 * 10f64.powf(ebn0_db / 10.0))
}

/// Static parameters of the uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkParams {
    /// Modelled channel length / receiver taps.
    pub taps: usize,
    /// Relative powers of the physical paths in dB.
    pub paths_db: Vec<f64>,
    pub doppler: f64,
    pub ebn0_db: f64,
}

/// Residual powers of a filter output split by origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPowers {
    pub mai: f64,
    pub isi: f64,
    pub noise: f64,
}

/// The multiuser uplink: owns the users, the code set and the trial RNG.
#[derive(Debug, Clone)]
pub struct Uplink {
    params: UplinkParams,
    codes: Vec<Signature>,
    users: Vec<UserSlot>,
    next_id: usize,
    noise_power: f64,
    rng: ChaCha8Rng,
}

impl Uplink {
    /// Creates the uplink with the desired user (amplitude 1) and the given
    /// interferers (power offsets in dB relative to the desired user).
    pub fn new(
        params: UplinkParams,
        codes: Vec<Signature>,
        interferers_db: &[f64],
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::domain("empty code set"));
        }
        let noise_power = noise_power_for_ebn0(1.0, params.ebn0_db);
        let mut uplink = Self {
            params,
            codes,
            users: Vec::new(),
            next_id: 0,
            noise_power,
            rng,
        };
        uplink.add_user(0.0)?;
        for &db in interferers_db {
            uplink.add_user(db)?;
        }
        Ok(uplink)
    }

    /// Adds a user at `power_db` relative to the desired user; returns its id.
    pub fn add_user(&mut self, power_db: f64) -> Result<usize> {
        if !power_db.is_finite() {
            return Err(Error::domain("user power offset must be finite"));
        }
        let id = self.next_id;
        if id >= self.codes.len() {
            return Err(Error::domain(format!(
                "code set exhausted: {} codes available",
                self.codes.len()
            )));
        }
        let channel = ChannelState::random_multipath(
            self.params.taps,
            &self.params.paths_db,
            self.params.doppler,
            &mut self.rng,
        )?;
        let amplitude = 10f64.powf(power_db / 20.0);
        let user = UserSlot::new(
            id,
            self.codes[id].clone(),
            self.params.taps,
            amplitude,
            channel,
            &mut self.rng,
        )?;
        self.users.push(user);
        self.next_id += 1;
        Ok(id)
    }

    pub fn remove_user(&mut self, id: usize) -> Result<()> {
        if id == 0 {
            return Err(Error::domain("the desired user cannot be removed"));
        }
        let pos = self
            .users
            .iter()
            .position(|u| u.id == id)
            .ok_or_else(|| Error::domain(format!("user {id} is not active")))?;
        self.users.remove(pos);
        Ok(())
    }

    pub fn set_ebn0(&mut self, ebn0_db: f64) {
        self.params.ebn0_db = ebn0_db;
        self.noise_power = noise_power_for_ebn0(1.0, ebn0_db);
    }

    pub fn set_doppler(&mut self, doppler: f64) -> Result<()> {
        self.params.doppler = doppler;
        for u in &mut self.users {
            u.channel_mut().set_doppler(doppler)?;
        }
        Ok(())
    }

    /// Observation for the current interval.
    pub fn receive(&mut self) -> Result<ReceivedVector> {
        compose_received(&self.users, self.noise_power, &mut self.rng)
    }

    /// Moves every user to the next symbol interval.
    pub fn advance(&mut self) {
        for u in &mut self.users {
            u.advance(&mut self.rng);
        }
    }

    pub fn users(&self) -> &[UserSlot] {
        &self.users
    }

    pub fn desired(&self) -> &UserSlot {
        &self.users[0]
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn params(&self) -> &UplinkParams {
        &self.params
    }

    /// Observation length M.
    pub fn dim(&self) -> usize {
        self.users[0].constraint.rows()
    }

    /// Exact covariance `E[r r^H]` for the current interval.
    pub fn covariance(&self) -> CMatrix {
        let m = self.dim();
        let mut r = CMatrix::identity(m, m) * C64::new(self.noise_power, 0.0);
        for user in &self.users {
            for (_, symbol, v) in user.components() {
                // silent history slots carry a zero symbol
                if symbol.norm_sqr() > 0.0 {
                    r.gerc(C64::new(1.0, 0.0), &v, &v, C64::new(1.0, 0.0));
                }
            }
        }
        crate::linalg::hermitize(&mut r);
        r
    }

    /// `A_1 C_1 h_1` for the current interval.
    pub fn desired_signature(&self) -> CVector {
        self.users[0].effective_signature() * C64::new(self.users[0].amplitude, 0.0)
    }

    /// Output powers of MAI, ISI and noise after filtering with `w`.
    pub fn residual_powers(&self, w: &CVector) -> ResidualPowers {
        let mut mai = 0.0;
        let mut isi = 0.0;
        for (k, user) in self.users.iter().enumerate() {
            for (offset, symbol, v) in user.components() {
                if symbol.norm_sqr() == 0.0 {
                    continue;
                }
                let p = w.dotc(&v).norm_sqr();
                match (k, offset) {
                    (0, 0) => {}
                    (_, 0) => mai += p,
                    _ => isi += p,
                }
            }
        }
        ResidualPowers {
            mai,
            isi,
            noise: self.noise_power * crate::linalg::norm_sqr(w),
        }
    }

    /// Linear MMSE receiver `A_1 R^-1 p_1` and its minimum MSE.
    pub fn mmse_receiver(&self) -> Result<(CVector, f64)> {
        let r = self.covariance();
        let p = self.desired_signature();
        let w = crate::linalg::hpd_solve(&r, &p)?;
        let mmse = 1.0 - p.dotc(&w).re;
        Ok((w, mmse.max(0.0)))
    }
}
