//! Multipath fading channels with a Clarke sum-of-sinusoids generator.
//!
//! Each tap `l` has gain `h_l[i] = p_l * alpha_l[i]` where `alpha_l` is a
//! unit-power fading process. With a non-zero normalized Doppler `f_d T`,
//! `alpha_l` is the sum of [`SINUSOIDS`] equal-strength complex sinusoids
//! whose arrival angles are evenly spaced around the circle with a random
//! common rotation, each with its own random phase. With zero Doppler the
//! process is the constant unit phasor `exp(j phi_l)`, so a static channel
//! keeps exactly the configured path powers.

use std::f64::consts::PI;

use rand::Rng;

use crate::{CVector, Error, Result, C64};

/// Sinusoids per tap.
pub const SINUSOIDS: usize = 32;

#[derive(Debug, Clone)]
struct ClarkeOscillator {
    /// Per-sinusoid `cos(theta_n)`.
    cosines: Vec<f64>,
    phases: Vec<f64>,
}

impl ClarkeOscillator {
    fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let rotation = rng.random::<f64>() * 2.0 * PI / SINUSOIDS as f64;
        let cosines = (0..SINUSOIDS)
            .map(|n| (2.0 * PI * n as f64 / SINUSOIDS as f64 + rotation).cos())
            .collect();
        let phases = (0..SINUSOIDS).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Self { cosines, phases }
    }

    fn sample(&self, doppler: f64, time: f64) -> C64 {
        if doppler == 0.0 {
            return C64::from_polar(1.0, self.phases[0]);
        }
        let w = 2.0 * PI * doppler * time;
        let sum: C64 = self
            .cosines
            .iter()
            .zip(&self.phases)
            .map(|(&c, &phi)| C64::from_polar(1.0, w * c + phi))
            .sum();
        sum / (SINUSOIDS as f64).sqrt()
    }
}

/// Per-user multipath channel and its fading-process state.
#[derive(Debug, Clone)]
pub struct ChannelState {
    taps: Vec<C64>,
    path_gains: Vec<f64>,
    oscillators: Vec<ClarkeOscillator>,
    doppler: f64,
    time: u64,
}

impl ChannelState {
    /// `path_gains[l]` is the linear amplitude gain `p_l` of tap `l`
    /// (zero for unused taps). `doppler` is `f_d T` in cycles per symbol.
    pub fn new<R: Rng + ?Sized>(path_gains: Vec<f64>, doppler: f64, rng: &mut R) -> Result<Self> {
        if path_gains.is_empty() {
            return Err(Error::domain("channel needs at least one tap"));
        }
        if path_gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::domain("path gains must be finite and non-negative"));
        }
        if !doppler.is_finite() || doppler < 0.0 {
            return Err(Error::domain("doppler must be finite and non-negative"));
        }
        let oscillators = path_gains.iter().map(|_| ClarkeOscillator::new(rng)).collect();
        let mut state = Self {
            taps: vec![C64::new(0.0, 0.0); path_gains.len()],
            path_gains,
            oscillators,
            doppler,
            time: 0,
        };
        state.refresh();
        Ok(state)
    }

    /// Random multipath profile: path `l` has relative power `relative_db[l]`,
    /// the first path sits at delay 0 and each subsequent path is 1 or 2 chips
    /// after the previous one. Powers are normalised to unit total.
    pub fn random_multipath<R: Rng + ?Sized>(
        taps: usize,
        relative_db: &[f64],
        doppler: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if relative_db.is_empty() {
            return Err(Error::domain("at least one path is required"));
        }
        let mut delays = Vec::with_capacity(relative_db.len());
        let mut delay = 0usize;
        for l in 0..relative_db.len() {
            if l > 0 {
                delay += rng.random_range(1..=2);
            }
            delays.push(delay);
        }
        if delay >= taps {
            return Err(Error::domain(format!(
                "{} paths with up to 2-chip spacing need more than {taps} taps",
                relative_db.len()
            )));
        }
        let total: f64 = relative_db.iter().map(|db| 10f64.powf(db / 10.0)).sum();
        let mut gains = vec![0.0; taps];
        for (&d, db) in delays.iter().zip(relative_db) {
            gains[d] = (10f64.powf(db / 10.0) / total).sqrt();
        }
        Self::new(gains, doppler, rng)
    }

    fn refresh(&mut self) {
        let t = self.time as f64;
        for ((tap, &g), osc) in self.taps.iter_mut().zip(&self.path_gains).zip(&self.oscillators) {
            *tap = if g == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                osc.sample(self.doppler, t) * g
            };
        }
    }

    /// Advances every tap by one symbol interval.
    pub fn fading_step(&mut self) {
        self.time += 1;
        if self.doppler != 0.0 {
            self.refresh();
        }
    }

    pub fn set_doppler(&mut self, doppler: f64) -> Result<()> {
        if !doppler.is_finite() || doppler < 0.0 {
            return Err(Error::domain("doppler must be finite and non-negative"));
        }
        self.doppler = doppler;
        self.refresh();
        Ok(())
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn taps_vector(&self) -> CVector {
        CVector::from_column_slice(&self.taps)
    }

    pub fn path_gains(&self) -> &[f64] {
        &self.path_gains
    }

    pub fn doppler(&self) -> f64 {
        self.doppler
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// J0 by trapezoidal quadrature of (1/pi) int_0^pi cos(x sin t) dt.
    fn bessel_j0_quadrature(x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let mut acc = 0.5 * (1.0 + (x * PI.sin()).cos());
        for k in 1..n {
            acc += (x * (k as f64 * h).sin()).cos();
        }
        acc * h / PI
    }

    #[test]
    fn static_channel_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ch = ChannelState::new(vec![1.0, 0.5, 0.0], 0.0, &mut rng).unwrap();
        let before = ch.taps().to_vec();
        for _ in 0..100 {
            ch.fading_step();
            assert_eq!(ch.taps(), &before[..]);
        }
        assert!((before[0].norm() - 1.0).abs() < 1e-15);
        assert!((before[1].norm() - 0.5).abs() < 1e-15);
        assert_eq!(before[2], C64::new(0.0, 0.0));
    }

    #[test]
    fn autocorrelation_follows_bessel() {
        let doppler = 1e-4;
        let steps = 100_000usize;
        let lags: Vec<usize> = (0..=10).map(|k| k * 500).collect();
        let realizations = 24;
        let mut acc = vec![C64::new(0.0, 0.0); lags.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..realizations {
            let mut ch = ChannelState::new(vec![1.0], doppler, &mut rng).unwrap();
            let mut series = Vec::with_capacity(steps);
            for _ in 0..steps {
                series.push(ch.taps()[0]);
                ch.fading_step();
            }
            for (slot, &lag) in acc.iter_mut().zip(&lags) {
                let count = steps - lag;
                let s: C64 = (0..count).map(|i| series[i + lag] * series[i].conj()).sum();
                *slot += s / count as f64;
            }
        }
        let mut sq = 0.0;
        for (slot, &lag) in acc.iter().zip(&lags) {
            let empirical = slot.re / realizations as f64;
            let oracle = bessel_j0_quadrature(2.0 * PI * doppler * lag as f64);
            sq += (empirical - oracle).powi(2);
        }
        let rms = (sq / lags.len() as f64).sqrt();
        assert!(rms < 0.05, "autocorrelation RMS error {rms}");
    }

    #[test]
    fn tap_power_ratios_match_profile() {
        let gains: Vec<f64> = [0.0, -3.0, -6.0].iter().map(|db: &f64| 10f64.powf(db / 20.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut power = [0.0f64; 3];
        let mut mean = [C64::new(0.0, 0.0); 3];
        let mut samples = 0usize;
        for _ in 0..200 {
            let mut ch = ChannelState::new(gains.clone(), 0.01, &mut rng).unwrap();
            for _ in 0..2000 {
                for l in 0..3 {
                    power[l] += ch.taps()[l].norm_sqr();
                    mean[l] += ch.taps()[l];
                }
                samples += 1;
                ch.fading_step();
            }
        }
        for l in 0..3 {
            let p = power[l] / samples as f64;
            let expected = gains[l] * gains[l];
            assert!((p / expected - 1.0).abs() < 0.05, "tap {l} power {p}");
            assert!((mean[l] / samples as f64).norm() < 0.05 * gains[l]);
        }
        let db1 = 10.0 * (power[1] / power[0]).log10();
        let db2 = 10.0 * (power[2] / power[0]).log10();
        assert!((db1 + 3.0).abs() < 0.3, "{db1}");
        assert!((db2 + 6.0).abs() < 0.3, "{db2}");
    }

    #[test]
    fn random_multipath_spacing_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let ch = ChannelState::random_multipath(6, &[0.0, -3.0, -6.0], 0.0, &mut rng).unwrap();
            let used: Vec<usize> = ch.path_gains().iter().enumerate().filter(|(_, g)| **g > 0.0).map(|(i, _)| i).collect();
            assert_eq!(used.len(), 3);
            assert_eq!(used[0], 0);
            for w in used.windows(2) {
                assert!((1..=2).contains(&(w[1] - w[0])));
            }
            let e: f64 = ch.taps().iter().map(|t| t.norm_sqr()).sum();
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_doppler() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(ChannelState::new(vec![1.0], -1.0, &mut rng).is_err());
        assert!(ChannelState::new(vec![], 0.0, &mut rng).is_err());
    }
}
