//! Experiment configuration (TOML).
//!
//! Every section and key is optional; missing values take the defaults
//! below. Unknown keys are rejected.
//!
//! ```toml
//! seed = 1
//! trials = 100
//! threads = 0            # 0 = all cores
//!
//! [system]
//! n = 31                 # processing gain: 31, 63 or 127
//! users = 8              # initial K, including the desired user
//! interferer_powers_db = []   # K-1 offsets, empty = all 0 dB
//! power_spread_db = 0.0  # log-normal spread of interferer powers
//! taps = 6               # modelled channel length L_p
//! paths_db = [0.0, -3.0, -6.0]
//! ebn0_db = [15.0]
//! doppler = 0.0          # f_d T
//!
//! [algorithm]
//! kind = "sm_ccm_sg"     # sm_ccm_sg | sm_ccm_rls | ccm_sg_fixed | ccm_rls_fixed
//! nu = 1.0
//! delta = 0.01
//! mu_fixed = 0.004
//! lambda_fixed = 0.998
//!
//! [bound]
//! kind = "fixed"         # fixed | pdb | pidb
//! gamma = 0.65
//! alpha = 8.0
//! beta = 0.95
//! tau = 0.35
//! amplitude_mode = "power"    # power | convex | literal
//!
//! [channel]
//! estimation = "blind"   # blind | known
//! p_power = 1
//!
//! [scenario]
//! duration = 3000
//! warmup = 200
//! [[scenario.events]]
//! at = 1000
//! kind = "add_user"
//! power_db = 10.0
//!
//! [analysis]
//! enabled = false
//! window_start = 1500
//! tolerance_db = 2.0
//!
//! [output]
//! dir = "results"
//! csv = true
//! plots = true
//! ```

use serde::{Deserialize, Serialize};

use crate::bounds::{AmplitudeMode, BoundKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub threads: usize,
    pub system: SystemConfig,
    pub algorithm: AlgorithmConfig,
    pub bound: BoundConfig,
    pub channel: ChannelConfig,
    pub scenario: ScenarioScript,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100,
            threads: 0,
            system: SystemConfig::default(),
            algorithm: AlgorithmConfig::default(),
            bound: BoundConfig::default(),
            channel: ChannelConfig::default(),
            scenario: ScenarioScript::default(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n: usize,
    pub users: usize,
    pub interferer_powers_db: Vec<f64>,
    pub power_spread_db: f64,
    pub taps: usize,
    pub paths_db: Vec<f64>,
    pub ebn0_db: Vec<f64>,
    pub doppler: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n: 31,
            users: 8,
            interferer_powers_db: Vec::new(),
            power_spread_db: 0.0,
            taps: 6,
            paths_db: vec![0.0, -3.0, -6.0],
            ebn0_db: vec![15.0],
            doppler: 0.0,
        }
    }
}

impl SystemConfig {
    pub fn gold_degree(&self) -> u32 {
        match self.n {
            63 => 6,
            127 => 7,
            _ => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    SmCcmSg,
    SmCcmRls,
    CcmSgFixed,
    CcmRlsFixed,
}

impl AlgorithmKind {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmKind::SmCcmSg => "SM-CCM-SG",
            AlgorithmKind::SmCcmRls => "SM-CCM-RLS",
            AlgorithmKind::CcmSgFixed => "CCM-SG",
            AlgorithmKind::CcmRlsFixed => "CCM-RLS",
        }
    }

    pub fn is_rls(&self) -> bool {
        matches!(self, AlgorithmKind::SmCcmRls | AlgorithmKind::CcmRlsFixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub nu: f64,
    pub delta: f64,
    pub mu_fixed: f64,
    pub lambda_fixed: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            kind: AlgorithmKind::SmCcmSg,
            nu: 1.0,
            delta: 0.01,
            mu_fixed: 0.004,
            lambda_fixed: 0.998,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    Fixed,
    Pdb,
    Pidb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub kind: BoundVariant,
    /// Fixed bound, or the initial value of the time-varying ones.
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub amplitude_mode: AmplitudeMode,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            kind: BoundVariant::Fixed,
            gamma: 0.65,
            alpha: 8.0,
            beta: 0.95,
            tau: 0.35,
            amplitude_mode: AmplitudeMode::default(),
        }
    }
}

impl BoundConfig {
    pub fn bound_kind(&self) -> BoundKind {
        match self.kind {
            BoundVariant::Fixed => BoundKind::Fixed(self.gamma),
            BoundVariant::Pdb => BoundKind::Pdb,
            BoundVariant::Pidb => BoundKind::Pidb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelEstimation {
    /// SM-BCE with an ideal phase reference.
    Blind,
    /// The receiver is given the true channel.
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub estimation: ChannelEstimation,
    pub p_power: u32,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            estimation: ChannelEstimation::Blind,
            p_power: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    AddUser { power_db: f64 },
    RemoveUser { id: usize },
    SetSnr { db: f64 },
    SetDoppler { fd_t: f64 },
}

// `flatten` rules out `deny_unknown_fields` here; `Event` rejects stray keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub at: usize,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioScript {
    pub duration: usize,
    /// Symbols excluded from BER tallies.
    pub warmup: usize,
    pub events: Vec<TimedEvent>,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        Self {
            duration: 3000,
            warmup: 200,
            events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub enabled: bool,
    /// First symbol of the steady-state window.
    pub window_start: usize,
    pub tolerance_db: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            window_start: 1500,
            tolerance_db: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: bool,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "results".into(),
            csv: true,
            plots: true,
        }
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let key = e
            .message()
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".into());
        Error::config(key, e.to_string().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a configuration back to TOML.
pub fn serialize_config(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::config("<document>", e.to_string()))
}

fn check(ok: bool, key: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, reason()))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        check(self.trials >= 1, "trials", || "must be at least 1".into())?;
        check(matches!(s.n, 31 | 63 | 127), "system.n", || {
            format!("{} not in {{31, 63, 127}}", s.n)
        })?;
        check(s.users >= 1 && s.users <= s.n + 2, "system.users", || {
            format!("{} outside [1, {}]", s.users, s.n + 2)
        })?;
        check(
            s.interferer_powers_db.is_empty() || s.interferer_powers_db.len() == s.users - 1,
            "system.interferer_powers_db",
            || format!("needs {} entries or none", s.users - 1),
        )?;
        check(
            s.interferer_powers_db.iter().all(|v| v.is_finite()),
            "system.interferer_powers_db",
            || "values must be finite".into(),
        )?;
        check(
            s.power_spread_db.is_finite() && s.power_spread_db >= 0.0,
            "system.power_spread_db",
            || "must be >= 0".into(),
        )?;
        check(s.taps >= 1, "system.taps", || "must be >= 1".into())?;
        check(!s.paths_db.is_empty(), "system.paths_db", || "needs at least one path".into())?;
        check(
            s.paths_db.iter().all(|v| v.is_finite()),
            "system.paths_db",
            || "values must be finite".into(),
        )?;
        check(2 * (s.paths_db.len() - 1) < s.taps, "system.taps", || {
            format!("{} paths with up to 2-chip spacing need more than {} taps", s.paths_db.len(), s.taps)
        })?;
        check(!s.ebn0_db.is_empty(), "system.ebn0_db", || "needs at least one value".into())?;
        check(s.ebn0_db.iter().all(|v| v.is_finite()), "system.ebn0_db", || "values must be finite".into())?;
        check(s.doppler.is_finite() && s.doppler >= 0.0, "system.doppler", || "must be >= 0".into())?;

        let a = &self.algorithm;
        check(a.nu.is_finite() && a.nu > 0.0, "algorithm.nu", || "must be > 0".into())?;
        check(a.delta.is_finite() && a.delta > 0.0, "algorithm.delta", || "must be > 0".into())?;
        check(a.mu_fixed.is_finite() && a.mu_fixed >= 0.0, "algorithm.mu_fixed", || "must be >= 0".into())?;
        check(
            a.lambda_fixed > 0.0 && a.lambda_fixed <= 1.0,
            "algorithm.lambda_fixed",
            || format!("{} outside (0, 1]", a.lambda_fixed),
        )?;

        let b = &self.bound;
        check(b.beta > 0.0 && b.beta < 1.0, "bound.beta", || format!("{} outside (0, 1)", b.beta))?;
        check(b.gamma.is_finite() && b.gamma >= 0.0, "bound.gamma", || "must be >= 0".into())?;
        check(b.alpha.is_finite() && b.alpha > 0.0, "bound.alpha", || "must be > 0".into())?;
        check(b.tau.is_finite() && b.tau >= 0.0, "bound.tau", || "must be >= 0".into())?;
        check((1..=2).contains(&self.channel.p_power), "channel.p_power", || {
            format!("{} not in {{1, 2}}", self.channel.p_power)
        })?;

        let sc = &self.scenario;
        check(sc.duration >= 1, "scenario.duration", || "must be >= 1".into())?;
        check(
            sc.events.windows(2).all(|w| w[0].at <= w[1].at),
            "scenario.events",
            || "must be sorted by `at`".into(),
        )?;
        check(sc.events.iter().all(|e| e.at < sc.duration), "scenario.events", || {
            "event scheduled after the end of the scenario".into()
        })?;
        self.check_user_timeline()?;
        check(
            self.analysis.tolerance_db.is_finite() && self.analysis.tolerance_db > 0.0,
            "analysis.tolerance_db",
            || "must be > 0".into(),
        )?;
        Ok(())
    }

    /// Replays the events on user ids to catch removals of absent users.
    fn check_user_timeline(&self) -> Result<()> {
        let mut live: Vec<usize> = (0..self.system.users).collect();
        let mut next = self.system.users;
        for ev in &self.scenario.events {
            match &ev.event {
                Event::AddUser { power_db } => {
                    check(power_db.is_finite(), "scenario.events.power_db", || "must be finite".into())?;
                    live.push(next);
                    next += 1;
                }
                Event::RemoveUser { id } => {
                    check(*id != 0, "scenario.events.id", || "the desired user (id 0) cannot leave".into())?;
                    let pos = live.iter().position(|u| u == id);
                    check(pos.is_some(), "scenario.events.id", || {
                        format!("user {id} is not active at symbol {}", ev.at)
                    })?;
                    live.remove(pos.unwrap());
                }
                Event::SetSnr { db } => {
                    check(db.is_finite(), "scenario.events.db", || "must be finite".into())?;
                }
                Event::SetDoppler { fd_t } => {
                    check(fd_t.is_finite() && *fd_t >= 0.0, "scenario.events.fd_t", || "must be >= 0".into())?;
                }
            }
        }
        check(next <= self.system.n + 2, "scenario.events", || {
            format!("{next} users exceed the {} available codes", self.system.n + 2)
        })
    }

    /// Applies `path = value` (dotted path, TOML literal) for parameter sweeps.
    /// A value that is not a TOML literal is taken as a bare string.
    pub fn with_override(&self, path: &str, value: &str) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&serialize_config(self)?)
            .map_err(|e| Error::config(path, e.to_string()))?;
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().ok_or_else(|| Error::config(path, "empty path"))?;
        let mut node = &mut doc;
        for p in parts {
            node = node
                .get_mut(p)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::config(path, format!("unknown section `{p}`")))?;
        }
        if !node.contains_key(last) {
            return Err(Error::config(path, "unknown key"));
        }
        node.insert(last.to_string(), parsed);
        let text = toml::to_string(&doc).map_err(|e| Error::config(path, e.to_string()))?;
        parse_config(&text)
    }
}

/// The dynamic multiuser scenario used for the update-rate and ordering
/// comparisons: 3000 symbols, blind channel estimation, static channels.
///
/// * symbols 0..1000: desired user, 2 users at +7 dB (ids 1, 2), 5 at 0 dB
///   (ids 3..=7): K = 8.
/// * at 1000: 2 users at +10 dB (ids 8, 9) and 1 at 0 dB (id 10) enter, user 1
///   leaves: K = 10.
/// * at 2000: one +10 dB user (id 8) and the five 0 dB users of the first
///   stage leave, 1 user at +15 dB (id 11) enters: K = 5.
pub fn pinned_dynamic_scenario() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.system.users = 8;
    cfg.system.interferer_powers_db = vec![7.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    cfg.system.ebn0_db = vec![15.0];
    let mut events = vec![
        TimedEvent { at: 1000, event: Event::AddUser { power_db: 10.0 } },
        TimedEvent { at: 1000, event: Event::AddUser { power_db: 10.0 } },
        TimedEvent { at: 1000, event: Event::AddUser { power_db: 0.0 } },
        TimedEvent { at: 1000, event: Event::RemoveUser { id: 1 } },
        TimedEvent { at: 2000, event: Event::RemoveUser { id: 8 } },
    ];
    for id in 3..=7 {
        events.push(TimedEvent { at: 2000, event: Event::RemoveUser { id } });
    }
    events.push(TimedEvent { at: 2000, event: Event::AddUser { power_db: 15.0 } });
    cfg.scenario = ScenarioScript {
        duration: 3000,
        warmup: 200,
        events,
    };
    cfg
}
