//! Discrete-event simulation of BLE advertising and scanning schedules.
//!
//! Time is integer milliseconds. A transmitter broadcasts at
//! `offset + k·T_a + jitter_k`; a receiver listens during windows
//! `[k·T_s + offset, k·T_s + offset + T_w)`. A broadcast is received exactly
//! when its instant falls inside some scan window; received packets get RSS
//! synthesized from the path-loss model plus distance-dependent noise.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::Case;
use crate::seed::derive_seed;
use crate::signal::{synthesize_rss_with, NoiseTable, PathLossModel, RssSample, SignalError};

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("invalid timing config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario file line {line}: {reason}")]
    ScenarioParse { line: usize, reason: String },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Advertising/scanning schedule parameters of one device, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceTimingConfig {
    /// Advertising interval T_a.
    pub adv_interval_ms: i64,
    /// Scan interval T_s.
    pub scan_interval_ms: i64,
    /// Scan window T_w (active listening span within each scan interval).
    pub scan_window_ms: i64,
    /// Signature generation interval T_g.
    pub sig_interval_ms: i64,
    /// Start-time offset applied to both schedules.
    pub phase_offset_ms: i64,
    /// Upper bound of the uniform per-event advertising jitter.
    pub jitter_max_ms: i64,
}

impl DeviceTimingConfig {
    /// 100 ms advertising interval (the low-latency preset).
    pub fn low_latency() -> Self {
        Self { adv_interval_ms: 100, ..Self::base() }
    }

    /// 250 ms advertising interval.
    pub fn balanced() -> Self {
        Self { adv_interval_ms: 250, ..Self::base() }
    }

    /// 1000 ms advertising interval.
    pub fn low_power() -> Self {
        Self { adv_interval_ms: 1000, ..Self::base() }
    }

    fn base() -> Self {
        Self {
            adv_interval_ms: 100,
            scan_interval_ms: 1000,
            scan_window_ms: 1000,
            sig_interval_ms: 5 * 60 * 1000,
            phase_offset_ms: 0,
            jitter_max_ms: 10,
        }
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        if self.adv_interval_ms <= 0 {
            return Err(TimingError::InvalidConfig("advertising interval must be > 0"));
        }
        if self.scan_window_ms <= 0 || self.scan_window_ms > self.scan_interval_ms {
            return Err(TimingError::InvalidConfig("need 0 < scan window <= scan interval"));
        }
        if self.sig_interval_ms <= 0 {
            return Err(TimingError::InvalidConfig("signature interval must be > 0"));
        }
        if self.jitter_max_ms < 0 {
            return Err(TimingError::InvalidConfig("jitter must be >= 0"));
        }
        // keeps advertising times strictly increasing
        if self.jitter_max_ms >= self.adv_interval_ms {
            return Err(TimingError::InvalidConfig("jitter must be smaller than the advertising interval"));
        }
        if self.phase_offset_ms < 0 {
            return Err(TimingError::InvalidConfig("phase offset must be >= 0"));
        }
        Ok(())
    }
}

impl Default for DeviceTimingConfig {
    fn default() -> Self {
        Self::low_latency()
    }
}

/// Piecewise-constant distance-vs-time profile.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    breaks: Vec<(i64, f64)>,
}

impl DistanceProfile {
    /// Breakpoints as (start_ms, meters); the first must start at 0 and the
    /// starts must be strictly increasing, every distance finite and > 0.
    pub fn new(breaks: Vec<(i64, f64)>) -> Result<Self, TimingError> {
        if breaks.is_empty() {
            return Err(TimingError::InvalidScenario("profile needs at least one breakpoint".into()));
        }
        if breaks[0].0 != 0 {
            return Err(TimingError::InvalidScenario("profile must start at t = 0".into()));
        }
        for pair in breaks.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(TimingError::InvalidScenario("profile breakpoints must be strictly increasing".into()));
            }
        }
        if breaks.iter().any(|&(_, d)| !(d.is_finite() && d > 0.0)) {
            return Err(TimingError::InvalidScenario("profile distances must be finite and > 0".into()));
        }
        Ok(Self { breaks })
    }

    pub fn constant(distance_m: f64) -> Self {
        Self::new(vec![(0, distance_m)]).expect("constant profile distance must be > 0")
    }

    pub fn breakpoints(&self) -> &[(i64, f64)] {
        &self.breaks
    }

    /// Distance in effect at time t (the last breakpoint at or before t).
    pub fn distance_at(&self, t_ms: i64) -> f64 {
        let idx = self.breaks.partition_point(|&(start, _)| start <= t_ms);
        self.breaks[idx.saturating_sub(1)].1
    }
}

/// A two-device encounter to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterScenario {
    pub duration_ms: i64,
    pub profile: DistanceProfile,
    pub case: Option<Case>,
    pub tx: DeviceTimingConfig,
    pub rx: DeviceTimingConfig,
    pub seed: u64,
}

impl EncounterScenario {
    pub fn validate(&self) -> Result<(), TimingError> {
        if self.duration_ms <= 0 {
            return Err(TimingError::InvalidScenario("duration must be > 0".into()));
        }
        self.tx.validate()?;
        self.rx.validate()?;
        Ok(())
    }
}

/// Reception times and RSS of one simulated encounter.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTrace {
    /// (reception time in ms, RSS in dBm), time-ascending.
    pub receptions: Vec<(i64, f64)>,
    pub broadcast_count: usize,
}

impl PacketTrace {
    pub fn received_count(&self) -> usize {
        self.receptions.len()
    }
}

/// Broadcast instants `offset + k·T_a + u_k` with `u_k ~ U[0, jitter_max]`,
/// for every instant below `duration`; strictly increasing.
pub fn advertising_times(config: &DeviceTimingConfig, duration_ms: i64, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    advertising_times_with(config, duration_ms, &mut rng)
}

fn advertising_times_with<R: Rng>(
    config: &DeviceTimingConfig,
    duration_ms: i64,
    rng: &mut R,
) -> Vec<i64> {
    assert!(duration_ms > 0, "duration must be > 0");
    let mut times = Vec::new();
    let mut k = 0i64;
    loop {
        let base = config.phase_offset_ms + k * config.adv_interval_ms;
        if base >= duration_ms {
            break;
        }
        let t = if config.jitter_max_ms > 0 {
            base + rng.gen_range(0..=config.jitter_max_ms)
        } else {
            base
        };
        if t < duration_ms {
            times.push(t);
        }
        k += 1;
    }
    debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
    times
}

/// Half-open scan windows `[k·T_s + offset, k·T_s + offset + T_w)` clipped to
/// `[0, duration)`; k ranges over every window that intersects the horizon,
/// so `T_w = T_s` covers `[0, duration)` completely for any offset.
pub fn scan_windows(config: &DeviceTimingConfig, duration_ms: i64) -> Vec<(i64, i64)> {
    assert!(duration_ms > 0, "duration must be > 0");
    let mut windows = Vec::new();
    // smallest k whose window end exceeds 0
    let mut k = (-(config.phase_offset_ms + config.scan_window_ms)).div_euclid(config.scan_interval_ms) + 1;
    loop {
        let start_raw = config.phase_offset_ms + k * config.scan_interval_ms;
        if start_raw >= duration_ms {
            break;
        }
        let start = start_raw.max(0);
        let end = (start_raw + config.scan_window_ms).min(duration_ms);
        if end > start {
            windows.push((start, end));
        }
        k += 1;
    }
    windows
}

/// True when t lies inside one of the (sorted, non-overlapping) windows.
pub fn windows_contain(windows: &[(i64, i64)], t_ms: i64) -> bool {
    let idx = windows.partition_point(|&(start, _)| start <= t_ms);
    idx > 0 && t_ms < windows[idx - 1].1
}

/// Runs one encounter: tx broadcasts, rx scans, packets inside scan windows
/// are received with RSS synthesized at the profile distance. Deterministic
/// from `scenario.seed`; jitter and noise use independent derived streams.
pub fn simulate_reception(
    tx: &DeviceTimingConfig,
    rx: &DeviceTimingConfig,
    scenario: &EncounterScenario,
    model: &PathLossModel,
    noise_lookup: &NoiseTable,
) -> Result<PacketTrace, TimingError> {
    scenario.validate()?;
    tx.validate()?;
    rx.validate()?;

    let broadcasts = advertising_times(tx, scenario.duration_ms, derive_seed(scenario.seed, 0));
    let windows = scan_windows(rx, scenario.duration_ms);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, 1));

    let mut receptions = Vec::new();
    for &t in &broadcasts {
        if windows_contain(&windows, t) {
            let d = scenario.profile.distance_at(t);
            let rss = synthesize_rss_with(model, d, noise_lookup.lookup(d), &mut noise_rng)?;
            receptions.push((t, rss));
        }
    }
    Ok(PacketTrace { receptions, broadcast_count: broadcasts.len() })
}

/// Monte-Carlo mean of received/broadcast over random phase offsets
/// (tx offset ~ U[0, T_a), rx offset ~ U[0, T_s)). Trials that produce no
/// broadcast contribute nothing; returns 0 if every trial was empty.
pub fn reception_rate(
    tx: &DeviceTimingConfig,
    rx: &DeviceTimingConfig,
    duration_ms: i64,
    trials: usize,
    seed: u64,
) -> f64 {
    assert!(trials >= 1, "need at least one trial");
    let mut sum = 0.0;
    let mut counted = 0usize;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, trial as u64));
        let tx_cfg = DeviceTimingConfig {
            phase_offset_ms: rng.gen_range(0..tx.adv_interval_ms),
            ..*tx
        };
        let rx_cfg = DeviceTimingConfig {
            phase_offset_ms: rng.gen_range(0..rx.scan_interval_ms),
            ..*rx
        };
        let broadcasts = advertising_times_with(&tx_cfg, duration_ms, &mut rng);
        if broadcasts.is_empty() {
            continue;
        }
        let windows = scan_windows(&rx_cfg, duration_ms);
        let received = broadcasts.iter().filter(|&&t| windows_contain(&windows, t)).count();
        sum += received as f64 / broadcasts.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

/// Full encounter as an RSS sample stream: reception times become timestamps,
/// profile distances become ground truth, elapsed tracks reception gaps.
pub fn run_encounter(
    scenario: &EncounterScenario,
    model: &PathLossModel,
    noise_lookup: &NoiseTable,
) -> Result<Vec<RssSample>, TimingError> {
    let trace = simulate_reception(&scenario.tx, &scenario.rx, scenario, model, noise_lookup)?;
    let mut samples = Vec::with_capacity(trace.receptions.len());
    let mut prev_t: Option<i64> = None;
    for &(t, rss) in &trace.receptions {
        samples.push(RssSample {
            timestamp_ms: t,
            rss_dbm: rss,
            true_distance_m: Some(scenario.profile.distance_at(t)),
            tx_id: "tx".into(),
            rx_id: "rx".into(),
            case: scenario.case,
            elapsed_ms: prev_t.map(|p| t - p).unwrap_or(0),
        });
        prev_t = Some(t);
    }
    Ok(samples)
}

/// A parsed scenario file: the encounter plus its synthesis noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: EncounterScenario,
    pub noise_var: f64,
}

/// Parses the line-based scenario format: `key=value` headers (duration, T_a,
/// T_s, T_w, T_g, jitter, seed, case, noise_var), then `t_start_ms,distance_m`
/// breakpoints. `#` starts a comment.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, TimingError> {
    let mut config = DeviceTimingConfig::low_latency();
    let mut duration_ms: Option<i64> = None;
    let mut seed = 0u64;
    let mut case: Option<Case> = None;
    let mut noise_var = 0.0f64;
    let mut breaks: Vec<(i64, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: String| TimingError::ScenarioParse { line: line_no, reason };
        if let Some((key, value)) = line.split_once('=') {
            let key = key.trim();
            let value = value.trim();
            match key {
                "duration" => {
                    duration_ms = Some(value.parse().map_err(|_| parse_err(format!("bad duration {value:?}")))?)
                }
                "T_a" => config.adv_interval_ms = value.parse().map_err(|_| parse_err(format!("bad T_a {value:?}")))?,
                "T_s" => config.scan_interval_ms = value.parse().map_err(|_| parse_err(format!("bad T_s {value:?}")))?,
                "T_w" => config.scan_window_ms = value.parse().map_err(|_| parse_err(format!("bad T_w {value:?}")))?,
                "T_g" => config.sig_interval_ms = value.parse().map_err(|_| parse_err(format!("bad T_g {value:?}")))?,
                "jitter" => config.jitter_max_ms = value.parse().map_err(|_| parse_err(format!("bad jitter {value:?}")))?,
                "seed" => seed = value.parse().map_err(|_| parse_err(format!("bad seed {value:?}")))?,
                "case" => {
                    case = Some(value.parse().map_err(|e: String| parse_err(e))?);
                }
                "noise_var" => noise_var = value.parse().map_err(|_| parse_err(format!("bad noise_var {value:?}")))?,
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        } else if let Some((t, d)) = line.split_once(',') {
            let t_ms: i64 = t.trim().parse().map_err(|_| parse_err(format!("bad breakpoint time {t:?}")))?;
            let dist: f64 = d.trim().parse().map_err(|_| parse_err(format!("bad breakpoint distance {d:?}")))?;
            breaks.push((t_ms, dist));
        } else {
            return Err(parse_err(format!("expected key=value or t,distance, got {line:?}")));
        }
    }

    let duration_ms = duration_ms
        .ok_or_else(|| TimingError::InvalidScenario("scenario needs a duration".into()))?;
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(TimingError::InvalidScenario("noise_var must be finite and >= 0".into()));
    }
    let profile = DistanceProfile::new(breaks)?;
    let scenario = EncounterScenario { duration_ms, profile, case, tx: config, rx: config, seed };
    scenario.validate()?;
    Ok(ScenarioFile { scenario, noise_var })
}

pub fn read_scenario_file(path: &Path) -> Result<ScenarioFile, TimingError> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Writes samples as `time_ms,rss_dbm,true_distance_m` rows under a header.
pub fn write_trace_file(path: &Path, samples: &[RssSample]) -> Result<(), TimingError> {
    let mut out = String::from("time_ms,rss_dbm,true_distance_m\n");
    for s in samples {
        let dist = s.true_distance_m.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", s.timestamp_ms, s.rss_dbm, dist));
    }
    fs::write(path, out)?;
    Ok(())
}
