//! End-to-end tracing walkthrough with several devices.
//!
//! A handful of devices broadcast rotating signature payloads while scanning
//! for everyone else's. Afterwards one device is marked infected and uploads
//! the payloads it broadcast; every other device checks its own observation
//! log against that upload, filters the matched RSS readings, and turns the
//! mean into a proximity verdict. Everything is derived from one seed, so a
//! rerun reproduces the report byte for byte.

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxitrace_core::classify::{
    encode_rss_8bit, pl_classify, predict, RiskLabel, TrainedClassifier,
};
use proxitrace_core::eval::{classify_outcome, Outcome, Truth};
use proxitrace_core::filtering::{moving_average, FilterConfig};
use proxitrace_core::seed::derive_seed;
use proxitrace_core::signal::{synthesize_rss_with, PathLossModel};
use proxitrace_core::signature::{
    generate_dictionary, generate_signature, log_record, match_signatures, quantize_signature,
    ObservedVector, RecordKind, SignatureLog, SignaturePayload, SignatureRecord,
    DEFAULT_QUANT_BOUNDS,
};
use proxitrace_core::timing::{advertising_times, scan_windows, windows_contain, DeviceTimingConfig};

/// Ambient RSS readings feeding the signature generator are drawn uniformly
/// from this dBm range.
const AMBIENT_RSS_RANGE: (f64, f64) = (-90.0, -40.0);

/// One participant: its distance from the meeting point, and optionally the
/// span during which it is switched on (`None` = the whole run).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceSpec {
    pub radius_m: f64,
    pub active_ms: Option<(i64, i64)>,
}

impl DeviceSpec {
    pub fn at(radius_m: f64) -> Self {
        Self { radius_m, active_ms: None }
    }

    fn is_active(&self, t_ms: i64) -> bool {
        self.active_ms.map_or(true, |(start, end)| start <= t_ms && t_ms < end)
    }
}

/// Full demo setup. Devices sit on a star around the meeting point, so the
/// distance between two devices is the sum of their radii.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub devices: Vec<DeviceSpec>,
    /// Index of the device later marked infected.
    pub infected: usize,
    pub duration_ms: i64,
    pub seed: u64,
    pub threshold_m: f64,
    pub model: PathLossModel,
    pub noise_var: f64,
    pub timing: DeviceTimingConfig,
    pub filter: FilterConfig,
    /// Ambient observation dimension m fed into each signature.
    pub dict_m: usize,
}

impl DemoConfig {
    /// Default cast: the infected device at the center, the others alternating
    /// between 1 m (inside a 2 m threshold) and 5 m (outside it).
    pub fn star(devices: usize, duration_ms: i64, infected: usize, seed: u64) -> Self {
        let specs = (0..devices)
            .map(|dev| {
                if dev == infected {
                    DeviceSpec::at(0.0)
                } else {
                    // Count position among the non-infected devices so the
                    // near/far alternation is independent of where the
                    // infected device sits in the list.
                    let rank = dev - usize::from(dev > infected);
                    DeviceSpec::at(if rank % 2 == 0 { 1.0 } else { 5.0 })
                }
            })
            .collect();
        Self {
            devices: specs,
            infected,
            duration_ms,
            seed,
            threshold_m: 2.0,
            model: reference_model(),
            noise_var: 2.0,
            timing: DeviceTimingConfig::low_latency(),
            filter: FilterConfig::default(),
            dict_m: 8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.devices.len() < 2 {
            bail!("demo needs at least two devices");
        }
        if self.infected >= self.devices.len() {
            bail!(
                "infected index {} out of range for {} devices",
                self.infected,
                self.devices.len()
            );
        }
        if self.duration_ms <= 0 {
            bail!("duration must be positive");
        }
        if !(self.threshold_m.is_finite() && self.threshold_m > 0.0) {
            bail!("threshold must be finite and positive");
        }
        if self.dict_m == 0 {
            bail!("signature observation dimension must be at least 1");
        }
        if self.filter.window == 0 {
            bail!("filter window must be at least 1");
        }
        let zero_radii = self.devices.iter().filter(|d| d.radius_m == 0.0).count();
        if zero_radii > 1 {
            bail!("at most one device may sit at the center (two would be 0 m apart)");
        }
        if self.devices.iter().any(|d| !(d.radius_m.is_finite() && d.radius_m >= 0.0)) {
            bail!("device radii must be finite and >= 0");
        }
        if let Some(bad) = self
            .devices
            .iter()
            .find(|d| d.active_ms.is_some_and(|(start, end)| start >= end || start < 0))
        {
            bail!("invalid active span {:?}", bad.active_ms);
        }
        self.timing.validate().context("demo timing")?;
        Ok(())
    }
}

/// The fitted reference coefficients shipped with the tool; used when the
/// caller does not supply a model file.
pub fn reference_model() -> PathLossModel {
    PathLossModel::new(1.9697807281649715, -80.72971077833557)
        .expect("reference coefficients are valid")
}

/// What tracing concluded about one non-infected device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceOutcome {
    pub device: usize,
    /// Distance to the infected device; `None` when their active spans never
    /// overlapped, i.e. no encounter happened at all.
    pub true_distance_m: Option<f64>,
    pub truth: Truth,
    pub matched: usize,
    /// Matched receptions times the advertising interval.
    pub copresence_ms: i64,
    pub mean_rss_dbm: Option<f64>,
    pub estimated_m: Option<f64>,
    pub label: RiskLabel,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub devices: usize,
    pub infected: usize,
    pub duration_ms: i64,
    pub threshold_m: f64,
    /// Number of payloads the infected device uploaded.
    pub uploaded: usize,
    pub outcomes: Vec<DeviceOutcome>,
}

fn outcome_name(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::TruePositive => "true-positive",
        Outcome::TrueNegative => "true-negative",
        Outcome::FalsePositive => "false-positive",
        Outcome::FalseNegative => "false-negative",
        Outcome::Miss => "miss",
        Outcome::CorrectLow => "correct-low",
    }
}

impl DemoReport {
    /// Deterministic line-based rendering; reruns with the same config are
    /// byte-identical.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "devices={} infected={} duration_ms={} threshold_m={} uploaded={}\n",
            self.devices, self.infected, self.duration_ms, self.threshold_m, self.uploaded
        ));
        out.push_str("note=co-presence is reported as-is; no exposure-duration cutoff is applied\n");
        for o in &self.outcomes {
            let dist = o.true_distance_m.map_or("-".into(), |d| format!("{d}"));
            let mean = o.mean_rss_dbm.map_or("-".into(), |v| format!("{v:.6}"));
            let est = o.estimated_m.map_or("-".into(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "device={} distance_m={} truth={} matched={} copresence_ms={} \
                 mean_rss_dbm={} est_m={} label={} outcome={}\n",
                o.device,
                dist,
                o.truth,
                o.matched,
                o.copresence_ms,
                mean,
                est,
                o.label,
                outcome_name(o.outcome)
            ));
        }
        out
    }
}

/// Re-derives each device's label from a trained classifier instead of the
/// path-loss rule. Absent devices stay absent; the distance-estimate column
/// is dropped because classifiers don't produce one.
pub fn reclassify_with(report: &DemoReport, model: &TrainedClassifier) -> DemoReport {
    let mut out = report.clone();
    for o in &mut out.outcomes {
        let Some(mean) = o.mean_rss_dbm else { continue };
        o.label = predict(model, encode_rss_8bit(mean));
        o.estimated_m = None;
        o.outcome = classify_outcome(o.label, o.truth);
    }
    out
}

/// Whether two devices' active spans overlap at all within the run.
fn spans_overlap(a: &DeviceSpec, b: &DeviceSpec, duration_ms: i64) -> bool {
    let (a0, a1) = a.active_ms.unwrap_or((0, duration_ms));
    let (b0, b1) = b.active_ms.unwrap_or((0, duration_ms));
    a0.max(b0) < a1.min(b1).min(duration_ms)
}

/// Runs the whole exchange-then-trace pipeline.
pub fn run_demo(config: &DemoConfig) -> Result<DemoReport> {
    config.validate()?;
    let n = config.devices.len();
    let t_g = config.timing.sig_interval_ms;
    let epochs = ((config.duration_ms + t_g - 1) / t_g) as usize;

    // Every device rotates its payload each signature interval, derived from
    // its own dictionary and ambient observation stream.
    let mut payloads: Vec<Vec<SignaturePayload>> = Vec::with_capacity(n);
    for dev in 0..n {
        let dict = generate_dictionary(config.dict_m, derive_seed(config.seed, 1000 + dev as u64))
            .context("dictionary generation")?;
        let mut ambient =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2000 + dev as u64));
        let mut per_epoch = Vec::with_capacity(epochs);
        for e in 0..epochs {
            let values: Vec<f64> = (0..config.dict_m)
                .map(|_| ambient.gen_range(AMBIENT_RSS_RANGE.0..AMBIENT_RSS_RANGE.1))
                .collect();
            let obs = ObservedVector::from_values(values, e as i64 * t_g);
            let sig = generate_signature(&dict, &obs).context("signature generation")?;
            per_epoch.push(quantize_signature(&sig, DEFAULT_QUANT_BOUNDS)?);
        }
        payloads.push(per_epoch);
    }

    // Local logs: own broadcasts plus whatever was heard from the others.
    let mut logs: Vec<SignatureLog> = (0..n).map(|_| SignatureLog::new()).collect();
    for dev in 0..n {
        for (e, payload) in payloads[dev].iter().enumerate() {
            let t = e as i64 * t_g;
            if config.devices[dev].is_active(t) {
                log_record(&mut logs[dev], SignatureRecord::broadcast(*payload, t));
            }
        }
    }

    // Packet exchange per ordered transmitter/receiver pair. All devices run
    // the same scan schedule; jitter and channel noise get independent seed
    // streams per pair so no link influences another.
    let windows = scan_windows(&config.timing, config.duration_ms);
    for tx in 0..n {
        for rx in 0..n {
            if tx == rx {
                continue;
            }
            let pair = (tx * n + rx) as u64;
            let adv = advertising_times(
                &config.timing,
                config.duration_ms,
                derive_seed(config.seed, 3000 + pair),
            );
            let mut noise = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 4000 + pair));
            let d = config.devices[tx].radius_m + config.devices[rx].radius_m;
            for t in adv {
                if !windows_contain(&windows, t)
                    || !config.devices[tx].is_active(t)
                    || !config.devices[rx].is_active(t)
                {
                    continue;
                }
                let rss = synthesize_rss_with(&config.model, d, config.noise_var, &mut noise)
                    .context("rss synthesis")?;
                let e = (t / t_g) as usize;
                log_record(&mut logs[rx], SignatureRecord::observed(payloads[tx][e], t, rss));
            }
        }
    }

    // Tracing: the infected device uploads the payloads it actually broadcast;
    // everyone else intersects their observations with that upload.
    let uploaded: Vec<SignaturePayload> = logs[config.infected]
        .records()
        .iter()
        .filter(|r| r.kind == RecordKind::Broadcast)
        .map(|r| r.payload)
        .collect();

    let mut outcomes = Vec::with_capacity(n - 1);
    for dev in 0..n {
        if dev == config.infected {
            continue;
        }
        let matches = match_signatures(logs[dev].records(), &uploaded);
        let matched = matches.len();
        let copresence_ms = matched as i64 * config.timing.adv_interval_ms;

        let encountered =
            spans_overlap(&config.devices[dev], &config.devices[config.infected], config.duration_ms);
        let true_distance =
            config.devices[dev].radius_m + config.devices[config.infected].radius_m;
        let truth = if !encountered {
            Truth::Absent
        } else if true_distance <= config.threshold_m {
            Truth::HighContact
        } else {
            Truth::LowContact
        };

        let (label, mean_rss, estimated) = if matched == 0 {
            (RiskLabel::Absent, None, None)
        } else {
            let raw: Vec<f64> = matches
                .iter()
                .map(|(rec, _)| rec.rss_dbm.expect("matched records are observations"))
                .collect();
            let filtered = moving_average(&raw, config.filter.window);
            let mean = filtered.iter().sum::<f64>() / filtered.len() as f64;
            let decision = pl_classify(&config.model, mean, config.threshold_m);
            (decision.label, Some(mean), Some(decision.estimate.meters))
        };

        outcomes.push(DeviceOutcome {
            device: dev,
            true_distance_m: encountered.then_some(true_distance),
            truth,
            matched,
            copresence_ms,
            mean_rss_dbm: mean_rss,
            estimated_m: estimated,
            label,
            outcome: classify_outcome(label, truth),
        });
    }

    Ok(DemoReport {
        devices: n,
        infected: config.infected,
        duration_ms: config.duration_ms,
        threshold_m: config.threshold_m,
        uploaded: uploaded.len(),
        outcomes,
    })
}
