//! Acceptance gate: one printed PASS/FAIL/SKIP line per checkable claim.
//!
//! The property criteria run on synthetic data and always execute. The
//! dataset criteria need the published per-case measurement files; point
//! `PROXITRACE_DATA_DIR` at a directory holding `HH.csv` … `BB.csv` to
//! enable them, otherwise they are reported as SKIP.
//!
//! Run with `cargo test --release -p proxitrace-cli --test acceptance --
//! --nocapture` to see the per-criterion lines.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempfile::tempdir;

use proxitrace_core::classify::{self, ClassifierKind, FeatureVector, Hyperparams, RiskLabel};
use proxitrace_core::dataset::{load_case, summarize, Case, CaseDataset, ColumnMapping,
    PUBLISHED_TOTAL};
use proxitrace_core::eval::{
    accuracy_over_time, classify_outcome, distance_error_cdf, evaluate_case, Method, Outcome,
    Truth,
};
use proxitrace_core::filtering::{moving_average, FilterConfig};
use proxitrace_core::seed::derive_seed;
use proxitrace_core::signal::{
    estimate_distance, fit_path_loss, predict_rss, synthesize_rss_with, NoiseTable, PathLossModel,
    RssSample,
};
use proxitrace_core::signature::{
    expire_signatures, generate_dictionary, generate_signature, log_record, match_signatures,
    Dictionary, ObservedVector, RecordKind, SignatureLog, SignaturePayload, SignatureRecord,
    DEFAULT_EXPIRY_MS, SIGNATURE_DIM,
};
use proxitrace_core::timing::{
    advertising_times, simulate_reception, DeviceTimingConfig, DistanceProfile,
    EncounterScenario,
};

// ---------------------------------------------------------------------------
// reference values from the published measurement campaign

/// Per-distance statistics of the hand-to-hand case: (m, count, mean, var).
const REFERENCE_STATS: [(f64, usize, f64, f64); 13] = [
    (0.2, 1548, -58.9994, 48.8203),
    (0.4, 1203, -62.9967, 9.8685),
    (0.6, 934, -70.3084, 10.7666),
    (0.8, 1080, -74.3167, 16.6930),
    (1.0, 1631, -79.3476, 14.3153),
    (1.2, 1573, -74.7788, 12.7322),
    (1.4, 3986, -80.6468, 41.5620),
    (1.6, 1282, -89.6599, 11.8577),
    (1.8, 1344, -79.4903, 4.8413),
    (2.0, 1101, -80.1835, 15.0263),
    (3.0, 886, -82.1704, 16.0150),
    (4.0, 1220, -88.5475, 10.7254),
    (5.0, 2115, -90.4591, 38.0261),
];

/// Published accuracy anchors: (case, method, smoothed?, mean).
const ACCURACY_ANCHORS: [(Case, Method, bool, f64); 7] = [
    (Case::Hh, Method::Classifier(ClassifierKind::Dt), true, 0.8582),
    (Case::Hh, Method::PathLoss, false, 0.7962),
    (Case::Hh, Method::PathLoss, true, 0.8379),
    (Case::Bb, Method::Classifier(ClassifierKind::Dt), true, 0.9085),
    (Case::Hp, Method::Classifier(ClassifierKind::Dt), true, 0.9075),
    (Case::Hb, Method::PathLoss, true, 0.2333),
    (Case::Pp, Method::Classifier(ClassifierKind::Dt), true, 0.8726),
];

/// Published 80th-percentile absolute ranging errors per case, in meters.
const P80_ANCHORS: [(Case, f64); 6] = [
    (Case::Hh, 1.27),
    (Case::Hp, 0.76),
    (Case::Hb, 3.93),
    (Case::Pb, 14.94),
    (Case::Pp, 1.79),
    (Case::Bb, 1.48),
];

// ---------------------------------------------------------------------------
// gate plumbing

#[derive(Default)]
struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, name: &str, result: Result<(), String>) {
        match result {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                self.failures.push(format!("{name}: {why}"));
            }
        }
    }

    fn skip(&mut self, name: &str, why: &str) {
        println!("SKIP {name}: {why}");
    }
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

#[test]
fn acceptance_gate() {
    let mut gate = Gate::default();

    path_loss_criterion(&mut gate);
    moving_average_criterion(&mut gate);
    timing_criterion(&mut gate);
    signature_criterion(&mut gate);
    classifier_criterion(&mut gate);
    determinism_criterion(&mut gate);
    dataset_criteria(&mut gate);

    assert!(
        gate.failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        gate.failures.len(),
        gate.failures.join("\n")
    );
}

// ---------------------------------------------------------------------------
// property criteria (no dataset required)

/// Models drawn from the physically plausible coefficient band; the very
/// shallow or very loud corners outside it lose the round-trip guarantee to
/// float cancellation, not to any algorithmic defect.
fn random_model(rng: &mut ChaCha8Rng) -> PathLossModel {
    let n = rng.gen_range(1.5..3.0);
    let c = rng.gen_range(-95.0..-45.0);
    PathLossModel::new(n, c).unwrap()
}

/// Independent fit oracle: coarse scan over the exponent with the
/// closed-form optimal constant per exponent, then ternary refinement.
fn grid_fit_sse(points: &[(f64, f64)]) -> f64 {
    let sse_at = |n: f64| -> f64 {
        let c = points.iter().map(|&(d, rss)| rss - d.powf(-n)).sum::<f64>() / points.len() as f64;
        points
            .iter()
            .map(|&(d, rss)| {
                let r = c + d.powf(-n) - rss;
                r * r
            })
            .sum()
    };
    let (mut lo, mut hi, mut best_n) = (0.5f64, 6.0f64, 0.5f64);
    let mut best = f64::INFINITY;
    let mut n = lo;
    while n <= hi {
        let s = sse_at(n);
        if s < best {
            best = s;
            best_n = n;
        }
        n += 1e-3;
    }
    lo = (best_n - 2e-3).max(0.5);
    hi = (best_n + 2e-3).min(6.0);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if sse_at(m1) <= sse_at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    sse_at(0.5 * (lo + hi))
}

fn fit_sse(model: &PathLossModel, points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(d, rss)| {
            let r = predict_rss(model, d).unwrap() - rss;
            r * r
        })
        .sum()
}

fn path_loss_criterion(gate: &mut Gate) {
    gate.check("path-loss round-trip identity to 1e-9 over 1,000 random models", {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let mut result = Ok(());
        'outer: for _ in 0..1000 {
            let model = random_model(&mut rng);
            for _ in 0..4 {
                let d = rng.gen_range(0.1..10.0);
                let rss = predict_rss(&model, d).unwrap();
                let est = estimate_distance(&model, rss);
                if est.saturated || (est.meters - d).abs() > 1e-9 {
                    result = Err(format!(
                        "d={d} came back as {} (n={}, c={})",
                        est.meters,
                        model.n(),
                        model.c()
                    ));
                    break 'outer;
                }
            }
        }
        result
    });

    gate.check("path-loss noiseless fit recovers generation parameters to 1e-6", {
        let truth = PathLossModel::new(2.1, -67.0).unwrap();
        let points: Vec<(f64, f64)> = REFERENCE_STATS
            .iter()
            .map(|&(d, ..)| (d, predict_rss(&truth, d).unwrap()))
            .collect();
        match fit_path_loss(&points) {
            Ok(fitted) => ensure(
                (fitted.n() - truth.n()).abs() < 1e-6 && (fitted.c() - truth.c()).abs() < 1e-6,
                || format!("fitted (n={}, c={})", fitted.n(), fitted.c()),
            ),
            Err(e) => Err(e.to_string()),
        }
    });

    gate.check("path-loss fit residual within 1e-6 of the grid-search oracle on 20 noisy sets", {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF17);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let mut result = Ok(());
        for trial in 0..20 {
            let truth = random_model(&mut rng);
            let points: Vec<(f64, f64)> = REFERENCE_STATS
                .iter()
                .map(|&(d, ..)| (d, predict_rss(&truth, d).unwrap() + noise.sample(&mut rng)))
                .collect();
            let fitted = fit_path_loss(&points).unwrap();
            let ours = fit_sse(&fitted, &points);
            let oracle = grid_fit_sse(&points);
            if ours > oracle + 1e-6 {
                result = Err(format!("trial {trial}: sse {ours} vs oracle {oracle}"));
                break;
            }
        }
        result
    });
}

/// Neumaier-compensated mean over one window: the comparison oracle.
fn compensated_window_mean(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

fn moving_average_criterion(gate: &mut Gate) {
    gate.check("moving average matches the compensated oracle to 1e-12 on 100 streams", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x31A);
        let mut result = Ok(());
        'outer: for _ in 0..100 {
            let len = rng.gen_range(1..400usize);
            let window = rng.gen_range(1..=100usize);
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let got = moving_average(&values, window);
            for i in 0..len {
                let start = (i + 1).saturating_sub(window);
                let want = compensated_window_mean(&values[start..=i]);
                if (got[i] - want).abs() > 1e-12 {
                    result = Err(format!("index {i}, window {window}: {} vs {want}", got[i]));
                    break 'outer;
                }
            }
        }
        result
    });

    gate.check("moving average commutes with constant shifts", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x31B);
        let mut result = Ok(());
        'outer: for _ in 0..50 {
            // dyadic data and shift so full windows must agree bitwise
            let len = rng.gen_range(8..200usize);
            let window = 8usize;
            let shift = 12.5;
            let values: Vec<f64> =
                (0..len).map(|_| f64::from(rng.gen_range(-400i32..400)) * 0.25).collect();
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let base = moving_average(&values, window);
            let moved = moving_average(&shifted, window);
            for i in 0..len {
                let want = base[i] + shift;
                let exact = i + 1 >= window;
                let ok = if exact {
                    moved[i] == want
                } else {
                    // warm-up spans divide by arbitrary lengths; rounding may
                    // differ by an ulp there
                    (moved[i] - want).abs() <= 1e-12
                };
                if !ok {
                    result = Err(format!("index {i}: {} vs {want} (full={exact})", moved[i]));
                    break 'outer;
                }
            }
        }
        result
    });
}

fn random_timing(rng: &mut ChaCha8Rng) -> DeviceTimingConfig {
    let scan_interval_ms = rng.gen_range(100..2000);
    let adv = rng.gen_range(20..500);
    DeviceTimingConfig {
        adv_interval_ms: adv,
        scan_interval_ms,
        scan_window_ms: rng.gen_range(1..=scan_interval_ms),
        sig_interval_ms: 300_000,
        phase_offset_ms: rng.gen_range(0..2000),
        jitter_max_ms: rng.gen_range(0..50.min(adv)),
    }
}

fn timing_criterion(gate: &mut Gate) {
    let model = PathLossModel::new(2.0, -61.0).unwrap();
    let noiseless = NoiseTable::constant(0.0);
    let duration = 300_000i64;

    gate.check("timing receptions equal the interval-membership oracle on 100 random configs", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7131);
        let mut result = Ok(());
        for trial in 0..100 {
            let tx = random_timing(&mut rng);
            let rx = random_timing(&mut rng);
            let scenario = EncounterScenario {
                duration_ms: duration,
                profile: DistanceProfile::constant(1.0),
                case: None,
                tx,
                rx,
                seed: rng.gen(),
            };
            let trace = simulate_reception(&tx, &rx, &scenario, &model, &noiseless).unwrap();
            // The oracle characterizes scan coverage modularly instead of by
            // interval construction: t is heard iff its phase within the scan
            // period falls inside the window.
            let broadcasts = advertising_times(&tx, duration, derive_seed(scenario.seed, 0));
            let expected: Vec<i64> = broadcasts
                .iter()
                .copied()
                .filter(|&t| {
                    (t - rx.phase_offset_ms).rem_euclid(rx.scan_interval_ms) < rx.scan_window_ms
                })
                .collect();
            let got: Vec<i64> = trace.receptions.iter().map(|&(t, _)| t).collect();
            if got != expected {
                result = Err(format!(
                    "trial {trial}: {} receptions vs oracle {}",
                    got.len(),
                    expected.len()
                ));
                break;
            }
        }
        result
    });

    gate.check("continuous scanning receives every broadcast (rate exactly 1)", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7132);
        let mut result = Ok(());
        for _ in 0..20 {
            let mut tx = random_timing(&mut rng);
            let mut rx = random_timing(&mut rng);
            rx.scan_window_ms = rx.scan_interval_ms;
            tx.phase_offset_ms = rng.gen_range(0..tx.adv_interval_ms);
            rx.phase_offset_ms = 0;
            let scenario = EncounterScenario {
                duration_ms: duration,
                profile: DistanceProfile::constant(1.0),
                case: None,
                tx,
                rx,
                seed: rng.gen(),
            };
            let trace = simulate_reception(&tx, &rx, &scenario, &model, &noiseless).unwrap();
            if trace.received_count() != trace.broadcast_count || trace.broadcast_count == 0 {
                result = Err(format!(
                    "{} of {} broadcasts received",
                    trace.received_count(),
                    trace.broadcast_count
                ));
                break;
            }
        }
        result
    });

    gate.check("half-open scan window yields a 0.5 ± 0.02 reception rate", {
        let tx = DeviceTimingConfig {
            adv_interval_ms: 100,
            jitter_max_ms: 0,
            ..DeviceTimingConfig::low_latency()
        };
        let rx = DeviceTimingConfig {
            scan_interval_ms: 1000,
            scan_window_ms: 500,
            jitter_max_ms: 0,
            ..DeviceTimingConfig::low_latency()
        };
        let rate = proxitrace_core::timing::reception_rate(&tx, &rx, 60_000, 1000, 0x7133);
        ensure((rate - 0.5).abs() <= 0.02, || format!("rate {rate}"))
    });
}

fn signature_criterion(gate: &mut Gate) {
    gate.check("signature transform is linear to 1e-9", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x516);
        let mut result = Ok(());
        'outer: for _ in 0..200 {
            let m = rng.gen_range(1..=8usize);
            let dict = generate_dictionary(m, rng.gen()).unwrap();
            let a: Vec<f64> = (0..m).map(|_| rng.gen_range(-100.0..0.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-100.0..0.0)).collect();
            let (alpha, beta) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let mixed: Vec<f64> =
                a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let sig_a =
                generate_signature(&dict, &ObservedVector::from_values(a, 0)).unwrap();
            let sig_b =
                generate_signature(&dict, &ObservedVector::from_values(b, 0)).unwrap();
            let sig_m =
                generate_signature(&dict, &ObservedVector::from_values(mixed, 0)).unwrap();
            for i in 0..SIGNATURE_DIM {
                let want = alpha * sig_a.components[i] + beta * sig_b.components[i];
                if (sig_m.components[i] - want).abs() > 1e-9 {
                    result = Err(format!("component {i}: {} vs {want}", sig_m.components[i]));
                    break 'outer;
                }
            }
        }
        result
    });

    gate.check("identity dictionary passes observations through exactly", {
        let rows: Vec<Vec<f64>> = (0..SIGNATURE_DIM)
            .map(|i| (0..SIGNATURE_DIM).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let dict = Dictionary::from_rows(rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x517);
        let values: Vec<f64> = (0..SIGNATURE_DIM).map(|_| rng.gen_range(-100.0..0.0)).collect();
        let sig = generate_signature(&dict, &ObservedVector::from_values(values.clone(), 42))
            .unwrap();
        ensure(sig.components.to_vec() == values && sig.t_ms == 42, || "not exact".into())
    });

    gate.check("matching agrees with the nested-loop oracle on a 1,000-record log", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x518);
        let pool: Vec<SignaturePayload> = (0..40)
            .map(|_| {
                let mut bytes = [0u8; SIGNATURE_DIM];
                rng.fill(&mut bytes[..]);
                SignaturePayload::from_bytes(bytes)
            })
            .collect();
        let mut log = SignatureLog::new();
        for i in 0..1000i64 {
            let payload = pool[rng.gen_range(0..pool.len())];
            let record = if rng.gen_bool(0.3) {
                SignatureRecord::broadcast(payload, i)
            } else {
                SignatureRecord::observed(payload, i, rng.gen_range(-100.0..-40.0))
            };
            log_record(&mut log, record);
        }
        let uploaded: Vec<SignaturePayload> = pool.iter().copied().step_by(3).collect();
        let got = match_signatures(log.records(), &uploaded);
        let want: Vec<&SignatureRecord> = log
            .records()
            .iter()
            .filter(|r| {
                r.kind == RecordKind::Observed && uploaded.iter().any(|u| *u == r.payload)
            })
            .collect();
        ensure(
            got.len() == want.len()
                && got.iter().map(|(r, _)| r).zip(&want).all(|(a, b)| a == *b),
            || format!("{} matches vs oracle {}", got.len(), want.len()),
        )
    });

    gate.check("retention expiry is exact at ±1 ms around the 14-day cutoff", {
        let now = 20 * 24 * 60 * 60 * 1000i64;
        let payload = SignaturePayload::from_bytes([7; SIGNATURE_DIM]);
        let mut log = SignatureLog::new();
        for tau in [now - DEFAULT_EXPIRY_MS - 1, now - DEFAULT_EXPIRY_MS, now - DEFAULT_EXPIRY_MS + 1, now]
        {
            log_record(&mut log, SignatureRecord::broadcast(payload, tau));
        }
        expire_signatures(&mut log, now, DEFAULT_EXPIRY_MS);
        let taus: Vec<i64> = log.records().iter().map(|r| r.tau_ms).collect();
        ensure(
            taus == vec![now - DEFAULT_EXPIRY_MS, now - DEFAULT_EXPIRY_MS + 1, now],
            || format!("kept {taus:?}"),
        )
    });
}

/// Two clearly separated distance clusters with the published 1 m variance.
fn synthesized_two_distance_samples() -> Vec<RssSample> {
    let model = PathLossModel::new(1.9697807281649715, -80.72971077833557).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5);
    let mut samples = Vec::new();
    for (block, d) in [(0i64, 0.5), (1, 5.0)] {
        for i in 0..500i64 {
            let rss = synthesize_rss_with(&model, d, 14.3153, &mut rng).unwrap();
            samples.push(RssSample {
                timestamp_ms: block * 1_000_000 + i * 100,
                rss_dbm: rss,
                true_distance_m: Some(d),
                tx_id: "tx".into(),
                rx_id: "rx".into(),
                case: None,
                elapsed_ms: 0,
            });
        }
    }
    samples
}

fn classifier_criterion(gate: &mut Gate) {
    gate.check("all five classifiers reach 95% held-out accuracy on synthesized clusters", {
        let samples = synthesized_two_distance_samples();
        let mut result = Ok(());
        for kind in ClassifierKind::ALL {
            let report = evaluate_case(
                &samples,
                Method::Classifier(kind),
                FilterConfig::default(),
                2.0,
                7,
                3,
            )
            .unwrap();
            if report.mean < 0.95 {
                result = Err(format!("{kind}: {:.4}", report.mean));
                break;
            }
        }
        result
    });

    gate.check("kNN with k=1 memorizes its training set exactly", {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6E6E);
        let hp = Hyperparams { knn_k: 1, ..Hyperparams::default() };
        let mut result = Ok(());
        'outer: for _ in 0..20 {
            let mut bytes: Vec<u8> = (0..=255).collect();
            bytes.shuffle(&mut rng);
            bytes.truncate(40);
            let data: Vec<(FeatureVector, RiskLabel)> = bytes
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    let label = if i == 0 || (i > 1 && rng.gen_bool(0.5)) {
                        RiskLabel::High
                    } else {
                        RiskLabel::Low
                    };
                    (FeatureVector::from_byte(b), label)
                })
                .collect();
            let model = classify::train(ClassifierKind::Knn, &data, &hp, 0).unwrap();
            for &(f, label) in &data {
                if classify::predict(&model, f) != label {
                    result = Err(format!("byte {} forgotten", f.byte()));
                    break 'outer;
                }
            }
        }
        result
    });

    gate.check("decision tree training accuracy is 1.0 on consistent data", {
        let mut rng = ChaCha8Rng::seed_from_u64(0xD7);
        let mut result = Ok(());
        'outer: for _ in 0..50 {
            let mut bytes: Vec<u8> = (0..=255).collect();
            bytes.shuffle(&mut rng);
            bytes.truncate(30);
            let data: Vec<(FeatureVector, RiskLabel)> = bytes
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    let label = match i {
                        0 => RiskLabel::High,
                        1 => RiskLabel::Low,
                        _ => {
                            if rng.gen_bool(0.5) {
                                RiskLabel::High
                            } else {
                                RiskLabel::Low
                            }
                        }
                    };
                    (FeatureVector::from_byte(b), label)
                })
                .collect();
            let model =
                classify::train(ClassifierKind::Dt, &data, &Hyperparams::default(), 0).unwrap();
            for &(f, label) in &data {
                if classify::predict(&model, f) != label {
                    result = Err(format!("byte {} misfit", f.byte()));
                    break 'outer;
                }
            }
        }
        result
    });

    gate.check("outcome taxonomy maps all nine (prediction, truth) pairs", {
        use Outcome::*;
        let expected = [
            (RiskLabel::High, Truth::HighContact, TruePositive),
            (RiskLabel::High, Truth::LowContact, FalsePositive),
            (RiskLabel::High, Truth::Absent, FalsePositive),
            (RiskLabel::Low, Truth::HighContact, FalseNegative),
            (RiskLabel::Low, Truth::LowContact, CorrectLow),
            (RiskLabel::Low, Truth::Absent, FalseNegative),
            (RiskLabel::Absent, Truth::HighContact, Miss),
            (RiskLabel::Absent, Truth::LowContact, Miss),
            (RiskLabel::Absent, Truth::Absent, TrueNegative),
        ];
        let mut result = Ok(());
        for (label, truth, outcome) in expected {
            let got = classify_outcome(label, truth);
            if got != outcome {
                result = Err(format!("({label}, {truth}) -> {got:?}, want {outcome:?}"));
                break;
            }
        }
        result
    });
}

// ---------------------------------------------------------------------------
// determinism criterion, exercised through the installed binary

fn proxitrace(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxitrace"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn twice_identical(args: &[&str], dir: &Path, outputs: &[&str]) -> Result<(), String> {
    let mut seen: Vec<(Vec<u8>, Vec<Vec<u8>>)> = Vec::new();
    for _ in 0..2 {
        let run = proxitrace(args, dir);
        if !run.status.success() {
            return Err(format!(
                "command failed: {}",
                String::from_utf8_lossy(&run.stderr)
            ));
        }
        let files: Vec<Vec<u8>> = outputs
            .iter()
            .map(|name| fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}")))
            .collect::<Result<_, _>>()?;
        seen.push((run.stdout, files));
    }
    ensure(seen[0] == seen[1], || "outputs differ between runs".into())
}

fn determinism_criterion(gate: &mut Gate) {
    let dir = tempdir().unwrap();
    let base = dir.path();

    fs::write(
        base.join("walk.scenario"),
        "duration=30000\nT_a=100\nT_s=1000\nT_w=600\nT_g=10000\njitter=20\nseed=9\nnoise_var=2.0\n0,1.0\n15000,4.0\n",
    )
    .unwrap();
    let mut rows = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE7);
    for i in 0..120 {
        let (d, base_rss) = if i % 2 == 0 { (0.5, -52.0) } else { (5.0, -91.0) };
        let rss = base_rss + rng.gen_range(-3.0..3.0);
        rows.push_str(&format!("{d},dev,aa,pp,{rss},100,{}\n", i * 100));
    }
    fs::write(base.join("hh.csv"), rows).unwrap();

    gate.check(
        "determinism: seeded simulate runs are byte-identical",
        twice_identical(
            &["simulate", "--scenario", "walk.scenario", "--out", "trace.csv"],
            base,
            &["trace.csv"],
        ),
    );
    gate.check(
        "determinism: seeded evaluate (and its trained model dump) is byte-identical",
        twice_identical(
            &[
                "evaluate", "--data", "hh.csv", "--method", "svm", "--window", "5", "--repeats",
                "3", "--seed", "11", "--model-out", "svm.model",
            ],
            base,
            &["svm.model"],
        ),
    );
    gate.check(
        "determinism: seeded trace-demo runs are byte-identical",
        twice_identical(
            &[
                "trace-demo", "--devices", "4", "--duration-s", "60", "--seed", "3", "--out",
                "demo.txt",
            ],
            base,
            &["demo.txt"],
        ),
    );
}

// ---------------------------------------------------------------------------
// dataset criteria

fn load_published_cases() -> Result<Vec<CaseDataset>, String> {
    let dir: PathBuf = std::env::var_os("PROXITRACE_DATA_DIR")
        .ok_or("PROXITRACE_DATA_DIR is not set")?
        .into();
    let mapping = ColumnMapping::default();
    let mut out = Vec::new();
    for case in Case::ALL {
        let path = dir.join(format!("{case}.csv"));
        if !path.exists() {
            return Err(format!("{} is missing", path.display()));
        }
        let outcome =
            load_case(&path, &mapping, case).map_err(|e| format!("loading {case}: {e}"))?;
        out.push(outcome.dataset);
    }
    Ok(out)
}

fn dataset_criteria(gate: &mut Gate) {
    const NAMES: [&str; 5] = [
        "dataset: per-case row counts match the published campaign exactly",
        "dataset: per-distance RSS means within 0.01 dBm and variances within 5%",
        "dataset: accuracy anchors within 3 pp and smoothed DT best in every case",
        "dataset: 80th-percentile ranging error within 25% per case, worst on PB",
        "dataset: longer observation helps and saturates beyond 10 s",
    ];

    let cases = match load_published_cases() {
        Ok(cases) => cases,
        Err(why) => {
            for name in NAMES {
                gate.skip(name, &why);
            }
            return;
        }
    };

    gate.check(NAMES[0], {
        let mut result = Ok(());
        let mut total = 0usize;
        for ds in &cases {
            total += ds.samples.len();
            if ds.samples.len() != ds.case.published_count() {
                result = Err(format!(
                    "{}: {} rows, published {}",
                    ds.case,
                    ds.samples.len(),
                    ds.case.published_count()
                ));
                break;
            }
        }
        result
            .and_then(|()| {
                ensure(total == PUBLISHED_TOTAL, || {
                    format!("total {total} vs {PUBLISHED_TOTAL}")
                })
            })
            .and_then(|()| {
                let table_sum: usize = REFERENCE_STATS.iter().map(|r| r.1).sum();
                ensure(table_sum == Case::Hh.published_count(), || {
                    format!("per-distance counts sum to {table_sum}")
                })
            })
    });

    let hh = cases.iter().find(|d| d.case == Case::Hh).expect("all six cases loaded");

    gate.check(NAMES[1], {
        let stats = summarize(hh);
        let mut result = ensure(stats.len() == REFERENCE_STATS.len(), || {
            format!("{} distances vs {}", stats.len(), REFERENCE_STATS.len())
        });
        if result.is_ok() {
            'rows: for &(d, count, mean, var) in &REFERENCE_STATS {
                let Some(s) = stats.iter().find(|s| (s.distance_m - d).abs() < 1e-9) else {
                    result = Err(format!("distance {d} missing"));
                    break 'rows;
                };
                if s.count != count {
                    result = Err(format!("{d} m: count {} vs {count}", s.count));
                    break;
                }
                if (s.mean_rss - mean).abs() > 0.01 {
                    result = Err(format!("{d} m: mean {} vs {mean}", s.mean_rss));
                    break;
                }
                if (s.var_rss - var).abs() > 0.05 * var {
                    result = Err(format!("{d} m: var {} vs {var}", s.var_rss));
                    break;
                }
            }
        }
        result
    });

    // One filtered evaluation per case × method, reused for the anchor and
    // best-in-case checks; plus the raw cells the anchors need.
    let filter = FilterConfig::default();
    let mut result = Ok(());
    let mut filtered_means: Vec<(Case, Method, f64)> = Vec::new();
    'eval: for ds in &cases {
        for method in Method::ALL {
            match evaluate_case(&ds.samples, method, filter, 2.0, 0, 30) {
                Ok(report) => filtered_means.push((ds.case, method, report.mean)),
                Err(e) => {
                    result = Err(format!("{} {method}: {e}", ds.case));
                    break 'eval;
                }
            }
        }
    }
    gate.check(NAMES[2], result.and_then(|()| {
        for &(case, method, smoothed, want) in &ACCURACY_ANCHORS {
            let got = if smoothed {
                filtered_means
                    .iter()
                    .find(|(c, m, _)| *c == case && *m == method)
                    .map(|(_, _, v)| *v)
                    .unwrap()
            } else {
                let ds = cases.iter().find(|d| d.case == case).unwrap();
                evaluate_case(&ds.samples, method, FilterConfig::raw(), 2.0, 0, 30)
                    .map_err(|e| e.to_string())?
                    .mean
            };
            if (got - want).abs() > 0.03 {
                return Err(format!(
                    "{case} {method} {}: {got:.4} vs {want:.4}",
                    if smoothed { "filtered" } else { "raw" }
                ));
            }
        }
        for ds in &cases {
            let dt = filtered_means
                .iter()
                .find(|(c, m, _)| *c == ds.case && *m == Method::Classifier(ClassifierKind::Dt))
                .map(|(_, _, v)| *v)
                .unwrap();
            for (c, m, v) in &filtered_means {
                if *c == ds.case && dt < *v {
                    return Err(format!("{c}: {m} {v:.4} beats DT {dt:.4}"));
                }
            }
        }
        Ok(())
    }));

    gate.check(NAMES[3], {
        let mut worst: Option<(Case, f64)> = None;
        let mut result = Ok(());
        for ds in &cases {
            let stats = summarize(ds);
            let points: Vec<(f64, f64)> =
                stats.iter().map(|s| (s.distance_m, s.mean_rss)).collect();
            let model = match fit_path_loss(&points) {
                Ok(m) => m,
                Err(e) => {
                    result = Err(format!("{}: {e}", ds.case));
                    break;
                }
            };
            let cdf = match distance_error_cdf(&ds.samples, &model, filter) {
                Ok(c) => c,
                Err(e) => {
                    result = Err(format!("{}: {e}", ds.case));
                    break;
                }
            };
            let p80 = cdf.percentile(0.8);
            let want = P80_ANCHORS.iter().find(|(c, _)| *c == ds.case).unwrap().1;
            if (p80 - want).abs() > 0.25 * want {
                result = Err(format!("{}: p80 {p80:.2} vs {want}", ds.case));
                break;
            }
            if worst.map_or(true, |(_, w)| p80 > w) {
                worst = Some((ds.case, p80));
            }
        }
        result.and_then(|()| {
            ensure(worst.map(|(c, _)| c) == Some(Case::Pb), || {
                format!("worst case {:?}", worst)
            })
        })
    });

    gate.check(NAMES[4], {
        let mut result = Ok(());
        'cases: for case in [Case::Hh, Case::Hp, Case::Pp, Case::Bb] {
            let ds = cases.iter().find(|d| d.case == case).unwrap();
            let curve = match accuracy_over_time(
                &ds.samples,
                Method::PathLoss,
                &[1.0, 10.0, 20.0, 60.0],
                2.0,
                0,
                30,
            ) {
                Ok(c) => c,
                Err(e) => {
                    result = Err(format!("{case}: {e}"));
                    break;
                }
            };
            let acc: Vec<f64> = curve.iter().map(|(_, r)| r.mean).collect();
            if acc[1] < acc[0] {
                result = Err(format!("{case}: 10 s {:.4} < 1 s {:.4}", acc[1], acc[0]));
                break;
            }
            for w in acc.windows(2).skip(1) {
                if (w[1] - w[0]).abs() >= 0.01 {
                    result = Err(format!("{case}: drift {:.4} beyond 10 s", w[1] - w[0]));
                    break 'cases;
                }
            }
        }
        result
    });
}
