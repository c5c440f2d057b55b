//! Risk-evaluation pipeline: outcome taxonomy, confusion matrices, repeated
//! train/test splits, and the parameter sweeps (window, threshold, duration).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classify::{
    self, encode_rss_8bit, pl_classify, threshold_classify, ClassifierKind, ClassifyError,
    FeatureVector, Hyperparams, RiskLabel, TrainedClassifier,
};
use crate::filtering::{moving_average, FilterConfig, FilterError};
use crate::signal::{estimate_distance, fit_path_loss, PathLossModel, RssSample, SignalError};

const TRAIN_FRACTION: f64 = 0.8;
const Z_95: f64 = 1.959964;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no labeled samples to evaluate")]
    NoLabeledSamples,
    #[error("all samples fall in one risk class at this threshold")]
    SingleClass,
    #[error("split leaves an empty train or test set")]
    DegenerateSplit,
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("durations must be positive and finite")]
    InvalidDuration,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Ground truth for one evaluated contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    /// In contact within the distancing threshold.
    HighContact,
    /// In contact but beyond the threshold.
    LowContact,
    /// Not in contact at all.
    Absent,
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::HighContact => "h",
            Truth::LowContact => "l",
            Truth::Absent => "a",
        })
    }
}

/// Where one (prediction, truth) pair lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
    Miss,
    /// Correct low-risk call on a beyond-threshold contact; kept out of the
    /// false-positive/false-negative error buckets by design.
    CorrectLow,
}

/// Maps every (prediction, truth) pair to exactly one bucket.
pub fn classify_outcome(predicted: RiskLabel, truth: Truth) -> Outcome {
    match (predicted, truth) {
        (RiskLabel::High, Truth::HighContact) => Outcome::TruePositive,
        (RiskLabel::High, Truth::LowContact) => Outcome::FalsePositive,
        (RiskLabel::High, Truth::Absent) => Outcome::FalsePositive,
        (RiskLabel::Low, Truth::HighContact) => Outcome::FalseNegative,
        (RiskLabel::Low, Truth::LowContact) => Outcome::CorrectLow,
        (RiskLabel::Low, Truth::Absent) => Outcome::FalseNegative,
        (RiskLabel::Absent, Truth::HighContact) => Outcome::Miss,
        (RiskLabel::Absent, Truth::LowContact) => Outcome::Miss,
        (RiskLabel::Absent, Truth::Absent) => Outcome::TrueNegative,
    }
}

/// Counts per outcome bucket; the six buckets sum to the evaluated total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeTally {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub miss: usize,
    pub correct_low: usize,
}

impl OutcomeTally {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::TruePositive => self.true_positive += 1,
            Outcome::TrueNegative => self.true_negative += 1,
            Outcome::FalsePositive => self.false_positive += 1,
            Outcome::FalseNegative => self.false_negative += 1,
            Outcome::Miss => self.miss += 1,
            Outcome::CorrectLow => self.correct_low += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive
            + self.true_negative
            + self.false_positive
            + self.false_negative
            + self.miss
            + self.correct_low
    }
}

/// 2x2 counts over predicted x truth, both restricted to {+1, -1}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub high_high: usize,
    pub high_low: usize,
    pub low_high: usize,
    pub low_low: usize,
}

impl ConfusionMatrix {
    /// Tallies one binary pair; pairs touching the absent label don't belong
    /// in a 2x2 matrix and are ignored.
    pub fn add(&mut self, predicted: RiskLabel, truth: RiskLabel) {
        match (predicted, truth) {
            (RiskLabel::High, RiskLabel::High) => self.high_high += 1,
            (RiskLabel::High, RiskLabel::Low) => self.high_low += 1,
            (RiskLabel::Low, RiskLabel::High) => self.low_high += 1,
            (RiskLabel::Low, RiskLabel::Low) => self.low_low += 1,
            _ => {}
        }
    }

    pub fn total(&self) -> usize {
        self.high_high + self.high_low + self.low_high + self.low_low
    }

    /// Diagonal fraction.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        debug_assert!(total > 0);
        (self.high_high + self.low_low) as f64 / total as f64
    }
}

/// Tallies parallel prediction/truth lists and returns the diagonal fraction.
pub fn confusion_and_accuracy(
    predictions: &[RiskLabel],
    truths: &[RiskLabel],
) -> Result<(ConfusionMatrix, f64), EvalError> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(EvalError::NoLabeledSamples);
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        debug_assert!(p != RiskLabel::Absent && t != RiskLabel::Absent);
        m.add(p, t);
    }
    let acc = m.accuracy();
    Ok((m, acc))
}

/// Mean accuracy over repeated splits with a 95% normal-approximation band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub repeats: usize,
}

impl AccuracyReport {
    fn from_accuracies(accs: &[f64]) -> Self {
        debug_assert!(!accs.is_empty());
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let half = if accs.len() > 1 {
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
            Z_95 * (var / n).sqrt()
        } else {
            0.0
        };
        AccuracyReport {
            mean,
            ci_lo: (mean - half).max(0.0),
            ci_hi: (mean + half).min(1.0),
            repeats: accs.len(),
        }
    }
}

/// What to evaluate: a trained classifier or the path-loss baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Classifier(ClassifierKind),
    PathLoss,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Classifier(ClassifierKind::Dt),
        Method::Classifier(ClassifierKind::Lda),
        Method::Classifier(ClassifierKind::Nb),
        Method::Classifier(ClassifierKind::Knn),
        Method::Classifier(ClassifierKind::Svm),
        Method::PathLoss,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Classifier(kind) => kind.fmt(f),
            Method::PathLoss => f.write_str("PL"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("pl") {
            return Ok(Method::PathLoss);
        }
        ClassifierKind::from_str(s)
            .map(Method::Classifier)
            .map_err(|_| format!("unknown method {s:?} (want dt|lda|nb|knn|svm|pl)"))
    }
}

/// Accuracy report plus the confusion matrix pooled over all repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseEvaluation {
    pub report: AccuracyReport,
    pub confusion: ConfusionMatrix,
}

/// One evaluation-ready observation.
#[derive(Debug, Clone, Copy)]
struct EvalPoint {
    rss: f64,
    feature: FeatureVector,
    distance_m: f64,
}

/// Splits sample indices into contiguous same-distance runs within each
/// (tx, rx) pair's subsequence. Run boundaries are where the smoothing
/// filter must restart: they separate independent contact episodes.
fn segment_runs(samples: &[RssSample]) -> Vec<Vec<usize>> {
    let mut pair_keys: Vec<(&str, &str)> = Vec::new();
    let mut per_pair: Vec<Vec<usize>> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let key = (s.tx_id.as_str(), s.rx_id.as_str());
        match pair_keys.iter().position(|k| *k == key) {
            Some(p) => per_pair[p].push(i),
            None => {
                pair_keys.push(key);
                per_pair.push(vec![i]);
            }
        }
    }

    let mut runs = Vec::new();
    for indices in per_pair {
        let mut run: Vec<usize> = Vec::new();
        for i in indices {
            let start_new = match run.last() {
                Some(&prev) => samples[prev].true_distance_m != samples[i].true_distance_m,
                None => false,
            };
            if start_new {
                runs.push(std::mem::take(&mut run));
            }
            run.push(i);
        }
        if !run.is_empty() {
            runs.push(run);
        }
    }
    runs
}

/// Smooths each run independently and keeps the labeled points.
fn filtered_points(samples: &[RssSample], filter: FilterConfig) -> Vec<EvalPoint> {
    let mut points = Vec::new();
    for run in segment_runs(samples) {
        let Some(distance_m) = samples[run[0]].true_distance_m else {
            continue;
        };
        let raw: Vec<f64> = run.iter().map(|&i| samples[i].rss_dbm).collect();
        for rss in moving_average(&raw, filter.window) {
            points.push(EvalPoint { rss, feature: encode_rss_8bit(rss), distance_m });
        }
    }
    points
}

/// Refits the distance model on the per-distance mean RSS of one train split.
fn fit_on_split(points: &[EvalPoint], train_idx: &[usize]) -> Result<PathLossModel, EvalError> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new(); // (distance, rss sum, count)
    for &i in train_idx {
        let p = &points[i];
        match groups.iter_mut().find(|(d, _, _)| *d == p.distance_m) {
            Some((_, sum, count)) => {
                *sum += p.rss;
                *count += 1;
            }
            None => groups.push((p.distance_m, p.rss, 1)),
        }
    }
    let means: Vec<(f64, f64)> =
        groups.iter().map(|(d, sum, count)| (*d, sum / *count as f64)).collect();
    Ok(fit_path_loss(&means)?)
}

/// Shared core: repeated seeded 80/20 splits over prepared points.
fn evaluate_points(
    points: &[EvalPoint],
    method: Method,
    threshold_m: f64,
    split_seed: u64,
    repeats: usize,
) -> Result<CaseEvaluation, EvalError> {
    if repeats == 0 {
        return Err(EvalError::ZeroRepeats);
    }
    if points.is_empty() {
        return Err(EvalError::NoLabeledSamples);
    }
    let truths: Vec<RiskLabel> =
        points.iter().map(|p| threshold_classify(p.distance_m, threshold_m)).collect();
    let highs = truths.iter().filter(|&&t| t == RiskLabel::High).count();
    if highs == 0 || highs == truths.len() {
        return Err(EvalError::SingleClass);
    }

    let n = points.len();
    let train_n = (n as f64 * TRAIN_FRACTION).floor() as usize;
    if train_n == 0 || train_n == n {
        return Err(EvalError::DegenerateSplit);
    }

    let hp = Hyperparams::default();
    let mut accuracies = Vec::with_capacity(repeats);
    let mut confusion = ConfusionMatrix::default();
    let mut indices: Vec<usize> = (0..n).collect();
    for r in 0..repeats {
        let seed_r = split_seed.wrapping_add(r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed_r);
        indices.shuffle(&mut rng);
        let (train_idx, test_idx) = indices.split_at(train_n);

        let mut correct = 0usize;
        match method {
            Method::Classifier(kind) => {
                let train_set: Vec<(FeatureVector, RiskLabel)> =
                    train_idx.iter().map(|&i| (points[i].feature, truths[i])).collect();
                let model = classify::train(kind, &train_set, &hp, seed_r)?;
                for &i in test_idx {
                    let pred = classify::predict(&model, points[i].feature);
                    confusion.add(pred, truths[i]);
                    if pred == truths[i] {
                        correct += 1;
                    }
                }
            }
            Method::PathLoss => {
                let model = fit_on_split(points, train_idx)?;
                for &i in test_idx {
                    let pred = pl_classify(&model, points[i].rss, threshold_m).label;
                    confusion.add(pred, truths[i]);
                    if pred == truths[i] {
                        correct += 1;
                    }
                }
            }
        }
        accuracies.push(correct as f64 / test_idx.len() as f64);
    }

    Ok(CaseEvaluation { report: AccuracyReport::from_accuracies(&accuracies), confusion })
}

/// Full pipeline over labeled samples: smooth per contact run, encode, then
/// repeated 80/20 train/test splits. Returns the accuracy report; use
/// [`evaluate_case_detailed`] when the pooled confusion matrix is needed.
pub fn evaluate_case(
    samples: &[RssSample],
    method: Method,
    filter: FilterConfig,
    threshold_m: f64,
    split_seed: u64,
    repeats: usize,
) -> Result<AccuracyReport, EvalError> {
    evaluate_case_detailed(samples, method, filter, threshold_m, split_seed, repeats)
        .map(|e| e.report)
}

/// [`evaluate_case`] plus the confusion matrix pooled over repeats.
pub fn evaluate_case_detailed(
    samples: &[RssSample],
    method: Method,
    filter: FilterConfig,
    threshold_m: f64,
    split_seed: u64,
    repeats: usize,
) -> Result<CaseEvaluation, EvalError> {
    let points = filtered_points(samples, filter);
    evaluate_points(&points, method, threshold_m, split_seed, repeats)
}

/// Fits one final classifier on the whole labeled set — same smoothing,
/// encoding, and thresholding as [`evaluate_case`], but no held-out split —
/// for exporting a deployable model.
pub fn train_full(
    samples: &[RssSample],
    kind: ClassifierKind,
    filter: FilterConfig,
    threshold_m: f64,
    seed: u64,
) -> Result<TrainedClassifier, EvalError> {
    let points = filtered_points(samples, filter);
    if points.is_empty() {
        return Err(EvalError::NoLabeledSamples);
    }
    let train_set: Vec<(FeatureVector, RiskLabel)> = points
        .iter()
        .map(|p| (p.feature, threshold_classify(p.distance_m, threshold_m)))
        .collect();
    let mut model = classify::train(kind, &train_set, &Hyperparams::default(), seed)?;
    model.meta.window = Some(filter.window);
    Ok(model)
}

/// [`evaluate_case`] once per window size.
pub fn sweep_window(
    samples: &[RssSample],
    method: Method,
    windows: &[usize],
    threshold_m: f64,
    split_seed: u64,
    repeats: usize,
) -> Result<Vec<(usize, AccuracyReport)>, EvalError> {
    let mut out = Vec::with_capacity(windows.len());
    for &w in windows {
        let filter = FilterConfig::new(w)?;
        let report = evaluate_case(samples, method, filter, threshold_m, split_seed, repeats)?;
        out.push((w, report));
    }
    Ok(out)
}

/// [`evaluate_case`] per (method, threshold) cell, relabeling the samples
/// from `true_distance` at every threshold. Method-major order.
pub fn sweep_threshold(
    samples: &[RssSample],
    methods: &[Method],
    thresholds_m: &[f64],
    filter: FilterConfig,
    split_seed: u64,
    repeats: usize,
) -> Result<Vec<(Method, f64, AccuracyReport)>, EvalError> {
    let points = filtered_points(samples, filter);
    let mut out = Vec::with_capacity(methods.len() * thresholds_m.len());
    for &method in methods {
        for &threshold in thresholds_m {
            let eval = evaluate_points(&points, method, threshold, split_seed, repeats)?;
            out.push((method, threshold, eval.report));
        }
    }
    Ok(out)
}

/// Accuracy as a function of how long each contact episode is observed.
///
/// An episode is one contiguous same-distance run; for each duration `T`,
/// the receptions within the episode's first `T` seconds collapse into a
/// single mean-RSS observation, and those per-episode observations are
/// evaluated with the usual repeated splits.
pub fn accuracy_over_time(
    samples: &[RssSample],
    method: Method,
    durations_s: &[f64],
    threshold_m: f64,
    split_seed: u64,
    repeats: usize,
) -> Result<Vec<(f64, AccuracyReport)>, EvalError> {
    if durations_s.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(EvalError::InvalidDuration);
    }
    let runs = segment_runs(samples);
    let mut out = Vec::with_capacity(durations_s.len());
    for &duration in durations_s {
        let horizon_ms = duration * 1000.0;
        let mut points = Vec::new();
        for run in &runs {
            let Some(distance_m) = samples[run[0]].true_distance_m else {
                continue;
            };
            let start = samples[run[0]].timestamp_ms;
            let mut sum = 0.0;
            let mut count = 0usize;
            for &i in run {
                if (samples[i].timestamp_ms - start) as f64 >= horizon_ms {
                    break;
                }
                sum += samples[i].rss_dbm;
                count += 1;
            }
            debug_assert!(count > 0, "an episode always contains its first packet");
            let rss = sum / count as f64;
            points.push(EvalPoint { rss, feature: encode_rss_8bit(rss), distance_m });
        }
        let eval = evaluate_points(&points, method, threshold_m, split_seed, repeats)?;
        out.push((duration, eval.report));
    }
    Ok(out)
}

/// Empirical distribution of per-sample ranging errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCdf {
    /// (error in meters, cumulative fraction), sorted by error.
    pub points: Vec<(f64, f64)>,
    /// Mean absolute error.
    pub mae: f64,
}

impl ErrorCdf {
    /// Smallest error whose cumulative fraction reaches `p` (0 < p <= 1).
    pub fn percentile(&self, p: f64) -> f64 {
        debug_assert!(p > 0.0 && p <= 1.0 && !self.points.is_empty());
        let n = self.points.len();
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.points[rank - 1].0
    }
}

/// Distance-estimation error distribution of a fitted model over labeled,
/// smoothed samples.
pub fn distance_error_cdf(
    samples: &[RssSample],
    model: &PathLossModel,
    filter: FilterConfig,
) -> Result<ErrorCdf, EvalError> {
    let points = filtered_points(samples, filter);
    if points.is_empty() {
        return Err(EvalError::NoLabeledSamples);
    }
    let mut errors: Vec<f64> = points
        .iter()
        .map(|p| (estimate_distance(model, p.rss).meters - p.distance_m).abs())
        .collect();
    errors.sort_by(|a, b| a.total_cmp(b));
    let n = errors.len();
    let mae = errors.iter().sum::<f64>() / n as f64;
    let cdf = errors
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, (i + 1) as f64 / n as f64))
        .collect();
    Ok(ErrorCdf { points: cdf, mae })
}
