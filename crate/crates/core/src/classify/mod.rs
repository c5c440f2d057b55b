//! High/low-risk classification of RSS observations.
//!
//! RSS is encoded into an 8-bit magnitude feature; five trainable classifiers
//! (decision tree, linear discriminant, naive Bayes, k-nearest-neighbors,
//! linear SVM) and a path-loss threshold baseline map features to the ±1 risk
//! labels. Label 0 (absent) exists only for contacts with no signature match
//! and is never produced by a classifier.

mod bayes;
mod knn;
mod lda;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use bayes::NbParams;
pub use knn::KnnParams;
pub use lda::LdaParams;
pub use svm::SvmParams;
pub use tree::TreeNode;

use crate::signal::{estimate_distance, DistanceEstimate, PathLossModel};

/// Feature width: RSS magnitude quantized to one byte.
pub const FEATURE_BITS: usize = 8;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels must be +1 or -1")]
    InvalidLabel,
    #[error("degenerate training: {0}")]
    DegenerateTraining(&'static str),
    #[error("feature bits must be 0 or 1")]
    InvalidFeature,
    #[error("model parse: {0}")]
    ModelParse(String),
}

/// Risk hypothesis: +1 high-risk, -1 low-risk, 0 not in contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RiskLabel {
    High,
    Low,
    Absent,
}

impl RiskLabel {
    pub fn value(self) -> i8 {
        match self {
            RiskLabel::High => 1,
            RiskLabel::Low => -1,
            RiskLabel::Absent => 0,
        }
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            1 => Some(RiskLabel::High),
            -1 => Some(RiskLabel::Low),
            0 => Some(RiskLabel::Absent),
            _ => None,
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskLabel::High => "+1",
            RiskLabel::Low => "-1",
            RiskLabel::Absent => "0",
        })
    }
}

/// 8 binary values, most significant bit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    bits: [u8; FEATURE_BITS],
}

impl FeatureVector {
    pub fn from_bits(bits: [u8; FEATURE_BITS]) -> Result<Self, ClassifyError> {
        if bits.iter().any(|&b| b > 1) {
            return Err(ClassifyError::InvalidFeature);
        }
        Ok(Self { bits })
    }

    /// Big-endian binary expansion of the byte.
    pub fn from_byte(value: u8) -> Self {
        let mut bits = [0u8; FEATURE_BITS];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = (value >> (FEATURE_BITS - 1 - i)) & 1;
        }
        Self { bits }
    }

    pub fn byte(self) -> u8 {
        self.bits.iter().fold(0u8, |acc, &b| (acc << 1) | b)
    }

    pub fn bits(&self) -> &[u8; FEATURE_BITS] {
        &self.bits
    }

    pub fn bit(self, index: usize) -> u8 {
        self.bits[index]
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// RSS magnitude as 8 bits: `clamp(round(-rss), 0, 255)`, big-endian.
/// Monotone: weaker signal (more negative RSS) never yields a smaller byte.
pub fn encode_rss_8bit(rss_dbm: f64) -> FeatureVector {
    debug_assert!(rss_dbm.is_finite());
    let b = (-rss_dbm).round().clamp(0.0, 255.0) as u8;
    FeatureVector::from_byte(b)
}

/// High-risk iff the distance is at or below the threshold (boundary counts
/// as high-risk: the safer call).
pub fn threshold_classify(distance_m: f64, threshold_m: f64) -> RiskLabel {
    debug_assert!(distance_m >= 0.0 && threshold_m > 0.0);
    if distance_m <= threshold_m {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

/// The five trainable classifier kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Dt,
    Lda,
    Nb,
    Knn,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Dt,
        ClassifierKind::Lda,
        ClassifierKind::Nb,
        ClassifierKind::Knn,
        ClassifierKind::Svm,
    ];
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Dt => "DT",
            ClassifierKind::Lda => "LDA",
            ClassifierKind::Nb => "NB",
            ClassifierKind::Knn => "kNN",
            ClassifierKind::Svm => "SVM",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(ClassifierKind::Dt),
            "lda" => Ok(ClassifierKind::Lda),
            "nb" => Ok(ClassifierKind::Nb),
            "knn" => Ok(ClassifierKind::Knn),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(format!("unknown classifier {other:?} (want dt|lda|nb|knn|svm)")),
        }
    }
}

/// Training knobs; the defaults are the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub knn_k: usize,
    pub svm_epochs: usize,
    pub svm_learning_rate: f64,
    pub svm_l2: f64,
    pub lda_ridge: f64,
    pub nb_smoothing: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            knn_k: 5,
            svm_epochs: 200,
            svm_learning_rate: 0.01,
            svm_l2: 1e-3,
            lda_ridge: 1e-6,
            nb_smoothing: 1.0,
        }
    }
}

/// Bookkeeping recorded at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainMeta {
    pub sample_count: usize,
    pub seed: u64,
    /// Moving-average window the training RSS went through, when known.
    pub window: Option<usize>,
}

/// Kind-specific learned state.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Tree(TreeNode),
    Lda(LdaParams),
    Nb(NbParams),
    Knn(KnnParams),
    Svm(SvmParams),
}

/// A trained classifier; prediction is pure and deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub params: ModelParams,
    pub meta: TrainMeta,
}

fn validate_training_set(
    kind: ClassifierKind,
    samples: &[(FeatureVector, RiskLabel)],
) -> Result<(), ClassifyError> {
    if samples.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    if samples.iter().any(|(_, y)| *y == RiskLabel::Absent) {
        return Err(ClassifyError::InvalidLabel);
    }
    let needs_both = matches!(kind, ClassifierKind::Lda | ClassifierKind::Nb | ClassifierKind::Svm);
    if needs_both {
        let highs = samples.iter().filter(|(_, y)| *y == RiskLabel::High).count();
        if highs == 0 || highs == samples.len() {
            return Err(ClassifyError::DegenerateTraining(
                "discriminant methods need at least one sample of each class",
            ));
        }
    }
    Ok(())
}

/// Trains a classifier of the given kind. Deterministic given
/// `(samples, hyperparams, seed)`; the seed matters only to the SVM shuffle.
pub fn train(
    kind: ClassifierKind,
    samples: &[(FeatureVector, RiskLabel)],
    hyperparams: &Hyperparams,
    seed: u64,
) -> Result<TrainedClassifier, ClassifyError> {
    validate_training_set(kind, samples)?;
    let params = match kind {
        ClassifierKind::Dt => ModelParams::Tree(tree::train(samples)),
        ClassifierKind::Lda => ModelParams::Lda(lda::train(samples, hyperparams.lda_ridge)?),
        ClassifierKind::Nb => ModelParams::Nb(bayes::train(samples, hyperparams.nb_smoothing)),
        ClassifierKind::Knn => ModelParams::Knn(knn::train(samples, hyperparams.knn_k)),
        ClassifierKind::Svm => ModelParams::Svm(svm::train(samples, hyperparams, seed)),
    };
    Ok(TrainedClassifier {
        kind,
        params,
        meta: TrainMeta { sample_count: samples.len(), seed, window: None },
    })
}

/// Deterministic ±1 prediction.
pub fn predict(model: &TrainedClassifier, feature: FeatureVector) -> RiskLabel {
    match &model.params {
        ModelParams::Tree(root) => tree::predict(root, feature),
        ModelParams::Lda(p) => lda::predict(p, feature),
        ModelParams::Nb(p) => bayes::predict(p, feature),
        ModelParams::Knn(p) => knn::predict(p, feature),
        ModelParams::Svm(p) => svm::predict(p, feature),
    }
}

/// Plain-text dump of the learned state, for inspection and golden tests.
pub fn dump_model(model: &TrainedClassifier) -> String {
    let body = match &model.params {
        ModelParams::Tree(root) => tree::dump(root),
        ModelParams::Lda(p) => lda::dump(p),
        ModelParams::Nb(p) => bayes::dump(p),
        ModelParams::Knn(p) => knn::dump(p),
        ModelParams::Svm(p) => svm::dump(p),
    };
    format!("kind={}\nsamples={}\nseed={}\n{}", model.kind, model.meta.sample_count, model.meta.seed, body)
}

fn parse_err(what: impl Into<String>) -> ClassifyError {
    ClassifyError::ModelParse(what.into())
}

fn take_kv<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, ClassifyError> {
    let line = line.ok_or_else(|| parse_err(format!("missing {key}= line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .map(str::trim)
        .ok_or_else(|| parse_err(format!("expected {key}=…, got {line:?}")))
}

fn parse_scalar<T: FromStr>(value: &str, what: &str) -> Result<T, ClassifyError> {
    value.trim().parse().map_err(|_| parse_err(format!("bad {what}: {value:?}")))
}

fn parse_f64_array(value: &str, what: &str) -> Result<[f64; FEATURE_BITS], ClassifyError> {
    let inner = value
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| parse_err(format!("{what} must be a [..] array")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != FEATURE_BITS {
        return Err(parse_err(format!("{what} must hold {FEATURE_BITS} entries")));
    }
    let mut out = [0.0; FEATURE_BITS];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = parse_scalar(part, what)?;
    }
    Ok(out)
}

fn parse_label(value: &str) -> Result<RiskLabel, ClassifyError> {
    let v: i8 = parse_scalar(value, "label")?;
    RiskLabel::from_value(v).ok_or_else(|| parse_err(format!("bad label value {v}")))
}

/// Parses one tree node starting at `lines[at]`, expecting `depth` levels of
/// two-space indentation; returns the node and the next unconsumed index.
fn parse_tree(lines: &[&str], at: usize, depth: usize) -> Result<(TreeNode, usize), ClassifyError> {
    let line = lines.get(at).ok_or_else(|| parse_err("tree body ended early"))?;
    let expected_indent = depth * 2;
    let (indent, rest) = {
        let trimmed = line.trim_start_matches(' ');
        (line.len() - trimmed.len(), trimmed)
    };
    if indent != expected_indent {
        return Err(parse_err(format!("bad tree indent at line {at}: {line:?}")));
    }
    if let Some(label) = rest.strip_prefix("leaf ") {
        return Ok((TreeNode::Leaf(parse_label(label)?), at + 1));
    }
    if let Some(bit) = rest.strip_prefix("split bit=") {
        let bit: usize = parse_scalar(bit, "split bit")?;
        if bit >= FEATURE_BITS {
            return Err(parse_err(format!("split bit {bit} out of range")));
        }
        let (zero, after_zero) = parse_tree(lines, at + 1, depth + 1)?;
        let (one, after_one) = parse_tree(lines, after_zero, depth + 1)?;
        return Ok((TreeNode::Split { bit, zero: Box::new(zero), one: Box::new(one) }, after_one));
    }
    Err(parse_err(format!("expected leaf or split, got {rest:?}")))
}

/// Inverse of [`dump_model`]: reconstructs a classifier from its plain-text
/// dump. The filter window is not part of the dump, so `meta.window` comes
/// back as `None`.
pub fn parse_model(text: &str) -> Result<TrainedClassifier, ClassifyError> {
    let mut lines = text.lines();
    let kind: ClassifierKind =
        take_kv(lines.next(), "kind")?.parse().map_err(ClassifyError::ModelParse)?;
    let sample_count: usize = parse_scalar(take_kv(lines.next(), "samples")?, "samples")?;
    let seed: u64 = parse_scalar(take_kv(lines.next(), "seed")?, "seed")?;
    let body: Vec<&str> = lines.collect();

    let params = match kind {
        ClassifierKind::Dt => {
            let (root, consumed) = parse_tree(&body, 0, 0)?;
            if body[consumed..].iter().any(|l| !l.trim().is_empty()) {
                return Err(parse_err("trailing content after tree"));
            }
            ModelParams::Tree(root)
        }
        ClassifierKind::Lda => {
            let mut it = body.iter().copied();
            ModelParams::Lda(LdaParams {
                w_high: parse_f64_array(take_kv(it.next(), "w_high")?, "w_high")?,
                b_high: parse_scalar(take_kv(it.next(), "b_high")?, "b_high")?,
                w_low: parse_f64_array(take_kv(it.next(), "w_low")?, "w_low")?,
                b_low: parse_scalar(take_kv(it.next(), "b_low")?, "b_low")?,
            })
        }
        ClassifierKind::Nb => {
            let mut it = body.iter().copied();
            ModelParams::Nb(NbParams {
                log_prior_high: parse_scalar(
                    take_kv(it.next(), "log_prior_high")?,
                    "log_prior_high",
                )?,
                log_prior_low: parse_scalar(
                    take_kv(it.next(), "log_prior_low")?,
                    "log_prior_low",
                )?,
                log_on_high: parse_f64_array(take_kv(it.next(), "log_on_high")?, "log_on_high")?,
                log_off_high: parse_f64_array(
                    take_kv(it.next(), "log_off_high")?,
                    "log_off_high",
                )?,
                log_on_low: parse_f64_array(take_kv(it.next(), "log_on_low")?, "log_on_low")?,
                log_off_low: parse_f64_array(take_kv(it.next(), "log_off_low")?, "log_off_low")?,
            })
        }
        ClassifierKind::Knn => {
            let mut it = body.iter().copied();
            let k: usize = parse_scalar(take_kv(it.next(), "k")?, "k")?;
            let cells = take_kv(it.next(), "table")?;
            if cells.chars().count() != 256 {
                return Err(parse_err("kNN table must hold 256 cells"));
            }
            let mut table = Box::new([RiskLabel::Low; 256]);
            for (slot, ch) in table.iter_mut().zip(cells.chars()) {
                *slot = match ch {
                    '+' => RiskLabel::High,
                    '-' => RiskLabel::Low,
                    other => return Err(parse_err(format!("bad kNN cell {other:?}"))),
                };
            }
            ModelParams::Knn(KnnParams { k, table })
        }
        ClassifierKind::Svm => {
            let mut it = body.iter().copied();
            ModelParams::Svm(SvmParams {
                weights: parse_f64_array(take_kv(it.next(), "weights")?, "weights")?,
                bias: parse_scalar(take_kv(it.next(), "bias")?, "bias")?,
            })
        }
    };

    Ok(TrainedClassifier { kind, params, meta: TrainMeta { sample_count, seed, window: None } })
}

/// Path-loss baseline decision, carrying the estimate it was made from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlDecision {
    pub label: RiskLabel,
    pub estimate: DistanceEstimate,
}

/// Estimate distance from RSS, then threshold. Saturated estimates
/// (`rss <= c`) classify low-risk.
pub fn pl_classify(model: &PathLossModel, rss_dbm: f64, threshold_m: f64) -> PlDecision {
    let estimate = estimate_distance(model, rss_dbm);
    let label = if estimate.saturated {
        RiskLabel::Low
    } else {
        threshold_classify(estimate.meters, threshold_m)
    };
    PlDecision { label, estimate }
}
