//! RSS samples and the inverse-power path-loss model.
//!
//! The model maps distance to received signal strength as `P_r = c + d^(-n)`
//! and back via `d = exp((1/n) ln(1/(P_r - c)))`, both in dBm/meters. Fitting
//! recovers `(n, c)` from per-distance mean RSS with a damped Gauss-Newton
//! loop; synthesis adds seeded Gaussian noise for simulation.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::Case;

/// Distance reported when the model saturates (`rss <= c`).
pub const DEFAULT_MAX_DISTANCE_M: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("degenerate fit input: {0}")]
    FitDegenerate(&'static str),
    #[error("{0}")]
    Domain(&'static str),
    #[error("model file: {0}")]
    ModelParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One received-packet observation.
#[derive(Debug, Clone, PartialEq)]
pub struct RssSample {
    /// Reception time in milliseconds since the stream epoch.
    pub timestamp_ms: i64,
    pub rss_dbm: f64,
    /// Ground-truth distance in meters; `None` for field data without it.
    pub true_distance_m: Option<f64>,
    pub tx_id: String,
    pub rx_id: String,
    pub case: Option<Case>,
    /// Milliseconds since the previous packet from the same transmitter.
    pub elapsed_ms: i64,
}

/// Fitted coefficients of `P_r = c + d^(-n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    n: f64,
    c: f64,
}

impl PathLossModel {
    pub fn new(n: f64, c: f64) -> Result<Self, SignalError> {
        if !(n.is_finite() && n > 0.0) {
            return Err(SignalError::Domain("path loss exponent must be finite and > 0"));
        }
        if !c.is_finite() {
            return Err(SignalError::Domain("constant coefficient must be finite"));
        }
        Ok(Self { n, c })
    }

    /// Path-loss exponent.
    pub fn n(&self) -> f64 {
        self.n
    }

    /// Constant coefficient in dBm; doubles as the saturation floor.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Plain-text `n=…`/`c=…` form used by the model files.
    pub fn to_key_values(&self) -> String {
        format!("n={}\nc={}\n", self.n, self.c)
    }

    pub fn from_key_values(text: &str) -> Result<Self, SignalError> {
        let mut n = None;
        let mut c = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SignalError::ModelParse(format!("expected key=value, got {line:?}")))?;
            let parsed: f64 = value
                .trim()
                .parse()
                .map_err(|_| SignalError::ModelParse(format!("bad number for {key:?}: {value:?}")))?;
            match key.trim() {
                "n" => n = Some(parsed),
                "c" => c = Some(parsed),
                other => return Err(SignalError::ModelParse(format!("unknown key {other:?}"))),
            }
        }
        match (n, c) {
            (Some(n), Some(c)) => Self::new(n, c),
            _ => Err(SignalError::ModelParse("missing n or c".into())),
        }
    }
}

/// Per-distance aggregate statistics of an RSS stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub distance_m: f64,
    pub count: usize,
    pub mean_rss: f64,
    /// Sample variance (n−1 denominator; 0 for a single sample).
    pub var_rss: f64,
}

/// Distance estimate plus a flag for RSS at or below the model floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    pub meters: f64,
    pub saturated: bool,
}

fn sse_of(points: &[(f64, f64)], n: f64, c: f64) -> f64 {
    points
        .iter()
        .map(|&(d, rss)| {
            let r = rss - c - d.powf(-n);
            r * r
        })
        .sum()
}

/// Least-squares fit of `(n, c)` to (distance, mean RSS) points.
///
/// Damped Gauss-Newton from the fixed start `n=2, c=min(rss)-1`; 200
/// iterations max, stops when the gradient drops below 1e-10 or damping is
/// exhausted. Needs at least two distinct positive distances.
pub fn fit_path_loss(points: &[(f64, f64)]) -> Result<PathLossModel, SignalError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &(d, rss) in points {
        if !(d.is_finite() && d > 0.0) {
            return Err(SignalError::Domain("fit distances must be finite and > 0"));
        }
        if !rss.is_finite() {
            return Err(SignalError::Domain("fit RSS values must be finite"));
        }
        if !distinct.contains(&d) {
            distinct.push(d);
        }
    }
    if distinct.len() < 2 {
        return Err(SignalError::FitDegenerate("need at least two distinct distances"));
    }

    let min_rss = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut n = 2.0;
    let mut c = min_rss - 1.0;
    let mut sse = sse_of(points, n, c);
    let mut lambda = 1e-3;

    for _ in 0..200 {
        // residual r_i = rss_i - c - d_i^(-n); Jacobian columns
        // dr/dn = ln(d_i)·d_i^(-n), dr/dc = -1
        let mut jtj_nn = 0.0;
        let mut jtj_nc = 0.0;
        let mut jtj_cc = 0.0;
        let mut g_n = 0.0;
        let mut g_c = 0.0;
        for &(d, rss) in points {
            let p = d.powf(-n);
            let r = rss - c - p;
            let jn = d.ln() * p;
            jtj_nn += jn * jn;
            jtj_nc += -jn;
            jtj_cc += 1.0;
            g_n += jn * r;
            g_c += -r;
        }
        if g_n.abs().max(g_c.abs()) < 1e-10 {
            break;
        }

        // Solve (JᵀJ + λI)δ = -Jᵀr, inflating λ until the step helps.
        let mut stepped = false;
        for _ in 0..40 {
            let a = jtj_nn + lambda;
            let d2 = jtj_cc + lambda;
            let det = a * d2 - jtj_nc * jtj_nc;
            if det.abs() > f64::MIN_POSITIVE {
                let dn = (-g_n * d2 + g_c * jtj_nc) / det;
                let dc = (-g_c * a + g_n * jtj_nc) / det;
                let n2 = n + dn;
                let c2 = c + dc;
                if n2 > 0.0 {
                    let s2 = sse_of(points, n2, c2);
                    if s2.is_finite() && s2 < sse {
                        n = n2;
                        c = c2;
                        sse = s2;
                        lambda = (lambda / 10.0).max(1e-12);
                        stepped = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !stepped {
            break; // no damping level improves; at a (local) optimum
        }
    }

    PathLossModel::new(n, c)
}

/// Distance from RSS, `d = exp((1/n) ln(1/(rss - c)))`, saturating at the
/// default ceiling for `rss <= c`.
pub fn estimate_distance(model: &PathLossModel, rss_dbm: f64) -> DistanceEstimate {
    estimate_distance_clamped(model, rss_dbm, DEFAULT_MAX_DISTANCE_M)
}

/// Same as [`estimate_distance`] with an explicit saturation distance.
pub fn estimate_distance_clamped(
    model: &PathLossModel,
    rss_dbm: f64,
    max_distance_m: f64,
) -> DistanceEstimate {
    let gap = rss_dbm - model.c;
    if gap <= 0.0 {
        return DistanceEstimate { meters: max_distance_m, saturated: true };
    }
    let meters = ((1.0 / model.n) * (1.0 / gap).ln()).exp();
    DistanceEstimate { meters, saturated: false }
}

/// RSS at a distance, `c + d^(-n)`.
pub fn predict_rss(model: &PathLossModel, distance_m: f64) -> Result<f64, SignalError> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(SignalError::Domain("distance must be finite and > 0"));
    }
    Ok(model.c + distance_m.powf(-model.n))
}

/// Model RSS plus Gaussian noise of the given variance, fresh generator from
/// `seed`. Variance 0 returns the noiseless prediction exactly.
pub fn synthesize_rss(
    model: &PathLossModel,
    distance_m: f64,
    noise_var: f64,
    seed: u64,
) -> Result<f64, SignalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_rss_with(model, distance_m, noise_var, &mut rng)
}

/// Noise draw from a caller-owned generator, for streams of samples.
pub fn synthesize_rss_with<R: Rng>(
    model: &PathLossModel,
    distance_m: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<f64, SignalError> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(SignalError::Domain("noise variance must be finite and >= 0"));
    }
    let base = predict_rss(model, distance_m)?;
    if noise_var == 0.0 {
        return Ok(base);
    }
    let normal = Normal::new(0.0, noise_var.sqrt())
        .map_err(|_| SignalError::Domain("invalid noise distribution"))?;
    Ok(base + normal.sample(rng))
}

/// Distance-indexed noise variances with nearest-distance lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    entries: Vec<(f64, f64)>,
}

impl NoiseTable {
    /// Same variance at every distance.
    pub fn constant(var: f64) -> Self {
        assert!(var.is_finite() && var >= 0.0, "variance must be finite and >= 0");
        Self { entries: vec![(1.0, var)] }
    }

    /// Per-distance variances taken from summary statistics.
    pub fn from_stats(stats: &[DistanceStats]) -> Self {
        let mut entries: Vec<(f64, f64)> =
            stats.iter().map(|s| (s.distance_m, s.var_rss)).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { entries }
    }

    /// Variance of the nearest tabulated distance (0 if the table is empty).
    pub fn lookup(&self, distance_m: f64) -> f64 {
        self.entries
            .iter()
            .min_by(|a, b| (a.0 - distance_m).abs().total_cmp(&(b.0 - distance_m).abs()))
            .map(|e| e.1)
            .unwrap_or(0.0)
    }
}

pub fn write_model_file(model: &PathLossModel, path: &Path) -> Result<(), SignalError> {
    fs::write(path, model.to_key_values())?;
    Ok(())
}

pub fn read_model_file(path: &Path) -> Result<PathLossModel, SignalError> {
    let text = fs::read_to_string(path)?;
    PathLossModel::from_key_values(&text)
        .map_err(|e| SignalError::ModelParse(format!("{}: {e}", path.display())))
}
