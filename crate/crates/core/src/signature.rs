//! Rotating environmental signatures and the local contact log.
//!
//! A device observes the ambient RSS vector, projects it through a secret
//! 31×m dictionary into a 31-dimensional signature, quantizes that to the
//! 31-byte advertising payload, and logs both its own broadcasts and every
//! observed payload. After a diagnosis the infected device's broadcast
//! payloads are uploaded and other devices match them against their logs by
//! exact byte equality.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Signature dimension; also the advertising payload budget in bytes.
pub const SIGNATURE_DIM: usize = 31;

/// Default affine quantization bounds (component range mapped onto 0..=255).
pub const DEFAULT_QUANT_BOUNDS: (f64, f64) = (-10_000.0, 10_000.0);

/// Default log retention: 14 days, in milliseconds.
pub const DEFAULT_EXPIRY_MS: i64 = 14 * 24 * 60 * 60 * 1000;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("ambient environment is empty (m = 0)")]
    EmptyEnvironment,
    #[error("dimension mismatch: dictionary has {dict} columns, observation has {obs}")]
    DimensionMismatch { dict: usize, obs: usize },
    #[error("{0}")]
    Invalid(&'static str),
    #[error("non-finite signature component at index {0}")]
    NonFinite(usize),
    #[error("log line {line}: {reason}")]
    LogParse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Time-averaged ambient RSS readings, one per visible device.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedVector {
    values: Vec<f64>,
    device_ids: Vec<String>,
    pub t_ms: i64,
}

impl ObservedVector {
    pub fn new(values: Vec<f64>, device_ids: Vec<String>, t_ms: i64) -> Result<Self, SignatureError> {
        if values.len() != device_ids.len() {
            return Err(SignatureError::Invalid("values and device_ids must have equal length"));
        }
        Ok(Self { values, device_ids, t_ms })
    }

    /// Observation with anonymous placeholder device ids.
    pub fn from_values(values: Vec<f64>, t_ms: i64) -> Self {
        let device_ids = (0..values.len()).map(|i| format!("ambient{i}")).collect();
        Self { values, device_ids, t_ms }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn device_ids(&self) -> &[String] {
        &self.device_ids
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Secret 31×m projection matrix; the per-device key is its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    rows: Vec<Vec<f64>>,
    seed: u64,
}

impl Dictionary {
    /// Explicit matrix, mainly for tests and inspection; must be 31 rows of
    /// equal nonzero length. The seed of a hand-built dictionary is 0 and is
    /// not meaningful.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, SignatureError> {
        if rows.len() != SIGNATURE_DIM {
            return Err(SignatureError::Invalid("dictionary must have exactly 31 rows"));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(SignatureError::EmptyEnvironment);
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(SignatureError::Invalid("dictionary rows must have equal length"));
        }
        Ok(Self { rows, seed: 0 })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Column count m: the ambient dimension this dictionary applies to.
    pub fn dim_m(&self) -> usize {
        self.rows[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// 31×m dictionary with entries drawn uniformly from [-1, 1]; the same
/// (m, seed) pair always regenerates the identical matrix.
pub fn generate_dictionary(m: usize, seed: u64) -> Result<Dictionary, SignatureError> {
    if m == 0 {
        return Err(SignatureError::EmptyEnvironment);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let between = Uniform::new_inclusive(-1.0f64, 1.0f64);
    let rows = (0..SIGNATURE_DIM)
        .map(|_| (0..m).map(|_| between.sample(&mut rng)).collect())
        .collect();
    Ok(Dictionary { rows, seed })
}

/// Real-valued 31-dimensional signature.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureVector {
    pub components: [f64; SIGNATURE_DIM],
    pub t_ms: i64,
}

/// Matrix–vector product of the dictionary with the observation.
pub fn generate_signature(
    dict: &Dictionary,
    obs: &ObservedVector,
) -> Result<SignatureVector, SignatureError> {
    if dict.dim_m() != obs.len() {
        return Err(SignatureError::DimensionMismatch { dict: dict.dim_m(), obs: obs.len() });
    }
    let mut components = [0.0; SIGNATURE_DIM];
    for (i, row) in dict.rows.iter().enumerate() {
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(obs.values.iter()) {
            acc += w * v;
        }
        components[i] = acc;
    }
    Ok(SignatureVector { components, t_ms: obs.t_ms })
}

/// The 31-byte advertising payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignaturePayload {
    bytes: [u8; SIGNATURE_DIM],
}

impl SignaturePayload {
    pub fn from_bytes(bytes: [u8; SIGNATURE_DIM]) -> Self {
        Self { bytes }
    }

    pub fn bytes(&self) -> &[u8; SIGNATURE_DIM] {
        &self.bytes
    }

    /// 62 lowercase hex characters.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(SIGNATURE_DIM * 2);
        for b in self.bytes {
            s.push(char::from_digit((b >> 4) as u32, 16).unwrap());
            s.push(char::from_digit((b & 0xf) as u32, 16).unwrap());
        }
        s
    }

    pub fn from_hex(hex: &str) -> Result<Self, SignatureError> {
        let hex = hex.trim();
        if hex.len() != SIGNATURE_DIM * 2 {
            return Err(SignatureError::Invalid("payload hex must be exactly 62 characters"));
        }
        let mut bytes = [0u8; SIGNATURE_DIM];
        let chars: Vec<char> = hex.chars().collect();
        for i in 0..SIGNATURE_DIM {
            let hi = chars[2 * i]
                .to_digit(16)
                .ok_or(SignatureError::Invalid("payload hex has a non-hex character"))?;
            let lo = chars[2 * i + 1]
                .to_digit(16)
                .ok_or(SignatureError::Invalid("payload hex has a non-hex character"))?;
            bytes[i] = ((hi << 4) | lo) as u8;
        }
        Ok(Self { bytes })
    }
}

impl fmt::Display for SignaturePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Affine quantization of a signature onto bytes: each component is mapped
/// from [lo, hi] to [0, 255], clamped, then rounded half-to-even.
pub fn quantize_signature(
    sig: &SignatureVector,
    scale_bounds: (f64, f64),
) -> Result<SignaturePayload, SignatureError> {
    let (lo, hi) = scale_bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(SignatureError::Invalid("scale bounds must be finite with lo < hi"));
    }
    let mut bytes = [0u8; SIGNATURE_DIM];
    for (i, &x) in sig.components.iter().enumerate() {
        if !x.is_finite() {
            return Err(SignatureError::NonFinite(i));
        }
        let scaled = ((x - lo) / (hi - lo) * 255.0).clamp(0.0, 255.0);
        bytes[i] = scaled.round_ties_even() as u8;
    }
    Ok(SignaturePayload { bytes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Broadcast,
    Observed,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Broadcast => "broadcast",
            RecordKind::Observed => "observed",
        })
    }
}

/// One log entry: a payload the device broadcast or observed at time tau.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRecord {
    pub payload: SignaturePayload,
    pub tau_ms: i64,
    pub kind: RecordKind,
    /// Measured RSS; present exactly when kind is Observed.
    pub rss_dbm: Option<f64>,
}

impl SignatureRecord {
    pub fn broadcast(payload: SignaturePayload, tau_ms: i64) -> Self {
        Self { payload, tau_ms, kind: RecordKind::Broadcast, rss_dbm: None }
    }

    pub fn observed(payload: SignaturePayload, tau_ms: i64, rss_dbm: f64) -> Self {
        Self { payload, tau_ms, kind: RecordKind::Observed, rss_dbm: Some(rss_dbm) }
    }
}

/// Tau-ordered local signature log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignatureLog {
    records: Vec<SignatureRecord>,
}

impl SignatureLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[SignatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Appends a record, keeping the log tau-ascending (stable for equal taus).
pub fn log_record(store: &mut SignatureLog, record: SignatureRecord) {
    let at = store.records.partition_point(|r| r.tau_ms <= record.tau_ms);
    store.records.insert(at, record);
}

/// Drops every record older than the retention period: removed iff
/// `now - tau > period`. A record exactly at the cutoff is retained.
pub fn expire_signatures(store: &mut SignatureLog, now_ms: i64, period_ms: i64) {
    assert!(period_ms > 0, "expiry period must be > 0");
    store.records.retain(|r| now_ms - r.tau_ms <= period_ms);
}

/// Records whose payload equals (byte-for-byte) some uploaded payload, in
/// input (tau) order, paired with the payload they matched. Broadcast-kind
/// records never match; matching is defined over observations.
pub fn match_signatures(
    observed_log: &[SignatureRecord],
    uploaded: &[SignaturePayload],
) -> Vec<(SignatureRecord, SignaturePayload)> {
    let set: HashSet<&SignaturePayload> = uploaded.iter().collect();
    observed_log
        .iter()
        .filter(|r| r.kind == RecordKind::Observed && set.contains(&r.payload))
        .map(|r| (r.clone(), r.payload))
        .collect()
}

/// Writes a log as `tau,kind,rss,payload_hex` lines (rss empty for broadcasts).
pub fn write_log_file(path: &Path, log: &SignatureLog) -> Result<(), SignatureError> {
    let mut out = String::new();
    for r in &log.records {
        let rss = r.rss_dbm.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.tau_ms, r.kind, rss, r.payload.to_hex()));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_log_file(path: &Path) -> Result<SignatureLog, SignatureError> {
    let text = fs::read_to_string(path)?;
    let mut log = SignatureLog::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(4, ',').collect();
        if parts.len() != 4 {
            return Err(SignatureError::LogParse {
                line: line_no,
                reason: "expected tau,kind,rss,payload_hex".into(),
            });
        }
        let tau_ms: i64 = parts[0].parse().map_err(|_| SignatureError::LogParse {
            line: line_no,
            reason: format!("bad tau {:?}", parts[0]),
        })?;
        let payload = SignaturePayload::from_hex(parts[3]).map_err(|e| SignatureError::LogParse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let record = match parts[1] {
            "broadcast" => {
                if !parts[2].is_empty() {
                    return Err(SignatureError::LogParse {
                        line: line_no,
                        reason: "broadcast records must not carry an RSS value".into(),
                    });
                }
                SignatureRecord::broadcast(payload, tau_ms)
            }
            "observed" => {
                let rss: f64 = parts[2].parse().map_err(|_| SignatureError::LogParse {
                    line: line_no,
                    reason: format!("bad rss {:?}", parts[2]),
                })?;
                SignatureRecord::observed(payload, tau_ms, rss)
            }
            other => {
                return Err(SignatureError::LogParse {
                    line: line_no,
                    reason: format!("unknown kind {other:?}"),
                })
            }
        };
        log_record(&mut log, record);
    }
    Ok(log)
}

/// Uploaded-signature interchange: one 62-hex payload per line.
pub fn write_payload_set(path: &Path, payloads: &[SignaturePayload]) -> Result<(), SignatureError> {
    let mut out = String::new();
    for p in payloads {
        out.push_str(&p.to_hex());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_payload_set(path: &Path) -> Result<Vec<SignaturePayload>, SignatureError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(SignaturePayload::from_hex)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload_of(fill: u8) -> SignaturePayload {
        SignaturePayload::from_bytes([fill; SIGNATURE_DIM])
    }

    #[test]
    fn dictionary_is_seed_deterministic() {
        let a = generate_dictionary(31, 5).unwrap();
        let b = generate_dictionary(31, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_dictionary(5, 1).unwrap();
        let d = generate_dictionary(5, 2).unwrap();
        assert_ne!(c.rows(), d.rows());
        assert!(c.rows().iter().flatten().all(|w| (-1.0..=1.0).contains(w)));
    }

    #[test]
    fn empty_environment_is_rejected() {
        assert!(matches!(generate_dictionary(0, 9), Err(SignatureError::EmptyEnvironment)));
    }

    #[test]
    fn identity_dictionary_passes_observation_through() {
        let mut rows = vec![vec![0.0; SIGNATURE_DIM]; SIGNATURE_DIM];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let dict = Dictionary::from_rows(rows).unwrap();
        let values: Vec<f64> = (0..SIGNATURE_DIM).map(|i| -60.0 - i as f64).collect();
        let obs = ObservedVector::from_values(values.clone(), 0);
        let sig = generate_signature(&dict, &obs).unwrap();
        assert_eq!(sig.components.to_vec(), values);
    }

    #[test]
    fn zero_observation_gives_zero_signature() {
        let dict = generate_dictionary(8, 3).unwrap();
        let obs = ObservedVector::from_values(vec![0.0; 8], 0);
        let sig = generate_signature(&dict, &obs).unwrap();
        assert!(sig.components.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dict = generate_dictionary(8, 3).unwrap();
        let obs = ObservedVector::from_values(vec![-60.0; 7], 0);
        assert!(matches!(
            generate_signature(&dict, &obs),
            Err(SignatureError::DimensionMismatch { dict: 8, obs: 7 })
        ));
    }

    #[test]
    fn quantize_clamps_and_rounds_half_even() {
        let (lo, hi) = DEFAULT_QUANT_BOUNDS;
        let sig = SignatureVector { components: [lo; SIGNATURE_DIM], t_ms: 0 };
        assert_eq!(quantize_signature(&sig, (lo, hi)).unwrap().bytes(), &[0u8; SIGNATURE_DIM]);
        let sig = SignatureVector { components: [hi; SIGNATURE_DIM], t_ms: 0 };
        assert_eq!(quantize_signature(&sig, (lo, hi)).unwrap().bytes(), &[0xFF; SIGNATURE_DIM]);
        // midpoint scales to 127.5, which rounds half-to-even to 128
        let sig = SignatureVector { components: [(lo + hi) / 2.0; SIGNATURE_DIM], t_ms: 0 };
        assert_eq!(quantize_signature(&sig, (lo, hi)).unwrap().bytes(), &[128u8; SIGNATURE_DIM]);
        // way out of range clamps rather than wrapping
        let sig = SignatureVector { components: [hi * 10.0; SIGNATURE_DIM], t_ms: 0 };
        assert_eq!(quantize_signature(&sig, (lo, hi)).unwrap().bytes(), &[0xFF; SIGNATURE_DIM]);
    }

    #[test]
    fn quantize_rejects_non_finite_and_bad_bounds() {
        let mut components = [0.0; SIGNATURE_DIM];
        components[7] = f64::NAN;
        let sig = SignatureVector { components, t_ms: 0 };
        assert!(matches!(
            quantize_signature(&sig, DEFAULT_QUANT_BOUNDS),
            Err(SignatureError::NonFinite(7))
        ));
        let sig = SignatureVector { components: [0.0; SIGNATURE_DIM], t_ms: 0 };
        assert!(quantize_signature(&sig, (1.0, 1.0)).is_err());
        assert!(quantize_signature(&sig, (2.0, -2.0)).is_err());
    }

    #[test]
    fn log_keeps_tau_order() {
        let mut log = SignatureLog::new();
        log_record(&mut log, SignatureRecord::broadcast(payload_of(2), 200));
        log_record(&mut log, SignatureRecord::broadcast(payload_of(1), 100));
        log_record(&mut log, SignatureRecord::broadcast(payload_of(3), 150));
        let taus: Vec<i64> = log.records().iter().map(|r| r.tau_ms).collect();
        assert_eq!(taus, vec![100, 150, 200]);
    }

    #[test]
    fn log_appends_losslessly() {
        let mut log = SignatureLog::new();
        for i in 0..10_000i64 {
            log_record(&mut log, SignatureRecord::observed(payload_of((i % 251) as u8), i * 7 % 1000, -60.0));
        }
        assert_eq!(log.len(), 10_000);
        assert!(log.records().windows(2).all(|w| w[0].tau_ms <= w[1].tau_ms));
    }

    #[test]
    fn expiry_boundary_is_exact() {
        let day_ms = 24 * 60 * 60 * 1000i64;
        let now = 100 * day_ms;
        let period = 14 * day_ms;
        let mut log = SignatureLog::new();
        log_record(&mut log, SignatureRecord::broadcast(payload_of(1), now - 15 * day_ms));
        log_record(&mut log, SignatureRecord::broadcast(payload_of(2), now - period - 1));
        log_record(&mut log, SignatureRecord::broadcast(payload_of(3), now - period));
        log_record(&mut log, SignatureRecord::broadcast(payload_of(4), now - period + 1));
        log_record(&mut log, SignatureRecord::broadcast(payload_of(5), now));
        expire_signatures(&mut log, now, period);
        let kept: Vec<u8> = log.records().iter().map(|r| r.payload.bytes()[0]).collect();
        assert_eq!(kept, vec![3, 4, 5]);
    }

    #[test]
    fn expire_on_empty_log_is_noop() {
        let mut log = SignatureLog::new();
        expire_signatures(&mut log, 1_000, 10);
        assert!(log.is_empty());
    }

    #[test]
    fn matching_is_exact_byte_equality() {
        let mut log = SignatureLog::new();
        log_record(&mut log, SignatureRecord::observed(payload_of(9), 10, -70.0));
        log_record(&mut log, SignatureRecord::observed(payload_of(8), 20, -71.0));
        // broadcasts never match, even with an uploaded payload
        log_record(&mut log, SignatureRecord::broadcast(payload_of(9), 30));

        assert!(match_signatures(log.records(), &[]).is_empty());
        let hits = match_signatures(log.records(), &[payload_of(9)]);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0.tau_ms, 10);
        assert_eq!(hits[0].1, payload_of(9));
    }

    #[test]
    fn hex_round_trip() {
        let mut bytes = [0u8; SIGNATURE_DIM];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = (i * 37 % 256) as u8;
        }
        let p = SignaturePayload::from_bytes(bytes);
        assert_eq!(p.to_hex().len(), 62);
        assert_eq!(SignaturePayload::from_hex(&p.to_hex()).unwrap(), p);
        assert!(SignaturePayload::from_hex("abc").is_err());
        assert!(SignaturePayload::from_hex(&"zz".repeat(31)).is_err());
    }

    #[test]
    fn log_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.txt");
        let mut log = SignatureLog::new();
        log_record(&mut log, SignatureRecord::broadcast(payload_of(1), 100));
        log_record(&mut log, SignatureRecord::observed(payload_of(2), 250, -63.25));
        write_log_file(&path, &log).unwrap();
        let back = read_log_file(&path).unwrap();
        assert_eq!(log, back);

        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("100,broadcast,,"));
        assert!(text.contains("250,observed,-63.25,"));
    }

    #[test]
    fn payload_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("uploaded.txt");
        let set = vec![payload_of(7), payload_of(200)];
        write_payload_set(&path, &set).unwrap();
        assert_eq!(read_payload_set(&path).unwrap(), set);
    }

    #[test]
    fn malformed_log_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "12,observed,-60\n").unwrap();
        assert!(read_log_file(&path).is_err());
        fs::write(&path, format!("12,broadcast,-60,{}\n", payload_of(0).to_hex())).unwrap();
        assert!(read_log_file(&path).is_err());
        fs::write(&path, format!("12,weird,,{}\n", payload_of(0).to_hex())).unwrap();
        assert!(read_log_file(&path).is_err());
    }
}
