//! CSV ingestion for the six body-position measurement cases and for
//! simulator traces, plus per-distance summaries and train/test splitting.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::signal::{DistanceStats, RssSample};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("no valid rows in {0}")]
    EmptyDataset(String),
    #[error("need at least 2 samples to split")]
    TooFewSamples,
    #[error("split fraction must be in [0, 1]")]
    InvalidFraction,
    #[error("mapping line {line}: {reason}")]
    MappingParse { line: usize, reason: String },
}

/// The six smartphone-carrying configurations: hand, pocket, backpack on
/// either side of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    Hh,
    Hp,
    Hb,
    Pb,
    Pp,
    Bb,
}

impl Case {
    pub const ALL: [Case; 6] = [Case::Hh, Case::Hp, Case::Hb, Case::Pb, Case::Pp, Case::Bb];

    /// Reference row count of the published measurement file for this case.
    pub fn published_count(self) -> usize {
        match self {
            Case::Hh => 19_903,
            Case::Hp => 16_081,
            Case::Hb => 10_330,
            Case::Pb => 19_161,
            Case::Pp => 24_151,
            Case::Bb => 34_092,
        }
    }
}

/// Sum of the six published per-case counts.
pub const PUBLISHED_TOTAL: usize = 123_718;

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Hh => "HH",
            Case::Hp => "HP",
            Case::Hb => "HB",
            Case::Pb => "PB",
            Case::Pp => "PP",
            Case::Bb => "BB",
        })
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HH" => Ok(Case::Hh),
            "HP" => Ok(Case::Hp),
            "HB" => Ok(Case::Hb),
            "PB" => Ok(Case::Pb),
            "PP" => Ok(Case::Pp),
            "BB" => Ok(Case::Bb),
            other => Err(format!("unknown case {other:?} (want HH|HP|HB|PB|PP|BB)")),
        }
    }
}

/// One loaded measurement case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDataset {
    pub case: Case,
    pub samples: Vec<RssSample>,
    /// Where the samples came from, for report provenance.
    pub source: String,
}

/// A source column, by position or by header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Name(n) => f.write_str(n),
        }
    }
}

impl FromStr for ColumnRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty column reference".into());
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

/// Where each semantic field lives in the source file. RSS and true distance
/// are mandatory; everything else degrades gracefully when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    pub rss: ColumnRef,
    pub true_distance: ColumnRef,
    pub timestamp: Option<ColumnRef>,
    pub elapsed: Option<ColumnRef>,
    pub name: Option<ColumnRef>,
    pub payload: Option<ColumnRef>,
    pub mac: Option<ColumnRef>,
    /// Whether the file starts with a header row; `None` sniffs it from
    /// whether the mandatory fields of the first row parse as numbers.
    pub header: Option<bool>,
}

impl Default for ColumnMapping {
    /// Measurement-file field order: distance, phone name, MAC, payload,
    /// RSS, elapsed time, timestamp.
    fn default() -> Self {
        Self {
            rss: ColumnRef::Index(4),
            true_distance: ColumnRef::Index(0),
            timestamp: Some(ColumnRef::Index(6)),
            elapsed: Some(ColumnRef::Index(5)),
            name: Some(ColumnRef::Index(1)),
            payload: Some(ColumnRef::Index(3)),
            mac: Some(ColumnRef::Index(2)),
            header: None,
        }
    }
}

impl ColumnMapping {
    /// Layout of simulator trace files: time, RSS, true distance.
    pub fn trace_mapping() -> Self {
        Self {
            rss: ColumnRef::Index(1),
            true_distance: ColumnRef::Index(2),
            timestamp: Some(ColumnRef::Index(0)),
            elapsed: None,
            name: None,
            payload: None,
            mac: None,
            header: Some(true),
        }
    }
}

/// Parses a `key=value` mapping file. Keys are the semantic field names
/// (`rss`, `true_distance`, `timestamp`, `elapsed`, `name`, `payload`,
/// `mac`, `header`); values are column indices, header names, `none` to drop
/// an optional field, or `true`/`false`/`auto` for `header`. Unset keys keep
/// the default mapping.
pub fn read_mapping_file(path: &Path) -> Result<ColumnMapping, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut mapping = ColumnMapping::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| DatasetError::MappingParse { line: lineno + 1, reason };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected key=value".into()))?;
        let key = key.trim();
        let value = value.trim();
        let col = || -> Result<ColumnRef, DatasetError> {
            value.parse().map_err(|e: String| err(e))
        };
        let opt_col = || -> Result<Option<ColumnRef>, DatasetError> {
            if value.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                col().map(Some)
            }
        };
        match key {
            "rss" => mapping.rss = col()?,
            "true_distance" => mapping.true_distance = col()?,
            "timestamp" => mapping.timestamp = opt_col()?,
            "elapsed" => mapping.elapsed = opt_col()?,
            "name" => mapping.name = opt_col()?,
            "payload" => mapping.payload = opt_col()?,
            "mac" => mapping.mac = opt_col()?,
            "header" => {
                mapping.header = match value.to_ascii_lowercase().as_str() {
                    "true" => Some(true),
                    "false" => Some(false),
                    "auto" => None,
                    other => return Err(err(format!("bad header value {other:?}"))),
                }
            }
            other => return Err(err(format!("unknown field {other:?}"))),
        }
    }
    Ok(mapping)
}

/// A loaded dataset plus how many malformed rows were dropped on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub dataset: CaseDataset,
    pub skipped: usize,
}

struct ResolvedMapping {
    rss: usize,
    true_distance: usize,
    timestamp: Option<usize>,
    elapsed: Option<usize>,
    name: Option<usize>,
}

fn resolve_one(
    col: &ColumnRef,
    header: Option<&StringRecord>,
) -> Result<usize, DatasetError> {
    match col {
        ColumnRef::Index(i) => Ok(*i),
        ColumnRef::Name(n) => {
            let header = header.ok_or_else(|| {
                DatasetError::Schema(format!("column {n:?} is named but the file has no header"))
            })?;
            header
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| DatasetError::Schema(format!("column {n:?} not in header")))
        }
    }
}

fn resolve(
    mapping: &ColumnMapping,
    header: Option<&StringRecord>,
) -> Result<ResolvedMapping, DatasetError> {
    let opt = |c: &Option<ColumnRef>| -> Result<Option<usize>, DatasetError> {
        // a named optional column missing from the header just degrades
        match c {
            Some(col) => Ok(resolve_one(col, header).ok()),
            None => Ok(None),
        }
    };
    Ok(ResolvedMapping {
        rss: resolve_one(&mapping.rss, header)?,
        true_distance: resolve_one(&mapping.true_distance, header)?,
        timestamp: opt(&mapping.timestamp)?,
        elapsed: opt(&mapping.elapsed)?,
        name: opt(&mapping.name)?,
    })
}

fn field<'r>(record: &'r StringRecord, index: usize) -> Option<&'r str> {
    record.get(index).map(str::trim)
}

fn parse_f64(record: &StringRecord, index: usize) -> Option<f64> {
    field(record, index)?.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// True when the record's mandatory fields look like data, not labels.
fn looks_like_data(record: &StringRecord, mapping: &ColumnMapping) -> bool {
    let numeric = |col: &ColumnRef| match col {
        ColumnRef::Index(i) => parse_f64(record, *i).is_some(),
        ColumnRef::Name(_) => false, // named columns imply a header row
    };
    numeric(&mapping.rss) && numeric(&mapping.true_distance)
}

/// Loads one case file. Rows whose mandatory fields don't parse — or whose
/// distance is non-positive — are counted and skipped; optional fields fall
/// back to defaults (row ordinal for time, zero elapsed, generic ids).
pub fn load_case(
    path: &Path,
    mapping: &ColumnMapping,
    case: Case,
) -> Result<LoadOutcome, DatasetError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_path(path)?;
    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record?);
    }

    let has_header = match mapping.header {
        Some(h) => h,
        None => records.first().is_some_and(|r| !looks_like_data(r, mapping)),
    };
    let header = if has_header { records.first() } else { None };
    let resolved = resolve(mapping, header)?;
    let data = if has_header && !records.is_empty() { &records[1..] } else { &records[..] };

    let mut samples = Vec::with_capacity(data.len());
    let mut skipped = 0usize;
    for (ordinal, record) in data.iter().enumerate() {
        let (Some(rss), Some(distance)) = (
            parse_f64(record, resolved.rss),
            parse_f64(record, resolved.true_distance),
        ) else {
            skipped += 1;
            continue;
        };
        if distance <= 0.0 {
            skipped += 1;
            continue;
        }
        let timestamp_ms = resolved
            .timestamp
            .and_then(|i| parse_f64(record, i))
            .map(|t| t.round() as i64)
            .unwrap_or(ordinal as i64);
        let elapsed_ms = resolved
            .elapsed
            .and_then(|i| parse_f64(record, i))
            .map(|t| t.round() as i64)
            .unwrap_or(0);
        let tx_id = resolved
            .name
            .and_then(|i| field(record, i))
            .filter(|s| !s.is_empty())
            .unwrap_or("tx")
            .to_string();
        samples.push(RssSample {
            timestamp_ms,
            rss_dbm: rss,
            true_distance_m: Some(distance),
            tx_id,
            rx_id: "rx".to_string(),
            case: Some(case),
            elapsed_ms,
        });
    }

    if samples.is_empty() {
        return Err(DatasetError::EmptyDataset(path.display().to_string()));
    }
    Ok(LoadOutcome {
        dataset: CaseDataset {
            case,
            samples,
            source: path.display().to_string(),
        },
        skipped,
    })
}

/// Per-distance count, mean RSS, and sample variance, ascending by distance.
pub fn summarize(dataset: &CaseDataset) -> Vec<DistanceStats> {
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for s in &dataset.samples {
        let Some(d) = s.true_distance_m else { continue };
        match groups.iter_mut().find(|(gd, _)| *gd == d) {
            Some((_, v)) => v.push(s.rss_dbm),
            None => groups.push((d, vec![s.rss_dbm])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    groups
        .into_iter()
        .map(|(distance_m, rss)| {
            let count = rss.len();
            let mean_rss = rss.iter().sum::<f64>() / count as f64;
            let var_rss = if count > 1 {
                rss.iter().map(|r| (r - mean_rss) * (r - mean_rss)).sum::<f64>()
                    / (count - 1) as f64
            } else {
                0.0
            };
            DistanceStats { distance_m, count, mean_rss, var_rss }
        })
        .collect()
}

/// Result of an 80/20-style partition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestSplit {
    pub train: Vec<RssSample>,
    pub test: Vec<RssSample>,
}

impl TrainTestSplit {
    /// An empty side makes the split unusable for evaluation.
    pub fn is_degenerate(&self) -> bool {
        self.train.is_empty() || self.test.is_empty()
    }
}

/// Seeded shuffle, then the first `floor(n * fraction)` samples train.
pub fn split_train_test(
    dataset: &CaseDataset,
    fraction: f64,
    seed: u64,
) -> Result<TrainTestSplit, DatasetError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DatasetError::InvalidFraction);
    }
    let n = dataset.samples.len();
    if n < 2 {
        return Err(DatasetError::TooFewSamples);
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_n = (n as f64 * fraction).floor() as usize;
    let take = |idx: &[usize]| idx.iter().map(|&i| dataset.samples[i].clone()).collect();
    Ok(TrainTestSplit { train: take(&indices[..train_n]), test: take(&indices[train_n..]) })
}
