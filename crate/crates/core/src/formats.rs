//! On-disk formats.
//!
//! * Feature files (`.spfa`): a 16-byte little-endian header followed by
//!   `tau * nu` little-endian `f32` values, frame-major.
//!
//!   | offset | size | field                 |
//!   |--------|------|-----------------------|
//!   | 0      | 4    | magic `SPFA`          |
//!   | 4      | 2    | version, must be 1    |
//!   | 6      | 2    | flags, must be 0      |
//!   | 8      | 4    | `tau` (frames)        |
//!   | 12     | 4    | `nu` (channels)       |
//!   | 16     | ...  | payload               |
//!
//! * Policy state, loss report and plan documents: JSON.
//! * Configuration: TOML with `[augment]` and `[simulation]` tables.
//! * Simulation traces: CSV, one row per epoch and strategy.
//!
//! Every file write goes through [`write_atomic`].

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beta::BetaParams;
use crate::config::AugmentConfig;
use crate::feature::{FeatureMatrix, MatrixError, PerStrategy, StrategyId};
use crate::kernels::AugmentationPlan;
use crate::policy::{AugmentVariant, LossReport, PolicyState};
use crate::sim::{EpochTrace, SimConfig, SimulationRun};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic {0:?}, expected \"SPFA\"")]
    BadMagic([u8; 4]),
    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported feature file flags {0:#06x}")]
    UnsupportedFlags(u16),
    #[error("expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },
    #[error("value {value} at flat index {index} does not fit in f32")]
    NotRepresentable { index: usize, value: f64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("invalid document: {0}")]
    Document(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }
}

pub const FEATURE_MAGIC: [u8; 4] = *b"SPFA";
pub const FEATURE_VERSION: u16 = 1;
pub const FEATURE_HEADER_LEN: usize = 16;

/// Writes `path` via a temporary file in the same directory and a rename, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let wrap = |e: io::Error| FormatError::io(path, e);
    let mut tmp = tempfile::Builder::new().prefix(".specpolicy-").tempfile_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644)).map_err(wrap)?;
    }
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>, FormatError> {
    let (tau, nu) = m.shape();
    let dims = |v: usize| u32::try_from(v).map_err(|_| FormatError::Document(format!("dimension {v} exceeds u32")));
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * tau * nu);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&dims(tau)?.to_le_bytes());
    out.extend_from_slice(&dims(nu)?.to_le_bytes());
    for (index, &value) in m.values().iter().enumerate() {
        let narrow = value as f32;
        if !narrow.is_finite() {
            return Err(FormatError::NotRepresentable { index, value });
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, FormatError> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(FormatError::Length { expected: FEATURE_HEADER_LEN, actual: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != FEATURE_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = u16_at(6);
    if flags != 0 {
        return Err(FormatError::UnsupportedFlags(flags));
    }
    let (tau, nu) = (u32_at(8), u32_at(12));
    let expected = tau
        .checked_mul(nu)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(FEATURE_HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(FormatError::Length { expected, actual: bytes.len() });
    }
    let values = bytes[FEATURE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMatrix::new(tau, nu, values)?)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix, FormatError> {
    decode_features(&read_bytes(path)?)
}

pub fn write_feature_file(path: &Path, m: &FeatureMatrix) -> Result<(), FormatError> {
    write_atomic(path, &encode_features(m)?)
}

/// Parses a headerless CSV, one frame per row, one channel per column.
pub fn features_from_csv(text: &str) -> Result<FeatureMatrix, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut tau = 0;
    let mut nu = None;
    for record in reader.records() {
        let record = record?;
        match nu {
            None => nu = Some(record.len()),
            Some(n) if n != record.len() => {
                return Err(FormatError::Document(format!(
                    "row {} has {} columns, expected {n}",
                    tau + 1,
                    record.len()
                )))
            }
            Some(_) => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| FormatError::Document(format!("row {}: {field:?} is not a number", tau + 1)))?;
            values.push(v as f32 as f64);
        }
        tau += 1;
    }
    Ok(FeatureMatrix::new(tau, nu.unwrap_or(0), values)?)
}

pub fn features_to_csv(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    for t in 0..m.tau() {
        let row: Vec<String> = m.frame(t).iter().map(|v| (*v as f32).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub const STATE_FORMAT: &str = "specpolicy-state";
pub const STATE_VERSION: u32 = 1;
pub const PLAN_FORMAT: &str = "specpolicy-plan";
pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDocument {
    format: String,
    version: u32,
    epoch: u64,
    variant: AugmentVariant,
    a: f64,
    b: f64,
    master_seed: u64,
    prev_losses: PerStrategy<f64>,
    curr_losses: PerStrategy<f64>,
    probabilities: PerStrategy<f64>,
    relative: PerStrategy<f64>,
    lambda: PerStrategy<f64>,
}

fn check_header(value: &serde_json::Value, format: &str, version: u32) -> Result<(), FormatError> {
    let found = value.get("format").and_then(|f| f.as_str());
    if found != Some(format) {
        return Err(FormatError::Document(format!("expected format {format:?}, found {found:?}")));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == version as u64 => Ok(()),
        other => Err(FormatError::Document(format!("unsupported {format} version {other:?}, expected {version}"))),
    }
}

pub fn state_to_json(state: &PolicyState) -> String {
    let doc = StateDocument {
        format: STATE_FORMAT.into(),
        version: STATE_VERSION,
        epoch: state.epoch,
        variant: state.variant,
        a: state.beta.a,
        b: state.beta.b,
        master_seed: state.master_seed,
        prev_losses: state.prev_losses,
        curr_losses: state.curr_losses,
        probabilities: state.probabilities,
        relative: state.relative,
        lambda: state.lambda,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("state document serializes");
    s.push('\n');
    s
}

pub fn state_from_json(text: &str) -> Result<PolicyState, FormatError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    check_header(&value, STATE_FORMAT, STATE_VERSION)?;
    let doc: StateDocument = serde_json::from_value(value)?;
    let state = PolicyState {
        epoch: doc.epoch,
        variant: doc.variant,
        beta: BetaParams { a: doc.a, b: doc.b },
        master_seed: doc.master_seed,
        prev_losses: doc.prev_losses,
        curr_losses: doc.curr_losses,
        probabilities: doc.probabilities,
        relative: doc.relative,
        lambda: doc.lambda,
    };
    state.validate().map_err(FormatError::Document)?;
    Ok(state)
}

pub fn read_state(path: &Path) -> Result<PolicyState, FormatError> {
    state_from_json(&read_text(path)?)
}

pub fn write_state(path: &Path, state: &PolicyState) -> Result<(), FormatError> {
    write_atomic(path, state_to_json(state).as_bytes())
}

/// Loss report as exchanged with an external trainer. Losses are listed in
/// strategy order (warp, frequency mask, time mask); the epoch may be omitted
/// and then defaults to the one after the state's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossReportDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
    pub losses: PerStrategy<f64>,
}

impl LossReportDocument {
    pub fn into_report(self, state: &PolicyState) -> LossReport {
        LossReport { epoch: self.epoch.unwrap_or(state.epoch + 1), losses: self.losses }
    }
}

pub fn read_loss_report(path: &Path) -> Result<LossReportDocument, FormatError> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub input: String,
    /// File name inside the output directory.
    pub output: String,
    pub plan: AugmentationPlan,
}

/// Every realized draw of one `augment` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub format: String,
    pub version: u32,
    pub variant: AugmentVariant,
    pub master_seed: u64,
    pub epoch: u64,
    pub entries: Vec<PlanEntry>,
}

impl PlanDocument {
    pub fn new(variant: AugmentVariant, master_seed: u64, epoch: u64, entries: Vec<PlanEntry>) -> Self {
        PlanDocument { format: PLAN_FORMAT.into(), version: PLAN_VERSION, variant, master_seed, epoch, entries }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_header(&value, PLAN_FORMAT, PLAN_VERSION)?;
        Ok(serde_json::from_value(value)?)
    }
}

/// Configuration file: an `[augment]` table and a `[simulation]` table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub augment: AugmentConfig,
    pub simulation: SimConfig,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let cfg: ConfigFile = toml::from_str(text)?;
        cfg.augment.validate().map_err(FormatError::Document)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::from_toml(&read_text(path)?)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { augment: self.augment, ..self.simulation }
    }
}

pub const TRACE_HEADER: &str = "epoch,strategy,val_loss,probability,relative_loss,lambda,train_acc,val_acc";

/// One row of the trace table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: u64,
    pub strategy: StrategyId,
    pub val_loss: f64,
    pub probability: f64,
    pub relative_loss: f64,
    pub lambda: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

pub fn trace_rows(traces: &[EpochTrace]) -> Vec<TraceRow> {
    traces
        .iter()
        .flat_map(|t| {
            StrategyId::ALL.into_iter().map(move |s| {
                let i = s.index();
                TraceRow {
                    epoch: t.epoch,
                    strategy: s,
                    val_loss: t.val_loss[i],
                    probability: t.probability[i],
                    relative_loss: t.relative_loss[i],
                    lambda: t.lambda[i],
                    train_acc: t.train_accuracy,
                    val_acc: t.val_accuracy,
                }
            })
        })
        .collect()
}

pub fn trace_to_csv(traces: &[EpochTrace]) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in trace_rows(traces) {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Document(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRow>, FormatError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != TRACE_HEADER {
        return Err(FormatError::Document(format!("unexpected trace header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Single-line run summary.
pub fn summary_line(run: &SimulationRun) -> String {
    let c = &run.config;
    let (train, val) = run.final_trace().map_or((f64::NAN, f64::NAN), |t| (t.train_accuracy, t.val_accuracy));
    format!(
        "variant={} seed={} epochs={} final_train_acc={train} final_val_acc={val} gap={}",
        c.variant,
        c.seed,
        c.epochs,
        train - val
    )
}
