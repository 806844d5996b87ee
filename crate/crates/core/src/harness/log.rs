//! JSONL metrics: a versioned header line, then one object per iteration
//! and one per finished epoch.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::LossBreakdown;
use crate::error::{Error, Result};

use super::eval::EvalReport;

pub const METRICS_SCHEMA: &str = "sga-metrics";
pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub label: String,
    pub variant: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    PreEpoch,
    Train,
}

/// Everything observed during one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub phase: Phase,
    /// 0 for the pre-epoch; training epochs count from 1.
    pub epoch: usize,
    pub step: usize,
    pub gamma: Vec<f64>,
    pub avg_gamma: f64,
    pub alpha: Option<f64>,
    /// Gate outcome; absent when no gate was applied.
    pub selected: Option<bool>,
    /// Whether parameters were updated.
    pub updated: bool,
    pub focal_exponents: Option<Vec<f64>>,
    pub loss: Option<LossBreakdown>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub steps: usize,
    pub updated_steps: usize,
    /// Mean of the recorded average hardness over this epoch.
    pub recorded_hardness: f64,
    /// Threshold in force after this epoch, for progressive sampling.
    pub alpha: Option<f64>,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LogLine {
    Iteration(IterationRecord),
    Epoch(EpochRecord),
}

/// Streams log lines to a file.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        w.write_json(header)?;
        Ok(w)
    }

    pub fn write(&mut self, line: &LogLine) -> Result<()> {
        self.write_json(line)
    }

    fn write_json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<LogLine>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse = |no: usize, text: std::io::Result<String>| -> Result<String> {
        text.map_err(|e| Error::Parse {
            line: no + 1,
            detail: e.to_string(),
        })
    };
    let (no, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        detail: "empty metrics log".into(),
    })?;
    let header: LogHeader = serde_json::from_str(&parse(no, first)?).map_err(|e| Error::Parse {
        line: 1,
        detail: e.to_string(),
    })?;
    if header.schema != METRICS_SCHEMA || header.version != METRICS_VERSION {
        return Err(Error::Parse {
            line: 1,
            detail: format!("unsupported log schema {} v{}", header.schema, header.version),
        });
    }
    let mut out = Vec::new();
    for (no, text) in lines {
        let text = parse(no, text)?;
        out.push(serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: no + 1,
            detail: e.to_string(),
        })?);
    }
    Ok((header, out))
}
