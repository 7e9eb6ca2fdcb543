//! Device traces and CSV ingestion in the column-per-appliance layout.
//!
//! The expected file has a header row of device names followed by one row
//! per time step; each column is one appliance's power series in watts.
//! Blank cells are resolved at load time according to [`MissingPolicy`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One appliance's power series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTrace {
    device_id: String,
    samples: Vec<f64>,
}

impl DeviceTrace {
    pub fn new(device_id: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        let device_id = device_id.into();
        if samples.is_empty() {
            return Err(CoreError::Format(format!("device `{device_id}` has no samples")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Format(format!(
                "device `{device_id}` has a non-finite sample at index {i}"
            )));
        }
        Ok(Self { device_id, samples })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Traces in source-column order with unique device ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviceTraceSet {
    traces: Vec<DeviceTrace>,
}

impl DeviceTraceSet {
    pub fn new(traces: Vec<DeviceTrace>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &traces {
            if !seen.insert(t.device_id.as_str()) {
                return Err(CoreError::Format(format!(
                    "duplicate device name `{}`",
                    t.device_id
                )));
            }
        }
        Ok(Self { traces })
    }

    pub fn traces(&self) -> &[DeviceTrace] {
        &self.traces
    }

    pub fn get(&self, device_id: &str) -> Option<&DeviceTrace> {
        self.traces.iter().find(|t| t.device_id == device_id)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DeviceTrace> {
        self.traces.iter()
    }
}

/// How blank cells are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Every blank cell becomes 0.0 ("appliance off").
    #[default]
    Zero,
    /// Blank cells after a column's last value are removed; interior blanks
    /// still become 0.0.
    DropTrailing,
}

impl std::str::FromStr for MissingPolicy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "drop_trailing" | "drop-trailing" => Ok(Self::DropTrailing),
            other => Err(CoreError::Config(format!("unknown missing policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for MissingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zero => "zero",
            Self::DropTrailing => "drop_trailing",
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<DeviceTraceSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    read_csv(file, policy)
}

/// Parses traces from any reader; see [`load_csv`].
pub fn read_csv<R: Read>(reader: R, policy: MissingPolicy) -> Result<DeviceTraceSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| CoreError::Format(format!("unreadable header: {e}")))?,
        None => return Err(CoreError::Format("empty input: missing header row".into())),
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CoreError::Format("empty header".into()));
    }
    if let Some(i) = names.iter().position(String::is_empty) {
        return Err(CoreError::Format(format!("header column {} is blank", i + 1)));
    }

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (i, rec) in records.enumerate() {
        // Row numbers are 1-based and count the header as row 1.
        let row = i + 2;
        let rec = rec.map_err(|e| CoreError::Format(format!("row {row}: {e}")))?;
        if rec.len() > names.len() {
            return Err(CoreError::Format(format!(
                "row {row} has {} cells but the header has {}",
                rec.len(),
                names.len()
            )));
        }
        for (c, column) in columns.iter_mut().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let value = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| CoreError::Parse {
                    row,
                    column: c + 1,
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(CoreError::Parse {
                        row,
                        column: c + 1,
                        message: format!("`{cell}` is not finite"),
                    });
                }
                Some(v)
            };
            column.push(value);
        }
    }

    let traces = names
        .into_iter()
        .zip(columns)
        .map(|(name, mut cells)| {
            if policy == MissingPolicy::DropTrailing {
                while matches!(cells.last(), Some(None)) {
                    cells.pop();
                }
            }
            let samples = cells.into_iter().map(|c| c.unwrap_or(0.0)).collect();
            DeviceTrace::new(name, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    DeviceTraceSet::new(traces)
}

/// Formats a sample as a plain decimal with at most 9 significant digits.
pub fn format_value(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if magnitude > 8 {
        let shift = magnitude - 8;
        let digits = (v / 10f64.powi(shift)).round();
        return format!("{digits:.0}{}", "0".repeat(shift as usize));
    }
    let decimals = (8 - magnitude) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Writes traces column-wise; shorter columns are padded with blank cells.
pub fn write_csv<W: Write>(writer: W, set: &DeviceTraceSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| CoreError::Format(format!("csv write failed: {e}"));
    w.write_record(set.iter().map(|t| t.device_id.as_str()))
        .map_err(to_err)?;
    let rows = set.iter().map(DeviceTrace::len).max().unwrap_or(0);
    let mut record = Vec::with_capacity(set.len());
    for r in 0..rows {
        record.clear();
        record.extend(
            set.iter()
                .map(|t| t.samples.get(r).map(|&v| format_value(v)).unwrap_or_default()),
        );
        w.write_record(&record).map_err(to_err)?;
    }
    w.flush().map_err(|e| CoreError::Format(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, set: &DeviceTraceSet) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), set)
}
