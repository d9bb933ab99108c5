//! On-disk record container.
//!
//! A record is two files: the payload at the given path and a JSON header
//! next to it at `<path>.json`:
//!
//! ```json
//! {
//!   "format": "motorsig-record",
//!   "format_version": 1,
//!   "sample_rate_hz": 50000.0,
//!   "channel_labels": ["phase_a", "phase_b", "phase_c"],
//!   "sample_count": 100000,
//!   "encoding": "f32le"
//! }
//! ```
//!
//! `f32le` payloads are little-endian IEEE-754 single floats, interleaved by
//! channel (sample 0 of every channel, then sample 1, ...), with no framing
//! bytes. `csv` payloads have a header row of channel labels and one row per
//! sample, written with the shortest decimal that reads back to the same
//! `f64`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{RecordError, Result};
use crate::signal_model::{Channel, MultiChannelRecord};

pub const RECORD_FORMAT: &str = "motorsig-record";
pub const RECORD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    F32le,
    Csv,
}

impl std::str::FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "f32le" | "binary" => Ok(Encoding::F32le),
            "csv" => Ok(Encoding::Csv),
            other => Err(format!("unknown encoding `{other}` (expected f32le or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub format: String,
    pub format_version: u32,
    pub sample_rate_hz: f64,
    pub channel_labels: Vec<String>,
    pub sample_count: usize,
    pub encoding: Encoding,
}

/// Path of the JSON header belonging to a payload.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordError + '_ {
    move |source| RecordError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_record(r: &MultiChannelRecord, path: &Path, encoding: Encoding) -> Result<()> {
    let header = RecordHeader {
        format: RECORD_FORMAT.into(),
        format_version: RECORD_FORMAT_VERSION,
        sample_rate_hz: r.sample_rate_hz(),
        channel_labels: r.labels(),
        sample_count: r.len(),
        encoding,
    };
    match encoding {
        Encoding::F32le => {
            let mut bytes = Vec::with_capacity(4 * r.len() * r.channel_count());
            for t in 0..r.len() {
                for c in r.channels() {
                    bytes.extend_from_slice(&(c.samples[t] as f32).to_le_bytes());
                }
            }
            fs::write(path, bytes).map_err(io_err(path))?;
        }
        Encoding::Csv => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            let csv_err = |e: csv::Error| RecordError::CsvParse {
                path: path.display().to_string(),
                line: 0,
                reason: e.to_string(),
            };
            w.write_record(r.labels()).map_err(csv_err)?;
            let mut row = Vec::with_capacity(r.channel_count());
            for t in 0..r.len() {
                row.clear();
                row.extend(r.channels().iter().map(|c| c.samples[t].to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(path))?;
        }
    }
    let hp = header_path(path);
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    let mut f = fs::File::create(&hp).map_err(io_err(&hp))?;
    f.write_all(text.as_bytes()).map_err(io_err(&hp))?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<RecordHeader> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(io_err(&hp))?;
    let malformed = |reason: String| RecordError::MalformedHeader {
        path: hp.display().to_string(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    // Check the version before the full schema so a newer header with extra
    // fields reports as a version problem.
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed("missing integer `format_version`".into()))?;
    if version != RECORD_FORMAT_VERSION as u64 {
        return Err(RecordError::UnknownVersion {
            found: version as u32,
            supported: RECORD_FORMAT_VERSION,
        }
        .into());
    }
    let header: RecordHeader = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    if header.format != RECORD_FORMAT {
        return Err(malformed(format!("format tag `{}` is not `{RECORD_FORMAT}`", header.format)).into());
    }
    if header.channel_labels.is_empty() {
        return Err(malformed("no channels".into()).into());
    }
    if !(header.sample_rate_hz > 0.0 && header.sample_rate_hz.is_finite()) {
        return Err(malformed("sample_rate_hz must be positive".into()).into());
    }
    Ok(header)
}

pub fn read_record(path: &Path) -> Result<MultiChannelRecord> {
    let header = read_header(path)?;
    let n_ch = header.channel_labels.len();
    let n = header.sample_count;
    let mut data = vec![Vec::with_capacity(n); n_ch];
    match header.encoding {
        Encoding::F32le => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            let expected = (4 * n * n_ch) as u64;
            if bytes.len() as u64 != expected {
                return Err(RecordError::Truncated {
                    path: path.display().to_string(),
                    expected,
                    actual: bytes.len() as u64,
                }
                .into());
            }
            for (i, chunk) in bytes.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                data[i % n_ch].push(v as f64);
            }
        }
        Encoding::Csv => {
            let p = path.display().to_string();
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_path(path)
                .map_err(|e| RecordError::CsvParse {
                    path: p.clone(),
                    line: 0,
                    reason: e.to_string(),
                })?;
            let labels: Vec<String> = rdr
                .headers()
                .map_err(|e| RecordError::CsvParse {
                    path: p.clone(),
                    line: 1,
                    reason: e.to_string(),
                })?
                .iter()
                .map(str::to_string)
                .collect();
            if labels != header.channel_labels {
                return Err(RecordError::CsvParse {
                    path: p,
                    line: 1,
                    reason: format!(
                        "column labels {labels:?} differ from header {:?}",
                        header.channel_labels
                    ),
                }
                .into());
            }
            let mut rows = 0usize;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| RecordError::CsvParse {
                    path: p.clone(),
                    line: e.position().map_or(0, |pos| pos.line()),
                    reason: e.to_string(),
                })?;
                let line = rec.position().map_or(0, |pos| pos.line());
                for (c, field) in rec.iter().enumerate() {
                    let v: f64 = field.trim().parse().map_err(|_| RecordError::CsvParse {
                        path: p.clone(),
                        line,
                        reason: format!("`{field}` in column {c} is not a number"),
                    })?;
                    data[c].push(v);
                }
                rows += 1;
            }
            if rows != n {
                return Err(RecordError::CsvParse {
                    path: p,
                    line: rows as u64 + 1,
                    reason: format!("expected {n} data rows, found {rows}"),
                }
                .into());
            }
        }
    }
    let channels = header
        .channel_labels
        .into_iter()
        .zip(data)
        .map(|(l, s)| Channel::new(l, s))
        .collect();
    MultiChannelRecord::new(header.sample_rate_hz, channels)
}
