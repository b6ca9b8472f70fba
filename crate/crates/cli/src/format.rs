//! `MTS1` binary trial files and the CSV importer.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "MTS1"  version:u16  N:u32  P:u32  T:u32  sampling_rate:f64
//! P × (len:u32, UTF-8 label bytes)
//! N·P·T × f64, ordered [trial][channel][time]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use spectral_shrinkage::MultiTrialSeries;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MTS1";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(offset: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        offset,
        message: message.into(),
    }
}

/// Serializes a series to the `MTS1` layout.
pub fn encode(series: &MultiTrialSeries) -> Vec<u8> {
    let labels = series.channel_labels();
    let label_bytes: usize = labels.iter().map(|l| 4 + l.len()).sum();
    let mut out = Vec::with_capacity(26 + label_bytes + 8 * series.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [series.n_trials(), series.n_channels(), series.n_samples()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&series.sampling_rate().to_le_bytes());
    for label in labels {
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    for v in series.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(parse_err(
                self.pos,
                format!("unexpected end of file reading {what} ({} of {n} bytes present)", self.bytes.len() - self.pos),
            )),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses an `MTS1` byte buffer. Every failure carries the byte offset at
/// which it was detected.
pub fn decode(bytes: &[u8]) -> Result<MultiTrialSeries, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(parse_err(0, "bad magic, expected \"MTS1\""));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(parse_err(4, format!("unsupported version {version}")));
    }
    let n = r.u32("trial count")? as usize;
    let p = r.u32("channel count")? as usize;
    let t = r.u32("sample count")? as usize;
    let fs_offset = r.pos;
    let fs = r.f64("sampling rate")?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(parse_err(fs_offset, format!("sampling rate {fs} is not positive and finite")));
    }
    let mut labels = Vec::with_capacity(p.min(1 << 16));
    for ch in 0..p {
        let len = r.u32("label length")? as usize;
        let at = r.pos;
        let raw = r.take(len, "label")?;
        let label = std::str::from_utf8(raw).map_err(|_| parse_err(at, format!("label {ch} is not UTF-8")))?;
        labels.push(label.to_string());
    }
    let count = n
        .checked_mul(p)
        .and_then(|v| v.checked_mul(t))
        .ok_or_else(|| parse_err(6, "dimensions overflow"))?;
    let payload_start = r.pos;
    let expected = count.checked_mul(8).ok_or_else(|| parse_err(6, "dimensions overflow"))?;
    let present = bytes.len() - payload_start;
    if present != expected {
        return Err(parse_err(
            payload_start,
            format!("payload holds {present} bytes but N·P·T·8 = {expected}"),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let v = r.f64("sample")?;
        if !v.is_finite() {
            return Err(parse_err(payload_start + 8 * i, format!("non-finite sample {v}")));
        }
        values.push(v);
    }
    MultiTrialSeries::from_flat(n, p, t, values, fs, labels)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn read_mts(path: &Path) -> Result<MultiTrialSeries, FormatError> {
    decode(&fs::read(path)?)
}

/// Reads long-format CSV with columns `trial, channel, time, value`
/// (header required, 0-based integer indices, every cell present once).
pub fn read_csv(path: &Path, sampling_rate: f64) -> Result<MultiTrialSeries, FormatError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| FormatError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| FormatError::Csv { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    if header != ["trial", "channel", "time", "value"] {
        return Err(FormatError::Csv {
            line: 1,
            message: format!("expected header trial,channel,time,value, got {}", header.join(",")),
        });
    }
    let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| FormatError::Csv { line, message: e.to_string() })?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let index = |k: usize, name: &str| {
            field(k).parse::<usize>().map_err(|_| FormatError::Csv {
                line,
                message: format!("{name} {:?} is not a nonnegative integer", field(k)),
            })
        };
        let key = (index(0, "trial")?, index(1, "channel")?, index(2, "time")?);
        let value: f64 = field(3).parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| FormatError::Csv {
            line,
            message: format!("value {:?} is not a finite number", field(3)),
        })?;
        if cells.insert(key, value).is_some() {
            return Err(FormatError::Csv {
                line,
                message: format!("duplicate cell trial {} channel {} time {}", key.0, key.1, key.2),
            });
        }
    }
    let dim = |f: fn(&(usize, usize, usize)) -> usize| cells.keys().map(f).max().map_or(0, |m| m + 1);
    let (n, p, t) = (dim(|k| k.0), dim(|k| k.1), dim(|k| k.2));
    if cells.len() != n * p * t {
        return Err(FormatError::Invalid(format!(
            "CSV covers {} of the {n}×{p}×{t} cells implied by its indices",
            cells.len()
        )));
    }
    let labels = (1..=p).map(|c| format!("ch{c}")).collect();
    MultiTrialSeries::from_flat(n, p, t, cells.into_values().collect(), sampling_rate, labels)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Loads trial data, dispatching on the `.csv` extension.
pub fn load_trials(path: &Path, csv_sampling_rate: f64) -> Result<MultiTrialSeries, FormatError> {
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(path, csv_sampling_rate)
    } else {
        read_mts(path)
    }
}
