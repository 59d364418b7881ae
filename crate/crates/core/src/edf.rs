//! EDF reader (plain EDF, 16-bit samples) and the raw `.f32le` fallback.
//!
//! The header is 256 fixed-width ASCII bytes followed by 256 bytes per
//! signal, stored field-major: all labels, then all transducers, and so on.
//! Data records follow, each holding `samples_per_record` little-endian
//! `i16` values per signal in signal order.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sigprep::SignalTrace;

const FIXED_HEADER_BYTES: usize = 256;
const SIGNAL_HEADER_BYTES: usize = 256;

// Per-signal field widths, in on-disk order.
const LABEL: usize = 16;
const TRANSDUCER: usize = 80;
const DIMENSION: usize = 8;
const NUMBER: usize = 8;
const PREFILTER: usize = 80;
const SIGNAL_RESERVED: usize = 32;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("header truncated: need {needed} bytes, have {available}")]
    TruncatedHeader { needed: usize, available: usize },
    #[error("field `{field}` is not a valid number: {value:?}")]
    MalformedNumericField { field: String, value: String },
    #[error("field `{field}` is invalid: {value:?}")]
    MalformedField { field: String, value: String },
    #[error("header_bytes is {declared}, expected {expected} for {n_signals} signals")]
    InconsistentHeaderBytes {
        declared: usize,
        expected: usize,
        n_signals: usize,
    },
    #[error("record {record} truncated: file ends at byte {file_len}")]
    TruncatedRecord { record: usize, file_len: usize },
    #[error("signal index {index} out of range ({n_signals} signals)")]
    SignalIndexOutOfRange { index: usize, n_signals: usize },
    #[error("no signal matches any of {0:?}")]
    ChannelNotFound(Vec<String>),
    #[error("raw float file has {0} bytes, not a multiple of 4")]
    OddByteCount(usize),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sampling rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("cannot encode header field `{field}`: {reason}")]
    Encode { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

pub type Result<T, E = EdfError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: NaiveDate,
    pub start_time: NaiveTime,
    pub header_bytes: usize,
    /// Number of data records; resolved from the file length when the file
    /// declares -1.
    pub n_records: usize,
    pub record_duration: f64,
    pub n_signals: usize,
    pub reserved: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdfSignalSpec {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl EdfSignalSpec {
    fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }

    pub fn to_physical(&self, digital: i32) -> f64 {
        if digital == self.digital_min {
            return self.physical_min;
        }
        if digital == self.digital_max {
            return self.physical_max;
        }
        self.physical_min + f64::from(digital - self.digital_min) * self.gain()
    }

    /// Nearest digital code, clamped to the declared digital range.
    pub fn to_digital(&self, physical: f64) -> i32 {
        let d = (physical - self.physical_min) / self.gain() + f64::from(self.digital_min);
        (d.round() as i64).clamp(i64::from(self.digital_min), i64::from(self.digital_max)) as i32
    }

    /// Physical value of one digital step.
    pub fn quantum(&self) -> f64 {
        self.gain().abs()
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let field = |name: &str| format!("signal[{idx}].{name}");
        if self.digital_min >= self.digital_max {
            return Err(EdfError::MalformedField {
                field: field("digital_min/max"),
                value: format!("{}..{}", self.digital_min, self.digital_max),
            });
        }
        if self.physical_min == self.physical_max {
            return Err(EdfError::MalformedField {
                field: field("physical_min/max"),
                value: format!("{}..{}", self.physical_min, self.physical_max),
            });
        }
        if self.samples_per_record == 0 {
            return Err(EdfError::MalformedField {
                field: field("samples_per_record"),
                value: "0".into(),
            });
        }
        Ok(())
    }
}

fn ascii_field(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|&b| if b.is_ascii() { b as char } else { '?' })
        .collect::<String>()
        .trim()
        .to_string()
}

fn numeric<T: std::str::FromStr>(bytes: &[u8], field: &str) -> Result<T> {
    let text = ascii_field(bytes);
    text.parse::<T>().map_err(|_| EdfError::MalformedNumericField {
        field: field.to_string(),
        value: text,
    })
}

fn finite_real(bytes: &[u8], field: &str) -> Result<f64> {
    let v: f64 = numeric(bytes, field)?;
    if !v.is_finite() {
        return Err(EdfError::MalformedNumericField {
            field: field.to_string(),
            value: ascii_field(bytes),
        });
    }
    Ok(v)
}

fn parse_date(bytes: &[u8]) -> Result<NaiveDate> {
    let text = ascii_field(bytes);
    let bad = || EdfError::MalformedField {
        field: "start_date".into(),
        value: text.clone(),
    };
    let parts: Vec<u32> = text
        .split('.')
        .map(|p| p.parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [day, month, yy] = parts[..] else {
        return Err(bad());
    };
    // EDF two-digit years: 85..99 are 1985..1999, the rest 2000..2084.
    let year = if yy >= 85 { 1900 + yy } else { 2000 + yy };
    NaiveDate::from_ymd_opt(year as i32, month, day).ok_or_else(bad)
}

fn parse_time(bytes: &[u8]) -> Result<NaiveTime> {
    let text = ascii_field(bytes);
    let bad = || EdfError::MalformedField {
        field: "start_time".into(),
        value: text.clone(),
    };
    let parts: Vec<u32> = text
        .split('.')
        .map(|p| p.parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [h, m, s] = parts[..] else {
        return Err(bad());
    };
    NaiveTime::from_hms_opt(h, m, s).ok_or_else(bad)
}

/// Parses the fixed header and the per-signal header block.
pub fn parse_edf_header(bytes: &[u8]) -> Result<(EdfHeader, Vec<EdfSignalSpec>)> {
    if bytes.len() < FIXED_HEADER_BYTES {
        return Err(EdfError::TruncatedHeader {
            needed: FIXED_HEADER_BYTES,
            available: bytes.len(),
        });
    }
    let mut pos = 0usize;
    let mut take = |n: usize| {
        let slice = &bytes[pos..pos + n];
        pos += n;
        slice
    };
    let version = ascii_field(take(8));
    let patient_id = ascii_field(take(80));
    let recording_id = ascii_field(take(80));
    let start_date = parse_date(take(8))?;
    let start_time = parse_time(take(8))?;
    let header_bytes: usize = numeric(take(8), "header_bytes")?;
    let reserved = ascii_field(take(44));
    let n_records_raw: i64 = numeric(take(8), "n_records")?;
    let record_duration = finite_real(take(8), "record_duration")?;
    let n_signals: usize = numeric(take(4), "n_signals")?;

    let expected = FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * n_signals;
    if bytes.len() < expected {
        return Err(EdfError::TruncatedHeader {
            needed: expected,
            available: bytes.len(),
        });
    }
    if header_bytes != expected {
        return Err(EdfError::InconsistentHeaderBytes {
            declared: header_bytes,
            expected,
            n_signals,
        });
    }
    if record_duration <= 0.0 {
        return Err(EdfError::MalformedField {
            field: "record_duration".into(),
            value: record_duration.to_string(),
        });
    }

    let mut cursor = FIXED_HEADER_BYTES;
    let mut column = |width: usize| -> Vec<&[u8]> {
        let col = (0..n_signals)
            .map(|i| &bytes[cursor + i * width..cursor + (i + 1) * width])
            .collect();
        cursor += width * n_signals;
        col
    };
    let labels = column(LABEL);
    let transducers = column(TRANSDUCER);
    let dimensions = column(DIMENSION);
    let phys_min = column(NUMBER);
    let phys_max = column(NUMBER);
    let dig_min = column(NUMBER);
    let dig_max = column(NUMBER);
    let prefilters = column(PREFILTER);
    let samples = column(NUMBER);
    let reserved_cols = column(SIGNAL_RESERVED);

    let mut specs = Vec::with_capacity(n_signals);
    for i in 0..n_signals {
        let spec = EdfSignalSpec {
            label: ascii_field(labels[i]),
            transducer: ascii_field(transducers[i]),
            physical_dimension: ascii_field(dimensions[i]),
            physical_min: finite_real(phys_min[i], &format!("signal[{i}].physical_min"))?,
            physical_max: finite_real(phys_max[i], &format!("signal[{i}].physical_max"))?,
            digital_min: numeric(dig_min[i], &format!("signal[{i}].digital_min"))?,
            digital_max: numeric(dig_max[i], &format!("signal[{i}].digital_max"))?,
            prefiltering: ascii_field(prefilters[i]),
            samples_per_record: numeric(samples[i], &format!("signal[{i}].samples_per_record"))?,
            reserved: ascii_field(reserved_cols[i]),
        };
        spec.validate(i)?;
        specs.push(spec);
    }

    let record_bytes: usize = specs.iter().map(|s| 2 * s.samples_per_record).sum();
    let n_records = match n_records_raw {
        -1 => (bytes.len() - header_bytes).checked_div(record_bytes).unwrap_or(0),
        n if n >= 0 => n as usize,
        n => {
            return Err(EdfError::MalformedField {
                field: "n_records".into(),
                value: n.to_string(),
            })
        }
    };

    Ok((
        EdfHeader {
            version,
            patient_id,
            recording_id,
            start_date,
            start_time,
            header_bytes,
            n_records,
            record_duration,
            n_signals,
            reserved,
        },
        specs,
    ))
}

/// A decoded channel plus the number of digital codes found outside the
/// declared digital range (mapped anyway).
#[derive(Clone, Debug)]
pub struct DecodedSignal {
    pub trace: SignalTrace,
    pub out_of_range: usize,
}

pub fn decode_signal(
    bytes: &[u8],
    header: &EdfHeader,
    specs: &[EdfSignalSpec],
    signal_index: usize,
) -> Result<DecodedSignal> {
    let spec = specs
        .get(signal_index)
        .ok_or(EdfError::SignalIndexOutOfRange {
            index: signal_index,
            n_signals: specs.len(),
        })?;
    let record_bytes: usize = specs.iter().map(|s| 2 * s.samples_per_record).sum();
    let offset: usize = specs[..signal_index]
        .iter()
        .map(|s| 2 * s.samples_per_record)
        .sum();
    let n = spec.samples_per_record;
    let mut samples = Vec::with_capacity(n * header.n_records);
    let mut out_of_range = 0usize;
    for record in 0..header.n_records {
        let start = header.header_bytes + record * record_bytes;
        if start + record_bytes > bytes.len() {
            return Err(EdfError::TruncatedRecord {
                record,
                file_len: bytes.len(),
            });
        }
        let chunk = &bytes[start + offset..start + offset + 2 * n];
        for pair in chunk.chunks_exact(2) {
            let digital = i32::from(i16::from_le_bytes([pair[0], pair[1]]));
            if digital < spec.digital_min || digital > spec.digital_max {
                out_of_range += 1;
            }
            samples.push(spec.to_physical(digital));
        }
    }
    if out_of_range > 0 {
        log::warn!(
            "signal `{}`: {out_of_range} samples outside the digital range",
            spec.label
        );
    }
    let trace = SignalTrace::new(
        samples,
        n as f64 / header.record_duration,
        spec.label.clone(),
        spec.physical_dimension.clone(),
    )
    .map_err(|_| EdfError::InvalidRate(n as f64 / header.record_duration))?;
    Ok(DecodedSignal {
        trace,
        out_of_range,
    })
}

pub fn read_signal(
    bytes: &[u8],
    header: &EdfHeader,
    specs: &[EdfSignalSpec],
    signal_index: usize,
) -> Result<SignalTrace> {
    decode_signal(bytes, header, specs, signal_index).map(|d| d.trace)
}

fn normalize_label(label: &str) -> String {
    label.trim().to_ascii_lowercase()
}

/// Index of the first signal whose label matches one of `aliases`
/// (whitespace-trimmed, case-insensitive). Aliases are tried in order.
pub fn find_signal(specs: &[EdfSignalSpec], aliases: &[String]) -> Result<usize> {
    aliases
        .iter()
        .find_map(|alias| {
            let want = normalize_label(alias);
            specs.iter().position(|s| normalize_label(&s.label) == want)
        })
        .ok_or_else(|| EdfError::ChannelNotFound(aliases.to_vec()))
}

/// A parsed EDF file held in memory.
#[derive(Clone, Debug)]
pub struct EdfFile {
    pub header: EdfHeader,
    pub specs: Vec<EdfSignalSpec>,
    bytes: Vec<u8>,
}

impl EdfFile {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let (header, specs) = parse_edf_header(&bytes)?;
        Ok(Self {
            header,
            specs,
            bytes,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| EdfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(bytes)
    }

    pub fn signal(&self, index: usize) -> Result<SignalTrace> {
        read_signal(&self.bytes, &self.header, &self.specs, index)
    }

    pub fn signal_by_label(&self, aliases: &[String]) -> Result<SignalTrace> {
        self.signal(find_signal(&self.specs, aliases)?)
    }
}

fn put_field(out: &mut Vec<u8>, text: &str, width: usize, field: &str) -> Result<()> {
    if !text.is_ascii() || text.len() > width {
        return Err(EdfError::Encode {
            field: field.to_string(),
            reason: format!("{text:?} is not ASCII of at most {width} bytes"),
        });
    }
    out.extend_from_slice(text.as_bytes());
    out.extend(std::iter::repeat_n(b' ', width - text.len()));
    Ok(())
}

/// Shortest decimal rendering of `v` that fits `width` characters.
fn format_number(v: f64, width: usize, field: &str) -> Result<String> {
    let plain = v.to_string();
    if plain.len() <= width {
        return Ok(plain);
    }
    for decimals in (0..width).rev() {
        let s = format!("{v:.decimals$}");
        if s.len() <= width {
            return Ok(s);
        }
    }
    Err(EdfError::Encode {
        field: field.to_string(),
        reason: format!("{v} does not fit in {width} characters"),
    })
}

/// Serializes a header, signal specs and per-signal physical samples into an
/// EDF byte stream. Each sample vector must hold
/// `n_records * samples_per_record` values. `header.header_bytes` and
/// `header.n_signals` are recomputed from `specs`.
pub fn write_edf(header: &EdfHeader, specs: &[EdfSignalSpec], signals: &[Vec<f64>]) -> Result<Vec<u8>> {
    if signals.len() != specs.len() {
        return Err(EdfError::Encode {
            field: "signals".into(),
            reason: format!("{} sample vectors for {} specs", signals.len(), specs.len()),
        });
    }
    for (i, (spec, samples)) in specs.iter().zip(signals).enumerate() {
        spec.validate(i)?;
        if samples.len() != header.n_records * spec.samples_per_record {
            return Err(EdfError::Encode {
                field: format!("signal[{i}]"),
                reason: format!(
                    "{} samples, expected {}",
                    samples.len(),
                    header.n_records * spec.samples_per_record
                ),
            });
        }
    }
    let n_signals = specs.len();
    let header_bytes = FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * n_signals;
    let mut out = Vec::with_capacity(header_bytes);
    put_field(&mut out, &header.version, 8, "version")?;
    put_field(&mut out, &header.patient_id, 80, "patient_id")?;
    put_field(&mut out, &header.recording_id, 80, "recording_id")?;
    let d = header.start_date;
    put_field(
        &mut out,
        &format!("{:02}.{:02}.{:02}", d.day(), d.month(), d.year().rem_euclid(100)),
        8,
        "start_date",
    )?;
    let t = header.start_time;
    put_field(
        &mut out,
        &format!("{:02}.{:02}.{:02}", t.hour(), t.minute(), t.second()),
        8,
        "start_time",
    )?;
    put_field(&mut out, &header_bytes.to_string(), 8, "header_bytes")?;
    put_field(&mut out, &header.reserved, 44, "reserved")?;
    put_field(&mut out, &header.n_records.to_string(), 8, "n_records")?;
    put_field(
        &mut out,
        &format_number(header.record_duration, 8, "record_duration")?,
        8,
        "record_duration",
    )?;
    put_field(&mut out, &n_signals.to_string(), 4, "n_signals")?;

    for s in specs {
        put_field(&mut out, &s.label, LABEL, "label")?;
    }
    for s in specs {
        put_field(&mut out, &s.transducer, TRANSDUCER, "transducer")?;
    }
    for s in specs {
        put_field(&mut out, &s.physical_dimension, DIMENSION, "physical_dimension")?;
    }
    for s in specs {
        put_field(&mut out, &format_number(s.physical_min, NUMBER, "physical_min")?, NUMBER, "physical_min")?;
    }
    for s in specs {
        put_field(&mut out, &format_number(s.physical_max, NUMBER, "physical_max")?, NUMBER, "physical_max")?;
    }
    for s in specs {
        put_field(&mut out, &s.digital_min.to_string(), NUMBER, "digital_min")?;
    }
    for s in specs {
        put_field(&mut out, &s.digital_max.to_string(), NUMBER, "digital_max")?;
    }
    for s in specs {
        put_field(&mut out, &s.prefiltering, PREFILTER, "prefiltering")?;
    }
    for s in specs {
        put_field(&mut out, &s.samples_per_record.to_string(), NUMBER, "samples_per_record")?;
    }
    for s in specs {
        put_field(&mut out, &s.reserved, SIGNAL_RESERVED, "reserved")?;
    }
    debug_assert_eq!(out.len(), header_bytes);

    for record in 0..header.n_records {
        for (spec, samples) in specs.iter().zip(signals) {
            let n = spec.samples_per_record;
            for &v in &samples[record * n..(record + 1) * n] {
                let d = spec.to_digital(v) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Sidecar metadata for a raw `.f32le` trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub rate: f64,
    pub label: String,
    #[serde(default)]
    pub unit: String,
}

fn decode_f32le(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(EdfError::OddByteCount(bytes.len()));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(f64::from(v))
            } else {
                Err(EdfError::NonFiniteSample(i))
            }
        })
        .collect()
}

/// Reads a flat stream of little-endian `f32` samples.
pub fn read_raw_float(path: &Path, rate: f64, label: &str) -> Result<SignalTrace> {
    let bytes = fs::read(path).map_err(|source| EdfError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let samples = decode_f32le(&bytes)?;
    SignalTrace::new(samples, rate, label.to_string(), String::new())
        .map_err(|_| EdfError::InvalidRate(rate))
}

/// `recording.f32le` is described by `recording.json`.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Reads a raw trace using the rate, label and unit from its JSON sidecar.
pub fn read_raw_with_sidecar(path: &Path) -> Result<SignalTrace> {
    let side_path = sidecar_path(path);
    let text = fs::read_to_string(&side_path).map_err(|source| EdfError::Io {
        path: side_path.clone(),
        source,
    })?;
    let side: RawSidecar = serde_json::from_str(&text)?;
    let mut trace = read_raw_float(path, side.rate, &side.label)?;
    trace.unit = side.unit;
    Ok(trace)
}

pub fn encode_f32le(samples: &[f64]) -> Vec<u8> {
    samples
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}
