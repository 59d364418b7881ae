//! PSG preprocessing: resampling, flat-segment quality gate, outlier
//! clipping, amplitude scaling, band-pass filtering, z-normalization and
//! segmentation into 30-s epochs.

mod filter;
mod resample;
mod spectrogram;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{bandpass, butterworth_bandpass, Biquad, Sos, BUTTERWORTH_ORDER};
pub use resample::{rational_ratio, resample, resample_poly};
pub use spectrogram::{spectrogram, Spectrogram, FFT_SIZE, HOP_SAMPLES, LOG_FLOOR, WINDOW_SAMPLES};

use crate::types::EPOCH_SECONDS;

pub const TARGET_RATE: f64 = 100.0;
pub const EPOCH_SAMPLES: usize = 3000;
pub const MIN_GOOD_SECONDS: f64 = 5.0 * 3600.0;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("sampling rate must be positive")]
    ZeroRate,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace has zero variance")]
    ZeroVariance,
    #[error("invalid band {low}..{high} Hz at {rate} Hz")]
    InvalidBand { low: f64, high: f64, rate: f64 },
    #[error("channels disagree: {0}")]
    MismatchedChannelLengths(String),
    #[error("frame has {got} samples, expected {expected}")]
    WrongFrameLength { expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("segmentation needs {expected} Hz traces, got {got} Hz")]
    WrongRate { expected: f64, got: f64 },
    #[error("no traces supplied")]
    NoChannels,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PrepError> = std::result::Result<T, E>;

/// Processing steps recorded on a trace, in application order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepStage {
    Resample,
    ClipOutliers,
    ScaleToUnit,
    Bandpass,
    Znormalize,
}

/// A sampled physiological channel in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTrace {
    pub samples: Vec<f64>,
    pub rate: f64,
    pub label: String,
    pub unit: String,
    pub provenance: Vec<PrepStage>,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, rate: f64, label: String, unit: String) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(PrepError::ZeroRate);
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(PrepError::NonFinite(i));
        }
        Ok(Self {
            samples,
            rate,
            label,
            unit,
            provenance: Vec::new(),
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    pub(crate) fn derive(&self, samples: Vec<f64>, rate: f64, stage: PrepStage) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.push(stage);
        Self {
            samples,
            rate,
            label: self.label.clone(),
            unit: self.unit.clone(),
            provenance,
        }
    }
}

/// Population mean and standard deviation.
fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Clamps samples to `mean ± k·std`, statistics taken once on the input.
pub fn clip_outliers(trace: &SignalTrace, k: f64) -> Result<SignalTrace> {
    if trace.samples.is_empty() {
        return Err(PrepError::EmptyTrace);
    }
    let (mean, std) = mean_std(&trace.samples);
    let (lo, hi) = (mean - k * std, mean + k * std);
    let samples = trace.samples.iter().map(|v| v.clamp(lo, hi)).collect();
    Ok(trace.derive(samples, trace.rate, PrepStage::ClipOutliers))
}

/// Divides by the maximum magnitude. All-zero traces pass through.
pub fn scale_to_unit(trace: &SignalTrace) -> SignalTrace {
    let peak = trace.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let samples = if peak > 0.0 {
        trace.samples.iter().map(|v| v / peak).collect()
    } else {
        trace.samples.clone()
    };
    trace.derive(samples, trace.rate, PrepStage::ScaleToUnit)
}

pub fn znormalize(trace: &SignalTrace) -> Result<SignalTrace> {
    if trace.samples.is_empty() {
        return Err(PrepError::EmptyTrace);
    }
    let (mean, std) = mean_std(&trace.samples);
    if !(std > 0.0) {
        return Err(PrepError::ZeroVariance);
    }
    let samples = trace.samples.iter().map(|v| (v - mean) / std).collect();
    Ok(trace.derive(samples, trace.rate, PrepStage::Znormalize))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub good_seconds: f64,
    /// Merged `(start, end)` spans in seconds.
    pub discarded_spans: Vec<(f64, f64)>,
    pub passed: bool,
    /// One flag per 30-s window (trailing partial window included).
    pub window_good: Vec<bool>,
}

fn check_aligned(traces: &[SignalTrace]) -> Result<()> {
    let first = traces.first().ok_or(PrepError::NoChannels)?;
    for t in &traces[1..] {
        if t.rate != first.rate || t.samples.len() != first.samples.len() {
            return Err(PrepError::MismatchedChannelLengths(format!(
                "`{}` has {} samples at {} Hz, `{}` has {} at {} Hz",
                first.label,
                first.samples.len(),
                first.rate,
                t.label,
                t.samples.len(),
                t.rate
            )));
        }
    }
    Ok(())
}

/// Marks 30-s windows in which any channel stays below
/// `eps · (that channel's recording-wide max |x|)` as discarded. The
/// recording passes when at least five hours remain.
pub fn quality_gate(traces: &[SignalTrace], eps: f64) -> Result<QualityReport> {
    quality_gate_with(traces, eps, MIN_GOOD_SECONDS)
}

pub fn quality_gate_with(traces: &[SignalTrace], eps: f64, min_good_seconds: f64) -> Result<QualityReport> {
    check_aligned(traces)?;
    let rate = traces[0].rate;
    let n = traces[0].samples.len();
    let window = (EPOCH_SECONDS * rate).round() as usize;
    let peaks: Vec<f64> = traces
        .iter()
        .map(|t| t.samples.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();

    let mut window_good = Vec::new();
    let mut good_seconds = 0.0;
    let mut discarded_spans: Vec<(f64, f64)> = Vec::new();
    let mut start = 0usize;
    while start < n {
        let end = (start + window).min(n);
        let good = traces.iter().zip(&peaks).all(|(t, &peak)| {
            let local = t.samples[start..end].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            local >= eps * peak && local > 0.0
        });
        let (s0, s1) = (start as f64 / rate, end as f64 / rate);
        if good {
            good_seconds += s1 - s0;
        } else {
            match discarded_spans.last_mut() {
                Some(last) if last.1 == s0 => last.1 = s1,
                _ => discarded_spans.push((s0, s1)),
            }
        }
        window_good.push(good);
        start = end;
    }
    Ok(QualityReport {
        good_seconds,
        discarded_spans,
        passed: good_seconds >= min_good_seconds,
        window_good,
    })
}

/// Multi-channel 30-s epochs, laid out `[epoch][channel][sample]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochGrid {
    pub recording_id: String,
    pub channel_labels: Vec<String>,
    /// Original (pre-exclusion) epoch index of each kept epoch.
    pub epoch_index: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochGridSidecar {
    pub recording_id: String,
    pub channels: Vec<String>,
    pub n_epochs: usize,
    pub samples_per_epoch: usize,
    pub rate: f64,
    pub layout: String,
    pub epoch_index: Vec<usize>,
}

impl EpochGrid {
    pub fn n_epochs(&self) -> usize {
        self.epoch_index.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn frame(&self, epoch: usize, channel: usize) -> &[f32] {
        let start = (epoch * self.n_channels() + channel) * EPOCH_SAMPLES;
        &self.data[start..start + EPOCH_SAMPLES]
    }

    pub fn sidecar(&self) -> EpochGridSidecar {
        EpochGridSidecar {
            recording_id: self.recording_id.clone(),
            channels: self.channel_labels.clone(),
            n_epochs: self.n_epochs(),
            samples_per_epoch: EPOCH_SAMPLES,
            rate: TARGET_RATE,
            layout: "epoch,channel,sample".into(),
            epoch_index: self.epoch_index.clone(),
        }
    }

    /// Writes `<id>.f32le` and the `<id>.json` sidecar into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(format!("{}.f32le", self.recording_id)), bytes)?;
        fs::write(
            dir.join(format!("{}.json", self.recording_id)),
            serde_json::to_string_pretty(&self.sidecar())?,
        )?;
        Ok(())
    }
}

/// Cuts aligned 100 Hz traces into non-overlapping 30-s epochs, dropping the
/// trailing partial epoch and any epoch flagged bad by `quality`.
pub fn segment_epochs(
    traces: &[SignalTrace],
    quality: Option<&QualityReport>,
    recording_id: &str,
) -> Result<EpochGrid> {
    check_aligned(traces)?;
    if traces[0].rate != TARGET_RATE {
        return Err(PrepError::WrongRate {
            expected: TARGET_RATE,
            got: traces[0].rate,
        });
    }
    let total = traces[0].samples.len() / EPOCH_SAMPLES;
    let mut epoch_index = Vec::with_capacity(total);
    let mut data = Vec::with_capacity(total * traces.len() * EPOCH_SAMPLES);
    for e in 0..total {
        if let Some(q) = quality {
            if !q.window_good.get(e).copied().unwrap_or(true) {
                continue;
            }
        }
        epoch_index.push(e);
        for t in traces {
            data.extend(
                t.samples[e * EPOCH_SAMPLES..(e + 1) * EPOCH_SAMPLES]
                    .iter()
                    .map(|&v| v as f32),
            );
        }
    }
    Ok(EpochGrid {
        recording_id: recording_id.to_string(),
        channel_labels: traces.iter().map(|t| t.label.clone()).collect(),
        epoch_index,
        data,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub target_rate: f64,
    pub clip_sigma: f64,
    pub flat_eps: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub min_good_seconds: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            target_rate: TARGET_RATE,
            clip_sigma: 6.0,
            flat_eps: 1e-4,
            low_hz: 0.3,
            high_hz: 40.0,
            min_good_seconds: MIN_GOOD_SECONDS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrepOutput {
    pub grid: EpochGrid,
    pub quality: QualityReport,
    /// Fully processed continuous traces, before segmentation.
    pub traces: Vec<SignalTrace>,
}

/// Runs the full chain on one recording: resample, quality mask, clip,
/// scale, band-pass, z-normalize, segment. Statistics are per channel.
pub fn preprocess(traces: &[SignalTrace], config: &PrepConfig, recording_id: &str) -> Result<PrepOutput> {
    if traces.is_empty() {
        return Err(PrepError::NoChannels);
    }
    let resampled = traces
        .iter()
        .map(|t| resample(t, config.target_rate))
        .collect::<Result<Vec<_>>>()?;
    let quality = quality_gate_with(&resampled, config.flat_eps, config.min_good_seconds)?;
    let processed = resampled
        .iter()
        .map(|t| {
            let clipped = clip_outliers(t, config.clip_sigma)?;
            let scaled = scale_to_unit(&clipped);
            let filtered = bandpass(&scaled, config.low_hz, config.high_hz)?;
            znormalize(&filtered)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = segment_epochs(&processed, Some(&quality), recording_id)?;
    Ok(PrepOutput {
        grid,
        quality,
        traces: processed,
    })
}
