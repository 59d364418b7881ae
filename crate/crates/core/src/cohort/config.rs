use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CohortError, Result};
use crate::metrics::{AgeBin, ClassAveraging};
use crate::sigprep::PrepConfig;
use crate::types::{read_text, CohortManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleMode {
    Avg,
    Learned,
    Both,
    None,
}

impl EnsembleMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "average" => Some(Self::Avg),
            "learned" | "super_learner" => Some(Self::Learned),
            "both" => Some(Self::Both),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Avg => "avg",
            Self::Learned => "learned",
            Self::Both => "both",
            Self::None => "none",
        }
    }

    pub fn averaging(self) -> bool {
        matches!(self, Self::Avg | Self::Both)
    }

    pub fn learned(self) -> bool {
        matches!(self, Self::Learned | Self::Both)
    }
}

/// Directory holding `<recording id>.csv` probability files of one stager.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagerSource {
    pub name: String,
    pub dir: PathBuf,
}

/// Half-open AHI interval `[lo, hi)` with a display label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AhiBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrataConfig {
    /// Defaults to one-year bins over the observed ages.
    pub age_bins: Option<Vec<AgeBin>>,
    /// Extra AHI stratification besides the fixed severity classes.
    pub ahi_bins: Option<Vec<AhiBin>>,
    pub averaging: ClassAveraging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Relative paths resolve against the config file's directory; paths
    /// inside the manifest resolve against the manifest's directory.
    pub manifest: PathBuf,
    /// One alias list per channel, used when preprocessing EDF inputs.
    pub channel_aliases: Vec<Vec<String>>,
    /// Preprocessing runs (and gates recordings on signal quality) only
    /// when present.
    pub prep: Option<PrepConfig>,
    pub stagers: Vec<StagerSource>,
    /// `avg`, `learned`, `both` or `none`.
    pub ensemble_mode: String,
    pub strata: StrataConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Recordings with this subset tag train the learned ensemble and are
    /// left out of evaluation.
    pub validation_tag: String,
    /// Counts ensembles as stagers in the common-error analysis.
    pub include_ensemble_in_errors: bool,
    /// Baseline for clinical t-tests; defaults to the first stager.
    pub reference_stager: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            channel_aliases: Vec::new(),
            prep: None,
            stagers: Vec::new(),
            ensemble_mode: EnsembleMode::Avg.label().into(),
            strata: StrataConfig::default(),
            out_dir: PathBuf::from("report"),
            seed: 0,
            validation_tag: "validation".into(),
            include_ensemble_in_errors: false,
            reference_stager: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads the config and makes its relative paths absolute against the
    /// file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let mut config = Self::from_json(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.out_dir);
        for s in &mut self.stagers {
            fix(&mut s.dir);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn mode(&self) -> Result<EnsembleMode> {
        EnsembleMode::parse(&self.ensemble_mode).ok_or_else(|| CohortError::UnknownEnsembleMode(self.ensemble_mode.clone()))
    }

    pub fn stager_names(&self) -> Vec<String> {
        self.stagers.iter().map(|s| s.name.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.field, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, field, message);
    }

    fn warning(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, field, message);
    }

    fn push(&mut self, severity: Severity, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity,
            field: field.into(),
            message: message.into(),
        });
    }
}

fn check_intervals(d: &mut Diagnostics, field: &str, bins: &[(String, f64, f64)]) {
    for (label, lo, hi) in bins {
        if !(lo < hi) {
            d.error(field, format!("bin {label} is empty or inverted ({lo} >= {hi})"));
        }
    }
    let mut sorted: Vec<_> = bins.iter().filter(|b| b.1 < b.2).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    for pair in sorted.windows(2) {
        if pair[1].1 < pair[0].2 {
            d.error(field, format!("bins {} and {} overlap", pair[0].0, pair[1].0));
        }
    }
}

/// Checks every path, name, mode, bin and preprocessing parameter without
/// touching the output directory. Missing per-recording files are warnings
/// because the run skips those recordings.
pub fn validate_config(config: &RunConfig) -> Vec<Diagnostic> {
    let mut d = Diagnostics(Vec::new());

    let manifest = if config.manifest.is_file() {
        match CohortManifest::read(&config.manifest) {
            Ok(m) => Some(m),
            Err(e) => {
                d.error("manifest", e.to_string());
                None
            }
        }
    } else {
        d.error("manifest", format!("{} does not exist", config.manifest.display()));
        None
    };

    if config.stagers.is_empty() {
        d.error("stagers", "no stagers configured");
    }
    let mut seen = BTreeSet::new();
    for s in &config.stagers {
        if s.name.is_empty() {
            d.error("stagers", "empty stager name");
        }
        if !seen.insert(s.name.as_str()) {
            d.error("stagers", format!("duplicate stager name `{}`", s.name));
        }
        if !s.dir.is_dir() {
            d.error("stagers", format!("directory {} of `{}` does not exist", s.dir.display(), s.name));
        }
    }
    if let Some(r) = &config.reference_stager {
        if !seen.contains(r.as_str()) {
            d.error("reference_stager", format!("`{r}` is not a configured stager"));
        }
    }

    match EnsembleMode::parse(&config.ensemble_mode) {
        None => d.error(
            "ensemble_mode",
            format!("unknown mode `{}`, expected avg, learned, both or none", config.ensemble_mode),
        ),
        Some(mode) if mode != EnsembleMode::None && config.stagers.len() < 2 => {
            d.warning("ensemble_mode", "an ensemble of fewer than two stagers is its only member")
        }
        _ => {}
    }

    if let Some(bins) = &config.strata.age_bins {
        let b: Vec<_> = bins.iter().map(|b| (b.label(), b.lo, b.hi)).collect();
        check_intervals(&mut d, "strata.age_bins", &b);
    }
    if let Some(bins) = &config.strata.ahi_bins {
        let b: Vec<_> = bins.iter().map(|b| (b.label.clone(), b.lo, b.hi)).collect();
        check_intervals(&mut d, "strata.ahi_bins", &b);
        if bins.iter().any(|b| b.lo < 0.0) {
            d.error("strata.ahi_bins", "AHI bins must not extend below 0");
        }
    }

    if let Some(p) = &config.prep {
        if config.channel_aliases.is_empty() || config.channel_aliases.iter().any(Vec::is_empty) {
            d.error("channel_aliases", "preprocessing needs at least one alias per channel");
        }
        if !(p.target_rate > 0.0) {
            d.error("prep.target_rate", "must be positive");
        }
        if !(p.low_hz > 0.0 && p.low_hz < p.high_hz && p.high_hz < p.target_rate / 2.0) {
            d.error("prep", format!("band {}..{} Hz invalid at {} Hz", p.low_hz, p.high_hz, p.target_rate));
        }
        if !(p.clip_sigma > 0.0) {
            d.error("prep.clip_sigma", "must be positive");
        }
        if !(p.flat_eps > 0.0) {
            d.error("prep.flat_eps", "must be positive");
        }
    }

    if let Some(m) = &manifest {
        let base = config.manifest.parent().unwrap_or(Path::new("."));
        if m.recordings.is_empty() {
            d.error("manifest", "no recordings");
        }
        let mut ids = BTreeSet::new();
        for r in &m.recordings {
            if !ids.insert(r.id.as_str()) {
                d.error("manifest", format!("duplicate recording id `{}`", r.id));
            }
            if !base.join(&r.hypnogram).is_file() {
                d.warning("manifest", format!("hypnogram of `{}` is missing", r.id));
            }
            if config.prep.is_some() && !r.edf.as_ref().is_some_and(|p| base.join(p).is_file()) {
                d.warning("manifest", format!("EDF of `{}` is missing", r.id));
            }
            for s in &config.stagers {
                if s.dir.is_dir() && !s.dir.join(format!("{}.csv", r.id)).is_file() {
                    d.warning("stagers", format!("`{}` has no output for `{}`", s.name, r.id));
                }
            }
        }
    }
    d.0
}
