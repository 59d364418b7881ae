use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use stagerbench::cohort::{
    analyze_recordings, generate_synthetic_cohort, has_errors, run_pipeline, validate_config, write_synthetic_cohort,
    RunConfig, RunReport, SynthSpec,
};
use stagerbench::edf::EdfFile;
use stagerbench::ensemble::{average_seqs, super_learner_apply_seqs, super_learner_train, SuperLearnerWeights};
use stagerbench::metrics::ClassAveraging;
use stagerbench::sigprep::{preprocess, PrepConfig};
use stagerbench::{Hypnogram, ProbSeq, RecordingEntry, StagerSet};

#[derive(Parser)]
#[command(name = "stagerbench", version, about = "Ensemble and evaluate automatic sleep stagers")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess EDF channels into 30-s epoch frames.
    Prep(PrepArgs),
    /// Combine stager probability files.
    Ensemble(EnsembleArgs),
    /// Staging metrics, kappa matrix and McNemar tests.
    Eval(AnalysisArgs),
    /// Clinical sleep measures and their relative errors.
    Clinical(AnalysisArgs),
    /// Common-error taxonomy.
    Errors(AnalysisArgs),
    /// Write a seeded synthetic cohort with a ready-to-run config.
    Synth(SynthArgs),
    /// Check a run config and print its diagnostics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Full pipeline over a cohort, writing the report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    edf: PathBuf,
    /// Comma-separated aliases of one channel; repeat per channel.
    #[arg(long = "channel", required = true)]
    channels: Vec<String>,
    /// JSON preprocessing parameters; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    low_hz: Option<f64>,
    #[arg(long)]
    high_hz: Option<f64>,
    #[arg(long)]
    clip_sigma: Option<f64>,
    #[arg(long)]
    min_good_seconds: Option<f64>,
    /// Recording id used for output names; defaults to the EDF file stem.
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Avg,
    Learned,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// `name=path.csv`, one per stager.
    #[arg(long = "input", required = true)]
    inputs: Vec<String>,
    /// Scored hypnogram to train learned weights on; without it the
    /// weights are read from `--weights`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Averaging {
    Present,
    All,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Cohort run config; alternatively give `--truth` and `--input`.
    #[arg(long, conflicts_with_all = ["truth", "inputs"])]
    config: Option<PathBuf>,
    #[arg(long, requires = "inputs")]
    truth: Option<PathBuf>,
    /// `name=path.csv`, one per stager.
    #[arg(long = "input")]
    inputs: Vec<String>,
    #[arg(long, value_enum)]
    averaging: Option<Averaging>,
    /// Baseline stager for clinical t-tests.
    #[arg(long)]
    reference: Option<String>,
    /// Add an averaging ensemble as an extra stager.
    #[arg(long)]
    with_ensemble: bool,
    /// Count the ensemble in the common-error intersection.
    #[arg(long)]
    include_ensemble: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic-cohort spec; defaults to the built-in four-stager demo.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    recordings: usize,
    #[arg(long, default_value_t = 960)]
    epochs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_inputs(inputs: &[String]) -> Result<(Vec<String>, Vec<ProbSeq>)> {
    let mut names = Vec::new();
    let mut seqs = Vec::new();
    for spec in inputs {
        let (name, path) = spec
            .split_once('=')
            .with_context(|| format!("input `{spec}` is not name=path"))?;
        seqs.push(ProbSeq::read(Path::new(path)).with_context(|| format!("stager `{name}`"))?);
        names.push(name.to_string());
    }
    Ok((names, seqs))
}

fn prep(args: PrepArgs) -> Result<()> {
    let mut config: PrepConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PrepConfig::default(),
    };
    let overrides = [
        (args.eps, &mut config.flat_eps),
        (args.low_hz, &mut config.low_hz),
        (args.high_hz, &mut config.high_hz),
        (args.clip_sigma, &mut config.clip_sigma),
        (args.min_good_seconds, &mut config.min_good_seconds),
    ];
    for (value, slot) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let id = match args.id {
        Some(id) => id,
        None => args
            .edf
            .file_stem()
            .context("EDF path has no file name")?
            .to_string_lossy()
            .into_owned(),
    };
    let file = EdfFile::open(&args.edf)?;
    let traces = args
        .channels
        .iter()
        .map(|c| file.signal_by_label(&c.split(',').map(|a| a.trim().to_string()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = preprocess(&traces, &config, &id)?;
    fs::create_dir_all(&args.out)?;
    out.grid.write(&args.out)?;
    fs::write(
        args.out.join(format!("{id}.quality.json")),
        serde_json::to_string_pretty(&out.quality)?,
    )?;
    if !out.quality.passed {
        warn!(
            "`{id}` fails the quality gate: {} s usable, {} s required",
            out.quality.good_seconds, config.min_good_seconds
        );
    }
    info!("{} epochs written for `{id}`", out.grid.n_epochs());
    Ok(())
}

fn ensemble(args: EnsembleArgs) -> Result<()> {
    let (names, seqs) = parse_inputs(&args.inputs)?;
    let combined = match args.mode {
        Mode::Avg => average_seqs(&seqs)?,
        Mode::Learned => {
            let weights_path = args.weights.as_deref().context("--mode learned needs --weights")?;
            let weights = match &args.truth {
                Some(truth) => {
                    let set = StagerSet::new(names.clone(), seqs.clone(), Hypnogram::read(truth)?)?;
                    let w = super_learner_train(&set)?;
                    w.write(weights_path)?;
                    w
                }
                None => SuperLearnerWeights::read(weights_path)?,
            };
            if weights.names != names {
                bail!("weights are for stagers {:?}, inputs are {:?}", weights.names, names);
            }
            super_learner_apply_seqs(&weights, &seqs)?
        }
    };
    combined.write(&args.out)?;
    Ok(())
}

const EVAL_FILES: &[&str] = &[
    "metrics_overall.csv",
    "metrics_classwise.csv",
    "kappa_matrix.csv",
    "mcnemar.csv",
    "strata.csv",
];
const CLINICAL_FILES: &[&str] = &["clinical.csv", "clinical_summary.csv"];
const ERROR_FILES: &[&str] = &[
    "errors.ndjson",
    "errors_histogram.csv",
    "error_patterns.csv",
    "error_stages.csv",
];

fn analysis(args: AnalysisArgs, files: &[&str]) -> Result<()> {
    let report = match &args.config {
        Some(path) => {
            let mut config = RunConfig::read(path)?;
            apply_analysis_flags(&mut config, &args);
            run_pipeline(&config)?
        }
        None => {
            let truth_path = args.truth.as_ref().context("give --config or --truth with --input")?;
            let (names, seqs) = parse_inputs(&args.inputs)?;
            let truth = Hypnogram::read(truth_path)?;
            let id = truth_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "recording".into());
            let mut config = RunConfig {
                ensemble_mode: if args.with_ensemble { "avg" } else { "none" }.into(),
                ..RunConfig::default()
            };
            apply_analysis_flags(&mut config, &args);
            let entry = RecordingEntry {
                id,
                age: f64::NAN,
                ahi: None,
                subset_tag: String::new(),
                hypnogram: truth_path.clone(),
                edf: None,
            };
            analyze_recordings(&config, vec![(entry, StagerSet::new(names, seqs, truth)?)])?
        }
    };
    write_subset(&report, files, &args.out)
}

fn apply_analysis_flags(config: &mut RunConfig, args: &AnalysisArgs) {
    if let Some(a) = args.averaging {
        config.strata.averaging = match a {
            Averaging::Present => ClassAveraging::PresentClasses,
            Averaging::All => ClassAveraging::AllClasses,
        };
    }
    if args.reference.is_some() {
        config.reference_stager = args.reference.clone();
    }
    if args.include_ensemble {
        config.include_ensemble_in_errors = true;
    }
}

fn write_subset(report: &RunReport, files: &[&str], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    for name in files {
        let text = report.file(name).with_context(|| format!("report has no {name}"))?;
        fs::write(out.join(name), text)?;
    }
    if files == EVAL_FILES {
        fs::write(
            out.join("metrics.json"),
            serde_json::to_string_pretty(&report.summary.overall)? + "\n",
        )?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::demo(args.recordings, args.epochs, args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let cohort = generate_synthetic_cohort(&spec)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("synth_spec.json"), serde_json::to_string_pretty(&spec)?)?;
    let config = write_synthetic_cohort(&cohort, &args.out)?;
    println!("{}", config.display());
    Ok(())
}

fn validate(config: &Path) -> Result<ExitCode> {
    let config = RunConfig::read(config)?;
    let diagnostics = validate_config(&config);
    for d in &diagnostics {
        println!("{d}");
    }
    Ok(if has_errors(&diagnostics) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut config = RunConfig::read(config)?;
    if let Some(out) = out {
        config.out_dir = out;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = run_pipeline(&config)?;
    report.write(&config.out_dir)?;
    let s = &report.summary;
    info!(
        "{} recordings evaluated, {} skipped; report in {}",
        s.n_evaluated,
        s.n_skipped,
        config.out_dir.display()
    );
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Prep(a) => prep(a)?,
        Command::Ensemble(a) => ensemble(a)?,
        Command::Eval(a) => analysis(a, EVAL_FILES)?,
        Command::Clinical(a) => analysis(a, CLINICAL_FILES)?,
        Command::Errors(a) => analysis(a, ERROR_FILES)?,
        Command::Synth(a) => synth(a)?,
        Command::Validate { config } => return validate(&config),
        Command::Run { config, out, seed } => run(&config, out, seed)?,
    }
    Ok(ExitCode::SUCCESS)
}
