use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wisense::eval::{
    benchmark_frame_rate, evaluate, featurize, rate_table_csv, synthetic_trial, synthetic_trial_count, FrameKind, ModelKind, Pipeline,
    PipelineConfig, SplitSpec, TrialFrames,
};
use wisense::features::stft;
use wisense::gesture::{gesture_scenario, load_templates, recognize, GestureConfig, Symbol};
use wisense::ingest::{parse_canonical_csv, parse_capture_file, regularize, slice_by_manifest, stream_from_frames, write_canonical_csv, DatasetManifest};
use wisense::preprocess::lowpass;
use wisense::simulate::{parse_scenario, scenario_preset, synthesize, SimConfig};
use wisense::{ActivityLabel, CsiStreamF64, Error};

#[derive(Parser)]
#[command(name = "wisense", version, about = "Activity recognition from WiFi channel state information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration (TOML). WISENSE_SEED overrides its seed.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a CSI stream from a scenario file or preset.
    Simulate {
        /// Scenario file, activity preset (walk, run, fall, ...) or
        /// `gesture:pos,neg,both` (0.4 s strokes, 0.8 s apart).
        #[arg(long, required_unless_present = "suite")]
        scenario: Option<String>,
        /// Output CSV, or a directory with --suite.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the whole synthetic benchmark (one CSV per trial) into --out.
        #[arg(long)]
        suite: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Cut a capture or canonical CSV into labeled trials.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Carrier frequency assumed for binary captures.
        #[arg(long, default_value_t = 5.0e9)]
        center_freq: f64,
        /// Regular grid rate for binary captures.
        #[arg(long, default_value_t = 1000.0)]
        rate: f64,
    },
    /// Turn trial CSVs into feature frames.
    Featurize {
        #[arg(long)]
        kind: FrameKind,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a classifier on trials or feature frames.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the model file's pipeline on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// kfold:<k>, loso, or fixed:<subject,...>
        #[arg(long, default_value = "loso")]
        split: SplitSpec,
        /// Trial-level confusion matrix as CSV.
        #[arg(long)]
        report: PathBuf,
        /// Export one PGM spectrogram per trial CSV into this directory.
        #[arg(long)]
        png_spectrogram: Option<PathBuf>,
    },
    /// Recognize a gesture in one CSV stream.
    Gesture {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        /// Quiet lead-in used for the noise floor, seconds.
        #[arg(long, default_value_t = 0.4)]
        quiet: f64,
        /// Stream column (rx, tx, subcarrier flattened).
        #[arg(long, default_value_t = 0)]
        column: usize,
    },
    /// Accuracy of one model on the synthetic benchmark at several frame rates.
    Benchmark {
        #[arg(long, default_value = "forest")]
        model: ModelKind,
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated rates in Hz; defaults to the config list.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[arg(long, default_value = "loso")]
        split: SplitSpec,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Core(Error::io(path, e))
}

fn variant_name(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

fn report_failure(f: Failure) -> ExitCode {
    let (kind, message, code) = match f {
        Failure::Usage(m) => ("Usage".to_string(), m, 1),
        Failure::Core(e) => {
            let code = if e.is_numeric() {
                3
            } else if matches!(e, Error::InvalidConfig(_)) {
                1
            } else {
                2
            };
            (variant_name(&e), e.to_string(), code)
        }
    };
    let line = ErrorLine {
        error: &kind,
        message,
        exit_code: code,
    };
    eprintln!("{}", serde_json::to_string(&line).expect("plain struct"));
    ExitCode::from(code)
}

fn load_config(arg: &ConfigArg) -> CliResult<PipelineConfig> {
    let mut cfg = match &arg.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Ok(v) = std::env::var("WISENSE_SEED") {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("WISENSE_SEED={v:?} is not an unsigned integer")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_stream(path: &Path) -> CliResult<CsiStreamF64> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_canonical_csv(&text)?)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Files in `dir` with the given extension, sorted by name.
fn files_with(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn trial_name(s: &CsiStreamF64, k: usize) -> String {
    let label = s.label.map_or("unlabeled".to_string(), |l| l.to_string());
    match (s.subject_id, s.trial_id) {
        (Some(a), Some(b)) => format!("{label}_s{a:02}_t{b:03}"),
        _ => format!("{label}_{k:04}"),
    }
}

fn parse_symbols(list: &str) -> CliResult<Vec<Symbol>> {
    list.split(',')
        .map(|s| match s.trim().to_ascii_lowercase().as_str() {
            "pos" | "+" => Ok(Symbol::Pos),
            "neg" | "-" => Ok(Symbol::Neg),
            "both" | "b" => Ok(Symbol::Both),
            other => Err(Failure::Usage(format!("unknown gesture symbol {other:?} (pos, neg, both)"))),
        })
        .collect()
}

fn simulate(scenario: Option<String>, out: &Path, seed: Option<u64>, suite: bool, config: &ConfigArg) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if suite {
        fs::create_dir_all(out).map_err(io_err(out))?;
        for i in 0..synthetic_trial_count(&cfg) {
            let s = synthetic_trial::<f64>(&cfg, i)?;
            write_file(&out.join(format!("{}.csv", trial_name(&s, i))), write_canonical_csv(&s)?)?;
        }
        return Ok(());
    }
    let name = scenario.expect("clap enforces --scenario without --suite");
    let sc = if Path::new(&name).is_file() {
        let text = fs::read_to_string(&name).map_err(io_err(Path::new(&name)))?;
        let mut sc = parse_scenario(&text)?;
        if let Some(s) = seed {
            sc.seed = s;
        }
        sc
    } else if let Some(list) = name.strip_prefix("gesture:") {
        gesture_scenario(&parse_symbols(list)?, 0.4, 0.8, 1.0, cfg.seed)?
    } else {
        let label: ActivityLabel = name
            .parse()
            .map_err(|_| Failure::Usage(format!("{name:?} is neither a scenario file nor a preset")))?;
        scenario_preset(label, cfg.seed)
    };
    let stream = synthesize::<f64>(&sc, &SimConfig::default())?;
    write_file(out, write_canonical_csv(&stream)?)
}

fn ingest(input: &Path, manifest: &Path, out: &Path, center_freq: f64, rate: f64) -> CliResult<()> {
    let stream = if input.extension().is_some_and(|e| e == "csv") {
        read_stream(input)?
    } else {
        let bytes = fs::read(input).map_err(io_err(input))?;
        let raw = stream_from_frames(parse_capture_file::<f64>(&bytes)?, center_freq)?;
        regularize(&raw, rate)?
    };
    let manifest = DatasetManifest::load(manifest)?;
    let name = input.file_name().map(PathBuf::from).unwrap_or_default();
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.file == input || e.file.file_name().map(PathBuf::from) == Some(name.clone()))
        .cloned()
        .collect();
    if entries.is_empty() {
        return Err(Error::HeaderMissing(format!("manifest has no rows for {}", input.display())).into());
    }
    let data = slice_by_manifest(&stream, &entries)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    for (k, t) in data.trials.iter().enumerate() {
        write_file(&out.join(format!("{}.csv", trial_name(t, k))), write_canonical_csv(t)?)?;
    }
    println!("{} trials written to {}", data.len(), out.display());
    Ok(())
}

fn frames_path(out: &Path, src: &Path, kind: FrameKind) -> PathBuf {
    let stem = src.file_stem().map_or("trial".into(), |s| s.to_string_lossy().into_owned());
    out.join(format!("{stem}.{}.json", kind.name()))
}

/// Frames of `kind` for every trial in `dir`: feature files of that kind if
/// present, otherwise trial CSVs featurized on the fly.
fn load_frames(dir: &Path, kind: FrameKind, cfg: &PipelineConfig) -> CliResult<Vec<TrialFrames<f64>>> {
    let jsons = files_with(dir, "json")?;
    if !jsons.is_empty() {
        let mut out = Vec::with_capacity(jsons.len());
        for p in jsons {
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            let f: TrialFrames<f64> = serde_json::from_str(&text).map_err(Error::from)?;
            if f.kind != kind {
                return Err(Error::InvalidConfig(format!("{} holds {} frames, model needs {}", p.display(), f.kind.name(), kind.name())).into());
            }
            out.push(f);
        }
        return Ok(out);
    }
    let csvs = files_with(dir, "csv")?;
    if csvs.is_empty() {
        return Err(Error::EmptyInput("no trial CSVs or feature files in the input directory").into());
    }
    csvs.iter()
        .map(|p| Ok(featurize(&read_stream(p)?, &[kind], cfg)?.remove(0)))
        .collect()
}

fn featurize_cmd(kind: FrameKind, config: &ConfigArg, input: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let csvs = files_with(input, "csv")?;
    if csvs.is_empty() {
        return Err(Error::EmptyInput("no trial CSVs in the input directory").into());
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    for p in &csvs {
        let frames = featurize(&read_stream(p)?, &[kind], &cfg)?.remove(0);
        write_file(&frames_path(out, p, kind), serde_json::to_vec(&frames).map_err(Error::from)?)?;
    }
    println!("{} trials featurized as {}", csvs.len(), kind.name());
    Ok(())
}

fn train_cmd(model: ModelKind, config: &ConfigArg, input: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let frames = load_frames(input, model.frames(&cfg), &cfg)?;
    let pipe = wisense::eval::train(model, &frames, &cfg)?;
    write_file(out, pipe.to_bytes()?)?;
    println!("{} model on {} trials written to {}", model.name(), frames.len(), out.display());
    Ok(())
}

fn export_spectrograms(input: &Path, dir: &Path, cfg: &PipelineConfig) -> CliResult<()> {
    let csvs = files_with(input, "csv")?;
    if csvs.is_empty() {
        return Err(Error::EmptyInput("spectrogram export needs trial CSVs").into());
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for p in csvs {
        let s = read_stream(&p)?;
        let amps = s.amplitude_matrix()?;
        let smooth = lowpass(&amps.column(0).to_vec(), cfg.preprocess.cutoff_hz, s.sample_rate)?;
        let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
        let centered: Vec<f64> = smooth.iter().map(|v| v - mean).collect();
        let spec = stft(&centered, s.sample_rate, cfg.stft.window_len, 16, cfg.stft.fft_len)?;
        let stem = p.file_stem().map_or("trial".into(), |s| s.to_string_lossy().into_owned());
        write_file(&dir.join(format!("{stem}.pgm")), spec.to_pgm(60.0))?;
    }
    Ok(())
}

fn eval_cmd(model: &Path, input: &Path, split: &SplitSpec, report: &Path, pgm: Option<&Path>) -> CliResult<()> {
    let bytes = fs::read(model).map_err(io_err(model))?;
    let pipe = Pipeline::<f64>::from_bytes(&bytes)?;
    let mut cfg = pipe.config.clone();
    if let Ok(v) = std::env::var("WISENSE_SEED") {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("WISENSE_SEED={v:?} is not an unsigned integer")))?;
    }
    let frames = load_frames(input, pipe.frames, &cfg)?;
    let result = evaluate(pipe.kind(), &frames, split, &cfg)?;
    write_file(report, result.trials.to_csv())?;
    if let Some(dir) = pgm {
        export_spectrograms(input, dir, &cfg)?;
    }
    println!("model {}  split {}  trials {}", pipe.kind().name(), split, frames.len());
    println!("trial accuracy {:.4}  macro {:.4}  window accuracy {:.4}", result.trials.overall_accuracy(), result.macro_accuracy(), result.windows.overall_accuracy());
    print!("{}", result.trials.render());
    Ok(())
}

#[derive(Serialize)]
struct GestureOutput {
    gesture: String,
    score: f64,
    segments: Vec<wisense::gesture::GestureSegment>,
}

fn gesture_cmd(input: &Path, templates: &Path, quiet: f64, column: usize) -> CliResult<()> {
    let stream = read_stream(input)?;
    let templates = load_templates(templates)?;
    let series = stream.column_series(column)?;
    let (segments, gesture, score) = recognize(&series, stream.sample_rate, quiet, &templates, &GestureConfig::default())?;
    let out = GestureOutput { gesture, score, segments };
    println!("{}", serde_json::to_string(&out).map_err(Error::from)?);
    Ok(())
}

fn benchmark_cmd(model: ModelKind, config: &ConfigArg, rates: Vec<f64>, split: &SplitSpec, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let rates = if rates.is_empty() { cfg.benchmark.frame_rates.clone() } else { rates };
    let results = benchmark_frame_rate(synthetic_trial_count(&cfg), |i| synthetic_trial::<f64>(&cfg, i), model, split, &rates, &cfg)?;
    let csv = rate_table_csv(&results);
    write_file(out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            seed,
            suite,
            config,
        } => simulate(scenario, &out, seed, suite, &config),
        Command::Ingest {
            input,
            manifest,
            out,
            center_freq,
            rate,
        } => ingest(&input, &manifest, &out, center_freq, rate),
        Command::Featurize { kind, config, input, out } => featurize_cmd(kind, &config, &input, &out),
        Command::Train { model, config, input, out } => train_cmd(model, &config, &input, &out),
        Command::Eval {
            model,
            input,
            split,
            report,
            png_spectrogram,
        } => eval_cmd(&model, &input, &split, &report, png_spectrogram.as_deref()),
        Command::Gesture {
            input,
            templates,
            quiet,
            column,
        } => gesture_cmd(&input, &templates, quiet, column),
        Command::Benchmark {
            model,
            config,
            rates,
            split,
            out,
        } => benchmark_cmd(model, &config, rates, &split, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return report_failure(Failure::Usage(e.kind().to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(f),
    }
}
