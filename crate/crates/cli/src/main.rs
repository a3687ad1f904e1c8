use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use ripplesense::compare::{compare_methods, CompareInput};
use ripplesense::io;
use ripplesense::metrics::stream_errors;
use ripplesense::pipeline::{
    calibrate_pulses_per_revolution, calibration_frontend, startup_rpm_guess, Detector, Pipeline, PipelineSettings,
};
use ripplesense::sim::{generate, scatter_events, CorruptionScript, MotorSpec, RippleShape, Segment, SpeedProfile};
use ripplesense::svm::{file as model_file, KernelSpec, SmoParams};
use ripplesense::training::{
    build_corpus, infer_profile_kinds, reference_specs, run_training, standstill_entries, Corpus, CorpusEntry, EndCriterion,
    TrainingConfig, EVENT_SKIP, EVENT_SPACING,
};
use ripplesense::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

/// Sensorless speed and position estimation from brushed DC motor current.
#[derive(Parser, Debug)]
#[command(name = "ripplesense", version)]
struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a current stream and its ground truth.
    Simulate(SimulateArgs),
    /// Train a pulse detector and write the model and a report.
    Train(TrainArgs),
    /// Estimate speed and position for a stream.
    Estimate(EstimateArgs),
    /// Compare estimates with ground truth.
    Evaluate(EvaluateArgs),
    /// Count pulses with the model and the comparator baselines.
    Compare(CompareArgs),
    /// Measure pulses per revolution from a run at a known speed.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MotorPreset {
    Emg30,
    Re385,
}

#[derive(Args, Debug, Clone)]
struct MotorArgs {
    #[arg(long, value_enum, default_value = "emg30")]
    motor: MotorPreset,
    /// Pole count 2p, overriding the preset.
    #[arg(long)]
    poles: Option<u32>,
    /// Commutator bars, overriding the preset.
    #[arg(long)]
    bars: Option<u32>,
}

impl MotorArgs {
    fn spec(&self) -> MotorSpec {
        let mut m = match self.motor {
            MotorPreset::Emg30 => MotorSpec::emg30(),
            MotorPreset::Re385 => MotorSpec::re385(),
        };
        if let Some(p) = self.poles {
            m.pole_pairs_times_two = p;
        }
        if let Some(b) = self.bars {
            m.commutator_bars = b;
        }
        m
    }

    fn pulses_per_revolution(&self) -> ripplesense::Result<u32> {
        self.spec().pulses_per_revolution()
    }
}

/// One profile segment: `constant:SECONDS:RPM`, `ramp:SECONDS:FROM:TO` or
/// `step:SECONDS:FROM:TO`.
#[derive(Clone, Debug)]
struct SegmentArg(Segment);

impl FromStr for SegmentArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums = parts[1..]
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| format!("'{p}' is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        let seg = match (parts[0], nums.as_slice()) {
            ("constant", &[d, r]) => Segment::constant(d, r),
            ("ramp", &[d, a, b]) => Segment::ramp(d, a, b),
            ("step", &[d, a, b]) => Segment::step(d, a, b),
            _ => {
                return Err(format!(
                    "'{s}' is not constant:SECONDS:RPM, ramp:SECONDS:FROM:TO or step:SECONDS:FROM:TO"
                ))
            }
        };
        Ok(SegmentArg(seg))
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    motor: MotorArgs,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 5000.0)]
    fs: f64,
    /// Speed profile segments, played in order.
    #[arg(long = "segment", default_value = "constant:2:3000")]
    segments: Vec<SegmentArg>,
    /// Peak-to-peak ripple over the DC level.
    #[arg(long)]
    ripple_ratio: Option<f64>,
    /// Noise RMS in amperes (default about 20 dB under the ripple).
    #[arg(long)]
    noise_rms: Option<f64>,
    /// Noise bandwidth in Hz (default fs/4).
    #[arg(long)]
    noise_bandwidth: Option<f64>,
    /// Scatter this many false pulses over the run.
    #[arg(long, default_value_t = 0)]
    false_pulses: usize,
    /// Mask this many true pulses.
    #[arg(long, default_value_t = 0)]
    ghost_pulses: usize,
    /// False pulse at this time in seconds (repeatable).
    #[arg(long = "false-at")]
    false_at: Vec<f64>,
    /// Ghost pulse at this time in seconds (repeatable).
    #[arg(long = "ghost-at")]
    ghost_at: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "RIPPLESENSE_STREAM", default_value = "stream.csv")]
    stream: PathBuf,
    #[arg(long, env = "RIPPLESENSE_TRUTH", default_value = "truth.csv")]
    truth: PathBuf,
    /// Corruption manifest; written when the run has scripted events.
    #[arg(long, env = "RIPPLESENSE_MANIFEST", default_value = "manifest.csv")]
    manifest: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Slowest speed the front end must pass.
    #[arg(long, default_value_t = 400.0)]
    min_rpm: f64,
    /// Fastest speed the front end must pass (default 6500, lowered to what
    /// the sampling rate supports for generated corpora).
    #[arg(long)]
    max_rpm: Option<f64>,
    /// Zero-comparator hysteresis on the normalized signal.
    #[arg(long, default_value_t = 0.4)]
    hysteresis: f64,
    /// Intervals averaged per speed estimate.
    #[arg(long, default_value_t = 4)]
    num_pulse_mean: usize,
    /// Normalizer window in ripple periods.
    #[arg(long, default_value_t = 4.0)]
    normalize_periods: f64,
    /// Use the seven base features only.
    #[arg(long)]
    base_features: bool,
    /// Enable the switched bandpass filter bank.
    #[arg(long)]
    filter_bank: bool,
    #[arg(long, default_value_t = 4)]
    bank_bands: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    motor: MotorArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Sampling rate for a generated corpus.
    #[arg(long, default_value_t = 5000.0)]
    fs: f64,
    /// Recorded stream for the corpus (repeatable, paired with --corpus-truth).
    /// Without any, a reference corpus is generated.
    #[arg(long = "corpus-stream")]
    corpus_stream: Vec<PathBuf>,
    #[arg(long = "corpus-truth")]
    corpus_truth: Vec<PathBuf>,
    /// Polynomial kernel degree.
    #[arg(long, default_value_t = 3)]
    degree: u32,
    /// SVM penalty C.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// SMO stopping tolerance on the KKT violation.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Per-stream mean speed error target, percent.
    #[arg(long, default_value_t = 2.5)]
    max_speed_error: f64,
    /// Per-stream mean position error target, radians.
    #[arg(long, default_value_t = 0.4)]
    max_position_error: f64,
    #[arg(long, default_value_t = 40)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "RIPPLESENSE_MODEL", default_value = "model.svm")]
    model: PathBuf,
    #[arg(long, env = "RIPPLESENSE_REPORT", default_value = "report.txt")]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    motor: MotorArgs,
    #[arg(long, env = "RIPPLESENSE_MODEL", default_value = "model.svm")]
    model: PathBuf,
    #[arg(long, env = "RIPPLESENSE_STREAM", default_value = "stream.csv")]
    stream: PathBuf,
    #[arg(long, env = "RIPPLESENSE_ESTIMATES", default_value = "estimates.csv")]
    out: PathBuf,
    /// Pulses per revolution, overriding the motor's.
    #[arg(long)]
    ppr: Option<u32>,
    /// Speed at the start of the stream (default: from its autocorrelation).
    #[arg(long)]
    startup_rpm: Option<f64>,
    /// Intervals averaged per speed estimate (default: the model's).
    #[arg(long)]
    num_pulse_mean: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimates file (repeatable, paired with --truth in order).
    #[arg(long = "estimates", env = "RIPPLESENSE_ESTIMATES", default_value = "estimates.csv")]
    estimates: Vec<PathBuf>,
    #[arg(long = "truth", env = "RIPPLESENSE_TRUTH", default_value = "truth.csv")]
    truth: Vec<PathBuf>,
    #[arg(long, env = "RIPPLESENSE_ERRORS", default_value = "errors.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    motor: MotorArgs,
    /// Trained model; without one only the baselines run.
    #[arg(long, env = "RIPPLESENSE_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "RIPPLESENSE_STREAM", default_value = "stream.csv")]
    stream: PathBuf,
    #[arg(long, env = "RIPPLESENSE_TRUTH", default_value = "truth.csv")]
    truth: PathBuf,
    #[arg(long, env = "RIPPLESENSE_MANIFEST", default_value = "manifest.csv")]
    manifest: PathBuf,
    #[arg(long, env = "RIPPLESENSE_COMPARISON", default_value = "comparison.csv")]
    out: PathBuf,
    #[arg(long)]
    ppr: Option<u32>,
    #[arg(long)]
    startup_rpm: Option<f64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long, env = "RIPPLESENSE_MODEL", default_value = "model.svm")]
    model: PathBuf,
    #[arg(long, env = "RIPPLESENSE_STREAM", default_value = "stream.csv")]
    stream: PathBuf,
    /// Constant shaft speed during the recording.
    #[arg(long)]
    known_rpm: f64,
}

/// Training finished without meeting its end criterion.
#[derive(Debug)]
struct Unconverged;

impl fmt::Display for Unconverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("training did not meet the end criterion")
    }
}

impl std::error::Error for Unconverged {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Unconverged>() {
            return EXIT_NOT_CONVERGED;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
                Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
                _ => EXIT_VALIDATION,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log))
        .format_target(false)
        .init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already carry their cause in the message
            let mut msg = String::new();
            for cause in e.chain() {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&c);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn positive(name: &str, v: f64) -> anyhow::Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidParameter(format!("--{name} must be positive, got {v}")).into());
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    positive("fs", a.fs)?;
    let motor = a.motor.spec();
    motor.validate()?;
    let mut shape = RippleShape::default();
    if let Some(r) = a.ripple_ratio {
        shape.ripple_amplitude_ratio = r;
    }
    shape.validate()?;
    let profile = SpeedProfile::new(a.segments.iter().map(|s| s.0.clone()).collect());
    profile.validate()?;
    let mut script = CorruptionScript {
        false_pulse_times: a.false_at.clone(),
        ghost_pulse_times: a.ghost_at.clone(),
        noise_rms: a.noise_rms,
        noise_bandwidth: a.noise_bandwidth,
    };
    script.validate(profile.duration())?;
    if a.false_pulses + a.ghost_pulses > 0 {
        let (_, truth) = generate(&motor, &shape, &profile, &CorruptionScript::clean(), a.fs, 0)?;
        let (f, g) = scatter_events(&truth, a.fs, a.false_pulses, a.ghost_pulses, EVENT_SKIP, EVENT_SPACING, a.seed)?;
        script.false_pulse_times.extend(f);
        script.ghost_pulse_times.extend(g);
        script.false_pulse_times.sort_by(f64::total_cmp);
        script.ghost_pulse_times.sort_by(f64::total_cmp);
    }

    let (stream, truth) = generate(&motor, &shape, &profile, &script, a.fs, a.seed)?;
    io::write_stream(&a.stream, &stream)?;
    io::write_truth(&a.truth, &truth)?;
    let events = script.false_pulse_times.len() + script.ghost_pulse_times.len();
    if events > 0 {
        io::write_manifest(&a.manifest, &script)?;
    }
    println!(
        "{} samples ({} s at {} Hz), {} pulses, {} false, {} ghost",
        stream.len(),
        stream.duration(),
        a.fs,
        truth.pulse_count(),
        script.false_pulse_times.len(),
        script.ghost_pulse_times.len()
    );
    println!("wrote {} and {}", a.stream.display(), a.truth.display());
    if events > 0 {
        println!("wrote {}", a.manifest.display());
    }
    Ok(())
}

fn settings_from(p: &PipelineArgs, max_rpm: f64) -> PipelineSettings {
    PipelineSettings {
        min_rpm: p.min_rpm,
        max_rpm,
        hysteresis: p.hysteresis,
        reconstructed_features: !p.base_features,
        num_pulse_mean: p.num_pulse_mean,
        normalize_periods: p.normalize_periods,
        filter_bank: p.filter_bank,
        bank_band_count: p.bank_bands,
        feature_scale: Vec::new(),
    }
}

fn load_corpus(streams: &[PathBuf], truths: &[PathBuf], ppr: u32) -> anyhow::Result<Corpus> {
    let entries = streams
        .iter()
        .zip(truths)
        .map(|(s, t)| {
            let stream = io::read_stream(s)?;
            let truth = io::read_truth(t)?;
            let kinds = infer_profile_kinds(&truth.speed_rpm, stream.fs);
            let name = s
                .file_stem()
                .map_or_else(|| s.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok(CorpusEntry {
                name,
                stream,
                truth,
                pulse_revolution: ppr,
                kinds,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Corpus::new(entries)?)
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    positive("fs", a.fs)?;
    let motor = a.motor.spec();
    motor.validate()?;
    let ppr = motor.pulses_per_revolution()?;
    if a.corpus_stream.len() != a.corpus_truth.len() {
        bail!(Error::InvalidParameter(format!(
            "{} --corpus-stream but {} --corpus-truth files",
            a.corpus_stream.len(),
            a.corpus_truth.len()
        )));
    }
    let generated = a.corpus_stream.is_empty();
    // the simulator needs ten samples per ripple period
    let sim_limit = 0.1 * a.fs * 60.0 / ppr as f64;
    let max_rpm = match a.pipeline.max_rpm {
        Some(v) => v,
        None if generated => 6500.0f64.min(sim_limit),
        None => 6500.0,
    };
    let cfg = TrainingConfig {
        settings: settings_from(&a.pipeline, max_rpm),
        kernel: KernelSpec::Polynomial { degree: a.degree },
        smo: SmoParams {
            c: a.c,
            tol: a.tol,
            ..Default::default()
        },
        seed: a.seed,
        ..Default::default()
    };
    cfg.validate()?;
    let criterion = EndCriterion {
        max_mean_speed_error_pct: a.max_speed_error,
        max_position_error_rad: a.max_position_error,
    };
    criterion.validate()?;
    if a.max_iterations == 0 {
        bail!(Error::InvalidParameter("--max-iterations must be at least 1".into()));
    }

    let corpus = if generated {
        // the corpus keeps a margin inside the front-end range
        let lo = cfg.settings.min_rpm * 1.125;
        info!("generating reference corpus {lo:.0}..{max_rpm:.0} r/min at {} Hz", a.fs);
        let mut corpus = build_corpus(&reference_specs(&motor, lo, max_rpm, a.fs, a.seed)?, a.fs, a.seed)?;
        for e in standstill_entries(&motor, a.fs, a.seed)? {
            corpus.push(e)?;
        }
        corpus
    } else {
        load_corpus(&a.corpus_stream, &a.corpus_truth, ppr)?
    };
    for w in &corpus.warnings {
        warn!("{w}");
    }

    let report = run_training(&corpus, &criterion, &cfg, a.max_iterations)?;
    let summary = report.summary();
    std::fs::write(&a.report, &summary).map_err(|e| Error::Io {
        path: a.report.clone(),
        source: e,
    })?;
    print!("{summary}");
    if let Some(model) = &report.model {
        model_file::save(model, &a.model)?;
        println!("wrote {}", a.model.display());
    }
    println!("wrote {}", a.report.display());
    if !report.converged {
        return Err(Unconverged.into());
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> anyhow::Result<()> {
    let ppr = match a.ppr {
        Some(p) => p,
        None => a.motor.pulses_per_revolution()?,
    };
    if ppr == 0 {
        bail!(Error::InvalidParameter("--ppr must be positive".into()));
    }
    if let Some(r) = a.startup_rpm {
        positive("startup-rpm", r)?;
    }
    if a.num_pulse_mean == Some(0) {
        bail!(Error::InvalidParameter("--num-pulse-mean must be at least 1".into()));
    }
    let model = model_file::load(&a.model)?;
    let mut settings = PipelineSettings::from_model(&model)?;
    if let Some(n) = a.num_pulse_mean {
        settings.num_pulse_mean = n;
    }
    let stream = io::read_stream(&a.stream)?;
    let startup = match a.startup_rpm {
        Some(r) => r,
        None => startup_rpm_guess(&stream, &settings, ppr)?,
    };
    let pipeline = Pipeline::new(settings.config(stream.fs, ppr, startup)?)?;
    let out = pipeline.run(&stream, Detector::Model(&model))?;
    io::write_estimates(&a.out, &out.records)?;
    let speeds: Vec<f64> = out.speeds().map(|(_, v)| v).collect();
    let mean = speeds.iter().sum::<f64>() / speeds.len().max(1) as f64;
    println!(
        "{} pulses, mean speed {}, final position {:.3} rad",
        out.pulses.len(),
        if speeds.is_empty() { "n/a".to_string() } else { format!("{mean:.2} r/min") },
        out.records.last().map_or(0.0, |r| r.position_rad)
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    if a.estimates.len() != a.truth.len() {
        bail!(Error::InvalidParameter(format!(
            "{} estimates files but {} truth files",
            a.estimates.len(),
            a.truth.len()
        )));
    }
    let mut rows = Vec::new();
    for (e, t) in a.estimates.iter().zip(&a.truth) {
        let records = io::read_estimates(e)?;
        let truth = io::read_truth(t)?;
        let errors = stream_errors(&records, &truth).with_context(|| format!("{} against {}", e.display(), t.display()))?;
        rows.push((file_name(e), errors));
    }
    io::write_errors(&a.out, rows.iter().map(|(n, e)| (n.as_str(), e)))?;
    println!(
        "{:<20} {:>12} {:>12} {:>9} {:>12} {:>9} {:>10} {:>8}",
        "run", "real r/min", "mean err", "mean %", "dev", "dev %", "pos rad", "count"
    );
    for (name, e) in &rows {
        let s = &e.speed;
        println!(
            "{:<20} {:>12.2} {:>12.4} {:>9.4} {:>12.4} {:>9.4} {:>10.4} {:>8}",
            name,
            s.mean_true_rpm,
            s.mean_error_rpm,
            s.mean_error_pct,
            s.std_error_rpm,
            s.std_error_pct,
            e.mean_position_error_rad,
            e.count_error()
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let ppr = match a.ppr {
        Some(p) => p,
        None => a.motor.pulses_per_revolution()?,
    };
    if ppr == 0 {
        bail!(Error::InvalidParameter("--ppr must be positive".into()));
    }
    if let Some(r) = a.startup_rpm {
        positive("startup-rpm", r)?;
    }
    let model = a.model.as_ref().map(model_file::load).transpose()?;
    let stream = io::read_stream(&a.stream)?;
    let truth = io::read_truth(&a.truth)?;
    let script = io::read_manifest(&a.manifest)?;
    if truth.len() != stream.len() {
        bail!(Error::InvalidParameter(format!(
            "stream has {} samples but truth has {}",
            stream.len(),
            truth.len()
        )));
    }
    script.validate(stream.duration())?;
    let settings = match &model {
        Some(m) => PipelineSettings::from_model(m)?,
        None => PipelineSettings::default(),
    };
    let startup = match a.startup_rpm {
        Some(r) => r,
        None => startup_rpm_guess(&stream, &settings, ppr)?,
    };
    let input = CompareInput {
        stream: &stream,
        truth: &truth,
        script: &script,
        pulse_revolution: ppr,
        startup_rpm: startup,
    };
    let methods = compare_methods(&input, model.as_ref())?;
    io::write_comparison(&a.out, stream.fs, &methods)?;
    println!(
        "{} false, {} ghost, {} true pulses",
        script.false_pulse_times.len(),
        script.ghost_pulse_times.len(),
        truth.pulse_count()
    );
    println!("{:<14} {:>8} {:>8} {:>10}", "method", "pulses", "error", "events ok");
    for m in &methods {
        let blank = || "-".to_string();
        println!(
            "{:<14} {:>8} {:>8} {:>10}",
            m.method,
            m.detected_pulses.map_or_else(blank, |d| d.to_string()),
            m.count_error().map_or_else(blank, |e| format!("{e:+}")),
            m.detected_pulses
                .map_or_else(blank, |_| format!("{}/{}", m.correct_events(), m.events.len()))
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> anyhow::Result<()> {
    positive("known-rpm", a.known_rpm)?;
    let model = model_file::load(&a.model)?;
    let stream = io::read_stream(&a.stream)?;
    let frontend = calibration_frontend(stream.fs, a.known_rpm)?;
    let cal = calibrate_pulses_per_revolution(&stream, a.known_rpm, &model, &frontend)?;
    println!("pulses per revolution: {}", cal.pulse_revolution);
    println!(
        "{} pulses, mean interval {:.3} samples, interval CV {:.2}%",
        cal.pulses,
        cal.mean_tau,
        100.0 * cal.tau_cv
    );
    Ok(())
}
