//! Iterative training: harvest labeled feature samples from ground-truthed
//! recordings, train, evaluate, and grow the sample list from intervals
//! that still fail the end criterion.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{stream_errors, StreamErrors};
use crate::pipeline::{Detector, Pipeline, PipelineConfig, PipelineSettings, Prepared};
use crate::sim::{generate, scatter_events, standstill, CorruptionScript, MotorSpec, ProfileKind, RippleShape, Segment, SpeedProfile};
use crate::stream::{GroundTruth, SampleStream};
use crate::svm::{train_smo, KernelSpec, Label, SmoParams, SvmModel, TrainingSet};

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub motor: MotorSpec,
    pub shape: RippleShape,
    pub profile: SpeedProfile,
    pub corruption: CorruptionScript,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub stream: SampleStream,
    pub truth: GroundTruth,
    pub pulse_revolution: u32,
    pub kinds: Vec<ProfileKind>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    pub warnings: Vec<String>,
}

impl Corpus {
    /// Wrap recordings, checking that constant, ramp and step profiles are
    /// all represented.
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("corpus is empty"));
        }
        for e in &entries {
            if e.stream.len() != e.truth.len() {
                return Err(Error::invalid(format!(
                    "{}: stream has {} samples but truth has {}",
                    e.name,
                    e.stream.len(),
                    e.truth.len()
                )));
            }
        }
        let mut warnings = Vec::new();
        for kind in [ProfileKind::Constant, ProfileKind::LinearRamp, ProfileKind::Step] {
            if !entries.iter().any(|e| e.kinds.contains(&kind)) {
                warnings.push(format!("corpus has no {} profile", kind.name()));
            }
        }
        Ok(Corpus { entries, warnings })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn push(&mut self, entry: CorpusEntry) -> Result<()> {
        if entry.stream.len() != entry.truth.len() {
            return Err(Error::invalid(format!(
                "{}: stream has {} samples but truth has {}",
                entry.name,
                entry.stream.len(),
                entry.truth.len()
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn mix_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 step so neighbouring entries get unrelated streams
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn build_corpus(specs: &[CorpusSpec], fs: f64, seed: u64) -> Result<Corpus> {
    if specs.is_empty() {
        return Err(Error::invalid("no corpus specifications given"));
    }
    let entries = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let (stream, truth) =
                generate(&spec.motor, &spec.shape, &spec.profile, &spec.corruption, fs, mix_seed(seed, i as u64))?;
            let kinds = spec.profile.kinds();
            let name = format!(
                "{i:02}-{}-{:.0}rpm",
                kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join("+"),
                spec.profile.segments[0].start_rpm
            );
            Ok(CorpusEntry {
                name,
                stream,
                truth,
                pulse_revolution: spec.motor.pulses_per_revolution()?,
                kinds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(entries)
}

/// Pulses at the start of a run kept free of corruption events.
pub const EVENT_SKIP: usize = 12;
/// Minimum distance between corruption events, in pulses.
pub const EVENT_SPACING: usize = 6;

/// Fill a spec's corruption script with scattered false and ghost events.
pub fn with_scattered_events(
    mut spec: CorpusSpec,
    fs: f64,
    false_count: usize,
    ghost_count: usize,
    seed: u64,
) -> Result<CorpusSpec> {
    let (_, truth) = generate(&spec.motor, &spec.shape, &spec.profile, &CorruptionScript::clean(), fs, 0)?;
    let (f, g) = scatter_events(&truth, fs, false_count, ghost_count, EVENT_SKIP, EVENT_SPACING, seed)?;
    spec.corruption.false_pulse_times = f;
    spec.corruption.ghost_pulse_times = g;
    Ok(spec)
}

/// Default training corpus for a motor: constant speeds, ramps and steps
/// across `min_rpm..=max_rpm` with default noise, plus runs carrying false
/// and ghost pulses.
/// Length of each standstill recording, seconds.
pub const STANDSTILL_SECONDS: f64 = 1.0;

/// Stopped-motor recordings that teach the detector to stay silent on
/// noise: one with noise at a quarter of fs, one close to white.
pub fn standstill_entries(motor: &MotorSpec, fs: f64, seed: u64) -> Result<Vec<CorpusEntry>> {
    let ppr = motor.pulses_per_revolution()?;
    [0.25, 0.45]
        .iter()
        .enumerate()
        .map(|(i, &bw)| {
            let (stream, truth) = standstill(motor, STANDSTILL_SECONDS, None, Some(bw * fs), fs, mix_seed(seed ^ 0x5757, i as u64))?;
            Ok(CorpusEntry {
                name: format!("standstill-{:.0}hz", bw * fs),
                stream,
                truth,
                pulse_revolution: ppr,
                kinds: Vec::new(),
            })
        })
        .collect()
}

pub fn reference_specs(motor: &MotorSpec, min_rpm: f64, max_rpm: f64, fs: f64, seed: u64) -> Result<Vec<CorpusSpec>> {
    if !(min_rpm > 0.0 && max_rpm > min_rpm) {
        return Err(Error::invalid("reference corpus needs 0 < min_rpm < max_rpm"));
    }
    let at = |f: f64| min_rpm * (max_rpm / min_rpm).powf(f);
    let noisy = |profile| CorpusSpec {
        motor: motor.clone(),
        shape: RippleShape::default(),
        profile,
        corruption: CorruptionScript::default(),
    };
    let mut specs = Vec::new();
    for f in [0.0, 0.2, 0.45, 0.7, 0.85, 1.0] {
        specs.push(noisy(SpeedProfile::constant(1.0, at(f))));
    }
    for (a, b) in [(0.05, 0.6), (0.6, 0.95), (0.9, 0.3)] {
        specs.push(noisy(SpeedProfile::new(vec![Segment::ramp(1.0, at(a), at(b))])));
    }
    for (a, b) in [(0.2, 0.55), (0.5, 0.8), (0.85, 0.4)] {
        specs.push(noisy(SpeedProfile::new(vec![
            Segment::constant(0.3, at(a)),
            Segment::step(0.7, at(a), at(b)),
        ])));
    }
    for (i, f) in [0.0, 0.1, 0.25, 0.45, 0.7, 0.95].into_iter().enumerate() {
        let spec = noisy(SpeedProfile::constant(2.0, at(f)));
        let pulses = (2.0 * at(f) / 60.0 * motor.pulses_per_revolution()? as f64) as usize;
        // half the free slots, at most 10 of each kind
        let n = (pulses.saturating_sub(EVENT_SKIP + 1) / (4 * EVENT_SPACING)).clamp(1, 10);
        specs.push(with_scattered_events(spec, fs, n, n, mix_seed(seed, 100 + i as u64))?);
    }
    Ok(specs)
}

/// Guess which profile kinds a recorded truth speed trace contains.
pub fn infer_profile_kinds(speed_rpm: &[f64], fs: f64) -> Vec<ProfileKind> {
    if speed_rpm.len() < 2 {
        return vec![ProfileKind::Constant];
    }
    let span = speed_rpm.iter().fold(0.0f64, |m, v| m.max(*v)) - speed_rpm.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let mean = speed_rpm.iter().sum::<f64>() / speed_rpm.len() as f64;
    if span <= 0.01 * mean {
        return vec![ProfileKind::Constant];
    }
    // largest change over 10 ms against the total change
    let w = ((0.01 * fs) as usize).max(1).min(speed_rpm.len() - 1);
    let fastest = speed_rpm
        .windows(w + 1)
        .map(|s| (s[w] - s[0]).abs())
        .fold(0.0f64, f64::max);
    if fastest >= 0.2 * span {
        vec![ProfileKind::Step]
    } else {
        vec![ProfileKind::LinearRamp]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: Label,
    /// Negative close to a true pulse or a false detection; always kept
    /// when negatives are subsampled.
    pub hard: bool,
}

/// Pulses a stopped-motor stream may emit and still meet the criterion.
pub const STANDSTILL_ALLOWANCE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct EndCriterion {
    /// Mean |relative speed error| per stream, percent.
    pub max_mean_speed_error_pct: f64,
    /// Mean |position error| per stream, radians.
    pub max_position_error_rad: f64,
}

impl EndCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_mean_speed_error_pct > 0.0 && self.max_position_error_rad > 0.0) {
            return Err(Error::invalid("end-criterion thresholds must be positive"));
        }
        Ok(())
    }

    pub fn met_by(&self, e: &StreamErrors) -> bool {
        if e.truth_pulses == 0 {
            return e.detected_pulses <= STANDSTILL_ALLOWANCE;
        }
        // a stream that never emitted a speed cannot pass
        e.speed.count > 0
            && e.speed.mean_abs_error_pct <= self.max_mean_speed_error_pct
            && e.mean_position_error_rad <= self.max_position_error_rad
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub settings: PipelineSettings,
    pub kernel: KernelSpec,
    pub smo: SmoParams,
    /// Harvest interval length in ripple periods.
    pub interval_periods: f64,
    /// Cap on negatives per positive handed to the trainer.
    pub negative_ratio: usize,
    /// Iterations without a better worst-stream score before the automated
    /// parameter sweep moves on.
    pub patience: usize,
    pub hysteresis_sweep: Vec<f64>,
    pub degree_sweep: Vec<u32>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            settings: PipelineSettings::default(),
            kernel: KernelSpec::Polynomial { degree: 3 },
            smo: SmoParams::default(),
            interval_periods: 4.0,
            negative_ratio: 20,
            patience: 8,
            hysteresis_sweep: vec![0.3, 0.4, 0.5],
            degree_sweep: vec![2, 3, 4],
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        self.kernel.validate()?;
        self.smo.validate()?;
        if !(self.interval_periods >= 1.0) {
            return Err(Error::invalid("interval_periods must be at least 1"));
        }
        if self.negative_ratio == 0 {
            return Err(Error::invalid("negative_ratio must be at least 1"));
        }
        Ok(())
    }

    /// Method parameters in sweep order, starting from the configured ones.
    fn sweep(&self) -> Vec<(f64, KernelSpec)> {
        let mut out = vec![(self.settings.hysteresis, self.kernel)];
        if let KernelSpec::Polynomial { .. } = self.kernel {
            for &h in &self.hysteresis_sweep {
                for &d in &self.degree_sweep {
                    let k = KernelSpec::Polynomial { degree: d };
                    if !out.contains(&(h, k)) {
                        out.push((h, k));
                    }
                }
            }
        } else {
            for &h in &self.hysteresis_sweep {
                if !out.contains(&(h, self.kernel)) {
                    out.push((h, self.kernel));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub hysteresis: f64,
    pub kernel: KernelSpec,
    pub sample_count: usize,
    pub positives: usize,
    pub trained_on: usize,
    pub support_vectors: usize,
    pub smo_converged: bool,
    pub errors: Vec<StreamErrors>,
    pub criterion_met: bool,
    pub note: String,
}

impl IterationRecord {
    fn moving(&self) -> impl Iterator<Item = &StreamErrors> {
        self.errors.iter().filter(|e| e.truth_pulses > 0)
    }

    /// Worst mean speed error over streams with motion.
    pub fn worst_speed_pct(&self) -> f64 {
        self.moving()
            .map(|e| if e.speed.count == 0 { f64::INFINITY } else { e.speed.mean_abs_error_pct })
            .fold(0.0, f64::max)
    }

    pub fn worst_position_rad(&self) -> f64 {
        self.moving().map(|e| e.mean_position_error_rad).fold(0.0, f64::max)
    }

    /// Pulses emitted on stopped-motor streams.
    pub fn standstill_pulses(&self) -> usize {
        self.errors.iter().filter(|e| e.truth_pulses == 0).map(|e| e.detected_pulses).sum()
    }

    pub fn count_errors(&self) -> usize {
        self.errors.iter().map(|e| e.pulses.missed.len() + e.pulses.spurious.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub iterations: Vec<IterationRecord>,
    pub model: Option<SvmModel>,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub stream_names: Vec<String>,
}

impl TrainingReport {
    pub fn sample_trajectory(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.sample_count).collect()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "training {} after {} iteration(s)",
            if self.converged { "converged" } else { "did not converge" },
            self.iterations.len()
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let _ = writeln!(
            s,
            "{:>4} {:>5} {:<14} {:>7} {:>5} {:>5} {:>10} {:>10} {:>6} {:>6}  note",
            "iter", "hy", "kernel", "samples", "pos", "sv", "speed_pct", "pos_rad", "events", "still"
        );
        for r in &self.iterations {
            let _ = writeln!(
                s,
                "{:>4} {:>5.2} {:<14} {:>7} {:>5} {:>5} {:>10.4} {:>10.4} {:>6} {:>6}  {}",
                r.iteration,
                r.hysteresis,
                r.kernel.to_string(),
                r.sample_count,
                r.positives,
                r.support_vectors,
                r.worst_speed_pct(),
                r.worst_position_rad(),
                r.count_errors(),
                r.standstill_pulses(),
                r.note
            );
        }
        if let Some(last) = self.iterations.last() {
            let _ = writeln!(s, "\nper-stream errors at the last iteration:");
            for (name, e) in self.stream_names.iter().zip(&last.errors) {
                if e.truth_pulses == 0 {
                    let _ = writeln!(s, "  {name:<28} stopped motor, {} pulse(s) emitted", e.detected_pulses);
                    continue;
                }
                let _ = writeln!(
                    s,
                    "  {name:<28} speed {:>8.4} %  position {:>8.4} rad  pulses {}/{} missed {} spurious {}",
                    e.speed.mean_abs_error_pct,
                    e.mean_position_error_rad,
                    e.detected_pulses,
                    e.truth_pulses,
                    e.pulses.missed.len(),
                    e.pulses.spurious.len()
                );
            }
        }
        s
    }
}

/// Pipeline configuration for one corpus entry.
pub fn entry_config(settings: &PipelineSettings, entry: &CorpusEntry) -> Result<PipelineConfig> {
    let startup = entry
        .truth
        .speed_rpm
        .first()
        .copied()
        .filter(|v| *v > 0.0)
        .unwrap_or(settings.min_rpm);
    settings.config(entry.stream.fs, entry.pulse_revolution, startup)
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Map `f` over items on scoped threads, preserving order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = threads().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Corpus entries with their bandpass precomputed for one setting.
struct PreparedCorpus<'a> {
    corpus: &'a Corpus,
    pipelines: Vec<Pipeline>,
    prepared: Vec<Prepared>,
}

impl<'a> PreparedCorpus<'a> {
    fn new(corpus: &'a Corpus, settings: &PipelineSettings) -> Result<Self> {
        let pipelines = corpus
            .entries
            .iter()
            .map(|e| Pipeline::new(entry_config(settings, e)?))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(&Pipeline, &CorpusEntry)> = pipelines.iter().zip(&corpus.entries).collect();
        let prepared = par_map(&pairs, |(p, e)| p.prepare(&e.stream)).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(PreparedCorpus {
            corpus,
            pipelines,
            prepared,
        })
    }

    /// Same bandpass, different feature settings.
    fn with_settings(&self, settings: &PipelineSettings) -> Result<PreparedCorpus<'a>> {
        let pipelines = self
            .corpus
            .entries
            .iter()
            .map(|e| Pipeline::new(entry_config(settings, e)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedCorpus {
            corpus: self.corpus,
            pipelines,
            prepared: self.prepared.clone(),
        })
    }

    fn evaluate(&self, model: &SvmModel) -> Result<Vec<StreamErrors>> {
        let idx: Vec<usize> = (0..self.corpus.len()).collect();
        par_map(&idx, |&i| {
            let out = self.pipelines[i].run_prepared(&self.prepared[i], Detector::Model(model), None)?;
            stream_errors(&out.records, &self.corpus.entries[i].truth)
        })
        .into_iter()
        .collect()
    }
}

/// Run the full pipeline with `model` on every corpus stream.
pub fn evaluate(model: &SvmModel, corpus: &Corpus, settings: &PipelineSettings) -> Result<Vec<StreamErrors>> {
    PreparedCorpus::new(corpus, settings)?.evaluate(model)
}

/// Per-feature multipliers that bring the 99th percentile of |feature| over
/// teacher-forced runs of the corpus to 1. Binary and already bounded
/// features keep a multiplier of 1.
pub fn fit_feature_scale(corpus: &Corpus, settings: &PipelineSettings) -> Result<Vec<f64>> {
    let unscaled = PipelineSettings {
        feature_scale: Vec::new(),
        ..settings.clone()
    };
    let pc = PreparedCorpus::new(corpus, &unscaled)?;
    let dim = unscaled.dim();
    let mut columns = vec![Vec::new(); dim];
    for i in (0..corpus.len()).filter(|&i| corpus.entries[i].truth.pulse_count() > 0) {
        let aligned = aligned_truth(&pc.pipelines[i], &pc.prepared[i], &corpus.entries[i])?;
        let out = pc.pipelines[i].run_prepared(&pc.prepared[i], Detector::Forced(&aligned), Some(0..corpus.entries[i].stream.len()))?;
        for f in out.features {
            for (c, v) in columns.iter_mut().zip(f) {
                c.push(v.abs());
            }
        }
    }
    Ok(columns
        .into_iter()
        .map(|mut c| {
            if c.is_empty() {
                return 1.0;
            }
            let k = ((c.len() - 1) as f64 * 0.99) as usize;
            let (_, q, _) = c.select_nth_unstable_by(k, f64::total_cmp);
            if *q > 1.0 { 1.0 / *q } else { 1.0 }
        })
        .collect())
}

/// Move each truth pulse to the largest normalized sample within `radius`;
/// this is where the front end places the ripple maximum.
pub fn align_truth(normalized: &[f64], truth: &[usize], radius: usize) -> Vec<usize> {
    let mut out: Vec<usize> = truth
        .iter()
        .map(|&t| {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(normalized.len().saturating_sub(1));
            (lo..=hi)
                .max_by(|a, b| normalized[*a].total_cmp(&normalized[*b]).then(b.cmp(a)))
                .unwrap_or(t)
        })
        .collect();
    out.dedup();
    out
}

fn snap_radius(cfg: &PipelineConfig) -> usize {
    ((cfg.features.initial_period / 10.0) as usize).max(1)
}

/// Window of `periods` local ripple periods centred on `centre`.
/// A stopped motor falls back to `idle_period` samples.
fn interval_around(entry: &CorpusEntry, centre: usize, periods: f64, idle_period: f64) -> std::ops::Range<usize> {
    let rpm = entry.truth.speed_rpm[centre.min(entry.truth.len() - 1)];
    let period = if rpm > 0.0 {
        entry.stream.fs / (rpm / 60.0 * entry.pulse_revolution as f64)
    } else {
        idle_period
    };
    let half = (0.5 * periods * period).ceil() as usize;
    let lo = centre.saturating_sub(half);
    let hi = (centre + half).min(entry.stream.len());
    lo..hi
}

/// Aligned truth pulses for an entry under a given pipeline.
fn aligned_truth(pipeline: &Pipeline, prepared: &Prepared, entry: &CorpusEntry) -> Result<Vec<usize>> {
    let probe = pipeline.run_prepared(prepared, Detector::Forced(&entry.truth.pulse_indices), None)?;
    Ok(align_truth(&probe.normalized, &entry.truth.pulse_indices, snap_radius(pipeline.config())))
}

/// Labeled samples from a teacher-forced run over `range`: every sample is
/// kept, positive exactly at the aligned truth pulses.
fn harvest_forced(
    pipeline: &Pipeline,
    prepared: &Prepared,
    aligned: &[usize],
    range: std::ops::Range<usize>,
) -> Result<Vec<LabeledSample>> {
    let out = pipeline.run_prepared(prepared, Detector::Forced(aligned), Some(range.clone()))?;
    let near = (pipeline.config().features.initial_period / 4.0) as usize;
    Ok(out
        .features
        .into_iter()
        .zip(range)
        .map(|(features, i)| {
            let pos = aligned.binary_search(&i).is_ok();
            let hard = !pos && nearest_distance(aligned, i) <= near;
            LabeledSample {
                features,
                label: if pos { Label::Positive } else { Label::Negative },
                hard,
            }
        })
        .collect())
}

/// Labeled samples from the model's own run over `range`. Samples one step
/// from a true pulse are ambiguous under the ±1 convention and skipped.
/// Negatives inside the model's margin count as hard.
fn harvest_rollout(
    pipeline: &Pipeline,
    prepared: &Prepared,
    model: &SvmModel,
    aligned: &[usize],
    range: std::ops::Range<usize>,
) -> Result<Vec<LabeledSample>> {
    let out = pipeline.run_prepared(prepared, Detector::Model(model), Some(range.clone()))?;
    let near = (pipeline.config().features.initial_period / 4.0) as usize;
    // the normalizer follows the model's own period estimate, so peaks can
    // sit a sample or two away from the teacher-forced run
    let aligned = align_truth(&out.normalized, aligned, 2);
    Ok(out
        .features
        .into_iter()
        .zip(range)
        .filter_map(|(features, i)| {
            let d = nearest_distance(&aligned, i);
            if d == 1 {
                return None;
            }
            let pos = d == 0;
            let hard = !pos && (d <= near || model.decision_value(&features).is_ok_and(|v| v > -1.0));
            Some(LabeledSample {
                features,
                label: if pos { Label::Positive } else { Label::Negative },
                hard,
            })
        })
        .collect())
}

fn nearest_distance(sorted: &[usize], i: usize) -> usize {
    let p = sorted.partition_point(|&v| v < i);
    let a = sorted.get(p).map(|v| v - i);
    let b = p.checked_sub(1).map(|q| i - sorted[q]);
    a.into_iter().chain(b).min().unwrap_or(usize::MAX)
}

/// Sample list handed to the trainer: every positive and hard negative,
/// topped up with random negatives to at most `ratio` per positive.
fn balanced_set(samples: &[LabeledSample], ratio: usize, rng: &mut ChaCha8Rng) -> Result<TrainingSet> {
    let positives: Vec<&LabeledSample> = samples.iter().filter(|s| s.label == Label::Positive).collect();
    let mut hard: Vec<&LabeledSample> = samples.iter().filter(|s| s.label == Label::Negative && s.hard).collect();
    let mut easy: Vec<&LabeledSample> = samples.iter().filter(|s| s.label == Label::Negative && !s.hard).collect();
    let cap = positives.len() * ratio;
    if hard.len() > cap {
        hard.shuffle(rng);
        hard.truncate(cap);
    }
    easy.shuffle(rng);
    easy.truncate(cap - hard.len());
    let chosen: Vec<&LabeledSample> = positives.into_iter().chain(hard).chain(easy).collect();
    TrainingSet::new(
        chosen.iter().map(|s| s.features.clone()).collect(),
        chosen.iter().map(|s| s.label).collect(),
    )
}

/// Outcome of one harvest step.
#[derive(Clone, Debug, PartialEq)]
pub enum Harvest {
    /// Samples added from these (entry, range) intervals.
    Added(Vec<(usize, std::ops::Range<usize>)>),
    /// Every stream meets the criterion; nothing to add.
    NothingFailing,
    /// Some stream fails but offers no interval that has not already been
    /// harvested; the parameters need to change.
    Exhausted,
}

/// Extend `samples` following the training method: a random interval when
/// the list is empty, otherwise failing intervals of the current model.
#[allow(clippy::too_many_arguments)]
fn harvest(
    pc: &PreparedCorpus<'_>,
    aligned: &[Vec<usize>],
    model: Option<(&SvmModel, &[StreamErrors])>,
    criterion: &EndCriterion,
    cfg: &TrainingConfig,
    samples: &mut Vec<LabeledSample>,
    seen: &mut Vec<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<Harvest> {
    let corpus = pc.corpus;
    if samples.is_empty() || model.is_none() {
        // random interval that holds at least one true pulse
        for _ in 0..1000 {
            let e = rng.random_range(0..corpus.len());
            let entry = &corpus.entries[e];
            let pulses = &aligned[e];
            if pulses.is_empty() {
                continue;
            }
            let centre = rng.random_range(0..entry.stream.len());
            let range = interval_around(entry, centre, cfg.interval_periods, idle_period(pc, e));
            if !pulses.iter().any(|p| range.contains(p)) {
                continue;
            }
            samples.extend(harvest_forced(&pc.pipelines[e], &pc.prepared[e], pulses, range.clone())?);
            return Ok(Harvest::Added(vec![(e, range)]));
        }
        return Err(Error::invalid("no corpus stream contains a ripple pulse"));
    }
    let (model, errors) = model.expect("checked above");
    let failing: Vec<usize> = (0..corpus.len()).filter(|&i| !criterion.met_by(&errors[i])).collect();
    if failing.is_empty() {
        return Ok(Harvest::NothingFailing);
    }
    let mut added = Vec::new();
    for &e in &failing {
        let entry = &corpus.entries[e];
        let err = &errors[e];
        // missed and spurious pulses first, in time order, then the worst
        // speed error
        let mut events: Vec<usize> = err.pulses.missed.iter().chain(&err.pulses.spurious).copied().collect();
        events.sort_unstable();
        events.extend(err.worst_speed_index);
        // a stopped motor has no true pulse to anchor on, so take several
        // spurious ones at once
        let take = if aligned[e].is_empty() { STANDSTILL_CENTRES } else { 1 };
        let centres: Vec<usize> = events.into_iter().filter(|c| !seen.contains(&(e, *c))).take(take).collect();
        for centre in centres {
            seen.push((e, centre));
            let mut range = interval_around(entry, centre, cfg.interval_periods, idle_period(pc, e));
            if !aligned[e].is_empty() && !aligned[e].iter().any(|p| range.contains(p)) {
                // widen until the interval holds a true pulse
                let near = aligned[e][nearest_index(&aligned[e], centre)];
                range = range.start.min(near)..range.end.max(near + 1);
            }
            samples.extend(harvest_rollout(&pc.pipelines[e], &pc.prepared[e], model, &aligned[e], range.clone())?);
            samples.extend(harvest_forced(&pc.pipelines[e], &pc.prepared[e], &aligned[e], range.clone())?);
            added.push((e, range));
        }
    }
    if added.is_empty() {
        Ok(Harvest::Exhausted)
    } else {
        Ok(Harvest::Added(added))
    }
}

/// Spurious pulses harvested per stopped-motor stream and step.
const STANDSTILL_CENTRES: usize = 4;

fn idle_period(pc: &PreparedCorpus<'_>, e: usize) -> f64 {
    pc.pipelines[e].config().features.initial_period
}

fn nearest_index(sorted: &[usize], i: usize) -> usize {
    let p = sorted.partition_point(|&v| v < i);
    if p == 0 {
        0
    } else if p == sorted.len() {
        p - 1
    } else if sorted[p] - i < i - sorted[p - 1] {
        p
    } else {
        p - 1
    }
}

pub fn run_training(
    corpus: &Corpus,
    criterion: &EndCriterion,
    cfg: &TrainingConfig,
    max_iterations: usize,
) -> Result<TrainingReport> {
    cfg.validate()?;
    criterion.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let mut report = TrainingReport {
        iterations: Vec::new(),
        model: None,
        converged: false,
        warnings: corpus.warnings.clone(),
        stream_names: corpus.entries.iter().map(|e| e.name.clone()).collect(),
    };
    if max_iterations == 0 {
        return Ok(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sweep = cfg.sweep();
    let mut sweep_pos = 0;
    let mut base_settings = cfg.settings.clone();
    if base_settings.feature_scale.is_empty() {
        base_settings.feature_scale = fit_feature_scale(corpus, &base_settings)?;
    }
    let base = PreparedCorpus::new(corpus, &base_settings)?;

    let mut best: Option<(f64, SvmModel)> = None;
    'params: while sweep_pos < sweep.len() {
        let (hysteresis, kernel) = sweep[sweep_pos];
        let settings = PipelineSettings {
            hysteresis,
            ..base_settings.clone()
        };
        let pc = base.with_settings(&settings)?;
        let aligned = (0..corpus.len())
            .map(|i| aligned_truth(&pc.pipelines[i], &pc.prepared[i], &corpus.entries[i]))
            .collect::<Result<Vec<_>>>()?;
        // parameter change empties the sample list
        let mut samples: Vec<LabeledSample> = Vec::new();
        let mut seen = Vec::new();
        let mut current: Option<(SvmModel, Vec<StreamErrors>)> = None;
        let mut since_improvement = 0;
        let mut local_best = f64::INFINITY;
        let mut note = String::from(if sweep_pos == 0 { "start" } else { "parameters changed" });

        loop {
            if report.iterations.len() >= max_iterations {
                break 'params;
            }
            let t_harvest = Instant::now();
            let step = harvest(
                &pc,
                &aligned,
                current.as_ref().map(|(m, e)| (m, e.as_slice())),
                criterion,
                cfg,
                &mut samples,
                &mut seen,
                &mut rng,
            )?;
            match step {
                Harvest::Added(intervals) => {
                    if note.is_empty() {
                        note = format!("{} interval(s)", intervals.len());
                    }
                }
                Harvest::NothingFailing => unreachable!("criterion met is handled after evaluation"),
                Harvest::Exhausted => {
                    sweep_pos += 1;
                    continue 'params;
                }
            }
            let t_train = Instant::now();
            let set = balanced_set(&samples, cfg.negative_ratio, &mut rng)?;
            let (model, smo_converged) = match train_smo(&set, kernel, &cfg.smo) {
                Ok(m) => (m, true),
                Err(Error::NotConverged { best, .. }) => (*best, false),
                Err(e) => return Err(e),
            };
            let mut model = model;
            model.meta = settings.to_meta();
            let t_eval = Instant::now();
            let errors = pc.evaluate(&model)?;
            log::debug!(
                "harvest {:.2?}, train {:.2?} on {} samples, evaluate {:.2?}",
                t_train - t_harvest,
                t_eval - t_train,
                set.len(),
                t_eval.elapsed()
            );
            let met = errors.iter().all(|e| criterion.met_by(e));
            let record = IterationRecord {
                iteration: report.iterations.len() + 1,
                hysteresis,
                kernel,
                sample_count: samples.len(),
                positives: samples.iter().filter(|s| s.label == Label::Positive).count(),
                trained_on: set.len(),
                support_vectors: model.support.len(),
                smo_converged,
                errors: errors.clone(),
                criterion_met: met,
                note: std::mem::take(&mut note),
            };
            let score = record.worst_speed_pct() / criterion.max_mean_speed_error_pct
                + record.worst_position_rad() / criterion.max_position_error_rad
                + record.standstill_pulses() as f64 / (STANDSTILL_ALLOWANCE + 1) as f64;
            log::info!(
                "iteration {}: hy {} {} samples {} worst speed {:.3} % worst position {:.3} rad events {}",
                record.iteration,
                record.hysteresis,
                record.kernel,
                record.sample_count,
                record.worst_speed_pct(),
                record.worst_position_rad(),
                record.count_errors()
            );
            report.iterations.push(record);
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, model.clone()));
            }
            if met {
                report.converged = true;
                report.model = Some(model);
                return Ok(report);
            }
            if score < local_best {
                local_best = score;
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= cfg.patience {
                    sweep_pos += 1;
                    continue 'params;
                }
            }
            current = Some((model, errors));
        }
    }
    if sweep_pos >= sweep.len() {
        report
            .warnings
            .push("automated parameter sweep exhausted; further changes are manual".into());
    }
    report.model = best.map(|(_, m)| m);
    Ok(report)
}
