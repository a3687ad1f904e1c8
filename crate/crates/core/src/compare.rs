//! Side-by-side pulse counting of the trained detector and the comparator
//! baselines on a stream with scripted corruption.

use crate::baselines::{baseline_detect, BaselineKind, BaselineParams};
use crate::error::Result;
use crate::metrics::{classify_events, EventResult};
use crate::pipeline::{Detector, Pipeline, PipelineSettings};
use crate::sim::CorruptionScript;
use crate::stream::{GroundTruth, SampleStream};
use crate::svm::SvmModel;

pub const SVM_METHOD: &str = "svm";

/// Pulse counts and per-event outcomes of one detector on one stream.
/// `detected_pulses` is `None` for a method that was not run.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodComparison {
    pub method: String,
    pub detected_pulses: Option<usize>,
    pub truth_pulses: usize,
    pub events: Vec<EventResult>,
}

impl MethodComparison {
    pub fn count_error(&self) -> Option<i64> {
        self.detected_pulses.map(|d| d as i64 - self.truth_pulses as i64)
    }

    pub fn correct_events(&self) -> usize {
        self.events.iter().filter(|e| e.correct()).count()
    }
}

/// What a stream needs besides its samples.
#[derive(Clone, Debug)]
pub struct CompareInput<'a> {
    pub stream: &'a SampleStream,
    pub truth: &'a GroundTruth,
    pub script: &'a CorruptionScript,
    pub pulse_revolution: u32,
    pub startup_rpm: f64,
}

fn event_samples(times: &[f64], fs: f64) -> Vec<usize> {
    times.iter().map(|t| (t * fs).round() as usize).collect()
}

fn compared(method: &str, detected: &[usize], input: &CompareInput<'_>) -> MethodComparison {
    let fs = input.stream.fs;
    MethodComparison {
        method: method.to_string(),
        detected_pulses: Some(detected.len()),
        truth_pulses: input.truth.pulse_count(),
        events: classify_events(
            &input.truth.pulse_indices,
            detected,
            &event_samples(&input.script.false_pulse_times, fs),
            &event_samples(&input.script.ghost_pulse_times, fs),
        ),
    }
}

/// Run the model (if any) with its stored settings, then every baseline.
/// Without a model the first row is a blank `svm` entry.
pub fn compare_methods(input: &CompareInput<'_>, model: Option<&SvmModel>) -> Result<Vec<MethodComparison>> {
    let settings = match model {
        Some(m) => PipelineSettings::from_model(m)?,
        None => PipelineSettings::default(),
    };
    let cfg = settings.config(input.stream.fs, input.pulse_revolution, input.startup_rpm)?;
    let mut out = Vec::with_capacity(1 + BaselineKind::ALL.len());
    match model {
        Some(m) => {
            let run = Pipeline::new(cfg.clone())?.run(input.stream, Detector::Model(m))?;
            out.push(compared(SVM_METHOD, &run.pulses, input));
        }
        None => out.push(MethodComparison {
            method: SVM_METHOD.into(),
            detected_pulses: None,
            truth_pulses: input.truth.pulse_count(),
            events: Vec::new(),
        }),
    }
    for kind in BaselineKind::ALL {
        let params = BaselineParams::new(kind, cfg.features.initial_period, cfg.frontend.fc_low);
        let pulses = baseline_detect(input.stream, &params)?;
        out.push(compared(kind.name(), &pulses, input));
    }
    Ok(out)
}
