//! Full estimation chain: bandpass, filter bank, normalization, features,
//! classifier, speed and position.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::dsp::{bandpass, FilterBank, FrontendConfig, Normalizer};
use crate::error::{Error, Result};
use crate::estimate::{DetectorState, EstimateRecord};
use crate::features::{FeatureConfig, FeatureExtractor};
use crate::stream::SampleStream;
use crate::svm::{Label, SvmModel};

/// Scaled features saturate here. Counters such as Lwt grow without bound
/// after a missed pulse and would otherwise dominate a polynomial kernel.
pub const SCALED_FEATURE_LIMIT: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub frontend: FrontendConfig,
    pub features: FeatureConfig,
    pub pulse_revolution: u32,
    pub num_pulse_mean: usize,
    /// Normalizer window in ripple periods.
    pub normalize_periods: f64,
    /// Per-feature multipliers applied before classification; empty for none.
    pub feature_scale: Vec<f64>,
}

/// Motor-independent pipeline settings. A trained model carries these in
/// its metadata so estimation reproduces the training front end.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSettings {
    /// Slowest and fastest shaft speed the front end must pass.
    pub min_rpm: f64,
    pub max_rpm: f64,
    pub hysteresis: f64,
    pub reconstructed_features: bool,
    pub num_pulse_mean: usize,
    pub normalize_periods: f64,
    pub filter_bank: bool,
    pub bank_band_count: usize,
    /// Per-feature multipliers applied before classification; empty for none.
    pub feature_scale: Vec<f64>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            min_rpm: 400.0,
            max_rpm: 6500.0,
            hysteresis: 0.4,
            reconstructed_features: true,
            num_pulse_mean: 4,
            normalize_periods: 4.0,
            filter_bank: false,
            bank_band_count: 4,
            feature_scale: Vec::new(),
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_rpm > 0.0 && self.max_rpm >= self.min_rpm && self.max_rpm.is_finite()) {
            return Err(Error::invalid(format!(
                "speed range {}..{} r/min is not positive and increasing",
                self.min_rpm, self.max_rpm
            )));
        }
        if !(self.hysteresis.is_finite() && self.hysteresis >= 0.0) {
            return Err(Error::invalid(format!("hysteresis must be >= 0, got {}", self.hysteresis)));
        }
        if self.num_pulse_mean == 0 {
            return Err(Error::invalid("num_pulse_mean must be at least 1"));
        }
        if !(self.normalize_periods > 0.0) {
            return Err(Error::invalid("normalize_periods must be positive"));
        }
        if self.bank_band_count == 0 {
            return Err(Error::invalid("bank_band_count must be at least 1"));
        }
        check_scale(&self.feature_scale, self.dim())
    }

    pub fn dim(&self) -> usize {
        if self.reconstructed_features {
            crate::features::EXTENDED_DIM
        } else {
            crate::features::BASE_DIM
        }
    }

    /// Concrete configuration for one motor at one sample rate.
    pub fn config(&self, fs: f64, pulse_revolution: u32, startup_rpm: f64) -> Result<PipelineConfig> {
        self.validate()?;
        if pulse_revolution == 0 {
            return Err(Error::invalid("pulse_revolution must be positive"));
        }
        if !(startup_rpm > 0.0 && startup_rpm.is_finite()) {
            return Err(Error::invalid(format!("startup speed must be positive, got {startup_rpm}")));
        }
        let ripple = |rpm: f64| rpm / 60.0 * pulse_revolution as f64;
        let mut frontend = FrontendConfig::for_ripple_range(fs, ripple(self.min_rpm), ripple(self.max_rpm))?;
        frontend.filter_bank_enabled = self.filter_bank;
        frontend.bank_band_count = self.bank_band_count;
        let max_period = fs / frontend.fc_low;
        let initial_period = (fs / ripple(startup_rpm)).clamp(crate::features::MIN_PERIOD, max_period);
        let mut features = FeatureConfig::new(initial_period, max_period, frontend.delay);
        features.hysteresis = self.hysteresis;
        features.reconstructed = self.reconstructed_features;
        let cfg = PipelineConfig {
            frontend,
            features,
            pulse_revolution,
            num_pulse_mean: self.num_pulse_mean,
            normalize_periods: self.normalize_periods,
            feature_scale: self.feature_scale.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("min_rpm".into(), format!("{:?}", self.min_rpm));
        m.insert("max_rpm".into(), format!("{:?}", self.max_rpm));
        m.insert("hysteresis".into(), format!("{:?}", self.hysteresis));
        m.insert("reconstructed_features".into(), self.reconstructed_features.to_string());
        m.insert("num_pulse_mean".into(), self.num_pulse_mean.to_string());
        m.insert("normalize_periods".into(), format!("{:?}", self.normalize_periods));
        m.insert("filter_bank".into(), self.filter_bank.to_string());
        m.insert("bank_band_count".into(), self.bank_band_count.to_string());
        if !self.feature_scale.is_empty() {
            let v: Vec<String> = self.feature_scale.iter().map(|x| format!("{x:?}")).collect();
            m.insert("feature_scale".into(), v.join(","));
        }
        m
    }

    /// Settings stored in a model; keys it lacks keep the default.
    pub fn from_model(model: &SvmModel) -> Result<Self> {
        fn get<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str, into: &mut T) -> Result<()> {
            if let Some(v) = meta.get(key) {
                *into = v
                    .parse()
                    .map_err(|_| Error::invalid(format!("model metadata {key}={v} is malformed")))?;
            }
            Ok(())
        }
        let mut s = PipelineSettings {
            reconstructed_features: model.dim == crate::features::EXTENDED_DIM,
            ..Default::default()
        };
        let meta = &model.meta;
        get(meta, "min_rpm", &mut s.min_rpm)?;
        get(meta, "max_rpm", &mut s.max_rpm)?;
        get(meta, "hysteresis", &mut s.hysteresis)?;
        get(meta, "reconstructed_features", &mut s.reconstructed_features)?;
        get(meta, "num_pulse_mean", &mut s.num_pulse_mean)?;
        get(meta, "normalize_periods", &mut s.normalize_periods)?;
        get(meta, "filter_bank", &mut s.filter_bank)?;
        get(meta, "bank_band_count", &mut s.bank_band_count)?;
        if let Some(v) = meta.get("feature_scale") {
            s.feature_scale = v
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::invalid(format!("model metadata feature_scale={v} is malformed")))?;
        }
        s.validate()?;
        if model.dim != s.dim() {
            return Err(Error::DimensionMismatch {
                expected: s.dim(),
                got: model.dim,
            });
        }
        Ok(s)
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        self.features.validate()?;
        if self.pulse_revolution == 0 {
            return Err(Error::invalid("pulse_revolution must be positive"));
        }
        if self.num_pulse_mean == 0 {
            return Err(Error::invalid("num_pulse_mean must be at least 1"));
        }
        if !(self.normalize_periods > 0.0) {
            return Err(Error::invalid("normalize_periods must be positive"));
        }
        check_scale(&self.feature_scale, self.features.dim())
    }
}

fn check_scale(scale: &[f64], dim: usize) -> Result<()> {
    if !scale.is_empty() && scale.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: scale.len(),
        });
    }
    if let Some(v) = scale.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("feature scale entries must be positive, got {v}")));
    }
    Ok(())
}

/// Where pulse decisions come from.
#[derive(Clone, Copy, Debug)]
pub enum Detector<'a> {
    Model(&'a SvmModel),
    /// Decisions forced to a known, sorted pulse train.
    Forced(&'a [usize]),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<EstimateRecord>,
    pub pulses: Vec<usize>,
    /// Normalized signal, one value per input sample.
    pub normalized: Vec<f64>,
    /// Classifier inputs for the capture range, if one was requested.
    pub features: Vec<Vec<f64>>,
    pub capture_start: usize,
    pub group_delay: usize,
}

impl PipelineOutput {
    pub fn speeds(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.records
            .iter()
            .filter_map(|r| r.speed_rpm.map(|v| (r.sample_index, v)))
    }
}

/// A stream with the batch bandpass already applied, so repeated runs with
/// different detectors skip the expensive filter.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub bandpassed: SampleStream,
    pub group_delay: usize,
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline { cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn prepare(&self, stream: &SampleStream) -> Result<Prepared> {
        let bp = bandpass(stream, &self.cfg.frontend)?;
        Ok(Prepared {
            bandpassed: bp.stream,
            group_delay: bp.group_delay,
        })
    }

    pub fn run(&self, stream: &SampleStream, detector: Detector<'_>) -> Result<PipelineOutput> {
        self.run_prepared(&self.prepare(stream)?, detector, None)
    }

    pub fn run_prepared(
        &self,
        prepared: &Prepared,
        detector: Detector<'_>,
        capture: Option<Range<usize>>,
    ) -> Result<PipelineOutput> {
        if let Detector::Model(m) = detector {
            if m.dim != self.cfg.features.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.cfg.features.dim(),
                    got: m.dim,
                });
            }
        }
        let cfg = &self.cfg;
        let x = &prepared.bandpassed.current;
        let len = x.len();
        let mut bank = FilterBank::new(&cfg.frontend)?;
        let mut norm = Normalizer::new((cfg.normalize_periods * cfg.features.initial_period).max(2.0))?;
        let lead_len = (norm.window().ceil() as usize).min(len);
        let mut lead_bank = bank.clone();
        let lead: Vec<f64> = x[..lead_len]
            .iter()
            .map(|&v| lead_bank.process(v, Some(cfg.features.initial_period)))
            .collect();
        norm.prime(&lead);
        let mut ex = FeatureExtractor::new(&cfg.features)?;
        let mut det = DetectorState::new(prepared.bandpassed.fs, cfg.pulse_revolution, cfg.num_pulse_mean)?;
        let lookahead = ex.lookahead();
        let capture = capture.unwrap_or(0..0);

        let mut out = PipelineOutput {
            records: Vec::with_capacity(len),
            normalized: Vec::with_capacity(len),
            capture_start: capture.start,
            group_delay: prepared.group_delay + lookahead,
            ..Default::default()
        };
        let mut forced = match detector {
            Detector::Forced(p) => p.iter().peekable(),
            Detector::Model(_) => [].iter().peekable(),
        };

        for n in 0..len + lookahead {
            let z = if n < len {
                let period = ex.period();
                let y = bank.process(x[n], Some(period));
                norm.set_window(cfg.normalize_periods * period);
                let z = norm.push(y);
                out.normalized.push(z);
                z
            } else {
                // hold the last value so the edge cannot pose as a peak
                out.normalized.last().copied().unwrap_or(0.0)
            };
            let Some(fv) = ex.push(z) else {
                continue;
            };
            let idx = n - lookahead;
            let mut v = fv.to_vec();
            for (x, k) in v.iter_mut().zip(&cfg.feature_scale) {
                *x = (*x * k).clamp(-SCALED_FEATURE_LIMIT, SCALED_FEATURE_LIMIT);
            }
            let pulse = match detector {
                Detector::Model(m) => m.decide(&v)? == Label::Positive,
                Detector::Forced(_) => {
                    while forced.next_if(|&&p| p < idx).is_some() {}
                    forced.next_if(|&&p| p == idx).is_some()
                }
            };
            ex.observe_pulse(pulse);
            if capture.contains(&idx) {
                out.features.push(v);
            }
            if pulse {
                out.pulses.push(idx);
            }
            out.records.push(det.step(idx, pulse));
        }
        Ok(out)
    }
}

/// Ripple period in samples from the first autocorrelation peak of a
/// bandpassed stream, searched between `min_period` and `max_period`.
pub fn autocorrelation_period(x: &[f64], min_period: usize, max_period: usize) -> Option<f64> {
    let max_period = max_period.min(x.len() / 2);
    if min_period < 1 || max_period <= min_period + 1 {
        return None;
    }
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return None;
    }
    let r: Vec<f64> = (0..=max_period + 1)
        .map(|lag| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / energy)
        .collect();
    // the first local maximum above half the zero-lag value
    (min_period.max(1)..=max_period)
        .find(|&lag| r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > 0.5)
        .map(|lag| {
            // parabolic refinement
            let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-15 { 0.5 * (a - c) / denom } else { 0.0 };
            lag as f64 + shift.clamp(-0.5, 0.5)
        })
}

/// Shaft speed at the start of a recording, from the autocorrelation of
/// its first few slowest-ripple periods. Falls back to `settings.min_rpm`
/// when no periodic ripple shows up.
pub fn startup_rpm_guess(stream: &SampleStream, settings: &PipelineSettings, pulse_revolution: u32) -> Result<f64> {
    let cfg = settings.config(stream.fs, pulse_revolution, settings.min_rpm)?;
    let max_period = stream.fs / cfg.frontend.fc_low;
    let min_period = (stream.fs / cfg.frontend.fc_up).floor().max(2.0) as usize;
    let lead = stream.slice(0..((8.0 * max_period) as usize).min(stream.len()));
    let bp = bandpass(&lead, &cfg.frontend)?;
    let rpm = autocorrelation_period(&bp.stream.current, min_period, max_period.ceil() as usize)
        .map(|p| stream.fs / p * 60.0 / pulse_revolution as f64)
        .filter(|r| r.is_finite());
    Ok(rpm.map_or(settings.min_rpm, |r| r.clamp(settings.min_rpm, settings.max_rpm)))
}

/// Outcome of running a model at a known constant speed.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub pulse_revolution: u32,
    pub mean_tau: f64,
    pub tau_cv: f64,
    pub pulses: usize,
}

pub const CALIBRATION_MAX_CV: f64 = 0.10;

/// Front end for calibration when pulses per revolution is unknown: it
/// passes ripple from 2 to 24 pulses per revolution at `known_rpm`.
pub fn calibration_frontend(fs: f64, known_rpm: f64) -> Result<FrontendConfig> {
    if !(known_rpm > 0.0 && known_rpm.is_finite()) {
        return Err(Error::invalid(format!("known speed must be positive, got {known_rpm}")));
    }
    let rot = known_rpm / 60.0;
    FrontendConfig::for_ripple_range(fs, 2.0 * rot, (24.0 * rot).min(0.2 * fs))
}

/// Solve the speed formula for pulses per revolution from the mean
/// detected interval on a stream recorded at `known_rpm`.
pub fn calibrate_pulses_per_revolution(
    stream: &SampleStream,
    known_rpm: f64,
    model: &SvmModel,
    frontend: &FrontendConfig,
) -> Result<Calibration> {
    if !(known_rpm > 0.0 && known_rpm.is_finite()) {
        return Err(Error::invalid(format!("known speed must be positive, got {known_rpm}")));
    }
    let bp = bandpass(stream, frontend)?;
    let max_period = frontend.fs / frontend.fc_low;
    let min_period = (frontend.fs / frontend.fc_up).floor().max(2.0) as usize;
    let initial = autocorrelation_period(&bp.stream.current, min_period, max_period.ceil() as usize)
        .ok_or_else(|| Error::Calibration("no periodic ripple found in the stream".into()))?;
    let settings = PipelineSettings::from_model(model)?;
    let mut features = FeatureConfig::new(initial.clamp(2.0, max_period), max_period, frontend.delay);
    features.hysteresis = settings.hysteresis;
    features.reconstructed = settings.reconstructed_features;
    let cfg = PipelineConfig {
        frontend: frontend.clone(),
        features,
        pulse_revolution: 1,
        num_pulse_mean: 1,
        normalize_periods: settings.normalize_periods,
        feature_scale: settings.feature_scale.clone(),
    };
    let pipeline = Pipeline::new(cfg)?;
    let out = pipeline.run_prepared(
        &Prepared {
            bandpassed: bp.stream,
            group_delay: bp.group_delay,
        },
        Detector::Model(model),
        None,
    )?;
    let taus: Vec<f64> = out.pulses.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    if taus.len() < 2 {
        return Err(Error::Calibration(format!(
            "only {} pulses detected; cannot measure cadence",
            out.pulses.len()
        )));
    }
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / taus.len() as f64;
    let cv = var.sqrt() / mean;
    if cv > CALIBRATION_MAX_CV {
        return Err(Error::Calibration(format!(
            "detected cadence is irregular (interval CV {:.1}% > {:.0}%)",
            100.0 * cv,
            100.0 * CALIBRATION_MAX_CV
        )));
    }
    let ppr = (stream.fs * 60.0 / (mean * known_rpm)).round();
    if ppr < 1.0 {
        return Err(Error::Calibration(format!(
            "known speed {known_rpm} r/min implies fewer than one pulse per revolution"
        )));
    }
    Ok(Calibration {
        pulse_revolution: ppr as u32,
        mean_tau: mean,
        tau_cv: cv,
        pulses: out.pulses.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate, CorruptionScript, MotorSpec, RippleShape, SpeedProfile};
    use std::f64::consts::PI;

    fn settings() -> PipelineSettings {
        PipelineSettings {
            min_rpm: 400.0,
            max_rpm: 3000.0,
            ..Default::default()
        }
    }

    fn config() -> PipelineConfig {
        settings().config(10_000.0, 6, 1000.0).unwrap()
    }

    #[test]
    fn config_sizing() {
        let c = config();
        assert_eq!(c.frontend.fc_low, 20.0);
        assert_eq!(c.features.max_period, 500.0);
        assert!((c.features.initial_period - 100.0).abs() < 1e-12);
        assert!(c.features.lookahead() <= c.frontend.delay);
    }

    #[test]
    fn forced_detector_reproduces_the_pulse_train() {
        let (s, t) = generate(
            &MotorSpec::emg30(),
            &RippleShape::default(),
            &SpeedProfile::constant(1.0, 1000.0),
            &CorruptionScript::clean(),
            10_000.0,
            3,
        )
        .unwrap();
        let p = Pipeline::new(config()).unwrap();
        let out = p.run(&s, Detector::Forced(&t.pulse_indices)).unwrap();
        assert_eq!(out.records.len(), s.len());
        assert_eq!(out.pulses, t.pulse_indices);
        assert!(out.records.iter().enumerate().all(|(i, r)| r.sample_index == i));
        let last = out.records.last().unwrap();
        assert!((last.position_rad - 2.0 * PI * t.pulse_count() as f64 / 6.0).abs() < 1e-12);
        for (_, v) in out.speeds() {
            assert!((v - 1000.0).abs() < 10.0, "{v}");
        }
    }

    #[test]
    fn normalized_clean_ripple_has_unit_scale() {
        let (s, _) = generate(
            &MotorSpec::emg30(),
            &RippleShape::default(),
            &SpeedProfile::constant(2.0, 1500.0),
            &CorruptionScript::clean(),
            10_000.0,
            3,
        )
        .unwrap();
        let p = Pipeline::new(config()).unwrap();
        let out = p.run(&s, Detector::Forced(&[])).unwrap();
        // five ripple periods at 150 Hz
        let w = 5 * 10_000 / 150;
        for chunk in out.normalized[5000..].chunks(w).filter(|c| c.len() == w) {
            let mean = chunk.iter().sum::<f64>() / w as f64;
            let std = (chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w as f64).sqrt();
            assert!(mean.abs() <= 0.1, "mean {mean}");
            assert!((0.7..=1.3).contains(&std), "std {std}");
        }
    }

    #[test]
    fn dimension_checked_before_running() {
        let p = Pipeline::new(config()).unwrap();
        let s = SampleStream::new(10_000.0, vec![0.0; 100]);
        let m = SvmModel::constant(3, 1.0);
        assert!(matches!(p.run(&s, Detector::Model(&m)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn autocorrelation_finds_the_period() {
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * PI * i as f64 / 37.5).sin()).collect();
        let p = autocorrelation_period(&x, 5, 200).unwrap();
        assert!((p - 37.5).abs() < 0.5, "{p}");
        assert_eq!(autocorrelation_period(&[0.0; 500], 5, 200), None);
    }

    #[test]
    fn settings_round_trip_through_model_meta() {
        let a = PipelineSettings {
            hysteresis: 0.3,
            normalize_periods: 6.0,
            num_pulse_mean: 2,
            ..settings()
        };
        let mut model = SvmModel::constant(9, 1.0);
        model.meta = a.to_meta();
        assert_eq!(PipelineSettings::from_model(&model).unwrap(), a);
        model.meta.insert("hysteresis".into(), "abc".into());
        assert!(PipelineSettings::from_model(&model).is_err());
        // a 7-dim model without metadata implies the base feature set
        let bare = SvmModel::constant(7, 1.0);
        assert!(!PipelineSettings::from_model(&bare).unwrap().reconstructed_features);
    }
}
