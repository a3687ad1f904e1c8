//! Comparator detectors that count one pulse per upward threshold
//! crossing. They serve as foils for the trained detector: a comparator
//! cannot tell a false pulse from a real one and cannot see a masked one.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::dsp::Biquad;
use crate::error::{Error, Result};
use crate::stream::SampleStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Threshold at the midpoint of the running maximum and minimum.
    MinMaxMean,
    /// Highpass to remove the DC level, then compare with zero.
    HighpassZero,
    /// Lowpass to track the DC level, compare the current with it.
    LowpassDc,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::MinMaxMean,
        BaselineKind::HighpassZero,
        BaselineKind::LowpassDc,
    ];

    /// Hysteresis as a fraction of the half amplitude. The min/max
    /// midpoint sits above the DC level of the asymmetric ripple, so it
    /// needs a narrower band for a shallow false pulse to cross it.
    pub fn default_hysteresis(self) -> f64 {
        match self {
            BaselineKind::MinMaxMean => 0.08,
            BaselineKind::HighpassZero => 0.25,
            BaselineKind::LowpassDc => 0.2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::MinMaxMean => "minmax_mean",
            BaselineKind::HighpassZero => "highpass_zero",
            BaselineKind::LowpassDc => "lowpass_dc",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline kind '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineParams {
    pub kind: BaselineKind,
    /// Ripple period in samples expected at the start of the stream.
    pub initial_period: f64,
    /// Running min/max window, in estimated ripple periods.
    pub window_periods: f64,
    /// Front-end low cutoff in Hz. The highpass sits here, the DC lowpass
    /// a quarter of it.
    pub fc_low: f64,
    /// Comparator hysteresis as a fraction of the running half amplitude.
    pub hysteresis: f64,
    /// After a counted crossing the comparator cannot re-arm for this many
    /// estimated periods, so noise on a slow edge counts once.
    pub blanking_periods: f64,
}

impl BaselineParams {
    pub fn new(kind: BaselineKind, initial_period: f64, fc_low: f64) -> Self {
        BaselineParams {
            kind,
            initial_period,
            window_periods: 2.0,
            fc_low,
            hysteresis: kind.default_hysteresis(),
            blanking_periods: 0.1,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.initial_period >= 2.0 && self.initial_period.is_finite()) {
            return Err(Error::invalid(format!(
                "baseline initial period must be >= 2 samples, got {}",
                self.initial_period
            )));
        }
        if !(self.window_periods > 0.0 && self.window_periods.is_finite()) {
            return Err(Error::invalid("baseline window must be a positive number of periods"));
        }
        if !(self.fc_low > 0.0 && self.fc_low < 0.5 * fs) {
            return Err(Error::invalid(format!(
                "baseline cutoff {} Hz must lie in (0, fs/2)",
                self.fc_low
            )));
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return Err(Error::invalid(format!(
                "baseline hysteresis must lie in [0, 1), got {}",
                self.hysteresis
            )));
        }
        if !(0.0..1.0).contains(&self.blanking_periods) {
            return Err(Error::invalid(format!(
                "baseline blanking must lie in [0, 1) periods, got {}",
                self.blanking_periods
            )));
        }
        Ok(())
    }
}

/// Sample indices of detected pulses.
pub fn baseline_detect(stream: &SampleStream, params: &BaselineParams) -> Result<Vec<usize>> {
    params.validate(stream.fs)?;
    let x = &stream.current;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let fs = stream.fs;
    // settle the filters on the level of the first window rather than on
    // the first sample, which sits anywhere on the ripple
    let lead = &x[..((params.window_periods * params.initial_period).ceil() as usize).clamp(1, x.len())];
    let level = lead.iter().sum::<f64>() / lead.len() as f64;
    let mut filter = match params.kind {
        BaselineKind::MinMaxMean => None,
        BaselineKind::HighpassZero => Some(Biquad::highpass(fs, params.fc_low, FRAC_1_SQRT_2)),
        BaselineKind::LowpassDc => Some(Biquad::lowpass(fs, params.fc_low / 4.0, FRAC_1_SQRT_2)),
    };
    if let Some(f) = filter.as_mut() {
        f.settle(level);
    }

    // comparator input, relative to its threshold
    let ac: Vec<f64> = x
        .iter()
        .map(|&x| match (params.kind, filter.as_mut()) {
            (BaselineKind::LowpassDc, Some(f)) => x - f.process(x),
            (_, Some(f)) => f.process(x),
            (_, None) => x,
        })
        .collect();

    let mut period = params.initial_period;
    let mut armed = false;
    let mut last: Option<usize> = None;
    let mut pulses = Vec::new();
    for (i, &v) in ac.iter().enumerate() {
        let span = (params.window_periods * period).ceil().max(2.0) as usize;
        // before the window has filled, the amplitude comes from the first
        // full window
        let window = if i + 1 >= span {
            &ac[i + 1 - span..=i]
        } else {
            &ac[..span.min(ac.len())]
        };
        let (lo, hi) = window
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        let centre = match params.kind {
            BaselineKind::MinMaxMean => 0.5 * (hi + lo),
            _ => 0.0,
        };
        let blind = last.is_some_and(|p| ((i - p) as f64) < params.blanking_periods * period);
        let band = params.hysteresis * 0.5 * (hi - lo);
        let d = v - centre;
        if armed && d > band {
            armed = false;
            if let Some(p) = last {
                let tau = (i - p) as f64;
                // a slow tracker so one extra or missing crossing barely moves it
                period = (0.8 * period + 0.2 * tau).clamp(params.initial_period / 8.0, params.initial_period * 8.0);
            }
            last = Some(i);
            pulses.push(i);
        } else if d < -band && !blind {
            armed = true;
        }
    }
    Ok(pulses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate, CorruptionScript, MotorSpec, RippleShape, SpeedProfile};

    const FS: f64 = 20_000.0;

    fn params(kind: BaselineKind, rpm: f64) -> BaselineParams {
        let ripple_hz = rpm / 60.0 * 6.0;
        BaselineParams::new(kind, FS / ripple_hz, 0.5 * 0.5 * ripple_hz)
    }

    fn run(rpm: f64, corruption: CorruptionScript) -> (Vec<usize>, SampleStream) {
        let motor = MotorSpec::emg30();
        let (s, t) = generate(
            &motor,
            &RippleShape::default(),
            &SpeedProfile::constant(1.0, rpm),
            &corruption,
            FS,
            3,
        )
        .unwrap();
        (t.pulse_indices, s)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("median".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn clean_stream_counts_match_truth() {
        for rpm in [800.0, 2500.0, 6000.0] {
            let (truth, s) = run(rpm, CorruptionScript::default());
            for k in BaselineKind::ALL {
                let n = baseline_detect(&s, &params(k, rpm)).unwrap().len();
                assert!(n.abs_diff(truth.len()) <= 1, "{k} at {rpm}: {n} vs {}", truth.len());
            }
        }
    }

    #[test]
    fn false_pulse_adds_and_ghost_removes_one() {
        let rpm = 1500.0;
        let (truth, _) = run(rpm, CorruptionScript::default());
        let gap = (truth[20] - truth[19]) as f64;
        let false_t = (truth[19] as f64 + 0.3 * gap) / FS;
        let ghost_t = truth[40] as f64 / FS;
        for (script, delta) in [
            (CorruptionScript { false_pulse_times: vec![false_t], ..Default::default() }, 1i64),
            (CorruptionScript { ghost_pulse_times: vec![ghost_t], ..Default::default() }, -1),
        ] {
            let (truth, s) = run(rpm, script);
            for k in BaselineKind::ALL {
                let n = baseline_detect(&s, &params(k, rpm)).unwrap().len() as i64;
                assert_eq!(n - truth.len() as i64, delta, "{k}");
            }
        }
    }

    #[test]
    fn bad_params_are_rejected() {
        let s = SampleStream::new(FS, vec![0.0; 10]);
        let mut p = params(BaselineKind::LowpassDc, 1000.0);
        p.hysteresis = 1.5;
        assert!(baseline_detect(&s, &p).is_err());
        let mut p = params(BaselineKind::HighpassZero, 1000.0);
        p.fc_low = FS;
        assert!(baseline_detect(&s, &p).is_err());
        let p = params(BaselineKind::MinMaxMean, 1000.0);
        assert!(baseline_detect(&SampleStream::new(FS, vec![]), &p).unwrap().is_empty());
    }
}
