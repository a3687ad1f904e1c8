//! Synthetic brushed-DC motor current with exact ground truth.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::Biquad;
use crate::error::{Error, Result};
use crate::estimate::pulses_per_revolution;
use crate::stream::{GroundTruth, SampleStream};

/// Ripple phase at t = 0. Half a period in, so the first pulse lands half
/// a ripple period after start.
pub const INITIAL_PHASE: f64 = 0.5;

/// Residual excursion of a ghost-masked pulse, relative to the original.
pub const GHOST_RESIDUAL: f64 = 0.15;

/// Width of an injected false pulse, in local ripple periods.
pub const FALSE_PULSE_WIDTH: f64 = 0.2;

/// Default noise RMS relative to the ripple RMS (about 20 dB SNR).
pub const DEFAULT_NOISE_RATIO: f64 = 0.1;

// Level the steep fall drops to, and the decay constant of that fall,
// both in units of the peak-to-peak ripple.
const STEEP_END: f64 = -0.2;
const STEEP_DECAY: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct MotorSpec {
    /// Pole count 2p.
    pub pole_pairs_times_two: u32,
    pub commutator_bars: u32,
    pub nominal_voltage: f64,
    pub no_load_current: f64,
    pub armature_resistance: f64,
    /// Back-EMF constant in V per r/min.
    pub emf_constant: f64,
    /// Lag of the DC level behind its steady-state value.
    pub current_time_constant: f64,
}

impl MotorSpec {
    /// EMG30 gearmotor (12 V, 2 poles, 3 bars).
    pub fn emg30() -> Self {
        MotorSpec {
            pole_pairs_times_two: 2,
            commutator_bars: 3,
            nominal_voltage: 12.0,
            no_load_current: 0.15,
            armature_resistance: 7.5,
            emf_constant: 12.0 / 9000.0,
            current_time_constant: 0.03,
        }
    }

    /// Mabuchi 719RE385 (2 poles, 5 bars).
    pub fn re385() -> Self {
        MotorSpec {
            pole_pairs_times_two: 2,
            commutator_bars: 5,
            nominal_voltage: 12.0,
            no_load_current: 0.3,
            armature_resistance: 1.9,
            emf_constant: 12.0 / 12_000.0,
            current_time_constant: 0.03,
        }
    }

    pub fn pulses_per_revolution(&self) -> Result<u32> {
        pulses_per_revolution(self.pole_pairs_times_two, self.commutator_bars)
    }

    pub fn validate(&self) -> Result<()> {
        self.pulses_per_revolution()?;
        for (name, v) in [
            ("nominal_voltage", self.nominal_voltage),
            ("no_load_current", self.no_load_current),
            ("armature_resistance", self.armature_resistance),
            ("emf_constant", self.emf_constant),
            ("current_time_constant", self.current_time_constant),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Rotor frequency at which back-EMF equals the supply.
    fn free_speed(&self) -> f64 {
        self.nominal_voltage / self.emf_constant
    }

    /// Steady DC level at a given speed: friction load grows with speed.
    pub fn steady_current(&self, rpm: f64) -> f64 {
        self.no_load_current * (1.0 + rpm / self.free_speed())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RippleShape {
    pub rise_fraction: f64,
    pub steep_fall_fraction: f64,
    pub slight_fall_fraction: f64,
    /// Peak-to-peak ripple over the DC level.
    pub ripple_amplitude_ratio: f64,
}

impl Default for RippleShape {
    fn default() -> Self {
        RippleShape {
            rise_fraction: 0.55,
            steep_fall_fraction: 0.10,
            slight_fall_fraction: 0.35,
            ripple_amplitude_ratio: 0.08,
        }
    }
}

impl RippleShape {
    pub fn validate(&self) -> Result<()> {
        let f = [self.rise_fraction, self.steep_fall_fraction, self.slight_fall_fraction];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("ripple fractions must lie in [0, 1], got {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("ripple fractions must sum to 1, got {f:?}")));
        }
        if self.rise_fraction <= 0.0 {
            return Err(Error::invalid("rise_fraction must be positive"));
        }
        if !(self.ripple_amplitude_ratio.is_finite() && self.ripple_amplitude_ratio > 0.0) {
            return Err(Error::invalid("ripple_amplitude_ratio must be positive"));
        }
        Ok(())
    }

    /// One period of unit peak-to-peak ripple, before mean removal. `q` is
    /// the phase in [0, 1) measured from the trough; the peak is at
    /// `q = rise_fraction`.
    fn raw(&self, q: f64) -> f64 {
        let rise = self.rise_fraction;
        let steep = self.steep_fall_fraction;
        if q < rise {
            return -0.5 + q / rise;
        }
        let q = q - rise;
        if q < steep {
            let u = q / steep;
            let tail = (-1.0 / STEEP_DECAY).exp();
            let frac = ((-u / STEEP_DECAY).exp() - tail) / (1.0 - tail);
            return STEEP_END + (0.5 - STEEP_END) * frac;
        }
        let q = q - steep;
        let start = if steep > 0.0 { STEEP_END } else { 0.5 };
        if self.slight_fall_fraction <= 0.0 {
            return start;
        }
        start + (-0.5 - start) * (q / self.slight_fall_fraction).min(1.0)
    }
}

/// Mean-free ripple waveform for a given shape.
#[derive(Clone, Debug)]
pub struct Waveform {
    shape: RippleShape,
    mean: f64,
    rms: f64,
}

impl Waveform {
    pub fn new(shape: &RippleShape) -> Result<Self> {
        shape.validate()?;
        const GRID: usize = 20_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..GRID {
            let v = shape.raw((i as f64 + 0.5) / GRID as f64);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / GRID as f64;
        let rms = (s2 / GRID as f64 - mean * mean).sqrt();
        Ok(Waveform {
            shape: shape.clone(),
            mean,
            rms,
        })
    }

    /// Value at ripple phase `phi`; pulses sit at integer phase.
    pub fn at_phase(&self, phi: f64) -> f64 {
        let q = (phi + self.shape.rise_fraction).rem_euclid(1.0);
        self.shape.raw(q) - self.mean
    }

    pub fn trough(&self) -> f64 {
        -0.5 - self.mean
    }

    /// RMS of one period at unit peak-to-peak.
    pub fn rms(&self) -> f64 {
        self.rms
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProfileKind {
    Constant,
    LinearRamp,
    Step,
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Constant => "constant",
            ProfileKind::LinearRamp => "linear_ramp",
            ProfileKind::Step => "step",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub kind: ProfileKind,
    pub start_rpm: f64,
    pub end_rpm: f64,
}

impl Segment {
    pub fn constant(duration: f64, rpm: f64) -> Self {
        Segment {
            duration,
            kind: ProfileKind::Constant,
            start_rpm: rpm,
            end_rpm: rpm,
        }
    }

    pub fn ramp(duration: f64, start_rpm: f64, end_rpm: f64) -> Self {
        Segment {
            duration,
            kind: ProfileKind::LinearRamp,
            start_rpm,
            end_rpm,
        }
    }

    /// Speed commanded from `start_rpm` to `end_rpm` at the segment start;
    /// the shaft follows with the profile's mechanical time constant.
    pub fn step(duration: f64, start_rpm: f64, end_rpm: f64) -> Self {
        Segment {
            duration,
            kind: ProfileKind::Step,
            start_rpm,
            end_rpm,
        }
    }

    /// Speed and revolutions turned, `t` seconds into the segment.
    fn at(&self, t: f64, tau: f64) -> (f64, f64) {
        let (a, b) = (self.start_rpm, self.end_rpm);
        match self.kind {
            ProfileKind::Constant => (a, a * t / 60.0),
            ProfileKind::LinearRamp => {
                let slope = (b - a) / self.duration;
                (a + slope * t, (a * t + 0.5 * slope * t * t) / 60.0)
            }
            ProfileKind::Step => {
                let decay = (-t / tau).exp();
                let rpm = b + (a - b) * decay;
                (rpm, (b * t + (a - b) * tau * (1.0 - decay)) / 60.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfile {
    pub segments: Vec<Segment>,
    /// Mechanical time constant of the shaft response to a step.
    pub step_time_constant: f64,
}

impl SpeedProfile {
    pub fn new(segments: Vec<Segment>) -> Self {
        SpeedProfile {
            segments,
            step_time_constant: 0.025,
        }
    }

    pub fn constant(duration: f64, rpm: f64) -> Self {
        Self::new(vec![Segment::constant(duration, rpm)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("speed profile has no segments"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::invalid(format!("segment {i}: duration must be positive")));
            }
            if !(s.start_rpm > 0.0 && s.end_rpm > 0.0 && s.start_rpm.is_finite() && s.end_rpm.is_finite()) {
                return Err(Error::invalid(format!("segment {i}: speeds must be positive")));
            }
            if s.kind == ProfileKind::Constant && s.start_rpm != s.end_rpm {
                return Err(Error::invalid(format!("segment {i}: constant segment with two speeds")));
            }
        }
        if !(self.step_time_constant > 0.0) {
            return Err(Error::invalid("step_time_constant must be positive"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn max_rpm(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| [s.start_rpm, s.end_rpm])
            .fold(0.0, f64::max)
    }

    pub fn min_rpm(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| [s.start_rpm, s.end_rpm])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn kinds(&self) -> Vec<ProfileKind> {
        let mut k: Vec<_> = self.segments.iter().map(|s| s.kind).collect();
        k.sort();
        k.dedup();
        k
    }

    /// Sampler for `(rpm, revolutions)` at increasing times.
    fn cursor(&self) -> ProfileCursor<'_> {
        ProfileCursor {
            profile: self,
            seg: 0,
            seg_start: 0.0,
            revs_before: 0.0,
        }
    }
}

struct ProfileCursor<'a> {
    profile: &'a SpeedProfile,
    seg: usize,
    seg_start: f64,
    revs_before: f64,
}

impl ProfileCursor<'_> {
    fn at(&mut self, t: f64) -> (f64, f64) {
        let segs = &self.profile.segments;
        let tau = self.profile.step_time_constant;
        while self.seg + 1 < segs.len() && t >= self.seg_start + segs[self.seg].duration {
            let s = &segs[self.seg];
            self.revs_before += s.at(s.duration, tau).1;
            self.seg_start += s.duration;
            self.seg += 1;
        }
        let s = &segs[self.seg];
        let (rpm, revs) = s.at(t - self.seg_start, tau);
        (rpm, self.revs_before + revs)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorruptionScript {
    pub false_pulse_times: Vec<f64>,
    pub ghost_pulse_times: Vec<f64>,
    /// Noise RMS in amperes; `None` picks about 20 dB under the ripple.
    pub noise_rms: Option<f64>,
    /// Noise bandwidth in Hz; `None` keeps it at a quarter of fs.
    pub noise_bandwidth: Option<f64>,
}

impl CorruptionScript {
    pub fn clean() -> Self {
        CorruptionScript {
            noise_rms: Some(0.0),
            ..Default::default()
        }
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        for (what, times) in [("false", &self.false_pulse_times), ("ghost", &self.ghost_pulse_times)] {
            if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t < duration)) {
                return Err(Error::invalid(format!(
                    "{what} pulse time {t} s lies outside the {duration} s run"
                )));
            }
        }
        if let Some(rms) = self.noise_rms {
            if !(rms.is_finite() && rms >= 0.0) {
                return Err(Error::invalid(format!("noise_rms must be >= 0, got {rms}")));
            }
        }
        if let Some(bw) = self.noise_bandwidth {
            if !(bw.is_finite() && bw > 0.0) {
                return Err(Error::invalid(format!("noise_bandwidth must be positive, got {bw}")));
            }
        }
        Ok(())
    }
}

/// Sample count for a run: ceil(duration·fs), forgiving rounding noise in
/// the product.
pub fn sample_count(duration: f64, fs: f64) -> usize {
    let exact = duration * fs;
    let rounded = exact.round();
    if (exact - rounded).abs() <= 1e-9 * exact.max(1.0) {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

pub fn generate(
    spec: &MotorSpec,
    shape: &RippleShape,
    profile: &SpeedProfile,
    corruption: &CorruptionScript,
    fs: f64,
    seed: u64,
) -> Result<(SampleStream, GroundTruth)> {
    spec.validate()?;
    let wave = Waveform::new(shape)?;
    profile.validate()?;
    let duration = profile.duration();
    corruption.validate(duration)?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::invalid(format!("fs must be positive, got {fs}")));
    }
    let ppr = spec.pulses_per_revolution()? as f64;
    let max_ripple = profile.max_rpm() / 60.0 * ppr;
    if fs < 10.0 * max_ripple {
        return Err(Error::invalid(format!(
            "fs {fs} Hz is below 10x the {max_ripple} Hz peak ripple frequency"
        )));
    }

    let n = sample_count(duration, fs);
    let mut speed = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    // one extra phase sample so a crossing inside the last interval counts
    let mut phase = Vec::with_capacity(n + 1);
    let mut cursor = profile.cursor();
    for i in 0..=n {
        let (rpm, revs) = cursor.at(i as f64 / fs);
        phase.push(INITIAL_PHASE + revs * ppr);
        if i < n {
            speed.push(rpm);
            position.push(2.0 * PI * revs);
        }
    }

    // pulse k: whichever of the two samples straddling phase k carries the
    // larger clean ripple value
    let mut pulses = Vec::new();
    for i in 0..n {
        if phase[i].ceil() < phase[i + 1] {
            let later = i + 1 < n && wave.at_phase(phase[i + 1]) > wave.at_phase(phase[i]);
            pulses.push(if later { i + 1 } else { i });
        }
    }

    let alpha = 1.0 - (-1.0 / (fs * spec.current_time_constant)).exp();
    let mut dc = Vec::with_capacity(n);
    let mut level = spec.steady_current(speed.first().copied().unwrap_or(0.0));
    for &rpm in &speed {
        level += alpha * (spec.steady_current(rpm) - level);
        dc.push(level);
    }
    let ripple_pp: Vec<f64> = dc.iter().map(|d| shape.ripple_amplitude_ratio * d).collect();
    let mut ac: Vec<f64> = (0..n).map(|i| ripple_pp[i] * wave.at_phase(phase[i])).collect();

    for &t in &corruption.ghost_pulse_times {
        let Some(&k_idx) = nearest(&pulses, t * fs) else {
            continue;
        };
        let k = phase[k_idx].round();
        let from = k - shape.rise_fraction;
        let to = from + 1.0;
        let trough = wave.trough();
        for i in 0..n {
            if phase[i] >= from && phase[i] < to {
                let v = ac[i] / ripple_pp[i];
                ac[i] = ripple_pp[i] * (trough + GHOST_RESIDUAL * (v - trough));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &t in &corruption.false_pulse_times {
        let gain: f64 = rng.random_range(0.6..=1.0);
        let i0 = ((t * fs).round() as usize).min(n - 1);
        let ripple_hz = (speed[i0] / 60.0 * ppr).max(1e-9);
        let width = FALSE_PULSE_WIDTH / ripple_hz;
        let start = t - shape.rise_fraction * width;
        let lo = ((start * fs).ceil().max(0.0)) as usize;
        let hi = (((start + width) * fs).ceil() as usize).min(n);
        for i in lo..hi {
            let u = (i as f64 / fs - start) / width;
            // trough-to-peak bump that starts and ends at zero
            let bump = shape.raw(u) + 0.5;
            ac[i] += gain * ripple_pp[i0] * bump;
        }
    }

    let mean_dc = dc.iter().sum::<f64>() / n.max(1) as f64;
    let noise_rms = corruption
        .noise_rms
        .unwrap_or(DEFAULT_NOISE_RATIO * shape.ripple_amplitude_ratio * mean_dc * wave.rms());
    let noise = band_limited_noise(
        &mut rng,
        n,
        fs,
        corruption.noise_bandwidth.unwrap_or(fs / 4.0).min(0.45 * fs),
        noise_rms,
    );

    let current = (0..n).map(|i| dc[i] + ac[i] + noise[i]).collect();
    Ok((
        SampleStream::new(fs, current),
        GroundTruth {
            speed_rpm: speed,
            position_rad: position,
            pulse_indices: pulses,
        },
    ))
}

/// A stopped motor: the no-load DC level plus sensor noise, with no ripple
/// and no pulses. `noise_rms` defaults to the level `generate` would use
/// for the default ripple shape.
pub fn standstill(
    spec: &MotorSpec,
    duration: f64,
    noise_rms: Option<f64>,
    noise_bandwidth: Option<f64>,
    fs: f64,
    seed: u64,
) -> Result<(SampleStream, GroundTruth)> {
    spec.validate()?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::invalid(format!("fs must be positive, got {fs}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {duration}")));
    }
    let dc = spec.steady_current(0.0);
    let rms = match noise_rms {
        Some(r) if !(r.is_finite() && r >= 0.0) => {
            return Err(Error::invalid(format!("noise RMS must be non-negative, got {r}")))
        }
        Some(r) => r,
        None => {
            let shape = RippleShape::default();
            DEFAULT_NOISE_RATIO * shape.ripple_amplitude_ratio * dc * Waveform::new(&shape)?.rms()
        }
    };
    let n = sample_count(duration, fs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bandwidth = noise_bandwidth.unwrap_or(fs / 4.0).min(0.45 * fs);
    let noise = band_limited_noise(&mut rng, n, fs, bandwidth, rms);
    Ok((
        SampleStream::new(fs, noise.iter().map(|v| dc + v).collect()),
        GroundTruth {
            speed_rpm: vec![0.0; n],
            position_rad: vec![0.0; n],
            pulse_indices: Vec::new(),
        },
    ))
}

fn nearest(sorted: &[usize], x: f64) -> Option<&usize> {
    let pos = sorted.partition_point(|&v| (v as f64) < x);
    let after = sorted.get(pos);
    let before = pos.checked_sub(1).and_then(|p| sorted.get(p));
    match (before, after) {
        (Some(b), Some(a)) => Some(if x - *b as f64 <= *a as f64 - x { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Event times for a corruption script: `false_count` false pulses, each a
/// random 0.35..0.45 of a period after a true pulse (clear of its fall),
/// and `ghost_count` masked true pulses. Events sit at distinct pulses at least `spacing` pulses
/// apart, skipping the first `skip` pulses of the run.
pub fn scatter_events(
    truth: &GroundTruth,
    fs: f64,
    false_count: usize,
    ghost_count: usize,
    skip: usize,
    spacing: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spacing = spacing.max(1);
    let p = &truth.pulse_indices;
    // the last pulse has no following period to place a false pulse in
    let slots: Vec<usize> = (skip..p.len().saturating_sub(1)).step_by(spacing).collect();
    let wanted = false_count + ghost_count;
    if slots.len() < wanted {
        return Err(Error::invalid(format!(
            "run has room for {} corruption events, {wanted} requested",
            slots.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = rand::seq::index::sample(&mut rng, slots.len(), wanted)
        .into_iter()
        .map(|i| slots[i])
        .collect();
    let mut falses: Vec<f64> = chosen[..false_count]
        .iter()
        .map(|&k| {
            let frac: f64 = rng.random_range(0.35..=0.45);
            (p[k] as f64 + frac * (p[k + 1] - p[k]) as f64) / fs
        })
        .collect();
    let mut ghosts: Vec<f64> = chosen[false_count..].iter().map(|&k| p[k] as f64 / fs).collect();
    falses.sort_by(f64::total_cmp);
    ghosts.sort_by(f64::total_cmp);
    Ok((falses, ghosts))
}

/// Gaussian noise through a second-order lowpass, rescaled to the exact
/// requested RMS.
fn band_limited_noise(rng: &mut ChaCha8Rng, n: usize, fs: f64, bandwidth: f64, rms: f64) -> Vec<f64> {
    if rms == 0.0 || n == 0 {
        return vec![0.0; n];
    }
    let mut lp = Biquad::lowpass(fs, bandwidth, std::f64::consts::FRAC_1_SQRT_2);
    let raw: Vec<f64> = (0..n)
        .map(|_| lp.process(StandardNormal.sample(rng)))
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let actual = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if actual == 0.0 {
        return vec![0.0; n];
    }
    raw.iter().map(|v| (v - mean) * rms / actual).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clean(profile: &SpeedProfile, fs: f64) -> (SampleStream, GroundTruth) {
        generate(&MotorSpec::emg30(), &RippleShape::default(), profile, &CorruptionScript::clean(), fs, 1)
            .unwrap()
    }

    #[test]
    fn constant_speed_pulse_count() {
        let (s, t) = clean(&SpeedProfile::constant(1.0, 500.0), 5000.0);
        assert_eq!(s.len(), 5000);
        assert_eq!(t.pulse_count(), 50);
        let (s, t) = clean(&SpeedProfile::constant(2.0, 3000.0), 5000.0);
        assert_eq!(s.len(), 10_000);
        assert_eq!(t.pulse_count(), 600);
    }

    #[test]
    fn standstill_has_no_pulses() {
        let (s, t) = standstill(&MotorSpec::emg30(), 0.5, Some(0.01), None, 5000.0, 3).unwrap();
        assert_eq!(s.len(), 2500);
        assert_eq!(t.pulse_count(), 0);
        assert!(t.speed_rpm.iter().all(|v| *v == 0.0));
        let dc = MotorSpec::emg30().steady_current(0.0);
        let mean = s.current.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - dc).abs() < 1e-9);
        let rms = (s.current.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        assert!((rms - 0.01).abs() < 1e-9);
        assert!(standstill(&MotorSpec::emg30(), 0.0, None, None, 5000.0, 3).is_err());
    }

    #[test]
    fn sample_count_is_ceiling() {
        assert_eq!(sample_count(1.0, 5000.0), 5000);
        assert_eq!(sample_count(0.1, 3.0), 1);
        assert_eq!(sample_count(0.00021, 10_000.0), 3);
        assert_eq!(sample_count(0.7, 10.0), 7);
    }

    #[test]
    fn one_local_max_per_ripple_period() {
        let (s, t) = clean(&SpeedProfile::constant(1.0, 1000.0), 10_000.0);
        let x = &s.current;
        let maxima: Vec<usize> = (1..x.len() - 1)
            .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
            .collect();
        assert_eq!(maxima, t.pulse_indices);
    }

    #[test]
    fn truth_is_consistent() {
        let profile = SpeedProfile::new(vec![
            Segment::constant(0.3, 800.0),
            Segment::ramp(0.5, 800.0, 1500.0),
            Segment::step(0.4, 1500.0, 700.0),
        ]);
        let (_, t) = clean(&profile, 8000.0);
        assert!(t.position_rad.windows(2).all(|w| w[1] >= w[0]));
        assert!(t.pulse_indices.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(t.position_rad[0], 0.0);
        // pulse k sits within one sample of ripple phase k
        let step = 1500.0 / 60.0 * 6.0 / 8000.0;
        for (k, &i) in t.pulse_indices.iter().enumerate() {
            let phase = t.position_rad[i] / (2.0 * PI) * 6.0 + INITIAL_PHASE;
            assert!((phase - (k + 1) as f64).abs() <= step + 1e-9, "pulse {k}: phase {phase}");
        }
        // ramp ends where it should and step settles at the target
        let at = |time: f64| t.speed_rpm[(time * 8000.0) as usize];
        assert!((at(0.7999) - 1500.0).abs() < 1.0);
        assert!((at(1.199) - 700.0).abs() < 1.0);
    }

    #[test]
    fn profile_speed_is_continuous_through_a_ramp() {
        let p = SpeedProfile::new(vec![Segment::constant(1.0, 600.0), Segment::ramp(1.0, 600.0, 1200.0)]);
        let mut c = p.cursor();
        let (r1, v1) = c.at(1.0 - 1e-9);
        let (r2, v2) = c.at(1.0);
        assert!((r1 - r2).abs() < 1e-3);
        assert!((v1 - v2).abs() < 1e-6);
        // average speed 900 r/min over the ramp
        let (_, total) = c.at(2.0);
        assert!((total - 10.0 - 15.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_line_at_ripple_frequency() {
        let fs = 10_000.0;
        for rpm in [500.0, 1800.0, 4000.0] {
            let (s, _) = clean(&SpeedProfile::constant(1.0, rpm), fs);
            let mean = s.current.iter().sum::<f64>() / s.len() as f64;
            let expected = rpm / 60.0 * 6.0;
            // scan a wide band and locate the strongest line
            let (mut best_f, mut best_p) = (0.0, 0.0);
            let mut f = 0.3 * expected;
            while f < 3.0 * expected {
                let w = 2.0 * PI * f / fs;
                let (re, im) = s.current.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| {
                    (re + (v - mean) * (w * i as f64).cos(), im + (v - mean) * (w * i as f64).sin())
                });
                let p = re * re + im * im;
                if p > best_p {
                    best_p = p;
                    best_f = f;
                }
                f += 0.01 * expected;
            }
            assert!((best_f - expected).abs() <= 0.05 * expected, "{rpm}: {best_f} vs {expected}");
        }
    }

    #[test]
    fn aliasing_guard() {
        let r = generate(
            &MotorSpec::emg30(),
            &RippleShape::default(),
            &SpeedProfile::constant(1.0, 6000.0),
            &CorruptionScript::default(),
            50.0,
            0,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        // exactly 10x is accepted
        let ok = generate(
            &MotorSpec::emg30(),
            &RippleShape::default(),
            &SpeedProfile::constant(0.1, 1000.0),
            &CorruptionScript::default(),
            1000.0,
            0,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn scripted_times_must_be_in_range() {
        for script in [
            CorruptionScript {
                false_pulse_times: vec![1.0],
                ..Default::default()
            },
            CorruptionScript {
                ghost_pulse_times: vec![-0.1],
                ..Default::default()
            },
        ] {
            let r = generate(
                &MotorSpec::emg30(),
                &RippleShape::default(),
                &SpeedProfile::constant(1.0, 1000.0),
                &script,
                5000.0,
                0,
            );
            assert!(r.is_err());
        }
    }

    #[test]
    fn invalid_inputs() {
        let mut spec = MotorSpec::emg30();
        spec.pole_pairs_times_two = 3;
        assert!(spec.validate().is_err());
        let shape = RippleShape {
            rise_fraction: 0.5,
            ..Default::default()
        };
        assert!(shape.validate().is_err());
        assert!(SpeedProfile::constant(1.0, 0.0).validate().is_err());
        assert!(SpeedProfile::constant(0.0, 100.0).validate().is_err());
        assert!(SpeedProfile::new(vec![]).validate().is_err());
    }

    #[test]
    fn ghost_masks_and_false_pulse_adds() {
        let fs = 10_000.0;
        let profile = SpeedProfile::constant(0.5, 1000.0);
        let (base, truth) = clean(&profile, fs);
        let k = truth.pulse_indices[20];
        let t_ghost = k as f64 / fs;
        let t_false = (truth.pulse_indices[30] as f64 + 0.3 * fs / 100.0) / fs;
        let script = CorruptionScript {
            false_pulse_times: vec![t_false],
            ghost_pulse_times: vec![t_ghost],
            noise_rms: Some(0.0),
            noise_bandwidth: None,
        };
        let (s, t) =
            generate(&MotorSpec::emg30(), &RippleShape::default(), &profile, &script, fs, 1).unwrap();
        assert_eq!(t, truth);
        let wave = Waveform::new(&RippleShape::default()).unwrap();
        let dc = MotorSpec::emg30().steady_current(1000.0);
        let pp = 0.08 * dc;
        // ghost peak keeps at most 20 % of its trough-to-peak excursion
        let trough = dc + pp * wave.trough();
        let excursion = (s.current[k] - trough) / (base.current[k] - trough);
        assert!(excursion <= 0.2 + 1e-12, "{excursion}");
        // false bump reaches at least 60 % of a ripple above the baseline
        let i = (t_false * fs).round() as usize;
        assert!(s.current[i] - base.current[i] >= 0.6 * pp * 0.99);
    }

    #[test]
    fn scattered_events_are_spaced_and_placed() {
        let fs = 10_000.0;
        let (_, truth) = clean(&SpeedProfile::constant(1.0, 1000.0), fs);
        let (f, g) = scatter_events(&truth, fs, 5, 3, 10, 4, 9).unwrap();
        assert_eq!((f.len(), g.len()), (5, 3));
        let p = &truth.pulse_indices;
        for t in &f {
            let x = t * fs;
            let k = p.partition_point(|&v| (v as f64) <= x) - 1;
            let frac = (x - p[k] as f64) / (p[k + 1] - p[k]) as f64;
            assert!((0.35..=0.45).contains(&frac), "{frac}");
            assert!(k >= 10);
        }
        for t in &g {
            assert!(p.contains(&((t * fs).round() as usize)));
        }
        assert_eq!(scatter_events(&truth, fs, 5, 3, 10, 4, 9).unwrap(), (f, g));
        assert!(scatter_events(&truth, fs, 100, 100, 0, 4, 9).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn truth_ignores_corruption(
            rpm in 300.0f64..3000.0,
            falses in proptest::collection::vec(0.0f64..0.4, 0..4),
            ghosts in proptest::collection::vec(0.0f64..0.4, 0..4),
            seed in any::<u64>(),
        ) {
            let profile = SpeedProfile::constant(0.4, rpm);
            let (_, plain) = clean(&profile, 5000.0);
            let script = CorruptionScript {
                false_pulse_times: falses,
                ghost_pulse_times: ghosts,
                noise_rms: None,
                noise_bandwidth: Some(800.0),
            };
            let run = || generate(&MotorSpec::emg30(), &RippleShape::default(), &profile, &script, 5000.0, seed).unwrap();
            let (s1, t1) = run();
            let (s2, t2) = run();
            prop_assert_eq!(&t1, &plain);
            prop_assert_eq!(t1, t2);
            prop_assert!(s1.current.iter().zip(&s2.current).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
