//! Front-end conditioning: linear-phase bandpass, the period-keyed filter
//! bank, and running normalization.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stream::SampleStream;

pub const NORMALIZE_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FrontendConfig {
    pub fs: f64,
    pub fc_low: f64,
    pub fc_up: f64,
    /// Bandpass length; must be odd.
    pub taps: usize,
    /// Future samples any stage may look at.
    pub delay: usize,
    pub filter_bank_enabled: bool,
    pub bank_band_count: usize,
}

impl FrontendConfig {
    pub fn new(fs: f64, fc_low: f64, fc_up: f64) -> Self {
        FrontendConfig {
            fs,
            fc_low,
            fc_up,
            taps: 101,
            delay: 50,
            filter_bank_enabled: false,
            bank_band_count: 4,
        }
    }

    /// Cutoffs and filter length sized for ripple between the two
    /// frequencies: the low cutoff sits an octave under the slowest ripple
    /// and the filter is long enough for its transition band to clear it.
    pub fn for_ripple_range(fs: f64, min_ripple_hz: f64, max_ripple_hz: f64) -> Result<Self> {
        if !(min_ripple_hz > 0.0 && max_ripple_hz >= min_ripple_hz) {
            return Err(Error::invalid(format!(
                "ripple range {min_ripple_hz}..{max_ripple_hz} Hz is not increasing and positive"
            )));
        }
        let fc_low = 0.5 * min_ripple_hz;
        let fc_up = (2.0 * max_ripple_hz).min(0.45 * fs);
        let mut taps = (3.5 * fs / min_ripple_hz).ceil() as usize;
        taps = taps.max(101) | 1;
        let cfg = FrontendConfig {
            fs,
            fc_low,
            fc_up,
            taps,
            delay: taps / 2,
            filter_bank_enabled: false,
            bank_band_count: 4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::invalid(format!("fs must be positive, got {}", self.fs)));
        }
        if !(self.fc_low > 0.0 && self.fc_low < self.fc_up && self.fc_up < self.fs / 2.0) {
            return Err(Error::invalid(format!(
                "cutoffs must satisfy 0 < fc_low < fc_up < fs/2 (got {} / {} at fs {})",
                self.fc_low, self.fc_up, self.fs
            )));
        }
        if self.delay < 1 {
            return Err(Error::invalid("delay must be at least 1 sample"));
        }
        if self.taps < 3 || self.taps.is_multiple_of(2) {
            return Err(Error::invalid(format!("taps must be odd and >= 3, got {}", self.taps)));
        }
        if self.taps / 2 > self.delay {
            return Err(Error::invalid(format!(
                "a {}-tap filter needs {} samples of lookahead but delay is {}",
                self.taps,
                self.taps / 2,
                self.delay
            )));
        }
        if self.bank_band_count == 0 {
            return Err(Error::invalid("bank_band_count must be at least 1"));
        }
        Ok(())
    }

    pub fn group_delay(&self) -> usize {
        self.taps / 2
    }
}

/// Windowed-sinc lowpass with unit DC gain.
fn lowpass_taps(len: usize, fc: f64, fs: f64) -> Vec<f64> {
    let half = (len / 2) as f64;
    let wc = 2.0 * fc / fs;
    let mut h: Vec<f64> = (0..len)
        .map(|k| {
            let m = k as f64 - half;
            let sinc = if m == 0.0 { 1.0 } else { (PI * wc * m).sin() / (PI * wc * m) };
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / (len - 1) as f64).cos();
            wc * sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Magnitude response of an FIR at `f`.
pub fn fir_gain(taps: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, &h)| {
        (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
    });
    re.hypot(im)
}

/// Taps of the bandpass: difference of two unit-DC lowpasses, scaled to
/// unit gain at the geometric band centre. DC gain is zero by construction.
pub fn bandpass_taps(cfg: &FrontendConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let up = lowpass_taps(cfg.taps, cfg.fc_up, cfg.fs);
    let low = lowpass_taps(cfg.taps, cfg.fc_low, cfg.fs);
    let mut h: Vec<f64> = up.iter().zip(&low).map(|(a, b)| a - b).collect();
    let centre = (cfg.fc_low * cfg.fc_up).sqrt();
    let g = fir_gain(&h, centre, cfg.fs);
    if g <= 0.0 {
        return Err(Error::invalid("bandpass has no gain at its centre; increase taps"));
    }
    h.iter_mut().for_each(|v| *v /= g);
    Ok(h)
}

/// Streaming bandpass. Output for input index `n` is available once input
/// `n + group_delay` has been pushed; the first sample is replicated into
/// the past so start-up carries no step.
#[derive(Clone, Debug)]
pub struct BandpassFir {
    taps: Vec<f64>,
    history: VecDeque<f64>,
    primed: bool,
}

impl BandpassFir {
    pub fn new(cfg: &FrontendConfig) -> Result<Self> {
        let taps = bandpass_taps(cfg)?;
        Ok(BandpassFir {
            history: VecDeque::with_capacity(taps.len()),
            taps,
            primed: false,
        })
    }

    pub fn group_delay(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Push one input; returns the output aligned `group_delay` samples back
    /// once the filter has seen that much lookahead.
    pub fn push(&mut self, x: f64) -> Option<f64> {
        let h = self.group_delay();
        if !self.primed {
            // x[-h..0] = x[0]
            self.history.extend(std::iter::repeat_n(x, h));
            self.primed = true;
        }
        self.history.push_back(x);
        if self.history.len() > self.taps.len() {
            self.history.pop_front();
        }
        if self.history.len() < self.taps.len() {
            return None;
        }
        // newest sample meets taps[0]
        let y = self
            .taps
            .iter()
            .zip(self.history.iter().rev())
            .map(|(h, x)| h * x)
            .sum();
        Some(y)
    }

    /// Drain the outputs still owed by replicating the final input.
    pub fn flush(&mut self) -> Vec<f64> {
        let Some(&last) = self.history.back() else {
            return Vec::new();
        };
        (0..self.group_delay()).filter_map(|_| self.push(last)).collect()
    }
}

/// Output of the batch bandpass. Samples are already shifted back by the
/// group delay, so index `n` of `stream` lines up with input index `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bandpassed {
    pub stream: SampleStream,
    pub group_delay: usize,
}

pub fn bandpass(stream: &SampleStream, cfg: &FrontendConfig) -> Result<Bandpassed> {
    if (stream.fs - cfg.fs).abs() > 1e-9 * cfg.fs {
        return Err(Error::invalid(format!(
            "stream fs {} does not match front-end fs {}",
            stream.fs, cfg.fs
        )));
    }
    let taps = bandpass_taps(cfg)?;
    let h = taps.len() / 2;
    let x = &stream.current;
    let n = x.len();
    if n == 0 {
        return Ok(Bandpassed {
            stream: SampleStream::new(stream.fs, Vec::new()),
            group_delay: h,
        });
    }
    // mirror the ends; unlike repeating the end sample this keeps the
    // local mean, so the edges add no step transient
    let mut padded = Vec::with_capacity(n + 2 * h);
    padded.extend((1..=h).rev().map(|k| x[k.min(n - 1)]));
    padded.extend_from_slice(x);
    padded.extend((1..=h).map(|k| x[(n - 1).saturating_sub(k)]));
    // taps are symmetric, so correlation and convolution agree
    let out = padded.windows(taps.len()).map(|w| w.iter().zip(&taps).map(|(a, b)| a * b).sum()).collect();
    Ok(Bandpassed {
        stream: SampleStream::new(stream.fs, out),
        group_delay: h,
    })
}

/// Direct-form-I second-order section.
#[derive(Clone, Debug, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn from_raw(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Biquad {
            b: [b0 / a0, b1 / a0, b2 / a0],
            a: [a1 / a0, a2 / a0],
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    pub fn lowpass(fs: f64, fc: f64, q: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * q);
        let c = w.cos();
        Self::from_raw((1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha)
    }

    pub fn highpass(fs: f64, fc: f64, q: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * q);
        let c = w.cos();
        Self::from_raw((1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha)
    }

    /// Put the section in the steady state it reaches under constant input `x`.
    pub fn settle(&mut self, x: f64) {
        let y = x * self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1]);
        self.x1 = x;
        self.x2 = x;
        self.y1 = y;
        self.y2 = y;
    }

    /// Constant 0 dB peak gain bandpass.
    pub fn bandpass(fs: f64, f0: f64, q: f64) -> Self {
        let w = 2.0 * PI * f0 / fs;
        let alpha = w.sin() / (2.0 * q);
        let c = w.cos();
        Self::from_raw(alpha, 0.0, -alpha, 1.0 + alpha, -2.0 * c, 1.0 - alpha)
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x1 + self.b[2] * self.x2
            - self.a[0] * self.y1
            - self.a[1] * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }
}

/// Log-spaced second-order bands between the front-end cutoffs. Only the
/// band holding the current ripple estimate filters a given sample.
#[derive(Clone, Debug)]
pub struct FilterBank {
    fs: f64,
    edges: Vec<f64>,
    bands: Vec<Biquad>,
    enabled: bool,
    active: Option<usize>,
}

impl FilterBank {
    pub fn new(cfg: &FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let count = cfg.bank_band_count;
        let ratio = (cfg.fc_up / cfg.fc_low).powf(1.0 / count as f64);
        let edges: Vec<f64> = (0..=count).map(|i| cfg.fc_low * ratio.powi(i as i32)).collect();
        let bands = edges
            .windows(2)
            .map(|e| {
                let centre = (e[0] * e[1]).sqrt();
                let q = centre / (e[1] - e[0]);
                Biquad::bandpass(cfg.fs, centre, q)
            })
            .collect();
        Ok(FilterBank {
            fs: cfg.fs,
            edges,
            bands,
            enabled: cfg.filter_bank_enabled,
            active: None,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn band_for(&self, period: f64) -> usize {
        let f = self.fs / period;
        let last = self.bands.len() - 1;
        self.edges[1..]
            .iter()
            .position(|&hi| f < hi)
            .unwrap_or(last)
    }

    pub fn active_band(&self) -> Option<usize> {
        self.active
    }

    pub fn process(&mut self, x: f64, period_estimate: Option<f64>) -> f64 {
        let period = match period_estimate {
            Some(p) if self.enabled && p > 0.0 => p,
            _ => {
                self.active = None;
                return x;
            }
        };
        let band = self.band_for(period);
        if self.active != Some(band) {
            self.bands[band].reset();
            self.active = Some(band);
        }
        self.bands[band].process(x)
    }
}

/// Batch filter bank with a fixed period estimate.
pub fn filter_bank(
    stream: &SampleStream,
    cfg: &FrontendConfig,
    last_period_estimate: Option<f64>,
) -> Result<SampleStream> {
    let mut bank = FilterBank::new(cfg)?;
    let out = stream
        .current
        .iter()
        .map(|&x| bank.process(x, last_period_estimate))
        .collect();
    Ok(SampleStream::new(stream.fs, out))
}

/// Exponentially weighted running mean/std normalizer.
#[derive(Clone, Debug)]
pub struct Normalizer {
    window: f64,
    mean: f64,
    var: f64,
    count: u64,
}

impl Normalizer {
    pub fn new(window: f64) -> Result<Self> {
        if !(window >= 2.0) {
            return Err(Error::invalid(format!("normalizer window must be >= 2, got {window}")));
        }
        Ok(Normalizer {
            window,
            mean: 0.0,
            var: 0.0,
            count: 0,
        })
    }

    pub fn set_window(&mut self, window: f64) {
        self.window = window.max(2.0);
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }

    /// Start from the statistics of a lead-in span instead of warming up
    /// sample by sample. A causal warm-up turns a monotone first half
    /// period into a flat plateau, hiding the first peak.
    pub fn prime(&mut self, lead: &[f64]) {
        if lead.is_empty() {
            return;
        }
        let n = lead.len() as f64;
        self.mean = lead.iter().sum::<f64>() / n;
        self.var = lead.iter().map(|v| (v - self.mean).powi(2)).sum::<f64>() / n;
        self.count = self.window.ceil() as u64;
    }

    pub fn push(&mut self, x: f64) -> f64 {
        // warm start: plain average until `window` samples have been seen
        let alpha = (1.0 / self.window).max(1.0 / (self.count + 1) as f64);
        self.count += 1;
        let diff = x - self.mean;
        self.mean += alpha * diff;
        self.var = (1.0 - alpha) * (self.var + alpha * diff * diff);
        (x - self.mean) / self.std().max(NORMALIZE_EPS)
    }
}

pub fn normalize(stream: &SampleStream, window: f64) -> Result<Vec<f64>> {
    let mut norm = Normalizer::new(window)?;
    Ok(stream.current.iter().map(|&x| norm.push(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const FS: f64 = 5000.0;

    fn cfg() -> FrontendConfig {
        FrontendConfig::new(FS, 200.0, 800.0)
    }

    fn tone(f: f64, n: usize, amp: f64) -> SampleStream {
        SampleStream::new(FS, (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / FS).sin()).collect())
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    // steady-state amplitude ratio, ignoring edges
    fn gain(out: &[f64], input: &[f64], skip: usize) -> f64 {
        let end = out.len() - skip;
        rms(&out[skip..end]) / rms(&input[skip..end])
    }

    #[test]
    fn passband_centre_tone_survives() {
        let c = cfg();
        let f = (c.fc_low * c.fc_up).sqrt();
        let x = tone(f, 4000, 1.0);
        let y = bandpass(&x, &c).unwrap();
        let g = gain(&y.stream.current, &x.current, 200);
        assert!(g >= 0.9, "centre gain {g}");
        assert!(g <= 1.1, "centre gain {g}");
    }

    #[test]
    fn dc_rejected_by_40_db() {
        let x = SampleStream::new(FS, vec![3.0; 2000]);
        let y = bandpass(&x, &cfg()).unwrap();
        let worst = y.stream.current.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 3.0 * 0.01, "dc leak {worst}");
    }

    #[test]
    fn twice_upper_cutoff_attenuated_20_db() {
        let c = cfg();
        let x = tone(2.0 * c.fc_up, 4000, 1.0);
        let y = bandpass(&x, &c).unwrap();
        let g = gain(&y.stream.current, &x.current, 200);
        assert!(g <= 0.1, "stopband gain {g}");
    }

    #[test]
    fn batch_output_is_aligned() {
        // an impulse comes back centred on its own index
        let mut v = vec![0.0; 400];
        v[200] = 1.0;
        let y = bandpass(&SampleStream::new(FS, v), &cfg()).unwrap();
        let peak = y
            .stream
            .current
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 200);
        assert_eq!(y.group_delay, 50);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.fc_low = 900.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.fc_up = 2600.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.delay = 10;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.taps = 100;
        assert!(c.validate().is_err());
        assert!(bandpass(&SampleStream::new(FS, vec![0.0; 10]), &{
            let mut c = cfg();
            c.fc_low = -1.0;
            c
        })
        .is_err());
    }

    #[test]
    fn ripple_range_sizing() {
        let c = FrontendConfig::for_ripple_range(20_000.0, 50.0, 600.0).unwrap();
        assert_eq!(c.fc_low, 25.0);
        assert_eq!(c.fc_up, 1200.0);
        assert_eq!(c.taps % 2, 1);
        assert!(c.taps >= 1400);
        assert_eq!(c.delay, c.taps / 2);
        // slowest ripple still passes
        let h = bandpass_taps(&c).unwrap();
        assert!(fir_gain(&h, 50.0, 20_000.0) > 0.9);
    }

    fn bank_cfg() -> FrontendConfig {
        let mut c = FrontendConfig::new(FS, 50.0, 800.0);
        c.filter_bank_enabled = true;
        c
    }

    #[test]
    fn filter_bank_keeps_ripple_and_drops_interferer() {
        let c = bank_cfg();
        let f_ripple = 141.0;
        let f_int = 707.0;
        let n = 20_000;
        let ripple = tone(f_ripple, n, 1.0);
        let inter = tone(f_int, n, 1.0);
        let period = FS / f_ripple;
        let yr = filter_bank(&ripple, &c, Some(period)).unwrap();
        let yi = filter_bank(&inter, &c, Some(period)).unwrap();
        let gr = gain(&yr.current, &ripple.current, 2000);
        let gi = gain(&yi.current, &inter.current, 2000);
        assert!(20.0 * gr.log10() >= -1.0, "ripple loss {} dB", 20.0 * gr.log10());
        assert!(20.0 * gi.log10() <= -15.0, "interferer {} dB", 20.0 * gi.log10());
    }

    #[test]
    fn filter_bank_passthrough_rules() {
        let x = tone(300.0, 500, 1.0);
        let mut off = bank_cfg();
        off.filter_bank_enabled = false;
        assert_eq!(filter_bank(&x, &off, Some(20.0)).unwrap(), x);
        assert_eq!(filter_bank(&x, &bank_cfg(), None).unwrap(), x);
    }

    #[test]
    fn one_band_active_at_a_time() {
        let c = bank_cfg();
        let mut bank = FilterBank::new(&c).unwrap();
        assert_eq!(bank.edges().len(), 5);
        for (period, band) in [(FS / 60.0, 0), (FS / 141.0, 1), (FS / 300.0, 2), (FS / 700.0, 3)] {
            bank.process(0.0, Some(period));
            assert_eq!(bank.active_band(), Some(band), "period {period}");
        }
        bank.process(0.0, None);
        assert_eq!(bank.active_band(), None);
        // estimates outside the band range clamp to the end bands
        assert_eq!(bank.band_for(FS / 10.0), 0);
        assert_eq!(bank.band_for(FS / 2000.0), 3);
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let out = normalize(&SampleStream::new(FS, vec![2.5; 500]), 40.0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_gaussian_passes_nearly_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w = 20_000.0;
        let out = normalize(&SampleStream::new(FS, x.clone()), w).unwrap();
        let warm = 3 * w as usize;
        let worst = out[warm..]
            .iter()
            .zip(&x[warm..])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst <= 0.05, "max deviation {worst}");
    }

    #[test]
    fn primed_normalizer_starts_in_steady_state() {
        let x: Vec<f64> = (0..400).map(|i| 3.0 + (2.0 * PI * i as f64 / 40.0).sin()).collect();
        let mut n = Normalizer::new(160.0).unwrap();
        n.prime(&x[..160]);
        assert!((n.mean() - 3.0).abs() < 1e-9);
        assert!((n.std() - 0.5f64.sqrt()).abs() < 1e-9);
        // the first peak stands out right away
        let z: Vec<f64> = x.iter().map(|&v| n.push(v)).collect();
        assert!(z[10] > 1.3 && z[10] > z[5] && z[10] > z[15]);
    }

    #[test]
    fn window_must_be_at_least_two() {
        assert!(Normalizer::new(1.5).is_err());
        assert!(Normalizer::new(2.0).is_ok());
    }

    proptest! {
        #[test]
        fn bandpass_is_linear(
            a in proptest::collection::vec(-5.0f64..5.0, 150..300),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let c = cfg();
            let ya = bandpass(&SampleStream::new(FS, a), &c).unwrap().stream.current;
            let yb = bandpass(&SampleStream::new(FS, b), &c).unwrap().stream.current;
            let ys = bandpass(&SampleStream::new(FS, sum), &c).unwrap().stream.current;
            for i in 0..ys.len() {
                prop_assert!((ys[i] - ya[i] - yb[i]).abs() <= 1e-9);
            }
        }

        #[test]
        fn bandpass_respects_lookahead(
            x in proptest::collection::vec(-5.0f64..5.0, 200..400),
            cut in 0usize..150,
        ) {
            let c = cfg();
            let full = bandpass(&SampleStream::new(FS, x.clone()), &c).unwrap().stream.current;
            let keep = x.len() - cut;
            let part = bandpass(&SampleStream::new(FS, x[..keep].to_vec()), &c).unwrap().stream.current;
            // outputs that only see inputs before the cut cannot change
            for n in 0..keep.saturating_sub(c.delay) {
                prop_assert_eq!(full[n], part[n]);
            }
        }

        #[test]
        fn normalization_ignores_scale_and_offset(
            x in proptest::collection::vec(-3.0f64..3.0, 100..300),
            scale in 0.01f64..100.0,
            offset in -50.0f64..50.0,
        ) {
            let w = 16.0;
            let base = normalize(&SampleStream::new(FS, x.clone()), w).unwrap();
            let moved: Vec<f64> = x.iter().map(|v| scale * v + offset).collect();
            let out = normalize(&SampleStream::new(FS, moved), w).unwrap();
            let warm = 4 * w as usize;
            let mut n = Normalizer::new(w).unwrap();
            for (i, v) in x.iter().enumerate() {
                n.push(*v);
                // skip samples where the guard on a near-zero std kicks in
                if i >= warm && scale * n.std() > 1e-3 {
                    prop_assert!((base[i] - out[i]).abs() <= 1e-6 * (1.0 + base[i].abs()));
                }
            }
        }
    }
}
