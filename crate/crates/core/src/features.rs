//! Per-sample classifier features and ripple-period tracking.
//!
//! Feature order in the classifier input is
//! `[cZ, s, rE, fE, zCD, Lwt, Lwa]`, optionally followed by the two
//! reconstructed features `[lm, amp]`. The reconstructed pair has no
//! published definition; see [`FeatureConfig::reconstructed`].

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const BASE_DIM: usize = 7;
pub const EXTENDED_DIM: usize = 9;
pub const MIN_PERIOD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    /// Zero-comparator hysteresis threshold.
    pub hysteresis: f64,
    /// Permitted lookahead in samples.
    pub delay: usize,
    /// Ripple period assumed before the first measured interval.
    pub initial_period: f64,
    /// Longest period the tracker will accept (slowest ripple).
    pub max_period: f64,
    /// Append the local-maximum score and mean-relative amplitude. These
    /// two are reconstructions, not taken from a published definition.
    pub reconstructed: bool,
}

impl FeatureConfig {
    pub fn new(initial_period: f64, max_period: f64, delay: usize) -> Self {
        FeatureConfig {
            hysteresis: 0.4,
            delay,
            initial_period,
            max_period,
            reconstructed: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hysteresis.is_finite() && self.hysteresis >= 0.0) {
            return Err(Error::invalid(format!("hysteresis must be >= 0, got {}", self.hysteresis)));
        }
        if self.delay < 1 {
            return Err(Error::invalid("feature delay must be at least 1"));
        }
        if !(self.initial_period >= MIN_PERIOD && self.max_period >= self.initial_period) {
            return Err(Error::invalid(format!(
                "need {MIN_PERIOD} <= initial_period ({}) <= max_period ({})",
                self.initial_period, self.max_period
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        if self.reconstructed {
            EXTENDED_DIM
        } else {
            BASE_DIM
        }
    }

    /// Lookahead the extractor actually uses: the largest half-window it
    /// can ever need, capped by the delay budget.
    pub fn lookahead(&self) -> usize {
        if self.reconstructed {
            half_window(self.max_period, self.delay).max(1)
        } else {
            0
        }
    }
}

/// Half-width of the local window: min(0.4·N, delay), rounded down.
pub fn half_window(period: f64, delay: usize) -> usize {
    (0.4 * period).min(delay as f64).floor() as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub cz: bool,
    pub s: f64,
    pub re: bool,
    pub fe: bool,
    pub zcd: f64,
    pub lwt: f64,
    pub lwa: f64,
    /// Local-maximum score and mean-relative amplitude, when enabled.
    pub reconstructed: Option<[f64; 2]>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        if self.reconstructed.is_some() {
            EXTENDED_DIM
        } else {
            BASE_DIM
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let mut v = vec![b(self.cz), self.s, b(self.re), b(self.fe), self.zcd, self.lwt, self.lwa];
        if let Some(extra) = self.reconstructed {
            v.extend(extra);
        }
        v
    }
}

/// Hysteresis comparator against zero. Inside the dead band
/// `[-hysteresis, hysteresis]` the previous output is kept.
pub fn compare_with_zero(x: f64, cz_prev: bool, hysteresis: f64) -> bool {
    if cz_prev {
        x >= -hysteresis
    } else {
        x > hysteresis
    }
}

/// Normalized correlation of `window` (newest first: `window[k] = x[n-k]`)
/// against cos(2πk/N). An all-zero window scores 0.
pub fn shape_similarity(window: &[f64], period: f64) -> f64 {
    let template: Vec<f64> = (0..window.len())
        .map(|k| (2.0 * PI * k as f64 / period).cos())
        .collect();
    correlate(window, &template)
}

fn correlate(window: &[f64], template: &[f64]) -> f64 {
    let (mut num, mut ex, mut et) = (0.0, 0.0, 0.0);
    for (x, t) in window.iter().zip(template) {
        num += x * t;
        ex += x * x;
        et += t * t;
    }
    let den = (ex * et).sqrt();
    if den == 0.0 || !den.is_finite() {
        return 0.0;
    }
    (num / den).clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Counters {
    pub re: bool,
    pub fe: bool,
    pub zcd: f64,
    pub lwt: f64,
    pub lwa: f64,
}

/// Recurrent part of the extractor. Fields hold the values at n-1.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureState {
    pub cz: bool,
    pub re: bool,
    pub fe: bool,
    pub zcd: f64,
    pub lwt: f64,
    pub lwa: f64,
    pub pul: bool,
    /// Period estimate N in samples.
    pub period: f64,
    /// Samples since the last pulse.
    pub since_pulse: f64,
    /// Whether any pulse has been seen; the span before the first one is
    /// not a complete interval.
    pub seen_pulse: bool,
    pub x_prev: f64,
    pub hysteresis: f64,
    pub delay: usize,
    pub max_period: f64,
}

impl FeatureState {
    pub fn new(cfg: &FeatureConfig) -> Self {
        FeatureState {
            cz: false,
            re: false,
            fe: false,
            zcd: 0.0,
            // phase at start is unknown; assume half a period has elapsed
            lwt: 0.5,
            lwa: 0.0,
            pul: false,
            period: cfg.initial_period,
            since_pulse: 0.0,
            seen_pulse: false,
            x_prev: 0.0,
            hysteresis: cfg.hysteresis,
            delay: cfg.delay,
            max_period: cfg.max_period,
        }
    }

    pub fn half_window(&self) -> usize {
        half_window(self.period, self.delay)
    }

    /// Apply the comparator and store the result as the new previous value.
    pub fn compare_with_zero(&mut self, x: f64) -> bool {
        self.cz = compare_with_zero(x, self.cz, self.hysteresis);
        self.cz
    }

    /// Edge latches and counters at n, given x[n] and cZ[n]. Every term is
    /// zeroed in the sample after a pulse.
    pub fn edges_and_counters(&self, x: f64, cz: bool) -> Counters {
        let keep = !self.pul;
        let rising = cz && !self.cz;
        let falling = !cz && self.cz;
        let (re, fe, zcd, lwt, lwa) = if keep {
            let re = rising || self.re;
            (
                re,
                falling || self.fe,
                self.zcd + if re { 1.0 / self.period } else { 0.0 },
                self.lwt + 1.0 / self.period,
                self.lwa + (x - self.x_prev).abs(),
            )
        } else {
            (false, false, 0.0, 0.0, 0.0)
        };
        Counters { re, fe, zcd, lwt, lwa }
    }

    /// Advance the period tracker with pul[n-1]; returns N[n].
    pub fn update_period(&mut self, pul_prev: bool) -> f64 {
        if pul_prev {
            if self.seen_pulse {
                self.period = (self.since_pulse + 1.0).clamp(MIN_PERIOD, self.max_period);
            }
            self.seen_pulse = true;
            self.since_pulse = 0.0;
        } else {
            self.since_pulse += 1.0;
        }
        self.period
    }
}

/// Streaming extractor. Push normalized samples in order; once enough
/// lookahead has arrived it yields the features of the sample `lookahead`
/// positions back. After the classifier decides on that sample, report it
/// with [`FeatureExtractor::observe_pulse`] before the next push.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    state: FeatureState,
    /// Past samples (up to max_period), the current one, and lookahead.
    buf: VecDeque<f64>,
    lookahead: usize,
    pushed: usize,
    template: Vec<f64>,
    template_period: f64,
    pending_pulse: Option<bool>,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let lookahead = cfg.lookahead();
        let history = cfg.max_period.floor() as usize;
        // zeros stand in for the samples before the stream began
        let mut buf = VecDeque::with_capacity(history + lookahead + 1);
        buf.extend(std::iter::repeat_n(0.0, history));
        Ok(FeatureExtractor {
            cfg: cfg.clone(),
            state: FeatureState::new(cfg),
            buf,
            lookahead,
            pushed: 0,
            template: Vec::new(),
            template_period: f64::NAN,
            pending_pulse: Some(false),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn state(&self) -> &FeatureState {
        &self.state
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn period(&self) -> f64 {
        self.state.period
    }

    /// Index of the sample whose features the next push may produce.
    pub fn next_index(&self) -> Option<usize> {
        (self.pushed + 1).checked_sub(self.lookahead + 1)
    }

    pub fn push(&mut self, x: f64) -> Option<FeatureVector> {
        self.buf.push_back(x);
        self.pushed += 1;
        let history = self.cfg.max_period.floor() as usize;
        if self.buf.len() > history + self.lookahead + 1 {
            self.buf.pop_front();
        }
        if self.pushed <= self.lookahead {
            return None;
        }
        Some(self.extract())
    }

    /// Features for the sample `lookahead` positions behind the newest.
    fn extract(&mut self) -> FeatureVector {
        // an unreported decision counts as no pulse
        let pul_prev = self.pending_pulse.take().unwrap_or(false);
        let centre = self.buf.len() - 1 - self.lookahead;
        let x = self.buf[centre];

        // period tracking uses pul[n-1]; features at n use N[n-1]
        let period = self.state.period;
        self.state.pul = pul_prev;
        let cz = compare_with_zero(x, self.state.cz, self.state.hysteresis);
        let c = self.state.edges_and_counters(x, cz);
        let s = self.similarity(centre, period);
        let reconstructed = self.cfg.reconstructed.then(|| {
            let m = half_window(period, self.cfg.delay).max(1).min(self.lookahead);
            local_shape(&self.buf, centre, m)
        });

        self.state.update_period(pul_prev);
        self.state.cz = cz;
        self.state.re = c.re;
        self.state.fe = c.fe;
        self.state.zcd = c.zcd;
        self.state.lwt = c.lwt;
        self.state.lwa = c.lwa;
        self.state.x_prev = x;

        FeatureVector {
            cz,
            s,
            re: c.re,
            fe: c.fe,
            zcd: c.zcd,
            lwt: c.lwt,
            lwa: c.lwa,
            reconstructed,
        }
    }

    pub fn observe_pulse(&mut self, pulse: bool) {
        self.pending_pulse = Some(pulse);
    }

    fn similarity(&mut self, centre: usize, period: f64) -> f64 {
        let len = (period.floor() as usize).min(centre + 1);
        if period != self.template_period || self.template.len() < len {
            self.template = (0..period.floor() as usize)
                .map(|k| (2.0 * PI * k as f64 / period).cos())
                .collect();
            self.template_period = period;
        }
        let (mut num, mut ex, mut et) = (0.0, 0.0, 0.0);
        for k in 0..len {
            let x = self.buf[centre - k];
            let t = self.template[k];
            num += x * t;
            ex += x * x;
            et += t * t;
        }
        let den = (ex * et).sqrt();
        if den == 0.0 || !den.is_finite() {
            return 0.0;
        }
        (num / den).clamp(-1.0, 1.0)
    }
}

/// Local-maximum score and mean-relative amplitude over `centre ± m`.
fn local_shape(buf: &VecDeque<f64>, centre: usize, m: usize) -> [f64; 2] {
    let lo = centre.saturating_sub(m);
    let hi = (centre + m).min(buf.len() - 1);
    let x = buf[centre];
    let (mut max_other, mut min_all, mut max_all, mut sum) =
        (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for i in lo..=hi {
        let v = buf[i];
        if i != centre {
            max_other = max_other.max(v);
        }
        min_all = min_all.min(v);
        max_all = max_all.max(v);
        sum += v;
    }
    let range = max_all - min_all;
    // 1 at a strict window maximum, otherwise the relative drop below it
    let lm = if range <= 0.0 {
        0.0
    } else if x > max_other {
        1.0
    } else {
        ((x - max_other) / range).max(-1.0)
    };
    let mean = sum / (hi - lo + 1) as f64;
    let spread = (lo..=hi).fold(0.0f64, |m, i| m.max((buf[i] - mean).abs()));
    let amp = if spread > 0.0 { (x - mean) / spread } else { 0.0 };
    [lm, amp]
}
