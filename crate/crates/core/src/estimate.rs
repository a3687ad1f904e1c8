//! Pulse bookkeeping: speed from recent inter-pulse distances and position
//! from the pulse count.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::svm::{Label, SvmModel};

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Commutation pulses per shaft turn for a motor with `two_p` poles and
/// `bars` commutator bars.
pub fn pulses_per_revolution(two_p: u32, bars: u32) -> Result<u32> {
    if two_p < 2 || !two_p.is_multiple_of(2) {
        return Err(Error::invalid(format!("pole count must be even and >= 2, got {two_p}")));
    }
    if bars < 3 {
        return Err(Error::invalid(format!("commutator bar count must be >= 3, got {bars}")));
    }
    Ok(two_p * bars / gcd(two_p, bars))
}

pub fn detect_pulse(fv: &FeatureVector, model: &SvmModel) -> Result<bool> {
    Ok(model.decide(&fv.to_vec())? == Label::Positive)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRecord {
    pub sample_index: usize,
    pub pulse: bool,
    /// Present only on samples where a pulse completed enough intervals.
    pub speed_rpm: Option<f64>,
    pub position_rad: f64,
}

#[derive(Clone, Debug)]
pub struct DetectorState {
    fs: f64,
    pulse_revolution: u32,
    num_pulse_mean: usize,
    /// Samples since the last pulse.
    d: u64,
    taus: VecDeque<u64>,
    ring_len: usize,
    /// Pulses seen by the speed path.
    speed_pulses: u64,
    /// Pulses counted by the position path.
    pulse_count: u64,
}

impl DetectorState {
    pub fn new(fs: f64, pulse_revolution: u32, num_pulse_mean: usize) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("fs must be positive, got {fs}")));
        }
        if pulse_revolution == 0 {
            return Err(Error::invalid("pulse_revolution must be positive"));
        }
        if num_pulse_mean == 0 {
            return Err(Error::invalid("num_pulse_mean must be at least 1"));
        }
        Ok(DetectorState {
            fs,
            pulse_revolution,
            num_pulse_mean,
            d: 0,
            taus: VecDeque::with_capacity(num_pulse_mean.max(16)),
            ring_len: num_pulse_mean.max(16),
            speed_pulses: 0,
            pulse_count: 0,
        })
    }

    pub fn pulse_count(&self) -> u64 {
        self.pulse_count
    }

    pub fn since_pulse(&self) -> u64 {
        self.d
    }

    /// Recent inter-pulse distances, oldest first.
    pub fn taus(&self) -> impl Iterator<Item = u64> + '_ {
        self.taus.iter().copied()
    }

    /// Speed in r/min implied by a mean inter-pulse distance.
    pub fn speed_from_mean_tau(&self, mean_tau: f64) -> f64 {
        self.fs / mean_tau * 60.0 / self.pulse_revolution as f64
    }

    pub fn update_speed(&mut self, pulse: bool) -> Option<f64> {
        self.d += 1;
        if !pulse {
            return None;
        }
        // the span before the first pulse is not a full interval
        let completed = self.speed_pulses > 0;
        self.speed_pulses += 1;
        let tau = std::mem::take(&mut self.d);
        if completed {
            if self.taus.len() == self.ring_len {
                self.taus.pop_front();
            }
            self.taus.push_back(tau);
        }
        if self.taus.len() < self.num_pulse_mean {
            return None;
        }
        let sum: u64 = self.taus.iter().rev().take(self.num_pulse_mean).sum();
        Some(self.fs * self.num_pulse_mean as f64 / sum as f64 * 60.0 / self.pulse_revolution as f64)
    }

    pub fn update_position(&mut self, pulse: bool) -> f64 {
        if pulse {
            self.pulse_count += 1;
        }
        self.position()
    }

    pub fn position(&self) -> f64 {
        2.0 * PI * self.pulse_count as f64 / self.pulse_revolution as f64
    }

    pub fn step(&mut self, sample_index: usize, pulse: bool) -> EstimateRecord {
        let speed_rpm = self.update_speed(pulse);
        let position_rad = self.update_position(pulse);
        EstimateRecord {
            sample_index,
            pulse,
            speed_rpm,
            position_rad,
        }
    }
}

/// Estimates for a known pulse train; used for the oracle-detector check
/// and by the training loop's teacher-forced runs.
pub fn estimate_from_pulses(
    len: usize,
    pulses: &[usize],
    fs: f64,
    pulse_revolution: u32,
    num_pulse_mean: usize,
) -> Result<Vec<EstimateRecord>> {
    let mut det = DetectorState::new(fs, pulse_revolution, num_pulse_mean)?;
    let mut next = pulses.iter().peekable();
    Ok((0..len)
        .map(|i| {
            let hit = next.next_if(|&&p| p == i).is_some();
            det.step(i, hit)
        })
        .collect())
}
