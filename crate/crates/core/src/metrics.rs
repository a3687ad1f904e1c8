//! Error statistics of estimates against ground truth.

use crate::error::{Error, Result};
use crate::estimate::EstimateRecord;
use crate::stream::GroundTruth;

/// A detection counts as the same pulse as a truth pulse when it lies
/// within this fraction of the local truth period.
pub const MATCH_TOLERANCE: f64 = 0.35;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PulseMatch {
    /// (truth index, detection index) pairs.
    pub matched: Vec<(usize, usize)>,
    pub missed: Vec<usize>,
    pub spurious: Vec<usize>,
}

/// Pair detections with truth pulses, one-to-one, nearest first within
/// each truth pulse's tolerance window.
pub fn match_pulses(truth: &[usize], detected: &[usize]) -> PulseMatch {
    let mut out = PulseMatch::default();
    let mut used = vec![false; detected.len()];
    for (k, &t) in truth.iter().enumerate() {
        let gap = |a: Option<&usize>, b: Option<&usize>| match (a, b) {
            (Some(a), Some(b)) => Some(a.abs_diff(*b)),
            _ => None,
        };
        let left = k.checked_sub(1).and_then(|j| gap(truth.get(j), Some(&t)));
        let right = gap(Some(&t), truth.get(k + 1));
        let period = match (left, right) {
            (Some(l), Some(r)) => l.min(r),
            (Some(g), None) | (None, Some(g)) => g,
            (None, None) => usize::MAX / 4,
        };
        let w = (MATCH_TOLERANCE * period as f64).max(1.0) as usize;
        let lo = detected.partition_point(|&d| d + w < t);
        let best = detected[lo..]
            .iter()
            .enumerate()
            .take_while(|(_, &d)| d <= t + w)
            .filter(|(j, _)| !used[lo + j])
            .min_by_key(|(_, &d)| d.abs_diff(t))
            .map(|(j, _)| lo + j);
        match best {
            Some(j) => {
                used[j] = true;
                out.matched.push((t, detected[j]));
            }
            None => out.missed.push(t),
        }
    }
    out.spurious = detected
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(d, _)| *d)
        .collect();
    out
}

/// Speed error statistics:
/// signed mean and standard deviation, absolute and relative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpeedErrorStats {
    pub count: usize,
    pub mean_true_rpm: f64,
    pub mean_error_rpm: f64,
    pub std_error_rpm: f64,
    pub mean_error_pct: f64,
    pub std_error_pct: f64,
    pub mean_abs_error_pct: f64,
}

impl SpeedErrorStats {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (mut n, mut st, mut se, mut se2, mut sr, mut sr2, mut sa) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (est, truth) in pairs {
            let e = est - truth;
            let r = 100.0 * e / truth;
            n += 1;
            st += truth;
            se += e;
            se2 += e * e;
            sr += r;
            sr2 += r * r;
            sa += r.abs();
        }
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let std = |s: f64, s2: f64| (s2 / nf - (s / nf).powi(2)).max(0.0).sqrt();
        SpeedErrorStats {
            count: n,
            mean_true_rpm: st / nf,
            mean_error_rpm: se / nf,
            std_error_rpm: std(se, se2),
            mean_error_pct: sr / nf,
            std_error_pct: std(sr, sr2),
            mean_abs_error_pct: sa / nf,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamErrors {
    pub speed: SpeedErrorStats,
    /// Mean of |estimated − true| position over every sample.
    pub mean_position_error_rad: f64,
    pub final_position_error_rad: f64,
    pub truth_pulses: usize,
    pub detected_pulses: usize,
    pub pulses: PulseMatch,
    /// Sample with the largest |speed error|, if any speed was emitted.
    pub worst_speed_index: Option<usize>,
}

impl StreamErrors {
    pub fn count_error(&self) -> i64 {
        self.detected_pulses as i64 - self.truth_pulses as i64
    }
}

/// Compare per-sample estimates with ground truth. `records` must hold one
/// entry per sample.
pub fn stream_errors(records: &[EstimateRecord], truth: &GroundTruth) -> Result<StreamErrors> {
    if records.len() != truth.len() {
        return Err(Error::invalid(format!(
            "estimates cover {} samples but ground truth covers {}",
            records.len(),
            truth.len()
        )));
    }
    let mut worst: Option<(usize, f64)> = None;
    let mut pairs = Vec::new();
    let mut detected = Vec::new();
    let mut pos_sum = 0.0;
    for (i, r) in records.iter().enumerate() {
        if r.pulse {
            detected.push(i);
        }
        if let Some(v) = r.speed_rpm {
            let t = truth.speed_rpm[i];
            pairs.push((v, t));
            let e = (v - t).abs();
            if worst.is_none_or(|(_, w)| e > w) {
                worst = Some((i, e));
            }
        }
        pos_sum += (r.position_rad - truth.position_rad[i]).abs();
    }
    let n = records.len().max(1) as f64;
    Ok(StreamErrors {
        speed: SpeedErrorStats::from_pairs(pairs),
        mean_position_error_rad: pos_sum / n,
        final_position_error_rad: records
            .last()
            .map(|r| (r.position_rad - truth.position_rad[records.len() - 1]).abs())
            .unwrap_or(0.0),
        truth_pulses: truth.pulse_count(),
        detected_pulses: detected.len(),
        pulses: match_pulses(&truth.pulse_indices, &detected),
        worst_speed_index: worst.map(|(i, _)| i),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    FalsePulse,
    Ghost,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::FalsePulse => "false",
            EventKind::Ghost => "ghost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventOutcome {
    /// A detection fired at the event.
    Detected,
    /// A false pulse that produced no detection.
    Discarded,
    /// A ghost that produced no detection.
    Missed,
}

impl EventOutcome {
    pub fn name(self) -> &'static str {
        match self {
            EventOutcome::Detected => "detected",
            EventOutcome::Discarded => "discarded",
            EventOutcome::Missed => "missed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventResult {
    pub kind: EventKind,
    pub sample: usize,
    pub outcome: EventOutcome,
}

impl EventResult {
    /// Whether the detector did the right thing: reject a false pulse,
    /// recover a ghost.
    pub fn correct(&self) -> bool {
        matches!(
            (self.kind, self.outcome),
            (EventKind::FalsePulse, EventOutcome::Discarded) | (EventKind::Ghost, EventOutcome::Detected)
        )
    }
}

/// Window half-widths, in local ripple periods, for attributing detections
/// to an event. False pulses sit at least 0.35 of a period from a true
/// pulse; comparators fire up to about 0.3 of a period ahead of the peak.
const FALSE_EVENT_WINDOW: f64 = 0.15;
const GHOST_EVENT_WINDOW: f64 = 0.35;

/// Outcome of each scripted corruption event, given truth pulse indices,
/// detections (sorted) and event positions in samples.
pub fn classify_events(
    truth: &[usize],
    detected: &[usize],
    false_samples: &[usize],
    ghost_samples: &[usize],
) -> Vec<EventResult> {
    // truth interval around `s`, or the nearest one at the ends
    let period_at = |s: usize| {
        if truth.len() < 2 {
            return (usize::MAX / 4) as f64;
        }
        let k = truth.partition_point(|&t| t < s).clamp(1, truth.len() - 1);
        (truth[k] - truth[k - 1]) as f64
    };
    let any_near = |s: usize, w: f64| {
        let w = w.max(1.0) as usize;
        let lo = detected.partition_point(|&d| d + w < s);
        detected.get(lo).is_some_and(|&d| d <= s + w)
    };
    let mut out: Vec<EventResult> = false_samples
        .iter()
        .map(|&s| EventResult {
            kind: EventKind::FalsePulse,
            sample: s,
            outcome: if any_near(s, FALSE_EVENT_WINDOW * period_at(s)) {
                EventOutcome::Detected
            } else {
                EventOutcome::Discarded
            },
        })
        .chain(ghost_samples.iter().map(|&s| EventResult {
            kind: EventKind::Ghost,
            sample: s,
            outcome: if any_near(s, GHOST_EVENT_WINDOW * period_at(s)) {
                EventOutcome::Detected
            } else {
                EventOutcome::Missed
            },
        }))
        .collect();
    out.sort_by_key(|e| e.sample);
    out
}

/// Speed error bound from whole-sample interval quantization: with the
/// mean of `m` intervals summing to about `sum_tau` samples, each interval
/// endpoint is off by under one sample, so the relative error stays under
/// 2/sum_tau (percent: 200/sum_tau).
pub fn quantization_bound_pct(sum_tau: f64) -> f64 {
    200.0 / sum_tau
}
