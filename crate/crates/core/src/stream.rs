/// Motor current sampled at a fixed rate, starting at t = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    pub fs: f64,
    pub current: Vec<f64>,
}

impl SampleStream {
    pub fn new(fs: f64, current: Vec<f64>) -> Self {
        SampleStream { fs, current }
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.fs
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SampleStream {
        SampleStream {
            fs: self.fs,
            current: self.current[range].to_vec(),
        }
    }
}

/// Exact shaft state alongside a simulated (or encoder-recorded) stream.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub speed_rpm: Vec<f64>,
    /// Unwrapped shaft angle, zero at the first sample.
    pub position_rad: Vec<f64>,
    /// Sample index of every commutation pulse (the ripple maximum).
    pub pulse_indices: Vec<usize>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.speed_rpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed_rpm.is_empty()
    }

    pub fn pulse_count(&self) -> usize {
        self.pulse_indices.len()
    }

    pub fn pulse_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.len()];
        for &i in &self.pulse_indices {
            flags[i] = true;
        }
        flags
    }

    pub fn mean_speed(&self) -> f64 {
        if self.speed_rpm.is_empty() {
            return 0.0;
        }
        self.speed_rpm.iter().sum::<f64>() / self.len() as f64
    }
}
