use std::fmt;

use crate::error::{Error, Result};

/// Standard kernel functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `a·b`
    Linear,
    /// `(a·b + 1)^degree`
    Polynomial { degree: u32 },
    /// `exp(-|a-b|² / 2σ²)`
    GaussianRbf { sigma: f64 },
    /// `tanh(γ a·b + r)`
    Sigmoid { gamma: f64, r: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Polynomial { degree: 3 }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree: 0 } => {
                Err(Error::invalid("polynomial degree must be positive"))
            }
            KernelSpec::Polynomial { .. } => Ok(()),
            KernelSpec::GaussianRbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::invalid(format!("RBF sigma must be positive, got {sigma}")))
            }
            KernelSpec::GaussianRbf { .. } => Ok(()),
            KernelSpec::Sigmoid { gamma, r } if !(gamma.is_finite() && r.is_finite()) => {
                Err(Error::invalid("sigmoid parameters must be finite"))
            }
            KernelSpec::Sigmoid { .. } => Ok(()),
        }
    }

    /// Evaluates the kernel, checking dimensions.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    /// Evaluates the kernel; slices must have equal length.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Polynomial { degree } => (dot(a, b) + 1.0).powi(degree as i32),
            KernelSpec::GaussianRbf { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Sigmoid { gamma, r } => (gamma * dot(a, b) + r).tanh(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::GaussianRbf { .. } => "gaussian_rbf",
            KernelSpec::Sigmoid { .. } => "sigmoid",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree } => write!(f, "polynomial(degree={degree})"),
            KernelSpec::GaussianRbf { sigma } => write!(f, "gaussian_rbf(sigma={sigma})"),
            KernelSpec::Sigmoid { gamma, r } => write!(f, "sigmoid(gamma={gamma}, r={r})"),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
