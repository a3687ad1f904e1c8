use std::collections::BTreeMap;

use super::kernel::KernelSpec;
use crate::error::{Error, Result};

/// Class label of a training sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Label {
        if v >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// Labelled samples of a fixed dimension with both classes present.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    samples: Vec<Vec<f64>>,
    labels: Vec<Label>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::invalid("training set is empty"));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training set contains non-finite values"));
        }
        let has_pos = labels.contains(&Label::Positive);
        let has_neg = labels.contains(&Label::Negative);
        if !(has_pos && has_neg) {
            return Err(Error::invalid("training set needs both classes"));
        }
        Ok(TrainingSet {
            samples,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    /// Dense label-signed kernel matrix `Q_ij = y_i y_j K(x_i, x_j)`.
    pub fn q_matrix(&self, kernel: &KernelSpec) -> Vec<Vec<f64>> {
        let y = self.signs();
        let n = self.len();
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = y[i] * y[j] * kernel.eval_unchecked(&self.samples[i], &self.samples[j]);
                q[i][j] = v;
                q[j][i] = v;
            }
        }
        q
    }

    /// Dual objective `Σα - ½ Σ_i Σ_j α_i α_j y_i y_j K(x_i, x_j)`.
    pub fn dual_objective(&self, kernel: &KernelSpec, alphas: &[f64]) -> f64 {
        let q = self.q_matrix(kernel);
        dual_objective_q(&q, alphas)
    }
}

pub(crate) fn dual_objective_q(q: &[Vec<f64>], alphas: &[f64]) -> f64 {
    let linear: f64 = alphas.iter().sum();
    let mut quad = 0.0;
    for (i, row) in q.iter().enumerate() {
        let qa: f64 = row.iter().zip(alphas).map(|(a, b)| a * b).sum();
        quad += alphas[i] * qa;
    }
    linear - 0.5 * quad
}

/// One support vector with its signed dual coefficient `α_i y_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportVector {
    pub coef: f64,
    pub x: Vec<f64>,
}

/// A trained binary classifier.
///
/// `meta` carries free-form `key value` pairs written alongside the model
/// (method parameters the detector was trained with).
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub bias: f64,
    pub dim: usize,
    pub support: Vec<SupportVector>,
    pub meta: BTreeMap<String, String>,
}

impl SvmModel {
    /// A model with no support vectors; `decide` always returns `sign(bias)`.
    pub fn constant(dim: usize, bias: f64) -> Self {
        SvmModel {
            kernel: KernelSpec::Linear,
            c: 1.0,
            bias,
            dim,
            support: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `f(x) = Σ α_i y_i K(x_i, x) + b`
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.decision_value_unchecked(x))
    }

    #[inline]
    pub(crate) fn decision_value_unchecked(&self, x: &[f64]) -> f64 {
        let kernel = self.kernel;
        self.support
            .iter()
            .map(|sv| sv.coef * kernel.eval_unchecked(&sv.x, x))
            .sum::<f64>()
            + self.bias
    }

    /// Class of `x`; a zero decision value maps to [`Label::Positive`].
    pub fn decide(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from_sign(self.decision_value(x)?))
    }

    /// Primal weight vector `w = Σ α_i y_i x_i`; meaningful for the linear kernel only.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != KernelSpec::Linear {
            return None;
        }
        let mut w = vec![0.0; self.dim];
        for sv in &self.support {
            for (wi, xi) in w.iter_mut().zip(&sv.x) {
                *wi += sv.coef * xi;
            }
        }
        Some(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_model_follows_bias_sign() {
        let m = SvmModel::constant(3, -1.0);
        for x in [[0.0, 0.0, 0.0], [5.0, -2.0, 9.0], [1e9, 1e9, 1e9]] {
            assert_eq!(m.decide(&x).unwrap(), Label::Negative);
        }
        assert_eq!(SvmModel::constant(1, 0.0).decide(&[3.0]).unwrap(), Label::Positive);
    }

    #[test]
    fn decide_checks_dimension() {
        let m = SvmModel::constant(2, 1.0);
        assert!(matches!(
            m.decide(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn training_set_validation() {
        assert!(TrainingSet::new(vec![], vec![]).is_err());
        assert!(TrainingSet::new(vec![vec![1.0], vec![2.0]], vec![Label::Positive; 2]).is_err());
        assert!(TrainingSet::new(
            vec![vec![1.0], vec![2.0, 3.0]],
            vec![Label::Positive, Label::Negative]
        )
        .is_err());
        assert!(TrainingSet::new(vec![vec![1.0]], vec![]).is_err());
        let ts = TrainingSet::new(
            vec![vec![1.0], vec![-1.0]],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        assert_eq!(ts.dim(), 1);
        // α = (0.5, 0.5) on the symmetric pair: 1 - ½(0.25+0.25+0.25+0.25) = 0.5
        assert!((ts.dual_objective(&KernelSpec::Linear, &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }
}
