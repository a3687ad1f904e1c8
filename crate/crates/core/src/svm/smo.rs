//! Sequential minimal optimization for the soft-margin dual.
//!
//! Minimizes `½ αᵀQα − eᵀα` subject to `yᵀα = 0`, `0 ≤ α ≤ C`, updating two
//! multipliers per step. The working pair is the maximal KKT violating pair
//! (Keerthi et al.), and the step is the analytic two-variable solution as
//! in LIBSVM.

use std::collections::{BTreeMap, VecDeque};

use super::kernel::KernelSpec;
use super::model::{dual_objective_q, SupportVector, SvmModel, TrainingSet};
use crate::error::{Error, Result};

/// Curvature floor for non-PSD kernels (e.g. sigmoid).
const TAU: f64 = 1e-12;

/// Rows kept by the kernel cache once the problem is large.
const MAX_CACHED_ROWS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoParams {
    /// Penalty `C`.
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    /// Iteration budget, in units of the training set size.
    pub max_passes: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 1.0,
            tol: 1e-3,
            max_passes: 100,
        }
    }
}

impl SmoParams {
    pub fn with_c(c: f64) -> Self {
        SmoParams {
            c,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("penalty C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("SMO tolerance must be positive"));
        }
        if self.max_passes == 0 {
            return Err(Error::invalid("max_passes must be at least 1"));
        }
        Ok(())
    }
}

/// Raw solver output.
#[derive(Clone, Debug)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub violation: f64,
    /// Dual objective `Σα − ½ αᵀQα`.
    pub objective: f64,
    pub converged: bool,
}

impl SmoSolution {
    pub fn to_model(&self, data: &TrainingSet, kernel: KernelSpec, c: f64) -> SvmModel {
        let support = data
            .samples()
            .iter()
            .zip(data.labels())
            .zip(&self.alphas)
            .filter(|(_, &a)| a > 0.0)
            .map(|((x, l), &a)| SupportVector {
                coef: a * l.sign(),
                x: x.clone(),
            })
            .collect();
        SvmModel {
            kernel,
            c,
            bias: self.bias,
            dim: data.dim(),
            support,
            meta: BTreeMap::new(),
        }
    }
}

/// Trains a classifier; fails with [`Error::NotConverged`] when the budget runs out.
pub fn train_smo(data: &TrainingSet, kernel: KernelSpec, params: &SmoParams) -> Result<SvmModel> {
    let sol = solve_dual(data, kernel, params)?;
    let model = sol.to_model(data, kernel, params.c);
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            violation: sol.violation,
            best: Box::new(model),
        });
    }
    Ok(model)
}

/// Runs SMO and returns the multipliers whether or not it converged.
pub fn solve_dual(data: &TrainingSet, kernel: KernelSpec, params: &SmoParams) -> Result<SmoSolution> {
    params.validate()?;
    kernel.validate()?;
    let n = data.len();
    let c = params.c;
    let y = data.signs();
    let mut cache = KernelRows::new(data, kernel);
    let diag: Vec<f64> = (0..n)
        .map(|i| kernel.eval_unchecked(&data.samples()[i], &data.samples()[i]))
        .collect();

    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let max_iter = params.max_passes.saturating_mul(n.max(1));

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    let (violation, converged) = loop {
        // second-order working set selection: i maximizes the violation,
        // j the guaranteed objective decrease given i
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                sel_i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut sel_j = usize::MAX;
        if sel_i != usize::MAX {
            let ki = cache.row(sel_i);
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let quad = (diag[sel_i] + diag[t] - 2.0 * ki[t]).max(TAU);
                    let gain = -b * b / quad;
                    if gain < best {
                        best = gain;
                        sel_j = t;
                    }
                }
            }
        }
        let violation = if sel_i == usize::MAX || sel_j == usize::MAX {
            0.0
        } else {
            gmax - gmin
        };
        if violation < params.tol {
            break (violation.max(0.0), true);
        }
        if iterations >= max_iter {
            break (violation, false);
        }
        iterations += 1;

        let (i, j) = (sel_i, sel_j);
        let (ki, kj) = cache.rows(i, j);
        let qij = y[i] * y[j] * ki[j];
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        let dai = (alpha[i] - old_ai) * y[i];
        let daj = (alpha[j] - old_aj) * y[j];
        for (k, g) in grad.iter_mut().enumerate() {
            *g += y[k] * (ki[k] * dai + kj[k] * daj);
        }
    };

    let bias = -rho(&alpha, &grad, &y, c);
    let objective = objective_from_grad(&alpha, &grad);
    Ok(SmoSolution {
        alphas: alpha,
        bias,
        iterations,
        violation,
        objective,
        converged,
    })
}

/// Offset from the free multipliers, or the midpoint of the feasible interval.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for ((&a, &g), &yi) in alpha.iter().zip(grad).zip(y) {
        let yg = yi * g;
        if a >= c {
            if yi < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a <= 0.0 {
            if yi > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        match (ub.is_finite(), lb.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => ub,
            (false, true) => lb,
            (false, false) => 0.0,
        }
    }
}

// With g = Qα − e:  Σα − ½αᵀQα = −½ Σ α_i (g_i − 1)
fn objective_from_grad(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Lazily computed kernel rows with FIFO eviction.
struct KernelRows<'a> {
    data: &'a TrainingSet,
    kernel: KernelSpec,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    cap: usize,
}

impl<'a> KernelRows<'a> {
    fn new(data: &'a TrainingSet, kernel: KernelSpec) -> Self {
        KernelRows {
            data,
            kernel,
            rows: vec![None; data.len()],
            order: VecDeque::new(),
            cap: MAX_CACHED_ROWS.max(2),
        }
    }

    fn ensure(&mut self, i: usize, keep: usize) {
        if self.rows[i].is_some() {
            return;
        }
        if self.order.len() >= self.cap {
            let pos = self.order.iter().position(|&r| r != keep).unwrap_or(0);
            if let Some(victim) = self.order.remove(pos) {
                self.rows[victim] = None;
            }
        }
        let xi = &self.data.samples()[i];
        let row = self
            .data
            .samples()
            .iter()
            .map(|xk| self.kernel.eval_unchecked(xi, xk))
            .collect();
        self.rows[i] = Some(row);
        self.order.push_back(i);
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.ensure(i, i);
        self.rows[i].as_deref().expect("row cached")
    }

    fn rows(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(i, j);
        self.ensure(j, i);
        (
            self.rows[i].as_deref().expect("row cached"),
            self.rows[j].as_deref().expect("row cached"),
        )
    }
}

/// Dual objective recomputed from scratch; used to cross-check solvers.
pub fn dual_objective(data: &TrainingSet, kernel: &KernelSpec, alphas: &[f64]) -> f64 {
    dual_objective_q(&data.q_matrix(kernel), alphas)
}
