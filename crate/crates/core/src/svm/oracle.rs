//! Dense reference solver for small duals, independent of SMO.
//!
//! Accelerated projected-gradient ascent on the full dual, followed by an
//! exact solve of the equality-constrained problem on the identified free
//! set. Only meant for cross-checking on toy problems.

use super::kernel::KernelSpec;
use super::model::{dual_objective_q, TrainingSet};
use crate::error::{Error, Result};

pub const MAX_ORACLE_SIZE: usize = 16;

const MAX_ITER: usize = 400_000;

/// Maximizes the dual for `|data| ≤ 16`, returning `(alphas, dual_value)`.
pub fn brute_force_qp(data: &TrainingSet, kernel: &KernelSpec, c: f64) -> Result<(Vec<f64>, f64)> {
    if data.len() > MAX_ORACLE_SIZE {
        return Err(Error::invalid(format!(
            "reference solver is capped at {MAX_ORACLE_SIZE} samples, got {}",
            data.len()
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("penalty C must be positive"));
    }
    kernel.validate()?;
    let q = data.q_matrix(kernel);
    let y = data.signs();
    let n = data.len();

    // Step 1/L with L bounded by the Frobenius norm.
    let lip = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let step = 1.0 / lip;

    let mut alpha = project(&vec![0.0; n], &y, c);
    let mut value = dual_objective_q(&q, &alpha);
    let mut look = alpha.clone();
    let mut t = 1.0f64;
    for iter in 0..MAX_ITER {
        if iter % 500 == 499 {
            // stop once the polished point is provably optimal
            if let Some(p) = polish(&q, &y, c, &alpha) {
                let v = dual_objective_q(&q, &p);
                if v >= value - 1e-12 * (1.0 + value.abs()) && optimal(&q, &y, c, &p) {
                    return Ok((p, v));
                }
            }
        }
        let g = ascent_gradient(&q, &look);
        let cand: Vec<f64> = look.iter().zip(&g).map(|(a, gi)| a + step * gi).collect();
        let next = project(&cand, &y, c);
        let next_value = dual_objective_q(&q, &next);
        if next_value < value {
            if t == 1.0 {
                // a plain projected step no longer improves
                break;
            }
            // momentum overshot: restart from the last accepted iterate
            look = alpha.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let moved: f64 = next.iter().zip(&alpha).map(|(a, p)| (a - p).abs()).sum();
        look = next
            .iter()
            .zip(&alpha)
            .map(|(a, p)| a + beta * (a - p))
            .collect();
        alpha = next;
        value = next_value;
        t = t_next;
        if moved < 1e-15 * (1.0 + c) {
            break;
        }
    }
    let (best_alpha, best) = (alpha, value);

    if let Some(polished) = polish(&q, &y, c, &best_alpha) {
        let obj = dual_objective_q(&q, &polished);
        if obj >= best {
            return Ok((polished, obj));
        }
    }
    Ok((best_alpha, best))
}

/// KKT optimality of a feasible point: no pair of multipliers can move
/// along the constraint and raise the objective.
fn optimal(q: &[Vec<f64>], y: &[f64], c: f64, alpha: &[f64]) -> bool {
    let g = ascent_gradient(q, alpha);
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for i in 0..alpha.len() {
        let r = y[i] * g[i];
        let (can_up, can_down) = (alpha[i] < c, alpha[i] > 0.0);
        if (y[i] > 0.0 && can_up) || (y[i] < 0.0 && can_down) {
            up = up.max(r);
        }
        if (y[i] > 0.0 && can_down) || (y[i] < 0.0 && can_up) {
            low = low.min(r);
        }
    }
    up <= low + 1e-10
}

fn ascent_gradient(q: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    q.iter()
        .map(|row| 1.0 - row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
        .collect()
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let resid = |lam: f64| {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c) * yi)
            .sum::<f64>()
    };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    // resid is nonincreasing in lam
    while hi - lo > f64::EPSILON * span {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if resid(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect()
}

/// Solves the KKT system with bound multipliers fixed and the rest free.
fn polish(q: &[Vec<f64>], y: &[f64], c: f64, alpha: &[f64]) -> Option<Vec<f64>> {
    let eps = 1e-7 * c.max(1.0);
    let n = alpha.len();
    let fixed: Vec<Option<f64>> = alpha
        .iter()
        .map(|&a| {
            if a <= eps {
                Some(0.0)
            } else if a >= c - eps {
                Some(c)
            } else {
                None
            }
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut out: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    if free.is_empty() {
        let r: f64 = out.iter().zip(y).map(|(a, yi)| a * yi).sum();
        return (r.abs() < 1e-12).then_some(out);
    }
    // [Q_FF  y_F] [α_F]   [1 − Q_FB α_B]
    // [y_Fᵀ  0  ] [ν  ] = [−y_Bᵀ α_B  ]
    let m = free.len() + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            a[r][s] = q[i][j];
        }
        a[r][m - 1] = y[i];
        let fixed_part: f64 = (0..n).filter(|k| fixed[*k].is_some()).map(|k| q[i][k] * out[k]).sum();
        a[r][m] = 1.0 - fixed_part;
    }
    for (s, &j) in free.iter().enumerate() {
        a[m - 1][s] = y[j];
    }
    a[m - 1][m] = -(0..n).filter(|k| fixed[*k].is_some()).map(|k| y[k] * out[k]).sum::<f64>();
    let sol = gauss_solve(a)?;
    for (r, &i) in free.iter().enumerate() {
        let v = sol[r];
        if !(-1e-12..=c + 1e-12).contains(&v) {
            return None;
        }
        out[i] = v.clamp(0.0, c);
    }
    Some(out)
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=m {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..m).map(|r| a[r][m] / a[r][r]).collect())
}
