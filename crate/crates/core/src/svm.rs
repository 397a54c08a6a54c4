//! Soft-margin kernel SVM training by sequential minimal optimization.
//!
//! Solves the dual problem
//!
//! ```text
//! max  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
//! s.t. 0 <= a_i <= C_i,   sum_i a_i y_i = 0
//! ```
//!
//! with the maximal-violating-pair working-set rule: at each step the pair
//! with the largest KKT violation is optimized analytically. Per-sample
//! upper bounds `C_i` carry the class weighting used to balance the handful
//! of positive templates against the much larger negative set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RBF kernel `K(x, y) = exp(-gamma * |x - y|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub gamma: f64,
}

impl RbfKernel {
    pub fn new(gamma: f64) -> Result<RbfKernel> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(RbfKernel { gamma })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut sq = 0.0;
        for (a, b) in x.iter().zip(y) {
            let d = a - b;
            sq += d * d;
        }
        (-self.gamma * sq).exp()
    }

    /// The "scale" heuristic: `1 / (dims * variance of all matrix entries)`,
    /// falling back to 1 for constant data.
    pub fn scale_gamma(data: &[Vec<f64>]) -> f64 {
        let dims = data.first().map_or(0, |row| row.len());
        let count = data.len() * dims;
        if count == 0 {
            return 1.0;
        }
        let mean = data.iter().flatten().sum::<f64>() / count as f64;
        let var =
            data.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        if var <= 1e-12 {
            1.0
        } else {
            1.0 / (dims as f64 * var)
        }
    }

    /// Full kernel matrix, row-major.
    pub fn matrix(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = data.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(&data[i], &data[j]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SmoParams {
    /// KKT violation tolerance for convergence.
    pub tol: f64,
    /// Iteration cap as a multiple of the training-set size.
    pub max_iter_factor: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams { tol: 1e-3, max_iter_factor: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective value at the returned point.
    pub objective: f64,
    /// Largest KKT violation at the returned point.
    pub kkt_violation: f64,
}

const TAU: f64 = 1e-12;

fn in_i_up(y: f64, alpha: f64, c: f64) -> bool {
    (y > 0.0 && alpha < c) || (y < 0.0 && alpha > 0.0)
}

fn in_i_low(y: f64, alpha: f64, c: f64) -> bool {
    (y > 0.0 && alpha > 0.0) || (y < 0.0 && alpha < c)
}

/// Trains the dual on a precomputed kernel matrix. `labels` are +/-1 and
/// `bounds` the per-sample upper bounds `C_i`.
pub fn smo_solve(
    kernel: &[Vec<f64>],
    labels: &[f64],
    bounds: &[f64],
    params: &SmoParams,
) -> Result<SmoSolution> {
    let n = labels.len();
    if n == 0 || kernel.len() != n || bounds.len() != n {
        return Err(Error::DimensionMismatch("smo_solve: inconsistent problem size".into()));
    }
    if labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
        return Err(Error::Config("labels must be +/-1".into()));
    }
    if !labels.iter().any(|y| *y > 0.0) || !labels.iter().any(|y| *y < 0.0) {
        return Err(Error::Config("training set needs both classes".into()));
    }

    let mut alpha = vec![0.0; n];
    // f[t] = sum_a alpha_a y_a K(x_a, x_t); E_t = f[t] - y_t
    let mut f = vec![0.0; n];
    let max_iter = params.max_iter_factor.saturating_mul(n).max(1);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // Maximal violating pair over -E = y - f.
        let mut i_sel = None;
        let mut max_up = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut min_low = f64::INFINITY;
        for t in 0..n {
            let v = labels[t] - f[t];
            if in_i_up(labels[t], alpha[t], bounds[t]) && v > max_up {
                max_up = v;
                i_sel = Some(t);
            }
            if in_i_low(labels[t], alpha[t], bounds[t]) && v < min_low {
                min_low = v;
                j_sel = Some(t);
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                converged = true;
                break;
            }
        };
        if max_up - min_low <= params.tol {
            converged = true;
            break;
        }

        let (yi, yj) = (labels[i], labels[j]);
        let e_i = f[i] - yi;
        let e_j = f[j] - yj;
        let (lo, hi) = if yi != yj {
            let d = alpha[j] - alpha[i];
            (d.max(0.0), (bounds[i] + d).min(bounds[j]))
        } else {
            let s = alpha[i] + alpha[j];
            ((s - bounds[i]).max(0.0), s.min(bounds[j]))
        };
        let eta = kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j];
        let old_i = alpha[i];
        let old_j = alpha[j];
        let new_j = if eta > TAU {
            (old_j + yj * (e_i - e_j) / eta).clamp(lo, hi)
        } else {
            // Flat direction: pick the bound with the better objective gain,
            // preferring the lower bound on ties.
            let gain = |t: f64| t * yj * (e_i - e_j) - 0.5 * eta * t * t;
            if gain(lo - old_j) >= gain(hi - old_j) {
                lo
            } else {
                hi
            }
        };
        if (new_j - old_j).abs() < 1e-14 {
            // No usable progress on the most violating pair.
            converged = max_up - min_low <= params.tol;
            break;
        }
        let new_i = old_i + yi * yj * (old_j - new_j);
        alpha[i] = new_i;
        alpha[j] = new_j;
        let di = (new_i - old_i) * yi;
        let dj = (new_j - old_j) * yj;
        for t in 0..n {
            f[t] += di * kernel[i][t] + dj * kernel[j][t];
        }
        iterations += 1;
    }

    // Bias from free support vectors, or the midpoint of the feasible
    // interval when everything sits at a bound.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..n {
        if alpha[t] > 0.0 && alpha[t] < bounds[t] {
            free_sum += labels[t] - f[t];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        let mut up = f64::NEG_INFINITY;
        let mut low = f64::INFINITY;
        for t in 0..n {
            let v = labels[t] - f[t];
            if in_i_up(labels[t], alpha[t], bounds[t]) {
                up = up.max(v);
            }
            if in_i_low(labels[t], alpha[t], bounds[t]) {
                low = low.min(v);
            }
        }
        if up.is_finite() && low.is_finite() {
            (up + low) / 2.0
        } else {
            0.0
        }
    };

    let objective = dual_objective_from_f(&alpha, labels, &f);
    let kkt_violation = kkt_violation(kernel, labels, bounds, &alpha);
    Ok(SmoSolution { alpha, bias, converged, iterations, objective, kkt_violation })
}

fn dual_objective_from_f(alpha: &[f64], labels: &[f64], f: &[f64]) -> f64 {
    let mut obj = 0.0;
    for t in 0..alpha.len() {
        obj += alpha[t] - 0.5 * alpha[t] * labels[t] * f[t];
    }
    obj
}

/// Dual objective computed from scratch.
pub fn dual_objective(kernel: &[Vec<f64>], labels: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut obj: f64 = alpha.iter().sum();
    for a in 0..n {
        if alpha[a] == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for b in 0..n {
            acc += alpha[b] * labels[b] * kernel[a][b];
        }
        obj -= 0.5 * alpha[a] * labels[a] * acc;
    }
    obj
}

/// Largest KKT violation `max_{I_up}(-y G) - min_{I_low}(-y G)`, clamped at 0.
pub fn kkt_violation(
    kernel: &[Vec<f64>],
    labels: &[f64],
    bounds: &[f64],
    alpha: &[f64],
) -> f64 {
    let n = alpha.len();
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for t in 0..n {
        let mut f_t = 0.0;
        for a in 0..n {
            f_t += alpha[a] * labels[a] * kernel[t][a];
        }
        let v = labels[t] - f_t;
        if in_i_up(labels[t], alpha[t], bounds[t]) {
            up = up.max(v);
        }
        if in_i_low(labels[t], alpha[t], bounds[t]) {
            low = low.min(v);
        }
    }
    if up.is_finite() && low.is_finite() {
        (up - low).max(0.0)
    } else {
        0.0
    }
}
