//! BFGS with a strong-Wolfe bracketing line search.
//!
//! The inverse Hessian approximation starts at the identity, is rescaled by
//! the standard `(s'u)/(u'u)` heuristic before the first update, and updates
//! are skipped whenever the curvature `u's` falls below `1e-12` (which can
//! happen at ReLU kinks of the composed objective).

use ndarray::{Array1, Array2};

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 30;
const CURVATURE_FLOOR: f64 = 1e-12;

/// Result of a BFGS run.
#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub point: Array1<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Set when a line search failed to find a Wolfe point; the returned
    /// iterate is the best one reached.
    pub degraded: bool,
}

struct Probe {
    alpha: f64,
    value: f64,
    grad: Array1<f64>,
    slope: f64,
}

/// Minimize `objective` (returning value and gradient) starting from `z0`.
/// Stops when the relative iterate change drops below `tol`, the gradient
/// vanishes, or after `max_iter` iterations.
pub fn bfgs_minimize<F>(
    objective: F,
    z0: Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> BfgsOutcome
where
    F: Fn(&Array1<f64>) -> (f64, Array1<f64>),
{
    let dim = z0.len();
    let mut z = z0;
    let (mut value, mut grad) = objective(&z);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return BfgsOutcome {
            point: z,
            value,
            iterations: 0,
            degraded: true,
        };
    }

    let mut inv_hessian = Array2::<f64>::eye(dim);
    let mut iterations = 0;
    let mut degraded = false;
    let mut first_update = true;

    for _ in 0..max_iter {
        let grad_norm = grad.dot(&grad).sqrt();
        if grad_norm <= 1e-14 * z.dot(&z).sqrt().max(1.0) {
            break;
        }

        let mut direction = -inv_hessian.dot(&grad);
        let mut slope = direction.dot(&grad);
        if slope >= 0.0 {
            // Lost positive definiteness numerically; restart from steepest
            // descent.
            inv_hessian = Array2::eye(dim);
            first_update = true;
            direction = -grad.clone();
            slope = -grad_norm * grad_norm;
        }
        if slope.abs() <= 1e-15 * (1.0 + value.abs()) {
            // Any achievable decrease is below f64 resolution of the
            // objective; the iterate is converged for all practical
            // purposes.
            break;
        }

        let probe = match wolfe_line_search(&objective, &z, &direction, value, slope) {
            Some(p) => p,
            None => {
                degraded = true;
                break;
            }
        };
        iterations += 1;

        let z_new = &z + &(probe.alpha * &direction);
        let step = &z_new - &z;
        let grad_diff = &probe.grad - &grad;
        let rel_change = step.dot(&step).sqrt() / z.dot(&z).sqrt().max(1e-12);

        let curvature = grad_diff.dot(&step);
        if curvature > CURVATURE_FLOOR {
            if first_update {
                let scale = curvature / grad_diff.dot(&grad_diff);
                if scale.is_finite() && scale > 0.0 {
                    inv_hessian = Array2::eye(dim) * scale;
                }
                first_update = false;
            }
            let rho = 1.0 / curvature;
            let bu = inv_hessian.dot(&grad_diff);
            let ubu = grad_diff.dot(&bu);
            for i in 0..dim {
                for j in 0..dim {
                    inv_hessian[[i, j]] += -rho * (step[i] * bu[j] + bu[i] * step[j])
                        + rho * (rho * ubu + 1.0) * step[i] * step[j];
                }
            }
        }

        z = z_new;
        value = probe.value;
        grad = probe.grad;

        if rel_change < tol {
            break;
        }
    }

    BfgsOutcome {
        point: z,
        value,
        iterations,
        degraded,
    }
}

/// Strong-Wolfe line search: bracketing phase followed by zoom. Returns
/// `None` when no acceptable point is found within the evaluation budget.
fn wolfe_line_search<F>(
    objective: &F,
    z: &Array1<f64>,
    direction: &Array1<f64>,
    f0: f64,
    slope0: f64,
) -> Option<Probe>
where
    F: Fn(&Array1<f64>) -> (f64, Array1<f64>),
{
    let mut evals = 0usize;
    let mut eval = |alpha: f64| -> Option<Probe> {
        if evals >= MAX_LINE_SEARCH_EVALS {
            return None;
        }
        evals += 1;
        let point = z + &(alpha * direction);
        let (value, grad) = objective(&point);
        let slope = grad.dot(direction);
        Some(Probe {
            alpha,
            value,
            grad,
            slope,
        })
    };

    let mut prev_alpha = 0.0;
    let mut prev_value = f0;
    let mut prev_slope = slope0;
    let mut alpha = 1.0;
    const ALPHA_MAX: f64 = 1e6;

    let mut bracket: Option<(f64, f64, f64, f64, f64)> = None; // lo, f_lo, d_lo, hi, f_hi
    for i in 0..MAX_LINE_SEARCH_EVALS {
        let probe = eval(alpha)?;
        if !probe.value.is_finite() {
            // Step too bold; treat as the high end of a bracket.
            bracket = Some((prev_alpha, prev_value, prev_slope, alpha, f64::INFINITY));
            break;
        }
        if probe.value > f0 + WOLFE_C1 * alpha * slope0 || (i > 0 && probe.value >= prev_value) {
            bracket = Some((prev_alpha, prev_value, prev_slope, alpha, probe.value));
            break;
        }
        if probe.slope.abs() <= -WOLFE_C2 * slope0 {
            return Some(probe);
        }
        if probe.slope >= 0.0 {
            bracket = Some((alpha, probe.value, probe.slope, prev_alpha, prev_value));
            break;
        }
        prev_alpha = alpha;
        prev_value = probe.value;
        prev_slope = probe.slope;
        if alpha >= ALPHA_MAX {
            // No curvature point within reach; report failure rather than
            // accept an arbitrarily long step.
            return None;
        }
        alpha = (2.0 * alpha).min(ALPHA_MAX);
    }

    let (mut lo, mut f_lo, mut d_lo, mut hi, mut f_hi) = bracket?;
    loop {
        // Safeguarded quadratic interpolation within the bracket.
        let span = hi - lo;
        let mut candidate = {
            let denom = f_hi - f_lo - d_lo * span;
            if denom.abs() > 1e-30 && f_hi.is_finite() {
                lo - 0.5 * d_lo * span * span / denom
            } else {
                lo + 0.5 * span
            }
        };
        let a_min = lo.min(hi);
        let a_max = lo.max(hi);
        let margin = 0.1 * (a_max - a_min);
        if !(candidate >= a_min + margin && candidate <= a_max - margin) {
            candidate = 0.5 * (lo + hi);
        }

        let probe = eval(candidate)?;
        if !probe.value.is_finite()
            || probe.value > f0 + WOLFE_C1 * candidate * slope0
            || probe.value >= f_lo
        {
            hi = candidate;
            f_hi = probe.value;
        } else {
            if probe.slope.abs() <= -WOLFE_C2 * slope0 {
                return Some(probe);
            }
            if probe.slope * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = candidate;
            f_lo = probe.value;
            d_lo = probe.slope;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1.0) {
            // Bracket collapsed; accept the low point if it at least
            // decreases the objective.
            if f_lo < f0 {
                return eval(lo);
            }
            return None;
        }
    }
}
