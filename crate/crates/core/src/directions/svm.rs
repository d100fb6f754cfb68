//! Linear soft-margin SVM trained in the dual with sequential minimal
//! optimization (maximal-gain working-set selection, linear kernel).
//!
//! Solves `min ½‖v‖² + C·Σ max(0, 1 − yᵢ(v·xᵢ + b))` exactly up to the KKT
//! tolerance; the bias is read off the free support vectors.

/// Solution of one SVM fit, in the unnormalized `(v, b)` parametrization.
#[derive(Debug, Clone)]
pub(crate) struct SvmSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NotConverged {
    pub objective: f64,
    pub violation: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal objective at `(v, b)`.
pub(crate) fn primal_objective(xs: &[&[f64]], ys: &[f64], c: f64, v: &[f64], b: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(v, x) + b)).max(0.0))
        .sum();
    0.5 * dot(v, v) + c * hinge
}

pub(crate) fn solve(
    xs: &[&[f64]],
    ys: &[f64],
    c: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SvmSolution, NotConverged> {
    let n = xs.len();
    let d = xs[0].len();
    let diag: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let mut alpha = vec![0.0; n];
    let mut v = vec![0.0; d];
    // gradient of the dual objective: G_t = y_t·(v·x_t) − 1
    let mut grad = vec![-1.0; n];
    let tau = 1e-12;

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        // i: steepest feasible ascent index
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], ys[t]) {
                let val = -ys[t] * grad[t];
                if val > g_max {
                    g_max = val;
                    i = t;
                }
            }
        }
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            if in_low(alpha[t], ys[t]) {
                g_min = g_min.min(-ys[t] * grad[t]);
            }
        }
        let violation = g_max - g_min;
        if i == usize::MAX || violation <= tolerance {
            break;
        }
        if iterations >= max_iterations {
            let bias = bias_from(&alpha, &grad, ys, c);
            return Err(NotConverged {
                objective: primal_objective(xs, ys, c, &v, bias),
                violation,
            });
        }
        iterations += 1;

        // j: second-order gain among violating partners
        let xi = xs[i];
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], ys[t]) {
                continue;
            }
            let b_it = g_max + ys[t] * grad[t];
            if b_it <= 0.0 {
                continue;
            }
            let a_it = (diag[i] + diag[t] - 2.0 * dot(xi, xs[t])).max(tau);
            let gain = -(b_it * b_it) / a_it;
            if gain < best {
                best = gain;
                j = t;
            }
        }
        if j == usize::MAX {
            break;
        }

        let (yi, yj) = (ys[i], ys[j]);
        let kij = dot(xs[i], xs[j]);
        let quad = (diag[i] + diag[j] - 2.0 * kij).max(tau);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
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
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = (alpha[i] - old_i) * yi;
        let dj = (alpha[j] - old_j) * yj;
        let mut dv = vec![0.0; d];
        for k in 0..d {
            dv[k] = di * xs[i][k] + dj * xs[j][k];
            v[k] += dv[k];
        }
        for t in 0..n {
            grad[t] += ys[t] * dot(&dv, xs[t]);
        }
    }

    // recompute v from alpha to shed accumulated rounding
    let mut weights = vec![0.0; d];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for k in 0..d {
                weights[k] += alpha[t] * ys[t] * xs[t][k];
            }
        }
    }
    for t in 0..n {
        grad[t] = ys[t] * dot(&weights, xs[t]) - 1.0;
    }
    Ok(SvmSolution {
        bias: bias_from(&alpha, &grad, ys, c),
        weights,
        iterations,
    })
}

/// `b` averaged over free support vectors, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn bias_from(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> f64 {
    let mut sum = 0.0;
    let mut free = 0usize;
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let yg = ys[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else {
            let at_upper_bound = alpha[t] >= c;
            if (at_upper_bound && ys[t] < 0.0) || (!at_upper_bound && ys[t] > 0.0) {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else if upper.is_finite() && lower.is_finite() {
        0.5 * (upper + lower)
    } else if upper.is_finite() {
        upper
    } else {
        lower
    };
    -rho
}
