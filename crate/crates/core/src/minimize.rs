//! Preconditioned nonlinear conjugate gradients for smooth convex problems.
//!
//! The line search only looks at directional derivatives, which stay
//! accurate long after function differences drown in rounding. On quadratics
//! the secant step is exact and the method reduces to linear PCG.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Bound on `(Σ gᵢ² / mᵢ)^{1/2}` with `m` the residual metric.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { tol: 1e-10, max_iterations: 50_000 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes a smooth convex function. `gradient(x, g)` writes the Euclidean
/// gradient; `preconditioner` is a positive diagonal approximating the
/// Hessian and `metric` defines the residual norm. Both are indexed like `x`.
pub fn minimize<G>(
    mut gradient: G,
    x0: Vec<f64>,
    preconditioner: &[f64],
    metric: &[f64],
    options: MinimizeOptions,
) -> Result<Minimum>
where
    G: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    if preconditioner.len() != n || metric.len() != n {
        return Err(Error::SpaceMismatch);
    }
    let residual_of = |g: &[f64]| g.iter().zip(metric).map(|(gi, mi)| gi * gi / mi).sum::<f64>().sqrt();

    let mut x = x0;
    let mut g = vec![0.0; n];
    gradient(&x, &mut g);
    let mut residual = residual_of(&g);
    if residual <= options.tol {
        return Ok(Minimum { x, residual, iterations: 0 });
    }
    let mut pg: Vec<f64> = g.iter().zip(preconditioner).map(|(a, m)| a / m).collect();
    let mut d: Vec<f64> = pg.iter().map(|v| -v).collect();
    let mut g_pg = dot(&g, &pg);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut alpha_guess = 1.0;
    let mut since_restart = 0;

    for iteration in 1..=options.max_iterations {
        let mut slope0 = dot(&g, &d);
        if !(slope0 < 0.0) {
            d.iter_mut().zip(&pg).for_each(|(di, p)| *di = -p);
            slope0 = -g_pg;
            since_restart = 0;
        }

        // bracket a zero of α ↦ ⟨∇f(x + αd), d⟩, then regula falsi
        let mut eval = |alpha: f64, trial: &mut [f64], g_trial: &mut [f64]| -> f64 {
            for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&d) {
                *t = xi + alpha * di;
            }
            gradient(trial, g_trial);
            dot(g_trial, &d)
        };
        let (mut lo, mut s_lo) = (0.0, slope0);
        let mut hi = f64::NAN;
        let mut s_hi = f64::NAN;
        let mut alpha = alpha_guess;
        let mut accepted = None;
        for _ in 0..200 {
            let s = eval(alpha, &mut trial, &mut g_trial);
            if !s.is_finite() {
                hi = alpha;
                s_hi = f64::INFINITY;
                alpha = 0.5 * (lo + alpha);
                continue;
            }
            if s.abs() <= 0.1 * slope0.abs() {
                accepted = Some(alpha);
                break;
            }
            if s < 0.0 {
                lo = alpha;
                s_lo = s;
            } else {
                hi = alpha;
                s_hi = s;
            }
            alpha = if hi.is_nan() {
                // secant extrapolation, capped
                if lo > 0.0 && s_lo > slope0 {
                    (lo - s_lo * lo / (s_lo - slope0)).min(10.0 * lo)
                } else {
                    4.0 * alpha
                }
            } else if s_hi.is_finite() {
                let cand = lo - s_lo * (hi - lo) / (s_hi - s_lo);
                let width = hi - lo;
                cand.clamp(lo + 0.01 * width, hi - 0.01 * width)
            } else {
                0.5 * (lo + hi)
            };
            if !(alpha > 0.0) || (!hi.is_nan() && hi - lo <= 1e-16 * hi) {
                break;
            }
        }
        let alpha = match accepted {
            Some(a) => a,
            None => {
                // give up on the bracket; the last point with negative slope still descends
                if lo == 0.0 {
                    return Err(Error::MaxIterations { iterations: iteration, residual });
                }
                eval(lo, &mut trial, &mut g_trial);
                lo
            }
        };
        alpha_guess = alpha;

        std::mem::swap(&mut x, &mut trial);
        let g_old = std::mem::replace(&mut g, g_trial.clone());
        residual = residual_of(&g);
        if residual <= options.tol {
            return Ok(Minimum { x, residual, iterations: iteration });
        }
        let pg_new: Vec<f64> = g.iter().zip(preconditioner).map(|(a, m)| a / m).collect();
        let g_pg_new = dot(&g, &pg_new);
        let mut beta = pg_new.iter().zip(&g).zip(&g_old).map(|((p, a), b)| p * (a - b)).sum::<f64>() / g_pg;
        since_restart += 1;
        if !(beta > 0.0) || since_restart >= n.max(50) {
            beta = 0.0;
            since_restart = 0;
        }
        for (di, p) in d.iter_mut().zip(&pg_new) {
            *di = -p + beta * *di;
        }
        pg = pg_new;
        g_pg = g_pg_new;
    }
    Err(Error::MaxIterations { iterations: options.max_iterations, residual })
}
