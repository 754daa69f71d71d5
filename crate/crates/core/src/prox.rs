//! The resolvent `(I + τ∂φ)⁻¹`.
//!
//! `solve_prox` minimizes `φ(v) + ‖v − z‖²/(2τ)` by forward-backward
//! splitting: an explicit gradient step on the smooth part and the quadratic
//! fidelity, followed by the pointwise resolvent of the graph term. Steps are
//! found by backtracking on the quadratic upper model and accelerated by
//! Nesterov momentum; momentum is dropped whenever it would increase the
//! objective, so accepted iterates never go uphill. The subproblem is strongly convex with modulus
//! `1/τ − ω`, hence the precondition `τω < 1`.

use crate::energy::GraphSpec;
use crate::error::{Error, Result};
use crate::space::{weighted_distance, weighted_dot, weighted_norm, Element};

/// An energy `φ = S + Σ wᵢ j(uᵢ)` with smooth `S` on a weighted space.
pub trait ProxObjective {
    fn weights(&self) -> &[f64];
    /// Shift `ω` making `φ + (ω/2)‖·‖²` convex.
    fn shift(&self) -> f64;
    fn graph(&self) -> &GraphSpec;
    fn smooth_value(&self, u: &[f64]) -> f64;
    /// Riesz representer of `S'(u)` in the weighted inner product.
    fn smooth_gradient(&self, u: &[f64], out: &mut [f64]);

    fn value(&self, u: &[f64]) -> f64 {
        let graph = self.graph();
        if graph.is_none() {
            return self.smooth_value(u);
        }
        let mut g = 0.0;
        for (w, &v) in self.weights().iter().zip(u) {
            let j = graph.value(v);
            if j.is_infinite() {
                return f64::INFINITY;
            }
            g += w * j;
        }
        self.smooth_value(u) + g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions {
    /// Bound on the fixed-point residual `‖v_{k+1} − v_k‖_H / s`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Keep the objective value after every iteration.
    pub record_history: bool,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions { tol: 1e-10, max_iterations: 20_000, record_history: false }
    }
}

impl ProxOptions {
    pub fn with_tol(tol: f64) -> Self {
        ProxOptions { tol, ..Default::default() }
    }
}

pub struct ProxProblem<'a, O: ?Sized, S> {
    pub objective: &'a O,
    pub tau: f64,
    /// `z`; for a time step this is `uⁿ + τ fⁿ⁺¹`.
    pub anchor: &'a S,
    pub options: ProxOptions,
}

#[derive(Debug, Clone)]
pub struct ProxResult<S> {
    pub minimizer: S,
    /// `g = (z − v)/τ`, an element of `∂φ(v)` up to the tolerance.
    pub selection: S,
    pub residual: f64,
    pub iterations: usize,
    /// `φ(v) + ‖v − z‖²/(2τ)` at the returned point.
    pub objective: f64,
    /// Objective after each iteration, starting with the anchor.
    pub history: Vec<f64>,
}

/// Unique `v` with `v + τβ(v) ∋ z`.
pub fn scalar_resolvent(graph: &GraphSpec, tau: f64, z: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("resolvent step must be positive, got {tau}")));
    }
    match graph {
        GraphSpec::None => Ok(z),
        GraphSpec::AbsoluteValue => Ok(z.signum() * (z.abs() - tau).max(0.0)),
        GraphSpec::IndicatorInterval { .. } => {
            let (a, b) = graph.bounds();
            Ok(z.max(a).min(b))
        }
        GraphSpec::PositivePart => Ok(if z > tau {
            z - tau
        } else if z < 0.0 {
            z
        } else {
            0.0
        }),
        GraphSpec::Power { .. } | GraphSpec::CustomMonotone { .. } => bisect_resolvent(graph, tau, z),
    }
}

/// Bisection on the monotone relation `v ↦ v + τβ(v)`.
fn bisect_resolvent(graph: &GraphSpec, tau: f64, z: f64) -> Result<f64> {
    let fail = || Error::BracketFailure { z, tau };
    if !z.is_finite() {
        return Err(fail());
    }
    let bounds = |v: f64| -> Result<(f64, f64)> {
        let (lo, hi) = graph.subdifferential(v).ok_or_else(fail)?;
        let (lo, hi) = (v + tau * lo, v + tau * hi);
        if lo.is_nan() || hi.is_nan() {
            return Err(fail());
        }
        Ok((lo, hi))
    };

    let mut lo = z.min(0.0) - 1.0;
    let mut hi = z.max(0.0) + 1.0;
    let mut expansions = 0;
    while bounds(lo)?.1 > z || bounds(hi)?.0 < z {
        expansions += 1;
        if expansions > 200 {
            return Err(fail());
        }
        let width = hi - lo;
        if bounds(lo)?.1 > z {
            lo -= width;
        }
        if bounds(hi)?.0 < z {
            hi += width;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let (blo, bhi) = bounds(mid)?;
        if blo <= z && z <= bhi {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if bhi < z {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + z.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn apply_resolvent(graph: &GraphSpec, s: f64, v: &[f64], grad: &[f64], out: &mut [f64]) -> Result<()> {
    for ((o, &v), &g) in out.iter_mut().zip(v).zip(grad) {
        *o = scalar_resolvent(graph, s, v - s * g)?;
    }
    Ok(())
}

/// Proximal step `argmin_v φ(v) + ‖v − z‖²/(2τ)`.
pub fn solve_prox<O, S>(problem: &ProxProblem<'_, O, S>) -> Result<ProxResult<S>>
where
    O: ProxObjective + ?Sized,
    S: Element,
{
    let objective = problem.objective;
    let tau = problem.tau;
    let options = problem.options;
    let z = problem.anchor.values();
    let w = objective.weights();
    if w.len() != z.len() {
        return Err(Error::SpaceMismatch);
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {tau}")));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidInput("prox tolerance must be positive".into()));
    }
    let product = tau * objective.shift();
    if product >= 1.0 {
        return Err(Error::NonconvexSubproblem { product });
    }
    let graph = objective.graph();
    let n = z.len();
    let inv_tau = 1.0 / tau;

    let smooth = |x: &[f64]| {
        objective.smooth_value(x) + 0.5 * inv_tau * weighted_distance(w, x, z).powi(2)
    };
    let gradient = |x: &[f64], out: &mut [f64]| {
        objective.smooth_gradient(x, out);
        for ((o, &xi), &zi) in out.iter_mut().zip(x).zip(z) {
            *o += (xi - zi) * inv_tau;
        }
    };
    let graph_value = |x: &[f64]| -> f64 {
        if graph.is_none() {
            return 0.0;
        }
        let mut total = 0.0;
        for (wi, &xi) in w.iter().zip(x) {
            total += wi * graph.value(xi);
        }
        total
    };

    // accepted iterate x, extrapolated point y
    let mut x = z.to_vec();
    let mut fx = smooth(&x) + graph_value(&x);
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut fy = smooth(&y);
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut history = Vec::new();
    if options.record_history {
        history.push(fx);
    }

    let mut t = 1.0f64;
    let mut step = tau;
    let mut residual = f64::INFINITY;
    let mut grad_trial = vec![0.0; n];
    for iteration in 1..=options.max_iterations {
        gradient(&y, &mut grad);
        let mut s = (1.5 * step).min(tau);
        let ft = loop {
            apply_resolvent(graph, s, &y, &grad, &mut trial)?;
            for ((d, a), b) in diff.iter_mut().zip(&trial).zip(&y) {
                *d = a - b;
            }
            let ft = smooth(&trial);
            let dist2 = weighted_dot(w, &diff, &diff);
            let excess = ft - fy - weighted_dot(w, &grad, &diff);
            // below rounding level the curvature is read off the gradients
            let accept = if excess.abs() > 1e3 * f64::EPSILON * (fy.abs() + ft.abs()) {
                excess <= 0.5 * dist2 / s
            } else {
                gradient(&trial, &mut grad_trial);
                let mut curvature = 0.0;
                for (((wi, a), b), d) in w.iter().zip(&grad_trial).zip(&grad).zip(&diff) {
                    curvature += wi * (a - b) * d;
                }
                curvature <= dist2 / s
            };
            if accept || dist2 == 0.0 {
                break ft;
            }
            s *= 0.5;
            if s < tau * 1e-18 {
                return Err(Error::MaxIterations { iterations: iteration, residual });
            }
        };
        step = s;
        let f_trial = ft + graph_value(&trial);
        let noise = 8.0 * f64::EPSILON * (fx.abs() + f_trial.abs());
        // momentum pointing against the step direction
        let mut uphill = 0.0;
        for (((wi, d), a), b) in w.iter().zip(&diff).zip(&trial).zip(&x) {
            uphill -= wi * d * (a - b);
        }
        if t > 1.0 && (f_trial > fx + noise || uphill > 0.0) {
            y.copy_from_slice(&x);
            fy = smooth(&y);
            t = 1.0;
            continue;
        }
        residual = weighted_norm(w, &diff) / s;
        std::mem::swap(&mut x_prev, &mut x);
        x.copy_from_slice(&trial);
        fx = f_trial.min(fx);
        if options.record_history {
            history.push(fx);
        }
        if residual <= options.tol {
            let selection: Vec<f64> = z.iter().zip(&x).map(|(zi, vi)| (zi - vi) * inv_tau).collect();
            return Ok(ProxResult {
                minimizer: problem.anchor.with_values(x),
                selection: problem.anchor.with_values(selection),
                residual,
                iterations: iteration,
                objective: f_trial,
                history,
            });
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for ((yi, &xi), &pi) in y.iter_mut().zip(&x).zip(&x_prev) {
            *yi = xi + beta * (xi - pi);
        }
        fy = smooth(&y);
        t = t_next;
    }
    Err(Error::MaxIterations { iterations: options.max_iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{EnergyFunctional, EnergySpec, LowerOrderKind, LowerOrderSpec};
    use crate::space::{distance, BoundaryCondition, Grid, GridFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimizer of `j(v) + (v − z)²/(2τ)` by scanning a uniform mesh.
    fn grid_search(graph: &GraphSpec, tau: f64, z: f64, h: f64) -> f64 {
        let lo = z.min(0.0) - 1.0;
        let hi = z.max(0.0) + 1.0;
        let n = ((hi - lo) / h).ceil() as usize;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=n {
            let v = lo + k as f64 * h;
            let f = graph.value(v) + (v - z) * (v - z) / (2.0 * tau);
            if f < best.0 {
                best = (f, v);
            }
        }
        best.1
    }

    #[test]
    fn resolvent_examples() {
        assert_eq!(scalar_resolvent(&GraphSpec::None, 0.3, 3.7).unwrap(), 3.7);
        let abs = GraphSpec::AbsoluteValue;
        assert_eq!(scalar_resolvent(&abs, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(scalar_resolvent(&abs, 1.0, 0.5).unwrap(), 0.0);
        assert!((grid_search(&abs, 1.0, 2.0, 1e-5) - 1.0).abs() < 1e-5);
        assert!(grid_search(&abs, 1.0, 0.5, 1e-5).abs() < 1e-5);
        assert_eq!(scalar_resolvent(&GraphSpec::indicator(0.0, 1.0), 2.0, -3.0).unwrap(), 0.0);
        assert!(scalar_resolvent(&abs, 0.0, 1.0).is_err());
    }

    #[test]
    fn resolvent_solves_the_inclusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let graphs = [
            GraphSpec::Power { exponent: 1.0 },
            GraphSpec::Power { exponent: 2.5 },
            GraphSpec::PositivePart,
            GraphSpec::CustomMonotone { knots: vec![[-1.0, -1.0], [0.0, 0.0], [0.0, 2.0], [0.5, 3.0]] },
        ];
        for g in &graphs {
            for _ in 0..200 {
                let tau = rng.gen_range(0.01..3.0);
                let z = rng.gen_range(-10.0..10.0);
                let v = scalar_resolvent(g, tau, z).unwrap();
                // z − v ∈ τβ(v) up to the bisection resolution
                let (lo, hi) = g.subdifferential(v).unwrap();
                let r = (z - v) / tau;
                let slack = 1e-10 * (1.0 + z.abs()) / tau;
                let (lo2, hi2) = g.subdifferential(v + 1e-13).unwrap();
                let (lo3, hi3) = g.subdifferential(v - 1e-13).unwrap();
                let lo = lo.min(lo2).min(lo3);
                let hi = hi.max(hi2).max(hi3);
                assert!(r >= lo - slack && r <= hi + slack, "{g:?} tau={tau} z={z} v={v}");
            }
        }
    }

    #[test]
    fn zero_energy_prox_is_identity() {
        let grid = Grid::interval(1.0, 9).unwrap();
        let e = EnergyFunctional::new(grid.clone(), EnergySpec::zero()).unwrap();
        let z = GridFunction::from_fn(grid, |p| (4.0 * p[0]).cos());
        let r = solve_prox(&ProxProblem { objective: &e, tau: 0.7, anchor: &z, options: ProxOptions::default() })
            .unwrap();
        assert_eq!(r.minimizer, z);
        assert!(r.selection.values().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn abs_only_prox_is_soft_threshold() {
        let grid = Grid::interval(1.0, 30).unwrap();
        let e = EnergyFunctional::new(grid.clone(), EnergySpec::zero().with_graph(GraphSpec::AbsoluteValue)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = GridFunction::from_fn(grid, |_| rng.gen_range(-2.0..2.0));
        let tau = 0.4;
        let r = solve_prox(&ProxProblem { objective: &e, tau, anchor: &z, options: ProxOptions::default() })
            .unwrap();
        for (v, zi) in r.minimizer.values().iter().zip(z.values()) {
            assert_eq!(*v, scalar_resolvent(&GraphSpec::AbsoluteValue, tau, *zi).unwrap());
        }
    }

    #[test]
    fn objective_history_is_monotone() {
        let grid = Grid::interval(1.0, 40).unwrap();
        let e = EnergyFunctional::new(
            grid.clone(),
            EnergySpec::p_dirichlet(3.0, BoundaryCondition::Dirichlet).with_graph(GraphSpec::indicator(-0.2, 0.6)),
        )
        .unwrap();
        let z = GridFunction::from_fn(grid, |p| (7.0 * p[0]).sin());
        let options = ProxOptions { record_history: true, ..Default::default() };
        let r = solve_prox(&ProxProblem { objective: &e, tau: 1e-2, anchor: &z, options }).unwrap();
        assert!(r.history.len() >= 3);
        for w in r.history[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs());
        }
        assert!(e.inclusion_residual(&r.minimizer, &r.selection) < 1e-8);
    }

    #[test]
    fn rejects_nonconvex_subproblem() {
        let grid = Grid::interval(1.0, 9).unwrap();
        let e = EnergyFunctional::new(
            grid.clone(),
            EnergySpec::default().with_lower_order(LowerOrderSpec::new(LowerOrderKind::Linear { coefficient: -4.0 })),
        )
        .unwrap();
        let z = GridFunction::zeros(grid);
        let problem = ProxProblem { objective: &e, tau: 0.25, anchor: &z, options: ProxOptions::default() };
        assert!(matches!(solve_prox(&problem), Err(Error::NonconvexSubproblem { .. })));
    }

    #[test]
    fn reports_iteration_exhaustion() {
        let grid = Grid::interval(1.0, 50).unwrap();
        let e = EnergyFunctional::new(grid.clone(), EnergySpec::p_dirichlet(2.0, BoundaryCondition::Dirichlet)).unwrap();
        let z = GridFunction::from_fn(grid, |p| p[0]);
        let options = ProxOptions { max_iterations: 3, ..Default::default() };
        let err = solve_prox(&ProxProblem { objective: &e, tau: 1.0, anchor: &z, options }).unwrap_err();
        match err {
            Error::MaxIterations { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual.is_finite() && residual > 0.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nonexpansive_on_random_pairs() {
        let grid = Grid::interval(1.0, 24).unwrap();
        let e = EnergyFunctional::new(
            grid.clone(),
            EnergySpec::p_dirichlet(2.0, BoundaryCondition::Neumann).with_graph(GraphSpec::AbsoluteValue),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let z1 = GridFunction::from_fn(grid.clone(), |p| rng.gen_range(-1.0..1.0) * 0.2 + p[0]);
            let z2 = GridFunction::from_fn(grid.clone(), |p| rng.gen_range(-1.0..1.0) * 0.2 - p[0]);
            let opts = ProxOptions::default();
            let v1 = solve_prox(&ProxProblem { objective: &e, tau: 1e-2, anchor: &z1, options: opts }).unwrap();
            let v2 = solve_prox(&ProxProblem { objective: &e, tau: 1e-2, anchor: &z2, options: opts }).unwrap();
            let lhs = distance(&v1.minimizer, &v2.minimizer).unwrap();
            assert!(lhs <= distance(&z1, &z2).unwrap() + 2e-10);
        }
    }
}
