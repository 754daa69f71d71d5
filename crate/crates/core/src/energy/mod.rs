//! Semiconvex energies on grid functions.
//!
//! An [`EnergyFunctional`] is
//!
//! ```text
//! φ(u) = (c/p) Σ_e w_e [(|Du|_e² + ε²)^{p/2} − ε^p]
//!      + (q/2) ‖u‖²
//!      + Σ_i w_i F₁(x_i, u_i)
//!      + Σ_i w_i j(u_i)
//! ```
//!
//! where `D` is the discrete gradient for the chosen boundary condition,
//! `F₁` is a Lipschitz lower-order antiderivative and `j` a pointwise convex
//! graph term. Everything except `j` forms the smooth part. The shift `ω`
//! making `φ + (ω/2)‖·‖²` convex is the declared Lipschitz constant of `f₁`
//! plus `max(−q, 0)`.

mod graph;
mod lower_order;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use graph::{GraphSpec, Interval};
pub use lower_order::{gauss_antiderivative, LowerOrderKind, LowerOrderSpec};

use crate::error::{Error, Result};
use crate::prox::ProxObjective;
use crate::space::{weighted_dot, BoundaryCondition, Element, Grid, GridFunction};

/// Default ε for `1 < p < 2`.
pub const DEFAULT_EPSILON_SUBQUADRATIC: f64 = 1e-8;

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn neumann() -> BoundaryCondition {
    BoundaryCondition::Neumann
}

/// Declarative description of an energy, as found in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    /// Coefficient `c` of the p-Dirichlet term; zero disables it.
    #[serde(default = "one")]
    pub diffusion: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "neumann")]
    pub bc: BoundaryCondition,
    /// Regularization of `|Du|`; defaults to 1e-8 for `p < 2` and 0 otherwise.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Coefficient `q` of `(q/2)‖u‖²`. Negative values are concave and count
    /// towards the shift.
    #[serde(default)]
    pub quadratic: f64,
    #[serde(default)]
    pub lower_order: Option<LowerOrderSpec>,
    #[serde(default)]
    pub graph: GraphSpec,
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec {
            diffusion: 1.0,
            p: 2.0,
            bc: BoundaryCondition::Neumann,
            epsilon: None,
            quadratic: 0.0,
            lower_order: None,
            graph: GraphSpec::None,
        }
    }
}

impl EnergySpec {
    /// The p-Dirichlet energy `(1/p)∫|∇u|^p` with the given boundary condition.
    pub fn p_dirichlet(p: f64, bc: BoundaryCondition) -> Self {
        EnergySpec { p, bc, ..Default::default() }
    }

    /// `φ ≡ 0`.
    pub fn zero() -> Self {
        EnergySpec { diffusion: 0.0, ..Default::default() }
    }

    pub fn with_graph(mut self, graph: GraphSpec) -> Self {
        self.graph = graph;
        self
    }

    pub fn with_lower_order(mut self, lower_order: LowerOrderSpec) -> Self {
        self.lower_order = Some(lower_order);
        self
    }

    pub fn with_quadratic(mut self, quadratic: f64) -> Self {
        self.quadratic = quadratic;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }
}

#[derive(Debug, Clone)]
pub struct EnergyFunctional {
    grid: Arc<Grid>,
    spec: EnergySpec,
    epsilon: f64,
    epsilon_p: f64,
    omega: f64,
}

impl EnergyFunctional {
    pub fn new(grid: Arc<Grid>, spec: EnergySpec) -> Result<Self> {
        if !(spec.p.is_finite() && spec.p > 1.0) {
            return Err(Error::Unsupported(format!(
                "p-Dirichlet exponent must satisfy p > 1, got {}",
                spec.p
            )));
        }
        if !(spec.diffusion.is_finite() && spec.diffusion >= 0.0) {
            return Err(Error::InvalidEnergy("diffusion coefficient must be >= 0".into()));
        }
        if !spec.quadratic.is_finite() {
            return Err(Error::InvalidEnergy("quadratic coefficient must be finite".into()));
        }
        let epsilon = spec.epsilon.unwrap_or(if spec.p < 2.0 {
            DEFAULT_EPSILON_SUBQUADRATIC
        } else {
            0.0
        });
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidEnergy("epsilon must be >= 0".into()));
        }
        if spec.p < 2.0 && epsilon == 0.0 && spec.diffusion > 0.0 {
            return Err(Error::Unsupported(
                "p < 2 requires a positive regularization epsilon".into(),
            ));
        }
        spec.graph.validate()?;
        if let Some(lo) = &spec.lower_order {
            validate_lower_order(lo, &grid)?;
        }
        let omega = spec.lower_order.as_ref().map_or(0.0, |lo| lo.lipschitz())
            + (-spec.quadratic).max(0.0);
        Ok(EnergyFunctional {
            grid,
            epsilon_p: epsilon.powf(spec.p),
            epsilon,
            spec,
            omega,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &EnergySpec {
        &self.spec
    }

    pub fn p(&self) -> f64 {
        self.spec.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Semiconvexity shift `ω ≥ 0`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Adds `(extra/2)‖u‖²`; the shift drops by `extra`, clamped at zero.
    pub fn shifted(&self, extra: f64) -> Result<EnergyFunctional> {
        if !(extra.is_finite() && extra >= 0.0) {
            return Err(Error::InvalidEnergy("shift increment must be >= 0".into()));
        }
        let mut spec = self.spec.clone();
        spec.quadratic += extra;
        let mut shifted = EnergyFunctional::new(self.grid.clone(), spec)?;
        shifted.omega = (self.omega - extra).max(0.0);
        Ok(shifted)
    }

    fn check(&self, u: &GridFunction) {
        assert!(
            Arc::ptr_eq(u.grid(), &self.grid) || **u.grid() == *self.grid,
            "grid function is not on the energy's grid"
        );
    }

    /// `φ(u)`; `+∞` exactly when the graph term is infinite.
    pub fn evaluate(&self, u: &GridFunction) -> f64 {
        self.check(u);
        self.value_of(u.values())
    }

    /// `φ_ω(u) = φ(u) + (ω/2)‖u‖²`.
    pub fn evaluate_shifted(&self, u: &GridFunction) -> f64 {
        let v = u.values();
        self.value_of(v) + 0.5 * self.omega * weighted_dot(self.grid.weights(), v, v)
    }

    pub fn value_of(&self, u: &[f64]) -> f64 {
        let g = self.graph_value(u);
        if g.is_infinite() {
            return f64::INFINITY;
        }
        self.smooth_value_of(u) + g
    }

    /// `Σ wᵢ j(uᵢ)`.
    pub fn graph_value(&self, u: &[f64]) -> f64 {
        if self.spec.graph.is_none() {
            return 0.0;
        }
        let mut total = 0.0;
        for (w, &v) in self.grid.weights().iter().zip(u) {
            let j = self.spec.graph.value(v);
            if j.is_infinite() {
                return f64::INFINITY;
            }
            total += w * j;
        }
        total
    }

    pub fn smooth_value_of(&self, u: &[f64]) -> f64 {
        let weights = self.grid.weights();
        let mut total = 0.0;
        if self.spec.diffusion != 0.0 {
            let p = self.spec.p;
            let eps2 = self.epsilon * self.epsilon;
            let mut acc = 0.0;
            for e in self.grid.edges(self.spec.bc) {
                let d = e.difference(u);
                let s = d * d + eps2;
                let term = if p == 2.0 { d * d } else { s.powf(0.5 * p) - self.epsilon_p };
                acc += e.weight * term;
            }
            total += self.spec.diffusion / p * acc;
        }
        if self.spec.quadratic != 0.0 {
            total += 0.5 * self.spec.quadratic * weighted_dot(weights, u, u);
        }
        if let Some(lo) = &self.spec.lower_order {
            for (i, (&w, &v)) in weights.iter().zip(u).enumerate() {
                total += w * lo.antiderivative(self.grid.point(i), v);
            }
        }
        total
    }

    /// Riesz representer of the derivative of the smooth part in the
    /// weighted inner product, written into `out`.
    pub fn smooth_gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let weights = self.grid.weights();
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.spec.diffusion != 0.0 {
            let p = self.spec.p;
            let eps2 = self.epsilon * self.epsilon;
            let c = self.spec.diffusion;
            for e in self.grid.edges(self.spec.bc) {
                let d = e.difference(u);
                if d == 0.0 {
                    continue;
                }
                let scale = if p == 2.0 {
                    1.0
                } else {
                    (d * d + eps2).powf(0.5 * (p - 2.0))
                };
                let flux = c * e.weight * scale * d / e.length;
                if let Some(h) = e.head {
                    out[h] += flux;
                }
                if let Some(t) = e.tail {
                    out[t] -= flux;
                }
            }
            for (o, w) in out.iter_mut().zip(weights) {
                *o /= w;
            }
        }
        if self.spec.quadratic != 0.0 {
            for (o, v) in out.iter_mut().zip(u) {
                *o += self.spec.quadratic * v;
            }
        }
        if let Some(lo) = &self.spec.lower_order {
            for (i, (o, &v)) in out.iter_mut().zip(u).enumerate() {
                *o += lo.value(self.grid.point(i), v);
            }
        }
    }

    /// `−div(|Du|^{p−2}Du) + q·u + f₁(x, u)` in the weighted inner product.
    pub fn smooth_gradient(&self, u: &GridFunction) -> GridFunction {
        self.check(u);
        let mut out = vec![0.0; u.len()];
        self.smooth_gradient_into(u.values(), &mut out);
        u.with_values(out)
    }

    /// `‖dist(g − ∇S(v), β(v))‖_H`: how far `g` is from `∂φ(v)`.
    pub fn inclusion_residual(&self, v: &GridFunction, g: &GridFunction) -> f64 {
        self.check(v);
        self.check(g);
        let mut grad = vec![0.0; v.len()];
        self.smooth_gradient_into(v.values(), &mut grad);
        let weights = self.grid.weights();
        let mut acc = 0.0;
        for i in 0..v.len() {
            let d = self
                .spec
                .graph
                .distance_to_subdifferential(v.values()[i], g.values()[i] - grad[i]);
            if d.is_infinite() {
                return f64::INFINITY;
            }
            acc += weights[i] * d * d;
        }
        acc.sqrt()
    }

    /// Randomized midpoint-convexity test of `φ_ω` on `trials` triples.
    ///
    /// Half of the pairs differ by a constant, which exercises the kernel of
    /// the Neumann p-Dirichlet term where only the lower-order part and the
    /// shift decide convexity.
    pub fn convexity_probe(&self, seed: u64, trials: usize) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = self.spec.graph.bounds();
        let lo = a.max(-2.0);
        let hi = b.min(2.0);
        let n = self.grid.len();
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if hi > lo {
                (0..n).map(|_| rng.gen_range(lo..hi)).collect()
            } else {
                vec![lo; n]
            }
        };
        for trial in 0..trials {
            let u = sample(&mut rng);
            let v = if trial % 2 == 0 {
                sample(&mut rng)
            } else {
                let shift = rng.gen_range(-1.0..1.0);
                u.iter().map(|x| (x + shift).clamp(lo, hi)).collect()
            };
            let theta: f64 = rng.gen_range(0.01..0.99);
            let mid: Vec<f64> = u
                .iter()
                .zip(&v)
                .map(|(x, y)| theta * x + (1.0 - theta) * y)
                .collect();
            let w = self.grid.weights();
            let shifted = |x: &[f64]| self.value_of(x) + 0.5 * self.omega * weighted_dot(w, x, x);
            let (fu, fv, fm) = (shifted(&u), shifted(&v), shifted(&mid));
            let bound = theta * fu + (1.0 - theta) * fv + 1e-9 * (1.0 + fu.abs() + fv.abs());
            if !(fm <= bound) {
                return Err(Error::InvalidEnergy(format!(
                    "convexity probe failed on trial {trial}: declared shift omega = {} is too small",
                    self.omega
                )));
            }
        }
        Ok(())
    }
}

impl ProxObjective for EnergyFunctional {
    fn weights(&self) -> &[f64] {
        self.grid.weights()
    }

    fn shift(&self) -> f64 {
        self.omega
    }

    fn graph(&self) -> &GraphSpec {
        &self.spec.graph
    }

    fn smooth_value(&self, u: &[f64]) -> f64 {
        self.smooth_value_of(u)
    }

    fn smooth_gradient(&self, u: &[f64], out: &mut [f64]) {
        self.smooth_gradient_into(u, out)
    }
}

/// Checks `f₁(x, 0) = 0` and the declared Lipschitz bound on random samples.
fn validate_lower_order(lo: &LowerOrderSpec, grid: &Grid) -> Result<()> {
    let lipschitz = lo.lipschitz();
    if !(lipschitz.is_finite() && lipschitz >= 0.0) {
        return Err(Error::InvalidEnergy("lipschitz constant must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..grid.len() {
        if lo.value(grid.point(i), 0.0) != 0.0 {
            return Err(Error::InvalidEnergy("lower-order term must vanish at u = 0".into()));
        }
    }
    for _ in 0..256 {
        let x = grid.point(rng.gen_range(0..grid.len()));
        let u: f64 = rng.gen_range(-4.0..4.0);
        let v: f64 = rng.gen_range(-4.0..4.0);
        let diff = (lo.value(x, u) - lo.value(x, v)).abs();
        if diff > lipschitz * (u - v).abs() * (1.0 + 1e-12) + 1e-14 {
            return Err(Error::InvalidEnergy(format!(
                "lower-order term violates its declared lipschitz constant {lipschitz}"
            )));
        }
    }
    Ok(())
}
