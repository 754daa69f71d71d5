//! Nemytskii operators `(Gv)(t, x) = g(t, x, v(t, x))` with sublinear growth
//! `|g(t, x, v)| ≤ L|v| + b(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::TimeMesh;
use crate::forcing::ForcingSpec;
use crate::space::{weighted_norm, Element, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrand {
    /// `√|v|`; growth `L = 1, b = 1` since `√|v| ≤ |v| + 1`.
    SqrtAbs,
    /// `λv`; growth `L = |λ|, b = 0`.
    Linear { lambda: f64 },
    /// `a·v / (1 + b·v²)` with `b ≥ 0`; growth `L = |a|, b = 0`.
    Logistic { a: f64, b: f64 },
    /// `λv + f(t, x)`; growth `L = |λ|, b(t) = sup |f(t, ·)|`.
    AffineForced { lambda: f64, forcing: ForcingSpec },
    /// `v²`. Not sublinear; only useful for exercising the growth audit.
    Square,
}

impl Integrand {
    pub fn validate(&self) -> Result<()> {
        match self {
            Integrand::Logistic { a, b } if !(a.is_finite() && b.is_finite() && *b >= 0.0) => {
                Err(Error::InvalidInput(format!("logistic integrand needs finite a and b >= 0, got a={a}, b={b}")))
            }
            Integrand::Linear { lambda } | Integrand::AffineForced { lambda, .. } if !lambda.is_finite() => {
                Err(Error::InvalidInput("integrand coefficient must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn value(&self, t: f64, x: Point, v: f64) -> f64 {
        match self {
            Integrand::SqrtAbs => v.abs().sqrt(),
            Integrand::Linear { lambda } => lambda * v,
            Integrand::Logistic { a, b } => a * v / (1.0 + b * v * v),
            Integrand::AffineForced { lambda, forcing } => lambda * v + forcing.value(t, x),
            Integrand::Square => v * v,
        }
    }

    pub fn documented_growth(&self) -> GrowthBound {
        match self {
            Integrand::SqrtAbs => GrowthBound::constant(1.0, 1.0),
            Integrand::Linear { lambda } => GrowthBound::constant(lambda.abs(), 0.0),
            Integrand::Logistic { a, .. } => GrowthBound::constant(a.abs(), 0.0),
            Integrand::AffineForced { lambda, forcing } => GrowthBound::constant(lambda.abs(), forcing.sup_abs()),
            Integrand::Square => GrowthBound::constant(1.0, 1.0),
        }
    }

    /// Lipschitz constant in `v`, when there is one.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Integrand::SqrtAbs | Integrand::Square => None,
            Integrand::Linear { lambda } | Integrand::AffineForced { lambda, .. } => Some(lambda.abs()),
            Integrand::Logistic { a, .. } => Some(a.abs()),
        }
    }
}

/// `b(t)`: one value for all times, or one sample per mesh node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GrowthTerm {
    Constant(f64),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    #[serde(rename = "L")]
    pub l: f64,
    pub b: GrowthTerm,
}

impl GrowthBound {
    pub fn constant(l: f64, b: f64) -> Self {
        GrowthBound { l, b: GrowthTerm::Constant(b) }
    }

    pub fn validate(&self, mesh: &TimeMesh) -> Result<()> {
        if !(self.l.is_finite() && self.l >= 0.0) {
            return Err(Error::InvalidInput(format!("growth constant L must be >= 0, got {}", self.l)));
        }
        let ok = |b: f64| b.is_finite() && b >= 0.0;
        match &self.b {
            GrowthTerm::Constant(b) if !ok(*b) => Err(Error::InvalidInput(format!("growth term b must be >= 0, got {b}"))),
            GrowthTerm::Samples(s) if s.len() != mesh.nodes().len() => Err(Error::MeshMismatch(format!(
                "{} growth samples for {} mesh nodes",
                s.len(),
                mesh.nodes().len()
            ))),
            GrowthTerm::Samples(s) if !s.iter().all(|b| ok(*b)) => {
                Err(Error::InvalidInput("growth samples must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    /// `b(tₙ)`.
    pub fn b_at(&self, n: usize) -> f64 {
        match &self.b {
            GrowthTerm::Constant(b) => *b,
            GrowthTerm::Samples(s) => s[n],
        }
    }

    /// `∫₀ᵀ b² dt` with `b` constant on `(tₙ, tₙ₊₁]`.
    pub fn b_l2_squared(&self, mesh: &TimeMesh) -> f64 {
        (0..mesh.steps()).map(|n| mesh.step(n) * self.b_at(n + 1).powi(2)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GrowthAudit {
    /// Largest `(|Gv| − L|v| − b(t))₊` over all evaluations.
    pub max_violation: f64,
    pub violations: usize,
    pub worst_time_index: usize,
    pub evaluations: usize,
}

impl GrowthAudit {
    pub fn merge(&mut self, other: &GrowthAudit) {
        if other.max_violation > self.max_violation {
            self.max_violation = other.max_violation;
            self.worst_time_index = other.worst_time_index;
        }
        self.violations += other.violations;
        self.evaluations += other.evaluations;
    }
}

/// Per time node: `‖Gv(tₙ)‖` and the bound `L‖v(tₙ)‖ + b(tₙ)·‖1‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthSample {
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemytskiiSpec {
    pub integrand: Integrand,
    /// Declared constants; the documented ones of the integrand when absent.
    #[serde(default)]
    pub growth: Option<GrowthBound>,
}

impl NemytskiiSpec {
    pub fn new(integrand: Integrand) -> Self {
        NemytskiiSpec { integrand, growth: None }
    }

    pub fn with_growth(mut self, growth: GrowthBound) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn growth(&self) -> GrowthBound {
        self.growth.clone().unwrap_or_else(|| self.integrand.documented_growth())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.integrand, Integrand::Linear { lambda } if lambda == 0.0)
    }

    pub fn validate(&self, mesh: &TimeMesh) -> Result<()> {
        self.integrand.validate()?;
        self.growth().validate(mesh)
    }

    /// `G` applied to one state at time node `n`.
    pub fn apply_at<S: Element>(&self, n: usize, t: f64, v: &S) -> (S, GrowthAudit) {
        let growth = self.growth();
        let (l, b) = (growth.l, growth.b_at(n));
        let mut audit = GrowthAudit { evaluations: v.len(), worst_time_index: n, ..Default::default() };
        let values = v
            .values()
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                let g = self.integrand.value(t, v.point(i), vi);
                let excess = g.abs() - l * vi.abs() - b;
                // relative rounding allowance so that equality cases do not count
                if excess > 1e-12 * (1.0 + g.abs()) {
                    audit.violations += 1;
                    audit.max_violation = audit.max_violation.max(excess);
                }
                g
            })
            .collect();
        (v.with_values(values), audit)
    }

    /// `Gv` on every node of `mesh`.
    pub fn apply<S: Element>(&self, states: &[S], mesh: &TimeMesh) -> Result<(Vec<S>, GrowthAudit)> {
        if states.len() != mesh.nodes().len() {
            return Err(Error::MeshMismatch(format!(
                "{} samples for {} mesh nodes",
                states.len(),
                mesh.nodes().len()
            )));
        }
        let mut audit = GrowthAudit::default();
        let mut out = Vec::with_capacity(states.len());
        for (n, v) in states.iter().enumerate() {
            let (g, a) = self.apply_at(n, mesh.t(n), v);
            audit.merge(&a);
            out.push(g);
        }
        Ok((out, audit))
    }

    pub fn growth_bound<S: Element>(&self, states: &[S], mesh: &TimeMesh) -> Result<Vec<GrowthSample>> {
        let (g, _) = self.apply(states, mesh)?;
        let growth = self.growth();
        Ok(states
            .iter()
            .zip(&g)
            .enumerate()
            .map(|(n, (v, gv))| GrowthSample {
                norm: weighted_norm(gv.weights(), gv.values()),
                bound: growth.l * weighted_norm(v.weights(), v.values()) + growth.b_at(n) * v.measure().sqrt(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Grid, GridFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<Integrand> {
        vec![
            Integrand::SqrtAbs,
            Integrand::Linear { lambda: -0.7 },
            Integrand::Logistic { a: 2.0, b: 1.0 },
            Integrand::AffineForced {
                lambda: 0.5,
                forcing: ForcingSpec::Mode { amplitude: 1.5, k: 2, frequency: 3.0 },
            },
        ]
    }

    #[test]
    fn trivial_values() {
        let grid = Grid::interval(1.0, 5).unwrap();
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let v = vec![GridFunction::constant(grid.clone(), 4.0); 3];
        let (g, audit) = NemytskiiSpec::new(Integrand::SqrtAbs).apply(&v, &mesh).unwrap();
        assert!(g.iter().all(|s| s.values().iter().all(|x| *x == 2.0)));
        assert_eq!(audit.violations, 0);
        let (g, _) = NemytskiiSpec::new(Integrand::Linear { lambda: 0.0 }).apply(&v, &mesh).unwrap();
        assert!(g.iter().all(|s| s.values().iter().all(|x| *x == 0.0)));
        assert!(NemytskiiSpec::new(Integrand::SqrtAbs).apply(&v[..2], &mesh).is_err());
    }

    #[test]
    fn audit_reports_superlinear_growth() {
        let grid = Grid::interval(1.0, 5).unwrap();
        let mesh = TimeMesh::uniform(1.0, 1).unwrap();
        let v = vec![GridFunction::constant(grid, 3.0); 2];
        let spec = NemytskiiSpec::new(Integrand::Square).with_growth(GrowthBound::constant(1.0, 1.0));
        let (_, audit) = spec.apply(&v, &mesh).unwrap();
        assert!((audit.max_violation - 5.0).abs() < 1e-12);
        assert_eq!(audit.violations, 10);
    }

    #[test]
    fn norm_bounds() {
        let grid = Grid::interval(1.0, 9).unwrap();
        let mesh = TimeMesh::uniform(1.0, 1).unwrap();
        let spec = NemytskiiSpec::new(Integrand::SqrtAbs);
        let s = spec.growth_bound(&[GridFunction::constant(grid.clone(), 4.0), GridFunction::zeros(grid.clone())], &mesh).unwrap();
        assert!((s[0].norm - 2.0).abs() < 1e-12 && (s[0].bound - 5.0).abs() < 1e-12);
        assert_eq!(s[1].norm, 0.0);
        assert!((s[1].bound - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = Grid::rectangle(1.0, 2.0, 7, 9).unwrap();
        let mesh = TimeMesh::uniform(2.0, 5).unwrap();
        for integrand in catalog() {
            let spec = NemytskiiSpec::new(integrand);
            let states: Vec<_> = (0..6)
                .map(|_| GridFunction::from_fn(grid.clone(), |_| rng.gen_range(-5.0..5.0)))
                .collect();
            let (_, audit) = spec.apply(&states, &mesh).unwrap();
            assert_eq!(audit.violations, 0, "{spec:?}");
            for s in spec.growth_bound(&states, &mesh).unwrap() {
                assert!(s.norm <= s.bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn continuity_probe() {
        let grid = Grid::interval(1.0, 17).unwrap();
        let mesh = TimeMesh::uniform(0.5, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base: Vec<_> = (0..=8)
            .map(|_| GridFunction::from_fn(grid.clone(), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let dir: Vec<_> = (0..=8)
            .map(|_| GridFunction::from_fn(grid.clone(), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let l2_time = |a: &[GridFunction], b: &[GridFunction]| -> f64 {
            (0..mesh.steps())
                .map(|n| {
                    let (x, y) = (&a[n + 1], &b[n + 1]);
                    mesh.step(n) * crate::space::distance(x, y).unwrap().powi(2)
                })
                .sum::<f64>()
                .sqrt()
        };
        let volume = grid.measure() * mesh.t_final();
        for integrand in catalog() {
            let spec = NemytskiiSpec::new(integrand.clone());
            let (g0, _) = spec.apply(&base, &mesh).unwrap();
            let mut last = f64::INFINITY;
            for k in 1..8 {
                let delta = 10f64.powi(-k);
                let moved: Vec<_> = base
                    .iter()
                    .zip(&dir)
                    .map(|(b, d)| b.with_values(b.values().iter().zip(d.values()).map(|(x, y)| x + delta * y).collect()))
                    .collect();
                let (g1, _) = spec.apply(&moved, &mesh).unwrap();
                let dv = l2_time(&base, &moved);
                let dg = l2_time(&g0, &g1);
                match integrand.lipschitz() {
                    Some(l) => assert!(dg <= l * dv * (1.0 + 1e-9) + 1e-15),
                    None => assert!(dg <= 1.5 * dv.sqrt() * volume.powf(0.25)),
                }
                assert!(dg <= last);
                last = dg;
            }
            assert!(last < 1e-3);
        }
    }

    #[test]
    fn sampled_growth_terms() {
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let g = GrowthBound { l: 0.0, b: GrowthTerm::Samples(vec![0.0, 1.0, 2.0]) };
        g.validate(&mesh).unwrap();
        assert!((g.b_l2_squared(&mesh) - 2.5).abs() < 1e-15);
        let short = GrowthBound { l: 0.0, b: GrowthTerm::Samples(vec![1.0]) };
        assert!(short.validate(&mesh).is_err());
        let spec: NemytskiiSpec = serde_json::from_str(r#"{"integrand":{"kind":"sqrt_abs"},"growth":{"L":1,"b":1}}"#).unwrap();
        assert_eq!(spec.growth(), GrowthBound::constant(1.0, 1.0));
    }
}
