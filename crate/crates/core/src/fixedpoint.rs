//! Picard iteration for `u' + ∂φ(u) ∋ Gu` over whole trajectories.
//!
//! Iterates `v_{k+1} = (1 − θ)v_k + θ·evolve(u₀, G v_k)` and stops once the
//! sup-in-time distance `d_k = maxₙ ‖v_k(tₙ) − v_{k−1}(tₙ)‖` drops below the
//! tolerance. The iteration finds *a* fixed point; which one depends on the
//! initial guess.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_with, Stepper, TimeMesh, Trajectory};
use crate::perturbation::{GrowthAudit, GrowthBound, NemytskiiSpec};
use crate::space::{weighted_distance, weighted_norm, Element};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialGuess {
    #[default]
    Zero,
    /// `u₀` at every time.
    Frozen,
    /// The same constant at every node and time.
    ConstantField { value: f64 },
    /// Nodal values per mesh node.
    Samples { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// `θ ∈ (0, 1]`.
    pub relaxation: f64,
    pub initial_guess: InitialGuess,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig { tolerance: 1e-9, max_iterations: 200, relaxation: 1.0, initial_guess: InitialGuess::Zero }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("Picard tolerance must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidInput(format!("relaxation must lie in (0, 1], got {}", self.relaxation)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("Picard needs at least one iteration".into()));
        }
        Ok(())
    }

    fn guess<S: Element>(&self, u0: &S, mesh: &TimeMesh) -> Result<Vec<S>> {
        let count = mesh.nodes().len();
        Ok(match &self.initial_guess {
            InitialGuess::Zero => vec![u0.zeros_like(); count],
            InitialGuess::Frozen => vec![u0.clone(); count],
            InitialGuess::ConstantField { value } => vec![u0.constant_like(*value); count],
            InitialGuess::Samples { values } => {
                if values.len() != count || values.iter().any(|v| v.len() != u0.len()) {
                    return Err(Error::MeshMismatch("initial guess samples do not match mesh and space".into()));
                }
                values.iter().map(|v| u0.with_values(v.clone())).collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    /// `d_k` for every completed iteration.
    pub distances: Vec<f64>,
    pub converged: bool,
    pub evolutions: usize,
    /// Worst ratio of `‖u(tₙ)‖` to the a priori bound for perturbed flows.
    pub schaefer_ratio: f64,
    pub audit: GrowthAudit,
}

impl FixedPointReport {
    /// `d_{k+1}/d_k` for consecutive nonzero distances.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.distances
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

fn sup_distance<S: Element>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| weighted_distance(x.weights(), x.values(), y.values()))
        .fold(0.0, f64::max)
}

/// Solves the perturbed flow by Picard iteration. Returns the last evolution
/// together with the report; non-convergence is flagged, not an error.
pub fn solve_perturbed<S, St>(
    stepper: &mut St,
    nemytskii: &NemytskiiSpec,
    u0: &S,
    mesh: &TimeMesh,
    config: &PicardConfig,
) -> Result<(Trajectory<S>, FixedPointReport)>
where
    S: Element,
    St: Stepper<S> + ?Sized,
{
    config.validate()?;
    nemytskii.validate(mesh)?;
    let theta = config.relaxation;
    let mut iterate = config.guess(u0, mesh)?;
    let mut audit = GrowthAudit::default();
    let mut distances = Vec::new();
    let mut last: Option<(Vec<S>, Trajectory<S>)> = None;
    let mut converged = false;
    let mut evolutions = 0;

    for _ in 0..config.max_iterations {
        let (forcing, a) = nemytskii.apply(&iterate, mesh)?;
        audit.merge(&a);
        if let Some((previous, _)) = &last {
            // same forcing, same evolution
            if previous.iter().zip(&forcing).all(|(p, f)| p.values() == f.values()) {
                distances.push(0.0);
                converged = true;
                break;
            }
        }
        let tr = evolve_with(stepper, u0, &forcing, mesh)?;
        evolutions += 1;
        let next: Vec<S> = if theta == 1.0 {
            tr.states.clone()
        } else {
            iterate
                .iter()
                .zip(&tr.states)
                .map(|(v, u)| {
                    v.with_values(
                        v.values().iter().zip(u.values()).map(|(a, b)| (1.0 - theta) * a + theta * b).collect(),
                    )
                })
                .collect()
        };
        let d = sup_distance(&iterate, &next);
        distances.push(d);
        iterate = next;
        last = Some((forcing, tr));
        if d <= config.tolerance {
            converged = true;
            break;
        }
    }

    let (_, trajectory) = last.expect("at least one evolution");
    let growth = nemytskii.growth();
    let schaefer_ratio = schaefer_monitor(&trajectory, &growth, trajectory.omega, u0);
    let report = FixedPointReport {
        evolutions,
        distances,
        converged,
        schaefer_ratio,
        audit,
    };
    Ok((trajectory, report))
}

/// `max_{n≥1} ‖u(tₙ)‖ / [(‖u₀‖² + ‖b‖²_{L²(0,T)}|Ω|)^{1/2} e^{(2L + 1 + 2ω)tₙ/2}]`.
pub fn schaefer_monitor<S: Element>(tr: &Trajectory<S>, growth: &GrowthBound, omega: f64, u0: &S) -> f64 {
    let base = weighted_norm(u0.weights(), u0.values()).powi(2) + growth.b_l2_squared(&tr.mesh) * u0.measure();
    let rate = 0.5 * (2.0 * growth.l + 1.0 + 2.0 * omega);
    tr.states
        .iter()
        .zip(tr.mesh.nodes())
        .skip(1)
        .map(|(u, &t)| {
            let lhs = weighted_norm(u.weights(), u.values());
            let rhs = base.sqrt() * (rate * t).exp();
            if lhs == 0.0 {
                0.0
            } else {
                lhs / rhs
            }
        })
        .fold(0.0, f64::max)
}
