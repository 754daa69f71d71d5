//! A priori, smoothing and contraction inequalities evaluated on computed
//! trajectories.
//!
//! Time integrals use the same right-endpoint convention as the implicit
//! scheme, `∫₀ᵀ ψ dt ≈ Σₙ τₙ ψ(tₙ₊₁)`, and time weights `t` are taken at
//! `tₙ₊₁`. Every entry reports `ratio = left side / right side` (with
//! `0/0 = 0`) and passes when `ratio ≤ slack`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::space::{weighted_distance, weighted_norm, Element};

/// Inclusion residuals above this count as a failed step.
pub const INCLUSION_REFERENCE: f64 = 1e-6;
/// Absolute allowance in the discrete dissipation inequality.
pub const DISSIPATION_ALLOWANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub name: String,
    pub ratio: f64,
    pub slack: f64,
    pub pass: bool,
    pub worst_time_index: usize,
}

impl EstimateEntry {
    pub fn new(name: &str, ratio: f64, slack: f64, worst_time_index: usize) -> Self {
        EstimateEntry { name: name.to_string(), ratio, slack, pass: ratio <= slack, worst_time_index }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EstimateReport {
    pub entries: Vec<EstimateEntry>,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn push(&mut self, entry: EstimateEntry) {
        self.entries.push(entry);
    }

    pub fn failures(&self) -> impl Iterator<Item = &EstimateEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Slack {
    pub apriori: f64,
    pub energy_integral: f64,
    pub smoothing: f64,
    pub velocity: f64,
    /// `1 + 10(τ_max + h)` when absent.
    pub contraction: Option<f64>,
    pub schaefer: f64,
    pub inclusion: f64,
    pub dissipation: f64,
}

impl Default for Slack {
    fn default() -> Self {
        Slack {
            apriori: 1.1,
            energy_integral: 1.1,
            smoothing: 1.1,
            velocity: 1.1,
            contraction: None,
            schaefer: 1.1,
            inclusion: 1.0,
            dissipation: 1.0,
        }
    }
}

impl Slack {
    pub const NAMES: [&'static str; 8] =
        ["apriori", "energy_integral", "smoothing", "velocity", "contraction", "schaefer", "inclusion", "dissipation"];

    /// Looser smoothing and velocity slack for nonsmooth initial data.
    pub fn rough() -> Self {
        Slack { smoothing: 1.2, velocity: 1.2, ..Slack::default() }
    }

    pub fn contraction_for(&self, tau_max: f64, h: f64) -> f64 {
        self.contraction.unwrap_or(1.0 + 10.0 * (tau_max + h))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput(format!("slack for {name} must be positive, got {value}")));
        }
        match name {
            "apriori" => self.apriori = value,
            "energy_integral" => self.energy_integral = value,
            "smoothing" => self.smoothing = value,
            "velocity" => self.velocity = value,
            "contraction" => self.contraction = Some(value),
            "schaefer" => self.schaefer = value,
            "inclusion" => self.inclusion = value,
            "dissipation" => self.dissipation = value,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown estimate {other:?}; expected one of {}",
                    Slack::NAMES.join(", ")
                )))
            }
        }
        Ok(())
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    let lhs = lhs.max(0.0);
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

fn h_norm<S: Element>(u: &S) -> f64 {
    weighted_norm(u.weights(), u.values())
}

fn validate<S: Element>(tr: &Trajectory<S>) -> Result<()> {
    let n = tr.mesh.nodes().len();
    if tr.states.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    if tr.states.len() != n || tr.energies.len() != n || tr.forcings.len() != n {
        return Err(Error::MeshMismatch("trajectory records do not match its mesh".into()));
    }
    if let Some(index) = tr.energies.iter().position(|e| !e.is_finite()) {
        return Err(Error::InfiniteEnergy { index });
    }
    Ok(())
}

/// The integrals shared by several checks.
struct Integrals {
    /// `∫φ(u)`
    energy: f64,
    /// `∫‖f‖²`
    forcing: f64,
    /// `∫ t‖f‖²`
    weighted_forcing: f64,
    /// `∫‖u‖²`
    state: f64,
}

fn integrals<S: Element>(tr: &Trajectory<S>) -> Integrals {
    let mut out = Integrals { energy: 0.0, forcing: 0.0, weighted_forcing: 0.0, state: 0.0 };
    for n in 0..tr.steps() {
        let tau = tr.mesh.step(n);
        let f2 = h_norm(&tr.forcings[n + 1]).powi(2);
        out.energy += tau * tr.energies[n + 1];
        out.forcing += tau * f2;
        out.weighted_forcing += tau * tr.mesh.t(n + 1) * f2;
        out.state += tau * h_norm(&tr.states[n + 1]).powi(2);
    }
    out
}

fn worst(values: impl Iterator<Item = (usize, f64)>) -> (f64, usize) {
    values.fold((0.0, 0), |best, (i, r)| if r > best.0 || r.is_nan() { (r, i) } else { best })
}

/// `‖u(t)‖ ≤ (‖u₀‖² + ∫₀ᵀ‖f‖²)^{1/2} e^{(1+2ω)t/2}`.
pub fn check_apriori<S: Element>(tr: &Trajectory<S>, slack: f64) -> Result<EstimateEntry> {
    validate(tr)?;
    let base = (h_norm(&tr.states[0]).powi(2) + integrals(tr).forcing).sqrt();
    let rate = 0.5 * (1.0 + 2.0 * tr.omega);
    let (r, i) = worst(
        tr.states
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, u)| (n, ratio(h_norm(u), base * (rate * tr.mesh.t(n)).exp()))),
    );
    Ok(EstimateEntry::new("apriori", r, slack, i))
}

/// `∫₀ᵀφ(u) ≤ ½∫‖f‖² + (1+ω)/2 ∫‖u‖² + ½‖u₀‖²`.
pub fn check_energy_integral<S: Element>(tr: &Trajectory<S>, slack: f64) -> Result<EstimateEntry> {
    validate(tr)?;
    let int = integrals(tr);
    let rhs = 0.5 * int.forcing + 0.5 * (1.0 + tr.omega) * int.state + 0.5 * h_norm(&tr.states[0]).powi(2);
    Ok(EstimateEntry::new("energy_integral", ratio(int.energy, rhs), slack, tr.steps()))
}

/// `t φ(u(t)) ≤ ∫₀ᵀφ(u) + ½∫ t‖f‖²` for every node `t > 0`.
pub fn check_smoothing<S: Element>(tr: &Trajectory<S>, slack: f64) -> Result<EstimateEntry> {
    validate(tr)?;
    let int = integrals(tr);
    let rhs = int.energy + 0.5 * int.weighted_forcing;
    let (r, i) = worst((1..tr.states.len()).map(|n| (n, ratio(tr.mesh.t(n) * tr.energies[n], rhs))));
    Ok(EstimateEntry::new("smoothing", r, slack, i))
}

/// `∫ t‖u'‖² ≤ 2∫φ(u) + ∫ t‖f‖²` with difference quotients for `u'`.
pub fn check_timeweighted_velocity<S: Element>(tr: &Trajectory<S>, slack: f64) -> Result<EstimateEntry> {
    validate(tr)?;
    let int = integrals(tr);
    let mut lhs = 0.0;
    for n in 0..tr.steps() {
        let tau = tr.mesh.step(n);
        let (a, b) = (&tr.states[n], &tr.states[n + 1]);
        let jump = weighted_distance(a.weights(), a.values(), b.values());
        lhs += tr.mesh.t(n + 1) * jump * jump / tau;
    }
    let rhs = 2.0 * int.energy + int.weighted_forcing;
    Ok(EstimateEntry::new("velocity", ratio(lhs, rhs), slack, tr.steps()))
}

/// `‖u₁(t) − u₂(t)‖ ≤ e^{ωt}‖u₁(0) − u₂(0)‖ + ∫₀ᵗ e^{ω(t−s)}‖f₁ − f₂‖ ds`.
pub fn check_contraction<S: Element>(a: &Trajectory<S>, b: &Trajectory<S>, slack: f64) -> Result<EstimateEntry> {
    validate(a)?;
    validate(b)?;
    if a.mesh != b.mesh {
        return Err(Error::MeshMismatch("contraction pair uses different time meshes".into()));
    }
    if a.omega != b.omega || !a.states[0].compatible(&b.states[0]) {
        return Err(Error::MeshMismatch("contraction pair uses different energies".into()));
    }
    let omega = a.omega;
    let mesh = &a.mesh;
    let dist = |x: &S, y: &S| weighted_distance(x.weights(), x.values(), y.values());
    let d0 = dist(&a.states[0], &b.states[0]);
    let gaps: Vec<f64> = (0..mesh.steps()).map(|k| dist(&a.forcings[k + 1], &b.forcings[k + 1])).collect();
    let (r, i) = worst((1..a.states.len()).map(|n| {
        let t = mesh.t(n);
        let forcing: f64 = (0..n).map(|k| mesh.step(k) * (omega * (t - mesh.t(k))).exp() * gaps[k]).sum();
        (n, ratio(dist(&a.states[n], &b.states[n]), (omega * t).exp() * d0 + forcing))
    }));
    Ok(EstimateEntry::new("contraction", r, slack, i))
}

/// Largest inclusion residual relative to [`INCLUSION_REFERENCE`].
pub fn check_inclusion(residuals: &[f64], slack: f64) -> EstimateEntry {
    let (r, i) = worst(residuals.iter().enumerate().map(|(n, r)| (n + 1, r / INCLUSION_REFERENCE)));
    EstimateEntry::new("inclusion", r, slack, i)
}

/// `φ(uⁿ⁺¹) + ‖uⁿ⁺¹ − uⁿ‖²/(2τₙ)` against `φ(uⁿ) + 10⁻⁸`; only meaningful
/// for unforced convex runs.
pub fn check_dissipation<S: Element>(tr: &Trajectory<S>, slack: f64) -> Result<EstimateEntry> {
    validate(tr)?;
    let (r, i) = worst((0..tr.steps()).map(|n| {
        let (a, b) = (&tr.states[n], &tr.states[n + 1]);
        let jump = weighted_distance(a.weights(), a.values(), b.values());
        let lhs = tr.energies[n + 1] + jump * jump / (2.0 * tr.mesh.step(n));
        (n + 1, ratio(lhs, tr.energies[n] + DISSIPATION_ALLOWANCE))
    }));
    Ok(EstimateEntry::new("dissipation", r, slack, i))
}

/// Every single-trajectory check that applies. `inclusion` holds the
/// per-step inclusion residuals when the caller computed them.
pub fn full_report<S: Element>(tr: &Trajectory<S>, inclusion: Option<&[f64]>, slack: &Slack) -> Result<EstimateReport> {
    validate(tr)?;
    let mut report = EstimateReport::default();
    report.push(check_apriori(tr, slack.apriori)?);
    report.push(check_energy_integral(tr, slack.energy_integral)?);
    report.push(check_smoothing(tr, slack.smoothing)?);
    report.push(check_timeweighted_velocity(tr, slack.velocity)?);
    if let Some(res) = inclusion {
        report.push(check_inclusion(res, slack.inclusion));
    }
    if tr.is_unforced() && tr.omega == 0.0 {
        report.push(check_dissipation(tr, slack.dissipation)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{EnergyFunctional, EnergySpec};
    use crate::evolution::{evolve, zero_forcing, TimeMesh};
    use crate::forcing::ForcingSpec;
    use crate::prox::ProxOptions;
    use crate::space::{BoundaryCondition, Grid, GridFunction};
    use std::f64::consts::PI;

    fn heat(u0: impl Fn(f64) -> f64) -> Trajectory<GridFunction> {
        let grid = Grid::interval(1.0, 33).unwrap();
        let e = EnergyFunctional::new(grid.clone(), EnergySpec::p_dirichlet(2.0, BoundaryCondition::Dirichlet)).unwrap();
        let u = GridFunction::from_fn(grid, |p| u0(p[0]));
        let mesh = TimeMesh::uniform(0.1, 50).unwrap();
        evolve(&e, &u, &zero_forcing(&u, &mesh), &mesh, ProxOptions::default()).unwrap()
    }

    #[test]
    fn zero_run_gives_zero_ratios() {
        let tr = heat(|_| 0.0);
        let report = full_report(&tr, Some(&vec![0.0; tr.steps()]), &Slack::default()).unwrap();
        assert_eq!(report.entries.len(), 6);
        for e in &report.entries {
            assert_eq!(e.ratio, 0.0, "{}", e.name);
            assert!(e.pass);
        }
        assert_eq!(check_contraction(&tr, &tr, 1.0).unwrap().ratio, 0.0);
    }

    #[test]
    fn heat_run_passes() {
        let tr = heat(|x| (PI * x).sin());
        let report = full_report(&tr, None, &Slack::default()).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.get("apriori").unwrap().ratio < 1.0);
        let doubled = heat(|x| 2.0 * (PI * x).sin());
        let c = check_contraction(&tr, &doubled, Slack::default().contraction_for(0.002, 1.0 / 32.0)).unwrap();
        assert!(c.pass && c.ratio <= 1.0, "{c:?}");
    }

    #[test]
    fn forced_semiconvex_run_passes() {
        let grid = Grid::interval(1.0, 33).unwrap();
        let spec = EnergySpec::p_dirichlet(3.0, BoundaryCondition::Neumann).with_quadratic(-0.5);
        let e = EnergyFunctional::new(grid.clone(), spec).unwrap();
        let u0 = GridFunction::from_fn(grid, |p| (PI * p[0]).cos());
        let mesh = TimeMesh::uniform(0.5, 100).unwrap();
        let f = ForcingSpec::Mode { amplitude: 0.5, k: 1, frequency: 2.0 }.samples(&u0, &mesh);
        let tr = evolve(&e, &u0, &f, &mesh, ProxOptions::default()).unwrap();
        let report = full_report(&tr, None, &Slack::default()).unwrap();
        assert!(report.get("dissipation").is_none());
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn slack_is_monotone_and_overridable() {
        let tr = heat(|x| (PI * x).sin());
        let tight = check_smoothing(&tr, 1e-6).unwrap();
        assert!(!tight.pass);
        assert!(check_smoothing(&tr, 1e6).unwrap().pass);
        let mut slack = Slack::default();
        slack.set("velocity", 2.0).unwrap();
        assert_eq!(slack.velocity, 2.0);
        assert!(slack.set("nonsense", 1.0).is_err());
        assert!(slack.set("apriori", -1.0).is_err());
        assert_eq!(Slack::default().contraction_for(0.01, 0.1), 2.1);
        let json = serde_json::to_string(&full_report(&tr, None, &slack).unwrap()).unwrap();
        assert!(json.starts_with("[{\"name\":\"apriori\",\"ratio\":"));
        assert!(json.contains("\"worst_time_index\""));
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let mut tr = heat(|x| x);
        let other = {
            let grid = Grid::interval(1.0, 33).unwrap();
            let u = GridFunction::zeros(grid);
            let e = EnergyFunctional::new(u.grid().clone(), EnergySpec::p_dirichlet(2.0, BoundaryCondition::Dirichlet)).unwrap();
            let mesh = TimeMesh::uniform(0.1, 10).unwrap();
            evolve(&e, &u, &zero_forcing(&u, &mesh), &mesh, ProxOptions::default()).unwrap()
        };
        assert!(check_contraction(&tr, &other, 2.0).is_err());
        tr.states.truncate(1);
        assert!(matches!(full_report(&tr, None, &Slack::default()), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn reports_are_reproducible() {
        let a = full_report(&heat(|x| x * (1.0 - x)), None, &Slack::default()).unwrap();
        let b = full_report(&heat(|x| x * (1.0 - x)), None, &Slack::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
