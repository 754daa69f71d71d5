//! Scenario documents: one JSON object per run.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use semiflow::dtn::TraceSpace;
use semiflow::{
    EnergyFunctional, EnergySpec, ForcingSpec, Grid, GridFunction, NemytskiiSpec, PicardConfig, Point, Slack, TimeMesh,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Evolve,
    Perturbed,
    Dtn,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::Perturbed => "perturbed",
            Kind::Dtn => "dtn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `a·sin(kπx)`, times `sin(kπy)` in 2D.
    Sine {
        k: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `high` for `x < x0`, `low` otherwise.
    Step {
        x0: f64,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    /// Independent uniform values in `[-a, a]`; the run seed when `seed` is
    /// absent.
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl InitialSpec {
    /// Nodal values at `points`.
    pub fn values(&self, points: impl Iterator<Item = Point>, dimension: usize, run_seed: u64) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        match self {
            InitialSpec::Zero => points.map(|_| 0.0).collect(),
            InitialSpec::Constant { value } => points.map(|_| *value).collect(),
            InitialSpec::Sine { k, amplitude } => {
                let k = *k as f64 * pi;
                points
                    .map(|x| {
                        let y = if dimension == 2 { (k * x[1]).sin() } else { 1.0 };
                        amplitude * (k * x[0]).sin() * y
                    })
                    .collect()
            }
            InitialSpec::Step { x0, low, high } => points.map(|x| if x[0] < *x0 { *high } else { *low }).collect(),
            InitialSpec::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(run_seed));
                points.map(|_| amplitude * rng.gen_range(-1.0..=1.0)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_final: f64,
    pub steps: usize,
    /// `tₙ = T(n/N)^γ`; uniform for `γ = 1`.
    #[serde(default = "one")]
    pub grading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub prox: f64,
    pub max_iterations: usize,
    /// Gradient tolerance of the extension and joint boundary solves.
    pub extension: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { prox: 1e-10, max_iterations: 20_000, extension: 1e-10 }
    }
}

/// Randomized contraction pairs run next to the main trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSpec {
    pub pairs: usize,
    /// Size of the random perturbation of the initial data.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Size of the constant forcing offset applied to the second run.
    #[serde(default)]
    pub forcing_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub description: Option<String>,
    pub grid: GridSpec,
    #[serde(default)]
    pub energy: EnergySpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub perturbation: Option<NemytskiiSpec>,
    #[serde(default)]
    pub picard: PicardConfig,
    pub time: TimeSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub slack: Slack,
    #[serde(default)]
    pub contraction: Option<ContractionSpec>,
    #[serde(default)]
    pub expect: Expectation,
    /// Output subdirectory; the scenario name when absent.
    #[serde(default)]
    pub output: Option<String>,
}

/// A scenario with its grid, energy and mesh built and checked.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub grid: Arc<Grid>,
    pub energy: EnergyFunctional,
    pub mesh: TimeMesh,
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn output_name(&self) -> &str {
        self.output.as_deref().unwrap_or(&self.name)
    }

    /// Builds grid, energy and mesh and runs the convexity probe of the
    /// energy on 32 random triples.
    pub fn prepare(&self, seed: u64) -> Result<Prepared, CliError> {
        let config = |e: semiflow::Error| CliError::Config(format!("{}: {e}", self.name));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config(format!("invalid scenario name {:?}", self.name)));
        }
        if let Some(out) = &self.output {
            if out.is_empty() || out.contains("..") || Path::new(out).is_absolute() {
                return Err(CliError::Config(format!("invalid output directory {out:?}")));
            }
        }
        let t = &self.tolerances;
        if !(t.prox > 0.0 && t.extension > 0.0 && t.max_iterations > 0) {
            return Err(CliError::Config("tolerances must be positive".into()));
        }
        let grid = Grid::new(&self.grid.extents, &self.grid.nodes).map_err(config)?;
        let energy = EnergyFunctional::new(grid.clone(), self.energy.clone()).map_err(config)?;
        energy.convexity_probe(seed, 32).map_err(config)?;
        let mesh = TimeMesh::graded(self.time.t_final, self.time.steps, self.time.grading).map_err(config)?;
        match self.kind {
            Kind::Evolve => {
                if self.perturbation.is_some() {
                    return Err(CliError::Config("evolve scenarios take no perturbation; use kind \"perturbed\"".into()));
                }
            }
            Kind::Perturbed => {
                let g = self
                    .perturbation
                    .as_ref()
                    .ok_or_else(|| CliError::Config("perturbed scenarios need a perturbation".into()))?;
                g.validate(&mesh).map_err(config)?;
                self.picard.validate().map_err(config)?;
                if !self.forcing.is_zero() {
                    return Err(CliError::Config(
                        "perturbed scenarios take their forcing from the perturbation (affine_forced)".into(),
                    ));
                }
            }
            Kind::Dtn => {
                let e = &self.energy;
                if e.diffusion != 1.0 || e.quadratic != 0.0 || e.lower_order.is_some() || !e.graph.is_none() {
                    return Err(CliError::Config("dtn scenarios use the plain p-Dirichlet energy".into()));
                }
                if !self.forcing.is_zero() {
                    return Err(CliError::Config("dtn scenarios are driven by the perturbation only".into()));
                }
                if let Some(g) = &self.perturbation {
                    g.validate(&mesh).map_err(config)?;
                    self.picard.validate().map_err(config)?;
                }
            }
        }
        if let Some(c) = &self.contraction {
            if self.kind != Kind::Evolve {
                return Err(CliError::Config("contraction pairs are only supported for evolve scenarios".into()));
            }
            if c.pairs == 0 || !(c.amplitude.is_finite() && c.forcing_offset.is_finite()) {
                return Err(CliError::Config("contraction needs at least one pair and finite sizes".into()));
            }
        }
        Ok(Prepared { scenario: self.clone(), grid, energy, mesh, seed })
    }
}

impl Prepared {
    pub fn initial(&self) -> Result<GridFunction, CliError> {
        let grid = &self.grid;
        let values = self
            .scenario
            .initial
            .values((0..grid.len()).map(|i| grid.point(i)), grid.dimension(), self.seed);
        GridFunction::new(grid.clone(), values).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn boundary_initial(&self, space: &Arc<TraceSpace>) -> Result<semiflow::BoundaryFunction, CliError> {
        let points = space.nodes().iter().map(|&n| self.grid.point(n));
        let values = self.scenario.initial.values(points, self.grid.dimension(), self.seed);
        semiflow::BoundaryFunction::new(space.clone(), values).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use semiflow::Element;

    const HEAT: &str = r#"{
        "name": "t", "kind": "evolve",
        "grid": {"extents": [1.0], "nodes": [9]},
        "energy": {"p": 2, "bc": "dirichlet"},
        "initial": {"kind": "sine", "k": 1},
        "time": {"t_final": 0.1, "steps": 4}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_json(HEAT).unwrap();
        assert_eq!(s.expect, Expectation::Pass);
        assert_eq!(s.time.grading, 1.0);
        assert_eq!(s.slack, Slack::default());
        let p = s.prepare(0).unwrap();
        let u0 = p.initial().unwrap();
        assert!((u0.values()[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(Scenario::from_json("{").is_err());
        assert!(Scenario::from_json(&HEAT.replace("\"steps\"", "\"stepz\"")).is_err());
        let s = Scenario::from_json(&HEAT.replace("\"p\": 2", "\"p\": 0.5")).unwrap();
        assert!(matches!(s.prepare(0), Err(CliError::Config(_))));
        let s = Scenario::from_json(&HEAT.replace("\"evolve\"", "\"perturbed\"")).unwrap();
        assert!(s.prepare(0).is_err());
    }

    #[test]
    fn random_initial_data_follows_the_seed() {
        let spec = InitialSpec::Random { seed: None, amplitude: 1.0 };
        let pts = || (0..5).map(|i| [i as f64, 0.0]);
        assert_eq!(spec.values(pts(), 1, 3), spec.values(pts(), 1, 3));
        assert_ne!(spec.values(pts(), 1, 3), spec.values(pts(), 1, 4));
    }

}
