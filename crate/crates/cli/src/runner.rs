//! Executes prepared scenarios and writes their artifacts.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use semiflow::dtn::{DtnEnergy, DtnStepper, TraceSpace};
use semiflow::estimates::{check_contraction, full_report};
use semiflow::evolution::{evolve_with, zero_forcing};
use semiflow::minimize::MinimizeOptions;
use semiflow::{
    solve_perturbed, Element, EstimateEntry, EstimateReport, FixedPointReport, GridFunction, ProxOptions, ProxStepper,
    Slack, Stepper, Trajectory,
};

use crate::output::{boundary_csv, json, states_csv, trajectory_csv, Artifacts, DumpStates};
use crate::scenario::{Kind, Prepared, Scenario};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub slack_overrides: Vec<(String, f64)>,
    pub dump_states: DumpStates,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { out_dir: None, seed: 0, slack_overrides: Vec::new(), dump_states: DumpStates::None }
    }
}

/// Parses `NAME=VALUE`.
pub fn parse_slack_override(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {text:?}"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("invalid slack value {value:?}"))?;
    let mut probe = Slack::default();
    probe.set(name.trim(), value).map_err(|e| e.to_string())?;
    Ok((name.trim().to_string(), value))
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub name: String,
    pub kind: Kind,
    pub report: EstimateReport,
    pub fixed_point: Option<FixedPointReport>,
    /// Largest `‖Tr û‖ / (‖û‖ + φ(û)^{1/p})` seen by a boundary run.
    pub trace_constant: Option<f64>,
    pub final_state: Vec<f64>,
    pub final_h_norm: f64,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Loads nothing and writes nothing unless `options.out_dir` is set.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<Outcome, CliError> {
    let prepared = scenario.prepare(options.seed)?;
    let mut slack = scenario.slack;
    for (name, value) in &options.slack_overrides {
        slack.set(name, *value).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut artifacts = options
        .out_dir
        .as_ref()
        .map(|dir| Artifacts::new(dir.join(scenario.output_name())));
    let mut outcome = match scenario.kind {
        Kind::Evolve | Kind::Perturbed => run_interior(&prepared, &slack, options, artifacts.as_mut())?,
        Kind::Dtn => run_boundary(&prepared, &slack, options, artifacts.as_mut())?,
    };
    if let Some(art) = artifacts.as_mut() {
        art.write("estimates.json", &json(&outcome.report))?;
        if let Some(fp) = &outcome.fixed_point {
            art.write("fixedpoint.json", &json(fp))?;
        }
        outcome.files = std::mem::take(&mut art.written);
    }
    Ok(outcome)
}

fn prox_options(prepared: &Prepared) -> ProxOptions {
    let t = prepared.scenario.tolerances;
    ProxOptions { tol: t.prox, max_iterations: t.max_iterations, record_history: false }
}

fn inclusion_residuals<S: Element, St: Stepper<S> + ?Sized>(
    stepper: &mut St,
    tr: &Trajectory<S>,
) -> Result<Vec<f64>, CliError> {
    (0..tr.steps())
        .map(|n| Ok(stepper.inclusion_residual(&tr.states[n + 1], &tr.selections[n])?))
        .collect()
}

fn picard_entries(report: &mut EstimateReport, fp: &FixedPointReport, tolerance: f64, slack: &Slack) {
    report.push(EstimateEntry::new("schaefer", fp.schaefer_ratio, slack.schaefer, 0));
    let last = fp.distances.last().copied().unwrap_or(0.0);
    let ratio = if fp.converged { last / tolerance } else { (last / tolerance).max(2.0) };
    report.push(EstimateEntry::new("fixed_point", ratio, 1.0, fp.distances.len()));
}

fn run_interior(
    prepared: &Prepared,
    slack: &Slack,
    options: &RunOptions,
    artifacts: Option<&mut Artifacts>,
) -> Result<Outcome, CliError> {
    let scenario = &prepared.scenario;
    let u0 = prepared.initial()?;
    let mesh = &prepared.mesh;
    let mut stepper = ProxStepper::new(&prepared.energy, prox_options(prepared));
    let (tr, fixed_point) = match scenario.kind {
        Kind::Perturbed => {
            let g = scenario.perturbation.as_ref().expect("validated");
            let (tr, fp) = solve_perturbed(&mut stepper, g, &u0, mesh, &scenario.picard)?;
            (tr, Some(fp))
        }
        _ => {
            let forcing = scenario.forcing.samples(&u0, mesh);
            (evolve_with(&mut stepper, &u0, &forcing, mesh)?, None)
        }
    };
    let residuals = inclusion_residuals(&mut stepper, &tr)?;
    let mut report = full_report(&tr, Some(&residuals), slack)?;
    if let Some(fp) = &fixed_point {
        picard_entries(&mut report, fp, scenario.picard.tolerance, slack);
    }
    if let Some(c) = &scenario.contraction {
        report.push(contraction(prepared, &tr, c, slack, options.seed)?);
    }
    if let Some(art) = artifacts {
        art.write("trajectory.csv", trajectory_csv(&tr).as_bytes())?;
        if let Some(csv) = states_csv(&tr, options.dump_states, |i| i) {
            art.write("states.csv", csv.as_bytes())?;
        }
    }
    Ok(Outcome {
        name: scenario.name.clone(),
        kind: scenario.kind,
        report,
        fixed_point,
        trace_constant: None,
        final_state: tr.final_state().values().to_vec(),
        final_h_norm: semiflow::space::norm(tr.final_state()),
        files: Vec::new(),
    })
}

/// Worst contraction entry over randomized pairs: the second run starts
/// from a randomly perturbed initial datum and sees a shifted forcing.
fn contraction(
    prepared: &Prepared,
    main: &Trajectory<GridFunction>,
    spec: &crate::scenario::ContractionSpec,
    slack: &Slack,
    seed: u64,
) -> Result<EstimateEntry, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let bound = slack.contraction_for(prepared.mesh.max_step(), prepared.grid.max_spacing());
    let (lo, hi) = prepared.scenario.energy.graph.bounds();
    let mut worst: Option<EstimateEntry> = None;
    for _ in 0..spec.pairs {
        let u0 = &main.states[0];
        let values = u0
            .values()
            .iter()
            .map(|v| (v + spec.amplitude * rng.gen_range(-1.0..=1.0)).clamp(lo, hi))
            .collect();
        let other = u0.with_values(values);
        let offset = spec.forcing_offset * rng.gen_range(-1.0..=1.0);
        let forcing: Vec<GridFunction> = main
            .forcings
            .iter()
            .map(|f| f.with_values(f.values().iter().map(|v| v + offset).collect()))
            .collect();
        let mut stepper = ProxStepper::new(&prepared.energy, prox_options(prepared));
        let tr = evolve_with(&mut stepper, &other, &forcing, &prepared.mesh)?;
        let entry = check_contraction(main, &tr, bound)?;
        if worst.as_ref().is_none_or(|w| entry.ratio > w.ratio || entry.ratio.is_nan()) {
            worst = Some(entry);
        }
    }
    Ok(worst.expect("at least one pair"))
}

fn run_boundary(
    prepared: &Prepared,
    slack: &Slack,
    options: &RunOptions,
    artifacts: Option<&mut Artifacts>,
) -> Result<Outcome, CliError> {
    let scenario = &prepared.scenario;
    let space = TraceSpace::new(prepared.grid.clone());
    let t = scenario.tolerances;
    let dtn = DtnEnergy::new(
        space.clone(),
        scenario.energy.p,
        scenario.energy.epsilon,
        MinimizeOptions { tol: t.extension, max_iterations: t.max_iterations },
    )?;
    let u0 = prepared.boundary_initial(&space)?;
    let mesh = &prepared.mesh;
    let mut stepper = DtnStepper::new(&dtn);
    let (tr, fixed_point) = match &scenario.perturbation {
        Some(g) => {
            let (tr, fp) = solve_perturbed(&mut stepper, g, &u0, mesh, &scenario.picard)?;
            (tr, Some(fp))
        }
        None => (evolve_with(&mut stepper, &u0, &zero_forcing(&u0, mesh), mesh)?, None),
    };
    let trace_constant = stepper.trace_constant();
    let residuals = inclusion_residuals(&mut stepper, &tr)?;
    let mut report = full_report(&tr, Some(&residuals), slack)?;
    if let Some(fp) = &fixed_point {
        picard_entries(&mut report, fp, scenario.picard.tolerance, slack);
    }
    if let Some(art) = artifacts {
        art.write("trajectory.csv", trajectory_csv(&tr).as_bytes())?;
        art.write("boundary.csv", boundary_csv(&tr).as_bytes())?;
        if let Some(csv) = states_csv(&tr, options.dump_states, |i| space.nodes()[i]) {
            art.write("states.csv", csv.as_bytes())?;
        }
    }
    Ok(Outcome {
        name: scenario.name.clone(),
        kind: scenario.kind,
        report,
        fixed_point,
        trace_constant: Some(trace_constant),
        final_state: tr.final_state().values().to_vec(),
        final_h_norm: semiflow::space::norm(tr.final_state()),
        files: Vec::new(),
    })
}
