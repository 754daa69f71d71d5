//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use semiflow::dtn::{DtnEnergy, TraceSpace};
use semiflow::minimize::MinimizeOptions;
use semiflow::{BoundaryCondition, BoundaryFunction, EnergyFunctional, EnergySpec, Grid, GridFunction, TimeMesh};

pub fn interval_energy(nodes: usize, p: f64, bc: BoundaryCondition) -> EnergyFunctional {
    let grid = Grid::interval(1.0, nodes).expect("grid");
    EnergyFunctional::new(grid, EnergySpec::p_dirichlet(p, bc)).expect("energy")
}

pub fn sine(grid: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(grid.clone(), |x| (std::f64::consts::PI * x[0]).sin() + 0.3 * (7.0 * x[0]).cos())
}

pub fn mesh(t_final: f64, steps: usize) -> TimeMesh {
    TimeMesh::uniform(t_final, steps).expect("mesh")
}

pub fn square_dtn(n: usize, p: f64) -> DtnEnergy {
    let grid = Grid::rectangle(1.0, 1.0, n, n).expect("grid");
    DtnEnergy::new(TraceSpace::new(grid), p, None, MinimizeOptions::default()).expect("dtn")
}

pub fn boundary_data(dtn: &DtnEnergy) -> BoundaryFunction {
    BoundaryFunction::from_fn(dtn.space().clone(), |x| (3.0 * x[0]).sin() + x[1] * x[1])
}
