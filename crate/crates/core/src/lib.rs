//! Gradient flows `u' + ∂φ(u) ∋ f` of semiconvex energies on discretized
//! `L²` spaces.
//!
//! The building blocks are:
//!
//! * [`space`]: tensor grids on intervals and rectangles, the weighted `L²`
//!   inner product and a discrete gradient/divergence pair that are exactly
//!   adjoint.
//! * [`energy`]: p-Dirichlet energies with pointwise convex graph terms and
//!   Lipschitz lower-order terms, together with their semiconvexity shift.
//! * [`prox`]: the resolvent `(I + τ∂φ)⁻¹` computed by forward-backward
//!   splitting.
//! * [`evolution`]: implicit-Euler time stepping on uniform or graded meshes.
//! * [`perturbation`] and [`fixedpoint`]: Nemytskii right-hand sides and the
//!   Picard iteration for `u' + ∂φ(u) ∋ Gu`.
//! * [`dtn`]: boundary evolutions driven by the p-Dirichlet-to-Neumann
//!   operator.
//! * [`estimates`]: checks of the a priori, smoothing and contraction
//!   inequalities on computed trajectories.

pub mod dtn;
pub mod energy;
mod error;
pub mod estimates;
pub mod evolution;
pub mod fixedpoint;
pub mod forcing;
pub mod minimize;
pub mod perturbation;
pub mod prox;
pub mod space;

pub use dtn::{BoundaryFunction, DtnStepper, TraceSpace};
pub use energy::{EnergyFunctional, EnergySpec, GraphSpec, LowerOrderKind, LowerOrderSpec};
pub use error::{Error, Result};
pub use estimates::{EstimateEntry, EstimateReport, Slack};
pub use evolution::{evolve, ProxStepper, Stepper, TimeMesh, Trajectory};
pub use fixedpoint::{solve_perturbed, FixedPointReport, InitialGuess, PicardConfig};
pub use forcing::ForcingSpec;
pub use perturbation::{GrowthBound, Integrand, NemytskiiSpec};
pub use prox::{scalar_resolvent, solve_prox, ProxObjective, ProxOptions, ProxProblem, ProxResult};
pub use space::{BoundaryCondition, Element, Grid, GridFunction, Point};
