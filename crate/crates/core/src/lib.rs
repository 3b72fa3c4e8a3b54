//! Radial solutions of the prescribed mean curvature equations
//! `−div(∇u/√(1 ± |∇u|²)) = g(u)` in the Euclidean (`+`) and
//! Lorentz–Minkowski (`−`) cases.
//!
//! The crate integrates the radial Cauchy problems, measures the energy and
//! Lyapunov quantities along the solutions, and classifies each solution
//! against the regimes predicted by theory (constant, divergent, gradient
//! blow-up, periodic, localized).

pub mod classifier;
pub mod cli;
pub mod diagnostics;
pub mod dynamics;
pub mod integrator;
pub mod nonlinearity;
pub mod oracle;
pub mod output;
pub mod quadrature;
pub mod sweep;

pub use classifier::{classify, predict, ClassificationReport, Regime};
pub use diagnostics::{EnergyReport, EnergySummary};
pub use dynamics::{CurvatureSign, ProblemSpec, State};
pub use integrator::{integrate, EventKind, EventRecord, IntegrationControls, TerminationCause, Trajectory};
pub use nonlinearity::{Alpha, Builtin, NonlinearitySpec};
