//! Stochastic Lotka-Volterra systems driven by Brownian motion and a
//! compound Poisson random measure: simulation, explicit solutions,
//! regime conditions and Monte Carlo diagnostics.

pub mod analysis;
pub mod closedform;
pub mod conditions;
pub mod error;
pub mod integrate;
pub mod model;
pub mod noise;

pub use analysis::{Estimate, MCSeries, McConfig};
pub use closedform::{LinearJumpSDE, LogisticSolution, PathSeries};
pub use conditions::{Extremum, Regime, RegimeReport, SpeciesReport};
pub use error::{AnalysisError, ModelError, SimError};
pub use integrate::{Sandwich, Trajectory};
pub use model::{Coeff, InitialState, MarkSpace, ModelSpec, ValidationReport, Violation};
pub use noise::{DrivingPath, Jump, MergedGrid, Slot, SlotKind};
