//! Linear multi-zone RC thermal simulator with an ideal-loads controller.

pub mod model;
pub mod network;
pub mod samples;
pub mod simulate;
pub mod solar;

pub use model::{BuildingModel, Layer, Orientation, Site, Surface, Window, Zone};
pub use network::{discretize, StateSpaceSystem};
pub use simulate::{initial_state, simulate, Integrator, RunMode, RunResult, RunSpec, Warmup};
pub use solar::solar_gains;
