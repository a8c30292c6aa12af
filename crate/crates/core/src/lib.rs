//! Output consensus for heterogeneous nonlinear agents with a rank-one
//! diffusive coupling.

pub mod agents;
pub mod export;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod settings;
pub mod sim;
pub mod switching;
pub mod synthesis;

pub use settings::NumericSettings;
