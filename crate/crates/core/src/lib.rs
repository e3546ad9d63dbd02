//! Continuous measurement of a single damped cavity mode observed at once by
//! a photodetector and a homodyne detector.
//!
//! The crate has two halves. [`sde`] and [`ensemble`] simulate conditional
//! trajectories of the jump–diffusion equation. [`propagators`],
//! [`analytics`] and [`squeezed`] evaluate the same quantities in closed
//! form: conditional states, generating functions of the records, joint
//! record densities, and conditioned quadratures. Each closed form is checked
//! against a brute-force Fock-space computation in the tests.

pub mod analytics;
pub mod ensemble;
pub mod error;
pub mod fock;
pub mod params;
pub mod propagators;
pub mod quadrature;
pub mod sde;
pub mod squeezed;
pub mod states;

pub use error::{Error, Result};
pub use fock::{FockOperator, StateVector, C64};
pub use params::SimParams;
pub use propagators::{CountRecord, RecordAccumulators};
pub use states::{InitialState, PreparedState, StateModel, StateRegistry};
