//! Simulation and analysis of all-microwave unconditional reset of a
//! transmon qutrit coupled to a lossy resonator.
//!
//! * [`effective`]: three-level non-Hermitian reset model, reset rate and
//!   the drive-parameter landscape.
//! * [`lindblad`]: full master-equation dynamics of the driven
//!   transmon–resonator system.
//! * [`calibration`]: the four-step drive calibration and its fit models.
//! * [`lab`]: synthetic experiments that feed calibration and readout.
//! * [`readout`]: single-shot qutrit discrimination and population
//!   correction.
//! * [`limits`]: steady-state excitation limits.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod effective;
pub mod error;
pub mod exec;
pub mod io;
pub mod lab;
pub mod limits;
pub mod lindblad;
pub mod lm;
pub mod ode;
pub mod ops;
pub mod params;
pub mod readout;
pub mod rng;
pub mod trajectory;
pub mod units;

pub use error::{Error, Result};
pub use exec::Exec;
pub use params::{default_params, DriveConfig, Preset, SystemParams};
pub use trajectory::PopulationTrajectory;
pub use units::Frequency;
