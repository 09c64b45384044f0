//! Gapless-plane electrostatics for rectangular surface electrodes.

pub mod basis;
pub mod calibrate;
pub mod layout;
pub mod solver;

pub use basis::{unit_gradient, unit_jet, unit_potential, BasisJet, Point, RectElectrode, Role};
pub use calibrate::{calibrate, CalibrationReport, CalibrationTargets, FiveWireTemplate, Residuals};
pub use layout::{TrapLayout, TrapPotential, DEFAULT_RF_ANGULAR_FREQUENCY};
pub use solver::{find_minimum, secular_frequencies, solve, trap_depth, Depth, Minimum, SecularModes, TrapSolution};
