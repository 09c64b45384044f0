//! Signal-chain models for a transparent surface-electrode ion trap with an
//! integrated photodetector: trap electrostatics, fluorescence, detection and
//! lock-in readout, state-discrimination fidelity and heralded-entanglement
//! link budgets.

pub mod detection_chain;
pub mod electrostatics;
pub mod entanglement_link;
pub mod error;
pub mod fluorescence;
pub mod scenario;
pub mod state_detection;
pub mod units;

pub use error::{Error, Result};
