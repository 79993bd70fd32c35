//! Built-in cycle maps: test fixtures and the adsorption column.

mod adsorption;
mod linear;
mod oscillator;
mod quadratic;

pub use adsorption::{AdsorptionColumnModel, CycleBalance, CFL_LIMIT};
pub use linear::{LinearMapModel, SpectrumEntry};
pub use oscillator::ForcedOscillatorModel;
pub use quadratic::QuadraticMap;
