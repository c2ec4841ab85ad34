//! Simulation and analysis of a subwavelength atomic mirror whose optical
//! response is switched by a single Rydberg ancilla through EIT.

pub mod coupled_dipole;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod pair_potentials;
pub mod photon_stats;
pub mod steady_state;
pub mod susceptibility;
pub mod units;

pub use error::{Error, Result};
pub use susceptibility::{EitConditions, Susceptibility};
pub use units::{ArraySpec, C3Coefficient, C6Coefficient, Frequency, LaserDrive, Length, TransitionParams};
