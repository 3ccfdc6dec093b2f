//! Constrained optimal charging for monotone control systems.
//!
//! The crate builds battery models as control systems, certifies the
//! monotonicity hypotheses that make "charge as hard as the constraints
//! allow" the right idea, synthesises bang-and-ride policies, and checks
//! candidate trajectories against the interior-tail necessity condition and
//! a brute-force oracle.
//!
//! Modules, bottom-up:
//!
//! * [`dynamics`]: ECM, Padé and finite-difference SPM, thermally coupled ECM.
//! * [`ordering`]: orthant order, Metzler checks, Kamke–Müller sampling, excitability.
//! * [`constraints`]: mixed constraints `h(x, u) >= 0` and their input monotonicity.
//! * [`simulate`]: RK4 integration, trajectories and costs.
//! * [`bangride`]: the bang-and-ride policy and its closed-loop simulation.
//! * [`optimality`]: necessity check, improving perturbations, exhaustive oracle.

#![allow(clippy::needless_range_loop)]

pub mod bangride;
pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod optimality;
pub mod ordering;
pub mod sampling;
pub mod simulate;

pub use error::{Error, Result};
