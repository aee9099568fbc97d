//! Numerical simulator of quantum teleportation of a single-photon wave
//! packet through an energy–time entangled photon pair.
//!
//! Two routes compute the same physics and are cross-checked against each
//! other and against dense brute-force references:
//!
//! - [`povm`] — the abstract protocol: a joint time/sum-frequency
//!   measurement on the sender's two photons, outcome statistics, the
//!   conditioned receiver state, and the classical-message phase correction.
//! - [`scheme`] — the optical realization: two nonlinear crystals treated
//!   perturbatively, with an ideally filtered photodetector conditioning the
//!   receiver channel.
//!
//! [`freqgrid`] fixes the discretization and measure conventions,
//! [`states`] holds packets and density matrices, and [`oracle`] carries the
//! independent dense reference computations used by the test suites.
//!
//! Units are dimensionless (`ħ = c = 1`); all arithmetic is
//! double-precision complex.

pub mod freqgrid;
pub mod jsonfmt;
pub mod oracle;
pub mod povm;
pub mod scheme;
pub mod states;
