//! Desk-scale simulator of a one-time quantum digital signature protocol.
//!
//! The crate is organized around the protocol's moving parts:
//!
//! * [`statevec`] — exact pure-state simulation over labeled qubit registers.
//! * [`owf`] — quantum one-way function families `k -> |f_k>` and the binary
//!   linear codes the fingerprint family is built from.
//! * [`eqtest`] — swap test, key-verification test, and s-state symmetry test
//!   realized as projective measurements.
//! * [`protocol`] — key generation, public-key distribution, signing,
//!   verification tallies, and the threshold verdict ladder.
//! * [`adversary`] — forging and repudiation attack engines with exact or
//!   Monte Carlo evaluation.
//! * [`analysis`] — binary entropy, tail bounds, guessing budgets, and
//!   confidence intervals used in the security experiments.
//!
//! All randomness flows through explicitly seeded generators; see [`rng`] for
//! the per-trial stream derivation used by the experiment drivers.

pub mod adversary;
pub mod analysis;
pub mod eqtest;
pub mod owf;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod statevec;
