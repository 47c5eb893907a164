//! Shadow tomography of Pauli and fermionic observables.
//!
//! The crate is organised around one workflow: pick a family of Hermitian
//! observables (Pauli strings or Majorana monomials), build its commutation
//! graph, colour the graph so that each colour class is jointly measurable,
//! and drive sampling protocols that estimate every expectation value from
//! far fewer state copies than naive one-at-a-time tomography.
//!
//! Modules:
//! - [`pauli`]: symplectic Pauli strings with exact phase tracking.
//! - [`fermion`]: Majorana monomials and fermion-to-qubit mappings.
//! - [`graph`]: commutation graphs, cliques, tree searches, colourings.
//! - [`sim`]: dense statevector simulation, projective and Bell sampling.
//! - [`mmw`]: matrix-multiplicative-weights mimicking states.
//! - [`protocols`]: end-to-end estimation pipelines with sample ledgers.
//! - [`compress`]: serialised measurement records answering offline queries.
//! - [`greens`]: Heisenberg-derivative expansions of Green's functions.
//! - [`selftest`]: the acceptance checks exposed to the CLI self test.

pub mod cli;
pub mod compress;
pub mod error;
pub mod fermion;
pub mod graph;
pub mod greens;
pub mod linalg;
pub mod mmw;
pub mod pauli;
pub mod protocols;
pub mod rng;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};

/// Version string embedded in every emitted report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
