//! Simulation library for the wave-function correlator of two-level systems.
//!
//! A particle in a symmetric double well is evolved unitarily, one realization of
//! its environment at a time, either under a classical white-noise bias
//! ([`field`]) or coupled to a finite bosonic bath ([`bath`]). Ensemble estimators
//! ([`ensemble`]) then compare the averaged density matrix with the localization
//! correlator `⟨𝒫_{L→L}·𝒫_{L→R}⟩`, which separates ensembles of localized states
//! from ensembles of delocalized (cat-like) states.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod field;
pub mod qstate;

pub use error::{Error, Result};
pub use num_complex::Complex64;
