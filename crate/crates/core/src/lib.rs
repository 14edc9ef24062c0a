//! Computable normal-approximation machinery for sums of dependent random
//! variables: Wasserstein-p distance estimators, local-dependence and mixing
//! bound evaluators, exact finite probability spaces for identity checking,
//! cumulant matching, and the genogram expansion engine.
//!
//! The crate is organized around a handful of currencies:
//!
//! * [`fields::TinyField`] — an exactly enumerable probability space carrying
//!   a random field on a finite index set; every identity in this crate can
//!   be checked on one by brute-force expectation.
//! * [`combinatorics::MomentSequence`] / [`combinatorics::CumulantSequence`]
//!   — finite moment/cumulant data linked by Bell polynomials.
//! * [`genogram::Genogram`] — rooted trees with integer identifiers that
//!   drive the mixing-field expansion sums.
//! * [`bounds::BoundReport`] — a bound bracket with named components and an
//!   explicit "constant unknown" marker.

pub mod bounds;
pub mod combinatorics;
pub mod dependency;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod functions;
pub mod genogram;
pub mod matching;
pub mod numeric;
pub mod rng;
pub mod wasserstein;

pub use error::{Error, Result};
