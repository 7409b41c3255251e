//! Discrete structural causal models for studying fake invariance.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: causal diagrams (PIIF, FIIF and the restructured model with a
//!   switchable fake-invariant branch) and d-separation queries.
//! - [`scm`]: discrete mechanisms, exact joint enumeration, ancestral sampling
//!   and the symbolic colored-digit benchmark.
//! - [`dataset`]: observation encoding, codebooks and the CSV dataset format.
//! - [`info`]: exact entropy / MI / CMI over joint tables and the
//!   spuriousness verifier.
//! - [`rectifier`]: the joint-CMI objective, subset oracles and the
//!   anti-collapse selection rule.
//! - [`desk`]: small exact instances shared by tests, the verifier suite and
//!   the CLI.

pub mod dataset;
pub mod desk;
pub mod error;
pub mod graph;
pub mod info;
pub mod rectifier;
pub mod scm;

pub use error::{Error, Result};
