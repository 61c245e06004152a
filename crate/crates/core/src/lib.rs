//! Distributed Kalman filtering over sensor networks with finite-time
//! consensus on the average information matrix.
//!
//! A network of sensors tracks a linear process. Each node runs a local
//! information-form Kalman filter fed by consensus filters that average the
//! per-node measurement information across the network. On top of the
//! classic asymptotic scheme, each node can watch its own consensus-filter
//! output, detect the linear recurrence driving it through Hankel-matrix
//! rank loss, and jump straight to the exact network average in finitely
//! many steps — plus a noise-tolerant variant built on nearest
//! rank-deficient Hankel approximation.
//!
//! Module map:
//! - [`graph`]: topologies, Laplacians, step-size bounds
//! - [`sysmodel`]: process/sensing models, discretization, seeded noise
//! - [`kalman`]: centralized baseline and per-node local updates
//! - [`confilter`]: low-pass/band-pass consensus filters and their stacked
//!   spectral form
//! - [`mintime`]: rank-loss detection and final-value extraction
//! - [`robust`]: nearest rank-deficient Hankel approximation
//! - [`harness`]: scenario orchestration, timing and error metrics

pub mod confilter;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kalman;
pub mod mintime;
pub mod robust;
pub mod sysmodel;

pub use error::{Error, Result};
