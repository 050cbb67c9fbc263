//! Placement of inverter-based resources (IBRs) by effective-resistance
//! distance, and transient validation of the placements.
//!
//! The pipeline is:
//!
//! 1. [`case_io`] reads a MATPOWER case (plus a dynamics table) and turns
//!    it into a weighted [`graph::PowerGraph`].
//! 2. [`graph`] builds the Laplacian and its Moore–Penrose pseudo-inverse.
//! 3. [`resistance`] derives pairwise and set resistance distances.
//! 4. [`placement`] picks `k` buses greedily or by exhaustive search.
//! 5. [`dynamics`], [`control`] and [`metrics`] simulate frequency events
//!    on the Kron-reduced network with LQR-controlled IBRs and score them.

pub mod case_io;
pub mod control;
pub mod dynamics;
mod error;
pub mod graph;
pub mod metrics;
pub mod placement;
pub mod properties;
pub mod resistance;

pub use error::{Error, Result};

/// External bus number as it appears in the case file.
pub type BusId = usize;
