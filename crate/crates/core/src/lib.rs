//! Worst-case risk aggregation bounds over all probability measures that
//! satisfy finitely many bounds on integrals of piecewise-affine test
//! functions.
//!
//! The support is cut into a grid of boxes (optionally sliced by the risk
//! hyperplane `sum(x) = tau`); on every cell each test function and the risk
//! functional are affine, so the semi-infinite dual reduces to a finite LP via
//! Farkas' lemma or vertex enumeration. The LP is solved either densely or by
//! delayed column generation on its transpose, where every cell contributes a
//! column only when it prices out.

pub mod app;
pub mod config;
pub mod data_io;
pub mod dual_builder;
pub mod error;
pub mod geometry;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod report;
pub mod test_functions;

pub use error::{Error, Result};
