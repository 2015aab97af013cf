//! Desk-scale laboratory for natural policy gradient with log-linear
//! policies on finite discounted MDPs.
//!
//! Everything is measured against exact linear-solve ground truth: values,
//! action values, visitation distributions, the optimal policy, the best
//! linear critic under any weighting, and the assumption quantities of the
//! convergence analysis (approximation bias, statistical error, the
//! distribution-mismatch coefficient, and the relative condition number).
//! The solver records all of them per iteration next to the predicted
//! bound, and the verification harness replays finished runs against the
//! inequalities that drive the guarantee.

pub mod checks;
pub mod config;
pub mod error;
pub mod features;
pub mod generate;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod plot;
pub mod policy;
pub mod runner;
pub mod solver;
pub mod tol;

pub use error::{Error, Result};
