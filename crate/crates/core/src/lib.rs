//! Binary hypothesis testing for softmax and leverage-score query models.
//!
//! The crate computes exact output laws of both model families, their TV and
//! Hellinger distances, closed-form distance bounds, optimal single queries
//! under the energy and box constraints, and Monte-Carlo estimates of the
//! number of queries a likelihood-ratio test needs.

pub mod bounds;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod format;
pub mod harness;
pub mod leverage;
pub mod numerics;
pub mod optimizer;
pub mod softmax;
pub mod tester;

pub use distributions::{DiscreteDistribution, Seed};
pub use error::{ConstraintKind, Error, Result};
pub use exec::Execution;
pub use leverage::{BoxConstraint, ScaleQuery};
pub use numerics::{ParamMatrix, SymMatrix};
pub use optimizer::{OptResult, OptimizerConfig};
pub use softmax::{EnergyConstraint, SoftmaxQuery};
pub use tester::{Constraint, Family, Hypothesis, ModelOracle, OracleSpec, Query, QuerySource};
