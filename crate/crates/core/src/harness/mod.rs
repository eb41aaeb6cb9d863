//! Reproducible experiments on top of the library: spec files, named
//! instance generators, ε-sweeps, expansion checks and randomized suites.

pub mod csv;
pub mod generators;
pub mod spec;
pub mod suites;
pub mod sweep;
pub mod taylor;

pub use spec::{ExperimentSettings, ModelSpec};
pub use suites::{run_bound_suite, run_invariance_suite, SuiteConfig};
pub use sweep::{run_sweep, SweepConfig, SweepRow, SweepTable};
