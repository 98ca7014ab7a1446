//! Config-driven experiment runner for the `topolattice` engine.

pub mod config;
pub mod presets;
pub mod runner;
pub mod tasks;

pub use config::{parse_config, ConfigErrors, ConfigIssue, ExperimentConfig, Grid, Grids, TaskKind};
pub use runner::{load_config, run, ErrorReport, RunError, Written};
pub use tasks::{Artifact, Task, TaskContext, TaskError, TaskRegistry};
