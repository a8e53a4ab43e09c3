//! Homotopy-perturbation solver for quadratic dissipative ODEs
//! `du/dt = F1 u + F2 (u ⊗ u)`: the perturbation cascade, its linear
//! embedding, Taylor time-marching as one block linear system, classical
//! post-selection, and measured-versus-proven bound checks.

pub mod config;
pub mod dense;
pub mod embedding;
pub mod error;
pub mod hpm;
pub mod instance;
pub mod measurement;
pub mod ode;
pub mod pipeline;
pub mod report;
pub mod sparse;
pub mod taylor;
pub mod vector;

pub use config::{Overrides, RunConfig};
pub use dense::{dense_condition_number, dense_eigs, dense_expm, DenseMatrix};
pub use embedding::{assemble_a, assemble_y_in, EmbeddedSystem, EmbeddingIndexMap};
pub use error::{HpmError, Result};
pub use hpm::{solve_cascade, truncated_solution, HpmCascade};
pub use instance::{generate_instance, GenerateSpec};
pub use measurement::{postselect, BoundCheck, MeasurementReport};
pub use ode::{compute_k, NonlinearityParams, QuadraticOde};
pub use pipeline::{run, run_with_artifacts, sweep, RunReport, SweepParam, SweepRow};
pub use sparse::{CooBuilder, SparseMatrix};
pub use taylor::{assemble_c, solve_marching, MarchingShape, SolverKind, TaylorSystemParams};
