//! Shared fixtures for the benchmarks.

use qhpm::config::RunConfig;
use qhpm::embedding::{assemble_a, EmbedOptions, EmbeddedSystem};
use qhpm::instance::generate_instance;
use qhpm::ode::QuadraticOde;
use qhpm::sparse::SparseMatrix;
use qhpm::taylor::{step_grid, MarchingShape};

/// `du/dt = -u + 0.2u²`, `u(0) = 0.5`.
pub fn scalar_ode() -> QuadraticOde {
    QuadraticOde::new(
        SparseMatrix::diagonal(&[-1.0]),
        SparseMatrix::from_triplets(1, 1, &[(0, 0, 0.2)]).unwrap(),
        vec![0.5],
    )
    .unwrap()
}

pub fn scalar_config() -> RunConfig {
    let mut cfg = RunConfig::inline(&scalar_ode(), 1.0, 1e-2);
    cfg.force = true;
    cfg
}

/// Seeded instance with `K = 0.3`.
pub fn seeded_ode(n: usize) -> QuadraticOde {
    generate_instance(n, n.min(3), 0.3, 7).unwrap()
}

pub fn embedded(n: usize, c: usize) -> EmbeddedSystem {
    assemble_a(&seeded_ode(n), c, &EmbedOptions::default()).unwrap()
}

/// Step grid for `T = 1` and a fixed Taylor order.
pub fn shape(sys: &EmbeddedSystem, k: usize) -> MarchingShape {
    let (h, m) = step_grid(1.0, sys.norm_a);
    MarchingShape { h, m, k, p: m }
}
