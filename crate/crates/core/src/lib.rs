//! Learning sparse combinatorial graph Laplacians from node signals and
//! node-metadata distances.
//!
//! The estimate minimizes a convex combination of the Laplacian-constrained
//! Gaussian likelihood of the signals (with a SCAD sparsity penalty) and an
//! entropic Gaussian-kernel objective on the metadata distances. The solver
//! is a majorization-minimization scheme whose per-edge updates are positive
//! roots of cubic equations; see [`solver::run_mm`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod cubic;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod objective;
pub mod side_info;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{edge_count, edge_index, edge_pair, laplacian, WeightVector};
pub use objective::{objective, HyperParams, ProblemData};
pub use solver::{mm_step, run_mm, SolverConfig, SolverTrace, Termination};
