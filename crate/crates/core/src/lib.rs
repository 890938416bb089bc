//! Numerical lab for the nonlocal parabolic fractional p-Laplacian on
//! bounded domains: a discrete operator, an implicit solver, and diagnostics
//! that measure the constants in the local energy and sup estimates.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimates;
pub mod geometry;
pub mod io;
pub mod kernel;
pub mod operator;
pub mod properties;
pub mod solver;

pub use data::{ScalarFn, Term};
pub use error::{Error, Result};
pub use geometry::{build_cutoff, build_mesh, distance, scale_cylinder, CutoffSpec, Cylinder, Mesh, Point};
pub use kernel::{canonical, eval_kernel, validate_ellipticity, EllipticityReport, Kernel, KernelForm, KernelSpec};
pub use operator::{
    apply_l, apply_l_naive, benchmark_apply, dual_pairing, energy, negative_part, positive_part, seminorm,
    sobolev_ratio, truncate, BenchReport, Field, OperatorApplyPlan, PowerLaw,
};
pub use solver::{
    l2_contraction_check, solve, solve_explicit, solve_from, step_implicit, subsolution_residual, ContractionReport,
    ProblemSpec, StepConfig, StepStats, SubsolutionReport, Trajectory, Transform,
};
