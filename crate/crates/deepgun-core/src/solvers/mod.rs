//! Constrained and unconstrained numerical solvers.

pub mod admm;
pub mod bfgs;
pub mod fcls;
pub mod simplex;
pub mod spatial;
pub mod zstep;

pub use admm::{solve_a_step, solve_a_step_diag, AdmmConfig, AdmmDiagnostics};
pub use bfgs::{bfgs_minimize, BfgsOutcome};
pub use fcls::{fcls, fcls_image, fcls_view};
pub use simplex::project_simplex;
pub use spatial::{grad_h, grad_h_adjoint, grad_v, grad_v_adjoint};
pub use zstep::solve_z_step;

/// Sum of column Euclidean norms.
pub fn l21_norm(x: &ndarray::Array2<f64>) -> f64 {
    x.columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .sum()
}
