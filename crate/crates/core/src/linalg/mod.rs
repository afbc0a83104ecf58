//! Dense real linear algebra used throughout the crate.

// Kernels read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

mod decomp;
mod eigen;
mod matrix;
mod riccati;

pub use decomp::{
    cholesky, cholesky_solve, condition_number, inverse, is_positive_definite, logdet, solve_linear, spd_inverse, Lu,
    MAX_CONDITION,
};
pub use eigen::{max_singular_value, spectral_radius, sym_eig, sym_eig_vectors, Spectrum, SYMMETRY_TOL};
pub use matrix::{dot, norm_sq, Matrix};
pub use riccati::{
    control_dare_residual, controllability_rank, filter_dare_residual, solve_control_dare, solve_control_dare_with,
    solve_filter_dare, solve_filter_dare_with, RiccatiOptions, RESIDUAL_TOL,
};
pub(crate) use riccati::{measurement_information, posterior_from_prior};
