//! Best polynomial approximation of exponentials and the Bessel-function bounds on
//! its error.

mod minimax;
mod bessel;
mod remez;

pub use minimax::{
    best_approx_gamma, bessel_sum_lower_bound, bessel_sum_terms, decay_shape, approx_bounds, ApproxBoundsReport,
    PolyApproxProblem, DEFAULT_C0,
};
pub use bessel::{bessel_i, bessel_i_scaled, bessel_lower_bound, ln_bessel_i};
pub use remez::{clenshaw, remez_best_approx, BestApproxResult, MAX_DEGREE};
