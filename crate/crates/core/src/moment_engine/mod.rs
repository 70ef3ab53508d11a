//! Exact mixed-moment trajectories of the urn process.
//!
//! Every mixed moment `m_{i,j}(t) = E[W^i(t) B^j(t)]` with `1 <= i + j <= N`
//! satisfies a linear ODE whose right-hand side only involves moments of
//! order at most `i + j`. Stacking them gives one constant-coefficient
//! system `m' = L m` with `L` block lower-triangular by order; the diagonal
//! block of order `n` is the tridiagonal matrix from [`build_an`].

mod asymptotic;
mod combinatorics;
mod solve;
mod system;

pub use asymptotic::{
    asymptotic_coefficients, asymptotic_k, asymptotic_m, leading_coefficient, total_moment,
    AsymptoticCoefficients,
};
pub use combinatorics::{binomial, rising_factorial, stirling2};
pub use solve::{solve_moments, solve_moments_with, MomentTrajectory, SolveMethod, SolveOptions};
pub use system::{
    build_an, build_moment_ode, eigenvalues_an, moment_count, moment_indices, moment_position,
    MomentSystem,
};

/// Largest supported order cap. `e^{k N t}` leaves double range quickly
/// beyond this.
pub const MAX_ORDER_CAP: u32 = 6;
