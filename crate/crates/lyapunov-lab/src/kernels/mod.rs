//! Closed-form solvable semigroups, their quadrature discretization, Doob
//! h-transforms, diffusion generators and Hoelder domination transfers.

mod closed_form;
mod domination;
mod generator;
mod operator;

pub use closed_form::{
    dirichlet_eigenvalue, dirichlet_heat, dirichlet_survival, gauss_half_interval, gauss_ou_kernel,
    half_harmonic, half_harmonic_density, half_harmonic_linear, half_harmonic_mass, harmonic_mass,
    harmonic_mean, harmonic_var, hermite_functions, hermite_poly, hermite_series_kernel, linear_well_beta,
    lyapunov_ode, mehler_kernel, ClosedFormKernel, GaussOuSlice, KernelSlice, LinearSlice, MODEL_NAMES,
};
pub(crate) use closed_form::to_matrix;
pub use domination::{domination_transfer, DominationReport};
pub use generator::{
    exponential_moment_residual, fit_geometric_drift, generator_apply, generator_apply_fn, DriftFit,
    GeneratorValue, Langevin2d, DEFAULT_FD_STEP,
};
pub use operator::{chapman_kolmogorov_error, discretize, doob_h_inverse, doob_h_transform, model_mass, DiscreteOperator};
