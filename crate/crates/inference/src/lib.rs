//! Approximate Bayesian inversion of temporal ETAS parameters by iterated
//! linearisation of the likelihood and a Laplace approximation at each
//! step.

pub mod fit;
pub mod laplace;
pub mod surrogate;

pub use fit::{
    check_convergence, fit, line_search, marginals, sample_posterior, FitConfig, FitStatus, IterationRecord,
    Marginal, PosteriorResult,
};
pub use laplace::{laplace_fit, GaussianApprox};
pub use surrogate::{assemble_surrogate, linearized_log_posterior, Linearization, Surrogate, SurrogatePoint};
