//! Quadrature, optimisation, chi-square distributions and small dense
//! linear algebra.

pub mod chisq;
pub mod linalg;
pub mod optimize;
pub mod quadrature;

pub use chisq::{chisq_quantile, chisq_sf, noncentral_chisq_sf, normal_cdf, power_kernel, NoncentralChisq};
pub use linalg::{generalized_eigenvalues, invert_spd, SymmetricMatrix};
pub use optimize::{golden_section, minimize, minimize_multistart, Bounds, Minimum, NelderMeadOptions};
pub use quadrature::{integrate, integrate_2d, integrate_vec, IntegrationDomain, QuadOptions};
