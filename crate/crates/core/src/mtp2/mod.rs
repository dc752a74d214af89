//! Gaussian maximum likelihood under M-matrix (MTP₂) constraints on the
//! precision matrix, and numerical checks of the MTP₂ property.

mod newton;
mod solver;
mod verify;

pub use solver::{
    kkt_report, kkt_residual, mtp2_mle, mtp2_mle_kendall, mtp2_mle_kendall_with, mtp2_mle_with,
    CorrelationScaleFit, InputScale, KktReport, Mtp2Options, MtpSolution, KENDALL_RIDGE,
};
pub use verify::{
    bivariate_t_density, check_mtp2_pair, is_m_matrix, mtp2_pair_report, single_factor_covariance,
    BivariateT, DensityOracle, GaussianDensity, PairCheck, MTP2_RELATIVE_SLACK,
};
