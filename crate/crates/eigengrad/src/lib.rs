//! Analytic first and second derivatives of generalized eigenvalues,
//! eigenvectors, and generalized singular values of parametric symmetric
//! matrix pairs, with applications to factor-analysis objectives and
//! delta-method inference for multinomial data, verified throughout by an
//! independent finite-difference oracle.

pub mod delta;
pub mod deriv;
pub mod error;
pub mod fa;
pub mod family;
pub mod fd;
pub mod gsvd;
pub mod linalg;
pub mod spec;
pub mod tensor;

pub use delta::{
    chain_from_bundle, delta_bias, delta_bias_per_n, delta_covariance, delta_covariance_per_n,
    MultinomialDesign, StatisticDerivatives,
};
pub use deriv::{
    evd_jacobian, gevd_jacobian, gevd_value_gradient, DerivOptions, EigenDerivBundle,
};
pub use error::{Error, Result};
pub use fa::{
    mdfa_gradient, mdfa_gradient_matrix, mdfa_hessian, mdfa_trace_norm, swain_gradient,
    swain_hessian, swain_value, uls_gradient, uls_hessian, uls_value, FaProblem, SwainF,
};
pub use family::{
    make_ca, make_elements, make_linear, make_mca, make_mdfa, make_power_series, CaFamily,
    ElementFamily, LinearFamily, MatrixFamily, McaFamily, MdfaFamily, PowerSeriesFamily,
};
pub use fd::{
    fd_check_bundle, fd_gradient, fd_hessian, fd_hessian_multi, fd_jacobian, FdConfig, FdReport,
    FdTolerances,
};
pub use gsvd::{
    gsvd_hessian_values, gsvd_jacobian, gsvd_solve, GsvdDerivBundle, GsvdEmbedding, GsvdFamily,
    GsvdSolution, LinearGsvdFamily,
};
pub use linalg::{gevd_solve, penrose_residuals, GevdSolution, GinverseKind, SymMatrix};
pub use tensor::{Tensor3, Tensor4};
