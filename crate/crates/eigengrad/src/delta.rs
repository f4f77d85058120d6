//! Delta-method asymptotic variance and bias for statistics of multinomial
//! proportions: covariance Df' (Pi - pi pi') Df and per-coordinate bias
//! (1/2) tr D^2 f_nu (Pi - pi pi'), both evaluated at plugin proportions.
//! Division by N happens only in the named accessors.

use nalgebra::{DMatrix, DVector};

use crate::deriv::EigenDerivBundle;
use crate::error::{Error, Result};
use crate::family::MatrixFamily;
use crate::linalg::SymMatrix;

/// Cell proportions and sample size of one multinomial sample. Zero cells
/// are allowed; they contribute zero rows and columns to the kernel.
pub struct MultinomialDesign {
    pi: DVector<f64>,
    n_obs: f64,
}

impl MultinomialDesign {
    pub fn new(pi: DVector<f64>, n_obs: f64) -> Result<Self> {
        if pi.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Invalid("cell proportions must be nonnegative".into()));
        }
        let sum: f64 = pi.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "cell proportions sum to {sum}, expected 1 within 1e-12"
            )));
        }
        if !(n_obs > 0.0) {
            return Err(Error::Invalid("sample size must be positive".into()));
        }
        Ok(MultinomialDesign { pi, n_obs })
    }

    pub fn cells(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn n_obs(&self) -> f64 {
        self.n_obs
    }

    /// K = Pi - pi pi'; PSD with K 1 = 0.
    pub fn kernel(&self) -> SymMatrix {
        let k = DMatrix::from_diagonal(&self.pi) - &self.pi * self.pi.transpose();
        SymMatrix::symmetrized(k)
    }
}

/// Value, Jacobian, and optional per-coordinate Hessians of a statistic
/// f: proportions (M) -> R^m, all evaluated at the design's proportions.
pub struct StatisticDerivatives {
    pub value: DVector<f64>,
    /// M x m; column nu is the gradient of coordinate nu.
    pub jac: DMatrix<f64>,
    /// One M x M Hessian per coordinate.
    pub hess: Option<Vec<SymMatrix>>,
}

impl StatisticDerivatives {
    pub fn new(
        value: DVector<f64>,
        jac: DMatrix<f64>,
        hess: Option<Vec<SymMatrix>>,
    ) -> Result<Self> {
        if jac.ncols() != value.len() {
            return Err(Error::ShapeMismatch(format!(
                "jacobian has {} columns for {} statistic coordinates",
                jac.ncols(),
                value.len()
            )));
        }
        if let Some(hs) = &hess {
            if hs.len() != value.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} hessians for {} coordinates",
                    hs.len(),
                    value.len()
                )));
            }
            for h in hs {
                if h.order() != jac.nrows() {
                    return Err(Error::ShapeMismatch(
                        "hessian order differs from the cell count".into(),
                    ));
                }
            }
        }
        Ok(StatisticDerivatives { value, jac, hess })
    }

    pub fn cells(&self) -> usize {
        self.jac.nrows()
    }

    pub fn coords(&self) -> usize {
        self.value.len()
    }
}

fn check_shapes(design: &MultinomialDesign, stat: &StatisticDerivatives) -> Result<()> {
    if stat.cells() != design.cells() {
        return Err(Error::ShapeMismatch(format!(
            "statistic is over {} cells, design has {}",
            stat.cells(),
            design.cells()
        )));
    }
    Ok(())
}

/// Asymptotic covariance Df' K Df, per sqrt(N) scaling.
pub fn delta_covariance(
    design: &MultinomialDesign,
    stat: &StatisticDerivatives,
) -> Result<SymMatrix> {
    check_shapes(design, stat)?;
    let k = design.kernel();
    Ok(SymMatrix::symmetrized(
        stat.jac.transpose() * k.mat() * &stat.jac,
    ))
}

/// Plugin covariance of the statistic itself: delta_covariance / N.
pub fn delta_covariance_per_n(
    design: &MultinomialDesign,
    stat: &StatisticDerivatives,
) -> Result<SymMatrix> {
    let cov = delta_covariance(design, stat)?;
    Ok(SymMatrix::symmetrized(cov.mat() / design.n_obs()))
}

/// Per-coordinate asymptotic bias (1/2) tr D^2 f_nu K; the order-1/N bias
/// of the plugin statistic is this divided by N.
pub fn delta_bias(design: &MultinomialDesign, stat: &StatisticDerivatives) -> Result<DVector<f64>> {
    check_shapes(design, stat)?;
    let hess = stat.hess.as_ref().ok_or(Error::MissingHessian)?;
    let k = design.kernel();
    let mut bias = DVector::zeros(stat.coords());
    for (nu, h) in hess.iter().enumerate() {
        bias[nu] = 0.5 * (h.mat() * k.mat()).trace();
    }
    Ok(bias)
}

/// Plugin bias of the statistic: delta_bias / N.
pub fn delta_bias_per_n(
    design: &MultinomialDesign,
    stat: &StatisticDerivatives,
) -> Result<DVector<f64>> {
    Ok(delta_bias(design, stat)? / design.n_obs())
}

/// Repackages an eigenvalue derivative bundle of a family whose parameters
/// are the cell proportions themselves into statistic derivatives. The
/// family must be affine in the cells (CA and MCA are), so the eigenvalue
/// Hessian with respect to parameters IS the statistic Hessian with respect
/// to cells; any curvature in the matrix map would add missing terms.
pub fn chain_from_bundle(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    bundle: &EigenDerivBundle,
) -> Result<StatisticDerivatives> {
    let p = fam.p();
    for s in 0..p {
        for t in s..p {
            if fam.dda(theta, s, t).max_abs() != 0.0 || fam.ddb(theta, s, t).max_abs() != 0.0 {
                return Err(Error::NonAffineFamily);
            }
        }
    }
    let n = bundle.order();
    let jac = bundle.dl.transpose();
    let hess = bundle.ddl.as_ref().map(|ddl| {
        (0..n)
            .map(|nu| {
                SymMatrix::symmetrized(DMatrix::from_fn(p, p, |s, t| ddl.get(s, t, nu)))
            })
            .collect()
    });
    StatisticDerivatives::new(bundle.lambda.clone(), jac, hess)
}
