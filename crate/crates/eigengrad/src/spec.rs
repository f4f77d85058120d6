//! Problem-spec files: a single JSON document that names a family builder,
//! carries its matrices inline (row-major), the evaluation point, and the
//! run options. Output tensors are serialized flat with explicit dimension
//! names because nested print layouts do not survive across ecosystems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{
    make_ca, make_elements, make_linear, make_mca, make_mdfa, make_power_series, MatrixFamily,
};
use crate::gsvd::LinearGsvdFamily;
use crate::linalg::{GinverseKind, SymMatrix};
use crate::tensor::{Tensor3, Tensor4};

/// Row-major matrix payload.
pub type Rows = Vec<Vec<f64>>;

pub fn rows_to_dmatrix(rows: &Rows) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Invalid("empty matrix payload".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Invalid("ragged matrix payload".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn rows_to_sym(rows: &Rows) -> Result<SymMatrix> {
    SymMatrix::new(rows_to_dmatrix(rows)?)
}

pub fn dmatrix_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Gevd,
    Evd,
    Gsvd,
    Uls,
    Swain,
    Mdfa,
    DeltaCa,
    DeltaMca,
}

/// One family builder with its data inline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum FamilySpec {
    PowerSeries {
        coeffs_a: Vec<Rows>,
        coeffs_b: Vec<Rows>,
    },
    Linear {
        a0: Rows,
        slopes_a: Vec<Rows>,
        b0: Rows,
        slopes_b: Vec<Rows>,
    },
    Elements {
        n: usize,
    },
    Ca {
        table: Rows,
    },
    Mca {
        profiles: Vec<Vec<u8>>,
        weights: Vec<f64>,
        m: usize,
    },
    Mdfa {
        c: Rows,
        t0: Rows,
        pattern: Vec<Vec<bool>>,
    },
    GsvdLinear {
        f0: Rows,
        slopes_f: Vec<Rows>,
        g0: Rows,
        slopes_g: Vec<Rows>,
        h0: Rows,
        slopes_h: Vec<Rows>,
    },
}

impl FamilySpec {
    pub fn build(&self) -> Result<Box<dyn MatrixFamily>> {
        match self {
            FamilySpec::PowerSeries { coeffs_a, coeffs_b } => {
                let a = coeffs_a.iter().map(rows_to_sym).collect::<Result<_>>()?;
                let b = coeffs_b.iter().map(rows_to_sym).collect::<Result<_>>()?;
                Ok(Box::new(make_power_series(a, b)?))
            }
            FamilySpec::Linear {
                a0,
                slopes_a,
                b0,
                slopes_b,
            } => {
                let sa = slopes_a.iter().map(rows_to_sym).collect::<Result<_>>()?;
                let sb = slopes_b.iter().map(rows_to_sym).collect::<Result<_>>()?;
                Ok(Box::new(make_linear(
                    rows_to_sym(a0)?,
                    sa,
                    rows_to_sym(b0)?,
                    sb,
                )?))
            }
            FamilySpec::Elements { n } => Ok(Box::new(make_elements(*n))),
            FamilySpec::Ca { table } => Ok(Box::new(make_ca(table)?)),
            FamilySpec::Mca {
                profiles,
                weights,
                m,
            } => Ok(Box::new(make_mca(profiles, weights, *m)?)),
            FamilySpec::Mdfa { c, t0, pattern } => Ok(Box::new(make_mdfa(
                rows_to_sym(c)?,
                rows_to_dmatrix(t0)?,
                pattern,
            )?)),
            FamilySpec::GsvdLinear { .. } => Err(Error::Invalid(
                "gsvd family is not an ordinary matrix pair; use build_gsvd".into(),
            )),
        }
    }

    pub fn build_gsvd(&self) -> Result<LinearGsvdFamily> {
        match self {
            FamilySpec::GsvdLinear {
                f0,
                slopes_f,
                g0,
                slopes_g,
                h0,
                slopes_h,
            } => {
                let fs = slopes_f.iter().map(rows_to_dmatrix).collect::<Result<_>>()?;
                let gs = slopes_g.iter().map(rows_to_sym).collect::<Result<_>>()?;
                let hs = slopes_h.iter().map(rows_to_sym).collect::<Result<_>>()?;
                LinearGsvdFamily::new(
                    rows_to_dmatrix(f0)?,
                    fs,
                    rows_to_sym(g0)?,
                    gs,
                    rows_to_sym(h0)?,
                    hs,
                )
            }
            _ => Err(Error::Invalid("expected a gsvd_linear family block".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TolerancesSpec {
    pub dl: Option<f64>,
    pub dx: Option<f64>,
    pub ddl: Option<f64>,
    pub ddx: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OptionsSpec {
    pub ginverse: Option<GinverseKind>,
    pub hessian_values: bool,
    pub hessian_vectors: bool,
    pub fd_check: bool,
    pub gap_tol: Option<f64>,
    pub tolerances: TolerancesSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub format: OutputFormat,
    pub path: Option<String>,
}

/// The whole spec file. `family` is required for the decomposition kinds;
/// the covariance-based losses (uls, swain) carry `covariance` instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: Kind,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub covariance: Option<Rows>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub options: OptionsSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Kind-specific extras: retained factors (uls/swain/mdfa statistics),
    /// discrepancy name (swain), diagonal D (uls/swain), sample size (delta).
    #[serde(default)]
    pub n_factors: Option<usize>,
    #[serde(default)]
    pub discrepancy: Option<String>,
    #[serde(default)]
    pub d_diagonal: Option<Vec<f64>>,
    #[serde(default)]
    pub n_obs: Option<f64>,
}

impl ProblemSpec {
    /// The evaluation point; when the spec omits theta and the family has a
    /// natural base point (CA and MCA: the observed proportions), use that.
    pub fn theta_vec(&self) -> Result<DVector<f64>> {
        if !self.theta.is_empty() {
            return Ok(DVector::from_vec(self.theta.clone()));
        }
        match &self.family {
            Some(FamilySpec::Ca { table }) => Ok(make_ca(table)?.theta0()),
            Some(FamilySpec::Mca {
                profiles,
                weights,
                m,
            }) => Ok(make_mca(profiles, weights, *m)?.theta0()),
            _ => Ok(DVector::zeros(0)),
        }
    }

    pub fn require_family(&self) -> Result<&FamilySpec> {
        self.family
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("kind {:?} needs a family block", self.kind)))
    }

    pub fn require_covariance(&self) -> Result<SymMatrix> {
        let rows = self
            .covariance
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("kind {:?} needs a covariance block", self.kind)))?;
        rows_to_sym(rows)
    }
}

/// Flat tensor with named dimensions, the self-describing output layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorOut {
    pub dims: Vec<String>,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorOut {
    pub fn from_vector(dim: &str, v: &DVector<f64>) -> Self {
        TensorOut {
            dims: vec![dim.into()],
            shape: vec![v.len()],
            data: v.iter().cloned().collect(),
        }
    }

    /// Row-major flattening of a matrix with named row and column indices.
    pub fn from_matrix(d0: &str, d1: &str, m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        TensorOut {
            dims: vec![d0.into(), d1.into()],
            shape: vec![m.nrows(), m.ncols()],
            data,
        }
    }

    pub fn from_tensor3(d0: &str, d1: &str, d2: &str, t: &Tensor3) -> Self {
        TensorOut {
            dims: vec![d0.into(), d1.into(), d2.into()],
            shape: t.dims().to_vec(),
            data: t.data().to_vec(),
        }
    }

    pub fn from_tensor4(d0: &str, d1: &str, d2: &str, d3: &str, t: &Tensor4) -> Self {
        TensorOut {
            dims: vec![d0.into(), d1.into(), d2.into(), d3.into()],
            shape: t.dims().to_vec(),
            data: t.data().to_vec(),
        }
    }
}
