//! Jacobians and Hessians of generalized eigenvalues and eigenvectors of a
//! parametric pair, with the ordinary (B = I) fast path.
//!
//! Array layouts follow the reference conventions: `dl` is n x p with entry
//! (nu, s) = D_s lambda_nu; `dx` is (i, s, nu); `ddl` is (s, t, nu); `ddx`
//! is (s, t, i, nu).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{check_theta, MatrixFamily};
use crate::linalg::{
    gevd_solve, mp_ginverse, nelson_ginverse, reflexive_ginverse, GevdSolution, GinverseKind,
    SymMatrix,
};
use crate::tensor::{Tensor3, Tensor4};

/// Options for the derivative engine.
#[derive(Clone, Copy, Debug)]
pub struct DerivOptions {
    pub ginverse: GinverseKind,
    pub hessian_values: bool,
    pub hessian_vectors: bool,
    /// Overrides the default `1e-8 * (1 + max |lambda|)`.
    pub gap_tol: Option<f64>,
}

impl Default for DerivOptions {
    fn default() -> Self {
        DerivOptions {
            ginverse: GinverseKind::ReflexiveSpectral,
            hessian_values: false,
            hessian_vectors: false,
            gap_tol: None,
        }
    }
}

impl DerivOptions {
    pub fn with_hessians(mut self) -> Self {
        self.hessian_values = true;
        self.hessian_vectors = true;
        self
    }

    fn normalized(mut self) -> Self {
        // The vector-Hessian recipe consumes the value Hessian inputs.
        if self.hessian_vectors {
            self.hessian_values = true;
        }
        self
    }
}

/// All derivative output for one family at one parameter point.
#[derive(Clone, Debug)]
pub struct EigenDerivBundle {
    pub a: SymMatrix,
    pub b: SymMatrix,
    pub lambda: DVector<f64>,
    pub x: DMatrix<f64>,
    /// n x p, entry (nu, s).
    pub dl: DMatrix<f64>,
    /// (i, s, nu).
    pub dx: Tensor3,
    /// (s, t, nu), symmetrized over (s, t).
    pub ddl: Option<Tensor3>,
    /// (s, t, i, nu), symmetrized over (s, t).
    pub ddx: Option<Tensor4>,
    /// Largest raw (s, t) asymmetry absorbed when symmetrizing ddl.
    pub ddl_raw_asymmetry: f64,
    /// Largest raw (s, t) asymmetry absorbed when symmetrizing ddx.
    pub ddx_raw_asymmetry: f64,
}

impl EigenDerivBundle {
    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    pub fn params(&self) -> usize {
        self.dl.ncols()
    }
}

/// Raw asymmetry above which the (s, t) averaging is suspicious and a
/// diagnostic is warranted; signals a bad family implementation.
pub const DDL_ASYMMETRY_WARN: f64 = 1e-7;

struct Workspace<'f> {
    fam: &'f dyn MatrixFamily,
    sol: GevdSolution,
    a: SymMatrix,
    b: SymMatrix,
    gap_tol: f64,
    da: Vec<SymMatrix>,
    db: Vec<SymMatrix>,
    /// w[s][nu] = (D_s A - lambda_nu D_s B) x_nu.
    w: Vec<Vec<DVector<f64>>>,
    /// xbs[s][nu] = x_nu' (D_s B) x_nu.
    xbs: Vec<Vec<f64>>,
    bx: Vec<DVector<f64>>,
}

impl<'f> Workspace<'f> {
    fn build(fam: &'f dyn MatrixFamily, theta: &DVector<f64>, gap_tol: Option<f64>) -> Result<Self> {
        check_theta(fam, theta)?;
        let a = fam.a(theta);
        let b = fam.b(theta);
        let sol = gevd_solve(&a, &b)?;
        let gap_tol = gap_tol.unwrap_or_else(|| sol.gap_tol());
        let n = sol.order();
        let p = fam.p();
        let da: Vec<SymMatrix> = (0..p).map(|s| fam.da(theta, s)).collect();
        let db: Vec<SymMatrix> = (0..p).map(|s| fam.db(theta, s)).collect();
        let mut w = Vec::with_capacity(p);
        let mut xbs = Vec::with_capacity(p);
        for s in 0..p {
            let mut ws = Vec::with_capacity(n);
            let mut xs = Vec::with_capacity(n);
            for nu in 0..n {
                let xnu: DVector<f64> = sol.x.column(nu).into_owned();
                let v = da[s].mat() * &xnu - (db[s].mat() * &xnu) * sol.lambda[nu];
                xs.push((db[s].mat() * &xnu).dot(&xnu));
                ws.push(v);
            }
            w.push(ws);
            xbs.push(xs);
        }
        let bx: Vec<DVector<f64>> = (0..n).map(|nu| b.mat() * sol.x.column(nu)).collect();
        Ok(Workspace {
            fam,
            sol,
            a,
            b,
            gap_tol,
            da,
            db,
            w,
            xbs,
            bx,
        })
    }

    fn n(&self) -> usize {
        self.sol.order()
    }

    fn p(&self) -> usize {
        self.da.len()
    }

    fn require_all_simple(&self) -> Result<()> {
        for nu in 0..self.n() {
            self.sol.require_simple(nu, self.gap_tol)?;
        }
        Ok(())
    }

    /// dl[(nu, s)] = x_nu' (D_s A - lambda_nu D_s B) x_nu.
    fn eigenvalue_jacobian(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        DMatrix::from_fn(n, p, |nu, s| {
            self.w[s][nu].dot(&self.sol.x.column(nu).into_owned())
        })
    }

    /// Eigenvector Jacobian through the requested g-inverse, with the
    /// normalization correction that makes the result independent of the
    /// choice: dx = G y + theta x, y = -W + (D_s lambda) B x,
    /// theta = -1/2 x'(D_s B)x - x' B G y.
    fn eigenvector_jacobian(&self, kind: GinverseKind, dl: &DMatrix<f64>) -> Result<Tensor3> {
        let (n, p) = (self.n(), self.p());
        let mut dx = Tensor3::zeros(n, p, n);
        for nu in 0..n {
            self.sol.require_simple(nu, self.gap_tol)?;
            let g: DMatrix<f64> = match kind {
                GinverseKind::ReflexiveSpectral => {
                    reflexive_ginverse(&self.sol, nu, self.gap_tol)?.into_mat()
                }
                GinverseKind::MoorePenroseBordered => {
                    let xnu: DVector<f64> = self.sol.x.column(nu).into();
                    mp_ginverse(&self.a, &self.b, self.sol.lambda[nu], &xnu)?.into_mat()
                }
                GinverseKind::NelsonSubmatrix => {
                    let xnu: DVector<f64> = self.sol.x.column(nu).into();
                    nelson_ginverse(&self.a, &self.b, self.sol.lambda[nu], &xnu)?
                }
            };
            for s in 0..p {
                let y = -&self.w[s][nu] + &self.bx[nu] * dl[(nu, s)];
                let gy = &g * &y;
                let corr = -0.5 * self.xbs[s][nu] - self.bx[nu].dot(&gy);
                let col = gy + self.sol.x.column(nu) * corr;
                for i in 0..n {
                    dx.set(i, s, nu, col[i]);
                }
            }
        }
        Ok(dx)
    }

    /// Second partials of the eigenvalues, averaged over (s, t).
    fn hessian_values(
        &self,
        theta: &DVector<f64>,
        dl: &DMatrix<f64>,
        dx: &Tensor3,
    ) -> (Tensor3, f64) {
        let (n, p) = (self.n(), self.p());
        let mut raw = Tensor3::zeros(p, p, n);
        for s in 0..p {
            for t in 0..p {
                let dda = self.fam.dda(theta, s, t);
                let ddb = self.fam.ddb(theta, s, t);
                for nu in 0..n {
                    let xnu: DVector<f64> = self.sol.x.column(nu).into_owned();
                    let dtx = DVector::from_fn(n, |i, _| dx.get(i, t, nu));
                    let term1 = 2.0 * self.w[s][nu].dot(&dtx);
                    let term2 = (dda.mat() * &xnu - (ddb.mat() * &xnu) * self.sol.lambda[nu])
                        .dot(&xnu);
                    let term3 = self.xbs[s][nu] * dl[(nu, t)];
                    raw.set(s, t, nu, term1 + term2 - term3);
                }
            }
        }
        let mut ddl = Tensor3::zeros(p, p, n);
        let mut asym = 0.0f64;
        for s in 0..p {
            for t in 0..p {
                for nu in 0..n {
                    let a = raw.get(s, t, nu);
                    let b = raw.get(t, s, nu);
                    asym = asym.max((a - b).abs());
                    ddl.set(s, t, nu, 0.5 * (a + b));
                }
            }
        }
        (ddl, asym)
    }

    /// Second partials of the eigenvectors by the stepwise recipe:
    /// differentiate each term of the first-derivative sum using the
    /// numerical values of dl and dx.
    fn hessian_vectors(
        &self,
        theta: &DVector<f64>,
        dl: &DMatrix<f64>,
        dx: &Tensor3,
    ) -> (Tensor4, f64) {
        let (n, p) = (self.n(), self.p());
        let dxcol = |s: usize, nu: usize| DVector::from_fn(n, |i, _| dx.get(i, s, nu));
        let mut raw = Tensor4::zeros(p, p, n, n);
        for s in 0..p {
            for t in 0..p {
                let dda = self.fam.dda(theta, s, t);
                let ddb = self.fam.ddb(theta, s, t);
                for nu in 0..n {
                    let xnu: DVector<f64> = self.sol.x.column(nu).into();
                    let dtxnu = dxcol(t, nu);
                    // (D_s A - lambda_nu D_s B) D_t x_nu, reused across eta.
                    let ms_dtxnu =
                        self.da[s].mat() * &dtxnu - (self.db[s].mat() * &dtxnu) * self.sol.lambda[nu];
                    let dd_xnu =
                        dda.mat() * &xnu - (ddb.mat() * &xnu) * self.sol.lambda[nu];
                    let mut col = DVector::zeros(n);
                    for eta in 0..n {
                        if eta == nu {
                            continue;
                        }
                        let gap = self.sol.lambda[eta] - self.sol.lambda[nu];
                        let xeta: DVector<f64> = self.sol.x.column(eta).into();
                        let dtxeta = dxcol(t, eta);
                        let num = self.w[s][nu].dot(&xeta);
                        // D_t of the numerator x_eta'(D_sA - lambda_nu D_sB)x_nu.
                        let dnum = dtxeta.dot(&self.w[s][nu])
                            + xeta.dot(&ms_dtxnu)
                            + xeta.dot(&dd_xnu)
                            - dl[(nu, t)] * xeta.dot(&(self.db[s].mat() * &xnu));
                        // Quotient rule for num / (lambda_eta - lambda_nu).
                        let dcoef = dnum / gap - (dl[(eta, t)] - dl[(nu, t)]) * num / (gap * gap);
                        let coef = num / gap;
                        col -= &xeta * dcoef;
                        col -= &dtxeta * coef;
                    }
                    // D_t of the normalization term (x'(D_sB)x) x / 2.
                    let dxbs = 2.0 * dtxnu.dot(&(self.db[s].mat() * &xnu))
                        + xnu.dot(&(ddb.mat() * &xnu));
                    col -= &xnu * (0.5 * dxbs);
                    col -= &dtxnu * (0.5 * self.xbs[s][nu]);
                    for i in 0..n {
                        raw.set(s, t, i, nu, col[i]);
                    }
                }
            }
        }
        let mut ddx = Tensor4::zeros(p, p, n, n);
        let mut asym = 0.0f64;
        for s in 0..p {
            for t in 0..p {
                for i in 0..n {
                    for nu in 0..n {
                        let a = raw.get(s, t, i, nu);
                        let b = raw.get(t, s, i, nu);
                        asym = asym.max((a - b).abs());
                        ddx.set(s, t, i, nu, 0.5 * (a + b));
                    }
                }
            }
        }
        (ddx, asym)
    }
}

/// First (and optionally second) derivatives of the generalized
/// eigenvalues and eigenvectors of `(A(theta), B(theta))`.
pub fn gevd_jacobian(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    opts: &DerivOptions,
) -> Result<EigenDerivBundle> {
    let opts = opts.normalized();
    let ws = Workspace::build(fam, theta, opts.gap_tol)?;
    ws.require_all_simple()?;
    let dl = ws.eigenvalue_jacobian();
    let dx = ws.eigenvector_jacobian(opts.ginverse, &dl)?;
    // Hessians always run through the reflexive-spectral eigenvector
    // derivatives, whatever g-inverse the caller picked for dx.
    let (ddl, ddx, ddl_asym, ddx_asym) = if opts.hessian_values {
        let dx_for_hessian = if opts.ginverse == GinverseKind::ReflexiveSpectral {
            dx.clone()
        } else {
            ws.eigenvector_jacobian(GinverseKind::ReflexiveSpectral, &dl)?
        };
        let (ddl, a1) = ws.hessian_values(theta, &dl, &dx_for_hessian);
        if opts.hessian_vectors {
            let (ddx, a2) = ws.hessian_vectors(theta, &dl, &dx_for_hessian);
            (Some(ddl), Some(ddx), a1, a2)
        } else {
            (Some(ddl), None, a1, 0.0)
        }
    } else {
        (None, None, 0.0, 0.0)
    };
    Ok(EigenDerivBundle {
        a: ws.a,
        b: ws.b,
        lambda: ws.sol.lambda,
        x: ws.sol.x,
        dl,
        dx,
        ddl,
        ddx,
        ddl_raw_asymmetry: ddl_asym,
        ddx_raw_asymmetry: ddx_asym,
    })
}

/// Eigenvalue gradient from `(lambda_nu, x_nu)` alone; no other eigenpairs
/// are needed.
pub fn gevd_value_gradient(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    lambda_nu: f64,
    x_nu: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_theta(fam, theta)?;
    let p = fam.p();
    Ok(DVector::from_fn(p, |s, _| {
        let da = fam.da(theta, s);
        let db = fam.db(theta, s);
        (da.mat() * x_nu - (db.mat() * x_nu) * lambda_nu).dot(x_nu)
    }))
}

fn require_identity_b(fam: &dyn MatrixFamily, theta: &DVector<f64>) -> Result<()> {
    if fam.b_is_identity() {
        return Ok(());
    }
    let n = fam.n();
    let b = fam.b(theta);
    let dev = (b.mat() - DMatrix::<f64>::identity(n, n))
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if dev > 1e-14 {
        return Err(Error::NotIdentityB);
    }
    for s in 0..fam.p() {
        if fam.db(theta, s).max_abs() != 0.0 {
            return Err(Error::NotIdentityB);
        }
    }
    Ok(())
}

/// EVD (B = I) fast path for the first derivatives:
/// `D_s lambda_nu = x_nu' (D_s A) x_nu` and
/// `D_s x_nu = -(A - lambda_nu I)^+ (D_s A) x_nu`, with the true
/// Moore-Penrose inverse (which the spectral construction is when B = I).
pub fn evd_jacobian(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    opts: &DerivOptions,
) -> Result<EigenDerivBundle> {
    let opts = opts.normalized();
    check_theta(fam, theta)?;
    require_identity_b(fam, theta)?;
    let a = fam.a(theta);
    let n = a.order();
    let p = fam.p();
    let (lambda, x) = crate::linalg::sym_evd(&a);
    let sol = GevdSolution {
        lambda: lambda.clone(),
        x: x.clone(),
        b_used: SymMatrix::identity(n),
    };
    let gap_tol = opts.gap_tol.unwrap_or_else(|| sol.gap_tol());
    for nu in 0..n {
        sol.require_simple(nu, gap_tol)?;
    }
    let da: Vec<SymMatrix> = (0..p).map(|s| fam.da(theta, s)).collect();
    // q[s] = X' (D_s A) X: every formula below reads off its entries.
    let q: Vec<DMatrix<f64>> = da.iter().map(|d| x.transpose() * d.mat() * &x).collect();
    let dl = DMatrix::from_fn(n, p, |nu, s| q[s][(nu, nu)]);
    let mut dx = Tensor3::zeros(n, p, n);
    for nu in 0..n {
        for s in 0..p {
            let mut col = DVector::zeros(n);
            for eta in 0..n {
                if eta == nu {
                    continue;
                }
                let coef = q[s][(eta, nu)] / (lambda[eta] - lambda[nu]);
                col -= x.column(eta) * coef;
            }
            for i in 0..n {
                dx.set(i, s, nu, col[i]);
            }
        }
    }
    let (ddl, ddx, ddl_asym, ddx_asym) = if opts.hessian_values {
        let (ddl, a1) = evd_hessian_values_summation(fam, theta, &lambda, &x, &q);
        if opts.hessian_vectors {
            let (ddx, a2) = evd_hessian_vectors_recipe(fam, theta, &lambda, &x, &q, &dl, &dx);
            (Some(ddl), Some(ddx), a1, a2)
        } else {
            (Some(ddl), None, a1, 0.0)
        }
    } else {
        (None, None, 0.0, 0.0)
    };
    Ok(EigenDerivBundle {
        a,
        b: SymMatrix::identity(n),
        lambda,
        x,
        dl,
        dx,
        ddl,
        ddx,
        ddl_raw_asymmetry: ddl_asym,
        ddx_raw_asymmetry: ddx_asym,
    })
}

/// Summation form of the eigenvalue Hessian for B = I:
/// `-2 sum_{eta != nu} (x_nu' D_sA x_eta)(x_nu' D_tA x_eta) / (lambda_eta -
/// lambda_nu) + x_nu' D_stA x_nu`. Default form: no n x n inverse apply per
/// (s, t) pair.
fn evd_hessian_values_summation(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
    x: &DMatrix<f64>,
    q: &[DMatrix<f64>],
) -> (Tensor3, f64) {
    let n = lambda.len();
    let p = q.len();
    let mut raw = Tensor3::zeros(p, p, n);
    for s in 0..p {
        for t in 0..p {
            let dda = fam.dda(theta, s, t);
            for nu in 0..n {
                let mut sum = 0.0;
                for eta in 0..n {
                    if eta == nu {
                        continue;
                    }
                    sum += q[s][(nu, eta)] * q[t][(nu, eta)] / (lambda[eta] - lambda[nu]);
                }
                let xnu: DVector<f64> = x.column(nu).into_owned();
                let second = (dda.mat() * &xnu).dot(&xnu);
                raw.set(s, t, nu, -2.0 * sum + second);
            }
        }
    }
    let mut ddl = Tensor3::zeros(p, p, n);
    let mut asym = 0.0f64;
    for s in 0..p {
        for t in 0..p {
            for nu in 0..n {
                let a = raw.get(s, t, nu);
                let b = raw.get(t, s, nu);
                asym = asym.max((a - b).abs());
                ddl.set(s, t, nu, 0.5 * (a + b));
            }
        }
    }
    (ddl, asym)
}

/// Matrix form of the B = I eigenvalue Hessian:
/// `-2 x_nu'(D_sA)(A - lambda_nu I)^+ (D_tA) x_nu + x_nu' D_stA x_nu`.
/// Exposed so the two routes can be checked against each other.
pub fn evd_hessian_values_matrix_form(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    opts: &DerivOptions,
) -> Result<Tensor3> {
    check_theta(fam, theta)?;
    require_identity_b(fam, theta)?;
    let a = fam.a(theta);
    let n = a.order();
    let p = fam.p();
    let (lambda, x) = crate::linalg::sym_evd(&a);
    let sol = GevdSolution {
        lambda: lambda.clone(),
        x: x.clone(),
        b_used: SymMatrix::identity(n),
    };
    let gap_tol = opts.gap_tol.unwrap_or_else(|| sol.gap_tol());
    for nu in 0..n {
        sol.require_simple(nu, gap_tol)?;
    }
    let da: Vec<SymMatrix> = (0..p).map(|s| fam.da(theta, s)).collect();
    let mut ddl = Tensor3::zeros(p, p, n);
    for nu in 0..n {
        let pinv = reflexive_ginverse(&sol, nu, gap_tol)?;
        let xnu: DVector<f64> = x.column(nu).into();
        let dax: Vec<DVector<f64>> = da.iter().map(|d| d.mat() * &xnu).collect();
        for s in 0..p {
            for t in 0..p {
                let dda = fam.dda(theta, s, t);
                let v = -2.0 * dax[s].dot(&(pinv.mat() * &dax[t]))
                    + (dda.mat() * &xnu).dot(&xnu);
                ddl.set(s, t, nu, v);
            }
        }
    }
    // Symmetrize to match the bundle convention.
    for s in 0..p {
        for t in (s + 1)..p {
            for nu in 0..n {
                let m = 0.5 * (ddl.get(s, t, nu) + ddl.get(t, s, nu));
                ddl.set(s, t, nu, m);
                ddl.set(t, s, nu, m);
            }
        }
    }
    Ok(ddl)
}

/// Stepwise eigenvector Hessian for B = I.
#[allow(clippy::too_many_arguments)]
fn evd_hessian_vectors_recipe(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
    x: &DMatrix<f64>,
    _q: &[DMatrix<f64>],
    dl: &DMatrix<f64>,
    dx: &Tensor3,
) -> (Tensor4, f64) {
    let n = lambda.len();
    let p = dl.ncols();
    let da: Vec<SymMatrix> = (0..p).map(|s| fam.da(theta, s)).collect();
    let dxcol = |s: usize, nu: usize| DVector::from_fn(n, |i, _| dx.get(i, s, nu));
    let mut raw = Tensor4::zeros(p, p, n, n);
    for s in 0..p {
        for t in 0..p {
            let dda = fam.dda(theta, s, t);
            for nu in 0..n {
                let xnu: DVector<f64> = x.column(nu).into();
                let dtxnu = dxcol(t, nu);
                let da_xnu = da[s].mat() * &xnu;
                let da_dtxnu = da[s].mat() * &dtxnu;
                let dda_xnu = dda.mat() * &xnu;
                let mut col = DVector::zeros(n);
                for eta in 0..n {
                    if eta == nu {
                        continue;
                    }
                    let gap = lambda[eta] - lambda[nu];
                    let xeta: DVector<f64> = x.column(eta).into();
                    let dtxeta = dxcol(t, eta);
                    let num = xeta.dot(&da_xnu);
                    let dnum = dtxeta.dot(&da_xnu) + xeta.dot(&da_dtxnu) + xeta.dot(&dda_xnu);
                    let dcoef = dnum / gap - (dl[(eta, t)] - dl[(nu, t)]) * num / (gap * gap);
                    col -= &xeta * dcoef;
                    col -= &dtxeta * (num / gap);
                }
                for i in 0..n {
                    raw.set(s, t, i, nu, col[i]);
                }
            }
        }
    }
    let mut ddx = Tensor4::zeros(p, p, n, n);
    let mut asym = 0.0f64;
    for s in 0..p {
        for t in 0..p {
            for i in 0..n {
                for nu in 0..n {
                    let a = raw.get(s, t, i, nu);
                    let b = raw.get(t, s, i, nu);
                    asym = asym.max((a - b).abs());
                    ddx.set(s, t, i, nu, 0.5 * (a + b));
                }
            }
        }
    }
    (ddx, asym)
}
