//! Factor-analysis objectives: unweighted least squares on C - D, the Swain
//! discrepancy family on S^(-1/2) D S^(-1/2), and the MDFA trace norm of
//! T' C T. All gradients are with respect to the diagonal of D (ULS, Swain)
//! or the free cells of T (MDFA).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{MatrixFamily, MdfaFamily};
use crate::linalg::{inverse_sqrt_pd, mp_inverse_sqrt, sym_evd, SymMatrix};

/// Covariance/correlation matrix plus the number of retained factors.
pub struct FaProblem {
    c: SymMatrix,
    n_factors: usize,
}

impl FaProblem {
    pub fn new(c: SymMatrix, n_factors: usize) -> Result<Self> {
        if n_factors >= c.order() {
            return Err(Error::Invalid(format!(
                "n_factors = {n_factors} must be below the order {}",
                c.order()
            )));
        }
        Ok(FaProblem { c, n_factors })
    }

    pub fn order(&self) -> usize {
        self.c.order()
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn c(&self) -> &SymMatrix {
        &self.c
    }
}

fn gap_tol_of(lambda: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + lambda.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn require_simple(lambda: &DVector<f64>) -> Result<()> {
    let tol = gap_tol_of(lambda);
    for nu in 0..lambda.len() {
        for eta in (nu + 1)..lambda.len() {
            let gap = (lambda[nu] - lambda[eta]).abs();
            if gap <= tol {
                return Err(Error::DegenerateEigenvalue {
                    nu,
                    eta,
                    gap,
                    tol,
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Unweighted least squares
// ---------------------------------------------------------------------------

fn uls_eigen(prob: &FaProblem, d: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if d.len() != prob.order() {
        return Err(Error::ShapeMismatch(format!(
            "D has length {}, problem order {}",
            d.len(),
            prob.order()
        )));
    }
    let m = prob.c.mat() - DMatrix::from_diagonal(d);
    Ok(sym_evd(&SymMatrix::symmetrized(m)))
}

/// sigma(D) = sum of squared trailing eigenvalues of C - D.
pub fn uls_value(prob: &FaProblem, d: &DVector<f64>) -> Result<f64> {
    let (lambda, _) = uls_eigen(prob, d)?;
    Ok(lambda
        .iter()
        .skip(prob.n_factors)
        .map(|l| l * l)
        .sum())
}

/// D_i sigma = -2 sum_{nu > p} lambda_nu x_{i nu}^2.
pub fn uls_gradient(prob: &FaProblem, d: &DVector<f64>) -> Result<DVector<f64>> {
    let (lambda, x) = uls_eigen(prob, d)?;
    require_simple(&lambda)?;
    let n = prob.order();
    let mut g = DVector::zeros(n);
    for nu in prob.n_factors..n {
        for i in 0..n {
            g[i] += -2.0 * lambda[nu] * x[(i, nu)] * x[(i, nu)];
        }
    }
    Ok(g)
}

/// D_ij sigma = 2 sum_{nu>p} x_{i nu}^2 x_{j nu}^2
///   - 4 sum_{nu>p} sum_{eta != nu} [lambda_nu / (lambda_eta - lambda_nu)]
///     x_{i nu} x_{j nu} x_{i eta} x_{j eta}.
pub fn uls_hessian(prob: &FaProblem, d: &DVector<f64>) -> Result<SymMatrix> {
    let (lambda, x) = uls_eigen(prob, d)?;
    require_simple(&lambda)?;
    let n = prob.order();
    let mut h = DMatrix::zeros(n, n);
    for nu in prob.n_factors..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = 2.0 * x[(i, nu)] * x[(i, nu)] * x[(j, nu)] * x[(j, nu)];
                for eta in 0..n {
                    if eta == nu {
                        continue;
                    }
                    v -= 4.0 * lambda[nu] / (lambda[eta] - lambda[nu])
                        * x[(i, nu)]
                        * x[(j, nu)]
                        * x[(i, eta)]
                        * x[(j, eta)];
                }
                h[(i, j)] += v;
            }
        }
    }
    let asym = (&h - h.transpose()).amax();
    debug_assert!(asym <= 1e-9 * (1.0 + h.amax()));
    Ok(SymMatrix::symmetrized(h))
}

// ---------------------------------------------------------------------------
// Swain family
// ---------------------------------------------------------------------------

type ScalarFn = Box<dyn Fn(f64) -> f64>;

/// A discrepancy function with f(1) = 0, f'(1) = 0, f''(1) = 1, together
/// with its first two derivatives in closed form.
pub enum SwainF {
    /// f1 = 1/theta + log theta - 1 (maximum likelihood).
    Ml,
    /// f2 = (theta - 1)^2 / 2 (GLS with the sample metric).
    GlsSample,
    /// f3 = (log theta)^2 / 2.
    Geodesic,
    /// f4 = (theta - 1)^2 / (2 theta^2) (GLS with the model metric).
    GlsModel,
    Custom {
        f: ScalarFn,
        df: ScalarFn,
        ddf: ScalarFn,
        requires_positive: bool,
    },
}

impl SwainF {
    pub fn builtin() -> [SwainF; 4] {
        [SwainF::Ml, SwainF::GlsSample, SwainF::Geodesic, SwainF::GlsModel]
    }

    /// Registers a user function after checking the family conditions at 1
    /// numerically (value, stationarity, unit curvature).
    pub fn custom<F, G, H>(f: F, df: G, ddf: H, requires_positive: bool) -> Result<SwainF>
    where
        F: Fn(f64) -> f64 + 'static,
        G: Fn(f64) -> f64 + 'static,
        H: Fn(f64) -> f64 + 'static,
    {
        let out = SwainF::Custom {
            f: Box::new(f),
            df: Box::new(df),
            ddf: Box::new(ddf),
            requires_positive,
        };
        let (v, d, dd) = (out.f(1.0), out.df(1.0), out.ddf(1.0));
        if v.abs() > 1e-10 || d.abs() > 1e-10 || (dd - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDiscrepancy(format!(
                "need f(1)=0, f'(1)=0, f''(1)=1; got ({v:.3e}, {d:.3e}, {dd:.6})"
            )));
        }
        // The supplied derivatives must be derivatives of f.
        let h = 1e-5;
        let fd1 = (out.f(1.0 + h) - out.f(1.0 - h)) / (2.0 * h);
        let fd2 = (out.f(1.0 + h) + out.f(1.0 - h) - 2.0 * v) / (h * h);
        if (fd1 - d).abs() > 1e-6 || (fd2 - dd).abs() > 1e-4 {
            return Err(Error::InvalidDiscrepancy(
                "supplied f'/f'' disagree with finite differences of f at 1".into(),
            ));
        }
        Ok(out)
    }

    pub fn requires_positive(&self) -> bool {
        match self {
            SwainF::GlsSample => false,
            SwainF::Custom {
                requires_positive, ..
            } => *requires_positive,
            _ => true,
        }
    }

    pub fn f(&self, t: f64) -> f64 {
        match self {
            SwainF::Ml => 1.0 / t + t.ln() - 1.0,
            SwainF::GlsSample => 0.5 * (t - 1.0) * (t - 1.0),
            SwainF::Geodesic => 0.5 * t.ln() * t.ln(),
            SwainF::GlsModel => 0.5 * (t - 1.0) * (t - 1.0) / (t * t),
            SwainF::Custom { f, .. } => f(t),
        }
    }

    pub fn df(&self, t: f64) -> f64 {
        match self {
            SwainF::Ml => -1.0 / (t * t) + 1.0 / t,
            SwainF::GlsSample => t - 1.0,
            SwainF::Geodesic => t.ln() / t,
            SwainF::GlsModel => (t - 1.0) / (t * t * t),
            SwainF::Custom { df, .. } => df(t),
        }
    }

    pub fn ddf(&self, t: f64) -> f64 {
        match self {
            SwainF::Ml => 2.0 / (t * t * t) - 1.0 / (t * t),
            SwainF::GlsSample => 1.0,
            SwainF::Geodesic => (1.0 - t.ln()) / (t * t),
            SwainF::GlsModel => (3.0 - 2.0 * t) / (t * t * t * t),
            SwainF::Custom { ddf, .. } => ddf(t),
        }
    }
}

struct SwainEigen {
    lambda: DVector<f64>,
    /// Y = S^(-1/2) X, the coordinates in which the partials are diagonal.
    y: DMatrix<f64>,
}

fn swain_eigen(prob: &FaProblem, f: &SwainF, d: &SymMatrix) -> Result<SwainEigen> {
    if d.order() != prob.order() {
        return Err(Error::ShapeMismatch(format!(
            "D has order {}, problem order {}",
            d.order(),
            prob.order()
        )));
    }
    let si = inverse_sqrt_pd(&prob.c)?;
    let a = SymMatrix::symmetrized(si.mat() * d.mat() * si.mat());
    let (lambda, x) = sym_evd(&a);
    if f.requires_positive() {
        for nu in prob.n_factors..lambda.len() {
            if lambda[nu] <= 0.0 {
                return Err(Error::DomainError(format!(
                    "eigenvalue {nu} of S^(-1/2) D S^(-1/2) is {:.3e}; the chosen f needs the positive axis",
                    lambda[nu]
                )));
            }
        }
    }
    Ok(SwainEigen {
        lambda,
        y: si.mat() * x,
    })
}

/// sigma(D) = sum_{nu > p} f(lambda_nu(S^(-1/2) D S^(-1/2))).
pub fn swain_value(prob: &FaProblem, f: &SwainF, d: &SymMatrix) -> Result<f64> {
    let e = swain_eigen(prob, f, d)?;
    Ok(e.lambda
        .iter()
        .skip(prob.n_factors)
        .map(|l| f.f(*l))
        .sum())
}

/// D_i sigma = sum_{nu > p} f'(lambda_nu) y_{i nu}^2, the partials with
/// respect to the diagonal entries of D. Equal eigenvalues are fine here:
/// f'(lambda) is constant on a degenerate cluster, so the sum does not
/// depend on the basis chosen inside it (the stationary point D = S is the
/// maximally degenerate case).
pub fn swain_gradient(prob: &FaProblem, f: &SwainF, d: &SymMatrix) -> Result<DVector<f64>> {
    let e = swain_eigen(prob, f, d)?;
    let n = prob.order();
    let mut g = DVector::zeros(n);
    for nu in prob.n_factors..n {
        let fp = f.df(e.lambda[nu]);
        for i in 0..n {
            g[i] += fp * e.y[(i, nu)] * e.y[(i, nu)];
        }
    }
    Ok(g)
}

/// D_ij sigma = sum_{nu>p} f''(lambda_nu) y_{i nu}^2 y_{j nu}^2
///   - 2 sum_{nu>p} sum_{eta != nu} f'(lambda_nu)
///     y_{i nu} y_{i eta} y_{j nu} y_{j eta} / (lambda_eta - lambda_nu).
pub fn swain_hessian(prob: &FaProblem, f: &SwainF, d: &SymMatrix) -> Result<SymMatrix> {
    let e = swain_eigen(prob, f, d)?;
    require_simple(&e.lambda)?;
    let n = prob.order();
    let mut h = DMatrix::zeros(n, n);
    for nu in prob.n_factors..n {
        let fp = f.df(e.lambda[nu]);
        let fpp = f.ddf(e.lambda[nu]);
        for i in 0..n {
            for j in 0..n {
                let mut v = fpp * e.y[(i, nu)] * e.y[(i, nu)] * e.y[(j, nu)] * e.y[(j, nu)];
                for eta in 0..n {
                    if eta == nu {
                        continue;
                    }
                    v -= 2.0 * fp * e.y[(i, nu)] * e.y[(i, eta)] * e.y[(j, nu)] * e.y[(j, eta)]
                        / (e.lambda[eta] - e.lambda[nu]);
                }
                h[(i, j)] += v;
            }
        }
    }
    Ok(SymMatrix::symmetrized(h))
}

// ---------------------------------------------------------------------------
// MDFA trace norm
// ---------------------------------------------------------------------------

struct MdfaEigen {
    lambda: DVector<f64>,
    x: DMatrix<f64>,
    rank_tol: f64,
}

fn mdfa_eigen(fam: &MdfaFamily, theta: &DVector<f64>) -> Result<MdfaEigen> {
    if theta.len() != fam.p() {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, family has {} parameters",
            theta.len(),
            fam.p()
        )));
    }
    let a = fam.a(theta);
    let (lambda, x) = sym_evd(&a);
    let rank_tol = 1e-10 * (1.0 + lambda[0].abs());
    let found = lambda.iter().filter(|v| **v > rank_tol).count();
    let m = fam.rank();
    if found < m {
        return Err(Error::RankDrop {
            found,
            expected: m,
        });
    }
    Ok(MdfaEigen {
        lambda,
        x,
        rank_tol,
    })
}

fn require_simple_nonzero(e: &MdfaEigen, m: usize) -> Result<()> {
    let tol = gap_tol_of(&e.lambda);
    for nu in 0..m {
        for eta in 0..e.lambda.len() {
            if eta == nu {
                continue;
            }
            let gap = (e.lambda[nu] - e.lambda[eta]).abs();
            if gap <= tol {
                return Err(Error::DegenerateEigenvalue {
                    nu,
                    eta,
                    gap,
                    tol,
                });
            }
        }
    }
    Ok(())
}

/// sigma(theta) = sum_{nu = 1}^m lambda_nu(T'CT)^(1/2), the trace (nuclear)
/// norm of C^(1/2) T.
pub fn mdfa_trace_norm(fam: &MdfaFamily, theta: &DVector<f64>) -> Result<f64> {
    let e = mdfa_eigen(fam, theta)?;
    Ok((0..fam.rank()).map(|nu| e.lambda[nu].sqrt()).sum())
}

/// D_s sigma = tr (T'CT)^(-1/2) T'C T_s, using the Moore-Penrose inverse
/// square root when T has fewer rows than columns.
pub fn mdfa_gradient(fam: &MdfaFamily, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let e = mdfa_eigen(fam, theta)?;
    require_simple_nonzero(&e, fam.rank())?;
    let a = fam.a(theta);
    let ais = mp_inverse_sqrt(&a, e.rank_tol);
    let t = fam.t_at(theta);
    // tr A^(-1/2) T'C T_s with T_s = e_r e_c' collapses to one entry of
    // A^(-1/2) T' C.
    let m = ais.mat() * t.transpose() * fam.c_mat().mat();
    let mut g = DVector::zeros(fam.p());
    for (s, &(r, c)) in fam.free_cells().iter().enumerate() {
        g[s] = m[(c, r)];
    }
    Ok(g)
}

/// The full matrix D sigma = C T (T'CT)^(-1/2); entries on fixed cells are
/// the partials the pattern forbids.
pub fn mdfa_gradient_matrix(fam: &MdfaFamily, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let e = mdfa_eigen(fam, theta)?;
    require_simple_nonzero(&e, fam.rank())?;
    let a = fam.a(theta);
    let ais = mp_inverse_sqrt(&a, e.rank_tol);
    let t = fam.t_at(theta);
    Ok(fam.c_mat().mat() * t * ais.mat())
}

/// Hessian of the trace norm over the free cells:
///   D_st sigma = -1/4 sum lambda^(-3/2) D_s lambda D_t lambda
///              + 1/2 sum lambda^(-1/2) D_st lambda,
/// with D_st lambda from the ordinary-eigenvalue summation form.
pub fn mdfa_hessian(fam: &MdfaFamily, theta: &DVector<f64>) -> Result<SymMatrix> {
    let e = mdfa_eigen(fam, theta)?;
    let m = fam.rank();
    require_simple_nonzero(&e, m)?;
    let (q, p) = (fam.n(), fam.p());
    // qmat[s] = X'(D_s A)X over the full eigenbasis.
    let qmat: Vec<DMatrix<f64>> = (0..p)
        .map(|s| e.x.transpose() * fam.da(theta, s).mat() * &e.x)
        .collect();
    let mut h = DMatrix::zeros(p, p);
    for s in 0..p {
        for t in s..p {
            let dda = fam.dda(theta, s, t);
            let ddax = e.x.transpose() * dda.mat() * &e.x;
            let mut v = 0.0;
            for nu in 0..m {
                let lam = e.lambda[nu];
                let dsl = qmat[s][(nu, nu)];
                let dtl = qmat[t][(nu, nu)];
                let mut ddl = ddax[(nu, nu)];
                for eta in 0..q {
                    if eta == nu {
                        continue;
                    }
                    ddl -= 2.0 * qmat[s][(nu, eta)] * qmat[t][(nu, eta)]
                        / (e.lambda[eta] - lam);
                }
                v += -0.25 * lam.powf(-1.5) * dsl * dtl + 0.5 * ddl / lam.sqrt();
            }
            h[(s, t)] = v;
            h[(t, s)] = v;
        }
    }
    Ok(SymMatrix::symmetrized(h))
}
