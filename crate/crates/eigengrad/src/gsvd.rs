//! Generalized singular value decomposition of a triple (F, G, H) and its
//! first derivatives, computed through the augmented GEVD embedding
//!
//! ```text
//! A = [0  F ]      B = [G  0]
//!     [F' 0 ]          [0  H]
//! ```
//!
//! whose spectrum is {+lambda, -lambda, 0^(n-m)}. The positive branch gives
//! the GSVD after a sqrt(2) rescale of the eigenvector halves: the augmented
//! normalization has u'Gu = v'Hv = 1/2 while X'GX = Y'HY = I.

use nalgebra::{DMatrix, DVector};

use crate::deriv::{gevd_jacobian, DerivOptions};
use crate::error::{Error, Result};
use crate::family::MatrixFamily;
use crate::linalg::{gevd_solve, GevdSolution, SymMatrix};
use crate::tensor::Tensor3;

/// Parametric triple F(theta) (n x m), G(theta) (order n), H(theta)
/// (order m); G and H positive definite on the domain of interest.
pub trait GsvdFamily {
    fn p(&self) -> usize;
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn f(&self, theta: &DVector<f64>) -> DMatrix<f64>;
    fn g(&self, theta: &DVector<f64>) -> SymMatrix;
    fn h(&self, theta: &DVector<f64>) -> SymMatrix;
    fn df(&self, theta: &DVector<f64>, s: usize) -> DMatrix<f64>;
    fn dg(&self, theta: &DVector<f64>, s: usize) -> SymMatrix;
    fn dh(&self, theta: &DVector<f64>, s: usize) -> SymMatrix;
    fn ddf(&self, theta: &DVector<f64>, s: usize, t: usize) -> DMatrix<f64>;
    fn ddg(&self, theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix;
    fn ddh(&self, theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix;
}

/// Affine triple: F = F0 + sum theta_s F_s and likewise for G, H. Second
/// partials vanish.
pub struct LinearGsvdFamily {
    f0: DMatrix<f64>,
    fs: Vec<DMatrix<f64>>,
    g0: SymMatrix,
    gs: Vec<SymMatrix>,
    h0: SymMatrix,
    hs: Vec<SymMatrix>,
}

impl LinearGsvdFamily {
    pub fn new(
        f0: DMatrix<f64>,
        fs: Vec<DMatrix<f64>>,
        g0: SymMatrix,
        gs: Vec<SymMatrix>,
        h0: SymMatrix,
        hs: Vec<SymMatrix>,
    ) -> Result<Self> {
        let (n, m) = f0.shape();
        if m > n {
            return Err(Error::DimensionMismatch(format!(
                "F must have at least as many rows as columns, got {n} x {m}"
            )));
        }
        if g0.order() != n || h0.order() != m {
            return Err(Error::DimensionMismatch(
                "G must have order nrows(F), H order ncols(F)".into(),
            ));
        }
        let p = fs.len();
        if gs.len() != p || hs.len() != p {
            return Err(Error::DimensionMismatch(
                "F, G, H slope lists must have equal length".into(),
            ));
        }
        for f in &fs {
            if f.shape() != (n, m) {
                return Err(Error::DimensionMismatch("F slope shape mismatch".into()));
            }
        }
        for g in &gs {
            if g.order() != n {
                return Err(Error::DimensionMismatch("G slope order mismatch".into()));
            }
        }
        for h in &hs {
            if h.order() != m {
                return Err(Error::DimensionMismatch("H slope order mismatch".into()));
            }
        }
        Ok(LinearGsvdFamily {
            f0,
            fs,
            g0,
            gs,
            h0,
            hs,
        })
    }
}

impl GsvdFamily for LinearGsvdFamily {
    fn p(&self) -> usize {
        self.fs.len()
    }

    fn nrows(&self) -> usize {
        self.f0.nrows()
    }

    fn ncols(&self) -> usize {
        self.f0.ncols()
    }

    fn f(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.f0.clone();
        for (s, fs) in self.fs.iter().enumerate() {
            f += fs * theta[s];
        }
        f
    }

    fn g(&self, theta: &DVector<f64>) -> SymMatrix {
        let mut g = self.g0.mat().clone();
        for (s, gs) in self.gs.iter().enumerate() {
            g += gs.mat() * theta[s];
        }
        SymMatrix::symmetrized(g)
    }

    fn h(&self, theta: &DVector<f64>) -> SymMatrix {
        let mut h = self.h0.mat().clone();
        for (s, hs) in self.hs.iter().enumerate() {
            h += hs.mat() * theta[s];
        }
        SymMatrix::symmetrized(h)
    }

    fn df(&self, _theta: &DVector<f64>, s: usize) -> DMatrix<f64> {
        self.fs[s].clone()
    }

    fn dg(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        self.gs[s].clone()
    }

    fn dh(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        self.hs[s].clone()
    }

    fn ddf(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.nrows(), self.ncols())
    }

    fn ddg(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.nrows())
    }

    fn ddh(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.ncols())
    }
}

fn embed_a(f: &DMatrix<f64>) -> SymMatrix {
    let (n, m) = f.shape();
    let mut a = DMatrix::zeros(n + m, n + m);
    a.view_mut((0, n), (n, m)).copy_from(f);
    a.view_mut((n, 0), (m, n)).copy_from(&f.transpose());
    SymMatrix::symmetrized(a)
}

fn embed_b(g: &SymMatrix, h: &SymMatrix) -> SymMatrix {
    let (n, m) = (g.order(), h.order());
    let mut b = DMatrix::zeros(n + m, n + m);
    b.view_mut((0, 0), (n, n)).copy_from(g.mat());
    b.view_mut((n, n), (m, m)).copy_from(h.mat());
    SymMatrix::symmetrized(b)
}

/// The augmented pair as an ordinary `MatrixFamily`, for cross-path checks
/// and for second derivatives of the singular values.
pub struct GsvdEmbedding<'a> {
    fam: &'a dyn GsvdFamily,
}

impl<'a> GsvdEmbedding<'a> {
    pub fn new(fam: &'a dyn GsvdFamily) -> Self {
        GsvdEmbedding { fam }
    }
}

impl MatrixFamily for GsvdEmbedding<'_> {
    fn p(&self) -> usize {
        self.fam.p()
    }

    fn n(&self) -> usize {
        self.fam.nrows() + self.fam.ncols()
    }

    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        embed_a(&self.fam.f(theta))
    }

    fn b(&self, theta: &DVector<f64>) -> SymMatrix {
        embed_b(&self.fam.g(theta), &self.fam.h(theta))
    }

    fn da(&self, theta: &DVector<f64>, s: usize) -> SymMatrix {
        embed_a(&self.fam.df(theta, s))
    }

    fn db(&self, theta: &DVector<f64>, s: usize) -> SymMatrix {
        embed_b(&self.fam.dg(theta, s), &self.fam.dh(theta, s))
    }

    fn dda(&self, theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix {
        embed_a(&self.fam.ddf(theta, s, t))
    }

    fn ddb(&self, theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix {
        embed_b(&self.fam.ddg(theta, s, t), &self.fam.ddh(theta, s, t))
    }
}

/// Conversion between the augmented eigenvector normalization
/// (u'Gu = v'Hv = 1/2) and the GSVD one (x'Gx = y'Hy = 1). Centralized
/// because the constant is the easiest thing in this module to get wrong.
pub fn augmented_to_gsvd(half: &DVector<f64>) -> DVector<f64> {
    half * 2.0f64.sqrt()
}

/// One GSVD: F Y = G X Lambda, F' X = H Y Lambda, X'GX = Y'HY = I,
/// singular values nonnegative and descending.
#[derive(Clone, Debug)]
pub struct GsvdSolution {
    pub f: DMatrix<f64>,
    pub g: SymMatrix,
    pub h: SymMatrix,
    pub lambda: DVector<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Basis of the G-orthogonal complement of the column span of X;
    /// F' Xperp = 0, Xperp' G X = 0, Xperp' G Xperp = I.
    pub xperp: DMatrix<f64>,
    /// Full augmented solution, kept for the derivative summations.
    aug: GevdSolution,
}

impl GsvdSolution {
    pub fn nrows(&self) -> usize {
        self.f.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.f.ncols()
    }

    pub fn rank_tol(&self) -> f64 {
        1e-10 * (1.0 + self.lambda.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Numerical rank of F: singular values above rank_tol.
    pub fn rank(&self) -> usize {
        let tol = self.rank_tol();
        self.lambda.iter().filter(|v| **v > tol).count()
    }

    pub fn gap_tol(&self) -> f64 {
        self.aug.gap_tol()
    }

    pub fn augmented(&self) -> &GevdSolution {
        &self.aug
    }
}

/// Solves the GSVD through the augmented GEVD. Zero singular values are
/// returned as such; only the derivative routines insist on full rank.
pub fn gsvd_solve(f: &DMatrix<f64>, g: &SymMatrix, h: &SymMatrix) -> Result<GsvdSolution> {
    let (n, m) = f.shape();
    if m > n {
        return Err(Error::DimensionMismatch(format!(
            "F must have at least as many rows as columns, got {n} x {m}"
        )));
    }
    if g.order() != n || h.order() != m {
        return Err(Error::DimensionMismatch(
            "G must have order nrows(F), H order ncols(F)".into(),
        ));
    }
    let aug = gevd_solve(&embed_a(f), &embed_b(g, h))?;
    // Descending augmented spectrum: positive branch first, then the n - m
    // zeros, then the mirror branch.
    let lambda = DVector::from_fn(m, |nu, _| aug.lambda[nu]);
    let mut x = DMatrix::zeros(n, m);
    let mut y = DMatrix::zeros(m, m);
    for nu in 0..m {
        let col = aug.x.column(nu);
        x.set_column(nu, &augmented_to_gsvd(&col.rows(0, n).into()));
        y.set_column(nu, &augmented_to_gsvd(&col.rows(n, m).into()));
    }
    // Zero-block eigenvectors have a vanishing bottom half when F has full
    // column rank, and carry the plain augmented normalization x'Gx = 1.
    let mut xperp = DMatrix::zeros(n, n - m);
    for k in 0..(n - m) {
        xperp.set_column(k, &aug.x.column(m + k).rows(0, n).into_owned());
    }
    Ok(GsvdSolution {
        f: f.clone(),
        g: g.clone(),
        h: h.clone(),
        lambda,
        x,
        y,
        xperp,
        aug,
    })
}

/// First derivatives of the singular values and vectors.
#[derive(Clone, Debug)]
pub struct GsvdDerivBundle {
    pub solution: GsvdSolution,
    /// m x p, entry (nu, s).
    pub dlambda: DMatrix<f64>,
    /// (i, s, nu), n x p x m.
    pub dx: Tensor3,
    /// (i, s, nu), m x p x m.
    pub dy: Tensor3,
}

fn require_derivable(sol: &GsvdSolution, gap_tol: f64) -> Result<()> {
    let m = sol.ncols();
    let rank = sol.rank();
    if rank < m {
        return Err(Error::RankDeficient {
            found: rank,
            expected: m,
        });
    }
    for nu in 0..m {
        if sol.lambda[nu] <= gap_tol {
            return Err(Error::ZeroSingularValue {
                nu,
                value: sol.lambda[nu],
            });
        }
        let (_, gap) = sol.aug.min_gap(nu);
        if gap <= gap_tol {
            return Err(Error::DegenerateSingularValue {
                nu,
                gap,
                tol: gap_tol,
            });
        }
    }
    Ok(())
}

/// Specialized first-derivative formulas through the helper products
/// T_s = U'(D_sF)V, U_s = U'(D_sG)U, V_s = V'(D_sH)V, where U and V are the
/// halves of the full augmented eigenvector matrix (all n + m pairs, in the
/// augmented normalization):
///
///   D_s lambda_nu = 2 t^s_{nu nu} - lambda_nu (u^s_{nu nu} + v^s_{nu nu}),
///
/// and the eigenvector derivative sums over every other augmented pair,
/// including the mirror branch and the zero block, plus the
/// -1/2 (u + v) self-term. Results are rescaled by sqrt(2) at the end.
pub fn gsvd_jacobian(
    fam: &dyn GsvdFamily,
    theta: &DVector<f64>,
    gap_tol: Option<f64>,
) -> Result<GsvdDerivBundle> {
    if theta.len() != fam.p() {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, family has {} parameters",
            theta.len(),
            fam.p()
        )));
    }
    let (n, m, p) = (fam.nrows(), fam.ncols(), fam.p());
    let sol = gsvd_solve(&fam.f(theta), &fam.g(theta), &fam.h(theta))?;
    let gap_tol = gap_tol.unwrap_or_else(|| sol.gap_tol());
    require_derivable(&sol, gap_tol)?;

    let nm = n + m;
    let u = sol.aug.x.view((0, 0), (n, nm));
    let v = sol.aug.x.view((n, 0), (m, nm));

    let mut dlambda = DMatrix::zeros(m, p);
    let mut dx = Tensor3::zeros(n, p, m);
    let mut dy = Tensor3::zeros(m, p, m);
    for s in 0..p {
        let df = fam.df(theta, s);
        let dg = fam.dg(theta, s);
        let dh = fam.dh(theta, s);
        let ts = u.transpose() * &df * v;
        let us = u.transpose() * dg.mat() * u;
        let vs = v.transpose() * dh.mat() * v;
        for nu in 0..m {
            let lam = sol.aug.lambda[nu];
            dlambda[(nu, s)] = 2.0 * ts[(nu, nu)] - lam * (us[(nu, nu)] + vs[(nu, nu)]);
            let mut daug = DVector::zeros(nm);
            for eta in 0..nm {
                if eta == nu {
                    continue;
                }
                let num = ts[(eta, nu)] + ts[(nu, eta)] - lam * (us[(eta, nu)] + vs[(eta, nu)]);
                daug += sol.aug.x.column(eta) * (num / (lam - sol.aug.lambda[eta]));
            }
            daug -= sol.aug.x.column(nu) * (0.5 * (us[(nu, nu)] + vs[(nu, nu)]));
            let top = augmented_to_gsvd(&daug.rows(0, n).into());
            let bot = augmented_to_gsvd(&daug.rows(n, m).into());
            for i in 0..n {
                dx.set(i, s, nu, top[i]);
            }
            for i in 0..m {
                dy.set(i, s, nu, bot[i]);
            }
        }
    }
    Ok(GsvdDerivBundle {
        solution: sol,
        dlambda,
        dx,
        dy,
    })
}

/// Second partials of the singular values, as the positive-branch slices of
/// the eigenvalue Hessian of the embedded family, laid out (s, t, nu) over
/// nu = 0..m. The embedding carries n - m zero eigenvalues, so this path
/// requires n - m <= 1 (otherwise the zero block is degenerate and the
/// generic engine refuses).
pub fn gsvd_hessian_values(
    fam: &dyn GsvdFamily,
    theta: &DVector<f64>,
    gap_tol: Option<f64>,
) -> Result<Tensor3> {
    let emb = GsvdEmbedding::new(fam);
    let opts = DerivOptions {
        hessian_values: true,
        gap_tol,
        ..DerivOptions::default()
    };
    let bundle = gevd_jacobian(&emb, theta, &opts)?;
    let ddl = bundle.ddl.expect("hessian_values requested");
    let (m, p) = (fam.ncols(), fam.p());
    let mut out = Tensor3::zeros(p, p, m);
    for s in 0..p {
        for t in 0..p {
            for nu in 0..m {
                out.set(s, t, nu, ddl.get(s, t, nu));
            }
        }
    }
    Ok(out)
}
