//! Dense symmetric solvers and the three generalized-inverse constructions
//! that every derivative formula consumes.
//!
//! The generalized eigenvalue problem `A X = B X Lambda`, `X' B X = I` is
//! reduced to an ordinary symmetric eigenproblem through the Cholesky factor
//! of `B`: with `B = L L'`, the eigenvalues of `L^-1 A L^-T` are the
//! generalized eigenvalues, and `X = L^-T Q` for the orthonormal `Q`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry above which construction of a [`SymMatrix`] fails.
const ASYMMETRY_TOL: f64 = 1e-12;

/// A real symmetric matrix. Symmetrized exactly at construction:
/// `entries[i][j] == entries[j][i]` bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Checked constructor. Fails on non-square, non-finite, or relative
    /// asymmetry beyond 1e-12; otherwise stores `(M + M') / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let mut asym = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > ASYMMETRY_TOL * scale {
            return Err(Error::Asymmetric {
                asymmetry: asym / scale,
            });
        }
        Ok(Self::symmetrized(m))
    }

    /// Unconditional symmetrization `(M + M') / 2`, for matrices whose
    /// symmetry is structural (family evaluators, formula outputs).
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        assert!(m.is_square());
        let s = (&m + m.transpose()) * 0.5;
        SymMatrix { m: s }
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        SymMatrix {
            m: DMatrix::from_diagonal(d),
        }
    }

    pub fn order(&self) -> usize {
        self.m.nrows()
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_mat(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Which generalized inverse of `A - lambda_nu B` backs the eigenvector
/// derivative formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GinverseKind {
    /// `X (Lambda - lambda_nu I)^+ X'`: needs the full decomposition.
    ReflexiveSpectral,
    /// Bordered inverse `(A - lambda_nu B + xx')^-1 - xx'`: the true
    /// Moore-Penrose inverse, needs only the pair `(lambda_nu, x_nu)`.
    MoorePenroseBordered,
    /// Nelson's method: invert the order-(n-1) principal submatrix left
    /// after dropping the row/column of the largest eigenvector entry.
    NelsonSubmatrix,
}

/// Solution of `A X = B X Lambda`, `X' B X = I`, eigenvalues descending,
/// each column signed so its largest-magnitude entry is positive.
#[derive(Clone, Debug)]
pub struct GevdSolution {
    pub lambda: DVector<f64>,
    pub x: DMatrix<f64>,
    pub b_used: SymMatrix,
}

impl GevdSolution {
    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    /// Degeneracy tolerance: `1e-8 * (1 + max |lambda|)`.
    pub fn gap_tol(&self) -> f64 {
        1e-8 * (1.0 + self.lambda.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }

    /// Smallest gap from `lambda_nu` to any other eigenvalue, with the
    /// index attaining it.
    pub fn min_gap(&self, nu: usize) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for eta in 0..self.order() {
            if eta == nu {
                continue;
            }
            let g = (self.lambda[eta] - self.lambda[nu]).abs();
            if g < best.1 {
                best = (eta, g);
            }
        }
        best
    }

    /// Errors unless `lambda_nu` is simple with respect to `tol`.
    pub fn require_simple(&self, nu: usize, tol: f64) -> Result<()> {
        let (eta, gap) = self.min_gap(nu);
        if gap <= tol {
            Err(Error::DegenerateEigenvalue { nu, eta, gap, tol })
        } else {
            Ok(())
        }
    }
}

/// Cholesky factorization `B = L L'` certifying positive definiteness.
/// Pivot threshold: `1e-12 * trace(B) / n`.
fn cholesky_pd(b: &SymMatrix) -> Result<DMatrix<f64>> {
    let n = b.order();
    let thresh = 1e-12 * b.mat().trace() / n as f64;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = b.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > thresh) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let lj = d.sqrt();
        l[(j, j)] = lj;
        for i in (j + 1)..n {
            let mut v = b.get(i, j);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / lj;
        }
    }
    Ok(l)
}

/// Sign convention: make the largest-magnitude entry of each column
/// positive, ties broken by the lowest row index.
pub fn fix_column_signs(x: &mut DMatrix<f64>) {
    for j in 0..x.ncols() {
        let mut imax = 0;
        let mut vmax = 0.0f64;
        for i in 0..x.nrows() {
            let a = x[(i, j)].abs();
            if a > vmax {
                vmax = a;
                imax = i;
            }
        }
        if x[(imax, j)] < 0.0 {
            for i in 0..x.nrows() {
                x[(i, j)] = -x[(i, j)];
            }
        }
    }
}

/// Ordinary symmetric eigendecomposition, eigenvalues descending, columns
/// sign-fixed. The `B = I` workhorse behind the generalized solve.
pub fn sym_evd(a: &SymMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let se = a.mat().clone().symmetric_eigen();
    let n = a.order();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let lambda = DVector::from_fn(n, |k, _| se.eigenvalues[idx[k]]);
    let mut x = DMatrix::from_fn(n, n, |i, k| se.eigenvectors[(i, idx[k])]);
    fix_column_signs(&mut x);
    (lambda, x)
}

/// Solve the generalized eigenproblem for a symmetric pair with positive
/// definite `B`, via `L = chol(B)` and a symmetric eigendecomposition of
/// `L^-1 A L^-T`.
pub fn gevd_solve(a: &SymMatrix, b: &SymMatrix) -> Result<GevdSolution> {
    let n = a.order();
    if b.order() != n {
        return Err(Error::ShapeMismatch(format!(
            "A is order {n}, B is order {}",
            b.order()
        )));
    }
    let l = cholesky_pd(b)?;
    // M = L^-1 A L^-T, symmetrized to absorb roundoff.
    let t1 = l
        .solve_lower_triangular(a.mat())
        .ok_or(Error::NotPositiveDefinite { index: 0, pivot: 0.0 })?;
    let m = l
        .solve_lower_triangular(&t1.transpose())
        .ok_or(Error::NotPositiveDefinite { index: 0, pivot: 0.0 })?;
    let msym = SymMatrix::symmetrized(m);
    let (lambda, q) = sym_evd(&msym);
    // X = L^-T Q.
    let lt = l.transpose();
    let mut x = lt
        .solve_upper_triangular(&q)
        .ok_or(Error::NotPositiveDefinite { index: 0, pivot: 0.0 })?;
    fix_column_signs(&mut x);
    Ok(GevdSolution {
        lambda,
        x,
        b_used: b.clone(),
    })
}

/// The reflexive g-inverse `X (Lambda - lambda_nu I)^+ X'` of
/// `A - lambda_nu B`, with the Moore-Penrose of the diagonal taken
/// entrywise: reciprocal where the gap exceeds `gap_tol`, zero otherwise.
pub fn reflexive_ginverse(sol: &GevdSolution, nu: usize, gap_tol: f64) -> Result<SymMatrix> {
    sol.require_simple(nu, gap_tol)?;
    let n = sol.order();
    let mut g = DMatrix::zeros(n, n);
    for eta in 0..n {
        let gap = sol.lambda[eta] - sol.lambda[nu];
        if gap.abs() <= gap_tol {
            continue;
        }
        let xe = sol.x.column(eta);
        let w = 1.0 / gap;
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += w * xe[i] * xe[j];
            }
        }
    }
    Ok(SymMatrix::symmetrized(g))
}

/// Moore-Penrose inverse of `A - lambda_nu B` through the bordered matrix
/// `(A - lambda_nu B + xx')^-1 - xx'` with `x` normalized to length one.
pub fn mp_ginverse(
    a: &SymMatrix,
    b: &SymMatrix,
    lambda_nu: f64,
    x_nu: &DVector<f64>,
) -> Result<SymMatrix> {
    let n = a.order();
    let norm = x_nu.norm();
    if norm == 0.0 {
        return Err(Error::Invalid("eigenvector has zero norm".into()));
    }
    let xt = x_nu / norm;
    let mut m = a.mat() - b.mat() * lambda_nu;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += xt[i] * xt[j];
        }
    }
    let inv = m.clone().try_inverse().ok_or(Error::SingularBordered)?;
    // A nearly-singular bordered matrix signals a non-simple eigenvalue.
    let resid = (&m * &inv - DMatrix::<f64>::identity(n, n))
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if resid > 1e-6 {
        return Err(Error::SingularBordered);
    }
    let mut g = inv;
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] -= xt[i] * xt[j];
        }
    }
    Ok(SymMatrix::symmetrized(g))
}

/// Nelson's g-inverse: drop the row/column of the largest `|x_{i nu}|`,
/// invert the order-(n-1) principal submatrix of `A - lambda_nu B`, and
/// re-embed with zeros in the dropped row/column.
pub fn nelson_ginverse(
    a: &SymMatrix,
    b: &SymMatrix,
    lambda_nu: f64,
    x_nu: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.order();
    let mut istar = 0;
    let mut vmax = 0.0f64;
    for i in 0..n {
        let v = x_nu[i].abs();
        if v > vmax {
            vmax = v;
            istar = i;
        }
    }
    let m = a.mat() - b.mat() * lambda_nu;
    let keep: Vec<usize> = (0..n).filter(|&i| i != istar).collect();
    let sub = DMatrix::from_fn(n - 1, n - 1, |i, j| m[(keep[i], keep[j])]);
    let subinv = sub
        .clone()
        .try_inverse()
        .ok_or(Error::SingularSubmatrix { dropped: istar })?;
    let resid = (&sub * &subinv - DMatrix::<f64>::identity(n - 1, n - 1))
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if resid > 1e-6 {
        return Err(Error::SingularSubmatrix { dropped: istar });
    }
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            g[(keep[i], keep[j])] = subinv[(i, j)];
        }
    }
    Ok(g)
}

/// Spectral symmetric square root of the Moore-Penrose inverse: reciprocal
/// square root on eigenvalues above `rank_tol`, zero below.
pub fn mp_inverse_sqrt(a: &SymMatrix, rank_tol: f64) -> SymMatrix {
    let (lambda, x) = sym_evd(a);
    let n = a.order();
    let mut g = DMatrix::zeros(n, n);
    for k in 0..n {
        if lambda[k] > rank_tol {
            let w = 1.0 / lambda[k].sqrt();
            let xk = x.column(k);
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += w * xk[i] * xk[j];
                }
            }
        }
    }
    SymMatrix::symmetrized(g)
}

/// Spectral symmetric inverse square root of a positive definite matrix.
pub fn inverse_sqrt_pd(s: &SymMatrix) -> Result<SymMatrix> {
    let (lambda, x) = sym_evd(s);
    let n = s.order();
    let thresh = 1e-12 * (1.0 + lambda[0].abs());
    let mut g = DMatrix::zeros(n, n);
    for k in 0..n {
        if lambda[k] <= thresh {
            return Err(Error::NotPositiveDefinite {
                index: k,
                pivot: lambda[k],
            });
        }
        let w = 1.0 / lambda[k].sqrt();
        let xk = x.column(k);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += w * xk[i] * xk[j];
            }
        }
    }
    Ok(SymMatrix::symmetrized(g))
}

/// Max-norm residuals of the four Penrose conditions of `g` as an inverse
/// of `m`: (MGM - M, GMG - G, (MG)' - MG, (GM)' - GM).
pub fn penrose_residuals(m: &DMatrix<f64>, g: &DMatrix<f64>) -> [f64; 4] {
    let mg = m * g;
    let gm = g * m;
    let r1 = (&mg * m - m).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let r2 = (&gm * g - g).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let r3 = (&mg - mg.transpose())
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let r4 = (&gm - gm.transpose())
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    [r1, r2, r3, r4]
}
