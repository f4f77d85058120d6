//! Parametric matrix families: `A(theta)`, `B(theta)` together with their
//! first and second partials, plus concrete builders for the standard
//! templates (power series, linear combinations, element basis,
//! correspondence analysis, multiple correspondence analysis, and matrix
//! decomposition factor analysis).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Evaluator bundle for a symmetric matrix pair depending on a parameter
/// vector. All evaluators are pure and deterministic; second partials are
/// symmetric in `(s, t)` by construction.
pub trait MatrixFamily {
    /// Number of parameters.
    fn p(&self) -> usize;
    /// Matrix order.
    fn n(&self) -> usize;
    fn a(&self, theta: &DVector<f64>) -> SymMatrix;
    fn b(&self, theta: &DVector<f64>) -> SymMatrix;
    fn da(&self, theta: &DVector<f64>, s: usize) -> SymMatrix;
    fn db(&self, theta: &DVector<f64>, s: usize) -> SymMatrix;
    fn dda(&self, theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix;
    fn ddb(&self, theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix;

    /// True when the family declares `B` identically equal to the identity
    /// (so `dB` and `ddB` vanish). Enables the EVD fast path.
    fn b_is_identity(&self) -> bool {
        false
    }
}

pub(crate) fn check_theta(fam: &dyn MatrixFamily, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != fam.p() {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, family has {} parameters",
            theta.len(),
            fam.p()
        )));
    }
    Ok(())
}

/// Symmetric element basis: `E_ij = e_i e_j' + e_j e_i'` for `i != j`,
/// `E_ii = e_i e_i'`.
pub fn unit_sym(n: usize, i: usize, j: usize) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m[(j, i)] = 1.0;
    SymMatrix::symmetrized(m)
}

fn check_same_order(mats: &[&SymMatrix], n: usize) -> Result<()> {
    for m in mats {
        if m.order() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected order {n}, got {}",
                m.order()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Power series
// ---------------------------------------------------------------------------

/// Single-parameter family
/// `A(theta) = A_0 + theta A_1 + (1/2) theta^2 A_2 + ... + (1/P) theta^P A_P`
/// and likewise for `B`. Note the `1/s` coefficients on the `theta^s` terms
/// (not `1/s!`): the derivative of the `s`-th term is simply
/// `theta^(s-1) A_s`.
pub struct PowerSeriesFamily {
    coeffs_a: Vec<SymMatrix>,
    coeffs_b: Vec<SymMatrix>,
    n: usize,
}

impl PowerSeriesFamily {
    pub fn new(coeffs_a: Vec<SymMatrix>, coeffs_b: Vec<SymMatrix>) -> Result<Self> {
        if coeffs_a.is_empty() || coeffs_b.is_empty() {
            return Err(Error::DimensionMismatch(
                "power series needs at least the intercept matrices".into(),
            ));
        }
        if coeffs_a.len() != coeffs_b.len() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient lists have lengths {} and {}",
                coeffs_a.len(),
                coeffs_b.len()
            )));
        }
        let n = coeffs_a[0].order();
        check_same_order(&coeffs_a.iter().collect::<Vec<_>>(), n)?;
        check_same_order(&coeffs_b.iter().collect::<Vec<_>>(), n)?;
        Ok(PowerSeriesFamily {
            coeffs_a,
            coeffs_b,
            n,
        })
    }

    /// Degree of the series (index of the last coefficient matrix).
    pub fn degree(&self) -> usize {
        self.coeffs_a.len() - 1
    }

    fn eval(coeffs: &[SymMatrix], th: f64, n: usize) -> SymMatrix {
        let mut m = coeffs[0].mat().clone();
        let mut pow = 1.0;
        for (s, c) in coeffs.iter().enumerate().skip(1) {
            pow *= th;
            m += c.mat() * (pow / s as f64);
        }
        check_order_is(n, &m);
        SymMatrix::symmetrized(m)
    }

    fn eval_d(coeffs: &[SymMatrix], th: f64, n: usize) -> SymMatrix {
        let mut m = DMatrix::zeros(n, n);
        let mut pow = 1.0;
        for c in coeffs.iter().skip(1) {
            m += c.mat() * pow;
            pow *= th;
        }
        SymMatrix::symmetrized(m)
    }

    fn eval_dd(coeffs: &[SymMatrix], th: f64, n: usize) -> SymMatrix {
        let mut m = DMatrix::zeros(n, n);
        let mut pow = 1.0;
        for (s, c) in coeffs.iter().enumerate().skip(2) {
            m += c.mat() * ((s - 1) as f64 * pow);
            pow *= th;
        }
        SymMatrix::symmetrized(m)
    }
}

fn check_order_is(n: usize, m: &DMatrix<f64>) {
    debug_assert_eq!(m.nrows(), n);
}

impl MatrixFamily for PowerSeriesFamily {
    fn p(&self) -> usize {
        1
    }
    fn n(&self) -> usize {
        self.n
    }
    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        Self::eval(&self.coeffs_a, theta[0], self.n)
    }
    fn b(&self, theta: &DVector<f64>) -> SymMatrix {
        Self::eval(&self.coeffs_b, theta[0], self.n)
    }
    fn da(&self, theta: &DVector<f64>, _s: usize) -> SymMatrix {
        Self::eval_d(&self.coeffs_a, theta[0], self.n)
    }
    fn db(&self, theta: &DVector<f64>, _s: usize) -> SymMatrix {
        Self::eval_d(&self.coeffs_b, theta[0], self.n)
    }
    fn dda(&self, theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        Self::eval_dd(&self.coeffs_a, theta[0], self.n)
    }
    fn ddb(&self, theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        Self::eval_dd(&self.coeffs_b, theta[0], self.n)
    }
}

/// See [`PowerSeriesFamily`].
pub fn make_power_series(
    coeffs_a: Vec<SymMatrix>,
    coeffs_b: Vec<SymMatrix>,
) -> Result<PowerSeriesFamily> {
    PowerSeriesFamily::new(coeffs_a, coeffs_b)
}

// ---------------------------------------------------------------------------
// Linear combinations
// ---------------------------------------------------------------------------

/// `A(theta) = A_0 + sum_s theta_s A_s`, `B(theta) = B_0 + sum_s theta_s B_s`.
/// Zero slope blocks let `A` and `B` effectively use disjoint parameters.
pub struct LinearFamily {
    a0: SymMatrix,
    b0: SymMatrix,
    a_slopes: Vec<SymMatrix>,
    b_slopes: Vec<SymMatrix>,
    n: usize,
}

impl LinearFamily {
    pub fn new(
        a0: SymMatrix,
        a_slopes: Vec<SymMatrix>,
        b0: SymMatrix,
        b_slopes: Vec<SymMatrix>,
    ) -> Result<Self> {
        let n = a0.order();
        if a_slopes.len() != b_slopes.len() {
            return Err(Error::DimensionMismatch(format!(
                "slope lists have lengths {} and {}",
                a_slopes.len(),
                b_slopes.len()
            )));
        }
        check_same_order(&[&b0], n)?;
        check_same_order(&a_slopes.iter().collect::<Vec<_>>(), n)?;
        check_same_order(&b_slopes.iter().collect::<Vec<_>>(), n)?;
        Ok(LinearFamily {
            a0,
            b0,
            a_slopes,
            b_slopes,
            n,
        })
    }

    fn eval(intercept: &SymMatrix, slopes: &[SymMatrix], theta: &DVector<f64>) -> SymMatrix {
        let mut m = intercept.mat().clone();
        for (s, slope) in slopes.iter().enumerate() {
            m += slope.mat() * theta[s];
        }
        SymMatrix::symmetrized(m)
    }
}

impl MatrixFamily for LinearFamily {
    fn p(&self) -> usize {
        self.a_slopes.len()
    }
    fn n(&self) -> usize {
        self.n
    }
    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        Self::eval(&self.a0, &self.a_slopes, theta)
    }
    fn b(&self, theta: &DVector<f64>) -> SymMatrix {
        Self::eval(&self.b0, &self.b_slopes, theta)
    }
    fn da(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        self.a_slopes[s].clone()
    }
    fn db(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        self.b_slopes[s].clone()
    }
    fn dda(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n)
    }
    fn ddb(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n)
    }
    fn b_is_identity(&self) -> bool {
        self.b0.mat() == &DMatrix::<f64>::identity(self.n, self.n)
            && self.b_slopes.iter().all(|m| m.max_abs() == 0.0)
    }
}

/// See [`LinearFamily`].
pub fn make_linear(
    a0: SymMatrix,
    a_slopes: Vec<SymMatrix>,
    b0: SymMatrix,
    b_slopes: Vec<SymMatrix>,
) -> Result<LinearFamily> {
    LinearFamily::new(a0, a_slopes, b0, b_slopes)
}

// ---------------------------------------------------------------------------
// Element basis
// ---------------------------------------------------------------------------

/// Which matrix an element parameter targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementTarget {
    A,
    B,
}

/// Every upper-triangular cell of both `A` and `B` is a parameter:
/// `p = n (n + 1)`. The first `n(n+1)/2` parameters fill `A` (row-major
/// upper triangle), the rest fill `B`.
pub struct ElementFamily {
    n: usize,
}

impl ElementFamily {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        ElementFamily { n }
    }

    fn half(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// Map a flat parameter index to `(target, i, j)` with `i <= j`.
    pub fn cell_of(&self, s: usize) -> (ElementTarget, usize, usize) {
        let half = self.half();
        let (target, mut k) = if s < half {
            (ElementTarget::A, s)
        } else {
            (ElementTarget::B, s - half)
        };
        let mut i = 0;
        loop {
            let row_len = self.n - i;
            if k < row_len {
                return (target, i, i + k);
            }
            k -= row_len;
            i += 1;
        }
    }

    /// Inverse of [`Self::cell_of`].
    pub fn param_of(&self, target: ElementTarget, i: usize, j: usize) -> usize {
        assert!(i <= j && j < self.n);
        let mut base = 0;
        for r in 0..i {
            base += self.n - r;
        }
        let within = base + (j - i);
        match target {
            ElementTarget::A => within,
            ElementTarget::B => self.half() + within,
        }
    }

    fn assemble(&self, theta: &DVector<f64>, target: ElementTarget) -> SymMatrix {
        let mut m = DMatrix::zeros(self.n, self.n);
        for s in 0..self.p() {
            let (t, i, j) = self.cell_of(s);
            if t == target {
                m[(i, j)] = theta[s];
                m[(j, i)] = theta[s];
            }
        }
        SymMatrix::symmetrized(m)
    }
}

impl MatrixFamily for ElementFamily {
    fn p(&self) -> usize {
        self.n * (self.n + 1)
    }
    fn n(&self) -> usize {
        self.n
    }
    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        self.assemble(theta, ElementTarget::A)
    }
    fn b(&self, theta: &DVector<f64>) -> SymMatrix {
        self.assemble(theta, ElementTarget::B)
    }
    fn da(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        let (t, i, j) = self.cell_of(s);
        match t {
            ElementTarget::A => unit_sym(self.n, i, j),
            ElementTarget::B => SymMatrix::zeros(self.n),
        }
    }
    fn db(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        let (t, i, j) = self.cell_of(s);
        match t {
            ElementTarget::B => unit_sym(self.n, i, j),
            ElementTarget::A => SymMatrix::zeros(self.n),
        }
    }
    fn dda(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n)
    }
    fn ddb(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n)
    }
}

/// See [`ElementFamily`].
pub fn make_elements(n: usize) -> ElementFamily {
    ElementFamily::new(n)
}

// ---------------------------------------------------------------------------
// Correspondence analysis
// ---------------------------------------------------------------------------

/// Correspondence analysis of an `r x c` table of proportions, exposed
/// already embedded in the order-(r + c) augmented symmetric pair
/// `A = [[0, F], [F', 0]]`, `B = diag(G, H)` with `G` the diagonal of row
/// sums and `H` the diagonal of column sums. The parameters are the
/// `r * c` cell proportions (row-major); everything is linear in them.
pub struct CaFamily {
    r: usize,
    c: usize,
    proportions: Vec<f64>,
}

impl CaFamily {
    /// Accepts counts or proportions; anything with a positive grand total
    /// is normalized to proportions. Row and column sums must be positive.
    pub fn new(table: &[Vec<f64>]) -> Result<Self> {
        let r = table.len();
        if r == 0 {
            return Err(Error::ShapeMismatch("empty table".into()));
        }
        let c = table[0].len();
        if c == 0 {
            return Err(Error::ShapeMismatch("table has zero columns".into()));
        }
        let mut total = 0.0;
        for (i, row) in table.iter().enumerate() {
            if row.len() != c {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has length {}, expected {c}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite);
                }
                if v < 0.0 {
                    return Err(Error::NegativeCell { row: i, col: j });
                }
                total += v;
            }
        }
        if total <= 0.0 {
            return Err(Error::Invalid("table has zero grand total".into()));
        }
        let mut proportions = Vec::with_capacity(r * c);
        for row in table {
            for &v in row {
                proportions.push(v / total);
            }
        }
        let fam = CaFamily { r, c, proportions };
        let th = fam.theta0();
        for i in 0..r {
            if fam.row_sum(&th, i) <= 0.0 {
                return Err(Error::Invalid(format!("row {i} has zero sum")));
            }
        }
        for j in 0..c {
            if fam.col_sum(&th, j) <= 0.0 {
                return Err(Error::Invalid(format!("column {j} has zero sum")));
            }
        }
        Ok(fam)
    }

    pub fn rows(&self) -> usize {
        self.r
    }
    pub fn cols(&self) -> usize {
        self.c
    }

    /// The observed cell proportions, usable directly as `theta`.
    pub fn theta0(&self) -> DVector<f64> {
        DVector::from_vec(self.proportions.clone())
    }

    fn row_sum(&self, theta: &DVector<f64>, i: usize) -> f64 {
        (0..self.c).map(|j| theta[i * self.c + j]).sum()
    }

    fn col_sum(&self, theta: &DVector<f64>, j: usize) -> f64 {
        (0..self.r).map(|i| theta[i * self.c + j]).sum()
    }

    /// Un-embedded rectangular view `(F, G, H)` for the GSVD path.
    pub fn fgh(&self, theta: &DVector<f64>) -> (DMatrix<f64>, SymMatrix, SymMatrix) {
        let f = DMatrix::from_fn(self.r, self.c, |i, j| theta[i * self.c + j]);
        let g = SymMatrix::from_diagonal(&DVector::from_fn(self.r, |i, _| self.row_sum(theta, i)));
        let h = SymMatrix::from_diagonal(&DVector::from_fn(self.c, |j, _| self.col_sum(theta, j)));
        (f, g, h)
    }
}

impl MatrixFamily for CaFamily {
    fn p(&self) -> usize {
        self.r * self.c
    }
    fn n(&self) -> usize {
        self.r + self.c
    }
    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..self.r {
            for j in 0..self.c {
                let v = theta[i * self.c + j];
                m[(i, self.r + j)] = v;
                m[(self.r + j, i)] = v;
            }
        }
        SymMatrix::symmetrized(m)
    }
    fn b(&self, theta: &DVector<f64>) -> SymMatrix {
        let mut d = DVector::zeros(self.n());
        for i in 0..self.r {
            d[i] = self.row_sum(theta, i);
        }
        for j in 0..self.c {
            d[self.r + j] = self.col_sum(theta, j);
        }
        SymMatrix::from_diagonal(&d)
    }
    fn da(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        let (i, j) = (s / self.c, s % self.c);
        unit_sym(self.n(), i, self.r + j)
    }
    fn db(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        let (i, j) = (s / self.c, s % self.c);
        let mut d = DVector::zeros(self.n());
        d[i] = 1.0;
        d[self.r + j] = 1.0;
        SymMatrix::from_diagonal(&d)
    }
    fn dda(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n())
    }
    fn ddb(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n())
    }
}

/// See [`CaFamily`].
pub fn make_ca(table: &[Vec<f64>]) -> Result<CaFamily> {
    CaFamily::new(table)
}

// ---------------------------------------------------------------------------
// Multiple correspondence analysis
// ---------------------------------------------------------------------------

/// MCA over `M` binary profiles `g_s` of length `K` with relative
/// frequencies `p_s`: `A(p) = sum_s p_s g_s g_s'` and
/// `B(p) = m * sum_s p_s diag(g_s g_s')`. Profiles are stored sparsely as
/// the index lists of their ones.
pub struct McaFamily {
    ones: Vec<Vec<usize>>,
    weights: Vec<f64>,
    m: usize,
    k: usize,
}

impl McaFamily {
    /// `profiles` are 0/1 vectors of common length `K`, each with exactly
    /// `m` ones; `weights` are nonnegative and sum to one within 1e-12.
    pub fn new(profiles: &[Vec<u8>], weights: &[f64], m: usize) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::ShapeMismatch("no profiles".into()));
        }
        if profiles.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} profiles but {} weights",
                profiles.len(),
                weights.len()
            )));
        }
        let k = profiles[0].len();
        let mut ones = Vec::with_capacity(profiles.len());
        for (s, g) in profiles.iter().enumerate() {
            if g.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "profile {s} has length {}, expected {k}",
                    g.len()
                )));
            }
            if g.iter().any(|&v| v > 1) {
                return Err(Error::Invalid(format!("profile {s} is not binary")));
            }
            let idx: Vec<usize> = g
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(i, _)| i)
                .collect();
            if idx.len() != m {
                return Err(Error::Invalid(format!(
                    "profile {s} has {} ones, expected m = {m}",
                    idx.len()
                )));
            }
            ones.push(idx);
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightSumError { sum });
        }
        Ok(McaFamily {
            ones,
            weights: weights.to_vec(),
            m,
            k,
        })
    }

    pub fn num_profiles(&self) -> usize {
        self.ones.len()
    }

    pub fn vars(&self) -> usize {
        self.m
    }

    /// The observed relative frequencies, usable directly as `theta`.
    pub fn theta0(&self) -> DVector<f64> {
        DVector::from_vec(self.weights.clone())
    }
}

impl MatrixFamily for McaFamily {
    fn p(&self) -> usize {
        self.ones.len()
    }
    fn n(&self) -> usize {
        self.k
    }
    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        let mut m = DMatrix::zeros(self.k, self.k);
        for (s, idx) in self.ones.iter().enumerate() {
            let w = theta[s];
            for &i in idx {
                for &j in idx {
                    m[(i, j)] += w;
                }
            }
        }
        SymMatrix::symmetrized(m)
    }
    fn b(&self, theta: &DVector<f64>) -> SymMatrix {
        let mut d = DVector::zeros(self.k);
        for (s, idx) in self.ones.iter().enumerate() {
            for &i in idx {
                d[i] += self.m as f64 * theta[s];
            }
        }
        SymMatrix::from_diagonal(&d)
    }
    fn da(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        let mut m = DMatrix::zeros(self.k, self.k);
        for &i in &self.ones[s] {
            for &j in &self.ones[s] {
                m[(i, j)] = 1.0;
            }
        }
        SymMatrix::symmetrized(m)
    }
    fn db(&self, _theta: &DVector<f64>, s: usize) -> SymMatrix {
        let mut d = DVector::zeros(self.k);
        for &i in &self.ones[s] {
            d[i] = self.m as f64;
        }
        SymMatrix::from_diagonal(&d)
    }
    fn dda(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.k)
    }
    fn ddb(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.k)
    }
}

/// See [`McaFamily`].
pub fn make_mca(profiles: &[Vec<u8>], weights: &[f64], m: usize) -> Result<McaFamily> {
    McaFamily::new(profiles, weights, m)
}

// ---------------------------------------------------------------------------
// Matrix decomposition factor analysis
// ---------------------------------------------------------------------------

/// Quadratic family `A(theta) = T(theta)' C T(theta)` with
/// `T(theta) = T_0 + sum_s theta_s T_s`, each `T_s` a unit matrix on one
/// free cell of the pattern. `B` is the identity of order `q` (columns of
/// `T`). The fixed elements live in `T_0`, which is zero on free cells.
pub struct MdfaFamily {
    c: SymMatrix,
    t0: DMatrix<f64>,
    free_cells: Vec<(usize, usize)>,
}

impl MdfaFamily {
    pub fn new(c: SymMatrix, t0: DMatrix<f64>, pattern: &[Vec<bool>]) -> Result<Self> {
        let mr = t0.nrows();
        let q = t0.ncols();
        if c.order() != mr {
            return Err(Error::PatternShapeError(format!(
                "C is order {} but T has {mr} rows",
                c.order()
            )));
        }
        if pattern.len() != mr || pattern.iter().any(|row| row.len() != q) {
            return Err(Error::PatternShapeError(format!(
                "pattern must be {mr}x{q}"
            )));
        }
        let mut free_cells = Vec::new();
        for (i, row) in pattern.iter().enumerate() {
            for (j, &free) in row.iter().enumerate() {
                if free {
                    if t0[(i, j)] != 0.0 {
                        return Err(Error::PatternShapeError(format!(
                            "T0 must be zero on free cell ({i}, {j})"
                        )));
                    }
                    free_cells.push((i, j));
                }
            }
        }
        if free_cells.is_empty() {
            return Err(Error::PatternShapeError("no free cells".into()));
        }
        // C must be positive semidefinite.
        let (ev, _) = crate::linalg::sym_evd(&c);
        let scale = ev[0].abs().max(1.0);
        if ev[ev.len() - 1] < -1e-10 * scale {
            return Err(Error::Invalid(format!(
                "C is not positive semidefinite (min eigenvalue {:.3e})",
                ev[ev.len() - 1]
            )));
        }
        Ok(MdfaFamily { c, t0, free_cells })
    }

    /// Row count of `T`; the locally-constant rank of `A`.
    pub fn rank(&self) -> usize {
        self.t0.nrows()
    }

    pub fn free_cells(&self) -> &[(usize, usize)] {
        &self.free_cells
    }

    pub fn c_mat(&self) -> &SymMatrix {
        &self.c
    }

    pub fn t_at(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut t = self.t0.clone();
        for (s, &(i, j)) in self.free_cells.iter().enumerate() {
            t[(i, j)] += theta[s];
        }
        t
    }
}

impl MatrixFamily for MdfaFamily {
    fn p(&self) -> usize {
        self.free_cells.len()
    }
    fn n(&self) -> usize {
        self.t0.ncols()
    }
    fn a(&self, theta: &DVector<f64>) -> SymMatrix {
        let t = self.t_at(theta);
        SymMatrix::symmetrized(t.transpose() * self.c.mat() * t)
    }
    fn b(&self, _theta: &DVector<f64>) -> SymMatrix {
        SymMatrix::identity(self.n())
    }
    fn da(&self, theta: &DVector<f64>, s: usize) -> SymMatrix {
        // D_s A = T_s' C T + T' C T_s; T_s = e_r e_c' means T_s' C T is the
        // outer product e_c (row r of C T).
        let t = self.t_at(theta);
        let ct = self.c.mat() * &t;
        let (r, cidx) = self.free_cells[s];
        let q = self.n();
        let mut m = DMatrix::zeros(q, q);
        for j in 0..q {
            m[(cidx, j)] += ct[(r, j)];
            m[(j, cidx)] += ct[(r, j)];
        }
        SymMatrix::symmetrized(m)
    }
    fn db(&self, _theta: &DVector<f64>, _s: usize) -> SymMatrix {
        SymMatrix::zeros(self.n())
    }
    fn dda(&self, _theta: &DVector<f64>, s: usize, t: usize) -> SymMatrix {
        // D_st A = T_s' C T_t + T_t' C T_s, a two-entry (or doubled
        // diagonal) matrix built from one element of C.
        let (rs, cs) = self.free_cells[s];
        let (rt, ct) = self.free_cells[t];
        let q = self.n();
        let v = self.c.get(rs, rt);
        let mut m = DMatrix::zeros(q, q);
        m[(cs, ct)] += v;
        m[(ct, cs)] += v;
        SymMatrix::symmetrized(m)
    }
    fn ddb(&self, _theta: &DVector<f64>, _s: usize, _t: usize) -> SymMatrix {
        SymMatrix::zeros(self.n())
    }
    fn b_is_identity(&self) -> bool {
        true
    }
}

/// See [`MdfaFamily`].
pub fn make_mdfa(c: SymMatrix, t0: DMatrix<f64>, pattern: &[Vec<bool>]) -> Result<MdfaFamily> {
    MdfaFamily::new(c, t0, pattern)
}
