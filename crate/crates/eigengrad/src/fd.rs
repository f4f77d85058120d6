//! Finite-difference oracle: central differences with Richardson
//! extrapolation, plus a bundle checker that re-solves the eigenproblem at
//! perturbed parameters and compares against the analytic derivatives.
//!
//! The oracle never reuses the analytic machinery beyond the plain solver,
//! so agreement is evidence, not circularity. Eigenvector signs at perturbed
//! points are aligned to the base solution here and nowhere else.

use nalgebra::{DMatrix, DVector};

use crate::deriv::{gevd_jacobian, DerivOptions};
use crate::error::{Error, Result};
use crate::family::MatrixFamily;
use crate::linalg::gevd_solve;
use crate::tensor::Tensor3;

/// Step and depth controls for the extrapolated differences.
#[derive(Clone, Copy, Debug)]
pub struct FdConfig {
    /// Relative base step: h_0 = base_step * (1 + |theta_s|).
    pub base_step: f64,
    /// Base step for second differences, which trade truncation for noise.
    pub hessian_base_step: f64,
    /// Richardson levels; step halves at each level, error order gains h^2.
    pub levels: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            base_step: 1e-4,
            hessian_base_step: 1e-3,
            levels: 4,
        }
    }
}

impl FdConfig {
    fn step(&self, theta_s: f64) -> f64 {
        self.base_step * (1.0 + theta_s.abs())
    }

    fn hessian_step(&self, theta_s: f64) -> f64 {
        self.hessian_base_step * (1.0 + theta_s.abs())
    }
}

fn eval<F>(f: &F, th: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    f(th).map_err(|e| Error::EvalFailure {
        source: Box::new(e),
        theta: th.iter().cloned().collect(),
    })
}

/// Richardson table in rolling form. `quot(scale)` must return the raw
/// difference quotient at step h_0 * scale with an error series in even
/// powers of the step, so each level cancels one more power of h^2.
fn richardson<Q>(levels: usize, mut quot: Q) -> Result<DVector<f64>>
where
    Q: FnMut(f64) -> Result<DVector<f64>>,
{
    assert!(levels >= 1);
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(levels);
    for j in 0..levels {
        let mut cur = quot(0.5f64.powi(j as i32))?;
        let mut pow4 = 4.0;
        for k in 0..j {
            let next = (&cur * pow4 - &rows[k]) / (pow4 - 1.0);
            rows[k] = cur;
            cur = next;
            pow4 *= 4.0;
        }
        rows.push(cur);
    }
    Ok(rows.pop().unwrap())
}

/// Jacobian of a vector-valued map, one column per parameter.
pub fn fd_jacobian<F>(f: &F, theta: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let p = theta.len();
    let out = eval(f, theta)?.len();
    let mut jac = DMatrix::zeros(out, p);
    for s in 0..p {
        let h0 = cfg.step(theta[s]);
        let col = richardson(cfg.levels, |scale| {
            let h = h0 * scale;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[s] += h;
            tm[s] -= h;
            Ok((eval(f, &tp)? - eval(f, &tm)?) / (2.0 * h))
        })?;
        jac.set_column(s, &col);
    }
    Ok(jac)
}

/// Gradient of a scalar map.
pub fn fd_gradient<F>(f: &F, theta: &DVector<f64>, cfg: &FdConfig) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let wrapped = |th: &DVector<f64>| f(th).map(|v| DVector::from_element(1, v));
    let jac = fd_jacobian(&wrapped, theta, cfg)?;
    Ok(jac.row(0).transpose())
}

/// Second partials of a vector-valued map, laid out (s, t, output).
/// Diagonal entries use the three-point second difference, off-diagonal
/// entries the four-corner cross difference; both have even error series.
pub fn fd_hessian_multi<F>(f: &F, theta: &DVector<f64>, cfg: &FdConfig) -> Result<Tensor3>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let p = theta.len();
    let f0 = eval(f, theta)?;
    let out = f0.len();
    let mut hess = Tensor3::zeros(p, p, out);
    for s in 0..p {
        let hs0 = cfg.hessian_step(theta[s]);
        let diag = richardson(cfg.levels, |scale| {
            let h = hs0 * scale;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[s] += h;
            tm[s] -= h;
            Ok((eval(f, &tp)? + eval(f, &tm)? - &f0 * 2.0) / (h * h))
        })?;
        for k in 0..out {
            hess.set(s, s, k, diag[k]);
        }
        for t in (s + 1)..p {
            let ht0 = cfg.hessian_step(theta[t]);
            let cross = richardson(cfg.levels, |scale| {
                let hs = hs0 * scale;
                let ht = ht0 * scale;
                let mut tpp = theta.clone();
                let mut tpm = theta.clone();
                let mut tmp = theta.clone();
                let mut tmm = theta.clone();
                tpp[s] += hs;
                tpp[t] += ht;
                tpm[s] += hs;
                tpm[t] -= ht;
                tmp[s] -= hs;
                tmp[t] += ht;
                tmm[s] -= hs;
                tmm[t] -= ht;
                Ok((eval(f, &tpp)? - eval(f, &tpm)? - eval(f, &tmp)? + eval(f, &tmm)?)
                    / (4.0 * hs * ht))
            })?;
            for k in 0..out {
                hess.set(s, t, k, cross[k]);
                hess.set(t, s, k, cross[k]);
            }
        }
    }
    Ok(hess)
}

/// Hessian of a scalar map.
pub fn fd_hessian<F>(f: &F, theta: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let wrapped = |th: &DVector<f64>| f(th).map(|v| DVector::from_element(1, v));
    let hess = fd_hessian_multi(&wrapped, theta, cfg)?;
    let p = theta.len();
    Ok(DMatrix::from_fn(p, p, |s, t| hess.get(s, t, 0)))
}

/// min(absolute, relative) gap between an analytic and an oracle value.
pub fn discrepancy(analytic: f64, oracle: f64) -> f64 {
    let d = (analytic - oracle).abs();
    if d == 0.0 {
        return 0.0;
    }
    let m = analytic.abs().max(oracle.abs());
    d.min(d / m)
}

/// Per-quantity tolerances for [`fd_check_bundle`].
#[derive(Clone, Copy, Debug)]
pub struct FdTolerances {
    pub dl: f64,
    pub dx: f64,
    pub ddl: f64,
    pub ddx: f64,
}

impl Default for FdTolerances {
    fn default() -> Self {
        FdTolerances {
            dl: 1e-6,
            dx: 1e-5,
            ddl: 1e-4,
            ddx: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FdQuantityReport {
    pub max_discrepancy: f64,
    pub tol: f64,
    pub pass: bool,
}

impl FdQuantityReport {
    fn new(max_discrepancy: f64, tol: f64) -> Self {
        FdQuantityReport {
            max_discrepancy,
            tol,
            pass: max_discrepancy <= tol,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub dl: FdQuantityReport,
    pub dx: FdQuantityReport,
    pub ddl: Option<FdQuantityReport>,
    pub ddx: Option<FdQuantityReport>,
}

impl FdReport {
    pub fn pass(&self) -> bool {
        self.dl.pass
            && self.dx.pass
            && self.ddl.map_or(true, |r| r.pass)
            && self.ddx.map_or(true, |r| r.pass)
    }
}

/// Compares the analytic bundle at `theta` against extrapolated differences
/// of the re-solved eigenproblem. Perturbed eigenvectors are sign-aligned to
/// the base solution through the base B inner product.
pub fn fd_check_bundle(
    fam: &dyn MatrixFamily,
    theta: &DVector<f64>,
    opts: &DerivOptions,
    tols: &FdTolerances,
    cfg: &FdConfig,
) -> Result<FdReport> {
    let bundle = gevd_jacobian(fam, theta, opts)?;
    let n = bundle.order();
    let p = bundle.params();
    let b0 = bundle.b.clone();
    let x0 = bundle.x.clone();

    // Stacked map: [lambda; vec(X)] with perturbed X sign-aligned to x0.
    let stacked = |th: &DVector<f64>| -> Result<DVector<f64>> {
        let sol = gevd_solve(&fam.a(th), &fam.b(th))?;
        let mut out = DVector::zeros(n + n * n);
        for nu in 0..n {
            out[nu] = sol.lambda[nu];
            let col = sol.x.column(nu);
            let align = x0.column(nu).dot(&(b0.mat() * col));
            let sign = if align < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                out[n + nu * n + i] = sign * col[i];
            }
        }
        Ok(out)
    };

    let jac = fd_jacobian(&stacked, theta, cfg)?;
    let mut dl_disc = 0.0f64;
    let mut dx_disc = 0.0f64;
    for s in 0..p {
        for nu in 0..n {
            dl_disc = dl_disc.max(discrepancy(bundle.dl[(nu, s)], jac[(nu, s)]));
            for i in 0..n {
                dx_disc = dx_disc.max(discrepancy(bundle.dx.get(i, s, nu), jac[(n + nu * n + i, s)]));
            }
        }
    }

    let mut ddl_report = None;
    let mut ddx_report = None;
    if opts.hessian_values || opts.hessian_vectors {
        let hess = fd_hessian_multi(&stacked, theta, cfg)?;
        if let Some(ddl) = &bundle.ddl {
            let mut disc = 0.0f64;
            for s in 0..p {
                for t in 0..p {
                    for nu in 0..n {
                        disc = disc.max(discrepancy(ddl.get(s, t, nu), hess.get(s, t, nu)));
                    }
                }
            }
            ddl_report = Some(FdQuantityReport::new(disc, tols.ddl));
        }
        if let Some(ddx) = &bundle.ddx {
            let mut disc = 0.0f64;
            for s in 0..p {
                for t in 0..p {
                    for nu in 0..n {
                        for i in 0..n {
                            disc = disc.max(discrepancy(
                                ddx.get(s, t, i, nu),
                                hess.get(s, t, n + nu * n + i),
                            ));
                        }
                    }
                }
            }
            ddx_report = Some(FdQuantityReport::new(disc, tols.ddx));
        }
    }

    Ok(FdReport {
        dl: FdQuantityReport::new(dl_disc, tols.dl),
        dx: FdQuantityReport::new(dx_disc, tols.dx),
        ddl: ddl_report,
        ddx: ddx_report,
    })
}
