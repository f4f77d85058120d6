//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eigengrad::family::{
    make_ca, make_linear, make_mca, make_mdfa, make_power_series, CaFamily, LinearFamily,
    McaFamily, MdfaFamily, PowerSeriesFamily,
};
use eigengrad::linalg::SymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrized(m)
}

/// SPD with smallest eigenvalue comfortably above zero.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrized(&m * m.transpose() + DMatrix::identity(n, n) * n as f64)
}

fn diag(v: &[f64]) -> SymMatrix {
    SymMatrix::from_diagonal(&DVector::from_row_slice(v))
}

/// Diagonal one-parameter family with eigenvalue branches
/// 4 + 4t, 4 + 3t, 2 + 2t, 2 + t; eigenvectors are the standard basis.
pub fn branch_family() -> PowerSeriesFamily {
    let a = vec![diag(&[4.0, 4.0, 2.0, 2.0]), diag(&[4.0, 3.0, 2.0, 1.0])];
    let b = vec![SymMatrix::identity(4), SymMatrix::zeros(4)];
    make_power_series(a, b).unwrap()
}

/// Spec-file block for the same diagonal family, reusable by the CLI tests.
pub fn branch_family_spec_json() -> String {
    r#"{
        "builder": "power_series",
        "coeffs_a": [
            [[4,0,0,0],[0,4,0,0],[0,0,2,0],[0,0,0,2]],
            [[4,0,0,0],[0,3,0,0],[0,0,2,0],[0,0,0,1]]
        ],
        "coeffs_b": [
            [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
            [[0,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]]
        ]
    }"#
    .to_string()
}

/// 2x2 family A = [[1 + t1, t2], [t2, 1 - t1]], B = I, with eigenvalues
/// 1 +/- sqrt(t1^2 + t2^2).
pub fn two_param_family() -> LinearFamily {
    let a0 = SymMatrix::identity(2);
    let s1 = SymMatrix::symmetrized(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    let s2 = SymMatrix::symmetrized(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    let zeros = SymMatrix::zeros(2);
    make_linear(
        a0,
        vec![s1, s2],
        SymMatrix::identity(2),
        vec![zeros.clone(), zeros],
    )
    .unwrap()
}

/// 7x7 table of strictly positive counts with grand total 3497, shaped
/// like a social-mobility cross-classification (heavy diagonal, banded
/// off-diagonal). Chosen so the CA spectrum stays well separated (adjacent
/// gaps > 0.05) under moderate multiplicative cell perturbations, keeping
/// the second-difference oracle in its asymptotic regime.
pub fn mobility_table() -> Vec<Vec<f64>> {
    vec![
        vec![157.0, 59.0, 29.0, 15.0, 29.0, 42.0, 26.0],
        vec![63.0, 175.0, 75.0, 43.0, 27.0, 24.0, 34.0],
        vec![44.0, 85.0, 200.0, 79.0, 12.0, 39.0, 15.0],
        vec![27.0, 38.0, 51.0, 251.0, 85.0, 24.0, 18.0],
        vec![36.0, 19.0, 38.0, 71.0, 291.0, 65.0, 28.0],
        vec![38.0, 36.0, 27.0, 29.0, 71.0, 350.0, 67.0],
        vec![18.0, 42.0, 32.0, 23.0, 9.0, 76.0, 365.0],
    ]
}

pub fn ca7() -> CaFamily {
    make_ca(&mobility_table()).unwrap()
}

/// Full factorial of three variables with 4, 4, and 2 categories:
/// M = 32 profiles over K = 10 indicators, m = 3 ones each.
pub fn mca_profiles() -> Vec<Vec<u8>> {
    let mut profiles = Vec::with_capacity(32);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..2 {
                let mut g = vec![0u8; 10];
                g[a] = 1;
                g[4 + b] = 1;
                g[8 + c] = 1;
                profiles.push(g);
            }
        }
    }
    profiles
}

/// Strictly positive, non-uniform weights summing to one.
pub fn mca_weights() -> Vec<f64> {
    let raw: Vec<f64> = (0..32).map(|k| (k + 1) as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn mca32() -> McaFamily {
    make_mca(&mca_profiles(), &mca_weights(), 3).unwrap()
}

/// 5x5 MDFA fixture: C SPD, T0 upper-triangular with unit diagonal, the
/// strictly lower triangle free (p = 10).
pub fn mdfa5(seed: u64) -> MdfaFamily {
    let mut r = rng(seed);
    let c = random_spd(&mut r, 5);
    let mut t0 = DMatrix::identity(5, 5);
    for i in 0..5 {
        for j in (i + 1)..5 {
            t0[(i, j)] = r.random_range(-0.5..0.5);
        }
    }
    let pattern: Vec<Vec<bool>> = (0..5).map(|i| (0..5).map(|j| j < i).collect()).collect();
    make_mdfa(c, t0, &pattern).unwrap()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}
