#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use pca_wald::covmodel::CovarianceModel;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Rows of a numeric CSV fixture, header skipped.
pub fn read_fixture(name: &str) -> Vec<Vec<f64>> {
    std::fs::read_to_string(data_path(name))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// Column-major `vec`.
pub fn vec_of(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Materializes the operator `M ↦ U (w ∘ (Uᵀ M U)) Uᵀ` as a `p² x p²`
/// matrix acting on column-major `vec(M)`, with `w[(i, j)]` the multiplier of
/// entry `(i, j)` in the basis `U`.
pub fn dense_from_multipliers(u: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let p = u.nrows();
    let uu = u.kronecker(u);
    let mut diag = DMatrix::zeros(p * p, p * p);
    for j in 0..p {
        for i in 0..p {
            diag[(i + j * p, i + j * p)] = w[(i, j)];
        }
    }
    &uu * diag * uu.transpose()
}

/// Dense `Σ_t c_t (B_t ⊗ A_t)` for `M ↦ Σ_t c_t A_t M B_tᵀ` on column-major
/// vectors.
pub fn dense_from_terms(terms: &[(DMatrix<f64>, DMatrix<f64>, f64)]) -> DMatrix<f64> {
    let p = terms[0].0.nrows();
    let mut out = DMatrix::zeros(p * p, p * p);
    for (a, b, c) in terms {
        out += b.kronecker(a) * *c;
    }
    out
}

/// Eigen-coordinate multipliers of `I(P_r)^{1/2}` for eigenvalues `mu` (in
/// basis order), positions `range` and cluster eigenvalue `lam`.
pub fn fisher_sqrt_multipliers(mu: &[f64], range: std::ops::Range<usize>, lam: f64) -> DMatrix<f64> {
    let p = mu.len();
    let ind = |k: usize| if range.contains(&k) { 1.0 } else { 0.0 };
    DMatrix::from_fn(p, p, |i, j| {
        let (si, sj) = (mu[i].sqrt(), mu[j].sqrt());
        ((lam - mu[i]) / si * ind(j) / sj + ind(i) / si * (lam - mu[j]) / sj) / 2f64.sqrt()
    })
}

/// Eigen-coordinate multipliers of `I(P_r)^{-1}`.
pub fn limiting_covariance_multipliers(mu: &[f64], range: std::ops::Range<usize>, lam: f64) -> DMatrix<f64> {
    let p = mu.len();
    DMatrix::from_fn(p, p, |i, j| {
        let (ri, rj) = (range.contains(&i), range.contains(&j));
        if ri == rj {
            0.0
        } else {
            let other = if ri { mu[j] } else { mu[i] };
            2.0 * lam * other / ((lam - other) * (lam - other))
        }
    })
}

/// Eigenvalues in basis order of a model.
pub fn basis_eigenvalues(model: &CovarianceModel) -> Vec<f64> {
    model.eigenvalues().to_vec()
}

/// Independent sorted eigendecomposition (descending), straight from nalgebra.
pub fn eig_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let vals = idx.iter().map(|&k| se.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), m.nrows(), |i, j| se.eigenvectors[(i, idx[j])]);
    (vals, vecs)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
