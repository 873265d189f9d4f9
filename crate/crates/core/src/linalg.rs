//! Dense helpers shared by the spectral modules.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Full eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order. Ties keep the solver's output order.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors, aligned with `values`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims(
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let p = m.nrows();
        let eig = SymmetricEigen::new(symmetrize(m));
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        let vectors = DMatrix::from_fn(p, p, |i, k| eig.eigenvectors[(i, order[k])]);
        Ok(SortedEigen { values, vectors })
    }

    /// `V diag(f(mu_j)) V^T`.
    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> DMatrix<f64> {
        spectral_map(&self.vectors, &self.values, f)
    }

    /// Orthogonal projector onto the eigenvectors at positions `start..start+len`.
    pub fn projector(&self, start: usize, len: usize) -> DMatrix<f64> {
        let cols = self.vectors.columns(start, len);
        cols * cols.transpose()
    }
}

pub fn spectral_map(
    vectors: &DMatrix<f64>,
    values: &[f64],
    f: impl Fn(usize, f64) -> f64,
) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(j, values[j]);
    }
    symmetrize(&(scaled * vectors.transpose()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral norm of a (numerically) symmetric matrix.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.transpose()) <= tol
}

/// Haar-distributed orthogonal matrix from a seeded Gaussian matrix: QR with
/// the column signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_is_descending_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 3.0]);
        let eig = SortedEigen::new(&m).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        let back = eig.map(|_, v| v);
        assert!(max_abs_diff(&back, &m) < 1e-12);
    }

    #[test]
    fn random_orthogonal_is_orthogonal_and_seeded() {
        let q = random_orthogonal(7, 11);
        let qtq = q.transpose() * &q;
        assert!(max_abs_diff(&qtq, &DMatrix::identity(7, 7)) < 1e-12);
        assert_eq!(q, random_orthogonal(7, 11));
        assert_ne!(q, random_orthogonal(7, 12));
    }

    #[test]
    fn op_norm_of_indefinite_matrix() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -3.0, 2.0]));
        assert!((sym_op_norm(&m) - 3.0).abs() < 1e-14);
    }
}
