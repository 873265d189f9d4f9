//! Kronecker-form linear operators on `p x p` matrices.
//!
//! With the convention `(A ⊗ B) M = A M Bᵀ`, every operator here is a short
//! sum `M ↦ Σ_t c_t A_t M B_tᵀ`. Operators are kept in this factored form and
//! applied in `O(p³)`; the `p² x p²` matrix is never built.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covmodel::{ClusterIndex, CovarianceModel};
use crate::error::{Error, Result};
use crate::sampling::{self, EmpiricalSpectral};

#[derive(Debug, Clone, PartialEq)]
pub struct KronTerm {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub coeff: f64,
}

/// `M ↦ Σ_t coeff_t · left_t · M · right_tᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerSum {
    dim: usize,
    terms: Vec<KronTerm>,
}

impl KroneckerSum {
    pub fn new(dim: usize) -> Self {
        KroneckerSum {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, left: DMatrix<f64>, right: DMatrix<f64>, coeff: f64) -> Result<()> {
        for m in [&left, &right] {
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(Error::dims(
                    format!("{0}x{0}", self.dim),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        self.terms.push(KronTerm { left, right, coeff });
        Ok(())
    }

    pub fn with_term(mut self, left: DMatrix<f64>, right: DMatrix<f64>, coeff: f64) -> Result<Self> {
        self.push(left, right, coeff)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::dims(
                format!("{0}x{0}", self.dim),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            if t.coeff != 0.0 {
                out += (&t.left * m * t.right.transpose()) * t.coeff;
            }
        }
        Ok(out)
    }

    /// Debug dump of the factors: `term,coeff,factor,row,col,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "term,coeff,factor,row,col,value")?;
        for (k, t) in self.terms.iter().enumerate() {
            for (name, m) in [("A", &t.left), ("B", &t.right)] {
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        writeln!(out, "{k},{:?},{name},{i},{j},{:?}", t.coeff, m[(i, j)])?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    TrueFisherSqrt,
    PluginFisherSqrt,
    LimitingCovariance,
}

/// A Fisher-type operator attached to a cluster `Δ_r`, with the Wald degrees
/// of freedom `m_r (p - m_r)`.
#[derive(Debug, Clone)]
pub struct FisherOperator {
    pub kind: OperatorKind,
    pub op: KroneckerSum,
    pub cluster: ClusterIndex,
    pub df: usize,
}

impl FisherOperator {
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.op.apply(m)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

fn require_two_clusters(model: &CovarianceModel) -> Result<()> {
    if model.num_clusters() < 2 {
        return Err(Error::SingleCluster);
    }
    Ok(())
}

/// Resolvent `C_r = Σ_{s≠r} P_s / (λ_r - λ_s)`.
pub fn resolvent(model: &CovarianceModel, r: ClusterIndex) -> Result<DMatrix<f64>> {
    require_two_clusters(model)?;
    model.check_cluster(r)?;
    let lam = model.lambda(r);
    let range = r.positions();
    Ok(model.spectral_map(|j, mu| if range.contains(&j) { 0.0 } else { 1.0 / (lam - mu) }))
}

fn assemble_sqrt(
    kind: OperatorKind,
    inv_sqrt: &DMatrix<f64>,
    c_inv: &DMatrix<f64>,
    proj: &DMatrix<f64>,
    cluster: ClusterIndex,
) -> Result<FisherOperator> {
    let p = inv_sqrt.nrows();
    let coeff = std::f64::consts::FRAC_1_SQRT_2;
    let op = KroneckerSum::new(p)
        .with_term(inv_sqrt * c_inv, proj * inv_sqrt, coeff)?
        .with_term(inv_sqrt * proj, c_inv * inv_sqrt, coeff)?;
    Ok(FisherOperator {
        kind,
        op,
        cluster,
        df: cluster.degrees_of_freedom(p),
    })
}

/// `I(P_r)^{1/2} = 2^{-1/2} (Σ^{-1/2} C_r^{-1} ⊗ P_r Σ^{-1/2} + Σ^{-1/2} P_r ⊗ C_r^{-1} Σ^{-1/2})`
/// with `C_r^{-1} := λ_r I - Σ`.
pub fn fisher_sqrt(model: &CovarianceModel, r: ClusterIndex) -> Result<FisherOperator> {
    require_two_clusters(model)?;
    model.check_cluster(r)?;
    let lam = model.lambda(r);
    let inv_sqrt = model.matrix_power(-0.5);
    let c_inv = model.spectral_map(|_, mu| lam - mu);
    let proj = model.projector(r);
    assemble_sqrt(OperatorKind::TrueFisherSqrt, &inv_sqrt, &c_inv, &proj, r)
}

/// `I(P_r)^{-1} = 2 Σ_{s≠r} (P_s ⊗ P_r + P_r ⊗ P_s) λ_r λ_s / (λ_r - λ_s)²`,
/// stored as its `2(k-1)` terms.
pub fn limiting_covariance(model: &CovarianceModel, r: ClusterIndex) -> Result<FisherOperator> {
    require_two_clusters(model)?;
    model.check_cluster(r)?;
    let p = model.dim();
    let lam_r = model.lambda(r);
    let proj_r = model.projector(r);
    let mut op = KroneckerSum::new(p);
    for s in 1..=model.num_clusters() {
        if s == r.rank() {
            continue;
        }
        let cs = model.cluster(s)?;
        let lam_s = model.lambda(cs);
        let proj_s = model.projector(cs);
        let w = 2.0 * lam_r * lam_s / ((lam_r - lam_s) * (lam_r - lam_s));
        op.push(proj_s.clone(), proj_r.clone(), w)?;
        op.push(proj_r.clone(), proj_s, w)?;
    }
    Ok(FisherOperator {
        kind: OperatorKind::LimitingCovariance,
        op,
        cluster: r,
        df: r.degrees_of_freedom(p),
    })
}

/// Smallest eigenvalue accepted by the plug-in, relative to the largest.
pub const PLUGIN_PD_RELATIVE_FLOOR: f64 = 1e-12;

/// Plug-in `Î(P̂_r)^{1/2}` from an empirical covariance: `Σ̂` is
/// eigendecomposed, `P̂_r` taken from positions `Δ_r` and `λ̂_r` is the largest
/// eigenvalue of the cluster.
pub fn plugin_fisher_sqrt(sigma_hat: &DMatrix<f64>, delta_r: ClusterIndex) -> Result<FisherOperator> {
    plugin_from_spectral(&sampling::empirical_spectral(sigma_hat, delta_r)?)
}

/// Same as [`plugin_fisher_sqrt`] reusing an existing decomposition.
pub fn plugin_from_spectral(es: &EmpiricalSpectral) -> Result<FisherOperator> {
    let p = es.dim();
    let cluster = es.cluster;
    if cluster.multiplicity() >= p {
        return Err(Error::SingleCluster);
    }
    let lam_max = es.eigenvalues_desc[0];
    let threshold = PLUGIN_PD_RELATIVE_FLOOR * lam_max.max(0.0);
    if es.lambda_hat_min.is_nan() || es.lambda_hat_min <= threshold {
        return Err(Error::NotInvertible {
            lambda_min: es.lambda_hat_min,
            threshold,
        });
    }
    let v = &es.eigenvectors;
    let vals = &es.eigenvalues_desc;
    let inv_sqrt = crate::linalg::spectral_map(v, vals, |_, mu| mu.powf(-0.5));
    let lam_hat = es.lambda_hat_r;
    let c_inv = crate::linalg::spectral_map(v, vals, |_, mu| lam_hat - mu);
    assemble_sqrt(
        OperatorKind::PluginFisherSqrt,
        &inv_sqrt,
        &c_inv,
        &es.p_hat_r,
        cluster,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::Basis;
    use crate::linalg::{self, max_abs_diff};
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn diag21() -> CovarianceModel {
        CovarianceModel::from_clusters(&[2.0, 1.0], &[1, 1], Basis::Canonical).unwrap()
    }

    #[test]
    fn identity_operator() {
        let op = KroneckerSum::new(3)
            .with_term(DMatrix::identity(3, 3), DMatrix::identity(3, 3), 1.0)
            .unwrap();
        let c = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(op.apply(&c).unwrap(), c);
    }

    #[test]
    fn diagonal_factors_on_ones() {
        let op = KroneckerSum::new(2)
            .with_term(diag(&[1.0, 2.0]), diag(&[3.0, 4.0]), 1.0)
            .unwrap();
        let out = op.apply(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn zero_coefficient_and_dimension_errors() {
        let mut op = KroneckerSum::new(2);
        op.push(diag(&[5.0, 5.0]), diag(&[1.0, 1.0]), 0.0).unwrap();
        assert_eq!(op.apply(&DMatrix::from_element(2, 2, 3.0)).unwrap(), DMatrix::zeros(2, 2));
        assert!(op.push(DMatrix::identity(3, 3), DMatrix::identity(2, 2), 1.0).is_err());
        assert!(op.apply(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let m = diag21();
        let c1 = resolvent(&m, m.cluster(1).unwrap()).unwrap();
        assert!(max_abs_diff(&c1, &diag(&[0.0, 1.0])) < 1e-15);
        let c2 = resolvent(&m, m.cluster(2).unwrap()).unwrap();
        assert!(max_abs_diff(&c2, &diag(&[-1.0, 0.0])) < 1e-15);
        let id = CovarianceModel::decay(0.0, 3, Basis::Canonical).unwrap();
        assert!(matches!(resolvent(&id, id.cluster(1).unwrap()), Err(Error::SingleCluster)));
    }

    #[test]
    fn resolvent_annihilates_projector_and_inverts_on_complement() {
        let m = CovarianceModel::spiked(&[3.0, 1.0], 0.5, 6, Basis::Random { seed: 5 }).unwrap();
        for r in 1..=3 {
            let c = m.cluster(r).unwrap();
            let cr = resolvent(&m, c).unwrap();
            let pr = m.projector(c);
            assert!((&cr * &pr).amax() < 1e-12);
            let shifted = DMatrix::identity(6, 6) * m.lambda(c) - m.dense();
            let lhs = &cr * shifted;
            let rhs = DMatrix::identity(6, 6) - &pr;
            assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
        }
    }

    #[test]
    fn fisher_sqrt_diag_example() {
        let m = diag21();
        let f = fisher_sqrt(&m, m.cluster(1).unwrap()).unwrap();
        assert_eq!(f.df, 1);
        assert_eq!(f.op.terms().len(), 2);
        let e = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let out = f.apply(&e).unwrap();
        // Hand evaluation: Σ^{-1/2} = diag(1/√2, 1), C^{-1} = diag(0, 1), P = diag(1, 0);
        // both terms put 1/√2 · 1 · 1 · 1/√2 in the off-diagonal entries.
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!(max_abs_diff(&out, &expected) < 1e-15);
        assert_eq!(f.apply(&DMatrix::zeros(2, 2)).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn limiting_covariance_diag_example() {
        let m = diag21();
        let k = limiting_covariance(&m, m.cluster(1).unwrap()).unwrap();
        assert_eq!(k.op.terms().len(), 2);
        assert!(k.op.terms().iter().all(|t| (t.coeff - 4.0).abs() < 1e-15));
        let out = k.apply(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(max_abs_diff(&out, &DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 4.0, 0.0])) < 1e-15);
    }

    #[test]
    fn limiting_covariance_kills_within_cluster_block() {
        let m = CovarianceModel::spiked(&[2.0, 2.0], 1.0, 5, Basis::Random { seed: 6 }).unwrap();
        let c = m.cluster(1).unwrap();
        let k = limiting_covariance(&m, c).unwrap();
        assert_eq!(k.op.terms().len(), 2);
        let pr = m.projector(c);
        let x = DMatrix::from_fn(5, 5, |i, j| ((i + 2 * j) as f64).sin());
        let out = k.apply(&(&pr * x * &pr)).unwrap();
        assert!(out.amax() < 1e-12);
    }

    #[test]
    fn plugin_at_truth_equals_true_operator() {
        let m = CovarianceModel::spiked(&[3.0, 1.0], 1.0, 6, Basis::Random { seed: 7 }).unwrap();
        for r in 1..=3 {
            let c = m.cluster(r).unwrap();
            let t = fisher_sqrt(&m, c).unwrap();
            let p = plugin_fisher_sqrt(&m.dense(), c).unwrap();
            assert_eq!(p.kind, OperatorKind::PluginFisherSqrt);
            for (a, b) in t.op.terms().iter().zip(p.op.terms()) {
                assert!(max_abs_diff(&a.left, &b.left) < 1e-9);
                assert!(max_abs_diff(&a.right, &b.right) < 1e-9);
            }
        }
    }

    #[test]
    fn plugin_rejects_singular_input() {
        let s = diag(&[2.0, 1.0, 0.0]);
        let c = ClusterIndex::new(1, 0, 1).unwrap();
        assert!(matches!(plugin_fisher_sqrt(&s, c), Err(Error::NotInvertible { .. })));
        let s = diag(&[2.0, 1.0, -0.5]);
        assert!(matches!(plugin_fisher_sqrt(&s, c), Err(Error::NotInvertible { .. })));
    }

    #[test]
    fn plugin_is_continuous_in_sigma_hat() {
        let m = diag21();
        let c = m.cluster(1).unwrap();
        let truth = fisher_sqrt(&m, c).unwrap();
        let dir = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 1.0, -0.2]);
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let plug = plugin_fisher_sqrt(&(m.dense() + &dir * eps), c).unwrap();
            // Operator-norm distance over the unit Frobenius ball, via basis matrices.
            let mut worst: f64 = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let mut e = DMatrix::zeros(2, 2);
                    e[(a, b)] = 1.0;
                    let d = plug.apply(&e).unwrap() - truth.apply(&e).unwrap();
                    worst = worst.max(linalg::frobenius_sq(&d).sqrt());
                }
            }
            assert!(worst < 10.0 * eps, "eps={eps} worst={worst}");
            assert!(worst < prev);
            prev = worst;
        }
    }

    #[test]
    fn csv_dump_has_all_factor_entries() {
        let m = diag21();
        let f = fisher_sqrt(&m, m.cluster(1).unwrap()).unwrap();
        let mut buf = Vec::new();
        f.op.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 4);
        assert!(text.starts_with("term,coeff,factor,row,col,value\n"));
    }
}
