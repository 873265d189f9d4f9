//! Seed-deterministic Gaussian sampling and empirical spectral quantities.
//!
//! Rows are `X_i = Σ^{1/2} Z_i` with `Z_i` standard Gaussian drawn from a
//! ChaCha8 stream (a counter-based generator) seeded by a 64-bit value.
//! Replication `i` of an experiment with base seed `s` uses
//! [`replication_seed`]`(s, i)`, so every replication can be regenerated on
//! its own regardless of scheduling.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covmodel::{ClusterIndex, CovarianceModel, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, SortedEigen};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `index`: the `index + 1`-th output of a SplitMix64
/// sequence started at `base_seed`.
pub fn replication_seed(base_seed: u64, index: u64) -> u64 {
    mix64(base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// `n x p` standard Gaussian matrix, filled row by row from the seeded stream.
fn standard_normal_rows(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    DMatrix::from_row_slice(n, p, &data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub n: usize,
    pub p: usize,
    /// `n x p`, one observation per row.
    pub data: DMatrix<f64>,
    pub seed: u64,
    /// Description of the generating model, when it has one.
    pub model: Option<ModelSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BatchSidecar {
    n: usize,
    p: usize,
    seed: u64,
    model: Option<ModelSpec>,
}

impl SampleBatch {
    /// Writes the data as little-endian row-major `f64` to `path` and the
    /// metadata to `path` with a `.json` extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for row in self.data.row_iter() {
            for v in row.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        let sidecar = BatchSidecar {
            n: self.n,
            p: self.p,
            seed: self.seed,
            model: self.model.clone(),
        };
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar: BatchSidecar =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let expected = sidecar.n * sidecar.p * 8;
        if bytes.len() != expected {
            return Err(Error::dims(
                format!("{expected} bytes"),
                format!("{} bytes", bytes.len()),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(SampleBatch {
            n: sidecar.n,
            p: sidecar.p,
            data: DMatrix::from_row_slice(sidecar.n, sidecar.p, &values),
            seed: sidecar.seed,
            model: sidecar.model,
        })
    }
}

/// Draws `n` i.i.d. `N(0, Σ)` observations.
pub fn sample(model: &CovarianceModel, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let p = model.dim();
    let z = standard_normal_rows(n, p, seed);
    // Rows are Z_i^T Σ^{1/2}, i.e. (Σ^{1/2} Z_i)^T since the root is symmetric.
    let data = z * model.matrix_power(0.5);
    Ok(SampleBatch {
        n,
        p,
        data,
        seed,
        model: model.to_json().ok().map(|_| model.spec().clone()),
    })
}

/// `Σ̂ = (1/n) Σ_j X_j X_jᵀ`, exactly symmetric.
pub fn empirical_covariance(batch: &SampleBatch) -> DMatrix<f64> {
    let gram = batch.data.tr_mul(&batch.data) / batch.n as f64;
    linalg::symmetrize(&gram)
}

/// One Monte Carlo draw of the empirical covariance, computed through the
/// whitened Gram matrix `W = (1/n) Σ_j Z_j Z_jᵀ` so that
/// `Σ̂ = Σ^{1/2} W Σ^{1/2}`. Uses the same Gaussian stream as [`sample`].
#[derive(Debug, Clone)]
pub struct CovarianceDraw {
    pub whitened: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
}

/// Faster equivalent of `empirical_covariance(&sample(model, n, seed))` for
/// callers that already hold `Σ^{1/2}`; agrees with it up to rounding.
pub fn draw_covariance(sqrt_sigma: &DMatrix<f64>, n: usize, seed: u64) -> CovarianceDraw {
    let p = sqrt_sigma.nrows();
    let z = standard_normal_rows(n, p, seed);
    let whitened = linalg::symmetrize(&(z.tr_mul(&z) / n as f64));
    let sigma_hat = linalg::symmetrize(&(sqrt_sigma * &whitened * sqrt_sigma));
    CovarianceDraw {
        whitened,
        sigma_hat,
    }
}

/// Draws `W = (1/n) Σ_j Z_j Z_jᵀ` directly by the Bartlett decomposition
/// `nW = A Aᵀ`, with `A` lower triangular, `A_ii² ~ χ²_{n-i+1}` and standard
/// Gaussian entries below the diagonal. Same law as
/// [`draw_covariance`]`.whitened` but O(p²) work instead of O(n p²); the
/// random stream is different.
pub fn draw_whitened_wishart(p: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n < p {
        return Err(Error::Precondition(format!("Bartlett draw needs n >= p, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = rand_distr::ChiSquared::new((n - i) as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        a[(i, i)] = chi.sample(&mut rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    Ok(linalg::symmetrize(&(&a * a.transpose() / n as f64)))
}

/// Spectral quantities of an empirical covariance for a cluster `Δ_r`.
#[derive(Debug, Clone)]
pub struct EmpiricalSpectral {
    pub sigma_hat: DMatrix<f64>,
    pub eigenvalues_desc: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub cluster: ClusterIndex,
    /// `P̂_r`, projector onto the eigenvectors at positions `Δ_r`.
    pub p_hat_r: DMatrix<f64>,
    /// Largest eigenvalue in the cluster, `μ_{min Δ_r}(Σ̂)`.
    pub lambda_hat_r: f64,
    pub lambda_hat_min: f64,
}

impl EmpiricalSpectral {
    pub fn dim(&self) -> usize {
        self.eigenvalues_desc.len()
    }
}

pub fn empirical_spectral(sigma_hat: &DMatrix<f64>, cluster: ClusterIndex) -> Result<EmpiricalSpectral> {
    let eig = SortedEigen::new(sigma_hat)?;
    cluster.check_dimension(eig.values.len())?;
    let p_hat_r = eig.projector(cluster.start(), cluster.multiplicity());
    Ok(EmpiricalSpectral {
        sigma_hat: sigma_hat.clone(),
        lambda_hat_r: eig.values[cluster.start()],
        lambda_hat_min: *eig.values.last().expect("nonempty"),
        eigenvalues_desc: eig.values,
        eigenvectors: eig.vectors,
        cluster,
        p_hat_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::Basis;
    use nalgebra::DVector;

    #[test]
    fn replication_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|i| replication_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(replication_seed(7, 3), seeds[3]);
        // SplitMix64 reference output for state 0 after one step.
        assert_eq!(mix64(GOLDEN_GAMMA), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn same_seed_same_batch() {
        let m = CovarianceModel::spiked(&[2.0], 1.0, 4, Basis::Random { seed: 1 }).unwrap();
        let a = sample(&m, 50, 99).unwrap();
        let b = sample(&m, 50, 99).unwrap();
        assert_eq!(a, b);
        let c = sample(&m, 50, 100).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_samples_rejected() {
        let m = CovarianceModel::decay(0.0, 3, Basis::Canonical).unwrap();
        assert!(sample(&m, 0, 1).is_err());
    }

    #[test]
    fn single_observation_covariance_is_outer_product() {
        let m = CovarianceModel::decay(1.0, 3, Basis::Random { seed: 4 }).unwrap();
        let b = sample(&m, 1, 5).unwrap();
        let x = b.data.row(0).transpose();
        let outer = &x * x.transpose();
        assert!(linalg::max_abs_diff(&empirical_covariance(&b), &outer) < 1e-15);
    }

    #[test]
    fn identical_rows_and_basis_rows() {
        let v = [1.0, -2.0, 0.5];
        let data = DMatrix::from_row_slice(3, 3, &[v, v, v].concat());
        let b = SampleBatch { n: 3, p: 3, data, seed: 0, model: None };
        let vv = DVector::from_row_slice(&v);
        assert!(linalg::max_abs_diff(&empirical_covariance(&b), &(&vv * vv.transpose())) < 1e-15);

        let data = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = SampleBatch { n: 2, p: 4, data, seed: 0, model: None };
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 0.0, 0.0]));
        assert_eq!(empirical_covariance(&b), expected);
    }

    #[test]
    fn random_batch_covariance_is_symmetric_psd() {
        let m = CovarianceModel::spiked(&[3.0, 1.0], 0.5, 8, Basis::Random { seed: 2 }).unwrap();
        let s = empirical_covariance(&sample(&m, 5, 17).unwrap());
        assert!(linalg::is_symmetric(&s, 0.0));
        let eig = s.symmetric_eigenvalues();
        assert!(eig.iter().all(|v| *v > -1e-10));
        // rank <= n = 5
        assert!(eig.iter().filter(|v| v.abs() > 1e-10).count() <= 5);
    }

    #[test]
    fn draw_matches_sample_path() {
        let m = CovarianceModel::spiked(&[3.0], 1.0, 6, Basis::Random { seed: 8 }).unwrap();
        let via_batch = empirical_covariance(&sample(&m, 200, 31).unwrap());
        let draw = draw_covariance(&m.matrix_power(0.5), 200, 31);
        assert!(linalg::max_abs_diff(&via_batch, &draw.sigma_hat) < 1e-12);
    }

    #[test]
    fn identity_sample_covariance_concentrates() {
        let n = 100_000;
        let m = CovarianceModel::decay(0.0, 3, Basis::Canonical).unwrap();
        let s = empirical_covariance(&sample(&m, n, 2024).unwrap());
        let tol = 3.0 * (2.0 / n as f64).sqrt();
        assert!(linalg::max_abs_diff(&s, &DMatrix::identity(3, 3)) < tol);
    }

    #[test]
    fn empirical_spectral_at_truth() {
        let m = CovarianceModel::spiked(&[2.0, 1.0], 1.0, 5, Basis::Random { seed: 12 }).unwrap();
        for r in 1..=3 {
            let c = m.cluster(r).unwrap();
            let es = empirical_spectral(&m.dense(), c).unwrap();
            assert!(linalg::max_abs_diff(&es.p_hat_r, &m.projector(c)) < 1e-9);
            assert!((es.lambda_hat_r - m.lambda(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_spectral_sorts_permuted_diagonal() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 2.0]));
        let c = ClusterIndex::new(1, 0, 1).unwrap();
        let es = empirical_spectral(&s, c).unwrap();
        assert_eq!(es.eigenvalues_desc, vec![4.0, 2.0, 1.0]);
        let mut oracle = DMatrix::zeros(3, 3);
        oracle[(1, 1)] = 1.0;
        assert!(linalg::max_abs_diff(&es.p_hat_r, &oracle) < 1e-12);
        let c2 = ClusterIndex::new(2, 1, 2).unwrap();
        let es = empirical_spectral(&s, c2).unwrap();
        let mut oracle = DMatrix::zeros(3, 3);
        oracle[(0, 0)] = 1.0;
        oracle[(2, 2)] = 1.0;
        assert!(linalg::max_abs_diff(&es.p_hat_r, &oracle) < 1e-12);
        assert_eq!(es.lambda_hat_r, 2.0);
    }

    #[test]
    fn rank_deficient_reports_zero_lambda_min() {
        let m = CovarianceModel::decay(0.0, 6, Basis::Canonical).unwrap();
        let s = empirical_covariance(&sample(&m, 3, 1).unwrap());
        let es = empirical_spectral(&s, ClusterIndex::new(1, 0, 1).unwrap()).unwrap();
        assert!(es.lambda_hat_min.abs() < 1e-12);
    }

    #[test]
    fn cluster_outside_dimension_is_an_error() {
        let s = DMatrix::<f64>::identity(3, 3);
        assert!(empirical_spectral(&s, ClusterIndex::new(1, 2, 2).unwrap()).is_err());
    }

    #[test]
    fn batch_persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = CovarianceModel::spiked(&[1.0], 1.0, 3, Basis::Random { seed: 3 }).unwrap();
        let b = sample(&m, 7, 44).unwrap();
        let path = dir.path().join("batch.bin");
        b.save(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 7 * 3 * 8);
        let back = SampleBatch::load(&path).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn bartlett_moments_match_wishart() {
        // E W = I, Var W_ii = 2/n, Var W_ij = 1/n.
        let (p, n, reps) = (3, 10, 20_000);
        let draws: Vec<DMatrix<f64>> = (0..reps)
            .map(|i| draw_whitened_wishart(p, n, replication_seed(5, i)).unwrap())
            .collect();
        for (a, b, var) in [(0, 0, 2.0 / n as f64), (2, 2, 2.0 / n as f64), (1, 0, 1.0 / n as f64)] {
            let xs: Vec<f64> = draws.iter().map(|w| w[(a, b)]).collect();
            let (m, se) = crate::stats::mean_and_std_err(&xs);
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((m - target).abs() < 4.0 * se, "({a},{b}) mean {m}");
            let v = crate::stats::sample_variance(&xs);
            assert!((v / var - 1.0).abs() < 0.1, "({a},{b}) var {v}");
        }
        assert!(draw_whitened_wishart(4, 3, 1).is_err());
    }
}
