//! Covariance matrices described by their spectral decomposition.
//!
//! A [`CovarianceModel`] stores the distinct eigenvalues `λ_1 > … > λ_k > 0`,
//! their multiplicities and an orthogonal eigenbasis whose columns are grouped
//! by cluster in descending eigenvalue order. Everything derived from the
//! spectrum (projectors, gaps, powers of `Σ`) is therefore exact up to the
//! rounding of the eigenbasis itself; a dense `Σ` is only formed on request.
//!
//! Two named families are provided: the spiked model
//! `Σ = Σ_i s_i θ_i θ_iᵀ + σ² I_p` and the polynomial decay model
//! `λ_i = i^{-α}`.

use std::io::Write;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Serializable description of a model: `{kind, params, seed, p}`.
///
/// A `seed` of `None` selects the canonical (axis-aligned) eigenbasis,
/// otherwise the basis is a Haar orthogonal matrix drawn from that seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: ModelFamily,
    #[serde(default)]
    pub seed: Option<u64>,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ModelFamily {
    Spiked { spikes: Vec<f64>, sigma2: f64 },
    Decay { alpha: f64 },
    Custom { eigenvalues: Vec<f64>, multiplicities: Vec<usize> },
}

impl ModelSpec {
    pub fn build(&self) -> Result<CovarianceModel> {
        let basis = match self.seed {
            Some(seed) => Basis::Random { seed },
            None => Basis::Canonical,
        };
        match &self.family {
            ModelFamily::Spiked { spikes, sigma2 } => {
                CovarianceModel::spiked(spikes, *sigma2, self.p, basis)
            }
            ModelFamily::Decay { alpha } => CovarianceModel::decay(*alpha, self.p, basis),
            ModelFamily::Custom {
                eigenvalues,
                multiplicities,
            } => {
                let total: usize = multiplicities.iter().sum();
                if total != self.p {
                    return Err(Error::InvalidModel(format!(
                        "multiplicities sum to {total} but p = {}",
                        self.p
                    )));
                }
                CovarianceModel::from_clusters(eigenvalues, multiplicities, basis)
            }
        }
    }

    /// Same family and seed in a different dimension. Custom models have a
    /// fixed dimension and cannot be resized.
    pub fn with_dimension(&self, p: usize) -> Result<ModelSpec> {
        if let ModelFamily::Custom { .. } = self.family {
            if p != self.p {
                return Err(Error::InvalidArgument(
                    "custom models cannot change dimension".into(),
                ));
            }
        }
        Ok(ModelSpec { p, ..self.clone() })
    }
}

/// Choice of eigenbasis at construction.
#[derive(Debug, Clone)]
pub enum Basis {
    /// Standard basis vectors; `Σ` is diagonal.
    Canonical,
    /// Orthonormalized seeded standard Gaussian matrix.
    Random { seed: u64 },
    /// Caller-supplied orthogonal matrix (not serializable).
    Explicit(DMatrix<f64>),
}

/// A distinct eigenvalue together with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

/// Identifies the `r`-th distinct eigenvalue (1-based) and the contiguous run
/// of sorted-eigenvalue positions `Δ_r` carrying it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterIndex {
    r: usize,
    start: usize,
    len: usize,
}

impl ClusterIndex {
    /// Builds an index directly from positions, for use with matrices that do
    /// not come from a [`CovarianceModel`]. `start` is 0-based.
    pub fn new(r: usize, start: usize, len: usize) -> Result<Self> {
        if r == 0 || len == 0 {
            return Err(Error::InvalidArgument(
                "cluster rank and multiplicity must be positive".into(),
            ));
        }
        Ok(ClusterIndex { r, start, len })
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    /// 0-based sorted-eigenvalue positions `Δ_r`.
    pub fn positions(&self) -> Range<usize> {
        self.start..self.start + self.len
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// `m_r = card(Δ_r)`.
    pub fn multiplicity(&self) -> usize {
        self.len
    }

    /// Degrees of freedom `m_r (p - m_r)` of the Wald statistic.
    pub fn degrees_of_freedom(&self, p: usize) -> usize {
        self.len * (p - self.len)
    }

    pub(crate) fn check_dimension(&self, p: usize) -> Result<()> {
        if self.start + self.len > p {
            return Err(Error::dims(
                format!("positions within 0..{p}"),
                format!("{:?}", self.positions()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceModel {
    spec: ModelSpec,
    clusters: Vec<Cluster>,
    basis: DMatrix<f64>,
    explicit_basis: bool,
    /// `μ_1 ≥ … ≥ μ_p`, eigenvalues repeated with multiplicity.
    mu: Vec<f64>,
}

impl CovarianceModel {
    /// Spiked covariance `Σ_i s_i θ_i θ_iᵀ + σ² I_p`; `θ_i` are the first
    /// columns of the basis. Equal spikes merge into one cluster.
    pub fn spiked(spikes: &[f64], sigma2: f64, p: usize, basis: Basis) -> Result<Self> {
        if spikes.len() >= p {
            return Err(Error::InvalidModel(format!(
                "number of spikes ({}) must be smaller than p ({p})",
                spikes.len()
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidModel(format!("sigma2 must be positive, got {sigma2}")));
        }
        if let Some(s) = spikes.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidModel(format!("spikes must be positive, got {s}")));
        }
        let mut values: Vec<f64> = spikes.iter().map(|s| s + sigma2).collect();
        values.extend(std::iter::repeat_n(sigma2, p - spikes.len()));
        let spec = ModelSpec {
            family: ModelFamily::Spiked {
                spikes: spikes.to_vec(),
                sigma2,
            },
            seed: None,
            p,
        };
        Self::from_values(spec, values, basis)
    }

    /// Eigenvalues `λ_i = i^{-α}`, `i = 1..p`; `α = 0` is the identity.
    pub fn decay(alpha: f64, p: usize, basis: Basis) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidModel("p must be positive".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidModel(format!("alpha must be nonnegative, got {alpha}")));
        }
        let values = (1..=p).map(|i| (i as f64).powf(-alpha)).collect();
        let spec = ModelSpec {
            family: ModelFamily::Decay { alpha },
            seed: None,
            p,
        };
        Self::from_values(spec, values, basis)
    }

    /// Model from strictly descending distinct eigenvalues and multiplicities.
    pub fn from_clusters(eigenvalues: &[f64], multiplicities: &[usize], basis: Basis) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != multiplicities.len() {
            return Err(Error::InvalidModel(
                "need one multiplicity per distinct eigenvalue".into(),
            ));
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidModel("multiplicities must be positive".into()));
        }
        if !eigenvalues.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::InvalidModel(
                "distinct eigenvalues must be strictly descending".into(),
            ));
        }
        if !eigenvalues.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidModel("eigenvalues must be positive".into()));
        }
        let p = multiplicities.iter().sum();
        let values = eigenvalues
            .iter()
            .zip(multiplicities)
            .flat_map(|(v, m)| std::iter::repeat_n(*v, *m))
            .collect();
        let spec = ModelSpec {
            family: ModelFamily::Custom {
                eigenvalues: eigenvalues.to_vec(),
                multiplicities: multiplicities.to_vec(),
            },
            seed: None,
            p,
        };
        Self::from_values(spec, values, basis)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(json)?;
        spec.build()
    }

    pub fn to_json(&self) -> Result<String> {
        if self.explicit_basis {
            return Err(Error::NotSerializable(
                "explicit eigenbasis cannot be described by a seed".into(),
            ));
        }
        Ok(serde_json::to_string_pretty(&self.spec)?)
    }

    fn from_values(mut spec: ModelSpec, mut values: Vec<f64>, basis: Basis) -> Result<Self> {
        let p = values.len();
        values.sort_by(|a, b| b.total_cmp(a));
        // Inputs are exact, so clusters are formed by exact equality.
        let mut clusters: Vec<Cluster> = Vec::new();
        for &v in &values {
            match clusters.last_mut() {
                Some(c) if c.value == v => c.multiplicity += 1,
                _ => clusters.push(Cluster {
                    value: v,
                    multiplicity: 1,
                }),
            }
        }
        let (basis, explicit_basis) = match basis {
            Basis::Canonical => (DMatrix::identity(p, p), false),
            Basis::Random { seed } => {
                spec.seed = Some(seed);
                (linalg::random_orthogonal(p, seed), false)
            }
            Basis::Explicit(b) => {
                if b.nrows() != p || b.ncols() != p {
                    return Err(Error::dims(
                        format!("{p}x{p} basis"),
                        format!("{}x{}", b.nrows(), b.ncols()),
                    ));
                }
                let gram = b.transpose() * &b;
                if linalg::max_abs_diff(&gram, &DMatrix::identity(p, p)) > 1e-10 {
                    return Err(Error::InvalidModel("basis is not orthogonal".into()));
                }
                (b, true)
            }
        };
        Ok(CovarianceModel {
            spec,
            clusters,
            basis,
            explicit_basis,
            mu: values,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// `μ_1 ≥ … ≥ μ_p`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    pub fn eigenbasis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `λ_r` for a 1-based cluster rank.
    pub fn lambda(&self, r: ClusterIndex) -> f64 {
        self.clusters[r.rank() - 1].value
    }

    /// `‖Σ‖ = λ_1`.
    pub fn op_norm(&self) -> f64 {
        self.clusters[0].value
    }

    pub fn lambda_min(&self) -> f64 {
        self.clusters[self.clusters.len() - 1].value
    }

    pub fn trace(&self) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.value * c.multiplicity as f64)
            .sum()
    }

    pub fn cluster(&self, r: usize) -> Result<ClusterIndex> {
        if r == 0 || r > self.clusters.len() {
            return Err(Error::ClusterOutOfRange {
                r,
                clusters: self.clusters.len(),
            });
        }
        let start = self.clusters[..r - 1].iter().map(|c| c.multiplicity).sum();
        Ok(ClusterIndex {
            r,
            start,
            len: self.clusters[r - 1].multiplicity,
        })
    }

    /// Effective rank `trace(Σ) / ‖Σ‖`, between 1 and p.
    pub fn effective_rank(&self) -> f64 {
        self.trace() / self.op_norm()
    }

    /// `ḡ_r = min(λ_{r-1} - λ_r, λ_r - λ_{r+1})` with `λ_0 = ∞`.
    pub fn spectral_gap(&self, r: ClusterIndex) -> Result<f64> {
        let k = self.clusters.len();
        if k == 1 {
            return Err(Error::SingleCluster);
        }
        self.check_cluster(r)?;
        let i = r.rank() - 1;
        let lam = self.clusters[i].value;
        let below = (i + 1 < k).then(|| lam - self.clusters[i + 1].value);
        let above = (i > 0).then(|| self.clusters[i - 1].value - lam);
        Ok(match (above, below) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("k > 1"),
        })
    }

    /// Spectral projector `P_r = Σ_{j ∈ Δ_r} θ_j θ_jᵀ`.
    pub fn projector(&self, r: ClusterIndex) -> DMatrix<f64> {
        let cols = self.basis.columns(r.start, r.len);
        cols * cols.transpose()
    }

    /// `Σ^e = Σ_s λ_s^e P_s`. Eigenvalues are positive, so any real exponent
    /// is well defined.
    pub fn matrix_power(&self, exponent: f64) -> DMatrix<f64> {
        if exponent == 1.0 {
            return self.dense();
        }
        self.spectral_map(|_, mu| mu.powf(exponent))
    }

    /// Dense `Σ`.
    pub fn dense(&self) -> DMatrix<f64> {
        self.spectral_map(|_, mu| mu)
    }

    /// `Σ_j f(j, μ_j) θ_j θ_jᵀ` over sorted positions `j`.
    pub fn spectral_map(&self, f: impl Fn(usize, f64) -> f64) -> DMatrix<f64> {
        linalg::spectral_map(&self.basis, &self.mu, f)
    }

    pub(crate) fn check_cluster(&self, r: ClusterIndex) -> Result<()> {
        let expected = self.cluster(r.rank())?;
        if expected != r {
            return Err(Error::InvalidArgument(format!(
                "cluster index {r:?} does not match model cluster {expected:?}"
            )));
        }
        Ok(())
    }
}

/// Row-major CSV dump of a matrix at full (round-trip) precision.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
