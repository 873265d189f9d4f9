//! Wald statistics for spectral projectors and the tests built from them.
//!
//! For a cluster `Δ_r` with multiplicity `m_r` the statistic is
//! `n ‖F (P̂_r - P_r)‖²_F` where `F` is either the true Fisher square root
//! `I(P_r)^{1/2}` or its plug-in estimate `Î(P̂_r)^{1/2}`. In fixed dimension it
//! is asymptotically `χ²` with `m_r (p - m_r)` degrees of freedom; as `p` grows
//! the normalized version `(raw - df) / √(2 df)` is asymptotically standard
//! normal, which is what the confidence ellipsoids use by default.

mod assumptions;
pub mod dist;

pub use assumptions::{check_assumptions, AssumptionReport};
pub use dist::{chisq_cdf, chisq_quantile, normal_cdf, normal_quantile};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{ClusterIndex, CovarianceModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::linops::{self, FisherOperator, OperatorKind};
use crate::perturb;
use crate::sampling;
use crate::stats;

/// Which Fisher square root whitens the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FisherVariant {
    True,
    Plugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    /// `n ‖F (P̂_r - P_r)‖²_F`
    pub raw: f64,
    /// `(raw - df) / √(2 df)`
    pub normalized: f64,
    pub df: usize,
    pub fisher_kind: FisherVariant,
}

pub fn normalize(raw: f64, df: usize) -> f64 {
    (raw - df as f64) / (2.0 * df as f64).sqrt()
}

fn check_square(m: &DMatrix<f64>, p: usize, what: &str) -> Result<()> {
    if m.nrows() != p || m.ncols() != p {
        return Err(Error::dims(
            format!("{p}x{p} {what}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn wald_statistic(
    fisher: &FisherOperator,
    p_hat_r: &DMatrix<f64>,
    p_r: &DMatrix<f64>,
    n: usize,
) -> Result<WaldResult> {
    let fisher_kind = match fisher.kind {
        OperatorKind::TrueFisherSqrt => FisherVariant::True,
        OperatorKind::PluginFisherSqrt => FisherVariant::Plugin,
        OperatorKind::LimitingCovariance => {
            return Err(Error::InvalidArgument(
                "the Wald statistic needs a Fisher square root, not the limiting covariance".into(),
            ))
        }
    };
    let p = fisher.dim();
    check_square(p_hat_r, p, "estimated projector")?;
    check_square(p_r, p, "projector")?;
    if fisher.df == 0 {
        return Err(Error::InvalidArgument("zero degrees of freedom".into()));
    }
    let whitened = fisher.apply(&(p_hat_r - p_r))?;
    let raw = n as f64 * linalg::frobenius_sq(&whitened);
    Ok(WaldResult {
        raw,
        normalized: normalize(raw, fisher.df),
        df: fisher.df,
        fisher_kind,
    })
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub reps: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, std_err) = stats::mean_and_std_err(xs);
        MeanEstimate {
            mean,
            std_err,
            reps: xs.len(),
        }
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_err
    }
}

/// Per-replication values of `n ‖I(P_r)^{1/2} L_r(Σ̂ - Σ)‖²_F`, whose mean is
/// exactly `m_r (p - m_r)`.
pub fn linear_term_statistics(
    model: &CovarianceModel,
    r: ClusterIndex,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let fisher = linops::fisher_sqrt(model, r)?;
    let sqrt = model.matrix_power(0.5);
    let sigma = model.dense();
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let draw = sampling::draw_covariance(&sqrt, n, sampling::replication_seed(seed, i as u64));
            let l = perturb::linear_term(model, r, &(draw.sigma_hat - &sigma))?;
            Ok(n as f64 * linalg::frobenius_sq(&fisher.apply(&l)?))
        })
        .collect()
}

/// Monte Carlo estimate of `n E‖I(P_r)^{1/2} L_r‖²_F`; compare with
/// `m_r (p - m_r)`.
pub fn linear_term_identity_check(
    model: &CovarianceModel,
    r: ClusterIndex,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    if reps < 2 {
        return Err(Error::Precondition("need at least 2 replications".into()));
    }
    Ok(MeanEstimate::from_samples(&linear_term_statistics(model, r, n, reps, seed)?))
}

/// Reference law used to calibrate a confidence ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Normalized statistic against `Φ^{-1}(1 - α)` (growing dimension).
    Gaussian,
    /// Raw statistic against `χ²_{df, 1-α}` (fixed dimension).
    ChiSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidTest {
    pub covered: bool,
    pub statistic: WaldResult,
    pub threshold: f64,
}

/// Threshold a statistic is compared against for level `alpha`.
pub fn ellipsoid_threshold(calibration: Calibration, alpha: f64, df: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    match calibration {
        Calibration::Gaussian => normal_quantile(1.0 - alpha),
        Calibration::ChiSquared => chisq_quantile(1.0 - alpha, df),
    }
}

/// Whether the statistic falls inside the ellipsoid. An exact match
/// (`raw == 0`) is always inside.
pub fn is_covered(statistic: &WaldResult, calibration: Calibration, threshold: f64) -> bool {
    statistic.raw == 0.0
        || match calibration {
            Calibration::Gaussian => statistic.normalized <= threshold,
            Calibration::ChiSquared => statistic.raw <= threshold,
        }
}

/// Tests whether `candidate` lies in the level-`1 - alpha` confidence
/// ellipsoid for `P_r` centred at `p_hat_r`.
pub fn confidence_ellipsoid_test(
    fisher: &FisherOperator,
    p_hat_r: &DMatrix<f64>,
    candidate: &DMatrix<f64>,
    n: usize,
    alpha: f64,
    calibration: Calibration,
) -> Result<EllipsoidTest> {
    let threshold = ellipsoid_threshold(calibration, alpha, fisher.df)?;
    if !linalg::is_symmetric(candidate, 1e-10) {
        return Err(Error::InvalidArgument("candidate projector must be symmetric".into()));
    }
    let statistic = wald_statistic(fisher, p_hat_r, candidate, n)?;
    Ok(EllipsoidTest {
        covered: is_covered(&statistic, calibration, threshold),
        statistic,
        threshold,
    })
}
