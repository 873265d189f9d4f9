use serde::{Deserialize, Serialize};

use crate::covmodel::{ClusterIndex, CovarianceModel};
use crate::error::{Error, Result};

/// Proxy check of the hypotheses behind the Gaussian approximation.
///
/// The unknown constants are all set to 1: `E‖Σ̂ - Σ‖` is replaced by
/// `‖Σ‖ √(r(Σ)/n)` and compared with `(1-γ) ḡ_r / 2`, and `λ_min` is compared
/// with `c √(max(r(Σ), log p) / n)`. The raw quantities are reported so a
/// caller can apply their own margins. Nothing here blocks a computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub p: usize,
    pub n: usize,
    pub effective_rank: f64,
    /// `r(Σ) / n`, which should be small.
    pub rank_ratio: f64,
    /// `ḡ_r`, absent for a single-cluster model.
    pub gap: Option<f64>,
    pub lambda_min: f64,
    pub gamma: f64,
    pub c_proxy: f64,
    /// `‖Σ‖ √(r(Σ)/n)`
    pub opnorm_proxy: f64,
    /// `(1-γ) ḡ_r / 2`
    pub gap_threshold: Option<f64>,
    /// `c √(max(r(Σ), log p) / n)`
    pub lambda_min_threshold: f64,
    pub cond_gap_ok: bool,
    pub cond_lambda_min_ok: bool,
    /// False when the model has no spectral gap at all.
    pub in_scope: bool,
    pub warnings: Vec<String>,
}

pub fn check_assumptions(
    model: &CovarianceModel,
    r: ClusterIndex,
    n: usize,
    gamma: f64,
    c_proxy: f64,
) -> Result<AssumptionReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(c_proxy > 0.0 && c_proxy.is_finite()) {
        return Err(Error::InvalidArgument(format!("c_proxy must be positive, got {c_proxy}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    model.check_cluster(r)?;
    let p = model.dim();
    let nf = n as f64;
    let effective_rank = model.effective_rank();
    let gap = model.spectral_gap(r).ok();
    let opnorm_proxy = model.op_norm() * (effective_rank / nf).sqrt();
    let gap_threshold = gap.map(|g| (1.0 - gamma) * g / 2.0);
    let lambda_min = model.lambda_min();
    let lambda_min_threshold = c_proxy * (effective_rank.max((p as f64).ln()) / nf).sqrt();

    let cond_gap_ok = gap_threshold.is_some_and(|t| opnorm_proxy <= t);
    let cond_lambda_min_ok = lambda_min >= lambda_min_threshold;
    let mut warnings = Vec::new();
    match gap_threshold {
        None => warnings.push(
            "model has a single distinct eigenvalue: spectral gap undefined, outside the theory".to_string(),
        ),
        Some(t) if !cond_gap_ok => warnings.push(format!(
            "operator-norm proxy {opnorm_proxy:.4e} exceeds (1-gamma) gap / 2 = {t:.4e}"
        )),
        _ => {}
    }
    if !cond_lambda_min_ok {
        warnings.push(format!(
            "lambda_min {lambda_min:.4e} below c sqrt(max(r, log p)/n) = {lambda_min_threshold:.4e}"
        ));
    }
    if effective_rank >= nf {
        warnings.push(format!("effective rank {effective_rank:.3} is not small relative to n = {n}"));
    }
    Ok(AssumptionReport {
        p,
        n,
        effective_rank,
        rank_ratio: effective_rank / nf,
        gap,
        lambda_min,
        gamma,
        c_proxy,
        opnorm_proxy,
        gap_threshold,
        lambda_min_threshold,
        cond_gap_ok,
        cond_lambda_min_ok,
        in_scope: gap.is_some(),
        warnings,
    })
}
