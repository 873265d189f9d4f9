use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use super::ks::{ks_distance, Reference};
use crate::covmodel::{ClusterIndex, CovarianceModel};
use crate::error::{Error, Result};
use crate::inference::{self, AssumptionReport, Calibration, FisherVariant, WaldResult};
use crate::linalg;
use crate::linops::{self, FisherOperator};
use crate::perturb::{self, BoundRow, OpNormSummary};
use crate::sampling;
use crate::stats;

/// Persisted per-replication values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub raw: f64,
    pub normalized: f64,
    pub covered: bool,
}

/// One grid point of a bias sweep. `bias` is the control-variate estimate
/// of `E[raw] - df`; `naive_bias` is the plain `mean(raw) - df`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub n: usize,
    pub p: usize,
    pub df: usize,
    pub reps: usize,
    pub bias: f64,
    pub std_err: f64,
    pub naive_bias: f64,
    pub naive_std_err: f64,
    /// `√(2 df) (√p r(Σ)/n + r(Σ)² / (n √p λ_min))`
    pub predicted_scale: f64,
    /// `bias / predicted_scale`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub mode: Mode,
    pub p: usize,
    pub r: usize,
    pub n: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub fisher_kind: FisherVariant,
    pub alpha: f64,
    pub calibration: Calibration,
    pub df: Option<usize>,
    pub ks_reference: Option<Reference>,
    /// Distance of the empirical law of the normalized statistic to `Φ`
    /// (`ks_gaussian`, `coverage`) or of the raw statistic to `χ²_df`
    /// (`ks_chisq`).
    pub ks_distance: Option<f64>,
    pub coverage_threshold: Option<f64>,
    pub empirical_coverage: Option<f64>,
    pub mean_raw: Option<f64>,
    pub mean_normalized: Option<f64>,
    pub var_normalized: Option<f64>,
    pub bias_table: Vec<BiasRow>,
    pub opnorm_table: Vec<OpNormSummary>,
    pub bound_violations: Option<usize>,
    pub assumptions: Option<AssumptionReport>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub replications: Vec<Replication>,
    pub bound_rows: Vec<BoundRow>,
    pub summary: ExperimentSummary,
}

/// Runs an experiment. All preconditions are checked before the first
/// replication, and every persisted value depends only on the config.
pub fn run(config: &ExperimentConfig) -> Result<Experiment> {
    let model = config.validate()?;
    match super::configured_pool()? {
        Some(pool) => pool.install(|| run_validated(config, &model)),
        None => run_validated(config, &model),
    }
}

fn run_validated(config: &ExperimentConfig, model: &CovarianceModel) -> Result<Experiment> {
    let start = Instant::now();
    let cluster = model.cluster(config.r)?;
    let mut summary = ExperimentSummary {
        mode: config.mode,
        p: model.dim(),
        r: config.r,
        n: config.n,
        reps: config.reps,
        base_seed: config.base_seed,
        fisher_kind: config.fisher_kind,
        alpha: config.alpha,
        calibration: config.calibration,
        df: None,
        ks_reference: None,
        ks_distance: None,
        coverage_threshold: None,
        empirical_coverage: None,
        mean_raw: None,
        mean_normalized: None,
        var_normalized: None,
        bias_table: Vec::new(),
        opnorm_table: Vec::new(),
        bound_violations: None,
        assumptions: None,
        runtime_seconds: 0.0,
    };
    let mut replications = Vec::new();
    let mut bound_rows = Vec::new();

    match config.mode {
        Mode::KsGaussian | Mode::KsChisq | Mode::Coverage => {
            let pipeline = Pipeline::new(model, cluster, config)?;
            replications = (0..config.reps)
                .into_par_iter()
                .map(|rep| pipeline.replicate(rep, config.base_seed))
                .collect::<Result<Vec<_>>>()?;
            let df = pipeline.df;
            let raw: Vec<f64> = replications.iter().map(|r| r.raw).collect();
            let normalized: Vec<f64> = replications.iter().map(|r| r.normalized).collect();
            let (samples, reference) = match config.mode {
                Mode::KsChisq => (&raw, Reference::ChiSquared { df }),
                _ => (&normalized, Reference::Gaussian),
            };
            summary.df = Some(df);
            summary.ks_reference = Some(reference);
            summary.ks_distance = Some(ks_distance(samples, reference)?);
            summary.coverage_threshold = Some(pipeline.threshold);
            summary.empirical_coverage =
                Some(replications.iter().filter(|r| r.covered).count() as f64 / config.reps as f64);
            summary.mean_raw = Some(stats::mean(&raw));
            summary.mean_normalized = Some(stats::mean(&normalized));
            summary.var_normalized = Some(stats::sample_variance(&normalized));
            summary.assumptions = Some(inference::check_assumptions(
                model,
                cluster,
                config.n,
                config.gamma,
                config.c_proxy,
            )?);
        }
        Mode::BiasSweep => summary.bias_table = bias_sweep_validated(config)?,
        Mode::PerturbCheck => {
            bound_rows = perturb::bound_sweep(model, config.reps, config.base_seed)?;
            summary.bound_violations = Some(bound_rows.iter().filter(|b| !b.report.pass()).count());
        }
        Mode::OpnormCheck => {
            summary.opnorm_table = config
                .n_values()
                .into_iter()
                .enumerate()
                .map(|(i, n)| {
                    let seed = sampling::replication_seed(config.base_seed, i as u64);
                    perturb::opnorm_concentration_check(model, n, config.reps, seed)
                })
                .collect::<Result<_>>()?;
        }
    }
    summary.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(Experiment {
        config: config.clone(),
        replications,
        bound_rows,
        summary,
    })
}

/// Everything a replication needs that does not depend on its seed.
struct Pipeline {
    cluster: ClusterIndex,
    n: usize,
    sqrt: DMatrix<f64>,
    p_r: DMatrix<f64>,
    true_fisher: Option<FisherOperator>,
    calibration: Calibration,
    threshold: f64,
    df: usize,
}

impl Pipeline {
    fn new(model: &CovarianceModel, cluster: ClusterIndex, config: &ExperimentConfig) -> Result<Self> {
        let df = cluster.degrees_of_freedom(model.dim());
        let true_fisher = match config.fisher_kind {
            FisherVariant::True => Some(linops::fisher_sqrt(model, cluster)?),
            FisherVariant::Plugin => None,
        };
        Ok(Pipeline {
            cluster,
            n: config.n,
            sqrt: model.matrix_power(0.5),
            p_r: model.projector(cluster),
            true_fisher,
            calibration: config.calibration,
            threshold: inference::ellipsoid_threshold(config.calibration, config.alpha, df)?,
            df,
        })
    }

    fn statistic(&self, seed: u64) -> Result<WaldResult> {
        let draw = sampling::draw_covariance(&self.sqrt, self.n, seed);
        let es = sampling::empirical_spectral(&draw.sigma_hat, self.cluster)?;
        match &self.true_fisher {
            Some(f) => inference::wald_statistic(f, &es.p_hat_r, &self.p_r, self.n),
            None => inference::wald_statistic(&linops::plugin_from_spectral(&es)?, &es.p_hat_r, &self.p_r, self.n),
        }
    }

    fn replicate(&self, rep: usize, base_seed: u64) -> Result<Replication> {
        let seed = sampling::replication_seed(base_seed, rep as u64);
        let w = self.statistic(seed)?;
        Ok(Replication {
            rep,
            seed,
            raw: w.raw,
            normalized: w.normalized,
            covered: inference::is_covered(&w, self.calibration, self.threshold),
        })
    }
}

/// Bias table over the `(p, n)` grid of a `bias_sweep` config.
pub fn bias_sweep(config: &ExperimentConfig) -> Result<Vec<BiasRow>> {
    if config.mode != Mode::BiasSweep {
        return Err(Error::Precondition("bias_sweep needs mode = bias_sweep".into()));
    }
    config.validate()?;
    match super::configured_pool()? {
        Some(pool) => pool.install(|| bias_sweep_validated(config)),
        None => bias_sweep_validated(config),
    }
}

fn bias_sweep_validated(config: &ExperimentConfig) -> Result<Vec<BiasRow>> {
    let mut rows = Vec::new();
    let mut point = 0u64;
    for p in config.p_values() {
        let model = config.model.with_dimension(p)?.build()?;
        let cluster = model.cluster(config.r)?;
        for n in config.n_values() {
            let seed = sampling::replication_seed(config.base_seed, point);
            rows.push(bias_point(&model, cluster, n, config.reps, seed)?);
            point += 1;
        }
    }
    Ok(rows)
}

/// Raw statistic and its exact-mean control variate for one replication.
///
/// With `Σ̂ = Σ^{1/2} W Σ^{1/2}` the linear term satisfies
/// `n ‖I^{1/2} L_r‖²_F = n ‖(I - P_r) W P_r‖²_F`, whose mean is exactly `df`,
/// so `raw - n ‖(I - P_r) W P_r‖²_F` is an unbiased estimate of `E[raw] - df`
/// with far smaller variance than `raw - df`.
pub fn bias_replication(
    model: &CovarianceModel,
    cluster: ClusterIndex,
    fisher: &FisherOperator,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let p = model.dim();
    let sqrt = model.matrix_power(0.5);
    let p_r = model.projector(cluster);
    let w = sampling::draw_whitened_wishart(p, n, seed)?;
    let sigma_hat = linalg::symmetrize(&(&sqrt * &w * &sqrt));
    let es = sampling::empirical_spectral(&sigma_hat, cluster)?;
    let raw = inference::wald_statistic(fisher, &es.p_hat_r, &p_r, n)?.raw;
    let q = DMatrix::identity(p, p) - &p_r;
    let control = n as f64 * linalg::frobenius_sq(&(q * w * p_r));
    Ok((raw, control))
}

fn bias_point(model: &CovarianceModel, cluster: ClusterIndex, n: usize, reps: usize, seed: u64) -> Result<BiasRow> {
    let p = model.dim();
    let df = cluster.degrees_of_freedom(p);
    let fisher = linops::fisher_sqrt(model, cluster)?;
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|i| bias_replication(model, cluster, &fisher, n, sampling::replication_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let naive: Vec<f64> = pairs.iter().map(|&(raw, _)| raw - df as f64).collect();
    let corrected: Vec<f64> = pairs.iter().map(|&(raw, cv)| raw - cv).collect();
    let (naive_bias, naive_std_err) = stats::mean_and_std_err(&naive);
    let (bias, std_err) = stats::mean_and_std_err(&corrected);
    let predicted_scale = predicted_bias_scale(model, n, df);
    Ok(BiasRow {
        n,
        p,
        df,
        reps,
        bias,
        std_err,
        naive_bias,
        naive_std_err,
        predicted_scale,
        ratio: bias / predicted_scale,
    })
}

/// Order of magnitude of `E[raw] - df`: the two leading mean terms of the
/// normalized statistic, `√p r(Σ)/n` and `r(Σ)²/(n √p λ_min)`, scaled back by
/// `√(2 df)`.
pub fn predicted_bias_scale(model: &CovarianceModel, n: usize, df: usize) -> f64 {
    let p = model.dim() as f64;
    let r = model.effective_rank();
    let n = n as f64;
    (2.0 * df as f64).sqrt() * (p.sqrt() * r / n + r * r / (n * p.sqrt() * model.lambda_min()))
}
