use serde::{Deserialize, Serialize};

use crate::covmodel::{CovarianceModel, ModelSpec};
use crate::error::{Error, Result};
use crate::inference::{Calibration, FisherVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    KsGaussian,
    KsChisq,
    Coverage,
    BiasSweep,
    PerturbCheck,
    OpnormCheck,
}

impl Mode {
    /// Modes that run the sample → estimate → Wald pipeline per replication.
    pub fn is_simulation(&self) -> bool {
        matches!(self, Mode::KsGaussian | Mode::KsChisq | Mode::Coverage)
    }
}

fn default_r() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

fn default_fisher() -> FisherVariant {
    FisherVariant::True
}

fn default_gamma() -> f64 {
    0.5
}

fn default_c_proxy() -> f64 {
    1.0
}

fn default_calibration() -> Calibration {
    Calibration::Gaussian
}

/// One Monte Carlo experiment. Readable from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Rank of the distinct eigenvalue under study, starting at 1.
    #[serde(default = "default_r")]
    pub r: usize,
    pub n: usize,
    /// Replications; in `perturb_check` mode, perturbations per ensemble.
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_fisher")]
    pub fisher_kind: FisherVariant,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub mode: Mode,
    /// Law the per-replication coverage decision is calibrated against.
    #[serde(default = "default_calibration")]
    pub calibration: Calibration,
    /// Sample sizes for `bias_sweep` and `opnorm_check`; empty means `[n]`.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    /// Dimensions for `bias_sweep`; empty means the model's own `p`.
    #[serde(default)]
    pub p_grid: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_c_proxy")]
    pub c_proxy: f64,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_values(&self) -> Vec<usize> {
        if self.n_grid.is_empty() {
            vec![self.n]
        } else {
            self.n_grid.clone()
        }
    }

    pub fn p_values(&self) -> Vec<usize> {
        if self.p_grid.is_empty() {
            vec![self.model.p]
        } else {
            self.p_grid.clone()
        }
    }

    /// Checks everything that can be checked without running a replication
    /// and returns the model.
    pub fn validate(&self) -> Result<CovarianceModel> {
        let model = self.model.build()?;
        let p = model.dim();
        model.cluster(self.r)?;
        if self.n == 0 && self.n_grid.is_empty() {
            return Err(Error::Precondition("n must be positive".into()));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::Precondition("n_grid entries must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Precondition(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        match self.mode {
            Mode::KsGaussian | Mode::KsChisq | Mode::Coverage => {
                if self.reps < 2 {
                    return Err(Error::Precondition(format!("reps must be at least 2, got {}", self.reps)));
                }
                if model.num_clusters() < 2 {
                    return Err(Error::SingleCluster);
                }
                if self.fisher_kind == FisherVariant::Plugin && self.n < p {
                    return Err(Error::Precondition(format!(
                        "plug-in Fisher needs n >= p, got n = {}, p = {p}",
                        self.n
                    )));
                }
            }
            Mode::BiasSweep => {
                if self.reps < 2 {
                    return Err(Error::Precondition(format!("reps must be at least 2, got {}", self.reps)));
                }
                if self.fisher_kind != FisherVariant::True {
                    return Err(Error::Precondition("bias_sweep runs with the true Fisher operator".into()));
                }
                if self.n_grid.is_empty() && self.p_grid.is_empty() {
                    return Err(Error::Precondition("bias_sweep needs n_grid and/or p_grid".into()));
                }
                for (name, grid) in [("n_grid", &self.n_grid), ("p_grid", &self.p_grid)] {
                    if grid.len() == 1 {
                        return Err(Error::Precondition(format!("{name} needs at least 2 points")));
                    }
                }
                if model.num_clusters() < 2 {
                    return Err(Error::SingleCluster);
                }
                for q in self.p_values() {
                    let m = self.model.with_dimension(q)?.build()?;
                    let c = m.cluster(self.r)?;
                    if c.positions().end == q {
                        return Err(Error::Precondition(format!(
                            "cluster {} fills the whole spectrum at p = {q}",
                            self.r
                        )));
                    }
                    for n in self.n_values() {
                        if n < q {
                            return Err(Error::Precondition(format!("bias_sweep needs n >= p, got n = {n}, p = {q}")));
                        }
                    }
                }
            }
            Mode::PerturbCheck => {
                if self.reps < 1 {
                    return Err(Error::Precondition("reps must be at least 1".into()));
                }
                if model.num_clusters() < 2 {
                    return Err(Error::SingleCluster);
                }
            }
            Mode::OpnormCheck => {
                if self.reps < 100 {
                    return Err(Error::Precondition(format!(
                        "opnorm_check needs at least 100 replications, got {}",
                        self.reps
                    )));
                }
                for n in self.n_values() {
                    if model.effective_rank() >= n as f64 {
                        return Err(Error::Precondition(format!(
                            "effective rank {} must be below n = {n}",
                            model.effective_rank()
                        )));
                    }
                }
            }
        }
        Ok(model)
    }
}
