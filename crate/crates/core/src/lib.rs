//! Wald-statistic inference for spectral projectors of a covariance matrix.
//!
//! Given `n` Gaussian observations with covariance `Σ` and a distinct
//! eigenvalue `λ_r` of multiplicity `m_r`, the statistic
//! `n ‖I(P_r)^{1/2} (P̂_r - P_r)‖²_F` measures how far the empirical spectral
//! projector `P̂_r` is from the true `P_r` in the metric of the Fisher
//! information. It is approximately `χ²` with `m_r (p - m_r)` degrees of
//! freedom in fixed dimension and approximately Gaussian after centring and
//! scaling when `p` grows, which yields tests and confidence ellipsoids for
//! `P_r`.
//!
//! ```
//! use pca_wald::{covmodel::{Basis, CovarianceModel}, inference, linops, sampling};
//!
//! let model = CovarianceModel::spiked(&[4.0], 1.0, 5, Basis::Random { seed: 1 })?;
//! let r = model.cluster(1)?;
//! let batch = sampling::sample(&model, 2000, 7)?;
//! let sigma_hat = sampling::empirical_covariance(&batch);
//! let es = sampling::empirical_spectral(&sigma_hat, r)?;
//! let fisher = linops::fisher_sqrt(&model, r)?;
//! let w = inference::wald_statistic(&fisher, &es.p_hat_r, &model.projector(r), 2000)?;
//! assert_eq!(w.df, 4);
//! # Ok::<(), pca_wald::Error>(())
//! ```
//!
//! Modules, bottom up: [`covmodel`] (models given by their spectrum),
//! [`sampling`] (seeded Gaussian data and `Σ̂`), [`linops`] (Kronecker-form
//! Fisher operators), [`perturb`] (projector perturbation expansion and its
//! bounds), [`inference`] (Wald statistics, distribution functions, coverage)
//! and [`mc`] (Monte Carlo experiments).

pub mod covmodel;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod linops;
pub mod mc;
pub mod perturb;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/wald.md")]
    mod wald {}
    #[doc = include_str!("../../../book/src/perturbation.md")]
    mod perturbation {}
    #[doc = include_str!("../../../book/src/assumptions.md")]
    mod assumptions {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
