//! Perturbation expansion of spectral projectors.
//!
//! For `Σ̃ = Σ + E`, the projector `P̃_r` onto the sorted eigenvalue positions
//! `Δ_r` of `Σ̃` splits as
//!
//! ```text
//! P̃_r - P_r = L_r(E) + S_r(E),        L_r(E) = C_r E P_r + P_r E C_r
//! S_r(E)    = Z_r(E) + R_r(E)
//! ```
//!
//! where `Z_r` is the explicit second-order term. With `x = ‖E‖ / ḡ_r` the
//! deterministic bounds
//!
//! ```text
//! ‖P̃_r - P_r‖ ≤ 4x,    ‖S_r(E)‖ ≤ 14x²,    ‖R_r(E)‖ ≤ 72x³
//! ```
//!
//! hold for every symmetric `E`. `S_r` and `R_r` are computed here as exact
//! residuals of the dense eigendecomposition, and [`check_bounds`] compares
//! them against those inequalities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{ClusterIndex, CovarianceModel};
use crate::error::{Error, Result};
use crate::linalg::{self, SortedEigen};
use crate::linops;
use crate::sampling;

/// Slack allowed before a bound counts as violated.
pub const BOUND_TOLERANCE: f64 = 1e-8;

fn check_perturbation(model: &CovarianceModel, e: &DMatrix<f64>) -> Result<()> {
    let p = model.dim();
    if e.nrows() != p || e.ncols() != p {
        return Err(Error::dims(
            format!("{p}x{p}"),
            format!("{}x{}", e.nrows(), e.ncols()),
        ));
    }
    if !linalg::is_symmetric(e, 1e-12 * e.amax().max(1.0)) {
        return Err(Error::InvalidArgument("perturbation must be symmetric".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PerturbedProjector {
    pub projector: DMatrix<f64>,
    /// Set when `‖E‖ ≥ ḡ_r / 2`: the positions `Δ_r` of `Σ + E` need not
    /// correspond to the cluster any more.
    pub cluster_warning: bool,
}

/// Spectral projector of `Σ + E` onto the eigenvectors at positions `Δ_r`.
pub fn perturbed_projector(
    model: &CovarianceModel,
    r: ClusterIndex,
    e: &DMatrix<f64>,
) -> Result<PerturbedProjector> {
    check_perturbation(model, e)?;
    model.check_cluster(r)?;
    let gap = model.spectral_gap(r).ok();
    let norm_e = linalg::sym_op_norm(e);
    // The unperturbed projector is known exactly; an eigensolve would only add rounding.
    let projector = if e.iter().all(|&v| v == 0.0) {
        model.projector(r)
    } else {
        SortedEigen::new(&(model.dense() + e))?.projector(r.start(), r.multiplicity())
    };
    Ok(PerturbedProjector {
        projector,
        cluster_warning: gap.is_some_and(|g| norm_e >= g / 2.0),
    })
}

/// `L_r(E) = C_r E P_r + P_r E C_r`.
pub fn linear_term(model: &CovarianceModel, r: ClusterIndex, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_perturbation(model, e)?;
    let c = linops::resolvent(model, r)?;
    let p = model.projector(r);
    Ok(linear_from_parts(&c, &p, e))
}

fn linear_from_parts(c: &DMatrix<f64>, p: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let cep = c * e * p;
    let pec = cep.transpose();
    cep + pec
}

/// `Z_r(E) = P E C E C + C E C E P + C E P E C - P E P E C² - P E C² E P - C² E P E P`.
pub fn second_order_term(
    model: &CovarianceModel,
    r: ClusterIndex,
    e: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_perturbation(model, e)?;
    let c = linops::resolvent(model, r)?;
    let p = model.projector(r);
    Ok(second_order_from_parts(&c, &p, e))
}

fn second_order_from_parts(c: &DMatrix<f64>, p: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let c2 = c * c;
    let pec = p * e * c;
    let cec = c * e * c;
    let cep = c * e * p;
    let pep = p * e * p;
    let pe = p * e;
    &pec * e * c + &cec * e * p + &cep * e * c
        - &pep * e * &c2
        - &pe * &c2 * e * p
        - &c2 * e * &pep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionNorms {
    pub e: f64,
    /// `‖P̃_r - P_r‖`
    pub projector_diff: f64,
    pub linear: f64,
    pub second_order: f64,
    pub nonlinear: f64,
    pub remainder: f64,
}

/// `E` together with every term of the expansion and their operator norms.
#[derive(Debug, Clone)]
pub struct PerturbationExpansion {
    pub e: DMatrix<f64>,
    pub cluster: ClusterIndex,
    pub projector_diff: DMatrix<f64>,
    /// `L_r(E)`
    pub linear: DMatrix<f64>,
    /// `Z_r(E)`
    pub second_order: DMatrix<f64>,
    /// `S_r(E) = (P̃_r - P_r) - L_r(E)`
    pub nonlinear: DMatrix<f64>,
    /// `R_r(E) = S_r(E) - Z_r(E)`
    pub remainder: DMatrix<f64>,
    pub norms: ExpansionNorms,
    pub gap: f64,
    pub cluster_warning: bool,
}

pub fn expand(model: &CovarianceModel, r: ClusterIndex, e: &DMatrix<f64>) -> Result<PerturbationExpansion> {
    let gap = model.spectral_gap(r)?;
    let perturbed = perturbed_projector(model, r, e)?;
    let c = linops::resolvent(model, r)?;
    let p = model.projector(r);
    let projector_diff = &perturbed.projector - &p;
    let linear = linear_from_parts(&c, &p, e);
    let second_order = second_order_from_parts(&c, &p, e);
    let nonlinear = &projector_diff - &linear;
    let remainder = &nonlinear - &second_order;
    let norms = ExpansionNorms {
        e: linalg::sym_op_norm(e),
        projector_diff: linalg::sym_op_norm(&projector_diff),
        linear: linalg::sym_op_norm(&linear),
        second_order: linalg::sym_op_norm(&second_order),
        nonlinear: linalg::sym_op_norm(&nonlinear),
        remainder: linalg::sym_op_norm(&remainder),
    };
    Ok(PerturbationExpansion {
        e: e.clone(),
        cluster: r,
        projector_diff,
        linear,
        second_order,
        nonlinear,
        remainder,
        norms,
        gap,
        cluster_warning: perturbed.cluster_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub achieved: f64,
    pub bound: f64,
    /// `achieved / bound`, 0 when both vanish.
    pub ratio: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(achieved: f64, bound: f64) -> Self {
        let ratio = if bound > 0.0 {
            achieved / bound
        } else if achieved == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        BoundCheck {
            achieved,
            bound,
            ratio,
            pass: achieved <= bound * (1.0 + BOUND_TOLERANCE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `‖P̃_r - P_r‖ ≤ 4x`
    pub projector: BoundCheck,
    /// `‖S_r‖ ≤ 14x²`
    pub nonlinear: BoundCheck,
    /// `‖R_r‖ ≤ 72x³`
    pub remainder: BoundCheck,
    /// `‖R_r‖` against `24x³`, recorded when `‖E‖ ≤ ḡ_r/3` to document slack.
    /// Informational only; it does not enter [`BoundReport::pass`].
    pub remainder_small_e: Option<BoundCheck>,
    pub relative_size: f64,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.projector.pass && self.nonlinear.pass && self.remainder.pass
    }
}

pub fn check_bounds(expansion: &PerturbationExpansion) -> BoundReport {
    let n = &expansion.norms;
    let x = n.e / expansion.gap;
    BoundReport {
        projector: BoundCheck::new(n.projector_diff, 4.0 * x),
        nonlinear: BoundCheck::new(n.nonlinear, 14.0 * x * x),
        remainder: BoundCheck::new(n.remainder, 72.0 * x * x * x),
        remainder_small_e: (x <= 1.0 / 3.0).then(|| BoundCheck::new(n.remainder, 24.0 * x * x * x)),
        relative_size: x,
    }
}

/// Families of random perturbations used to exercise the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// `(G + Gᵀ)/2` for standard Gaussian `G`, rescaled to a target `‖E‖/ḡ_r`.
    SymmetricGaussian,
    /// `Σ̂ - Σ` for a Gaussian sample of random size.
    WishartDifference,
    /// `±c vvᵀ` with `v` mixing an eigenvector of the cluster and one outside.
    RankOneAligned,
}

impl Ensemble {
    pub const ALL: [Ensemble; 3] = [
        Ensemble::SymmetricGaussian,
        Ensemble::WishartDifference,
        Ensemble::RankOneAligned,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Ensemble::SymmetricGaussian => "symmetric_gaussian",
            Ensemble::WishartDifference => "wishart_difference",
            Ensemble::RankOneAligned => "rank_one_aligned",
        }
    }
}

/// Target `‖E‖/ḡ_r` is log-uniform on this range for the rescaled ensembles.
pub const RELATIVE_SIZE_RANGE: (f64, f64) = (1e-3, 3.0);

/// Draws one perturbation. Deterministic in `seed`.
pub fn draw_perturbation(
    model: &CovarianceModel,
    r: ClusterIndex,
    ensemble: Ensemble,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let gap = model.spectral_gap(r)?;
    let p = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = RELATIVE_SIZE_RANGE;
    let target = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp() * gap;
    Ok(match ensemble {
        Ensemble::SymmetricGaussian => {
            let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
            let e = linalg::symmetrize(&g);
            let norm = linalg::sym_op_norm(&e);
            e * (target / norm)
        }
        Ensemble::WishartDifference => {
            let n = (2.0_f64.ln() + rng.random::<f64>() * (5000.0_f64.ln() - 2.0_f64.ln())).exp() as usize;
            let batch = sampling::sample(model, n.max(2), rng.random())?;
            sampling::empirical_covariance(&batch) - model.dense()
        }
        Ensemble::RankOneAligned => {
            let basis = model.eigenbasis();
            let inside = r.start() + rng.random_range(0..r.multiplicity());
            let outside = loop {
                let j = rng.random_range(0..p);
                if !r.positions().contains(&j) {
                    break j;
                }
            };
            let angle = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
            let v = basis.column(inside) * angle.cos() + basis.column(outside) * angle.sin();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            linalg::symmetrize(&(&v * v.transpose())) * (sign * target)
        }
    })
}

/// One line of a bound sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub index: usize,
    pub ensemble: Ensemble,
    pub cluster: usize,
    pub seed: u64,
    pub e_norm: f64,
    pub report: BoundReport,
}

/// Checks the bounds on `per_ensemble` perturbations from each ensemble,
/// cycling through every cluster of the model. Rows are in index order
/// whatever the thread schedule.
pub fn bound_sweep(model: &CovarianceModel, per_ensemble: usize, base_seed: u64) -> Result<Vec<BoundRow>> {
    if model.num_clusters() < 2 {
        return Err(Error::SingleCluster);
    }
    let k = model.num_clusters();
    let total = per_ensemble * Ensemble::ALL.len();
    (0..total)
        .into_par_iter()
        .map(|index| {
            let ensemble = Ensemble::ALL[index / per_ensemble];
            let r = model.cluster(1 + index % k)?;
            let seed = sampling::replication_seed(base_seed, index as u64);
            let e = draw_perturbation(model, r, ensemble, seed)?;
            let expansion = expand(model, r, &e)?;
            Ok(BoundRow {
                index,
                ensemble,
                cluster: r.rank(),
                seed,
                e_norm: expansion.norms.e,
                report: check_bounds(&expansion),
            })
        })
        .collect()
}

/// Monte Carlo check of `E‖Σ̂ - Σ‖ ≲ ‖Σ‖ √(r(Σ)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormSummary {
    pub n: usize,
    pub reps: usize,
    pub mean_norm: f64,
    pub std_err: f64,
    /// `‖Σ‖ √(r(Σ)/n)`
    pub scale: f64,
    /// `mean_norm / scale`
    pub ratio: f64,
}

pub fn opnorm_concentration_check(
    model: &CovarianceModel,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<OpNormSummary> {
    let norms = opnorm_samples(model, n, reps, seed)?;
    let (mean, std_err) = crate::stats::mean_and_std_err(&norms);
    let scale = model.op_norm() * (model.effective_rank() / n as f64).sqrt();
    Ok(OpNormSummary {
        n,
        reps,
        mean_norm: mean,
        std_err,
        scale,
        ratio: mean / scale,
    })
}

/// Per-replication `‖Σ̂ - Σ‖`, in replication order.
pub fn opnorm_samples(model: &CovarianceModel, n: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps < 100 {
        return Err(Error::Precondition(format!("need at least 100 replications, got {reps}")));
    }
    if model.effective_rank() >= n as f64 {
        return Err(Error::Precondition(format!(
            "effective rank {} must be below n = {n}",
            model.effective_rank()
        )));
    }
    let sqrt = model.matrix_power(0.5);
    let sigma = model.dense();
    Ok((0..reps)
        .into_par_iter()
        .map(|i| {
            let draw = sampling::draw_covariance(&sqrt, n, sampling::replication_seed(seed, i as u64));
            linalg::sym_op_norm(&(draw.sigma_hat - &sigma))
        })
        .collect())
}
