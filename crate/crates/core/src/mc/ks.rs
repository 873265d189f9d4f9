use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::dist;

/// Reference law for a Kolmogorov–Smirnov distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Reference {
    Gaussian,
    ChiSquared { df: usize },
}

impl Reference {
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match *self {
            Reference::Gaussian => Ok(dist::normal_cdf(x)),
            Reference::ChiSquared { df } => dist::chisq_cdf(x.max(0.0), df),
        }
    }
}

/// `sup_x |F_k(x) - F(x)|` for the right-continuous empirical distribution
/// function `F_k` of `samples`.
///
/// The supremum is attained at a jump, so both one-sided limits are checked
/// at every distinct sample value. Tied values form a single jump.
pub fn ks_distance(samples: &[f64], reference: Reference) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let mut d = 0.0_f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = reference.cdf(x)?;
        d = d.max(f - i as f64 / k).max(j as f64 / k - f);
        i = j;
    }
    Ok(d.clamp(0.0, 1.0))
}
