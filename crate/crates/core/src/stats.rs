//! Small summary statistics used by the Monte Carlo code.

/// Sample mean and its standard error `s / √k`. A single value has an
/// infinite standard error; an empty slice gives NaN for both.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    if k == 1 {
        return (m, f64::INFINITY);
    }
    (m, (sample_variance(xs) / k as f64).sqrt())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor `k - 1`), two-pass.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}
