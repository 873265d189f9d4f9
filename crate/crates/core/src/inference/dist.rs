//! Standard normal and χ² distribution functions.
//!
//! Both are built on the regularized incomplete gamma function: a power series
//! for `x < a + 1` and a modified-Lentz continued fraction otherwise. The normal
//! quantile starts from Acklam's rational approximation and takes one Halley
//! step against the incomplete-gamma cdf; χ² quantiles use safeguarded Newton
//! iterations on whichever tail is smaller.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `x^a e^{-x} / Γ(a)`, the common prefactor of both tails.
fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn lower_series(a: f64, x: f64) -> f64 {
    series_sum(a, x) * gamma_prefactor(a, x)
}

fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    cf_value(a, x) * gamma_prefactor(a, x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    }
}

/// Standard normal distribution function `Φ(x)`. NaN in, NaN out.
pub fn normal_cdf(x: f64) -> f64 {
    let half_sq = 0.5 * x * x;
    if x >= 0.0 {
        0.5 + 0.5 * gamma_p(0.5, half_sq)
    } else {
        0.5 * gamma_q(0.5, half_sq)
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn acklam(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const LOW: f64 = 0.024_25;
    if q < LOW {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if q <= 1.0 - LOW {
        let u = q - 0.5;
        let t = u * u;
        (((((A[0] * t + A[1]) * t + A[2]) * t + A[3]) * t + A[4]) * t + A[5]) * u
            / (((((B[0] * t + B[1]) * t + B[2]) * t + B[3]) * t + B[4]) * t + 1.0)
    } else {
        -acklam(1.0 - q)
    }
}

fn check_probability(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("probability must lie in (0, 1), got {q}")));
    }
    Ok(())
}

/// `Φ^{-1}(q)` for `q ∈ (0, 1)`.
pub fn normal_quantile(q: f64) -> Result<f64> {
    check_probability(q)?;
    let x = acklam(q);
    // Halley step, written on the smaller tail to keep the residual accurate.
    let residual = if x <= 0.0 {
        normal_cdf(x) - q
    } else {
        (1.0 - q) - normal_cdf(-x)
    };
    let u = residual / normal_pdf(x);
    if !u.is_finite() {
        return Ok(x);
    }
    Ok(x - u / (1.0 + 0.5 * x * u))
}

fn check_df(df: usize) -> Result<()> {
    if df == 0 {
        return Err(Error::InvalidArgument("degrees of freedom must be positive".into()));
    }
    Ok(())
}

/// χ² distribution function with `df` degrees of freedom.
pub fn chisq_cdf(x: f64, df: usize) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("χ² argument must be nonnegative, got {x}")));
    }
    Ok(gamma_p(0.5 * df as f64, 0.5 * x))
}

/// Upper tail `1 - F(x)`, accurate when it is small.
pub fn chisq_sf(x: f64, df: usize) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("χ² argument must be nonnegative, got {x}")));
    }
    Ok(gamma_q(0.5 * df as f64, 0.5 * x))
}

pub fn chisq_pdf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return if df == 2 { 0.5 } else if df < 2 { f64::INFINITY } else { 0.0 };
    }
    let k = 0.5 * df as f64;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// `ln P(a, x)` or `ln Q(a, x)`, without underflow in the far tail.
fn ln_gamma_tail(a: f64, x: f64, upper: bool) -> f64 {
    let ln_pref = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let ln_lower = ln_pref + series_sum(a, x).ln();
        if upper {
            (-ln_lower.exp()).ln_1p()
        } else {
            ln_lower
        }
    } else {
        let ln_upper = ln_pref + cf_value(a, x).ln();
        if upper {
            ln_upper
        } else {
            (-ln_upper.exp()).ln_1p()
        }
    }
}

fn series_sum(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum
}

fn cf_value(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

fn ln_chisq_pdf(x: f64, k: f64) -> f64 {
    (0.5 * k - 1.0) * x.ln() - 0.5 * x - 0.5 * k * std::f64::consts::LN_2 - ln_gamma(0.5 * k)
}

/// `q`-quantile of χ²_df for `q ∈ (0, 1)`.
///
/// Newton's method on `u = ln x` applied to the log of the smaller tail,
/// which stays well conditioned from `q = 1e-300` up to `1 - 1e-16`.
pub fn chisq_quantile(q: f64, df: usize) -> Result<f64> {
    check_probability(q)?;
    check_df(df)?;
    let k = df as f64;
    let a = 0.5 * k;
    let upper = q > 0.5;
    let ln_target = if upper { (-q).ln_1p() } else { q.ln() };
    // Increasing in u; returns the residual and its derivative.
    let residual = |u: f64| {
        let x = u.exp();
        let ln_tail = ln_gamma_tail(a, 0.5 * x, upper);
        let slope = (u + ln_chisq_pdf(x, k) - ln_tail).exp();
        if upper {
            (ln_target - ln_tail, slope)
        } else {
            (ln_tail - ln_target, slope)
        }
    };

    // Wilson–Hilferty start, falling back to the small-x power law
    // F(x) ≈ (x/2)^{k/2} / Γ(k/2 + 1).
    let z = normal_quantile(q)?;
    let h = 2.0 / (9.0 * k);
    let wh = k * (1.0 - h + z * h.sqrt()).powi(3);
    let power_law = (2.0 / k) * (q.ln() + ln_gamma(a + 1.0)) + std::f64::consts::LN_2;
    let mut u = if wh > 0.0 && !upper && power_law < wh.ln() {
        power_law
    } else if wh > 0.0 {
        wh.ln()
    } else {
        power_law
    };

    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..300 {
        let (f, df_du) = residual(u);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - f / df_du;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => u + 1.0,
                _ => u - 1.0,
            };
        }
        let done = (next - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0);
        u = next;
        if done {
            break;
        }
    }
    Ok(u.exp())
}
