//! Gamma-function numerics for IC credibility intervals.
//!
//! The regularized lower incomplete gamma `P(a, x)` uses the power series
//! below `x < a + 1` and a modified-Lentz continued fraction for the upper
//! tail above it. Quantiles are found by Newton steps kept inside a
//! shrinking bracket.

use thiserror::Error;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GammaError {
    #[error("probability {0} outside (0, 1)")]
    Probability(f64),
    #[error("gamma parameters must be positive and finite (shape {shape}, rate {rate})")]
    Parameters { shape: f64, rate: f64 },
}

#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 14] = [
    57.156_235_665_862_923_5,
    -59.597_960_355_475_491_2,
    14.136_097_974_741_747_1,
    -0.491_913_816_097_620_199,
    0.339_946_499_848_118_887e-4,
    0.465_236_289_270_485_756e-4,
    -0.983_744_753_048_795_646e-4,
    0.158_088_703_224_912_494e-3,
    -0.210_264_441_724_104_883e-3,
    0.217_439_618_115_212_643e-3,
    -0.164_318_106_536_763_890e-3,
    0.844_182_239_838_527_433e-4,
    -0.261_908_384_015_814_087e-4,
    0.368_991_826_595_316_234e-5,
];

/// Natural log of Γ(x) for x > 0 (Lanczos, g = 671/128).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let t = x + 671.0 / 128.0;
    let t = (x + 0.5) * t.ln() - t;
    let mut y = x;
    #[allow(clippy::excessive_precision)]
    let mut ser = 0.999_999_999_999_997_092;
    for c in LANCZOS {
        y += 1.0;
        ser += c / y;
    }
    t + (2.506_628_274_631_000_5 * ser / x).ln()
}

fn ln_prefactor(a: f64, x: f64) -> f64 {
    a * x.ln() - x - ln_gamma(a)
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..MAX_TERMS {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (ln_prefactor(a, x) + sum.ln()).exp()
}

fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (ln_prefactor(a, x) + h.ln()).exp()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        lower_series(a, x).min(1.0)
    } else {
        (1.0 - upper_fraction(a, x)).max(0.0)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn regularized_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - lower_series(a, x).min(1.0)
    } else {
        upper_fraction(a, x).min(1.0)
    }
}

fn check(shape: f64, rate: f64) -> Result<(), GammaError> {
    if shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite() {
        Ok(())
    } else {
        Err(GammaError::Parameters { shape, rate })
    }
}

/// CDF of Gamma(shape, rate) at `x`.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> Result<f64, GammaError> {
    check(shape, rate)?;
    Ok(regularized_lower_gamma(shape, rate * x))
}

fn standard_pdf(a: f64, x: f64) -> f64 {
    ((a - 1.0) * x.ln() - x - ln_gamma(a)).exp()
}

/// Quantile of Gamma(shape, rate) at probability `q`.
pub fn gamma_quantile(shape: f64, rate: f64, q: f64) -> Result<f64, GammaError> {
    check(shape, rate)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(GammaError::Probability(q));
    }
    Ok(standard_quantile(shape, q) / rate)
}

/// Quantile of the unit-rate gamma distribution.
fn standard_quantile(a: f64, q: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = a.max(1.0);
    while regularized_lower_gamma(a, hi) < q {
        lo = hi;
        hi *= 2.0;
    }
    // Wilson-Hilferty start, clamped into the bracket.
    let z = normal_quantile(q);
    let c = 1.0 / (9.0 * a);
    let mut x = a * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..2000 {
        let f = regularized_lower_gamma(a, x) - q;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = standard_pdf(a, x);
        let mut next = x - f / pdf;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Inverse of the standard normal CDF (Acklam's rational approximation),
/// used only to seed the gamma root-find.
#[allow(clippy::excessive_precision)]
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(100.0), 359.134_205_369_575_4, max_relative = 1e-15);
    }

    #[test]
    fn exponential_special_case() {
        for x in [0.01, 0.5, 1.0, 3.0, 20.0] {
            assert_relative_eq!(regularized_lower_gamma(1.0, x), 1.0 - (-x).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn upper_and_lower_sum_to_one() {
        for (a, x) in [(0.5, 0.1), (3.5, 2.0), (3.5, 9.0), (1000.5, 990.0)] {
            let s = regularized_lower_gamma(a, x) + regularized_upper_gamma(a, x);
            assert_relative_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for (shape, rate) in [(0.5, 0.5), (3.5, 1.5), (10000.5, 10000.5), (0.5, 1e5)] {
            for q in [0.025, 0.5, 0.975] {
                let x = gamma_quantile(shape, rate, q).unwrap();
                let err = (gamma_cdf(shape, rate, x).unwrap() - q).abs();
                assert!(err < 1e-10, "shape {shape} rate {rate} q {q} x {x} err {err}");
            }
        }
    }

    #[test]
    fn rejects_bad_probability() {
        assert_eq!(gamma_quantile(1.0, 1.0, 0.0), Err(GammaError::Probability(0.0)));
        assert_eq!(gamma_quantile(1.0, 1.0, 1.5), Err(GammaError::Probability(1.5)));
        assert!(gamma_quantile(0.0, 1.0, 0.5).is_err());
    }
}
