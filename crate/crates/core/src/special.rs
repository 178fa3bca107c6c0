//! Special functions used by the analytical pipeline.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_inf};

pub use statrs::function::gamma::{gamma_lr as reg_lower_gamma, gamma_ur as reg_upper_gamma};

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// Standard normal CDF through `erfc`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Natural log of `0F1(;b;x)` for `x >= 0`.
///
/// Uses a rescaled power series for moderate arguments and the Hankel
/// expansion of `I_{b-1}(2 sqrt x)` once `2 sqrt x` dominates `(b-1)^2`.
pub fn ln_hyp0f1(b: f64, x: f64) -> Result<f64> {
    if !b.is_finite() || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("ln_hyp0f1({b}, {x}): non-finite input")));
    }
    if b <= 0.0 {
        return Err(Error::InvalidArgument(format!("ln_hyp0f1: b = {b} must be positive")));
    }
    if x < 0.0 {
        let v = hyp0f1_negative(b, x)?;
        if v <= 0.0 {
            return Err(Error::Domain(format!("0F1({b};{x}) is not positive")));
        }
        return Ok(v.ln());
    }
    Ok(ln_hyp0f1_nonneg(b, x))
}

/// `0F1(;b;x)`; overflows to `+inf` for very large positive `x`.
pub fn hyp0f1(b: f64, x: f64) -> Result<f64> {
    if x < 0.0 {
        if !b.is_finite() || !x.is_finite() || b <= 0.0 {
            return Err(Error::InvalidArgument(format!("hyp0f1({b}, {x})")));
        }
        return hyp0f1_negative(b, x);
    }
    ln_hyp0f1(b, x).map(f64::exp)
}

pub(crate) fn ln_hyp0f1_nonneg(b: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let nu = b - 1.0;
    let z = 2.0 * x.sqrt();
    if z >= 40.0 + nu * nu {
        ln_gamma(b) - 0.5 * nu * x.ln() + ln_bessel_i_asymptotic(nu, z)
    } else {
        ln_series_0f1(b, x)
    }
}

fn ln_series_0f1(b: f64, x: f64) -> f64 {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 0.0f64;
    loop {
        term *= x / ((b + k) * (k + 1.0));
        k += 1.0;
        sum += term;
        if sum > 1e280 {
            log_scale += sum.ln();
            term /= sum;
            sum = 1.0;
        }
        if term < 1e-17 * sum && x / ((b + k) * (k + 1.0)) < 0.5 {
            break;
        }
    }
    log_scale + sum.ln()
}

fn ln_bessel_i_asymptotic(nu: f64, z: f64) -> f64 {
    let mu4 = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu4 - odd * odd) / (8.0 * kf * z);
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    z - 0.5 * (2.0 * std::f64::consts::PI * z).ln() + sum.ln()
}

fn hyp0f1_negative(b: f64, x: f64) -> Result<f64> {
    if 2.0 * (-x).sqrt() > 30.0 {
        return Err(Error::Domain(format!(
            "0F1 with negative argument {x} below the supported range"
        )));
    }
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 0.0f64;
    while k < 500.0 {
        term *= x / ((b + k) * (k + 1.0));
        k += 1.0;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) && k > -x / b {
            break;
        }
    }
    Ok(sum)
}

/// Lower branch `W_{-1}(x)` for `x` in `[-1/e, 0)`.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    let inv_e = (-1.0f64).exp();
    if !x.is_finite() || x >= 0.0 || x < -inv_e * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::Domain(format!("W_-1 undefined at {x}")));
    }
    let eta = (1.0 + std::f64::consts::E * x).max(0.0);
    if eta < 1e-14 {
        let p = -(2.0 * eta).sqrt();
        return Ok(-1.0 + p - p * p / 3.0);
    }
    let mut w = if x < -0.25 {
        let p = -(2.0 * eta).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let w1 = w + 1.0;
        let denom = ew * w1 - (w + 2.0) * f / (2.0 * w1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 2.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w)
}

/// `W_{-1}` evaluated from `ln(-x)`, for arguments too small to represent.
pub fn lambert_w_minus1_from_log(ln_neg_x: f64) -> Result<f64> {
    if ln_neg_x > -600.0 {
        return lambert_w_minus1(-ln_neg_x.exp());
    }
    // w + ln(-w) = ln(-x)
    let mut w = ln_neg_x - (-ln_neg_x).ln();
    for _ in 0..100 {
        let f = w + (-w).ln() - ln_neg_x;
        let dw = f / (1.0 + 1.0 / w);
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w)
}

/// Euler function `prod_{k>=1} (1 - q^k)`.
pub fn euler_phi(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("euler_phi requires 0 < q < 1, got {q}")));
    }
    let mut prod = 1.0;
    let mut qk = q;
    while qk >= 1e-16 {
        prod *= 1.0 - qk;
        qk *= q;
    }
    Ok(prod)
}

/// `E[ln^p(1 + γ)]` for `γ ~ Gamma(m, mean/m)`.
pub fn expected_log1p_gamma_power(m: f64, mean: f64, p: i32) -> Result<f64> {
    if !(m > 0.0) || !(mean >= 0.0) || !m.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "expected_log1p_gamma: m = {m}, mean = {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0.0);
    }
    let s = mean / m;
    let lg = ln_gamma(m);
    let g = |t: f64| (s * t).ln_1p().powi(p);
    let u_max = m.sqrt();
    let lower = integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let t = u * u;
            2.0 * ((2.0 * m - 1.0) * u.ln() - t - lg).exp() * g(t)
        },
        0.0,
        u_max,
        1e-300,
        1e-13,
    )?;
    let upper = integrate_to_inf(
        |t: f64| ((m - 1.0) * t.ln() - t - lg).exp() * g(t),
        m,
        1e-300,
        1e-13,
    )?;
    Ok(lower + upper)
}

/// `E[ln(1 + γ)]` for `γ ~ Gamma(m, mean/m)`.
pub fn expected_log1p_gamma(m: f64, mean: f64) -> Result<f64> {
    expected_log1p_gamma_power(m, mean, 1)
}

/// `Var[ln(1 + γ)]` for `γ ~ Gamma(m, mean/m)`.
pub fn log1p_gamma_variance(m: f64, mean: f64) -> Result<f64> {
    let e1 = expected_log1p_gamma_power(m, mean, 1)?;
    let e2 = expected_log1p_gamma_power(m, mean, 2)?;
    Ok(e2 - e1 * e1)
}
