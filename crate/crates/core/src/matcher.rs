//! Inverse-moment-matched CDF built on a Lognormal base.
//!
//! With base density `f_b` of `Y = e^X`, `X ~ N(μ, σ²)`, the polynomials
//! `c_lᵀ (1, y⁻¹, …, y⁻ˡ)` are orthonormal under `f_b`. Projecting the target
//! density onto the first `N + 1` of them gives a weighted sum of Lognormal
//! CDFs with shifted means `μ - kσ²`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::LogStats;
use crate::special::{euler_phi, lambert_w_minus1_from_log, std_normal_cdf};

/// Largest basis index accepted by the closed form.
pub const MAX_BASIS_DEGREE: usize = 30;

/// Default cap on the approximation degree.
pub const DEFAULT_DEGREE_GUARD: usize = 12;

/// Allowed deviation of `Σκ` from one before normalization.
pub const KAPPA_SUM_TOLERANCE: f64 = 1e-6;

const LN_OVERFLOW: f64 = 700.0;

/// Lognormal base density parameters of `ln Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LognormalBase {
    pub mu: f64,
    pub sigma2: f64,
}

impl LognormalBase {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lognormal base needs finite mu and sigma2 > 0, got ({mu}, {sigma2})"
            )));
        }
        Ok(LognormalBase { mu, sigma2 })
    }

    pub fn from_stats(stats: &LogStats) -> Result<Self> {
        LognormalBase::new(stats.mu, stats.sigma2)
    }

    /// `ς = e^{σ²}`.
    pub fn varsigma(&self) -> f64 {
        self.sigma2.exp()
    }

    /// `ln ν_k`.
    pub fn ln_inverse_moment(&self, k: usize) -> f64 {
        let k = k as f64;
        0.5 * k * k * self.sigma2 - k * self.mu
    }
}

/// `ν_k = E_b[Y^{-k}] = exp(k²σ²/2 - kμ)`.
pub fn base_inverse_moment(base: &LognormalBase, k: usize) -> Result<f64> {
    let kf = k as f64;
    if 0.5 * kf * kf * base.sigma2 > LN_OVERFLOW {
        return Err(Error::Range(format!(
            "base inverse moment of order {k} overflows (k²σ²/2 > {LN_OVERFLOW})"
        )));
    }
    Ok(base.ln_inverse_moment(k).exp())
}

/// A basis coefficient held as sign and log magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogCoeff {
    pub sign: f64,
    pub ln_abs: f64,
}

impl LogCoeff {
    pub fn value(&self) -> f64 {
        self.sign * self.ln_abs.exp()
    }
}

// ln(1 - ς^{-d}) for d > 0
fn ln_one_minus_pow(sigma2: f64, d: f64) -> f64 {
    (-(-d * sigma2).exp_m1()).ln()
}

/// Closed-form `c_{l,0..l}` in sign/log form.
pub fn basis_coefficients_log(base: &LognormalBase, l: usize) -> Result<Vec<LogCoeff>> {
    if l > MAX_BASIS_DEGREE {
        return Err(Error::Range(format!(
            "basis index {l} exceeds the overflow guard {MAX_BASIS_DEGREE}"
        )));
    }
    let s2 = base.sigma2;
    let half_norm: f64 = (0..l)
        .map(|t| 0.5 * ln_one_minus_pow(s2, (l - t) as f64))
        .sum();
    Ok((0..=l)
        .map(|k| {
            let kf = k as f64;
            let denom: f64 = (0..=l)
                .filter(|&t| t != k)
                .map(|t| ln_one_minus_pow(s2, (t as f64 - kf).abs()))
                .sum();
            LogCoeff {
                sign: if (l + k).is_multiple_of(2) { 1.0 } else { -1.0 },
                ln_abs: kf * base.mu + 0.5 * s2 * (kf - l as f64 - 2.0 * kf * kf) + half_norm
                    - denom,
            }
        })
        .collect())
}

/// Closed-form `c_{l,0..l}`.
pub fn basis_coefficients(base: &LognormalBase, l: usize) -> Result<Vec<f64>> {
    let row = basis_coefficients_log(base, l)?;
    if let Some(c) = row.iter().find(|c| c.ln_abs > LN_OVERFLOW) {
        return Err(Error::Range(format!(
            "basis coefficient of row {l} overflows (ln|c| = {:.1})",
            c.ln_abs
        )));
    }
    Ok(row.iter().map(LogCoeff::value).collect())
}

fn gram_step(
    base: &LognormalBase,
    inv: &DMatrix<f64>,
    l: usize,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let v: Vec<f64> = (l..2 * l)
        .map(|j| base_inverse_moment(base, j))
        .collect::<Result<_>>()?;
    let v = nalgebra::DVector::from_vec(v);
    let u = inv * &v;
    let d = base_inverse_moment(base, 2 * l)? - v.dot(&u);
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Numeric(format!(
            "Gram matrix lost positive definiteness at l = {l} (pivot {d:e})"
        )));
    }
    let mut next = DMatrix::zeros(l + 1, l + 1);
    for i in 0..l {
        for j in 0..l {
            next[(i, j)] = inv[(i, j)] + u[i] * u[j] / d;
        }
        next[(i, l)] = -u[i] / d;
        next[(l, i)] = -u[i] / d;
    }
    next[(l, l)] = 1.0 / d;
    let sd = d.sqrt();
    let mut c: Vec<f64> = u.iter().map(|x| -x / sd).collect();
    c.push(1.0 / sd);
    Ok((next, c))
}

/// `A_l⁻¹` for the Gram matrix `A_l = [ν_{i+j}]`, built by bordering from
/// `A_0⁻¹ = [1]`.
pub fn recursive_gram_inverse(base: &LognormalBase, l: usize) -> Result<DMatrix<f64>> {
    let mut inv = DMatrix::from_element(1, 1, 1.0);
    for step in 1..=l {
        inv = gram_step(base, &inv, step)?.0;
    }
    Ok(inv)
}

/// `c_0..c_n` from the bordered Gram recursion.
pub fn recursive_coefficients(base: &LognormalBase, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut inv = DMatrix::from_element(1, 1, 1.0);
    let mut rows = vec![vec![1.0]];
    for step in 1..=n {
        let (next, c) = gram_step(base, &inv, step)?;
        inv = next;
        rows.push(c);
    }
    Ok(rows)
}

fn signed_log_sum(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let terms: Vec<(f64, f64)> = terms.filter(|t| t.1.is_finite()).collect();
    let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return 0.0;
    }
    let s: f64 = terms.iter().map(|&(sg, ln)| sg * (ln - top).exp()).sum();
    s * top.exp()
}

/// Weighted-Lognormal CDF approximation `F̃_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedCdf {
    pub base: LognormalBase,
    pub degree: usize,
    pub kappa: Vec<f64>,
    pub eta: Vec<f64>,
    pub coeff_rows: Vec<Vec<LogCoeff>>,
    /// `Σκ` before normalization.
    pub kappa_sum: f64,
}

/// Coordinates `η_0..η_n` of the target density in the orthonormal basis.
pub fn eta_coordinates(stats: &LogStats, n: usize) -> Result<Vec<f64>> {
    stats.check()?;
    if stats.inv_moments.len() < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates need {} inverse moments, got {}",
            n + 1,
            n + 1,
            stats.inv_moments.len()
        )));
    }
    if let Some(a) = stats.inv_moments[..=n].iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidArgument(format!("inverse moment {a} must be positive")));
    }
    let base = LognormalBase::from_stats(stats)?;
    (0..=n)
        .map(|l| {
            let row = basis_coefficients_log(&base, l)?;
            Ok(signed_log_sum(
                row.iter()
                    .enumerate()
                    .map(|(k, c)| (c.sign, c.ln_abs + stats.inv_moments[k].ln())),
            ))
        })
        .collect()
}

/// Builds `F̃_N` from the log statistics and inverse moments.
pub fn build_matched_cdf(stats: &LogStats, degree: usize) -> Result<MatchedCdf> {
    let eta = eta_coordinates(stats, degree)?;
    let base = LognormalBase::from_stats(stats)?;
    let rows: Vec<Vec<LogCoeff>> = (0..=degree)
        .map(|l| basis_coefficients_log(&base, l))
        .collect::<Result<_>>()?;
    let kappa: Vec<f64> = (0..=degree)
        .map(|k| {
            let ln_nu = base.ln_inverse_moment(k);
            signed_log_sum((k..=degree).filter(|&l| eta[l] != 0.0).map(|l| {
                let c = rows[l][k];
                (
                    c.sign * eta[l].signum(),
                    c.ln_abs + ln_nu + eta[l].abs().ln(),
                )
            }))
        })
        .collect();
    let kappa_sum: f64 = kappa.iter().sum();
    if !((kappa_sum - 1.0).abs() <= KAPPA_SUM_TOLERANCE) {
        return Err(Error::Numeric(format!(
            "matched weights sum to {kappa_sum} (degree {degree}); moments and basis are inconsistent"
        )));
    }
    Ok(MatchedCdf {
        base,
        degree,
        kappa: kappa.iter().map(|k| k / kappa_sum).collect(),
        eta,
        coeff_rows: rows,
        kappa_sum,
    })
}

impl MatchedCdf {
    /// `Σ κ_k Φ((ln y + kσ² - μ)/σ)` without clamping.
    pub fn eval_raw(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let s = self.base.sigma2.sqrt();
        let ly = y.ln();
        self.kappa
            .iter()
            .enumerate()
            .map(|(k, w)| w * std_normal_cdf((ly + k as f64 * self.base.sigma2 - self.base.mu) / s))
            .sum()
    }

    /// `F̃_N(y)` clamped to `[0, 1]`.
    pub fn eval(&self, y: f64) -> f64 {
        self.eval_raw(y).clamp(0.0, 1.0)
    }

    /// `f̃_N(y)`.
    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let s = self.base.sigma2.sqrt();
        let ly = y.ln();
        let norm = 1.0 / (y * s * (2.0 * std::f64::consts::PI).sqrt());
        self.kappa
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let z = (ly + k as f64 * self.base.sigma2 - self.base.mu) / s;
                w * norm * (-0.5 * z * z).exp()
            })
            .sum()
    }
}

/// `ln A` of the `η` decay bound.
pub fn ln_eta_constant(base: &LognormalBase) -> Result<f64> {
    let s2 = base.sigma2;
    let k0 = base.mu / (2.0 * s2) + 0.25;
    let phi = euler_phi((-s2).exp())?;
    Ok(s2 * k0 * (base.mu / s2 + 0.5 - k0) - 2.0 * phi.ln())
}

/// `ln B` of the NMSE bound.
pub fn ln_nmse_constant(base: &LognormalBase) -> Result<f64> {
    let q = (-base.sigma2).exp();
    let omq = -(-base.sigma2).exp_m1();
    let bracket = (1.0 + q) / (omq * omq) + 2.0 * q / omq + 1.0;
    Ok(2.0 * ln_eta_constant(base)? + q.ln() - omq.ln() + bracket.ln())
}

/// `A (l+1) ς^{-l/2}`, the bound on `|η_l|`.
pub fn eta_bound(base: &LognormalBase, l: usize) -> Result<f64> {
    let lf = l as f64;
    Ok((ln_eta_constant(base)? + (lf + 1.0).ln() - 0.5 * lf * base.sigma2).exp())
}

/// `B (N+1)² ς^{-N}`, the bound on the NMSE at degree `N`.
pub fn nmse_bound(base: &LognormalBase, n: usize) -> Result<f64> {
    let nf = n as f64;
    Ok((ln_nmse_constant(base)? + 2.0 * (nf + 1.0).ln() - nf * base.sigma2).exp())
}

/// Result of the degree rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeSelection {
    /// Degree to use, clamped to the guard.
    pub degree: usize,
    /// Unrounded `N̄`; `None` when the bound holds for every degree.
    pub raw: Option<f64>,
    /// The Lambert-W argument fell below `-1/e`.
    pub vacuous: bool,
    /// `⌈N̄⌉` exceeded the guard.
    pub clamped: bool,
}

/// Smallest degree meeting the NMSE target `epsilon`, capped at
/// [`MAX_BASIS_DEGREE`].
pub fn select_degree(base: &LognormalBase, epsilon: f64) -> Result<DegreeSelection> {
    select_degree_with_guard(base, epsilon, MAX_BASIS_DEGREE)
}

pub fn select_degree_with_guard(
    base: &LognormalBase,
    epsilon: f64,
    guard: usize,
) -> Result<DegreeSelection> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
    }
    let h = 0.5 * base.sigma2;
    // ln(-x) for x = -h sqrt(ε/B) e^{-h}
    let ln_arg = h.ln() + 0.5 * (epsilon.ln() - ln_nmse_constant(base)?) - h;
    if ln_arg > -1.0 {
        return Ok(DegreeSelection {
            degree: 0,
            raw: None,
            vacuous: true,
            clamped: false,
        });
    }
    let w = lambert_w_minus1_from_log(ln_arg)?;
    let raw = w / -h - 1.0;
    let want = raw.ceil().max(0.0);
    let clamped = want > guard as f64;
    Ok(DegreeSelection {
        degree: if clamped { guard } else { want as usize },
        raw: Some(raw),
        vacuous: false,
        clamped,
    })
}
