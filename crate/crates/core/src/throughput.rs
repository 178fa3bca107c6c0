//! Long-term average throughput and outage-constrained rate selection.

use serde::Serialize;

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::outage::{OutageEngine, OutageSettings};

/// Default search interval for the initial rate in bits/s/Hz.
pub const DEFAULT_RATE_BOUNDS: (f64, f64) = (0.1, 12.0);

/// Points of the bracketing grid.
pub const GRID_POINTS: usize = 64;

/// Relative accuracy of the constraint boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-3;

/// `R (1 - P_out(M)) / (1 + Σ_{l<M} P_out(l))` at rate `rate`.
pub fn ltat_at(engine: &OutageEngine, rate: f64) -> Result<f64> {
    let m = engine.config().max_rounds;
    let mut denom = 1.0;
    for l in 1..m {
        denom += engine.outage_probability_at(l, rate)?;
    }
    Ok(rate * (1.0 - engine.outage_probability_at(m, rate)?) / denom)
}

/// LTAT at the configured rate.
pub fn ltat(cfg: &SystemConfig, settings: OutageSettings) -> Result<f64> {
    ltat_at(&OutageEngine::new(cfg, settings)?, cfg.rate)
}

/// Solution of the rate design problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSolution {
    pub rate_opt: f64,
    pub ltat_opt: f64,
    pub outage_at_opt: f64,
    pub constraint: f64,
    pub feasible: bool,
    /// Largest rate meeting the constraint within the bounds.
    pub rate_max: f64,
    /// Largest decrease of `P_out(M)` seen between increasing grid rates.
    pub monotonicity_gap: f64,
}

/// Maximizes the LTAT subject to `P_out(M) ≤ theta` over `bounds`.
pub fn optimal_rate(cfg: &SystemConfig, theta: f64, settings: OutageSettings, bounds: (f64, f64)) -> Result<RateSolution> {
    optimal_rate_with(&OutageEngine::new(cfg, settings)?, theta, bounds)
}

/// As [`optimal_rate`] on an existing engine; the SNR and links come from
/// the engine, its configured rate is ignored.
pub fn optimal_rate_with(engine: &OutageEngine, theta: f64, bounds: (f64, f64)) -> Result<RateSolution> {
    let (lo, hi) = bounds;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("constraint {theta} outside (0, 1]")));
    }
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate bounds ({lo}, {hi}) invalid")));
    }
    let m = engine.config().max_rounds;
    let p = |r: f64| engine.outage_probability_at(m, r);
    let t = |r: f64| ltat_at(engine, r);

    let p_lo = p(lo)?;
    if p_lo > theta {
        return Ok(RateSolution {
            rate_opt: lo,
            ltat_opt: t(lo)?,
            outage_at_opt: p_lo,
            constraint: theta,
            feasible: false,
            rate_max: lo,
            monotonicity_gap: 0.0,
        });
    }
    let rate_max = if p(hi)? <= theta {
        hi
    } else {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let pm = p(mid)?;
            if pm <= theta {
                a = mid;
                if theta - pm <= BOUNDARY_TOLERANCE * theta {
                    break;
                }
            } else {
                b = mid;
            }
            if b - a <= 1e-12 * b {
                break;
            }
        }
        a
    };

    let step = (rate_max - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let mut vals = Vec::with_capacity(GRID_POINTS);
    let mut gap = 0.0f64;
    let mut prev_p = f64::NEG_INFINITY;
    for &r in &grid {
        vals.push(t(r)?);
        let pr = p(r)?;
        gap = gap.max(prev_p - pr);
        prev_p = pr;
    }
    let best = (0..GRID_POINTS)
        .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID_POINTS - 1)]);
    let mut rate_opt = grid[best];
    let mut t_opt = vals[best];
    if b > a {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (t(x1)?, t(x2)?);
        while b - a > 1e-9 * b.max(1.0) {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = t(x2)?;
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = t(x1)?;
            }
        }
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f > t_opt {
                rate_opt = x;
                t_opt = f;
            }
        }
    }
    Ok(RateSolution {
        rate_opt,
        ltat_opt: t_opt,
        outage_at_opt: p(rate_opt)?,
        constraint: theta,
        feasible: true,
        rate_max,
        monotonicity_gap: gap.max(0.0),
    })
}
