//! High-SNR outage slopes.

use serde::Serialize;

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::outage::{outage_bounds, OutageEngine, OutageSettings};
use crate::par::par_map;

/// Outage range used for the slope fit.
pub const FIT_RANGE: (f64, f64) = (1e-12, 1e-2);

/// Width of the fit window below the highest usable SNR, in dB.
pub const WINDOW_DB: f64 = 10.0;

/// Slope fit of `log10 P_out(M)` against `log10 γ_T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityEstimate {
    pub snr_grid_db: Vec<f64>,
    /// `P_out(M)` per grid point; `None` where the pipeline failed.
    pub outage_values: Vec<Option<f64>>,
    /// Failure messages for grid points without a value.
    pub failures: Vec<(f64, String)>,
    /// Grid indices used in the fit.
    pub window: Vec<usize>,
    /// Estimated diversity order, the negated slope.
    pub fitted_slope: f64,
    /// `M m` of the source link.
    pub theory: f64,
    pub relative_gap: f64,
    /// Negated slopes of the lower and upper bounds on `P_out(M | BC = M)`
    /// over the three highest grid points.
    pub bound_slopes: (f64, f64),
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fits the high-SNR slope of `P_out(M)` over `snr_grid_db`.
///
/// The window holds the in-range points within [`WINDOW_DB`] of the
/// highest in-range point, extended downwards to at least three points.
pub fn estimate_diversity(
    cfg: &SystemConfig,
    snr_grid_db: &[f64],
    settings: OutageSettings,
) -> Result<DiversityEstimate> {
    cfg.validate()?;
    if snr_grid_db.len() < 3 || snr_grid_db.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "the SNR grid needs at least 3 strictly increasing points".into(),
        ));
    }
    let span = snr_grid_db[snr_grid_db.len() - 1] - snr_grid_db[0];
    if span < 20.0 {
        return Err(Error::InvalidArgument(format!(
            "the SNR grid spans {span} dB; at least 20 dB is required"
        )));
    }
    let m = cfg.max_rounds;
    let at = |db: f64| {
        let mut c = cfg.clone();
        c.snr_db = db;
        c
    };
    let results: Vec<Result<f64>> = par_map(snr_grid_db, |&db| {
        OutageEngine::new(&at(db), settings)?.outage_probability(m)
    });
    let mut outage_values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, &db) in results.into_iter().zip(snr_grid_db) {
        match r {
            Ok(p) => outage_values.push(Some(p)),
            Err(e @ (Error::Numeric(_) | Error::Range(_))) => {
                failures.push((db, e.to_string()));
                outage_values.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let usable: Vec<usize> = (0..snr_grid_db.len())
        .filter(|&i| matches!(outage_values[i], Some(p) if p >= FIT_RANGE.0 && p <= FIT_RANGE.1))
        .collect();
    if usable.len() < 3 {
        return Err(Error::Resource(format!(
            "only {} grid points have outage in [{:e}, {:e}]; lower the rate or the SNR range",
            usable.len(),
            FIT_RANGE.0,
            FIT_RANGE.1
        )));
    }
    let top = snr_grid_db[*usable.last().unwrap()];
    let mut window: Vec<usize> = usable
        .iter()
        .copied()
        .filter(|&i| snr_grid_db[i] >= top - WINDOW_DB - 1e-9)
        .collect();
    if window.len() < 3 {
        window = usable[usable.len() - 3..].to_vec();
    }
    let x: Vec<f64> = window.iter().map(|&i| snr_grid_db[i] / 10.0).collect();
    let y: Vec<f64> = window.iter().map(|&i| outage_values[i].unwrap().log10()).collect();
    let d = -fit_slope(&x, &y);
    let theory = m as f64 * cfg.sd.m;

    let tail = &snr_grid_db[snr_grid_db.len() - 3..];
    let bounds: Vec<(f64, f64)> = tail
        .iter()
        .map(|&db| outage_bounds(&at(db), m, m))
        .collect::<Result<_>>()?;
    let bx: Vec<f64> = tail.iter().map(|db| db / 10.0).collect();
    let lo: Vec<f64> = bounds.iter().map(|b| b.0.log10()).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1.log10()).collect();
    Ok(DiversityEstimate {
        snr_grid_db: snr_grid_db.to_vec(),
        outage_values,
        failures,
        window,
        fitted_slope: d,
        theory,
        relative_gap: (d - theory).abs() / theory,
        bound_slopes: (-fit_slope(&bx, &lo), -fit_slope(&bx, &hi)),
    })
}
