//! Browser bindings for the three demo views. Each export takes plain
//! numbers and returns a JSON string; failed points are reported as `null`.

use coopharq::matcher::build_matched_cdf;
use coopharq::monte_carlo::{block_rng, LinkSampler, BLOCK};
use coopharq::throughput::ltat_at;
use coopharq::{OutageEngine, OutageSettings, ProductKey, SystemConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest number of grid points accepted by one call.
pub const MAX_GRID: usize = 2_000;

/// Largest number of Monte Carlo samples accepted by one call.
pub const MAX_SAMPLES: usize = 2_000_000;

#[derive(Debug, Serialize)]
pub struct OutageCurve {
    pub snr_db: Vec<f64>,
    /// `p_out[i][k-1]` at `snr_db[i]`.
    pub p_out: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
pub struct DegreeCurve {
    pub degree: usize,
    pub cdf: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CdfComparison {
    pub mu: f64,
    pub sigma2: f64,
    pub y: Vec<f64>,
    pub empirical: Vec<f64>,
    pub curves: Vec<DegreeCurve>,
}

#[derive(Debug, Serialize)]
pub struct LtatCurve {
    pub rate: Vec<f64>,
    pub ltat: Vec<Option<f64>>,
    pub p_out: Vec<Option<f64>>,
}

fn grid(lo: f64, step: f64, hi: f64) -> Result<Vec<f64>, String> {
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
        return Err(format!("invalid grid {lo}:{step}:{hi}"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if n > MAX_GRID {
        return Err(format!("grid has {n} points; at most {MAX_GRID} are allowed"));
    }
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

fn system(m: f64, rho: f64, max_rounds: usize, snr_db: f64, rate: f64) -> Result<SystemConfig, String> {
    let mut cfg = SystemConfig::reference(m, rho, max_rounds).map_err(|e| e.to_string())?;
    cfg.snr_db = snr_db;
    cfg.rate = rate;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Outage probability after each round over an SNR grid.
#[allow(clippy::too_many_arguments)]
pub fn outage_curve(
    m: f64,
    rho: f64,
    max_rounds: usize,
    rate: f64,
    snr_lo: f64,
    snr_step: f64,
    snr_hi: f64,
    degree: usize,
) -> Result<OutageCurve, String> {
    let snr_db = grid(snr_lo, snr_step, snr_hi)?;
    let base = system(m, rho, max_rounds, snr_lo, rate)?;
    let p_out = snr_db
        .iter()
        .map(|&db| {
            let mut cfg = base.clone();
            cfg.snr_db = db;
            let e = OutageEngine::new(&cfg, OutageSettings::with_degree(degree)).ok()?;
            (1..=max_rounds).map(|k| e.outage_probability(k).ok()).collect()
        })
        .collect();
    Ok(OutageCurve { snr_db, p_out })
}

/// Matched CDFs of the direct-link product over `rounds` rounds for several
/// degrees, next to the empirical CDF of `samples` draws.
#[allow(clippy::too_many_arguments)]
pub fn matched_cdf(
    m: f64,
    rho: f64,
    rounds: usize,
    snr_db: f64,
    degrees: &[usize],
    points: usize,
    samples: usize,
    seed: u64,
) -> Result<CdfComparison, String> {
    if !(2..=MAX_GRID).contains(&points) {
        return Err(format!("points must be in 2..={MAX_GRID}"));
    }
    if samples > MAX_SAMPLES {
        return Err(format!("at most {MAX_SAMPLES} samples are allowed"));
    }
    let guard = degrees.iter().copied().max().unwrap_or(0);
    let cfg = system(m, rho, rounds, snr_db, 1.0)?;
    let engine = OutageEngine::new(&cfg, OutageSettings::with_degree(guard)).map_err(|e| e.to_string())?;
    let stats = engine
        .product_stats(ProductKey::Direct(rounds))
        .map_err(|e| e.to_string())?;
    let s = stats.sigma2.sqrt();
    let y: Vec<f64> = (0..points)
        .map(|i| (stats.mu + s * (-4.0 + 8.0 * i as f64 / (points - 1) as f64)).exp())
        .collect();

    let sampler = LinkSampler::new(&cfg.sd, cfg.snr_linear(), rounds).map_err(|e| e.to_string())?;
    let mut draws = Vec::with_capacity(samples);
    let mut g = vec![0.0; rounds];
    for b in 0..(samples as u64).div_ceil(BLOCK) {
        let mut rng = block_rng(seed, b);
        for _ in 0..BLOCK.min(samples as u64 - b * BLOCK) {
            sampler.sample_into(&mut rng, &mut g);
            draws.push(g.iter().map(|v| 1.0 + v).product::<f64>());
        }
    }
    draws.sort_by(f64::total_cmp);
    let empirical = y
        .iter()
        .map(|&v| draws.partition_point(|&d| d <= v) as f64 / draws.len().max(1) as f64)
        .collect();

    let curves = degrees
        .iter()
        .map(|&n| {
            let cdf = build_matched_cdf(&stats, n).map_err(|e| format!("degree {n}: {e}"))?;
            Ok(DegreeCurve {
                degree: n,
                cdf: y.iter().map(|&v| cdf.eval(v)).collect(),
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(CdfComparison {
        mu: stats.mu,
        sigma2: stats.sigma2,
        y,
        empirical,
        curves,
    })
}

/// Long-term average throughput and final-round outage over a rate grid.
#[allow(clippy::too_many_arguments)]
pub fn ltat_vs_rate(
    m: f64,
    rho: f64,
    max_rounds: usize,
    snr_db: f64,
    rate_lo: f64,
    rate_step: f64,
    rate_hi: f64,
    degree: usize,
) -> Result<LtatCurve, String> {
    let rate = grid(rate_lo, rate_step, rate_hi)?;
    let cfg = system(m, rho, max_rounds, snr_db, rate_lo)?;
    let e = OutageEngine::new(&cfg, OutageSettings::with_degree(degree)).map_err(|e| e.to_string())?;
    let ltat = rate.iter().map(|&r| ltat_at(&e, r).ok()).collect();
    let p_out = rate
        .iter()
        .map(|&r| e.outage_probability_at(max_rounds, r).ok())
        .collect();
    Ok(LtatCurve { rate, ltat, p_out })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = outageCurve)]
#[allow(clippy::too_many_arguments)]
pub fn outage_curve_js(
    m: f64,
    rho: f64,
    max_rounds: usize,
    rate: f64,
    snr_lo: f64,
    snr_step: f64,
    snr_hi: f64,
    degree: usize,
) -> Result<String, JsError> {
    to_js(outage_curve(m, rho, max_rounds, rate, snr_lo, snr_step, snr_hi, degree))
}

#[wasm_bindgen(js_name = matchedCdf)]
#[allow(clippy::too_many_arguments)]
pub fn matched_cdf_js(
    m: f64,
    rho: f64,
    rounds: usize,
    snr_db: f64,
    degrees: Vec<u32>,
    points: usize,
    samples: usize,
    seed: u32,
) -> Result<String, JsError> {
    let degrees: Vec<usize> = degrees.into_iter().map(|d| d as usize).collect();
    to_js(matched_cdf(m, rho, rounds, snr_db, &degrees, points, samples, seed as u64))
}

#[wasm_bindgen(js_name = ltatVsRate)]
#[allow(clippy::too_many_arguments)]
pub fn ltat_vs_rate_js(
    m: f64,
    rho: f64,
    max_rounds: usize,
    snr_db: f64,
    rate_lo: f64,
    rate_step: f64,
    rate_hi: f64,
    degree: usize,
) -> Result<String, JsError> {
    to_js(ltat_vs_rate(m, rho, max_rounds, snr_db, rate_lo, rate_step, rate_hi, degree))
}
