//! End-to-end outage probability of the two-phase relaying protocol.
//!
//! With `BC = r` the round in which the relay first decodes, the destination
//! accumulates source rounds `1..=r` and relay rounds `r+1..=K`:
//!
//! `P_out(K) = Σ_r P(Y_{K,r} < 2^R | BC = r) · Pr(BC = r)`,
//!
//! `Pr(BC = r) = F_{Y^R_{r-1}}(2^R) - F_{Y^R_r}(2^R)` for `r < K`,
//! `Pr(BC = K) = F_{Y^R_{K-1}}(2^R)` and `F_{Y^R_0} ≡ 1`.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::channel::{LinkKind, LinkModel, SystemConfig};
use crate::error::{Error, Result};
use crate::lauricella::gamma_sum_cdf;
use crate::matcher::{build_matched_cdf, select_degree_with_guard, LognormalBase, MatchedCdf, DEFAULT_DEGREE_GUARD};
use crate::moments::{segment_stats, LinkTable, LogStats, MomentMethod};

/// Default approximation degree.
pub const DEFAULT_DEGREE: usize = 6;

/// Largest tolerated negative phase probability before it is an error.
pub const PHASE_NEGATIVE_TOLERANCE: f64 = 1e-8;

/// How the approximation degree is chosen for each product variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DegreeRule {
    Fixed(usize),
    /// Smallest degree whose NMSE bound is below the target.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageSettings {
    pub degree: DegreeRule,
    pub method: MomentMethod,
    /// Upper limit on any degree used.
    pub guard: usize,
}

impl Default for OutageSettings {
    fn default() -> Self {
        OutageSettings {
            degree: DegreeRule::Fixed(DEFAULT_DEGREE),
            method: MomentMethod::default(),
            guard: DEFAULT_DEGREE_GUARD,
        }
    }
}

impl OutageSettings {
    pub fn with_degree(degree: usize) -> Self {
        OutageSettings {
            degree: DegreeRule::Fixed(degree),
            guard: DEFAULT_DEGREE_GUARD.max(degree),
            ..Default::default()
        }
    }

    fn max_order(&self) -> usize {
        match self.degree {
            DegreeRule::Fixed(n) => n,
            DegreeRule::Epsilon(_) => self.guard,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.degree {
            DegreeRule::Fixed(n) if n > self.guard => Err(Error::InvalidArgument(format!(
                "degree {n} exceeds the guard {}",
                self.guard
            ))),
            DegreeRule::Epsilon(e) if !(e.is_finite() && e > 0.0) => {
                Err(Error::InvalidArgument(format!("epsilon {e} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Product variable whose CDF enters the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ProductKey {
    /// Source rounds `1..=K`.
    Direct(usize),
    /// Relay-link rounds `1..=r`.
    Relay(usize),
    /// Source rounds `1..=r` then destination-link rounds `r+1..=K`.
    Mixed { r: usize, k: usize },
}

/// Summary of one matched CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfDiagnostic {
    pub key: ProductKey,
    pub degree: usize,
    pub mu: f64,
    pub sigma2: f64,
    pub kappa_sum: f64,
    pub kappa: Vec<f64>,
}

/// Outage probabilities for `K = 1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageReport {
    pub rate: f64,
    /// `P_out(K)`, index `K - 1`.
    pub per_k: Vec<f64>,
    /// `P_out(K | BC = r)`, row `K - 1`, column `r - 1`.
    pub per_r_conditional: Vec<Vec<f64>>,
    /// `Pr(BC = r)` for rounds budget `K`, row `K - 1`, column `r - 1`.
    pub phase_probs: Vec<Vec<f64>>,
    pub diagnostics: Vec<CdfDiagnostic>,
    /// Largest amount by which an unclamped CDF left `[0, 1]`.
    pub max_clamp: f64,
}

enum StatsSource {
    Tables(HashMap<LinkKind, LinkTable>),
    Direct,
}

/// Caches matched CDFs of one configuration. The CDFs do not depend on the
/// rate, so any number of rates can be evaluated cheaply.
pub struct OutageEngine {
    cfg: SystemConfig,
    settings: OutageSettings,
    source: StatsSource,
    stats: Mutex<HashMap<(LinkKind, usize, usize), Arc<LogStats>>>,
    cdfs: Mutex<HashMap<ProductKey, Arc<MatchedCdf>>>,
    clamp: Mutex<f64>,
}

impl OutageEngine {
    pub fn new(cfg: &SystemConfig, settings: OutageSettings) -> Result<Self> {
        cfg.validate()?;
        settings.validate()?;
        let snr = cfg.snr_linear();
        let order = settings.max_order();
        let source = match settings.method {
            MomentMethod::Mixture(rule) => {
                let mut tables = HashMap::new();
                for kind in [LinkKind::Sd, LinkKind::Sr, LinkKind::Rd] {
                    let table = LinkTable::build(cfg.link(kind), 0..cfg.max_rounds, snr, order, rule)?;
                    tables.insert(kind, table);
                }
                StatsSource::Tables(tables)
            }
            MomentMethod::Laguerre { .. } => StatsSource::Direct,
        };
        Ok(OutageEngine {
            cfg: cfg.clone(),
            settings,
            source,
            stats: Mutex::new(HashMap::new()),
            cdfs: Mutex::new(HashMap::new()),
            clamp: Mutex::new(0.0),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn settings(&self) -> &OutageSettings {
        &self.settings
    }

    fn segment(&self, kind: LinkKind, rounds: Range<usize>) -> Result<Arc<LogStats>> {
        let key = (kind, rounds.start, rounds.end);
        if let Some(s) = self.stats.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let st = match &self.source {
            StatsSource::Tables(t) => t[&kind].segment_stats(rounds)?,
            StatsSource::Direct => segment_stats(
                self.cfg.link(kind),
                rounds,
                self.cfg.snr_linear(),
                self.settings.max_order(),
                self.settings.method,
            )?,
        };
        let st = Arc::new(st);
        self.stats.lock().unwrap().insert(key, st.clone());
        Ok(st)
    }

    /// Log-domain statistics of a product variable.
    pub fn product_stats(&self, key: ProductKey) -> Result<LogStats> {
        let m = self.cfg.max_rounds;
        let ok = match key {
            ProductKey::Direct(k) => (1..=m).contains(&k),
            ProductKey::Relay(r) => (1..m).contains(&r),
            ProductKey::Mixed { r, k } => r >= 1 && r < k && k <= m,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{key:?} is outside the {m}-round configuration"
            )));
        }
        Ok(match key {
            ProductKey::Direct(k) => (*self.segment(LinkKind::Sd, 0..k)?).clone(),
            ProductKey::Relay(r) => (*self.segment(LinkKind::Sr, 0..r)?).clone(),
            ProductKey::Mixed { r, k } => {
                let a = self.segment(LinkKind::Sd, 0..r)?;
                let b = self.segment(LinkKind::Rd, r..k)?;
                a.compose(&b)
            }
        })
    }

    /// Matched CDF of a product variable.
    pub fn matched_cdf(&self, key: ProductKey) -> Result<Arc<MatchedCdf>> {
        if let Some(c) = self.cdfs.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let stats = self.product_stats(key)?;
        let degree = match self.settings.degree {
            DegreeRule::Fixed(n) => n,
            DegreeRule::Epsilon(eps) => {
                let base = LognormalBase::from_stats(&stats)?;
                select_degree_with_guard(&base, eps, self.settings.guard)?.degree
            }
        };
        let cdf = Arc::new(build_matched_cdf(&stats, degree)?);
        self.cdfs.lock().unwrap().insert(key, cdf.clone());
        Ok(cdf)
    }

    fn eval(&self, key: ProductKey, y: f64) -> Result<f64> {
        let raw = self.matched_cdf(key)?.eval_raw(y);
        let excess = (-raw).max(raw - 1.0);
        if excess > 0.0 {
            let mut c = self.clamp.lock().unwrap();
            *c = c.max(excess);
        }
        Ok(raw.clamp(0.0, 1.0))
    }

    fn check_kr(&self, k: usize, r: usize) -> Result<()> {
        if !(1 <= r && r <= k && k <= self.cfg.max_rounds) {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= r <= K <= {}, got r = {r}, K = {k}",
                self.cfg.max_rounds
            )));
        }
        Ok(())
    }

    /// `P_out(K | BC = r)` at rate `rate`.
    pub fn conditional_outage_at(&self, k: usize, r: usize, rate: f64) -> Result<f64> {
        self.check_kr(k, r)?;
        let y = rate.exp2();
        if r == k {
            self.eval(ProductKey::Direct(k), y)
        } else {
            self.eval(ProductKey::Mixed { r, k }, y)
        }
    }

    /// `F_{Y^R_r}(2^R)`, with `F_{Y^R_0} = 1`.
    fn relay_cdf(&self, r: usize, y: f64) -> Result<f64> {
        if r == 0 {
            Ok(1.0)
        } else {
            self.eval(ProductKey::Relay(r), y)
        }
    }

    /// `Pr(BC = r)` when at most `K` rounds are used.
    pub fn phase_probability_at(&self, k: usize, r: usize, rate: f64) -> Result<f64> {
        self.check_kr(k, r)?;
        let y = rate.exp2();
        let upper = self.relay_cdf(r - 1, y)?;
        if r == k {
            return Ok(upper);
        }
        let d = upper - self.relay_cdf(r, y)?;
        if d < -PHASE_NEGATIVE_TOLERANCE {
            return Err(Error::Numeric(format!(
                "relay CDF increases from round {} to {r} by {:e} at rate {rate}",
                r - 1,
                -d
            )));
        }
        Ok(d.max(0.0))
    }

    /// `P_out(K)` at rate `rate`.
    pub fn outage_probability_at(&self, k: usize, rate: f64) -> Result<f64> {
        let mut total = 0.0;
        for r in 1..=k {
            total += self.conditional_outage_at(k, r, rate)? * self.phase_probability_at(k, r, rate)?;
        }
        Ok(total.clamp(0.0, 1.0))
    }

    pub fn conditional_outage(&self, k: usize, r: usize) -> Result<f64> {
        self.conditional_outage_at(k, r, self.cfg.rate)
    }

    pub fn phase_probability(&self, k: usize, r: usize) -> Result<f64> {
        self.phase_probability_at(k, r, self.cfg.rate)
    }

    pub fn outage_probability(&self, k: usize) -> Result<f64> {
        self.outage_probability_at(k, self.cfg.rate)
    }

    /// Full report at rate `rate`.
    pub fn report_at(&self, rate: f64) -> Result<OutageReport> {
        let m = self.cfg.max_rounds;
        let mut per_k = Vec::with_capacity(m);
        let mut cond = Vec::with_capacity(m);
        let mut phase = Vec::with_capacity(m);
        for k in 1..=m {
            let c: Vec<f64> = (1..=k)
                .map(|r| self.conditional_outage_at(k, r, rate))
                .collect::<Result<_>>()?;
            let p: Vec<f64> = (1..=k)
                .map(|r| self.phase_probability_at(k, r, rate))
                .collect::<Result<_>>()?;
            per_k.push(c.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0));
            cond.push(c);
            phase.push(p);
        }
        let mut diagnostics: Vec<CdfDiagnostic> = self
            .cdfs
            .lock()
            .unwrap()
            .iter()
            .map(|(key, c)| CdfDiagnostic {
                key: *key,
                degree: c.degree,
                mu: c.base.mu,
                sigma2: c.base.sigma2,
                kappa_sum: c.kappa_sum,
                kappa: c.kappa.clone(),
            })
            .collect();
        diagnostics.sort_by_key(|d| d.key);
        Ok(OutageReport {
            rate,
            per_k,
            per_r_conditional: cond,
            phase_probs: phase,
            diagnostics,
            max_clamp: *self.clamp.lock().unwrap(),
        })
    }

    pub fn report(&self) -> Result<OutageReport> {
        self.report_at(self.cfg.rate)
    }
}

/// `P_out(K | BC = r)` for a configuration.
pub fn conditional_outage(cfg: &SystemConfig, k: usize, r: usize, settings: OutageSettings) -> Result<f64> {
    OutageEngine::new(cfg, settings)?.conditional_outage(k, r)
}

/// `Pr(BC = r)` for a configuration.
pub fn phase_probability(cfg: &SystemConfig, k: usize, r: usize, settings: OutageSettings) -> Result<f64> {
    OutageEngine::new(cfg, settings)?.phase_probability(k, r)
}

/// `P_out(K)` for a configuration.
pub fn outage_probability(cfg: &SystemConfig, k: usize, settings: OutageSettings) -> Result<f64> {
    OutageEngine::new(cfg, settings)?.outage_probability(k)
}

/// Eigen-decomposition behind the Gamma-sum representation of
/// `Σ_{l ≤ r} γ_SD,l + Σ_{r < l ≤ K} γ_RD,l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSpectrum {
    /// `δ_k`, source block first.
    pub eigenvalues: Vec<f64>,
    /// Gamma shape paired with each eigenvalue.
    pub shapes: Vec<f64>,
    /// `E`, row-major, `K × K`.
    pub matrix_e: Vec<Vec<f64>>,
    /// Diagonal of `F`, `Ω/m` per round.
    pub matrix_f: Vec<f64>,
}

fn block(link: &LinkModel, rounds: Range<usize>) -> (DMatrix<f64>, Vec<f64>) {
    let n = rounds.len();
    let idx: Vec<usize> = rounds.collect();
    let e = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            link.lambda[idx[i]] * link.lambda[idx[j]]
        }
    });
    let f = idx.iter().map(|&l| link.omega[l] / link.m).collect();
    (e, f)
}

/// Spectrum of `F^{1/2} E F^{1/2}` for `K` rounds with the relay taking over
/// after round `r` (`r = K`: source only).
pub fn correlation_spectrum(cfg: &SystemConfig, k: usize, r: usize) -> Result<CorrelationSpectrum> {
    cfg.validate()?;
    if !(1 <= r && r <= k && k <= cfg.max_rounds) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= r <= K <= {}, got r = {r}, K = {k}",
            cfg.max_rounds
        )));
    }
    let mut blocks = vec![(cfg.sd.m, block(&cfg.sd, 0..r))];
    if r < k {
        blocks.push((cfg.rd.m, block(&cfg.rd, r..k)));
    }
    let mut eigenvalues = Vec::with_capacity(k);
    let mut shapes = Vec::with_capacity(k);
    let mut matrix_e = vec![vec![0.0; k]; k];
    let mut matrix_f = Vec::with_capacity(k);
    let mut off = 0;
    for (m, (e, f)) in blocks {
        let n = f.len();
        for i in 0..n {
            for j in 0..n {
                matrix_e[off + i][off + j] = e[(i, j)];
            }
        }
        let s = DMatrix::from_fn(n, n, |i, j| f[i].sqrt() * e[(i, j)] * f[j].sqrt());
        let mut d: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().cloned().collect();
        d.sort_by(|a, b| b.total_cmp(a));
        if let Some(bad) = d.iter().find(|x| !(**x > 0.0)) {
            return Err(Error::Numeric(format!(
                "correlation matrix is not positive definite (eigenvalue {bad:e})"
            )));
        }
        eigenvalues.extend(d);
        shapes.extend(std::iter::repeat_n(m, n));
        matrix_f.extend(f);
        off += n;
    }
    Ok(CorrelationSpectrum {
        eigenvalues,
        shapes,
        matrix_e,
        matrix_f,
    })
}

/// Lower and upper bounds `(F(K(2^{R/K} - 1)), F(2^R - 1))` on
/// `P_out(K | BC = r)`, where `F` is the CDF of the summed SNR.
pub fn outage_bounds(cfg: &SystemConfig, k: usize, r: usize) -> Result<(f64, f64)> {
    outage_bounds_at(cfg, k, r, cfg.rate)
}

pub fn outage_bounds_at(cfg: &SystemConfig, k: usize, r: usize, rate: f64) -> Result<(f64, f64)> {
    let spec = correlation_spectrum(cfg, k, r)?;
    let snr = cfg.snr_linear();
    let scales: Vec<f64> = spec.eigenvalues.iter().map(|d| d * snr).collect();
    let kf = k as f64;
    let lo = gamma_sum_cdf(&spec.shapes, &scales, kf * (rate / kf).exp2() - kf)?;
    let hi = gamma_sum_cdf(&spec.shapes, &scales, rate.exp2() - 1.0)?;
    Ok((lo, hi))
}
