//! Inverse moments `α_n = E[Y^{-n}]` and log-domain statistics of
//! `Y = ∏(1 + γ_l)` over one link segment or two independent segments.
//!
//! Given the shared mixing variable `t ~ Gamma(m, 1)`, the rounds of a link
//! are independent with `γ_l = b_l z_l`, where `z_l | t` has density
//! `e^{-c_l t - z} z^{m-1} 0F1(;m; c_l t z) / Γ(m)`. Two discretizations of the
//! resulting double integral are provided:
//!
//! * [`MomentMethod::Mixture`] integrates the conditional moments on graded
//!   Gauss–Legendre meshes in `x = sqrt(z)` and `s = sqrt(t)`. It stays
//!   accurate when `λ → 1`, where the conditional densities concentrate
//!   far from the origin.
//! * [`MomentMethod::Laguerre`] uses generalized Gauss–Laguerre rules in both
//!   variables with the Ψ₂ kernel factored per round.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;

use crate::channel::LinkModel;
use crate::error::{Error, Result};
use crate::lauricella::lauricella_psi2;
use crate::quadrature::{gauss_laguerre_generalized, gauss_legendre, QuadratureRule};
use crate::special::{expected_log1p_gamma, ln_gamma, ln_hyp0f1_nonneg, log1p_gamma_variance};

/// Highest inverse-moment order computed by default.
pub const DEFAULT_MAX_ORDER: usize = 24;

/// Node tuples allowed in the literal tuple sum (`32^6`).
pub const TUPLE_WORK_LIMIT: f64 = 1.073_741_824e9;

/// A contiguous block of rounds on one link.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub link: LinkModel,
    pub rounds: Range<usize>,
}

/// `Y = ∏(1 + γ_l)` over one segment, or the product of two independent
/// segments (source rounds followed by relay rounds).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductRvSpec {
    pub segments: Vec<Segment>,
    pub snr_scale: f64,
}

impl ProductRvSpec {
    pub fn single(link: &LinkModel, rounds: Range<usize>, snr_scale: f64) -> Result<Self> {
        let spec = ProductRvSpec {
            segments: vec![Segment {
                link: link.clone(),
                rounds,
            }],
            snr_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mixed(
        first: &LinkModel,
        first_rounds: Range<usize>,
        second: &LinkModel,
        second_rounds: Range<usize>,
        snr_scale: f64,
    ) -> Result<Self> {
        let spec = ProductRvSpec {
            segments: vec![
                Segment {
                    link: first.clone(),
                    rounds: first_rounds,
                },
                Segment {
                    link: second.clone(),
                    rounds: second_rounds,
                },
            ],
            snr_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.segments.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "a product needs one or two segments, got {}",
                self.segments.len()
            )));
        }
        if !(self.snr_scale.is_finite() && self.snr_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "snr scale {} must be positive",
                self.snr_scale
            )));
        }
        for s in &self.segments {
            s.link.validate()?;
            if s.rounds.is_empty() || s.rounds.end > s.link.rounds() {
                return Err(Error::InvalidArgument(format!(
                    "round range {:?} invalid for a link with {} rounds",
                    s.rounds,
                    s.link.rounds()
                )));
            }
        }
        if self.segments.len() == 2 && self.segments[1].rounds.start != self.segments[0].rounds.end {
            return Err(Error::InvalidArgument(
                "segment round ranges must be disjoint and contiguous".into(),
            ));
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.segments.iter().map(|s| s.rounds.len()).sum()
    }
}

/// Mean and variance of `ln Y` with the inverse moments `α_0..`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogStats {
    pub mu: f64,
    pub sigma2: f64,
    pub inv_moments: Vec<f64>,
}

impl LogStats {
    /// Statistics of the product of two independent variables.
    pub fn compose(&self, other: &LogStats) -> LogStats {
        let n = self.inv_moments.len().min(other.inv_moments.len());
        LogStats {
            mu: self.mu + other.mu,
            sigma2: self.sigma2 + other.sigma2,
            inv_moments: (0..n)
                .map(|i| self.inv_moments[i] * other.inv_moments[i])
                .collect(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() || !self.mu.is_finite() {
            return Err(Error::Numeric(format!(
                "invalid log statistics: mu = {}, sigma2 = {}",
                self.mu, self.sigma2
            )));
        }
        Ok(())
    }
}

/// Graded composite Gauss–Legendre settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureRule {
    /// Gauss–Legendre points per panel.
    pub points: usize,
    /// Uniform panels beyond the graded region.
    pub linear_panels: usize,
    /// Finest panel width relative to the natural scale of the integrand.
    pub fine_scale: f64,
}

impl Default for MixtureRule {
    fn default() -> Self {
        MixtureRule {
            points: 16,
            linear_panels: 12,
            fine_scale: 1e-3,
        }
    }
}

/// Discretization used for the moment integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentMethod {
    Mixture(MixtureRule),
    Laguerre { nodes: usize, t_nodes: usize },
}

impl Default for MomentMethod {
    fn default() -> Self {
        MomentMethod::Mixture(MixtureRule::default())
    }
}

impl MomentMethod {
    pub fn laguerre_default() -> Self {
        MomentMethod::Laguerre {
            nodes: 32,
            t_nodes: 64,
        }
    }
}

struct Mesh {
    gx: Vec<f64>,
    gw: Vec<f64>,
    rule: MixtureRule,
}

impl Mesh {
    fn new(rule: MixtureRule) -> Self {
        let (gx, gw) = gauss_legendre(rule.points);
        Mesh { gx, gw, rule }
    }

    fn edges(&self, lo: f64, hi: f64, fine: f64) -> Vec<f64> {
        let n = self.rule.linear_panels;
        let mut edges = Vec::with_capacity(n + 40);
        if lo <= 0.0 {
            let lin0 = (hi / n as f64).min(1.0);
            edges.push(0.0);
            let mut x = fine.min(lin0);
            while x < lin0 {
                edges.push(x);
                x *= 2.0;
            }
            edges.push(lin0);
            for i in 1..=n {
                edges.push(lin0 + (hi - lin0) * i as f64 / n as f64);
            }
        } else {
            for i in 0..=n {
                edges.push(lo + (hi - lo) * i as f64 / n as f64);
            }
        }
        edges
    }

    fn for_each<F: FnMut(f64, f64)>(&self, edges: &[f64], mut f: F) {
        for pair in edges.windows(2) {
            let half = 0.5 * (pair[1] - pair[0]);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (pair[1] + pair[0]);
            for (&x, &w) in self.gx.iter().zip(&self.gw) {
                f(mid + half * x, half * w);
            }
        }
    }
}

/// Conditional moments of one round, tabulated on the outer mesh.
#[derive(Debug)]
struct RoundTable {
    constant: bool,
    width: usize,
    a: Vec<f64>,
    l: Vec<f64>,
    q: Vec<f64>,
}

impl RoundTable {
    #[inline]
    fn row(&self, j: usize) -> usize {
        if self.constant {
            0
        } else {
            j
        }
    }
    #[inline]
    fn a(&self, j: usize, n: usize) -> f64 {
        self.a[self.row(j) * self.width + n]
    }
    #[inline]
    fn l(&self, j: usize) -> f64 {
        self.l[self.row(j)]
    }
    #[inline]
    fn q(&self, j: usize) -> f64 {
        self.q[self.row(j)]
    }
}

/// Conditional-mixture tables of one link over a block of rounds.
#[derive(Debug, Clone)]
pub struct LinkTable {
    start: usize,
    weights: Vec<f64>,
    rounds: Vec<Arc<RoundTable>>,
    max_order: usize,
}

fn conditional_moments(mesh: &Mesh, m: f64, lg: f64, b: f64, ct: f64, a: &mut [f64]) -> (f64, f64) {
    let lo = (ct.sqrt() - 10.0).max(0.0);
    let hi = (ct + m).sqrt() + 12.0;
    let edges = mesh.edges(lo, hi, mesh.rule.fine_scale / b.sqrt());
    let mut l_sum = 0.0;
    let mut q_sum = 0.0;
    a.iter_mut().for_each(|v| *v = 0.0);
    let base = std::f64::consts::LN_2 - ct - lg;
    mesh.for_each(&edges, |x, w| {
        let z = x * x;
        let mut ln_d = base + (2.0 * m - 1.0) * x.ln() - z;
        if ct > 0.0 {
            ln_d += ln_hyp0f1_nonneg(m, ct * z);
        }
        let d = w * ln_d.exp();
        if d == 0.0 {
            return;
        }
        let inv = 1.0 / (1.0 + b * z);
        let lg1 = (b * z).ln_1p();
        let mut p = d;
        for v in a.iter_mut() {
            *v += p;
            p *= inv;
        }
        l_sum += d * lg1;
        q_sum += d * lg1 * lg1;
    });
    (l_sum, q_sum)
}

impl LinkTable {
    /// Tabulates rounds `rounds` of `link` at SNR scale `snr`.
    pub fn build(
        link: &LinkModel,
        rounds: Range<usize>,
        snr: f64,
        max_order: usize,
        rule: MixtureRule,
    ) -> Result<Self> {
        link.validate()?;
        if rounds.is_empty() || rounds.end > link.rounds() {
            return Err(Error::InvalidArgument(format!("round range {rounds:?} invalid")));
        }
        let mesh = Mesh::new(rule);
        let m = link.m;
        let lg = ln_gamma(m);
        let width = max_order + 1;
        let bc_max = rounds
            .clone()
            .map(|l| link.cond_scale(l, snr) * link.cond_rate(l))
            .fold(0.0f64, f64::max);
        let s_edges = mesh.edges(0.0, m.sqrt() + 10.0, rule.fine_scale / bc_max.max(1.0).sqrt());
        let mut t_nodes = Vec::new();
        let mut weights = Vec::new();
        mesh.for_each(&s_edges, |s, w| {
            let ln_w = std::f64::consts::LN_2 + (2.0 * m - 1.0) * s.ln() - s * s - lg;
            t_nodes.push(s * s);
            weights.push(w * ln_w.exp());
        });

        let mut cache: HashMap<(u64, u64), Arc<RoundTable>> = HashMap::new();
        let mut tables = Vec::with_capacity(rounds.len());
        for l in rounds.clone() {
            let b = link.cond_scale(l, snr);
            let c = link.cond_rate(l);
            let key = (b.to_bits(), c.to_bits());
            if let Some(t) = cache.get(&key) {
                tables.push(t.clone());
                continue;
            }
            let constant = c == 0.0;
            let rows = if constant { 1 } else { t_nodes.len() };
            let mut a = vec![0.0; rows * width];
            let mut lv = vec![0.0; rows];
            let mut qv = vec![0.0; rows];
            for j in 0..rows {
                let ct = if constant { 0.0 } else { c * t_nodes[j] };
                let (ls, qs) =
                    conditional_moments(&mesh, m, lg, b, ct, &mut a[j * width..(j + 1) * width]);
                lv[j] = ls;
                qv[j] = qs;
            }
            let table = Arc::new(RoundTable {
                constant,
                width,
                a,
                l: lv,
                q: qv,
            });
            cache.insert(key, table.clone());
            tables.push(table);
        }
        Ok(LinkTable {
            start: rounds.start,
            weights,
            rounds: tables,
            max_order,
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Statistics of `∏_{l ∈ rounds} (1 + γ_l)`.
    pub fn segment_stats(&self, rounds: Range<usize>) -> Result<LogStats> {
        if rounds.is_empty()
            || rounds.start < self.start
            || rounds.end > self.start + self.rounds.len()
        {
            return Err(Error::InvalidArgument(format!(
                "round range {rounds:?} outside the tabulated block"
            )));
        }
        let tabs = &self.rounds[rounds.start - self.start..rounds.end - self.start];
        let width = self.max_order + 1;
        let mut alpha = vec![0.0; width];
        let mut mu = 0.0;
        let mut e2 = 0.0;
        let mut prod = vec![0.0; width];
        for (j, &w) in self.weights.iter().enumerate() {
            prod.iter_mut().for_each(|p| *p = w);
            let mut sl = 0.0;
            let mut sl2 = 0.0;
            let mut sq = 0.0;
            for t in tabs {
                for (n, p) in prod.iter_mut().enumerate() {
                    *p *= t.a(j, n);
                }
                let l = t.l(j);
                sl += l;
                sl2 += l * l;
                sq += t.q(j);
            }
            for (a, p) in alpha.iter_mut().zip(&prod) {
                *a += p;
            }
            mu += w * sl;
            e2 += w * (sl * sl - sl2 + sq);
        }
        let norm = alpha[0];
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!("mixture normalization {norm} invalid")));
        }
        mu /= norm;
        let sigma2 = e2 / norm - mu * mu;
        let inv_moments: Vec<f64> = alpha.iter().map(|a| a / norm).collect();
        let stats = LogStats {
            mu,
            sigma2,
            inv_moments,
        };
        stats.check()?;
        Ok(stats)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

fn laguerre_rules(m: f64, nodes: usize, t_nodes: usize) -> Result<(QuadratureRule, QuadratureRule)> {
    Ok((
        gauss_laguerre_generalized(nodes, m - 1.0)?,
        gauss_laguerre_generalized(t_nodes, m - 1.0)?,
    ))
}

/// Inverse moments of one segment by the factored Gauss–Laguerre sum.
fn laguerre_segment_moments(
    link: &LinkModel,
    rounds: Range<usize>,
    snr: f64,
    max_order: usize,
    nodes: usize,
    t_nodes: usize,
) -> Result<Vec<f64>> {
    let m = link.m;
    let (qz, qt) = laguerre_rules(m, nodes, t_nodes)?;
    let k = rounds.len() as f64;
    let csum: f64 = rounds.clone().map(|l| link.cond_rate(l)).sum();
    let pref = -m * csum.ln_1p() - (k + 1.0) * ln_gamma(m);
    let mut out = vec![0.0; max_order + 1];
    let mut terms = vec![0.0; qt.order];
    let mut inner = vec![0.0; qz.order];
    for (n, slot) in out.iter_mut().enumerate() {
        for (q, (&tau, &wt)) in qt.nodes.iter().zip(&qt.weights).enumerate() {
            let mut ln_term = wt.ln();
            for l in rounds.clone() {
                let b = link.cond_scale(l, snr);
                let varpi = link.cond_rate(l) / (1.0 + csum);
                for (p, (&zeta, &wz)) in qz.nodes.iter().zip(&qz.weights).enumerate() {
                    inner[p] = wz.ln() - n as f64 * (b * zeta).ln_1p()
                        + ln_hyp0f1_nonneg(m, varpi * zeta * tau);
                }
                ln_term += log_sum_exp(&inner);
            }
            terms[q] = ln_term;
        }
        *slot = (pref + log_sum_exp(&terms)).exp();
    }
    out[0] = 1.0;
    Ok(out)
}

/// Variance of `ln` of one segment: adaptive marginal variances plus
/// Gauss–Laguerre covariances through the bivariate Ψ₂ kernel.
fn laguerre_segment_variance(
    link: &LinkModel,
    rounds: Range<usize>,
    snr: f64,
    nodes: usize,
    t_nodes: usize,
) -> Result<f64> {
    let m = link.m;
    let (qz, qt) = laguerre_rules(m, nodes, t_nodes)?;
    let lg = ln_gamma(m);
    let idx: Vec<usize> = rounds.collect();
    let mut var = 0.0;
    for &l in &idx {
        var += log1p_gamma_variance(m, link.omega[l] * snr)?;
    }
    for (ii, &i) in idx.iter().enumerate() {
        for &j in &idx[ii + 1..] {
            let (bi, bj) = (link.cond_scale(i, snr), link.cond_scale(j, snr));
            let denom = 1.0 + link.cond_rate(i) + link.cond_rate(j);
            let (vi, vj) = (link.cond_rate(i) / denom, link.cond_rate(j) / denom);
            let pref = -m * denom.ln() - 3.0 * lg;
            // ln Σ_p w_p f(ζ_p) 0F1(ϖ ζ_p τ) with f = ln(1 + bζ) or f = 1
            let kernel = |b: Option<f64>, varpi: f64, tau: f64| -> f64 {
                let v: Vec<f64> = qz
                    .nodes
                    .iter()
                    .zip(&qz.weights)
                    .map(|(&z, &w)| {
                        let f = b.map_or(0.0, |b| (b * z).ln_1p().ln());
                        w.ln() + f + ln_hyp0f1_nonneg(m, varpi * z * tau)
                    })
                    .collect();
                log_sum_exp(&v)
            };
            let mut cross = Vec::with_capacity(qt.order);
            let mut mean_i = Vec::with_capacity(qt.order);
            let mut mean_j = Vec::with_capacity(qt.order);
            for (&tau, &wt) in qt.nodes.iter().zip(&qt.weights) {
                let (li, lj) = (kernel(Some(bi), vi, tau), kernel(Some(bj), vj, tau));
                let (oi, oj) = (kernel(None, vi, tau), kernel(None, vj, tau));
                cross.push(wt.ln() + li + lj);
                mean_i.push(wt.ln() + li + oj);
                mean_j.push(wt.ln() + oi + lj);
            }
            let e = |v: &[f64]| (pref + log_sum_exp(v)).exp();
            var += 2.0 * (e(&cross) - e(&mean_i) * e(&mean_j));
        }
    }
    if !(var > 0.0) {
        return Err(Error::Numeric(format!("log variance {var} is not positive")));
    }
    Ok(var)
}

/// Statistics of a single segment under `method`.
pub fn segment_stats(
    link: &LinkModel,
    rounds: Range<usize>,
    snr: f64,
    max_order: usize,
    method: MomentMethod,
) -> Result<LogStats> {
    match method {
        MomentMethod::Mixture(rule) => {
            LinkTable::build(link, rounds.clone(), snr, max_order, rule)?.segment_stats(rounds)
        }
        MomentMethod::Laguerre { nodes, t_nodes } => {
            let inv_moments =
                laguerre_segment_moments(link, rounds.clone(), snr, max_order, nodes, t_nodes)?;
            let mut mu = 0.0;
            for l in rounds.clone() {
                mu += expected_log1p_gamma(link.m, link.omega[l] * snr)?;
            }
            let sigma2 = laguerre_segment_variance(link, rounds, snr, nodes, t_nodes)?;
            let stats = LogStats {
                mu,
                sigma2,
                inv_moments,
            };
            stats.check()?;
            Ok(stats)
        }
    }
}

/// `μ`, `σ²` and `α_0..α_{max_order}` of `spec`.
pub fn log_stats(spec: &ProductRvSpec, max_order: usize, method: MomentMethod) -> Result<LogStats> {
    spec.validate()?;
    let mut acc: Option<LogStats> = None;
    for s in &spec.segments {
        let st = segment_stats(&s.link, s.rounds.clone(), spec.snr_scale, max_order, method)?;
        acc = Some(match acc {
            None => st,
            Some(prev) => prev.compose(&st),
        });
    }
    acc.ok_or_else(|| Error::InvalidArgument("empty product".into()))
}

/// `α_n = E[Y^{-n}]`.
pub fn inverse_moment(spec: &ProductRvSpec, n: usize, method: MomentMethod) -> Result<f64> {
    if n == 0 {
        spec.validate()?;
        return Ok(1.0);
    }
    Ok(log_stats(spec, n, method)?.inv_moments[n])
}

/// `α_0..α_{max_order}`.
pub fn inverse_moments(spec: &ProductRvSpec, max_order: usize, method: MomentMethod) -> Result<Vec<f64>> {
    Ok(log_stats(spec, max_order, method)?.inv_moments)
}

/// `E[ln Y]` as a sum of per-round adaptive integrals.
pub fn log_mean(spec: &ProductRvSpec) -> Result<f64> {
    spec.validate()?;
    let mut mu = 0.0;
    for s in &spec.segments {
        for l in s.rounds.clone() {
            mu += expected_log1p_gamma(s.link.m, s.link.omega[l] * spec.snr_scale)?;
        }
    }
    Ok(mu)
}

/// `Var[ln Y]`; segments are independent so their variances add.
pub fn log_variance(spec: &ProductRvSpec, method: MomentMethod) -> Result<f64> {
    spec.validate()?;
    let mut var = 0.0;
    for s in &spec.segments {
        var += match method {
            MomentMethod::Laguerre { nodes, t_nodes } => {
                laguerre_segment_variance(&s.link, s.rounds.clone(), spec.snr_scale, nodes, t_nodes)?
            }
            MomentMethod::Mixture(_) => {
                segment_stats(&s.link, s.rounds.clone(), spec.snr_scale, 0, method)?.sigma2
            }
        };
    }
    if !(var > 0.0) {
        return Err(Error::Numeric(format!("log variance {var} is not positive")));
    }
    Ok(var)
}

/// `α_n` by the literal sum over node tuples, each weighted by Ψ₂.
///
/// Cost grows as `nodes^K`; intended as a reference for small `K`.
pub fn inverse_moment_tuple_sum(
    spec: &ProductRvSpec,
    n: usize,
    nodes: usize,
    t_nodes: usize,
) -> Result<f64> {
    spec.validate()?;
    let mut total = 1.0;
    for s in &spec.segments {
        let k = s.rounds.len();
        let work = (nodes as f64).powi(k as i32);
        if work > TUPLE_WORK_LIMIT {
            return Err(Error::Resource(format!(
                "{nodes}^{k} node tuples exceed the work limit; lower the node count or the number of rounds"
            )));
        }
        let link = &s.link;
        let m = link.m;
        let (qz, qt) = laguerre_rules(m, nodes, t_nodes)?;
        let idx: Vec<usize> = s.rounds.clone().collect();
        let csum: f64 = idx.iter().map(|&l| link.cond_rate(l)).sum();
        let pref = (-m * csum.ln_1p() - k as f64 * ln_gamma(m)).exp();
        let varpi: Vec<f64> = idx.iter().map(|&l| link.cond_rate(l) / (1.0 + csum)).collect();
        let b: Vec<f64> = idx.iter().map(|&l| link.cond_scale(l, spec.snr_scale)).collect();
        let mut tuple = vec![0usize; k];
        let mut args = vec![0.0; k];
        let mut sum = 0.0;
        loop {
            let mut w = 1.0;
            for r in 0..k {
                let p = tuple[r];
                w *= qz.weights[p] * (1.0 + b[r] * qz.nodes[p]).powi(-(n as i32));
                args[r] = varpi[r] * qz.nodes[p];
            }
            sum += w * lauricella_psi2(m, &args, &qt)?;
            let mut r = 0;
            loop {
                if r == k {
                    total *= pref * sum;
                    break;
                }
                tuple[r] += 1;
                if tuple[r] < nodes {
                    break;
                }
                tuple[r] = 0;
                r += 1;
            }
            if r == k {
                break;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: f64, rho: f64, omega: f64, k: usize) -> ProductRvSpec {
        let link = LinkModel::constant_correlation(rho, k, m, omega).unwrap();
        ProductRvSpec::single(&link, 0..k, 1.0).unwrap()
    }

    #[test]
    fn zeroth_moment_is_one() {
        let s = spec(2.0, 0.5, 3.0, 2);
        assert_eq!(inverse_moment(&s, 0, MomentMethod::default()).unwrap(), 1.0);
        assert_eq!(inverse_moments(&s, 4, MomentMethod::laguerre_default()).unwrap()[0], 1.0);
    }

    #[test]
    fn exponential_integral_oracle() {
        let s = spec(1.0, 0.0, 1.0, 1);
        for method in [MomentMethod::default(), MomentMethod::laguerre_default()] {
            let v = inverse_moment(&s, 1, method).unwrap();
            let tol = if matches!(method, MomentMethod::Mixture(_)) { 1e-12 } else { 1e-6 };
            assert!((v - 0.596_347_362_323_194_1).abs() < tol, "{method:?}: {v}");
        }
    }

    #[test]
    fn methods_agree_at_moderate_correlation() {
        let s = spec(6.0, 0.5, 5.0, 3);
        let a = inverse_moments(&s, 6, MomentMethod::default()).unwrap();
        let b = inverse_moments(&s, 6, MomentMethod::laguerre_default()).unwrap();
        for n in 1..=6 {
            assert!(((a[n] - b[n]) / a[n]).abs() < 1e-8, "n={n}: {} vs {}", a[n], b[n]);
        }
        let va = log_variance(&s, MomentMethod::default()).unwrap();
        let vb = log_variance(&s, MomentMethod::laguerre_default()).unwrap();
        assert!((va - vb).abs() < 1e-7, "{va} vs {vb}");
        let ma = log_stats(&s, 2, MomentMethod::default()).unwrap().mu;
        assert!((ma - log_mean(&s).unwrap()).abs() < 1e-11);
    }

    #[test]
    fn tuple_sum_matches_factored() {
        let s = spec(2.0, 0.3, 2.0, 2);
        let f = inverse_moments(&s, 3, MomentMethod::Laguerre { nodes: 16, t_nodes: 32 }).unwrap();
        for (n, fv) in f.iter().enumerate().skip(1) {
            let t = inverse_moment_tuple_sum(&s, n, 16, 32).unwrap();
            assert!(((t - fv) / t).abs() < 1e-12, "n={n}: {t} vs {fv}");
        }
    }

    #[test]
    fn tuple_sum_work_guard() {
        let s = spec(2.0, 0.3, 2.0, 7);
        assert!(matches!(inverse_moment_tuple_sum(&s, 1, 32, 32), Err(Error::Resource(_))));
    }

    #[test]
    fn independent_variance_is_sum() {
        let s = spec(1.5, 0.0, 2.0, 3);
        let v1 = log1p_gamma_variance(1.5, 2.0).unwrap();
        for method in [MomentMethod::default(), MomentMethod::laguerre_default()] {
            let v = log_variance(&s, method).unwrap();
            assert!((v - 3.0 * v1).abs() < 1e-8, "{method:?}: {v} vs {}", 3.0 * v1);
        }
    }

    #[test]
    fn single_round_variance_oracle() {
        let s = spec(1.0, 0.0, 1.0, 1);
        let v = log_variance(&s, MomentMethod::default()).unwrap();
        let mu = 0.596_347_362_323_194_1;
        let e2 = crate::quadrature::integrate_to_inf(|t| t.ln_1p().powi(2) * (-t).exp(), 0.0, 1e-15, 1e-13)
            .unwrap();
        assert!((v - (e2 - mu * mu)).abs() < 1e-6);
    }

    #[test]
    fn two_segment_composition() {
        let a = LinkModel::constant_correlation(0.5, 4, 2.0, 1.0).unwrap();
        let b = LinkModel::constant_correlation(0.3, 4, 2.0, 2.0).unwrap();
        let mixed = ProductRvSpec::mixed(&a, 0..2, &b, 2..4, 3.0).unwrap();
        let s1 = ProductRvSpec::single(&a, 0..2, 3.0).unwrap();
        let s2 = ProductRvSpec::single(&b, 2..4, 3.0).unwrap();
        let method = MomentMethod::default();
        let am = inverse_moments(&mixed, 5, method).unwrap();
        let a1 = inverse_moments(&s1, 5, method).unwrap();
        let a2 = inverse_moments(&s2, 5, method).unwrap();
        for n in 0..=5 {
            assert!((am[n] - a1[n] * a2[n]).abs() <= 1e-12 * am[n]);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let a = LinkModel::constant_correlation(0.5, 4, 2.0, 1.0).unwrap();
        assert!(ProductRvSpec::single(&a, 0..5, 1.0).is_err());
        assert!(ProductRvSpec::mixed(&a, 0..2, &a, 3..4, 1.0).is_err());
        assert!(ProductRvSpec::single(&a, 0..0, 1.0).is_err());
    }
}
