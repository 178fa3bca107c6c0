//! Fading statistics of the three links and the system configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::special::{ln_gamma, ln_hyp0f1};

/// Smallest fading order accepted.
pub const MIN_FADING_ORDER: f64 = 0.5;

/// Generalized-correlation Nakagami-m link: per-round mean power gains and
/// correlation coefficients. Round indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub m: f64,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl LinkModel {
    pub fn new(m: f64, omega: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        let link = LinkModel { m, omega, lambda };
        link.validate()?;
        Ok(link)
    }

    /// Equal-power link where every pair of rounds has correlation `rho`.
    pub fn constant_correlation(rho: f64, rounds: usize, m: f64, omega: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain(format!(
                "correlation {rho} outside [0, 1); the quasi-static channel is excluded"
            )));
        }
        LinkModel::new(m, vec![omega; rounds], vec![rho.powf(0.25); rounds])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m >= MIN_FADING_ORDER) {
            return Err(Error::InvalidArgument(format!(
                "fading order {} must be a finite value >= {MIN_FADING_ORDER}",
                self.m
            )));
        }
        if self.omega.len() != self.lambda.len() {
            return Err(Error::InvalidArgument(format!(
                "omega has {} rounds but lambda has {}",
                self.omega.len(),
                self.lambda.len()
            )));
        }
        if let Some(w) = self.omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!("mean power {w} must be positive")));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(l.abs() < 1.0)) {
            return Err(Error::Domain(format!("|lambda| = {} must be below 1", l.abs())));
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.omega.len()
    }

    /// `λ_l² λ_k²`, the correlation between rounds `l` and `k`.
    pub fn cross_correlation(&self, l: usize, k: usize) -> Result<f64> {
        if l == k {
            return Err(Error::InvalidArgument("cross_correlation needs l != k".into()));
        }
        let n = self.rounds();
        if l >= n || k >= n {
            return Err(Error::InvalidArgument(format!(
                "round index out of range (link has {n} rounds)"
            )));
        }
        Ok((self.lambda[l] * self.lambda[k]).powi(2))
    }

    /// Conditional Gamma scale `b_l = Ω'(1-λ²)/m` at SNR scale `snr`.
    pub fn cond_scale(&self, l: usize, snr: f64) -> f64 {
        let l2 = self.lambda[l] * self.lambda[l];
        self.omega[l] * snr * (1.0 - l2) / self.m
    }

    /// Poisson rate multiplier `c_l = λ²/(1-λ²)`.
    pub fn cond_rate(&self, l: usize) -> f64 {
        let l2 = self.lambda[l] * self.lambda[l];
        l2 / (1.0 - l2)
    }
}

/// Joint density of `(γ_1, …, γ_K)` for the first `point.len()` rounds.
///
/// The shared mixing variable is integrated out with `quad`; any Laguerre
/// parameter is accepted and the remaining power of `t` is folded in.
pub fn joint_pdf(link: &LinkModel, snr: f64, point: &[f64], quad: &QuadratureRule) -> Result<f64> {
    if point.is_empty() || point.len() > link.rounds() {
        return Err(Error::InvalidArgument(format!(
            "point dimension {} must be in 1..={}",
            point.len(),
            link.rounds()
        )));
    }
    if point.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::InvalidArgument("joint_pdf needs positive coordinates".into()));
    }
    let m = link.m;
    let lg = ln_gamma(m);
    let mut base = 0.0;
    for (l, &g) in point.iter().enumerate() {
        let b = link.cond_scale(l, snr);
        let z = g / b;
        base += (m - 1.0) * z.ln() - z - lg - b.ln();
    }
    let shift = m - 1.0 - quad.alpha;
    let mut total = 0.0;
    for (&t, &w) in quad.nodes.iter().zip(&quad.weights) {
        let mut ln_f = shift * t.ln() - lg + base;
        for (l, &g) in point.iter().enumerate() {
            let c = link.cond_rate(l);
            let z = g / link.cond_scale(l, snr);
            ln_f += -c * t + ln_hyp0f1(m, c * t * z)?;
        }
        total += w * ln_f.exp();
    }
    Ok(total)
}

/// Which of the three links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    Sd,
    Sr,
    Rd,
}

/// Full cooperative system: three links, round budget `M`, rate `R` and
/// common transmit SNR `γ_T` in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub sd: LinkModel,
    pub sr: LinkModel,
    pub rd: LinkModel,
    pub max_rounds: usize,
    pub rate: f64,
    pub snr_db: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
        }
        for (name, link) in [("sd", &self.sd), ("sr", &self.sr), ("rd", &self.rd)] {
            link.validate()
                .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")))?;
            if link.rounds() < self.max_rounds {
                return Err(Error::InvalidArgument(format!(
                    "{name} describes {} rounds, fewer than max_rounds = {}",
                    link.rounds(),
                    self.max_rounds
                )));
            }
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidArgument(format!("rate {} must be positive", self.rate)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("snr_db must be finite".into()));
        }
        Ok(())
    }

    /// Constant-correlation configuration with the reference power profile
    /// `2Ω_SD = Ω_SR = Ω_RD = 1`, `R = 4`, `γ_T = 10 dB`.
    pub fn reference(m: f64, rho: f64, max_rounds: usize) -> Result<Self> {
        let cfg = SystemConfig {
            sd: LinkModel::constant_correlation(rho, max_rounds, m, 0.5)?,
            sr: LinkModel::constant_correlation(rho, max_rounds, m, 1.0)?,
            rd: LinkModel::constant_correlation(rho, max_rounds, m, 1.0)?,
            max_rounds,
            rate: 4.0,
            snr_db: 10.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn link(&self, kind: LinkKind) -> &LinkModel {
        match kind {
            LinkKind::Sd => &self.sd,
            LinkKind::Sr => &self.sr,
            LinkKind::Rd => &self.rd,
        }
    }

    pub fn link_mut(&mut self, kind: LinkKind) -> &mut LinkModel {
        match kind {
            LinkKind::Sd => &mut self.sd,
            LinkKind::Sr => &mut self.sr,
            LinkKind::Rd => &mut self.rd,
        }
    }

    /// Mean received SNR `Ω'_l = Ω_l γ_T` of round `l` on a link.
    pub fn effective_mean(&self, kind: LinkKind, l: usize) -> f64 {
        self.link(kind).omega[l] * self.snr_linear()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_laguerre_generalized;

    #[test]
    fn constant_correlation_lambda() {
        let l = LinkModel::constant_correlation(0.0, 3, 2.0, 1.0).unwrap();
        assert!(l.lambda.iter().all(|&x| x == 0.0));
        let l = LinkModel::constant_correlation(0.5, 3, 2.0, 1.0).unwrap();
        assert!((l.lambda[0] - 0.840_896_415_253_714_6).abs() < 1e-12);
        assert!((l.lambda[0].powi(4) - 0.5).abs() < 1e-14);
        let l = LinkModel::constant_correlation(0.9999, 3, 2.0, 1.0).unwrap();
        assert!((l.lambda[0] - 0.999_975).abs() < 1e-6 && l.lambda[0] < 1.0);
        assert!(LinkModel::constant_correlation(1.0, 3, 2.0, 1.0).is_err());
    }

    #[test]
    fn cross_correlation_product() {
        let l = LinkModel::new(1.0, vec![1.0; 2], vec![0.9, 0.5]).unwrap();
        assert!((l.cross_correlation(0, 1).unwrap() - 0.2025).abs() < 1e-15);
        assert!(l.cross_correlation(1, 1).is_err());
    }

    #[test]
    fn constant_correlation_round_trip() {
        for &rho in &[0.0, 0.1, 0.37, 0.9, 0.9999] {
            let l = LinkModel::constant_correlation(rho, 4, 1.0, 1.0).unwrap();
            assert!((l.cross_correlation(0, 3).unwrap() - rho).abs() < 1e-14);
        }
    }

    #[test]
    fn joint_pdf_single_round_is_gamma() {
        let link = LinkModel::constant_correlation(0.5, 1, 2.5, 1.0).unwrap();
        let q = gauss_laguerre_generalized(64, 1.5).unwrap();
        let snr = 4.0;
        for &g in &[0.3, 2.0, 7.0] {
            let v = joint_pdf(&link, snr, &[g], &q).unwrap();
            let m = 2.5;
            let th = 4.0 / m;
            let exact = ((m - 1.0) * g.ln() - g / th - ln_gamma(m) - m * th.ln()).exp();
            assert!(((v - exact) / exact).abs() < 1e-8, "{v} vs {exact}");
        }
    }

    #[test]
    fn joint_pdf_independent_factorizes() {
        let link = LinkModel::constant_correlation(0.0, 2, 1.5, 1.0).unwrap();
        let q = gauss_laguerre_generalized(16, 0.5).unwrap();
        let v = joint_pdf(&link, 2.0, &[0.4, 1.3], &q).unwrap();
        let single = |g: f64| {
            let m = 1.5;
            let th = 2.0 / m;
            ((m - 1.0) * g.ln() - g / th - ln_gamma(m) - m * th.ln()).exp()
        };
        let exact = single(0.4) * single(1.3);
        assert!(((v - exact) / exact).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        assert!(LinkModel::new(0.3, vec![1.0], vec![0.0]).is_err());
        assert!(LinkModel::new(1.0, vec![1.0], vec![1.0]).is_err());
        assert!(LinkModel::new(1.0, vec![-1.0], vec![0.0]).is_err());
        let mut cfg = SystemConfig::reference(2.0, 0.5, 3).unwrap();
        cfg.max_rounds = 4;
        assert!(cfg.validate().is_err());
    }
}
