//! Configuration file format.
//!
//! A configuration is TOML with flat key paths:
//!
//! ```toml
//! max_rounds = 3
//! rate = 4.0
//! snr_db = 10.0
//! sd.m = 6.0
//! sd.omega = 0.5          # scalar (all rounds) or one value per round
//! sd.rho = 0.5            # constant correlation ...
//! sr.m = 6.0
//! sr.omega = 1.0
//! sr.lambda = [0.8, 0.8, 0.8]   # ... or explicit per-round λ
//! rd.m = 6.0
//! rd.omega = 1.0
//! rd.rho = 0.5
//! ```
//!
//! Exactly one of `rho` and `lambda` must be given per link. `rho` must lie
//! in `[0, 0.9999]`.

use serde::Deserialize;

use crate::channel::{LinkModel, SystemConfig};
use crate::error::{Error, Result};

pub const MAX_RHO: f64 = 0.9999;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    m: f64,
    omega: Scalars,
    rho: Option<f64>,
    lambda: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    max_rounds: i64,
    rate: f64,
    snr_db: f64,
    sd: RawLink,
    sr: RawLink,
    rd: RawLink,
}

fn build_link(name: &str, raw: RawLink, rounds: usize) -> Result<LinkModel> {
    let omega = match raw.omega {
        Scalars::One(w) => vec![w; rounds],
        Scalars::Many(v) => v,
    };
    if omega.len() != rounds {
        return Err(Error::Config(format!(
            "{name}.omega: expected 1 or {rounds} values, got {}",
            omega.len()
        )));
    }
    let lambda = match (raw.rho, raw.lambda) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(format!(
                "{name}: give either {name}.rho or {name}.lambda, not both"
            )))
        }
        (None, None) => {
            return Err(Error::Config(format!("{name}: missing {name}.rho or {name}.lambda")))
        }
        (Some(rho), None) => {
            if !(0.0..=MAX_RHO).contains(&rho) {
                return Err(Error::Config(format!(
                    "{name}.rho = {rho} outside [0, {MAX_RHO}]"
                )));
            }
            vec![rho.powf(0.25); rounds]
        }
        (None, Some(l)) => {
            if l.len() != rounds {
                return Err(Error::Config(format!(
                    "{name}.lambda: expected {rounds} values, got {}",
                    l.len()
                )));
            }
            l
        }
    };
    LinkModel::new(raw.m, omega, lambda).map_err(|e| Error::Config(format!("{name}: {e}")))
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if raw.max_rounds < 1 || raw.max_rounds > 64 {
        return Err(Error::Config(format!(
            "max_rounds = {} outside 1..=64",
            raw.max_rounds
        )));
    }
    let rounds = raw.max_rounds as usize;
    let cfg = SystemConfig {
        sd: build_link("sd", raw.sd, rounds)?,
        sr: build_link("sr", raw.sr, rounds)?,
        rd: build_link("rd", raw.rd, rounds)?,
        max_rounds: rounds,
        rate: raw.rate,
        snr_db: raw.snr_db,
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Writes a configuration in the flat-key format, listing every round.
pub fn to_config_string(cfg: &SystemConfig) -> String {
    let mut s = String::new();
    s.push_str(&format!("max_rounds = {}\n", cfg.max_rounds));
    s.push_str(&format!("rate = {:?}\n", cfg.rate));
    s.push_str(&format!("snr_db = {:?}\n", cfg.snr_db));
    for (name, link) in [("sd", &cfg.sd), ("sr", &cfg.sr), ("rd", &cfg.rd)] {
        let n = cfg.max_rounds;
        s.push_str(&format!("{name}.m = {:?}\n", link.m));
        s.push_str(&format!("{name}.omega = {}\n", fmt_list(&link.omega[..n])));
        s.push_str(&format!("{name}.lambda = {}\n", fmt_list(&link.lambda[..n])));
    }
    s
}
