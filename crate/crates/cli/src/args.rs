//! Command-line grammar.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::sweep::{parse_sweep, Sweep};

#[derive(Parser, Debug)]
#[command(
    name = "coopharq",
    version,
    about = "Outage, diversity and throughput of cooperative HARQ-IR over correlated Nakagami-m fading"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Analytical outage probabilities P_out(K) and their phase decomposition.
    Outage,
    /// High-SNR slope of P_out(M) over an snr_db sweep.
    Diversity,
    /// Long-term average throughput at the configured rate.
    Ltat,
    /// Throughput-maximizing rate under the outage constraint theta.
    RateOpt,
    /// Monte Carlo replay of the protocol.
    Simulate,
    /// Analytical results against Monte Carlo, with a pass/fail table.
    Validate,
    /// Approximation degree needed for a target NMSE.
    Degree,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Outage => "outage",
            Command::Diversity => "diversity",
            Command::Ltat => "ltat",
            Command::RateOpt => "rate-opt",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Degree => "degree",
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct Options {
    /// TOML configuration; the built-in reference system when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// One sweep axis, key=lo:step:hi with key in snr_db, rho, m, rate, max_rounds, theta.
    #[arg(long, global = true, value_parser = parse_sweep)]
    pub sweep: Option<Sweep>,
    /// Fixed approximation degree N.
    #[arg(long, global = true, conflicts_with = "epsilon", value_parser = parse_degree)]
    pub degree: Option<usize>,
    /// Target NMSE; the degree is chosen per product variable.
    #[arg(long, global = true, value_parser = parse_positive)]
    pub epsilon: Option<f64>,
    /// Monte Carlo trials, integers such as 1000000 or 1e6.
    #[arg(long, global = true, default_value = "1e6", value_parser = parse_count)]
    pub trials: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Outage constraint for rate-opt, in (0, 1].
    #[arg(long, global = true, default_value = "1e-2", value_parser = parse_theta)]
    pub theta: f64,
    /// Rate search interval lo:hi for rate-opt, bits/s/Hz.
    #[arg(long, global = true, default_value = "0.1:12", value_parser = parse_range)]
    pub rate_range: (f64, f64),
}

fn parse_count(s: &str) -> Result<u64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !((1.0..=9.007_199_254_740_992e15).contains(&x) && x.fract() == 0.0) {
        return Err(format!("`{s}` is not a positive integer count"));
    }
    Ok(x as u64)
}

fn parse_degree(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a degree"))?;
    if n > coopharq::matcher::MAX_BASIS_DEGREE {
        return Err(format!(
            "degree {n} exceeds {}",
            coopharq::matcher::MAX_BASIS_DEGREE
        ));
    }
    Ok(n)
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn parse_theta(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x <= 1.0 => Ok(x),
        _ => Err(format!("`{s}` is not in (0, 1]")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("`{s}` is not lo:hi"))?;
    let lo = parse_positive(a)?;
    let hi = parse_positive(b)?;
    if lo >= hi {
        return Err(format!("empty rate range `{s}`"));
    }
    Ok((lo, hi))
}
