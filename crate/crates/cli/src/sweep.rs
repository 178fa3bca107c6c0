//! One-axis parameter sweeps.

use coopharq::config::MAX_RHO;
use coopharq::SystemConfig;
use serde::Serialize;

/// Largest number of points in a sweep.
pub const MAX_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrDb,
    Rho,
    M,
    Rate,
    MaxRounds,
    Theta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_db",
            Axis::Rho => "rho",
            Axis::M => "m",
            Axis::Rate => "rate",
            Axis::MaxRounds => "max_rounds",
            Axis::Theta => "theta",
        }
    }

    fn parse(s: &str) -> Result<Axis, String> {
        Ok(match s {
            "snr_db" => Axis::SnrDb,
            "rho" => Axis::Rho,
            "m" => Axis::M,
            "rate" => Axis::Rate,
            "max_rounds" => Axis::MaxRounds,
            "theta" => Axis::Theta,
            _ => {
                return Err(format!(
                    "unknown sweep key `{s}`; expected one of snr_db, rho, m, rate, max_rounds, theta"
                ))
            }
        })
    }
}

/// Inclusive grid `lo, lo + step, ..., hi` over one axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub axis: Axis,
    pub lo: f64,
    pub step: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn single(axis: Axis, value: f64) -> Sweep {
        Sweep {
            axis,
            lo: value,
            step: 0.0,
            hi: value,
            values: vec![value],
        }
    }
}

/// Parses `key=lo:step:hi`.
pub fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let (key, range) = s
        .split_once('=')
        .ok_or_else(|| format!("sweep `{s}` is not of the form key=lo:step:hi"))?;
    let axis = Axis::parse(key.trim())?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("sweep range `{range}` is not lo:step:hi"));
    }
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("`{p}` in sweep `{s}` is not a finite number"))
    };
    let (lo, step, hi) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if step <= 0.0 {
        return Err(format!("sweep step {step} must be positive"));
    }
    if hi < lo {
        return Err(format!("sweep upper end {hi} is below the lower end {lo}"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() + 1.0;
    if count > MAX_POINTS as f64 {
        return Err(format!("sweep has {count} points; at most {MAX_POINTS} are allowed"));
    }
    let values: Vec<f64> = (0..count as usize).map(|i| lo + step * i as f64).collect();
    if axis == Axis::MaxRounds && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
        return Err("max_rounds sweep values must be positive integers".into());
    }
    Ok(Sweep {
        axis,
        lo,
        step,
        hi,
        values,
    })
}

fn extend(v: &mut Vec<f64>, n: usize) {
    if let Some(&last) = v.last() {
        while v.len() < n {
            v.push(last);
        }
    }
}

/// Configuration with `axis` set to `value`. `rho` and `m` apply to all
/// three links; a larger `max_rounds` repeats the last round's parameters.
pub fn apply(cfg: &SystemConfig, axis: Axis, value: f64) -> Result<SystemConfig, String> {
    let mut c = cfg.clone();
    match axis {
        Axis::SnrDb => c.snr_db = value,
        Axis::Rate => c.rate = value,
        Axis::M => {
            for l in [&mut c.sd, &mut c.sr, &mut c.rd] {
                l.m = value;
            }
        }
        Axis::Rho => {
            if !(0.0..=MAX_RHO).contains(&value) {
                return Err(format!("rho = {value} outside [0, {MAX_RHO}]"));
            }
            for l in [&mut c.sd, &mut c.sr, &mut c.rd] {
                l.lambda = vec![value.powf(0.25); l.lambda.len()];
            }
        }
        Axis::MaxRounds => {
            let n = value as usize;
            c.max_rounds = n;
            for l in [&mut c.sd, &mut c.sr, &mut c.rd] {
                extend(&mut l.omega, n);
                extend(&mut l.lambda, n);
            }
        }
        Axis::Theta => {}
    }
    c.validate().map_err(|e| format!("{}={value}: {e}", axis.name()))?;
    Ok(c)
}
