//! Exact sampler of the correlated fading model and protocol simulation.
//!
//! Expanding `0F1(;m; c t z) e^{-c t} = Σ_k Poisson(k; c t) Γ(m)/Γ(m+k) (c t z)^k / k!`
//! shows that `z | t` is a Poisson(`c t`) mixture of `Gamma(m + k, 1)`
//! variables, so each draw needs one `Gamma(m, 1)` mixing variable and one
//! Poisson and one Gamma variate per round.
//!
//! Trials run in blocks of [`BLOCK`]; block `i` uses ChaCha8 stream `i` of
//! the seed, so results are identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;

use crate::channel::{LinkModel, SystemConfig};
use crate::error::{Error, Result};
use crate::moments::ProductRvSpec;

/// Trials per RNG stream.
pub const BLOCK: u64 = 4096;

/// Pre-computed sampling constants for one link.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    mixing: Gamma<f64>,
    base: Gamma<f64>,
    m: f64,
    scale: Vec<f64>,
    rate: Vec<f64>,
}

impl LinkSampler {
    /// Sampler for rounds `0..rounds` of `link` at SNR scale `snr`.
    pub fn new(link: &LinkModel, snr: f64, rounds: usize) -> Result<Self> {
        link.validate()?;
        if rounds > link.rounds() {
            return Err(Error::InvalidArgument(format!(
                "{rounds} rounds requested from a link with {}",
                link.rounds()
            )));
        }
        let gamma = |s| Gamma::new(s, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()));
        Ok(LinkSampler {
            mixing: gamma(link.m)?,
            base: gamma(link.m)?,
            m: link.m,
            scale: (0..rounds).map(|l| link.cond_scale(l, snr)).collect(),
            rate: (0..rounds).map(|l| link.cond_rate(l)).collect(),
        })
    }

    pub fn rounds(&self) -> usize {
        self.scale.len()
    }

    /// Fills `out` with the SNRs of rounds `0..out.len()`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let t = self.mixing.sample(rng);
        for (l, g) in out.iter_mut().enumerate() {
            let lam = self.rate[l] * t;
            let k = if lam > 0.0 {
                Poisson::new(lam).map(|p| p.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            };
            let z = if k == 0.0 {
                self.base.sample(rng)
            } else {
                Gamma::new(self.m + k, 1.0).expect("shape is positive").sample(rng)
            };
            *g = self.scale[l] * z;
        }
    }
}

/// One draw of `(γ_1, …, γ_K)` on `link`.
pub fn sample_correlated_gammas<R: Rng + ?Sized>(
    link: &LinkModel,
    snr: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let s = LinkSampler::new(link, snr, k)?;
    let mut out = vec![0.0; k];
    s.sample_into(rng, &mut out);
    Ok(out)
}

/// RNG for block `block` of a run seeded with `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

fn blocks(trials: u64) -> Vec<(u64, u64)> {
    (0..trials.div_ceil(BLOCK))
        .map(|b| (b, BLOCK.min(trials - b * BLOCK)))
        .collect()
}

#[cfg(feature = "parallel")]
fn map_blocks<T, F>(trials: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    use rayon::prelude::*;
    let list = blocks(trials);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| list.par_iter().map(|&(b, n)| f(b, n)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T, F>(trials: u64, _workers: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(u64, u64) -> T,
{
    Ok(blocks(trials).into_iter().map(|(b, n)| f(b, n)).collect())
}

#[derive(Debug, Clone, Default)]
struct Tally {
    outage: Vec<u64>,
    decode: Vec<u64>,
    sum_b: u64,
    sum_b2: u64,
    sum_ab: u64,
}

impl Tally {
    fn new(m: usize) -> Self {
        Tally {
            outage: vec![0; m],
            decode: vec![0; m],
            ..Default::default()
        }
    }

    fn merge(&mut self, o: &Tally) {
        for (a, b) in self.outage.iter_mut().zip(&o.outage) {
            *a += b;
        }
        for (a, b) in self.decode.iter_mut().zip(&o.decode) {
            *a += b;
        }
        self.sum_b += o.sum_b;
        self.sum_b2 += o.sum_b2;
        self.sum_ab += o.sum_ab;
    }
}

/// Protocol simulation estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub trials: u64,
    pub seed: u64,
    pub rate: f64,
    /// Trials in outage after `K` rounds, index `K - 1`.
    pub outage_counts: Vec<u64>,
    pub outage: Vec<f64>,
    pub outage_se: Vec<f64>,
    /// Trials whose relay first decodes in round `r < M`, index `r - 1`;
    /// the last entry counts relays that never decode within `M - 1` rounds.
    pub decode_counts: Vec<u64>,
    /// `Pr(BC = r)` for budget `K`, row `K - 1`, column `r - 1`.
    pub phase_probs: Vec<Vec<f64>>,
    pub phase_se: Vec<Vec<f64>>,
    pub ltat: f64,
    pub ltat_se: f64,
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Replays the two-phase protocol `trials` times.
pub fn simulate_protocol(cfg: &SystemConfig, trials: u64, seed: u64, workers: usize) -> Result<SimResult> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let m = cfg.max_rounds;
    let snr = cfg.snr_linear();
    let sd = LinkSampler::new(&cfg.sd, snr, m)?;
    let sr = LinkSampler::new(&cfg.sr, snr, m - 1)?;
    let rd = LinkSampler::new(&cfg.rd, snr, m)?;
    let rate = cfg.rate;
    let parts = map_blocks(trials, workers, |block, n| {
        let mut rng = block_rng(seed, block);
        let mut t = Tally::new(m);
        let (mut gsd, mut gsr, mut grd) = (vec![0.0; m], vec![0.0; m - 1], vec![0.0; m]);
        for _ in 0..n {
            sd.sample_into(&mut rng, &mut gsd);
            sr.sample_into(&mut rng, &mut gsr);
            rd.sample_into(&mut rng, &mut grd);
            let mut acc = 0.0;
            let mut d = m;
            for (l, g) in gsr.iter().enumerate() {
                acc += g.ln_1p() / std::f64::consts::LN_2;
                if acc >= rate {
                    d = l + 1;
                    break;
                }
            }
            t.decode[d - 1] += 1;
            let mut info = 0.0;
            let mut fails = 0u64;
            for l in 0..m {
                let g = if l < d { gsd[l] } else { grd[l] };
                info += g.ln_1p() / std::f64::consts::LN_2;
                if info < rate {
                    t.outage[l] += 1;
                    if l + 1 < m {
                        fails += 1;
                    }
                }
            }
            let a = (info >= rate) as u64;
            let b = 1 + fails;
            t.sum_b += b;
            t.sum_b2 += b * b;
            t.sum_ab += a * b;
        }
        t
    })?;
    let mut tally = Tally::new(m);
    for p in &parts {
        tally.merge(p);
    }
    let nf = trials as f64;
    let outage: Vec<f64> = tally.outage.iter().map(|&c| c as f64 / nf).collect();
    let outage_se = outage.iter().map(|&p| binomial_se(p, trials)).collect();
    let mut phase_probs = Vec::with_capacity(m);
    let mut phase_se = Vec::with_capacity(m);
    for k in 1..=m {
        let mut row: Vec<f64> = tally.decode[..k - 1].iter().map(|&c| c as f64 / nf).collect();
        let tail: u64 = tally.decode[k - 1..].iter().sum();
        row.push(tail as f64 / nf);
        phase_se.push(row.iter().map(|&p| binomial_se(p, trials)).collect());
        phase_probs.push(row);
    }
    // ratio estimator R·mean(A)/mean(B) with a delta-method error
    let a_mean = 1.0 - outage[m - 1];
    let b_mean = tally.sum_b as f64 / nf;
    let var_a = a_mean * (1.0 - a_mean);
    let var_b = tally.sum_b2 as f64 / nf - b_mean * b_mean;
    let cov = tally.sum_ab as f64 / nf - a_mean * b_mean;
    let ratio = a_mean / b_mean;
    let var = (var_a - 2.0 * ratio * cov + ratio * ratio * var_b).max(0.0) / (b_mean * b_mean * nf);
    Ok(SimResult {
        trials,
        seed,
        rate,
        outage_counts: tally.outage,
        outage,
        outage_se,
        decode_counts: tally.decode,
        phase_probs,
        phase_se,
        ltat: rate * ratio,
        ltat_se: rate * var.sqrt(),
    })
}

/// Empirical CDF of a product variable on a sorted grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    pub grid: Vec<f64>,
    pub probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub trials: u64,
}

/// Fraction of sampled `Y` at or below each grid point.
pub fn empirical_cdf(
    spec: &ProductRvSpec,
    trials: u64,
    seed: u64,
    grid: &[f64],
    workers: usize,
) -> Result<EmpiricalCdf> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("grid must be sorted ascending".into()));
    }
    let samplers: Vec<(LinkSampler, std::ops::Range<usize>)> = spec
        .segments
        .iter()
        .map(|s| Ok((LinkSampler::new(&s.link, spec.snr_scale, s.rounds.end)?, s.rounds.clone())))
        .collect::<Result<_>>()?;
    let parts = map_blocks(trials, workers, |block, n| {
        let mut rng = block_rng(seed, block);
        let mut hist = vec![0u64; grid.len() + 1];
        let mut bufs: Vec<Vec<f64>> = samplers.iter().map(|(s, _)| vec![0.0; s.rounds()]).collect();
        for _ in 0..n {
            let mut ln_y = 0.0;
            for ((s, range), buf) in samplers.iter().zip(bufs.iter_mut()) {
                s.sample_into(&mut rng, buf);
                ln_y += buf[range.clone()].iter().map(|g| g.ln_1p()).sum::<f64>();
            }
            let y = ln_y.exp();
            hist[grid.partition_point(|&g| g < y)] += 1;
        }
        hist
    })?;
    let mut hist = vec![0u64; grid.len() + 1];
    for p in &parts {
        for (a, b) in hist.iter_mut().zip(p) {
            *a += b;
        }
    }
    let mut acc = 0u64;
    let probs: Vec<f64> = hist[..grid.len()]
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / trials as f64
        })
        .collect();
    Ok(EmpiricalCdf {
        grid: grid.to_vec(),
        std_errors: probs.iter().map(|&p| binomial_se(p, trials)).collect(),
        probs,
        trials,
    })
}
