//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures are reported, not fatal; set `ACCEPTANCE_STRICT=1` to make any
//! FAIL line fail the test.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use coopharq::channel::{LinkModel, SystemConfig};
use coopharq::diversity::estimate_diversity;
use coopharq::matcher::{
    basis_coefficients, build_matched_cdf, eta_bound, eta_coordinates, nmse_bound, select_degree,
    LognormalBase,
};
use coopharq::moments::{log_stats, MomentMethod, ProductRvSpec};
use coopharq::monte_carlo::{block_rng, empirical_cdf, LinkSampler};
use coopharq::outage::{OutageEngine, OutageSettings, ProductKey};
use coopharq::special::reg_lower_gamma;
use coopharq::throughput::{optimal_rate_with, DEFAULT_RATE_BOUNDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn method() -> MomentMethod {
    MomentMethod::default()
}

fn k1_exactness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut failures = 0;
    for _ in 0..50 {
        let m = rng.random_range(0.5..=8.0);
        let rho = rng.random_range(0.0..=0.99);
        let db = rng.random_range(0.0..=30.0);
        let mut cfg = SystemConfig::reference(m, rho, 2).unwrap();
        cfg.snr_db = db;
        let mean = cfg.effective_mean(coopharq::LinkKind::Sd, 0);
        let exact = reg_lower_gamma(m, m * (cfg.rate.exp2() - 1.0) / mean);
        match OutageEngine::new(&cfg, OutageSettings::default()).and_then(|e| e.outage_probability(1)) {
            Ok(p) => {
                let err = (p - exact).abs();
                if err > worst {
                    worst = err;
                    worst_at = format!("m={m:.3} rho={rho:.3} snr={db:.2} dB: {p:.4e} vs {exact:.4e}");
                }
            }
            Err(_) => failures += 1,
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 5e-3 && failures == 0 && secs < 10.0,
        format!("max abs error {worst:.3e} (limit 5e-3) at {worst_at}; {failures} numeric failures; {secs:.2} s"),
    )
}

fn matched_cdf_accuracy() -> Outcome {
    let t0 = Instant::now();
    let link = LinkModel::constant_correlation(0.5, 3, 6.0, 1.0).unwrap();
    let spec = ProductRvSpec::single(&link, 0..3, 1.0).unwrap();
    let stats = log_stats(&spec, 6, method()).unwrap();
    let cdf = match build_matched_cdf(&stats, 6) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("matcher failed: {e}")),
    };
    let s = stats.sigma2.sqrt();
    let grid: Vec<f64> = (0..200)
        .map(|i| (stats.mu - 4.0 * s + 8.0 * s * i as f64 / 199.0).exp())
        .collect();
    let emp = empirical_cdf(&spec, 10_000_000, SEED, &grid, 0).unwrap();
    let (worst, at) = grid
        .iter()
        .zip(&emp.probs)
        .map(|(y, p)| ((cdf.eval(*y) - p).abs(), *y))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 0.01 && secs < 120.0,
        format!("max |F_6 - F_emp| = {worst:.3e} at y = {at:.4} (limit 0.01); {secs:.1} s"),
    )
}

fn mixed_conditional() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for db in [5.0, 10.0, 15.0] {
        let sd = LinkModel::constant_correlation(0.5, 4, 6.0, 1.0).unwrap();
        let rd = LinkModel::constant_correlation(0.5, 4, 6.0, 2.0).unwrap();
        let cfg = SystemConfig {
            sd: sd.clone(),
            sr: LinkModel::constant_correlation(0.5, 4, 6.0, 1.0).unwrap(),
            rd: rd.clone(),
            max_rounds: 4,
            rate: 4.0,
            snr_db: db,
        };
        let a = match OutageEngine::new(&cfg, OutageSettings::default()).and_then(|e| e.conditional_outage(4, 2)) {
            Ok(a) => a,
            Err(e) => {
                pass = false;
                parts.push(format!("{db} dB: {e}"));
                continue;
            }
        };
        let spec = ProductRvSpec::mixed(&sd, 0..2, &rd, 2..4, cfg.snr_linear()).unwrap();
        let n = 10_000_000u64;
        let emp = empirical_cdf(&spec, n, SEED, &[cfg.rate.exp2()], 0).unwrap();
        let p = emp.probs[0];
        let se = emp.std_errors[0].max((a * (1.0 - a) / n as f64).sqrt());
        let tol = (0.01 * a).max(3.0 * se);
        let ok = (a - p).abs() <= tol;
        pass &= ok;
        parts.push(format!("{db} dB: {a:.4e} vs {p:.4e} (tol {tol:.2e})"));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(pass && secs < 180.0, format!("{}; {secs:.1} s", parts.join("; ")))
}

fn correlation_bands() -> Outcome {
    let p = |rho: f64| {
        SystemConfig::reference(6.0, rho, 3)
            .and_then(|c| OutageEngine::new(&c, OutageSettings::default())?.outage_probability(3))
    };
    match (p(0.01), p(0.9999)) {
        (Ok(lo), Ok(hi)) => outcome(
            (3e-7..=3e-6).contains(&lo) && (6e-5..=6e-4).contains(&hi),
            format!("P_out(3) = {lo:.3e} at rho 0.01 (band [3e-7, 3e-6]), {hi:.3e} at rho 0.9999 (band [6e-5, 6e-4])"),
        ),
        (a, b) => outcome(false, format!("evaluation failed: {a:?} {b:?}")),
    }
}

/// SNR in dB where `P_out(M)` first drops to `target`, interpolated in log10.
fn crossing(m: f64, target: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=240 {
        let db = -10.0 + 0.25 * i as f64;
        let mut cfg = SystemConfig::reference(m, 0.5, 4).unwrap();
        cfg.snr_db = db;
        let Ok(p) = OutageEngine::new(&cfg, OutageSettings::default()).and_then(|e| e.outage_probability(4)) else {
            prev = None;
            continue;
        };
        if p <= 0.0 {
            prev = None;
            continue;
        }
        let lp = p.log10();
        if let Some((d0, l0)) = prev {
            if l0 > target.log10() && lp <= target.log10() {
                return Some(d0 + (db - d0) * (l0 - target.log10()) / (l0 - lp));
            }
        }
        prev = Some((db, lp));
    }
    None
}

fn fading_order_shift() -> Outcome {
    match (crossing(1.0, 1e-4), crossing(3.0, 1e-4)) {
        (Some(a), Some(b)) => {
            let shift = a - b;
            outcome(
                (shift - 30.0).abs() <= 5.0,
                format!("P_out(4) = 1e-4 at {a:.2} dB (m=1) and {b:.2} dB (m=3): shift {shift:.2} dB (target 30 +- 5)"),
            )
        }
        (a, b) => outcome(false, format!("no crossing found: m=1 {a:?}, m=3 {b:?}")),
    }
}

fn diversity_order() -> Outcome {
    let t0 = Instant::now();
    let grid: Vec<f64> = (0..=8).map(|i| 20.0 + 2.5 * i as f64).collect();
    let slope = |m: f64, rounds: usize, rho: f64| {
        SystemConfig::reference(m, rho, rounds)
            .and_then(|c| estimate_diversity(&c, &grid, OutageSettings::default()))
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, rounds) in [(1.0, 2), (2.0, 2), (1.0, 3), (2.0, 3)] {
        for rho in [0.0, 0.5] {
            match slope(m, rounds, rho) {
                Ok(e) => {
                    pass &= e.relative_gap <= 0.1;
                    parts.push(format!("m={m} M={rounds} rho={rho}: {:.2}/{}", e.fitted_slope, e.theory));
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("m={m} M={rounds} rho={rho}: {e}"));
                }
            }
        }
        match (slope(m, rounds, 0.1), slope(m, rounds, 0.6)) {
            (Ok(a), Ok(b)) => {
                let gap = (a.fitted_slope - b.fitted_slope).abs() / a.fitted_slope.abs().max(b.fitted_slope.abs());
                pass &= gap <= 0.05;
                parts.push(format!("parallel m={m} M={rounds}: {:.2} vs {:.2}", a.fitted_slope, b.fitted_slope));
            }
            _ => {
                pass = false;
                parts.push(format!("parallel m={m} M={rounds}: fit failed"));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(pass && secs < 60.0, format!("{}; {secs:.1} s", parts.join("; ")))
}

/// `∫ g(u) φ(u; μ, σ²) du` by composite Simpson on `points` nodes.
fn lognormal_expectation(base: &LognormalBase, points: usize, g: impl Fn(f64) -> f64) -> f64 {
    let s = base.sigma2.sqrt();
    let (a, b) = (-45.0, 20.0);
    let n = points - 1 + (points - 1) % 2;
    let h = (b - a) / n as f64;
    let f = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * g(base.mu + s * z);
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `∫ g(u) du` over `μ + σ [-45, 20]` by composite Simpson.
fn log_domain_integral(base: &LognormalBase, points: usize, g: impl Fn(f64) -> f64) -> f64 {
    let s = base.sigma2.sqrt();
    let (a, b) = (base.mu - 45.0 * s, base.mu + 20.0 * s);
    let n = points - 1 + (points - 1) % 2;
    let h = (b - a) / n as f64;
    let mut acc = g(a) + g(b);
    for i in 1..n {
        acc += g(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn orthonormality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let base = LognormalBase::new(rng.random_range(0.0..=8.0), rng.random_range(0.3..=2.0)).unwrap();
        let rows: Vec<Vec<f64>> = (0..=6).map(|l| basis_coefficients(&base, l).unwrap()).collect();
        let b = |l: usize, u: f64| rows[l].iter().enumerate().map(|(k, c)| c * (-(k as f64) * u).exp()).sum::<f64>();
        for l in 0..=6 {
            for k in 0..=l {
                let ip = lognormal_expectation(&base, 100_001, |u| b(l, u) * b(k, u));
                let target = if l == k { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
    }
    outcome(worst <= 1e-5, format!("max |<b_l, b_k> - delta| = {worst:.3e} over 10 bases (limit 1e-5)"))
}

fn reference_products() -> Vec<(String, OutageEngine, ProductKey)> {
    let mut out = Vec::new();
    for rho in [0.01, 0.5, 0.9999] {
        let cfg = SystemConfig::reference(6.0, rho, 3).unwrap();
        let keys = [
            ProductKey::Direct(1),
            ProductKey::Direct(2),
            ProductKey::Direct(3),
            ProductKey::Relay(2),
            ProductKey::Mixed { r: 1, k: 3 },
            ProductKey::Mixed { r: 2, k: 3 },
        ];
        for key in keys {
            let e = OutageEngine::new(&cfg, OutageSettings::with_degree(20)).unwrap();
            out.push((format!("rho={rho} {key:?}"), e, key));
        }
    }
    out
}

fn moment_match() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut failures = Vec::new();
    for (name, engine, key) in reference_products() {
        let stats = engine.product_stats(key).unwrap();
        let cdf = match build_matched_cdf(&stats, 6) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        for n in 0..=6 {
            let nf = n as f64;
            let sd = cdf.base.sigma2.sqrt();
            let q = log_domain_integral(&cdf.base, 100_001, |u| {
                cdf.kappa
                    .iter()
                    .enumerate()
                    .map(|(k, w)| {
                        let z = (u + k as f64 * cdf.base.sigma2 - cdf.base.mu) / sd;
                        w * (-nf * u - 0.5 * z * z).exp()
                    })
                    .sum::<f64>()
                    / (sd * (2.0 * std::f64::consts::PI).sqrt())
            });
            let rel = (q - stats.inv_moments[n]).abs() / stats.inv_moments[n];
            if rel.is_nan() || rel > worst {
                worst = rel;
                worst_at = format!("{name} n={n}");
            }
        }
    }
    outcome(
        worst <= 1e-5 && failures.is_empty(),
        format!("max relative error {worst:.3e} at {worst_at} (limit 1e-5); failures: {failures:?}"),
    )
}

fn decay_bounds() -> Outcome {
    let mut eta_ok = true;
    let mut nmse_ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for (name, engine, key) in reference_products() {
        let stats = engine.product_stats(key).unwrap();
        let base = LognormalBase::from_stats(&stats).unwrap();
        let eta = match eta_coordinates(&stats, 20) {
            Ok(e) => e,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        for n in 0..=10 {
            let b = eta_bound(&base, n).unwrap();
            eta_ok &= eta[n].abs() <= b;
            worst = worst.max((eta[n].abs() / b).log10());
            let tail: f64 = eta[n + 1..].iter().map(|e| e * e).sum();
            nmse_ok &= tail <= nmse_bound(&base, n).unwrap();
        }
    }
    outcome(
        eta_ok && nmse_ok && failures.is_empty(),
        format!(
            "eta bound {}, NMSE tail bound {} for N <= 10; max log10(|eta|/bound) = {worst:.2}; failures: {failures:?}",
            if eta_ok { "holds" } else { "violated" },
            if nmse_ok { "holds" } else { "violated" }
        ),
    )
}

fn degree_selector() -> Outcome {
    let link = LinkModel::constant_correlation(0.5, 3, 6.0, 1.0).unwrap();
    let spec = ProductRvSpec::single(&link, 0..3, 1.0).unwrap();
    let base = LognormalBase::from_stats(&log_stats(&spec, 6, method()).unwrap()).unwrap();
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut bound_ok = true;
    let mut ends = Vec::new();
    for i in 0..=70 {
        let eps = 10f64.powf(-8.0 + 0.1 * i as f64);
        let sel = select_degree(&base, eps).unwrap();
        let raw = sel.raw.unwrap_or(0.0);
        monotone &= raw <= prev + 1e-12;
        prev = raw;
        let n = raw.ceil().max(0.0) as usize;
        bound_ok &= nmse_bound(&base, n).unwrap() <= eps * (1.0 + 1e-9);
        if i == 0 || i == 70 {
            ends.push(format!("N({eps:.0e}) = {raw:.2}"));
        }
    }
    outcome(
        monotone && bound_ok,
        format!("nonincreasing: {monotone}, bound at ceil(N) <= eps: {bound_ok}; {}", ends.join(", ")),
    )
}

fn sampler() -> Outcome {
    let t0 = Instant::now();
    let link = LinkModel::new(1.5, vec![1.0, 2.0, 0.5], vec![0.9, 0.7, 0.5]).unwrap();
    let s = LinkSampler::new(&link, 1.0, 3).unwrap();
    let batches = 100usize;
    let per = 100_000usize;
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let mut corr: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(batches)).collect();
    let mut g = [0.0; 3];
    for b in 0..batches {
        let mut rng = block_rng(SEED, b as u64);
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut cross = [0.0; 3];
        for _ in 0..per {
            s.sample_into(&mut rng, &mut g);
            for i in 0..3 {
                sum[i] += g[i];
                sq[i] += g[i] * g[i];
            }
            for (j, &(a, c)) in pairs.iter().enumerate() {
                cross[j] += g[a] * g[c];
            }
        }
        let n = per as f64;
        let var = |i: usize| sq[i] / n - (sum[i] / n).powi(2);
        for (j, &(a, c)) in pairs.iter().enumerate() {
            let cov = cross[j] / n - sum[a] * sum[c] / (n * n);
            corr[j].push(cov / (var(a) * var(c)).sqrt());
        }
    }
    let mut corr_ok = true;
    let mut parts = Vec::new();
    for (j, &(a, c)) in pairs.iter().enumerate() {
        let mean = corr[j].iter().sum::<f64>() / batches as f64;
        let sd = (corr[j].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
        let se = sd / (batches as f64).sqrt();
        let want = link.lambda[a].powi(2) * link.lambda[c].powi(2);
        corr_ok &= (mean - want).abs() <= 3.0 * se;
        parts.push(format!("({a},{c}) {mean:.5} vs {want:.5} (se {se:.1e})"));
    }
    let mut ks_ok = true;
    for m in [1.0, 1.5, 6.0] {
        let l = LinkModel::new(m, vec![1.3], vec![0.6]).unwrap();
        let s = LinkSampler::new(&l, 1.0, 1).unwrap();
        let n = 100_000usize;
        let mut rng = block_rng(SEED + 7, 0);
        let mut v = [0.0];
        let mut xs: Vec<f64> = (0..n)
            .map(|_| {
                s.sample_into(&mut rng, &mut v);
                v[0]
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = reg_lower_gamma(m, m * x / 1.3);
                (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
            })
            .fold(0.0, f64::max);
        let crit = 1.628 / (n as f64).sqrt();
        ks_ok &= d < crit;
        parts.push(format!("KS m={m}: {d:.2e} < {crit:.2e}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(corr_ok && ks_ok, format!("{}; {secs:.1} s", parts.join("; ")))
}

fn ltat_optimizer() -> Outcome {
    let cfg = SystemConfig::reference(6.0, 0.5, 4).unwrap();
    let engine = match OutageEngine::new(&cfg, OutageSettings::default()) {
        Ok(e) => e,
        Err(e) => return outcome(false, e.to_string()),
    };
    let thetas = [1e-4, 1e-3, 1e-2, 0.1, 0.5];
    let sols: Vec<_> = match thetas
        .iter()
        .map(|&t| optimal_rate_with(&engine, t, DEFAULT_RATE_BOUNDS))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let t: Vec<f64> = sols.iter().map(|s| s.ltat_opt).collect();
    let monotone = t.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    let gain = (t[4] - t[3]) / t[3];
    outcome(
        monotone && gain < 0.01 && sols.iter().all(|s| s.feasible),
        format!(
            "T* = {} over theta {thetas:?}; gain 0.1 -> 0.5 = {:.3}%",
            t.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(", "),
            100.0 * gain
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_coopharq"))
            .args(["validate", "--trials", "1e6", "--seed", "7", "--workers", "4", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        (status.status.code(), std::fs::read(out.join("validate.csv")).ok())
    };
    let (c1, a) = run("a");
    let (c2, b) = run("b");
    match (a, b) {
        (Some(a), Some(b)) => outcome(
            a == b && c1 == Some(0) && c2 == Some(0),
            format!("validate.csv {} bytes, identical: {}", a.len(), a == b),
        ),
        _ => outcome(false, format!("validate did not write output (exit {c1:?}, {c2:?})")),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 13] = [
        ("k1-exactness", k1_exactness),
        ("matched-cdf-accuracy", matched_cdf_accuracy),
        ("mixed-conditional-outage", mixed_conditional),
        ("correlation-bands", correlation_bands),
        ("fading-order-shift", fading_order_shift),
        ("diversity-order", diversity_order),
        ("orthonormality", orthonormality),
        ("moment-match", moment_match),
        ("decay-bounds", decay_bounds),
        ("degree-selector", degree_selector),
        ("sampler", sampler),
        ("ltat-optimizer", ltat_optimizer),
        ("determinism", determinism),
    ];
    // direct writes bypass the test harness capture
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let o = f();
        writeln!(err, "{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail).unwrap();
        if !o.pass {
            failed.push(name);
        }
    }
    writeln!(err, "{}/{} criteria passed", criteria.len() - failed.len(), criteria.len()).unwrap();
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(failed.is_empty(), "failed: {failed:?}");
    }
}
