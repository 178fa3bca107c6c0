use coopharq::channel::{joint_pdf, LinkModel, SystemConfig};
use coopharq::diversity::estimate_diversity;
use coopharq::matcher::build_matched_cdf;
use coopharq::moments::{inverse_moments, log_stats, MixtureRule, MomentMethod, ProductRvSpec};
use coopharq::monte_carlo::{block_rng, simulate_protocol, LinkSampler};
use coopharq::outage::{correlation_spectrum, OutageEngine, OutageSettings};
use coopharq::quadrature::{gauss_laguerre_generalized, gauss_legendre};
use coopharq::special::ln_gamma;
use coopharq::throughput::{optimal_rate_with, DEFAULT_RATE_BOUNDS};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

fn gamma_ln_pdf(x: f64, m: f64, scale: f64) -> f64 {
    (m - 1.0) * x.ln() - x / scale - ln_gamma(m) - m * scale.ln()
}

#[test]
fn joint_pdf_has_unit_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (m, rho, rounds) in [(1.5, 0.3, 2), (2.0, 0.5, 3), (6.0, 0.5, 2)] {
        let link = LinkModel::constant_correlation(rho, rounds, m, 1.0).unwrap();
        let quad = gauss_laguerre_generalized(64, m - 1.0).unwrap();
        let scale = 1.6 / m;
        let q = Gamma::new(m, scale).unwrap();
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x: Vec<f64> = (0..rounds).map(|_| q.sample(&mut rng)).collect();
            let lq: f64 = x.iter().map(|&v| gamma_ln_pdf(v, m, scale)).sum();
            let w = joint_pdf(&link, 1.0, &x, &quad).unwrap() / lq.exp();
            s += w;
            s2 += w * w;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 0.01, "m {m} rho {rho} M {rounds}: mass {mean} (se {se})");
    }
}

#[test]
fn sampler_matches_joint_density() {
    let n: u64 = 10_000_000;
    let bins = 20;
    let (gx, gw) = gauss_legendre(6);
    for (m, rho) in [(1.0, 0.3), (6.0, 0.5)] {
        let link = LinkModel::constant_correlation(rho, 2, m, 1.0).unwrap();
        let quad = gauss_laguerre_generalized(64, m - 1.0).unwrap();
        let hi = if m < 2.0 { 4.0 } else { 2.2 };
        let w = hi / bins as f64;
        let sampler = LinkSampler::new(&link, 1.0, 2).unwrap();
        let mut counts = vec![0u64; bins * bins];
        let mut g = [0.0; 2];
        for b in 0..n / 4096 {
            let mut rng = block_rng(5, b);
            for _ in 0..4096 {
                sampler.sample_into(&mut rng, &mut g);
                let (i, j) = ((g[0] / w) as usize, (g[1] / w) as usize);
                if i < bins && j < bins {
                    counts[i * bins + j] += 1;
                }
            }
        }
        let total = (n / 4096 * 4096) as f64;
        let mut worst = 0.0f64;
        let mut over = 0;
        for i in 0..bins {
            for j in 0..bins {
                let mut p = 0.0;
                for (xa, wa) in gx.iter().zip(&gw) {
                    for (xb, wb) in gx.iter().zip(&gw) {
                        let pt = [w * (i as f64 + 0.5 * (xa + 1.0)), w * (j as f64 + 0.5 * (xb + 1.0))];
                        p += wa * wb * joint_pdf(&link, 1.0, &pt, &quad).unwrap();
                    }
                }
                p *= 0.25 * w * w;
                let expect = total * p;
                let z = (counts[i * bins + j] as f64 - expect) / (total * p * (1.0 - p)).sqrt();
                worst = worst.max(z.abs());
                over += (z.abs() > 3.0) as usize;
            }
        }
        // 400 bins at 3σ expect about one exceedance by chance
        assert!(over <= 4 && worst < 4.5, "m {m} rho {rho}: {over} bins beyond 3σ, max |z| {worst}");
    }
}

#[test]
fn sampler_preserves_marginals() {
    let link = LinkModel::new(0.7, vec![1.0, 3.0, 0.4], vec![0.95, 0.5, 0.0]).unwrap();
    let snr = 2.0;
    let s = LinkSampler::new(&link, snr, 3).unwrap();
    let n = 2_000_000usize;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut q4 = [0.0; 3];
    let mut g = [0.0; 3];
    let mut rng = block_rng(9, 0);
    for _ in 0..n {
        s.sample_into(&mut rng, &mut g);
        for l in 0..3 {
            sum[l] += g[l];
            sq[l] += g[l] * g[l];
            q4[l] += g[l].powi(4);
        }
    }
    let nf = n as f64;
    for l in 0..3 {
        let mean_want = link.omega[l] * snr;
        let var_want = mean_want * mean_want / link.m;
        let mean = sum[l] / nf;
        let m2 = sq[l] / nf;
        let var = m2 - mean * mean;
        let se_mean = (var / nf).sqrt();
        let se_var = ((q4[l] / nf - m2 * m2) / nf).sqrt();
        assert!((mean - mean_want).abs() <= 3.0 * se_mean, "round {l}: mean {mean} vs {mean_want}");
        assert!((var - var_want).abs() <= 3.0 * se_var, "round {l}: var {var} vs {var_want}");
    }
}

#[test]
fn simulation_independent_of_workers() {
    let cfg = SystemConfig::reference(2.0, 0.5, 3).unwrap();
    let a = simulate_protocol(&cfg, 300_000, 17, 1).unwrap();
    let b = simulate_protocol(&cfg, 300_000, 17, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn moment_quadrature_converges() {
    let cfg = SystemConfig::reference(6.0, 0.5, 3).unwrap();
    let spec = ProductRvSpec::single(&cfg.sd, 0..3, cfg.snr_linear()).unwrap();
    let lag = |nodes| inverse_moments(&spec, 8, MomentMethod::Laguerre { nodes, t_nodes: 64 }).unwrap();
    let (l16, l32, l48) = (lag(16), lag(32), lag(48));
    let mix = inverse_moments(&spec, 8, MomentMethod::default()).unwrap();
    let mix_fine = inverse_moments(
        &spec,
        8,
        MomentMethod::Mixture(MixtureRule {
            points: 24,
            linear_panels: 24,
            fine_scale: 1e-4,
        }),
    )
    .unwrap();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    for n in 1..=8 {
        assert!(rel(l16[n], l48[n]) < 1e-5, "n {n}: {} vs {}", l16[n], l48[n]);
        assert!(rel(l32[n], l48[n]) < 1e-9, "n {n}: {} vs {}", l32[n], l48[n]);
        assert!(rel(mix[n], mix_fine[n]) < 1e-10, "n {n}: {} vs {}", mix[n], mix_fine[n]);
        assert!(rel(mix[n], l48[n]) < 1e-9, "n {n}: {} vs {}", mix[n], l48[n]);
    }
}

#[test]
fn mixture_resolves_high_snr_inverse_moments() {
    // E[(1 + bZ)^{-n}], Z ~ Gamma(m, 1), by 40-digit adaptive quadrature
    let want = [
        3.4497408565104357e-3,
        2.0164180373463228e-5,
        2.9699354221338405e-7,
        1.7952024182322246e-8,
        3.407_649_571_650_415e-9,
        1.1358401317616603e-9,
    ];
    let link = LinkModel::constant_correlation(0.0, 1, 3.368477116090828, 2.3389408665759426).unwrap();
    let spec = ProductRvSpec::single(&link, 0..1, 10f64.powf(2.2435874319831743)).unwrap();
    let a = inverse_moments(&spec, 6, MomentMethod::default()).unwrap();
    for n in 1..=6 {
        assert!(((a[n] - want[n - 1]) / want[n - 1]).abs() < 1e-9, "n {n}: {} vs {}", a[n], want[n - 1]);
    }
}

#[test]
fn matched_cdf_monotone_on_reference_system() {
    let link = LinkModel::constant_correlation(0.5, 3, 6.0, 1.0).unwrap();
    for k in 1..=3 {
        let spec = ProductRvSpec::single(&link, 0..k, 10.0).unwrap();
        let stats = log_stats(&spec, 6, MomentMethod::default()).unwrap();
        let cdf = build_matched_cdf(&stats, 6).unwrap();
        let s = stats.sigma2.sqrt();
        let (mut top, mut dip) = (0.0f64, 0.0f64);
        for i in 0..1000 {
            let f = cdf.eval((stats.mu - 6.0 * s + 12.0 * s * i as f64 / 999.0).exp());
            dip = dip.max(top - f);
            top = top.max(f);
        }
        assert!(dip <= 1e-7, "K {k}: dip {dip}");
    }
}

#[test]
fn outage_trends_on_reference_system() {
    let cfg = SystemConfig::reference(6.0, 0.5, 3).unwrap();
    let e = OutageEngine::new(&cfg, OutageSettings::default()).unwrap();
    let p: Vec<f64> = (1..=3).map(|k| e.outage_probability(k).unwrap()).collect();
    // the first extra round gains a factor of about 9, the next ones far more
    assert!(p[1] <= 0.11 * p[0], "{p:?}");
    assert!(p[2] <= 0.1 * p[1], "{p:?}");

    let mut prev = 0.0;
    for i in 0..=9 {
        let rho = 0.1 * i as f64;
        let c = SystemConfig::reference(6.0, rho, 3).unwrap();
        let v = OutageEngine::new(&c, OutageSettings::default())
            .unwrap()
            .outage_probability(3)
            .unwrap();
        assert!(v >= prev, "rho {rho}: {v} < {prev}");
        prev = v;
    }

    let at = |n| {
        OutageEngine::new(&cfg, OutageSettings::with_degree(n))
            .unwrap()
            .outage_probability(3)
            .unwrap()
    };
    let (p2, p6, p8) = (at(2), at(6), at(8));
    assert!((p6 - p8).abs() <= (p2 - p6).abs(), "{p2} {p6} {p8}");
}

#[test]
fn spectrum_product_is_determinant() {
    let mut cfg = SystemConfig::reference(2.0, 0.6, 4).unwrap();
    cfg.rd = LinkModel::new(3.0, vec![2.0, 1.5, 1.0, 0.5], vec![0.9, 0.6, 0.3, 0.8]).unwrap();
    for r in 1..=4 {
        let s = correlation_spectrum(&cfg, 4, r).unwrap();
        let e = DMatrix::from_fn(4, 4, |i, j| s.matrix_e[i][j]);
        let want = e.determinant() * s.matrix_f.iter().product::<f64>();
        let got: f64 = s.eigenvalues.iter().product();
        assert!(((got - want) / want).abs() <= 1e-10, "r {r}: {got} vs {want}");
    }
}

#[test]
fn bound_slopes_agree() {
    let cfg = SystemConfig::reference(2.0, 0.5, 3).unwrap();
    let grid: Vec<f64> = (0..=8).map(|i| 20.0 + 2.5 * i as f64).collect();
    let est = estimate_diversity(&cfg, &grid, OutageSettings::default()).unwrap();
    let (lo, hi) = est.bound_slopes;
    assert!((lo - hi).abs() <= 0.05 * lo.max(hi), "{lo} vs {hi}");
    assert!((lo - 6.0).abs() < 0.3, "{lo}");
}

#[test]
fn rate_constraint_is_active() {
    let cfg = SystemConfig::reference(6.0, 0.5, 4).unwrap();
    let e = OutageEngine::new(&cfg, OutageSettings::default()).unwrap();
    let free = optimal_rate_with(&e, 1.0, DEFAULT_RATE_BOUNDS).unwrap();
    for theta in [1e-4, 1e-3, 1e-2] {
        let s = optimal_rate_with(&e, theta, DEFAULT_RATE_BOUNDS).unwrap();
        assert!(s.feasible);
        let at_max = e.outage_probability_at(4, s.rate_max).unwrap();
        assert!((theta - at_max).abs() <= 1e-3 * theta, "theta {theta}: P at R_max {at_max}");
        if free.outage_at_opt > theta {
            assert!(
                s.outage_at_opt >= 0.95 * theta && s.outage_at_opt <= theta,
                "theta {theta}: P at R* {}",
                s.outage_at_opt
            );
        }
    }
}
