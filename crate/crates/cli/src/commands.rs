//! Command pipelines.

use std::fs;

use coopharq::config::{parse_config, to_config_string};
use coopharq::matcher::{select_degree, LognormalBase};
use coopharq::monte_carlo::simulate_protocol;
use coopharq::outage::ProductKey;
use coopharq::throughput::{ltat_at, optimal_rate_with, RateSolution};
use coopharq::{
    estimate_diversity, DegreeRule, OutageEngine, OutageReport, OutageSettings, SimResult,
    SystemConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Cli, Command, Options};
use crate::output::{num, CliError, CliResult, RunManifest, Sink, EXIT_NUMERIC};
use crate::sweep::{apply, parse_sweep, Axis, Sweep};

/// Grid used by `diversity` without `--sweep`.
pub const DEFAULT_DIVERSITY_SWEEP: &str = "snr_db=0:2:40";

/// Fading order, correlation and round budget of the built-in configuration.
pub const REFERENCE_SYSTEM: (f64, f64, usize) = (6.0, 0.5, 3);

struct Run {
    sweep: Sweep,
    points: Vec<(f64, SystemConfig)>,
    base: SystemConfig,
    settings: OutageSettings,
    opts: Options,
    sink: Sink,
}

#[derive(Debug, Serialize)]
struct Failure {
    value: f64,
    error: String,
}

#[derive(Serialize)]
struct Point<T: Serialize> {
    value: f64,
    #[serde(flatten)]
    data: T,
}

#[derive(Serialize)]
struct Points<T: Serialize> {
    axis: &'static str,
    points: Vec<Point<T>>,
    failures: Vec<Failure>,
}

fn outputs(cmd: Command) -> &'static [&'static str] {
    match cmd {
        Command::Outage => &["outage.csv", "outage_conditional.csv", "outage.json"],
        Command::Diversity => &["diversity.csv", "diversity.json"],
        Command::Ltat => &["ltat.csv", "ltat.json"],
        Command::RateOpt => &["rate_opt.csv", "rate_opt.json"],
        Command::Simulate => &["simulate.csv", "simulate_ltat.csv", "simulate.json"],
        Command::Validate => &["validate.csv", "validate.json"],
        Command::Degree => &["degree.csv", "degree.json"],
    }
}

fn load_config(opts: &Options) -> CliResult<SystemConfig> {
    match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
        }
        None => {
            let (m, rho, rounds) = REFERENCE_SYSTEM;
            Ok(SystemConfig::reference(m, rho, rounds)?)
        }
    }
}

fn resolve_sweep(cmd: Command, opts: &Options, cfg: &SystemConfig) -> CliResult<Sweep> {
    let sweep = match (&opts.sweep, cmd) {
        (Some(s), _) => s.clone(),
        (None, Command::Diversity) => parse_sweep(DEFAULT_DIVERSITY_SWEEP).map_err(CliError::parse)?,
        (None, Command::RateOpt) => Sweep::single(Axis::Theta, opts.theta),
        (None, _) => Sweep::single(Axis::SnrDb, cfg.snr_db),
    };
    if sweep.axis == Axis::Theta && cmd != Command::RateOpt {
        return Err(CliError::parse("the theta axis only applies to rate-opt"));
    }
    if cmd == Command::Diversity && sweep.axis != Axis::SnrDb {
        return Err(CliError::parse("diversity needs an snr_db sweep"));
    }
    Ok(sweep)
}

fn resolve_settings(cmd: Command, opts: &Options) -> CliResult<OutageSettings> {
    if cmd == Command::Degree {
        if opts.degree.is_some() {
            return Err(CliError::parse("degree takes --epsilon, not --degree"));
        }
        if opts.epsilon.is_none() {
            return Err(CliError::parse("degree needs --epsilon"));
        }
    }
    Ok(match (opts.degree, opts.epsilon) {
        (Some(n), _) => OutageSettings::with_degree(n),
        (None, Some(e)) => OutageSettings {
            degree: DegreeRule::Epsilon(e),
            ..Default::default()
        },
        (None, None) => OutageSettings::default(),
    })
}

/// Executes one invocation.
pub fn run(cli: Cli) -> CliResult<()> {
    let Cli { command: cmd, opts } = cli;
    let base = load_config(&opts)?;
    let sweep = resolve_sweep(cmd, &opts, &base)?;
    let settings = resolve_settings(cmd, &opts)?;
    let points = sweep
        .values
        .iter()
        .map(|&v| Ok((v, apply(&base, sweep.axis, v).map_err(CliError::parse)?)))
        .collect::<CliResult<Vec<_>>>()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build_global()
        .map_err(|e| CliError::resource(format!("cannot start {} workers: {e}", opts.workers)))?;

    let manifest = RunManifest {
        version: coopharq::VERSION,
        command: cmd,
        config_path: opts.config.as_ref().map(|p| p.display().to_string()),
        config: to_config_string(&base),
        sweep: sweep.clone(),
        seed: opts.seed,
        workers: opts.workers,
        trials: opts.trials,
        degree: opts.degree,
        epsilon: opts.epsilon,
        theta: opts.theta,
        rate_range: opts.rate_range,
        outputs: outputs(cmd).iter().map(|s| s.to_string()).collect(),
    };
    let sink = Sink::create(&opts.out, &manifest)?;
    let run = Run {
        sweep,
        points,
        base,
        settings,
        opts,
        sink,
    };
    let failed = match cmd {
        Command::Outage => run.outage()?,
        Command::Diversity => run.diversity()?,
        Command::Ltat => run.ltat()?,
        Command::RateOpt => run.rate_opt()?,
        Command::Simulate => run.simulate()?,
        Command::Validate => run.validate()?,
        Command::Degree => run.degree()?,
    };
    println!(
        "{}: wrote {} to {} (manifest {})",
        cmd.name(),
        outputs(cmd).join(", "),
        run.opts.out.display(),
        &run.sink.hash()[..12]
    );
    if failed > 0 {
        return Err(CliError {
            code: EXIT_NUMERIC,
            message: format!(
                "{failed} of {} sweep points failed numerically; see the JSON diagnostics",
                run.points.len()
            ),
        });
    }
    Ok(())
}

fn flag(b: bool) -> String {
    b.to_string()
}

impl Run {
    fn axis(&self) -> &'static str {
        self.sweep.axis.name()
    }

    fn lead(&self, v: f64) -> Vec<String> {
        vec![self.axis().to_string(), num(v)]
    }

    /// Evaluates `f` on every sweep point in parallel, in order. Numeric
    /// failures are collected; any other error aborts.
    fn eval<T, F>(&self, f: F) -> CliResult<(Vec<Point<T>>, Vec<Failure>)>
    where
        T: Send + Serialize,
        F: Fn(f64, &SystemConfig) -> coopharq::Result<T> + Sync + Send,
    {
        let results: Vec<coopharq::Result<T>> =
            self.points.par_iter().map(|(v, c)| f(*v, c)).collect();
        let mut ok = Vec::new();
        let mut failures = Vec::new();
        for ((v, _), r) in self.points.iter().zip(results) {
            match r {
                Ok(data) => ok.push(Point { value: *v, data }),
                Err(e @ (coopharq::Error::Numeric(_) | coopharq::Error::Range(_))) => failures.push(Failure {
                    value: *v,
                    error: e.to_string(),
                }),
                Err(e) => {
                    let mut err = CliError::from(e);
                    err.message = format!("{}={v}: {}", self.axis(), err.message);
                    return Err(err);
                }
            }
        }
        Ok((ok, failures))
    }

    fn finish<T: Serialize>(&self, name: &str, points: Vec<Point<T>>, failures: Vec<Failure>) -> CliResult<usize> {
        for f in &failures {
            eprintln!("warning: {}={}: {}", self.axis(), f.value, f.error);
        }
        let n = failures.len();
        self.sink.json(
            name,
            &Points {
                axis: self.axis(),
                points,
                failures,
            },
        )?;
        Ok(n)
    }

    fn outage(&self) -> CliResult<usize> {
        let s = self.settings;
        let (pts, failures) = self.eval(|_, cfg| OutageEngine::new(cfg, s)?.report())?;
        let mut rows = Vec::new();
        let mut cond = Vec::new();
        for p in &pts {
            let r: &OutageReport = &p.data;
            for (k, pk) in r.per_k.iter().enumerate() {
                let mut row = self.lead(p.value);
                row.extend([(k + 1).to_string(), num(*pk)]);
                rows.push(row);
                for (j, (c, ph)) in r.per_r_conditional[k].iter().zip(&r.phase_probs[k]).enumerate() {
                    let mut row = self.lead(p.value);
                    row.extend([(k + 1).to_string(), (j + 1).to_string(), num(*c), num(*ph)]);
                    cond.push(row);
                }
            }
        }
        self.sink.csv("outage.csv", &["axis", "value", "k", "p_out"], &rows)?;
        self.sink.csv(
            "outage_conditional.csv",
            &["axis", "value", "k", "r", "p_out_given_bc", "pr_bc"],
            &cond,
        )?;
        self.finish("outage.json", pts, failures)
    }

    fn diversity(&self) -> CliResult<usize> {
        let est = estimate_diversity(&self.base, &self.sweep.values, self.settings)?;
        let rows: Vec<Vec<String>> = est
            .snr_grid_db
            .iter()
            .enumerate()
            .map(|(i, &db)| {
                let mut row = self.lead(db);
                row.push(num(est.outage_values[i].unwrap_or(f64::NAN)));
                row.push(flag(est.window.contains(&i)));
                row
            })
            .collect();
        self.sink
            .csv("diversity.csv", &["axis", "value", "p_out", "in_window"], &rows)?;
        self.sink.json("diversity.json", &est)?;
        println!(
            "fitted diversity {:.4}, theory {}, relative gap {:.4}",
            est.fitted_slope, est.theory, est.relative_gap
        );
        for (db, e) in &est.failures {
            eprintln!("warning: snr_db={db}: {e}");
        }
        Ok(est.failures.len())
    }

    fn ltat(&self) -> CliResult<usize> {
        #[derive(Serialize)]
        struct Ltat {
            rate: f64,
            ltat: f64,
            p_out_max_rounds: f64,
        }
        let s = self.settings;
        let (pts, failures) = self.eval(|_, cfg| {
            let e = OutageEngine::new(cfg, s)?;
            Ok(Ltat {
                rate: cfg.rate,
                ltat: ltat_at(&e, cfg.rate)?,
                p_out_max_rounds: e.outage_probability(cfg.max_rounds)?,
            })
        })?;
        let rows: Vec<Vec<String>> = pts
            .iter()
            .map(|p| {
                let mut row = self.lead(p.value);
                row.extend([num(p.data.rate), num(p.data.ltat), num(p.data.p_out_max_rounds)]);
                row
            })
            .collect();
        self.sink.csv(
            "ltat.csv",
            &["axis", "value", "rate", "ltat", "p_out_max_rounds"],
            &rows,
        )?;
        self.finish("ltat.json", pts, failures)
    }

    fn rate_opt(&self) -> CliResult<usize> {
        let s = self.settings;
        let range = self.opts.rate_range;
        let on_theta = self.sweep.axis == Axis::Theta;
        let shared = if on_theta {
            Some(OutageEngine::new(&self.base, s)?)
        } else {
            None
        };
        let theta = self.opts.theta;
        let (pts, failures) = self.eval(|v, cfg| -> coopharq::Result<RateSolution> {
            match &shared {
                Some(e) => optimal_rate_with(e, v, range),
                None => optimal_rate_with(&OutageEngine::new(cfg, s)?, theta, range),
            }
        })?;
        let rows: Vec<Vec<String>> = pts
            .iter()
            .map(|p| {
                let r = &p.data;
                let mut row = self.lead(p.value);
                row.extend([
                    num(r.constraint),
                    num(r.rate_opt),
                    num(r.ltat_opt),
                    num(r.outage_at_opt),
                    flag(r.feasible),
                    num(r.rate_max),
                    num(r.monotonicity_gap),
                ]);
                row
            })
            .collect();
        self.sink.csv(
            "rate_opt.csv",
            &[
                "axis",
                "value",
                "theta",
                "rate_opt",
                "ltat_opt",
                "outage_at_opt",
                "feasible",
                "rate_max",
                "monotonicity_gap",
            ],
            &rows,
        )?;
        if pts.len() == 1 && failures.is_empty() {
            let sol = &pts[0].data;
            println!(
                "theta {}: rate {:.6}, ltat {:.6}, outage {:.3e}, feasible {}",
                sol.constraint, sol.rate_opt, sol.ltat_opt, sol.outage_at_opt, sol.feasible
            );
            self.sink.json("rate_opt.json", sol)?;
            return Ok(0);
        }
        self.finish("rate_opt.json", pts, failures)
    }

    fn simulations(&self) -> CliResult<Vec<SimResult>> {
        self.points
            .iter()
            .map(|(_, cfg)| Ok(simulate_protocol(cfg, self.opts.trials, self.opts.seed, self.opts.workers)?))
            .collect()
    }

    fn simulate(&self) -> CliResult<usize> {
        let sims = self.simulations()?;
        let mut rows = Vec::new();
        let mut lt = Vec::new();
        for ((v, _), s) in self.points.iter().zip(&sims) {
            for k in 0..s.outage.len() {
                let mut row = self.lead(*v);
                row.extend([
                    (k + 1).to_string(),
                    s.trials.to_string(),
                    s.outage_counts[k].to_string(),
                    num(s.outage[k]),
                    num(s.outage_se[k]),
                ]);
                rows.push(row);
            }
            let mut row = self.lead(*v);
            row.extend([s.trials.to_string(), num(s.rate), num(s.ltat), num(s.ltat_se)]);
            lt.push(row);
        }
        self.sink.csv(
            "simulate.csv",
            &["axis", "value", "k", "trials", "outage_count", "p_out", "p_out_se"],
            &rows,
        )?;
        self.sink.csv(
            "simulate_ltat.csv",
            &["axis", "value", "trials", "rate", "ltat", "ltat_se"],
            &lt,
        )?;
        let pts: Vec<Point<SimResult>> = self
            .points
            .iter()
            .zip(sims)
            .map(|((v, _), data)| Point { value: *v, data })
            .collect();
        self.finish("simulate.json", pts, Vec::new())
    }

    fn validate(&self) -> CliResult<usize> {
        #[derive(Serialize)]
        struct Check {
            quantity: &'static str,
            k: Option<usize>,
            r: Option<usize>,
            analytical: f64,
            simulated: f64,
            std_error: f64,
            tolerance: f64,
            pass: bool,
        }
        #[derive(Serialize)]
        struct Validation {
            analytical: OutageReport,
            simulated: SimResult,
            checks: Vec<Check>,
        }
        let s = self.settings;
        let (reports, mut failures) = self.eval(|_, cfg| {
            let e = OutageEngine::new(cfg, s)?;
            Ok((e.report()?, ltat_at(&e, cfg.rate)?))
        })?;
        let sims = self.simulations()?;
        let n = self.opts.trials as f64;
        let check = |quantity, k, r, a: f64, sim: f64, se: f64, prob: bool| {
            let se = if prob { se.max((a * (1.0 - a) / n).max(0.0).sqrt()) } else { se };
            let tolerance = (0.01 * a.abs()).max(3.0 * se);
            Check {
                quantity,
                k,
                r,
                analytical: a,
                simulated: sim,
                std_error: se,
                tolerance,
                pass: (a - sim).abs() <= tolerance,
            }
        };
        let mut pts = Vec::new();
        for ((v, _), sim) in self.points.iter().zip(sims) {
            let Some(idx) = reports.iter().position(|p| p.value == *v) else {
                continue;
            };
            let (rep, lt) = &reports[idx].data;
            let mut checks = Vec::new();
            for k in 1..=rep.per_k.len() {
                checks.push(check("p_out", Some(k), None, rep.per_k[k - 1], sim.outage[k - 1], sim.outage_se[k - 1], true));
                for r in 1..=k {
                    checks.push(check(
                        "pr_bc",
                        Some(k),
                        Some(r),
                        rep.phase_probs[k - 1][r - 1],
                        sim.phase_probs[k - 1][r - 1],
                        sim.phase_se[k - 1][r - 1],
                        true,
                    ));
                }
            }
            checks.push(check("ltat", None, None, *lt, sim.ltat, sim.ltat_se, false));
            pts.push(Point {
                value: *v,
                data: Validation {
                    analytical: rep.clone(),
                    simulated: sim,
                    checks,
                },
            });
        }
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut rows = Vec::new();
        println!(
            "{:>10} {:>8} {:>3} {:>3} {:>13} {:>13} {:>11} {:>11}  result",
            self.axis(),
            "quantity",
            "k",
            "r",
            "analytical",
            "simulated",
            "std_error",
            "tolerance"
        );
        let (mut pass, mut total) = (0, 0);
        for p in &pts {
            for c in &p.data.checks {
                let mut row = self.lead(p.value);
                row.extend([
                    c.quantity.to_string(),
                    opt(c.k),
                    opt(c.r),
                    num(c.analytical),
                    num(c.simulated),
                    num(c.std_error),
                    num(c.tolerance),
                    flag(c.pass),
                ]);
                rows.push(row);
                total += 1;
                pass += c.pass as usize;
                println!(
                    "{:>10} {:>8} {:>3} {:>3} {:>13.6e} {:>13.6e} {:>11.3e} {:>11.3e}  {}",
                    p.value,
                    c.quantity,
                    opt(c.k),
                    opt(c.r),
                    c.analytical,
                    c.simulated,
                    c.std_error,
                    c.tolerance,
                    if c.pass { "PASS" } else { "FAIL" }
                );
            }
        }
        println!("{pass}/{total} checks passed");
        self.sink.csv(
            "validate.csv",
            &[
                "axis",
                "value",
                "quantity",
                "k",
                "r",
                "analytical",
                "simulated",
                "std_error",
                "tolerance",
                "pass",
            ],
            &rows,
        )?;
        failures.sort_by(|a, b| a.value.total_cmp(&b.value));
        self.finish("validate.json", pts, failures)
    }

    fn degree(&self) -> CliResult<usize> {
        #[derive(Serialize)]
        struct Entry {
            key: ProductKey,
            mu: f64,
            sigma2: f64,
            n_bar: Option<f64>,
            degree: usize,
            vacuous: bool,
            clamped: bool,
        }
        #[derive(Serialize)]
        struct Products {
            products: Vec<Entry>,
        }
        let eps = self.opts.epsilon.expect("checked when resolving settings");
        let s = self.settings;
        let (pts, failures) = self.eval(|_, cfg| {
            let e = OutageEngine::new(cfg, OutageSettings { degree: DegreeRule::Fixed(6), ..s })?;
            let m = cfg.max_rounds;
            let mut keys: Vec<ProductKey> = (1..=m).map(ProductKey::Direct).collect();
            keys.extend((1..m).map(ProductKey::Relay));
            for k in 2..=m {
                keys.extend((1..k).map(|r| ProductKey::Mixed { r, k }));
            }
            keys.into_iter()
                .map(|key| {
                    let st = e.product_stats(key)?;
                    let base = LognormalBase::from_stats(&st)?;
                    let sel = select_degree(&base, eps)?;
                    Ok(Entry {
                        key,
                        mu: st.mu,
                        sigma2: st.sigma2,
                        n_bar: sel.raw,
                        degree: sel.degree,
                        vacuous: sel.vacuous,
                        clamped: sel.clamped,
                    })
                })
                .collect::<coopharq::Result<Vec<_>>>()
                .map(|products| Products { products })
        })?;
        let mut rows = Vec::new();
        println!("{:>10} {:>8} {:>3} {:>3} {:>12} {:>6}", self.axis(), "product", "k", "r", "n_bar", "degree");
        for p in &pts {
            for en in &p.data.products {
                let (name, k, r) = match en.key {
                    ProductKey::Direct(k) => ("direct", k.to_string(), String::new()),
                    ProductKey::Relay(r) => ("relay", String::new(), r.to_string()),
                    ProductKey::Mixed { r, k } => ("mixed", k.to_string(), r.to_string()),
                };
                println!(
                    "{:>10} {:>8} {:>3} {:>3} {:>12.6} {:>6}",
                    p.value,
                    name,
                    k,
                    r,
                    en.n_bar.unwrap_or(f64::NAN),
                    en.degree
                );
                let mut row = self.lead(p.value);
                row.extend([
                    name.to_string(),
                    k,
                    r,
                    num(en.mu),
                    num(en.sigma2),
                    num(eps),
                    num(en.n_bar.unwrap_or(f64::NAN)),
                    en.degree.to_string(),
                    flag(en.vacuous),
                    flag(en.clamped),
                ]);
                rows.push(row);
            }
        }
        self.sink.csv(
            "degree.csv",
            &[
                "axis", "value", "product", "k", "r", "mu", "sigma2", "epsilon", "n_bar", "degree", "vacuous",
                "clamped",
            ],
            &rows,
        )?;
        self.finish("degree.json", pts, failures)
    }
}
