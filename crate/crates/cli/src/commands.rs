//! Subcommand implementations.

use std::fmt;
use std::path::Path;

use fracfilter::montecarlo::PathSimulator;
use fracfilter::optimizer::example::{reference_conditions, solve_two_step_example, ExampleRoot};
use fracfilter::variation::{fd_relative_errors, DEFAULT_FD_STEP};
use fracfilter::{
    covariance_report, derive_stream, error_covariance_oracle, fd_gradient, gradient, multi_start,
    simulate_ensemble, stationarity_certificate, Coefficient, Error, Mode, NoiseModel,
    OptimizationResult, OptimizerOptions, SystemSpec, WeightSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{load_config, resolve, ConfigError, ResolvedConfig, RunConfig};
use crate::report::{num, write_csv, write_json, Format, IoError, Table};
use crate::{Command, Flags, NoiseFlags};

pub const EXAMPLE_RHOS: [f64; 3] = [0.25, 0.5, 0.75];
pub const EXAMPLE_WEIGHTS: [(f64, f64); 3] = [(1.0, 1.0), (1.0, 2.0), (0.0, 1.0)];

/// Horizon and Hurst parameters of the instance drawn by `gradcheck` without a config.
pub const RANDOM_INSTANCE: (usize, f64, f64) = (6, 0.75, 0.6);

#[derive(Debug)]
pub enum CommandError {
    Config(ConfigError),
    Io(IoError),
    Core(Error),
    Usage(String),
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Config(e) => e.fmt(f),
            CommandError::Io(e) => e.fmt(f),
            CommandError::Core(e) => e.fmt(f),
            CommandError::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<IoError> for CommandError {
    fn from(e: IoError) -> Self {
        CommandError::Io(e)
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Core(e)
    }
}

pub type CommandResult = Result<Outcome, CommandError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done,
    /// Reports were written but the optimizer did not reach its tolerance.
    NotConverged(String),
}

pub fn dispatch(command: &Command) -> CommandResult {
    match command {
        Command::Optimize(f) => optimize(f),
        Command::Evaluate(f) => evaluate(f),
        Command::Gradcheck(f) => gradcheck(f),
        Command::Simulate(f) => simulate(f),
        Command::Example(f) => example(f),
        Command::Noise(f) => noise(f),
    }
}

fn require_config(flags: &Flags, command: &str) -> Result<ResolvedConfig, CommandError> {
    let path = flags.config.as_ref().ok_or_else(|| CommandError::Usage(format!("{command} needs --config")))?;
    Ok(load_config(path, &flags.overrides())?)
}

/// CSV tables plus a config echo, or one JSON document embedding both.
fn emit(out: &Path, name: &str, format: Format, tables: &[(&str, &Table)], document: serde_json::Value) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            for (suffix, table) in tables {
                write_csv(&out.join(format!("{name}{suffix}.csv")), table)?;
            }
            let config = document.get("config").or_else(|| document.get("parameters"));
            if let Some(config) = config {
                write_json(&out.join(format!("{name}_config.json")), config)?;
            }
            Ok(())
        }
        Format::Json => write_json(&out.join(format!("{name}.json")), &document),
    }
}

fn covariance_table(k_closed: &[f64], k_oracle: &[f64]) -> Table {
    let mut t = Table::new(["k", "K_closed", "K_oracle", "abs_diff"]);
    for (k, (c, o)) in k_closed.iter().zip(k_oracle).enumerate() {
        t.push(vec![k.to_string(), num(*c), num(*o), num((c - o).abs())]);
    }
    t
}

fn optimize(flags: &Flags) -> CommandResult {
    let cfg = require_config(flags, "optimize")?;
    let opts = cfg.echo.optimizer;
    let (result, converged) = match multi_start(&cfg.system, &cfg.weights, &opts, cfg.echo.seed) {
        Ok(r) => (r, true),
        Err(Error::NotConverged(r)) => (*r, false),
        Err(e) => return Err(e.into()),
    };
    write_optimize(flags, &cfg, &result, converged)?;
    Ok(if converged {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("no start converged (best residual {:e})", result.residual))
    })
}

fn write_optimize(flags: &Flags, cfg: &ResolvedConfig, result: &OptimizationResult, converged: bool) -> Result<(), CommandError> {
    let (s, w, gain) = (&cfg.system, &cfg.weights, &result.best_gain);
    let g_validated = gradient(s, gain, w, Mode::Validated)?;
    let g_paper = gradient(s, gain, w, Mode::Paper)?;
    let cov = covariance_report(s, gain, w)?;
    let cert = stationarity_certificate(s, gain, w, cfg.echo.optimizer.tolerance)?;
    let residual = match flags.mode {
        Mode::Validated => cert.validated.residual,
        Mode::Paper => cert.paper.residual,
    };

    let mut gains = Table::new(["k", "gamma", "g_validated", "g_paper"]);
    for k in 0..gain.len() {
        gains.push(vec![k.to_string(), num(gain[k]), num(g_validated[k]), num(g_paper[k])]);
    }
    let mut summary = Table::new(["J", "residual", "iterations", "seed", "converged", "mode"]);
    summary.push(vec![
        num(cov.cost),
        num(residual),
        result.iterations.to_string(),
        cfg.echo.seed.to_string(),
        converged.to_string(),
        flags.mode.to_string(),
    ]);
    let n = s.horizon();
    let mut starts = Table::new(
        ["start", "converged", "cost", "residual", "iterations"]
            .into_iter()
            .map(String::from)
            .chain((0..n).map(|i| format!("gamma_{i}"))),
    );
    for (i, r) in result.all_starts.iter().enumerate() {
        let mut row = vec![i.to_string(), r.converged.to_string(), num(r.cost), num(r.residual), r.iterations.to_string()];
        row.extend(r.gain.iter().map(|g| num(*g)));
        starts.push(row);
    }
    let covariance = covariance_table(&cov.k_closed, &cov.k_oracle);
    let doc = json!({
        "config": cfg.echo,
        "summary": {
            "J": cov.cost,
            "residual": residual,
            "mode": flags.mode,
            "iterations": result.iterations,
            "seed": cfg.echo.seed,
            "converged": converged,
        },
        "gain": gain.as_slice(),
        "g_validated": g_validated,
        "g_paper": g_paper,
        "covariance": cov,
        "certificate": cert,
        "starts": result.all_starts,
    });
    emit(
        &flags.out,
        "optimize",
        flags.format,
        &[("", &gains), ("_summary", &summary), ("_covariance", &covariance), ("_starts", &starts)],
        doc,
    )?;
    Ok(())
}

fn evaluate(flags: &Flags) -> CommandResult {
    let cfg = require_config(flags, "evaluate")?;
    let cov = covariance_report(&cfg.system, &cfg.gain, &cfg.weights)?;
    let table = covariance_table(&cov.k_closed, &cov.k_oracle);
    let mut summary = Table::new(["J", "max_rel_discrepancy"]);
    summary.push(vec![num(cov.cost), num(cov.max_discrepancy)]);
    let doc = json!({ "config": cfg.echo, "covariance": cov });
    emit(&flags.out, "evaluate", flags.format, &[("", &table), ("_summary", &summary)], doc)?;
    Ok(Outcome::Done)
}

/// Random instance for `gradcheck`: coefficients and gain from `seed`.
pub fn random_instance(seed: u64) -> ResolvedConfig {
    let (n, h1, h2) = RANDOM_INSTANCE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let system = SystemSpec::random(&mut rng, n, NoiseModel::new(h1).unwrap(), NoiseModel::new(h2).unwrap());
    let weights: Vec<f64> = (0..=n).map(|_| rng.random_range(0.1..=2.0)).collect();
    let gain: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
    let doc = RunConfig {
        system: system.to_raw(),
        weights: Coefficient::Sequence(weights),
        optimizer: OptimizerOptions::default(),
        seed,
        paths: crate::config::DEFAULT_PATHS,
        gain: Some(gain),
    };
    resolve(doc).expect("random instances are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckSummary {
    pub max_rel_err_validated: f64,
    pub max_rel_err_paper: f64,
    pub residual_validated: f64,
    pub residual_paper: f64,
    pub fd_step: f64,
}

fn gradcheck(flags: &Flags) -> CommandResult {
    let cfg = match &flags.config {
        Some(path) => load_config(path, &flags.overrides())?,
        None => random_instance(flags.seed.unwrap_or(0)),
    };
    let (s, g, w) = (&cfg.system, &cfg.gain, &cfg.weights);
    let gv = gradient(s, g, w, Mode::Validated)?;
    let gp = gradient(s, g, w, Mode::Paper)?;
    let fd = fd_gradient(s, g, w, DEFAULT_FD_STEP)?;
    let ev = fd_relative_errors(&gv, &fd);
    let ep = fd_relative_errors(&gp, &fd);
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let summary = GradcheckSummary {
        max_rel_err_validated: max(&ev),
        max_rel_err_paper: max(&ep),
        residual_validated: max(&gv),
        residual_paper: max(&gp),
        fd_step: DEFAULT_FD_STEP,
    };
    let mut table = Table::new(["k", "gamma", "g_validated", "g_paper", "g_fd", "rel_err_validated", "rel_err_paper"]);
    for k in 0..g.len() {
        table.push(vec![k.to_string(), num(g[k]), num(gv[k]), num(gp[k]), num(fd[k]), num(ev[k]), num(ep[k])]);
    }
    let mut st = Table::new(["max_rel_err_validated", "max_rel_err_paper", "residual_validated", "residual_paper", "fd_step"]);
    st.push(vec![
        num(summary.max_rel_err_validated),
        num(summary.max_rel_err_paper),
        num(summary.residual_validated),
        num(summary.residual_paper),
        num(summary.fd_step),
    ]);
    let doc = json!({
        "config": cfg.echo,
        "summary": summary,
        "g_validated": gv,
        "g_paper": gp,
        "g_fd": fd,
    });
    emit(&flags.out, "gradcheck", flags.format, &[("", &table), ("_summary", &st)], doc)?;
    Ok(Outcome::Done)
}

fn simulate(flags: &Flags) -> CommandResult {
    let cfg = require_config(flags, "simulate")?;
    let k = error_covariance_oracle(&cfg.system, &cfg.gain)?;
    let stats = simulate_ensemble(&cfg.system, &cfg.gain, cfg.echo.paths, cfg.echo.seed)?;
    let mut table = Table::new(["k", "K_analytic", "K_empirical", "se", "mean_error"]);
    for i in 0..k.len() {
        table.push(vec![
            i.to_string(),
            num(k[i]),
            num(stats.empirical_k[i]),
            num(stats.se_k[i]),
            num(stats.mean_error[i]),
        ]);
    }
    let doc = json!({ "config": cfg.echo, "k_analytic": k, "ensemble": stats });
    emit(&flags.out, "simulate", flags.format, &[("", &table)], doc)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize)]
struct ExampleOptimum {
    rho: f64,
    a1: f64,
    a2: f64,
    gain: Vec<f64>,
    cost: f64,
    residual_validated: f64,
    residual_paper: f64,
    /// Reference conditions evaluated at the validated optimum.
    reference_conditions: [f64; 2],
    converged: bool,
}

#[derive(Debug, Clone, Serialize)]
struct ExampleCase {
    rho: f64,
    a1: f64,
    a2: f64,
    roots: Vec<ExampleRoot>,
    optimum: ExampleOptimum,
}

fn example(flags: &Flags) -> CommandResult {
    let rhos: Vec<f64> = match flags.rho {
        Some(r) => vec![r],
        None => EXAMPLE_RHOS.to_vec(),
    };
    let pairs: Vec<(f64, f64)> = match (flags.a1, flags.a2) {
        (Some(a1), Some(a2)) => vec![(a1, a2)],
        (None, None) => EXAMPLE_WEIGHTS.to_vec(),
        _ => return Err(CommandError::Usage("--a1 and --a2 must be given together".into())),
    };
    let seed = flags.seed.unwrap_or(0);
    let mut opts = OptimizerOptions::default();
    if let Some(v) = flags.starts {
        opts.starts = v;
    }
    if let Some(v) = flags.tol {
        opts.tolerance = v;
    }
    if let Some(v) = flags.max_iters {
        opts.max_iterations = v;
    }
    opts.validate()?;

    let mut roots_t = Table::new(["rho", "a1", "a2", "root_index", "gamma0", "gamma1", "poly_residual"]);
    let mut optima_t = Table::new([
        "rho", "a1", "a2", "gamma0", "gamma1", "cost", "residual_validated", "residual_paper", "converged",
    ]);
    let mut paths_t = Table::new(["rho", "a1", "a2", "k", "x", "y", "z", "K"]);
    let mut cases = Vec::new();
    let mut failed = Vec::new();
    for &rho in &rhos {
        let noise = NoiseModel::from_lag1(rho).map_err(|_| Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")))?;
        let system = SystemSpec::two_step_example(noise);
        for &(a1, a2) in &pairs {
            let roots = match solve_two_step_example(rho, a1, a2) {
                Ok(r) => r,
                Err(Error::NoRealRoot { .. }) => Vec::new(),
                Err(e) => return Err(e.into()),
            };
            for (i, r) in roots.iter().enumerate() {
                roots_t.push(vec![num(rho), num(a1), num(a2), i.to_string(), num(r.gamma0), num(r.gamma1), num(r.poly_residual)]);
            }
            let weights = WeightSpec::new(vec![0.0, a1, a2])?;
            let (result, converged) = match multi_start(&system, &weights, &opts, seed) {
                Ok(r) => (r, true),
                Err(Error::NotConverged(r)) => (*r, false),
                Err(e) => return Err(e.into()),
            };
            if !converged {
                failed.push(format!("rho={rho} a=({a1},{a2})"));
            }
            let gain = result.best_gain.clone();
            let optimum = ExampleOptimum {
                rho,
                a1,
                a2,
                gain: gain.as_slice().to_vec(),
                cost: result.best_cost,
                residual_validated: gradient(&system, &gain, &weights, Mode::Validated)?.iter().fold(0.0, |m, x| m.max(x.abs())),
                residual_paper: gradient(&system, &gain, &weights, Mode::Paper)?.iter().fold(0.0, |m, x| m.max(x.abs())),
                reference_conditions: reference_conditions(rho, a1, a2, gain[0], gain[1]),
                converged,
            };
            optima_t.push(vec![
                num(rho),
                num(a1),
                num(a2),
                num(gain[0]),
                num(gain[1]),
                num(optimum.cost),
                num(optimum.residual_validated),
                num(optimum.residual_paper),
                converged.to_string(),
            ]);
            // the same draws for every weight pair at a given rho
            let path = PathSimulator::new(&system, &gain)?.path(seed, 0)?;
            let k = error_covariance_oracle(&system, &gain)?;
            for i in 0..=system.horizon() {
                paths_t.push(vec![num(rho), num(a1), num(a2), i.to_string(), num(path.x[i]), num(path.y[i]), num(path.z[i]), num(k[i])]);
            }
            cases.push(ExampleCase { rho, a1, a2, roots, optimum });
        }
    }
    let parameters = json!({
        "rho": rhos,
        "weights": pairs,
        "seed": seed,
        "optimizer": opts,
        "quintic": "a1 g (rho g + 1)^2 + a2 (rho + g) (1 + g)^4",
    });
    let doc = json!({ "parameters": parameters, "cases": cases });
    emit(
        &flags.out,
        "example",
        flags.format,
        &[("", &roots_t), ("_optima", &optima_t), ("_paths", &paths_t)],
        doc,
    )?;
    Ok(if failed.is_empty() {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("no start converged for {}", failed.join(", ")))
    })
}

fn noise(flags: &NoiseFlags) -> CommandResult {
    let hursts: Vec<f64> = if !flags.hurst.is_empty() {
        flags.hurst.clone()
    } else if let Some(path) = &flags.config {
        let cfg = load_config(path, &Default::default())?;
        vec![cfg.system.noise1().hurst(), cfg.system.noise2().hurst()]
    } else {
        return Err(CommandError::Usage("noise needs --hurst or --config".into()));
    };
    let models = hursts.iter().map(|&h| NoiseModel::new(h)).collect::<Result<Vec<_>, _>>()?;
    if flags.samples > 0 && flags.length == 0 {
        return Err(CommandError::Usage("--length must be positive".into()));
    }

    let mut table = Table::new(["hurst", "lag", "rho"]);
    let mut paths = Table::new(["hurst", "path", "t", "w"]);
    let mut doc_models = Vec::new();
    for (m_idx, model) in models.iter().enumerate() {
        let rho: Vec<f64> = (0..=flags.lags).map(|l| model.autocovariance(l)).collect();
        for (lag, r) in rho.iter().enumerate() {
            table.push(vec![num(model.hurst()), lag.to_string(), num(*r)]);
        }
        let mut samples = Vec::new();
        if flags.samples > 0 {
            let sampler = fracfilter::noise::FgnSampler::new(*model, flags.length)?;
            let base = (m_idx * flags.samples) as u64;
            let mut rngs: Vec<_> = (0..flags.samples as u64).map(|p| derive_stream(flags.seed, base + p)).collect();
            samples = sampler.sample_batch(&mut rngs)?;
            for (p, w) in samples.iter().enumerate() {
                for (t, v) in w.iter().enumerate() {
                    paths.push(vec![num(model.hurst()), p.to_string(), t.to_string(), num(*v)]);
                }
            }
        }
        doc_models.push(json!({ "hurst": model.hurst(), "rho": rho, "samples": samples }));
    }
    let parameters = json!({
        "hurst": hursts,
        "lags": flags.lags,
        "samples": flags.samples,
        "length": flags.length,
        "seed": flags.seed,
    });
    let doc = json!({ "parameters": parameters, "models": doc_models });
    let mut tables: Vec<(&str, &Table)> = vec![("", &table)];
    if flags.samples > 0 {
        tables.push(("_paths", &paths));
    }
    emit(&flags.out, "noise", flags.format, &tables, doc)?;
    Ok(Outcome::Done)
}
