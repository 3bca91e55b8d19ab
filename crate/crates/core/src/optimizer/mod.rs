//! Gain optimization: gradient descent with backtracking on the weighted
//! error-covariance cost, multi-start aggregation, the classical white-noise
//! baseline, and stationarity certificates.

pub mod example;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{cost, error_covariance_closed, error_covariance_oracle, transition_product, TransitionTable};
use crate::error::{check_len, Error, Result};
use crate::model::{derive_filter_coefficients, FilterGain, SystemSpec, WeightSpec};
use crate::variation::{gradient_from_table, max_abs, q_terms, Mode};

/// Relative band inside which cost differences are treated as round-off.
pub const COST_SLACK: f64 = 1e-14;

const MAX_BACKTRACKS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Convergence threshold on `max_i |g(i)|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub starts: usize,
    /// Random starts are uniform in `[-init_box, init_box]` per coordinate.
    pub init_box: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub initial_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            starts: 8,
            init_box: 2.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            initial_step: 1.0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.tolerance > 0.0) {
            bad.push("tolerance must be positive");
        }
        if self.max_iterations == 0 {
            bad.push("max_iterations must be positive");
        }
        if self.starts == 0 {
            bad.push("starts must be at least 1");
        }
        if !(self.init_box > 0.0) {
            bad.push("init_box must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            bad.push("shrink must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease <= 0.5) {
            bad.push("sufficient_decrease must lie in (0, 0.5]");
        }
        if !(self.initial_step > 0.0) {
            bad.push("initial_step must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(bad.join("; ")))
        }
    }
}

/// Outcome of one descent run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartRecord {
    pub start: Vec<f64>,
    pub gain: Vec<f64>,
    /// Cost at `gain`, evaluated on the oracle covariance.
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted step, starting with the cost at `start`.
    #[serde(skip)]
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_gain: FilterGain,
    pub best_cost: f64,
    pub residual: f64,
    pub iterations: usize,
    pub all_starts: Vec<StartRecord>,
}

struct Objective<'a> {
    system: &'a SystemSpec,
    weights: &'a WeightSpec,
}

impl Objective<'_> {
    fn value(&self, gain: &FilterGain) -> Result<f64> {
        cost(&error_covariance_closed(self.system, gain)?, self.weights)
    }

    fn gradient(&self, gain: &FilterGain) -> Result<Vec<f64>> {
        Ok(gradient_from_table(&q_terms(self.system, gain, Mode::Validated)?, self.weights))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Steepest descent on the validated gradient with Armijo backtracking.
///
/// The first trial step is `initial_step`; later trial steps use the
/// Barzilai-Borwein length `s.s / s.y` when it is positive. A step whose cost
/// change is within round-off of zero is accepted only if the directional
/// derivative at the trial point has not reversed (approximate Armijo).
pub fn minimize(system: &SystemSpec, weights: &WeightSpec, opts: &OptimizerOptions, start: &FilterGain) -> Result<StartRecord> {
    opts.validate()?;
    weights.check(system)?;
    check_len("start gain", system.horizon(), start.len())?;
    let obj = Objective { system, weights };

    let mut x = start.clone();
    let mut fx = obj.value(&x)?;
    let mut g = obj.gradient(&x)?;
    let mut trace = vec![fx];
    let mut prev: Option<(FilterGain, Vec<f64>)> = None;
    let mut iterations = 0;

    while max_abs(&g) > opts.tolerance && iterations < opts.max_iterations {
        let gg = dot(&g, &g);
        let mut t = match &prev {
            Some((xp, gp)) => {
                let s: Vec<f64> = x.as_slice().iter().zip(xp.as_slice()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 0.0 {
                    (dot(&s, &s) / sy).clamp(1e-12, 1e12)
                } else {
                    opts.initial_step
                }
            }
            None => opts.initial_step,
        };
        let direction: Vec<f64> = g.iter().map(|v| -v).collect();
        let band = COST_SLACK * fx.abs().max(1.0);

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = x.step(&direction, t);
            let ft = obj.value(&trial)?;
            if ft.is_finite() && ft <= fx - opts.sufficient_decrease * t * gg {
                accepted = Some((trial, ft, None));
                break;
            }
            if ft.is_finite() && ft <= fx + band {
                let gt = obj.gradient(&trial)?;
                if -dot(&gt, &g) <= (1.0 - 2.0 * opts.sufficient_decrease) * gg {
                    accepted = Some((trial, ft, Some(gt)));
                    break;
                }
            }
            t *= opts.shrink;
        }
        let Some((trial, ft, gt)) = accepted else {
            break;
        };
        let gt = match gt {
            Some(gt) => gt,
            None => obj.gradient(&trial)?,
        };
        prev = Some((std::mem::replace(&mut x, trial), std::mem::replace(&mut g, gt)));
        fx = ft;
        trace.push(fx);
        iterations += 1;
    }

    let residual = max_abs(&g);
    let oracle_cost = cost(&error_covariance_oracle(system, &x)?, weights)?;
    Ok(StartRecord {
        start: start.as_slice().to_vec(),
        gain: x.into_inner(),
        cost: oracle_cost,
        residual,
        iterations,
        converged: residual <= opts.tolerance,
        cost_trace: trace,
    })
}

/// Start points: the zero gain, then `starts - 1` uniform draws seeded by `seed`.
pub fn start_points(horizon: usize, opts: &OptimizerOptions, seed: u64) -> Vec<FilterGain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![FilterGain::zeros(horizon)];
    for _ in 1..opts.starts {
        out.push(FilterGain::new(
            (0..horizon).map(|_| rng.random_range(-opts.init_box..=opts.init_box)).collect(),
        ));
    }
    out
}

/// Run every start and keep the least-cost converged one. When no start
/// converges, the error carries the aggregate built from all starts.
pub fn multi_start(system: &SystemSpec, weights: &WeightSpec, opts: &OptimizerOptions, seed: u64) -> Result<OptimizationResult> {
    opts.validate()?;
    let runs = start_points(system.horizon(), opts, seed)
        .iter()
        .map(|s| minimize(system, weights, opts, s))
        .collect::<Result<Vec<_>>>()?;

    let pick = |only_converged: bool| {
        runs.iter()
            .filter(|r| r.converged || !only_converged)
            .min_by(|a, b| a.cost.total_cmp(&b.cost))
            .cloned()
    };
    let (best, ok) = match pick(true) {
        Some(b) => (b, true),
        None => (pick(false).expect("at least one start"), false),
    };
    let result = OptimizationResult {
        best_gain: FilterGain::new(best.gain.clone()),
        best_cost: best.cost,
        residual: best.residual,
        iterations: best.iterations,
        all_starts: runs,
    };
    if ok {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}

/// Step-by-step minimizer of `K(k+1)` for white noises: with
/// `K(k+1) = (A - Gamma D)^2 K(k) + sigma^2 + Gamma^2 gamma^2`,
/// `Gamma(k) = A D K(k) / (D^2 K(k) + gamma^2)` (zero when the denominator vanishes).
pub fn greedy_white_noise_gain(system: &SystemSpec) -> FilterGain {
    let (a, d, sigma, gamma) = (system.a(), system.d(), system.sigma(), system.gamma());
    let mut k = system.x0_var();
    let mut out = Vec::with_capacity(system.horizon());
    for i in 0..system.horizon() {
        let den = d[i] * d[i] * k + gamma[i] * gamma[i];
        let g = if den > 0.0 { a[i] * d[i] * k / den } else { 0.0 };
        let h = a[i] - g * d[i];
        k = h * h * k + sigma[i] * sigma[i] + g * g * gamma[i] * gamma[i];
        out.push(g);
    }
    FilterGain::new(out)
}

/// Residuals of each line of the necessary-condition system in one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCertificate {
    pub mode: Mode,
    /// `max_k |H(k) - (A(k) - Gamma(k) D(k))|`.
    pub coefficient_residual: f64,
    /// `max |P(i, k) - prod_{j=i}^{k-1} H(j)|` between the table and direct products.
    pub product_residual: f64,
    /// `max |Q - (Q1 + Q2 + Q3)|`.
    pub q_sum_residual: f64,
    /// The weighted sums `g(i) = sum_{k>i} a(k) Q(k-1, i)`.
    pub stationarity: Vec<f64>,
    /// Coordinates whose gain never reaches a weighted covariance.
    pub structurally_zero: Vec<bool>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityCertificate {
    pub tolerance: f64,
    pub paper: ModeCertificate,
    pub validated: ModeCertificate,
    /// Validated-mode residual within tolerance.
    pub passed: bool,
}

pub fn stationarity_certificate(
    system: &SystemSpec,
    gain: &FilterGain,
    weights: &WeightSpec,
    tolerance: f64,
) -> Result<StationarityCertificate> {
    weights.check(system)?;
    let coeffs = derive_filter_coefficients(system, gain)?;
    let n = system.horizon();
    let g = gain.as_slice();
    let coefficient_residual = (0..n)
        .map(|k| (coeffs.h_gamma[k] - (system.a()[k] - g[k] * system.d()[k])).abs())
        .fold(0.0, f64::max);
    let table = TransitionTable::new(&coeffs.h_gamma);
    let mut product_residual: f64 = 0.0;
    for k in 0..=n {
        for i in 0..=k {
            let direct = transition_product(&coeffs.h_gamma, i, k)?;
            product_residual = product_residual.max((table.get(i, k) - direct).abs());
        }
    }
    let a = weights.as_slice();
    let structurally_zero: Vec<bool> = (0..n)
        .map(|i| a[i + 1..].iter().all(|&w| w == 0.0) || (system.d()[i] == 0.0 && system.gamma()[i] == 0.0))
        .collect();

    let certify = |mode: Mode| -> Result<ModeCertificate> {
        let q = q_terms(system, gain, mode)?;
        let q_sum_residual = q
            .rows()
            .iter()
            .flatten()
            .map(|e| (e.total() - (e.q1 + e.q2 + e.q3)).abs())
            .fold(0.0, f64::max);
        let stationarity = gradient_from_table(&q, weights);
        Ok(ModeCertificate {
            mode,
            coefficient_residual,
            product_residual,
            q_sum_residual,
            residual: max_abs(&stationarity),
            stationarity,
            structurally_zero: structurally_zero.clone(),
        })
    };
    let paper = certify(Mode::Paper)?;
    let validated = certify(Mode::Validated)?;
    Ok(StationarityCertificate { tolerance, passed: validated.residual <= tolerance, paper, validated })
}
