//! Directional (Gateaux) derivatives of the error covariance and the cost
//! with respect to the gain sequence.
//!
//! `Q(k-1, i)` is the coefficient of `beta(i)` in the derivative of `K(k)`
//! along `beta`, split as `Q = Q1 + Q2 + Q3` (initial-variance term,
//! direct gain term on the `W2` loading, and the term through the transition
//! products). Two variants are kept:
//!
//! * [`Mode::Paper`] is the reference form of the necessary-condition system:
//!   `Q2` and `Q3` carry no symmetrization factor and `Q1` has no `D(i)`
//!   factor.
//! * [`Mode::Validated`] is the exact derivative of the covariance, certified
//!   against central finite differences. It equals the reference `Q2`/`Q3`
//!   doubled, and `Q1` gains the `D(i)` factor coming from `dH/dGamma = -D`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::{error_covariance_oracle, TransitionTable};
use crate::error::{check_len, Error, Result};
use crate::model::{derive_filter_coefficients, FilterGain, SystemSpec, WeightSpec};

pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Paper,
    Validated,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Paper => "paper",
            Mode::Validated => "validated",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Mode::Paper),
            "validated" => Ok(Mode::Validated),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?} (expected paper|validated)"))),
        }
    }
}

/// Coefficient of `beta(j)` in the derivative of `prod_{m=i}^{k-1} H(m)`:
/// `-P(i, j) P(j+1, k) D(j)` for `i <= j < k`, zero otherwise.
pub fn product_derivative(h_gamma: &[f64], d: &[f64], i: usize, k: usize, direction: usize) -> Result<f64> {
    check_len("D", h_gamma.len(), d.len())?;
    if i > k || k > h_gamma.len() {
        return Err(Error::IndexOutOfRange(format!(
            "product derivative ({i}, {k}) with horizon {}",
            h_gamma.len()
        )));
    }
    if direction < i || direction >= k {
        return Ok(0.0);
    }
    let left: f64 = h_gamma[i..direction].iter().product();
    let right: f64 = h_gamma[direction + 1..k].iter().product();
    Ok(-left * right * d[direction])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct QEntry {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl QEntry {
    pub fn total(&self) -> f64 {
        self.q1 + self.q2 + self.q3
    }
}

/// Lower-triangular table `Q(k-1, i)`, `1 <= k <= N`, `0 <= i < k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTable {
    pub mode: Mode,
    rows: Vec<Vec<QEntry>>,
}

impl QTable {
    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    /// Entry `Q(k-1, i)` addressed by `k` (the covariance step, `1..=N`).
    pub fn entry(&self, k: usize, i: usize) -> QEntry {
        self.rows[k - 1][i]
    }

    pub fn q(&self, k: usize, i: usize) -> f64 {
        self.entry(k, i).total()
    }

    pub fn rows(&self) -> &[Vec<QEntry>] {
        &self.rows
    }
}

pub fn q_terms(system: &SystemSpec, gain: &FilterGain, mode: Mode) -> Result<QTable> {
    let n = system.horizon();
    let h = derive_filter_coefficients(system, gain)?.h_gamma;
    let p = TransitionTable::new(&h);
    let rho1 = system.noise1().table(n.max(1));
    let rho2 = system.noise2().table(n.max(1));
    let (sigma, gamma, d, g) = (system.sigma(), system.gamma(), system.d(), gain.as_slice());
    let v0 = system.x0_var();
    let factor = match mode {
        Mode::Paper => 1.0,
        Mode::Validated => 2.0,
    };
    let obs: Vec<f64> = (0..n).map(|i| g[i] * gamma[i]).collect();

    let mut rows = Vec::with_capacity(n);
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut s = vec![0.0; n];
    for k in 1..=n {
        for j in 0..k {
            let pj = p.get(j + 1, k);
            u1[j] = sigma[j] * pj;
            u2[j] = obs[j] * pj;
        }
        // s(l) = sum_j [rho1(l-j) sigma(l) sigma(j) + rho2(l-j) obs(l) obs(j)] P(j+1, k)
        for l in 0..k {
            let mut a1 = 0.0;
            let mut a2 = 0.0;
            for j in 0..k {
                let lag = l as isize - j as isize;
                a1 += rho1.at(lag) * u1[j];
                a2 += rho2.at(lag) * u2[j];
            }
            s[l] = sigma[l] * a1 + obs[l] * a2;
        }
        let row = (0..k)
            .map(|m| {
                let pm = p.get(m + 1, k);
                let mut q1 = -2.0 * p.get(0, k) * v0 * p.get(0, m) * pm;
                if mode == Mode::Validated {
                    q1 *= d[m];
                }
                let t2: f64 = (0..k).map(|j| rho2.at(m as isize - j as isize) * u2[j]).sum();
                let q2 = factor * gamma[m] * pm * t2;
                let t3: f64 = (0..m).map(|l| s[l] * p.get(l + 1, m)).sum();
                let q3 = -factor * d[m] * pm * t3;
                QEntry { q1, q2, q3 }
            })
            .collect();
        rows.push(row);
    }
    Ok(QTable { mode, rows })
}

/// `K~(k) = sum_{i<k} Q(k-1, i) beta(i)` for `k = 1..=N`.
pub fn gateaux_k(system: &SystemSpec, gain: &FilterGain, beta: &[f64], mode: Mode) -> Result<Vec<f64>> {
    check_len("direction", system.horizon(), beta.len())?;
    let table = q_terms(system, gain, mode)?;
    Ok(table
        .rows
        .iter()
        .map(|row| row.iter().zip(beta).map(|(q, b)| q.total() * b).sum())
        .collect())
}

/// `g(i) = sum_{k=i+1}^{N} a(k) Q(k-1, i)`.
pub fn gradient_from_table(table: &QTable, weights: &WeightSpec) -> Vec<f64> {
    let n = table.horizon();
    let a = weights.as_slice();
    (0..n)
        .map(|i| (i + 1..=n).map(|k| a[k] * table.q(k, i)).sum())
        .collect()
}

pub fn gradient(system: &SystemSpec, gain: &FilterGain, weights: &WeightSpec, mode: Mode) -> Result<Vec<f64>> {
    check_len("weights", system.horizon() + 1, weights.len())?;
    Ok(gradient_from_table(&q_terms(system, gain, mode)?, weights))
}

/// Central finite-difference gradient of the cost evaluated through the
/// linear-map covariance oracle.
pub fn fd_gradient(system: &SystemSpec, gain: &FilterGain, weights: &WeightSpec, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    check_len("gain", system.horizon(), gain.len())?;
    check_len("weights", system.horizon() + 1, weights.len())?;
    let a = weights.as_slice();
    (0..gain.len())
        .map(|i| {
            let mut e = vec![0.0; gain.len()];
            e[i] = 1.0;
            let plus = error_covariance_oracle(system, &gain.step(&e, h))?;
            let minus = error_covariance_oracle(system, &gain.step(&e, -h))?;
            let diff: f64 = a.iter().zip(plus.iter().zip(&minus)).map(|(w, (p, m))| w * (p - m)).sum();
            Ok(diff / (2.0 * h))
        })
        .collect()
}

/// `max_i |g(i)|` in the given mode.
pub fn stationarity_residual(system: &SystemSpec, gain: &FilterGain, weights: &WeightSpec, mode: Mode) -> Result<f64> {
    Ok(max_abs(&gradient(system, gain, weights, mode)?))
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Per-coordinate `|g - g_fd| / max(1, |g_fd|)`.
pub fn fd_relative_errors(g: &[f64], g_fd: &[f64]) -> Vec<f64> {
    g.iter().zip(g_fd).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub mode: Mode,
    pub q_table: QTable,
    pub g: Vec<f64>,
    pub g_fd: Vec<f64>,
    /// `max_i |g(i)|`.
    pub residual: f64,
    /// `max_i |g(i) - g_fd(i)| / max(1, |g_fd(i)|)`.
    pub max_fd_error: f64,
}

pub fn gradient_report(
    system: &SystemSpec,
    gain: &FilterGain,
    weights: &WeightSpec,
    mode: Mode,
    fd_step: f64,
) -> Result<GradientReport> {
    check_len("weights", system.horizon() + 1, weights.len())?;
    let q_table = q_terms(system, gain, mode)?;
    let g = gradient_from_table(&q_table, weights);
    let g_fd = fd_gradient(system, gain, weights, fd_step)?;
    let max_fd_error = max_abs(&fd_relative_errors(&g, &g_fd));
    Ok(GradientReport { mode, residual: max_abs(&g), q_table, g, g_fd, max_fd_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::transition_product;
    use crate::model::RawSystem;
    use crate::noise::NoiseModel;

    fn system(h1: f64, h2: f64, x0_var: f64) -> SystemSpec {
        SystemSpec::from_raw(&RawSystem {
            horizon: 5,
            a: vec![0.9, -0.4, 1.1, 0.5, -0.8].into(),
            c: 0.3.into(),
            sigma: vec![0.8, 0.2, -0.5, 1.0, 0.6].into(),
            d: vec![1.0, 0.5, -0.7, 0.2, 0.9].into(),
            f: 0.1.into(),
            gamma: vec![-0.6, 0.4, 0.9, -0.3, 0.5].into(),
            x0_mean: 0.4,
            x0_var,
            hurst1: h1,
            hurst2: h2,
        })
        .unwrap()
    }

    fn gain() -> FilterGain {
        FilterGain::new(vec![0.3, 1.0, -0.5, 1.4, -0.2])
    }

    #[test]
    fn product_derivative_boundaries() {
        let h = [0.5, -2.0, 3.0];
        let d = [1.5, 0.5, -1.0];
        for j in 0..3 {
            assert_eq!(product_derivative(&h, &d, 1, 1, j).unwrap(), 0.0);
        }
        assert_eq!(product_derivative(&h, &d, 1, 2, 1).unwrap(), -0.5);
        assert_eq!(product_derivative(&h, &d, 1, 3, 0).unwrap(), 0.0);
        assert!(product_derivative(&h, &d, 0, 4, 1).is_err());
        assert!(product_derivative(&h, &d, 2, 1, 1).is_err());
    }

    #[test]
    fn product_derivative_matches_finite_difference() {
        let a = [0.7, -1.1, 0.4, 2.0, -0.3];
        let d = [1.5, 0.5, -1.0, 0.8, 1.2];
        let g = [0.2, -0.6, 1.3, 0.1, 0.9];
        let hg = |g: &[f64]| (0..5).map(|k| a[k] - g[k] * d[k]).collect::<Vec<_>>();
        let step = 1e-6;
        for i in 0..5 {
            for k in i..=5 {
                for j in 0..5 {
                    let mut gp = g;
                    gp[j] += step;
                    let mut gm = g;
                    gm[j] -= step;
                    let fd = (transition_product(&hg(&gp), i, k).unwrap() - transition_product(&hg(&gm), i, k).unwrap())
                        / (2.0 * step);
                    let an = product_derivative(&hg(&g), &d, i, k, j).unwrap();
                    assert!((an - fd).abs() < 1e-7, "({i},{k},{j}): {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn q1_vanishes_without_initial_variance() {
        let s = system(0.7, 0.6, 0.0);
        for mode in [Mode::Paper, Mode::Validated] {
            let t = q_terms(&s, &gain(), mode).unwrap();
            assert!(t.rows().iter().flatten().all(|e| e.q1 == 0.0));
        }
    }

    #[test]
    fn validated_directional_derivative_matches_fd() {
        let s = system(0.75, 0.6, 0.8);
        let g = gain();
        let beta = [0.4, -1.0, 0.3, 0.7, -0.5];
        let an = gateaux_k(&s, &g, &beta, Mode::Validated).unwrap();
        let h = 1e-6;
        let kp = error_covariance_oracle(&s, &g.step(&beta, h)).unwrap();
        let km = error_covariance_oracle(&s, &g.step(&beta, -h)).unwrap();
        for k in 1..=5 {
            let fd = (kp[k] - km[k]) / (2.0 * h);
            assert!((an[k - 1] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "k={k}: {} vs {fd}", an[k - 1]);
        }
    }

    #[test]
    fn gateaux_is_linear_in_direction() {
        let s = system(0.85, 0.55, 0.5);
        let b1 = [0.4, -1.0, 0.3, 0.7, -0.5];
        let b2 = [1.1, 0.2, -0.9, 0.0, 0.6];
        let sum: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
        for mode in [Mode::Paper, Mode::Validated] {
            let k1 = gateaux_k(&s, &gain(), &b1, mode).unwrap();
            let k2 = gateaux_k(&s, &gain(), &b2, mode).unwrap();
            let ks = gateaux_k(&s, &gain(), &sum, mode).unwrap();
            for i in 0..5 {
                assert!((ks[i] - k1[i] - k2[i]).abs() < 1e-12 * (1.0 + ks[i].abs()));
            }
            assert_eq!(gateaux_k(&s, &gain(), &[0.0; 5], mode).unwrap(), vec![0.0; 5]);
        }
    }

    #[test]
    fn validated_gradient_matches_fd() {
        for (h1, h2) in [(0.5, 0.5), (0.55, 0.85), (0.7, 0.7)] {
            let s = system(h1, h2, 0.6);
            let w = WeightSpec::new(vec![0.5, 1.0, 0.3, 2.0, 0.0, 1.5]).unwrap();
            let r = gradient_report(&s, &gain(), &w, Mode::Validated, DEFAULT_FD_STEP).unwrap();
            assert!(r.max_fd_error < 1e-5, "H=({h1},{h2}): {}", r.max_fd_error);
        }
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let s = system(0.7, 0.6, 0.6);
        // only a(0), which never sees the gain
        let t = q_terms(&s, &gain(), Mode::Validated).unwrap();
        let w = WeightSpec::unchecked(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(gradient_from_table(&t, &w), vec![0.0; 5]);
    }

    #[test]
    fn gain_free_cost_has_zero_gradient() {
        // D = 0 and gamma = 0: the gain never enters K
        let s = SystemSpec::from_raw(&RawSystem {
            horizon: 3,
            a: 0.8.into(),
            c: 1.0.into(),
            sigma: 1.0.into(),
            d: 0.0.into(),
            f: 0.5.into(),
            gamma: 0.0.into(),
            x0_mean: 0.0,
            x0_var: 1.0,
            hurst1: 0.8,
            hurst2: 0.8,
        })
        .unwrap();
        let w = WeightSpec::new(vec![1.0; 4]).unwrap();
        let g = FilterGain::new(vec![0.4, -0.3, 1.2]);
        assert_eq!(gradient(&s, &g, &w, Mode::Validated).unwrap(), vec![0.0; 3]);
        let fd = fd_gradient(&s, &g, &w, DEFAULT_FD_STEP).unwrap();
        assert!(fd.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn quadratic_cost_fd_is_sharp() {
        // sigma = 0, x0_var = 0: K is a polynomial in the gain, FD error is O(h^2)
        let mut raw = system(0.7, 0.6, 0.0).to_raw();
        raw.sigma = 0.0.into();
        let s = SystemSpec::from_raw(&raw).unwrap();
        let w = WeightSpec::new(vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let g = gradient(&s, &gain(), &w, Mode::Validated).unwrap();
        let fd = fd_gradient(&s, &gain(), &w, 1e-4).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn cost_is_quadratic_along_each_coordinate() {
        // each gain enters the error linearly, so a central difference is exact
        // up to round-off for any step
        let s = system(0.8, 0.65, 0.7);
        let w = WeightSpec::new(vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let g = gradient(&s, &gain(), &w, Mode::Validated).unwrap();
        for h in [0.5, 1e-1, 1e-2] {
            let fd = fd_gradient(&s, &gain(), &w, h).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "h={h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn example_values_in_unscaled_mode() {
        // x(k+1) = W1(k), y(k+1) = x(k) - W2(k); H(k) = -Gamma(k)
        let rho = 0.5;
        let s = SystemSpec::two_step_example(NoiseModel::from_lag1(rho).unwrap());
        let (g0, g1) = (0.6, -1.4);
        let t = q_terms(&s, &FilterGain::new(vec![g0, g1]), Mode::Paper).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(t.rows().iter().flatten().all(|e| e.q1 == 0.0));
        assert!(close(t.entry(1, 0).q2, g0));
        assert_eq!(t.entry(1, 0).q3, 0.0);
        assert_eq!(t.entry(2, 0).q3, 0.0);
        assert!(close(t.entry(2, 0).q2, (g0 - rho) * g1 * g1));
        assert!(close(t.entry(2, 1).q2, (1.0 - rho * g0) * g1));
        assert!(close(t.entry(2, 1).q3, (1.0 + g0 * g0) * g1 - rho * (1.0 + g0 * g1)));
        // K~(1) = Gamma(0) beta(0)
        let k = gateaux_k(&s, &FilterGain::new(vec![g0, g1]), &[1.0, 0.0], Mode::Paper).unwrap();
        assert!(close(k[0], g0));
    }

    #[test]
    fn example_derivative_in_validated_mode() {
        let rho = 0.25;
        let s = SystemSpec::two_step_example(NoiseModel::from_lag1(rho).unwrap());
        let (g0, g1) = (0.6, -1.4);
        let t = q_terms(&s, &FilterGain::new(vec![g0, g1]), Mode::Validated).unwrap();
        // d/dg0 of K(1) = 1 + g0^2
        assert!((t.q(1, 0) - 2.0 * g0).abs() < 1e-12);
        // K(2) = 1 + g1^2 (2 + g0^2) - 2 rho g1 - 2 rho g0 g1^2
        assert!((t.q(2, 0) - (2.0 * g0 * g1 * g1 - 2.0 * rho * g1 * g1)).abs() < 1e-12);
        let d1 = 2.0 * g1 * (2.0 + g0 * g0) - 2.0 * rho - 4.0 * rho * g0 * g1;
        assert!((t.q(2, 1) - d1).abs() < 1e-12);
    }

    #[test]
    fn first_step_weight_forces_zero_gain() {
        let s = SystemSpec::two_step_example(NoiseModel::from_lag1(0.5).unwrap());
        let w = WeightSpec::new(vec![0.0, 1.0, 0.0]).unwrap();
        for g1 in [-1.0, 0.0, 0.3, 2.0] {
            let g = FilterGain::new(vec![0.0, g1]);
            assert_eq!(stationarity_residual(&s, &g, &w, Mode::Paper).unwrap(), 0.0);
            assert_eq!(stationarity_residual(&s, &g, &w, Mode::Validated).unwrap(), 0.0);
        }
        let g = FilterGain::new(vec![0.7, 0.3]);
        assert_eq!(gradient(&s, &g, &w, Mode::Paper).unwrap(), vec![0.7, 0.0]);
        assert!(stationarity_residual(&s, &g, &w, Mode::Validated).unwrap() > 0.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("paper".parse::<Mode>().unwrap(), Mode::Paper);
        assert_eq!("validated".parse::<Mode>().unwrap(), Mode::Validated);
        assert!("other".parse::<Mode>().is_err());
    }
}
