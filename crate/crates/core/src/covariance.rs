//! Error covariance `K(k) = E[e(k)^2]` of the filter error `e = x - z`.
//!
//! Two independent routes are provided: the closed form built from transition
//! products, and an oracle that tracks `e(k)` as a linear map of
//! `(e(0), W1, W2)` by direct recursion and evaluates the quadratic form
//! against the exact joint noise covariance.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::model::{derive_filter_coefficients, FilterGain, SystemSpec, WeightSpec};
use crate::noise::covariance_matrix;

/// `prod_{j=i}^{k-1} h(j)`; the empty product (`i == k`) is 1.
pub fn transition_product(h_gamma: &[f64], i: usize, k: usize) -> Result<f64> {
    if i > k || k > h_gamma.len() {
        return Err(Error::IndexOutOfRange(format!(
            "transition product ({i}, {k}) with horizon {}",
            h_gamma.len()
        )));
    }
    Ok(h_gamma[i..k].iter().product())
}

/// All transition products `P(i, k)` for `0 <= i <= k <= N`.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    n: usize,
    data: Vec<f64>,
}

impl TransitionTable {
    pub fn new(h_gamma: &[f64]) -> Self {
        let n = h_gamma.len();
        let stride = n + 1;
        let mut data = vec![0.0; stride * stride];
        for k in 0..=n {
            data[k * stride + k] = 1.0;
            for i in (0..k).rev() {
                data[i * stride + k] = h_gamma[i] * data[(i + 1) * stride + k];
            }
        }
        Self { n, data }
    }

    /// `P(i, k)`; requires `i <= k <= N`.
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        debug_assert!(i <= k && k <= self.n);
        self.data[i * (self.n + 1) + k]
    }
}

/// Closed-form `K(0..=N)`: the initial-variance term plus the diagonal and
/// twice the strict lower triangle of the noise double sum.
pub fn error_covariance_closed(system: &SystemSpec, gain: &FilterGain) -> Result<Vec<f64>> {
    let n = system.horizon();
    let coeffs = derive_filter_coefficients(system, gain)?;
    let p = TransitionTable::new(&coeffs.h_gamma);
    let rho1 = system.noise1().table(n.max(1));
    let rho2 = system.noise2().table(n.max(1));
    let (sigma, gamma, g) = (system.sigma(), system.gamma(), gain.as_slice());
    // noise loadings of W2 enter through Gamma * gamma
    let obs: Vec<f64> = (0..n).map(|i| g[i] * gamma[i]).collect();

    let mut k_out = Vec::with_capacity(n + 1);
    k_out.push(system.x0_var());
    for k in 1..=n {
        let p0 = p.get(0, k);
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..k {
            let pi = p.get(i + 1, k);
            diag += pi * pi * (sigma[i] * sigma[i] + obs[i] * obs[i]);
            for j in 0..i {
                let pj = p.get(j + 1, k);
                let lag = (i - j) as isize;
                off += (rho1.at(lag) * sigma[i] * sigma[j] + rho2.at(lag) * obs[i] * obs[j]) * pi * pj;
            }
        }
        k_out.push(p0 * p0 * system.x0_var() + diag + 2.0 * off);
    }
    Ok(k_out)
}

/// `e(k) = constant[k] + rows[k] . (e(0) - E e(0), W1(0..N), W2(0..N))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorLinearMap {
    pub horizon: usize,
    /// Mean error `E e(k)`.
    pub constant: Vec<f64>,
    /// Coefficient rows of length `2N + 1`: `[e(0), W1(0), .., W1(N-1), W2(0), .., W2(N-1)]`.
    pub rows: Vec<Vec<f64>>,
}

impl ErrorLinearMap {
    pub fn w1_index(&self, i: usize) -> usize {
        1 + i
    }

    pub fn w2_index(&self, i: usize) -> usize {
        1 + self.horizon + i
    }
}

/// Linear map of the error for a filter started at `z(0) = E x(0)`.
pub fn error_linear_map(system: &SystemSpec, gain: &FilterGain) -> Result<ErrorLinearMap> {
    error_linear_map_from(system, gain, system.x0_mean())
}

/// Linear map of the error for a filter started at `z0`, built by unrolling
/// `e(k+1) = H(k) e(k) + [C - Gamma F - M](k) y(k) + [A - Gamma D - H](k) z(k)
///           + sigma(k) W1(k) - Gamma(k) gamma(k) W2(k)`.
///
/// The `y`/`z` terms only feed the mean; with the unbiased coefficients their
/// multipliers vanish identically.
pub fn error_linear_map_from(system: &SystemSpec, gain: &FilterGain, z0: f64) -> Result<ErrorLinearMap> {
    let n = system.horizon();
    let coeffs = derive_filter_coefficients(system, gain)?;
    let (a, c, d, f) = (system.a(), system.c(), system.d(), system.f());
    let g = gain.as_slice();
    let width = 2 * n + 1;

    let mut rows = Vec::with_capacity(n + 1);
    let mut row0 = vec![0.0; width];
    row0[0] = 1.0;
    rows.push(row0);

    // means of x, y, z along the deterministic part of the dynamics
    let (mut mx, mut my, mut mz) = (system.x0_mean(), 0.0, z0);
    let mut constant = Vec::with_capacity(n + 1);
    constant.push(mx - mz);

    for k in 0..n {
        let h = a[k] - g[k] * d[k];
        let prev = &rows[k];
        let mut next: Vec<f64> = prev.iter().map(|v| h * v).collect();
        next[1 + k] += system.sigma()[k];
        next[1 + n + k] -= g[k] * system.gamma()[k];
        rows.push(next);

        let y_mult = c[k] - g[k] * f[k] - coeffs.m_gamma[k];
        let z_mult = a[k] - g[k] * d[k] - coeffs.h_gamma[k];
        constant.push(h * constant[k] + y_mult * my + z_mult * mz);

        let my_next = d[k] * mx + f[k] * my;
        mz = coeffs.h_gamma[k] * mz + coeffs.m_gamma[k] * my + g[k] * my_next;
        mx = a[k] * mx + c[k] * my;
        my = my_next;
    }
    Ok(ErrorLinearMap { horizon: n, constant, rows })
}

/// Oracle `K(k) = v_k^T S v_k` with `S = diag(Var x0, R_{H1}, R_{H2})`.
pub fn error_covariance_oracle(system: &SystemSpec, gain: &FilterGain) -> Result<Vec<f64>> {
    let map = error_linear_map(system, gain)?;
    Ok(quadratic_forms(system, &map))
}

pub(crate) fn quadratic_forms(system: &SystemSpec, map: &ErrorLinearMap) -> Vec<f64> {
    let n = system.horizon();
    if n == 0 {
        return vec![system.x0_var()];
    }
    let r1 = covariance_matrix(&system.noise1(), n).expect("n >= 1");
    let r2 = covariance_matrix(&system.noise2(), n).expect("n >= 1");
    map.rows
        .iter()
        .map(|v| {
            let w1 = &v[1..=n];
            let w2 = &v[n + 1..];
            system.x0_var() * v[0] * v[0] + quad(&r1, w1) + quad(&r2, w2)
        })
        .collect()
}

fn quad(m: &[Vec<f64>], v: &[f64]) -> f64 {
    m.iter()
        .zip(v)
        .map(|(row, vi)| vi * row.iter().zip(v).map(|(mij, vj)| mij * vj).sum::<f64>())
        .sum()
}

/// `J = sum_k a(k) K(k)`.
pub fn cost(k: &[f64], weights: &WeightSpec) -> Result<f64> {
    check_len("covariance sequence", weights.len(), k.len())?;
    Ok(weights.as_slice().iter().zip(k).map(|(a, k)| a * k).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub k_closed: Vec<f64>,
    pub k_oracle: Vec<f64>,
    /// Cost evaluated on the oracle covariance.
    pub cost: f64,
    /// `max_k |K_closed - K_oracle| / max(1, |K_oracle|)`.
    pub max_discrepancy: f64,
}

pub fn covariance_report(system: &SystemSpec, gain: &FilterGain, weights: &WeightSpec) -> Result<CovarianceReport> {
    weights.check(system)?;
    let k_closed = error_covariance_closed(system, gain)?;
    let k_oracle = error_covariance_oracle(system, gain)?;
    let max_discrepancy = relative_discrepancy(&k_closed, &k_oracle);
    let cost = cost(&k_oracle, weights)?;
    Ok(CovarianceReport { k_closed, k_oracle, cost, max_discrepancy })
}

pub fn relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}
