//! System, filter gain and weight types.
//!
//! The scalar system is
//!
//! ```text
//! x(k+1) = A(k) x(k) + C(k) y(k) + sigma(k) W1(k)
//! y(k+1) = D(k) x(k) + F(k) y(k) + gamma(k) W2(k),    y(0) = 0
//! ```
//!
//! and the filter is `z(k+1) = H(k) z(k) + M(k) y(k) + Gamma(k) y(k+1)`, with
//! `H = A - Gamma D` and `M = C - Gamma F` forced by unbiasedness. Only the
//! gain `Gamma` is free.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result, Violation};
use crate::noise::NoiseModel;

/// A coefficient given either as one constant or as a full sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Scalar(f64),
    Sequence(Vec<f64>),
}

impl Coefficient {
    fn broadcast(&self, field: &'static str, len: usize, errors: &mut Vec<Violation>) -> Vec<f64> {
        let v = match self {
            Coefficient::Scalar(x) => vec![*x; len],
            Coefficient::Sequence(v) => {
                if v.len() != len {
                    errors.push(Violation::LengthMismatch { field, expected: len, found: v.len() });
                }
                v.clone()
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            errors.push(Violation::NonFinite { field });
        }
        v
    }
}

impl From<f64> for Coefficient {
    fn from(x: f64) -> Self {
        Coefficient::Scalar(x)
    }
}

impl From<Vec<f64>> for Coefficient {
    fn from(v: Vec<f64>) -> Self {
        Coefficient::Sequence(v)
    }
}

/// Unvalidated system fields, as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSystem {
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: Coefficient,
    #[serde(rename = "C")]
    pub c: Coefficient,
    pub sigma: Coefficient,
    #[serde(rename = "D")]
    pub d: Coefficient,
    #[serde(rename = "F")]
    pub f: Coefficient,
    pub gamma: Coefficient,
    #[serde(default)]
    pub x0_mean: f64,
    #[serde(default)]
    pub x0_var: f64,
    pub hurst1: f64,
    pub hurst2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSpec {
    horizon: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    sigma: Vec<f64>,
    d: Vec<f64>,
    f: Vec<f64>,
    gamma: Vec<f64>,
    x0_mean: f64,
    x0_var: f64,
    noise1: NoiseModel,
    noise2: NoiseModel,
}

/// Validate raw fields, broadcasting scalars to length-`horizon` sequences.
/// All violations are reported together.
pub fn validate_system(raw: &RawSystem) -> std::result::Result<SystemSpec, Vec<Violation>> {
    let mut errors = Vec::new();
    let n = raw.horizon;
    if n == 0 {
        errors.push(Violation::HorizonZero);
    }
    let a = raw.a.broadcast("A", n, &mut errors);
    let c = raw.c.broadcast("C", n, &mut errors);
    let sigma = raw.sigma.broadcast("sigma", n, &mut errors);
    let d = raw.d.broadcast("D", n, &mut errors);
    let f = raw.f.broadcast("F", n, &mut errors);
    let gamma = raw.gamma.broadcast("gamma", n, &mut errors);
    if !raw.x0_mean.is_finite() {
        errors.push(Violation::NonFinite { field: "x0_mean" });
    }
    if raw.x0_var < 0.0 {
        errors.push(Violation::NegativeInitialVariance(raw.x0_var));
    } else if !raw.x0_var.is_finite() {
        errors.push(Violation::NonFinite { field: "x0_var" });
    }
    let noise1 = NoiseModel::new(raw.hurst1);
    if noise1.is_err() {
        errors.push(Violation::HurstOutOfRange { which: "hurst1", value: raw.hurst1 });
    }
    let noise2 = NoiseModel::new(raw.hurst2);
    if noise2.is_err() {
        errors.push(Violation::HurstOutOfRange { which: "hurst2", value: raw.hurst2 });
    }
    match (noise1, noise2) {
        (Ok(noise1), Ok(noise2)) if errors.is_empty() => Ok(SystemSpec {
            horizon: n,
            a,
            c,
            sigma,
            d,
            f,
            gamma,
            x0_mean: raw.x0_mean,
            x0_var: raw.x0_var,
            noise1,
            noise2,
        }),
        _ => Err(errors),
    }
}

impl SystemSpec {
    pub fn from_raw(raw: &RawSystem) -> Result<Self> {
        validate_system(raw).map_err(Error::Invalid)
    }

    /// The two-step example system
    /// `x(k+1) = W1(k)`, `y(k+1) = x(k) - W2(k)`, `x(0) = 0`, with both noises
    /// drawn from `noise`.
    pub fn two_step_example(noise: NoiseModel) -> Self {
        Self {
            horizon: 2,
            a: vec![0.0; 2],
            c: vec![0.0; 2],
            sigma: vec![1.0; 2],
            d: vec![1.0; 2],
            f: vec![0.0; 2],
            gamma: vec![-1.0; 2],
            x0_mean: 0.0,
            x0_var: 0.0,
            noise1: noise,
            noise2: noise,
        }
    }

    /// Random instance: every coefficient uniform in `[-1, 1]`, `x0_mean`
    /// uniform in `[-1, 1]`, `x0_var` uniform in `[0, 1]`. Panics on a zero horizon.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, horizon: usize, noise1: NoiseModel, noise2: NoiseModel) -> Self {
        assert!(horizon > 0, "horizon must be positive");
        let mut seq = || (0..horizon).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
        let (a, c, sigma, d, f, gamma) = (seq(), seq(), seq(), seq(), seq(), seq());
        Self {
            horizon,
            a,
            c,
            sigma,
            d,
            f,
            gamma,
            x0_mean: rng.random_range(-1.0..=1.0),
            x0_var: rng.random_range(0.0..=1.0),
            noise1,
            noise2,
        }
    }

    pub fn to_raw(&self) -> RawSystem {
        RawSystem {
            horizon: self.horizon,
            a: self.a.clone().into(),
            c: self.c.clone().into(),
            sigma: self.sigma.clone().into(),
            d: self.d.clone().into(),
            f: self.f.clone().into(),
            gamma: self.gamma.clone().into(),
            x0_mean: self.x0_mean,
            x0_var: self.x0_var,
            hurst1: self.noise1.hurst(),
            hurst2: self.noise2.hurst(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
    pub fn d(&self) -> &[f64] {
        &self.d
    }
    pub fn f(&self) -> &[f64] {
        &self.f
    }
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
    pub fn x0_mean(&self) -> f64 {
        self.x0_mean
    }
    pub fn x0_var(&self) -> f64 {
        self.x0_var
    }
    pub fn noise1(&self) -> NoiseModel {
        self.noise1
    }
    pub fn noise2(&self) -> NoiseModel {
        self.noise2
    }

    pub fn with_noises(mut self, noise1: NoiseModel, noise2: NoiseModel) -> Self {
        self.noise1 = noise1;
        self.noise2 = noise2;
        self
    }

    pub fn with_initial(mut self, mean: f64, var: f64) -> Result<Self> {
        if var < 0.0 || !var.is_finite() || !mean.is_finite() {
            return Err(Error::Invalid(vec![Violation::NegativeInitialVariance(var)]));
        }
        self.x0_mean = mean;
        self.x0_var = var;
        Ok(self)
    }

    /// Scale both noise loadings by `factor`.
    pub fn scale_noise(mut self, factor: f64) -> Self {
        self.sigma.iter_mut().for_each(|s| *s *= factor);
        self.gamma.iter_mut().for_each(|g| *g *= factor);
        self
    }
}

/// Filter gain `Gamma(0..N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterGain(Vec<f64>);

impl FilterGain {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(horizon: usize) -> Self {
        Self(vec![0.0; horizon])
    }

    pub fn for_system(system: &SystemSpec, values: Vec<f64>) -> Result<Self> {
        check_len("gain", system.horizon(), values.len())?;
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self + t * direction`.
    pub fn step(&self, direction: &[f64], t: f64) -> Self {
        Self(self.0.iter().zip(direction).map(|(g, d)| g + t * d).collect())
    }
}

impl From<Vec<f64>> for FilterGain {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for FilterGain {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedCoefficients {
    pub h_gamma: Vec<f64>,
    pub m_gamma: Vec<f64>,
}

/// `H(k) = A(k) - Gamma(k) D(k)`, `M(k) = C(k) - Gamma(k) F(k)`.
pub fn derive_filter_coefficients(system: &SystemSpec, gain: &FilterGain) -> Result<DerivedCoefficients> {
    check_len("gain", system.horizon(), gain.len())?;
    let g = gain.as_slice();
    let h_gamma = (0..g.len()).map(|k| system.a[k] - g[k] * system.d[k]).collect();
    let m_gamma = (0..g.len()).map(|k| system.c[k] - g[k] * system.f[k]).collect();
    Ok(DerivedCoefficients { h_gamma, m_gamma })
}

/// Nonnegative cost weights `a(0..=N)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightSpec(Vec<f64>);

impl WeightSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut errors = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                errors.push(Violation::NonFinite { field: "weights" });
            } else if w < 0.0 {
                errors.push(Violation::NegativeWeight { index: i, value: w });
            }
        }
        if !weights.iter().skip(1).any(|&w| w > 0.0) {
            errors.push(Violation::NoPositiveWeight);
        }
        if errors.is_empty() {
            Ok(Self(weights))
        } else {
            Err(Error::Invalid(errors))
        }
    }

    /// Broadcast a scalar (or check a sequence) against `horizon + 1` steps.
    pub fn for_horizon(weights: &Coefficient, horizon: usize) -> Result<Self> {
        let mut errors = Vec::new();
        let v = weights.broadcast("weights", horizon + 1, &mut errors);
        if !errors.is_empty() {
            return Err(Error::Invalid(errors));
        }
        Self::new(v)
    }

    /// Skips validation; for internal checks on degenerate weight patterns.
    #[cfg(test)]
    pub(crate) fn unchecked(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn check(&self, system: &SystemSpec) -> Result<()> {
        check_len("weights", system.horizon() + 1, self.0.len())
    }
}

/// Run the filter on an observation path `y(0..=N)` starting from `z0`.
/// The observation path is expected to start at `y(0) = 0`.
pub fn run_filter(system: &SystemSpec, gain: &FilterGain, y_path: &[f64], z0: f64) -> Result<Vec<f64>> {
    let coeffs = derive_filter_coefficients(system, gain)?;
    let n = system.horizon();
    check_len("observation path", n + 1, y_path.len())?;
    let mut z = Vec::with_capacity(n + 1);
    z.push(z0);
    for k in 0..n {
        let next = coeffs.h_gamma[k] * z[k] + coeffs.m_gamma[k] * y_path[k] + gain[k] * y_path[k + 1];
        z.push(next);
    }
    Ok(z)
}
