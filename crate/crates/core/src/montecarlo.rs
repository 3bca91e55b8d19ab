//! Path-level simulation of the system and filter, and ensemble statistics of
//! the estimation error.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derive_filter_coefficients, run_filter, FilterGain, SystemSpec};
use crate::noise::{derive_stream, FgnSampler};

/// Random channels of one path. Path `i` draws channel `c` from stream `3 i + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    InitialState = 0,
    StateNoise = 1,
    ObservationNoise = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::InitialState, Channel::StateNoise, Channel::ObservationNoise];

    pub fn stream_index(self, path: u64) -> u64 {
        3 * path + self as u64
    }
}

/// One simulated realization, all sequences indexed `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// `x - z`.
    pub e: Vec<f64>,
    /// The error from its own recursion driven by the same draws.
    pub e_direct: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

/// Path generator holding the per-channel samplers of one system.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    system: &'a SystemSpec,
    gain: &'a FilterGain,
    h_gamma: Vec<f64>,
    w1: FgnSampler,
    w2: FgnSampler,
}

impl<'a> PathSimulator<'a> {
    pub fn new(system: &'a SystemSpec, gain: &'a FilterGain) -> Result<Self> {
        let coeffs = derive_filter_coefficients(system, gain)?;
        let n = system.horizon();
        Ok(Self {
            system,
            gain,
            h_gamma: coeffs.h_gamma,
            w1: FgnSampler::new(system.noise1(), n)?,
            w2: FgnSampler::new(system.noise2(), n)?,
        })
    }

    /// Path `index` of the ensemble seeded by `base_seed`.
    pub fn path(&self, base_seed: u64, index: u64) -> Result<SamplePath> {
        let mut x0_rng = derive_stream(base_seed, Channel::InitialState.stream_index(index));
        let mut w1_rng = derive_stream(base_seed, Channel::StateNoise.stream_index(index));
        let mut w2_rng = derive_stream(base_seed, Channel::ObservationNoise.stream_index(index));
        let z0: f64 = x0_rng.sample(StandardNormal);
        let x0 = self.system.x0_mean() + self.system.x0_var().sqrt() * z0;
        let w1 = self.w1.sample(&mut w1_rng)?;
        let w2 = self.w2.sample(&mut w2_rng)?;
        self.path_from_draws(x0, w1, w2)
    }

    /// Deterministic path for given `x(0)` and noise draws.
    pub fn path_from_draws(&self, x0: f64, w1: Vec<f64>, w2: Vec<f64>) -> Result<SamplePath> {
        let s = self.system;
        let n = s.horizon();
        crate::error::check_len("W1 draws", n, w1.len())?;
        crate::error::check_len("W2 draws", n, w2.len())?;
        let mut x = Vec::with_capacity(n + 1);
        let mut y = Vec::with_capacity(n + 1);
        x.push(x0);
        y.push(0.0);
        for k in 0..n {
            x.push(s.a()[k] * x[k] + s.c()[k] * y[k] + s.sigma()[k] * w1[k]);
            y.push(s.d()[k] * x[k] + s.f()[k] * y[k] + s.gamma()[k] * w2[k]);
        }
        let z = run_filter(s, self.gain, &y, s.x0_mean())?;
        let e: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
        let mut e_direct = Vec::with_capacity(n + 1);
        e_direct.push(x0 - s.x0_mean());
        for k in 0..n {
            e_direct.push(
                self.h_gamma[k] * e_direct[k] + s.sigma()[k] * w1[k] - self.gain[k] * s.gamma()[k] * w2[k],
            );
        }
        Ok(SamplePath { x, y, z, e, e_direct, w1, w2 })
    }
}

/// One path of the ensemble seeded by `base_seed`.
pub fn simulate_path(system: &SystemSpec, gain: &FilterGain, base_seed: u64, index: u64) -> Result<SamplePath> {
    PathSimulator::new(system, gain)?.path(base_seed, index)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub mean_error: Vec<f64>,
    pub empirical_k: Vec<f64>,
    /// Standard error of `empirical_k`.
    pub se_k: Vec<f64>,
    pub seed: u64,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean error, `mean e(k)^2` and its standard error over paths `0..n_paths`.
pub fn simulate_ensemble(system: &SystemSpec, gain: &FilterGain, n_paths: usize, base_seed: u64) -> Result<EnsembleStats> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("n_paths must be at least 2, got {n_paths}")));
    }
    let sim = PathSimulator::new(system, gain)?;
    let len = system.horizon() + 1;
    let mut s1 = vec![KahanSum::default(); len];
    let mut s2 = vec![KahanSum::default(); len];
    let mut s4 = vec![KahanSum::default(); len];
    for i in 0..n_paths as u64 {
        let path = sim.path(base_seed, i)?;
        for (k, e) in path.e.iter().enumerate() {
            let sq = e * e;
            s1[k].add(*e);
            s2[k].add(sq);
            s4[k].add(sq * sq);
        }
    }
    let n = n_paths as f64;
    let mean_error = s1.iter().map(|s| s.value() / n).collect();
    let empirical_k: Vec<f64> = s2.iter().map(|s| s.value() / n).collect();
    let se_k = empirical_k
        .iter()
        .zip(&s4)
        .map(|(m, s)| {
            // unbiased variance of e^2
            let var = ((s.value() - n * m * m) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(EnsembleStats { n_paths, mean_error, empirical_k, se_k, seed: base_seed })
}
