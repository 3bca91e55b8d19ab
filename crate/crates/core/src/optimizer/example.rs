//! The two-step example: `x(k+1) = W1(k)`, `y(k+1) = x(k) - W2(k)`, `k = 0, 1`,
//! with both noises sharing lag-1 autocovariance `rho`.
//!
//! The reference stationarity conditions for this system reduce to
//!
//! ```text
//! a2 [(rho g0 + 1) g1 + (1 + g0)^2]          = 0
//! a1 g0 + a2 (rho + g0) g1^2                 = 0
//! ```
//!
//! so `g1 = -(1 + g0)^2 / (rho g0 + 1)` and `g0` solves the quintic
//! `a1 g0 (rho g0 + 1)^2 + a2 (rho + g0) (1 + g0)^4 = 0`.

use serde::Serialize;

use crate::error::{Error, Result};

pub const ROOT_BRACKET: (f64, f64) = (-10.0, 10.0);

/// Candidates closer than this (relative) are one root. A root of multiplicity
/// `m` is only resolved to about `eps^(1/m)`, so a quadruple root smears over
/// roughly `1e-4`.
pub const CLUSTER_WIDTH: f64 = 1e-3;

/// Dense real polynomial, coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(Vec<f64>);

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `sum |c_i| |x|^i`, the natural size of round-off in `eval(x)`.
    pub fn magnitude(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x.abs() + c.abs())
    }

    pub fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Self(vec![0.0]);
        }
        Self::new(self.0.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect())
    }

    pub fn mul(&self, other: &Poly) -> Self {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Poly) -> Self {
        let n = self.0.len().max(other.0.len());
        Self::new(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.0.iter().map(|c| c * s).collect())
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Poly::new(vec![1.0]), |acc, _| acc.mul(self))
    }

    /// Distinct real roots in `[lo, hi]`, including even-multiplicity ones.
    ///
    /// The roots of the derivative split the interval into pieces on which the
    /// polynomial is monotone; each piece with a sign change is bisected, and
    /// a critical point where the polynomial vanishes to round-off is itself a
    /// (multiple) root.
    pub fn real_roots(&self, lo: f64, hi: f64) -> Vec<f64> {
        let deg = self.degree();
        if deg == 0 {
            return Vec::new();
        }
        if deg == 1 {
            let r = -self.0[0] / self.0[1];
            return if (lo..=hi).contains(&r) { vec![r] } else { Vec::new() };
        }
        let critical = self.derivative().real_roots(lo, hi);
        // (root, inherited from a critical point)
        let mut roots: Vec<(f64, bool)> = Vec::new();
        for &c in &critical {
            if self.eval(c).abs() <= 1e-12 * self.magnitude(c) {
                roots.push((c, true));
            }
        }
        let mut knots = Vec::with_capacity(critical.len() + 2);
        knots.push(lo);
        knots.extend(critical.iter().copied().filter(|&c| c > lo && c < hi));
        knots.push(hi);
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 {
                roots.push((a, false));
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                roots.push((bisect(self, a, b, fa), false));
            }
        }
        if self.eval(hi) == 0.0 {
            roots.push((hi, false));
        }
        roots.sort_by(|x, y| x.0.total_cmp(&y.0));
        // A cluster keeps an inherited critical point when it has one: a root of
        // multiplicity m is a simple root of the (m-1)-th derivative and is
        // located far more accurately there than by its own sign pattern.
        let mut clusters: Vec<Vec<(f64, bool)>> = Vec::new();
        for r in roots {
            match clusters.last_mut() {
                Some(c) if (r.0 - c[0].0).abs() <= CLUSTER_WIDTH * c[0].0.abs().max(1.0) => c.push(r),
                _ => clusters.push(vec![r]),
            }
        }
        clusters
            .into_iter()
            .map(|c| {
                let inherited = c.iter().filter(|r| r.1).map(|r| r.0);
                let pool: Vec<f64> = if c.iter().any(|r| r.1) { inherited.collect() } else { c.iter().map(|r| r.0).collect() };
                pool.into_iter().min_by(|a, b| self.eval(*a).abs().total_cmp(&self.eval(*b).abs())).expect("non-empty cluster")
            })
            .collect()
    }
}

/// Bisection down to adjacent floating-point values.
fn bisect(p: &Poly, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = p.eval(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    if p.eval(a).abs() <= p.eval(b).abs() {
        a
    } else {
        b
    }
}

/// `a1 g (rho g + 1)^2 + a2 (rho + g) (1 + g)^4`.
pub fn example_quintic(rho: f64, a1: f64, a2: f64) -> Poly {
    let g = Poly::new(vec![0.0, 1.0]);
    let lin = Poly::new(vec![1.0, rho]);
    let one_plus = Poly::new(vec![1.0, 1.0]);
    let shift = Poly::new(vec![rho, 1.0]);
    g.mul(&lin.pow(2)).scale(a1).add(&shift.mul(&one_plus.pow(4)).scale(a2))
}

/// `g1 = -(1 + g0)^2 / (rho g0 + 1)`.
pub fn second_gain(rho: f64, g0: f64) -> f64 {
    -(1.0 + g0).powi(2) / (rho * g0 + 1.0)
}

/// The two reference stationarity conditions evaluated at `(g0, g1)`.
pub fn reference_conditions(rho: f64, a1: f64, a2: f64, g0: f64, g1: f64) -> [f64; 2] {
    [
        a2 * ((rho * g0 + 1.0) * g1 + (1.0 + g0).powi(2)),
        a1 * g0 + a2 * (rho + g0) * g1 * g1,
    ]
}

/// The reference directional-derivative coefficients of the example:
/// `K~(1) = g0 beta(0)` and
/// `K~(2) = (rho + g0) g1^2 beta(0) + [(rho g0 + 1) g1 + (1 + g0)^2] beta(1)`.
pub fn reference_gateaux(rho: f64, g0: f64, g1: f64) -> [[f64; 2]; 2] {
    [[g0, 0.0], [(rho + g0) * g1 * g1, (rho * g0 + 1.0) * g1 + (1.0 + g0).powi(2)]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleRoot {
    pub gamma0: f64,
    pub gamma1: f64,
    /// `|quintic(gamma0)|`.
    pub poly_residual: f64,
    /// Reference conditions at `(gamma0, gamma1)`.
    pub condition_residuals: [f64; 2],
}

/// Every real root of the example quintic in [`ROOT_BRACKET`], paired with the
/// second gain from the reference relation.
pub fn solve_two_step_example(rho: f64, a1: f64, a2: f64) -> Result<Vec<ExampleRoot>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(a1 >= 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite()) {
        return Err(Error::InvalidArgument(format!("weights need a1 >= 0 and a2 > 0, got ({a1}, {a2})")));
    }
    let (lo, hi) = ROOT_BRACKET;
    let p = example_quintic(rho, a1, a2);
    let roots: Vec<ExampleRoot> = p
        .real_roots(lo, hi)
        .into_iter()
        .filter(|&g0| (rho * g0 + 1.0).abs() > 1e-12)
        .map(|g0| {
            let g1 = second_gain(rho, g0);
            ExampleRoot {
                gamma0: g0,
                gamma1: g1,
                poly_residual: p.eval(g0).abs(),
                condition_residuals: reference_conditions(rho, a1, a2, g0, g1),
            }
        })
        .collect();
    if roots.is_empty() {
        return Err(Error::NoRealRoot { lo, hi });
    }
    Ok(roots)
}
