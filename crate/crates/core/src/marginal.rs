//! One-dimensional laws: discrete marginals, lognormal laws and continuified
//! versions of discrete marginals.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::normal::{norm_cdf, norm_inv};

/// Tolerance on the total weight of a discrete marginal.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Probability level at which unbounded supports are truncated.
pub const TAIL_TRUNCATION: f64 = 1e-8;

/// A univariate law on the non-negative half-line.
pub trait UnivariateLaw: Debug + Send + Sync {
    /// Right-continuous distribution function.
    fn cdf(&self, x: f64) -> f64;
    /// Generalized inverse `inf{x : F(x) >= u}`, with `F^{-1}(0)` the left end of the support.
    fn quantile(&self, u: f64) -> f64;
    fn mean(&self) -> f64;
    /// Atom representation when the law is discrete.
    fn as_discrete(&self) -> Option<&DiscreteMarginal> {
        None
    }
    /// Upper end of the support, or the `1 - 1e-8` quantile when unbounded.
    fn upper_truncation(&self) -> f64 {
        self.quantile(1.0 - TAIL_TRUNCATION)
    }
}

/// Atoms with probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMarginal {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cum: Vec<f64>,
}

impl DiscreteMarginal {
    /// Atoms must be strictly increasing and non-negative, weights positive and summing to one.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMarginal("no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMarginal(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidMarginal("atoms must be finite and non-negative".into()));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMarginal("atoms must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMarginal("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidMarginal(format!("weights sum to {total}, not 1")));
        }
        let mut cum = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { atoms, weights, cum })
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    /// Single atom.
    pub fn dirac(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cumulative weights `F(a_j)`; the last entry is exactly one.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| w * a * a).sum()
    }

    /// Variance about `center` (use the spot for martingale marginals).
    pub fn variance_about(&self, center: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * (a - center) * (a - center))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.variance_about(self.mean())
    }

    /// `E[(X - K)_+]`.
    pub fn call_price(&self, strike: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * (a - strike).max(0.0))
            .sum()
    }

    /// `E[(K - X)_+]`.
    pub fn put_price(&self, strike: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * (strike - a).max(0.0))
            .sum()
    }

    /// `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let j = self.atoms.partition_point(|&a| a < x);
        if j == 0 {
            0.0
        } else {
            self.cum[j - 1]
        }
    }

    /// Index of the atom equal to `x`, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.atoms.iter().position(|&a| a == x)
    }
}

impl UnivariateLaw for DiscreteMarginal {
    fn cdf(&self, x: f64) -> f64 {
        let j = self.atoms.partition_point(|&a| a <= x);
        if j == 0 {
            0.0
        } else {
            self.cum[j - 1]
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.atoms[0];
        }
        let j = self.cum.partition_point(|&c| c < u);
        self.atoms[j.min(self.atoms.len() - 1)]
    }

    fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    fn as_discrete(&self) -> Option<&DiscreteMarginal> {
        Some(self)
    }

    fn upper_truncation(&self) -> f64 {
        *self.atoms.last().unwrap()
    }
}

/// Driftless lognormal law `S0 exp(-sigma^2 t / 2 + sigma W_t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lognormal {
    pub spot: f64,
    pub sigma: f64,
    pub maturity: f64,
}

impl Lognormal {
    pub fn new(spot: f64, sigma: f64, maturity: f64) -> Result<Self> {
        if !(spot > 0.0 && sigma > 0.0 && maturity > 0.0) {
            return Err(Error::InvalidParameter(
                "lognormal law needs positive spot, volatility and maturity".into(),
            ));
        }
        Ok(Self { spot, sigma, maturity })
    }

    /// Total standard deviation `sigma * sqrt(t)`.
    pub fn total_vol(&self) -> f64 {
        self.sigma * self.maturity.sqrt()
    }

    /// Standardized log-coordinate `(ln(x/S0) + s^2/2) / s`.
    pub fn z_score(&self, x: f64) -> f64 {
        let s = self.total_vol();
        ((x / self.spot).ln() + 0.5 * s * s) / s
    }

    /// Black call price with zero rates.
    pub fn call_price(&self, strike: f64) -> f64 {
        if strike <= 0.0 {
            return self.spot - strike;
        }
        let s = self.total_vol();
        let d1 = ((self.spot / strike).ln() + 0.5 * s * s) / s;
        let d2 = d1 - s;
        self.spot * norm_cdf(d1) - strike * norm_cdf(d2)
    }

    /// Black put price with zero rates.
    pub fn put_price(&self, strike: f64) -> f64 {
        self.call_price(strike) - self.spot + strike
    }

    /// Density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let s = self.total_vol();
        let z = self.z_score(x);
        (-0.5 * z * z).exp() / (x * s * (2.0 * std::f64::consts::PI).sqrt())
    }
}

impl UnivariateLaw for Lognormal {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        norm_cdf(self.z_score(x))
    }

    fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        let s = self.total_vol();
        self.spot * (-0.5 * s * s + s * norm_inv(u)).exp()
    }

    fn mean(&self) -> f64 {
        self.spot
    }
}

/// A discrete marginal whose CDF is made continuous by spreading each atom's mass
/// uniformly over the cell between the midpoints to its neighbours. The end cells
/// are mirrored around the extreme atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Continuified {
    edges: Vec<f64>,
    cum: Vec<f64>,
    mean: f64,
}

impl Continuified {
    pub fn new(m: &DiscreteMarginal) -> Self {
        let a = m.atoms();
        let k = a.len();
        let mut edges = Vec::with_capacity(k + 1);
        if k == 1 {
            edges.push(a[0]);
            edges.push(a[0]);
        } else {
            let first = (a[0] - 0.5 * (a[1] - a[0])).max(0.0);
            edges.push(first);
            for w in a.windows(2) {
                edges.push(0.5 * (w[0] + w[1]));
            }
            edges.push(a[k - 1] + 0.5 * (a[k - 1] - a[k - 2]));
        }
        let mut cum = vec![0.0];
        cum.extend_from_slice(m.cumulative());
        let mean = m
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * 0.5 * (edges[j] + edges[j + 1]))
            .sum();
        Self { edges, cum, mean }
    }
}

impl UnivariateLaw for Continuified {
    fn cdf(&self, x: f64) -> f64 {
        if x < self.edges[0] {
            return 0.0;
        }
        let k = self.edges.len() - 1;
        if x >= self.edges[k] {
            return 1.0;
        }
        let j = self.edges.partition_point(|&e| e <= x) - 1;
        let width = self.edges[j + 1] - self.edges[j];
        let frac = if width > 0.0 { (x - self.edges[j]) / width } else { 1.0 };
        self.cum[j] + frac * (self.cum[j + 1] - self.cum[j])
    }

    fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.edges[0];
        }
        let j = self.cum.partition_point(|&c| c < u).clamp(1, self.cum.len() - 1);
        let lo = self.cum[j - 1];
        let hi = self.cum[j];
        let frac = ((u - lo) / (hi - lo)).clamp(0.0, 1.0);
        self.edges[j - 1] + frac * (self.edges[j] - self.edges[j - 1])
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn upper_truncation(&self) -> f64 {
        *self.edges.last().unwrap()
    }
}

/// Report of a convex-order comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexOrderReport {
    pub passed: bool,
    /// Smallest value of `E(Y-K)_+ - E(X-K)_+` over the tested strikes.
    pub worst_margin: f64,
    pub worst_strike: f64,
    pub mean_gap: f64,
}

/// Checks `first <=_cx second` for discrete laws at every atom of either law.
pub fn check_convex_order(first: &DiscreteMarginal, second: &DiscreteMarginal) -> ConvexOrderReport {
    let mean_gap = (first.mean() - second.mean()).abs();
    let mut worst = f64::INFINITY;
    let mut worst_k = f64::NAN;
    for &k in first.atoms().iter().chain(second.atoms()) {
        let margin = second.call_price(k) - first.call_price(k);
        if margin < worst {
            worst = margin;
            worst_k = k;
        }
    }
    ConvexOrderReport {
        passed: mean_gap <= 1e-9 && worst >= -1e-12,
        worst_margin: worst,
        worst_strike: worst_k,
        mean_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u3() -> DiscreteMarginal {
        DiscreteMarginal::uniform(vec![8.0, 10.0, 12.0]).unwrap()
    }

    #[test]
    fn discrete_validation() {
        assert!(DiscreteMarginal::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMarginal::new(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteMarginal::new(vec![-1.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMarginal::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(DiscreteMarginal::new(vec![], vec![]).is_err());
    }

    #[test]
    fn discrete_cdf_and_quantile() {
        let m = u3();
        assert_eq!(m.cdf(7.9), 0.0);
        assert_eq!(m.cdf(8.0), 1.0 / 3.0);
        assert_eq!(m.cdf_left(10.0), 1.0 / 3.0);
        assert_eq!(m.cdf(12.0), 1.0);
        assert_eq!(m.quantile(0.0), 8.0);
        assert_eq!(m.quantile(1.0 / 3.0), 8.0);
        assert_eq!(m.quantile(0.34), 10.0);
        assert_eq!(m.quantile(1.0), 12.0);
        assert_eq!(m.mean(), 10.0);
        assert!((m.variance_about(10.0) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn convex_order_examples() {
        let a = u3();
        let b = DiscreteMarginal::uniform(vec![7.0, 9.0, 11.0, 13.0]).unwrap();
        let rep = check_convex_order(&a, &b);
        assert!(rep.passed);
        assert!((a.call_price(9.0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((b.call_price(9.0) - 1.5).abs() < 1e-15);
        let same = check_convex_order(&a, &a);
        assert!(same.passed);
        assert_eq!(same.worst_margin, 0.0);
        assert!(!check_convex_order(&b, &a).passed);
        let shifted = DiscreteMarginal::uniform(vec![9.0, 11.0, 13.0]).unwrap();
        let rep = check_convex_order(&a, &shifted);
        assert!(!rep.passed);
        assert!((rep.mean_gap - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lognormal_basics() {
        let l = Lognormal::new(10.0, 0.5, 2.0).unwrap();
        let median = 10.0 * (-0.25f64).exp();
        assert!((l.cdf(median) - 0.5).abs() < 1e-15);
        assert_eq!(l.cdf(f64::INFINITY), 1.0);
        assert_eq!(l.cdf(-1.0), 0.0);
        for &u in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            assert!((l.cdf(l.quantile(u)) - u).abs() < 1e-13);
        }
        let k = 11.0;
        assert!((l.call_price(k) - l.put_price(k) - (10.0 - k)).abs() < 1e-12);
    }

    #[test]
    fn continuified_is_inverse_consistent() {
        let m = DiscreteMarginal::new(vec![1.0, 2.0, 4.0], vec![0.2, 0.5, 0.3]).unwrap();
        let c = Continuified::new(&m);
        for &u in &[0.05, 0.2, 0.5, 0.7, 0.95] {
            assert!((c.cdf(c.quantile(u)) - u).abs() < 1e-14);
        }
        assert_eq!(c.cdf(0.0), 0.0);
        assert_eq!(c.cdf(10.0), 1.0);
    }
}
