//! Analytic price bounds: the quasi-expectation operator on the unit square,
//! min-option bounds along the diagonal, common-component bounds for baskets
//! and the comonotone standard bound.

use std::sync::Arc;

use rayon::prelude::*;

use crate::copula::{QuasiCopula, SurvivalView};
use crate::error::{Error, Result};
use crate::marginal::{UnivariateLaw, TAIL_TRUNCATION};
use crate::quadrature::{gauss_legendre, integrate};

/// Call or put.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptionSide {
    Call,
    Put,
}

/// Shared handle to a univariate law.
pub type Law = Arc<dyn UnivariateLaw>;

/// Resolution policy for quadrature on continuous axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiOptions {
    pub start_n: usize,
    pub max_n: usize,
    pub rel_tol: f64,
}

impl Default for PiOptions {
    fn default() -> Self {
        Self {
            start_n: 256,
            max_n: 16384,
            rel_tol: 1e-5,
        }
    }
}

impl PiOptions {
    /// Single pass at resolution `n`.
    pub fn fixed(n: usize) -> Self {
        Self {
            start_n: n,
            max_n: n,
            rel_tol: f64::INFINITY,
        }
    }
}

/// Value of a quasi-expectation with the resolution that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiEstimate {
    pub value: f64,
    /// Uniform cell count on continuous axes; zero when every axis is exact.
    pub resolution: usize,
    /// True when both axes are step functions and no quadrature was needed.
    pub exact: bool,
}

/// How a unit-interval coordinate is mapped to asset values.
#[derive(Clone, Debug)]
pub enum AxisMap {
    /// The coordinate itself.
    Identity,
    /// Quantiles `F_i^{-1}(u)` of one or more laws evaluated at the same `u`.
    Quantiles(Vec<Law>),
}

impl AxisMap {
    fn width(&self) -> usize {
        match self {
            Self::Identity => 1,
            Self::Quantiles(v) => v.len(),
        }
    }

    fn map(&self, u: f64, out: &mut Vec<f64>) {
        match self {
            Self::Identity => out.push(u),
            Self::Quantiles(v) => out.extend(v.iter().map(|l| l.quantile(u))),
        }
    }

    /// Knots of a step axis when every law is discrete.
    fn step_knots(&self) -> Option<Vec<f64>> {
        match self {
            Self::Identity => None,
            Self::Quantiles(v) => {
                let mut knots = Vec::new();
                for l in v {
                    let d = l.as_discrete()?;
                    knots.extend_from_slice(d.cumulative());
                }
                Some(merge_knots(knots))
            }
        }
    }

    fn discrete_knots(&self) -> Vec<f64> {
        match self {
            Self::Identity => Vec::new(),
            Self::Quantiles(v) => v
                .iter()
                .filter_map(|l| l.as_discrete())
                .flat_map(|d| d.cumulative().iter().copied())
                .collect(),
        }
    }
}

fn merge_knots(mut knots: Vec<f64>) -> Vec<f64> {
    knots.retain(|&k| k > 0.0 && k < 1.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    knots
}

/// A payoff `g(x1, x2) = f(A(x1), B(x2))` on `[0,1)^2`.
#[derive(Clone)]
pub struct UnitSquarePayoff {
    pub first: AxisMap,
    pub second: AxisMap,
    pub f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for UnitSquarePayoff {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("UnitSquarePayoff")
            .field("first", &self.first)
            .field("second", &self.second)
            .finish_non_exhaustive()
    }
}

impl UnitSquarePayoff {
    /// `g(x1, x2) = f(x1, x2)` directly on the unit square.
    pub fn on_unit_square(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            first: AxisMap::Identity,
            second: AxisMap::Identity,
            f: Arc::new(move |a: &[f64], b: &[f64]| f(a[0], b[0])),
        }
    }

    /// `g(x1, x2) = c(F_1^{-1}(x1), F_2^{-1}(x2))`.
    pub fn from_laws(c: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, first: Law, second: Law) -> Self {
        Self {
            first: AxisMap::Quantiles(vec![first]),
            second: AxisMap::Quantiles(vec![second]),
            f: Arc::new(move |a: &[f64], b: &[f64]| c(a[0], b[0])),
        }
    }
}

/// Cells of one axis: boundaries `b_0 = 0 < ... < b_L` and one representative
/// coordinate per cell.
#[derive(Clone, Debug)]
struct AxisLattice {
    bounds: Vec<f64>,
    rho: Vec<f64>,
    exact: bool,
}

impl AxisLattice {
    fn build(map: &AxisMap, n: usize) -> Self {
        if let Some(knots) = map.step_knots() {
            let mut bounds = vec![0.0];
            bounds.extend(knots);
            bounds.push(1.0);
            return Self::from_bounds(bounds, true);
        }
        let mut bounds: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let r = 0.5f64.powf(0.125);
        let mut t = r / n as f64;
        while t > TAIL_TRUNCATION {
            bounds.push(1.0 - t);
            t *= r;
        }
        bounds.push(1.0 - TAIL_TRUNCATION);
        bounds.extend(map.discrete_knots());
        bounds.retain(|&b| (0.0..=1.0 - TAIL_TRUNCATION).contains(&b));
        bounds.sort_by(f64::total_cmp);
        bounds.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
        Self::from_bounds(bounds, false)
    }

    fn from_bounds(bounds: Vec<f64>, exact: bool) -> Self {
        let rho = bounds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self { bounds, rho, exact }
    }

    fn cells(&self) -> usize {
        self.rho.len()
    }

    fn mapped(&self, map: &AxisMap) -> Vec<f64> {
        let w = map.width();
        let mut out = Vec::with_capacity(self.cells() * w);
        for &u in &self.rho {
            map.map(u, &mut out);
        }
        out
    }
}

fn pi_on_lattice(
    payoff: &UnitSquarePayoff,
    survival: &SurvivalView,
    l1: &AxisLattice,
    l2: &AxisLattice,
) -> Result<f64> {
    let w1 = payoff.first.width();
    let w2 = payoff.second.width();
    let v1 = l1.mapped(&payoff.first);
    let v2 = l2.mapped(&payoff.second);
    let n1 = l1.cells();
    let n2 = l2.cells();
    let f = &payoff.f;
    let row = |a: usize| -> Vec<f64> {
        let x = &v1[a * w1..(a + 1) * w1];
        (0..n2).map(|b| f(x, &v2[b * w2..(b + 1) * w2])).collect()
    };
    let first_row = row(0);
    let mut total = first_row[0];
    for b in 1..n2 {
        total += (1.0 - l2.bounds[b]) * (first_row[b] - first_row[b - 1]);
    }
    // Consecutive rows share work, so each task walks a contiguous block.
    let block = (n1 / (4 * rayon::current_num_threads().max(1))).max(16);
    let rows: Vec<f64> = (1..n1)
        .step_by(block)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut prev = row(start - 1);
            let mut acc = 0.0;
            for a in start..(start + block).min(n1) {
                let cur = row(a);
                let z1 = l1.bounds[a];
                acc += (1.0 - z1) * (cur[0] - prev[0]);
                let mut u = [z1, 0.0];
                for b in 1..n2 {
                    let d2 = cur[b] - prev[b] - cur[b - 1] + prev[b - 1];
                    let scale = cur[b].abs() + prev[b].abs() + cur[b - 1].abs() + prev[b - 1].abs();
                    if d2.abs() <= 64.0 * f64::EPSILON * scale {
                        continue;
                    }
                    u[1] = l2.bounds[b];
                    acc += survival.eval_unchecked(&u) * d2;
                }
                prev = cur;
            }
            acc
        })
        .collect();
    total += rows.iter().sum::<f64>();
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite payoff value in quasi-expectation".into()));
    }
    Ok(total)
}

/// Quasi-expectation `π_g(Ŝ)` of a payoff on the unit square against a bivariate
/// survival function.
///
/// Step axes (discrete laws) are integrated exactly; continuous axes use a
/// midpoint lattice refined by doubling until the relative change is below
/// `opts.rel_tol`.
pub fn pi_bivariate(payoff: &UnitSquarePayoff, survival: &SurvivalView, opts: PiOptions) -> Result<PiEstimate> {
    if survival.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: survival.dim(),
        });
    }
    let mut n = opts.start_n.max(1);
    let mut l1 = AxisLattice::build(&payoff.first, n);
    let mut l2 = AxisLattice::build(&payoff.second, n);
    let mut prev = pi_on_lattice(payoff, survival, &l1, &l2)?;
    if l1.exact && l2.exact {
        return Ok(PiEstimate {
            value: prev,
            resolution: 0,
            exact: true,
        });
    }
    loop {
        if n * 2 > opts.max_n {
            if opts.start_n >= opts.max_n {
                return Ok(PiEstimate {
                    value: prev,
                    resolution: n,
                    exact: false,
                });
            }
            return Err(Error::NoConvergence {
                prev: f64::NAN,
                last: prev,
                n,
            });
        }
        n *= 2;
        l1 = AxisLattice::build(&payoff.first, n);
        l2 = AxisLattice::build(&payoff.second, n);
        let next = pi_on_lattice(payoff, survival, &l1, &l2)?;
        let change = (next - prev).abs();
        if change <= opts.rel_tol * next.abs().max(1e-12) || change <= 1e-14 {
            return Ok(PiEstimate {
                value: next,
                resolution: n,
                exact: false,
            });
        }
        if n * 2 > opts.max_n {
            return Err(Error::NoConvergence { prev, last: next, n });
        }
        prev = next;
    }
}

/// Upper-tail bound for `(min_i X_i - K)_+` (call) or `(K - min_i X_i)_+` (put):
/// `∫_K^T Ŝ(F_1(t), ..., F_m(t)) dt`, respectively `∫_0^K (1 - Ŝ(F(t))) dt`.
pub fn min_option_bound(survival: &SurvivalView, marginals: &[Law], strike: f64, side: OptionSide) -> Result<f64> {
    let m = marginals.len();
    if survival.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: survival.dim(),
            got: m,
        });
    }
    if m == 0 {
        return Err(Error::InvalidParameter("no marginals".into()));
    }
    let top = marginals
        .iter()
        .map(|l| l.upper_truncation())
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = match side {
        OptionSide::Call => {
            if strike > top {
                return Err(Error::InvalidParameter(format!(
                    "strike {strike} above truncation point {top}"
                )));
            }
            (strike.max(0.0), top)
        }
        OptionSide::Put => (0.0, strike.max(0.0)),
    };
    if hi <= lo {
        return Ok(0.0);
    }
    let mut u = vec![0.0; m];
    let mut integrand = |t: f64| {
        for (ui, l) in u.iter_mut().zip(marginals) {
            *ui = l.cdf(t);
        }
        let s = survival.eval_unchecked(&u);
        match side {
            OptionSide::Call => s,
            OptionSide::Put => 1.0 - s,
        }
    };
    let mut cuts: Vec<f64> = marginals
        .iter()
        .filter_map(|l| l.as_discrete())
        .flat_map(|d| d.atoms().iter().copied())
        .filter(|&a| a > lo && a < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if marginals.iter().all(|l| l.as_discrete().is_some()) {
        // F is constant on each [c_j, c_{j+1}).
        return Ok(cuts.windows(2).map(|w| (w[1] - w[0]) * integrand(w[0])).sum());
    }
    let rule = gauss_legendre(8);
    let eval = |panels: usize, integrand: &mut dyn FnMut(f64) -> f64| -> f64 {
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let h = (w[1] - w[0]) / panels as f64;
            for p in 0..panels {
                let a = w[0] + p as f64 * h;
                acc += integrate(&rule, a, a + h, &mut *integrand);
            }
        }
        acc
    };
    let mut panels = 64;
    let mut prev = eval(panels, &mut integrand);
    while panels < 1 << 16 {
        panels *= 2;
        let next = eval(panels, &mut integrand);
        if (next - prev).abs() <= 1e-10 * next.abs().max(1e-10) {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

fn validate_weights(weights: &[f64], marginals: &[Law]) -> Result<()> {
    if weights.len() != marginals.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: marginals.len(),
        });
    }
    if weights.len() < 2 {
        return Err(Error::InvalidParameter("need at least two assets".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!("basket weight {w} is not positive")));
    }
    Ok(())
}

/// Monotonicity of a supermodular payoff, which decides the sign structure of φ_f.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

/// Bound `π_{φ_f}(Q̂2)` for a supermodular, componentwise monotone payoff `c`
/// of `d` assets at one maturity, with `f = c ∘ (F_1^{-1}, ..., F_d^{-1})` and
/// `φ_f(x1, x2) = f(x2, x1, ..., x1)`. Asset 1 is the common component.
pub fn ccd_supermodular_bound(
    c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    monotonicity: Option<Monotonicity>,
    marginals: &[Law],
    q2: &QuasiCopula,
    opts: PiOptions,
) -> Result<PiEstimate> {
    if monotonicity.is_none() {
        return Err(Error::InvalidParameter(
            "payoff must be flagged componentwise monotone".into(),
        ));
    }
    if marginals.len() < 2 {
        return Err(Error::InvalidParameter("need at least two assets".into()));
    }
    if q2.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: q2.dim(),
        });
    }
    let d = marginals.len();
    let payoff = UnitSquarePayoff {
        first: AxisMap::Quantiles(marginals[1..].to_vec()),
        second: AxisMap::Quantiles(vec![marginals[0].clone()]),
        f: Arc::new(move |rest: &[f64], one: &[f64]| {
            if d <= 16 {
                let mut x = [0.0; 16];
                x[0] = one[0];
                x[1..d].copy_from_slice(rest);
                c(&x[..d])
            } else {
                let mut x = Vec::with_capacity(d);
                x.push(one[0]);
                x.extend_from_slice(rest);
                c(&x)
            }
        }),
    };
    pi_bivariate(&payoff, &SurvivalView::Of(q2.clone()), opts)
}

/// Common-component bound for a basket call or put with positive weights,
/// routed through `φ` with the quantile mix `G^{-1} = Σ_{i>=2} α_i F_i^{-1} / Σ_{i>=2} α_i`.
pub fn basket_ccd_bound(
    weights: &[f64],
    strike: f64,
    marginals: &[Law],
    q2: &QuasiCopula,
    side: OptionSide,
    opts: PiOptions,
) -> Result<PiEstimate> {
    validate_weights(weights, marginals)?;
    let w = weights.to_vec();
    let payoff = move |x: &[f64]| {
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        match side {
            OptionSide::Call => (s - strike).max(0.0),
            OptionSide::Put => (strike - s).max(0.0),
        }
    };
    let mono = match side {
        OptionSide::Call => Monotonicity::Increasing,
        OptionSide::Put => Monotonicity::Decreasing,
    };
    ccd_supermodular_bound(payoff, Some(mono), marginals, q2, opts)
}

/// Quasi-expectation of a two-asset basket directly against a bivariate survival
/// function. Baskets of three or more assets are not measure-inducing and are refused.
pub fn pi_basket(
    weights: &[f64],
    strike: f64,
    marginals: &[Law],
    survival: &SurvivalView,
    side: OptionSide,
    opts: PiOptions,
) -> Result<PiEstimate> {
    validate_weights(weights, marginals)?;
    if weights.len() > 2 {
        return Err(Error::Unsupported(
            "basket payoffs of three or more assets are not measure-inducing; use basket_ccd_bound".into(),
        ));
    }
    let (a, b) = (weights[0], weights[1]);
    let payoff = UnitSquarePayoff::from_laws(
        move |x, y| match side {
            OptionSide::Call => (a * x + b * y - strike).max(0.0),
            OptionSide::Put => (strike - a * x - b * y).max(0.0),
        },
        marginals[0].clone(),
        marginals[1].clone(),
    );
    pi_bivariate(&payoff, survival, opts)
}

/// Comonotone standard bound `∫_0^1 c(F_1^{-1}(u), ..., F_m^{-1}(u)) du`.
pub fn comonotone_expectation(c: impl Fn(&[f64]) -> f64 + Sync, marginals: &[Law]) -> Result<f64> {
    if marginals.is_empty() {
        return Err(Error::InvalidParameter("no marginals".into()));
    }
    let map = AxisMap::Quantiles(marginals.to_vec());
    let eval = |lat: &AxisLattice| -> f64 {
        let m = marginals.len();
        let vals = lat.mapped(&map);
        lat.bounds
            .windows(2)
            .enumerate()
            .map(|(a, w)| (w[1] - w[0]) * c(&vals[a * m..(a + 1) * m]))
            .sum()
    };
    let mut n = 1024;
    let lat = AxisLattice::build(&map, n);
    let mut prev = eval(&lat);
    if lat.exact {
        return Ok(prev);
    }
    while n < 1 << 22 {
        n *= 2;
        let next = eval(&AxisLattice::build(&map, n));
        if (next - prev).abs() <= 1e-9 * next.abs().max(1e-9) {
            return Ok(next);
        }
        prev = next;
    }
    if !prev.is_finite() {
        return Err(Error::Numerical("comonotone integral diverged".into()));
    }
    Ok(prev)
}
