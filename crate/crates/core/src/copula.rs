//! Copulas and quasi-copulas on `[0,1]^m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::normal::{bivariate_normal_cdf, norm_cdf, norm_inv};

/// Tolerance used when validating prescribed copula values.
pub const PRESCRIPTION_TOL: f64 = 1e-12;

/// Finite set of points at which an unknown copula is known: `C(x) = q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrescribedSet {
    dim: usize,
    points: Vec<(Vec<f64>, f64)>,
}

impl PrescribedSet {
    /// Validates and builds a prescription.
    ///
    /// Every value must lie in the Fréchet band at its point, and every pair must
    /// satisfy `q - q' <= sum_i (x_i - x'_i)_+`, which any quasi-copula obeys.
    pub fn new(dim: usize, points: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        for (x, q) in &points {
            check_point(x, dim)?;
            if !q.is_finite() {
                return Err(Error::InconsistentPrescription(format!("non-finite value at {x:?}")));
            }
            let lo = frechet_lower(x);
            let hi = frechet_upper(x);
            if *q < lo - PRESCRIPTION_TOL || *q > hi + PRESCRIPTION_TOL {
                return Err(Error::InconsistentPrescription(format!(
                    "value {q} at {x:?} outside Fréchet band [{lo}, {hi}]"
                )));
            }
        }
        for a in 0..points.len() {
            for b in 0..points.len() {
                if a == b {
                    continue;
                }
                let (xa, qa) = &points[a];
                let (xb, qb) = &points[b];
                let slack: f64 = xa.iter().zip(xb).map(|(s, t)| (s - t).max(0.0)).sum();
                if qa - qb > slack + PRESCRIPTION_TOL {
                    return Err(Error::InconsistentPrescription(format!(
                        "points {xa:?} -> {qa} and {xb:?} -> {qb} are not Lipschitz-compatible"
                    )));
                }
            }
        }
        Ok(Self { dim, points })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[(Vec<f64>, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Values of a quasi-copula on the uniform lattice `{0, 1/n, ..., 1}^m`,
/// extended by multilinear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCopula {
    dim: usize,
    n: usize,
    values: Vec<f64>,
}

impl GridCopula {
    /// Builds from raw node values in row-major order (first axis slowest).
    /// No axiom check is performed; use [`verify_axioms`] for that.
    pub fn from_values(dim: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || n == 0 {
            return Err(Error::InvalidParameter("grid needs dim >= 1 and n >= 1".into()));
        }
        let expect = (n + 1).pow(dim as u32);
        if values.len() != expect {
            return Err(Error::DimensionMismatch {
                expected: expect,
                got: values.len(),
            });
        }
        Ok(Self { dim, n, values })
    }

    /// Samples `q` on the lattice.
    pub fn from_copula(q: &QuasiCopula, n: usize) -> Result<Self> {
        let dim = q.dim();
        let total = (n + 1).pow(dim as u32);
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        let mut u = vec![0.0; dim];
        for flat in 0..total {
            unflatten(flat, n + 1, &mut idx);
            for (ui, &i) in u.iter_mut().zip(&idx) {
                *ui = i as f64 / n as f64;
            }
            values.push(q.eval(&u)?);
        }
        Self::from_values(dim, n, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at lattice multi-index.
    pub fn node(&self, idx: &[usize]) -> f64 {
        let mut flat = 0;
        for &i in idx {
            flat = flat * (self.n + 1) + i;
        }
        self.values[flat]
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let n = self.n as f64;
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for i in 0..self.dim {
            let s = u[i] * n;
            let b = (s.floor() as usize).min(self.n - 1);
            base[i] = b;
            frac[i] = s - b as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; self.dim];
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            for i in 0..self.dim {
                if corner >> i & 1 == 1 {
                    idx[i] = base[i] + 1;
                    w *= frac[i];
                } else {
                    idx[i] = base[i];
                    w *= 1.0 - frac[i];
                }
            }
            if w != 0.0 {
                acc += w * self.node(&idx);
            }
        }
        acc
    }
}

fn unflatten(mut flat: usize, base: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % base;
        flat /= base;
    }
}

/// An evaluable m-variate quasi-copula.
#[derive(Clone, Debug, PartialEq)]
pub enum QuasiCopula {
    /// Lower Fréchet bound `W^m`.
    FrechetLower(usize),
    /// Upper Fréchet bound `M^m` (comonotone copula).
    FrechetUpper(usize),
    /// Independence copula `Π^m`.
    Independence(usize),
    /// Bivariate Gaussian copula.
    Gaussian2(f64),
    /// Improved Fréchet upper bound from prescribed values.
    ImprovedUpper(PrescribedSet),
    /// Improved Fréchet lower bound from prescribed values.
    ImprovedLower(PrescribedSet),
    /// Pointwise maximum of quasi-copulas of equal dimension.
    PointwiseMax(Vec<QuasiCopula>),
    /// `Q*(u) = Q2(min_{i>=2} u_i, u_1)`.
    QStar { base: Box<QuasiCopula>, dim: usize },
    /// Bivariate argument swap.
    Transpose(Box<QuasiCopula>),
    /// Multilinear interpolation of lattice values.
    GridInterpolated(GridCopula),
}

impl QuasiCopula {
    pub fn gaussian2(rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("correlation {rho} outside [-1, 1]")));
        }
        Ok(Self::Gaussian2(rho))
    }

    pub fn pointwise_max(list: Vec<QuasiCopula>) -> Result<Self> {
        let first = list
            .first()
            .ok_or_else(|| Error::InvalidParameter("pointwise max of an empty list".into()))?;
        let dim = first.dim();
        for q in &list {
            if q.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: q.dim(),
                });
            }
        }
        Ok(Self::PointwiseMax(list))
    }

    pub fn qstar(q2: QuasiCopula, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter("Q* needs dimension >= 2".into()));
        }
        if q2.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: q2.dim(),
            });
        }
        Ok(Self::QStar {
            base: Box::new(q2),
            dim,
        })
    }

    pub fn transpose(q2: QuasiCopula) -> Result<Self> {
        if q2.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: q2.dim(),
            });
        }
        Ok(Self::Transpose(Box::new(q2)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::FrechetLower(m) | Self::FrechetUpper(m) | Self::Independence(m) => *m,
            Self::Gaussian2(_) | Self::Transpose(_) => 2,
            Self::ImprovedUpper(p) | Self::ImprovedLower(p) => p.dim(),
            Self::PointwiseMax(list) => list[0].dim(),
            Self::QStar { dim, .. } => *dim,
            Self::GridInterpolated(g) => g.dim(),
        }
    }

    /// Evaluates at `u`, validating the input.
    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        check_point(u, self.dim())?;
        Ok(self.eval_unchecked(u))
    }

    /// Evaluates without validating `u`.
    ///
    /// Boundary values are returned exactly for analytic families: zero when a
    /// coordinate is zero, and `u_i` when all other coordinates are one.
    pub fn eval_unchecked(&self, u: &[f64]) -> f64 {
        if !matches!(self, Self::GridInterpolated(_)) {
            if u.iter().any(|&x| x <= 0.0) {
                return 0.0;
            }
            let mut free = None;
            let mut count = 0;
            for &x in u {
                if x < 1.0 {
                    count += 1;
                    free = Some(x);
                }
            }
            if count <= 1 {
                return free.unwrap_or(1.0);
            }
        }
        self.eval_raw(u)
    }

    fn eval_raw(&self, u: &[f64]) -> f64 {
        match self {
            Self::FrechetLower(_) => frechet_lower(u),
            Self::FrechetUpper(_) => frechet_upper(u),
            Self::Independence(_) => u.iter().product(),
            Self::Gaussian2(rho) => bivariate_normal_cdf(norm_inv(u[0]), norm_inv(u[1]), *rho).unwrap_or(f64::NAN),
            Self::ImprovedUpper(p) => {
                let mut v = frechet_upper(u);
                for (x, q) in p.points() {
                    let s: f64 = u.iter().zip(x).map(|(a, b)| (a - b).max(0.0)).sum();
                    v = v.min(q + s);
                }
                v
            }
            Self::ImprovedLower(p) => {
                let mut v = frechet_lower(u);
                for (x, q) in p.points() {
                    let s: f64 = u.iter().zip(x).map(|(a, b)| (b - a).max(0.0)).sum();
                    v = v.max(q - s);
                }
                v
            }
            Self::PointwiseMax(list) => list
                .iter()
                .map(|q| q.eval_unchecked(u))
                .fold(f64::NEG_INFINITY, f64::max),
            Self::QStar { base, .. } => {
                let m = u[1..].iter().copied().fold(f64::INFINITY, f64::min);
                base.eval_unchecked(&[m, u[0]])
            }
            Self::Transpose(base) => base.eval_unchecked(&[u[1], u[0]]),
            Self::GridInterpolated(g) => g.eval(u),
        }
    }

    /// Survival function `P(U > u)` analogue, validated.
    pub fn eval_survival(&self, u: &[f64]) -> Result<f64> {
        check_point(u, self.dim())?;
        Ok(self.survival_unchecked(u))
    }

    /// Survival function with closed forms where available, inclusion–exclusion otherwise.
    pub fn survival_unchecked(&self, u: &[f64]) -> f64 {
        match self {
            Self::FrechetUpper(_) => 1.0 - u.iter().copied().fold(0.0, f64::max),
            Self::Independence(_) => u.iter().map(|x| 1.0 - x).product(),
            Self::QStar { base, .. } => {
                let mx = u[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                base.survival_unchecked(&[mx, u[0]])
            }
            _ if u.len() == 2 => 1.0 - u[0] - u[1] + self.eval_unchecked(u),
            _ => survival_inclusion_exclusion(self, u),
        }
    }

    /// Partial derivative in the second argument of a bivariate copula.
    pub fn partial_2(&self, u: f64, t: f64) -> Result<f64> {
        match self {
            Self::FrechetUpper(2) => Ok(if u > t { 1.0 } else { 0.0 }),
            Self::Independence(2) => Ok(u),
            Self::FrechetLower(2) => Ok(if u + t > 1.0 { 1.0 } else { 0.0 }),
            Self::Gaussian2(rho) => Ok(gaussian_partial_2(*rho, u, t)),
            _ => Err(Error::Unsupported(format!(
                "no closed-form second partial derivative for {}",
                self.family_name()
            ))),
        }
    }

    /// Short family label.
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::FrechetLower(_) => "W",
            Self::FrechetUpper(_) => "M",
            Self::Independence(_) => "Pi",
            Self::Gaussian2(_) => "Gaussian",
            Self::ImprovedUpper(_) => "ImprovedUpper",
            Self::ImprovedLower(_) => "ImprovedLower",
            Self::PointwiseMax(_) => "PointwiseMax",
            Self::QStar { .. } => "QStar",
            Self::Transpose(_) => "Transpose",
            Self::GridInterpolated(_) => "Grid",
        }
    }
}

fn gaussian_partial_2(rho: f64, u: f64, t: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    if rho >= 1.0 {
        return if u > t { 1.0 } else { 0.0 };
    }
    if rho <= -1.0 {
        return if u + t > 1.0 { 1.0 } else { 0.0 };
    }
    let s = (1.0 - rho * rho).sqrt();
    norm_cdf((norm_inv(u) - rho * norm_inv(t)) / s)
}

/// Survival function by inclusion–exclusion over all `2^m` faces.
pub fn survival_inclusion_exclusion(q: &QuasiCopula, u: &[f64]) -> f64 {
    let m = u.len();
    let mut y = vec![0.0; m];
    let mut acc = 0.0;
    for mask in 0..(1usize << m) {
        let mut ones = 0;
        for i in 0..m {
            if mask >> i & 1 == 1 {
                y[i] = 1.0;
                ones += 1;
            } else {
                y[i] = u[i];
            }
        }
        let sign = if (m - ones) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * q.eval_unchecked(&y);
    }
    acc
}

/// `W^m(u) = max(sum u_i - (m - 1), 0)`.
pub fn frechet_lower(u: &[f64]) -> f64 {
    let s: f64 = u.iter().sum();
    (s - (u.len() as f64 - 1.0)).max(0.0)
}

/// `M^m(u) = min u_i`.
pub fn frechet_upper(u: &[f64]) -> f64 {
    u.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_point(u: &[f64], dim: usize) -> Result<()> {
    if u.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: u.len(),
        });
    }
    for (index, &value) in u.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfUnitCube { index, value });
        }
    }
    Ok(())
}

/// Improved Fréchet bounds `(lower, upper)` from a prescription.
pub fn improved_frechet_bounds(prescribed: PrescribedSet) -> (QuasiCopula, QuasiCopula) {
    if prescribed.is_empty() {
        let m = prescribed.dim();
        return (QuasiCopula::FrechetLower(m), QuasiCopula::FrechetUpper(m));
    }
    (
        QuasiCopula::ImprovedLower(prescribed.clone()),
        QuasiCopula::ImprovedUpper(prescribed),
    )
}

/// Something that can be evaluated as an upper-tail function on `[0,1]^m`.
#[derive(Clone, Debug, PartialEq)]
pub enum SurvivalView {
    /// Survival function of the quasi-copula.
    Of(QuasiCopula),
    /// A (quasi-)copula of the reflected vector `1 - U`, read at `1 - u`.
    Reflected(QuasiCopula),
}

impl SurvivalView {
    pub fn dim(&self) -> usize {
        match self {
            Self::Of(q) | Self::Reflected(q) => q.dim(),
        }
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        check_point(u, self.dim())?;
        Ok(self.eval_unchecked(u))
    }

    pub fn eval_unchecked(&self, u: &[f64]) -> f64 {
        match self {
            Self::Of(q) => q.survival_unchecked(u),
            Self::Reflected(q) => {
                let v: Vec<f64> = u.iter().map(|x| 1.0 - x).collect();
                q.eval_unchecked(&v)
            }
        }
    }
}

/// Evaluator for the upper product `D^1 ∨ ... ∨ D^m` of bivariate copulas:
/// `u -> ∫_0^1 min_i ∂_2 D^i(u_i, t) dt`.
#[derive(Clone, Debug)]
pub struct UpperProduct {
    factors: Vec<QuasiCopula>,
    nodes: usize,
    rel_tol: f64,
    max_nodes: usize,
}

impl UpperProduct {
    pub const DEFAULT_NODES: usize = 4096;
    pub const DEFAULT_REL_TOL: f64 = 1e-7;

    pub fn new(factors: Vec<QuasiCopula>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter(
                "upper product needs at least one factor".into(),
            ));
        }
        for f in &factors {
            f.partial_2(0.5, 0.5)?;
            if f.dim() != 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    got: f.dim(),
                });
            }
        }
        Ok(Self {
            factors,
            nodes: Self::DEFAULT_NODES,
            rel_tol: Self::DEFAULT_REL_TOL,
            max_nodes: 1 << 20,
        })
    }

    /// Sets the starting node count.
    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes.max(1);
        self
    }

    /// Sets the tolerance of the doubling check, relative to the unit range of a copula; zero disables doubling.
    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        check_point(u, self.dim())?;
        let axes: Vec<Vec<f64>> = u.iter().map(|&x| vec![x]).collect();
        Ok(self.eval_lattice(&axes)?[0])
    }

    /// Evaluates on the product lattice `axes[0] × ... × axes[m-1]`,
    /// returning values in row-major order.
    pub fn eval_lattice(&self, axes: &[Vec<f64>]) -> Result<Vec<f64>> {
        if axes.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: axes.len(),
            });
        }
        for a in axes {
            check_point(a, a.len())?;
        }
        let mut n = self.nodes;
        let mut prev = self.lattice_at(axes, n);
        if self.rel_tol <= 0.0 {
            return Ok(prev);
        }
        while n < self.max_nodes {
            n *= 2;
            let next = self.lattice_at(axes, n);
            let worst = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prev = next;
            if worst <= self.rel_tol {
                break;
            }
        }
        Ok(prev)
    }

    fn lattice_at(&self, axes: &[Vec<f64>], n: usize) -> Vec<f64> {
        use rayon::prelude::*;

        // Cells are equally spaced in t = Φ(x), x in [-L, L]: Gaussian partials are
        // smooth in x but not at the ends of t-space.
        const L: f64 = 8.5;
        let mut cuts: Vec<f64> = (0..=n).map(|k| -L + 2.0 * L * k as f64 / n as f64).collect();
        let mut push_t = |t: f64| {
            if t > 0.0 && t < 1.0 {
                cuts.push(norm_inv(t).clamp(-L, L));
            }
        };
        for (f, axis) in self.factors.iter().zip(axes) {
            for &u in axis {
                match f {
                    QuasiCopula::FrechetUpper(_) => push_t(u),
                    QuasiCopula::FrechetLower(_) => push_t(1.0 - u),
                    QuasiCopula::Gaussian2(r) if r.abs() >= 1.0 => {
                        push_t(u);
                        push_t(1.0 - u);
                    }
                    _ => {}
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mids: Vec<f64> = cuts.windows(2).map(|w| norm_cdf(0.5 * (w[0] + w[1]))).collect();
        let last = cuts.len() - 1;
        let edge = |j: usize| match j {
            0 => 0.0,
            j if j == last => 1.0,
            j => norm_cdf(cuts[j]),
        };
        let widths: Vec<f64> = (0..last).map(|j| edge(j + 1) - edge(j)).collect();
        let tables: Vec<Vec<Vec<f64>>> = self
            .factors
            .iter()
            .zip(axes)
            .map(|(f, axis)| {
                axis.iter()
                    .map(|&u| mids.iter().map(|&t| f.partial_2(u, t).unwrap_or(0.0)).collect())
                    .collect()
            })
            .collect();
        let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut rows: Vec<&[f64]> = Vec::with_capacity(sizes.len());
                let mut rest = flat;
                for (i, &s) in sizes.iter().enumerate().rev() {
                    rows.push(&tables[i][rest % s]);
                    rest /= s;
                }
                let mut acc = 0.0;
                for (j, w) in widths.iter().enumerate() {
                    let m = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                    acc += w * m;
                }
                acc
            })
            .collect()
    }
}

/// Discrete upper product of n-grid bivariate copulas given as `(n+1)^2` value
/// tables `D(a/n, b/n)` (row index `a`, column index `b`).
#[derive(Clone, Debug)]
pub struct GridUpperProduct {
    n: usize,
    increments: Vec<Vec<f64>>,
}

impl GridUpperProduct {
    pub fn new(n: usize, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.is_empty() || n == 0 {
            return Err(Error::InvalidParameter("need n >= 1 and at least one table".into()));
        }
        let size = (n + 1) * (n + 1);
        let mut increments = Vec::with_capacity(tables.len());
        for t in &tables {
            if t.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    got: t.len(),
                });
            }
            let mut inc = vec![0.0; (n + 1) * n];
            for a in 0..=n {
                for k in 1..=n {
                    inc[a * n + k - 1] = t[a * (n + 1) + k] - t[a * (n + 1) + k - 1];
                }
            }
            increments.push(inc);
        }
        Ok(Self { n, increments })
    }

    /// Samples bivariate copulas on the n-grid.
    pub fn from_copulas(n: usize, copulas: &[QuasiCopula]) -> Result<Self> {
        let mut tables = Vec::with_capacity(copulas.len());
        for c in copulas {
            let g = GridCopula::from_copula(c, n)?;
            tables.push(g.values().to_vec());
        }
        Self::new(n, tables)
    }

    pub fn dim(&self) -> usize {
        self.increments.len()
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Value at lattice point `idx / n`.
    pub fn eval_index(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: idx.len(),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i > self.n) {
            return Err(Error::InvalidParameter(format!(
                "lattice index {bad} exceeds {}",
                self.n
            )));
        }
        let n = self.n;
        let mut acc = 0.0;
        for k in 0..n {
            let m = idx
                .iter()
                .zip(&self.increments)
                .map(|(&a, inc)| inc[a * n + k])
                .fold(f64::INFINITY, f64::min);
            acc += m;
        }
        Ok(acc)
    }

    /// Full lattice as a grid copula.
    pub fn to_grid(&self) -> Result<GridCopula> {
        let m = self.dim();
        let total = (self.n + 1).pow(m as u32);
        let mut idx = vec![0usize; m];
        let mut values = Vec::with_capacity(total);
        for flat in 0..total {
            unflatten(flat, self.n + 1, &mut idx);
            values.push(self.eval_index(&idx)?);
        }
        GridCopula::from_values(m, self.n, values)
    }
}

/// Property that failed in [`verify_axioms`].
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomViolation {
    pub property: &'static str,
    pub point: Vec<f64>,
    pub magnitude: f64,
}

/// Outcome of [`verify_axioms`].
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomReport {
    pub passed: bool,
    pub worst: f64,
    pub violation: Option<AxiomViolation>,
}

/// Checks the quasi-copula axioms on pseudo-random points.
///
/// Groundedness and uniform marginals use zero tolerance; monotonicity,
/// Lipschitz continuity and the Fréchet band use `1e-12`.
pub fn verify_axioms(q: &QuasiCopula, samples: usize, seed: u64) -> AxiomReport {
    const TOL: f64 = 1e-12;
    let m = q.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut first: Option<AxiomViolation> = None;
    let mut record = |prop: &'static str, point: &[f64], mag: f64, tol: f64| {
        if mag > tol {
            worst = worst.max(mag);
            if first.as_ref().is_none_or(|v| v.magnitude < mag) {
                first = Some(AxiomViolation {
                    property: prop,
                    point: point.to_vec(),
                    magnitude: mag,
                });
            }
        }
    };

    if let QuasiCopula::GridInterpolated(g) = q {
        check_grid_nodes(g, &mut record);
    }

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; m];
    for _ in 0..samples.max(1) {
        for x in u.iter_mut() {
            *x = rng.random::<f64>();
        }
        let val = q.eval_unchecked(&u);
        record("range", &u, (-val).max(val - 1.0).max(0.0), TOL);
        record("frechet-band", &u, (frechet_lower(&u) - val).max(0.0), TOL);
        record("frechet-band", &u, (val - frechet_upper(&u)).max(0.0), TOL);

        let i = rng.random_range(0..m);
        let mut w = u.clone();
        w[i] = 0.0;
        record("grounded", &w, q.eval_unchecked(&w).abs(), 0.0);
        let mut e = vec![1.0; m];
        e[i] = u[i];
        record("uniform-marginal", &e, (q.eval_unchecked(&e) - u[i]).abs(), 0.0);

        for (a, b) in v.iter_mut().zip(&u) {
            *a = b + (1.0 - b) * rng.random::<f64>() * rng.random::<f64>();
        }
        let hi = q.eval_unchecked(&v);
        record("monotone", &u, (val - hi).max(0.0), TOL);
        let l1: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        record("lipschitz", &u, ((hi - val).abs() - l1).max(0.0), TOL);
    }
    AxiomReport {
        passed: first.is_none(),
        worst,
        violation: first,
    }
}

fn check_grid_nodes(g: &GridCopula, record: &mut impl FnMut(&'static str, &[f64], f64, f64)) {
    let m = g.dim();
    let n = g.resolution();
    let total = (n + 1).pow(m as u32);
    let mut idx = vec![0usize; m];
    let mut nb = vec![0usize; m];
    let step = 1.0 / n as f64;
    for flat in 0..total {
        unflatten(flat, n + 1, &mut idx);
        let here = g.node(&idx);
        let point: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
        if idx.contains(&0) {
            record("grounded", &point, here.abs(), 0.0);
        }
        let free: Vec<usize> = (0..m).filter(|&i| idx[i] != n).collect();
        if free.len() == 1 {
            record("uniform-marginal", &point, (here - point[free[0]]).abs(), 0.0);
        }
        for i in 0..m {
            if idx[i] == n {
                continue;
            }
            nb.copy_from_slice(&idx);
            nb[i] += 1;
            let up = g.node(&nb);
            record("monotone", &point, (here - up).max(0.0), 1e-12);
            record("lipschitz", &point, (up - here - step).max(0.0), 1e-12);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn basic_families() {
        assert_eq!(QuasiCopula::FrechetLower(2).eval(&[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(QuasiCopula::FrechetUpper(3).eval(&[0.2, 0.5, 0.9]).unwrap(), 0.2);
        assert!(close(
            QuasiCopula::Gaussian2(0.0).eval(&[0.5, 0.5]).unwrap(),
            0.25,
            1e-15
        ));
    }

    #[test]
    fn eval_rejects_bad_input() {
        let q = QuasiCopula::Independence(2);
        assert!(matches!(q.eval(&[0.5]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            q.eval(&[0.5, 1.2]),
            Err(Error::OutOfUnitCube { index: 1, .. })
        ));
    }

    #[test]
    fn survival_examples() {
        assert!(close(
            QuasiCopula::Independence(2).eval_survival(&[0.5, 0.5]).unwrap(),
            0.25,
            1e-15
        ));
        assert!(close(
            QuasiCopula::FrechetUpper(2).eval_survival(&[0.3, 0.7]).unwrap(),
            0.3,
            1e-15
        ));
        let qs = QuasiCopula::qstar(QuasiCopula::Independence(2), 3).unwrap();
        assert!(close(qs.eval_survival(&[0.2, 0.4, 0.6]).unwrap(), 0.32, 1e-15));
        assert!(close(survival_inclusion_exclusion(&qs, &[0.2, 0.4, 0.6]), 0.32, 1e-15));
    }

    #[test]
    fn survival_corners() {
        for q in [
            QuasiCopula::FrechetLower(3),
            QuasiCopula::Independence(3),
            QuasiCopula::FrechetUpper(4),
        ] {
            let m = q.dim();
            assert!(close(q.eval_survival(&vec![0.0; m]).unwrap(), 1.0, 1e-15));
            assert!(close(q.eval_survival(&vec![1.0; m]).unwrap(), 0.0, 1e-15));
        }
    }

    #[test]
    fn improved_bounds_examples() {
        let p = PrescribedSet::new(2, vec![(vec![0.5, 0.5], 0.25)]).unwrap();
        let (lo, hi) = improved_frechet_bounds(p);
        assert!(close(hi.eval(&[0.6, 0.6]).unwrap(), 0.45, 1e-15));
        assert!(close(lo.eval(&[0.4, 0.4]).unwrap(), 0.05, 1e-15));
        assert_eq!(hi.eval(&[0.5, 0.5]).unwrap(), 0.25);
        assert_eq!(lo.eval(&[0.5, 0.5]).unwrap(), 0.25);
        let (lo, hi) = improved_frechet_bounds(PrescribedSet::empty(2));
        assert_eq!(lo, QuasiCopula::FrechetLower(2));
        assert_eq!(hi, QuasiCopula::FrechetUpper(2));
    }

    #[test]
    fn prescription_rejections() {
        assert!(matches!(
            PrescribedSet::new(2, vec![(vec![0.5, 0.5], 0.6)]),
            Err(Error::InconsistentPrescription(_))
        ));
        let bad = PrescribedSet::new(2, vec![(vec![0.5, 0.5], 0.25), (vec![0.5, 0.5], 0.3)]);
        assert!(matches!(bad, Err(Error::InconsistentPrescription(_))));
        let bad = PrescribedSet::new(2, vec![(vec![0.4, 0.4], 0.4), (vec![0.5, 0.5], 0.1)]);
        assert!(matches!(bad, Err(Error::InconsistentPrescription(_))));
    }

    #[test]
    fn qstar_examples() {
        let q = QuasiCopula::qstar(QuasiCopula::FrechetUpper(2), 4).unwrap();
        let u = [0.3, 0.8, 0.5, 0.9];
        assert_eq!(q.eval(&u).unwrap(), QuasiCopula::FrechetUpper(4).eval(&u).unwrap());
        let q = QuasiCopula::qstar(QuasiCopula::Independence(2), 3).unwrap();
        assert!(close(q.eval(&[0.5, 0.4, 0.8]).unwrap(), 0.2, 1e-15));
        let q = QuasiCopula::qstar(QuasiCopula::FrechetLower(2), 3).unwrap();
        assert!(close(q.eval(&[0.7, 0.6, 0.9]).unwrap(), 0.3, 1e-15));
        assert!(QuasiCopula::qstar(QuasiCopula::Independence(2), 1).is_err());
    }

    #[test]
    fn pointwise_max_examples() {
        let q = QuasiCopula::pointwise_max(vec![QuasiCopula::FrechetLower(2), QuasiCopula::FrechetUpper(2)]).unwrap();
        assert_eq!(q.eval(&[0.3, 0.6]).unwrap(), 0.3);
        let g = QuasiCopula::pointwise_max(vec![QuasiCopula::Gaussian2(0.5), QuasiCopula::Gaussian2(-0.5)]).unwrap();
        let want = QuasiCopula::Gaussian2(0.5).eval(&[0.3, 0.3]).unwrap();
        assert_eq!(g.eval(&[0.3, 0.3]).unwrap(), want);
        assert!(QuasiCopula::pointwise_max(vec![]).is_err());
        assert!(QuasiCopula::pointwise_max(vec![QuasiCopula::Independence(2), QuasiCopula::Independence(3)]).is_err());
    }

    #[test]
    fn transpose_swaps_arguments() {
        let p = PrescribedSet::new(2, vec![(vec![0.3, 0.7], 0.25)]).unwrap();
        let q = QuasiCopula::ImprovedUpper(p);
        let t = QuasiCopula::transpose(q.clone()).unwrap();
        assert_eq!(t.eval(&[0.6, 0.35]).unwrap(), q.eval(&[0.35, 0.6]).unwrap());
    }

    #[test]
    fn upper_product_closed_forms() {
        let up = UpperProduct::new(vec![QuasiCopula::FrechetUpper(2), QuasiCopula::Independence(2)]).unwrap();
        assert!(close(up.eval(&[0.3, 0.7]).unwrap(), 0.21, 1e-14));
        let up = UpperProduct::new(vec![
            QuasiCopula::FrechetUpper(2),
            QuasiCopula::FrechetUpper(2),
            QuasiCopula::FrechetUpper(2),
        ])
        .unwrap();
        assert!(close(up.eval(&[0.3, 0.6, 0.5]).unwrap(), 0.3, 1e-14));
        let err = UpperProduct::new(vec![QuasiCopula::FrechetUpper(2), QuasiCopula::FrechetUpper(3)]);
        assert!(err.is_err());
        let err = UpperProduct::new(vec![QuasiCopula::ImprovedUpper(PrescribedSet::empty(2))]);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn grid_upper_product_of_comonotone_is_comonotone() {
        let n = 4;
        let g = GridUpperProduct::from_copulas(n, &vec![QuasiCopula::FrechetUpper(2); 3]).unwrap();
        for a in 0..=n {
            for b in 0..=n {
                for c in 0..=n {
                    let v = g.eval_index(&[a, b, c]).unwrap();
                    assert!(close(v, a.min(b).min(c) as f64 / n as f64, 1e-15));
                }
            }
        }
    }

    #[test]
    fn grid_interpolation_reproduces_nodes_and_axioms() {
        let g = GridCopula::from_copula(&QuasiCopula::Gaussian2(0.4), 8).unwrap();
        let q = QuasiCopula::GridInterpolated(g);
        let direct = QuasiCopula::Gaussian2(0.4).eval(&[0.25, 0.625]).unwrap();
        assert!(close(q.eval(&[0.25, 0.625]).unwrap(), direct, 1e-15));
        assert!(verify_axioms(&q, 500, 1).passed);
    }

    #[test]
    fn corrupted_grid_fails_axioms() {
        let mut values = GridCopula::from_copula(&QuasiCopula::Independence(2), 4)
            .unwrap()
            .values()
            .to_vec();
        values[2 * 5 + 3] -= 0.3;
        let q = QuasiCopula::GridInterpolated(GridCopula::from_values(2, 4, values).unwrap());
        let rep = verify_axioms(&q, 100, 7);
        assert!(!rep.passed);
        let v = rep.violation.unwrap();
        assert!(v.magnitude > 0.05);
    }

    #[test]
    fn axioms_hold_for_standard_families() {
        let p = PrescribedSet::new(3, vec![(vec![0.4, 0.7, 0.5], 0.3), (vec![0.8, 0.2, 0.9], 0.15)]).unwrap();
        let list = vec![
            QuasiCopula::FrechetUpper(3),
            QuasiCopula::FrechetLower(3),
            QuasiCopula::Independence(4),
            QuasiCopula::Gaussian2(0.7),
            QuasiCopula::Gaussian2(-0.9),
            QuasiCopula::ImprovedUpper(p.clone()),
            QuasiCopula::ImprovedLower(p),
            QuasiCopula::qstar(QuasiCopula::Gaussian2(0.3), 3).unwrap(),
        ];
        for q in list {
            let rep = verify_axioms(&q, 1000, 11);
            assert!(rep.passed, "{}: {:?}", q.family_name(), rep.violation);
            assert_eq!(rep.worst, 0.0);
        }
    }

    #[test]
    fn gaussian_partial_matches_difference_quotient() {
        let q = QuasiCopula::Gaussian2(0.6);
        for &(u, t) in &[(0.3, 0.4), (0.8, 0.1), (0.5, 0.95)] {
            let h = 1e-6;
            let fd = (q.eval(&[u, t + h]).unwrap() - q.eval(&[u, t - h]).unwrap()) / (2.0 * h);
            assert!(close(q.partial_2(u, t).unwrap(), fd, 1e-6));
        }
    }
}
