//! Discretized martingale optimal transport over a product grid of marginal atoms.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{LpBackend, LpProblem, LpStatus, RevisedSimplex, Sense};
pub use crate::marginal::{check_convex_order, ConvexOrderReport};
use crate::marginal::{DiscreteMarginal, UnivariateLaw};

/// Default cap on the number of grid cells.
pub const DEFAULT_GRID_CAP: usize = 5_000_000;

/// Tolerance on `mean(marginal) = spot`.
pub const MEAN_TOL: f64 = 1e-9;

/// Marginals `marginals[i][k]` of asset `k` at maturity `i` with spots `S0[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalSystem {
    spot: Vec<f64>,
    marginals: Vec<Vec<DiscreteMarginal>>,
}

impl MarginalSystem {
    /// Checks the spot means and convex order across maturities.
    pub fn new(spot: Vec<f64>, marginals: Vec<Vec<DiscreteMarginal>>) -> Result<Self> {
        let ms = Self::new_unchecked_order(spot, marginals)?;
        for (k, i, rep) in ms.convex_order_reports() {
            if !rep.passed {
                return Err(Error::InvalidMarginal(format!(
                    "asset {k}: maturities {i} and {} not in convex order (margin {:.3e} at {})",
                    i + 1,
                    rep.worst_margin,
                    rep.worst_strike
                )));
            }
        }
        Ok(ms)
    }

    /// Checks the spot means only.
    pub fn new_unchecked_order(spot: Vec<f64>, marginals: Vec<Vec<DiscreteMarginal>>) -> Result<Self> {
        if marginals.is_empty() || spot.is_empty() {
            return Err(Error::InvalidParameter("empty marginal system".into()));
        }
        for (i, row) in marginals.iter().enumerate() {
            if row.len() != spot.len() {
                return Err(Error::DimensionMismatch {
                    expected: spot.len(),
                    got: row.len(),
                });
            }
            for (k, m) in row.iter().enumerate() {
                let gap = (m.mean() - spot[k]).abs();
                if gap > MEAN_TOL * spot[k].abs().max(1.0) {
                    return Err(Error::InvalidMarginal(format!(
                        "maturity {i}, asset {k}: mean {} differs from spot {}",
                        m.mean(),
                        spot[k]
                    )));
                }
            }
        }
        Ok(Self { spot, marginals })
    }

    pub fn maturities(&self) -> usize {
        self.marginals.len()
    }

    pub fn assets(&self) -> usize {
        self.spot.len()
    }

    pub fn spot(&self) -> &[f64] {
        &self.spot
    }

    pub fn marginal(&self, i: usize, k: usize) -> &DiscreteMarginal {
        &self.marginals[i][k]
    }

    pub fn marginals(&self) -> &[Vec<DiscreteMarginal>] {
        &self.marginals
    }

    /// Convex-order comparison of consecutive maturities, as `(asset, maturity, report)`.
    pub fn convex_order_reports(&self) -> Vec<(usize, usize, ConvexOrderReport)> {
        let mut out = Vec::new();
        for k in 0..self.assets() {
            for i in 0..self.maturities().saturating_sub(1) {
                out.push((
                    k,
                    i,
                    check_convex_order(&self.marginals[i][k], &self.marginals[i + 1][k]),
                ));
            }
        }
        out
    }
}

/// Product grid over all `(maturity, asset)` axes, row-major with axis `i * d + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGrid {
    maturities: usize,
    assets: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    /// `suffix[a]` is the number of cells spanned by axes `a..`.
    suffix: Vec<usize>,
}

impl JointGrid {
    pub fn build(ms: &MarginalSystem) -> Result<Self> {
        Self::build_with_cap(ms, DEFAULT_GRID_CAP)
    }

    pub fn build_with_cap(ms: &MarginalSystem, cap: usize) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for row in ms.marginals() {
            for m in row {
                atoms.push(m.atoms().to_vec());
                weights.push(m.weights().to_vec());
            }
        }
        let total: u128 = atoms.iter().map(|a| a.len() as u128).product();
        if total > cap as u128 {
            return Err(Error::GridTooLarge { cells: total, cap });
        }
        let mut suffix = vec![1usize; atoms.len() + 1];
        for a in (0..atoms.len()).rev() {
            suffix[a] = suffix[a + 1] * atoms[a].len();
        }
        Ok(Self {
            maturities: ms.maturities(),
            assets: ms.assets(),
            atoms,
            weights,
            suffix,
        })
    }

    pub fn maturities(&self) -> usize {
        self.maturities
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn num_cells(&self) -> usize {
        self.suffix[0]
    }

    pub fn num_axes(&self) -> usize {
        self.atoms.len()
    }

    /// Axis index of maturity `i`, asset `k`.
    pub fn axis(&self, i: usize, k: usize) -> usize {
        i * self.assets + k
    }

    pub fn atoms(&self, axis: usize) -> &[f64] {
        &self.atoms[axis]
    }

    pub fn weights(&self, axis: usize) -> &[f64] {
        &self.weights[axis]
    }

    pub fn atom_index(&self, cell: usize, axis: usize) -> usize {
        (cell / self.suffix[axis + 1]) % self.atoms[axis].len()
    }

    pub fn coordinate(&self, cell: usize, axis: usize) -> f64 {
        self.atoms[axis][self.atom_index(cell, axis)]
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        (0..self.num_axes()).map(|a| self.atom_index(cell, a)).collect()
    }

    pub fn cell_index(&self, idx: &[usize]) -> usize {
        idx.iter().enumerate().map(|(a, &j)| j * self.suffix[a + 1]).sum()
    }

    /// Coordinates of a cell, one per axis.
    pub fn point(&self, cell: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.num_axes()];
        self.fill_point(cell, &mut x);
        x
    }

    fn fill_point(&self, cell: usize, x: &mut [f64]) {
        for (a, xa) in x.iter_mut().enumerate() {
            *xa = self.coordinate(cell, a);
        }
    }

    /// Index of the cell's combination on the first `axes` axes.
    pub fn prefix_index(&self, cell: usize, axes: usize) -> usize {
        cell / self.suffix[axes]
    }

    pub fn prefix_count(&self, axes: usize) -> usize {
        self.suffix[0] / self.suffix[axes]
    }

    /// Evaluates `f` at every cell.
    pub fn evaluate<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let na = self.num_axes();
        (0..self.num_cells())
            .into_par_iter()
            .map_init(
                || vec![0.0; na],
                |buf, c| {
                    self.fill_point(c, buf);
                    f(buf)
                },
            )
            .collect()
    }
}

/// Origin of a constraint row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    Marginal { axis: usize, atom: usize },
    Mass,
    Martingale { asset: usize, step: usize, prefix: usize },
    Extra,
}

/// A linear row `Σ coeff(cell) q(cell) (= or <=) rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub label: String,
    pub sense: Sense,
    /// Non-zero coefficients `(cell, value)` in increasing cell order.
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub kind: RowKind,
}

impl LinearConstraint {
    pub fn from_dense(label: impl Into<String>, sense: Sense, dense: &[f64], rhs: f64) -> Result<Self> {
        if let Some(c) = dense.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite coefficient at cell {c}")));
        }
        if !rhs.is_finite() {
            return Err(Error::InvalidParameter("non-finite right-hand side".into()));
        }
        let coeffs = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(c, v)| (c, *v))
            .collect();
        Ok(Self {
            label: label.into(),
            sense,
            coeffs,
            rhs,
            kind: RowKind::Extra,
        })
    }

    pub fn eq(label: impl Into<String>, dense: &[f64], rhs: f64) -> Result<Self> {
        Self::from_dense(label, Sense::Eq, dense, rhs)
    }

    pub fn le(label: impl Into<String>, dense: &[f64], rhs: f64) -> Result<Self> {
        Self::from_dense(label, Sense::Le, dense, rhs)
    }

    /// `a·q >= rhs`, stored as `-a·q <= -rhs`.
    pub fn ge(label: impl Into<String>, dense: &[f64], rhs: f64) -> Result<Self> {
        let neg: Vec<f64> = dense.iter().map(|v| -v).collect();
        Self::from_dense(label, Sense::Le, &neg, -rhs)
    }

    pub fn dense(&self, cells: usize) -> Vec<f64> {
        let mut v = vec![0.0; cells];
        for &(c, a) in &self.coeffs {
            v[c] = a;
        }
        v
    }

    /// `Σ coeff · q`.
    pub fn activity(&self, q: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(c, a)| a * q[c]).sum()
    }
}

/// An ordered collection of rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    rows: Vec<LinearConstraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marginal, mass and martingale rows.
    pub fn base(grid: &JointGrid, ms: &MarginalSystem) -> Self {
        let mut s = Self::new();
        s.extend(marginal_constraints(grid));
        s.extend(martingale_constraints(grid, ms));
        s
    }

    pub fn push(&mut self, row: LinearConstraint) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = LinearConstraint>) {
        self.rows.extend(rows);
    }

    pub fn with(&self, rows: impl IntoIterator<Item = LinearConstraint>) -> Self {
        let mut s = self.clone();
        s.extend(rows);
        s
    }

    pub fn rows(&self) -> &[LinearConstraint] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest violation of any row by `q`, together with the most negative entry of `q`.
    pub fn residual(&self, q: &[f64]) -> f64 {
        let row_res = self
            .rows
            .iter()
            .map(|r| {
                let a = r.activity(q);
                match r.sense {
                    Sense::Eq => (a - r.rhs).abs(),
                    Sense::Le => (a - r.rhs).max(0.0),
                }
            })
            .fold(0.0, f64::max);
        let neg = q.iter().fold(0.0f64, |m, &v| m.max(-v));
        row_res.max(neg)
    }
}

/// One row per `(axis, atom)` fixing the marginal weight, plus the total-mass row.
pub fn marginal_constraints(grid: &JointGrid) -> Vec<LinearConstraint> {
    let mut rows = Vec::new();
    for axis in 0..grid.num_axes() {
        let size = grid.atoms(axis).len();
        let mut coeffs = vec![Vec::new(); size];
        for c in 0..grid.num_cells() {
            coeffs[grid.atom_index(c, axis)].push((c, 1.0));
        }
        let (i, k) = (axis / grid.assets(), axis % grid.assets());
        for (atom, co) in coeffs.into_iter().enumerate() {
            rows.push(LinearConstraint {
                label: format!("marginal[t{},s{}]@{}", i + 1, k + 1, grid.atoms(axis)[atom]),
                sense: Sense::Eq,
                coeffs: co,
                rhs: grid.weights(axis)[atom],
                kind: RowKind::Marginal { axis, atom },
            });
        }
    }
    rows.push(LinearConstraint {
        label: "mass".into(),
        sense: Sense::Eq,
        coeffs: (0..grid.num_cells()).map(|c| (c, 1.0)).collect(),
        rhs: 1.0,
        kind: RowKind::Mass,
    });
    rows
}

/// Full-filtration martingale rows: for each asset `k`, step `j` and atom combination
/// `y` of all assets over the first `j` maturities,
/// `Σ_{prefix = y} q (x_{j+1}^k - x_j^k) = 0` with `x_0 = S0`.
pub fn martingale_constraints(grid: &JointGrid, ms: &MarginalSystem) -> Vec<LinearConstraint> {
    let d = grid.assets();
    let mut rows = Vec::new();
    for k in 0..d {
        for j in 0..grid.maturities() {
            let pre_axes = j * d;
            let n_pre = grid.prefix_count(pre_axes);
            let mut coeffs = vec![Vec::new(); n_pre];
            let next = grid.axis(j, k);
            for c in 0..grid.num_cells() {
                let prev = if j == 0 {
                    ms.spot()[k]
                } else {
                    grid.coordinate(c, grid.axis(j - 1, k))
                };
                let v = grid.coordinate(c, next) - prev;
                if v != 0.0 {
                    coeffs[grid.prefix_index(c, pre_axes)].push((c, v));
                }
            }
            for (p, co) in coeffs.into_iter().enumerate() {
                rows.push(LinearConstraint {
                    label: format!("martingale[s{},t{}]#{}", k + 1, j + 1, p),
                    sense: Sense::Eq,
                    coeffs: co,
                    rhs: 0.0,
                    kind: RowKind::Martingale {
                        asset: k,
                        step: j,
                        prefix: p,
                    },
                });
            }
        }
    }
    rows
}

/// Which side of the price interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    Lower,
    Upper,
}

/// Which sides to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sides {
    Both,
    Lower,
    Upper,
}

impl Sides {
    fn wants(&self, b: Bound) -> bool {
        matches!(
            (self, b),
            (Sides::Both, _) | (Sides::Lower, Bound::Lower) | (Sides::Upper, Bound::Upper)
        )
    }
}

/// Outcome of one side.
#[derive(Clone, Debug, PartialEq)]
pub struct SideResult {
    pub bound: Bound,
    pub status: LpStatus,
    /// Optimal expectation; NaN unless optimal.
    pub value: f64,
    /// Dual objective `Σ z_r rhs_r`.
    pub dual_value: f64,
    /// Optimizing measure on the cells.
    pub measure: Vec<f64>,
    /// Row multipliers `z`, aligned with the constraint set. For the upper bound
    /// `A^T z >= c`, for the lower bound `A^T z <= c`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub seconds: f64,
}

impl SideResult {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Lower and upper price bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    pub lower: Option<SideResult>,
    pub upper: Option<SideResult>,
}

impl BoundResult {
    pub fn lower_value(&self) -> f64 {
        self.lower.as_ref().map_or(f64::NAN, |s| s.value)
    }

    pub fn upper_value(&self) -> f64 {
        self.upper.as_ref().map_or(f64::NAN, |s| s.value)
    }

    pub fn all_optimal(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(SideResult::is_optimal)
    }

    pub fn any_infeasible(&self) -> bool {
        self.lower
            .iter()
            .chain(&self.upper)
            .any(|s| s.status == LpStatus::Infeasible)
    }
}

/// Solve settings.
#[derive(Clone)]
pub struct BoundSolver {
    backend: Arc<dyn LpBackend>,
    pub sides: Sides,
}

impl Default for BoundSolver {
    fn default() -> Self {
        Self {
            backend: Arc::new(RevisedSimplex::default()),
            sides: Sides::Both,
        }
    }
}

impl std::fmt::Debug for BoundSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundSolver")
            .field("backend", &self.backend.name())
            .field("sides", &self.sides)
            .finish()
    }
}

/// Builds the LP `min/max payoff·q` over the constraint set.
pub fn to_lp(grid: &JointGrid, payoff: &[f64], constraints: &ConstraintSet, bound: Bound) -> LpProblem {
    let sign = if bound == Bound::Upper { -1.0 } else { 1.0 };
    let mut p = LpProblem::new(grid.num_cells(), payoff.iter().map(|c| sign * c).collect());
    for r in constraints.rows() {
        p.push(r.coeffs.clone(), r.sense, r.rhs);
    }
    p
}

impl BoundSolver {
    pub fn new(backend: Arc<dyn LpBackend>) -> Self {
        Self {
            backend,
            sides: Sides::Both,
        }
    }

    pub fn with_sides(mut self, sides: Sides) -> Self {
        self.sides = sides;
        self
    }

    pub fn backend(&self) -> &dyn LpBackend {
        self.backend.as_ref()
    }

    /// Minimal and maximal `Σ q c` over non-negative `q` satisfying the constraints.
    pub fn solve(&self, grid: &JointGrid, payoff: &[f64], constraints: &ConstraintSet) -> Result<BoundResult> {
        if payoff.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.num_cells(),
                got: payoff.len(),
            });
        }
        if let Some(c) = payoff.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("payoff not finite at cell {c}")));
        }
        let run = |b: Bound| -> Result<Option<SideResult>> {
            if self.sides.wants(b) {
                self.solve_side(grid, payoff, constraints, b).map(Some)
            } else {
                Ok(None)
            }
        };
        let (lower, upper) = rayon::join(|| run(Bound::Lower), || run(Bound::Upper));
        Ok(BoundResult {
            lower: lower?,
            upper: upper?,
        })
    }

    fn solve_side(
        &self,
        grid: &JointGrid,
        payoff: &[f64],
        constraints: &ConstraintSet,
        bound: Bound,
    ) -> Result<SideResult> {
        let start = std::time::Instant::now();
        let full = to_lp(grid, payoff, constraints, bound);
        let (mut reduced, map) = full.dedup_rows();
        // Rows without coefficients are decided here.
        let mut keep = vec![true; reduced.rows.len()];
        let mut trivially_infeasible = false;
        for (r, row) in reduced.rows.iter().enumerate() {
            if row.coeffs.iter().all(|&(_, v)| v == 0.0) {
                keep[r] = false;
                let bad = match row.sense {
                    Sense::Eq => row.rhs.abs() > 1e-12,
                    Sense::Le => row.rhs < -1e-12,
                };
                trivially_infeasible |= bad;
            }
        }
        let mut new_index = vec![usize::MAX; reduced.rows.len()];
        let mut rows = Vec::new();
        for (r, row) in reduced.rows.drain(..).enumerate() {
            if keep[r] {
                new_index[r] = rows.len();
                rows.push(row);
            }
        }
        reduced.rows = rows;
        let nc = grid.num_cells();
        if trivially_infeasible {
            return Ok(SideResult {
                bound,
                status: LpStatus::Infeasible,
                value: f64::NAN,
                dual_value: f64::NAN,
                measure: vec![0.0; nc],
                multipliers: vec![0.0; constraints.len()],
                iterations: 0,
                primal_residual: f64::NAN,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let sol = self.backend.solve(&reduced)?;
        let sign = if bound == Bound::Upper { -1.0 } else { 1.0 };
        let mut multipliers = vec![0.0; constraints.len()];
        let mut first = vec![true; new_index.len()];
        if self.backend.provides_duals() && sol.duals.len() == reduced.rows.len() {
            for (r, &red) in map.iter().enumerate() {
                let ni = new_index[red];
                if ni != usize::MAX && first[red] {
                    multipliers[r] = sign * sol.duals[ni];
                    first[red] = false;
                }
            }
        }
        let optimal = sol.status == LpStatus::Optimal;
        let value = if optimal { sign * sol.objective } else { f64::NAN };
        let dual_value = if optimal {
            constraints
                .rows()
                .iter()
                .zip(&multipliers)
                .map(|(r, z)| r.rhs * z)
                .sum()
        } else {
            f64::NAN
        };
        let primal_residual = constraints.residual(&sol.x);
        Ok(SideResult {
            bound,
            status: sol.status,
            value,
            dual_value,
            measure: sol.x,
            multipliers,
            iterations: sol.iterations,
            primal_residual,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// `[min, max]` of `Σ q f` over the feasible set.
    pub fn range(&self, grid: &JointGrid, constraints: &ConstraintSet, f: &[f64]) -> Result<(f64, f64)> {
        let solver = Self {
            backend: self.backend.clone(),
            sides: Sides::Both,
        };
        let res = solver.solve(grid, f, constraints)?;
        let (lo, hi) = (res.lower.unwrap(), res.upper.unwrap());
        for s in [&lo, &hi] {
            match s.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Err(Error::Infeasible("constraint set is empty".into())),
                LpStatus::Unbounded => return Err(Error::Numerical("unbounded functional".into())),
                LpStatus::ToleranceFailure => {
                    return Err(Error::Numerical(format!(
                        "tolerance failure (residual {:.3e})",
                        s.primal_residual
                    )))
                }
            }
        }
        Ok((lo.value, hi.value))
    }

    /// Adds `extra` rows one by one, checking each against the range of its functional
    /// over the rows accepted so far. Stops at the first inconsistent row.
    pub fn feasibility_check(
        &self,
        grid: &JointGrid,
        base: &ConstraintSet,
        extra: &[LinearConstraint],
    ) -> Result<FeasibilityReport> {
        let mut current = base.clone();
        let probe = vec![0.0; grid.num_cells()];
        match self.range(grid, &current, &probe) {
            Ok(_) => {}
            Err(Error::Infeasible(_)) => {
                return Ok(FeasibilityReport {
                    consistent: false,
                    base_feasible: false,
                    accepted: 0,
                    violation: None,
                })
            }
            Err(e) => return Err(e),
        }
        for (idx, row) in extra.iter().enumerate() {
            let f = row.dense(grid.num_cells());
            let (lo, hi) = self.range(grid, &current, &f)?;
            let tol = FEASIBILITY_TOL * (1.0 + row.rhs.abs());
            let ok = match row.sense {
                Sense::Eq => lo - tol <= row.rhs && row.rhs <= hi + tol,
                Sense::Le => lo - tol <= row.rhs,
            };
            if !ok {
                return Ok(FeasibilityReport {
                    consistent: false,
                    base_feasible: true,
                    accepted: idx,
                    violation: Some(FeasibilityViolation {
                        index: idx,
                        label: row.label.clone(),
                        sense: row.sense,
                        rhs: row.rhs,
                        interval: (lo, hi),
                    }),
                });
            }
            current.push(row.clone());
        }
        Ok(FeasibilityReport {
            consistent: true,
            base_feasible: true,
            accepted: extra.len(),
            violation: None,
        })
    }
}

/// Absolute tolerance, scaled by `1 + |rhs|`, for sequential feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// First row that cannot be satisfied together with the rows before it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityViolation {
    pub index: usize,
    pub label: String,
    pub sense: Sense,
    pub rhs: f64,
    /// Admissible range of the row's functional before it was added.
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub consistent: bool,
    pub base_feasible: bool,
    /// Number of extra rows accepted.
    pub accepted: usize,
    pub violation: Option<FeasibilityViolation>,
}

pub fn solve_bounds(grid: &JointGrid, payoff: &[f64], constraints: &ConstraintSet) -> Result<BoundResult> {
    BoundSolver::default().solve(grid, payoff, constraints)
}

pub fn functional_range(grid: &JointGrid, constraints: &ConstraintSet, f: &[f64]) -> Result<(f64, f64)> {
    BoundSolver::default().range(grid, constraints, f)
}

pub fn feasibility_check(
    grid: &JointGrid,
    base: &ConstraintSet,
    extra: &[LinearConstraint],
) -> Result<FeasibilityReport> {
    BoundSolver::default().feasibility_check(grid, base, extra)
}

/// Multiplier of an additional constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMultiplier {
    pub label: String,
    pub sense: Sense,
    /// `α` for equality rows, `β >= 0` for inequality rows.
    pub value: f64,
    /// Signed weight of the row's coefficient field in the hedge.
    pub position: f64,
}

/// Semi-static hedge recovered from LP duals.
///
/// The hedge value at a cell is
/// `Σ_axes u(x) + Σ_{k,j} δ_j^k(prefix) (x_{j+1}^k - x_j^k) + Σ_r position_r f_r(cell)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualStrategy {
    pub bound: Bound,
    /// Static payoff per axis on its atoms. The mass multiplier is folded into axis 0.
    pub u: Vec<Vec<f64>>,
    /// `delta[k][j][prefix]`.
    pub delta: Vec<Vec<Vec<f64>>>,
    pub multipliers: Vec<ConstraintMultiplier>,
    /// Cost of the hedge.
    pub price: f64,
    /// Largest pointwise failure of the hedge to dominate (upper) or be dominated by (lower) the payoff.
    pub domination_residual: f64,
    pub worst_cell: usize,
}

impl DualStrategy {
    /// Piecewise-linear interpolation of the static payoff on `axis`, extended linearly.
    pub fn static_payoff(&self, grid: &JointGrid, axis: usize, x: f64) -> f64 {
        let a = grid.atoms(axis);
        let u = &self.u[axis];
        if a.len() == 1 {
            return u[0];
        }
        let j = a.partition_point(|&v| v <= x).clamp(1, a.len() - 1);
        let t = (x - a[j - 1]) / (a[j] - a[j - 1]);
        u[j - 1] + t * (u[j] - u[j - 1])
    }

    /// Hedge value at every cell.
    pub fn hedge_values(&self, grid: &JointGrid, ms: &MarginalSystem, constraints: &ConstraintSet) -> Vec<f64> {
        let d = grid.assets();
        let mut h: Vec<f64> = (0..grid.num_cells())
            .into_par_iter()
            .map(|c| {
                let mut v = 0.0;
                for axis in 0..grid.num_axes() {
                    v += self.u[axis][grid.atom_index(c, axis)];
                }
                for k in 0..d {
                    for j in 0..grid.maturities() {
                        let p = grid.prefix_index(c, j * d);
                        let prev = if j == 0 {
                            ms.spot()[k]
                        } else {
                            grid.coordinate(c, grid.axis(j - 1, k))
                        };
                        v += self.delta[k][j][p] * (grid.coordinate(c, grid.axis(j, k)) - prev);
                    }
                }
                v
            })
            .collect();
        let extras = constraints.rows().iter().filter(|r| r.kind == RowKind::Extra);
        for (row, m) in extras.zip(&self.multipliers) {
            if m.position != 0.0 {
                for &(c, a) in &row.coeffs {
                    h[c] += m.position * a;
                }
            }
        }
        h
    }
}

/// Superhedging (upper) or subhedging (lower) tolerance on pointwise domination.
pub const DOMINATION_TOL: f64 = 1e-7;

/// Tolerance on `|hedge price - primal value|`.
pub const PRICE_MATCH_TOL: f64 = 1e-6;

/// Maps the multipliers of an optimal side onto static payoffs, trading functions and
/// constraint multipliers, and verifies domination and the price match.
pub fn extract_dual(
    grid: &JointGrid,
    ms: &MarginalSystem,
    constraints: &ConstraintSet,
    payoff: &[f64],
    side: &SideResult,
) -> Result<DualStrategy> {
    if side.status != LpStatus::Optimal {
        return Err(Error::DualVerification(format!("side is {}", side.status.label())));
    }
    if side.multipliers.len() != constraints.len() {
        return Err(Error::Unsupported("backend did not return dual multipliers".into()));
    }
    let d = grid.assets();
    let mut u: Vec<Vec<f64>> = (0..grid.num_axes()).map(|a| vec![0.0; grid.atoms(a).len()]).collect();
    let mut delta: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|_| {
            (0..grid.maturities())
                .map(|j| vec![0.0; grid.prefix_count(j * d)])
                .collect()
        })
        .collect();
    let mut multipliers = Vec::new();
    let mut mass = 0.0;
    for (row, &z) in constraints.rows().iter().zip(&side.multipliers) {
        match row.kind {
            RowKind::Marginal { axis, atom } => u[axis][atom] += z,
            RowKind::Mass => mass += z,
            RowKind::Martingale { asset, step, prefix } => delta[asset][step][prefix] += z,
            RowKind::Extra => multipliers.push(ConstraintMultiplier {
                label: row.label.clone(),
                sense: row.sense,
                value: match (row.sense, side.bound) {
                    (Sense::Le, Bound::Lower) => -z,
                    _ => z,
                },
                position: z,
            }),
        }
    }
    for v in &mut u[0] {
        *v += mass;
    }
    let price = side.dual_value;
    let mut strat = DualStrategy {
        bound: side.bound,
        u,
        delta,
        multipliers,
        price,
        domination_residual: 0.0,
        worst_cell: 0,
    };
    let h = strat.hedge_values(grid, ms, constraints);
    let (mut worst, mut cell) = (0.0f64, 0usize);
    for (c, (hv, cv)) in h.iter().zip(payoff).enumerate() {
        let gap = match side.bound {
            Bound::Upper => cv - hv,
            Bound::Lower => hv - cv,
        };
        if gap > worst {
            worst = gap;
            cell = c;
        }
    }
    strat.domination_residual = worst;
    strat.worst_cell = cell;
    if worst > DOMINATION_TOL {
        return Err(Error::DualVerification(format!(
            "hedge misses payoff by {worst:.3e} at cell {cell} {:?}",
            grid.point(cell)
        )));
    }
    if (price - side.value).abs() > PRICE_MATCH_TOL {
        return Err(Error::DualVerification(format!(
            "hedge price {price} differs from primal value {}",
            side.value
        )));
    }
    Ok(strat)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_asset_system() -> MarginalSystem {
        let u = |a: &[f64]| DiscreteMarginal::uniform(a.to_vec()).unwrap();
        MarginalSystem::new(
            vec![10.0, 10.0],
            vec![
                vec![u(&[8.0, 10.0, 12.0]), u(&[8.0, 10.0, 12.0])],
                vec![u(&[7.0, 9.0, 11.0, 13.0]), u(&[4.0, 7.0, 10.0, 13.0, 16.0])],
            ],
        )
        .unwrap()
    }

    fn c3(x: &[f64]) -> f64 {
        (x.iter().sum::<f64>() / 4.0 - 10.0).max(0.0)
    }

    #[test]
    fn grid_shape_and_index_map() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        assert_eq!(g.num_cells(), 180);
        for c in 0..g.num_cells() {
            assert_eq!(g.cell_index(&g.multi_index(c)), c);
        }
        assert_eq!(g.point(0), vec![8.0, 8.0, 7.0, 4.0]);
        assert_eq!(g.point(179), vec![12.0, 12.0, 13.0, 16.0]);
        assert_eq!(g.point(1), vec![8.0, 8.0, 7.0, 7.0]);
        let err = JointGrid::build_with_cap(&ms, 100).unwrap_err();
        assert_eq!(err, Error::GridTooLarge { cells: 180, cap: 100 });
    }

    #[test]
    fn single_marginal_grid() {
        let ms = MarginalSystem::new(
            vec![2.0],
            vec![vec![DiscreteMarginal::uniform(vec![1.0, 2.0, 3.0]).unwrap()]],
        )
        .unwrap();
        let g = JointGrid::build(&ms).unwrap();
        assert_eq!(g.num_cells(), 3);
        assert_eq!(martingale_constraints(&g, &ms).len(), 1);
    }

    #[test]
    fn row_counts() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let m = marginal_constraints(&g);
        assert_eq!(m.len(), 16);
        assert_eq!(m.iter().filter(|r| r.kind == RowKind::Mass).count(), 1);
        assert_eq!(martingale_constraints(&g, &ms).len(), 20);
    }

    #[test]
    fn system_rejects_bad_means_and_order() {
        let u = |a: &[f64]| DiscreteMarginal::uniform(a.to_vec()).unwrap();
        assert!(MarginalSystem::new(vec![10.0], vec![vec![u(&[8.0, 11.0])]]).is_err());
        let wide = u(&[7.0, 9.0, 11.0, 13.0]);
        let narrow = u(&[8.0, 10.0, 12.0]);
        assert!(MarginalSystem::new(vec![10.0], vec![vec![wide], vec![narrow]]).is_err());
    }

    #[test]
    fn c3_unconstrained_bounds() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let c = g.evaluate(c3);
        let cs = ConstraintSet::base(&g, &ms);
        let r = solve_bounds(&g, &c, &cs).unwrap();
        assert!(r.all_optimal());
        assert!((r.lower_value() - 0.25).abs() < 5e-5);
        assert!((r.upper_value() - 1.0111).abs() < 5e-5);
        for s in [r.lower.as_ref().unwrap(), r.upper.as_ref().unwrap()] {
            assert!((s.value - s.dual_value).abs() < 1e-9);
            assert!(cs.residual(&s.measure) < 1e-9);
            let strat = extract_dual(&g, &ms, &cs, &c, s).unwrap();
            assert!(strat.domination_residual <= DOMINATION_TOL);
        }
    }

    #[test]
    fn constant_payoff_has_degenerate_bounds() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let cs = ConstraintSet::base(&g, &ms);
        let r = solve_bounds(&g, &vec![1.0; g.num_cells()], &cs).unwrap();
        assert!((r.lower_value() - 1.0).abs() < 1e-12);
        assert!((r.upper_value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_payoff_prices_at_marginal_expectations() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let cs = ConstraintSet::base(&g, &ms);
        let f = |x: &[f64]| (x[0] - 9.0).max(0.0) + (x[3] - 10.0).max(0.0);
        let c = g.evaluate(f);
        let expected = ms.marginal(0, 0).call_price(9.0) + ms.marginal(1, 1).call_price(10.0);
        let r = solve_bounds(&g, &c, &cs).unwrap();
        assert!((r.lower_value() - expected).abs() < 1e-10);
        assert!((r.upper_value() - expected).abs() < 1e-10);
        let up = r.upper.as_ref().unwrap();
        let strat = extract_dual(&g, &ms, &cs, &c, up).unwrap();
        assert!((strat.price - expected).abs() < 1e-10);
    }

    #[test]
    fn static_payoff_interpolates() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let cs = ConstraintSet::base(&g, &ms);
        let c = g.evaluate(c3);
        let r = solve_bounds(&g, &c, &cs).unwrap();
        let s = extract_dual(&g, &ms, &cs, &c, r.upper.as_ref().unwrap()).unwrap();
        let mid = s.static_payoff(&g, 0, 9.0);
        assert!((mid - 0.5 * (s.u[0][0] + s.u[0][1])).abs() < 1e-12);
        assert_eq!(s.static_payoff(&g, 0, 10.0), s.u[0][1]);
    }

    #[test]
    fn range_and_feasibility_sequence() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let cs = ConstraintSet::base(&g, &ms);
        let f = g.evaluate(|x| x[0] * x[1]);
        let (lo, hi) = functional_range(&g, &cs, &f).unwrap();
        assert!(lo < 100.0 && 100.0 < hi);
        let inside = LinearConstraint::eq("xy", &f, 0.5 * (lo + hi)).unwrap();
        let rep = feasibility_check(&g, &cs, &[inside.clone()]).unwrap();
        assert!(rep.consistent);
        let outside = LinearConstraint::eq("xy-out", &f, hi + 0.1).unwrap();
        let rep = feasibility_check(&g, &cs, &[inside, outside]).unwrap();
        assert!(!rep.consistent);
        let v = rep.violation.unwrap();
        assert_eq!(v.index, 1);
        assert!(v.interval.1 < hi + 0.1);
        assert!(feasibility_check(&g, &cs, &[]).unwrap().consistent);
    }

    #[test]
    fn infeasible_extra_row_reports_status() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let f = g.evaluate(|x| x[0]);
        let cs = ConstraintSet::base(&g, &ms).with([LinearConstraint::eq("mean", &f, 11.0).unwrap()]);
        let r = solve_bounds(&g, &g.evaluate(c3), &cs).unwrap();
        assert!(r.any_infeasible());
        assert!(!r.all_optimal());
    }

    #[test]
    fn active_inequality_has_positive_beta() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let c = g.evaluate(c3);
        let base = ConstraintSet::base(&g, &ms);
        let un = solve_bounds(&g, &c, &base).unwrap();
        // Cap the payoff's own expectation below its unconstrained maximum.
        let cap = un.upper_value() - 0.1;
        let cs = base.with([LinearConstraint::le("cap", &c, cap).unwrap()]);
        let r = solve_bounds(&g, &c, &cs).unwrap();
        assert!((r.upper_value() - cap).abs() < 1e-9);
        let s = extract_dual(&g, &ms, &cs, &c, r.upper.as_ref().unwrap()).unwrap();
        assert!(s.multipliers[0].value > 0.0);
    }

    #[test]
    fn lp_dump_round_trips_row_count() {
        let ms = two_asset_system();
        let g = JointGrid::build(&ms).unwrap();
        let cs = ConstraintSet::base(&g, &ms);
        let lp = to_lp(&g, &g.evaluate(c3), &cs, Bound::Upper);
        let text = lp.to_lp_format(false);
        assert_eq!(text.matches(" r").count(), cs.len());
    }
}
