//! Two-phase revised simplex with a dense explicit basis inverse.
//!
//! Columns are stored sparsely. The basis inverse is updated by elementary row
//! operations and rebuilt by Gauss–Jordan elimination at a fixed interval.
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver falls
//! back to Bland's rule until the objective moves again.

use super::{LpBackend, LpProblem, LpSolution, LpStatus, Sense};
use crate::error::{Error, Result};

/// Tolerances and limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    /// Reduced-cost optimality tolerance.
    pub optimality_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Phase-one objective above which the problem is declared infeasible.
    pub feasibility_tol: f64,
    /// Relative row residual accepted at the end.
    pub residual_tol: f64,
    pub refactor_every: usize,
    pub degenerate_switch: usize,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            feasibility_tol: 1e-9,
            residual_tol: 1e-9,
            refactor_every: 64,
            degenerate_switch: 50,
            max_iterations: 2_000_000,
        }
    }
}

/// The bundled backend.
#[derive(Clone, Debug, Default)]
pub struct RevisedSimplex {
    pub options: SimplexOptions,
}

impl RevisedSimplex {
    pub fn new(options: SimplexOptions) -> Self {
        Self { options }
    }
}

impl LpBackend for RevisedSimplex {
    fn name(&self) -> &str {
        "revised-simplex"
    }

    fn solve(&self, problem: &LpProblem) -> Result<LpSolution> {
        Tableau::new(problem, self.options)?.run()
    }
}

struct Tableau<'a> {
    opts: SimplexOptions,
    problem: &'a LpProblem,
    m: usize,
    n_struct: usize,
    art_start: usize,
    n_total: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    b: Vec<f64>,
    flipped: Vec<bool>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Continue,
}

impl<'a> Tableau<'a> {
    fn new(problem: &'a LpProblem, opts: SimplexOptions) -> Result<Self> {
        let m = problem.rows.len();
        let n = problem.num_vars;
        if problem.objective.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: problem.objective.len(),
            });
        }
        let mut flipped = vec![false; m];
        let mut b = vec![0.0; m];
        for (i, row) in problem.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidParameter(format!("row {i} has non-finite rhs")));
            }
            for &(j, v) in &row.coeffs {
                if j >= n || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("row {i} has invalid coefficient")));
                }
            }
            flipped[i] = row.rhs < 0.0;
            b[i] = row.rhs.abs();
        }
        // Structural columns.
        let mut counts = vec![0usize; n];
        for row in &problem.rows {
            for &(j, v) in &row.coeffs {
                if v != 0.0 {
                    counts[j] += 1;
                }
            }
        }
        let slack_rows: Vec<usize> = (0..m).filter(|&i| problem.rows[i].sense == Sense::Le).collect();
        let n_slack = slack_rows.len();
        let art_start = n + n_slack;
        let n_total = art_start + m;
        let mut col_start = vec![0usize; n_total + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        for k in 0..n_slack + m {
            col_start[n + k + 1] = col_start[n + k] + 1;
        }
        let nnz = col_start[n_total];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = col_start.clone();
        for (i, row) in problem.rows.iter().enumerate() {
            let s = if flipped[i] { -1.0 } else { 1.0 };
            for &(j, v) in &row.coeffs {
                if v != 0.0 {
                    col_row[fill[j]] = i;
                    col_val[fill[j]] = s * v;
                    fill[j] += 1;
                }
            }
        }
        let mut basis = vec![usize::MAX; m];
        for (k, &i) in slack_rows.iter().enumerate() {
            let c = n + k;
            col_row[col_start[c]] = i;
            col_val[col_start[c]] = if flipped[i] { -1.0 } else { 1.0 };
            if !flipped[i] {
                basis[i] = c;
            }
        }
        for i in 0..m {
            let c = art_start + i;
            col_row[col_start[c]] = i;
            col_val[col_start[c]] = 1.0;
            if basis[i] == usize::MAX {
                basis[i] = c;
            }
        }
        let mut is_basic = vec![false; n_total];
        for &c in &basis {
            is_basic[c] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Ok(Self {
            opts,
            problem,
            m,
            n_struct: n,
            art_start,
            n_total,
            col_start,
            col_row,
            col_val,
            xb: b.clone(),
            b,
            flipped,
            basis,
            is_basic,
            binv,
            iterations: 0,
            since_refactor: 0,
        })
    }

    fn cost(&self, phase: u8, j: usize) -> f64 {
        if phase == 1 {
            if j >= self.art_start {
                1.0
            } else {
                0.0
            }
        } else if j < self.n_struct {
            self.problem.objective[j]
        } else {
            0.0
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_start[j]..self.col_start[j + 1];
        self.col_row[r.clone()]
            .iter()
            .copied()
            .zip(self.col_val[r].iter().copied())
    }

    fn duals(&self, phase: u8) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &c) in self.basis.iter().enumerate() {
            let cb = self.cost(phase, c);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, rk) in y.iter_mut().zip(row) {
                    *yk += cb * rk;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, phase: u8, y: &[f64], j: usize) -> f64 {
        self.cost(phase, j) - self.column(j).map(|(r, v)| y[r] * v).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (r, v) in self.column(j) {
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += v * self.binv[i * m + r];
            }
        }
        alpha
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (k, &c) in self.basis.iter().enumerate() {
            for (r, v) in self.column(c) {
                mat[r * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = mat[col * m + col].abs();
            for r in col + 1..m {
                let v = mat[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-13 {
                return Err(Error::Numerical("singular basis during refactorization".into()));
            }
            if piv != col {
                for k in 0..m {
                    mat.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let p = mat[col * m + col];
            for k in 0..m {
                mat[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = mat[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        mat[r * m + k] -= f * mat[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        // `inv` is the inverse of B with rows indexed by basis position.
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        let theta = self.xb[r] / ar;
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (prow, rest) = tail.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= ar;
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                &mut rest[(i - r - 1) * m..(i - r) * m]
            };
            for (x, p) in row.iter_mut().zip(prow.iter()) {
                *x -= a * p;
            }
            self.xb[i] -= a * theta;
        }
        self.xb[r] = theta;
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    fn iterate(&mut self, phase: u8, bland: bool) -> Result<(Step, bool)> {
        let limit = if phase == 1 { self.n_total } else { self.art_start };
        let y = self.duals(phase);
        let tol = self.opts.optimality_tol;
        let mut entering = None;
        let mut best = -tol;
        for j in 0..limit {
            if self.is_basic[j] {
                continue;
            }
            let d = self.reduced_cost(phase, &y, j);
            if bland {
                if d < -tol {
                    entering = Some(j);
                    break;
                }
            } else if d < best {
                best = d;
                entering = Some(j);
            }
        }
        let Some(q) = entering else {
            return Ok((Step::Optimal, false));
        };
        let alpha = self.ftran(q);
        let ptol = self.opts.pivot_tol;
        let mut ratio = f64::INFINITY;
        for (i, &a) in alpha.iter().enumerate() {
            if a > ptol {
                ratio = ratio.min(self.xb[i].max(0.0) / a);
            }
        }
        if ratio == f64::INFINITY {
            return Ok((Step::Unbounded, false));
        }
        let slack = 1e-12 * (1.0 + ratio);
        let mut leave: Option<usize> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a > ptol && self.xb[i].max(0.0) / a <= ratio + slack {
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let better = if bland {
                            self.basis[i] < self.basis[l]
                        } else {
                            a > alpha[l]
                        };
                        Some(if better { i } else { l })
                    }
                };
            }
        }
        let r = leave.expect("ratio test found a row");
        let degenerate = ratio <= 1e-12;
        self.pivot(r, q, &alpha);
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok((Step::Continue, degenerate))
    }

    fn phase(&mut self, phase: u8) -> Result<Step> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Ok(Step::Continue);
            }
            let bland = degenerate_run >= self.opts.degenerate_switch;
            let (step, degenerate) = self.iterate(phase, bland)?;
            match step {
                Step::Continue => {
                    if degenerate {
                        degenerate_run += 1;
                    } else {
                        degenerate_run = 0;
                    }
                }
                other => return Ok(other),
            }
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural or slack
    /// column can replace them. Artificials on redundant rows stay basic at zero.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.art_start {
                if self.is_basic[j] {
                    continue;
                }
                let v: f64 = self.column(j).map(|(i, a)| row[i] * a).sum();
                if v.abs() > 1e-7 && best.is_none_or(|(_, bv)| v.abs() > bv.abs() * 10.0) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                self.pivot(r, q, &alpha);
            }
        }
        self.refactor()
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for (i, &c) in self.basis.iter().enumerate() {
            if c < self.n_struct {
                x[c] = self.xb[i].max(0.0);
            }
        }
        x
    }

    fn finish(&self, status: LpStatus, infeasibility: f64) -> LpSolution {
        let x = self.primal();
        let mut y = self.duals(2);
        for (yi, &f) in y.iter_mut().zip(&self.flipped) {
            if f {
                *yi = -*yi;
            }
        }
        let act = self.problem.activities(&x);
        let mut resid = 0.0f64;
        for (row, a) in self.problem.rows.iter().zip(&act) {
            let r = match row.sense {
                Sense::Eq => (a - row.rhs).abs(),
                Sense::Le => (a - row.rhs).max(0.0),
            };
            resid = resid.max(r / (1.0 + row.rhs.abs()));
        }
        let objective = x.iter().zip(&self.problem.objective).map(|(a, b)| a * b).sum();
        let status = if status == LpStatus::Optimal && resid > self.opts.residual_tol {
            LpStatus::ToleranceFailure
        } else {
            status
        };
        LpSolution {
            status,
            objective,
            x,
            duals: y,
            iterations: self.iterations,
            primal_residual: resid,
            infeasibility,
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        if self.m == 0 {
            if self.problem.objective.iter().any(|&c| c < 0.0) {
                return Ok(self.finish(LpStatus::Unbounded, 0.0));
            }
            return Ok(self.finish(LpStatus::Optimal, 0.0));
        }
        let needs_phase1 = self.basis.iter().any(|&c| c >= self.art_start);
        if needs_phase1 {
            match self.phase(1)? {
                Step::Continue => return Ok(self.finish(LpStatus::ToleranceFailure, f64::NAN)),
                Step::Unbounded => return Err(Error::Numerical("phase one reported unbounded".into())),
                Step::Optimal => {}
            }
            self.refactor()?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(c, _)| **c >= self.art_start)
                .map(|(_, v)| v.max(0.0))
                .sum();
            if infeas > self.opts.feasibility_tol {
                return Ok(self.finish(LpStatus::Infeasible, infeas));
            }
            self.drive_out_artificials()?;
        }
        match self.phase(2)? {
            Step::Optimal => {}
            Step::Unbounded => return Ok(self.finish(LpStatus::Unbounded, 0.0)),
            Step::Continue => return Ok(self.finish(LpStatus::ToleranceFailure, 0.0)),
        }
        self.refactor()?;
        // One more pricing pass on the fresh factorization.
        if let Step::Continue = self.phase(2)? {
            return Ok(self.finish(LpStatus::ToleranceFailure, 0.0));
        }
        Ok(self.finish(LpStatus::Optimal, 0.0))
    }
}
