//! Linear programs over non-negative variables and a bundled simplex backend.

mod simplex;

use std::collections::HashMap;
use std::fmt::Write as _;

pub use simplex::{RevisedSimplex, SimplexOptions};

use crate::error::Result;

/// Row sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    /// `a·x = b`
    Eq,
    /// `a·x <= b`
    Le,
}

/// One constraint row with sparse coefficients `(column, value)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c·x` subject to rows and `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
}

/// Termination status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Converged but residuals exceed the tolerance, or the iteration limit was hit.
    ToleranceFailure,
}

impl LpStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::Unbounded => "unbounded",
            Self::ToleranceFailure => "tolerance-failure",
        }
    }
}

/// Primal and dual solution of a minimization problem.
///
/// Duals satisfy `A^T y <= c` at optimality, with `y_i <= 0` on `Le` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Largest absolute row residual of the primal solution.
    pub primal_residual: f64,
    /// Phase-one infeasibility (sum of artificials) when infeasible.
    pub infeasibility: f64,
}

/// An LP solver.
pub trait LpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &LpProblem) -> Result<LpSolution>;
    /// Whether [`LpSolution::duals`] is populated.
    fn provides_duals(&self) -> bool {
        true
    }
}

impl LpProblem {
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Self {
        Self {
            num_vars,
            objective,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LpRow { coeffs, sense, rhs });
    }

    /// Removes rows that are exact duplicates of an earlier row. Returns, for each
    /// original row, the index of the row that represents it in the reduced problem.
    pub fn dedup_rows(&self) -> (LpProblem, Vec<usize>) {
        let mut seen: HashMap<(Vec<(usize, u64)>, Sense, u64), usize> = HashMap::new();
        let mut out = LpProblem::new(self.num_vars, self.objective.clone());
        let mut map = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut key: Vec<(usize, u64)> = row
                .coeffs
                .iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|&(j, v)| (j, (v + 0.0).to_bits()))
                .collect();
            key.sort_unstable();
            let k = (key, row.sense, (row.rhs + 0.0).to_bits());
            if let Some(&idx) = seen.get(&k) {
                map.push(idx);
            } else {
                let idx = out.rows.len();
                seen.insert(k, idx);
                out.rows.push(row.clone());
                map.push(idx);
            }
        }
        (out, map)
    }

    /// Row activities `a_i·x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Text dump in the CPLEX LP format.
    pub fn to_lp_format(&self, maximize: bool) -> String {
        let mut s = String::new();
        s.push_str(if maximize { "Maximize\n obj:" } else { "Minimize\n obj:" });
        let mut any = false;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(s, " {} {} x{}", if c < 0.0 { '-' } else { '+' }, c.abs(), j);
                any = true;
            }
        }
        if !any {
            s.push_str(" 0 x0");
        }
        s.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(s, " r{i}:");
            if row.coeffs.is_empty() {
                s.push_str(" 0 x0");
            }
            for &(j, v) in &row.coeffs {
                let _ = write!(s, " {} {} x{}", if v < 0.0 { '-' } else { '+' }, v.abs(), j);
            }
            let op = match row.sense {
                Sense::Eq => "=",
                Sense::Le => "<=",
            };
            let _ = writeln!(s, " {op} {}", row.rhs);
        }
        s.push_str("Bounds\n");
        for j in 0..self.num_vars {
            let _ = writeln!(s, " x{j} >= 0");
        }
        s.push_str("End\n");
        s
    }
}
