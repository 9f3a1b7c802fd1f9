#![allow(dead_code)]

use depbounds::constraints::{constant_correlation_constraints, correlation_lb_constraints};
use depbounds::lp::Sense;
use depbounds::marginal::DiscreteMarginal;
use depbounds::mot::{ConstraintSet, JointGrid, LinearConstraint, MarginalSystem};

pub fn uniform(atoms: &[f64]) -> DiscreteMarginal {
    DiscreteMarginal::uniform(atoms.to_vec()).unwrap()
}

/// Two assets, two maturities, uniform marginals with 180 joint cells.
pub fn two_asset_system() -> MarginalSystem {
    MarginalSystem::new(
        vec![10.0, 10.0],
        vec![
            vec![uniform(&[8.0, 10.0, 12.0]), uniform(&[8.0, 10.0, 12.0])],
            vec![uniform(&[7.0, 9.0, 11.0, 13.0]), uniform(&[4.0, 7.0, 10.0, 13.0, 16.0])],
        ],
    )
    .unwrap()
}

pub const TWO_ASSET_SCENARIOS: [&str; 6] = ["none", "const", "lb-0.5", "lb0.5", "const+lb-0.5", "const+lb0.5"];

/// Extra rows of one dependence scenario on the two-maturity system.
pub fn two_asset_rows(grid: &JointGrid, ms: &MarginalSystem, scenario: &str) -> Vec<LinearConstraint> {
    let cc = || constant_correlation_constraints(grid, ms).unwrap();
    let lb = |b: &[Option<f64>]| correlation_lb_constraints(grid, ms, b).unwrap();
    match scenario {
        "none" => Vec::new(),
        "const" => cc(),
        "lb-0.5" => lb(&[Some(-0.5)]),
        "lb0.5" => lb(&[Some(0.5)]),
        "const+lb-0.5" => [cc(), lb(&[Some(-0.5), Some(-0.5)])].concat(),
        "const+lb0.5" => [cc(), lb(&[Some(0.5), Some(0.5)])].concat(),
        _ => panic!("unknown scenario {scenario}"),
    }
}

/// Minimum and maximum of `payoff · q` over the polytope `{q >= 0 : rows}`, found by
/// visiting every basic solution of the equality form with slacks.
pub fn vertex_enumeration(cells: usize, payoff: &[f64], cs: &ConstraintSet) -> Option<(f64, f64)> {
    let rows = cs.rows();
    let slacks = rows.iter().filter(|r| r.sense == Sense::Le).count();
    let n = cells + slacks;
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    let mut s = 0;
    for r in rows {
        let mut row = r.dense(cells);
        row.resize(n + 1, 0.0);
        if r.sense == Sense::Le {
            row[cells + s] = 1.0;
            s += 1;
        }
        row[n] = r.rhs;
        a.push(row);
    }
    // Row echelon form of [A | b] to drop dependent rows.
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..a.len()).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())) else {
            break;
        };
        if a[p][col].abs() < 1e-10 {
            continue;
        }
        a.swap(rank, p);
        let piv = a[rank].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != rank {
                let f = row[col] / piv[col];
                if f != 0.0 {
                    for (x, y) in row.iter_mut().zip(&piv) {
                        *x -= f * y;
                    }
                }
            }
        }
        rank += 1;
    }
    if a[rank..].iter().any(|r| r[n].abs() > 1e-9) {
        return None;
    }
    a.truncate(rank);
    let mut best: Option<(f64, f64)> = None;
    let mut subset: Vec<usize> = (0..rank).collect();
    loop {
        if let Some(x) = solve_square(&a, &subset, n) {
            if x.iter().all(|v| *v >= -1e-10) {
                let v: f64 = subset
                    .iter()
                    .zip(&x)
                    .filter(|(c, _)| **c < cells)
                    .map(|(c, xv)| payoff[*c] * xv)
                    .sum();
                best = Some(match best {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        // Next combination in lexicographic order.
        let mut i = rank;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < n - rank + i {
                subset[i] += 1;
                for j in i + 1..rank {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(a: &[Vec<f64>], cols: &[usize], n: usize) -> Option<Vec<f64>> {
    let r = cols.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .map(|row| cols.iter().map(|&c| row[c]).chain([row[n]]).collect())
        .collect();
    for k in 0..r {
        let p = (k..r).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[p][k].abs() < 1e-10 {
            return None;
        }
        m.swap(k, p);
        for i in k + 1..r {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=r {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; r];
    for k in (0..r).rev() {
        let s: f64 = (k + 1..r).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][r] - s) / m[k][k];
    }
    Some(x)
}
