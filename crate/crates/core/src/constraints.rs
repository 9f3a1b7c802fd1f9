//! Builders turning dependence information into linear rows on the joint grid.

use rayon::prelude::*;

use crate::copula::{QuasiCopula, SurvivalView};
use crate::error::{Error, Result};
use crate::lp::Sense;
use crate::marginal::{DiscreteMarginal, UnivariateLaw};
use crate::mot::{Bound, JointGrid, LinearConstraint, MarginalSystem};
use crate::payoff::Coord;

/// Slack used when discarding rows implied by the marginals.
const VACUITY_TOL: f64 = 1e-12;

fn axis_of(grid: &JointGrid, c: Coord) -> Result<usize> {
    if c.maturity >= grid.maturities() || c.asset >= grid.assets() {
        return Err(Error::InvalidParameter(format!("unresolved reference {c}")));
    }
    Ok(grid.axis(c.maturity, c.asset))
}

/// `(x y - S0^k S0^l) / (σ σ)` at every cell, with `σ^2 = E[X^2] - S0^2`.
pub fn correlation_field(grid: &JointGrid, ms: &MarginalSystem, a: Coord, b: Coord) -> Result<Vec<f64>> {
    let (ax, bx) = (axis_of(grid, a)?, axis_of(grid, b)?);
    let (sa, sb) = (ms.spot()[a.asset], ms.spot()[b.asset]);
    let va = ms.marginal(a.maturity, a.asset).second_moment() - sa * sa;
    let vb = ms.marginal(b.maturity, b.asset).second_moment() - sb * sb;
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::InvalidMarginal(format!("zero variance on {a} or {b}")));
    }
    let scale = (va * vb).sqrt();
    Ok(grid.evaluate(|x| (x[ax] * x[bx] - sa * sb) / scale))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("correlation {rho} outside [-1, 1]")));
    }
    Ok(())
}

/// Pins the correlation of `a` and `b` to `rho`.
pub fn correlation_eq_constraint(
    grid: &JointGrid,
    ms: &MarginalSystem,
    a: Coord,
    b: Coord,
    rho: f64,
) -> Result<LinearConstraint> {
    check_rho(rho)?;
    let f = correlation_field(grid, ms, a, b)?;
    LinearConstraint::eq(format!("corr[{a},{b}]={rho}"), &f, rho)
}

/// Equal correlation of the two assets at every pair of maturities `i < j`.
pub fn constant_correlation_constraints(grid: &JointGrid, ms: &MarginalSystem) -> Result<Vec<LinearConstraint>> {
    if grid.assets() != 2 {
        return Err(Error::Unsupported(
            "constant correlation needs exactly two assets".into(),
        ));
    }
    let fields: Vec<Vec<f64>> = (0..grid.maturities())
        .map(|i| correlation_field(grid, ms, Coord::new(i, 0), Coord::new(i, 1)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let diff: Vec<f64> = fields[i].iter().zip(&fields[j]).map(|(a, b)| a - b).collect();
            rows.push(LinearConstraint::eq(
                format!("corr-const[t{},t{}]", i + 1, j + 1),
                &diff,
                0.0,
            )?);
        }
    }
    Ok(rows)
}

/// Correlation of the two assets at maturity `i` bounded below by `rho_lb[i]` where given.
pub fn correlation_lb_constraints(
    grid: &JointGrid,
    ms: &MarginalSystem,
    rho_lb: &[Option<f64>],
) -> Result<Vec<LinearConstraint>> {
    if grid.assets() != 2 {
        return Err(Error::Unsupported("correlation bounds need exactly two assets".into()));
    }
    if rho_lb.len() > grid.maturities() {
        return Err(Error::DimensionMismatch {
            expected: grid.maturities(),
            got: rho_lb.len(),
        });
    }
    let mut rows = Vec::new();
    for (i, lb) in rho_lb.iter().enumerate() {
        if let Some(r) = *lb {
            check_rho(r)?;
            let f = correlation_field(grid, ms, Coord::new(i, 0), Coord::new(i, 1))?;
            rows.push(LinearConstraint::ge(format!("corr-lb[t{}]>={r}", i + 1), &f, r)?);
        }
    }
    Ok(rows)
}

/// Fixes the price of `(a1 x + a2 y - K)_+`.
pub fn basket_price_constraint(
    grid: &JointGrid,
    a: Coord,
    b: Coord,
    a1: f64,
    a2: f64,
    strike: f64,
    price: f64,
) -> Result<LinearConstraint> {
    if a1 * a2 == 0.0 {
        return Err(Error::InvalidParameter("basket weights must be non-zero".into()));
    }
    let (ax, bx) = (axis_of(grid, a)?, axis_of(grid, b)?);
    let f = grid.evaluate(|x| (a1 * x[ax] + a2 * x[bx] - strike).max(0.0));
    LinearConstraint::eq(format!("basket[{a1}*{a},{a2}*{b},K={strike}]"), &f, price)
}

/// Sorted distinct values of `a1 x + a2 y` over the atoms of two marginals.
pub fn achievable_sums(m1: &DiscreteMarginal, m2: &DiscreteMarginal, a1: f64, a2: f64) -> Vec<f64> {
    let mut v: Vec<f64> = m1
        .atoms()
        .iter()
        .flat_map(|&x| m2.atoms().iter().map(move |&y| a1 * x + a2 * y))
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    v
}

/// Correlation implied by a full strike curve of `(a1 X + a2 Y - K)_+`.
///
/// The distribution of the basket is read off the slopes of the curve, which must
/// contain every achievable basket value and one strike beyond the largest.
pub fn implied_correlation_from_basket_curve(
    m1: &DiscreteMarginal,
    m2: &DiscreteMarginal,
    a1: f64,
    a2: f64,
    curve: &[(f64, f64)],
) -> Result<f64> {
    if a1 * a2 == 0.0 {
        return Err(Error::InvalidParameter("basket weights must be non-zero".into()));
    }
    if curve.len() < 2 || curve.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidParameter(
            "strikes must be strictly increasing, at least two".into(),
        ));
    }
    let sums = achievable_sums(m1, m2, a1, a2);
    let strikes: Vec<f64> = curve.iter().map(|p| p.0).collect();
    for s in &sums {
        let hit = strikes.iter().any(|k| (k - s).abs() <= 1e-9 * (1.0 + s.abs()));
        if !hit {
            return Err(Error::InvalidParameter(format!(
                "strike coverage misses basket value {s}"
            )));
        }
    }
    if *strikes.last().unwrap() <= *sums.last().unwrap() + 1e-12 {
        return Err(Error::InvalidParameter(
            "strike coverage must extend beyond the largest basket value".into(),
        ));
    }
    let slopes: Vec<f64> = curve
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let tol = 1e-9;
    // Mass at each strike: jump of the slope, with slope -1 to the left of the support.
    let mut mass = Vec::with_capacity(curve.len());
    let mut prev = -1.0;
    for s in slopes.iter().chain(std::iter::once(&0.0)) {
        let p = s - prev;
        if p < -tol {
            return Err(Error::InvalidParameter("basket curve is not convex".into()));
        }
        mass.push(p.max(0.0));
        prev = *s;
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-8 || slopes.last().unwrap().abs() > tol {
        return Err(Error::InvalidParameter(
            "strike coverage does not span the basket distribution".into(),
        ));
    }
    let mean: f64 = strikes.iter().zip(&mass).map(|(k, p)| k * p).sum();
    let expected_mean = a1 * m1.mean() + a2 * m2.mean();
    if (mean - expected_mean).abs() > 1e-8 * (1.0 + expected_mean.abs()) {
        return Err(Error::InvalidParameter(format!(
            "basket curve mean {mean} inconsistent with marginal means {expected_mean}"
        )));
    }
    let ez2: f64 = strikes.iter().zip(&mass).map(|(k, p)| k * k * p).sum();
    let exy = (ez2 - a1 * a1 * m1.second_moment() - a2 * a2 * m2.second_moment()) / (2.0 * a1 * a2);
    let (s1, s2) = (m1.mean(), m2.mean());
    let den = ((m1.second_moment() - s1 * s1) * (m2.second_moment() - s2 * s2)).sqrt();
    if den <= 0.0 {
        return Err(Error::InvalidMarginal("zero variance".into()));
    }
    Ok((exy - s1 * s2) / den)
}

/// Survival value `p + 1 - F_k(K') - F_l(K')` pinned by the price `p` of `1{max(S^k, S^l) <= K'}`.
pub fn digital_to_survival_value(p: f64, fk: f64, fl: f64) -> Result<f64> {
    for (name, v) in [("price", p), ("F_k", fk), ("F_l", fl)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let s = p + 1.0 - fk - fl;
    let (u, v) = (1.0 - fk, 1.0 - fl);
    let (lo, hi) = ((u + v - 1.0).max(0.0), u.min(v));
    if s < lo - 1e-12 || s > hi + 1e-12 {
        return Err(Error::InconsistentPrescription(format!(
            "survival value {s} outside [{lo}, {hi}] for digital price {p}"
        )));
    }
    Ok(s)
}

/// Lower or upper orthant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orthant {
    /// Events `{S <= x}` compared with copula values.
    Lower,
    /// Events `{S > x}` compared with survival values.
    Upper,
}

/// `cum[t]` is the probability of the first `t` atoms on the axis.
fn cumulative(grid: &JointGrid, axis: usize) -> Vec<f64> {
    let w = grid.weights(axis);
    let mut c = Vec::with_capacity(w.len() + 1);
    c.push(0.0);
    let mut s = 0.0;
    for x in w {
        s += x;
        c.push(s);
    }
    *c.last_mut().unwrap() = 1.0;
    c
}

/// Cells whose atom indices lie in `lo[a]..hi[a]` on every axis, in increasing order.
fn box_cells(grid: &JointGrid, lo: &[usize], hi: &[usize]) -> Vec<usize> {
    if lo.iter().zip(hi).any(|(a, b)| a >= b) {
        return Vec::new();
    }
    let mut idx = lo.to_vec();
    let mut out = Vec::new();
    loop {
        out.push(grid.cell_index(&idx));
        let mut a = idx.len();
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < hi[a] {
                break;
            }
            idx[a] = lo[a];
        }
    }
}

fn for_each_multi(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; sizes.len()];
    loop {
        f(&idx);
        let mut a = sizes.len();
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < sizes[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Orthant rows at the atom lattice for one side of a dependence box.
///
/// For `Orthant::Lower` a point is a vector of thresholds `t` (number of atoms at or below
/// `x` on each axis) with event `{S <= x}`. For `Orthant::Upper` the event is `{S > x}`
/// with `t` atoms excluded. The bound function receives the distribution-function
/// values `F(x)`. Rows implied by the marginals or by a neighbouring row are dropped.
pub fn orthant_rows(
    grid: &JointGrid,
    orthant: Orthant,
    side: Bound,
    bound: &(dyn Fn(&[f64]) -> f64 + Sync),
    label: &str,
) -> Vec<LinearConstraint> {
    let m = grid.num_axes();
    let sizes: Vec<usize> = (0..m).map(|a| grid.atoms(a).len()).collect();
    let cums: Vec<Vec<f64>> = (0..m).map(|a| cumulative(grid, a)).collect();
    // Thresholds per axis: Lower uses 1..=size, Upper uses 0..size.
    let offset = match orthant {
        Orthant::Lower => 1,
        Orthant::Upper => 0,
    };
    let mut points = Vec::new();
    for_each_multi(&sizes, |idx| {
        points.push(idx.iter().map(|j| j + offset).collect::<Vec<usize>>())
    });
    let rhs: Vec<f64> = points
        .par_iter()
        .map(|t| {
            let u: Vec<f64> = t.iter().enumerate().map(|(a, &ta)| cums[a][ta]).collect();
            bound(&u)
        })
        .collect();
    let point_id = |t: &[usize]| -> usize {
        t.iter()
            .enumerate()
            .fold(0, |acc, (a, &ta)| acc * sizes[a] + (ta - offset))
    };
    let mut rows = Vec::new();
    for (pid, t) in points.iter().enumerate() {
        let r = rhs[pid];
        let probs: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(a, &ta)| match orthant {
                Orthant::Lower => cums[a][ta],
                Orthant::Upper => 1.0 - cums[a][ta],
            })
            .collect();
        let vacuous = match side {
            Bound::Upper => r >= probs.iter().cloned().fold(f64::INFINITY, f64::min) - VACUITY_TOL,
            Bound::Lower => r <= (probs.iter().sum::<f64>() - (m as f64 - 1.0)).max(0.0) + VACUITY_TOL,
        };
        if vacuous {
            continue;
        }
        // Upper rows are implied by a larger event with a smaller bound; lower rows by a
        // smaller event with a larger bound.
        let grow = matches!(
            (orthant, side),
            (Orthant::Lower, Bound::Upper) | (Orthant::Upper, Bound::Lower)
        );
        let mut dominated = false;
        let mut nb = t.clone();
        for a in 0..m {
            let lo_t = offset;
            let hi_t = sizes[a] - 1 + offset;
            let moved = if grow { t[a] < hi_t } else { t[a] > lo_t };
            if !moved {
                continue;
            }
            nb[a] = if grow { t[a] + 1 } else { t[a] - 1 };
            let rn = rhs[point_id(&nb)];
            nb[a] = t[a];
            let implies = match side {
                Bound::Upper => rn <= r,
                Bound::Lower => rn >= r,
            };
            if implies {
                dominated = true;
                break;
            }
        }
        if dominated {
            continue;
        }
        let (lo, hi): (Vec<usize>, Vec<usize>) = match orthant {
            Orthant::Lower => (vec![0; m], t.clone()),
            Orthant::Upper => (t.clone(), sizes.clone()),
        };
        let cells = box_cells(grid, &lo, &hi);
        let (coef, rhs_row) = match side {
            Bound::Upper => (1.0, r),
            Bound::Lower => (-1.0, -r),
        };
        rows.push(LinearConstraint {
            label: format!("{label}#{pid}"),
            sense: Sense::Le,
            coeffs: cells.into_iter().map(|c| (c, coef)).collect(),
            rhs: rhs_row,
            kind: crate::mot::RowKind::Extra,
        });
    }
    rows
}

/// Orthant rows at arbitrary evaluation points, with the strict and weak events of the
/// lattice characterization: upper rows use `{S < x}` (lower orthant) or `{S > x}` (upper
/// orthant), lower rows use `{S <= x}` or `{S >= x}`. `points[a]` lists the values on axis `a`.
/// No rows are filtered.
pub fn orthant_rows_at(
    grid: &JointGrid,
    ms: &MarginalSystem,
    orthant: Orthant,
    side: Bound,
    bound: &(dyn Fn(&[f64]) -> f64 + Sync),
    points: &[Vec<f64>],
) -> Result<Vec<LinearConstraint>> {
    let m = grid.num_axes();
    if points.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: points.len(),
        });
    }
    let d = grid.assets();
    let laws: Vec<&DiscreteMarginal> = (0..m).map(|a| ms.marginal(a / d, a % d)).collect();
    let sizes: Vec<usize> = points.iter().map(Vec::len).collect();
    let mut combos = Vec::new();
    for_each_multi(&sizes, |idx| combos.push(idx.to_vec()));
    combos
        .par_iter()
        .enumerate()
        .map(|(pid, idx)| {
            let x: Vec<f64> = idx.iter().enumerate().map(|(a, &j)| points[a][j]).collect();
            let u: Vec<f64> = x.iter().zip(&laws).map(|(&xa, law)| law.cdf(xa)).collect();
            let r = bound(&u);
            let event = |p: &[f64]| -> bool {
                p.iter().zip(&x).all(|(&s, &xa)| match (orthant, side) {
                    (Orthant::Lower, Bound::Upper) => s < xa,
                    (Orthant::Lower, Bound::Lower) => s <= xa,
                    (Orthant::Upper, Bound::Upper) => s > xa,
                    (Orthant::Upper, Bound::Lower) => s >= xa,
                })
            };
            let ind = grid.evaluate(|p| if event(p) { 1.0 } else { 0.0 });
            match side {
                Bound::Upper => LinearConstraint::le(format!("orthant@{pid}"), &ind, r),
                Bound::Lower => LinearConstraint::ge(format!("orthant@{pid}"), &ind, r),
            }
        })
        .collect()
}

fn check_dim(grid: &JointGrid, dim: usize) -> Result<()> {
    if dim != grid.num_axes() {
        return Err(Error::DimensionMismatch {
            expected: grid.num_axes(),
            got: dim,
        });
    }
    Ok(())
}

/// Rows restricting the copula of the grid measure to `lower <= C <= upper` in the
/// given orthant order. In the upper orthant the survival functions of the bounds are used.
pub fn copula_box_constraints(
    grid: &JointGrid,
    lower: &QuasiCopula,
    upper: &QuasiCopula,
    orthant: Orthant,
) -> Result<Vec<LinearConstraint>> {
    check_dim(grid, lower.dim())?;
    check_dim(grid, upper.dim())?;
    let (lo_fn, hi_fn): (Box<dyn Fn(&[f64]) -> f64 + Sync>, Box<dyn Fn(&[f64]) -> f64 + Sync>) = match orthant {
        Orthant::Lower => (
            Box::new(|u| lower.eval_unchecked(u)),
            Box::new(|u| upper.eval_unchecked(u)),
        ),
        Orthant::Upper => (
            Box::new(|u| lower.survival_unchecked(u)),
            Box::new(|u| upper.survival_unchecked(u)),
        ),
    };
    box_rows(grid, orthant, lo_fn.as_ref(), hi_fn.as_ref(), "box")
}

/// Upper-orthant rows from survival-function bounds `lower <= P(U > u) <= upper`.
pub fn survival_box_constraints(
    grid: &JointGrid,
    lower: &SurvivalView,
    upper: &SurvivalView,
) -> Result<Vec<LinearConstraint>> {
    check_dim(grid, lower.dim())?;
    check_dim(grid, upper.dim())?;
    box_rows(
        grid,
        Orthant::Upper,
        &|u| lower.eval_unchecked(u),
        &|u| upper.eval_unchecked(u),
        "survival-box",
    )
}

fn box_rows(
    grid: &JointGrid,
    orthant: Orthant,
    lower: &(dyn Fn(&[f64]) -> f64 + Sync),
    upper: &(dyn Fn(&[f64]) -> f64 + Sync),
    label: &str,
) -> Result<Vec<LinearConstraint>> {
    // The box must be non-empty on the lattice.
    let m = grid.num_axes();
    let sizes: Vec<usize> = (0..m).map(|a| grid.atoms(a).len() + 1).collect();
    let cums: Vec<Vec<f64>> = (0..m).map(|a| cumulative(grid, a)).collect();
    let mut worst: Option<(f64, Vec<f64>)> = None;
    for_each_multi(&sizes, |t| {
        let u: Vec<f64> = t.iter().enumerate().map(|(a, &ta)| cums[a][ta]).collect();
        let gap = lower(&u) - upper(&u);
        if gap > 1e-12 && worst.as_ref().is_none_or(|w| gap > w.0) {
            worst = Some((gap, u));
        }
    });
    if let Some((gap, u)) = worst {
        return Err(Error::InvalidParameter(format!(
            "lower bound exceeds upper bound by {gap:.3e} at {u:?}"
        )));
    }
    let mut rows = orthant_rows(grid, orthant, Bound::Upper, upper, &format!("{label}-upper"));
    rows.extend(orthant_rows(
        grid,
        orthant,
        Bound::Lower,
        lower,
        &format!("{label}-lower"),
    ));
    Ok(rows)
}

/// Rows `P(S_i^ref <= x, S_i^k <= y) <= q2(F_i^k(y), F_i^ref(x))` for every other asset `k`
/// at maturity `i`, over the atom supports. The first argument of `q2` belongs to the
/// other asset and the second to the reference asset.
pub fn ccd_constraints(
    grid: &JointGrid,
    maturity: usize,
    reference: usize,
    q2: &QuasiCopula,
) -> Result<Vec<LinearConstraint>> {
    if q2.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: q2.dim(),
        });
    }
    if maturity >= grid.maturities() || reference >= grid.assets() {
        return Err(Error::InvalidParameter("reference outside the grid".into()));
    }
    let ra = grid.axis(maturity, reference);
    let cr = cumulative(grid, ra);
    let m = grid.num_axes();
    let mut rows = Vec::new();
    for k in (0..grid.assets()).filter(|&k| k != reference) {
        let ka = grid.axis(maturity, k);
        let ck = cumulative(grid, ka);
        for tr in 1..=grid.atoms(ra).len() {
            for tk in 1..=grid.atoms(ka).len() {
                let r = q2.eval_unchecked(&[ck[tk], cr[tr]]);
                if r >= cr[tr].min(ck[tk]) - VACUITY_TOL {
                    continue;
                }
                let lo = vec![0; m];
                let mut hi: Vec<usize> = (0..m).map(|a| grid.atoms(a).len()).collect();
                hi[ra] = tr;
                hi[ka] = tk;
                let cells = box_cells(grid, &lo, &hi);
                rows.push(LinearConstraint {
                    label: format!(
                        "ccd[t{},s{},s{}]@({},{})",
                        maturity + 1,
                        reference + 1,
                        k + 1,
                        grid.atoms(ra)[tr - 1],
                        grid.atoms(ka)[tk - 1]
                    ),
                    sense: Sense::Le,
                    coeffs: cells.into_iter().map(|c| (c, 1.0)).collect(),
                    rhs: r,
                    kind: crate::mot::RowKind::Extra,
                });
            }
        }
    }
    Ok(rows)
}
