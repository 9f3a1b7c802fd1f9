//! Bundles of market-implied dependence information and their translation into rows.

use crate::constraints::{
    basket_price_constraint, ccd_constraints, constant_correlation_constraints, copula_box_constraints,
    correlation_eq_constraint, correlation_lb_constraints, digital_to_survival_value, survival_box_constraints,
    Orthant,
};
use crate::copula::{improved_frechet_bounds, PrescribedSet, QuasiCopula, SurvivalView};
use crate::error::{Error, Result};
use crate::marginal::UnivariateLaw;
use crate::mot::{JointGrid, LinearConstraint, MarginalSystem};
use crate::payoff::Coord;

/// Parametric copula families usable as bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CopulaFamily {
    FrechetLower,
    FrechetUpper,
    Independence,
    /// Bivariate only.
    Gaussian(f64),
}

impl CopulaFamily {
    pub fn build(&self, dim: usize) -> Result<QuasiCopula> {
        Ok(match *self {
            Self::FrechetLower => QuasiCopula::FrechetLower(dim),
            Self::FrechetUpper => QuasiCopula::FrechetUpper(dim),
            Self::Independence => QuasiCopula::Independence(dim),
            Self::Gaussian(rho) => {
                if dim != 2 {
                    return Err(Error::Unsupported("Gaussian copula bounds are bivariate".into()));
                }
                QuasiCopula::gaussian2(rho)?
            }
        })
    }
}

/// `Corr(a, b) = rho`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationPin {
    pub a: Coord,
    pub b: Coord,
    pub rho: f64,
}

/// Observed price of `(w_a a + w_b b - K)_+`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasketQuote {
    pub a: Coord,
    pub b: Coord,
    pub weights: (f64, f64),
    pub strike: f64,
    pub price: f64,
}

/// Observed price of `1{max(S_i^k, S_i^l) <= K'}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DigitalQuote {
    pub maturity: usize,
    pub assets: (usize, usize),
    pub strike: f64,
    pub price: f64,
}

/// Where the bounds of a copula box come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoxSource {
    Families {
        lower: CopulaFamily,
        upper: CopulaFamily,
    },
    /// Improved Fréchet bounds from the scenario's digital quotes.
    Digitals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CopulaBox {
    pub order: Orthant,
    pub source: BoxSource,
}

/// Where the bivariate bound `Q2` of a common-component model comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Q2Source {
    Family(CopulaFamily),
    /// Pointwise maximum of the improved upper bounds implied by the digital quotes
    /// on (reference, other) pairs at the model maturity.
    Digitals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcdSpec {
    pub maturity: usize,
    pub reference: usize,
    pub q2: Q2Source,
}

/// Distribution function `F(maturity, asset, x)` used to place digital information on the unit cube.
pub type CdfFn<'a> = &'a dyn Fn(usize, usize, f64) -> f64;

/// Named collection of dependence information.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DependenceScenario {
    pub label: String,
    pub correlation_pins: Vec<CorrelationPin>,
    /// Correlation of the first two assets equal across maturities.
    pub constant_correlation: bool,
    /// Per-maturity lower bounds on the correlation of the first two assets.
    pub correlation_lower_bounds: Vec<Option<f64>>,
    pub baskets: Vec<BasketQuote>,
    pub digitals: Vec<DigitalQuote>,
    pub copula_box: Option<CopulaBox>,
    pub ccd: Option<CcdSpec>,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("correlation {rho} outside [-1, 1]")));
    }
    Ok(())
}

impl DependenceScenario {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self, maturities: usize, assets: usize) -> Result<()> {
        let coord = |c: Coord| {
            if c.maturity >= maturities || c.asset >= assets {
                Err(Error::InvalidParameter(format!(
                    "reference {c} outside the marginal system"
                )))
            } else {
                Ok(())
            }
        };
        for p in &self.correlation_pins {
            check_rho(p.rho)?;
            coord(p.a)?;
            coord(p.b)?;
        }
        if self.correlation_lower_bounds.len() > maturities {
            return Err(Error::DimensionMismatch {
                expected: maturities,
                got: self.correlation_lower_bounds.len(),
            });
        }
        for r in self.correlation_lower_bounds.iter().flatten() {
            check_rho(*r)?;
        }
        for b in &self.baskets {
            coord(b.a)?;
            coord(b.b)?;
            if !(b.price >= 0.0) {
                return Err(Error::InvalidParameter(format!("basket price {} is negative", b.price)));
            }
        }
        for d in &self.digitals {
            coord(Coord::new(d.maturity, d.assets.0))?;
            coord(Coord::new(d.maturity, d.assets.1))?;
            if d.assets.0 == d.assets.1 {
                return Err(Error::InvalidParameter("digital quote on a single asset".into()));
            }
            if !(0.0..=1.0).contains(&d.price) {
                return Err(Error::InvalidParameter(format!(
                    "digital price {} outside [0, 1]",
                    d.price
                )));
            }
        }
        if let Some(c) = &self.ccd {
            if c.maturity >= maturities || c.reference >= assets {
                return Err(Error::InvalidParameter(
                    "common-component reference outside the marginal system".into(),
                ));
            }
            if let Q2Source::Family(f) = c.q2 {
                f.build(2)?;
            }
        }
        Ok(())
    }

    /// All rows of the scenario. Digital quotes enter as price rows; boxes and
    /// common-component bounds use `cdf` to place the quotes on the unit cube.
    pub fn rows(&self, grid: &JointGrid, ms: &MarginalSystem, cdf: CdfFn) -> Result<Vec<LinearConstraint>> {
        self.validate(grid.maturities(), grid.assets())?;
        let mut rows = Vec::new();
        for p in &self.correlation_pins {
            rows.push(correlation_eq_constraint(grid, ms, p.a, p.b, p.rho)?);
        }
        if self.constant_correlation {
            rows.extend(constant_correlation_constraints(grid, ms)?);
        }
        if self.correlation_lower_bounds.iter().any(Option::is_some) {
            rows.extend(correlation_lb_constraints(grid, ms, &self.correlation_lower_bounds)?);
        }
        for b in &self.baskets {
            rows.push(basket_price_constraint(
                grid,
                b.a,
                b.b,
                b.weights.0,
                b.weights.1,
                b.strike,
                b.price,
            )?);
        }
        for d in &self.digitals {
            let (ka, la) = (grid.axis(d.maturity, d.assets.0), grid.axis(d.maturity, d.assets.1));
            let f = grid.evaluate(|x| {
                if x[ka] <= d.strike && x[la] <= d.strike {
                    1.0
                } else {
                    0.0
                }
            });
            rows.push(LinearConstraint::eq(
                format!(
                    "digital[t{},s{},s{}]@{}",
                    d.maturity + 1,
                    d.assets.0 + 1,
                    d.assets.1 + 1,
                    d.strike
                ),
                &f,
                d.price,
            )?);
        }
        if let Some(b) = &self.copula_box {
            match b.source {
                BoxSource::Families { lower, upper } => {
                    let m = grid.num_axes();
                    rows.extend(copula_box_constraints(
                        grid,
                        &lower.build(m)?,
                        &upper.build(m)?,
                        b.order,
                    )?);
                }
                BoxSource::Digitals => match b.order {
                    Orthant::Lower => {
                        let (lo, hi) = self.lower_orthant_bounds(grid, cdf)?;
                        rows.extend(copula_box_constraints(grid, &lo, &hi, Orthant::Lower)?);
                    }
                    Orthant::Upper => {
                        let (lo, hi) = self.upper_orthant_bounds(grid, cdf)?;
                        rows.extend(survival_box_constraints(grid, &lo, &hi)?);
                    }
                },
            }
        }
        if let Some(c) = &self.ccd {
            let q2 = self.ccd_q2(cdf)?.expect("ccd present");
            rows.extend(ccd_constraints(grid, c.maturity, c.reference, &q2)?);
        }
        Ok(rows)
    }

    fn require_digitals(&self) -> Result<()> {
        if self.digitals.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "scenario {} has no digital quotes",
                self.label
            )));
        }
        Ok(())
    }

    /// Improved Fréchet bounds of the joint copula over all grid axes implied by the digital
    /// quotes: each quote fixes `C` at the point with `F_k(K'), F_l(K')` on its pair and one elsewhere.
    pub fn lower_orthant_bounds(&self, grid: &JointGrid, cdf: CdfFn) -> Result<(QuasiCopula, QuasiCopula)> {
        self.require_digitals()?;
        let mut pts = Vec::new();
        for d in &self.digitals {
            let mut u = vec![1.0; grid.num_axes()];
            u[grid.axis(d.maturity, d.assets.0)] = cdf(d.maturity, d.assets.0, d.strike);
            u[grid.axis(d.maturity, d.assets.1)] = cdf(d.maturity, d.assets.1, d.strike);
            pts.push((u, d.price));
        }
        Ok(improved_frechet_bounds(PrescribedSet::new(grid.num_axes(), pts)?))
    }

    /// Bounds on the joint survival function implied by the digital quotes, as copulas of the
    /// reflected vector: a quote pins `P(S^k > K', S^l > K') = p + 1 - F_k - F_l`.
    pub fn upper_orthant_bounds(&self, grid: &JointGrid, cdf: CdfFn) -> Result<(SurvivalView, SurvivalView)> {
        self.require_digitals()?;
        let mut pts = Vec::new();
        for d in &self.digitals {
            let fk = cdf(d.maturity, d.assets.0, d.strike);
            let fl = cdf(d.maturity, d.assets.1, d.strike);
            let s = digital_to_survival_value(d.price, fk, fl)?;
            let mut v = vec![1.0; grid.num_axes()];
            v[grid.axis(d.maturity, d.assets.0)] = 1.0 - fk;
            v[grid.axis(d.maturity, d.assets.1)] = 1.0 - fl;
            pts.push((v, s));
        }
        let (lo, hi) = improved_frechet_bounds(PrescribedSet::new(grid.num_axes(), pts)?);
        Ok((SurvivalView::Reflected(lo), SurvivalView::Reflected(hi)))
    }

    /// The bivariate bound of the common-component block; the first argument belongs to
    /// the other asset and the second to the reference asset.
    pub fn ccd_q2(&self, cdf: CdfFn) -> Result<Option<QuasiCopula>> {
        let Some(c) = &self.ccd else { return Ok(None) };
        match c.q2 {
            Q2Source::Family(f) => Ok(Some(f.build(2)?)),
            Q2Source::Digitals => {
                self.require_digitals()?;
                let mut by_asset: Vec<(usize, Vec<(Vec<f64>, f64)>)> = Vec::new();
                for d in self.digitals.iter().filter(|d| d.maturity == c.maturity) {
                    let other = match d.assets {
                        (a, b) if a == c.reference => b,
                        (a, b) if b == c.reference => a,
                        _ => continue,
                    };
                    let pt = (
                        vec![cdf(c.maturity, other, d.strike), cdf(c.maturity, c.reference, d.strike)],
                        d.price,
                    );
                    match by_asset.iter_mut().find(|(k, _)| *k == other) {
                        Some((_, v)) => v.push(pt),
                        None => by_asset.push((other, vec![pt])),
                    }
                }
                if by_asset.is_empty() {
                    return Err(Error::InvalidParameter(
                        "no digital quotes involve the reference asset".into(),
                    ));
                }
                let uppers = by_asset
                    .into_iter()
                    .map(|(_, pts)| Ok(improved_frechet_bounds(PrescribedSet::new(2, pts)?).1))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(if uppers.len() == 1 {
                    uppers.into_iter().next().unwrap()
                } else {
                    QuasiCopula::pointwise_max(uppers)?
                }))
            }
        }
    }
}

/// Distribution functions of the marginal system, `P(S_i^k <= x)`.
pub fn system_cdf(ms: &MarginalSystem) -> impl Fn(usize, usize, f64) -> f64 + '_ {
    move |i, k, x| ms.marginal(i, k).cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::DiscreteMarginal;
    use crate::mot::{solve_bounds, ConstraintSet};

    fn one_period() -> (MarginalSystem, JointGrid) {
        let m = DiscreteMarginal::uniform(vec![8.0, 10.0, 12.0]).unwrap();
        let ms = MarginalSystem::new(vec![10.0, 10.0], vec![vec![m.clone(), m]]).unwrap();
        let g = JointGrid::build(&ms).unwrap();
        (ms, g)
    }

    #[test]
    fn validation() {
        let mut s = DependenceScenario::new("x");
        s.correlation_pins.push(CorrelationPin {
            a: Coord::new(0, 0),
            b: Coord::new(0, 1),
            rho: 1.5,
        });
        assert!(s.validate(1, 2).is_err());
        let mut s = DependenceScenario::new("x");
        s.digitals.push(DigitalQuote {
            maturity: 0,
            assets: (0, 1),
            strike: 9.0,
            price: 1.2,
        });
        assert!(s.validate(1, 2).is_err());
        s.digitals[0].price = 0.2;
        assert!(s.validate(1, 2).is_ok());
        assert!(s.validate(1, 1).is_err());
    }

    #[test]
    fn digital_row_pins_price() {
        let (ms, g) = one_period();
        let mut s = DependenceScenario::new("d");
        s.digitals.push(DigitalQuote {
            maturity: 0,
            assets: (0, 1),
            strike: 10.0,
            price: 0.5,
        });
        let cdf = system_cdf(&ms);
        let rows = s.rows(&g, &ms, &cdf).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].coeffs.len(), 4);
        let c = g.evaluate(|x| if x[0].max(x[1]) <= 10.0 { 1.0 } else { 0.0 });
        let r = solve_bounds(&g, &c, &ConstraintSet::base(&g, &ms).with(rows)).unwrap();
        assert!((r.lower_value() - 0.5).abs() < 1e-12 && (r.upper_value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn digital_box_contains_price() {
        let (ms, g) = one_period();
        let mut s = DependenceScenario::new("box");
        s.digitals.push(DigitalQuote {
            maturity: 0,
            assets: (0, 1),
            strike: 10.0,
            price: 0.5,
        });
        let cdf = system_cdf(&ms);
        let c = g.evaluate(|x| if x[0].max(x[1]) <= 10.0 { 1.0 } else { 0.0 });
        for order in [Orthant::Lower, Orthant::Upper] {
            let mut b = s.clone();
            b.digitals.clear();
            b.digitals = s.digitals.clone();
            b.copula_box = Some(CopulaBox {
                order,
                source: BoxSource::Digitals,
            });
            let mut rows = b.rows(&g, &ms, &cdf).unwrap();
            rows.retain(|r| !r.label.starts_with("digital"));
            let r = solve_bounds(&g, &c, &ConstraintSet::base(&g, &ms).with(rows)).unwrap();
            assert!((r.lower_value() - 0.5).abs() < 1e-9, "{order:?} {}", r.lower_value());
            assert!((r.upper_value() - 0.5).abs() < 1e-9, "{order:?} {}", r.upper_value());
        }
    }

    #[test]
    fn ccd_q2_from_digitals_matches_prescription() {
        let (ms, _) = one_period();
        let mut s = DependenceScenario::new("ccd");
        s.digitals.push(DigitalQuote {
            maturity: 0,
            assets: (0, 1),
            strike: 10.0,
            price: 0.4,
        });
        s.ccd = Some(CcdSpec {
            maturity: 0,
            reference: 0,
            q2: Q2Source::Digitals,
        });
        let cdf = system_cdf(&ms);
        let q2 = s.ccd_q2(&cdf).unwrap().unwrap();
        let u = 2.0 / 3.0;
        assert!((q2.eval(&[u, u]).unwrap() - 0.4).abs() < 1e-12);
        s.ccd = Some(CcdSpec {
            maturity: 0,
            reference: 0,
            q2: Q2Source::Family(CopulaFamily::Gaussian(0.3)),
        });
        assert_eq!(s.ccd_q2(&cdf).unwrap(), Some(QuasiCopula::Gaussian2(0.3)));
    }

    #[test]
    fn family_box_of_frechet_bounds_is_vacuous() {
        let (ms, g) = one_period();
        let mut s = DependenceScenario::new("f");
        s.copula_box = Some(CopulaBox {
            order: Orthant::Lower,
            source: BoxSource::Families {
                lower: CopulaFamily::FrechetLower,
                upper: CopulaFamily::FrechetUpper,
            },
        });
        let cdf = system_cdf(&ms);
        assert!(s.rows(&g, &ms, &cdf).unwrap().is_empty());
        s.copula_box = Some(CopulaBox {
            order: Orthant::Lower,
            source: BoxSource::Families {
                lower: CopulaFamily::Independence,
                upper: CopulaFamily::Gaussian(0.5),
            },
        });
        assert!(s.rows(&g, &ms, &cdf).is_ok());
    }
}
