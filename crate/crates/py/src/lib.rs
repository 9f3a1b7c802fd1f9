//! Python bindings.

use std::sync::Arc;

use depbounds::constraints::Orthant;
use depbounds::copula::{improved_frechet_bounds as improved, PrescribedSet, QuasiCopula};
use depbounds::error::Error;
use depbounds::marginal::{DiscreteMarginal, Lognormal, UnivariateLaw};
use depbounds::market::u_quantize;
use depbounds::mot::{BoundSolver, ConstraintSet, JointGrid, MarginalSystem};
use depbounds::payoff::{evaluate_payoff, Coord, Expr, PayoffSpec};
use depbounds::quasi_expectation::{basket_ccd_bound, Law, OptionSide, PiOptions};
use depbounds::scenario::{
    system_cdf, BasketQuote, BoxSource, CcdSpec, CopulaBox, CopulaFamily, CorrelationPin, DependenceScenario,
    DigitalQuote, Q2Source,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) | Error::NoConvergence { .. } | Error::DualVerification(_) | Error::Infeasible(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn coord(s: &str) -> PyResult<Coord> {
    match Expr::parse(s) {
        Ok(Expr::Var(c)) => Ok(c),
        _ => Err(PyValueError::new_err(format!("expected a reference s(i,k), got {s:?}"))),
    }
}

fn zero_based(v: usize, what: &str) -> PyResult<usize> {
    v.checked_sub(1)
        .ok_or_else(|| PyValueError::new_err(format!("{what} is one-based")))
}

fn family(s: &str) -> PyResult<CopulaFamily> {
    Ok(match s {
        "frechet-lower" => CopulaFamily::FrechetLower,
        "frechet-upper" => CopulaFamily::FrechetUpper,
        "independence" => CopulaFamily::Independence,
        _ => {
            let rho = s
                .strip_prefix("gaussian(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| PyValueError::new_err(format!("unknown copula family {s:?}")))?;
            CopulaFamily::Gaussian(rho)
        }
    })
}

/// Discrete law on finitely many atoms.
#[pyclass(name = "Marginal", frozen, from_py_object, module = "depbounds_py")]
#[derive(Clone)]
struct PyMarginal(DiscreteMarginal);

#[pymethods]
impl PyMarginal {
    #[new]
    #[pyo3(signature = (atoms, weights=None))]
    fn new(atoms: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        match weights {
            Some(w) => DiscreteMarginal::new(atoms, w),
            None => DiscreteMarginal::uniform(atoms),
        }
        .map(Self)
        .map_err(err)
    }

    /// Lognormal law with mean `spot` quantized to `atoms` points.
    #[staticmethod]
    fn lognormal(spot: f64, sigma: f64, maturity: f64, atoms: usize) -> PyResult<Self> {
        let l = Lognormal::new(spot, sigma, maturity).map_err(err)?;
        u_quantize(&l, atoms).map(Self).map_err(err)
    }

    #[getter]
    fn atoms(&self) -> Vec<f64> {
        self.0.atoms().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn call_price(&self, strike: f64) -> f64 {
        self.0.call_price(strike)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Marginal({} atoms, mean {})", self.0.len(), self.0.mean())
    }
}

/// Marginals of every asset at every maturity, in increasing convex order.
#[pyclass(name = "MarginalSystem", frozen, module = "depbounds_py")]
struct PySystem {
    ms: MarginalSystem,
    grid: JointGrid,
}

#[pymethods]
impl PySystem {
    /// `marginals[i][k]` is the law of asset `k` at maturity `i`.
    #[new]
    fn new(spot: Vec<f64>, marginals: Vec<Vec<PyMarginal>>) -> PyResult<Self> {
        let rows = marginals
            .into_iter()
            .map(|r| r.into_iter().map(|m| m.0).collect())
            .collect();
        let ms = MarginalSystem::new(spot, rows).map_err(err)?;
        let grid = JointGrid::build(&ms).map_err(err)?;
        Ok(Self { ms, grid })
    }

    #[getter]
    fn maturities(&self) -> usize {
        self.ms.maturities()
    }

    #[getter]
    fn assets(&self) -> usize {
        self.ms.assets()
    }

    #[getter]
    fn cells(&self) -> usize {
        self.grid.num_cells()
    }
}

/// Dependence information; maturities and assets are one-based.
#[pyclass(name = "Scenario", module = "depbounds_py")]
struct PyScenario(DependenceScenario);

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (label="scenario"))]
    fn new(label: &str) -> Self {
        Self(DependenceScenario::new(label))
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label.clone()
    }

    fn pin_correlation(&mut self, a: &str, b: &str, rho: f64) -> PyResult<()> {
        self.0.correlation_pins.push(CorrelationPin {
            a: coord(a)?,
            b: coord(b)?,
            rho,
        });
        Ok(())
    }

    fn constant_correlation(&mut self) {
        self.0.constant_correlation = true;
    }

    fn correlation_lower_bound(&mut self, maturity: usize, rho: f64) -> PyResult<()> {
        let i = zero_based(maturity, "maturity")?;
        if self.0.correlation_lower_bounds.len() <= i {
            self.0.correlation_lower_bounds.resize(i + 1, None);
        }
        self.0.correlation_lower_bounds[i] = Some(rho);
        Ok(())
    }

    fn basket_price(&mut self, a: &str, b: &str, weights: (f64, f64), strike: f64, price: f64) -> PyResult<()> {
        self.0.baskets.push(BasketQuote {
            a: coord(a)?,
            b: coord(b)?,
            weights,
            strike,
            price,
        });
        Ok(())
    }

    /// Price of `1{max(S^k, S^l) <= strike}` at one maturity.
    fn digital(&mut self, maturity: usize, assets: (usize, usize), strike: f64, price: f64) -> PyResult<()> {
        self.0.digitals.push(DigitalQuote {
            maturity: zero_based(maturity, "maturity")?,
            assets: (zero_based(assets.0, "asset")?, zero_based(assets.1, "asset")?),
            strike,
            price,
        });
        Ok(())
    }

    /// `order` is `lower` or `upper`; bounds come from the digitals unless both families are given.
    #[pyo3(signature = (order, lower=None, upper=None))]
    fn copula_box(&mut self, order: &str, lower: Option<&str>, upper: Option<&str>) -> PyResult<()> {
        let order = match order {
            "lower" => Orthant::Lower,
            "upper" => Orthant::Upper,
            _ => return Err(PyValueError::new_err("order must be lower or upper")),
        };
        let source = match (lower, upper) {
            (None, None) => BoxSource::Digitals,
            (Some(l), Some(u)) => BoxSource::Families {
                lower: family(l)?,
                upper: family(u)?,
            },
            _ => return Err(PyValueError::new_err("give both families or neither")),
        };
        self.0.copula_box = Some(CopulaBox { order, source });
        Ok(())
    }

    /// Common-component block; `q2` is a family name or `digitals`.
    #[pyo3(signature = (maturity, reference, q2="digitals"))]
    fn ccd(&mut self, maturity: usize, reference: usize, q2: &str) -> PyResult<()> {
        let q2 = if q2 == "digitals" {
            Q2Source::Digitals
        } else {
            Q2Source::Family(family(q2)?)
        };
        self.0.ccd = Some(CcdSpec {
            maturity: zero_based(maturity, "maturity")?,
            reference: zero_based(reference, "asset")?,
            q2,
        });
        Ok(())
    }
}

/// `(lower, upper, status)` of a payoff expression such as `pos(s(1,1) - 10)`.
#[pyfunction]
#[pyo3(signature = (system, payoff, scenario=None))]
fn solve_bounds(
    py: Python<'_>,
    system: &PySystem,
    payoff: &str,
    scenario: Option<PyRef<'_, PyScenario>>,
) -> PyResult<(f64, f64, String)> {
    let spec = PayoffSpec::Custom(Expr::parse(payoff).map_err(err)?);
    let scen = scenario.map(|s| s.0.clone()).unwrap_or_default();
    py.detach(|| {
        let (g, ms) = (&system.grid, &system.ms);
        let c = evaluate_payoff(&spec, g).map_err(err)?;
        let cdf = system_cdf(ms);
        let cs = ConstraintSet::base(g, ms).with(scen.rows(g, ms, &cdf).map_err(err)?);
        let r = BoundSolver::default().solve(g, &c, &cs).map_err(err)?;
        let status = [&r.lower, &r.upper]
            .into_iter()
            .flatten()
            .map(|s| s.status.label())
            .find(|s| *s != "optimal")
            .unwrap_or("optimal");
        Ok((r.lower_value(), r.upper_value(), status.to_string()))
    })
}

/// Copula or quasi-copula.
#[pyclass(name = "QuasiCopula", frozen, from_py_object, module = "depbounds_py")]
#[derive(Clone)]
struct PyQuasiCopula(QuasiCopula);

#[pymethods]
impl PyQuasiCopula {
    #[staticmethod]
    fn frechet_lower(dim: usize) -> Self {
        Self(QuasiCopula::FrechetLower(dim))
    }

    #[staticmethod]
    fn frechet_upper(dim: usize) -> Self {
        Self(QuasiCopula::FrechetUpper(dim))
    }

    #[staticmethod]
    fn independence(dim: usize) -> Self {
        Self(QuasiCopula::Independence(dim))
    }

    #[staticmethod]
    fn gaussian(rho: f64) -> PyResult<Self> {
        QuasiCopula::gaussian2(rho).map(Self).map_err(err)
    }

    /// Pointwise maximum of bivariate quasi-copulas.
    #[staticmethod]
    fn pointwise_max(parts: Vec<PyQuasiCopula>) -> PyResult<Self> {
        QuasiCopula::pointwise_max(parts.into_iter().map(|q| q.0).collect())
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __call__(&self, u: Vec<f64>) -> PyResult<f64> {
        self.0.eval(&u).map_err(err)
    }
}

/// Lower and upper improved Fréchet bounds of copulas with `C(points[j]) = values[j]`.
#[pyfunction]
fn improved_frechet_bounds(
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
) -> PyResult<(PyQuasiCopula, PyQuasiCopula)> {
    if points.len() != values.len() {
        return Err(PyValueError::new_err("points and values differ in length"));
    }
    let set = PrescribedSet::new(dim, points.into_iter().zip(values).collect()).map_err(err)?;
    let (lo, hi) = improved(set);
    Ok((PyQuasiCopula(lo), PyQuasiCopula(hi)))
}

/// Common-component bound on a basket option; the first marginal is the common component.
#[pyfunction]
#[pyo3(signature = (weights, strike, marginals, q2, call=true, resolution=4096))]
fn ccd_basket_bound(
    py: Python<'_>,
    weights: Vec<f64>,
    strike: f64,
    marginals: Vec<PyMarginal>,
    q2: &PyQuasiCopula,
    call: bool,
    resolution: usize,
) -> PyResult<f64> {
    let laws: Vec<Law> = marginals.into_iter().map(|m| Arc::new(m.0) as Law).collect();
    let side = if call { OptionSide::Call } else { OptionSide::Put };
    let q2 = q2.0.clone();
    py.detach(|| {
        basket_ccd_bound(&weights, strike, &laws, &q2, side, PiOptions::fixed(resolution.max(16)))
            .map(|e| e.value)
            .map_err(err)
    })
}

#[pymodule]
fn depbounds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarginal>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyQuasiCopula>()?;
    m.add_function(wrap_pyfunction!(solve_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(improved_frechet_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(ccd_basket_bound, m)?)?;
    Ok(())
}
