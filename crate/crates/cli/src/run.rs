//! Commands behind the subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use depbounds::constraints::Orthant;
use depbounds::copula::SurvivalView;
use depbounds::error::Error;
use depbounds::lp::LpStatus;
use depbounds::lp::{RevisedSimplex, SimplexOptions};
use depbounds::marginal::{DiscreteMarginal, UnivariateLaw};
use depbounds::market::{
    bs_digital_pair_price, bs_marginal_cdf, marginal_pipeline, u_quantize, write_marginals, BsModel, QuoteBook,
    QuoteType,
};
use depbounds::mot::{BoundSolver, ConstraintSet, JointGrid, MarginalSystem, SideResult};
use depbounds::payoff::{evaluate_payoff, Coord, PayoffSpec};
use depbounds::quasi_expectation::{basket_ccd_bound, min_option_bound, Law, OptionSide, PiOptions};
use depbounds::scenario::{
    BasketQuote, BoxSource, CcdSpec, CopulaBox, CorrelationPin, DependenceScenario, DigitalQuote,
};
use rayon::prelude::*;

use crate::config::{
    parse_coord, parse_family, parse_q2, AxisKind, Config, MarginalsConfig, Method, ModelDigitalsConfig, PayoffConfig,
    ScenarioConfig,
};
use crate::CliError;

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub grid_cap: Option<usize>,
}

fn core(e: Error) -> CliError {
    match e {
        Error::Infeasible(m) => CliError::Infeasible(m),
        Error::Numerical(_) | Error::NoConvergence { .. } | Error::DualVerification(_) => {
            CliError::Numerical(e.to_string())
        }
        _ => CliError::Input(e.to_string()),
    }
}

/// Marginals of every asset, by asset and then maturity.
#[derive(Clone, Debug)]
pub struct MarginalSet {
    pub labels: Vec<String>,
    pub spot: Vec<f64>,
    pub by_asset: Vec<Vec<DiscreteMarginal>>,
    pub model: Option<BsModel>,
    pub quoted_digitals: Vec<DigitalQuote>,
    pub diagnostics: Vec<String>,
    /// False when a convex-order check failed.
    pub consistent: bool,
}

impl MarginalSet {
    pub fn system(&self) -> Result<MarginalSystem, CliError> {
        if !self.consistent {
            return Err(CliError::Input(format!(
                "marginals are not in convex order:\n{}",
                self.diagnostics.join("\n")
            )));
        }
        let n = self.by_asset[0].len();
        if self.by_asset.iter().any(|v| v.len() != n) {
            return Err(CliError::Input(
                "assets are quoted at different numbers of maturities".into(),
            ));
        }
        let rows = (0..n)
            .map(|i| self.by_asset.iter().map(|v| v[i].clone()).collect())
            .collect();
        MarginalSystem::new(self.spot.clone(), rows).map_err(core)
    }

    /// Law of `S_{t_i}^k` used by analytic bounds: lognormal when a model is given.
    fn law(&self, i: usize, k: usize) -> Law {
        match &self.model {
            Some(m) => Arc::new(m.marginal(i, k)),
            None => Arc::new(self.by_asset[k][i].clone()),
        }
    }

    fn cdf(&self, i: usize, k: usize, x: f64) -> f64 {
        match &self.model {
            Some(m) => bs_marginal_cdf(m, i, k, x),
            None => self.by_asset[k][i].cdf(x),
        }
    }
}

fn read_quote_files(files: &[PathBuf], base: &Path, delimiter: char) -> Result<QuoteBook, CliError> {
    if files.is_empty() {
        return Err(CliError::Input("no quote files".into()));
    }
    let mut text = String::new();
    let mut header: Option<String> = None;
    for f in files {
        let path = base.join(f);
        let body = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let mut lines = body.lines();
        let h = lines.next().unwrap_or("").trim().to_string();
        match &header {
            None => {
                text.push_str(&h);
                text.push('\n');
                header = Some(h);
            }
            Some(prev) if *prev != h => {
                return Err(CliError::Input(format!(
                    "{}: header differs from the first quote file",
                    path.display()
                )))
            }
            Some(_) => {}
        }
        for l in lines.filter(|l| !l.trim().is_empty()) {
            text.push_str(l);
            text.push('\n');
        }
    }
    let delim = u8::try_from(delimiter).map_err(|_| CliError::Input("delimiter must be ASCII".into()))?;
    QuoteBook::read(text.as_bytes(), delim).map_err(core)
}

/// Runs the marginal source of a configuration.
pub fn load_marginals(cfg: &Config, base: &Path) -> Result<MarginalSet, CliError> {
    match &cfg.marginals {
        MarginalsConfig::Inline { spot, laws } => {
            let d = spot.len();
            let n = laws.iter().map(|l| l.maturity).max().unwrap_or(0);
            if d == 0 || n == 0 {
                return Err(CliError::Input("inline marginals are empty".into()));
            }
            let mut slots: Vec<Vec<Option<DiscreteMarginal>>> = vec![vec![None; n]; d];
            for l in laws {
                if l.asset == 0 || l.asset > d || l.maturity == 0 {
                    return Err(CliError::Input(format!(
                        "law ({}, {}) outside the system",
                        l.maturity, l.asset
                    )));
                }
                let m = match &l.weights {
                    Some(w) => DiscreteMarginal::new(l.atoms.clone(), w.clone()),
                    None => DiscreteMarginal::uniform(l.atoms.clone()),
                }
                .map_err(core)?;
                let slot = &mut slots[l.asset - 1][l.maturity - 1];
                if slot.replace(m).is_some() {
                    return Err(CliError::Input(format!(
                        "law ({}, {}) given twice",
                        l.maturity, l.asset
                    )));
                }
            }
            let by_asset = slots
                .into_iter()
                .enumerate()
                .map(|(k, v)| {
                    v.into_iter()
                        .enumerate()
                        .map(|(i, m)| m.ok_or_else(|| CliError::Input(format!("law ({}, {}) missing", i + 1, k + 1))))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MarginalSet {
                labels: (1..=d).map(|k| k.to_string()).collect(),
                spot: spot.clone(),
                by_asset,
                model: None,
                quoted_digitals: Vec::new(),
                diagnostics: Vec::new(),
                consistent: true,
            })
        }
        MarginalsConfig::BlackScholes {
            spots,
            sigmas,
            maturities,
            correlation,
            atoms,
        } => {
            let d = spots.len();
            let corr = correlation.clone().unwrap_or_else(|| identity(d));
            let model = BsModel::new(spots.clone(), sigmas.clone(), corr, maturities.clone()).map_err(core)?;
            let by_asset = (0..d)
                .map(|k| {
                    (0..maturities.len())
                        .map(|i| u_quantize(&model.marginal(i, k), *atoms))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(core)?;
            Ok(MarginalSet {
                labels: (1..=d).map(|k| k.to_string()).collect(),
                spot: spots.clone(),
                by_asset,
                model: Some(model),
                quoted_digitals: Vec::new(),
                diagnostics: Vec::new(),
                consistent: true,
            })
        }
        MarginalsConfig::Quotes {
            files,
            delimiter,
            atoms,
        } => {
            let book = read_quote_files(files, base, *delimiter)?;
            let mut diagnostics = Vec::new();
            if book.dropped_crossed > 0 {
                diagnostics.push(format!("dropped {} crossed quotes", book.dropped_crossed));
            }
            let mut by_asset = Vec::new();
            let mut spot = Vec::new();
            let mut consistent = true;
            for (k, label) in book.assets.iter().enumerate() {
                let curves = book.vanilla_curves(k);
                if curves.is_empty() {
                    continue;
                }
                let (ms, rep) = marginal_pipeline(&curves, Some(*atoms))
                    .map_err(|e| CliError::Input(format!("asset {label}: {e}")))?;
                for (i, r) in rep.removed.iter().enumerate() {
                    diagnostics.push(format!(
                        "asset {label}, maturity {}: removed {r} quotes, raw mean {:.10}",
                        i + 1,
                        rep.raw_means[i]
                    ));
                }
                for (i, c) in rep.convex_order.iter().enumerate() {
                    diagnostics.push(format!(
                        "asset {label}, maturities {} and {}: convex order {} (worst margin {:.3e} at {})",
                        i + 1,
                        i + 2,
                        if c.passed { "ok" } else { "VIOLATED" },
                        c.worst_margin,
                        c.worst_strike
                    ));
                    consistent &= c.passed;
                }
                spot.push(ms[0].mean());
                by_asset.push(ms);
            }
            if by_asset.len() != book.assets.len() {
                return Err(CliError::Input("every asset needs call or put quotes".into()));
            }
            let mut quoted_digitals = Vec::new();
            for c in book.curves.iter().filter(|c| c.kind == QuoteType::DigitalMax) {
                for q in c.quotes() {
                    quoted_digitals.push(DigitalQuote {
                        maturity: c.maturity,
                        assets: (c.assets[0], c.assets[1]),
                        strike: q.strike,
                        price: q.mid(),
                    });
                }
            }
            Ok(MarginalSet {
                labels: book.assets.clone(),
                spot,
                by_asset,
                model: None,
                quoted_digitals,
                diagnostics,
                consistent,
            })
        }
    }
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn model_digitals(md: &ModelDigitalsConfig, set: &MarginalSet) -> Result<Vec<DigitalQuote>, CliError> {
    let base = set
        .model
        .as_ref()
        .ok_or_else(|| CliError::Input("model_digitals needs black-scholes marginals".into()))?;
    let d = base.spots.len();
    let corr = match (&md.correlation, md.one_factor) {
        (Some(_), Some(_)) => return Err(CliError::Input("give either correlation or one_factor".into())),
        (Some(c), None) => c.clone(),
        (None, Some(r)) => (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else if i == 0 || j == 0 {
                            r
                        } else {
                            r * r
                        }
                    })
                    .collect()
            })
            .collect(),
        (None, None) => base.correlation.clone(),
    };
    let model = BsModel::new(base.spots.clone(), base.sigmas.clone(), corr, base.maturities.clone()).map_err(core)?;
    let i = one_based(md.maturity, model.maturities.len(), "maturity")?;
    let mut out = Vec::new();
    for [a, b] in &md.pairs {
        let (k, l) = (one_based(*a, d, "asset")?, one_based(*b, d, "asset")?);
        for &s in &md.strikes {
            let price = bs_digital_pair_price(&model, i, k, l, s).map_err(core)?;
            out.push(DigitalQuote {
                maturity: i,
                assets: (k, l),
                strike: s,
                price,
            });
        }
    }
    Ok(out)
}

fn one_based(v: usize, n: usize, what: &str) -> Result<usize, CliError> {
    if v == 0 || v > n {
        return Err(CliError::Input(format!("{what} {v} outside 1..={n}")));
    }
    Ok(v - 1)
}

/// Turns a scenario block into library form.
pub fn build_scenario(
    sc: &ScenarioConfig,
    set: &MarginalSet,
    maturities: usize,
) -> Result<DependenceScenario, CliError> {
    let d = set.spot.len();
    let mut s = DependenceScenario::new(sc.label.clone());
    for p in &sc.correlation {
        s.correlation_pins.push(CorrelationPin {
            a: parse_coord(&p.a)?,
            b: parse_coord(&p.b)?,
            rho: p.rho,
        });
    }
    s.constant_correlation = sc.constant_correlation;
    if !sc.correlation_lower_bound.is_empty() {
        s.correlation_lower_bounds = vec![None; maturities];
        for lb in &sc.correlation_lower_bound {
            s.correlation_lower_bounds[one_based(lb.maturity, maturities, "maturity")?] = Some(lb.rho);
        }
    }
    for b in &sc.basket {
        s.baskets.push(BasketQuote {
            a: parse_coord(&b.a)?,
            b: parse_coord(&b.b)?,
            weights: (b.weights[0], b.weights[1]),
            strike: b.strike,
            price: b.price,
        });
    }
    for q in &sc.digital {
        s.digitals.push(DigitalQuote {
            maturity: one_based(q.maturity, maturities, "maturity")?,
            assets: (one_based(q.assets[0], d, "asset")?, one_based(q.assets[1], d, "asset")?),
            strike: q.strike,
            price: q.price,
        });
    }
    if let Some(md) = &sc.model_digitals {
        s.digitals.extend(model_digitals(md, set)?);
    }
    if sc.quoted_digitals {
        if set.quoted_digitals.is_empty() {
            return Err(CliError::Input(format!(
                "scenario {}: no DMAX quotes available",
                sc.label
            )));
        }
        s.digitals.extend(set.quoted_digitals.iter().copied());
    }
    if let Some(b) = &sc.copula_box {
        let source = match (b.source.as_deref(), &b.lower, &b.upper) {
            (Some("digitals"), None, None) => BoxSource::Digitals,
            (None, Some(lo), Some(hi)) => BoxSource::Families {
                lower: parse_family(lo)?,
                upper: parse_family(hi)?,
            },
            _ => {
                return Err(CliError::Input(format!(
                    "scenario {}: copula_box needs source = \"digitals\" or both lower and upper",
                    sc.label
                )))
            }
        };
        s.copula_box = Some(CopulaBox {
            order: b.order.into(),
            source,
        });
    }
    if let Some(c) = &sc.ccd {
        s.ccd = Some(CcdSpec {
            maturity: one_based(c.maturity, maturities, "maturity")?,
            reference: one_based(c.reference, d, "asset")?,
            q2: parse_q2(&c.q2)?,
        });
    }
    s.validate(maturities, d)
        .map_err(|e| CliError::Input(format!("scenario {}: {e}", sc.label)))?;
    Ok(s)
}

/// One output line.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    /// Sweep point values; empty outside sweeps.
    pub point: Vec<f64>,
    pub payoff: String,
    pub scenario: String,
    /// `lower`, `upper` or `analytic`.
    pub side: String,
    pub value: f64,
    pub status: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub axes: Vec<String>,
    pub rows: Vec<ResultRow>,
    /// Feasibility reports and other notes.
    pub report: Vec<String>,
}

/// Prints `v` with ten significant digits.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.9e}")
    }
}

fn side_rank(s: &str) -> u8 {
    match s {
        "lower" => 0,
        "upper" => 1,
        _ => 2,
    }
}

impl ResultTable {
    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.point
                .iter()
                .zip(&b.point)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.payoff.cmp(&b.payoff))
                .then_with(|| a.scenario.cmp(&b.scenario))
                .then_with(|| side_rank(&a.side).cmp(&side_rank(&b.side)))
        });
    }

    pub fn get(&self, payoff: &str, scenario: &str, side: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.payoff == payoff && r.scenario == scenario && r.side == side)
    }

    pub fn write_csv(&self, mut w: impl Write, timings: bool) -> std::io::Result<()> {
        let mut header: Vec<String> = self.axes.clone();
        header.extend(["payoff", "scenario", "side", "value", "status", "seconds"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let mut cells: Vec<String> = r.point.iter().map(|v| format_value(*v)).collect();
            cells.push(r.payoff.clone());
            cells.push(r.scenario.clone());
            cells.push(r.side.clone());
            cells.push(format_value(r.value));
            cells.push(r.status.clone());
            cells.push(if timings {
                format!("{:.3}", r.seconds)
            } else {
                "0".into()
            });
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Infeasible or failed rows, as an exit classification.
    pub fn outcome(&self) -> Result<(), CliError> {
        if self.rows.iter().any(|r| r.status == LpStatus::Infeasible.label()) {
            return Err(CliError::Infeasible(self.report.join("\n")));
        }
        if let Some(r) = self
            .rows
            .iter()
            .find(|r| r.side != "analytic" && r.status != LpStatus::Optimal.label())
        {
            return Err(CliError::Numerical(format!(
                "{}/{} {}: {}",
                r.payoff, r.scenario, r.side, r.status
            )));
        }
        if let Some(r) = self
            .rows
            .iter()
            .find(|r| r.side == "analytic" && r.status.starts_with("error"))
        {
            return Err(CliError::Numerical(format!(
                "{}/{}: {}",
                r.payoff, r.scenario, r.status
            )));
        }
        Ok(())
    }
}

/// Everything needed to evaluate jobs.
pub struct Prepared {
    pub set: MarginalSet,
    pub ms: MarginalSystem,
    pub grid: JointGrid,
    pub payoffs: Vec<PayoffConfig>,
    pub scenarios: Vec<(ScenarioConfig, DependenceScenario)>,
    pub solver: BoundSolver,
    pub method: Method,
    pub resolution: usize,
    pub out_dir: PathBuf,
    pub timings: bool,
}

pub fn prepare(cfg: &Config, base: &Path, ov: &Overrides) -> Result<Prepared, CliError> {
    let set = load_marginals(cfg, base)?;
    let ms = set.system()?;
    let cap = ov.grid_cap.unwrap_or(cfg.solve.grid_cap);
    let method = cfg.solve.method;
    // Analytic bounds only need the axis layout, so the cap guards LP work alone.
    let grid =
        JointGrid::build_with_cap(&ms, if method == Method::Analytic { usize::MAX } else { cap }).map_err(core)?;
    let mut labels = std::collections::BTreeSet::new();
    for p in &cfg.payoffs {
        if !labels.insert(p.label.clone()) {
            return Err(CliError::Input(format!("duplicate payoff label {}", p.label)));
        }
        let spec = p.to_spec(None).or_else(|e| {
            if p.has_strike() && p.strike.is_none() {
                p.to_spec(Some(1.0))
            } else {
                Err(e)
            }
        })?;
        spec.check(ms.maturities(), ms.assets())
            .map_err(|e| CliError::Input(format!("payoff {}: {e}", p.label)))?;
    }
    if cfg.payoffs.is_empty() {
        return Err(CliError::Input("no payoffs".into()));
    }
    let mut scenarios = Vec::new();
    let configs: Vec<ScenarioConfig> = if cfg.scenarios.is_empty() {
        vec![ScenarioConfig {
            label: "none".into(),
            ..ScenarioConfig::default()
        }]
    } else {
        cfg.scenarios.clone()
    };
    let mut seen = std::collections::BTreeSet::new();
    for sc in &configs {
        if !seen.insert(sc.label.clone()) {
            return Err(CliError::Input(format!("duplicate scenario label {}", sc.label)));
        }
        scenarios.push((sc.clone(), build_scenario(sc, &set, ms.maturities())?));
    }
    for (sc, _) in &scenarios {
        if let Some(b) = &sc.baseline {
            if !seen.contains(b) {
                return Err(CliError::Input(format!("scenario {}: unknown baseline {b}", sc.label)));
            }
        }
    }
    let tol = ov.tol.unwrap_or(cfg.solve.tol);
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(CliError::Input(format!("tolerance {tol} outside (0, 0.01)")));
    }
    let opts = SimplexOptions {
        optimality_tol: tol,
        feasibility_tol: tol,
        residual_tol: tol,
        ..SimplexOptions::default()
    };
    let solver = BoundSolver::new(Arc::new(RevisedSimplex::new(opts))).with_sides(cfg.solve.sides.into());
    Ok(Prepared {
        set,
        ms,
        grid,
        payoffs: cfg.payoffs.clone(),
        scenarios,
        solver,
        method,
        resolution: cfg.solve.resolution.max(16),
        out_dir: base.join(ov.out.clone().unwrap_or_else(|| cfg.output.dir.clone())),
        timings: cfg.output.timings,
    })
}

/// Laws standing in for axes a bound does not involve.
#[derive(Debug)]
struct Unused;

impl UnivariateLaw for Unused {
    fn cdf(&self, _: f64) -> f64 {
        0.0
    }
    fn quantile(&self, _: f64) -> f64 {
        f64::INFINITY
    }
    fn mean(&self) -> f64 {
        f64::NAN
    }
    fn upper_truncation(&self) -> f64 {
        f64::INFINITY
    }
}

impl Prepared {
    fn cdf(&self) -> impl Fn(usize, usize, f64) -> f64 + '_ {
        move |i, k, x| self.set.cdf(i, k, x)
    }

    /// Analytic bound for payoffs the scenario supports, with a status label.
    fn analytic(&self, spec: &PayoffSpec, scen: &DependenceScenario) -> Option<(f64, String)> {
        let cdf = self.cdf();
        let fail = |e: Error| (f64::NAN, format!("error: {e}"));
        if let Some(c) = &scen.ccd {
            let basket = match spec {
                PayoffSpec::BasketCall {
                    coords,
                    weights,
                    strike,
                } => Some((coords, weights.clone(), *strike, OptionSide::Call)),
                PayoffSpec::BasketPut {
                    coords,
                    weights,
                    strike,
                } => Some((coords, weights.clone(), *strike, OptionSide::Put)),
                PayoffSpec::AvgBasket { coords, strike } => Some((
                    coords,
                    vec![1.0 / coords.len() as f64; coords.len()],
                    *strike,
                    OptionSide::Call,
                )),
                _ => None,
            };
            if let Some((coords, w, strike, side)) = basket {
                let d = self.ms.assets();
                let mut assets: Vec<usize> = coords.iter().map(|c| c.asset).collect();
                assets.sort_unstable();
                assets.dedup();
                let covers = coords.len() == d && assets.len() == d && coords.iter().all(|x| x.maturity == c.maturity);
                if covers && w.iter().all(|x| *x > 0.0) {
                    let mut order: Vec<usize> = (0..d).collect();
                    order.retain(|&k| k != c.reference);
                    order.insert(0, c.reference);
                    let pos = |k: usize| coords.iter().position(|x| x.asset == k).unwrap();
                    let laws: Vec<Law> = order.iter().map(|&k| self.set.law(c.maturity, k)).collect();
                    let ws: Vec<f64> = order.iter().map(|&k| w[pos(k)]).collect();
                    let out = scen.ccd_q2(&cdf).and_then(|q2| {
                        let q2 = q2.expect("ccd present");
                        basket_ccd_bound(&ws, strike, &laws, &q2, side, PiOptions::fixed(self.resolution))
                    });
                    return Some(match out {
                        Ok(est) => (est.value, "ccd".into()),
                        Err(e) => fail(e),
                    });
                }
            }
        }
        if let Some(b) = &scen.copula_box {
            let min = match spec {
                PayoffSpec::MinCall { coords, strike } => Some((coords, *strike, OptionSide::Call)),
                PayoffSpec::MinPut { coords, strike } => Some((coords, *strike, OptionSide::Put)),
                _ => None,
            };
            if let (Some((coords, strike, side)), Orthant::Upper) = (min, b.order) {
                let g = &self.grid;
                let mut laws: Vec<Law> = (0..g.num_axes()).map(|_| Arc::new(Unused) as Law).collect();
                for c in coords.iter() {
                    laws[g.axis(c.maturity, c.asset)] = self.set.law(c.maturity, c.asset);
                }
                let view = match b.source {
                    BoxSource::Digitals => scen.upper_orthant_bounds(g, &cdf).map(|(_, hi)| hi),
                    BoxSource::Families { upper, .. } => upper.build(g.num_axes()).map(SurvivalView::Of),
                };
                return Some(match view.and_then(|v| min_option_bound(&v, &laws, strike, side)) {
                    Ok(v) => (v, "copula-box".into()),
                    Err(e) => fail(e),
                });
            }
        }
        None
    }

    /// Solves every payoff against every scenario at each sweep point.
    fn evaluate(&self, points: &[Point]) -> Result<ResultTable, CliError> {
        let cdf = self.cdf();
        let base = ConstraintSet::base(&self.grid, &self.ms);
        let lp = self.method != Method::Analytic;
        // Constraint sets per point and scenario.
        let mut sets: BTreeMap<(usize, usize), Arc<(DependenceScenario, Option<ConstraintSet>)>> = BTreeMap::new();
        for (pi, pt) in points.iter().enumerate() {
            for (si, (_, scen)) in self.scenarios.iter().enumerate() {
                let mut s = scen.clone();
                for &(a, b, rho) in &pt.pins {
                    s.correlation_pins.push(CorrelationPin { a, b, rho });
                }
                let cs = if lp {
                    Some(base.with(s.rows(&self.grid, &self.ms, &cdf).map_err(core)?))
                } else {
                    None
                };
                sets.insert((pi, si), Arc::new((s, cs)));
            }
        }
        let mut jobs = Vec::new();
        for (pi, pt) in points.iter().enumerate() {
            for p in &self.payoffs {
                let spec = p.to_spec(if p.has_strike() { pt.strike } else { None })?;
                for si in 0..self.scenarios.len() {
                    jobs.push((pi, p.label.clone(), spec.clone(), si));
                }
            }
        }
        let rows: Vec<Vec<ResultRow>> = jobs
            .par_iter()
            .map(|(pi, label, spec, si)| {
                let (scen, cs) = &*sets[&(*pi, *si)];
                let mk = |side: &str, value: f64, status: String, seconds: f64| ResultRow {
                    point: points[*pi].values.clone(),
                    payoff: label.clone(),
                    scenario: scen.label.clone(),
                    side: side.into(),
                    value,
                    status,
                    seconds,
                };
                let mut out = Vec::new();
                if let Some(cs) = cs {
                    let c = evaluate_payoff(spec, &self.grid).map_err(core)?;
                    let r = self.solver.solve(&self.grid, &c, cs).map_err(core)?;
                    for s in [&r.lower, &r.upper].into_iter().flatten() {
                        let s: &SideResult = s;
                        let side = if s.bound == depbounds::mot::Bound::Lower {
                            "lower"
                        } else {
                            "upper"
                        };
                        out.push(mk(side, s.value, s.status.label().into(), s.seconds));
                    }
                }
                if self.method != Method::Lp {
                    let t = Instant::now();
                    if let Some((v, status)) = self.analytic(spec, scen) {
                        out.push(mk("analytic", v, status, t.elapsed().as_secs_f64()));
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut table = ResultTable {
            rows: rows.into_iter().flatten().collect(),
            ..ResultTable::default()
        };
        table.sort();
        // Feasibility diagnostics for scenarios with an infeasible solve.
        let mut flagged: Vec<(usize, usize)> = sets
            .keys()
            .copied()
            .filter(|(pi, si)| {
                table.rows.iter().any(|r| {
                    r.status == LpStatus::Infeasible.label()
                        && r.scenario == self.scenarios[*si].1.label
                        && r.point == points[*pi].values
                })
            })
            .collect();
        flagged.dedup();
        for (pi, si) in flagged {
            let (scen, _) = &*sets[&(pi, si)];
            let extra = scen.rows(&self.grid, &self.ms, &cdf).map_err(core)?;
            let rep = self.solver.feasibility_check(&self.grid, &base, &extra).map_err(core)?;
            let mut line = format!("scenario {}", scen.label);
            if !points[pi].values.is_empty() {
                let _ = write!(line, " at {:?}", points[pi].values);
            }
            match (&rep.violation, rep.base_feasible) {
                (_, false) => line.push_str(": marginal and martingale rows alone are infeasible"),
                (Some(v), true) => {
                    let _ = write!(
                        line,
                        ": row {} ({}) with value {} outside attainable range [{}, {}] given the {} rows before it",
                        v.index,
                        v.label,
                        format_value(v.rhs),
                        format_value(v.interval.0),
                        format_value(v.interval.1),
                        rep.accepted
                    );
                }
                (None, true) => line.push_str(": rows consistent one by one; infeasible only jointly within tolerance"),
            }
            table.report.push(line);
        }
        Ok(table)
    }

    /// Monotone-tightening check against declared baselines.
    fn check_baselines(&self, table: &mut ResultTable) -> bool {
        let mut ok = true;
        for (sc, _) in &self.scenarios {
            let Some(b) = &sc.baseline else { continue };
            for r in table
                .rows
                .iter()
                .filter(|r| r.scenario == sc.label && r.status == "optimal")
            {
                let Some(base) = table
                    .rows
                    .iter()
                    .find(|x| x.scenario == *b && x.payoff == r.payoff && x.side == r.side && x.point == r.point)
                else {
                    continue;
                };
                if base.status != "optimal" {
                    continue;
                }
                let tol = 1e-7 * (1.0 + base.value.abs());
                let bad = match r.side.as_str() {
                    "lower" => r.value < base.value - tol,
                    "upper" => r.value > base.value + tol,
                    _ => false,
                };
                if bad {
                    ok = false;
                    table.report.push(format!(
                        "{}/{} {} = {} is looser than baseline {} = {}",
                        r.payoff,
                        r.scenario,
                        r.side,
                        format_value(r.value),
                        b,
                        format_value(base.value)
                    ));
                }
            }
        }
        ok
    }

    fn write(&self, name: &str, table: &ResultTable) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        let mut buf = Vec::new();
        table.write_csv(&mut buf, self.timings).expect("write to memory");
        std::fs::write(&path, buf).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        let mut report = self.set.diagnostics.join("\n");
        for l in &table.report {
            report.push_str(if report.is_empty() { "" } else { "\n" });
            report.push_str(l);
        }
        if !report.is_empty() {
            report.push('\n');
        }
        let rp = self.out_dir.join("report.txt");
        std::fs::write(&rp, report).map_err(|e| CliError::Input(format!("cannot write {}: {e}", rp.display())))?;
        Ok(path)
    }
}

/// One point of a sweep.
#[derive(Clone, Debug, Default)]
struct Point {
    values: Vec<f64>,
    pins: Vec<(Coord, Coord, f64)>,
    strike: Option<f64>,
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `bounds`: both sides of every payoff under every scenario.
pub fn run_bounds(config: &Path, ov: &Overrides) -> Result<(ResultTable, PathBuf), CliError> {
    let cfg = Config::load(config)?;
    run_bounds_with(&cfg, &config_dir(config), ov)
}

pub fn run_bounds_with(cfg: &Config, base: &Path, ov: &Overrides) -> Result<(ResultTable, PathBuf), CliError> {
    let prep = prepare(cfg, base, ov)?;
    let mut table = prep.evaluate(&[Point::default()])?;
    let tight = prep.check_baselines(&mut table);
    let path = prep.write("bounds.csv", &table)?;
    table.outcome()?;
    if !tight {
        return Err(CliError::Numerical(table.report.join("\n")));
    }
    Ok((table, path))
}

/// `sweep`: the cartesian product of the sweep axes.
pub fn run_sweep(config: &Path, ov: &Overrides) -> Result<(ResultTable, PathBuf), CliError> {
    let cfg = Config::load(config)?;
    run_sweep_with(&cfg, &config_dir(config), ov)
}

pub fn run_sweep_with(cfg: &Config, base: &Path, ov: &Overrides) -> Result<(ResultTable, PathBuf), CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Input("config has no [sweep] section".into()))?;
    if sweep.axes.is_empty() {
        return Err(CliError::Input("sweep has no axes".into()));
    }
    let prep = prepare(cfg, base, ov)?;
    let mut points = vec![Point::default()];
    for ax in &sweep.axes {
        let vals = ax.points()?;
        let pair = match ax.kind {
            AxisKind::Correlation => {
                let (a, b) = (ax.a.as_deref(), ax.b.as_deref());
                let (Some(a), Some(b)) = (a, b) else {
                    return Err(CliError::Input("correlation axis needs a and b".into()));
                };
                if vals.iter().any(|r| r.abs() > 1.0) {
                    return Err(CliError::Input("correlation axis leaves [-1, 1]".into()));
                }
                Some((parse_coord(a)?, parse_coord(b)?))
            }
            AxisKind::Strike => {
                if points[0].strike.is_some() {
                    return Err(CliError::Input("at most one strike axis".into()));
                }
                None
            }
        };
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.values.push(v);
                    match pair {
                        Some((a, b)) => q.pins.push((a, b, v)),
                        None => q.strike = Some(v),
                    }
                    q
                })
            })
            .collect();
    }
    let mut table = prep.evaluate(&points)?;
    table.axes = sweep.axes.iter().map(|a| a.name()).collect();
    let path = prep.write("sweep.csv", &table)?;
    let infeasible = |r: &ResultRow| r.status == LpStatus::Infeasible.label();
    if table.rows.iter().filter(|r| r.side != "analytic").all(infeasible) && table.rows.iter().any(infeasible) {
        return Err(CliError::Infeasible(format!(
            "empty feasible region\n{}",
            table.report.join("\n")
        )));
    }
    if let Some(r) = table
        .rows
        .iter()
        .find(|r| !infeasible(r) && r.side != "analytic" && r.status != LpStatus::Optimal.label())
    {
        return Err(CliError::Numerical(format!(
            "{}/{} {}: {}",
            r.payoff, r.scenario, r.side, r.status
        )));
    }
    Ok((table, path))
}

/// `marginals`: writes one `maturity,atom,weight` file per asset and the diagnostics.
pub fn run_marginals(config: &Path, ov: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(config)?;
    let base = config_dir(config);
    let set = load_marginals(&cfg, &base)?;
    let dir = base.join(ov.out.clone().unwrap_or_else(|| cfg.output.dir.clone()));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for (label, ms) in set.labels.iter().zip(&set.by_asset) {
        let path = dir.join(format!("marginals_{label}.csv"));
        let mut buf = Vec::new();
        write_marginals(ms, &mut buf).map_err(core)?;
        std::fs::write(&path, buf).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        paths.push(path);
    }
    let mut report = set.diagnostics.join("\n");
    for (label, ms) in set.labels.iter().zip(&set.by_asset) {
        for (i, m) in ms.iter().enumerate() {
            let _ = write!(
                report,
                "{}asset {label}, maturity {}: {} atoms, mean {}",
                if report.is_empty() { "" } else { "\n" },
                i + 1,
                m.len(),
                format_value(m.mean())
            );
        }
    }
    report.push('\n');
    std::fs::write(dir.join("report.txt"), &report).map_err(|e| CliError::Input(e.to_string()))?;
    set.system()?;
    Ok(paths)
}

/// `validate`: parses and checks everything without solving.
pub fn run_validate(config: &Path, ov: &Overrides) -> Result<String, CliError> {
    let cfg = Config::load(config)?;
    let prep = prepare(&cfg, &config_dir(config), ov)?;
    if let Some(s) = &cfg.sweep {
        for a in &s.axes {
            a.points()?;
        }
    }
    Ok(format!(
        "{} maturities, {} assets, {} cells, {} payoffs, {} scenarios",
        prep.ms.maturities(),
        prep.ms.assets(),
        prep.grid.num_cells(),
        prep.payoffs.len(),
        prep.scenarios.len()
    ))
}
