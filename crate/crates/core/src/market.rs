//! Option quotes to discrete marginals, and synthetic lognormal quote data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::{check_convex_order, ConvexOrderReport, DiscreteMarginal, Lognormal, UnivariateLaw};
use crate::normal::bivariate_normal_cdf;
use crate::quadrature::gauss_legendre;

/// Quoted instrument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuoteType {
    #[serde(rename = "C")]
    Call,
    #[serde(rename = "P")]
    Put,
    /// Pays one when both assets end at or below the strike.
    #[serde(rename = "DMAX")]
    DigitalMax,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quote {
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
}

impl Quote {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

/// Quotes of one instrument type at one maturity, by increasing strike.
#[derive(Clone, Debug, PartialEq)]
pub struct QuoteCurve {
    pub kind: QuoteType,
    pub maturity: usize,
    pub assets: Vec<usize>,
    quotes: Vec<Quote>,
}

impl QuoteCurve {
    pub fn new(kind: QuoteType, maturity: usize, assets: Vec<usize>, quotes: Vec<Quote>) -> Result<Self> {
        if quotes.windows(2).any(|w| w[0].strike >= w[1].strike) {
            return Err(Error::MarketData("strikes must be strictly increasing".into()));
        }
        for q in &quotes {
            if !(q.bid.is_finite() && q.ask.is_finite() && q.strike.is_finite()) {
                return Err(Error::MarketData(format!("non-finite quote at strike {}", q.strike)));
            }
            if q.bid > q.ask {
                return Err(Error::MarketData(format!("bid above ask at strike {}", q.strike)));
            }
            if q.bid < 0.0 {
                return Err(Error::MarketData(format!("negative price at strike {}", q.strike)));
            }
        }
        let want = if kind == QuoteType::DigitalMax { 2 } else { 1 };
        if assets.len() != want {
            return Err(Error::MarketData(format!("{kind:?} quotes need {want} asset(s)")));
        }
        Ok(Self {
            kind,
            maturity,
            assets,
            quotes,
        })
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn strikes(&self) -> Vec<f64> {
        self.quotes.iter().map(|q| q.strike).collect()
    }

    pub fn mids(&self) -> Vec<f64> {
        self.quotes.iter().map(Quote::mid).collect()
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }
}

/// Total static-arbitrage violation of a mid curve.
fn violation(kind: QuoteType, k: &[f64], m: &[f64]) -> f64 {
    let mut v = 0.0;
    for j in 0..m.len().saturating_sub(1) {
        v += match kind {
            QuoteType::Call => (m[j + 1] - m[j]).max(0.0),
            QuoteType::Put | QuoteType::DigitalMax => (m[j] - m[j + 1]).max(0.0),
        };
    }
    if kind != QuoteType::DigitalMax {
        for j in 1..m.len().saturating_sub(1) {
            let chord = ((k[j + 1] - k[j]) * m[j - 1] + (k[j] - k[j - 1]) * m[j + 1]) / (k[j + 1] - k[j - 1]);
            v += (m[j] - chord).max(0.0);
        }
    }
    v
}

/// Removes quotes one at a time until call mids are non-increasing and convex, put mids
/// non-decreasing and convex, or digital mids non-decreasing. Each step drops the quote
/// whose removal reduces the total violation most, ties going to the lowest strike.
pub fn clean_quotes(curve: &QuoteCurve) -> Result<QuoteCurve> {
    let mut quotes = curve.quotes.clone();
    if quotes.len() < 3 {
        return Err(Error::MarketData(format!("{} quotes, at least 3 needed", quotes.len())));
    }
    let scale = quotes.iter().map(|q| q.mid().abs()).fold(1e-300, f64::max);
    let tol = 1e-12 * scale;
    loop {
        let k: Vec<f64> = quotes.iter().map(|q| q.strike).collect();
        let m: Vec<f64> = quotes.iter().map(Quote::mid).collect();
        let total = violation(curve.kind, &k, &m);
        if total <= tol {
            break;
        }
        let mut best = (f64::INFINITY, 0usize);
        for drop in 0..quotes.len() {
            let kk: Vec<f64> = k
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, v)| *v)
                .collect();
            let mm: Vec<f64> = m
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, v)| *v)
                .collect();
            let v = violation(curve.kind, &kk, &mm);
            if v < best.0 - tol {
                best = (v, drop);
            }
        }
        quotes.remove(best.1);
        if quotes.len() < 3 {
            return Err(Error::MarketData("fewer than 3 quotes survive cleaning".into()));
        }
    }
    QuoteCurve::new(curve.kind, curve.maturity, curve.assets.clone(), quotes)
}

/// Put-call parity gaps `|C - P - (S0 - K)|` that exceed the combined half spreads,
/// as `(strike, gap)`. Nothing is repaired.
pub fn parity_violations(calls: &QuoteCurve, puts: &QuoteCurve, forward: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for c in calls.quotes() {
        if let Some(p) = puts.quotes().iter().find(|p| p.strike == c.strike) {
            let gap = (c.mid() - p.mid() - (forward - c.strike)).abs();
            let allowance = 0.5 * (c.ask - c.bid + p.ask - p.bid);
            if gap > allowance + 1e-12 {
                out.push((c.strike, gap));
            }
        }
    }
    out
}

/// Second-difference densities `(P_{j+1} - 2P_j + P_{j-1}) / (K_{j+1} - K_{j-1})^2`
/// at the quoted strikes, zero at both ends.
pub fn breeden_litzenberger(curve: &QuoteCurve) -> Result<Vec<f64>> {
    if curve.kind == QuoteType::DigitalMax {
        return Err(Error::MarketData("densities need call or put quotes".into()));
    }
    let k = curve.strikes();
    let p = curve.mids();
    let n = k.len();
    if n < 3 {
        return Err(Error::MarketData("at least 3 strikes needed".into()));
    }
    let mut dens = vec![0.0; n];
    for j in 1..n - 1 {
        let h = k[j + 1] - k[j - 1];
        let v = (p[j + 1] - 2.0 * p[j] + p[j - 1]) / (h * h);
        if v < -1e-12 {
            return Err(Error::MarketData(format!(
                "negative density {v:.3e} at strike {}",
                k[j]
            )));
        }
        dens[j] = v.max(0.0);
    }
    Ok(dens)
}

/// Atoms at the strikes with normalized densities as weights; zero densities are dropped.
pub fn marginal_from_density(strikes: &[f64], densities: &[f64]) -> Result<DiscreteMarginal> {
    if strikes.len() != densities.len() {
        return Err(Error::DimensionMismatch {
            expected: strikes.len(),
            got: densities.len(),
        });
    }
    let total: f64 = densities.iter().filter(|d| **d > 0.0).sum();
    if total <= 0.0 {
        return Err(Error::MarketData("all densities are zero".into()));
    }
    let (atoms, weights): (Vec<f64>, Vec<f64>) = strikes
        .iter()
        .zip(densities)
        .filter(|(_, d)| **d > 0.0)
        .map(|(k, d)| (*k, d / total))
        .unzip();
    normalized(atoms, weights)
}

fn normalized(atoms: Vec<f64>, mut weights: Vec<f64>) -> Result<DiscreteMarginal> {
    let s: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= s;
    }
    DiscreteMarginal::new(atoms, weights)
}

/// Target for mean equalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeanTarget {
    /// Arithmetic mean of the per-maturity means.
    Average,
    Value(f64),
}

/// Rescales each marginal multiplicatively to a common mean and reports the convex
/// order of consecutive maturities afterwards.
pub fn equalize_means(
    marginals: &[DiscreteMarginal],
    target: MeanTarget,
) -> Result<(Vec<DiscreteMarginal>, Vec<ConvexOrderReport>)> {
    if marginals.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let means: Vec<f64> = marginals.iter().map(UnivariateLaw::mean).collect();
    if means.iter().any(|m| *m <= 0.0) {
        return Err(Error::MarketData("marginal with zero mean".into()));
    }
    let m_star = match target {
        MeanTarget::Average => means.iter().sum::<f64>() / means.len() as f64,
        MeanTarget::Value(v) => v,
    };
    let out: Vec<DiscreteMarginal> = marginals
        .iter()
        .zip(&means)
        .map(|(m, &mean)| {
            if mean == m_star {
                return Ok(m.clone());
            }
            let s = m_star / mean;
            DiscreteMarginal::new(m.atoms().iter().map(|a| a * s).collect(), m.weights().to_vec())
        })
        .collect::<Result<_>>()?;
    let reports = out.windows(2).map(|w| check_convex_order(&w[0], &w[1])).collect();
    Ok((out, reports))
}

/// Upper quantile level at which bins are truncated.
pub const QUANTIZATION_TAIL: f64 = 1e-10;

/// `n` atoms at the conditional means of the quantile bins `[(j-1)/n, j/n]`, each with weight `1/n`.
///
/// Discrete laws are binned exactly. Otherwise each bin uses a 128-point Gauss–Legendre
/// rule; the top bin is taken from the mean of the law, and checked against the rule
/// applied up to the `1 - 1e-10` quantile.
pub fn u_quantize(law: &dyn UnivariateLaw, n: usize) -> Result<DiscreteMarginal> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one atom".into()));
    }
    let mean = law.mean();
    if !mean.is_finite() {
        return Err(Error::MarketData("law without finite mean".into()));
    }
    let nf = n as f64;
    let mut atoms = Vec::with_capacity(n);
    if let Some(d) = law.as_discrete() {
        let cum = d.cumulative();
        for j in 0..n {
            let (a, b) = (j as f64 / nf, (j + 1) as f64 / nf);
            let mut s = 0.0;
            let mut lo = 0.0_f64;
            for (i, &c) in cum.iter().enumerate() {
                let overlap = (c.min(b) - lo.max(a)).max(0.0);
                s += overlap * d.atoms()[i];
                lo = c;
            }
            atoms.push(s * nf);
        }
    } else {
        let rule = gauss_legendre(128);
        let bin = |a: f64, b: f64| crate::quadrature::integrate(&rule, a, b, |u| law.quantile(u));
        let mut acc = 0.0;
        for j in 0..n - 1 {
            let v = bin(j as f64 / nf, (j + 1) as f64 / nf);
            acc += v;
            atoms.push(v * nf);
        }
        let top = mean - acc;
        let truncated = bin((n - 1) as f64 / nf, 1.0 - QUANTIZATION_TAIL);
        if !top.is_finite() || top < truncated - 1e-9 * mean.abs().max(1.0) {
            return Err(Error::MarketData("quantile integral does not converge".into()));
        }
        atoms.push(top * nf);
    }
    // Equal conditional means (flat quantile) are merged.
    let mut a_out: Vec<f64> = Vec::with_capacity(n);
    let mut w_out: Vec<f64> = Vec::with_capacity(n);
    for a in atoms {
        match a_out.last() {
            Some(&last) if (a - last).abs() <= 1e-12 * last.abs().max(1.0) => *w_out.last_mut().unwrap() += 1.0 / nf,
            _ => {
                a_out.push(a.max(0.0));
                w_out.push(1.0 / nf);
            }
        }
    }
    normalized(a_out, w_out)
}

/// Multi-asset lognormal model with zero drift.
#[derive(Clone, Debug, PartialEq)]
pub struct BsModel {
    pub spots: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    pub maturities: Vec<f64>,
}

impl BsModel {
    pub fn new(spots: Vec<f64>, sigmas: Vec<f64>, correlation: Vec<Vec<f64>>, maturities: Vec<f64>) -> Result<Self> {
        let d = spots.len();
        if sigmas.len() != d || correlation.len() != d || correlation.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigmas.len(),
            });
        }
        if sigmas.iter().any(|s| !(*s > 0.0)) || spots.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(
                "spots and volatilities must be positive".into(),
            ));
        }
        if maturities.iter().any(|t| !(*t > 0.0)) || maturities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "maturities must be positive and increasing".into(),
            ));
        }
        for i in 0..d {
            if correlation[i][i] != 1.0 {
                return Err(Error::InvalidParameter("correlation diagonal must be 1".into()));
            }
            for j in 0..d {
                if correlation[i][j] != correlation[j][i] || correlation[i][j].abs() > 1.0 {
                    return Err(Error::InvalidParameter(
                        "correlation must be symmetric in [-1, 1]".into(),
                    ));
                }
            }
        }
        check_psd(&correlation)?;
        Ok(Self {
            spots,
            sigmas,
            correlation,
            maturities,
        })
    }

    /// Equal volatilities and spots per asset with a one-factor correlation `rho_{1k}`
    /// to asset 1 and `rho_{kl} = rho_{1k} rho_{1l}` between the others.
    pub fn one_factor(spots: Vec<f64>, sigma: f64, rho_to_first: &[f64], maturities: Vec<f64>) -> Result<Self> {
        let d = spots.len();
        if rho_to_first.len() + 1 != d {
            return Err(Error::DimensionMismatch {
                expected: d - 1,
                got: rho_to_first.len(),
            });
        }
        let mut c = vec![vec![1.0; d]; d];
        for k in 1..d {
            c[0][k] = rho_to_first[k - 1];
            c[k][0] = rho_to_first[k - 1];
            for l in 1..d {
                if l != k {
                    c[k][l] = rho_to_first[k - 1] * rho_to_first[l - 1];
                }
            }
        }
        Self::new(spots, vec![sigma; d], c, maturities)
    }

    pub fn marginal(&self, i: usize, k: usize) -> Lognormal {
        Lognormal::new(self.spots[k], self.sigmas[k], self.maturities[i]).expect("validated model")
    }

    fn z(&self, i: usize, k: usize, x: f64) -> f64 {
        let (s, t) = (self.sigmas[k], self.maturities[i]);
        ((x / self.spots[k]).ln() + 0.5 * s * s * t) / (s * t.sqrt())
    }
}

fn check_psd(c: &[Vec<f64>]) -> Result<()> {
    // LDL^T without pivoting, tolerating zero pivots on singular matrices.
    let d = c.len();
    let mut l = vec![vec![0.0; d]; d];
    let mut diag = vec![0.0; d];
    for j in 0..d {
        let mut dj = c[j][j];
        for k in 0..j {
            dj -= l[j][k] * l[j][k] * diag[k];
        }
        if dj < -1e-10 {
            return Err(Error::InvalidParameter(
                "correlation matrix is not positive semidefinite".into(),
            ));
        }
        diag[j] = dj.max(0.0);
        l[j][j] = 1.0;
        for i in j + 1..d {
            let mut v = c[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k] * diag[k];
            }
            if diag[j] <= 1e-10 {
                if v.abs() > 1e-8 {
                    return Err(Error::InvalidParameter(
                        "correlation matrix is not positive semidefinite".into(),
                    ));
                }
                l[i][j] = 0.0;
            } else {
                l[i][j] = v / diag[j];
            }
        }
    }
    Ok(())
}

/// `P(S_{t_i}^k <= K', S_{t_i}^l <= K')`.
pub fn bs_digital_pair_price(model: &BsModel, i: usize, k: usize, l: usize, strike: f64) -> Result<f64> {
    if !(strike > 0.0) {
        return Err(Error::InvalidParameter("digital strike must be positive".into()));
    }
    bivariate_normal_cdf(model.z(i, k, strike), model.z(i, l, strike), model.correlation[k][l])
}

/// Distribution function of `S_{t_i}^k`; zero for `x <= 0`.
pub fn bs_marginal_cdf(model: &BsModel, i: usize, k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    model.marginal(i, k).cdf(x)
}

/// Model quotes with symmetric absolute spread around the model price.
pub fn synthetic_curve(
    model: &BsModel,
    kind: QuoteType,
    i: usize,
    assets: &[usize],
    strikes: &[f64],
    spread: f64,
) -> Result<QuoteCurve> {
    let quotes = strikes
        .iter()
        .map(|&k| {
            let p = match kind {
                QuoteType::Call => model.marginal(i, assets[0]).call_price(k),
                QuoteType::Put => model.marginal(i, assets[0]).put_price(k),
                QuoteType::DigitalMax => bs_digital_pair_price(model, i, assets[0], assets[1], k)?,
            };
            Ok(Quote {
                strike: k,
                bid: (p - 0.5 * spread).max(0.0),
                ask: p + 0.5 * spread,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    QuoteCurve::new(kind, i, assets.to_vec(), quotes)
}

/// Diagnostics of the marginal pipeline for one asset.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    /// Quotes removed by cleaning, per maturity.
    pub removed: Vec<usize>,
    /// Means before equalization.
    pub raw_means: Vec<f64>,
    pub convex_order: Vec<ConvexOrderReport>,
}

/// Clean, differentiate, normalize, equalize means and quantize call or put curves of one
/// asset given in maturity order. `atoms = None` keeps the density atoms.
pub fn marginal_pipeline(
    curves: &[QuoteCurve],
    atoms: Option<usize>,
) -> Result<(Vec<DiscreteMarginal>, PipelineReport)> {
    let mut raw = Vec::new();
    let mut removed = Vec::new();
    for (idx, c) in curves.iter().enumerate() {
        let stage = |s: &str, e: Error| Error::MarketData(format!("curve {idx}, {s}: {e}"));
        let cleaned = clean_quotes(c).map_err(|e| stage("clean", e))?;
        removed.push(c.len() - cleaned.len());
        let dens = breeden_litzenberger(&cleaned).map_err(|e| stage("density", e))?;
        raw.push(marginal_from_density(&cleaned.strikes(), &dens).map_err(|e| stage("normalize", e))?);
    }
    let raw_means = raw.iter().map(UnivariateLaw::mean).collect();
    let (eq, _) = equalize_means(&raw, MeanTarget::Average)?;
    let out = match atoms {
        Some(n) => eq.iter().map(|m| u_quantize(m, n)).collect::<Result<Vec<_>>>()?,
        None => eq,
    };
    let convex_order = out.windows(2).map(|w| check_convex_order(&w[0], &w[1])).collect();
    Ok((
        out,
        PipelineReport {
            removed,
            raw_means,
            convex_order,
        },
    ))
}

#[derive(Debug, Deserialize, Serialize)]
struct QuoteRecord {
    asset: String,
    maturity_days: f64,
    #[serde(rename = "type")]
    kind: QuoteType,
    strike: f64,
    bid: f64,
    ask: f64,
}

/// Quote curves read from delimited text with header `asset,maturity_days,type,strike,bid,ask`.
///
/// Digital quotes name both assets as `A:B`. Assets and maturities are numbered in sorted
/// order of their labels and day counts. Crossed quotes (bid above ask) are dropped and counted.
#[derive(Clone, Debug, PartialEq)]
pub struct QuoteBook {
    pub assets: Vec<String>,
    pub maturity_days: Vec<f64>,
    pub curves: Vec<QuoteCurve>,
    pub dropped_crossed: usize,
}

impl QuoteBook {
    pub fn read(reader: impl Read, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut recs = Vec::new();
        for r in rdr.deserialize::<QuoteRecord>() {
            recs.push(r.map_err(|e| Error::MarketData(format!("quote file: {e}")))?);
        }
        let mut assets: Vec<String> = Vec::new();
        let mut days: Vec<f64> = Vec::new();
        for r in &recs {
            for a in r.asset.split(':') {
                if !assets.iter().any(|x| x == a) {
                    assets.push(a.to_string());
                }
            }
            if !days.contains(&r.maturity_days) {
                days.push(r.maturity_days);
            }
        }
        assets.sort();
        days.sort_by(f64::total_cmp);
        let mut groups: BTreeMap<(QuoteType, usize, Vec<usize>), Vec<Quote>> = BTreeMap::new();
        let mut dropped = 0;
        for r in recs {
            if r.bid > r.ask {
                dropped += 1;
                continue;
            }
            let ids: Vec<usize> = r
                .asset
                .split(':')
                .map(|a| assets.iter().position(|x| x == a).unwrap())
                .collect();
            let mi = days.iter().position(|d| *d == r.maturity_days).unwrap();
            groups.entry((r.kind, mi, ids)).or_default().push(Quote {
                strike: r.strike,
                bid: r.bid,
                ask: r.ask,
            });
        }
        let mut curves = Vec::new();
        for ((kind, mi, ids), mut qs) in groups {
            qs.sort_by(|a, b| a.strike.total_cmp(&b.strike));
            curves.push(QuoteCurve::new(kind, mi, ids, qs)?);
        }
        Ok(Self {
            assets,
            maturity_days: days,
            curves,
            dropped_crossed: dropped,
        })
    }

    pub fn write(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::MarketData(format!("quote file: {e}"));
        for c in &self.curves {
            let label = c
                .assets
                .iter()
                .map(|&a| self.assets[a].as_str())
                .collect::<Vec<_>>()
                .join(":");
            for q in c.quotes() {
                w.serialize(QuoteRecord {
                    asset: label.clone(),
                    maturity_days: self.maturity_days[c.maturity],
                    kind: c.kind,
                    strike: q.strike,
                    bid: q.bid,
                    ask: q.ask,
                })
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::MarketData(e.to_string()))
    }

    /// Call curves of one asset in maturity order, falling back to puts where no calls are quoted.
    pub fn vanilla_curves(&self, asset: usize) -> Vec<QuoteCurve> {
        (0..self.maturity_days.len())
            .filter_map(|i| {
                let pick = |k: QuoteType| {
                    self.curves
                        .iter()
                        .find(|c| c.kind == k && c.maturity == i && c.assets == [asset])
                };
                pick(QuoteType::Call).or_else(|| pick(QuoteType::Put)).cloned()
            })
            .collect()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct MarginalRecord {
    maturity: usize,
    atom: f64,
    weight: f64,
}

/// Writes `maturity,atom,weight` rows with one-based maturity numbers.
pub fn write_marginals(marginals: &[DiscreteMarginal], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (i, m) in marginals.iter().enumerate() {
        for (a, p) in m.atoms().iter().zip(m.weights()) {
            w.serialize(MarginalRecord {
                maturity: i + 1,
                atom: *a,
                weight: *p,
            })
            .map_err(|e| Error::MarketData(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::MarketData(e.to_string()))
}

/// Reads a `maturity,atom,weight` table.
pub fn read_marginals(reader: impl Read) -> Result<Vec<DiscreteMarginal>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut by: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rdr.deserialize::<MarginalRecord>() {
        let r = r.map_err(|e| Error::MarketData(format!("marginal file: {e}")))?;
        let e = by.entry(r.maturity).or_default();
        e.0.push(r.atom);
        e.1.push(r.weight);
    }
    by.into_values().map(|(a, w)| DiscreteMarginal::new(a, w)).collect()
}
