//! TOML configuration schema.

use std::path::{Path, PathBuf};

use depbounds::constraints::Orthant;
use depbounds::mot::{Sides, DEFAULT_GRID_CAP};
use depbounds::payoff::{Coord, Expr, PayoffSpec};
use depbounds::scenario::{CopulaFamily, Q2Source};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub marginals: MarginalsConfig,
    #[serde(default)]
    pub payoffs: Vec<PayoffConfig>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub solve: SolveConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarginalsConfig {
    /// Atoms given directly.
    Inline { spot: Vec<f64>, laws: Vec<InlineLaw> },
    /// Quote files run through the marginal pipeline.
    Quotes {
        files: Vec<PathBuf>,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default = "default_atoms")]
        atoms: usize,
    },
    /// Lognormal marginals quantized to `atoms` points each.
    BlackScholes {
        spots: Vec<f64>,
        sigmas: Vec<f64>,
        /// Years.
        maturities: Vec<f64>,
        correlation: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_atoms")]
        atoms: usize,
    },
}

fn default_delimiter() -> char {
    ','
}

fn default_atoms() -> usize {
    20
}

/// One-based maturity and asset.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineLaw {
    pub maturity: usize,
    pub asset: usize,
    pub atoms: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    BasketCall,
    BasketPut,
    MinCall,
    MinPut,
    AvgCall,
    SpreadProduct,
    SquaredReturns,
    DigitalMaxBelow,
    Expr,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub label: String,
    pub kind: PayoffKind,
    #[serde(default)]
    pub coords: Vec<String>,
    pub weights: Option<Vec<f64>>,
    pub strike: Option<f64>,
    pub scale: Option<f64>,
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
    pub expr: Option<String>,
}

/// Parses `s(i,k)` with one-based indices.
pub fn parse_coord(s: &str) -> Result<Coord, CliError> {
    match Expr::parse(s) {
        Ok(Expr::Var(c)) => Ok(c),
        _ => Err(CliError::Input(format!("expected a reference s(i,k), got {s:?}"))),
    }
}

fn need<T: Copy>(v: Option<T>, what: &str, label: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Input(format!("payoff {label}: missing {what}")))
}

impl PayoffConfig {
    pub fn has_strike(&self) -> bool {
        !matches!(
            self.kind,
            PayoffKind::SpreadProduct | PayoffKind::SquaredReturns | PayoffKind::Expr
        )
    }

    /// Payoff with the strike optionally replaced.
    pub fn to_spec(&self, strike: Option<f64>) -> Result<PayoffSpec, CliError> {
        let label = self.label.as_str();
        let coords = self
            .coords
            .iter()
            .map(|c| parse_coord(c))
            .collect::<Result<Vec<_>, _>>()?;
        let pairs = self
            .pairs
            .iter()
            .map(|[a, b]| Ok((parse_coord(a)?, parse_coord(b)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let k = || need(strike.or(self.strike), "strike", label);
        let weights = || {
            self.weights
                .clone()
                .ok_or_else(|| CliError::Input(format!("payoff {label}: missing weights")))
        };
        Ok(match self.kind {
            PayoffKind::BasketCall => PayoffSpec::BasketCall {
                coords,
                weights: weights()?,
                strike: k()?,
            },
            PayoffKind::BasketPut => PayoffSpec::BasketPut {
                coords,
                weights: weights()?,
                strike: k()?,
            },
            PayoffKind::MinCall => PayoffSpec::MinCall { coords, strike: k()? },
            PayoffKind::MinPut => PayoffSpec::MinPut { coords, strike: k()? },
            PayoffKind::AvgCall => PayoffSpec::AvgBasket { coords, strike: k()? },
            PayoffKind::DigitalMaxBelow => PayoffSpec::DigitalMaxBelow { coords, strike: k()? },
            PayoffKind::SpreadProduct => PayoffSpec::SpreadProduct {
                pairs,
                scale: self.scale.unwrap_or(1.0),
            },
            PayoffKind::SquaredReturns => PayoffSpec::SquaredReturnsProduct { pairs },
            PayoffKind::Expr => {
                let src = self
                    .expr
                    .as_deref()
                    .ok_or_else(|| CliError::Input(format!("payoff {label}: missing expr")))?;
                PayoffSpec::Custom(Expr::parse(src).map_err(|e| CliError::Input(format!("payoff {label}: {e}")))?)
            }
        })
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    /// Scenario whose bounds this one must tighten.
    pub baseline: Option<String>,
    #[serde(default)]
    pub constant_correlation: bool,
    #[serde(default)]
    pub correlation: Vec<PinConfig>,
    #[serde(default)]
    pub correlation_lower_bound: Vec<LowerBoundConfig>,
    #[serde(default)]
    pub basket: Vec<BasketConfig>,
    #[serde(default)]
    pub digital: Vec<DigitalConfig>,
    pub model_digitals: Option<ModelDigitalsConfig>,
    /// Use the `DMAX` quotes of the quote files.
    #[serde(default)]
    pub quoted_digitals: bool,
    pub copula_box: Option<BoxConfig>,
    pub ccd: Option<CcdConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinConfig {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

/// Lower bound on the correlation of the first two assets at a one-based maturity.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub maturity: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasketConfig {
    pub a: String,
    pub b: String,
    pub weights: [f64; 2],
    pub strike: f64,
    pub price: f64,
}

/// Price of `1{max(S^k, S^l) <= strike}`; indices one-based.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitalConfig {
    pub maturity: usize,
    pub assets: [usize; 2],
    pub strike: f64,
    pub price: f64,
}

/// Digital prices generated from the Black–Scholes source, optionally under another correlation.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDigitalsConfig {
    pub maturity: usize,
    pub pairs: Vec<[usize; 2]>,
    pub strikes: Vec<f64>,
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Correlation of every asset with the first; the others get its square.
    pub one_factor: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OrthantName {
    Lower,
    Upper,
}

impl From<OrthantName> for Orthant {
    fn from(o: OrthantName) -> Self {
        match o {
            OrthantName::Lower => Orthant::Lower,
            OrthantName::Upper => Orthant::Upper,
        }
    }
}

/// Either `source = "digitals"` or a pair of families.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub order: OrthantName,
    pub source: Option<String>,
    pub lower: Option<String>,
    pub upper: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdConfig {
    pub maturity: usize,
    pub reference: usize,
    /// A family name or `digitals`.
    pub q2: String,
}

/// `frechet-lower`, `frechet-upper`, `independence` or `gaussian(rho)`.
pub fn parse_family(s: &str) -> Result<CopulaFamily, CliError> {
    let t = s.trim();
    Ok(match t {
        "frechet-lower" => CopulaFamily::FrechetLower,
        "frechet-upper" => CopulaFamily::FrechetUpper,
        "independence" => CopulaFamily::Independence,
        _ => {
            let rho = t
                .strip_prefix("gaussian(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|r| r.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Input(format!("unknown copula family {s:?}")))?;
            CopulaFamily::Gaussian(rho)
        }
    })
}

pub fn parse_q2(s: &str) -> Result<Q2Source, CliError> {
    if s.trim() == "digitals" {
        Ok(Q2Source::Digitals)
    } else {
        parse_family(s).map(Q2Source::Family)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lp,
    Analytic,
    Both,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SidesName {
    Both,
    Lower,
    Upper,
}

impl From<SidesName> for Sides {
    fn from(s: SidesName) -> Self {
        match s {
            SidesName::Both => Sides::Both,
            SidesName::Lower => Sides::Lower,
            SidesName::Upper => Sides::Upper,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_sides")]
    pub sides: SidesName,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_grid_cap")]
    pub grid_cap: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Lattice size for analytic bounds on continuous laws.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_sides() -> SidesName {
    SidesName::Both
}
fn default_tol() -> f64 {
    1e-9
}
fn default_grid_cap() -> usize {
    DEFAULT_GRID_CAP
}
fn default_method() -> Method {
    Method::Lp
}
fn default_resolution() -> usize {
    4096
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            sides: default_sides(),
            tol: default_tol(),
            grid_cap: default_grid_cap(),
            method: default_method(),
            resolution: default_resolution(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AxisKind {
    Correlation,
    Strike,
}

/// Either `values` or `from`, `to`, `steps`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub kind: AxisKind,
    pub a: Option<String>,
    pub b: Option<String>,
    pub values: Option<Vec<f64>>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
}

impl AxisConfig {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let pts = match (&self.values, self.from, self.to, self.steps) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) if n >= 1 => {
                if n == 1 {
                    vec![a]
                } else {
                    (0..n).map(|j| a + (b - a) * j as f64 / (n - 1) as f64).collect()
                }
            }
            _ => {
                return Err(CliError::Input(
                    "sweep axis needs `values` or `from`, `to` and `steps >= 1`".into(),
                ))
            }
        };
        if pts.is_empty() || pts.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Input("sweep axis values must be finite and non-empty".into()));
        }
        Ok(pts)
    }

    pub fn name(&self) -> String {
        match self.kind {
            AxisKind::Strike => "strike".into(),
            AxisKind::Correlation => format!(
                "rho[{};{}]",
                self.a.as_deref().unwrap_or("?"),
                self.b.as_deref().unwrap_or("?")
            ),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative to the configuration file.
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Write wall times; off gives byte-identical files across runs.
    #[serde(default = "default_true")]
    pub timings: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out(),
            timings: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = Config::parse(
            r#"
            [marginals]
            source = "inline"
            spot = [10.0]
            laws = [{ maturity = 1, asset = 1, atoms = [9.0, 11.0] }]

            [[payoffs]]
            label = "one"
            kind = "expr"
            expr = "1"
            "#,
        )
        .unwrap();
        assert!(matches!(c.marginals, MarginalsConfig::Inline { .. }));
        assert_eq!(c.solve.method, Method::Lp);
        assert!(c.output.timings);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::parse(
            r#"
            [marginals]
            source = "inline"
            spot = [10.0]
            laws = []
            colour = 3
            "#,
        );
        assert!(err.is_err());
        assert!(Config::parse("[marginals]\nsource = \"nowhere\"").is_err());
    }

    #[test]
    fn families_and_coords() {
        assert_eq!(
            parse_family("gaussian( -0.25 )").unwrap(),
            CopulaFamily::Gaussian(-0.25)
        );
        assert_eq!(parse_family("independence").unwrap(), CopulaFamily::Independence);
        assert!(parse_family("gumbel(2)").is_err());
        assert_eq!(parse_q2("digitals").unwrap(), Q2Source::Digitals);
        assert_eq!(parse_coord("s(2,1)").unwrap(), Coord::new(1, 0));
        assert!(parse_coord("s(1,1)+1").is_err());
    }

    #[test]
    fn axis_points() {
        let ax = AxisConfig {
            kind: AxisKind::Strike,
            a: None,
            b: None,
            values: None,
            from: Some(1.0),
            to: Some(2.0),
            steps: Some(3),
        };
        assert_eq!(ax.points().unwrap(), vec![1.0, 1.5, 2.0]);
        let bad = AxisConfig {
            values: Some(vec![f64::NAN]),
            from: None,
            to: None,
            steps: None,
            ..ax.clone()
        };
        assert!(bad.points().is_err());
    }

    #[test]
    fn payoff_strike_override() {
        let p = PayoffConfig {
            label: "m".into(),
            kind: PayoffKind::MinCall,
            coords: vec!["s(1,1)".into(), "s(1,2)".into()],
            weights: None,
            strike: Some(10.0),
            scale: None,
            pairs: vec![],
            expr: None,
        };
        assert_eq!(
            p.to_spec(Some(12.0)).unwrap(),
            PayoffSpec::MinCall {
                coords: vec![Coord::new(0, 0), Coord::new(0, 1)],
                strike: 12.0
            }
        );
        let q = PayoffConfig { strike: None, ..p };
        assert!(q.to_spec(None).is_err());
    }
}
