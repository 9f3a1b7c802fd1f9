//! Payoff functions on the joint grid.

use std::fmt;

use crate::error::{Error, Result};
use crate::mot::JointGrid;

/// Reference to `S_{t_i}^k`, zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Coord {
    pub maturity: usize,
    pub asset: usize,
}

impl Coord {
    pub fn new(maturity: usize, asset: usize) -> Self {
        Self { maturity, asset }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s({},{})", self.maturity + 1, self.asset + 1)
    }
}

/// Arithmetic expression over coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Coord),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
    /// `(x)_+`
    Pos(Box<Expr>),
}

/// Supported payoff families.
#[derive(Clone, Debug, PartialEq)]
pub enum PayoffSpec {
    /// `(Σ w_j x_j - K)_+`
    BasketCall {
        coords: Vec<Coord>,
        weights: Vec<f64>,
        strike: f64,
    },
    /// `(K - Σ w_j x_j)_+`
    BasketPut {
        coords: Vec<Coord>,
        weights: Vec<f64>,
        strike: f64,
    },
    /// `(min_j x_j - K)_+`
    MinCall {
        coords: Vec<Coord>,
        strike: f64,
    },
    /// `(K - min_j x_j)_+`
    MinPut {
        coords: Vec<Coord>,
        strike: f64,
    },
    /// `(mean_j x_j - K)_+`
    AvgBasket {
        coords: Vec<Coord>,
        strike: f64,
    },
    /// `scale · (b1 - a1)_+ · (b2 - a2)_+` for `pairs = [(a1, b1), (a2, b2)]`.
    SpreadProduct {
        pairs: Vec<(Coord, Coord)>,
        scale: f64,
    },
    /// `Π ((to - from) / from)^2` over `(from, to)` pairs.
    SquaredReturnsProduct {
        pairs: Vec<(Coord, Coord)>,
    },
    /// `1{max_j x_j <= K}`
    DigitalMaxBelow {
        coords: Vec<Coord>,
        strike: f64,
    },
    Custom(Expr),
}

impl PayoffSpec {
    fn coords(&self) -> Vec<Coord> {
        match self {
            Self::BasketCall { coords, .. }
            | Self::BasketPut { coords, .. }
            | Self::MinCall { coords, .. }
            | Self::MinPut { coords, .. }
            | Self::AvgBasket { coords, .. }
            | Self::DigitalMaxBelow { coords, .. } => coords.clone(),
            Self::SpreadProduct { pairs, .. } | Self::SquaredReturnsProduct { pairs } => {
                pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
            }
            Self::Custom(e) => {
                let mut v = Vec::new();
                e.collect_vars(&mut v);
                v
            }
        }
    }

    fn divisors(&self) -> Vec<Coord> {
        match self {
            Self::SquaredReturnsProduct { pairs } => pairs.iter().map(|p| p.0).collect(),
            _ => Vec::new(),
        }
    }

    /// Validates references and shapes against the grid's dimensions.
    pub fn check(&self, maturities: usize, assets: usize) -> Result<()> {
        for c in self.coords() {
            if c.maturity >= maturities || c.asset >= assets {
                return Err(Error::InvalidParameter(format!("unresolved reference {c}")));
            }
        }
        match self {
            Self::BasketCall { coords, weights, .. } | Self::BasketPut { coords, weights, .. }
                if coords.len() != weights.len() =>
            {
                Err(Error::DimensionMismatch {
                    expected: coords.len(),
                    got: weights.len(),
                })
            }
            Self::MinCall { coords, .. }
            | Self::MinPut { coords, .. }
            | Self::AvgBasket { coords, .. }
            | Self::DigitalMaxBelow { coords, .. }
                if coords.is_empty() =>
            {
                Err(Error::InvalidParameter("payoff without coordinates".into()))
            }
            _ => Ok(()),
        }
    }

    /// Value at a point given by a coordinate lookup.
    pub fn eval_with(&self, x: impl Fn(Coord) -> f64) -> Result<f64> {
        let v = match self {
            Self::BasketCall {
                coords,
                weights,
                strike,
            } => (coords.iter().zip(weights).map(|(&c, w)| w * x(c)).sum::<f64>() - strike).max(0.0),
            Self::BasketPut {
                coords,
                weights,
                strike,
            } => (strike - coords.iter().zip(weights).map(|(&c, w)| w * x(c)).sum::<f64>()).max(0.0),
            Self::MinCall { coords, strike } => {
                (coords.iter().map(|&c| x(c)).fold(f64::INFINITY, f64::min) - strike).max(0.0)
            }
            Self::MinPut { coords, strike } => {
                (strike - coords.iter().map(|&c| x(c)).fold(f64::INFINITY, f64::min)).max(0.0)
            }
            Self::AvgBasket { coords, strike } => {
                (coords.iter().map(|&c| x(c)).sum::<f64>() / coords.len() as f64 - strike).max(0.0)
            }
            Self::SpreadProduct { pairs, scale } => {
                scale * pairs.iter().map(|&(a, b)| (x(b) - x(a)).max(0.0)).product::<f64>()
            }
            Self::SquaredReturnsProduct { pairs } => pairs
                .iter()
                .map(|&(a, b)| {
                    let r = (x(b) - x(a)) / x(a);
                    r * r
                })
                .product(),
            Self::DigitalMaxBelow { coords, strike } => {
                let m = coords.iter().map(|&c| x(c)).fold(f64::NEG_INFINITY, f64::max);
                if m <= *strike {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Custom(e) => e.eval(&x)?,
        };
        if !v.is_finite() {
            return Err(Error::Numerical("payoff is not finite".into()));
        }
        Ok(v)
    }
}

/// Payoff value at every grid cell.
pub fn evaluate_payoff(spec: &PayoffSpec, grid: &JointGrid) -> Result<Vec<f64>> {
    spec.check(grid.maturities(), grid.assets())?;
    for c in spec.divisors() {
        if grid.atoms(grid.axis(c.maturity, c.asset)).contains(&0.0) {
            return Err(Error::InvalidParameter(format!(
                "division by zero: {c} has an atom at 0"
            )));
        }
    }
    let vals = grid.evaluate(|p| {
        spec.eval_with(|c| p[grid.axis(c.maturity, c.asset)])
            .unwrap_or(f64::NAN)
    });
    if let Some(cell) = vals.iter().position(|v| v.is_nan()) {
        let p = grid.point(cell);
        return Err(spec
            .eval_with(|c| p[grid.axis(c.maturity, c.asset)])
            .err()
            .unwrap_or_else(|| Error::Numerical("payoff is not finite".into())));
    }
    Ok(vals)
}

impl Expr {
    fn collect_vars(&self, out: &mut Vec<Coord>) {
        match self {
            Self::Const(_) => {}
            Self::Var(c) => out.push(*c),
            Self::Neg(a) | Self::Pos(a) => a.collect_vars(out),
            Self::Add(a, b) | Self::Sub(a, b) | Self::Mul(a, b) | Self::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Self::Max(v) | Self::Min(v) => v.iter().for_each(|e| e.collect_vars(out)),
        }
    }

    pub fn eval(&self, x: &impl Fn(Coord) -> f64) -> Result<f64> {
        Ok(match self {
            Self::Const(v) => *v,
            Self::Var(c) => x(*c),
            Self::Neg(a) => -a.eval(x)?,
            Self::Pos(a) => a.eval(x)?.max(0.0),
            Self::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Self::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Self::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Self::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(Error::InvalidParameter("division by zero".into()));
                }
                a.eval(x)? / den
            }
            Self::Max(v) => {
                let mut m = f64::NEG_INFINITY;
                for e in v {
                    m = m.max(e.eval(x)?);
                }
                m
            }
            Self::Min(v) => {
                let mut m = f64::INFINITY;
                for e in v {
                    m = m.min(e.eval(x)?);
                }
                m
            }
        })
    }

    /// Parses expressions such as `0.25 * pos(s(2,2) - s(2,1)) * max(s(1,2) - s(1,1), 0)`.
    ///
    /// `s(i,k)` refers to maturity `i` and asset `k`, both one-based. Functions:
    /// `max`, `min` (one or more arguments) and `pos`.
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            s: src.as_bytes(),
            i: 0,
        };
        let e = p.expr()?;
        p.ws();
        if p.i != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::InvalidParameter(format!("expression: {msg} at offset {}", self.i))
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.i += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.i += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.i += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.i += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.i += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect(b'(')?;
        let mut v = vec![self.expr()?];
        while self.peek() == Some(b',') {
            self.i += 1;
            v.push(self.expr()?);
        }
        self.expect(b')')?;
        Ok(v)
    }

    fn index(&mut self) -> Result<usize> {
        self.ws();
        let start = self.i;
        while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
            self.i += 1;
        }
        let n: usize = std::str::from_utf8(&self.s[start..self.i])
            .unwrap()
            .parse()
            .map_err(|_| self.err("expected index"))?;
        if n == 0 {
            return Err(self.err("indices are one-based"));
        }
        Ok(n - 1)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() {
                    let c = self.s[self.i];
                    let exp_sign =
                        (c == b'-' || c == b'+') && self.i > start && matches!(self.s[self.i - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.i += 1;
                    } else {
                        break;
                    }
                }
                let txt = std::str::from_utf8(&self.s[start..self.i]).unwrap();
                txt.parse().map(Expr::Const).map_err(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_alphanumeric() {
                    self.i += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.i])
                    .unwrap()
                    .to_ascii_lowercase();
                match name.as_str() {
                    "s" => {
                        self.expect(b'(')?;
                        let i = self.index()?;
                        self.expect(b',')?;
                        let k = self.index()?;
                        self.expect(b')')?;
                        Ok(Expr::Var(Coord::new(i, k)))
                    }
                    "max" => Ok(Expr::Max(self.args()?)),
                    "min" => Ok(Expr::Min(self.args()?)),
                    "pos" => {
                        let mut a = self.args()?;
                        if a.len() != 1 {
                            return Err(self.err("pos takes one argument"));
                        }
                        Ok(Expr::Pos(Box::new(a.pop().unwrap())))
                    }
                    _ => Err(self.err(&format!("unknown name '{name}'"))),
                }
            }
            _ => Err(self.err("unexpected token")),
        }
    }
}

/// Payoffs on two maturities and two assets used in the correlation examples.
pub mod two_by_two {
    use super::{Coord, PayoffSpec};

    fn all() -> Vec<Coord> {
        vec![Coord::new(0, 0), Coord::new(1, 0), Coord::new(0, 1), Coord::new(1, 1)]
    }

    /// `(mean of all four - K)_+`
    pub fn avg_call(strike: f64) -> PayoffSpec {
        PayoffSpec::AvgBasket { coords: all(), strike }
    }

    /// `(K - min of all four)_+`
    pub fn min_put(strike: f64) -> PayoffSpec {
        PayoffSpec::MinPut { coords: all(), strike }
    }

    /// `¼ (S_{t2}^2 - S_{t2}^1)_+ (S_{t1}^2 - S_{t1}^1)_+`
    pub fn spread_product() -> PayoffSpec {
        PayoffSpec::SpreadProduct {
            pairs: vec![
                (Coord::new(1, 0), Coord::new(1, 1)),
                (Coord::new(0, 0), Coord::new(0, 1)),
            ],
            scale: 0.25,
        }
    }

    /// Product of squared returns of both assets from `t1` to `t2`.
    pub fn squared_returns() -> PayoffSpec {
        PayoffSpec::SquaredReturnsProduct {
            pairs: vec![
                (Coord::new(0, 0), Coord::new(1, 0)),
                (Coord::new(0, 1), Coord::new(1, 1)),
            ],
        }
    }
}
