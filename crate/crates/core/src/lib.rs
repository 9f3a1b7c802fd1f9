//! Model-free price bounds for multi-asset derivatives under dependence information.

pub mod constraints;
pub mod copula;
pub mod error;
pub mod lp;
pub mod marginal;
pub mod market;
pub mod mot;
pub mod normal;
pub mod payoff;
pub mod quadrature;
pub mod quasi_expectation;
pub mod scenario;

pub use error::{Error, Result};
