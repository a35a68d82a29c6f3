//! Convex quadratic programs with a diagonal Hessian and linear constraints.
//!
//! ```text
//!     minimize    sum_i quad[i] * x[i]^2 + lin[i] * x[i]
//!     subject to  A_eq x  = b_eq
//!                 A_in x <= b_in
//!                 lower <= x <= upper
//! ```
//!
//! Multipliers follow the stationarity convention
//!
//! ```text
//!     2 quad .* x + lin + A_eq' y + A_in' z - z_lower + z_upper = 0
//! ```
//!
//! with `z, z_lower, z_upper >= 0`. Increasing `b_eq[i]` changes the optimal
//! objective at rate `-y[i]`; increasing `b_in[i]` at rate `-z[i]`.
//!
//! Every constraint row carries a [`ConstraintTag`] naming its role in the
//! dispatch models, so duals and violations can be classified without
//! re-deriving the model layout.

mod ipm;
mod kkt;
mod lmp;

pub use ipm::{solve_qp, SolverOptions};
pub use kkt::{kkt_residuals, KktReport};
pub use lmp::{lmp_from_duals, LmpError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("row {row} has {got} coefficients, expected {expected}")]
    RowLength { row: usize, got: usize, expected: usize },
    #[error("quadratic coefficient of variable {0} is negative; the program is not convex")]
    NonConvex(usize),
    #[error("variable {var} has lower bound {lower} above upper bound {upper}")]
    Bounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

/// Which side of a branch limit a row enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowSide {
    /// `flow <= F_max`
    Upper,
    /// `-flow <= F_max`
    Lower,
}

/// Role of a constraint row in a dispatch model.
///
/// Row orientation contracts (used by LMP extraction):
/// * `Balance` as an equality is written `sum(supply) = P_L`;
///   as an inequality `-sum(supply) <= -P_L`.
/// * `Adequacy` is `-sum(supply) <= -P_L`.
/// * `Branch { side: Upper }` is `flow <= F_max`, `Lower` is `-flow <= F_max`,
///   with the load contribution moved to the right-hand side.
/// * `CostEpigraph` rows do not depend on load.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintTag {
    Balance { scenario: Option<usize> },
    Adequacy,
    Branch {
        scenario: Option<usize>,
        line: usize,
        side: FlowSide,
    },
    CostEpigraph { scenario: Option<usize> },
    /// Rows outside the dispatch vocabulary.
    Other(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub tag: ConstraintTag,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    quad: Vec<f64>,
    lin: Vec<f64>,
    eq: Vec<LinearRow>,
    ineq: Vec<LinearRow>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl QuadraticProgram {
    /// `n` free variables with zero cost.
    pub fn new(n: usize) -> Self {
        QuadraticProgram {
            quad: vec![0.0; n],
            lin: vec![0.0; n],
            eq: Vec::new(),
            ineq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.quad.len()
    }

    pub fn set_cost(&mut self, var: usize, quad: f64, lin: f64) -> &mut Self {
        self.quad[var] = quad;
        self.lin[var] = lin;
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64, tag: ConstraintTag) -> usize {
        self.eq.push(LinearRow { coeffs, rhs, tag });
        self.eq.len() - 1
    }

    /// Adds `coeffs . x <= rhs`.
    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64, tag: ConstraintTag) -> usize {
        self.ineq.push(LinearRow { coeffs, rhs, tag });
        self.ineq.len() - 1
    }

    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    pub fn lin(&self) -> &[f64] {
        &self.lin
    }

    pub fn eq_rows(&self) -> &[LinearRow] {
        &self.eq
    }

    pub fn ineq_rows(&self) -> &[LinearRow] {
        &self.ineq
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn n_constraints(&self) -> usize {
        self.eq.len() + self.ineq.len()
    }

    /// Copy without the given inequality rows.
    pub fn without_ineq(&self, drop: &[usize]) -> QuadraticProgram {
        let mut qp = self.clone();
        qp.ineq = self
            .ineq
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, r)| r.clone())
            .collect();
        qp
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.quad
            .iter()
            .zip(&self.lin)
            .zip(x)
            .map(|((q, c), v)| q * v * v + c * v)
            .sum()
    }

    pub(crate) fn validate(&self) -> Result<(), QpError> {
        let n = self.n_vars();
        for (k, row) in self.eq.iter().chain(&self.ineq).enumerate() {
            if row.coeffs.len() != n {
                return Err(QpError::RowLength {
                    row: k,
                    got: row.coeffs.len(),
                    expected: n,
                });
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(QpError::NonFinite("constraint rows"));
            }
        }
        for i in 0..n {
            if !(self.quad[i] >= 0.0) {
                return Err(QpError::NonConvex(i));
            }
            if !self.quad[i].is_finite() || !self.lin[i].is_finite() {
                return Err(QpError::NonFinite("cost"));
            }
            if self.lower[i] > self.upper[i] || self.lower[i].is_nan() || self.upper[i].is_nan() {
                return Err(QpError::Bounds {
                    var: i,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    /// Largest scaled KKT residual, recomputed from the returned point.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Minimum total constraint violation found by the feasibility phase, if it ran.
    pub infeasibility: Option<f64>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
