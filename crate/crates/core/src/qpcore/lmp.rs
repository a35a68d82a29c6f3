//! Locational marginal prices from constraint multipliers.
//!
//! The price at bus `k` is the rate at which the optimal objective grows with
//! the load at `k`. Under the stationarity convention of this module that is
//! `-sum_i mult_i * d rhs_i / d P_L[k]`, where the rhs derivatives follow from
//! the row orientation contracts on [`ConstraintTag`]:
//!
//! | row                          | d rhs / d P_L[k] |
//! |------------------------------|------------------|
//! | balance equality             | `1`              |
//! | balance or adequacy, `<=`    | `-1`             |
//! | branch, upper side           | `H[r, k]`        |
//! | branch, lower side           | `-H[r, k]`       |
//! | cost epigraph                | `0`              |
//!
//! This is `lambda + sum_r (mu_lower_r - mu_upper_r) H[r, k]`: a binding
//! export limit on a line lowers prices at the buses feeding it.

use thiserror::Error;

use super::{ConstraintTag, FlowSide, LinearRow, QuadraticProgram, Solution};
use crate::netmodel::PtdfMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum LmpError {
    #[error("row {0} carries a tag with no load sensitivity: {1:?}")]
    Untagged(usize, ConstraintTag),
    #[error("branch index {line} outside the PTDF matrix with {rows} rows")]
    Branch { line: usize, rows: usize },
    #[error("solution has {got} multipliers for {expected} rows")]
    Duals { got: usize, expected: usize },
}

fn accumulate(
    rows: &[LinearRow],
    mults: &[f64],
    equality: bool,
    ptdf: &PtdfMatrix,
    offset: usize,
    lmp: &mut [f64],
) -> Result<(), LmpError> {
    if rows.len() != mults.len() {
        return Err(LmpError::Duals {
            got: mults.len(),
            expected: rows.len(),
        });
    }
    for (i, (row, &m)) in rows.iter().zip(mults).enumerate() {
        match &row.tag {
            ConstraintTag::Balance { .. } | ConstraintTag::Adequacy => {
                let d = if equality { 1.0 } else { -1.0 };
                for v in lmp.iter_mut() {
                    *v -= m * d;
                }
            }
            ConstraintTag::Branch { line, side, .. } => {
                if *line >= ptdf.n_branches() {
                    return Err(LmpError::Branch {
                        line: *line,
                        rows: ptdf.n_branches(),
                    });
                }
                let s = match side {
                    FlowSide::Upper => 1.0,
                    FlowSide::Lower => -1.0,
                };
                for (k, v) in lmp.iter_mut().enumerate() {
                    *v -= m * s * ptdf.get(*line, k);
                }
            }
            ConstraintTag::CostEpigraph { .. } => {}
            ConstraintTag::Other(_) => return Err(LmpError::Untagged(offset + i, row.tag.clone())),
        }
    }
    Ok(())
}

/// Per-bus prices, indexed like the buses of the PTDF matrix.
pub fn lmp_from_duals(qp: &QuadraticProgram, sol: &Solution, ptdf: &PtdfMatrix) -> Result<Vec<f64>, LmpError> {
    let mut lmp = vec![0.0; ptdf.n_buses()];
    accumulate(qp.eq_rows(), &sol.eq_duals, true, ptdf, 0, &mut lmp)?;
    accumulate(
        qp.ineq_rows(),
        &sol.ineq_duals,
        false,
        ptdf,
        qp.eq_rows().len(),
        &mut lmp,
    )?;
    Ok(lmp)
}
