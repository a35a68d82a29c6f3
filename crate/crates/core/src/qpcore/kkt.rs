//! Optimality certificate checked directly from the program data and the
//! returned primal/dual point. Nothing here depends on how the solver got there.

use super::{QuadraticProgram, Solution};

/// Scaled KKT residuals.
///
/// * `primal`: largest equality/inequality/bound violation over `1 + max|rhs|`.
/// * `dual`: largest stationarity residual over `1 + max|lin|`.
/// * `dual_sign`: largest negative part of an inequality or bound multiplier,
///   same scale as `dual`.
/// * `complementarity`: largest `|multiplier * slack|` over `1 + |objective|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub primal: f64,
    pub dual: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.dual_sign)
            .max(self.complementarity)
    }
}

pub fn kkt_residuals(qp: &QuadraticProgram, sol: &Solution) -> KktReport {
    let x = &sol.x;
    let n = qp.n_vars();

    let rhs_scale = 1.0
        + qp
            .eq_rows()
            .iter()
            .chain(qp.ineq_rows())
            .map(|r| r.rhs.abs())
            .chain(qp.lower().iter().chain(qp.upper()).filter(|v| v.is_finite()).map(|v| v.abs()))
            .fold(0.0, f64::max);
    let cost_scale = 1.0 + qp.lin().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let obj_scale = 1.0 + qp.objective(x).abs();

    let mut primal = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut sign = 0.0_f64;
    let mut grad: Vec<f64> = (0..n).map(|i| 2.0 * qp.quad()[i] * x[i] + qp.lin()[i]).collect();

    for (row, &y) in qp.eq_rows().iter().zip(&sol.eq_duals) {
        primal = primal.max((row.eval(x) - row.rhs).abs());
        for (g, a) in grad.iter_mut().zip(&row.coeffs) {
            *g += a * y;
        }
    }
    for (row, &z) in qp.ineq_rows().iter().zip(&sol.ineq_duals) {
        let slack = row.rhs - row.eval(x);
        primal = primal.max(-slack);
        sign = sign.max(-z);
        comp = comp.max((z * slack).abs());
        for (g, a) in grad.iter_mut().zip(&row.coeffs) {
            *g += a * z;
        }
    }
    for i in 0..n {
        let (lo, hi) = (qp.lower()[i], qp.upper()[i]);
        let (zl, zu) = (sol.lower_duals[i], sol.upper_duals[i]);
        grad[i] += zu - zl;
        sign = sign.max(-zl).max(-zu);
        if lo.is_finite() {
            primal = primal.max(lo - x[i]);
            comp = comp.max((zl * (x[i] - lo)).abs());
        } else {
            comp = comp.max(zl.abs() * 1e300);
        }
        if hi.is_finite() {
            primal = primal.max(x[i] - hi);
            comp = comp.max((zu * (hi - x[i])).abs());
        } else {
            comp = comp.max(zu.abs() * 1e300);
        }
    }
    let dual = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));

    KktReport {
        primal: primal.max(0.0) / rhs_scale,
        dual: dual / cost_scale,
        dual_sign: sign.max(0.0) / cost_scale,
        complementarity: comp / obj_scale,
    }
}
