//! Dense Mehrotra predictor-corrector interior point method.
//!
//! Bounds become inequality rows and fixed variables become equality rows.
//! Each Newton system is reduced to the `(n + m_eq)` augmented system
//!
//! ```text
//!     [ Q + G' (Z/W) G    E' ] [dx]
//!     [ E                 0  ] [dy]
//! ```
//!
//! and factored once per iteration by LU. When the iteration cap is reached
//! without a certificate, an LP feasibility phase decides between infeasible,
//! unbounded and numerical failure.

use nalgebra::{DMatrix, DVector};

use super::kkt::kkt_residuals;
use super::{ConstraintTag, QpError, QuadraticProgram, Solution, Status};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum EqOrigin {
    Row(usize),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy)]
enum IneqOrigin {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

/// Row-equilibrated standard form `min 1/2 x'Qx + c'x, Ex = f, Gx <= g`.
struct StdForm {
    q: DVector<f64>,
    c: DVector<f64>,
    e: DMatrix<f64>,
    f: DVector<f64>,
    g_mat: DMatrix<f64>,
    g: DVector<f64>,
    eq_origin: Vec<EqOrigin>,
    eq_scale: Vec<f64>,
    ineq_origin: Vec<IneqOrigin>,
    ineq_scale: Vec<f64>,
    x0: DVector<f64>,
}

fn row_scale(coeffs: &[f64]) -> f64 {
    let m = coeffs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

impl StdForm {
    fn build(qp: &QuadraticProgram) -> StdForm {
        let n = qp.n_vars();
        let (lower, upper) = (qp.lower(), qp.upper());
        let fixed: Vec<bool> = (0..n)
            .map(|i| lower[i].is_finite() && upper[i] - lower[i] <= 1e-12 * (1.0 + lower[i].abs()))
            .collect();

        let mut eq_rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut eq_origin = Vec::new();
        for (k, row) in qp.eq_rows().iter().enumerate() {
            eq_rows.push((row.coeffs.clone(), row.rhs));
            eq_origin.push(EqOrigin::Row(k));
        }
        for i in (0..n).filter(|&i| fixed[i]) {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            eq_rows.push((a, 0.5 * (lower[i] + upper[i])));
            eq_origin.push(EqOrigin::Fixed(i));
        }

        let mut in_rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut ineq_origin = Vec::new();
        for (k, row) in qp.ineq_rows().iter().enumerate() {
            in_rows.push((row.coeffs.clone(), row.rhs));
            ineq_origin.push(IneqOrigin::Row(k));
        }
        for i in (0..n).filter(|&i| !fixed[i]) {
            if lower[i].is_finite() {
                let mut a = vec![0.0; n];
                a[i] = -1.0;
                in_rows.push((a, -lower[i]));
                ineq_origin.push(IneqOrigin::Lower(i));
            }
            if upper[i].is_finite() {
                let mut a = vec![0.0; n];
                a[i] = 1.0;
                in_rows.push((a, upper[i]));
                ineq_origin.push(IneqOrigin::Upper(i));
            }
        }

        let eq_scale: Vec<f64> = eq_rows.iter().map(|(a, _)| row_scale(a)).collect();
        let ineq_scale: Vec<f64> = in_rows.iter().map(|(a, _)| row_scale(a)).collect();
        let e = DMatrix::from_fn(eq_rows.len(), n, |r, c| eq_rows[r].0[c] / eq_scale[r]);
        let f = DVector::from_fn(eq_rows.len(), |r, _| eq_rows[r].1 / eq_scale[r]);
        let g_mat = DMatrix::from_fn(in_rows.len(), n, |r, c| in_rows[r].0[c] / ineq_scale[r]);
        let g = DVector::from_fn(in_rows.len(), |r, _| in_rows[r].1 / ineq_scale[r]);

        let x0 = DVector::from_fn(n, |i, _| {
            let (lo, hi) = (lower[i], upper[i]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            }
        });

        StdForm {
            q: DVector::from_iterator(n, qp.quad().iter().map(|v| 2.0 * v)),
            c: DVector::from_column_slice(qp.lin()),
            e,
            f,
            g_mat,
            g,
            eq_origin,
            eq_scale,
            ineq_origin,
            ineq_scale,
            x0,
        }
    }
}

struct IpmOutcome {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    iterations: usize,
    diverged: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn run_ipm(sf: &StdForm, tol: f64, max_iter: usize) -> IpmOutcome {
    let n = sf.q.len();
    let me = sf.f.len();
    let m = sf.g.len();

    let mut x = sf.x0.clone();
    let mut y = DVector::<f64>::zeros(me);
    let gx = &sf.g_mat * &x;
    let mut w = DVector::from_fn(m, |i, _| (sf.g[i] - gx[i]).max(1.0));
    let mut z = DVector::<f64>::from_element(m, 1.0);

    let f_scale = 1.0 + inf_norm(&sf.f);
    let g_scale = 1.0 + inf_norm(&sf.g);
    let c_scale = 1.0 + inf_norm(&sf.c);
    let reg = 1e-11;

    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> = None;
    let mut iterations = 0;
    let mut diverged = false;

    for it in 0..=max_iter {
        iterations = it;
        let rd = sf.q.component_mul(&x) + &sf.c + sf.e.tr_mul(&y) + sf.g_mat.tr_mul(&z);
        let re = &sf.e * &x - &sf.f;
        let rg = &sf.g_mat * &x + &w - &sf.g;
        let obj = 0.5 * x.dot(&sf.q.component_mul(&x)) + sf.c.dot(&x);
        let comp_max = w.iter().zip(z.iter()).fold(0.0_f64, |a, (wi, zi)| a.max(wi * zi));

        let pinf = (inf_norm(&re) / f_scale).max(inf_norm(&rg) / g_scale);
        let dinf = inf_norm(&rd) / c_scale;
        let gap = comp_max / (1.0 + obj.abs());
        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone()));
        }
        if merit <= tol || it == max_iter {
            break;
        }
        if inf_norm(&x) > 1e13 || inf_norm(&z) > 1e16 || !merit.is_finite() {
            diverged = true;
            break;
        }

        let mu = if m > 0 { w.dot(&z) / m as f64 } else { 0.0 };
        let d = z.component_div(&w);

        // Augmented matrix [M E'; E -reg I].
        let mut scaled = sf.g_mat.clone();
        for (mut row, di) in scaled.row_iter_mut().zip(d.iter()) {
            row *= di.sqrt();
        }
        let mut mmat = scaled.tr_mul(&scaled);
        for i in 0..n {
            mmat[(i, i)] += sf.q[i] + reg;
        }
        let mut kmat = DMatrix::<f64>::zeros(n + me, n + me);
        kmat.view_mut((0, 0), (n, n)).copy_from(&mmat);
        kmat.view_mut((n, 0), (me, n)).copy_from(&sf.e);
        kmat.view_mut((0, n), (n, me)).copy_from(&sf.e.transpose());
        for i in 0..me {
            kmat[(n + i, n + i)] = -reg;
        }
        let lu = kmat.lu();

        let solve = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            let t = (rc + z.component_mul(&rg)).component_div(&w);
            let top = -&rd - sf.g_mat.tr_mul(&t);
            let mut rhs = DVector::<f64>::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&top);
            rhs.rows_mut(n, me).copy_from(&(-&re));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let dw = -&rg - &sf.g_mat * &dx;
            let dz = (rc - z.component_mul(&dw)).component_div(&w);
            if dx.iter().chain(dz.iter()).any(|v| !v.is_finite()) {
                return None;
            }
            Some((dx, dy, dz, dw))
        };

        // Predictor.
        let rc_aff = -w.component_mul(&z);
        let Some((_, _, dz_a, dw_a)) = solve(&rc_aff) else {
            break;
        };
        let alpha_aff = 1.0_f64.min(max_step(&w, &dw_a)).min(max_step(&z, &dz_a));
        let sigma = if m > 0 {
            let w_a = &w + alpha_aff * &dw_a;
            let z_a = &z + alpha_aff * &dz_a;
            let mu_aff = w_a.dot(&z_a) / m as f64;
            (mu_aff / mu).powi(3).min(1.0)
        } else {
            0.0
        };

        // Corrector.
        let rc = DVector::from_fn(m, |i, _| -w[i] * z[i] + sigma * mu - dw_a[i] * dz_a[i]);
        let Some((dx, dy, dz, dw)) = solve(&rc) else {
            break;
        };
        let eta = 0.9_f64.max(1.0 - 10.0 * mu.min(0.01));
        let alpha = 1.0_f64.min(eta * max_step(&w, &dw)).min(eta * max_step(&z, &dz));

        x += alpha * &dx;
        y += alpha * &dy;
        w += alpha * &dw;
        z += alpha * &dz;
        // Keep strict interiority against round-off.
        for v in w.iter_mut().chain(z.iter_mut()) {
            if *v <= 1e-300 {
                *v = 1e-300;
            }
        }
    }

    let (_, x, y, z) = best.expect("at least one iterate");
    IpmOutcome {
        x,
        y,
        z,
        iterations,
        diverged,
    }
}

fn unpack(qp: &QuadraticProgram, sf: &StdForm, out: &IpmOutcome) -> Solution {
    let n = qp.n_vars();
    let mut sol = Solution {
        status: Status::NumericalFailure,
        x: out.x.iter().copied().collect(),
        objective: 0.0,
        eq_duals: vec![0.0; qp.eq_rows().len()],
        ineq_duals: vec![0.0; qp.ineq_rows().len()],
        lower_duals: vec![0.0; n],
        upper_duals: vec![0.0; n],
        kkt_residual: f64::INFINITY,
        iterations: out.iterations,
        infeasibility: None,
    };
    // Fixed variables sit exactly on their value.
    for (k, origin) in sf.eq_origin.iter().enumerate() {
        let y = out.y[k] / sf.eq_scale[k];
        match *origin {
            EqOrigin::Row(r) => sol.eq_duals[r] = y,
            EqOrigin::Fixed(i) => {
                sol.x[i] = 0.5 * (qp.lower()[i] + qp.upper()[i]);
                if y >= 0.0 {
                    sol.upper_duals[i] = y;
                } else {
                    sol.lower_duals[i] = -y;
                }
            }
        }
    }
    for (k, origin) in sf.ineq_origin.iter().enumerate() {
        let z = out.z[k].max(0.0) / sf.ineq_scale[k];
        match *origin {
            IneqOrigin::Row(r) => sol.ineq_duals[r] = z,
            IneqOrigin::Lower(i) => sol.lower_duals[i] = z,
            IneqOrigin::Upper(i) => sol.upper_duals[i] = z,
        }
    }
    sol.objective = qp.objective(&sol.x);
    sol.kkt_residual = kkt_residuals(qp, &sol).max();
    sol
}

/// Minimum total violation `sum|E x - f| + sum max(G x - g, 0)` within bounds.
fn feasibility_phase(qp: &QuadraticProgram, opts: &SolverOptions) -> Option<f64> {
    let n = qp.n_vars();
    let me = qp.eq_rows().len();
    let mi = qp.ineq_rows().len();
    let total = n + 2 * me + mi;
    let mut lp = QuadraticProgram::new(total);
    for i in 0..n {
        lp.set_bounds(i, qp.lower()[i], qp.upper()[i]);
    }
    for k in n..total {
        lp.set_cost(k, 0.0, 1.0).set_bounds(k, 0.0, f64::INFINITY);
    }
    for (r, row) in qp.eq_rows().iter().enumerate() {
        let mut a = row.coeffs.clone();
        a.resize(total, 0.0);
        a[n + 2 * r] = 1.0;
        a[n + 2 * r + 1] = -1.0;
        lp.add_eq(a, row.rhs, ConstraintTag::Other("phase1".into()));
    }
    for (r, row) in qp.ineq_rows().iter().enumerate() {
        let mut a = row.coeffs.clone();
        a.resize(total, 0.0);
        a[n + 2 * me + r] = -1.0;
        lp.add_le(a, row.rhs, ConstraintTag::Other("phase1".into()));
    }
    let sf = StdForm::build(&lp);
    let out = run_ipm(&sf, opts.tol * 1e-2, opts.max_iter);
    let sol = unpack(&lp, &sf, &out);
    (sol.kkt_residual <= opts.tol).then_some(sol.objective)
}

pub fn solve_qp(qp: &QuadraticProgram, opts: &SolverOptions) -> Result<Solution, QpError> {
    if !(opts.tol > 0.0) {
        return Err(QpError::Tolerance(opts.tol));
    }
    qp.validate()?;
    let sf = StdForm::build(qp);
    let out = run_ipm(&sf, (opts.tol * 1e-3).max(1e-13), opts.max_iter);
    let mut sol = unpack(qp, &sf, &out);
    if sol.kkt_residual <= opts.tol {
        sol.status = Status::Optimal;
        return Ok(sol);
    }

    let rhs_scale = 1.0
        + qp.eq_rows()
            .iter()
            .chain(qp.ineq_rows())
            .fold(0.0_f64, |m, r| m.max(r.rhs.abs()));
    match feasibility_phase(qp, opts) {
        Some(v) => {
            sol.infeasibility = Some(v);
            sol.status = if v > opts.tol * rhs_scale {
                Status::Infeasible
            } else if out.diverged || sol.x.iter().any(|v| v.abs() > 1e12) {
                Status::Unbounded
            } else {
                Status::NumericalFailure
            };
        }
        None => sol.status = Status::NumericalFailure,
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::qpcore::{kkt_residuals, LinearRow};

    fn tag() -> ConstraintTag {
        ConstraintTag::Other("t".into())
    }

    #[test]
    fn one_dimensional_bound() {
        let mut qp = QuadraticProgram::new(1);
        qp.set_cost(0, 1.0, 0.0).set_bounds(0, 3.0, f64::INFINITY);
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.objective, 9.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.lower_duals[0], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn equality_dual_sign() {
        // Closed form: x = (1, 1); stationarity 2x + y = 0 gives y = -2.
        let mut qp = QuadraticProgram::new(2);
        qp.set_cost(0, 1.0, 0.0).set_cost(1, 1.0, 0.0);
        qp.add_eq(vec![1.0, 1.0], 2.0, tag());
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.eq_duals[0], -2.0, epsilon = 1e-7);
    }

    #[test]
    fn detects_infeasible() {
        let mut qp = QuadraticProgram::new(1);
        qp.set_cost(0, 1.0, 0.0);
        qp.add_le(vec![1.0], 0.0, tag());
        qp.add_le(vec![-1.0], -1.0, tag());
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
        assert!(sol.infeasibility.unwrap() > 0.5);
    }

    #[test]
    fn detects_unbounded() {
        let mut qp = QuadraticProgram::new(1);
        qp.set_cost(0, 0.0, 1.0);
        qp.add_le(vec![1.0], 5.0, tag());
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Unbounded);
    }

    #[test]
    fn fixed_variable_reports_bound_dual() {
        let mut qp = QuadraticProgram::new(2);
        qp.set_cost(0, 1.0, 0.0).set_cost(1, 0.0, 5.0);
        qp.set_bounds(1, 2.0, 2.0);
        qp.add_eq(vec![1.0, 1.0], 4.0, tag());
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_eq!(sol.x[1], 2.0);
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-8);
        // y = -2 x0 = -4; 5 + y - zl + zu = 0 gives zu = 0, zl = 1.
        assert_abs_diff_eq!(sol.lower_duals[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let mut qp = QuadraticProgram::new(1);
        qp.set_cost(0, -1.0, 0.0);
        assert_eq!(solve_qp(&qp, &SolverOptions::default()), Err(QpError::NonConvex(0)));
        let mut qp = QuadraticProgram::new(1);
        qp.set_bounds(0, 1.0, 0.0);
        assert!(matches!(solve_qp(&qp, &SolverOptions::default()), Err(QpError::Bounds { .. })));
        let mut qp = QuadraticProgram::new(2);
        qp.add_le(vec![1.0], 0.0, tag());
        assert!(matches!(solve_qp(&qp, &SolverOptions::default()), Err(QpError::RowLength { .. })));
    }

    /// Random QP that is feasible by construction: rows are built around a
    /// known interior point `x0`.
    fn random_qp(n: usize, m: usize, seed: u64) -> QuadraticProgram {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut qp = QuadraticProgram::new(n);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..n {
            qp.set_cost(i, rng.random_range(0.1..2.0), rng.random_range(-5.0..5.0));
            qp.set_bounds(i, -3.0, 3.0);
        }
        for _ in 0..m {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
            let rhs = lhs + rng.random_range(0.05..1.0);
            qp.add_le(a, rhs, tag());
        }
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        qp.add_eq(a, rhs, tag());
        qp
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn dropping_rows_never_raises_objective(seed in 0u64..10_000, n in 2usize..7, m in 1usize..9, drop in 0usize..9) {
            let qp = random_qp(n, m, seed);
            let opts = SolverOptions::default();
            let full = solve_qp(&qp, &opts).unwrap();
            proptest::prop_assert_eq!(full.status, Status::Optimal);
            let relaxed = solve_qp(&qp.without_ineq(&[drop % m]), &opts).unwrap();
            proptest::prop_assert_eq!(relaxed.status, Status::Optimal);
            proptest::prop_assert!(relaxed.objective <= full.objective + 1e-6 * (1.0 + full.objective.abs()));
            proptest::prop_assert!(kkt_residuals(&qp, &full).max() <= opts.tol);
        }

        #[test]
        fn duals_match_rhs_sensitivity(seed in 0u64..10_000, n in 2usize..6, m in 1usize..6) {
            let qp = random_qp(n, m, seed);
            let opts = SolverOptions { tol: 1e-10, max_iter: 200 };
            let base = solve_qp(&qp, &opts).unwrap();
            proptest::prop_assume!(base.is_optimal());
            let h = 1e-5;
            // Central difference on the equality rhs: d obj / d rhs = -y.
            let shifted = |d: f64| {
                let mut p = qp.clone();
                let row = p.eq[0].clone();
                p.eq[0] = LinearRow { rhs: row.rhs + d, ..row };
                solve_qp(&p, &opts).unwrap()
            };
            let (up, dn) = (shifted(h), shifted(-h));
            proptest::prop_assume!(up.is_optimal() && dn.is_optimal());
            // Skip points where the active set changes inside the stencil.
            let active = |s: &Solution| s.ineq_duals.iter().map(|z| *z > 1e-6).collect::<Vec<_>>();
            proptest::prop_assume!(active(&up) == active(&base) && active(&dn) == active(&base));
            let fd = (up.objective - dn.objective) / (2.0 * h);
            let y = -base.eq_duals[0];
            proptest::prop_assert!((fd - y).abs() <= 1e-3 * (1.0 + y.abs()), "fd {} dual {}", fd, y);
        }
    }
}
