//! Out-of-sample evaluation of a day-ahead dispatch.
//!
//! Each test scenario `delta` is replayed against the fixed schedule. The
//! realized cost is the supply cost at `delta` plus the balancing cost of the
//! auxiliary generator at every DRP bus. Three violation types are counted:
//! power inadequacy, branch overflow, and supply cost above `h*`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{dr_cost, generation_cost, DispatchProblem, DispatchSolution, ModelKind};
use crate::netmodel::{net_injection, CaseError, NetworkCase};
use crate::uncertainty::ScenarioSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("test set has {got} DR columns, case has {expected} DRPs")]
    Columns { expected: usize, got: usize },
    #[error("reports use different test sets ({0:?} vs {1:?}); compare on a shared test set")]
    MismatchedTestSets(Option<u64>, Option<u64>),
    #[error("nothing to compare")]
    Empty,
    #[error("unknown rtd reference `{0}` (expected mu or one)")]
    Reference(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Point from which DR deviations are charged to the balancing generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RtdReference {
    /// `|delta_j - mu_j| P_DR,j`, with `mu_j` the location of the DR law.
    #[default]
    Mu,
    /// `|delta_j - 1| P_DR,j`, realized minus scheduled.
    One,
}

impl FromStr for RtdReference {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mu" => Ok(RtdReference::Mu),
            "one" => Ok(RtdReference::One),
            other => Err(EvalError::Reference(other.to_string())),
        }
    }
}

impl fmt::Display for RtdReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RtdReference::Mu => "mu",
            RtdReference::One => "one",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Slack in MW (balance, flows) and $ (h) before a scenario counts as violated.
    pub feas_tol: f64,
    pub rtd_reference: RtdReference,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            feas_tol: 1e-6,
            rtd_reference: RtdReference::Mu,
        }
    }
}

/// `sum_j pi_aux,j |(delta_j - ref_j) P_DR,j|`.
pub fn balancing_cost(p_dr: &[f64], delta: &[f64], reference: &[f64], case: &NetworkCase) -> f64 {
    case.drps
        .iter()
        .zip(p_dr)
        .zip(delta.iter().zip(reference))
        .map(|((d, p), (x, r))| d.pi_aux * ((x - r) * p).abs())
        .sum()
}

/// Compensated (Neumaier) sum, evaluated left to right.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub model: ModelKind,
    pub n_test: usize,
    pub seed: Option<u64>,
    pub feas_tol: f64,
    pub dispatch_cost: f64,
    pub total_dr: f64,
    /// Mean realized cost including balancing.
    pub w_real: f64,
    pub mean_supply_cost: f64,
    pub mean_balancing_cost: f64,
    pub p_balance_vio: f64,
    pub p_branch_vio: f64,
    /// `None` for models without an epigraph value.
    pub p_h_vio: Option<f64>,
    pub balance_violations: Vec<usize>,
    pub branch_violations: Vec<usize>,
    pub h_violations: Vec<usize>,
}

struct Outcome {
    supply: f64,
    balancing: f64,
    balance: bool,
    branch: bool,
    h: bool,
}

pub fn evaluate_solution(
    sol: &DispatchSolution,
    test: &ScenarioSet,
    prob: &DispatchProblem,
    opts: &EvalOptions,
) -> Result<ViolationReport, EvalError> {
    let case = prob.case;
    let n = case.n_drps();
    if test.n_drps() != n {
        return Err(EvalError::Columns {
            expected: n,
            got: test.n_drps(),
        });
    }
    let reference: Vec<f64> = match opts.rtd_reference {
        RtdReference::Mu => prob.dists.iter().map(|d| d.location()).collect(),
        RtdReference::One => vec![1.0; n],
    };
    let xi = sol.xi();
    let gen_cost = generation_cost(&sol.p_g, case);
    let gen_total: f64 = sol.p_g.iter().sum();
    let load = case.total_load();
    let limited: Vec<(usize, f64)> = case
        .limited_branches()
        .into_iter()
        .filter_map(|r| case.branches[r].flow_limit_mw.mw().map(|f| (r, f)))
        .collect();
    let tol = opts.feas_tol;

    let rows: Vec<&[f64]> = test.rows().collect();
    let outcomes = rows
        .par_iter()
        .map(|delta| -> Result<Outcome, EvalError> {
            let supply = gen_cost + dr_cost(&sol.p_dr, delta, prob.offers);
            let delivered: f64 = sol.p_dr.iter().zip(delta.iter()).map(|(p, d)| p * d).sum();
            let balance = load - (gen_total + delivered) > tol;
            let branch = if limited.is_empty() {
                false
            } else {
                let flows = prob.ptdf.flows(&net_injection(case, &xi, delta)?);
                limited.iter().any(|&(r, f)| flows[r].abs() - f > tol)
            };
            let h = sol.h_star.is_some_and(|h| supply > h + tol);
            Ok(Outcome {
                supply,
                balancing: balancing_cost(&sol.p_dr, delta, &reference, case),
                balance,
                branch,
                h,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n_test = outcomes.len();
    let nf = n_test as f64;
    let pick = |f: fn(&Outcome) -> bool| -> Vec<usize> {
        outcomes.iter().enumerate().filter(|(_, o)| f(o)).map(|(k, _)| k).collect()
    };
    let balance_violations = pick(|o| o.balance);
    let branch_violations = pick(|o| o.branch);
    let h_violations = pick(|o| o.h);
    let mean_supply_cost = neumaier_sum(outcomes.iter().map(|o| o.supply)) / nf;
    let mean_balancing_cost = neumaier_sum(outcomes.iter().map(|o| o.balancing)) / nf;
    Ok(ViolationReport {
        model: sol.model,
        n_test,
        seed: test.seed(),
        feas_tol: tol,
        dispatch_cost: sol.dispatch_cost,
        total_dr: sol.total_dr(),
        w_real: neumaier_sum(outcomes.iter().map(|o| o.supply + o.balancing)) / nf,
        mean_supply_cost,
        mean_balancing_cost,
        p_balance_vio: balance_violations.len() as f64 / nf,
        p_branch_vio: branch_violations.len() as f64 / nf,
        p_h_vio: sol.h_star.map(|_| h_violations.len() as f64 / nf),
        balance_violations,
        branch_violations,
        h_violations,
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub dispatch_cost: f64,
    pub realization_cost: f64,
    pub total_dr: f64,
    pub balance_vio: f64,
    pub branch_vio: f64,
    pub h_vio: Option<f64>,
    pub n_test: usize,
    pub seed: Option<u64>,
    pub feas_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Lines up labelled reports. All must share one test set.
pub fn compare_models(reports: &[(String, ViolationReport)]) -> Result<ComparisonTable, EvalError> {
    let first = &reports.first().ok_or(EvalError::Empty)?.1;
    for (_, r) in reports {
        if r.seed != first.seed || r.n_test != first.n_test {
            return Err(EvalError::MismatchedTestSets(first.seed, r.seed));
        }
    }
    Ok(ComparisonTable {
        rows: reports
            .iter()
            .map(|(label, r)| ComparisonRow {
                label: label.clone(),
                dispatch_cost: r.dispatch_cost,
                realization_cost: r.w_real,
                total_dr: r.total_dr,
                balance_vio: r.p_balance_vio,
                branch_vio: r.p_branch_vio,
                h_vio: r.p_h_vio,
                n_test: r.n_test,
                seed: r.seed,
                feas_tol: r.feas_tol,
            })
            .collect(),
    })
}

impl ComparisonTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "model",
            "dispatch_cost",
            "realization_cost",
            "total_dr",
            "balance_vio",
            "branch_vio",
            "h_vio",
            "n_test",
            "seed",
            "feas_tol",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.label.clone(),
                format!("{:.4}", r.dispatch_cost),
                format!("{:.4}", r.realization_cost),
                format!("{:.4}", r.total_dr),
                format!("{:.4}", r.balance_vio),
                format!("{:.4}", r.branch_vio),
                r.h_vio.map_or("N/A".to_string(), |v| format!("{v:.4}")),
                r.n_test.to_string(),
                r.seed.map_or(String::new(), |s| s.to_string()),
                format!("{:e}", r.feas_tol),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>12} {:>12} {:>9} {:>9} {:>9} {:>9}",
            "model", "dispatch", "realization", "total_dr", "bal_vio", "br_vio", "h_vio"
        )?;
        for r in &self.rows {
            let h = r.h_vio.map_or("N/A".to_string(), |v| format!("{v:.4}"));
            writeln!(
                f,
                "{:<14} {:>12.1} {:>12.1} {:>9.2} {:>9.4} {:>9.4} {:>9}",
                r.label, r.dispatch_cost, r.realization_cost, r.total_dr, r.balance_vio, r.branch_vio, h
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{solve_dispatch, ModelData};
    use crate::market::uniform_offers;
    use crate::netmodel::{compute_ptdf, Branch, Bus, Drp, FlowLimit, Generator};
    use crate::qpcore::SolverOptions;
    use crate::uncertainty::{sample, DrDistribution, UncertaintyBox};
    use approx::assert_abs_diff_eq;

    fn case() -> NetworkCase {
        let br = |f, t, lim| Branch {
            from_bus: f,
            to_bus: t,
            reactance_pu: 0.1,
            flow_limit_mw: lim,
        };
        NetworkCase::new(
            vec![
                Bus { id: 1, load_mw: 0.0 },
                Bus { id: 2, load_mw: 60.0 },
                Bus { id: 3, load_mw: 165.25 },
            ],
            vec![
                br(1, 2, FlowLimit::Limited(81.0)),
                br(1, 3, FlowLimit::Unlimited),
                br(2, 3, FlowLimit::Unlimited),
            ],
            vec![
                Generator {
                    bus: 1,
                    a: 0.05,
                    b: 20.0,
                    p_min_mw: 0.0,
                    p_max_mw: 400.0,
                },
                Generator {
                    bus: 3,
                    a: 0.55,
                    b: 72.75,
                    p_min_mw: 0.0,
                    p_max_mw: 200.0,
                },
            ],
            vec![Drp {
                bus: 2,
                p_base_mw: 60.0,
                pi_rr: 100.0,
                pi_max: 400.0,
                pi_aux: 150.0,
            }],
            1,
        )
        .unwrap()
    }

    fn dists() -> Vec<DrDistribution> {
        vec![DrDistribution::truncated_normal(1.0, 0.1, 0.5, 1.5).unwrap()]
    }

    fn labels() -> Vec<String> {
        vec!["drp1".into()]
    }

    #[test]
    fn balancing_cost_arithmetic() {
        let c = case();
        assert_eq!(balancing_cost(&[20.0], &[1.0], &[1.0], &c), 0.0);
        assert_abs_diff_eq!(balancing_cost(&[20.0], &[0.8], &[1.0], &c), 600.0, epsilon = 1e-9);
    }

    #[test]
    fn deviations_do_not_cancel() {
        let mut c = case();
        c.drps.push(Drp {
            bus: 3,
            p_base_mw: 60.0,
            pi_rr: 100.0,
            pi_max: 400.0,
            pi_aux: 150.0,
        });
        let v = balancing_cost(&[10.0, 10.0], &[1.1, 0.9], &[1.0, 1.0], &c);
        assert_abs_diff_eq!(v, 2.0 * 150.0 * 0.1 * 10.0, epsilon = 1e-9);
    }

    #[test]
    fn neumaier_is_exact_where_naive_fails() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(v), 2.0);
    }

    fn dtm_solution(c: &NetworkCase) -> (Vec<crate::market::DrpOffer>, DispatchSolution) {
        let ptdf = compute_ptdf(c).unwrap();
        let offers = uniform_offers(&c.drps, 100.0).unwrap();
        let d = dists();
        let prob = DispatchProblem::new(c, &offers, &ptdf, &d, ModelData::Deterministic).unwrap();
        let sol = solve_dispatch(&prob, &SolverOptions::default()).unwrap();
        (offers, sol)
    }

    #[test]
    fn zero_uncertainty_has_no_violations() {
        let c = case();
        let ptdf = compute_ptdf(&c).unwrap();
        let (offers, sol) = dtm_solution(&c);
        let d = dists();
        let prob = DispatchProblem::new(&c, &offers, &ptdf, &d, ModelData::Deterministic).unwrap();
        let test = ScenarioSet::from_rows(labels(), &vec![vec![1.0]; 5], Some(9)).unwrap();
        let r = evaluate_solution(&sol, &test, &prob, &EvalOptions::default()).unwrap();
        assert_eq!((r.p_balance_vio, r.p_branch_vio), (0.0, 0.0));
        assert_eq!(r.p_h_vio, None);
        let l = crate::dispatch::supply_cost(&sol.xi(), &[1.0], &offers, &c).unwrap();
        assert_abs_diff_eq!(r.w_real, l, epsilon = 1e-9);
    }

    #[test]
    fn engineered_inadequacy_counts_half() {
        let c = case();
        let ptdf = compute_ptdf(&c).unwrap();
        let (offers, sol) = dtm_solution(&c);
        let d = dists();
        let prob = DispatchProblem::new(&c, &offers, &ptdf, &d, ModelData::Deterministic).unwrap();
        let test = ScenarioSet::from_rows(labels(), &[vec![1.0], vec![0.9]], Some(1)).unwrap();
        let r = evaluate_solution(&sol, &test, &prob, &EvalOptions::default()).unwrap();
        assert_eq!(r.p_balance_vio, 0.5);
        assert_eq!(r.balance_violations, vec![1]);
    }

    #[test]
    fn deterministic_under_delivers_half_the_time() {
        let c = case();
        let ptdf = compute_ptdf(&c).unwrap();
        let (offers, sol) = dtm_solution(&c);
        let d = dists();
        let prob = DispatchProblem::new(&c, &offers, &ptdf, &d, ModelData::Deterministic).unwrap();
        let test = sample(&d, &labels(), 1000, 2);
        let r = evaluate_solution(&sol, &test, &prob, &EvalOptions::default()).unwrap();
        assert!((r.p_balance_vio - 0.5).abs() <= 0.05, "{}", r.p_balance_vio);
        assert!(r.w_real >= r.mean_supply_cost);
        // Bit-exact replay.
        let again = evaluate_solution(&sol, &test, &prob, &EvalOptions::default()).unwrap();
        assert_eq!(r.w_real.to_bits(), again.w_real.to_bits());
    }

    #[test]
    fn robust_inside_box_never_violates() {
        let c = case();
        let ptdf = compute_ptdf(&c).unwrap();
        let offers = uniform_offers(&c.drps, 100.0).unwrap();
        let d = dists();
        let b = UncertaintyBox {
            intervals: vec![(0.7, 1.3)],
        };
        let prob = DispatchProblem::new(&c, &offers, &ptdf, &d, ModelData::Robust { uncertainty: &b }).unwrap();
        let sol = solve_dispatch(&prob, &SolverOptions::default()).unwrap();
        let inside = vec![DrDistribution::uniform(0.7, 1.3).unwrap()];
        let test = sample(&inside, &labels(), 2000, 5);
        let r = evaluate_solution(&sol, &test, &prob, &EvalOptions::default()).unwrap();
        assert_eq!((r.p_balance_vio, r.p_branch_vio, r.p_h_vio), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn violation_rates_fall_with_tolerance() {
        let c = case();
        let ptdf = compute_ptdf(&c).unwrap();
        let (offers, sol) = dtm_solution(&c);
        let d = dists();
        let prob = DispatchProblem::new(&c, &offers, &ptdf, &d, ModelData::Deterministic).unwrap();
        let test = sample(&d, &labels(), 500, 4);
        let mut last = (1.0, 1.0);
        for tol in [1e-6, 1e-2, 1.0, 3.0] {
            let opts = EvalOptions {
                feas_tol: tol,
                ..Default::default()
            };
            let r = evaluate_solution(&sol, &test, &prob, &opts).unwrap();
            assert!(r.p_balance_vio <= last.0 && r.p_branch_vio <= last.1);
            assert!((0.0..=1.0).contains(&r.p_balance_vio));
            last = (r.p_balance_vio, r.p_branch_vio);
        }
    }

    #[test]
    fn comparison_guards_test_set() {
        let c = case();
        let ptdf = compute_ptdf(&c).unwrap();
        let (offers, sol) = dtm_solution(&c);
        let d = dists();
        let prob = DispatchProblem::new(&c, &offers, &ptdf, &d, ModelData::Deterministic).unwrap();
        let a = evaluate_solution(&sol, &sample(&d, &labels(), 50, 2), &prob, &EvalOptions::default()).unwrap();
        let b = evaluate_solution(&sol, &sample(&d, &labels(), 50, 3), &prob, &EvalOptions::default()).unwrap();
        let t = compare_models(&[("Dtm".into(), a.clone())]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.to_string().contains("N/A"));
        assert!(matches!(
            compare_models(&[("Dtm".into(), a), ("Dtm2".into(), b)]),
            Err(EvalError::MismatchedTestSets(..))
        ));
        assert!(matches!(compare_models(&[]), Err(EvalError::Empty)));
    }
}
