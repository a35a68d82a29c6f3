//! Assembly of the four day-ahead dispatch models and decoding of their solutions.
//!
//! The decision vector is `x = [P_G (M), P_DR (N), s]`, where the trailing
//! `s` exists only in the robust and scenario models. Those two models
//! minimize `q(P_G) + s` with `s >= sum_j delta_j pi_j P_DR,j` for every
//! protected `delta`, so `h = q(P_G) + s` is the worst-case supply cost.
//! Because `q` does not depend on `delta`, this epigraph is exact and every
//! row stays linear.
//!
//! Zero-capacity offers stay in the model as fixed variables so the decision
//! dimension is the same for every offer price.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::DrpOffer;
use crate::netmodel::{CaseError, NetworkCase, PtdfMatrix};
use crate::qpcore::{
    lmp_from_duals, solve_qp, ConstraintTag, FlowSide, LmpError, QpError, QuadraticProgram, SolverOptions,
    Status,
};
use crate::uncertainty::{DrDistribution, ScenarioSet, UncertaintyBox, UncertaintyError};

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Lmp(#[from] LmpError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("offer {index} refers to DRP {drp}; offers must follow case order")]
    OfferOrder { index: usize, drp: usize },
    #[error("scenario set is empty")]
    EmptyScenarios,
    #[error("unknown model `{0}` (expected dtm, sto, rob or sce)")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Deterministic,
    Stochastic,
    Robust,
    Scenario,
}

impl ModelKind {
    pub fn short(&self) -> &'static str {
        match self {
            ModelKind::Deterministic => "dtm",
            ModelKind::Stochastic => "sto",
            ModelKind::Robust => "rob",
            ModelKind::Scenario => "sce",
        }
    }

    /// Whether the model carries the epigraph variable and reports `h*`.
    pub fn has_epigraph(&self) -> bool {
        matches!(self, ModelKind::Robust | ModelKind::Scenario)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ModelKind {
    type Err = DispatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dtm" | "deterministic" => Ok(ModelKind::Deterministic),
            "sto" | "stochastic" => Ok(ModelKind::Stochastic),
            "rob" | "robust" => Ok(ModelKind::Robust),
            "sce" | "scenario" => Ok(ModelKind::Scenario),
            other => Err(DispatchError::UnknownModel(other.to_string())),
        }
    }
}

/// Uncertainty data attached to one model.
#[derive(Debug, Clone, Copy)]
pub enum ModelData<'a> {
    Deterministic,
    /// Branch rows are replicated for every scenario of `scenarios`.
    Stochastic { scenarios: &'a ScenarioSet, gamma: f64 },
    Robust { uncertainty: &'a UncertaintyBox },
    Scenario { retained: &'a ScenarioSet },
}

impl ModelData<'_> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelData::Deterministic => ModelKind::Deterministic,
            ModelData::Stochastic { .. } => ModelKind::Stochastic,
            ModelData::Robust { .. } => ModelKind::Robust,
            ModelData::Scenario { .. } => ModelKind::Scenario,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DispatchProblem<'a> {
    pub case: &'a NetworkCase,
    pub offers: &'a [DrpOffer],
    pub ptdf: &'a PtdfMatrix,
    /// DR-ratio law assumed by the operator, one per DRP.
    pub dists: &'a [DrDistribution],
    pub model: ModelData<'a>,
}

impl<'a> DispatchProblem<'a> {
    pub fn new(
        case: &'a NetworkCase,
        offers: &'a [DrpOffer],
        ptdf: &'a PtdfMatrix,
        dists: &'a [DrDistribution],
        model: ModelData<'a>,
    ) -> Result<Self, DispatchError> {
        let n = case.n_drps();
        for (what, got) in [("offers", offers.len()), ("distributions", dists.len())] {
            if got != n {
                return Err(DispatchError::Dimension { what, expected: n, got });
            }
        }
        if let Some((index, o)) = offers.iter().enumerate().find(|(i, o)| o.drp != *i) {
            return Err(DispatchError::OfferOrder { index, drp: o.drp });
        }
        if ptdf.n_buses() != case.n_buses() || ptdf.n_branches() != case.branches.len() {
            return Err(DispatchError::Dimension {
                what: "PTDF columns",
                expected: case.n_buses(),
                got: ptdf.n_buses(),
            });
        }
        match model {
            ModelData::Stochastic { scenarios: s, .. } | ModelData::Scenario { retained: s } => {
                if s.is_empty() {
                    return Err(DispatchError::EmptyScenarios);
                }
                if s.n_drps() != n {
                    return Err(DispatchError::Dimension {
                        what: "scenario columns",
                        expected: n,
                        got: s.n_drps(),
                    });
                }
            }
            ModelData::Robust { uncertainty } => {
                if uncertainty.intervals.len() != n {
                    return Err(DispatchError::Dimension {
                        what: "uncertainty box",
                        expected: n,
                        got: uncertainty.intervals.len(),
                    });
                }
            }
            ModelData::Deterministic => {}
        }
        Ok(DispatchProblem {
            case,
            offers,
            ptdf,
            dists,
            model,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    /// Length of `[P_G, P_DR]`.
    pub fn xi_dim(&self) -> usize {
        self.case.n_generators() + self.case.n_drps()
    }

    /// Number of decision variables of the assembled program.
    pub fn n_vars(&self) -> usize {
        self.xi_dim() + usize::from(self.kind().has_epigraph())
    }

    fn means(&self) -> Vec<f64> {
        self.dists.iter().map(|d| d.mean()).collect()
    }
}

/// `sum_i (a_i P_G,i^2 + b_i P_G,i) + sum_j delta_j pi_j P_DR,j`.
pub fn supply_cost(xi: &[f64], delta: &[f64], offers: &[DrpOffer], case: &NetworkCase) -> Result<f64, DispatchError> {
    let (m, n) = (case.n_generators(), case.n_drps());
    if xi.len() != m + n {
        return Err(DispatchError::Dimension {
            what: "dispatch vector",
            expected: m + n,
            got: xi.len(),
        });
    }
    if delta.len() != n || offers.len() != n {
        return Err(DispatchError::Dimension {
            what: "DR ratios / offers",
            expected: n,
            got: delta.len().min(offers.len()),
        });
    }
    Ok(generation_cost(&xi[..m], case) + dr_cost(&xi[m..], delta, offers))
}

pub(crate) fn generation_cost(p_g: &[f64], case: &NetworkCase) -> f64 {
    case.generators.iter().zip(p_g).map(|(g, p)| g.cost(*p)).sum()
}

pub(crate) fn dr_cost(p_dr: &[f64], delta: &[f64], offers: &[DrpOffer]) -> f64 {
    p_dr.iter()
        .zip(delta)
        .zip(offers)
        .map(|((p, d), o)| d * o.pi_dr * p)
        .sum()
}

/// Program skeleton shared by every model: generator costs and bounds, DR bounds.
fn base_program(prob: &DispatchProblem) -> QuadraticProgram {
    let m = prob.case.n_generators();
    let mut qp = QuadraticProgram::new(prob.n_vars());
    for (i, g) in prob.case.generators.iter().enumerate() {
        qp.set_cost(i, g.a, g.b).set_bounds(i, g.p_min_mw, g.p_max_mw);
    }
    for (j, o) in prob.offers.iter().enumerate() {
        qp.set_bounds(m + j, 0.0, o.p_dr_max.max(0.0));
    }
    qp
}

/// `-(sum P_G + sum delta_j P_DR,j) <= -P_L`.
fn supply_row(prob: &DispatchProblem, delta: &[f64]) -> (Vec<f64>, f64) {
    let m = prob.case.n_generators();
    let mut a = vec![0.0; prob.n_vars()];
    a[..m].iter_mut().for_each(|v| *v = -1.0);
    for (j, d) in delta.iter().enumerate() {
        a[m + j] = -d;
    }
    (a, -prob.case.total_load())
}

/// `sum_j delta_j pi_j P_DR,j - s <= 0`.
fn cost_row(prob: &DispatchProblem, delta: &[f64]) -> Vec<f64> {
    let m = prob.case.n_generators();
    let mut a = vec![0.0; prob.n_vars()];
    for (j, (d, o)) in delta.iter().zip(prob.offers).enumerate() {
        a[m + j] = d * o.pi_dr;
    }
    a[prob.xi_dim()] = -1.0;
    a
}

/// Both sides of every limited branch. `delta_for(coef)` picks the DR ratio
/// used for a DRP whose flow coefficient on this row is `coef`.
fn add_branch_rows(qp: &mut QuadraticProgram, prob: &DispatchProblem, scenario: Option<usize>, delta_for: impl Fn(usize, f64) -> f64) {
    let case = prob.case;
    let m = case.n_generators();
    let loads = case.loads();
    for r in case.limited_branches() {
        let f_max = case.branches[r].flow_limit_mw.mw().unwrap_or(f64::INFINITY);
        let load_flow: f64 = loads.iter().enumerate().map(|(k, l)| prob.ptdf.get(r, k) * l).sum();
        for side in [FlowSide::Upper, FlowSide::Lower] {
            let s = match side {
                FlowSide::Upper => 1.0,
                FlowSide::Lower => -1.0,
            };
            let mut a = vec![0.0; prob.n_vars()];
            for (i, g) in case.generators.iter().enumerate() {
                a[i] = s * prob.ptdf.get(r, case.bus_index(g.bus));
            }
            for (j, d) in case.drps.iter().enumerate() {
                let h = s * prob.ptdf.get(r, case.bus_index(d.bus));
                a[m + j] = h * delta_for(j, h);
            }
            qp.add_le(
                a,
                f_max + s * load_flow,
                ConstraintTag::Branch {
                    scenario,
                    line: r,
                    side,
                },
            );
        }
    }
}

/// Deterministic model: balance equality and branch limits at `delta = 1`.
pub fn build_deterministic(prob: &DispatchProblem) -> QuadraticProgram {
    let m = prob.case.n_generators();
    let mut qp = base_program(prob);
    for (j, o) in prob.offers.iter().enumerate() {
        qp.set_cost(m + j, 0.0, o.pi_dr);
    }
    let (a, rhs) = supply_row(prob, &vec![1.0; prob.case.n_drps()]);
    qp.add_eq(a.iter().map(|v| -v).collect(), -rhs, ConstraintTag::Balance { scenario: None });
    add_branch_rows(&mut qp, prob, None, |_, _| 1.0);
    qp
}

/// Stochastic model: expected DR cost, one adequacy row using the chance
/// margins, and branch limits for every scenario of the set.
pub fn build_stochastic(prob: &DispatchProblem, scenarios: &ScenarioSet, gamma: f64) -> Result<QuadraticProgram, DispatchError> {
    if scenarios.is_empty() {
        return Err(DispatchError::EmptyScenarios);
    }
    let m = prob.case.n_generators();
    let mut qp = base_program(prob);
    for (j, (o, d)) in prob.offers.iter().zip(prob.dists).enumerate() {
        qp.set_cost(m + j, 0.0, d.mean() * o.pi_dr);
    }
    let margins = prob
        .dists
        .iter()
        .map(|d| d.chance_margin(gamma))
        .collect::<Result<Vec<_>, _>>()?;
    let (a, rhs) = supply_row(prob, &margins);
    qp.add_le(a, rhs, ConstraintTag::Adequacy);
    for (k, row) in scenarios.rows().enumerate() {
        add_branch_rows(&mut qp, prob, Some(k), |j, _| row[j]);
    }
    Ok(qp)
}

/// Robust model over a box: worst cost at the upper corner, adequacy at the
/// lower corner, and per-coefficient worst cases on branch rows.
pub fn build_robust(prob: &DispatchProblem, uncertainty: &UncertaintyBox) -> QuadraticProgram {
    let n = prob.case.n_drps();
    let lo: Vec<f64> = (0..n).map(|j| uncertainty.lo(j)).collect();
    let hi: Vec<f64> = (0..n).map(|j| uncertainty.hi(j)).collect();
    let mut qp = base_program(prob);
    qp.set_cost(prob.xi_dim(), 0.0, 1.0);
    qp.add_le(cost_row(prob, &hi), 0.0, ConstraintTag::CostEpigraph { scenario: None });
    let (a, rhs) = supply_row(prob, &lo);
    qp.add_le(a, rhs, ConstraintTag::Balance { scenario: None });
    add_branch_rows(&mut qp, prob, None, |j, coef| if coef > 0.0 { hi[j] } else { lo[j] });
    qp
}

/// Scenario model: cost, balance and branch rows for each retained scenario.
/// Each scenario contributes `2 + 2 * limited_branches` rows.
pub fn build_scenario(prob: &DispatchProblem, retained: &ScenarioSet) -> Result<QuadraticProgram, DispatchError> {
    if retained.is_empty() {
        return Err(DispatchError::EmptyScenarios);
    }
    let mut qp = base_program(prob);
    qp.set_cost(prob.xi_dim(), 0.0, 1.0);
    for (k, delta) in retained.rows().enumerate() {
        qp.add_le(cost_row(prob, delta), 0.0, ConstraintTag::CostEpigraph { scenario: Some(k) });
        let (a, rhs) = supply_row(prob, delta);
        qp.add_le(a, rhs, ConstraintTag::Balance { scenario: Some(k) });
        add_branch_rows(&mut qp, prob, Some(k), |j, _| delta[j]);
    }
    Ok(qp)
}

pub fn build_model(prob: &DispatchProblem) -> Result<QuadraticProgram, DispatchError> {
    match prob.model {
        ModelData::Deterministic => Ok(build_deterministic(prob)),
        ModelData::Stochastic { scenarios, gamma } => build_stochastic(prob, scenarios, gamma),
        ModelData::Robust { uncertainty } => Ok(build_robust(prob, uncertainty)),
        ModelData::Scenario { retained } => build_scenario(prob, retained),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub model: ModelKind,
    pub status: Status,
    pub p_g: Vec<f64>,
    pub p_dr: Vec<f64>,
    /// Optimal epigraph value, robust and scenario models only.
    pub h_star: Option<f64>,
    /// Deterministic: cost at `delta = 1`; stochastic: expected cost;
    /// robust and scenario: `h*`.
    pub dispatch_cost: f64,
    /// Supply cost at the mean DR ratios, for every model.
    pub expected_cost: f64,
    /// Per-bus prices, deterministic model only.
    pub lmps: Option<Vec<f64>>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub n_constraints: usize,
    /// Number of decision variables of the solved program.
    pub n_vars: usize,
}

impl DispatchSolution {
    pub fn total_dr(&self) -> f64 {
        self.p_dr.iter().sum()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.p_g.iter().chain(&self.p_dr).copied().collect()
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

pub fn solve_dispatch(prob: &DispatchProblem, opts: &SolverOptions) -> Result<DispatchSolution, DispatchError> {
    let qp = build_model(prob)?;
    let sol = solve_qp(&qp, opts)?;
    let (m, n) = (prob.case.n_generators(), prob.case.n_drps());
    // Bounds hold exactly after clipping the interior-point iterate.
    let clip = |i: usize| sol.x[i].clamp(qp.lower()[i], qp.upper()[i]);
    let p_g: Vec<f64> = (0..m).map(clip).collect();
    let p_dr: Vec<f64> = (m..m + n).map(clip).collect();
    let kind = prob.kind();

    let means = prob.means();
    let gen = generation_cost(&p_g, prob.case);
    let expected_cost = gen + dr_cost(&p_dr, &means, prob.offers);
    let h_star = kind.has_epigraph().then(|| gen + sol.x[prob.xi_dim()]);
    let dispatch_cost = match kind {
        ModelKind::Deterministic => gen + dr_cost(&p_dr, &vec![1.0; n], prob.offers),
        ModelKind::Stochastic => expected_cost,
        ModelKind::Robust | ModelKind::Scenario => h_star.unwrap_or(f64::NAN),
    };

    let lmps = if kind == ModelKind::Deterministic && sol.is_optimal() {
        if prob.case.total_load() <= 0.0 {
            // Degenerate balance dual: price every bus at the cheapest
            // generator's marginal cost at its lower bound.
            let price = prob
                .case
                .generators
                .iter()
                .map(|g| 2.0 * g.a * g.p_min_mw + g.b)
                .fold(f64::INFINITY, f64::min);
            Some(vec![price; prob.case.n_buses()])
        } else {
            Some(lmp_from_duals(&qp, &sol, prob.ptdf)?)
        }
    } else {
        None
    };

    Ok(DispatchSolution {
        model: kind,
        status: sol.status,
        p_g,
        p_dr,
        h_star,
        dispatch_cost,
        expected_cost,
        lmps,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        n_constraints: qp.n_constraints(),
        n_vars: qp.n_vars(),
    })
}
