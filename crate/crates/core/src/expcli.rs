//! Experiment driver behind the `dispatch` binary.
//!
//! An [`ExperimentConfig`] fixes the case, the DR laws, seeds and sizes. A
//! [`Context`] materializes it once (PTDF, training and test scenarios,
//! robust box) and then solves and evaluates individual cells: one offer
//! price vector, one model, one removal rule. Every output row carries a
//! hash of the config so a run can be replayed exactly.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dispatch::{solve_dispatch, DispatchError, DispatchProblem, DispatchSolution, ModelData, ModelKind};
use crate::evaluate::{compare_models, evaluate_solution, EvalError, EvalOptions, RtdReference, ViolationReport};
use crate::market::{DrpOffer, MarketError};
use crate::netmodel::{compute_ptdf, load_case, CaseError, NetworkCase, PtdfMatrix};
use crate::qpcore::SolverOptions;
use crate::removal::{self, Algorithm, Amount, RemovalError, RemovalSpec};
use crate::riskcert::{bound_lhs, epsilon_for, BoundQuery, DCount, RiskError};
use crate::uncertainty::{
    estimate_params, sample, three_sigma_box, DrDistribution, ScenarioSet, UncertaintyBox, UncertaintyError,
};

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Removal(#[from] RemovalError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, ExpError>;

/// Offer prices: one common price swept over a grid, or fixed per-DRP prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prices {
    Grid { start: f64, stop: f64, step: f64 },
    Fixed(Vec<f64>),
}

impl Prices {
    /// Price vectors in sweep order, each of length `n_drps`.
    pub fn points(&self, n_drps: usize) -> Vec<Vec<f64>> {
        match self {
            Prices::Grid { start, stop, step } => {
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|i| vec![start + i as f64 * step; n_drps]).collect()
            }
            Prices::Fixed(p) if p.len() == 1 => vec![vec![p[0]; n_drps]],
            Prices::Fixed(p) => vec![p.clone()],
        }
    }

    /// `start:stop:step`, a single price, or comma-separated per-DRP prices.
    pub fn parse(s: &str) -> Result<Prices> {
        let bad = || ExpError::Config(format!("bad price spec `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [a, b, c] => {
                let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
                if !(step > 0.0) || stop < start {
                    return Err(bad());
                }
                Ok(Prices::Grid { start, stop, step })
            }
            [one] => Ok(Prices::Fixed(one.split(',').map(num).collect::<Result<_>>()?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub case_path: PathBuf,
    pub models: Vec<ModelKind>,
    /// Removal rules applied to the scenario model; empty means no removal.
    pub removals: Vec<RemovalSpec>,
    pub prices: Prices,
    /// True DR law per DRP; a single entry applies to every DRP.
    pub dists: Vec<DrDistribution>,
    /// Robust box; defaults to the three-sigma box clipped to the support.
    pub robust_box: Option<UncertaintyBox>,
    pub gamma: f64,
    pub beta: f64,
    pub seed_train: u64,
    pub seed_test: u64,
    pub n_scenarios: usize,
    pub n_test: usize,
    /// Training scenarios read from CSV instead of sampled.
    pub scenarios_file: Option<PathBuf>,
    pub d_count: DCount,
    pub eval: EvalOptions,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl From<SolverConfig> for SolverOptions {
    fn from(s: SolverConfig) -> Self {
        SolverOptions {
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

/// Directory holding the bundled case files.
pub fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn tn(mu: f64, sigma: f64, lo: f64, hi: f64) -> DrDistribution {
    DrDistribution::truncated_normal(mu, sigma, lo, hi).expect("preset law is valid")
}

impl ExperimentConfig {
    /// Named parameter packs: `base3`, `high-sigma`, `ieee14`, `ieee118`.
    pub fn preset(name: &str) -> Result<ExperimentConfig> {
        let base = ExperimentConfig {
            case_path: cases_dir().join("case3.json"),
            models: vec![
                ModelKind::Deterministic,
                ModelKind::Stochastic,
                ModelKind::Robust,
                ModelKind::Scenario,
            ],
            removals: vec![RemovalSpec {
                algorithm: Algorithm::Center,
                amount: Amount::Fraction(0.2),
            }],
            prices: Prices::Grid {
                start: 40.0,
                stop: 160.0,
                step: 5.0,
            },
            dists: vec![tn(1.0, 0.1, 0.5, 1.5)],
            robust_box: Some(UncertaintyBox {
                intervals: vec![(0.7, 1.3)],
            }),
            gamma: 0.8,
            beta: 1e-5,
            seed_train: 1,
            seed_test: 2,
            n_scenarios: 1000,
            n_test: 1000,
            scenarios_file: None,
            d_count: DCount::Full,
            eval: EvalOptions::default(),
            solver: SolverConfig {
                tol: 1e-7,
                max_iter: 200,
            },
        };
        match name {
            "base3" => Ok(base),
            "high-sigma" => Ok(ExperimentConfig {
                dists: vec![tn(1.0, 0.67, 0.2, 1.8)],
                robust_box: None,
                ..base
            }),
            "ieee14" => Ok(ExperimentConfig {
                case_path: cases_dir().join("case14.json"),
                robust_box: None,
                removals: vec![
                    RemovalSpec {
                        algorithm: Algorithm::Center,
                        amount: Amount::Fraction(0.2),
                    },
                    RemovalSpec {
                        algorithm: Algorithm::Center,
                        amount: Amount::Fraction(0.5),
                    },
                ],
                prices: Prices::Grid {
                    start: 20.0,
                    stop: 120.0,
                    step: 2.0,
                },
                ..base
            }),
            "ieee118" => Ok(ExperimentConfig {
                case_path: cases_dir().join("case118.json"),
                robust_box: None,
                removals: vec![
                    RemovalSpec {
                        algorithm: Algorithm::Center,
                        amount: Amount::Fraction(0.2),
                    },
                    RemovalSpec {
                        algorithm: Algorithm::Center,
                        amount: Amount::Fraction(0.5),
                    },
                ],
                prices: Prices::Fixed(vec![30.0, 35.0]),
                n_scenarios: 1600,
                n_test: 1600,
                ..base
            }),
            other => Err(ExpError::Config(format!(
                "unknown preset `{other}` (expected base3, high-sigma, ieee14, ieee118)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(ExpError::Config("model list is empty".into()));
        }
        if self.seed_train == self.seed_test {
            return Err(ExpError::Config("training and test seeds must differ".into()));
        }
        if self.n_scenarios == 0 || self.n_test == 0 {
            return Err(ExpError::Config("scenario counts must be positive".into()));
        }
        if self.dists.is_empty() {
            return Err(ExpError::Config("no DR distribution given".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ExpError::Config("gamma and beta must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

/// One CSV row of a sweep or trade-off run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub pi_dr: String,
    pub model: String,
    pub removal: String,
    pub p: usize,
    pub dispatch_cost: Option<f64>,
    pub expected_cost: Option<f64>,
    pub h_star: Option<f64>,
    pub realization_cost: Option<f64>,
    pub total_dr: Option<f64>,
    pub p_balance_vio: Option<f64>,
    pub p_branch_vio: Option<f64>,
    pub p_h_vio: Option<f64>,
    pub epsilon_bound: Option<f64>,
    pub status: String,
    pub config_hash: String,
}

/// A solved and evaluated cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub row: ResultRow,
    pub solution: Option<DispatchSolution>,
    pub report: Option<ViolationReport>,
    pub offers: Vec<DrpOffer>,
}

/// Materialized experiment inputs.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub case: NetworkCase,
    pub ptdf: PtdfMatrix,
    pub dists: Vec<DrDistribution>,
    pub train: ScenarioSet,
    pub test: ScenarioSet,
    pub robust_box: UncertaintyBox,
    pub hash: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Context> {
        cfg.validate()?;
        let case = load_case(&cfg.case_path)?;
        Context::with_case(cfg, case)
    }

    pub fn with_case(cfg: ExperimentConfig, case: NetworkCase) -> Result<Context> {
        cfg.validate()?;
        let n = case.n_drps();
        let dists = match cfg.dists.len() {
            1 => vec![cfg.dists[0]; n],
            k if k == n => cfg.dists.clone(),
            k => return Err(ExpError::Config(format!("{k} distributions for {n} DRPs"))),
        };
        let ptdf = compute_ptdf(&case)?;
        let labels = case.drp_labels();
        let train = match &cfg.scenarios_file {
            Some(path) => {
                let s = ScenarioSet::read_csv(File::open(path)?)?;
                if s.n_drps() != n {
                    return Err(ExpError::Config(format!(
                        "scenario file has {} columns for {n} DRPs",
                        s.n_drps()
                    )));
                }
                s
            }
            None => sample(&dists, &labels, cfg.n_scenarios, cfg.seed_train),
        };
        let test = sample(&dists, &labels, cfg.n_test, cfg.seed_test);
        let robust_box = match &cfg.robust_box {
            Some(b) if b.intervals.len() == n => b.clone(),
            Some(b) if b.intervals.len() == 1 => UncertaintyBox {
                intervals: vec![b.intervals[0]; n],
            },
            Some(_) => return Err(ExpError::Config("robust box does not match the DRP count".into())),
            None => default_box(&dists),
        };
        let hash = cfg.hash();
        Ok(Context {
            cfg,
            case,
            ptdf,
            dists,
            train,
            test,
            robust_box,
            hash,
        })
    }

    pub fn offers_at(&self, prices: &[f64]) -> Result<Vec<DrpOffer>> {
        if prices.len() != self.case.n_drps() {
            return Err(ExpError::Config(format!(
                "{} prices for {} DRPs",
                prices.len(),
                self.case.n_drps()
            )));
        }
        Ok(self
            .case
            .drps
            .iter()
            .zip(prices)
            .enumerate()
            .map(|(j, (d, &pi))| crate::market::build_offer(j, d, pi))
            .collect::<std::result::Result<_, _>>()?)
    }

    pub fn solver(&self) -> SolverOptions {
        self.cfg.solver.into()
    }

    /// Retained scenario set and the number removed.
    pub fn retained(&self, offers: &[DrpOffer], spec: Option<&RemovalSpec>) -> Result<(ScenarioSet, usize)> {
        match spec {
            None => Ok((self.train.clone(), 0)),
            Some(spec) => {
                let mu: Vec<f64> = self.dists.iter().map(|d| d.location()).collect();
                let w: Vec<f64> = offers.iter().map(|o| o.p_dr_max).collect();
                let r = removal::apply(spec, &self.train, &mu, &w)?;
                Ok((r.retained, r.removed.len()))
            }
        }
    }

    pub fn epsilon(&self, model: ModelKind, p: usize) -> Result<f64> {
        let d = self
            .cfg
            .d_count
            .dimension(self.case.n_generators(), self.case.n_drps(), model);
        Ok(epsilon_for(&BoundQuery::new(self.train.len(), p, d, self.cfg.beta)?))
    }

    /// Solves and evaluates one cell under the operator's assumed laws `assumed`.
    pub fn run_cell_with(
        &self,
        prices: &[f64],
        model: ModelKind,
        spec: Option<&RemovalSpec>,
        assumed: &[DrDistribution],
    ) -> Result<CellResult> {
        let offers = self.offers_at(prices)?;
        let (retained, p) = if model == ModelKind::Scenario {
            self.retained(&offers, spec)?
        } else {
            (self.train.clone(), 0)
        };
        let data = match model {
            ModelKind::Deterministic => ModelData::Deterministic,
            ModelKind::Stochastic => ModelData::Stochastic {
                scenarios: &self.train,
                gamma: self.cfg.gamma,
            },
            ModelKind::Robust => ModelData::Robust {
                uncertainty: &self.robust_box,
            },
            ModelKind::Scenario => ModelData::Scenario { retained: &retained },
        };
        let prob = DispatchProblem::new(&self.case, &offers, &self.ptdf, assumed, data)?;
        let sol = solve_dispatch(&prob, &self.solver())?;
        let removal = match (model, spec) {
            (ModelKind::Scenario, Some(s)) => s.to_string(),
            (ModelKind::Scenario, None) => "none".to_string(),
            _ => String::new(),
        };
        let epsilon_bound = if model == ModelKind::Scenario {
            Some(self.epsilon(model, p)?)
        } else {
            None
        };
        let mut row = ResultRow {
            pi_dr: join(prices),
            model: model.to_string(),
            removal,
            p,
            dispatch_cost: None,
            expected_cost: None,
            h_star: None,
            realization_cost: None,
            total_dr: None,
            p_balance_vio: None,
            p_branch_vio: None,
            p_h_vio: None,
            epsilon_bound,
            status: sol.status.to_string(),
            config_hash: self.hash.clone(),
        };
        if !sol.is_optimal() {
            warn!("{} at pi={} ended with status {}", model, row.pi_dr, sol.status);
            return Ok(CellResult {
                row,
                solution: Some(sol),
                report: None,
                offers,
            });
        }
        // Evaluation always charges deviations against the true law.
        let eval_prob = DispatchProblem { dists: &self.dists, ..prob };
        let report = evaluate_solution(&sol, &self.test, &eval_prob, &self.cfg.eval)?;
        row.dispatch_cost = Some(sol.dispatch_cost);
        row.expected_cost = Some(sol.expected_cost);
        row.h_star = sol.h_star;
        row.realization_cost = Some(report.w_real);
        row.total_dr = Some(sol.total_dr());
        row.p_balance_vio = Some(report.p_balance_vio);
        row.p_branch_vio = Some(report.p_branch_vio);
        row.p_h_vio = report.p_h_vio;
        Ok(CellResult {
            row,
            solution: Some(sol),
            report: Some(report),
            offers,
        })
    }

    pub fn run_cell(&self, prices: &[f64], model: ModelKind, spec: Option<&RemovalSpec>) -> Result<CellResult> {
        self.run_cell_with(prices, model, spec, &self.dists)
    }

    /// `(model, removal)` pairs in output order.
    pub fn variants(&self) -> Vec<(ModelKind, Option<RemovalSpec>)> {
        let mut out = Vec::new();
        for &m in &self.cfg.models {
            if m == ModelKind::Scenario && !self.cfg.removals.is_empty() {
                out.extend(self.cfg.removals.iter().map(|r| (m, Some(*r))));
            } else {
                out.push((m, None));
            }
        }
        out
    }
}

fn default_box(dists: &[DrDistribution]) -> UncertaintyBox {
    let intervals = dists
        .iter()
        .map(|d| match d {
            DrDistribution::TruncatedNormal(t) => {
                let b = three_sigma_box(&[*t]).clamp_to(&[*d]);
                b.intervals[0]
            }
            DrDistribution::Uniform(_) => d.support(),
        })
        .collect();
    UncertaintyBox { intervals }
}

/// Offer-price sweep: one row per (price, model variant), in grid order.
pub fn sweep_offer_price(ctx: &Context) -> Result<Vec<CellResult>> {
    let points = ctx.cfg.prices.points(ctx.case.n_drps());
    let variants = ctx.variants();
    let cells: Vec<(Vec<f64>, ModelKind, Option<RemovalSpec>)> = points
        .iter()
        .flat_map(|p| variants.iter().map(move |(m, r)| (p.clone(), *m, *r)))
        .collect();
    info!("sweep: {} cells", cells.len());
    cells
        .par_iter()
        .map(|(p, m, r)| ctx.run_cell(p, *m, r.as_ref()))
        .collect()
}

/// Scenario model at fixed prices for each removal count in `p_grid`.
pub fn tradeoff_curve(ctx: &Context, algorithm: Algorithm, p_grid: &[usize], prices: &[f64]) -> Result<Vec<CellResult>> {
    let n = ctx.train.len();
    let specs: Vec<RemovalSpec> = p_grid
        .iter()
        .filter(|&&p| {
            if p >= n {
                warn!("skipping p={p}: only {n} scenarios");
            }
            p < n
        })
        .map(|&p| RemovalSpec {
            algorithm,
            amount: Amount::Count(p),
        })
        .collect();
    specs
        .par_iter()
        .map(|s| ctx.run_cell(prices, ModelKind::Scenario, Some(s)))
        .collect()
}

/// Stochastic model under the true law and under `assumed`, both evaluated
/// on the same test set drawn from the true law.
pub fn misspecification_experiment(ctx: &Context, prices: &[f64], assumed: &[DrDistribution]) -> Result<[CellResult; 2]> {
    let assumed = match assumed.len() {
        1 => vec![assumed[0]; ctx.case.n_drps()],
        _ => assumed.to_vec(),
    };
    let truth = ctx.run_cell(prices, ModelKind::Stochastic, None)?;
    let mut wrong = ctx.run_cell_with(prices, ModelKind::Stochastic, None, &assumed)?;
    wrong.row.model = "sto(assumed)".to_string();
    Ok([truth, wrong])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    pub removal: String,
    pub repetitions: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub n_constraints: usize,
    pub status: String,
}

pub fn mean_median(samples: &[f64]) -> (f64, f64) {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    let median = if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    };
    (mean, median)
}

/// Wall time of model assembly, removal and solve, repeated sequentially.
pub fn timing_report(ctx: &Context, prices: &[f64], repetitions: usize) -> Result<Vec<TimingRow>> {
    let reps = repetitions.max(1);
    let offers = ctx.offers_at(prices)?;
    let mut rows = Vec::new();
    for (model, spec) in ctx.variants() {
        let mut times = Vec::with_capacity(reps);
        let mut last = None;
        for _ in 0..reps {
            let t0 = Instant::now();
            let (retained, _) = if model == ModelKind::Scenario {
                ctx.retained(&offers, spec.as_ref())?
            } else {
                (ctx.train.clone(), 0)
            };
            let data = match model {
                ModelKind::Deterministic => ModelData::Deterministic,
                ModelKind::Stochastic => ModelData::Stochastic {
                    scenarios: &ctx.train,
                    gamma: ctx.cfg.gamma,
                },
                ModelKind::Robust => ModelData::Robust {
                    uncertainty: &ctx.robust_box,
                },
                ModelKind::Scenario => ModelData::Scenario { retained: &retained },
            };
            let prob = DispatchProblem::new(&ctx.case, &offers, &ctx.ptdf, &ctx.dists, data)?;
            let sol = solve_dispatch(&prob, &ctx.solver())?;
            times.push(t0.elapsed().as_secs_f64());
            last = Some(sol);
        }
        let sol = last.expect("at least one repetition");
        let (mean_s, median_s) = mean_median(&times);
        rows.push(TimingRow {
            model: model.to_string(),
            removal: spec.map(|s| s.to_string()).unwrap_or_default(),
            repetitions: reps,
            mean_s,
            median_s,
            n_constraints: sol.n_constraints,
            status: sol.status.to_string(),
        });
    }
    Ok(rows)
}

/// Per-DRP acceptance ratio `P_DR,j / P̄_DR,j` of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub pi_dr: String,
    pub model: String,
    pub removal: String,
    pub drp: String,
    pub bus: u32,
    pub p_dr: Option<f64>,
    pub p_dr_max: f64,
    pub acceptance_ratio: Option<f64>,
    pub status: String,
    pub config_hash: String,
}

pub fn acceptance_rows(ctx: &Context, cells: &[CellResult]) -> Vec<AcceptanceRow> {
    let labels = ctx.case.drp_labels();
    let mut out = Vec::new();
    for c in cells {
        let optimal = c.solution.as_ref().filter(|s| s.is_optimal());
        for (j, o) in c.offers.iter().enumerate() {
            let p = optimal.map(|s| s.p_dr[j]);
            out.push(AcceptanceRow {
                pi_dr: c.row.pi_dr.clone(),
                model: c.row.model.clone(),
                removal: c.row.removal.clone(),
                drp: labels[j].clone(),
                bus: ctx.case.drps[j].bus,
                p_dr: p,
                p_dr_max: o.p_dr_max,
                acceptance_ratio: p.map(|p| if o.p_dr_max > 0.0 { p / o.p_dr_max } else { 0.0 }),
                status: c.row.status.clone(),
                config_hash: ctx.hash.clone(),
            });
        }
    }
    out
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const PLOT_RECIPE: &str = r#"# Plotting recipe for the CSV files in this directory.
# Requires pandas and matplotlib; run from this directory.
import pandas as pd
import matplotlib.pyplot as plt

def by_variant(df):
    df = df.copy()
    df["variant"] = df["model"] + df["removal"].fillna("").map(lambda r: f"({r})" if r else "")
    return df.groupby("variant")

# results.csv from `dispatch sweep`: one panel per metric against the offer price.
sweep = pd.read_csv("results.csv")
sweep["pi"] = sweep["pi_dr"].astype(str).str.split(";").str[0].astype(float)
metrics = ["dispatch_cost", "realization_cost", "total_dr",
           "p_balance_vio", "p_branch_vio", "p_h_vio"]
fig, axes = plt.subplots(2, 3, figsize=(14, 7))
for ax, col in zip(axes.flat, metrics):
    for name, g in by_variant(sweep):
        ax.plot(g["pi"], g[col], label=name)
    ax.set_xlabel("offer price"); ax.set_title(col)
axes.flat[0].legend()
fig.tight_layout(); fig.savefig("sweep.png")

# tradeoff.csv from `dispatch tradeoff`: cost against violation, and both against p.
# t = pd.read_csv("tradeoff.csv")
# plt.plot(t["p_h_vio"], t["realization_cost"], "o-")
# plt.plot(t["p"], t["realization_cost"]); plt.twinx().plot(t["p"], t["p_h_vio"])
# plt.plot(t["p"], t["epsilon_bound"], "--")

# acceptance.csv from `dispatch acceptance`: ratio per DRP against the common price.
# a = pd.read_csv("acceptance.csv")
# for drp, g in a.groupby("drp"): plt.plot(g["pi_dr"].str.split(";").str[0].astype(float), g["acceptance_ratio"], label=drp)
"#;

fn write_recipe(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("plot_recipe.py"), PLOT_RECIPE)?;
    Ok(())
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "dispatch", about = "Day-ahead dispatch experiments with uncertain demand response")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the offer price for every model.
    Sweep(SweepArgs),
    /// Scenario model cost and violation against the number of removed scenarios.
    Tradeoff(TradeoffArgs),
    /// Invert the violation bound.
    Risk(RiskArgs),
    /// Wall-clock comparison of the models.
    Timing(TimingArgs),
    /// Stochastic model under a wrong DR law.
    Misspec(MisspecArgs),
    /// Per-DRP acceptance ratios along a common price sweep.
    Acceptance(SweepArgs),
    /// Fit a truncated normal to observed DR ratios.
    Fit(FitArgs),
    /// Write sampled scenarios to CSV.
    Sample(SampleArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Parameter pack: base3, high-sigma, ieee14, ieee118.
    #[arg(long, default_value = "base3")]
    pub preset: String,
    /// Case file overriding the preset.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// DR law for every DRP as mu,sigma,lo,hi.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed_train: Option<u64>,
    #[arg(long)]
    pub seed_test: Option<u64>,
    /// Number of training scenarios.
    #[arg(long)]
    pub n_scenarios: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Training scenarios from CSV (one column per DRP) instead of sampling.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Variables counted in the bound's dimension: xi, xi+h or full.
    #[arg(long)]
    pub d_count: Option<String>,
    /// Reference for balancing deviations: mu or one.
    #[arg(long)]
    pub rtd_reference: Option<String>,
    #[arg(long)]
    pub feas_tol: Option<f64>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated models: dtm, sto, rob, sce.
    #[arg(long)]
    pub models: Option<String>,
    /// Comma-separated removal rules for sce, e.g. 20%/center,137/min.
    #[arg(long)]
    pub remove: Option<String>,
    /// start:stop:step, one price, or per-DRP prices p1,p2.
    #[arg(long)]
    pub pi_dr: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct TradeoffArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "center")]
    pub algorithm: String,
    /// Removal counts as start:stop:step or a comma list.
    #[arg(long, default_value = "0:900:100")]
    pub p_grid: String,
    #[arg(long, default_value = "100")]
    pub pi_dr: String,
}

#[derive(Debug, Args, Clone)]
pub struct RiskArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub beta: f64,
}

#[derive(Debug, Args, Clone)]
pub struct TimingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub remove: Option<String>,
    #[arg(long)]
    pub pi_dr: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
}

#[derive(Debug, Args, Clone)]
pub struct MisspecArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "100")]
    pub pi_dr: String,
    /// Assumed uniform law as lo,hi.
    #[arg(long, default_value = "0,2")]
    pub assumed_uniform: String,
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    /// CSV with one column of observed DR ratios (header required).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub lo: f64,
    #[arg(long)]
    pub hi: f64,
}

#[derive(Debug, Args, Clone)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Which set to write: train or test.
    #[arg(long, default_value = "train")]
    pub set: String,
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| ExpError::Config(format!("bad number in `{s}`")))
        })
        .collect()
}

pub fn parse_models(s: &str) -> Result<Vec<ModelKind>> {
    let models = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<ModelKind>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if models.is_empty() {
        return Err(ExpError::Config("model list is empty".into()));
    }
    Ok(models)
}

pub fn parse_removals(s: &str) -> Result<Vec<RemovalSpec>> {
    Ok(s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<RemovalSpec>())
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// `start:stop:step` or a comma list of counts.
pub fn parse_counts(s: &str) -> Result<Vec<usize>> {
    let bad = || ExpError::Config(format!("bad count list `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if let [a, b, c] = parts.as_slice() {
        let (a, b, c): (usize, usize, usize) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            c.trim().parse().map_err(|_| bad())?,
        );
        if c == 0 || b < a {
            return Err(bad());
        }
        return Ok((a..=b).step_by(c).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

impl CommonArgs {
    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::preset(&self.preset)?;
        if let Some(c) = &self.case {
            cfg.case_path = c.clone();
        }
        if let Some(d) = &self.dist {
            let v = parse_floats(d)?;
            if v.len() != 4 {
                return Err(ExpError::Config("--dist takes mu,sigma,lo,hi".into()));
            }
            cfg.dists = vec![DrDistribution::truncated_normal(v[0], v[1], v[2], v[3])?];
            cfg.robust_box = None;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.seed_train {
            cfg.seed_train = v;
        }
        if let Some(v) = self.seed_test {
            cfg.seed_test = v;
        }
        if let Some(v) = self.n_scenarios {
            cfg.n_scenarios = v;
        }
        if let Some(v) = self.n_test {
            cfg.n_test = v;
        }
        if let Some(p) = &self.scenarios {
            cfg.scenarios_file = Some(p.clone());
        }
        if let Some(v) = &self.d_count {
            cfg.d_count = v.parse()?;
        }
        if let Some(v) = &self.rtd_reference {
            cfg.eval.rtd_reference = v.parse::<RtdReference>()?;
        }
        if let Some(v) = self.feas_tol {
            cfg.eval.feas_tol = v;
        }
        if let Some(v) = self.tol {
            cfg.solver.tol = v;
        }
        Ok(cfg)
    }
}

fn apply_sweep(cfg: &mut ExperimentConfig, models: &Option<String>, remove: &Option<String>, pi: &Option<String>) -> Result<()> {
    if let Some(m) = models {
        cfg.models = parse_models(m)?;
    }
    if let Some(r) = remove {
        cfg.removals = parse_removals(r)?;
    }
    if let Some(p) = pi {
        cfg.prices = Prices::parse(p)?;
    }
    Ok(())
}

fn first_point(ctx: &Context, prices: &Prices) -> Vec<f64> {
    prices.points(ctx.case.n_drps()).remove(0)
}

/// Runs one parsed command line; returns text for stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Sweep(a) | Command::Acceptance(a) if false => unreachable!("{a:?}"),
        Command::Sweep(a) => {
            let mut cfg = a.common.config()?;
            apply_sweep(&mut cfg, &a.models, &a.remove, &a.pi_dr)?;
            let ctx = Context::new(cfg)?;
            let cells = sweep_offer_price(&ctx)?;
            let rows: Vec<ResultRow> = cells.iter().map(|c| c.row.clone()).collect();
            let out = &a.common.out;
            write_rows(&out.join("results.csv"), &rows)?;
            write_config(out, &ctx.cfg)?;
            write_recipe(out)?;
            Ok(format!("{} rows written to {}", rows.len(), out.join("results.csv").display()))
        }
        Command::Acceptance(a) => {
            let mut cfg = a.common.config()?;
            if a.models.is_none() {
                cfg.models = vec![ModelKind::Deterministic];
            }
            apply_sweep(&mut cfg, &a.models, &a.remove, &a.pi_dr)?;
            let ctx = Context::new(cfg)?;
            let cells = sweep_offer_price(&ctx)?;
            let rows = acceptance_rows(&ctx, &cells);
            let out = &a.common.out;
            write_rows(&out.join("acceptance.csv"), &rows)?;
            write_config(out, &ctx.cfg)?;
            write_recipe(out)?;
            Ok(format!("{} rows written to {}", rows.len(), out.join("acceptance.csv").display()))
        }
        Command::Tradeoff(a) => {
            let cfg = a.common.config()?;
            let algorithm = match a.algorithm.as_str() {
                "min" => Algorithm::Min,
                "center" => Algorithm::Center,
                other => return Err(ExpError::Config(format!("unknown algorithm `{other}`"))),
            };
            let prices = Prices::parse(&a.pi_dr)?;
            let ctx = Context::new(cfg)?;
            let p = first_point(&ctx, &prices);
            let cells = tradeoff_curve(&ctx, algorithm, &parse_counts(&a.p_grid)?, &p)?;
            let rows: Vec<ResultRow> = cells.iter().map(|c| c.row.clone()).collect();
            let out = &a.common.out;
            write_rows(&out.join("tradeoff.csv"), &rows)?;
            write_config(out, &ctx.cfg)?;
            write_recipe(out)?;
            Ok(format!("{} rows written to {}", rows.len(), out.join("tradeoff.csv").display()))
        }
        Command::Risk(a) => {
            let q = BoundQuery::new(a.n, a.p, a.d, a.beta)?;
            let eps = epsilon_for(&q);
            let lhs = if eps < 1.0 { bound_lhs(&q, eps)? } else { f64::NAN };
            Ok(format!("epsilon = {eps:.10}\nlhs_at_epsilon = {lhs:.6e}"))
        }
        Command::Timing(a) => {
            let mut cfg = a.common.config()?;
            apply_sweep(&mut cfg, &a.models, &a.remove, &a.pi_dr)?;
            if a.pi_dr.is_none() && matches!(cfg.prices, Prices::Grid { .. }) {
                cfg.prices = Prices::Fixed(vec![100.0]);
            }
            let ctx = Context::new(cfg)?;
            let p = first_point(&ctx, &ctx.cfg.prices);
            let rows = timing_report(&ctx, &p, a.repetitions)?;
            let out = &a.common.out;
            write_rows(&out.join("timing.csv"), &rows)?;
            let mut text = String::new();
            for r in &rows {
                text.push_str(&format!(
                    "{:<4} {:<12} mean {:>9.4}s median {:>9.4}s rows {:>6} {}\n",
                    r.model, r.removal, r.mean_s, r.median_s, r.n_constraints, r.status
                ));
            }
            Ok(text)
        }
        Command::Misspec(a) => {
            let cfg = a.common.config()?;
            let u = parse_floats(&a.assumed_uniform)?;
            if u.len() != 2 {
                return Err(ExpError::Config("--assumed-uniform takes lo,hi".into()));
            }
            let assumed = DrDistribution::uniform(u[0], u[1])?;
            let ctx = Context::new(cfg)?;
            let p = first_point(&ctx, &Prices::parse(&a.pi_dr)?);
            let cells = misspecification_experiment(&ctx, &p, &[assumed])?;
            let rows: Vec<ResultRow> = cells.iter().map(|c| c.row.clone()).collect();
            let out = &a.common.out;
            write_rows(&out.join("misspec.csv"), &rows)?;
            let reports: Vec<(String, ViolationReport)> = cells
                .iter()
                .filter_map(|c| c.report.clone().map(|r| (c.row.model.clone(), r)))
                .collect();
            Ok(compare_models(&reports)?.to_string())
        }
        Command::Fit(a) => {
            let mut r = csv::Reader::from_path(&a.input)?;
            let mut xs = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let v = rec.get(0).unwrap_or("").trim();
                xs.push(
                    v.parse::<f64>()
                        .map_err(|_| ExpError::Config(format!("bad value `{v}` in {}", a.input.display())))?,
                );
            }
            let t = estimate_params(&xs, a.lo, a.hi)?;
            Ok(format!("mu = {:.6}\nsigma = {:.6}\nlo = {}\nhi = {}", t.mu, t.sigma, t.lo, t.hi))
        }
        Command::Sample(a) => {
            let cfg = a.common.config()?;
            let ctx = Context::new(cfg)?;
            let (set, name) = match a.set.as_str() {
                "train" => (&ctx.train, "train.csv"),
                "test" => (&ctx.test, "test.csv"),
                other => return Err(ExpError::Config(format!("unknown set `{other}`"))),
            };
            fs::create_dir_all(&a.common.out)?;
            let path = a.common.out.join(name);
            let mut f = File::create(&path)?;
            set.write_csv(&mut f)?;
            f.flush()?;
            Ok(format!("{} scenarios written to {}", set.len(), path.display()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(models: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset("base3").unwrap();
        cfg.models = parse_models(models).unwrap();
        cfg.n_scenarios = 200;
        cfg.n_test = 200;
        cfg
    }

    #[test]
    fn price_grid_points() {
        let g = Prices::parse("40:160:5").unwrap();
        let pts = g.points(1);
        assert_eq!(pts.len(), 25);
        assert_eq!(pts[24], vec![160.0]);
        assert_eq!(Prices::parse("30,35").unwrap().points(2), vec![vec![30.0, 35.0]]);
        assert_eq!(Prices::parse("100").unwrap().points(2), vec![vec![100.0, 100.0]]);
        assert!(Prices::parse("1:0:1").is_err());
    }

    #[test]
    fn counts_and_lists() {
        assert_eq!(parse_counts("0:900:100").unwrap().len(), 10);
        assert_eq!(parse_counts("0,5,7").unwrap(), vec![0, 5, 7]);
        assert!(parse_models("").is_err());
        assert_eq!(parse_removals("20%/center,137/min").unwrap().len(), 2);
    }

    #[test]
    fn config_guards() {
        let mut cfg = small("dtm");
        cfg.seed_test = cfg.seed_train;
        assert!(cfg.validate().is_err());
        let mut cfg = small("dtm");
        cfg.models.clear();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = small("dtm");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed_test = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn single_price_deterministic_row() {
        let mut cfg = small("dtm");
        cfg.prices = Prices::Fixed(vec![100.0]);
        let ctx = Context::new(cfg).unwrap();
        let cells = sweep_offer_price(&ctx).unwrap();
        assert_eq!(cells.len(), 1);
        let r = &cells[0].row;
        assert_eq!(r.status, "optimal");
        assert!((r.total_dr.unwrap() - 20.0).abs() < 1e-6);
        assert_eq!(r.p_h_vio, None);
    }

    #[test]
    fn mean_median_single_sample() {
        assert_eq!(mean_median(&[0.25]), (0.25, 0.25));
        assert_eq!(mean_median(&[1.0, 3.0, 2.0, 10.0]), (4.0, 2.5));
    }

    #[test]
    fn sweep_output_is_reproducible() {
        let mut cfg = small("dtm,rob,sce");
        cfg.prices = Prices::Grid {
            start: 80.0,
            stop: 120.0,
            step: 20.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let run_once = |name: &str| {
            let ctx = Context::new(cfg.clone()).unwrap();
            let rows: Vec<ResultRow> = sweep_offer_price(&ctx).unwrap().into_iter().map(|c| c.row).collect();
            let path = dir.path().join(name);
            write_rows(&path, &rows).unwrap();
            fs::read(path).unwrap()
        };
        assert_eq!(run_once("a.csv"), run_once("b.csv"));
    }
}
