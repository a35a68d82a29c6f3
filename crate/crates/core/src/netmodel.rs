//! Power-system cases and DC power-flow sensitivities.
//!
//! A [`NetworkCase`] is loaded from JSON and validated once; after that it is
//! immutable. [`PtdfMatrix`] maps per-bus net injections to branch flows under
//! the lossless DC approximation, referenced to the case's slack bus.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("failed to read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse case: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema violation in {record}: field `{field}` {reason}")]
    Schema {
        record: String,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("network is disconnected: bus {0} is not reachable from the slack bus")]
    Disconnected(u32),
    #[error("susceptance matrix is singular")]
    SingularSusceptance,
    #[error("dimension mismatch: expected {expected} entries for {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Branch thermal limit. Serialized as a number of MW or the string `"unlimited"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLimit", into = "RawLimit")]
pub enum FlowLimit {
    Limited(f64),
    Unlimited,
}

impl FlowLimit {
    pub fn mw(&self) -> Option<f64> {
        match *self {
            FlowLimit::Limited(v) => Some(v),
            FlowLimit::Unlimited => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawLimit {
    Mw(f64),
    Marker(String),
}

impl TryFrom<RawLimit> for FlowLimit {
    type Error = String;

    fn try_from(raw: RawLimit) -> Result<Self, Self::Error> {
        match raw {
            RawLimit::Mw(v) => Ok(FlowLimit::Limited(v)),
            RawLimit::Marker(s) if s == "unlimited" => Ok(FlowLimit::Unlimited),
            RawLimit::Marker(s) => Err(format!("expected a number or \"unlimited\", got \"{s}\"")),
        }
    }
}

impl From<FlowLimit> for RawLimit {
    fn from(limit: FlowLimit) -> Self {
        match limit {
            FlowLimit::Limited(v) => RawLimit::Mw(v),
            FlowLimit::Unlimited => RawLimit::Marker("unlimited".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub load_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub reactance_pu: f64,
    pub flow_limit_mw: FlowLimit,
}

/// Generator with cost `a * p^2 + b * p` in $/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub a: f64,
    pub b: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
}

impl Generator {
    pub fn cost(&self, p: f64) -> f64 {
        self.a * p * p + self.b * p
    }
}

/// Demand response provider placed at a bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drp {
    pub bus: u32,
    pub p_base_mw: f64,
    pub pi_rr: f64,
    pub pi_max: f64,
    /// Marginal cost of the auxiliary balancing generator at this bus.
    pub pi_aux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub drps: Vec<Drp>,
    pub slack_bus: u32,
    #[serde(skip)]
    index: HashMap<u32, usize>,
}

impl NetworkCase {
    /// Builds and validates a case from its parts.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        drps: Vec<Drp>,
        slack_bus: u32,
    ) -> Result<Self, CaseError> {
        let mut case = NetworkCase {
            name: None,
            buses,
            branches,
            generators,
            drps,
            slack_bus,
            index: HashMap::new(),
        };
        case.validate()?;
        Ok(case)
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let mut case: NetworkCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }

    fn validate(&mut self) -> Result<(), CaseError> {
        let mut index = HashMap::with_capacity(self.buses.len());
        for (k, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            if !(bus.load_mw >= 0.0 && bus.load_mw.is_finite()) {
                return Err(schema(format!("bus {}", bus.id), "load_mw", "must be finite and >= 0"));
            }
        }
        if self.buses.is_empty() {
            return Err(schema("case".into(), "buses", "must not be empty"));
        }
        let known = |id: u32| index.contains_key(&id);
        if !known(self.slack_bus) {
            return Err(schema(
                "case".into(),
                "slack_bus",
                format!("references missing bus {}", self.slack_bus),
            ));
        }
        for (r, br) in self.branches.iter().enumerate() {
            let rec = format!("branch {r}");
            if !known(br.from_bus) {
                return Err(schema(rec, "from_bus", format!("references missing bus {}", br.from_bus)));
            }
            if !known(br.to_bus) {
                return Err(schema(rec, "to_bus", format!("references missing bus {}", br.to_bus)));
            }
            if br.from_bus == br.to_bus {
                return Err(schema(rec, "to_bus", "must differ from from_bus"));
            }
            if !(br.reactance_pu > 0.0 && br.reactance_pu.is_finite()) {
                return Err(schema(rec, "reactance_pu", "must be finite and > 0"));
            }
            if let FlowLimit::Limited(f) = br.flow_limit_mw {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(schema(rec, "flow_limit_mw", "must be > 0 or \"unlimited\""));
                }
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            let rec = format!("generator {i}");
            if !known(g.bus) {
                return Err(schema(rec, "bus", format!("references missing bus {}", g.bus)));
            }
            if !(g.a >= 0.0 && g.a.is_finite()) {
                return Err(schema(rec, "a", "must be finite and >= 0"));
            }
            if !(g.b >= 0.0 && g.b.is_finite()) {
                return Err(schema(rec, "b", "must be finite and >= 0"));
            }
            if !(g.p_min_mw >= 0.0 && g.p_min_mw.is_finite()) {
                return Err(schema(rec, "p_min_mw", "must be finite and >= 0"));
            }
            if !(g.p_max_mw >= g.p_min_mw && g.p_max_mw.is_finite()) {
                return Err(schema(rec, "p_max_mw", "must be finite and >= p_min_mw"));
            }
        }
        let mut drp_buses = HashSet::new();
        for (j, d) in self.drps.iter().enumerate() {
            let rec = format!("drp {j}");
            if !known(d.bus) {
                return Err(schema(rec, "bus", format!("references missing bus {}", d.bus)));
            }
            if !drp_buses.insert(d.bus) {
                return Err(schema(rec, "bus", format!("bus {} already hosts a DRP", d.bus)));
            }
            if !(d.p_base_mw > 0.0 && d.p_base_mw.is_finite()) {
                return Err(schema(rec, "p_base_mw", "must be finite and > 0"));
            }
            if !(d.pi_max > d.pi_rr) {
                return Err(schema(rec, "pi_max", "must exceed pi_rr"));
            }
            if !(d.pi_aux >= 0.0 && d.pi_aux.is_finite()) {
                return Err(schema(rec, "pi_aux", "must be finite and >= 0"));
            }
        }
        let total: f64 = self.buses.iter().map(|b| b.load_mw).sum();
        if !(total > 0.0) {
            return Err(schema("case".into(), "buses", "total load must be > 0"));
        }
        self.index = index;
        self.check_connected()
    }

    fn check_connected(&self) -> Result<(), CaseError> {
        let nb = self.buses.len();
        let mut adj = vec![Vec::new(); nb];
        for br in &self.branches {
            let (f, t) = (self.index[&br.from_bus], self.index[&br.to_bus]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; nb];
        let start = self.index[&self.slack_bus];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(CaseError::Disconnected(self.buses[k].id)),
            None => Ok(()),
        }
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: u32) -> usize {
        self.index[&id]
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_drps(&self) -> usize {
        self.drps.len()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load_mw).sum()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load_mw).collect()
    }

    /// Stable labels for DRP columns, `drp1..drpN`.
    pub fn drp_labels(&self) -> Vec<String> {
        (1..=self.drps.len()).map(|j| format!("drp{j}")).collect()
    }

    /// Indices of branches that carry a finite limit.
    pub fn limited_branches(&self) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.flow_limit_mw.mw().is_some())
            .map(|(r, _)| r)
            .collect()
    }

    /// Returns a copy with every bus load multiplied by `factor`. Validation is
    /// skipped so that a zero-load variant can be produced for experiments.
    pub fn with_scaled_load(&self, factor: f64) -> NetworkCase {
        let mut case = self.clone();
        for bus in &mut case.buses {
            bus.load_mw *= factor;
        }
        case
    }
}

fn schema(record: String, field: &'static str, reason: impl Into<String>) -> CaseError {
    CaseError::Schema {
        record,
        field,
        reason: reason.into(),
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    NetworkCase::from_json(&text)
}

/// Power transfer distribution factors: `flows = H * injections`.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    h: DMatrix<f64>,
}

impl PtdfMatrix {
    pub fn n_branches(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_buses(&self) -> usize {
        self.h.ncols()
    }

    pub fn get(&self, branch: usize, bus: usize) -> f64 {
        self.h[(branch, bus)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        assert_eq!(injections.len(), self.n_buses(), "injection vector length");
        (0..self.n_branches())
            .map(|r| {
                self.h
                    .row(r)
                    .iter()
                    .zip(injections)
                    .map(|(h, p)| h * p)
                    .sum()
            })
            .collect()
    }
}

impl fmt::Display for PtdfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.n_branches() {
            let row: Vec<String> = self.h.row(r).iter().map(|v| format!("{v:9.5}")).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

pub fn compute_ptdf(case: &NetworkCase) -> Result<PtdfMatrix, CaseError> {
    let nb = case.n_buses();
    let slack = case.bus_index(case.slack_bus);
    let mut bbus = DMatrix::<f64>::zeros(nb, nb);
    for br in &case.branches {
        let (f, t) = (case.bus_index(br.from_bus), case.bus_index(br.to_bus));
        let b = 1.0 / br.reactance_pu;
        bbus[(f, f)] += b;
        bbus[(t, t)] += b;
        bbus[(f, t)] -= b;
        bbus[(t, f)] -= b;
    }
    let keep: Vec<usize> = (0..nb).filter(|&k| k != slack).collect();
    let reduced = bbus.select_rows(&keep).select_columns(&keep);
    let x_red = if keep.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        reduced.lu().try_inverse().ok_or(CaseError::SingularSusceptance)?
    };
    // Reactance matrix padded with a zero row/column at the slack bus.
    let mut x_full = DMatrix::<f64>::zeros(nb, nb);
    for (a, &ka) in keep.iter().enumerate() {
        for (b, &kb) in keep.iter().enumerate() {
            x_full[(ka, kb)] = x_red[(a, b)];
        }
    }
    if x_full.iter().any(|v| !v.is_finite()) {
        return Err(CaseError::SingularSusceptance);
    }
    let mut h = DMatrix::<f64>::zeros(case.branches.len(), nb);
    for (r, br) in case.branches.iter().enumerate() {
        let (f, t) = (case.bus_index(br.from_bus), case.bus_index(br.to_bus));
        let b = 1.0 / br.reactance_pu;
        for k in 0..nb {
            h[(r, k)] = b * (x_full[(f, k)] - x_full[(t, k)]);
        }
    }
    Ok(PtdfMatrix { h })
}

/// Net injection per bus for dispatch `xi = [p_g; p_dr]` and DR ratios `delta`.
pub fn net_injection(case: &NetworkCase, xi: &[f64], delta: &[f64]) -> Result<Vec<f64>, CaseError> {
    let (m, n) = (case.n_generators(), case.n_drps());
    if xi.len() != m + n {
        return Err(CaseError::Dimension {
            what: "dispatch vector",
            expected: m + n,
            got: xi.len(),
        });
    }
    if delta.len() != n {
        return Err(CaseError::Dimension {
            what: "DR ratio vector",
            expected: n,
            got: delta.len(),
        });
    }
    let mut inj: Vec<f64> = case.buses.iter().map(|b| -b.load_mw).collect();
    for (g, p) in case.generators.iter().zip(&xi[..m]) {
        inj[case.bus_index(g.bus)] += p;
    }
    for ((d, p), dl) in case.drps.iter().zip(&xi[m..]).zip(delta) {
        inj[case.bus_index(d.bus)] += dl * p;
    }
    Ok(inj)
}
