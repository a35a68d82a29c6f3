//! A-priori violation bound for the scenario program with removed scenarios.
//!
//! For `N` scenarios, `p` of them removed and a decision of dimension `d`,
//! the solution violates a fresh scenario with probability above `eps` with
//! confidence at most
//!
//! ```text
//!     C(p+d-1, p) * sum_{i=0}^{p+d-1} C(N, i) eps^i (1-eps)^(N-i)
//! ```
//!
//! Everything is evaluated in log space so `N` can reach the millions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::dispatch::ModelKind;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("eps must lie in (0, 1), got {0}")]
    Eps(f64),
    #[error("beta must lie in (0, 1), got {0}")]
    Beta(f64),
    #[error("need n >= 1 and d >= 1 (n={n}, d={d})")]
    Counts { n: usize, d: usize },
    #[error("unknown d-count `{0}` (expected xi, xi+h or full)")]
    DCount(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub beta: f64,
}

impl BoundQuery {
    pub fn new(n: usize, p: usize, d: usize, beta: f64) -> Result<Self, RiskError> {
        if n == 0 || d == 0 {
            return Err(RiskError::Counts { n, d });
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(RiskError::Beta(beta));
        }
        Ok(BoundQuery { n, p, d, beta })
    }

    /// Upper summation index `p + d - 1`.
    fn k(&self) -> usize {
        self.p + self.d - 1
    }

    /// The bound is vacuous when `p + d - 1 >= N`.
    pub fn is_vacuous(&self) -> bool {
        self.k() >= self.n
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Natural log of the bound's left-hand side.
pub fn log_bound_lhs(q: &BoundQuery, eps: f64) -> Result<f64, RiskError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(RiskError::Eps(eps));
    }
    let k = q.k();
    let lead = ln_choose(k, q.p);
    if k >= q.n {
        // The binomial sum covers the whole distribution.
        return Ok(lead);
    }
    let (le, l1e) = (eps.ln(), (-eps).ln_1p());
    let nf = q.n as f64;
    let step = |i: usize| ((nf - i as f64) / (i as f64 + 1.0)).ln() + le - l1e;
    let mut terms = Vec::with_capacity(k + 1);
    let mut t = nf * l1e;
    terms.push(t);
    for i in 0..k {
        t += step(i);
        terms.push(t);
    }
    if (k as f64) > nf * eps {
        // Mode lies inside the partial sum: 1 - upper tail is more accurate.
        let mut upper = Vec::new();
        for i in k..q.n {
            t += step(i);
            upper.push(t);
            if step(i) < 0.0 && t < terms[k] - 60.0 {
                break;
            }
        }
        let max = upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail = upper.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        return Ok(lead + (-tail.exp()).ln_1p());
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|v| (v - max).exp()).sum();
    Ok(lead + max + sum.ln())
}

pub fn bound_lhs(q: &BoundQuery, eps: f64) -> Result<f64, RiskError> {
    log_bound_lhs(q, eps).map(f64::exp)
}

/// Smallest `eps` with `bound_lhs <= beta`, by bisection to `1e-10`.
/// Returns 1 when the bound is vacuous.
pub fn epsilon_for(q: &BoundQuery) -> f64 {
    if q.is_vacuous() {
        return 1.0;
    }
    let target = q.beta.ln();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        match log_bound_lhs(q, mid) {
            Ok(v) if v <= target => hi = mid,
            _ => lo = mid,
        }
    }
    hi
}

/// Which variables count toward the dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DCount {
    /// `M + N`.
    Xi,
    /// `M + N + 1`.
    XiH,
    /// Every decision variable of the solved program. The epigraph program
    /// has no variables beyond `[P_G, P_DR, s]`, so this equals `XiH` there.
    Full,
}

impl DCount {
    pub fn dimension(&self, n_generators: usize, n_drps: usize, model: ModelKind) -> usize {
        let xi = n_generators + n_drps;
        match self {
            DCount::Xi => xi,
            DCount::XiH => xi + 1,
            DCount::Full => xi + usize::from(model.has_epigraph()),
        }
    }
}

impl fmt::Display for DCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DCount::Xi => "xi",
            DCount::XiH => "xi+h",
            DCount::Full => "full",
        })
    }
}

impl FromStr for DCount {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "xi" => Ok(DCount::Xi),
            "xi+h" => Ok(DCount::XiH),
            "full" => Ok(DCount::Full),
            other => Err(RiskError::DCount(other.to_string())),
        }
    }
}
