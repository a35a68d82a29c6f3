//! Scenario removal before solving the scenario model.
//!
//! Both algorithms score scenarios with offer capacities `P̄_DR,j` as weights,
//! since the accepted amounts are unknown until after the solve.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uncertainty::ScenarioSet;

#[derive(Debug, Error, PartialEq)]
pub enum RemovalError {
    #[error("cannot remove {p} of {n} scenarios")]
    TooMany { p: usize, n: usize },
    #[error("{what}: expected {expected} entries, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("bad removal spec `{0}` (expected e.g. 20%/center or 137/min)")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Drop the scenarios with the lowest weighted total DR.
    Min,
    /// Drop the scenarios farthest from the mean in weighted absolute deviation.
    Center,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Min => "min",
            Algorithm::Center => "center",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Amount {
    Fraction(f64),
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemovalSpec {
    pub algorithm: Algorithm,
    pub amount: Amount,
}

impl RemovalSpec {
    /// Number of scenarios to drop out of `n`; fractions round down.
    pub fn count(&self, n: usize) -> usize {
        match self.amount {
            Amount::Fraction(f) => (f * n as f64 + 1e-9).floor() as usize,
            Amount::Count(p) => p,
        }
    }
}

impl fmt::Display for RemovalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.amount {
            Amount::Fraction(x) => write!(f, "{}%/{}", x * 100.0, self.algorithm),
            Amount::Count(p) => write!(f, "{}/{}", p, self.algorithm),
        }
    }
}

impl FromStr for RemovalSpec {
    type Err = RemovalError;

    /// `20%/min`, `50%/center`, `137/center`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RemovalError::Spec(s.to_string());
        let (amount, algo) = s.trim().split_once('/').ok_or_else(bad)?;
        let algorithm = match algo.trim() {
            "min" => Algorithm::Min,
            "center" => Algorithm::Center,
            _ => return Err(bad()),
        };
        let amount = amount.trim();
        let amount = if let Some(pct) = amount.strip_suffix('%') {
            let v: f64 = pct.trim().parse().map_err(|_| bad())?;
            if !(0.0..100.0).contains(&v) {
                return Err(bad());
            }
            Amount::Fraction(v / 100.0)
        } else {
            Amount::Count(amount.parse().map_err(|_| bad())?)
        };
        Ok(RemovalSpec { algorithm, amount })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub retained: ScenarioSet,
    /// Indices into the original set, in removal order.
    pub removed: Vec<usize>,
}

fn check(u: &ScenarioSet, weights: &[f64], p: usize) -> Result<(), RemovalError> {
    if weights.len() != u.n_drps() {
        return Err(RemovalError::Dimension {
            what: "weights",
            expected: u.n_drps(),
            got: weights.len(),
        });
    }
    if p >= u.len() {
        return Err(RemovalError::TooMany { p, n: u.len() });
    }
    Ok(())
}

/// Removes the `p` scenarios that sort first under `key`, ties by index.
fn remove_by(u: &ScenarioSet, p: usize, key: impl Fn(&[f64]) -> f64) -> Removal {
    let mut order: Vec<(f64, usize)> = u.rows().enumerate().map(|(k, r)| (key(r), k)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let removed: Vec<usize> = order[..p].iter().map(|&(_, k)| k).collect();
    let mut keep = vec![true; u.len()];
    for &k in &removed {
        keep[k] = false;
    }
    let kept: Vec<usize> = (0..u.len()).filter(|&k| keep[k]).collect();
    Removal {
        retained: u.select(&kept),
        removed,
    }
}

/// Drops the `p` scenarios with the smallest `sum_j delta_j w_j`.
pub fn remove_min(u: &ScenarioSet, weights: &[f64], p: usize) -> Result<Removal, RemovalError> {
    check(u, weights, p)?;
    Ok(remove_by(u, p, |r| r.iter().zip(weights).map(|(d, w)| d * w).sum()))
}

/// Drops the `p` scenarios with the largest `sum_j |delta_j - mu_j| w_j`.
pub fn remove_center(u: &ScenarioSet, mu: &[f64], weights: &[f64], p: usize) -> Result<Removal, RemovalError> {
    check(u, weights, p)?;
    if mu.len() != u.n_drps() {
        return Err(RemovalError::Dimension {
            what: "means",
            expected: u.n_drps(),
            got: mu.len(),
        });
    }
    Ok(remove_by(u, p, |r| {
        -r.iter()
            .zip(mu)
            .zip(weights)
            .map(|((d, m), w)| (d - m).abs() * w)
            .sum::<f64>()
    }))
}

pub fn apply(spec: &RemovalSpec, u: &ScenarioSet, mu: &[f64], weights: &[f64]) -> Result<Removal, RemovalError> {
    let p = spec.count(u.len());
    match spec.algorithm {
        Algorithm::Min => remove_min(u, weights, p),
        Algorithm::Center => remove_center(u, mu, weights, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: &[Vec<f64>]) -> ScenarioSet {
        let labels = (1..=rows[0].len()).map(|j| format!("drp{j}")).collect();
        ScenarioSet::from_rows(labels, rows, None).unwrap()
    }

    #[test]
    fn min_single_drp() {
        let u = set(&[vec![0.8], vec![1.0], vec![1.2]]);
        let r = remove_min(&u, &[20.0], 1).unwrap();
        assert_eq!(r.removed, vec![0]);
        assert_eq!(r.retained.len(), 2);
        let same = remove_min(&u, &[20.0], 0).unwrap();
        assert_eq!(same.retained, u);
        assert!(same.removed.is_empty());
    }

    #[test]
    fn min_two_drps() {
        // Scores 25 and 28.
        let u = set(&[vec![1.0, 0.5], vec![0.8, 1.2]]);
        let r = remove_min(&u, &[20.0, 10.0], 1).unwrap();
        assert_eq!(r.removed, vec![0]);
        assert_eq!(r.retained.row(0), &[0.8, 1.2]);
    }

    #[test]
    fn center_single_and_two_drps() {
        let u = set(&[vec![0.7], vec![1.0], vec![1.25]]);
        assert_eq!(remove_center(&u, &[1.0], &[20.0], 1).unwrap().removed, vec![0]);
        assert_eq!(remove_center(&u, &[1.0], &[20.0], 0).unwrap().retained, u);
        // Scores 4 and 7.
        let u = set(&[vec![1.2, 1.0], vec![0.9, 1.5]]);
        assert_eq!(remove_center(&u, &[1.0, 1.0], &[20.0, 10.0], 1).unwrap().removed, vec![1]);
    }

    #[test]
    fn ties_break_by_index() {
        let u = set(&[vec![1.5], vec![0.5], vec![1.5]]);
        assert_eq!(remove_center(&u, &[1.0], &[1.0], 2).unwrap().removed, vec![0, 1]);
    }

    #[test]
    fn rejects_too_many() {
        let u = set(&[vec![1.0], vec![1.1]]);
        assert_eq!(remove_min(&u, &[1.0], 2), Err(RemovalError::TooMany { p: 2, n: 2 }));
        assert!(remove_min(&u, &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn spec_parsing() {
        let s: RemovalSpec = "20%/min".parse().unwrap();
        assert_eq!(s.algorithm, Algorithm::Min);
        assert_eq!(s.count(1000), 200);
        let s: RemovalSpec = "50%/center".parse().unwrap();
        assert_eq!(s.count(1001), 500);
        let s: RemovalSpec = "137/center".parse().unwrap();
        assert_eq!(s.amount, Amount::Count(137));
        assert_eq!(s.to_string(), "137/center");
        assert!("20%".parse::<RemovalSpec>().is_err());
        assert!("x/min".parse::<RemovalSpec>().is_err());
        assert!("150%/min".parse::<RemovalSpec>().is_err());
    }

    proptest! {
        #[test]
        fn partition_invariants(rows in prop::collection::vec(prop::collection::vec(0.5..1.5f64, 2), 2..40),
                                w1 in 0.0..50.0f64, w2 in 0.0..50.0f64, frac in 0.0..1.0f64, center in any::<bool>()) {
            let u = set(&rows);
            let p = ((u.len() - 1) as f64 * frac) as usize;
            let w = [w1, w2];
            let r = if center {
                remove_center(&u, &[1.0, 1.0], &w, p).unwrap()
            } else {
                remove_min(&u, &w, p).unwrap()
            };
            prop_assert_eq!(r.removed.len(), p);
            prop_assert_eq!(r.retained.len() + p, u.len());
            let mut seen: Vec<usize> = r.removed.clone();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), p);
            // Retained rows are the complement, in original order.
            let kept: Vec<usize> = (0..u.len()).filter(|k| !r.removed.contains(k)).collect();
            prop_assert_eq!(&r.retained, &u.select(&kept));
            if !center {
                let score = |row: &[f64]| row[0] * w1 + row[1] * w2;
                let min_kept = r.retained.rows().map(score).fold(f64::INFINITY, f64::min);
                for &k in &r.removed {
                    prop_assert!(score(u.row(k)) <= min_kept);
                }
            }
            let again = if center { remove_center(&u, &[1.0, 1.0], &w, p).unwrap() } else { remove_min(&u, &w, p).unwrap() };
            prop_assert_eq!(again, r);
        }
    }
}
