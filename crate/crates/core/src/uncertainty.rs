//! DR-ratio distributions and sampled uncertainty sets.
//!
//! The realized-over-scheduled DR ratio of each provider is modeled as a
//! truncated normal. Scenario sets are drawn by inverse-CDF sampling on the
//! truncated range so that a seed fully determines the draws.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    Probability(f64),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("cannot estimate parameters: {0}")]
    Estimation(String),
    #[error("scenario set error: {0}")]
    Scenarios(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error about 1.15e-9) followed by
/// one Newton step on `erfc`-based `Phi`, which brings `|Phi(z) - q|` to
/// rounding level.
pub fn inv_norm_cdf(q: f64) -> Result<f64, UncertaintyError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(UncertaintyError::Probability(q));
    }
    let z = acklam(q);
    let pdf = std_normal_pdf(z);
    if pdf > 0.0 {
        Ok(z - (std_normal_cdf(z) - q) / pdf)
    } else {
        Ok(z)
    }
}

fn acklam(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const LOW: f64 = 0.024_25;
    if q < LOW {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if q <= 1.0 - LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let t = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    }
}

/// Normal distribution with mean `mu` and standard deviation `sigma`,
/// restricted to `[lo, hi]` and renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self, UncertaintyError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(UncertaintyError::Distribution(format!("sigma must be > 0, got {sigma}")));
        }
        if !(lo < hi) || !mu.is_finite() {
            return Err(UncertaintyError::Distribution(format!(
                "need lo < hi and finite mu, got mu={mu}, [{lo}, {hi}]"
            )));
        }
        Ok(TruncatedNormal { mu, sigma, lo, hi })
    }

    fn alpha(&self) -> f64 {
        (self.lo - self.mu) / self.sigma
    }

    fn beta(&self) -> f64 {
        (self.hi - self.mu) / self.sigma
    }

    /// Probability mass of the parent normal inside `[lo, hi]`.
    pub fn mass(&self) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        if a > 0.0 {
            std_normal_cdf(-a) - std_normal_cdf(-b)
        } else {
            std_normal_cdf(b) - std_normal_cdf(a)
        }
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        self.mu + self.sigma * (std_normal_pdf(a) - std_normal_pdf(b)) / self.mass()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        std_normal_pdf((x - self.mu) / self.sigma) / (self.sigma * self.mass())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let z = (x - self.mu) / self.sigma;
        let a = self.alpha();
        if a > 0.0 {
            (std_normal_cdf(-a) - std_normal_cdf(-z)) / self.mass()
        } else {
            (std_normal_cdf(z) - std_normal_cdf(a)) / self.mass()
        }
    }

    /// Inverse CDF of the truncated law; `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        // Work in whichever tail keeps the CDF values away from 1.
        let z = if a > 0.0 {
            let (ua, ub) = (std_normal_cdf(-a), std_normal_cdf(-b));
            -inv_or_edge(ua - u * (ua - ub), -a, -b)
        } else {
            let (ua, ub) = (std_normal_cdf(a), std_normal_cdf(b));
            inv_or_edge(ua + u * (ub - ua), a, b)
        };
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }
}

fn inv_or_edge(q: f64, edge_lo: f64, edge_hi: f64) -> f64 {
    match inv_norm_cdf(q) {
        Ok(z) => z,
        Err(_) if q <= 0.0 => edge_lo.min(edge_hi),
        Err(_) => edge_lo.max(edge_hi),
    }
}

/// Continuous uniform law on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

/// DR-ratio law of one provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrDistribution {
    TruncatedNormal(TruncatedNormal),
    Uniform(Uniform),
}

impl DrDistribution {
    pub fn truncated_normal(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self, UncertaintyError> {
        TruncatedNormal::new(mu, sigma, lo, hi).map(DrDistribution::TruncatedNormal)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, UncertaintyError> {
        if !(lo < hi) {
            return Err(UncertaintyError::Distribution(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(DrDistribution::Uniform(Uniform { lo, hi }))
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            DrDistribution::TruncatedNormal(t) => (t.lo, t.hi),
            DrDistribution::Uniform(u) => (u.lo, u.hi),
        }
    }

    /// Location parameter: `mu` for the truncated normal, the midpoint for uniform.
    pub fn location(&self) -> f64 {
        match self {
            DrDistribution::TruncatedNormal(t) => t.mu,
            DrDistribution::Uniform(u) => 0.5 * (u.lo + u.hi),
        }
    }

    /// Expectation of the (truncated) law.
    pub fn mean(&self) -> f64 {
        match self {
            DrDistribution::TruncatedNormal(t) => t.mean(),
            DrDistribution::Uniform(u) => 0.5 * (u.lo + u.hi),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            DrDistribution::TruncatedNormal(t) => t.quantile(u),
            DrDistribution::Uniform(d) => d.lo + u * (d.hi - d.lo),
        }
    }

    /// Margin `g` for the linearized adequacy constraint at risk level `gamma`.
    ///
    /// For the truncated normal this is `mu + sigma * Phi^-1(1 - gamma)` with the
    /// untruncated quantile. For the uniform law it is the exact quantile at
    /// `1 - gamma`.
    pub fn chance_margin(&self, gamma: f64) -> Result<f64, UncertaintyError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(UncertaintyError::Probability(gamma));
        }
        match self {
            DrDistribution::TruncatedNormal(t) => chance_margin(t, gamma),
            DrDistribution::Uniform(u) => Ok(u.lo + (1.0 - gamma) * (u.hi - u.lo)),
        }
    }
}

pub fn chance_margin(dist: &TruncatedNormal, gamma: f64) -> Result<f64, UncertaintyError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(UncertaintyError::Probability(gamma));
    }
    Ok(dist.mu + dist.sigma * inv_norm_cdf(1.0 - gamma)?)
}

/// `N_k` scenarios by `N` providers, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    labels: Vec<String>,
    values: Vec<f64>,
    seed: Option<u64>,
}

impl ScenarioSet {
    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>], seed: Option<u64>) -> Result<Self, UncertaintyError> {
        let n = labels.len();
        let mut values = Vec::with_capacity(rows.len() * n);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(UncertaintyError::Scenarios(format!(
                    "row {k} has {} entries, expected {n}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        if rows.is_empty() {
            return Err(UncertaintyError::Scenarios("scenario set is empty".into()));
        }
        Ok(ScenarioSet { labels, values, seed })
    }

    pub fn len(&self) -> usize {
        if self.labels.is_empty() {
            0
        } else {
            self.values.len() / self.labels.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_drps(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.labels.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.labels.len().max(1))
    }

    /// Scenarios at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> ScenarioSet {
        let mut values = Vec::with_capacity(indices.len() * self.n_drps());
        for &k in indices {
            values.extend_from_slice(self.row(k));
        }
        ScenarioSet {
            labels: self.labels.clone(),
            values,
            seed: self.seed,
        }
    }

    /// Checks every entry lies in its provider's support.
    pub fn check_support(&self, dists: &[DrDistribution]) -> Result<(), UncertaintyError> {
        if dists.len() != self.n_drps() {
            return Err(UncertaintyError::Scenarios(format!(
                "{} distributions for {} columns",
                dists.len(),
                self.n_drps()
            )));
        }
        for (k, row) in self.rows().enumerate() {
            for (j, (&v, d)) in row.iter().zip(dists).enumerate() {
                let (lo, hi) = d.support();
                if !(v >= lo && v <= hi) {
                    return Err(UncertaintyError::Scenarios(format!(
                        "scenario {k}, column {j}: {v} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), UncertaintyError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.labels)?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<ScenarioSet, UncertaintyError> {
        let mut r = csv::Reader::from_reader(reader);
        let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| UncertaintyError::Scenarios(format!("bad value {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        ScenarioSet::from_rows(labels, &rows, None)
    }
}

/// Draws `n` i.i.d. scenarios; columns are independent across providers.
pub fn sample(dists: &[DrDistribution], labels: &[String], n: usize, seed: u64) -> ScenarioSet {
    assert!(n >= 1, "scenario count must be positive");
    assert_eq!(dists.len(), labels.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * dists.len());
    for _ in 0..n {
        for d in dists {
            let u: f64 = rng.random();
            values.push(d.quantile(u));
        }
    }
    ScenarioSet {
        labels: labels.to_vec(),
        values,
        seed: Some(seed),
    }
}

/// Per-provider interval of the robust uncertainty box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBox {
    pub intervals: Vec<(f64, f64)>,
}

impl UncertaintyBox {
    pub fn lo(&self, j: usize) -> f64 {
        self.intervals[j].0
    }

    pub fn hi(&self, j: usize) -> f64 {
        self.intervals[j].1
    }

    pub fn contains(&self, delta: &[f64]) -> bool {
        delta
            .iter()
            .zip(&self.intervals)
            .all(|(&d, &(lo, hi))| d >= lo && d <= hi)
    }

    /// Intersects every interval with the provider's support.
    pub fn clamp_to(&self, dists: &[DrDistribution]) -> UncertaintyBox {
        UncertaintyBox {
            intervals: self
                .intervals
                .iter()
                .zip(dists)
                .map(|(&(lo, hi), d)| {
                    let (slo, shi) = d.support();
                    (lo.max(slo), hi.min(shi))
                })
                .collect(),
        }
    }
}

/// `[mu - 3 sigma, mu + 3 sigma]` per provider, before any clamping.
pub fn three_sigma_box(dists: &[TruncatedNormal]) -> UncertaintyBox {
    UncertaintyBox {
        intervals: dists
            .iter()
            .map(|d| (d.mu - 3.0 * d.sigma, d.mu + 3.0 * d.sigma))
            .collect(),
    }
}

/// Maximum-likelihood truncated normal on a known `[lo, hi]`.
pub fn estimate_params(samples: &[f64], lo: f64, hi: f64) -> Result<TruncatedNormal, UncertaintyError> {
    if samples.len() < 2 {
        return Err(UncertaintyError::Estimation("need at least two samples".into()));
    }
    if !(lo < hi) {
        return Err(UncertaintyError::Estimation(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if let Some(x) = samples.iter().find(|&&x| !(x >= lo && x <= hi)) {
        return Err(UncertaintyError::Estimation(format!("sample {x} outside [{lo}, {hi}]")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(UncertaintyError::Estimation("samples are all equal".into()));
    }
    // sigma is searched in log space, capped well beyond the support width where
    // the truncated law is indistinguishable from uniform.
    let log_sigma_max = (1e3 * (hi - lo)).ln();
    let nll = |p: [f64; 2]| -> f64 {
        let (mu, log_sigma) = (p[0], p[1].min(log_sigma_max));
        let sigma = log_sigma.exp();
        let Ok(t) = TruncatedNormal::new(mu, sigma, lo, hi) else {
            return f64::INFINITY;
        };
        let mass = t.mass();
        if !(mass > 0.0) {
            return f64::INFINITY;
        }
        let ss: f64 = samples.iter().map(|x| ((x - mu) / sigma).powi(2)).sum();
        n * log_sigma + 0.5 * ss + n * mass.ln()
    };
    let start = [mean, 0.5 * var.ln()];
    let best = nelder_mead(nll, start, [0.1 * var.sqrt(), 0.2], 1e-12, 5000);
    let sigma = best[1].min(log_sigma_max).exp();
    TruncatedNormal::new(best[0], sigma, lo, hi)
}

/// Two-dimensional Nelder-Mead with standard coefficients.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, x0: [f64; 2], step: [f64; 2], tol: f64, max_iter: usize) -> [f64; 2] {
    let mut simplex = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut values = simplex.map(&f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (values[2] - values[0]).abs();
        let size = (simplex[2][0] - simplex[0][0])
            .abs()
            .max((simplex[2][1] - simplex[0][1]).abs())
            .max((simplex[1][0] - simplex[0][0]).abs())
            .max((simplex[1][1] - simplex[0][1]).abs());
        if spread <= tol * (1.0 + values[0].abs()) && size <= 1e-10 {
            break;
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    simplex[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Bisection on the erf-based CDF; independent of the rational approximation.
    fn bisect_quantile(q: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_check_values() {
        assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(bisect_quantile(0.2), -0.841_621, epsilon = 1e-6);
        assert_abs_diff_eq!(bisect_quantile(0.975), 1.959_964, epsilon = 1e-6);
        assert_abs_diff_eq!(inv_norm_cdf(0.2).unwrap(), -0.841_621, epsilon = 1e-5);
        assert_abs_diff_eq!(inv_norm_cdf(0.975).unwrap(), 1.959_964, epsilon = 1e-5);
    }

    #[test]
    fn quantile_residual_below_1e9() {
        for i in 1..2000 {
            let q = i as f64 / 2000.0;
            let z = inv_norm_cdf(q).unwrap();
            assert!((std_normal_cdf(z) - q).abs() <= 1e-9, "q={q}");
            assert_abs_diff_eq!(z, bisect_quantile(q), epsilon = 1e-8);
        }
        for q in [1e-12, 1e-8, 1e-4, 1.0 - 1e-4, 1.0 - 1e-9] {
            let z = inv_norm_cdf(q).unwrap();
            assert!((std_normal_cdf(z) - q).abs() <= 1e-9, "q={q}");
        }
    }

    #[test]
    fn quantile_domain() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inv_norm_cdf(q).is_err());
        }
    }

    #[test]
    fn chance_margin_values() {
        let narrow = TruncatedNormal::new(1.0, 0.1, 0.5, 1.5).unwrap();
        let wide = TruncatedNormal::new(1.0, 0.67, 0.2, 1.8).unwrap();
        assert_eq!(chance_margin(&narrow, 0.5).unwrap(), 1.0);
        assert_abs_diff_eq!(chance_margin(&narrow, 0.8).unwrap(), 0.915_838, epsilon = 1e-5);
        assert_abs_diff_eq!(chance_margin(&wide, 0.8).unwrap(), 0.436_113, epsilon = 1e-4);
        assert!(chance_margin(&narrow, 1.0).is_err());
    }

    #[test]
    fn uniform_margin_is_quantile() {
        let u = DrDistribution::uniform(0.0, 2.0).unwrap();
        assert_abs_diff_eq!(u.chance_margin(0.8).unwrap(), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn three_sigma_values() {
        let b = three_sigma_box(&[
            TruncatedNormal::new(1.0, 0.1, 0.5, 1.5).unwrap(),
            TruncatedNormal::new(1.0, 0.67, 0.2, 1.8).unwrap(),
        ]);
        assert_abs_diff_eq!(b.lo(0), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(b.hi(0), 1.3, epsilon = 1e-12);
        assert_abs_diff_eq!(b.lo(1), -1.01, epsilon = 1e-12);
        assert_abs_diff_eq!(b.hi(1), 3.01, epsilon = 1e-12);
        let tiny = three_sigma_box(&[TruncatedNormal::new(1.0, 1e-300, 0.5, 1.5).unwrap()]);
        assert_eq!(tiny.intervals[0], (1.0, 1.0));
    }

    #[test]
    fn symmetric_truncation_keeps_mean() {
        let t = TruncatedNormal::new(1.0, 0.67, 0.2, 1.8).unwrap();
        assert_abs_diff_eq!(t.mean(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sampling_is_seeded() {
        let d = [DrDistribution::truncated_normal(1.0, 0.1, 0.5, 1.5).unwrap()];
        let labels = vec!["drp1".to_string()];
        let a = sample(&d, &labels, 1000, 7);
        let b = sample(&d, &labels, 1000, 7);
        let c = sample(&d, &labels, 1000, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.check_support(&d).unwrap();
    }

    #[test]
    fn scenario_csv_round_trip() {
        let d = [
            DrDistribution::truncated_normal(1.0, 0.1, 0.5, 1.5).unwrap(),
            DrDistribution::uniform(0.0, 2.0).unwrap(),
        ];
        let labels = vec!["drp1".to_string(), "drp2".to_string()];
        let set = sample(&d, &labels, 25, 3);
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = ScenarioSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.labels(), set.labels());
        assert_eq!(back.len(), 25);
        for k in 0..25 {
            assert_eq!(back.row(k), set.row(k));
        }
    }

    #[test]
    fn estimation_rejects_degenerate() {
        assert!(estimate_params(&[1.0, 1.0, 1.0], 0.0, 2.0).is_err());
        assert!(estimate_params(&[1.0], 0.0, 2.0).is_err());
        assert!(estimate_params(&[1.0, 3.0], 0.0, 2.0).is_err());
    }

    #[test]
    fn estimation_symmetric_sample() {
        let xs = [0.7, 0.8, 0.95, 1.0, 1.05, 1.2, 1.3];
        let t = estimate_params(&xs, -5.0, 7.0).unwrap();
        assert_abs_diff_eq!(t.mu, 1.0, epsilon = 1e-6);
    }
}
