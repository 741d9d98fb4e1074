//! Mirror maps, Bregman divergences, and the population mirror-descent step.
//!
//! Two maps ship: the unnormalized negentropy (whose divergence is the
//! generalized KL and whose step is exponential weights, computed in
//! log-space with per-OD max subtraction) and the Euclidean map (whose step
//! is an exact sort-then-threshold projection onto each demand-scaled
//! simplex).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{PathFlow, TrafficNetwork};
use crate::numerics::hurwitz_zeta;

/// Mirror map with its strong-convexity constant over the demand polytope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MirrorMap {
    /// Unnormalized negentropy `sum mu_p log mu_p - mu_p`. Strongly convex
    /// with constant `1 / max_w m_w` on the product of scaled simplices.
    Negentropy { sigma_psi: f64 },
    /// Half squared Euclidean norm; strong convexity constant 1.
    Euclidean,
}

impl MirrorMap {
    /// Negentropy map sized for a network's demands.
    pub fn negentropy_for(network: &TrafficNetwork) -> Self {
        MirrorMap::Negentropy {
            sigma_psi: 1.0 / network.max_demand(),
        }
    }

    pub fn euclidean() -> Self {
        MirrorMap::Euclidean
    }

    pub fn sigma_psi(&self) -> f64 {
        match *self {
            MirrorMap::Negentropy { sigma_psi } => sigma_psi,
            MirrorMap::Euclidean => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MirrorMap::Negentropy { .. } => "negentropy",
            MirrorMap::Euclidean => "euclidean",
        }
    }
}

/// Bregman divergence `D(mu1, mu2)` of the map.
///
/// Negentropy yields the generalized KL `sum mu1 log(mu1/mu2) - mu1 + mu2`
/// with `0 log 0 := 0`; a support violation (`mu1_p > 0` where `mu2_p = 0`)
/// returns `f64::INFINITY`.
pub fn bregman(map: &MirrorMap, mu1: &PathFlow, mu2: &PathFlow) -> f64 {
    match map {
        MirrorMap::Negentropy { .. } => {
            let mut total = 0.0;
            for (&a, &b) in mu1.values().iter().zip(mu2.values()) {
                if a > 0.0 {
                    if b <= 0.0 {
                        return f64::INFINITY;
                    }
                    total += a * (a / b).ln() - a + b;
                } else {
                    total += b;
                }
            }
            total.max(0.0)
        }
        MirrorMap::Euclidean => 0.5 * mu1.squared_distance(mu2),
    }
}

/// One mirror-descent step: the exact argmin of
/// `eta <mu, ell> + D(mu, mu_t)` over the demand polytope.
pub fn md_step(
    map: &MirrorMap,
    network: &TrafficNetwork,
    mu_t: &PathFlow,
    ell: &[f64],
    eta: f64,
) -> Result<PathFlow> {
    if ell.len() != network.num_paths() {
        return Err(Error::DimensionMismatch {
            what: "latency vs path set",
            expected: network.num_paths(),
            got: ell.len(),
        });
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be > 0, got {eta}")));
    }
    let mut next = vec![0.0; network.num_paths()];
    match map {
        MirrorMap::Negentropy { .. } => {
            for (w, od) in network.od_pairs().iter().enumerate() {
                let range = network.od_paths(w);
                // Log-space weights with max subtraction so the normalizer
                // never underflows to zero.
                let logw: Vec<f64> = range
                    .clone()
                    .map(|p| mu_t.values()[p].ln() - eta * ell[p])
                    .collect();
                let peak = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logw.iter().map(|l| (l - peak).exp()).collect();
                let norm: f64 = weights.iter().sum();
                for (slot, wgt) in next[range].iter_mut().zip(&weights) {
                    *slot = od.demand * wgt / norm;
                }
            }
        }
        MirrorMap::Euclidean => {
            for (w, od) in network.od_pairs().iter().enumerate() {
                let range = network.od_paths(w);
                let point: Vec<f64> = range
                    .clone()
                    .map(|p| mu_t.values()[p] - eta * ell[p])
                    .collect();
                let projected = project_simplex(&point, od.demand);
                next[range].copy_from_slice(&projected);
            }
        }
    }
    Ok(PathFlow::from_raw(next))
}

/// Exact Euclidean projection of `point` onto the scaled simplex
/// `{x >= 0, sum x = mass}` by the sort-then-threshold rule.
pub fn project_simplex(point: &[f64], mass: f64) -> Vec<f64> {
    let mut sorted = point.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        prefix += v;
        let candidate = (prefix - mass) / (j + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    point.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Weighted Cesaro average `sum eta_k mu_k / sum eta_k`.
pub fn cesaro_average(flows: &[PathFlow], weights: &[f64]) -> Result<PathFlow> {
    if flows.is_empty() {
        return Err(Error::EmptyInput("cesaro average of no flows"));
    }
    if flows.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            what: "flows vs weights",
            expected: flows.len(),
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidConfig(format!("cesaro weights must be > 0, got {w}")));
    }
    let dim = flows[0].len();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (flow, &w) in flows.iter().zip(weights) {
        if flow.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "flow lengths in cesaro average",
                expected: dim,
                got: flow.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(flow.values()) {
            *a += w * v;
        }
        total += w;
    }
    for a in &mut acc {
        *a /= total;
    }
    Ok(PathFlow::from_raw(acc))
}

/// Learning-rate schedule `eta_t = min(cap, eta1 * t^exponent)`.
///
/// The exponent lives in (-1, -1/2) so the rate sum diverges while the
/// squared sum converges. Two presets map onto this single parameter:
/// `beta - 1/2` and `-beta - 1` for `beta` in (-1/2, 0); both land in the
/// same interval. The cap is the step bound `sigma_psi / (2A)` required by
/// the distance bounds; pass `f64::INFINITY` to disable it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub eta1: f64,
    pub exponent: f64,
    /// JSON represents the uncapped schedule as a null cap.
    #[serde(with = "optional_cap")]
    pub cap: f64,
}

mod optional_cap {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cap: &f64, s: S) -> Result<S::Ok, S::Error> {
        if cap.is_finite() {
            s.serialize_some(cap)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl StepSchedule {
    pub fn new(eta1: f64, exponent: f64, cap: f64) -> Result<Self> {
        if !(eta1 > 0.0) {
            return Err(Error::InvalidConfig(format!("eta1 must be > 0, got {eta1}")));
        }
        if !(exponent > -1.0 && exponent < -0.5) {
            return Err(Error::NonConvergentSchedule(exponent));
        }
        if !(cap > 0.0) {
            return Err(Error::InvalidConfig(format!("cap must be > 0, got {cap}")));
        }
        Ok(Self {
            eta1,
            exponent,
            cap,
        })
    }

    /// Schedule from the rate-exponent parameter `beta` in (-1/2, 0),
    /// using the `eta1 * t^(-beta-1)` convention.
    pub fn from_beta(eta1: f64, beta: f64, cap: f64) -> Result<Self> {
        if !(beta > -0.5 && beta < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (-1/2, 0), got {beta}"
            )));
        }
        Self::new(eta1, -beta - 1.0, cap)
    }

    /// Rate at iteration `t >= 1`.
    pub fn rate(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        (self.eta1 * (t as f64).powf(self.exponent)).min(self.cap)
    }

    /// Partial sum `sum_{k=1}^{t} eta_k`.
    pub fn sum_rates(&self, t: usize) -> f64 {
        (1..=t).map(|k| self.rate(k)).sum()
    }

    /// The convergent series `sum_{k=1}^\infty eta_k^2`, evaluated in closed
    /// form: a finite capped prefix plus a Hurwitz-zeta tail.
    pub fn sum_squared_rates(&self) -> f64 {
        let s = -2.0 * self.exponent; // in (1, 2)
        if self.cap.is_infinite() || self.cap >= self.eta1 {
            return self.eta1 * self.eta1 * hurwitz_zeta(s, 1.0);
        }
        // eta1 k^e >= cap  <=>  k <= (cap/eta1)^(1/e)
        let boundary = (self.cap / self.eta1).powf(1.0 / self.exponent).floor() as usize;
        self.cap * self.cap * boundary as f64
            + self.eta1 * self.eta1 * hurwitz_zeta(s, boundary as f64 + 1.0)
    }

    /// `max_k eta_k * sum_{j<k} eta_j`, finite for convergent schedules.
    /// Scanned numerically past the cap boundary until the product decays.
    pub fn max_rate_times_prefix(&self, horizon_hint: usize) -> f64 {
        let boundary = if self.cap.is_finite() && self.cap < self.eta1 {
            (self.cap / self.eta1).powf(1.0 / self.exponent).ceil() as usize
        } else {
            1
        };
        let scan_min = horizon_hint.max(2 * boundary + 1000).max(10_000);
        let mut prefix = 0.0f64;
        let mut best = 0.0f64;
        let mut last = 0.0f64;
        let mut k = 1usize;
        loop {
            let eta = self.rate(k);
            let product = eta * prefix;
            best = best.max(product);
            let decaying = product < last;
            last = product;
            prefix += eta;
            k += 1;
            if (k > scan_min && decaying) || k > 100_000_000 {
                break;
            }
        }
        best
    }
}
