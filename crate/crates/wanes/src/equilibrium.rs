//! Reference mean Wardrop equilibrium by Frank-Wolfe on the mean Beckmann
//! objective over the enumerated path polytope.
//!
//! The solver and the learner share one path space, so distances and attack
//! magnitudes are directly comparable. The linear subproblem routes each
//! demand entirely onto its cheapest enumerated path; the step size comes
//! from exact line search (bisection on the directional derivative of the
//! closed-form objective).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::LatencyModel;
use crate::network::{PathFlow, TrafficNetwork};

/// Solver output: one member of the (possibly non-singleton) MWE set.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    /// Reference equilibrium flow. The MWE set need not be a singleton, so
    /// distances to this flow are upper bounds on the set distance.
    pub mu_star: PathFlow,
    /// Optimal mean potential estimate `Phi(mu_star)`.
    pub phi_star: f64,
    /// Relative Frank-Wolfe gap at termination.
    pub relative_gap: f64,
    /// Best dual lower bound on the optimal potential seen so far.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 500_000,
        }
    }
}

/// All-or-nothing assignment under the given per-path costs: each demand
/// goes entirely onto its minimum-cost enumerated path, ties to the lowest
/// path index.
pub fn all_or_nothing(network: &TrafficNetwork, costs: &[f64]) -> PathFlow {
    let mut values = vec![0.0; network.num_paths()];
    for (w, od) in network.od_pairs().iter().enumerate() {
        let range = network.od_paths(w);
        let best = range
            .clone()
            .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
            .expect("nonempty path set");
        values[best] = od.demand;
    }
    PathFlow::from_raw(values)
}

/// Minimizes the mean Beckmann potential over the path polytope.
pub fn solve_mwe(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    options: SolveOptions,
    start: Option<&PathFlow>,
) -> Result<EquilibriumResult> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "solver tolerance must be > 0, got {}",
            options.tol
        )));
    }
    let mut mu = match start {
        Some(flow) => {
            flow.check_in_polytope(network)?;
            flow.clone()
        }
        None => PathFlow::uniform(network),
    };
    let mut q = network.edge_flow(&mu)?;
    let mean_w = latency.perturbation().mean();
    let mut lower_bound = f64::NEG_INFINITY;
    let mut relative_gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for k in 0..options.max_iter {
        iterations = k + 1;
        let mean_ell = latency.mean_path_latency_from_edge_flow(network, &q);
        let target = all_or_nothing(network, &mean_ell);
        let gap_abs: f64 = mu
            .values()
            .iter()
            .zip(target.values())
            .zip(&mean_ell)
            .map(|((m, s), l)| (m - s) * l)
            .sum();
        let objective = latency.mbp_from_edge_flow(&q);
        lower_bound = lower_bound.max(objective - gap_abs);
        relative_gap = gap_abs / objective;
        if relative_gap <= options.tol {
            converged = true;
            break;
        }

        let q_target = network.edge_flow(&target)?;
        let direction: Vec<f64> = q_target.iter().zip(&q).map(|(s, m)| s - m).collect();
        let gamma = line_search(latency, &q, &direction, mean_w);
        let blended: Vec<f64> = mu
            .values()
            .iter()
            .zip(target.values())
            .map(|(m, s)| m + gamma * (s - m))
            .collect();
        mu = PathFlow::from_raw(blended);
        for (qe, d) in q.iter_mut().zip(&direction) {
            *qe += gamma * d;
        }
    }

    let phi_star = latency.mbp_from_edge_flow(&q);
    if !converged {
        log::warn!(
            "frank-wolfe hit max_iter = {} at relative gap {relative_gap:.3e}",
            options.max_iter
        );
    }
    Ok(EquilibriumResult {
        mu_star: mu,
        phi_star,
        relative_gap,
        lower_bound,
        iterations,
        converged,
    })
}

/// Exact 1-D line search: bisection on the derivative of the restricted
/// Beckmann objective, interval tolerance 1e-12.
fn line_search(latency: &LatencyModel, q: &[f64], direction: &[f64], mean_w: f64) -> f64 {
    let slope = |gamma: f64| -> f64 {
        direction
            .iter()
            .enumerate()
            .map(|(e, d)| {
                let flow = (q[e] + gamma * d).max(0.0);
                d * latency.edge_latency_unchecked(e, flow, mean_w)
            })
            .sum()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Dimensionless equilibrium gap of a flow: the variational-inequality
/// surplus against the best vertex, normalized by the mean potential. Zero
/// exactly at an MWE of the truncated path space.
pub fn mwe_gap(network: &TrafficNetwork, latency: &LatencyModel, mu: &PathFlow) -> Result<f64> {
    mu.check_in_polytope(network)?;
    let q = network.edge_flow(mu)?;
    let mean_ell = latency.mean_path_latency_from_edge_flow(network, &q);
    let target = all_or_nothing(network, &mean_ell);
    let gap_abs: f64 = mu
        .values()
        .iter()
        .zip(target.values())
        .zip(&mean_ell)
        .map(|((m, s), l)| (m - s) * l)
        .sum();
    Ok(gap_abs / latency.mbp_from_edge_flow(&q))
}

/// Squared Euclidean distance to the stored reference equilibrium; an upper
/// bound on the distance to the full MWE set.
pub fn distance_to_reference(mu: &PathFlow, reference: &EquilibriumResult) -> f64 {
    mu.squared_distance(&reference.mu_star)
}

/// Direct Wardrop condition audit: the largest relative excess of a used
/// path's mean latency over its OD's minimum. A path counts as used when it
/// carries more than `used_fraction` of its OD's demand, which keeps
/// finite-precision dust on abandoned paths out of the verdict.
pub fn wardrop_violation(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    mu: &PathFlow,
    used_fraction: f64,
) -> Result<f64> {
    let mean_ell = latency.mean_path_latency(network, mu)?;
    let mut worst = 0.0f64;
    for (w, od) in network.od_pairs().iter().enumerate() {
        let range = network.od_paths(w);
        let min_lat = range
            .clone()
            .map(|p| mean_ell[p])
            .fold(f64::INFINITY, f64::min);
        for p in range {
            if mu.values()[p] > used_fraction * od.demand {
                worst = worst.max((mean_ell[p] - min_lat) / min_lat);
            }
        }
    }
    Ok(worst)
}
