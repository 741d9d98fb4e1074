//! Informational flow-disturbance attacks and their magnitudes.
//!
//! An attack replaces the learner's flow state at one iteration with a
//! poisoned flow in the same polytope. `Unif` redistributes each demand
//! uniformly over its paths; `Supp` draws a random flow whose support
//! contains the current one, so the Bregman magnitude stays finite under
//! the negentropy map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror::{bregman, md_step, MirrorMap};
use crate::network::{PathFlow, TrafficNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackKind {
    Unif,
    Supp {
        /// Symmetric Dirichlet concentration of the redistribution draw.
        concentration: f64,
    },
}

/// One scheduled attack: the state is replaced exactly once at iteration
/// `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub t0: usize,
}

impl AttackSpec {
    pub fn unif(t0: usize) -> Self {
        Self {
            kind: AttackKind::Unif,
            t0,
        }
    }

    pub fn supp(t0: usize, concentration: f64) -> Self {
        Self {
            kind: AttackKind::Supp { concentration },
            t0,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.t0 < 1 || self.t0 > horizon {
            return Err(Error::InvalidConfig(format!(
                "attack time t0 = {} outside horizon 1..={horizon}",
                self.t0
            )));
        }
        if let AttackKind::Supp { concentration } = self.kind {
            if !(concentration > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "supp concentration must be > 0, got {concentration}"
                )));
            }
        }
        Ok(())
    }

    /// Generates the poisoned flow for the observed state.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        network: &TrafficNetwork,
        mu_t0: &PathFlow,
        rng: &mut R,
    ) -> PathFlow {
        match self.kind {
            AttackKind::Unif => unif_attack(network),
            AttackKind::Supp { concentration } => supp_attack(network, mu_t0, concentration, rng),
        }
    }
}

/// The uniform redistribution: every path of pair `w` gets `m_w / |P_w|`.
pub fn unif_attack(network: &TrafficNetwork) -> PathFlow {
    PathFlow::uniform(network)
}

/// Random support-covering redistribution: per OD a symmetric
/// Dirichlet(c) point mixed with the uniform flow at ratio 0.9/0.1 and
/// scaled to the demand. The uniform floor makes every coordinate strictly
/// positive, so any observed support is covered.
pub fn supp_attack<R: Rng + ?Sized>(
    network: &TrafficNetwork,
    mu_t0: &PathFlow,
    concentration: f64,
    rng: &mut R,
) -> PathFlow {
    debug_assert_eq!(mu_t0.len(), network.num_paths());
    let dirichlet = PathFlow::dirichlet(network, concentration, rng);
    let uniform = PathFlow::uniform(network);
    let values: Vec<f64> = dirichlet
        .values()
        .iter()
        .zip(uniform.values())
        .map(|(d, u)| 0.9 * d + 0.1 * u)
        .collect();
    PathFlow::from_raw(values)
}

/// Attack magnitude `a = D_Psi(mu_t0, mu_dagger)` with its Bregman-geometry
/// bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackReport {
    /// Bregman divergence from the poisoned flow to the observed one.
    pub a_dagger: f64,
    /// Negentropy lower bound `sum_p mu_p log(|P| mu_p / M)`; tight when the
    /// poisoned flow is globally uniform. Equals the magnitude itself under
    /// the Euclidean map.
    pub lower_bound: f64,
    /// Reverse-Pinsker upper bound `|mu - mu_dagger|_1^2 / (gamma ln 2)`.
    pub upper_bound: f64,
    /// Demand-only upper bound `4 M^2 / (gamma ln 2)`.
    pub upper_bound_coarse: f64,
    /// Smallest poisoned mass over paths the observed flow uses.
    pub gamma: f64,
}

/// Quantifies an attack under the given mirror map.
///
/// Under negentropy a support violation (observed mass on a path the
/// poisoned flow zeroes) makes the divergence infinite and the attack is
/// rejected with an error.
pub fn attack_magnitude(
    map: &MirrorMap,
    network: &TrafficNetwork,
    mu_t0: &PathFlow,
    mu_dagger: &PathFlow,
) -> Result<AttackReport> {
    let a_dagger = bregman(map, mu_t0, mu_dagger);
    if a_dagger.is_infinite() {
        let path = mu_t0
            .values()
            .iter()
            .zip(mu_dagger.values())
            .position(|(&a, &b)| a > 0.0 && b <= 0.0)
            .unwrap_or(0);
        return Err(Error::InfiniteAttack { path });
    }

    let mut gamma = f64::INFINITY;
    for (w, _) in network.od_pairs().iter().enumerate() {
        for p in network.od_paths(w) {
            if mu_t0.values()[p] > 0.0 {
                gamma = gamma.min(mu_dagger.values()[p]);
            }
        }
    }
    let l1: f64 = mu_t0
        .values()
        .iter()
        .zip(mu_dagger.values())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let total = network.total_demand();

    match map {
        MirrorMap::Negentropy { .. } => {
            let num_paths = network.num_paths() as f64;
            let lower_bound: f64 = mu_t0
                .values()
                .iter()
                .filter(|v| **v > 0.0)
                .map(|&v| v * (num_paths * v / total).ln())
                .sum();
            let denom = gamma * std::f64::consts::LN_2;
            Ok(AttackReport {
                a_dagger,
                lower_bound,
                upper_bound: l1 * l1 / denom,
                upper_bound_coarse: 4.0 * total * total / denom,
                gamma,
            })
        }
        MirrorMap::Euclidean => Ok(AttackReport {
            a_dagger,
            lower_bound: a_dagger,
            upper_bound: a_dagger,
            upper_bound_coarse: a_dagger,
            gamma,
        }),
    }
}

/// The poisoned mirror step: identical to the ordinary step but anchored at
/// the poisoned flow, with the latency feedback already evaluated there.
pub fn poisoned_step(
    map: &MirrorMap,
    network: &TrafficNetwork,
    mu_dagger: &PathFlow,
    ell_tilde: &[f64],
    eta: f64,
) -> Result<PathFlow> {
    md_step(map, network, mu_dagger, ell_tilde, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, OdPair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fan_network(sizes: &[usize], demands: &[f64]) -> TrafficNetwork {
        // One hub pair per OD with `sizes[w]` parallel 2-hop branches.
        let mut edges = Vec::new();
        let mut od_pairs = Vec::new();
        let mut node = 0;
        for (w, &k) in sizes.iter().enumerate() {
            let (origin, dest) = (node, node + 1);
            let mut mid = node + 2;
            for _ in 0..k {
                edges.push(Edge {
                    tail: origin,
                    head: mid,
                });
                edges.push(Edge {
                    tail: mid,
                    head: dest,
                });
                mid += 1;
            }
            od_pairs.push(OdPair {
                origin,
                destination: dest,
                demand: demands[w],
            });
            node = mid;
        }
        let n_edges = edges.len();
        TrafficNetwork::build(node, edges, &vec![1.0; n_edges], od_pairs, 16).unwrap()
    }

    #[test]
    fn unif_attack_reference_values() {
        let net = fan_network(&[3], &[6.0]);
        assert_eq!(unif_attack(&net).values(), &[2.0, 2.0, 2.0]);

        let single = fan_network(&[1], &[4.0]);
        assert_eq!(unif_attack(&single).values(), &[4.0]);

        let two = fan_network(&[2, 4], &[2.0, 4.0]);
        assert_eq!(unif_attack(&two).values(), &[1.0; 6]);
    }

    #[test]
    fn supp_attack_floor_and_mass() {
        let net = fan_network(&[4, 3], &[2.0, 6.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mu = PathFlow::uniform(&net);
        for _ in 0..200 {
            let poisoned = supp_attack(&net, &mu, 0.3, &mut rng);
            for (w, od) in net.od_pairs().iter().enumerate() {
                let range = net.od_paths(w);
                let floor = 0.1 * od.demand / range.len() as f64;
                let mass: f64 = poisoned.values()[range.clone()].iter().sum();
                assert!((mass - od.demand).abs() < 1e-10);
                for p in range {
                    assert!(poisoned.values()[p] >= floor * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn supp_attack_concentrates_to_uniform() {
        // Large concentration: the Dirichlet collapses onto its mean, so the
        // sampled attack approaches the uniform flow.
        let net = fan_network(&[5], &[5.0]);
        let mu = PathFlow::uniform(&net);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let c = 5_000.0;
        let n = 1000;
        let mut mean = vec![0.0; net.num_paths()];
        for _ in 0..n {
            let poisoned = supp_attack(&net, &mu, c, &mut rng);
            for (m, v) in mean.iter_mut().zip(poisoned.values()) {
                *m += v / n as f64;
            }
        }
        // Coordinate std of a Dirichlet(c..c) entry is about sqrt(p(1-p)/c);
        // scaled by demand and the 0.9 mixing weight, divided by sqrt(n).
        let p = 1.0 / 5.0;
        let sigma = 0.9 * 5.0 * (p * (1.0 - p) / (5.0 * c + 1.0)).sqrt() / (n as f64).sqrt();
        for &m in &mean {
            assert!((m - 1.0).abs() < 3.0 * sigma, "mean {m} vs uniform 1.0");
        }
    }

    #[test]
    fn magnitude_of_identity_is_zero() {
        let net = fan_network(&[3], &[6.0]);
        let mu = PathFlow::new(&net, vec![3.0, 2.0, 1.0]).unwrap();
        let map = MirrorMap::negentropy_for(&net);
        let report = attack_magnitude(&map, &net, &mu, &mu).unwrap();
        assert_eq!(report.a_dagger, 0.0);
    }

    #[test]
    fn magnitude_reference_case() {
        let net = fan_network(&[3], &[6.0]);
        let mu = PathFlow::new(&net, vec![3.0, 2.0, 1.0]).unwrap();
        let unif = unif_attack(&net);
        let map = MirrorMap::negentropy_for(&net);
        let report = attack_magnitude(&map, &net, &mu, &unif).unwrap();
        let exact = 3.0 * (1.5f64).ln() + (0.5f64).ln();
        assert!((report.a_dagger - exact).abs() < 1e-12);
        assert_eq!(report.gamma, 2.0);
        let ub = 4.0 / (2.0 * std::f64::consts::LN_2);
        assert!((report.upper_bound - ub).abs() < 1e-12);
        assert!((ub - 2.885).abs() < 1e-3);
        assert!(report.lower_bound <= report.a_dagger + 1e-12);
        assert!(report.a_dagger <= report.upper_bound + 1e-12);
        assert!(report.upper_bound <= report.upper_bound_coarse + 1e-12);
    }

    #[test]
    fn unif_magnitude_equals_per_od_formula() {
        let net = fan_network(&[3, 2], &[6.0, 2.0]);
        let mu = PathFlow::new(&net, vec![3.0, 2.0, 1.0, 0.5, 1.5]).unwrap();
        let unif = unif_attack(&net);
        let map = MirrorMap::negentropy_for(&net);
        let report = attack_magnitude(&map, &net, &mu, &unif).unwrap();
        let mut expect = 0.0;
        for (w, od) in net.od_pairs().iter().enumerate() {
            let size = net.od_paths(w).len() as f64;
            for p in net.od_paths(w) {
                let v = mu.values()[p];
                if v > 0.0 {
                    expect += v * (size * v / od.demand).ln();
                }
            }
        }
        assert!((report.a_dagger - expect).abs() < 1e-12);
        // Finite-cap sanity: a <= M log P.
        let cap = net.total_demand() * (net.max_paths_per_od() as f64).ln();
        assert!(report.a_dagger <= cap + 1e-12);
    }

    #[test]
    fn support_violation_rejected() {
        let net = fan_network(&[2], &[2.0]);
        let mu = PathFlow::new(&net, vec![1.0, 1.0]).unwrap();
        let poisoned = PathFlow::from_raw(vec![2.0, 0.0]);
        let map = MirrorMap::negentropy_for(&net);
        assert!(matches!(
            attack_magnitude(&map, &net, &mu, &poisoned),
            Err(Error::InfiniteAttack { path: 1 })
        ));
    }

    #[test]
    fn supp_attacks_always_finite() {
        let net = fan_network(&[4, 2], &[3.0, 1.0]);
        let map = MirrorMap::negentropy_for(&net);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..500 {
            let mu = PathFlow::dirichlet(&net, 0.2, &mut rng);
            let poisoned = supp_attack(&net, &mu, 0.5, &mut rng);
            let report = attack_magnitude(&map, &net, &mu, &poisoned).unwrap();
            assert!(report.a_dagger.is_finite());
        }
    }

    #[test]
    fn euclidean_magnitude_is_half_squared_distance() {
        let net = fan_network(&[3], &[6.0]);
        let mu = PathFlow::new(&net, vec![3.0, 2.0, 1.0]).unwrap();
        let unif = unif_attack(&net);
        let report = attack_magnitude(&MirrorMap::Euclidean, &net, &mu, &unif).unwrap();
        assert!((report.a_dagger - 0.5 * mu.squared_distance(&unif)).abs() < 1e-15);
    }

    #[test]
    fn poisoned_step_matches_md_step() {
        let net = fan_network(&[3], &[6.0]);
        let map = MirrorMap::negentropy_for(&net);
        let poisoned = PathFlow::new(&net, vec![1.0, 2.0, 3.0]).unwrap();

        // Zero feedback returns the poisoned flow itself.
        let next = poisoned_step(&map, &net, &poisoned, &[0.0; 3], 0.4).unwrap();
        for (a, b) in next.values().iter().zip(poisoned.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let ell = [0.3, 0.1, 0.9];
        let a = poisoned_step(&map, &net, &poisoned, &ell, 0.4).unwrap();
        let b = md_step(&map, &net, &poisoned, &ell, 0.4).unwrap();
        assert_eq!(a.values(), b.values());
    }
}
