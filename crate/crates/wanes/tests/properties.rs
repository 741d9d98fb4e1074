//! Property tests for the polytope/divergence invariants and the gradient
//! bound, plus a structural round-trip for the TNTP serializer.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use wanes::equilibrium::{solve_mwe, SolveOptions};
use wanes::io::TntpInstance;
use wanes::latency::{estimate_growth_constants, BprEdge, LatencyModel, PerturbationSpec};
use wanes::mirror::{bregman, cesaro_average, md_step, MirrorMap};
use wanes::network::{Edge, OdPair, PathFlow, TrafficNetwork};

/// One-OD fan with `k` parallel 2-hop branches.
fn fan(k: usize, demand: f64) -> TrafficNetwork {
    let mut edges = Vec::new();
    for i in 0..k {
        edges.push(Edge { tail: 0, head: 2 + i });
        edges.push(Edge { tail: 2 + i, head: 1 });
    }
    TrafficNetwork::build(
        2 + k,
        edges,
        &vec![1.0; 2 * k],
        vec![OdPair {
            origin: 0,
            destination: 1,
            demand,
        }],
        k,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn md_step_stays_in_polytope(
        k in 2usize..7,
        demand in 0.1f64..50.0,
        eta in 1e-4f64..5.0,
        seed in any::<u64>(),
        euclidean in any::<bool>(),
    ) {
        let network = fan(k, demand);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mu = PathFlow::dirichlet(&network, 0.7, &mut rng);
        let ell: Vec<f64> = (0..k).map(|i| ((seed >> (i % 60)) & 0xff) as f64 / 16.0).collect();
        let map = if euclidean {
            MirrorMap::Euclidean
        } else {
            MirrorMap::negentropy_for(&network)
        };
        let next = md_step(&map, &network, &mu, &ell, eta).unwrap();
        next.check_in_polytope(&network).unwrap();
    }

    #[test]
    fn cesaro_average_stays_in_polytope(
        k in 2usize..6,
        demand in 0.1f64..20.0,
        n in 1usize..12,
        seed in any::<u64>(),
    ) {
        let network = fan(k, demand);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let flows: Vec<PathFlow> =
            (0..n).map(|_| PathFlow::dirichlet(&network, 1.0, &mut rng)).collect();
        let weights: Vec<f64> = (1..=n).map(|t| (t as f64).powf(-0.75)).collect();
        let avg = cesaro_average(&flows, &weights).unwrap();
        avg.check_in_polytope(&network).unwrap();
    }

    #[test]
    fn divergences_are_nonnegative_and_vanish_only_at_identity(
        k in 2usize..6,
        demand in 0.5f64..10.0,
        seed in any::<u64>(),
    ) {
        let network = fan(k, demand);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = PathFlow::dirichlet(&network, 1.0, &mut rng);
        let b = PathFlow::dirichlet(&network, 1.0, &mut rng);
        for map in [MirrorMap::negentropy_for(&network), MirrorMap::Euclidean] {
            let d = bregman(&map, &a, &b);
            prop_assert!(d >= 0.0);
            prop_assert!(bregman(&map, &a, &a) == 0.0);
            if d == 0.0 {
                let dist = a.squared_distance(&b);
                prop_assert!(dist < 1e-16, "zero divergence at distance {dist}");
            }
        }
    }

    #[test]
    fn tntp_round_trip_is_structure_identical(
        n_links in 1usize..10,
        cap_scale in 0.5f64..100.0,
        demand in 0.1f64..500.0,
    ) {
        // A chain of links with varying parameters plus a single OD pair.
        let num_nodes = n_links + 1;
        let edges: Vec<Edge> = (0..n_links)
            .map(|i| Edge { tail: i, head: i + 1 })
            .collect();
        let bpr: Vec<BprEdge> = (0..n_links)
            .map(|i| BprEdge {
                free_flow_time: 1.0 + i as f64 * 0.37,
                capacity: cap_scale * (1.0 + i as f64),
                alpha1: 0.15,
                alpha2: 4.0,
            })
            .collect();
        let instance = TntpInstance {
            num_nodes,
            edges,
            bpr,
            od_pairs: vec![OdPair {
                origin: 0,
                destination: n_links,
                demand,
            }],
        };
        let reparsed =
            TntpInstance::parse(&instance.to_net_text(), &instance.to_trips_text()).unwrap();
        prop_assert_eq!(instance, reparsed);
    }
}

/// Gradient bound: the squared norm of the mean latency is controlled by
/// the squared distance to the reference equilibrium and the growth
/// constants.
#[test]
fn gradient_bound_holds_on_sampled_flows() {
    let network = fan(4, 3.0);
    let bpr = BprEdge {
        free_flow_time: 1.0,
        capacity: 1.0,
        alpha1: 0.15,
        alpha2: 4.0,
    };
    let latency = LatencyModel::new(
        vec![bpr; network.num_edges()],
        PerturbationSpec::Uniform { w_max: 0.3 },
    )
    .unwrap();
    let eq = solve_mwe(
        &network,
        &latency,
        SolveOptions {
            tol: 1e-9,
            max_iter: 500_000,
        },
        None,
    )
    .unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let growth = estimate_growth_constants(&network, &latency, 2000, &mut rng).unwrap();
    for _ in 0..1000 {
        let mu = PathFlow::dirichlet(&network, 1.0, &mut rng);
        let mean_ell = latency.mean_path_latency(&network, &mu).unwrap();
        let grad_sq: f64 = mean_ell.iter().map(|l| l * l).sum();
        let dist = mu.squared_distance(&eq.mu_star);
        let bound =
            2.0 * (growth.a * growth.a * dist + growth.a * eq.phi_star + growth.b);
        assert!(
            grad_sq <= bound * (1.0 + 1e-9),
            "gradient bound violated: {grad_sq} > {bound}"
        );
    }
}

/// The negentropy divergence dominates the scaled squared distance on the
/// demand polytope.
#[test]
fn strong_convexity_on_many_pairs() {
    let network = fan(5, 4.0);
    let map = MirrorMap::negentropy_for(&network);
    let sigma = map.sigma_psi();
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    for _ in 0..10_000 {
        let a = PathFlow::dirichlet(&network, 0.8, &mut rng);
        let b = PathFlow::dirichlet(&network, 0.8, &mut rng);
        let d = bregman(&map, &a, &b);
        if d.is_finite() {
            assert!(d + 1e-12 >= 0.5 * sigma * a.squared_distance(&b));
        }
    }
}
