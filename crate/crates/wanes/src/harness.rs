//! End-to-end learning runs with attack injection, across seeded Monte
//! Carlo replications, plus the recovery metrics and theory-side constants
//! evaluated on the results.
//!
//! Replications use independent counter-based RNG streams derived from the
//! master seed, so adding replications never perturbs existing ones and
//! results do not depend on execution order. A single trajectory is
//! strictly sequential.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{attack_magnitude, AttackReport, AttackSpec};
use crate::equilibrium::EquilibriumResult;
use crate::error::{Error, Result};
use crate::latency::{GrowthConstants, LatencyModel};
use crate::mirror::{bregman, cesaro_average, md_step, MirrorMap, StepSchedule};
use crate::network::{PathFlow, TrafficNetwork};
use crate::numerics::{regression_slope, wilson_interval};

/// Where a replication starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartFlow {
    /// Per-OD uniform flow (the default).
    Uniform,
    /// The solver's reference equilibrium, matching the assumption that the
    /// system sits at equilibrium when an attack lands.
    Reference,
}

/// Full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: usize,
    pub replications: usize,
    pub schedule: StepSchedule,
    pub map: MirrorMap,
    pub attacks: Vec<AttackSpec>,
    pub start: StartFlow,
    /// Failure-probability tolerance used by verdicts, in (0, 1).
    pub delta: f64,
    pub master_seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.replications < 1 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for attack in &self.attacks {
            attack.validate(self.horizon)?;
            if !seen.insert(attack.t0) {
                return Err(Error::InvalidConfig(format!(
                    "two attacks scheduled at t0 = {}",
                    attack.t0
                )));
            }
        }
        Ok(())
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub eta: f64,
    /// Realized potential at the pre-update flow.
    pub phi: f64,
    /// Mean potential at the pre-update flow.
    pub mbp: f64,
    /// Mean-potential gap against the reference optimum.
    pub gap: f64,
    /// Squared distance to the reference equilibrium flow.
    pub dist_ref: f64,
    pub attacked: bool,
}

/// One replication's trajectory.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub replication: usize,
    pub steps: Vec<StepRecord>,
    /// Pre-update flow at each iteration (post-swap at attack times).
    pub flows: Vec<PathFlow>,
    /// Realized path latency revealed at each iteration.
    pub latencies: Vec<Vec<f64>>,
    /// Rate-weighted Cesaro average of the whole trajectory.
    pub cesaro: PathFlow,
    /// Mean-potential gap of the Cesaro average.
    pub cesaro_gap: f64,
    pub attacks: Vec<(usize, AttackReport)>,
}

/// Learner advanced by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Update {
    MirrorDescent,
    GreedyHalving,
}

/// Runs the mirror-descent dynamics for every replication.
pub fn simulate(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    config: &RunConfig,
) -> Result<Vec<RunRecord>> {
    run_all(network, latency, reference, config, Update::MirrorDescent)
}

/// Greedy-assignment baseline: per OD, half the demand moves onto the
/// currently cheapest path each step. Shares the perturbation and attack
/// streams with `simulate` for paired comparisons.
pub fn greedy_baseline(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    config: &RunConfig,
) -> Result<Vec<RunRecord>> {
    run_all(network, latency, reference, config, Update::GreedyHalving)
}

fn run_all(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    config: &RunConfig,
    update: Update,
) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        records.push(run_one(network, latency, reference, config, update, r)?);
    }
    Ok(records)
}

/// Independent RNG streams for a replication: perturbations on the even
/// stream, attack generation on the odd one.
fn replication_rngs(master_seed: u64, replication: usize) -> (ChaCha12Rng, ChaCha12Rng) {
    let mut omega = ChaCha12Rng::seed_from_u64(master_seed);
    omega.set_stream(2 * replication as u64);
    let mut attack = ChaCha12Rng::seed_from_u64(master_seed);
    attack.set_stream(2 * replication as u64 + 1);
    (omega, attack)
}

fn run_one(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    config: &RunConfig,
    update: Update,
    replication: usize,
) -> Result<RunRecord> {
    let (mut omega_rng, mut attack_rng) = replication_rngs(config.master_seed, replication);
    let mut mu = match config.start {
        StartFlow::Uniform => PathFlow::uniform(network),
        StartFlow::Reference => reference.mu_star.clone(),
    };

    let t_len = config.horizon;
    let mut steps = Vec::with_capacity(t_len);
    let mut flows = Vec::with_capacity(t_len);
    let mut latencies = Vec::with_capacity(t_len);
    let mut attacks = Vec::new();

    for t in 1..=t_len {
        let mut attacked = false;
        if let Some(spec) = config.attacks.iter().find(|a| a.t0 == t) {
            let poisoned = spec.generate(network, &mu, &mut attack_rng);
            let report = attack_magnitude(&config.map, network, &mu, &poisoned)?;
            attacks.push((t, report));
            mu = poisoned;
            attacked = true;
        }

        let omega = latency.sample_perturbation(&mut omega_rng);
        let q = network.edge_flow(&mu)?;
        let ell = latency.path_latency_from_edge_flow(network, &q, &omega);
        let phi = latency.sbp_from_edge_flow(&q, &omega);
        let mbp = latency.mbp_from_edge_flow(&q);
        let eta = config.schedule.rate(t);
        steps.push(StepRecord {
            t,
            eta,
            phi,
            mbp,
            gap: mbp - reference.phi_star,
            dist_ref: mu.squared_distance(&reference.mu_star),
            attacked,
        });
        flows.push(mu.clone());
        latencies.push(ell.clone());

        mu = match update {
            Update::MirrorDescent => md_step(&config.map, network, &mu, &ell, eta)?,
            Update::GreedyHalving => greedy_step(network, &mu, &ell),
        };
    }

    let weights: Vec<f64> = steps.iter().map(|s| s.eta).collect();
    let cesaro = cesaro_average(&flows, &weights)?;
    let cesaro_q = network.edge_flow(&cesaro)?;
    let cesaro_gap = latency.mbp_from_edge_flow(&cesaro_q) - reference.phi_star;

    Ok(RunRecord {
        replication,
        steps,
        flows,
        latencies,
        cesaro,
        cesaro_gap,
        attacks,
    })
}

/// One greedy-halving update: per OD, keep half of the current flow and
/// route the other half of the demand onto the cheapest path (ties to the
/// lowest index).
fn greedy_step(network: &TrafficNetwork, mu: &PathFlow, ell: &[f64]) -> PathFlow {
    let mut next: Vec<f64> = mu.values().iter().map(|v| 0.5 * v).collect();
    for (w, od) in network.od_pairs().iter().enumerate() {
        let range = network.od_paths(w);
        let best = range
            .clone()
            .min_by(|&a, &b| ell[a].total_cmp(&ell[b]))
            .expect("nonempty path set");
        next[best] += 0.5 * od.demand;
    }
    PathFlow::from_raw(next)
}

/// Empirical WANES verdict at tolerance `epsilon`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WanesVerdict {
    pub epsilon: f64,
    pub delta: f64,
    pub success_fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// True when the Wilson lower bound clears `1 - delta`.
    pub pass: bool,
}

/// Fraction of replications whose Cesaro gap beats `epsilon`, with a Wilson
/// 95% interval and the `1 - delta` verdict.
pub fn wanes_check(records: &[RunRecord], epsilon: f64, delta: f64) -> Result<WanesVerdict> {
    if records.len() < 20 {
        return Err(Error::TooFewReplications(records.len()));
    }
    let successes = records.iter().filter(|r| r.cesaro_gap < epsilon).count();
    let (lo, hi) = wilson_interval(successes, records.len());
    Ok(WanesVerdict {
        epsilon,
        delta,
        success_fraction: successes as f64 / records.len() as f64,
        wilson_low: lo,
        wilson_high: hi,
        pass: lo >= 1.0 - delta,
    })
}

/// Theory-side constants of the post-attack bounds, evaluated exactly as
/// the finite-time analysis defines them.
///
/// The names follow the constants' roles: `drift_scale` multiplies the rate
/// sum in the distance bound, `rate_overlap` is the largest
/// rate-times-prefix product, `increment_bound` caps the martingale
/// increments, `bernstein_balance` trades the two Bernstein terms,
/// `distance_log_coeff` multiplies `log(T/delta)` in the max-distance
/// bound, and `loss_log_coeff` multiplies `log^(3/2)(2T/delta)` in the
/// weighted-loss bound. `r_value` is the recovery threshold at horizon T.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub sigma_psi: f64,
    pub growth_a: f64,
    pub growth_b: f64,
    /// Worst-case realized potential at the reference flow.
    pub worst_potential: f64,
    pub drift_scale: f64,
    pub rate_overlap: f64,
    pub increment_bound: f64,
    pub bernstein_balance: f64,
    pub distance_log_coeff: f64,
    pub loss_log_coeff: f64,
    pub r_value: f64,
    /// Realized-trajectory split index used by the distance bound's tail
    /// term (1 when no trajectory is supplied).
    pub tail_split: usize,
    pub sum_rates: f64,
    pub sum_squared_rates: f64,
    pub a_dagger: f64,
    pub delta: f64,
    pub horizon: usize,
}

/// Evaluates the theory constants for an attack magnitude `a_dagger` at
/// horizon `T`.
///
/// The worst-case potential is exact for bounded perturbation supports and
/// otherwise the max over 10^4 sampled realizations. When a realized
/// trajectory is supplied, the tail split index is the smallest one making
/// the weighted suffix of squared distances small enough, as the
/// max-distance argument prescribes.
#[allow(clippy::too_many_arguments)]
pub fn theory_constants<R: Rng + ?Sized>(
    network: &TrafficNetwork,
    latency: &LatencyModel,
    map: &MirrorMap,
    schedule: &StepSchedule,
    growth: &GrowthConstants,
    reference: &EquilibriumResult,
    a_dagger: f64,
    delta: f64,
    horizon: usize,
    trajectory: Option<&RunRecord>,
    rng: &mut R,
) -> Result<TheoryConstants> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let sigma = map.sigma_psi();
    let (a, b) = (growth.a, growth.b);
    let worst_potential = match latency.worst_case_sbp(network, &reference.mu_star)? {
        Some(v) => v,
        None => latency.sampled_sup_sbp(network, &reference.mu_star, 10_000, rng)?,
    };
    let phi_star = reference.phi_star;

    let eta1 = schedule.rate(1);
    let drift_scale = worst_potential + b / a;
    let rate_overlap = schedule.max_rate_times_prefix(horizon);
    let sum_sq = schedule.sum_squared_rates();
    let sum_rates = schedule.sum_rates(horizon);

    let increment_bound = eta1 * (worst_potential + a * phi_star + b)
        + (2.0 * a * a + 1.0) * (drift_scale * rate_overlap + eta1 * a_dagger) / sigma;
    let bernstein_balance = (sigma * increment_bound
        / (2.0 * a * (eta1 * a_dagger + drift_scale * rate_overlap)))
        .min(1.0);

    let tail_split = match trajectory {
        Some(record) => {
            let threshold = eta1 * a_dagger / drift_scale + increment_bound;
            let mut suffix = 0.0;
            let mut split = record.steps.len() + 1;
            // Walk backwards accumulating eta_k^2 * dist_k; the split is the
            // earliest index whose suffix still fits under the threshold.
            for step in record.steps.iter().rev() {
                let term = step.eta * step.eta * step.dist_ref;
                if suffix + term > threshold {
                    break;
                }
                suffix += term;
                split = step.t;
            }
            split.min(record.steps.len())
        }
        None => 1,
    };

    let mut tail_term_numerator = 0.0;
    let mut prefix = 0.0;
    for k in 1..=tail_split {
        tail_term_numerator += 2.0 * drift_scale * prefix + a_dagger;
        prefix += schedule.rate(k);
    }
    let distance_log_coeff = 4.0 * increment_bound / (sigma * bernstein_balance)
        + (4.0 / sigma + 8.0 * eta1 * a / (sigma * sigma)) * a_dagger
        + (8.0 * a * drift_scale + 4.0 * b) / (sigma * sigma) * sum_sq
        + tail_term_numerator
            / (sigma * (eta1 * a_dagger / drift_scale + increment_bound));

    let loss_log_coeff = (1.0 + 2.0 * a * eta1 / sigma) * a_dagger
        + ((4.0 * a * a + 1.0) * distance_log_coeff + 4.0 * a * drift_scale)
            * (2.0 * sum_sq).sqrt()
        + 2.0 * (a * drift_scale + b) / sigma * sum_sq;

    let log_term = (2.0 * horizon as f64 / delta).ln();
    let r_value = loss_log_coeff * log_term.powf(1.5) / sum_rates;

    Ok(TheoryConstants {
        sigma_psi: sigma,
        growth_a: a,
        growth_b: b,
        worst_potential,
        drift_scale,
        rate_overlap,
        increment_bound,
        bernstein_balance,
        distance_log_coeff,
        loss_log_coeff,
        r_value,
        tail_split,
        sum_rates,
        sum_squared_rates: sum_sq,
        a_dagger,
        delta,
        horizon,
    })
}

/// Per-attack recovery metrics of one run set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResilience {
    pub t0: usize,
    /// Attack magnitudes per replication.
    pub a_dagger: Vec<f64>,
    /// Mean gap over the five steps before the attack, per replication.
    pub plateau: Vec<f64>,
    /// Largest gap at or after the attack, per replication.
    pub peak_gap: Vec<f64>,
    /// Steps until the gap returns under twice the plateau; None when the
    /// horizon ends first.
    pub recovery_steps: Vec<Option<usize>>,
    /// Log-log slope of the post-attack Cesaro gap, per replication.
    pub post_attack_slope: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub attacks: Vec<AttackResilience>,
    /// WANES verdict at the theoretical recovery threshold; None when there
    /// are too few replications for the empirical check.
    pub wanes_at_r_value: Option<WanesVerdict>,
    pub r_value: f64,
    pub delta: f64,
}

/// Evaluates recovery behavior around every attack in the records.
pub fn resilience_report(
    records: &[RunRecord],
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    theory: &TheoryConstants,
    delta: f64,
) -> Result<ResilienceReport> {
    if records.iter().all(|r| r.attacks.is_empty()) {
        return Err(Error::NoAttackInRecords);
    }
    let attack_times: Vec<usize> = records[0].attacks.iter().map(|(t0, _)| *t0).collect();
    let mut attacks = Vec::new();
    for &t0 in &attack_times {
        let mut a_dagger = Vec::new();
        let mut plateau = Vec::new();
        let mut peak_gap = Vec::new();
        let mut recovery_steps = Vec::new();
        let mut post_attack_slope = Vec::new();
        for record in records {
            let report = record
                .attacks
                .iter()
                .find(|(t, _)| *t == t0)
                .map(|(_, r)| *r)
                .ok_or(Error::NoAttackInRecords)?;
            a_dagger.push(report.a_dagger);

            let window_lo = t0.saturating_sub(5).max(1);
            let pre: Vec<f64> = record.steps[window_lo - 1..t0 - 1]
                .iter()
                .map(|s| s.gap)
                .collect();
            // An attack at t0 = 1 has no pre-attack plateau; fall back to
            // the gap at the attacked state so ratios stay defined.
            let plat = if pre.is_empty() {
                record.steps[t0 - 1].gap
            } else {
                pre.iter().sum::<f64>() / pre.len() as f64
            };
            plateau.push(plat);

            let post = &record.steps[t0 - 1..];
            peak_gap.push(post.iter().map(|s| s.gap).fold(f64::NEG_INFINITY, f64::max));
            recovery_steps.push(post.iter().position(|s| s.gap <= 2.0 * plat));

            post_attack_slope.push(post_attack_cesaro_slope(
                record, network, latency, reference, t0,
            )?);
        }
        attacks.push(AttackResilience {
            t0,
            a_dagger,
            plateau,
            peak_gap,
            recovery_steps,
            post_attack_slope,
        });
    }

    let wanes_at_r_value = if records.len() >= 20 {
        Some(wanes_check(records, theory.r_value, delta)?)
    } else {
        None
    };
    Ok(ResilienceReport {
        attacks,
        wanes_at_r_value,
        r_value: theory.r_value,
        delta,
    })
}

/// Running Cesaro-average gaps `Phi(cesaro up to t) - Phi*` for
/// `t = from..=horizon` (1-indexed trajectory steps).
pub fn running_cesaro_gaps(
    record: &RunRecord,
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    from: usize,
) -> Result<Vec<(usize, f64)>> {
    let dim = record.flows[0].len();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    let mut out = Vec::new();
    for (idx, step) in record.steps.iter().enumerate() {
        if step.t < from {
            continue;
        }
        let eta = step.eta;
        for (slot, v) in acc.iter_mut().zip(record.flows[idx].values()) {
            *slot += eta * v;
        }
        total += eta;
        let avg = PathFlow::from_raw(acc.iter().map(|v| v / total).collect());
        let q = network.edge_flow(&avg)?;
        let gap = latency.mbp_from_edge_flow(&q) - reference.phi_star;
        out.push((step.t - from + 1, gap));
    }
    Ok(out)
}

/// Log-log regression slope of the running Cesaro gap over a step window;
/// nonpositive gaps (possible only within solver tolerance) are skipped.
pub fn cesaro_gap_slope(gaps: &[(usize, f64)], window_lo: usize, window_hi: usize) -> f64 {
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .filter(|(s, g)| *s >= window_lo && *s <= window_hi && *g > 0.0)
        .map(|(s, g)| ((*s as f64).ln(), g.ln()))
        .collect();
    regression_slope(&pts)
}

fn post_attack_cesaro_slope(
    record: &RunRecord,
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    t0: usize,
) -> Result<f64> {
    let gaps = running_cesaro_gaps(record, network, latency, reference, t0)?;
    let len = gaps.len();
    if len < 4 {
        return Ok(f64::NAN);
    }
    Ok(cesaro_gap_slope(&gaps, (len / 4).max(2), len))
}

/// Concentration audit of the martingale differences
/// `xi_k = eta_k <mu* - mu_k, ell_k - E[ell_k]>` along each trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationAudit {
    pub delta: f64,
    /// Per replication: realized sum of differences and its bound.
    pub sums: Vec<f64>,
    pub bounds: Vec<f64>,
    pub violations: usize,
    pub violation_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Median of sum/bound; well below one when the bound is conservative.
    pub median_ratio: f64,
}

/// Checks the realized martingale sums against the
/// `sqrt(2 sum b_k^2 log(1/delta))` concentration bound, with `b_k` taken
/// from the recorded increments.
pub fn concentration_audit(
    records: &[RunRecord],
    network: &TrafficNetwork,
    latency: &LatencyModel,
    reference: &EquilibriumResult,
    delta: f64,
) -> Result<ConcentrationAudit> {
    if latency.perturbation().is_singleton() {
        return Err(Error::SingletonPerturbation);
    }
    if records.len() < 50 {
        return Err(Error::TooFewReplications(records.len()));
    }
    let mut sums = Vec::with_capacity(records.len());
    let mut bounds = Vec::with_capacity(records.len());
    for record in records {
        let mut sum = 0.0;
        let mut sum_b2 = 0.0;
        for (idx, step) in record.steps.iter().enumerate() {
            let mu = &record.flows[idx];
            let mean_ell = latency.mean_path_latency(network, mu)?;
            let xi: f64 = reference
                .mu_star
                .values()
                .iter()
                .zip(mu.values())
                .zip(record.latencies[idx].iter().zip(&mean_ell))
                .map(|((star, m), (l, el))| step.eta * (star - m) * (l - el))
                .sum();
            sum += xi;
            sum_b2 += xi * xi;
        }
        sums.push(sum);
        bounds.push((2.0 * sum_b2 * (1.0 / delta).ln()).sqrt());
    }
    let violations = sums
        .iter()
        .zip(&bounds)
        .filter(|(s, b)| *s > *b)
        .count();
    let (lo, hi) = wilson_interval(violations, records.len());
    let mut ratios: Vec<f64> = sums
        .iter()
        .zip(&bounds)
        .map(|(s, b)| if *b > 0.0 { s / b } else { 0.0 })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median_ratio = ratios[ratios.len() / 2];
    Ok(ConcentrationAudit {
        delta,
        sums,
        bounds,
        violations,
        violation_rate: violations as f64 / records.len() as f64,
        wilson_low: lo,
        wilson_high: hi,
        median_ratio,
    })
}

/// Counts violations of the one-step divergence inequality along a
/// trajectory, probing random polytope points supported where the
/// trajectory is.
pub fn one_step_inequality_violations<R: Rng + ?Sized>(
    record: &RunRecord,
    network: &TrafficNetwork,
    map: &MirrorMap,
    growth: &GrowthConstants,
    probes_per_step: usize,
    rng: &mut R,
) -> usize {
    let sigma = map.sigma_psi();
    let mut violations = 0;
    for idx in 0..record.steps.len() - 1 {
        let step = &record.steps[idx];
        let mu_t = &record.flows[idx];
        let mu_next = &record.flows[idx + 1];
        if record.steps[idx + 1].attacked {
            // The next recorded state is the poisoned swap, not the mirror
            // step's output; the inequality does not apply across it.
            continue;
        }
        let ell = &record.latencies[idx];
        let bound_term = 2.0 * step.eta * step.eta / sigma * (growth.a * step.phi + growth.b);
        for _ in 0..probes_per_step {
            let probe = support_dirichlet(network, mu_t, rng);
            let lhs = bregman(map, &probe, mu_next) - bregman(map, &probe, mu_t);
            let inner: f64 = probe
                .values()
                .iter()
                .zip(mu_t.values())
                .zip(ell)
                .map(|((p, m), l)| (p - m) * l)
                .sum();
            let rhs = step.eta * inner + bound_term;
            if lhs > rhs + 1e-9 * rhs.abs().max(1.0) {
                violations += 1;
            }
        }
    }
    violations
}

/// Random polytope point whose support is contained in the support of
/// `anchor` (per OD), so negentropy divergences stay finite.
fn support_dirichlet<R: Rng + ?Sized>(
    network: &TrafficNetwork,
    anchor: &PathFlow,
    rng: &mut R,
) -> PathFlow {
    use rand_distr::{Distribution, Gamma};
    let gamma = Gamma::new(1.0, 1.0).unwrap();
    let mut values = vec![0.0; network.num_paths()];
    for (w, od) in network.od_pairs().iter().enumerate() {
        let range = network.od_paths(w);
        loop {
            let mut total = 0.0;
            let draws: Vec<f64> = range
                .clone()
                .map(|p| {
                    if anchor.values()[p] > 0.0 {
                        let d: f64 = gamma.sample(rng);
                        total += d;
                        d
                    } else {
                        0.0
                    }
                })
                .collect();
            if total > 0.0 {
                for (slot, d) in values[range.clone()].iter_mut().zip(&draws) {
                    *slot = od.demand * d / total;
                }
                break;
            }
        }
    }
    PathFlow::from_raw(values)
}

/// Counts violations of the post-attack distance bound
/// `dist^2(mu_{t+1}, mu*) <= (2/sigma)(drift_scale * sum rates + a_dagger)`
/// along a trajectory that starts at the reference and is attacked at
/// t0 = 1.
pub fn distance_bound_violations(
    record: &RunRecord,
    map: &MirrorMap,
    drift_scale: f64,
    a_dagger: f64,
    schedule: &StepSchedule,
) -> usize {
    let sigma = map.sigma_psi();
    let mut violations = 0;
    let mut rate_sum = 0.0;
    for step in &record.steps {
        // dist_ref at step t is ||mu_t - mu*||^2; the bound for it uses the
        // rates of steps 1..t-1 plus the initial divergence.
        let bound = 2.0 / sigma * (drift_scale * rate_sum + a_dagger);
        if step.dist_ref > bound * (1.0 + 1e-9) {
            violations += 1;
        }
        rate_sum += schedule.rate(step.t);
    }
    violations
}
