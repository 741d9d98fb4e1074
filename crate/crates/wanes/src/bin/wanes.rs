//! Command-line front end: equilibrium solves, learning simulations with
//! attack injection, the greedy baseline, resilience reports, theory
//! diagnostics, and the network invariant suite.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use wanes::attack::{AttackKind, AttackSpec};
use wanes::equilibrium::{
    mwe_gap, solve_mwe, wardrop_violation, EquilibriumResult, SolveOptions,
};
use wanes::error::{Error, Result};
use wanes::harness::{
    greedy_baseline, resilience_report, simulate, theory_constants, RunConfig, StartFlow,
};
use wanes::io::{
    parse_config_text, read_trajectory_csv, write_run_outputs, AttackSummaryEntry, RunSummary,
    TntpInstance,
};
use wanes::latency::{estimate_growth_constants, LatencyModel, MbpMode, PerturbationSpec};
use wanes::mirror::{bregman, md_step, MirrorMap, StepSchedule};
use wanes::network::{PathFlow, TrafficNetwork};

#[derive(Parser)]
#[command(
    name = "wanes",
    about = "Repeated stochastic congestion games: mirror-descent learning, flow-disturbance attacks, recovery metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the reference mean Wardrop equilibrium and optimal potential.
    Solve(CommonArgs),
    /// Run the mirror-descent dynamics with optional attack injection.
    Simulate(CommonArgs),
    /// Run the greedy halving baseline on the same streams.
    Baseline(CommonArgs),
    /// Evaluate resilience verdicts from a stored run directory.
    Report(ReportArgs),
    /// Print the theory-side constants for a configuration.
    Constants(CommonArgs),
    /// Run the network/model invariant suite.
    Validate(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TNTP network file.
    #[arg(long)]
    net: Option<PathBuf>,
    /// TNTP trips file.
    #[arg(long)]
    trips: Option<PathBuf>,
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for trajectory.csv and summary.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed (fallback: WANES_SEED environment variable, then 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Attack spec like `unif@30` or `supp@30:c=0.5`; repeatable.
    #[arg(long = "attack")]
    attacks: Vec<String>,
    /// Mirror map: negentropy | euclidean.
    #[arg(long)]
    map: Option<String>,
    /// Initial learning rate.
    #[arg(long)]
    eta1: Option<f64>,
    /// Rate exponent parameter beta in (-1/2, 0); the schedule uses
    /// eta1 * t^(-beta-1).
    #[arg(long)]
    beta: Option<f64>,
    /// Raw schedule exponent in (-1, -1/2); overrides --beta.
    #[arg(long)]
    exponent: Option<f64>,
    /// Paths enumerated per OD pair.
    #[arg(long)]
    k_paths: Option<usize>,
    /// Uniform perturbation upper end (0 disables noise).
    #[arg(long)]
    w_max: Option<f64>,
    /// Start state: uniform | reference.
    #[arg(long)]
    start: Option<String>,
    /// Equilibrium solver relative-gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Failure-probability tolerance delta in (0,1).
    #[arg(long)]
    delta: Option<f64>,
    /// Sample count for growth-constant estimation.
    #[arg(long)]
    growth_samples: Option<usize>,
    /// Cap the schedule at sigma_psi/(2A), the premise of the theory
    /// bounds. Off by default: the certified cap freezes learning on
    /// congested instances, and the recovery experiment runs uncapped.
    #[arg(long)]
    capped: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding trajectory.csv and summary.json.
    #[arg(long)]
    run_dir: PathBuf,
}

/// Effective settings after merging CLI > config file > environment >
/// defaults.
struct Settings {
    net: PathBuf,
    trips: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    replications: usize,
    horizon: usize,
    attacks: Vec<AttackSpec>,
    map_name: String,
    eta1: f64,
    exponent: f64,
    k_paths: usize,
    w_max: f64,
    start: StartFlow,
    tol: f64,
    delta: f64,
    growth_samples: usize,
    capped: bool,
}

fn parse_attack(text: &str) -> Result<AttackSpec> {
    let (kind_raw, rest) = text.split_once('@').ok_or_else(|| {
        Error::InvalidConfig(format!("attack must look like kind@t0, got {text:?}"))
    })?;
    let (t0_raw, params) = match rest.split_once(':') {
        Some((t, p)) => (t, Some(p)),
        None => (rest, None),
    };
    let t0: usize = t0_raw
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad attack time in {text:?}")))?;
    match kind_raw {
        "unif" => {
            if params.is_some() {
                return Err(Error::InvalidConfig(format!(
                    "unif attack takes no parameters: {text:?}"
                )));
            }
            Ok(AttackSpec::unif(t0))
        }
        "supp" => {
            let mut concentration = 1.0;
            if let Some(params) = params {
                for kv in params.split(',') {
                    let (k, v) = kv.split_once('=').ok_or_else(|| {
                        Error::InvalidConfig(format!("bad attack parameter {kv:?}"))
                    })?;
                    match k.trim() {
                        "c" => {
                            concentration = v.trim().parse().map_err(|_| {
                                Error::InvalidConfig(format!("bad concentration {v:?}"))
                            })?
                        }
                        other => {
                            return Err(Error::InvalidConfig(format!(
                                "unknown supp parameter {other:?}"
                            )))
                        }
                    }
                }
            }
            Ok(AttackSpec::supp(t0, concentration))
        }
        other => Err(Error::InvalidConfig(format!("unknown attack kind {other:?}"))),
    }
}

fn attack_to_string(spec: &AttackSpec) -> String {
    match spec.kind {
        AttackKind::Unif => format!("unif@{}", spec.t0),
        AttackKind::Supp { concentration } => format!("supp@{}:c={}", spec.t0, concentration),
    }
}

impl Settings {
    fn merge(args: &CommonArgs) -> Result<Self> {
        let file: BTreeMap<String, String> = match &args.config {
            Some(path) => parse_config_text(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let from_file = |key: &str| file.get(key).cloned();
        let parse_from_file = |key: &str| -> Result<Option<f64>> {
            from_file(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidConfig(format!("config {key} = {v:?}")))
                })
                .transpose()
        };

        let net = args
            .net
            .clone()
            .or_else(|| from_file("net").map(PathBuf::from))
            .ok_or_else(|| Error::InvalidConfig("--net is required".into()))?;
        let trips = args
            .trips
            .clone()
            .or_else(|| from_file("trips").map(PathBuf::from))
            .ok_or_else(|| Error::InvalidConfig("--trips is required".into()))?;
        let out_dir = args
            .out_dir
            .clone()
            .or_else(|| from_file("out_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs/latest"));

        let seed = match args.seed {
            Some(s) => s,
            None => match from_file("seed") {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("config seed = {v:?}")))?,
                None => match std::env::var("WANES_SEED") {
                    Ok(v) => v
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("WANES_SEED = {v:?}")))?,
                    Err(_) => 0,
                },
            },
        };

        let parse_usize = |key: &str, fallback: usize| -> Result<usize> {
            from_file(key)
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| Error::InvalidConfig(format!("config {key} = {v:?}")))
                })
                .transpose()
                .map(|v| v.unwrap_or(fallback))
        };
        let replications = match args.replications {
            Some(r) => r,
            None => parse_usize("replications", 10)?,
        };
        let horizon = match args.horizon {
            Some(t) => t,
            None => parse_usize("horizon", 100)?,
        };
        let k_paths = match args.k_paths {
            Some(k) => k,
            None => parse_usize("k_paths", 8)?,
        };
        let growth_samples = match args.growth_samples {
            Some(n) => n,
            None => parse_usize("growth_samples", 3000)?,
        };

        let eta1 = args.eta1.or(parse_from_file("eta1")?).unwrap_or(0.12);
        let beta = args.beta.or(parse_from_file("beta")?);
        let exponent = args
            .exponent
            .or(parse_from_file("exponent")?)
            .or(beta.map(|b| -b - 1.0))
            .unwrap_or(-0.52);
        let w_max = args.w_max.or(parse_from_file("w_max")?).unwrap_or(0.2);
        let tol = args.tol.or(parse_from_file("tol")?).unwrap_or(1e-5);
        let delta = args.delta.or(parse_from_file("delta")?).unwrap_or(0.1);

        let map_name = args
            .map
            .clone()
            .or_else(|| from_file("map"))
            .unwrap_or_else(|| "negentropy".into());
        if map_name != "negentropy" && map_name != "euclidean" {
            return Err(Error::InvalidConfig(format!(
                "map must be negentropy or euclidean, got {map_name:?}"
            )));
        }

        let start = match args
            .start
            .clone()
            .or_else(|| from_file("start"))
            .unwrap_or_else(|| "uniform".into())
            .as_str()
        {
            "uniform" => StartFlow::Uniform,
            "reference" => StartFlow::Reference,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "start must be uniform or reference, got {other:?}"
                )))
            }
        };

        let mut attack_strings = args.attacks.clone();
        if attack_strings.is_empty() {
            if let Some(list) = from_file("attack") {
                attack_strings = list
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
        }
        let attacks = attack_strings
            .iter()
            .map(|s| parse_attack(s))
            .collect::<Result<Vec<_>>>()?;

        let capped = args.capped
            || from_file("capped").map(|v| v == "true" || v == "1").unwrap_or(false);

        Ok(Self {
            net,
            trips,
            out_dir,
            seed,
            replications,
            horizon,
            attacks,
            map_name,
            eta1,
            exponent,
            k_paths,
            w_max,
            start,
            tol,
            delta,
            growth_samples,
            capped,
        })
    }

    fn perturbation(&self) -> PerturbationSpec {
        if self.w_max > 0.0 {
            PerturbationSpec::Uniform { w_max: self.w_max }
        } else {
            PerturbationSpec::None
        }
    }

    fn load(&self) -> Result<(TrafficNetwork, LatencyModel)> {
        let net_text = std::fs::read_to_string(&self.net)?;
        let trips_text = std::fs::read_to_string(&self.trips)?;
        let instance = TntpInstance::parse(&net_text, &trips_text)?;
        instance.build(self.k_paths, self.perturbation())
    }

    fn map_for(&self, network: &TrafficNetwork) -> MirrorMap {
        match self.map_name.as_str() {
            "euclidean" => MirrorMap::Euclidean,
            _ => MirrorMap::negentropy_for(network),
        }
    }
}

fn main() {
    // Die quietly on closed pipes like other line-oriented Unix tools
    // instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&Settings::merge(&args)?),
        Command::Simulate(args) => cmd_run(&Settings::merge(&args)?, false),
        Command::Baseline(args) => cmd_run(&Settings::merge(&args)?, true),
        Command::Report(args) => cmd_report(&args.run_dir),
        Command::Constants(args) => cmd_constants(&Settings::merge(&args)?),
        Command::Validate(args) => cmd_validate(&Settings::merge(&args)?),
    }
}

fn solve_reference(
    settings: &Settings,
    network: &TrafficNetwork,
    latency: &LatencyModel,
) -> Result<EquilibriumResult> {
    solve_mwe(
        network,
        latency,
        SolveOptions {
            tol: settings.tol,
            max_iter: 2_000_000,
        },
        None,
    )
}

fn cmd_solve(settings: &Settings) -> Result<()> {
    let (network, latency) = settings.load()?;
    let started = Instant::now();
    let eq = solve_reference(settings, &network, &latency)?;
    println!(
        "phi_star = {:.12e}  relative_gap = {:.3e}  lower_bound = {:.12e}",
        eq.phi_star, eq.relative_gap, eq.lower_bound
    );
    println!(
        "iterations = {}  converged = {}  elapsed = {:.3}s",
        eq.iterations,
        eq.converged,
        started.elapsed().as_secs_f64()
    );
    let worst = wardrop_violation(&network, &latency, &eq.mu_star, 1e-3)?;
    println!("wardrop_excess(used >= 0.1% of demand) = {worst:.3e}");

    std::fs::create_dir_all(&settings.out_dir)?;
    let mut flows = String::from("path,od,flow,mean_latency\n");
    let mean_ell = latency.mean_path_latency(&network, &eq.mu_star)?;
    for (p, path) in network.paths().iter().enumerate() {
        flows.push_str(&format!(
            "{p},{},{:.12e},{:.12e}\n",
            path.od,
            eq.mu_star.values()[p],
            mean_ell[p]
        ));
    }
    let flow_path = settings.out_dir.join("equilibrium.csv");
    std::fs::write(&flow_path, flows)?;
    println!("wrote {}", flow_path.display());
    Ok(())
}

fn cmd_run(settings: &Settings, greedy: bool) -> Result<()> {
    let (network, latency) = settings.load()?;
    let mut timings = BTreeMap::new();

    let started = Instant::now();
    let eq = solve_reference(settings, &network, &latency)?;
    timings.insert("solve_ms".to_string(), started.elapsed().as_millis());

    let mut aux_rng = ChaCha12Rng::seed_from_u64(settings.seed);
    aux_rng.set_stream(u64::MAX); // never collides with replication streams
    let started = Instant::now();
    let growth =
        estimate_growth_constants(&network, &latency, settings.growth_samples, &mut aux_rng)?;
    timings.insert("growth_ms".to_string(), started.elapsed().as_millis());

    let map = settings.map_for(&network);
    let cap = if settings.capped {
        map.sigma_psi() / (2.0 * growth.a)
    } else {
        f64::INFINITY
    };
    let schedule = StepSchedule::new(settings.eta1, settings.exponent, cap)?;
    let config = RunConfig {
        horizon: settings.horizon,
        replications: settings.replications,
        schedule,
        map,
        attacks: settings.attacks.clone(),
        start: settings.start,
        delta: settings.delta,
        master_seed: settings.seed,
    };

    let started = Instant::now();
    let records = if greedy {
        greedy_baseline(&network, &latency, &eq, &config)?
    } else {
        simulate(&network, &latency, &eq, &config)?
    };
    timings.insert("simulate_ms".to_string(), started.elapsed().as_millis());

    let mean_a_dagger = if records[0].attacks.is_empty() {
        0.0
    } else {
        records
            .iter()
            .flat_map(|r| r.attacks.iter().map(|(_, rep)| rep.a_dagger))
            .sum::<f64>()
            / (records.len() * records[0].attacks.len()) as f64
    };

    let (theory, resilience) = if greedy {
        (None, None)
    } else {
        let started = Instant::now();
        let theory = theory_constants(
            &network,
            &latency,
            &map,
            &schedule,
            &growth,
            &eq,
            mean_a_dagger,
            settings.delta,
            settings.horizon,
            Some(&records[0]),
            &mut aux_rng,
        )?;
        let resilience = if records[0].attacks.is_empty() {
            None
        } else {
            Some(resilience_report(
                &records,
                &network,
                &latency,
                &eq,
                &theory,
                settings.delta,
            )?)
        };
        timings.insert("theory_ms".to_string(), started.elapsed().as_millis());
        (Some(theory), resilience)
    };

    let attack_reports: Vec<AttackSummaryEntry> = records
        .iter()
        .flat_map(|r| {
            r.attacks.iter().map(|(t0, report)| AttackSummaryEntry {
                replication: r.replication,
                t0: *t0,
                report: *report,
            })
        })
        .collect();

    let summary = RunSummary {
        command: if greedy { "baseline" } else { "simulate" }.into(),
        net_file: settings.net.display().to_string(),
        trips_file: settings.trips.display().to_string(),
        k_paths: settings.k_paths,
        perturbation: *latency.perturbation(),
        config: config.clone(),
        phi_star: eq.phi_star,
        solver_relative_gap: eq.relative_gap,
        solver_iterations: eq.iterations,
        sigma_psi: map.sigma_psi(),
        growth: Some(growth),
        theory,
        resilience: resilience.clone(),
        attack_reports,
        cesaro_gaps: records.iter().map(|r| r.cesaro_gap).collect(),
        timings_ms: timings,
    };

    let (csv_path, json_path) = write_run_outputs(&settings.out_dir, &records, &summary)?;
    println!("phi_star = {:.12e}", eq.phi_star);
    println!(
        "cesaro gap: mean {:.6e} over {} replications",
        summary.cesaro_gaps.iter().sum::<f64>() / summary.cesaro_gaps.len() as f64,
        summary.cesaro_gaps.len()
    );
    if let Some(resilience) = &resilience {
        for attack in &resilience.attacks {
            let recovered: Vec<String> = attack
                .recovery_steps
                .iter()
                .map(|r| match r {
                    Some(steps) => steps.to_string(),
                    None => "-".into(),
                })
                .collect();
            println!(
                "attack at t0={}: mean a_dagger {:.6e}, recovery steps [{}]",
                attack.t0,
                attack.a_dagger.iter().sum::<f64>() / attack.a_dagger.len() as f64,
                recovered.join(",")
            );
        }
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_report(run_dir: &Path) -> Result<()> {
    let summary_text = std::fs::read_to_string(run_dir.join("summary.json"))?;
    let summary = RunSummary::from_json(&summary_text)?;
    let csv_text = std::fs::read_to_string(run_dir.join("trajectory.csv"))?;
    let rows = read_trajectory_csv(&csv_text)?;

    let replications = summary.config.replications;
    let horizon = summary.config.horizon;
    println!(
        "run: {} on {} ({} replications, horizon {})",
        summary.command, summary.net_file, replications, horizon
    );
    println!("phi_star = {:.12e}", summary.phi_star);

    for spec in &summary.config.attacks {
        let t0 = spec.t0;
        let mut recoveries = Vec::new();
        let mut spikes = Vec::new();
        for r in 0..replications {
            let series: Vec<&wanes::io::TrajectoryRow> =
                rows.iter().filter(|row| row.replication == r).collect();
            if series.len() != horizon {
                return Err(Error::InvalidConfig(format!(
                    "replication {r} holds {} rows, expected {horizon}",
                    series.len()
                )));
            }
            let window_lo = t0.saturating_sub(5).max(1);
            let pre: Vec<f64> = series[window_lo - 1..t0 - 1].iter().map(|s| s.gap).collect();
            let plateau = if pre.is_empty() {
                series[t0 - 1].gap
            } else {
                pre.iter().sum::<f64>() / pre.len() as f64
            };
            let peak = series[t0 - 1..]
                .iter()
                .map(|s| s.gap)
                .fold(f64::NEG_INFINITY, f64::max);
            spikes.push(peak / plateau);
            recoveries.push(series[t0 - 1..].iter().position(|s| s.gap <= 2.0 * plateau));
        }
        let shown: Vec<String> = recoveries
            .iter()
            .map(|r| r.map_or("-".into(), |s| s.to_string()))
            .collect();
        println!(
            "attack {}: spike ratios {:?}, recovery steps [{}]",
            attack_to_string(spec),
            spikes.iter().map(|s| format!("{s:.1}")).collect::<Vec<_>>(),
            shown.join(",")
        );
    }

    if let Some(theory) = &summary.theory {
        println!(
            "theory: r_value = {:.6e} at delta = {}, horizon {}",
            theory.r_value, theory.delta, theory.horizon
        );
        if summary.cesaro_gaps.len() >= 20 {
            let successes = summary
                .cesaro_gaps
                .iter()
                .filter(|g| **g < theory.r_value)
                .count();
            let (lo, hi) = wanes::numerics::wilson_interval(successes, summary.cesaro_gaps.len());
            let pass = lo >= 1.0 - summary.config.delta;
            println!(
                "wanes at r_value: p_hat = {:.3} wilson [{lo:.3}, {hi:.3}] pass = {pass}",
                successes as f64 / summary.cesaro_gaps.len() as f64
            );
        } else {
            println!(
                "wanes at r_value: skipped ({} replications < 20)",
                summary.cesaro_gaps.len()
            );
        }
    }
    Ok(())
}

fn cmd_constants(settings: &Settings) -> Result<()> {
    let (network, latency) = settings.load()?;
    let eq = solve_reference(settings, &network, &latency)?;
    let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
    rng.set_stream(u64::MAX);
    let growth = estimate_growth_constants(&network, &latency, settings.growth_samples, &mut rng)?;
    let map = settings.map_for(&network);
    let cap = if settings.capped {
        map.sigma_psi() / (2.0 * growth.a)
    } else {
        f64::INFINITY
    };
    let schedule = StepSchedule::new(settings.eta1, settings.exponent, cap)?;

    // Magnitude of the first configured attack against the reference flow,
    // zero when none is configured.
    let a_dagger = match settings.attacks.first() {
        Some(spec) => {
            let poisoned = spec.generate(&network, &eq.mu_star, &mut rng);
            wanes::attack::attack_magnitude(&map, &network, &eq.mu_star, &poisoned)?.a_dagger
        }
        None => 0.0,
    };
    let theory = theory_constants(
        &network,
        &latency,
        &map,
        &schedule,
        &growth,
        &eq,
        a_dagger,
        settings.delta,
        settings.horizon,
        None,
        &mut rng,
    )?;
    println!("{}", serde_json::to_string_pretty(&theory)?);
    Ok(())
}

fn cmd_validate(settings: &Settings) -> Result<()> {
    let (network, latency) = settings.load()?;
    let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("[{}] {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Paths are simple and connect their OD pair.
    let mut paths_ok = true;
    for (w, od) in network.od_pairs().iter().enumerate() {
        for p in network.od_paths(w) {
            let path = &network.paths()[p];
            let mut node = od.origin;
            let mut seen = vec![od.origin];
            for &e in &path.edges {
                if network.edges()[e].tail != node {
                    paths_ok = false;
                }
                node = network.edges()[e].head;
                if seen.contains(&node) {
                    paths_ok = false;
                }
                seen.push(node);
            }
            if node != od.destination {
                paths_ok = false;
            }
        }
    }
    check("paths are simple directed origin-destination paths", paths_ok);

    // Incidence consistency: edge flow equals the incidence-matrix product.
    let mu = PathFlow::dirichlet(&network, 1.0, &mut rng);
    let q = network.edge_flow(&mu)?;
    let mut incidence_ok = true;
    for (e, &qe) in q.iter().enumerate() {
        let direct: f64 = (0..network.num_paths())
            .map(|p| f64::from(network.incidence(e, p)) * mu.values()[p])
            .sum();
        if (qe - direct).abs() > 1e-9 * direct.max(1.0) {
            incidence_ok = false;
        }
    }
    check("edge flow matches the incidence map", incidence_ok);

    // Conservation: total edge flow equals length-weighted path flow.
    let total_q: f64 = q.iter().sum();
    let weighted: f64 = mu
        .values()
        .iter()
        .enumerate()
        .map(|(p, v)| v * network.paths()[p].edges.len() as f64)
        .sum();
    check(
        "edge-flow mass identity",
        (total_q - weighted).abs() < 1e-9 * weighted.max(1.0),
    );

    // Gradient identity: finite differences of the potential match the
    // latency map.
    let omega = latency.sample_perturbation(&mut rng);
    let ell = latency.path_latency(&network, &mu, &omega)?;
    let h = 1e-7 * network.total_demand().max(1.0);
    let mut grad_ok = true;
    for p in (0..network.num_paths()).step_by((network.num_paths() / 16).max(1)) {
        let mut up = mu.values().to_vec();
        up[p] += h;
        let up = PathFlow::from_values(up)?;
        let mut dn = mu.values().to_vec();
        if dn[p] < h {
            continue;
        }
        dn[p] -= h;
        let dn = PathFlow::from_values(dn)?;
        let fd = (latency.sbp(&network, &up, &omega)? - latency.sbp(&network, &dn, &omega)?)
            / (2.0 * h);
        if (fd - ell[p]).abs() / ell[p].abs() > 1e-5 {
            grad_ok = false;
        }
    }
    check("potential gradient equals path latency", grad_ok);

    // Monotonicity of the latency map.
    let q2: Vec<f64> = q.iter().map(|v| v + 1.0).collect();
    let mono_ok = (0..network.num_edges()).all(|e| {
        latency.edge_latency(e, q2[e], 0.0).unwrap()
            >= latency.edge_latency(e, q[e], 0.0).unwrap()
    });
    check("edge latency is monotone in flow", mono_ok);

    // Analytic and Monte-Carlo mean potentials agree.
    let analytic = latency.mbp(&network, &mu, MbpMode::Analytic, &mut rng)?;
    let mc = latency.mbp(&network, &mu, MbpMode::MonteCarlo(4000), &mut rng)?;
    let mbp_ok = match mc.std_error {
        Some(se) if se > 0.0 => (mc.value - analytic.value).abs() <= 4.0 * se,
        _ => (mc.value - analytic.value).abs() <= 1e-9 * analytic.value.abs().max(1.0),
    };
    check("analytic and monte-carlo mean potentials agree", mbp_ok);

    // Mirror steps conserve per-OD mass and stay nonnegative.
    let mut step_ok = true;
    for map in [MirrorMap::negentropy_for(&network), MirrorMap::Euclidean] {
        let next = md_step(&map, &network, &mu, &ell, 0.05)?;
        if next.check_in_polytope(&network).is_err() {
            step_ok = false;
        }
    }
    check("mirror steps stay in the demand polytope", step_ok);

    // Bregman divergences are nonnegative and dominate squared distance.
    let map = MirrorMap::negentropy_for(&network);
    let sigma = map.sigma_psi();
    let mut bregman_ok = true;
    for _ in 0..200 {
        let a = PathFlow::dirichlet(&network, 1.0, &mut rng);
        let b = PathFlow::dirichlet(&network, 1.0, &mut rng);
        let d = bregman(&map, &a, &b);
        if d.is_finite() && d + 1e-12 < 0.5 * sigma * a.squared_distance(&b) {
            bregman_ok = false;
        }
    }
    check("divergence dominates scaled squared distance", bregman_ok);

    // Equilibrium solve sanity at a loose tolerance.
    let eq = solve_mwe(
        &network,
        &latency,
        SolveOptions {
            tol: 1e-3,
            max_iter: 200_000,
        },
        None,
    )?;
    check("equilibrium solve converges", eq.converged);
    check(
        "equilibrium gap verified",
        mwe_gap(&network, &latency, &eq.mu_star)? <= 1.5e-3,
    );

    if failures > 0 {
        return Err(Error::InvalidConfig(format!(
            "{failures} invariant check(s) failed"
        )));
    }
    Ok(())
}
