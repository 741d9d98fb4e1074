//! TNTP network/demand parsing, trajectory CSV output, and the structured
//! run summary.
//!
//! The TNTP grammar accepted here: metadata header lines `<KEY> value`
//! terminated by `<END OF METADATA>`; `~` comment lines; link rows of ten
//! whitespace-separated columns ending in `;`
//! (init, term, capacity, length, free_flow_time, b, power, speed, toll,
//! type); trip files with `Origin n` blocks holding `dest : flow;` entries.
//! Node ids are 1-based in files and 0-based in memory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::AttackReport;
use crate::error::{Error, Result};
use crate::harness::{ResilienceReport, RunConfig, RunRecord, TheoryConstants};
use crate::latency::{BprEdge, GrowthConstants, LatencyModel, PerturbationSpec};
use crate::network::{Edge, OdPair, TrafficNetwork};

/// Parsed TNTP instance, prior to path enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct TntpInstance {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
    pub bpr: Vec<BprEdge>,
    pub od_pairs: Vec<OdPair>,
}

impl TntpInstance {
    /// Parses a network file and a trips file together.
    pub fn parse(net_text: &str, trips_text: &str) -> Result<Self> {
        let (num_nodes, edges, bpr) = parse_net(net_text)?;
        let od_pairs = parse_trips(trips_text, num_nodes)?;
        Ok(Self {
            num_nodes,
            edges,
            bpr,
            od_pairs,
        })
    }

    /// Enumerates paths and builds the runnable network plus latency model.
    pub fn build(
        &self,
        k_paths: usize,
        perturbation: PerturbationSpec,
    ) -> Result<(TrafficNetwork, LatencyModel)> {
        let free_flow: Vec<f64> = self.bpr.iter().map(|e| e.free_flow_time).collect();
        let network = TrafficNetwork::build(
            self.num_nodes,
            self.edges.clone(),
            &free_flow,
            self.od_pairs.clone(),
            k_paths,
        )?;
        let latency = LatencyModel::new(self.bpr.clone(), perturbation)?;
        Ok((network, latency))
    }

    /// Serializes the network back to TNTP text; parsing the output yields
    /// an identical structure.
    pub fn to_net_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "<NUMBER OF ZONES> {}", self.num_nodes);
        let _ = writeln!(out, "<NUMBER OF NODES> {}", self.num_nodes);
        let _ = writeln!(out, "<FIRST THRU NODE> 1");
        let _ = writeln!(out, "<NUMBER OF LINKS> {}", self.edges.len());
        let _ = writeln!(out, "<END OF METADATA>");
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "~ \tInit node \tTerm node \tCapacity \tLength \tFree Flow Time \tB\tPower\tSpeed limit \tToll \tLink Type\t;"
        );
        for (edge, bpr) in self.edges.iter().zip(&self.bpr) {
            let _ = writeln!(
                out,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t1\t;",
                edge.tail + 1,
                edge.head + 1,
                bpr.capacity,
                bpr.free_flow_time,
                bpr.free_flow_time,
                bpr.alpha1,
                bpr.alpha2,
            );
        }
        out
    }

    /// Serializes the demands back to TNTP text.
    pub fn to_trips_text(&self) -> String {
        let total: f64 = self.od_pairs.iter().map(|od| od.demand).sum();
        let mut out = String::new();
        let _ = writeln!(out, "<NUMBER OF ZONES> {}", self.num_nodes);
        let _ = writeln!(out, "<TOTAL OD FLOW> {total}");
        let _ = writeln!(out, "<END OF METADATA>");
        let _ = writeln!(out);
        let mut by_origin: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for od in &self.od_pairs {
            by_origin
                .entry(od.origin)
                .or_default()
                .push((od.destination, od.demand));
        }
        for (origin, dests) in by_origin {
            let _ = writeln!(out, "Origin {}", origin + 1);
            for (dest, demand) in dests {
                let _ = writeln!(out, "    {} : {};", dest + 1, demand);
            }
        }
        out
    }
}

fn parse_metadata<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    file: &str,
) -> Result<BTreeMap<String, String>> {
    let mut meta = BTreeMap::new();
    for (line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if !line.starts_with('<') {
            return Err(Error::Parse {
                file: file.into(),
                line: line_no,
                msg: format!("expected metadata header, got {line:?}"),
            });
        }
        let close = line.find('>').ok_or_else(|| Error::Parse {
            file: file.into(),
            line: line_no,
            msg: "unterminated metadata key".into(),
        })?;
        let key = line[1..close].trim().to_uppercase();
        if key == "END OF METADATA" {
            return Ok(meta);
        }
        meta.insert(key, line[close + 1..].trim().to_string());
    }
    Err(Error::Parse {
        file: file.into(),
        line: 0,
        msg: "missing <END OF METADATA>".into(),
    })
}

fn meta_usize(meta: &BTreeMap<String, String>, key: &str, file: &str) -> Result<usize> {
    let raw = meta.get(key).ok_or_else(|| Error::Parse {
        file: file.into(),
        line: 0,
        msg: format!("missing <{key}> in metadata"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        file: file.into(),
        line: 0,
        msg: format!("<{key}> is not an integer: {raw:?}"),
    })
}

fn parse_net(text: &str) -> Result<(usize, Vec<Edge>, Vec<BprEdge>)> {
    const FILE: &str = "net";
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let meta = parse_metadata(&mut lines, FILE)?;
    let num_nodes = meta_usize(&meta, "NUMBER OF NODES", FILE)?;
    let num_links = meta_usize(&meta, "NUMBER OF LINKS", FILE)?;

    let mut edges = Vec::new();
    let mut bpr = Vec::new();
    for (line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        let row = line.strip_suffix(';').unwrap_or(line);
        let cols: Vec<&str> = row.split_whitespace().collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("expected 10 columns, got {}", cols.len()),
            });
        }
        let field = |idx: usize, name: &str| -> Result<f64> {
            cols[idx].parse().map_err(|_| Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("{name} is not a number: {:?}", cols[idx]),
            })
        };
        let init = field(0, "init node")? as usize;
        let term = field(1, "term node")? as usize;
        if init < 1 || init > num_nodes || term < 1 || term > num_nodes {
            return Err(Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("node id outside 1..={num_nodes}"),
            });
        }
        let capacity = field(2, "capacity")?;
        if capacity < 0.0 {
            return Err(Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("negative capacity {capacity}"),
            });
        }
        let free_flow_time = field(4, "free flow time")?;
        let alpha1 = field(5, "b")?;
        let alpha2 = field(6, "power")?;
        edges.push(Edge {
            tail: init - 1,
            head: term - 1,
        });
        bpr.push(BprEdge {
            free_flow_time,
            capacity,
            alpha1,
            alpha2,
        });
    }
    if edges.len() != num_links {
        return Err(Error::Parse {
            file: FILE.into(),
            line: 0,
            msg: format!(
                "metadata declares {num_links} links, file holds {}",
                edges.len()
            ),
        });
    }
    Ok((num_nodes, edges, bpr))
}

fn parse_trips(text: &str, num_nodes: usize) -> Result<Vec<OdPair>> {
    const FILE: &str = "trips";
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let _meta = parse_metadata(&mut lines, FILE)?;

    let mut od_pairs = Vec::new();
    let mut origin: Option<usize> = None;
    for (line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Origin") {
            let id: usize = rest.trim().parse().map_err(|_| Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("bad origin id: {rest:?}"),
            })?;
            if id < 1 || id > num_nodes {
                return Err(Error::Parse {
                    file: FILE.into(),
                    line: line_no,
                    msg: format!("origin {id} outside 1..={num_nodes}"),
                });
            }
            origin = Some(id - 1);
            continue;
        }
        let origin = origin.ok_or_else(|| Error::Parse {
            file: FILE.into(),
            line: line_no,
            msg: "demand entry before any Origin block".into(),
        })?;
        for entry in line.split(';') {
            let entry = entry.trim();
            if entry.is_empty() {
                continue;
            }
            let (dest_raw, flow_raw) = entry.split_once(':').ok_or_else(|| Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("expected `dest : flow`, got {entry:?}"),
            })?;
            let dest: usize = dest_raw.trim().parse().map_err(|_| Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("bad destination id: {dest_raw:?}"),
            })?;
            if dest < 1 || dest > num_nodes {
                return Err(Error::Parse {
                    file: FILE.into(),
                    line: line_no,
                    msg: format!("destination {dest} outside 1..={num_nodes}"),
                });
            }
            let flow: f64 = flow_raw.trim().parse().map_err(|_| Error::Parse {
                file: FILE.into(),
                line: line_no,
                msg: format!("bad flow value: {flow_raw:?}"),
            })?;
            if flow > 0.0 {
                od_pairs.push(OdPair {
                    origin,
                    destination: dest - 1,
                    demand: flow,
                });
            }
        }
    }
    Ok(od_pairs)
}

/// Built-in toy instance: two routes between one OD pair, for tests and
/// docs.
pub const TOY_NET: &str = "\
<NUMBER OF ZONES> 4
<NUMBER OF NODES> 4
<FIRST THRU NODE> 1
<NUMBER OF LINKS> 4
<END OF METADATA>

~ \tInit node \tTerm node \tCapacity \tLength \tFree Flow Time \tB\tPower\tSpeed limit \tToll \tLink Type\t;
\t1\t2\t1\t1\t1\t0.15\t4\t0\t0\t1\t;
\t2\t4\t1\t1\t1\t0.15\t4\t0\t0\t1\t;
\t1\t3\t1\t2\t2\t0.15\t4\t0\t0\t1\t;
\t3\t4\t1\t2\t2\t0.15\t4\t0\t0\t1\t;
";

pub const TOY_TRIPS: &str = "\
<NUMBER OF ZONES> 4
<TOTAL OD FLOW> 2.0
<END OF METADATA>

Origin 1
    4 : 2.0;
";

/// One parsed-back trajectory row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub replication: usize,
    pub t: usize,
    pub eta: f64,
    pub phi: f64,
    pub mbp: f64,
    pub gap: f64,
    pub dist_ref: f64,
    pub attacked: bool,
}

pub const TRAJECTORY_HEADER: &str = "replication,t,eta,phi_t,Phi_t,gap,dist_ref,attacked";

fn format_sig(x: f64) -> String {
    // 12 significant digits, scientific.
    format!("{x:.11e}")
}

/// Writes the per-iteration trajectory CSV, rows ordered by replication
/// then time, floats at 12 significant digits.
pub fn write_trajectory_csv<W: Write>(records: &[RunRecord], mut w: W) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for record in records {
        for step in &record.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                record.replication,
                step.t,
                format_sig(step.eta),
                format_sig(step.phi),
                format_sig(step.mbp),
                format_sig(step.gap),
                format_sig(step.dist_ref),
                u8::from(step.attacked),
            )?;
        }
    }
    Ok(())
}

/// Parses a trajectory CSV produced by [`write_trajectory_csv`].
pub fn read_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRAJECTORY_HEADER => {}
        _ => {
            return Err(Error::Parse {
                file: "trajectory".into(),
                line: 1,
                msg: format!("expected header {TRAJECTORY_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Parse {
                file: "trajectory".into(),
                line: idx + 1,
                msg: format!("expected 8 columns, got {}", cols.len()),
            });
        }
        let parse_f = |i: usize| -> Result<f64> {
            cols[i].parse().map_err(|_| Error::Parse {
                file: "trajectory".into(),
                line: idx + 1,
                msg: format!("bad float {:?}", cols[i]),
            })
        };
        rows.push(TrajectoryRow {
            replication: cols[0].parse().map_err(|_| Error::Parse {
                file: "trajectory".into(),
                line: idx + 1,
                msg: format!("bad replication {:?}", cols[0]),
            })?,
            t: cols[1].parse().map_err(|_| Error::Parse {
                file: "trajectory".into(),
                line: idx + 1,
                msg: format!("bad t {:?}", cols[1]),
            })?,
            eta: parse_f(2)?,
            phi: parse_f(3)?,
            mbp: parse_f(4)?,
            gap: parse_f(5)?,
            dist_ref: parse_f(6)?,
            attacked: cols[7] == "1",
        });
    }
    Ok(rows)
}

/// Per-replication attack entry in the summary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackSummaryEntry {
    pub replication: usize,
    pub t0: usize,
    pub report: AttackReport,
}

/// Structured run summary written beside the trajectory CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub net_file: String,
    pub trips_file: String,
    pub k_paths: usize,
    pub perturbation: PerturbationSpec,
    pub config: RunConfig,
    pub phi_star: f64,
    pub solver_relative_gap: f64,
    pub solver_iterations: usize,
    pub sigma_psi: f64,
    pub growth: Option<GrowthConstants>,
    pub theory: Option<TheoryConstants>,
    pub resilience: Option<ResilienceReport>,
    pub attack_reports: Vec<AttackSummaryEntry>,
    /// Cesaro gap of each replication, in replication order.
    pub cesaro_gaps: Vec<f64>,
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes `trajectory.csv` and `summary.json` into the run directory.
pub fn write_run_outputs(
    dir: &Path,
    records: &[RunRecord],
    summary: &RunSummary,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("trajectory.csv");
    let mut buffer = Vec::new();
    write_trajectory_csv(records, &mut buffer)?;
    std::fs::write(&csv_path, &buffer)?;
    let json_path = dir.join("summary.json");
    std::fs::write(&json_path, summary.to_json()?)?;
    Ok((csv_path, json_path))
}

/// Flat `key = value` configuration text mirroring the CLI flags; later
/// keys override earlier ones, comment lines start with `#`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            file: "config".into(),
            line: idx + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
