//! Command line front end: planning, drop analysis, simulation, the
//! minimum-interval oracle, the interval grid, and the paced-versus-
//! maximum-limit comparison.
//!
//! Every subcommand is deterministic: repeated invocations print
//! byte-identical output. Exit codes: 0 on success, 2 on usage errors,
//! 1 on runtime errors.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use burstpace::planner::{
    self, derive_params, interval_table, message_time_ns, MessageParams, Plan, TsomRounding,
};
use burstpace::protocols::{
    min_zero_drop_interval, run_max_limit, run_paced_with, BackTrafficFlow, MaxLimitConfig,
    PacedConfig, ScenarioMetrics,
};
use burstpace::queue_analysis::{self, SafeReceiveTime};
use burstpace::sim::{uniform_queue_sizes, SimOptions};
use burstpace::time::{format_secs, parse_secs};
use burstpace::topology::{NodeId, RouterId, Topology};

#[derive(Parser)]
#[command(
    name = "burstpace",
    about = "Plan and simulate burst-paced service discovery on small networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    Paced,
    Maxlimit,
}

#[derive(Args)]
struct ParamArgs {
    /// Message size used for planning; defaults to the topology's average
    /// service message size.
    #[arg(long)]
    message_bytes: Option<u64>,
    /// Bandwidth used for planning; defaults to the topology's average
    /// router-link bandwidth.
    #[arg(long)]
    bandwidth_bps: Option<u64>,
    /// Round the per-message time up to a multiple of this step (seconds);
    /// omitted = exact.
    #[arg(long)]
    tsom_round: Option<String>,
}

impl ParamArgs {
    fn build(&self, topo: &Topology) -> Result<MessageParams> {
        let rounding = match &self.tsom_round {
            Some(step) => TsomRounding::Fixed {
                step_ns: parse_secs(step).map_err(|e| anyhow!(e))?,
            },
            None => TsomRounding::Exact,
        };
        let mut p = derive_params(topo, rounding).map_err(|e| anyhow!(e.to_string()))?;
        if let Some(b) = self.message_bytes {
            p.message_bytes = b;
        }
        if let Some(bw) = self.bandwidth_bps {
            p.bandwidth_bps = bw;
        }
        Ok(p)
    }
}

#[derive(Args)]
struct QueueArgs {
    /// Size every router queue from the plan (default).
    #[arg(long, conflicts_with = "queue")]
    queue_from_plan: bool,
    /// Use this queue size on every router instead of the planned sizes.
    #[arg(long)]
    queue: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute queue sizes, candidates, overlap, gaps and the interval.
    Plan {
        topology: String,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Round displayed seconds to this many decimals.
        #[arg(long)]
        round: Option<usize>,
    },
    /// Closed-form receiver drop analysis.
    Analyze {
        /// Messages sent toward the receiver.
        #[arg(long)]
        sent: u64,
        /// Arrival rate, messages per second.
        #[arg(long)]
        incoming_rate: f64,
        /// Service rate, messages per second.
        #[arg(long)]
        processing_rate: f64,
        /// Receiver buffer capacity, messages.
        #[arg(long)]
        queue_size: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run a discovery protocol and print the scenario metrics.
    Simulate {
        topology: String,
        #[arg(long, value_enum)]
        protocol: Protocol,
        /// Inter-burst interval for the paced protocol (seconds);
        /// defaults to the planned interval.
        #[arg(long)]
        interval: Option<String>,
        /// Re-query timeout for the maximum-limit protocol (seconds).
        #[arg(long)]
        timeout: Option<String>,
        #[command(flatten)]
        queues: QueueArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Back traffic flow `src:dst:count:period_s[:bytes]`; repeatable.
        #[arg(long = "back-traffic")]
        back_traffic: Vec<String>,
        /// Write the full event trace to this file.
        #[arg(long)]
        trace: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        round: Option<usize>,
    },
    /// Search the smallest zero-drop interval and compare it to the plan.
    Oracle {
        topology: String,
        #[command(flatten)]
        queues: QueueArgs,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Interval grid for uniform chains, in message-time units.
    Table1 {
        /// Comma-separated router counts.
        #[arg(long, default_value = "8,12,16")]
        routers: String,
        /// Per-router clients-and-services counts, `A..B` or comma list.
        #[arg(long, default_value = "1..10")]
        per_router: String,
        #[arg(long, default_value_t = 128)]
        message_bytes: u64,
        #[arg(long, default_value_t = 524288)]
        bandwidth_bps: u64,
        #[arg(long)]
        tsom_round: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        output: Format,
    },
    /// Paced run plus maximum-limit runs at several timeouts, side by side.
    Compare {
        topology: String,
        /// Comma-separated maximum-limit timeouts (seconds).
        #[arg(long, default_value = "0.15,0.1,0.05")]
        timeouts: String,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        round: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_topology(path: &str) -> Result<Topology> {
    let text = fs::read_to_string(path).with_context(|| format!("reading `{path}`"))?;
    Topology::parse(&text).map_err(|e| anyhow!("{path}: {e}"))
}

fn secs(ns: u64, round: Option<usize>) -> String {
    match round {
        None => format_secs(ns),
        Some(digits) => format!("{:.*}", digits, ns as f64 / 1e9),
    }
}

fn the_plan(topo: &Topology, p: &MessageParams) -> Result<Plan> {
    planner::plan(topo, p).map_err(|e| anyhow!(e.to_string()))
}

fn queue_sizes_for(
    topo: &Topology,
    p: &MessageParams,
    queues: &QueueArgs,
) -> Result<BTreeMap<RouterId, usize>> {
    match queues.queue {
        Some(n) => Ok(uniform_queue_sizes(topo, n)),
        None => Ok(the_plan(topo, p)?.queue_sizes),
    }
}

fn sim_options(p: &MessageParams) -> SimOptions {
    let tsom = message_time_ns(p);
    SimOptions {
        tsom_quantum_ns: Some(tsom),
        flood_slot_ns: Some(tsom),
    }
}

fn print_metrics(m: &ScenarioMetrics, header: &[(String, String)], round: Option<usize>) {
    for (k, v) in header {
        println!("{k}={v}");
    }
    println!("multicast_rounds={}", m.multicast_rounds);
    println!("dropped={}", m.dropped);
    println!("replies_sent={}", m.replies_sent);
    println!("duplicates_received={}", m.duplicates_received);
    println!("discovery_time={}", secs(m.discovery_time_ns, round));
    println!(
        "per_round_discovered_pct={}",
        m.per_round_discovered_pct
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    println!("complete={}", m.complete);
}

fn metrics_csv(m: &ScenarioMetrics, header: &[(String, String)]) {
    let mut cols: Vec<String> = header.iter().map(|(k, _)| k.clone()).collect();
    cols.extend(
        [
            "multicast_rounds",
            "dropped",
            "replies_sent",
            "duplicates_received",
            "discovery_time_s",
            "complete",
        ]
        .map(String::from),
    );
    println!("{}", cols.join(","));
    let mut vals: Vec<String> = header.iter().map(|(_, v)| v.clone()).collect();
    vals.push(m.multicast_rounds.to_string());
    vals.push(m.dropped.to_string());
    vals.push(m.replies_sent.to_string());
    vals.push(m.duplicates_received.to_string());
    vals.push(format_secs(m.discovery_time_ns));
    vals.push(m.complete.to_string());
    println!("{}", vals.join(","));
}

fn parse_back_traffic(topo: &Topology, spec: &str) -> Result<BackTrafficFlow> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 && parts.len() != 5 {
        bail!("back traffic spec `{spec}` must be src:dst:count:period_s[:bytes]");
    }
    let src = NodeId(parts[0].to_string());
    let dst = NodeId(parts[1].to_string());
    let count: u32 = parts[2]
        .parse()
        .with_context(|| format!("bad count in `{spec}`"))?;
    let period_ns = parse_secs(parts[3]).map_err(|e| anyhow!("bad period in `{spec}`: {e}"))?;
    let size_bytes = match parts.get(4) {
        Some(b) => b.parse().with_context(|| format!("bad bytes in `{spec}`"))?,
        None => topo
            .node(&src)
            .and_then(|n| n.message_bytes)
            .unwrap_or(128),
    };
    Ok(BackTrafficFlow {
        src,
        dst,
        count,
        period_ns,
        size_bytes,
    })
}

fn parse_counts(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().context("bad range start")?;
        let b: usize = b.trim().parse().context("bad range end")?;
        if a > b {
            bail!("empty range `{text}`");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("bad count `{t}`"))
        })
        .collect()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Plan {
            topology,
            params,
            format,
            round,
        } => {
            let topo = load_topology(&topology)?;
            let p = params.build(&topo)?;
            let plan = the_plan(&topo, &p)?;
            let candidates = plan
                .candidates
                .iter()
                .map(|c| c.0.clone())
                .collect::<Vec<_>>()
                .join(";");
            let queues = plan
                .queue_sizes
                .iter()
                .map(|(r, s)| format!("{r}={s}"))
                .collect::<Vec<_>>()
                .join(";");
            match format {
                Format::Text => {
                    println!("tsom={}", secs(plan.tsom_ns, round));
                    println!("max_message_time={}", secs(plan.max_message_time_ns, round));
                    for (r, s) in &plan.queue_sizes {
                        println!("queue[{r}]={s}");
                    }
                    println!("candidates={candidates}");
                    println!("chosen={}", plan.chosen);
                    println!("overlap_space={}", plan.overlap_space);
                    println!("gap_slots={}", plan.gap_slots);
                    if let Some(fill) = plan.root_fill_time_ns {
                        println!("root_fill_time={}", secs(fill, round));
                    }
                    println!("best_interval={}", secs(plan.best_interval_ns, round));
                }
                Format::Csv => {
                    println!(
                        "chosen,best_interval_s,tsom_s,overlap_space,gap_slots,candidates,queue_sizes"
                    );
                    println!(
                        "{},{},{},{},{},{},{}",
                        plan.chosen,
                        format_secs(plan.best_interval_ns),
                        format_secs(plan.tsom_ns),
                        plan.overlap_space,
                        plan.gap_slots,
                        candidates,
                        queues
                    );
                }
            }
        }
        Command::Analyze {
            sent,
            incoming_rate,
            processing_rate,
            queue_size,
            format,
        } => {
            let rt = queue_analysis::receive_time(sent, incoming_rate)
                .map_err(|e| anyhow!(e.to_string()))?;
            let drop = queue_analysis::will_drop(sent, rt, processing_rate, queue_size);
            let min_q = queue_analysis::min_queue_size(sent, rt, processing_rate);
            let safe = match queue_analysis::safe_receive_time(sent, queue_size, processing_rate) {
                SafeReceiveTime::Seconds(s) => format!("{s}"),
                SafeReceiveTime::Unsatisfiable => "unsatisfiable".to_string(),
            };
            match format {
                Format::Text => {
                    println!("receive_time={rt}");
                    println!("will_drop={drop}");
                    println!("min_queue_size={min_q}");
                    println!("safe_receive_time={safe}");
                }
                Format::Csv => {
                    println!("receive_time_s,will_drop,min_queue_size,safe_receive_time_s");
                    println!("{rt},{drop},{min_q},{safe}");
                }
            }
        }
        Command::Simulate {
            topology,
            protocol,
            interval,
            timeout,
            queues,
            params,
            back_traffic,
            trace,
            format,
            round,
        } => {
            let topo = load_topology(&topology)?;
            let p = params.build(&topo)?;
            let sizes = queue_sizes_for(&topo, &p, &queues)?;
            let opts = sim_options(&p);
            let (metrics, sim_trace, header) = match protocol {
                Protocol::Paced => {
                    if timeout.is_some() {
                        bail!("--timeout applies to the maxlimit protocol only");
                    }
                    let interval_ns = match &interval {
                        Some(s) => parse_secs(s).map_err(|e| anyhow!(e))?,
                        None => the_plan(&topo, &p)?.best_interval_ns,
                    };
                    let mut cfg = PacedConfig::new(interval_ns);
                    for spec in &back_traffic {
                        cfg.back_traffic.push(parse_back_traffic(&topo, spec)?);
                    }
                    let (m, t) = run_paced_with(&topo, &sizes, &cfg, opts)
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let header = vec![
                        ("protocol".to_string(), "paced".to_string()),
                        ("interval".to_string(), secs(interval_ns, round)),
                    ];
                    (m, t, header)
                }
                Protocol::Maxlimit => {
                    if interval.is_some() || !back_traffic.is_empty() {
                        bail!("--interval and --back-traffic apply to the paced protocol only");
                    }
                    let timeout_ns = match &timeout {
                        Some(s) => parse_secs(s).map_err(|e| anyhow!(e))?,
                        None => bail!("--timeout is required for the maxlimit protocol"),
                    };
                    let cfg = MaxLimitConfig::new(timeout_ns);
                    let (m, t) = run_max_limit(&topo, &cfg, &sizes, opts)
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let header = vec![
                        ("protocol".to_string(), "maxlimit".to_string()),
                        ("timeout".to_string(), secs(timeout_ns, round)),
                    ];
                    (m, t, header)
                }
            };
            match format {
                Format::Text => {
                    print_metrics(&metrics, &header, round);
                    for (router, peak) in sim_trace.peak_occupancy() {
                        println!("peak_queue[{router}]={peak}");
                    }
                }
                Format::Csv => metrics_csv(&metrics, &header),
            }
            if let Some(path) = trace {
                fs::write(&path, sim_trace.export())
                    .with_context(|| format!("writing trace to `{path}`"))?;
            }
        }
        Command::Oracle {
            topology,
            queues,
            params,
        } => {
            let topo = load_topology(&topology)?;
            let p = params.build(&topo)?;
            let sizes = queue_sizes_for(&topo, &p, &queues)?;
            let plan = the_plan(&topo, &p)?;
            let found = min_zero_drop_interval(&topo, &sizes, &p, sim_options(&p))
                .map_err(|e| anyhow!(e.to_string()))?;
            println!("planner_interval={}", format_secs(plan.best_interval_ns));
            match found {
                Some(ns) => {
                    println!("oracle_interval={}", format_secs(ns));
                    if plan.best_interval_ns > 0 {
                        println!("ratio={:.6}", ns as f64 / plan.best_interval_ns as f64);
                    } else {
                        println!("ratio=1.000000");
                    }
                }
                None => println!("oracle_interval=unsatisfiable"),
            }
        }
        Command::Table1 {
            routers,
            per_router,
            message_bytes,
            bandwidth_bps,
            tsom_round,
            output,
        } => {
            let router_counts = parse_counts(&routers)?;
            let node_counts = parse_counts(&per_router)?;
            let rounding = match &tsom_round {
                Some(step) => TsomRounding::Fixed {
                    step_ns: parse_secs(step).map_err(|e| anyhow!(e))?,
                },
                None => TsomRounding::Exact,
            };
            let p = MessageParams::new(message_bytes, bandwidth_bps, rounding);
            let cells = interval_table(&router_counts, &node_counts, &p)
                .map_err(|e| anyhow!(e.to_string()))?;
            match output {
                Format::Csv => {
                    println!("routers,per_router,network_size,interval_tsom");
                    for c in &cells {
                        println!(
                            "{},{},{},{}",
                            c.routers, c.per_router, c.network_size, c.interval_slots
                        );
                    }
                }
                Format::Text => {
                    print!("{:>12}", "per_router");
                    for r in &router_counts {
                        print!("{:>12}", format!("{r} routers"));
                    }
                    println!("{:>16}", "network_size");
                    for m in &node_counts {
                        print!("{m:>12}");
                        for r in &router_counts {
                            let cell = cells
                                .iter()
                                .find(|c| c.routers == *r && c.per_router == *m)
                                .unwrap();
                            print!("{:>12}", cell.interval_slots);
                        }
                        println!("{:>16}", format!("{} * routers", 2 * m));
                    }
                }
            }
        }
        Command::Compare {
            topology,
            timeouts,
            params,
            round,
        } => {
            let topo = load_topology(&topology)?;
            let p = params.build(&topo)?;
            let plan = the_plan(&topo, &p)?;
            let opts = sim_options(&p);
            let paced_cfg = PacedConfig::new(plan.best_interval_ns);
            let (paced, _) = run_paced_with(&topo, &plan.queue_sizes, &paced_cfg, opts.clone())
                .map_err(|e| anyhow!(e.to_string()))?;
            let mut columns: Vec<(String, ScenarioMetrics)> = vec![(
                format!("paced@{}", secs(plan.best_interval_ns, round)),
                paced,
            )];
            for t in timeouts.split(',') {
                let timeout_ns = parse_secs(t.trim()).map_err(|e| anyhow!(e))?;
                let cfg = MaxLimitConfig::new(timeout_ns);
                let (m, _) = run_max_limit(&topo, &cfg, &plan.queue_sizes, opts.clone())
                    .map_err(|e| anyhow!(e.to_string()))?;
                columns.push((format!("maxlimit@{}", secs(timeout_ns, round)), m));
            }
            let width = 22;
            print!("{:<24}", "metric");
            for (name, _) in &columns {
                print!("{name:>width$}");
            }
            println!();
            type Renderer = Box<dyn Fn(&ScenarioMetrics) -> String>;
            let rows: Vec<(&str, Renderer)> = vec![
                (
                    "multicast_rounds",
                    Box::new(|m: &ScenarioMetrics| m.multicast_rounds.to_string()),
                ),
                ("dropped", Box::new(|m: &ScenarioMetrics| m.dropped.to_string())),
                (
                    "replies_sent",
                    Box::new(|m: &ScenarioMetrics| m.replies_sent.to_string()),
                ),
                (
                    "duplicates_received",
                    Box::new(|m: &ScenarioMetrics| m.duplicates_received.to_string()),
                ),
                (
                    "discovery_time",
                    Box::new(move |m: &ScenarioMetrics| secs(m.discovery_time_ns, round)),
                ),
                (
                    "complete",
                    Box::new(|m: &ScenarioMetrics| m.complete.to_string()),
                ),
            ];
            for (label, render) in rows {
                print!("{label:<24}");
                for (_, m) in &columns {
                    print!("{:>width$}", render(m));
                }
                println!();
            }
        }
    }
    Ok(())
}
