//! Discovery traffic generators and scenario metrics: the paced algorithm,
//! the maximum-limit baseline, and the brute-force minimum-interval oracle.
//!
//! Paced discovery: every client multicasts one query at t=0. Each service
//! anchors on its first query receipt and then sends one reply per client,
//! in ascending client-id order, spacing consecutive replies by the
//! planned interval. The anchor staggering is whatever the query flood
//! produced, which is exactly the pipeline the queue sizing assumes.
//!
//! Maximum-limit discovery: clients re-multicast on a fixed timeout tick,
//! each query listing the services that client already knows; services
//! not listed reply immediately on receipt. The process stops after the
//! first round that discovers nothing new (the "make sure" round, which
//! still counts), or errors out at the round cap.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::planner::{message_time_ns, MessageParams, Plan};
use crate::sim::{Dest, MessageKind, MessageSpec, SimError, SimOptions, SimTrace, Simulator};
use crate::time::secs_f64;
use crate::topology::{NodeId, RouterId, Topology};

pub const DEFAULT_ROUND_CAP: u32 = 64;
/// Back traffic starts "just after" the first reply burst.
const BACK_TRAFFIC_LAG_NS: u64 = 1_000;

#[derive(Debug, Clone)]
pub struct BackTrafficFlow {
    pub src: NodeId,
    pub dst: NodeId,
    pub count: u32,
    pub period_ns: u64,
    pub size_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct PacedConfig {
    pub interval_ns: u64,
    /// Override for reply sizes; defaults to each service's own size.
    pub reply_bytes: Option<u64>,
    pub back_traffic: Vec<BackTrafficFlow>,
}

impl PacedConfig {
    pub fn new(interval_ns: u64) -> Self {
        PacedConfig {
            interval_ns,
            reply_bytes: None,
            back_traffic: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxLimitConfig {
    pub timeout_ns: u64,
    pub reply_bytes: Option<u64>,
    pub round_cap: u32,
}

impl MaxLimitConfig {
    pub fn new(timeout_ns: u64) -> Self {
        MaxLimitConfig {
            timeout_ns,
            reply_bytes: None,
            round_cap: DEFAULT_ROUND_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMetrics {
    pub multicast_rounds: u32,
    pub dropped: u64,
    pub replies_sent: u64,
    pub duplicates_received: u64,
    pub discovery_time_ns: u64,
    /// Percentage of (client, service) pairs known at the end of each
    /// round window; the final entry is measured at quiescence.
    pub per_round_discovered_pct: Vec<f64>,
    /// True when every client discovered every service.
    pub complete: bool,
}

impl ScenarioMetrics {
    pub fn discovery_time_s(&self) -> f64 {
        secs_f64(self.discovery_time_ns)
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("topology has no clients")]
    NoClients,
    #[error("maximum-limit discovery did not terminate within {0} rounds")]
    NonTerminating(u32),
    #[error("message parameters yield a zero message time")]
    ZeroTsom,
}

fn sorted_clients(topo: &Topology) -> Vec<NodeId> {
    topo.clients().map(|c| c.id.clone()).collect()
}

fn sorted_services(topo: &Topology) -> Vec<(NodeId, u64)> {
    topo.services()
        .map(|s| (s.id.clone(), s.message_bytes.unwrap_or(1)))
        .collect()
}

/// First-delivery bookkeeping per (client, service) pair.
struct PairTracker {
    first_delivery: BTreeMap<(usize, usize), u64>,
    duplicates: u64,
    total_pairs: usize,
}

impl PairTracker {
    fn new(total_pairs: usize) -> Self {
        PairTracker {
            first_delivery: BTreeMap::new(),
            duplicates: 0,
            total_pairs,
        }
    }

    fn record(&mut self, pair: (usize, usize), at: u64) {
        match self.first_delivery.entry(pair) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(at);
            }
            std::collections::btree_map::Entry::Occupied(_) => self.duplicates += 1,
        }
    }

    fn pct_by(&self, t: u64) -> f64 {
        if self.total_pairs == 0 {
            return 100.0;
        }
        let known = self.first_delivery.values().filter(|&&d| d <= t).count();
        100.0 * known as f64 / self.total_pairs as f64
    }

    fn complete(&self) -> bool {
        self.first_delivery.len() == self.total_pairs
    }

    fn last_discovery(&self) -> u64 {
        self.first_delivery.values().copied().max().unwrap_or(0)
    }
}

fn close_out(
    sim: Simulator,
    reply_msgs: &[(u64, usize, usize)],
    total_pairs: usize,
    rounds: u32,
    timeout_ns: Option<u64>,
    replies_sent: u64,
) -> (ScenarioMetrics, SimTrace) {
    let mut ordered: Vec<(u64, u64, usize, usize)> = reply_msgs
        .iter()
        .filter_map(|&(id, ci, si)| sim.delivered_at(id).map(|t| (t, id, ci, si)))
        .collect();
    ordered.sort_unstable();
    let mut tracker = PairTracker::new(total_pairs);
    for &(t, _, ci, si) in &ordered {
        tracker.record((ci, si), t);
    }
    let mut per_round = Vec::new();
    if let Some(timeout) = timeout_ns {
        for k in 1..=rounds as u64 {
            per_round.push(tracker.pct_by(k * timeout));
        }
        if let Some(last) = per_round.last_mut() {
            *last = tracker.pct_by(u64::MAX);
        }
    } else {
        per_round.push(tracker.pct_by(u64::MAX));
    }
    let discovery_time_ns = tracker.last_discovery();
    let complete = tracker.complete();
    let duplicates = tracker.duplicates;
    let trace = sim.into_trace();
    (
        ScenarioMetrics {
            multicast_rounds: rounds,
            dropped: trace.counters.dropped,
            replies_sent,
            duplicates_received: duplicates,
            discovery_time_ns,
            per_round_discovered_pct: per_round,
            complete,
        },
        trace,
    )
}

/// Runs paced discovery with a plan's queue sizes and interval.
pub fn run_paced(
    topo: &Topology,
    plan: &Plan,
    cfg: &PacedConfig,
    opts: SimOptions,
) -> Result<(ScenarioMetrics, SimTrace), ProtocolError> {
    run_paced_with(topo, &plan.queue_sizes, cfg, opts)
}

/// Paced discovery against explicit queue sizes.
pub fn run_paced_with(
    topo: &Topology,
    queue_sizes: &BTreeMap<RouterId, usize>,
    cfg: &PacedConfig,
    opts: SimOptions,
) -> Result<(ScenarioMetrics, SimTrace), ProtocolError> {
    let clients = sorted_clients(topo);
    if clients.is_empty() {
        return Err(ProtocolError::NoClients);
    }
    let services = sorted_services(topo);
    let service_index: BTreeMap<&str, usize> = services
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.0.as_str(), i))
        .collect();
    let mut sim = Simulator::new(topo, queue_sizes, opts)?;

    // One multicast query per client at t = 0; services anchor on their
    // first receipt.
    let sources: Vec<(NodeId, u64)> = clients.iter().map(|c| (c.clone(), 0)).collect();
    let receipts = sim.inject_multicast_batch(&sources)?;
    let mut anchor: Vec<Option<u64>> = vec![None; services.len()];
    for (_, service, at) in &receipts {
        let si = service_index[service.0.as_str()];
        anchor[si] = Some(anchor[si].map_or(*at, |prev| prev.min(*at)));
    }

    let mut reply_msgs: Vec<(u64, usize, usize)> = Vec::new();
    let mut first_burst_ns = u64::MAX;
    for (si, (service, bytes)) in services.iter().enumerate() {
        let Some(t0) = anchor[si] else {
            continue; // no query ever reaches an isolated service
        };
        first_burst_ns = first_burst_ns.min(t0);
        for (ci, client) in clients.iter().enumerate() {
            let id = sim.inject(MessageSpec {
                inject_ns: t0 + ci as u64 * cfg.interval_ns,
                src: service.clone(),
                dst: Dest::Node(client.clone()),
                kind: MessageKind::UnicastReply,
                size_bytes: cfg.reply_bytes.unwrap_or(*bytes),
            })?;
            reply_msgs.push((id, ci, si));
        }
    }
    let replies_sent = reply_msgs.len() as u64;

    if first_burst_ns != u64::MAX {
        let bt0 = first_burst_ns + BACK_TRAFFIC_LAG_NS;
        for flow in &cfg.back_traffic {
            for j in 0..flow.count {
                sim.inject(MessageSpec {
                    inject_ns: bt0 + j as u64 * flow.period_ns,
                    src: flow.src.clone(),
                    dst: Dest::Node(flow.dst.clone()),
                    kind: MessageKind::BackTraffic,
                    size_bytes: flow.size_bytes,
                })?;
            }
        }
    }

    sim.run_to_quiescence();
    Ok(close_out(
        sim,
        &reply_msgs,
        clients.len() * services.len(),
        1,
        None,
        replies_sent,
    ))
}

/// Runs maximum-limit discovery: rounds tick at multiples of the timeout
/// until a round discovers nothing new.
pub fn run_max_limit(
    topo: &Topology,
    cfg: &MaxLimitConfig,
    queue_sizes: &BTreeMap<RouterId, usize>,
    opts: SimOptions,
) -> Result<(ScenarioMetrics, SimTrace), ProtocolError> {
    let clients = sorted_clients(topo);
    if clients.is_empty() {
        return Err(ProtocolError::NoClients);
    }
    let services = sorted_services(topo);
    let service_index: BTreeMap<&str, usize> = services
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.0.as_str(), i))
        .collect();
    let mut sim = Simulator::new(topo, queue_sizes, opts)?;

    let mut reply_msgs: Vec<(u64, usize, usize)> = Vec::new();
    let mut rounds = 0u32;
    let mut replies_sent = 0u64;
    let mut terminated = false;

    for round in 0..cfg.round_cap {
        let qt = round as u64 * cfg.timeout_ns;
        sim.run_until(qt);

        // What each client knows when its query goes out.
        let known: Vec<BTreeSet<usize>> = (0..clients.len())
            .map(|ci| {
                reply_msgs
                    .iter()
                    .filter(|&&(id, c, _)| {
                        c == ci && sim.delivered_at(id).is_some_and(|t| t <= qt)
                    })
                    .map(|&(_, _, si)| si)
                    .collect()
            })
            .collect();

        rounds = round + 1;
        let sources: Vec<(NodeId, u64)> = clients.iter().map(|c| (c.clone(), qt)).collect();
        let receipts = sim.inject_multicast_batch(&sources)?;
        let batch_base = receipts.iter().map(|&(m, _, _)| m).min().unwrap_or(0);
        for (msg, service, at) in &receipts {
            let ci = (msg - batch_base) as usize;
            let si = service_index[service.0.as_str()];
            if known[ci].contains(&si) {
                continue; // listed in the query; stays silent
            }
            let id = sim.inject(MessageSpec {
                inject_ns: *at,
                src: service.clone(),
                dst: Dest::Node(clients[ci].clone()),
                kind: MessageKind::UnicastReply,
                size_bytes: cfg.reply_bytes.unwrap_or(services[si].1),
            })?;
            reply_msgs.push((id, ci, si));
            replies_sent += 1;
        }

        sim.run_until(qt + cfg.timeout_ns);
        let mut newly: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(id, ci, si) in &reply_msgs {
            if !known[ci].contains(&si)
                && sim
                    .delivered_at(id)
                    .is_some_and(|t| t <= qt + cfg.timeout_ns)
            {
                newly.insert((ci, si));
            }
        }
        if newly.is_empty() {
            terminated = true;
            break;
        }
    }
    if !terminated {
        return Err(ProtocolError::NonTerminating(cfg.round_cap));
    }

    sim.run_to_quiescence();
    Ok(close_out(
        sim,
        &reply_msgs,
        clients.len() * services.len(),
        rounds,
        Some(cfg.timeout_ns),
        replies_sent,
    ))
}

/// Smallest interval on a quarter-tsom grid for which paced discovery
/// drops nothing, found by exponential bracketing plus bisection over the
/// monotone drop predicate. `None` when even fully separated bursts drop
/// (possible with undersized queues).
pub fn min_zero_drop_interval(
    topo: &Topology,
    queue_sizes: &BTreeMap<RouterId, usize>,
    p: &MessageParams,
    opts: SimOptions,
) -> Result<Option<u64>, ProtocolError> {
    let tsom = message_time_ns(p);
    if tsom == 0 {
        return Err(ProtocolError::ZeroTsom);
    }
    let grid = (tsom / 4).max(1);
    let total_services = topo.services().count() as u64;
    let bound_ns = 4 * (total_services + topo.routers.len() as u64 + 8) * tsom;

    let clean = |interval_ns: u64| -> Result<bool, ProtocolError> {
        let (m, _) = run_paced_with(
            topo,
            queue_sizes,
            &PacedConfig::new(interval_ns),
            opts.clone(),
        )?;
        Ok(m.dropped == 0)
    };

    if clean(0)? {
        return Ok(Some(0));
    }
    let mut hi = grid;
    while !clean(hi)? {
        hi = hi.saturating_mul(2);
        if hi > bound_ns {
            return Ok(None);
        }
    }
    let mut lo_mult = 0u64; // largest known dropping multiple
    let mut hi_mult = hi.div_ceil(grid); // clean
    while hi_mult - lo_mult > 1 {
        let mid = lo_mult + (hi_mult - lo_mult) / 2;
        if clean(mid * grid)? {
            hi_mult = mid;
        } else {
            lo_mult = mid;
        }
    }
    Ok(Some(hi_mult * grid))
}
