//! Computes per-router sending-queue sizes, candidate routers, overlap
//! space, gap slots, and the inter-burst interval for both wiring
//! disciplines.
//!
//! All interval arithmetic happens in whole message-time slots (`tsom`,
//! the time to send one message) and is converted to nanoseconds at the
//! end, so a fixed-rounding tsom yields intervals that are exact multiples
//! of the rounding step.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::sim::{self, Dest, MessageKind, MessageSpec, SimOptions};
use crate::time::{round_up_to, serialization_ns};
use crate::topology::{Configuration, RouterId, Topology, TopologyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsomRounding {
    Exact,
    Fixed { step_ns: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageParams {
    pub message_bytes: u64,
    pub bandwidth_bps: u64,
    pub rounding: TsomRounding,
}

impl MessageParams {
    pub fn new(message_bytes: u64, bandwidth_bps: u64, rounding: TsomRounding) -> Self {
        MessageParams {
            message_bytes,
            bandwidth_bps,
            rounding,
        }
    }
}

/// Time to send one message under `p`, in nanoseconds.
pub fn message_time_ns(p: &MessageParams) -> u64 {
    let exact = serialization_ns(p.message_bytes, p.bandwidth_bps);
    match p.rounding {
        TsomRounding::Exact => exact,
        TsomRounding::Fixed { step_ns } => round_up_to(exact, step_ns),
    }
}

/// Aggregate message parameters of a topology: average service message
/// size over the average router-link bandwidth.
pub fn derive_params(topo: &Topology, rounding: TsomRounding) -> Result<MessageParams, PlanError> {
    let sizes: Vec<u64> = topo.services().filter_map(|s| s.message_bytes).collect();
    if sizes.is_empty() {
        return Err(PlanError::NoServices);
    }
    let message_bytes = sizes.iter().sum::<u64>() / sizes.len() as u64;
    let bandwidth_bps = topo.default_access_bandwidth();
    Ok(MessageParams {
        message_bytes,
        bandwidth_bps,
        rounding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub queue_sizes: BTreeMap<RouterId, usize>,
    pub candidates: Vec<RouterId>,
    pub chosen: RouterId,
    /// Burst-overlap slots granted by the heavy neighbor's spare queue
    /// space (decentralized), or the chosen router's locally served
    /// service count (centralized) — the subtrahend of the interval rule.
    pub overlap_space: u64,
    pub gap_slots: u64,
    pub best_interval_ns: u64,
    pub tsom_ns: u64,
    pub max_message_time_ns: u64,
    /// Centralized only: fill time for the heaviest leaf's burst to reach
    /// the root, which motivates the root queue rule.
    pub root_fill_time_ns: Option<u64>,
}

impl Plan {
    pub fn best_interval_slots(&self) -> u64 {
        self.best_interval_ns / self.tsom_ns.max(1)
    }

    /// Simulator options aligned with this plan's message-time slot.
    pub fn sim_options(&self) -> crate::sim::SimOptions {
        crate::sim::SimOptions {
            tsom_quantum_ns: Some(self.tsom_ns),
            flood_slot_ns: Some(self.tsom_ns),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("operation requires a decentralized topology")]
    WrongConfigurationDecentralized,
    #[error("operation requires a centralized topology")]
    WrongConfigurationCentralized,
    #[error("topology has no clients")]
    NoClients,
    #[error("topology has no services")]
    NoServices,
    #[error("router `{0}` hosts no clients")]
    NoClientsAtRouter(RouterId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("simulation failed: {0}")]
    Sim(#[from] sim::SimError),
    #[error("per-router node count must be at least 1")]
    EmptyRouters,
}

/// Sending-queue sizes for a decentralized network: services-only routers
/// get their service count plus two, bare transit routers get two, and
/// mixed routers get clients + services + one.
pub fn queue_sizes_decentralized(
    topo: &Topology,
) -> Result<BTreeMap<RouterId, usize>, PlanError> {
    if !matches!(topo.configuration, Configuration::Decentralized) {
        return Err(PlanError::WrongConfigurationDecentralized);
    }
    let mut sizes = BTreeMap::new();
    for (i, r) in topo.routers.iter().enumerate() {
        let clients = topo.clients_attached(i);
        let services = topo.services_attached(i);
        let size = match (clients, services) {
            (0, 0) => 2,
            (0, s) => s + 2,
            (c, s) => c + s + 1,
        };
        sizes.insert(r.clone(), size);
    }
    Ok(sizes)
}

/// Sending-queue sizes for a centralized network: the root absorbs the
/// whole burst minus what the heaviest leaf delivers while the root is
/// already forwarding; every other router holds its own clients plus
/// services.
pub fn queue_sizes_centralized(topo: &Topology) -> Result<BTreeMap<RouterId, usize>, PlanError> {
    let root = match &topo.configuration {
        Configuration::Centralized { root } => root.clone(),
        _ => return Err(PlanError::WrongConfigurationCentralized),
    };
    let n = topo.services().count();
    if n == 0 {
        return Err(PlanError::NoServices);
    }
    let largest = heaviest_service_router(topo).expect("n > 0");
    let rlarge_sn = topo.services_attached(largest);
    let root_size = (n as i64 - rlarge_sn as i64 - (rlarge_sn as i64 - 1)).max(1) as usize;
    let mut sizes = BTreeMap::new();
    for (i, r) in topo.routers.iter().enumerate() {
        if *r == root {
            sizes.insert(r.clone(), root_size);
        } else {
            sizes.insert(
                r.clone(),
                topo.clients_attached(i) + topo.services_attached(i),
            );
        }
    }
    Ok(sizes)
}

/// Router with the most directly attached services; ties go to the
/// smallest id. `None` when the topology has no services.
fn heaviest_service_router(topo: &Topology) -> Option<usize> {
    (0..topo.routers.len())
        .map(|i| (i, topo.services_attached(i)))
        .filter(|&(_, s)| s > 0)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
}

fn client_routers(topo: &Topology) -> Vec<usize> {
    (0..topo.routers.len())
        .filter(|&i| topo.clients_attached(i) > 0)
        .collect()
}

/// Candidate routers for a decentralized network. Union of:
/// the router hosting the client of the longest client-service path; the
/// router with the most clients that receives the most services from one
/// side; client-bearing routers nearest a leaf of the router tree; and,
/// for any selected router hosting a single client, its nearest other
/// client-bearing router.
pub fn candidate_routers_decentralized(topo: &Topology) -> Result<Vec<RouterId>, PlanError> {
    if !matches!(topo.configuration, Configuration::Decentralized) {
        return Err(PlanError::WrongConfigurationDecentralized);
    }
    let with_clients = client_routers(topo);
    if with_clients.is_empty() {
        return Err(PlanError::NoClients);
    }
    let mut picked: Vec<usize> = Vec::new();

    // Longest client-service path; may fail when there are no services.
    if let Ok((client, _, _)) = topo.longest_client_service_path() {
        let host = topo
            .router_index(&topo.node(&client).unwrap().attached_to)
            .unwrap();
        picked.push(host);
    }

    // Most clients, receiving the most services from one side.
    let rule2 = with_clients
        .iter()
        .copied()
        .max_by(|&a, &b| {
            let ka = (topo.clients_attached(a), larger_side_services(topo, a));
            let kb = (topo.clients_attached(b), larger_side_services(topo, b));
            ka.cmp(&kb).then(b.cmp(&a))
        })
        .unwrap();
    picked.push(rule2);

    // Client-bearing routers nearest the ends of the network.
    let adj = topo.router_adjacency();
    let leaf_dist: Vec<usize> = (0..topo.routers.len())
        .map(|i| {
            let dist = topo.router_distances(i);
            (0..topo.routers.len())
                .filter(|&j| adj[j].len() <= 1)
                .map(|j| dist[j])
                .min()
                .unwrap_or(0)
        })
        .collect();
    let best_leaf_dist = with_clients.iter().map(|&i| leaf_dist[i]).min().unwrap();
    picked.extend(
        with_clients
            .iter()
            .copied()
            .filter(|&i| leaf_dist[i] == best_leaf_dist),
    );

    // Single-client routers pull in their nearest client-bearing peer.
    for r in picked.clone() {
        if topo.clients_attached(r) == 1 {
            if let Some(peer) = nearest_other_client_router(topo, r, 1) {
                picked.push(peer);
            }
        }
    }

    picked.sort_unstable();
    picked.dedup();
    Ok(picked.into_iter().map(|i| topo.routers[i].clone()).collect())
}

fn larger_side_services(topo: &Topology, router: usize) -> usize {
    topo.split_parts(&topo.routers[router])
        .map(|(l, _)| l)
        .unwrap_or(0)
}

fn nearest_other_client_router(
    topo: &Topology,
    from: usize,
    min_clients: usize,
) -> Option<usize> {
    let dist = topo.router_distances(from);
    (0..topo.routers.len())
        .filter(|&i| i != from && topo.clients_attached(i) >= min_clients)
        .min_by_key(|&i| (dist[i], i))
}

/// Candidate routers for a centralized network: the router receiving the
/// largest number of clients (ties: most services received, then id);
/// when it hosts a single client, also the nearest router with two or
/// more clients.
pub fn candidate_routers_centralized(topo: &Topology) -> Result<Vec<RouterId>, PlanError> {
    if !matches!(topo.configuration, Configuration::Centralized { .. }) {
        return Err(PlanError::WrongConfigurationCentralized);
    }
    let with_clients = client_routers(topo);
    if with_clients.is_empty() {
        return Err(PlanError::NoClients);
    }
    let n = topo.services().count();
    let primary = with_clients
        .iter()
        .copied()
        .max_by(|&a, &b| {
            let ka = (topo.clients_attached(a), n - topo.services_attached(a));
            let kb = (topo.clients_attached(b), n - topo.services_attached(b));
            ka.cmp(&kb).then(b.cmp(&a))
        })
        .unwrap();
    let mut picked = vec![primary];
    if topo.clients_attached(primary) == 1 {
        if let Some(peer) = nearest_other_client_router(topo, primary, 2) {
            picked.push(peer);
        }
    }
    picked.sort_unstable();
    picked.dedup();
    Ok(picked.into_iter().map(|i| topo.routers[i].clone()).collect())
}

/// One branch hanging off a router: the component, its service total, and
/// the adjacent router inside it.
struct Branch {
    services: usize,
    neighbor: usize,
    members: BTreeSet<usize>,
}

fn branches_at(topo: &Topology, router: usize) -> Vec<Branch> {
    let adj = topo.router_adjacency();
    topo.components_without(router)
        .into_iter()
        .map(|comp| {
            let neighbor = adj[router]
                .iter()
                .map(|&(v, _)| v)
                .find(|v| comp.contains(v))
                .expect("component touches the removed router");
            Branch {
                services: comp.iter().map(|&i| topo.services_attached(i)).sum(),
                neighbor,
                members: comp.into_iter().collect(),
            }
        })
        .collect()
}

/// Spare queue slots granted by a branch's first router, spread over every
/// client whose bursts transit that router's channel — all clients hosted
/// outside the branch.
fn branch_overlap(
    topo: &Topology,
    sizes: &BTreeMap<RouterId, usize>,
    branch: &Branch,
) -> u64 {
    let sharing: usize = (0..topo.routers.len())
        .filter(|r| !branch.members.contains(r))
        .map(|r| topo.clients_attached(r))
        .sum();
    let sq = sizes[&topo.routers[branch.neighbor]];
    let spare = sq.saturating_sub(topo.services_attached(branch.neighbor));
    (spare / sharing.max(1)) as u64
}

/// Overlap slots at the heavy-side neighbor of `chosen`: the spare left in
/// its sending queue after its own services, spread over the clients on
/// `chosen`'s side of that link.
pub fn overlap_space(topo: &Topology, chosen: &RouterId) -> Result<u64, PlanError> {
    let sizes = queue_sizes_decentralized(topo)?;
    let ci = topo
        .router_index(chosen)
        .ok_or_else(|| PlanError::Topology(TopologyError::Invariant(format!(
            "unknown router `{chosen}`"
        ))))?;
    if topo.clients_attached(ci) == 0 {
        return Err(PlanError::NoClientsAtRouter(chosen.clone()));
    }
    let branches = branches_at(topo, ci);
    let Some(heavy) = branches.iter().max_by(|a, b| {
        a.services
            .cmp(&b.services)
            .then(b.neighbor.cmp(&a.neighbor))
    }) else {
        return Ok(0);
    };
    Ok(branch_overlap(topo, &sizes, heavy))
}

/// Idle message-time slots at `chosen` while a single synchronized burst's
/// pipeline fills: every service emits one message at t=0 toward the
/// chosen router's first client, queues uncapped, and we count the slots
/// up to the last transit arrival in which nothing arrives over a router
/// link. Locally attached services arrive over access links and do not
/// figure in the count.
pub fn gap_slots(
    topo: &Topology,
    chosen: &RouterId,
    p: &MessageParams,
) -> Result<u64, PlanError> {
    let ci = topo
        .router_index(chosen)
        .ok_or_else(|| PlanError::Topology(TopologyError::Invariant(format!(
            "unknown router `{chosen}`"
        ))))?;
    let target = topo
        .clients()
        .find(|c| topo.router_index(&c.attached_to) == Some(ci));
    let Some(target) = target else {
        return Ok(0);
    };
    let tsom = message_time_ns(p);
    let workload: Vec<MessageSpec> = topo
        .services()
        .map(|s| MessageSpec {
            inject_ns: 0,
            src: s.id.clone(),
            dst: Dest::Node(target.id.clone()),
            kind: MessageKind::UnicastReply,
            size_bytes: s.message_bytes.unwrap_or(p.message_bytes),
        })
        .collect();
    if workload.is_empty() {
        return Ok(0);
    }
    let trace = sim::run(
        topo,
        &workload,
        &sim::uniform_queue_sizes(topo, usize::MAX),
        SimOptions {
            tsom_quantum_ns: Some(tsom),
            flood_slot_ns: None,
        },
    )?;
    // Transit arrivals at `chosen` are enqueues on its outgoing channels
    // for messages whose source is attached elsewhere.
    let prefix = format!("{chosen}->");
    let mut slots: Vec<u64> = Vec::new();
    for e in &trace.events {
        if e.kind != crate::sim::EventKind::Enqueue || !e.location.starts_with(&prefix) {
            continue;
        }
        let (src, _) = trace.message_endpoints(e.msg_id);
        let src_router = topo
            .node(&crate::topology::NodeId(src.to_string()))
            .map(|n| topo.router_index(&n.attached_to).unwrap());
        if src_router == Some(ci) {
            continue;
        }
        slots.push(e.time_ns.div_ceil(tsom));
    }
    let Some(&last) = slots.iter().max() else {
        return Ok(0);
    };
    let present: std::collections::BTreeSet<u64> = slots.into_iter().collect();
    Ok((1..=last).filter(|s| !present.contains(s)).count() as u64)
}

fn max_message_time_ns(topo: &Topology, p: &MessageParams) -> u64 {
    let min_bw = topo
        .links
        .iter()
        .map(|l| l.bandwidth_bps)
        .min()
        .unwrap_or_else(|| topo.default_access_bandwidth());
    let worst_bytes = topo
        .services()
        .filter_map(|s| s.message_bytes)
        .max()
        .unwrap_or(p.message_bytes);
    let exact = serialization_ns(worst_bytes, min_bw);
    match p.rounding {
        TsomRounding::Exact => exact,
        TsomRounding::Fixed { step_ns } => round_up_to(exact, step_ns),
    }
}

/// Interval rule for one decentralized router, in slots: per branch,
/// `branch services + gaps - max-message-slot - branch overlap`, clamped
/// at zero; the worst branch governs.
fn decentralized_slots_for(
    topo: &Topology,
    sizes: &BTreeMap<RouterId, usize>,
    router: usize,
    p: &MessageParams,
    txj_slots: u64,
) -> Result<u64, PlanError> {
    let id = &topo.routers[router];
    let gaps = gap_slots(topo, id, p)? as i64;
    let mut worst = 0u64;
    for branch in branches_at(topo, router) {
        let os = branch_overlap(topo, sizes, &branch) as i64;
        let slots = (branch.services as i64 + gaps - txj_slots as i64 - os).max(0) as u64;
        worst = worst.max(slots);
    }
    Ok(worst)
}

pub fn best_interval_decentralized(
    topo: &Topology,
    p: &MessageParams,
) -> Result<Plan, PlanError> {
    let queue_sizes = queue_sizes_decentralized(topo)?;
    let candidates = candidate_routers_decentralized(topo)?;
    let tsom = message_time_ns(p);
    let txj = max_message_time_ns(topo, p);
    let txj_slots = txj.div_ceil(tsom).max(1);

    // Every client-bearing router is evaluated; the longest interval
    // protects the rest.
    let mut best_slots = 0u64;
    for r in client_routers(topo) {
        best_slots = best_slots.max(decentralized_slots_for(topo, &queue_sizes, r, p, txj_slots)?);
    }
    let mut chosen = candidates[0].clone();
    let mut chosen_slots = 0u64;
    for c in &candidates {
        let idx = topo.router_index(c).unwrap();
        let s = decentralized_slots_for(topo, &queue_sizes, idx, p, txj_slots)?;
        if s > chosen_slots {
            chosen_slots = s;
            chosen = c.clone();
        }
    }
    let overlap = overlap_space(topo, &chosen)?;
    let gaps = gap_slots(topo, &chosen, p)?;
    Ok(Plan {
        queue_sizes,
        candidates,
        chosen,
        overlap_space: overlap,
        gap_slots: gaps,
        best_interval_ns: best_slots * tsom,
        tsom_ns: tsom,
        max_message_time_ns: txj,
        root_fill_time_ns: None,
    })
}

pub fn best_interval_centralized(topo: &Topology, p: &MessageParams) -> Result<Plan, PlanError> {
    let queue_sizes = queue_sizes_centralized(topo)?;
    let candidates = candidate_routers_centralized(topo)?;
    let n = topo.services().count() as i64;
    let tsom = message_time_ns(p);
    let txj = max_message_time_ns(topo, p);
    let txj_slots = txj.div_ceil(tsom).max(1) as i64;

    let slots_for = |router: usize| -> Result<u64, PlanError> {
        let id = &topo.routers[router];
        let gaps = gap_slots(topo, id, p)? as i64;
        let own = topo.services_attached(router) as i64;
        Ok((n + gaps - txj_slots - own).max(0) as u64)
    };

    let mut best_slots = 0u64;
    for r in client_routers(topo) {
        best_slots = best_slots.max(slots_for(r)?);
    }
    let mut chosen = candidates[0].clone();
    let mut chosen_slots = 0u64;
    for c in &candidates {
        let s = slots_for(topo.router_index(c).unwrap())?;
        if s > chosen_slots {
            chosen_slots = s;
            chosen = c.clone();
        }
    }
    let chosen_idx = topo.router_index(&chosen).unwrap();
    let rlarge_sn = heaviest_service_router(topo)
        .map(|i| topo.services_attached(i))
        .unwrap_or(0) as u64;
    Ok(Plan {
        queue_sizes,
        candidates,
        chosen: chosen.clone(),
        overlap_space: topo.services_attached(chosen_idx) as u64,
        gap_slots: gap_slots(topo, &chosen, p)?,
        best_interval_ns: best_slots * tsom,
        tsom_ns: tsom,
        max_message_time_ns: txj,
        root_fill_time_ns: Some((txj_slots as u64 + rlarge_sn) * tsom),
    })
}

/// Dispatches on the declared configuration.
pub fn plan(topo: &Topology, p: &MessageParams) -> Result<Plan, PlanError> {
    match topo.configuration {
        Configuration::Decentralized => best_interval_decentralized(topo, p),
        Configuration::Centralized { .. } => best_interval_centralized(topo, p),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCell {
    pub routers: usize,
    pub per_router: usize,
    /// Clients plus services across the network.
    pub network_size: usize,
    pub interval_slots: u64,
}

/// Interval grid for uniform chains: `per_router` clients and services on
/// every router of a chain, interval reported in tsom units.
pub fn interval_table(
    router_counts: &[usize],
    per_router: &[usize],
    p: &MessageParams,
) -> Result<Vec<TableCell>, PlanError> {
    let mut cells = Vec::new();
    for &m in per_router {
        if m == 0 {
            return Err(PlanError::EmptyRouters);
        }
        for &r in router_counts {
            if r == 0 {
                return Err(PlanError::EmptyRouters);
            }
            let topo = uniform_chain(r, m, m, p);
            let plan = best_interval_decentralized(&topo, p)?;
            cells.push(TableCell {
                routers: r,
                per_router: m,
                network_size: 2 * m * r,
                interval_slots: plan.best_interval_slots(),
            });
        }
    }
    Ok(cells)
}

fn uniform_chain(routers: usize, clients: usize, services: usize, p: &MessageParams) -> Topology {
    let mut text = String::from("config decentralized\n");
    for i in 0..routers {
        text.push_str(&format!("router R{i:02}\n"));
    }
    for i in 0..routers.saturating_sub(1) {
        text.push_str(&format!(
            "link R{i:02} R{:02} {} 0\n",
            i + 1,
            p.bandwidth_bps
        ));
    }
    for i in 0..routers {
        for k in 0..clients {
            text.push_str(&format!("client c{i:02}x{k:02} R{i:02}\n"));
        }
        for k in 0..services {
            text.push_str(&format!(
                "service s{i:02}x{k:02} R{i:02} {}\n",
                p.message_bytes
            ));
        }
    }
    Topology::parse(&text).expect("generated chain is valid")
}
