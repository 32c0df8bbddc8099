//! Deterministic discrete-event engine: finite-bandwidth links, drop-tail
//! FIFO sending queues on router-to-router links, store-and-forward
//! routing, and full event tracing.
//!
//! Model outline:
//!
//! * Every link is a pair of directed channels. A channel transmits one
//!   message at a time (`size * 8 / bandwidth`, rounded up to the optional
//!   slot quantum) and then imposes its propagation delay.
//! * A router-to-router channel buffers at most the sending router's
//!   prescribed queue size; arrivals to a full buffer are dropped and
//!   recorded. The message in transmission does not occupy a buffer slot.
//! * Channels to and from end nodes are unbounded: end nodes pace their
//!   own sending, and client/service processing is infinitely fast, so a
//!   delivery backlog models receive pacing rather than router buffering.
//!   Drops therefore happen between routers, which is also where
//!   [`peak_occupancy`](SimTrace::peak_occupancy) is measured.
//! * Multicast queries are small control messages: they never occupy data
//!   buffers, but their replication is paced. A router emits one copy per
//!   flood slot towards its router branches (ascending router id, skipping
//!   the inbound branch), and each member's access link carries one copy
//!   per slot, so a query wavefront staggers exactly like a
//!   store-and-forward flood of back-to-back copies.
//!
//! Determinism: the event queue orders ties by (kind, location id,
//! message id, sequence number), so identical inputs produce byte-identical
//! traces.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::time::{format_secs, round_up_to, serialization_ns};
use crate::topology::{Endpoint, NodeId, NodeKind, RouterId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    MulticastQuery,
    UnicastReply,
    BackTraffic,
}

/// Destination of an injected message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dest {
    Node(NodeId),
    /// The all-services multicast group.
    Services,
}

#[derive(Debug, Clone)]
pub struct MessageSpec {
    pub inject_ns: u64,
    pub src: NodeId,
    pub dst: Dest,
    pub kind: MessageKind,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Round every serialization time up to a multiple of this quantum.
    pub tsom_quantum_ns: Option<u64>,
    /// Pacing unit for multicast replication; required to inject queries.
    pub flood_slot_ns: Option<u64>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("queue size missing for router `{0}`")]
    MissingQueueSize(RouterId),
    #[error("unknown node `{0}` in workload")]
    UnknownNode(NodeId),
    #[error("multicast messages must be injected as a multicast batch")]
    MulticastInject,
    #[error("multicast injected without a flood slot configured")]
    NoFloodSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Send,
    Enqueue,
    BeginTransmit,
    Deliver,
    Drop,
}

impl EventKind {
    fn label(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Enqueue => "enqueue",
            EventKind::BeginTransmit => "begin_transmit",
            EventKind::Deliver => "deliver",
            EventKind::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimEvent {
    pub time_ns: u64,
    pub kind: EventKind,
    pub msg_id: u64,
    /// Node or channel label the event happened at.
    pub location: String,
}

/// Final counters of one run. `sent` counts multicast copies per group
/// member, so `sent == delivered + dropped` holds at quiescence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub drops_per_link: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub events: Vec<SimEvent>,
    pub counters: Counters,
    msg_src_dst: Vec<(String, String)>,
    peaks: BTreeMap<String, usize>,
}

impl SimTrace {
    /// Maximum simultaneous sending-queue occupancy observed per router
    /// (over its capped router-to-router channels).
    pub fn peak_occupancy(&self) -> &BTreeMap<String, usize> {
        &self.peaks
    }

    /// Source and destination labels of a message in this trace.
    pub fn message_endpoints(&self, msg_id: u64) -> (&str, &str) {
        let (src, dst) = &self.msg_src_dst[msg_id as usize];
        (src, dst)
    }

    /// One event per line: `time kind msg_id src dst location`, followed by
    /// `key=value` counter lines. Bit-exact across identical runs.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let (src, dst) = &self.msg_src_dst[e.msg_id as usize];
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                format_secs(e.time_ns),
                e.kind.label(),
                e.msg_id,
                src,
                dst,
                e.location
            ));
        }
        out.push_str(&format!("sent={}\n", self.counters.sent));
        out.push_str(&format!("delivered={}\n", self.counters.delivered));
        out.push_str(&format!("dropped={}\n", self.counters.dropped));
        for (link, n) in &self.counters.drops_per_link {
            out.push_str(&format!("dropped[{link}]={n}\n"));
        }
        for (router, peak) in &self.peaks {
            out.push_str(&format!("peak_queue[{router}]={peak}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    /// Transmitter on a channel finished; start the next transmission.
    TxDone { ch: usize },
    /// Message physically arrives at the receiving end of a channel.
    Arrive { ch: usize, msg: usize },
    /// Unicast message leaves its source end node.
    Inject { msg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scheduled {
    time: u64,
    rank: u8,
    loc: usize,
    msg: u64,
    seq: u64,
    action: Action,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.rank, self.loc, self.msg, self.seq).cmp(&(
            other.time,
            other.rank,
            other.loc,
            other.msg,
            other.seq,
        ))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Channel {
    label: String,
    to: usize,
    bandwidth_bps: u64,
    delay_ns: u64,
    cap: usize,
    queue: VecDeque<usize>,
    busy: bool,
    peak: usize,
    /// Router whose sending queue this is, when capped.
    owner_router: Option<usize>,
}

struct MessageState {
    spec: MessageSpec,
    src_idx: usize,
    /// Node index for unicast destinations.
    target: Option<usize>,
    delivered_ns: Option<u64>,
}

/// Index space: routers first (sorted by id), then end nodes (sorted by id).
pub struct Simulator {
    node_names: Vec<String>,
    n_routers: usize,
    channels: Vec<Channel>,
    /// [from_node] -> (adjacent node -> channel index).
    out_channel: Vec<BTreeMap<usize, usize>>,
    /// [router][target_router] -> next router on the unique path.
    next_router: Vec<Vec<usize>>,
    attached_router: Vec<usize>,
    service_members: Vec<usize>,
    heap: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    now: u64,
    messages: Vec<MessageState>,
    events: Vec<SimEvent>,
    counters: Counters,
    opts: SimOptions,
    /// Multicast replication pacing, per router.
    replicator_free: Vec<u64>,
    /// Access-link pacing for multicast member copies, per node.
    member_free: Vec<u64>,
    node_index: BTreeMap<String, usize>,
}

impl fmt::Debug for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator")
            .field("now", &self.now)
            .field("messages", &self.messages.len())
            .finish()
    }
}

impl Simulator {
    pub fn new(
        topo: &Topology,
        queue_sizes: &BTreeMap<RouterId, usize>,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        let n_routers = topo.routers.len();
        let mut node_names: Vec<String> = topo.routers.iter().map(|r| r.0.clone()).collect();
        let mut kinds: Vec<Option<NodeKind>> = vec![None; n_routers];
        let mut attached_router = vec![usize::MAX; n_routers];
        for e in &topo.end_nodes {
            node_names.push(e.id.0.clone());
            kinds.push(Some(e.kind));
            attached_router.push(topo.router_index(&e.attached_to).unwrap());
        }
        let node_index: BTreeMap<String, usize> = node_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();

        for r in &topo.routers {
            if !queue_sizes.contains_key(r) {
                return Err(SimError::MissingQueueSize(r.clone()));
            }
        }

        let mut channels: Vec<Channel> = Vec::new();
        let mut out_channel: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); node_names.len()];
        let add_channel = |channels: &mut Vec<Channel>,
                               out_channel: &mut Vec<BTreeMap<usize, usize>>,
                               from: usize,
                               to: usize,
                               bw: u64,
                               delay: u64,
                               cap: usize,
                               owner: Option<usize>| {
            let idx = channels.len();
            channels.push(Channel {
                label: format!("{}->{}", node_names[from], node_names[to]),
                to,
                bandwidth_bps: bw,
                delay_ns: delay,
                cap,
                queue: VecDeque::new(),
                busy: false,
                peak: 0,
                owner_router: owner,
            });
            out_channel[from].insert(to, idx);
        };

        // Router-router channels, capped by the sending router's queue size.
        for l in &topo.links {
            if let (Endpoint::Router(a), Endpoint::Router(b)) = (&l.a, &l.b) {
                let ai = topo.router_index(a).unwrap();
                let bi = topo.router_index(b).unwrap();
                add_channel(
                    &mut channels,
                    &mut out_channel,
                    ai,
                    bi,
                    l.bandwidth_bps,
                    l.delay_ns,
                    queue_sizes[a],
                    Some(ai),
                );
                add_channel(
                    &mut channels,
                    &mut out_channel,
                    bi,
                    ai,
                    l.bandwidth_bps,
                    l.delay_ns,
                    queue_sizes[b],
                    Some(bi),
                );
            }
        }
        // Access channels, unbounded.
        for (offset, e) in topo.end_nodes.iter().enumerate() {
            let ni = n_routers + offset;
            let ri = attached_router[ni];
            let bw = topo.access_bandwidth(&e.id);
            let delay = topo.access_delay_ns(&e.id);
            add_channel(&mut channels, &mut out_channel, ni, ri, bw, delay, usize::MAX, None);
            add_channel(&mut channels, &mut out_channel, ri, ni, bw, delay, usize::MAX, None);
        }

        // Next-hop tables over the router tree/star.
        let adj = topo.router_adjacency();
        let mut next_router = vec![vec![usize::MAX; n_routers]; n_routers];
        for start in 0..n_routers {
            let mut prev = vec![usize::MAX; n_routers];
            let mut seen = vec![false; n_routers];
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        prev[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            for (target, slot) in next_router[start].iter_mut().enumerate() {
                if target == start {
                    continue;
                }
                let mut hop = target;
                while prev[hop] != start {
                    hop = prev[hop];
                }
                *slot = hop;
            }
        }

        let service_members: Vec<usize> = (n_routers..node_names.len())
            .filter(|&i| kinds[i] == Some(NodeKind::Service))
            .collect();

        Ok(Simulator {
            n_routers,
            channels,
            out_channel,
            next_router,
            attached_router,
            service_members,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            messages: Vec::new(),
            events: Vec::new(),
            counters: Counters::default(),
            opts,
            replicator_free: vec![0; n_routers],
            member_free: vec![0; node_names.len()],
            node_names,
            node_index,
        })
    }

    fn node_idx(&self, id: &NodeId) -> Result<usize, SimError> {
        self.node_index
            .get(&id.0)
            .copied()
            .filter(|&i| i >= self.n_routers)
            .ok_or_else(|| SimError::UnknownNode(id.clone()))
    }

    fn schedule(&mut self, time: u64, rank: u8, loc: usize, msg: u64, action: Action) {
        self.seq += 1;
        self.heap.push(Reverse(Scheduled {
            time,
            rank,
            loc,
            msg,
            seq: self.seq,
            action,
        }));
    }

    fn record(&mut self, time_ns: u64, kind: EventKind, msg: usize, location: String) {
        self.events.push(SimEvent {
            time_ns,
            kind,
            msg_id: msg as u64,
            location,
        });
    }

    fn ser_ns(&self, ch: usize, msg: usize) -> u64 {
        let base = serialization_ns(
            self.messages[msg].spec.size_bytes,
            self.channels[ch].bandwidth_bps,
        );
        match self.opts.tsom_quantum_ns {
            Some(q) => round_up_to(base, q),
            None => base,
        }
    }

    /// Queue a unicast message for injection at its send time.
    pub fn inject(&mut self, spec: MessageSpec) -> Result<u64, SimError> {
        let src_idx = self.node_idx(&spec.src)?;
        let target = match &spec.dst {
            Dest::Node(id) => self.node_idx(id)?,
            Dest::Services => return Err(SimError::MulticastInject),
        };
        let id = self.messages.len();
        let t = spec.inject_ns;
        self.messages.push(MessageState {
            spec,
            src_idx,
            target: Some(target),
            delivered_ns: None,
        });
        self.counters.sent += 1;
        self.schedule(t, 1, src_idx, id as u64, Action::Inject { msg: id });
        Ok(id as u64)
    }

    /// Injects one multicast query per entry of `sources` (expanded in
    /// event-time order) and returns each copy's receipt, as
    /// `(msg_id, service_id, receipt_ns)`.
    ///
    /// The flood shares no state with the data plane, so its timing is
    /// known at injection; trace deliver events are still emitted at the
    /// right simulated times.
    pub fn inject_multicast_batch(
        &mut self,
        sources: &[(NodeId, u64)],
    ) -> Result<Vec<(u64, NodeId, u64)>, SimError> {
        let slot = self.opts.flood_slot_ns.ok_or(SimError::NoFloodSlot)?;
        let mut wavefront: BinaryHeap<Reverse<Scheduled>> = BinaryHeap::new();
        let mut wseq = 0u64;
        let mut push_wave = |wavefront: &mut BinaryHeap<Reverse<Scheduled>>,
                             time: u64,
                             router: usize,
                             msg: usize,
                             from: usize| {
            wseq += 1;
            wavefront.push(Reverse(Scheduled {
                time,
                rank: 2,
                loc: router,
                msg: msg as u64,
                seq: wseq,
                // `ch` doubles as the inbound router (+1) here; 0 = none.
                action: Action::Arrive { ch: from, msg },
            }));
        };

        for (src, t) in sources {
            let si = self.node_idx(src)?;
            let id = self.messages.len();
            self.messages.push(MessageState {
                spec: MessageSpec {
                    inject_ns: *t,
                    src: src.clone(),
                    dst: Dest::Services,
                    kind: MessageKind::MulticastQuery,
                    size_bytes: 1,
                },
                src_idx: si,
                target: None,
                delivered_ns: None,
            });
            let group = self
                .service_members
                .iter()
                .filter(|&&m| m != si)
                .count() as u64;
            self.counters.sent += group;
            self.record(*t, EventKind::Send, id, self.node_names[si].clone());
            let router = self.attached_router[si];
            let access_delay = self.channels[self.out_channel[si][&router]].delay_ns;
            push_wave(&mut wavefront, t + slot + access_delay, router, id, 0);
        }

        let mut receipts = Vec::new();
        while let Some(Reverse(ev)) = wavefront.pop() {
            let Action::Arrive { ch: from_plus_1, msg } = ev.action else {
                unreachable!()
            };
            let router = ev.loc;
            let t = ev.time;
            // Member copies: paced per access link, parallel across links.
            let members: Vec<usize> = self
                .service_members
                .iter()
                .copied()
                .filter(|&m| self.attached_router[m] == router && m != self.messages[msg].src_idx)
                .collect();
            for m in members {
                let access_delay = self.channels[self.out_channel[router][&m]].delay_ns;
                let start = self.member_free[m].max(t);
                self.member_free[m] = start + slot;
                let delivery = start + slot + access_delay;
                self.record(delivery, EventKind::Deliver, msg, self.node_names[m].clone());
                self.counters.delivered += 1;
                let prev = self.messages[msg].delivered_ns;
                self.messages[msg].delivered_ns = Some(prev.map_or(delivery, |d| d.max(delivery)));
                receipts.push((msg as u64, NodeId(self.node_names[m].clone()), delivery));
            }
            // Router branches, ascending router id, skipping the inbound one.
            let branches: Vec<usize> = (0..self.n_routers)
                .filter(|&r| {
                    r != router
                        && r + 1 != from_plus_1
                        && self.next_router[router][r] == r
                })
                .collect();
            if branches.is_empty() {
                continue;
            }
            let start = self.replicator_free[router].max(t);
            self.replicator_free[router] = start + branches.len() as u64 * slot;
            for (j, nbr) in branches.iter().enumerate() {
                let link_delay = self.channels[self.out_channel[router][nbr]].delay_ns;
                let arrival = start + (j as u64 + 1) * slot + link_delay;
                push_wave(&mut wavefront, arrival, *nbr, msg, router + 1);
            }
        }
        receipts.sort_by(|a, b| (a.2, a.0, &a.1 .0).cmp(&(b.2, b.0, &b.1 .0)));
        Ok(receipts)
    }

    fn enqueue(&mut self, ch: usize, msg: usize, t: u64) {
        if self.channels[ch].queue.len() >= self.channels[ch].cap {
            let label = self.channels[ch].label.clone();
            self.record(t, EventKind::Drop, msg, label.clone());
            self.counters.dropped += 1;
            *self.counters.drops_per_link.entry(label).or_insert(0) += 1;
            return;
        }
        self.channels[ch].queue.push_back(msg);
        let len = self.channels[ch].queue.len();
        if len > self.channels[ch].peak {
            self.channels[ch].peak = len;
        }
        let label = self.channels[ch].label.clone();
        self.record(t, EventKind::Enqueue, msg, label);
        if !self.channels[ch].busy {
            self.begin_transmit(ch, t);
        }
    }

    fn begin_transmit(&mut self, ch: usize, t: u64) {
        let msg = self.channels[ch]
            .queue
            .pop_front()
            .expect("begin_transmit with empty queue");
        self.channels[ch].busy = true;
        let label = self.channels[ch].label.clone();
        self.record(t, EventKind::BeginTransmit, msg, label);
        let ser = self.ser_ns(ch, msg);
        self.schedule(t + ser, 0, ch, msg as u64, Action::TxDone { ch });
        self.schedule(
            t + ser + self.channels[ch].delay_ns,
            1,
            ch,
            msg as u64,
            Action::Arrive { ch, msg },
        );
    }

    fn forward(&mut self, at_router: usize, msg: usize, t: u64) {
        let target = self.messages[msg].target.expect("unicast target");
        let target_router = self.attached_router[target];
        let next = if target_router == at_router {
            target
        } else {
            self.next_router[at_router][target_router]
        };
        let ch = self.out_channel[at_router][&next];
        self.enqueue(ch, msg, t);
    }

    fn handle(&mut self, ev: Scheduled) {
        debug_assert!(ev.time >= self.now, "event time went backwards");
        self.now = ev.time;
        match ev.action {
            Action::Inject { msg } => {
                let src = self.messages[msg].src_idx;
                self.record(ev.time, EventKind::Send, msg, self.node_names[src].clone());
                let router = self.attached_router[src];
                let ch = self.out_channel[src][&router];
                self.enqueue(ch, msg, ev.time);
            }
            Action::TxDone { ch } => {
                self.channels[ch].busy = false;
                if !self.channels[ch].queue.is_empty() {
                    self.begin_transmit(ch, ev.time);
                }
            }
            Action::Arrive { ch, msg } => {
                let to = self.channels[ch].to;
                if to < self.n_routers {
                    self.forward(to, msg, ev.time);
                } else {
                    self.record(ev.time, EventKind::Deliver, msg, self.node_names[to].clone());
                    self.counters.delivered += 1;
                    self.messages[msg].delivered_ns = Some(ev.time);
                }
            }
        }
    }

    /// Runs every scheduled event with `time <= until`.
    pub fn run_until(&mut self, until: u64) {
        while let Some(&Reverse(ev)) = self.heap.peek() {
            if ev.time > until {
                break;
            }
            self.heap.pop();
            self.handle(ev);
        }
    }

    pub fn run_to_quiescence(&mut self) {
        while let Some(Reverse(ev)) = self.heap.pop() {
            self.handle(ev);
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Delivery time of a message, if it has reached its destination (for
    /// multicast, the latest member receipt).
    pub fn delivered_at(&self, msg_id: u64) -> Option<u64> {
        self.messages[msg_id as usize].delivered_ns
    }

    pub fn total_drops(&self) -> u64 {
        self.counters.dropped
    }

    pub fn into_trace(mut self) -> SimTrace {
        self.run_to_quiescence();
        self.events.sort_by(|a, b| {
            (a.time_ns, &a.location, a.msg_id, kind_rank(a.kind)).cmp(&(
                b.time_ns,
                &b.location,
                b.msg_id,
                kind_rank(b.kind),
            ))
        });
        let mut peaks: BTreeMap<String, usize> = BTreeMap::new();
        for r in 0..self.n_routers {
            peaks.insert(self.node_names[r].clone(), 0);
        }
        for c in &self.channels {
            if let Some(owner) = c.owner_router {
                let entry = peaks.get_mut(&self.node_names[owner]).unwrap();
                *entry = (*entry).max(c.peak);
            }
        }
        let msg_src_dst = self
            .messages
            .iter()
            .map(|m| {
                let dst = match &m.spec.dst {
                    Dest::Node(n) => n.0.clone(),
                    Dest::Services => "*services".to_string(),
                };
                (m.spec.src.0.clone(), dst)
            })
            .collect();
        SimTrace {
            events: std::mem::take(&mut self.events),
            counters: std::mem::take(&mut self.counters),
            msg_src_dst,
            peaks,
        }
    }
}

fn kind_rank(k: EventKind) -> u8 {
    match k {
        EventKind::Send => 0,
        EventKind::Enqueue => 1,
        EventKind::BeginTransmit => 2,
        EventKind::Deliver => 3,
        EventKind::Drop => 4,
    }
}

/// Runs a static workload to quiescence.
pub fn run(
    topo: &Topology,
    workload: &[MessageSpec],
    queue_sizes: &BTreeMap<RouterId, usize>,
    opts: SimOptions,
) -> Result<SimTrace, SimError> {
    let mut sim = Simulator::new(topo, queue_sizes, opts)?;
    let mut multicasts = Vec::new();
    for spec in workload {
        match &spec.dst {
            Dest::Services => multicasts.push((spec.src.clone(), spec.inject_ns)),
            Dest::Node(_) => {
                sim.inject(spec.clone())?;
            }
        }
    }
    if !multicasts.is_empty() {
        multicasts.sort_by(|a, b| (a.1, &a.0 .0).cmp(&(b.1, &b.0 .0)));
        sim.inject_multicast_batch(&multicasts)?;
    }
    Ok(sim.into_trace())
}

/// Uniform queue sizing helper, mostly for uncapped dry runs.
pub fn uniform_queue_sizes(topo: &Topology, size: usize) -> BTreeMap<RouterId, usize> {
    topo.routers.iter().map(|r| (r.clone(), size)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn queue_map(topo: &Topology, n: usize) -> BTreeMap<RouterId, usize> {
        uniform_queue_sizes(topo, n)
    }

    fn two_router() -> Topology {
        Topology::parse(
            "config decentralized\n\
             router R0\nrouter R1\n\
             link R0 R1 524288 0\n\
             service s0 R0 128\n\
             client c0 R1\n",
        )
        .unwrap()
    }

    #[test]
    fn single_message_delivery_time_is_exact() {
        let topo = two_router();
        let trace = run(
            &topo,
            &[MessageSpec {
                inject_ns: 0,
                src: NodeId("s0".into()),
                dst: Dest::Node(NodeId("c0".into())),
                kind: MessageKind::UnicastReply,
                size_bytes: 128,
            }],
            &queue_map(&topo, 25),
            SimOptions::default(),
        )
        .unwrap();
        // Three store-and-forward hops of 1/512 s each.
        let deliver = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::Deliver)
            .unwrap();
        assert_eq!(deliver.time_ns, 3 * 1_953_125);
        assert_eq!(trace.counters.sent, 1);
        assert_eq!(trace.counters.delivered, 1);
        assert_eq!(trace.counters.dropped, 0);
        assert!(trace.peak_occupancy().values().all(|&p| p <= 1));
    }

    #[test]
    fn drop_tail_keeps_head_and_drops_overflow() {
        // Five simultaneous arrivals at a capacity-2 sending queue with one
        // output link: one transmitting, two queued, two dropped.
        let topo = Topology::parse(
            "config decentralized\n\
             router R0\nrouter R1\n\
             link R0 R1 524288 0\n\
             service s0 R0 128\nservice s1 R0 128\nservice s2 R0 128\n\
             service s3 R0 128\nservice s4 R0 128\n\
             client c0 R1\n",
        )
        .unwrap();
        let workload: Vec<MessageSpec> = (0..5)
            .map(|i| MessageSpec {
                inject_ns: 0,
                src: NodeId(format!("s{i}")),
                dst: Dest::Node(NodeId("c0".into())),
                kind: MessageKind::UnicastReply,
                size_bytes: 128,
            })
            .collect();
        let trace = run(&topo, &workload, &queue_map(&topo, 2), SimOptions::default()).unwrap();
        assert_eq!(trace.counters.dropped, 2);
        assert_eq!(trace.counters.delivered, 3);
        assert_eq!(trace.peak_occupancy()["R0"], 2);
        assert_eq!(trace.counters.drops_per_link["R0->R1"], 2);
    }

    #[test]
    fn empty_workload_is_empty_trace() {
        let topo = two_router();
        let trace = run(&topo, &[], &queue_map(&topo, 2), SimOptions::default()).unwrap();
        assert!(trace.events.is_empty());
        assert_eq!(trace.counters, Counters::default());
    }

    #[test]
    fn multicast_flood_staggers_copies_per_branch() {
        // Star: root Hub with three leaves, one service each. Copies leave
        // the root one slot apart, so the services hear the query at
        // successive slots.
        let topo = Topology::parse(
            "config centralized root Hub\n\
             router A\nrouter B\nrouter C\nrouter Hub\n\
             link A Hub 512000 0\nlink B Hub 512000 0\nlink C Hub 512000 0\n\
             client q A\n\
             service sa A 128\nservice sb B 128\nservice sc C 128\n",
        )
        .unwrap();
        let mut sim = Simulator::new(
            &topo,
            &queue_map(&topo, 8),
            SimOptions {
                tsom_quantum_ns: Some(2_000_000),
                flood_slot_ns: Some(2_000_000),
            },
        )
        .unwrap();
        let receipts = sim
            .inject_multicast_batch(&[(NodeId("q".into()), 0)])
            .unwrap();
        let slot = 2_000_000u64;
        let by_name: BTreeMap<String, u64> = receipts
            .iter()
            .map(|(_, n, t)| (n.0.clone(), *t))
            .collect();
        // q -> A (1 slot), member copy down sa's access link (+1);
        // A -> Hub branch (+1), Hub fans to B then C one slot apart,
        // one more member slot each.
        assert_eq!(by_name["sa"], 2 * slot);
        assert_eq!(by_name["sb"], 4 * slot);
        assert_eq!(by_name["sc"], 5 * slot);
        let trace = sim.into_trace();
        assert_eq!(trace.counters.sent, 3);
        assert_eq!(trace.counters.delivered, 3);
    }

    #[test]
    fn run_accepts_multicast_workloads() {
        let topo = two_router();
        let trace = run(
            &topo,
            &[MessageSpec {
                inject_ns: 0,
                src: NodeId("c0".into()),
                dst: Dest::Services,
                kind: MessageKind::MulticastQuery,
                size_bytes: 1,
            }],
            &queue_map(&topo, 4),
            SimOptions {
                tsom_quantum_ns: None,
                flood_slot_ns: Some(2_000_000),
            },
        )
        .unwrap();
        assert_eq!(trace.counters.delivered, 1);
        assert_eq!(trace.counters.sent, trace.counters.delivered);
        let deliver = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::Deliver)
            .unwrap();
        // c0 -> R1 (one slot), R1 -> R0 branch (one slot), access copy to
        // s0 (one slot).
        assert_eq!(deliver.time_ns, 6_000_000);
        assert_eq!(deliver.location, "s0");
    }

    #[test]
    fn identical_runs_export_identical_traces() {
        let topo = two_router();
        let workload: Vec<MessageSpec> = (0..9)
            .map(|i| MessageSpec {
                inject_ns: (i % 3) * 1_000_000,
                src: NodeId("s0".into()),
                dst: Dest::Node(NodeId("c0".into())),
                kind: MessageKind::UnicastReply,
                size_bytes: 64 + i,
            })
            .collect();
        let a = run(&topo, &workload, &queue_map(&topo, 3), SimOptions::default()).unwrap();
        let b = run(&topo, &workload, &queue_map(&topo, 3), SimOptions::default()).unwrap();
        assert_eq!(a.export(), b.export());
    }

    #[test]
    fn unknown_nodes_are_rejected() {
        let topo = two_router();
        let err = run(
            &topo,
            &[MessageSpec {
                inject_ns: 0,
                src: NodeId("nope".into()),
                dst: Dest::Node(NodeId("c0".into())),
                kind: MessageKind::UnicastReply,
                size_bytes: 128,
            }],
            &queue_map(&topo, 2),
            SimOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::UnknownNode(_)));
    }
}
