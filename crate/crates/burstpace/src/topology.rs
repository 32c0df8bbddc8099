//! In-memory network model, its text file format, and the graph queries the
//! planner needs.
//!
//! A topology is a set of routers joined by links plus clients and services
//! attached to routers. Two wiring disciplines exist and are declared, not
//! inferred:
//!
//! * `decentralized` — the router graph is a tree (cycles are rejected, so
//!   removing any router splits the rest into well-defined parts);
//! * `centralized root <R>` — every other router has exactly one link, to
//!   the root, and the root carries no end nodes.
//!
//! File format, one declaration per line, `#` comments, declarations must
//! precede use:
//!
//! ```text
//! config decentralized            | config centralized root <RouterId>
//! router <RouterId>
//! link <IdA> <IdB> <bandwidth_bps> <delay_s>
//! client <NodeId> <RouterId>
//! service <NodeId> <RouterId> <message_bytes>
//! ```
//!
//! End nodes get an implicit access link to their router; its bandwidth
//! defaults to the average router-router bandwidth (or 524288 bit/s when
//! the topology has no router links) and can be overridden with an explicit
//! `link <node> <router> ...` line.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::time::parse_secs;

pub const DEFAULT_ACCESS_BANDWIDTH: u64 = 524288;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RouterId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub String);

impl fmt::Display for RouterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Client,
    Service,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub attached_to: RouterId,
    /// Reply payload size; services only.
    pub message_bytes: Option<u64>,
}

/// Either end of a link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Router(RouterId),
    Node(NodeId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Router(r) => f.write_str(&r.0),
            Endpoint::Node(n) => f.write_str(&n.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub a: Endpoint,
    pub b: Endpoint,
    pub bandwidth_bps: u64,
    pub delay_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Configuration {
    Decentralized,
    Centralized { root: RouterId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub configuration: Configuration,
    /// Sorted by id.
    pub routers: Vec<RouterId>,
    /// Sorted by id.
    pub end_nodes: Vec<EndNode>,
    /// Router-router links in declaration order.
    pub links: Vec<Link>,
    /// Explicit end-node access links (overrides), in declaration order.
    pub access_links: Vec<Link>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown endpoint `{id}`")]
    UnknownEndpoint { line: usize, id: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("{0}")]
    Invariant(String),
    #[error("operation requires a decentralized topology")]
    NotDecentralized,
    #[error("topology has no {0}")]
    Missing(&'static str),
}

impl Topology {
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut configuration: Option<Configuration> = None;
        let mut routers: BTreeSet<RouterId> = BTreeSet::new();
        let mut end_nodes: BTreeMap<NodeId, EndNode> = BTreeMap::new();
        let mut links: Vec<Link> = Vec::new();
        let mut access_links: Vec<Link> = Vec::new();
        let mut link_pairs: BTreeSet<(String, String)> = BTreeSet::new();

        let syntax = |line: usize, message: &str| TopologyError::Syntax {
            line,
            message: message.to_string(),
        };

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens[0] {
                "config" => {
                    if configuration.is_some() {
                        return Err(syntax(line_no, "duplicate config declaration"));
                    }
                    match tokens.get(1) {
                        Some(&"decentralized") if tokens.len() == 2 => {
                            configuration = Some(Configuration::Decentralized);
                        }
                        Some(&"centralized") if tokens.len() == 4 && tokens[2] == "root" => {
                            configuration = Some(Configuration::Centralized {
                                root: RouterId(tokens[3].to_string()),
                            });
                        }
                        _ => {
                            return Err(syntax(
                                line_no,
                                "expected `config decentralized` or `config centralized root <RouterId>`",
                            ))
                        }
                    }
                }
                "router" => {
                    if configuration.is_none() {
                        return Err(syntax(line_no, "config must come first"));
                    }
                    if tokens.len() != 2 {
                        return Err(syntax(line_no, "expected `router <RouterId>`"));
                    }
                    let id = RouterId(tokens[1].to_string());
                    if !routers.insert(id.clone()) {
                        return Err(TopologyError::DuplicateId {
                            line: line_no,
                            id: id.0,
                        });
                    }
                }
                "link" => {
                    if tokens.len() != 5 {
                        return Err(syntax(
                            line_no,
                            "expected `link <IdA> <IdB> <bandwidth_bps> <delay_s>`",
                        ));
                    }
                    let resolve = |tok: &str| -> Result<Endpoint, TopologyError> {
                        let rid = RouterId(tok.to_string());
                        if routers.contains(&rid) {
                            return Ok(Endpoint::Router(rid));
                        }
                        let nid = NodeId(tok.to_string());
                        if end_nodes.contains_key(&nid) {
                            return Ok(Endpoint::Node(nid));
                        }
                        Err(TopologyError::UnknownEndpoint {
                            line: line_no,
                            id: tok.to_string(),
                        })
                    };
                    let a = resolve(tokens[1])?;
                    let b = resolve(tokens[2])?;
                    let bandwidth_bps: u64 = tokens[3]
                        .parse()
                        .ok()
                        .filter(|&b| b > 0)
                        .ok_or_else(|| syntax(line_no, "bandwidth must be a positive integer"))?;
                    let delay_ns = parse_secs(tokens[4])
                        .map_err(|e| syntax(line_no, &format!("bad delay: {e}")))?;
                    let key = {
                        let (x, y) = (tokens[1].to_string(), tokens[2].to_string());
                        if x <= y { (x, y) } else { (y, x) }
                    };
                    if key.0 == key.1 {
                        return Err(syntax(line_no, "link endpoints must differ"));
                    }
                    if !link_pairs.insert(key) {
                        return Err(syntax(line_no, "duplicate link for this endpoint pair"));
                    }
                    let link = Link {
                        a,
                        b,
                        bandwidth_bps,
                        delay_ns,
                    };
                    match (&link.a, &link.b) {
                        (Endpoint::Router(_), Endpoint::Router(_)) => links.push(link),
                        _ => access_links.push(link),
                    }
                }
                kind @ ("client" | "service") => {
                    let want = if kind == "client" { 3 } else { 4 };
                    if tokens.len() != want {
                        return Err(syntax(
                            line_no,
                            if kind == "client" {
                                "expected `client <NodeId> <RouterId>`"
                            } else {
                                "expected `service <NodeId> <RouterId> <message_bytes>`"
                            },
                        ));
                    }
                    let id = NodeId(tokens[1].to_string());
                    let attached_to = RouterId(tokens[2].to_string());
                    if !routers.contains(&attached_to) {
                        return Err(TopologyError::UnknownEndpoint {
                            line: line_no,
                            id: attached_to.0,
                        });
                    }
                    if routers.contains(&RouterId(id.0.clone())) || end_nodes.contains_key(&id) {
                        return Err(TopologyError::DuplicateId {
                            line: line_no,
                            id: id.0,
                        });
                    }
                    let message_bytes = if kind == "service" {
                        let b: u64 = tokens[3]
                            .parse()
                            .ok()
                            .filter(|&b| b > 0)
                            .ok_or_else(|| {
                                syntax(line_no, "message_bytes must be a positive integer")
                            })?;
                        Some(b)
                    } else {
                        None
                    };
                    end_nodes.insert(
                        id.clone(),
                        EndNode {
                            id,
                            kind: if kind == "client" {
                                NodeKind::Client
                            } else {
                                NodeKind::Service
                            },
                            attached_to,
                            message_bytes,
                        },
                    );
                }
                other => {
                    return Err(syntax(line_no, &format!("unknown declaration `{other}`")));
                }
            }
        }

        let configuration = configuration
            .ok_or_else(|| syntax(1, "missing `config` declaration"))?;
        let topo = Topology {
            configuration,
            routers: routers.into_iter().collect(),
            end_nodes: end_nodes.into_values().collect(),
            links,
            access_links,
        };
        topo.validate()?;
        Ok(topo)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        if self.routers.is_empty() {
            return Err(TopologyError::Invariant("topology has no routers".into()));
        }
        for l in &self.access_links {
            // One endpoint must be an end node, the other its own router.
            let (node, router) = match (&l.a, &l.b) {
                (Endpoint::Node(n), Endpoint::Router(r)) => (n, r),
                (Endpoint::Router(r), Endpoint::Node(n)) => (n, r),
                _ => {
                    return Err(TopologyError::Invariant(
                        "access link must join an end node and a router".into(),
                    ))
                }
            };
            let en = self
                .end_nodes
                .iter()
                .find(|e| &e.id == node)
                .expect("resolved at parse time");
            if &en.attached_to != router {
                return Err(TopologyError::Invariant(format!(
                    "access link for `{node}` must go to its own router `{}`",
                    en.attached_to
                )));
            }
        }
        // Router graph connectivity.
        let adj = self.router_adjacency();
        let mut seen = vec![false; self.routers.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        if count != self.routers.len() {
            return Err(TopologyError::Invariant(
                "router graph is not connected".into(),
            ));
        }
        match &self.configuration {
            Configuration::Decentralized => {
                // Tree: |links| == |routers| - 1 along with connectivity.
                if self.links.len() != self.routers.len() - 1 {
                    return Err(TopologyError::Invariant(
                        "decentralized router graph must be a tree (no cycles)".into(),
                    ));
                }
            }
            Configuration::Centralized { root } => {
                let root_idx = self
                    .router_index(root)
                    .ok_or_else(|| TopologyError::Invariant(format!("unknown root `{root}`")))?;
                for (i, r) in self.routers.iter().enumerate() {
                    if i == root_idx {
                        continue;
                    }
                    let neighbors = &adj[i];
                    if neighbors.len() != 1 || neighbors[0].0 != root_idx {
                        return Err(TopologyError::Invariant(format!(
                            "router `{r}` must have exactly one link, to the root"
                        )));
                    }
                }
                if self
                    .end_nodes
                    .iter()
                    .any(|e| self.router_index(&e.attached_to) == Some(root_idx))
                {
                    return Err(TopologyError::Invariant(
                        "root must have no end nodes".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn router_index(&self, id: &RouterId) -> Option<usize> {
        self.routers.binary_search(id).ok()
    }

    pub fn node(&self, id: &NodeId) -> Option<&EndNode> {
        self.end_nodes.iter().find(|e| &e.id == id)
    }

    /// Adjacency over router indices; neighbor lists sorted by router id.
    pub fn router_adjacency(&self) -> Vec<Vec<(usize, &Link)>> {
        let mut adj: Vec<Vec<(usize, &Link)>> = vec![Vec::new(); self.routers.len()];
        for l in &self.links {
            if let (Endpoint::Router(a), Endpoint::Router(b)) = (&l.a, &l.b) {
                let ai = self.router_index(a).unwrap();
                let bi = self.router_index(b).unwrap();
                adj[ai].push((bi, l));
                adj[bi].push((ai, l));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|(i, _)| *i);
        }
        adj
    }

    /// Router-to-router hop distances from `from` (BFS; unique paths on
    /// trees and stars).
    pub fn router_distances(&self, from: usize) -> Vec<usize> {
        let adj = self.router_adjacency();
        let mut dist = vec![usize::MAX; self.routers.len()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn clients(&self) -> impl Iterator<Item = &EndNode> {
        self.end_nodes.iter().filter(|e| e.kind == NodeKind::Client)
    }

    pub fn services(&self) -> impl Iterator<Item = &EndNode> {
        self.end_nodes
            .iter()
            .filter(|e| e.kind == NodeKind::Service)
    }

    pub fn clients_attached(&self, router: usize) -> usize {
        self.clients()
            .filter(|e| self.router_index(&e.attached_to) == Some(router))
            .count()
    }

    pub fn services_attached(&self, router: usize) -> usize {
        self.services()
            .filter(|e| self.router_index(&e.attached_to) == Some(router))
            .count()
    }

    /// Bandwidth of the access link for `node` (explicit override or the
    /// topology default).
    pub fn access_bandwidth(&self, node: &NodeId) -> u64 {
        for l in &self.access_links {
            let hit = match (&l.a, &l.b) {
                (Endpoint::Node(n), _) | (_, Endpoint::Node(n)) => n == node,
                _ => false,
            };
            if hit {
                return l.bandwidth_bps;
            }
        }
        self.default_access_bandwidth()
    }

    pub fn access_delay_ns(&self, node: &NodeId) -> u64 {
        for l in &self.access_links {
            let hit = match (&l.a, &l.b) {
                (Endpoint::Node(n), _) | (_, Endpoint::Node(n)) => n == node,
                _ => false,
            };
            if hit {
                return l.delay_ns;
            }
        }
        0
    }

    pub fn default_access_bandwidth(&self) -> u64 {
        if self.links.is_empty() {
            DEFAULT_ACCESS_BANDWIDTH
        } else {
            let sum: u64 = self.links.iter().map(|l| l.bandwidth_bps).sum();
            sum / self.links.len() as u64
        }
    }

    /// The longest client-service pair by router hops; ties broken by the
    /// lexicographically smallest `(client, service)` id pair.
    pub fn longest_client_service_path(
        &self,
    ) -> Result<(NodeId, NodeId, usize), TopologyError> {
        let clients: Vec<&EndNode> = self.clients().collect();
        let services: Vec<&EndNode> = self.services().collect();
        if clients.is_empty() {
            return Err(TopologyError::Missing("client"));
        }
        if services.is_empty() {
            return Err(TopologyError::Missing("service"));
        }
        let mut best: Option<(usize, &NodeId, &NodeId)> = None;
        for c in &clients {
            let ci = self.router_index(&c.attached_to).unwrap();
            let dist = self.router_distances(ci);
            for s in &services {
                let si = self.router_index(&s.attached_to).unwrap();
                let hops = dist[si];
                let better = match &best {
                    None => true,
                    Some((bh, bc, bs)) => {
                        hops > *bh || (hops == *bh && (&c.id, &s.id) < (bc, bs))
                    }
                };
                if better {
                    best = Some((hops, &c.id, &s.id));
                }
            }
        }
        let (hops, c, s) = best.unwrap();
        Ok((c.clone(), s.clone(), hops))
    }

    /// Service counts of the parts a decentralized topology splits into when
    /// `r` is removed: `(largest component, sum of the rest)`. Services on
    /// `r` itself belong to neither part.
    pub fn split_parts(&self, r: &RouterId) -> Result<(usize, usize), TopologyError> {
        if !matches!(self.configuration, Configuration::Decentralized) {
            return Err(TopologyError::NotDecentralized);
        }
        let removed = self
            .router_index(r)
            .ok_or_else(|| TopologyError::Invariant(format!("unknown router `{r}`")))?;
        let comps = self.components_without(removed);
        let mut counts: Vec<usize> = comps
            .iter()
            .map(|comp| comp.iter().map(|&i| self.services_attached(i)).sum())
            .collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let left = counts.first().copied().unwrap_or(0);
        let right = counts.iter().skip(1).sum();
        Ok((left, right))
    }

    /// Connected components of the router graph after removing `removed`,
    /// each sorted; components ordered by smallest member.
    pub fn components_without(&self, removed: usize) -> Vec<Vec<usize>> {
        let adj = self.router_adjacency();
        let mut seen = vec![false; self.routers.len()];
        seen[removed] = true;
        let mut comps = Vec::new();
        for start in 0..self.routers.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Canonical text form; `parse(serialize(t))` equals `t` structurally.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        match &self.configuration {
            Configuration::Decentralized => out.push_str("config decentralized\n"),
            Configuration::Centralized { root } => {
                out.push_str(&format!("config centralized root {root}\n"))
            }
        }
        for r in &self.routers {
            out.push_str(&format!("router {r}\n"));
        }
        for l in &self.links {
            out.push_str(&format!(
                "link {} {} {} {}\n",
                l.a,
                l.b,
                l.bandwidth_bps,
                crate::time::format_secs(l.delay_ns)
            ));
        }
        for e in &self.end_nodes {
            match e.kind {
                NodeKind::Client => out.push_str(&format!("client {} {}\n", e.id, e.attached_to)),
                NodeKind::Service => out.push_str(&format!(
                    "service {} {} {}\n",
                    e.id,
                    e.attached_to,
                    e.message_bytes.unwrap_or(1)
                )),
            }
        }
        for l in &self.access_links {
            out.push_str(&format!(
                "link {} {} {} {}\n",
                l.a,
                l.b,
                l.bandwidth_bps,
                crate::time::format_secs(l.delay_ns)
            ));
        }
        out
    }
}
