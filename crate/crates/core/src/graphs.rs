//! Packing and conflict graphs.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::Side;
use crate::conversion::ConvertedCircuit;
use crate::packets::{DistributablePacket, KernelKind, KernelRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("global node at depth {t} on qubits ({q1}, {q2}) is not covered by any packet")]
    UncoveredNode { t: usize, q1: usize, q2: usize },
}

/// Position of a gate in the schedule: `(depth, slot within column)`.
pub type SlotPos = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingEdge {
    pub a: usize,
    pub b: usize,
    /// Id of the inducing node in the converted circuit.
    pub node: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingGraph {
    pub labels: Vec<String>,
    pub edges: Vec<PackingEdge>,
}

impl PackingGraph {
    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj
    }

    pub fn simple_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self.edges.iter().map(|e| (e.a.min(e.b), e.a.max(e.b))).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Level {
    Packet,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConflictKind {
    Intrinsic,
    /// Competition for packing aux qubits on the given side.
    Extrinsic(Side),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictGraph {
    pub level: Level,
    pub kind: ConflictKind,
    /// External ids of the vertices (packet or kernel indices).
    pub vertices: Vec<usize>,
    pub labels: Vec<String>,
    /// Undirected edges over positions in `vertices`, `a < b`.
    pub edges: Vec<(usize, usize)>,
}

impl ConflictGraph {
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

fn packet_label(p: &DistributablePacket, converted: &ConvertedCircuit) -> String {
    let ts: Vec<String> = p.t.iter().map(|t| t.to_string()).collect();
    format!("{}:{{{}}}", converted.source().name(p.q), ts.join(","))
}

fn kernel_label(k: &KernelRef, converted: &ConvertedCircuit) -> String {
    let name = converted.source().name(k.q);
    match &k.kind {
        KernelKind::Distribute { t } => format!("D[{name};{t}]"),
        KernelKind::NeighbourEmbed { t1, t2 } => format!("N[{name};{t1},{t2}]"),
        KernelKind::HopEmbed { t1, t2, .. } => format!("H[{name};{t1},{t2}]"),
        KernelKind::ExtendedEmbed { t1, t2, .. } => format!("X[{name};{t1},{t2}]"),
    }
}

/// One edge per global node, joining the packets that contain its depth.
pub fn build_packing_graph(
    packets: &[DistributablePacket],
    converted: &ConvertedCircuit,
) -> Result<PackingGraph, GraphError> {
    let find = |q: usize, t: usize| packets.iter().position(|p| p.q == q && p.contains(t));
    let mut edges = Vec::new();
    for (id, node) in converted.global_nodes() {
        match (find(node.q1, node.t), find(node.q2, node.t)) {
            (Some(a), Some(b)) => edges.push(PackingEdge { a, b, node: id, t: node.t }),
            _ => return Err(GraphError::UncoveredNode { t: node.t, q1: node.q1, q2: node.q2 }),
        }
    }
    let labels = packets.iter().map(|p| packet_label(p, converted)).collect();
    Ok(PackingGraph { labels, edges })
}

/// Hop kernels of `packets` in packet then kernel order, tagged with their packet.
pub fn hop_kernels(packets: &[DistributablePacket]) -> Vec<(usize, KernelRef)> {
    packets
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.kernels.iter().filter(|k| k.is_hop()).map(move |k| (i, k.clone())))
        .collect()
}

/// Whether two hop kernels share a global unit across the cut, or interleave
/// on the same qubit.
pub fn hops_conflict(h1: &KernelRef, h2: &KernelRef, converted: &ConvertedCircuit) -> bool {
    let (Some((a1, a2)), Some((b1, b2))) = (h1.span(), h2.span()) else {
        return false;
    };
    if !h1.is_hop() || !h2.is_hop() {
        return false;
    }
    if h1.q == h2.q {
        return (a1 < b1 && b1 < a2 && a2 < b2) || (b1 < a1 && a1 < b2 && b2 < a2);
    }
    if converted.side(h1.q) == converted.side(h2.q) {
        return false;
    }
    h1.units().iter().any(|&t| {
        t > b1
            && t < b2
            && t > a1
            && t < a2
            && converted.node_at(h1.q, t).is_some_and(|n| n.global && n.touches(h2.q))
    })
}

pub fn build_intrinsic_conflicts(
    packets: &[DistributablePacket],
    converted: &ConvertedCircuit,
    level: Level,
) -> ConflictGraph {
    let hops = hop_kernels(packets);
    let mut kernel_edges = Vec::new();
    for i in 0..hops.len() {
        for j in i + 1..hops.len() {
            if hops_conflict(&hops[i].1, &hops[j].1, converted) {
                kernel_edges.push((i, j));
            }
        }
    }
    match level {
        Level::Kernel => ConflictGraph {
            level,
            kind: ConflictKind::Intrinsic,
            vertices: (0..hops.len()).collect(),
            labels: hops.iter().map(|(_, k)| kernel_label(k, converted)).collect(),
            edges: kernel_edges,
        },
        Level::Packet => {
            let mut edges: Vec<_> = kernel_edges
                .iter()
                .map(|&(i, j)| (hops[i].0.min(hops[j].0), hops[i].0.max(hops[j].0)))
                .collect();
            edges.sort_unstable();
            edges.dedup();
            ConflictGraph {
                level,
                kind: ConflictKind::Intrinsic,
                vertices: (0..packets.len()).collect(),
                labels: packets.iter().map(|p| packet_label(p, converted)).collect(),
                edges,
            }
        }
    }
}

/// Occupancy of the packing aux of a root packet, inclusive.
pub fn occupancy(packet: &DistributablePacket, converted: &ConvertedCircuit) -> (SlotPos, SlotPos) {
    let pos = |t: usize| converted.node_at(packet.q, t).expect("packet depth is a node on its root").pos();
    (pos(packet.start()), pos(packet.end()))
}

pub fn overlaps(a: (SlotPos, SlotPos), b: (SlotPos, SlotPos)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Largest number of simultaneously open intervals.
pub fn max_overlap(intervals: &[(SlotPos, SlotPos)]) -> usize {
    let mut events: Vec<(SlotPos, i32)> = Vec::with_capacity(intervals.len() * 2);
    for &(s, e) in intervals {
        events.push((s, 0));
        events.push((e, 1));
    }
    // Starts before ends at equal positions: inclusive endpoints.
    events.sort_unstable();
    let (mut open, mut best) = (0usize, 0usize);
    for (_, kind) in events {
        if kind == 0 {
            open += 1;
            best = best.max(open);
        } else {
            open -= 1;
        }
    }
    best
}

/// Per-side aux competition graphs `[A, B]`; a root on side `s` is charged to
/// the opposite side.
pub fn build_extrinsic_conflicts(roots: &[DistributablePacket], converted: &ConvertedCircuit) -> [ConflictGraph; 2] {
    [Side::A, Side::B].map(|side| {
        let vertices: Vec<usize> =
            (0..roots.len()).filter(|&i| converted.side(roots[i].q).opposite() == side).collect();
        let occ: Vec<_> = vertices.iter().map(|&i| occupancy(&roots[i], converted)).collect();
        let mut edges = Vec::new();
        for a in 0..vertices.len() {
            for b in a + 1..vertices.len() {
                if overlaps(occ[a], occ[b]) {
                    edges.push((a, b));
                }
            }
        }
        ConflictGraph {
            level: Level::Packet,
            kind: ConflictKind::Extrinsic(side),
            labels: vertices.iter().map(|&i| packet_label(&roots[i], converted)).collect(),
            vertices,
            edges,
        }
    })
}

pub trait ToDot {
    fn to_dot(&self) -> String;
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl ToDot for PackingGraph {
    fn to_dot(&self) -> String {
        let mut out = String::from("graph packing {\n");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "  v{i} [label=\"{}\"];", escape(l));
        }
        for e in &self.edges {
            let _ = writeln!(out, "  v{} -- v{} [label=\"t={}\"];", e.a, e.b, e.t);
        }
        out.push_str("}\n");
        out
    }
}

impl ToDot for ConflictGraph {
    fn to_dot(&self) -> String {
        let name = match self.kind {
            ConflictKind::Intrinsic => "conflict_intrinsic".to_string(),
            ConflictKind::Extrinsic(s) => format!("conflict_extrinsic_{s:?}"),
        };
        let mut out = format!("graph {name} {{\n");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "  v{i} [label=\"{}\"];", escape(l));
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  v{a} -- v{b};");
        }
        out.push_str("}\n");
        out
    }
}

pub fn export_dot<G: ToDot + ?Sized>(graph: &G) -> Vec<u8> {
    graph.to_dot().into_bytes()
}
