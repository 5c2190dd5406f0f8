//! Packing plan data model.

use serde::{Deserialize, Serialize};

use crate::circuit::Side;
use crate::conversion::ConvertedCircuit;
use crate::graphs::{max_overlap, occupancy};
use crate::packets::{DistributablePacket, KernelKind, KernelRef};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxCount {
    #[serde(rename = "A")]
    pub a: usize,
    #[serde(rename = "B")]
    pub b: usize,
}

impl AuxCount {
    pub fn get(&self, side: Side) -> usize {
        match side {
            Side::A => self.a,
            Side::B => self.b,
        }
    }

    pub fn total(&self) -> usize {
        self.a + self.b
    }

    pub fn fits(&self, limits: &AuxCount) -> bool {
        self.a <= limits.a && self.b <= limits.b
    }
}

/// Which root distributes a global node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAssignment {
    pub node: usize,
    pub t: usize,
    pub q1: usize,
    pub q2: usize,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingPlan {
    pub qubits: Vec<String>,
    pub roots: Vec<DistributablePacket>,
    pub assignment: Vec<NodeAssignment>,
    pub removed_embeddings: Vec<KernelRef>,
    pub extended: Vec<KernelRef>,
    pub ebits: usize,
    pub aux_required: AuxCount,
    pub baseline: usize,
}

impl PackingPlan {
    /// Assemble a plan from roots, deriving assignment and aux counts.
    pub fn from_roots(
        converted: &ConvertedCircuit,
        mut roots: Vec<DistributablePacket>,
        removed_embeddings: Vec<KernelRef>,
    ) -> PackingPlan {
        roots.sort_by_key(|p| (p.q, p.start()));
        for (i, r) in roots.iter_mut().enumerate() {
            r.id = i;
        }
        let extended: Vec<KernelRef> = roots
            .iter()
            .flat_map(|r| r.kernels.iter().filter(|k| matches!(k.kind, KernelKind::ExtendedEmbed { .. })).cloned())
            .collect();
        let assignment = assign(converted, &roots);
        let aux_required = aux_required(converted, &roots);
        PackingPlan {
            qubits: converted.source().qubits().iter().map(|q| q.name.clone()).collect(),
            ebits: roots.len(),
            roots,
            assignment,
            removed_embeddings,
            extended,
            aux_required,
            baseline: converted.global_nodes().count(),
        }
    }

    /// Every global node has an assigned root containing its depth on one endpoint.
    pub fn covers_all(&self, converted: &ConvertedCircuit) -> bool {
        converted.global_nodes().all(|(id, n)| {
            self.assignment.iter().any(|a| {
                a.node == id
                    && self.roots.get(a.root).is_some_and(|r| (r.q == n.q1 || r.q == n.q2) && r.contains(n.t))
            })
        })
    }
}

/// Peak aux occupancy per side.
pub fn aux_required(converted: &ConvertedCircuit, roots: &[DistributablePacket]) -> AuxCount {
    let per_side = |side: Side| {
        let iv: Vec<_> = roots
            .iter()
            .filter(|r| converted.side(r.q).opposite() == side)
            .map(|r| occupancy(r, converted))
            .collect();
        max_overlap(&iv)
    };
    AuxCount { a: per_side(Side::A), b: per_side(Side::B) }
}

/// Pick the distributing root for every global node. The inner root of an
/// extended embedding takes its middle node; otherwise the lowest index wins.
pub fn assign(converted: &ConvertedCircuit, roots: &[DistributablePacket]) -> Vec<NodeAssignment> {
    let mids: Vec<(usize, usize)> = roots
        .iter()
        .flat_map(|r| {
            r.kernels.iter().filter_map(move |k| match k.kind {
                KernelKind::ExtendedEmbed { mid, .. } => Some((r.q, mid)),
                _ => None,
            })
        })
        .collect();
    let mut out = Vec::new();
    for (id, n) in converted.global_nodes() {
        let candidates: Vec<usize> =
            (0..roots.len()).filter(|&i| (roots[i].q == n.q1 || roots[i].q == n.q2) && roots[i].contains(n.t)).collect();
        let inner = candidates.iter().copied().find(|&i| mids.contains(&(roots[i].q, n.t)) && roots[i].t == [n.t]);
        if let Some(root) = inner.or(candidates.first().copied()) {
            out.push(NodeAssignment { node: id, t: n.t, q1: n.q1, q2: n.q2, root });
        }
    }
    out
}
