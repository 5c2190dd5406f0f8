//! Packing optimizer.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::Side;
use crate::conversion::ConvertedCircuit;
use crate::graphs::{
    build_intrinsic_conflicts, build_packing_graph, hop_kernels, occupancy, overlaps, GraphError, Level, SlotPos,
};
use crate::matrix::{canonical_phase, is_multiple_of_pi, is_pi, SingleQubitClass};
use crate::packets::{build_packets_with, DistributablePacket, KernelKind, KernelRef, PacketOptions, PacketSet};
pub use crate::plan::{AuxCount, NodeAssignment, PackingPlan};

/// Largest graph handled by the exact cover search.
pub const EXACT_LIMIT: usize = 40;
pub const MAX_COVERS: usize = 32;
pub const GREEDY_RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("graph with {0} vertices is too large for the exact cover search")]
    TooLargeForExact(usize),
    #[error("infeasible aux limits: {0}")]
    InfeasibleLimits(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
pub enum MvcMode {
    /// Exact up to the size limit, greedy beyond.
    #[default]
    Auto,
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub mvc: MvcMode,
    pub seed: u64,
    pub extended: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { mvc: MvcMode::Auto, seed: 0, extended: true }
    }
}

// ---------------------------------------------------------------------------
// Vertex cover

struct Bits {
    adj: Vec<u64>,
}

impl Bits {
    fn new(n: usize, edges: &[(usize, usize)]) -> Bits {
        let mut adj = vec![0u64; n];
        for &(a, b) in edges {
            if a != b {
                adj[a] |= 1 << b;
                adj[b] |= 1 << a;
            }
        }
        Bits { adj }
    }

    fn degree(&self, v: usize, alive: u64) -> u32 {
        (self.adj[v] & alive).count_ones()
    }

    fn max_degree_vertex(&self, alive: u64) -> Option<usize> {
        let mut best: Option<(u32, usize)> = None;
        let mut rest = alive;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let d = self.degree(v, alive);
            if d > 0 && best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, v));
            }
        }
        best.map(|(_, v)| v)
    }

    /// Size of a greedy maximal matching, a lower bound on any cover.
    fn matching_bound(&self, alive: u64) -> usize {
        let mut free = alive;
        let mut size = 0;
        let mut rest = alive;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if free & (1 << v) == 0 {
                continue;
            }
            let nb = self.adj[v] & free;
            if nb != 0 {
                let w = nb.trailing_zeros() as usize;
                free &= !(1u64 << v) & !(1u64 << w);
                size += 1;
            }
        }
        size
    }
}

fn bb_optimum(g: &Bits, alive: u64, taken: usize, best: &mut usize) {
    if taken + g.matching_bound(alive) >= *best {
        return;
    }
    // Degree-one reduction: take the neighbour of a leaf.
    let mut rest = alive;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if g.degree(v, alive) == 1 {
            let w = (g.adj[v] & alive).trailing_zeros() as usize;
            bb_optimum(g, alive & !(1 << w), taken + 1, best);
            return;
        }
    }
    let Some(v) = g.max_degree_vertex(alive) else {
        *best = taken;
        return;
    };
    bb_optimum(g, alive & !(1 << v), taken + 1, best);
    let nb = g.adj[v] & alive;
    bb_optimum(g, alive & !nb & !(1 << v), taken + nb.count_ones() as usize, best);
}

fn bb_enumerate(g: &Bits, alive: u64, chosen: u64, opt: usize, out: &mut Vec<u64>, limit: usize) {
    if out.len() >= limit || chosen.count_ones() as usize + g.matching_bound(alive) > opt {
        return;
    }
    let Some(v) = g.max_degree_vertex(alive) else {
        out.push(chosen);
        return;
    };
    bb_enumerate(g, alive & !(1 << v), chosen | (1 << v), opt, out, limit);
    let nb = g.adj[v] & alive;
    bb_enumerate(g, alive & !nb & !(1 << v), chosen | nb, opt, out, limit);
}

fn to_set(bits: u64) -> Vec<usize> {
    (0..64).filter(|&i| bits & (1 << i) != 0).collect()
}

/// Up to `limit` distinct minimum vertex covers.
pub fn enumerate_min_covers(n: usize, edges: &[(usize, usize)], limit: usize) -> Result<Vec<Vec<usize>>, SolverError> {
    if n > EXACT_LIMIT {
        return Err(SolverError::TooLargeForExact(n));
    }
    let g = Bits::new(n, edges);
    let alive = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut best = n + 1;
    bb_optimum(&g, alive, 0, &mut best);
    let mut out = Vec::new();
    bb_enumerate(&g, alive, 0, best.min(n), &mut out, limit.max(1));
    Ok(out.into_iter().map(to_set).collect())
}

/// Max-degree greedy cover with redundancy pruning. Ties go to the lowest
/// id unless `rng` shuffles the tie order.
pub fn greedy_cover(n: usize, edges: &[(usize, usize)], rng: Option<&mut ChaCha8Rng>) -> Vec<usize> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(r) = rng {
        order.shuffle(r);
    }
    let mut rank = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i;
    }
    let mut deg: Vec<usize> = adj.iter().map(|s| s.len()).collect();
    let mut in_cover = vec![false; n];
    let mut cover = Vec::new();
    loop {
        let pick = (0..n).filter(|&v| !in_cover[v] && deg[v] > 0).max_by(|&a, &b| deg[a].cmp(&deg[b]).then(rank[b].cmp(&rank[a])));
        let Some(v) = pick else { break };
        in_cover[v] = true;
        cover.push(v);
        for &w in &adj[v] {
            if !in_cover[w] {
                deg[w] -= 1;
            }
        }
        deg[v] = 0;
    }
    for &v in cover.iter().rev() {
        if adj[v].iter().all(|&w| in_cover[w]) {
            in_cover[v] = false;
        }
    }
    (0..n).filter(|&v| in_cover[v]).collect()
}

pub fn min_vertex_cover(n: usize, edges: &[(usize, usize)], mode: MvcMode) -> Result<Vec<usize>, SolverError> {
    match mode {
        MvcMode::Greedy => Ok(greedy_cover(n, edges, None)),
        MvcMode::Exact => Ok(enumerate_min_covers(n, edges, 1)?.remove(0)),
        MvcMode::Auto if n <= EXACT_LIMIT => Ok(enumerate_min_covers(n, edges, 1)?.remove(0)),
        MvcMode::Auto => Ok(greedy_cover(n, edges, None)),
    }
}

/// Cover candidates: exact enumeration when allowed, otherwise a greedy
/// cover plus seeded randomized restarts.
pub fn candidate_covers(
    n: usize,
    edges: &[(usize, usize)],
    options: &SolverOptions,
) -> Result<Vec<Vec<usize>>, SolverError> {
    let exact = match options.mvc {
        MvcMode::Exact => true,
        MvcMode::Auto => n <= EXACT_LIMIT,
        MvcMode::Greedy => false,
    };
    if exact {
        return enumerate_min_covers(n, edges, MAX_COVERS);
    }
    let mut covers = vec![greedy_cover(n, edges, None)];
    if n > EXACT_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for _ in 0..GREEDY_RESTARTS {
            let c = greedy_cover(n, edges, Some(&mut rng));
            if !covers.contains(&c) {
                covers.push(c);
            }
        }
    }
    Ok(covers)
}

// ---------------------------------------------------------------------------
// Intrinsic conflicts, pruning, extended embedding

/// Remove a minimum set of conflicting hop embeddings and split their packets.
pub fn resolve_intrinsic(
    cover: Vec<DistributablePacket>,
    converted: &ConvertedCircuit,
) -> (Vec<DistributablePacket>, Vec<KernelRef>) {
    let graph = build_intrinsic_conflicts(&cover, converted, Level::Kernel);
    if graph.is_empty() {
        return (cover, Vec::new());
    }
    let hops = hop_kernels(&cover);
    let picked = min_vertex_cover(hops.len(), &graph.edges, MvcMode::Auto).expect("auto mode never fails");
    let removed: Vec<KernelRef> = picked.iter().map(|&i| hops[i].1.clone()).collect();
    let mut roots = cover;
    for k in &removed {
        split_kernel(&mut roots, k);
    }
    (roots, removed)
}

fn split_kernel(roots: &mut Vec<DistributablePacket>, k: &KernelRef) {
    let (t1, _) = k.span().expect("embedding");
    if let Some(i) = roots.iter().position(|r| r.q == k.q && r.kernels.contains(k)) {
        let (left, right) = roots[i].split_at(t1).expect("kernel belongs to packet");
        roots[i] = left;
        roots.insert(i + 1, right);
    }
}

fn inner_roots(roots: &[DistributablePacket]) -> BTreeSet<(usize, usize)> {
    roots
        .iter()
        .flat_map(|r| {
            r.kernels.iter().filter_map(move |k| match k.kind {
                KernelKind::ExtendedEmbed { mid, .. } => Some((r.q, mid)),
                _ => None,
            })
        })
        .collect()
}

/// Drop roots whose every node is also covered by a root on the partner.
pub fn prune_redundant(mut roots: Vec<DistributablePacket>, converted: &ConvertedCircuit) -> Vec<DistributablePacket> {
    loop {
        let protected = inner_roots(&roots);
        let mut order: Vec<usize> = (0..roots.len()).collect();
        order.sort_by_key(|&i| (roots[i].t.len(), roots[i].q, roots[i].start()));
        let redundant = order.into_iter().find(|&i| {
            let r = &roots[i];
            !(r.t.len() == 1 && protected.contains(&(r.q, r.t[0])))
                && r.t.iter().all(|&t| {
                    let p = converted.node_at(r.q, t).expect("root node").partner(r.q);
                    roots.iter().enumerate().any(|(j, o)| j != i && o.q == p && o.contains(t))
                })
        });
        match redundant {
            Some(i) => {
                roots.remove(i);
            }
            None => return roots,
        }
    }
}

/// Phase-condition parity of an `H`-type gap `t1 → mid → t2` on `q`.
fn extended_gap_parity(converted: &ConvertedCircuit, q: usize, k1: usize) -> Option<u8> {
    let before = &converted.word_after(q, k1).class;
    let after = &converted.word_after(q, k1 + 1).class;
    let (SingleQubitClass::OneHadamard { gamma, .. }, SingleQubitClass::OneHadamard { alpha, .. }) = (before, after)
    else {
        return None;
    };
    let s = gamma + alpha;
    is_multiple_of_pi(s).then(|| u8::from(is_pi(canonical_phase(s))))
}

/// Merge `(T1, {t}, T2)` root triples across `H`-type gaps; the middle root
/// becomes the inner process of the rule. Returns the new roots and the
/// extended kernels added.
pub fn extended_embedding_pass(
    mut roots: Vec<DistributablePacket>,
    converted: &ConvertedCircuit,
) -> (Vec<DistributablePacket>, Vec<KernelRef>) {
    let hops: Vec<KernelRef> = roots.iter().flat_map(|r| r.kernels.iter().filter(|k| k.is_hop()).cloned()).collect();
    let hop_over = |q: usize, t: usize| {
        hops.iter().any(|h| h.q == q && h.span().is_some_and(|(a, b)| a < t && t < b))
    };
    let mut added = Vec::new();
    for q in 0..converted.n_qubits() {
        let ids = converted.nodes_on(q);
        let mut k = 0;
        while k + 2 < ids.len() {
            let (n1, nm, n2) = (converted.node(ids[k]), converted.node(ids[k + 1]), converted.node(ids[k + 2]));
            let (t1, mid, t2) = (n1.t, nm.t, n2.t);
            let left = roots.iter().position(|r| r.q == q && r.end() == t1);
            let middle = roots.iter().position(|r| r.q == q && r.t == [mid]);
            let right = roots.iter().position(|r| r.q == q && r.start() == t2);
            let (Some(l), Some(_), Some(r)) = (left, middle, right) else {
                k += 1;
                continue;
            };
            let partner = nm.partner(q);
            let ok = n1.global
                && nm.global
                && n2.global
                && !hops.iter().any(|h| h.q == q && h.span() == Some((t1, t2)))
                && !hop_over(partner, mid)
                && !hop_over(q, mid);
            let parity = if ok { extended_gap_parity(converted, q, k) } else { None };
            let Some(parity) = parity else {
                k += 1;
                continue;
            };
            let kernel = KernelRef { q, kind: KernelKind::ExtendedEmbed { t1, t2, mid }, antidiag_parity: parity };
            let right_root = roots[r].clone();
            let merged = &mut roots[l];
            merged.t.extend(right_root.t.iter().copied());
            merged.kernels.push(kernel.clone());
            merged.kernels.extend(right_root.kernels.iter().cloned());
            roots.remove(r);
            added.push(kernel);
            k += 2;
        }
    }
    (roots, added)
}

// ---------------------------------------------------------------------------
// Packing

fn plan_for_cover(
    cover: &[usize],
    packets: &PacketSet,
    converted: &ConvertedCircuit,
    options: &SolverOptions,
) -> (Vec<DistributablePacket>, Vec<KernelRef>) {
    let chosen: Vec<DistributablePacket> = cover.iter().map(|&i| packets.packets[i].clone()).collect();
    let (roots, removed) = resolve_intrinsic(chosen, converted);
    let mut roots = prune_redundant(roots, converted);
    if options.extended {
        roots = extended_embedding_pass(roots, converted).0;
        roots = prune_redundant(roots, converted);
    }
    (roots, removed)
}

fn covers_for(packets: &PacketSet, converted: &ConvertedCircuit, options: &SolverOptions) -> Result<Vec<Vec<usize>>, SolverError> {
    let graph = build_packing_graph(&packets.packets, converted)?;
    candidate_covers(graph.n_vertices(), &graph.simple_edges(), options)
}

/// Algorithm without aux limits: one plan per cover candidate, sorted by
/// `(ebits, total aux)`.
pub fn pack_unlimited(
    converted: &ConvertedCircuit,
    packets: &PacketSet,
    options: &SolverOptions,
) -> Result<Vec<PackingPlan>, SolverError> {
    let covers = covers_for(packets, converted, options)?;
    let mut plans: Vec<PackingPlan> = covers
        .par_iter()
        .map(|cover| {
            let (roots, removed) = plan_for_cover(cover, packets, converted, options);
            PackingPlan::from_roots(converted, roots, removed)
        })
        .collect();
    plans.sort_by_key(|p| (p.ebits, p.aux_required.total()));
    Ok(plans)
}

/// First-fit colouring by interval start; an interval that fits no colour
/// goes to the one it overlaps least.
fn colour(intervals: &[(SlotPos, SlotPos)], chi: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&i| intervals[i].0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); chi];
    let mut colour = vec![0; intervals.len()];
    for i in order {
        let clash = |c: usize| members[c].iter().filter(|&&j| overlaps(intervals[i], intervals[j])).count();
        let c = (0..chi).min_by_key(|&c| (clash(c), c)).expect("chi >= 1");
        members[c].push(i);
        colour[i] = c;
    }
    colour
}

/// Split roots until every side's roots fit into its colour budget.
fn enforce_limits(
    mut roots: Vec<DistributablePacket>,
    removed: &mut Vec<KernelRef>,
    converted: &ConvertedCircuit,
    limits: &AuxCount,
) -> Vec<DistributablePacket> {
    loop {
        let mut split_any = false;
        for side in [Side::A, Side::B] {
            let idx: Vec<usize> = (0..roots.len()).filter(|&i| converted.side(roots[i].q).opposite() == side).collect();
            let iv: Vec<_> = idx.iter().map(|&i| occupancy(&roots[i], converted)).collect();
            let col = colour(&iv, limits.get(side));
            let mut edges = Vec::new();
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    if col[a] == col[b] && overlaps(iv[a], iv[b]) {
                        edges.push((a, b));
                    }
                }
            }
            if edges.is_empty() {
                continue;
            }
            let mut adj = vec![Vec::new(); idx.len()];
            for &(a, b) in &edges {
                adj[a].push(b);
                adj[b].push(a);
            }
            let mut picked: BTreeSet<usize> = BTreeSet::new();
            for v in min_vertex_cover(idx.len(), &edges, MvcMode::Auto).expect("auto mode never fails") {
                if roots[idx[v]].is_trivial() {
                    picked.extend(adj[v].iter().copied().filter(|&w| !roots[idx[w]].is_trivial()));
                } else {
                    picked.insert(v);
                }
            }
            // Split each picked root at the embedding whose gap overlaps
            // the most same-colour conflicts.
            let mut pieces = Vec::new();
            for &v in picked.iter().rev() {
                let root = &roots[idx[v]];
                let others: Vec<_> = adj[v].iter().map(|&w| iv[w]).collect();
                let pos = |t: usize| converted.node_at(root.q, t).expect("root node").pos();
                let best = root
                    .embeddings()
                    .filter_map(|k| k.span().map(|s| (k.clone(), s)))
                    .max_by_key(|(_, (a, b))| {
                        let gap = (pos(*a), pos(*b));
                        let hits = others.iter().filter(|o| overlaps(gap, **o)).count();
                        (hits, std::cmp::Reverse(*a))
                    });
                if let Some((k, (t1, _))) = best {
                    let (l, r) = root.split_at(t1).expect("embedding of root");
                    removed.push(k);
                    pieces.push((idx[v], l, r));
                }
            }
            pieces.sort_by_key(|p| std::cmp::Reverse(p.0));
            for (i, l, r) in pieces {
                roots[i] = l;
                roots.insert(i + 1, r);
                split_any = true;
            }
            if split_any {
                break;
            }
        }
        if !split_any {
            return roots;
        }
    }
}

/// Algorithm with aux limits: the minimum-ebit plan over cover candidates
/// that respects `limits` on both sides.
pub fn pack_limited(
    converted: &ConvertedCircuit,
    packets: &PacketSet,
    limits: &AuxCount,
    options: &SolverOptions,
) -> Result<PackingPlan, SolverError> {
    if limits.a < 1 || limits.b < 1 {
        return Err(SolverError::InfeasibleLimits(format!("limits must be at least 1, got A={} B={}", limits.a, limits.b)));
    }
    let covers = covers_for(packets, converted, options)?;
    let plans: Vec<PackingPlan> = covers
        .par_iter()
        .map(|cover| {
            let (roots, mut removed) = plan_for_cover(cover, packets, converted, options);
            let roots = enforce_limits(roots, &mut removed, converted, limits);
            let roots = prune_redundant(roots, converted);
            PackingPlan::from_roots(converted, roots, removed)
        })
        .collect();
    let mut best: Option<PackingPlan> = None;
    for p in plans {
        if !p.aux_required.fits(limits) {
            return Err(SolverError::InfeasibleLimits("limit enforcement did not converge".into()));
        }
        if best.as_ref().is_none_or(|b| p.ebits < b.ebits) {
            best = Some(p);
        }
    }
    best.ok_or_else(|| SolverError::InfeasibleLimits("no cover candidates".into()))
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, Serialize)]
pub struct PipelineResult {
    pub plan: PackingPlan,
    pub baseline: usize,
    pub neighbour_only_ebits: usize,
    pub full_ebits: usize,
    pub packets: PacketSet,
    pub intrinsic_conflicts: usize,
}

/// Identify packets and solve, with and without hopping embeddings; the
/// better of the two plans is returned.
pub fn run_pipeline(
    converted: &ConvertedCircuit,
    limits: Option<&AuxCount>,
    options: &SolverOptions,
) -> Result<PipelineResult, SolverError> {
    let full = build_packets_with(converted, PacketOptions::default());
    let plain = build_packets_with(converted, PacketOptions { hopping: false, window: None });
    let neighbour_opts = SolverOptions { extended: false, ..*options };
    let solve = |set: &PacketSet, opts: &SolverOptions| -> Result<PackingPlan, SolverError> {
        match limits {
            Some(l) => pack_limited(converted, set, l, opts),
            None => Ok(pack_unlimited(converted, set, opts)?.remove(0)),
        }
    };
    let neighbour_plan = if converted.global_nodes().next().is_none() {
        PackingPlan::from_roots(converted, Vec::new(), Vec::new())
    } else {
        solve(&plain, &neighbour_opts)?
    };
    let full_plan = if converted.global_nodes().next().is_none() {
        neighbour_plan.clone()
    } else {
        solve(&full, options)?
    };
    let neighbour_only_ebits = neighbour_plan.ebits;
    let plan = if (neighbour_plan.ebits, neighbour_plan.aux_required.total())
        < (full_plan.ebits, full_plan.aux_required.total())
    {
        neighbour_plan
    } else {
        full_plan
    };
    let intrinsic_conflicts = build_intrinsic_conflicts(&full.packets, converted, Level::Kernel).edges.len();
    Ok(PipelineResult {
        baseline: converted.global_nodes().count(),
        full_ebits: plan.ebits,
        neighbour_only_ebits,
        plan,
        packets: full,
        intrinsic_conflicts,
    })
}
