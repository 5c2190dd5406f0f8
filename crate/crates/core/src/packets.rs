//! Distributable packet identification.
//!
//! Per qubit, global control-phase nodes are joined by embeddings:
//! neighbouring ones (only diagonal or anti-diagonal words in between) and
//! indecomposable hopping ones (H-type units with the chained phase
//! condition). Embeddings are then merged into disjoint packets.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conversion::ConvertedCircuit;
use crate::matrix::{canonical_phase, distributable_form, is_multiple_of_pi, is_pi, SingleQubitClass};

/// Divisions with more nodes than this restrict hop candidates to a window.
pub const HOP_WINDOW_THRESHOLD: usize = 256;
pub const HOP_WINDOW: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum KernelKind {
    Distribute { t: usize },
    NeighbourEmbed { t1: usize, t2: usize },
    HopEmbed { t1: usize, t2: usize, units: Vec<usize> },
    /// Gap bridged through an inner process on the middle node `mid`.
    ExtendedEmbed { t1: usize, t2: usize, mid: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelRef {
    pub q: usize,
    #[serde(flatten)]
    pub kind: KernelKind,
    pub antidiag_parity: u8,
}

impl KernelRef {
    pub fn distribute(q: usize, t: usize) -> Self {
        KernelRef { q, kind: KernelKind::Distribute { t }, antidiag_parity: 0 }
    }

    /// The `(t1, t2)` pair joined by an embedding kernel.
    pub fn span(&self) -> Option<(usize, usize)> {
        match self.kind {
            KernelKind::Distribute { .. } => None,
            KernelKind::NeighbourEmbed { t1, t2 }
            | KernelKind::HopEmbed { t1, t2, .. }
            | KernelKind::ExtendedEmbed { t1, t2, .. } => Some((t1, t2)),
        }
    }

    pub fn is_embedding(&self) -> bool {
        self.span().is_some()
    }

    pub fn is_hop(&self) -> bool {
        matches!(self.kind, KernelKind::HopEmbed { .. })
    }

    pub fn units(&self) -> &[usize] {
        match &self.kind {
            KernelKind::HopEmbed { units, .. } => units,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributablePacket {
    pub id: usize,
    pub q: usize,
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    /// Alternating distributing and embedding kernels.
    pub kernels: Vec<KernelRef>,
}

impl DistributablePacket {
    pub fn trivial(id: usize, q: usize, t: usize) -> Self {
        DistributablePacket { id, q, t: vec![t], kernels: vec![KernelRef::distribute(q, t)] }
    }

    /// Build a packet from a chain of embeddings sorted by `t1`.
    pub fn from_chain(id: usize, q: usize, chain: &[KernelRef]) -> Self {
        let (first, _) = chain[0].span().expect("embedding chain");
        let mut t = vec![first];
        let mut kernels = vec![KernelRef::distribute(q, first)];
        for e in chain {
            let (_, t2) = e.span().expect("embedding chain");
            kernels.push(e.clone());
            kernels.push(KernelRef::distribute(q, t2));
            t.push(t2);
        }
        DistributablePacket { id, q, t, kernels }
    }

    pub fn is_trivial(&self) -> bool {
        self.t.len() == 1
    }

    pub fn start(&self) -> usize {
        self.t[0]
    }

    pub fn end(&self) -> usize {
        *self.t.last().expect("packet is non-empty")
    }

    pub fn contains(&self, t: usize) -> bool {
        self.t.binary_search(&t).is_ok()
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &KernelRef> {
        self.kernels.iter().filter(|k| k.is_embedding())
    }

    /// The embedding joining `t` to its successor in `T`, if any.
    pub fn embedding_after(&self, t: usize) -> Option<&KernelRef> {
        self.embeddings().find(|k| k.span().map(|s| s.0) == Some(t))
    }

    /// Split into `T ≤ t1` and `T ≥ t2` at the embedding starting at `t1`.
    pub fn split_at(&self, t1: usize) -> Option<(DistributablePacket, DistributablePacket)> {
        let pos = self.kernels.iter().position(|k| k.span().map(|s| s.0) == Some(t1))?;
        let cut = self.t.binary_search(&t1).ok()? + 1;
        let left = DistributablePacket {
            id: self.id,
            q: self.q,
            t: self.t[..cut].to_vec(),
            kernels: self.kernels[..pos].to_vec(),
        };
        let right = DistributablePacket {
            id: self.id,
            q: self.q,
            t: self.t[cut..].to_vec(),
            kernels: self.kernels[pos + 1..].to_vec(),
        };
        Some((left, right))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketOptions {
    pub hopping: bool,
    /// Explicit hop window; `None` applies the size-based default.
    pub window: Option<usize>,
}

impl Default for PacketOptions {
    fn default() -> Self {
        PacketOptions { hopping: true, window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketSet {
    pub packets: Vec<DistributablePacket>,
    /// Neighbouring embeddings.
    pub neighbour: Vec<KernelRef>,
    /// Indecomposable hopping embeddings.
    pub hops: Vec<KernelRef>,
    /// Hops dropped during merging because they would interleave a packet.
    pub rejected: Vec<KernelRef>,
}

impl PacketSet {
    /// Index of the packet on `q` whose `T` contains `t`.
    pub fn packet_of(&self, q: usize, t: usize) -> Option<usize> {
        self.packets.iter().position(|p| p.q == q && p.contains(t))
    }

    pub fn on_qubit(&self, q: usize) -> impl Iterator<Item = &DistributablePacket> {
        self.packets.iter().filter(move |p| p.q == q)
    }
}

/// One singleton packet per endpoint of every global node.
pub fn identify_trivial_packets(converted: &ConvertedCircuit) -> Vec<DistributablePacket> {
    let mut out = Vec::new();
    for q in 0..converted.n_qubits() {
        for &id in converted.nodes_on(q) {
            let node = converted.node(id);
            if node.global {
                out.push(DistributablePacket::trivial(out.len(), q, node.t));
            }
        }
    }
    out
}

fn is_distributable_word(class: &SingleQubitClass) -> bool {
    class.is_distributable()
}

/// Neighbouring embeddings on `q` and the packets they merge into.
pub fn neighbouring(q: usize, converted: &ConvertedCircuit) -> (Vec<KernelRef>, Vec<DistributablePacket>) {
    let embeddings = neighbour_embeddings(q, converted);
    let (packets, _) = merge(q, converted, &embeddings, &[]);
    (embeddings, packets)
}

fn neighbour_embeddings(q: usize, converted: &ConvertedCircuit) -> Vec<KernelRef> {
    let ids = converted.nodes_on(q);
    let words = converted.words(q);
    let globals: Vec<usize> = (0..ids.len()).filter(|&k| converted.node(ids[k]).global).collect();
    let mut out = Vec::new();
    for pair in globals.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let gap = &words[a + 1..=b];
        if gap.iter().all(|w| is_distributable_word(&w.class)) {
            let parity = gap.iter().filter(|w| w.class == SingleQubitClass::AntiDiagonal).count() % 2;
            out.push(KernelRef {
                q,
                kind: KernelKind::NeighbourEmbed { t1: converted.node(ids[a]).t, t2: converted.node(ids[b]).t },
                antidiag_parity: parity as u8,
            });
        }
    }
    out
}

/// Indecomposable hopping embeddings on `q` and the packets they merge into.
pub fn hopping(q: usize, converted: &ConvertedCircuit) -> (Vec<KernelRef>, Vec<DistributablePacket>) {
    let embeddings = hop_embeddings(q, converted, None);
    let (packets, _) = merge(q, converted, &[], &embeddings);
    (embeddings, packets)
}

/// Chain-scan state: trailing `γ` of the last converted word and the
/// accumulated anti-diagonal parity.
#[derive(Debug, Clone, Copy)]
struct ChainState {
    gamma: f64,
    parity: u8,
}

fn phase_link(gamma: f64, alpha: f64) -> Option<u8> {
    let s = gamma + alpha;
    if !is_multiple_of_pi(s) {
        return None;
    }
    Some(if is_pi(canonical_phase(s)) { 1 } else { 0 })
}

/// `(α, γ)` alternatives of an interior word in the two-Hadamard form.
fn interior_alternatives(class: &SingleQubitClass, matrix: &crate::matrix::CMat) -> Vec<(f64, f64)> {
    match *class {
        SingleQubitClass::OneHadamard { alpha, gamma } => {
            vec![(alpha + std::f64::consts::FRAC_PI_2, gamma + std::f64::consts::FRAC_PI_2)]
        }
        SingleQubitClass::TwoHadamard { alpha, gamma, .. } => vec![(alpha, gamma)],
        SingleQubitClass::Diagonal | SingleQubitClass::AntiDiagonal => match distributable_form(matrix) {
            Some((n, a)) => {
                let sign = if n == 0 { 1.0 } else { -1.0 };
                vec![(a, 0.0), (0.0, sign * a)]
            }
            None => vec![],
        },
    }
}

fn push_state(states: &mut Vec<ChainState>, s: ChainState) {
    let dup = states
        .iter()
        .any(|o| o.parity == s.parity && is_multiple_of_pi(o.gamma - s.gamma) && !is_pi(canonical_phase(o.gamma - s.gamma)));
    if !dup {
        states.push(s);
    }
}

/// Valid hop candidates `(i, j)` (indices into `nodes_on(q)`) with parity.
fn hop_candidates(q: usize, converted: &ConvertedCircuit, window: Option<usize>) -> HashMap<(usize, usize), u8> {
    let ids = converted.nodes_on(q);
    let words = converted.words(q);
    let node = |k: usize| converted.node(ids[k]);
    let unit_ok = |k: usize| node(k).global && is_pi(node(k).theta);
    let m = ids.len();
    let window = window.unwrap_or(if m > HOP_WINDOW_THRESHOLD { HOP_WINDOW } else { usize::MAX });
    let mut valid = HashMap::new();
    for i in 0..m {
        if !node(i).global {
            continue;
        }
        let SingleQubitClass::OneHadamard { gamma: gamma_s, .. } = words[i + 1].class else {
            continue;
        };
        let mut states = vec![ChainState { gamma: gamma_s, parity: 0 }];
        // Node `j` is the unit being passed; word `j + 1` follows it.
        let mut j = i + 1;
        while j + 1 < m && j + 1 - i <= window && unit_ok(j) {
            let word = &words[j + 1];
            if node(j + 1).global {
                if let SingleQubitClass::OneHadamard { alpha: alpha_e, .. } = word.class {
                    if let Some(p) = states.iter().find_map(|s| phase_link(s.gamma, alpha_e).map(|n| s.parity ^ n)) {
                        valid.insert((i, j + 1), p);
                    }
                }
            }
            let mut next = Vec::new();
            for (alpha, gamma) in interior_alternatives(&word.class, &word.matrix) {
                for s in &states {
                    if let Some(n) = phase_link(s.gamma, alpha) {
                        push_state(&mut next, ChainState { gamma, parity: s.parity ^ n });
                    }
                }
            }
            states = next;
            if states.is_empty() {
                break;
            }
            j += 1;
        }
    }
    valid
}

fn hop_embeddings(q: usize, converted: &ConvertedCircuit, window: Option<usize>) -> Vec<KernelRef> {
    let ids = converted.nodes_on(q);
    let words = converted.words(q);
    let valid = hop_candidates(q, converted, window);
    let neighbour = |i: usize, j: usize| j == i + 1 && is_distributable_word(&words[j].class);
    let mut memo: HashMap<(usize, usize), bool> = HashMap::new();
    fn embeddable(
        i: usize,
        j: usize,
        valid: &HashMap<(usize, usize), u8>,
        neighbour: &dyn Fn(usize, usize) -> bool,
        memo: &mut HashMap<(usize, usize), bool>,
    ) -> bool {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = neighbour(i, j)
            || valid.contains_key(&(i, j))
            || (i + 1..j).any(|k| {
                embeddable(i, k, valid, neighbour, memo) && embeddable(k, j, valid, neighbour, memo)
            });
        memo.insert((i, j), v);
        v
    }
    let mut keys: Vec<_> = valid.keys().copied().collect();
    keys.sort_unstable_by_key(|&(i, j)| (j - i, i));
    let mut out = Vec::new();
    for (i, j) in keys {
        let split = (i + 1..j).any(|k| {
            embeddable(i, k, &valid, &neighbour, &mut memo) && embeddable(k, j, &valid, &neighbour, &mut memo)
        });
        if !split {
            let t = |k: usize| converted.node(ids[k]).t;
            out.push(KernelRef {
                q,
                kind: KernelKind::HopEmbed { t1: t(i), t2: t(j), units: (i + 1..j).map(t).collect() },
                antidiag_parity: valid[&(i, j)],
            });
        }
    }
    out.sort_by_key(|k| k.span());
    out
}

/// Merge embeddings on `q` into disjoint packets. Neighbouring embeddings
/// are always accepted; a hop is accepted only when the merged packet keeps
/// every consecutive pair of `T` directly joined by an accepted embedding.
fn merge(
    q: usize,
    converted: &ConvertedCircuit,
    neighbours: &[KernelRef],
    hops: &[KernelRef],
) -> (Vec<DistributablePacket>, Vec<KernelRef>) {
    let depths: Vec<usize> = converted
        .nodes_on(q)
        .iter()
        .map(|&id| converted.node(id))
        .filter(|n| n.global)
        .map(|n| n.t)
        .collect();
    let index: HashMap<usize, usize> = depths.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let mut comp: Vec<usize> = (0..depths.len()).collect();
    // Embedding leaving each depth, if accepted.
    let mut next: Vec<Option<KernelRef>> = vec![None; depths.len()];
    let mut has_prev = vec![false; depths.len()];
    for e in neighbours {
        let (t1, t2) = e.span().expect("embedding");
        let (a, b) = (index[&t1], index[&t2]);
        next[a] = Some(e.clone());
        has_prev[b] = true;
        let (ca, cb) = (comp[a], comp[b]);
        comp.iter_mut().filter(|c| **c == cb).for_each(|c| *c = ca);
    }
    let mut rejected = Vec::new();
    for e in hops {
        let (t1, t2) = e.span().expect("embedding");
        let (a, b) = (index[&t1], index[&t2]);
        let (ca, cb) = (comp[a], comp[b]);
        // Neither endpoint may already be joined in the hop's direction, and
        // no member of either component may sit strictly inside the hop.
        let inside = (0..depths.len()).any(|k| (comp[k] == ca || comp[k] == cb) && depths[k] > t1 && depths[k] < t2);
        if ca == cb || next[a].is_some() || has_prev[b] || inside {
            rejected.push(e.clone());
            continue;
        }
        next[a] = Some(e.clone());
        has_prev[b] = true;
        comp.iter_mut().filter(|c| **c == cb).for_each(|c| *c = ca);
    }
    let mut packets = Vec::new();
    for start in 0..depths.len() {
        if has_prev[start] {
            continue;
        }
        let mut chain = Vec::new();
        let mut k = start;
        while let Some(e) = &next[k] {
            chain.push(e.clone());
            k = index[&e.span().expect("embedding").1];
        }
        packets.push(if chain.is_empty() {
            DistributablePacket::trivial(0, q, depths[start])
        } else {
            DistributablePacket::from_chain(0, q, &chain)
        });
    }
    packets.sort_by_key(|p| p.start());
    (packets, rejected)
}

/// Full identification with default options.
pub fn build_packets(converted: &ConvertedCircuit) -> PacketSet {
    build_packets_with(converted, PacketOptions::default())
}

pub fn build_packets_with(converted: &ConvertedCircuit, options: PacketOptions) -> PacketSet {
    let per_qubit: Vec<_> = (0..converted.n_qubits())
        .into_par_iter()
        .map(|q| {
            let nb = neighbour_embeddings(q, converted);
            let hops = if options.hopping { hop_embeddings(q, converted, options.window) } else { Vec::new() };
            let (packets, rejected) = merge(q, converted, &nb, &hops);
            (nb, hops, packets, rejected)
        })
        .collect();
    let mut set = PacketSet { packets: Vec::new(), neighbour: Vec::new(), hops: Vec::new(), rejected: Vec::new() };
    for (nb, hops, packets, rejected) in per_qubit {
        set.neighbour.extend(nb);
        set.hops.extend(hops);
        set.rejected.extend(rejected);
        set.packets.extend(packets);
    }
    for (id, p) in set.packets.iter_mut().enumerate() {
        p.id = id;
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use crate::conversion::to_control_phase_form;

    fn convert(qubits: &str, a: &str, b: &str, gates: &str) -> ConvertedCircuit {
        let text = format!(r#"{{"qubits":[{qubits}],"partition":{{"A":[{a}],"B":[{b}]}},"gates":[{gates}]}}"#);
        to_control_phase_form(&parse_circuit(&text).unwrap()).unwrap()
    }

    fn cz(x: &str, y: &str) -> String {
        format!(r#"{{"type":"cz","qubits":["{x}","{y}"]}}"#)
    }

    fn one(kind: &str, x: &str) -> String {
        format!(r#"{{"type":"{kind}","qubits":["{x}"]}}"#)
    }

    fn rz(x: &str, theta: f64) -> String {
        format!(r#"{{"type":"rz","qubits":["{x}"],"theta":{theta}}}"#)
    }

    fn cp(x: &str, y: &str, theta: f64) -> String {
        format!(r#"{{"type":"cp","qubits":["{x}","{y}"],"theta":{theta}}}"#)
    }

    #[test]
    fn trivial_packets_skip_local_nodes() {
        let c = convert(r#""a","a2","b""#, r#""a","a2""#, r#""b""#, &[cz("a", "b"), cz("a", "a2")].join(","));
        assert_eq!(identify_trivial_packets(&c).len(), 2);
    }

    #[test]
    fn neighbouring_diagonal_and_antidiagonal() {
        let c = convert(r#""a","b""#, r#""a""#, r#""b""#, &[cz("a", "b"), rz("a", 0.4), cz("a", "b")].join(","));
        let (emb, packets) = neighbouring(0, &c);
        assert_eq!(emb.len(), 1);
        assert_eq!(packets.len(), 1);
        assert_eq!(packets[0].t, vec![0, 2]);

        let c = convert(r#""a","b""#, r#""a""#, r#""b""#, &[cz("a", "b"), one("x", "a"), cz("a", "b")].join(","));
        let (emb, _) = neighbouring(0, &c);
        assert_eq!(emb[0].antidiag_parity, 1);

        let c = convert(r#""a","b""#, r#""a""#, r#""b""#, &[cz("a", "b"), one("h", "a"), cz("a", "b")].join(","));
        assert!(neighbouring(0, &c).0.is_empty());
    }

    #[test]
    fn neighbouring_spans_local_nodes() {
        let c = convert(
            r#""a","a2","b""#,
            r#""a","a2""#,
            r#""b""#,
            &[cz("a", "b"), cp("a", "a2", 0.3), cz("a", "b")].join(","),
        );
        let (emb, _) = neighbouring(0, &c);
        assert_eq!(emb.len(), 1);
        assert_eq!(emb[0].span(), Some((0, 2)));
    }

    fn hop_circuit(mid_theta: f64, mid_word: &str) -> ConvertedCircuit {
        let gates = [
            cz("a", "b"),
            one("h", "a"),
            cp("a", "b2", mid_theta),
            mid_word.to_string(),
            one("h", "a"),
            cz("a", "b"),
        ];
        let gates: Vec<_> = gates.iter().filter(|g| !g.is_empty()).cloned().collect();
        convert(r#""a","b","b2""#, r#""a""#, r#""b","b2""#, &gates.join(","))
    }

    #[test]
    fn single_unit_hop() {
        let c = hop_circuit(std::f64::consts::PI, "");
        let (hops, packets) = hopping(0, &c);
        assert_eq!(hops.len(), 1);
        assert_eq!(hops[0].units(), &[2]);
        assert_eq!(hops[0].span(), Some((0, 4)));
        assert!(packets.iter().any(|p| p.t == vec![0, 4]));
    }

    #[test]
    fn hop_requires_pi_unit() {
        let c = hop_circuit(std::f64::consts::FRAC_PI_2, "");
        assert!(hopping(0, &c).0.is_empty());
    }

    #[test]
    fn phase_condition_rejects_offset() {
        let c = hop_circuit(std::f64::consts::PI, &rz("a", 0.3));
        assert!(hopping(0, &c).0.is_empty());
        let c = hop_circuit(std::f64::consts::PI, &rz("a", std::f64::consts::PI));
        let (hops, _) = hopping(0, &c);
        assert_eq!(hops.len(), 1);
        assert_eq!(hops[0].antidiag_parity, 1);
    }

    #[test]
    fn decomposable_hops_are_not_emitted() {
        let gates = [
            cz("a", "b"),
            one("h", "a"),
            cz("a", "b2"),
            one("h", "a"),
            cz("a", "b"),
            one("h", "a"),
            cz("a", "b2"),
            one("h", "a"),
            cz("a", "b"),
        ];
        let c = convert(r#""a","b","b2""#, r#""a""#, r#""b","b2""#, &gates.join(","));
        let (hops, packets) = hopping(0, &c);
        let spans: Vec<_> = hops.iter().filter_map(|h| h.span()).collect();
        assert!(spans.contains(&(0, 4)) && spans.contains(&(4, 8)) && spans.contains(&(2, 6)));
        assert!(!spans.contains(&(0, 8)));
        assert!(packets.iter().any(|p| p.t == vec![0, 4, 8]));
    }

    #[test]
    fn packets_partition_global_nodes() {
        let c = hop_circuit(std::f64::consts::PI, "");
        let set = build_packets(&c);
        let mut on_a: Vec<usize> = set.on_qubit(0).flat_map(|p| p.t.clone()).collect();
        on_a.sort();
        assert_eq!(on_a, vec![0, 2, 4]);
        assert_eq!(set.packets.iter().filter(|p| p.q == 0).count(), 2);
        let (l, r) = set.packets[set.packet_of(0, 0).unwrap()].split_at(0).unwrap();
        assert_eq!((l.t, r.t), (vec![0], vec![4]));
    }

    #[test]
    fn plain_czs_form_one_packet() {
        let c = convert(r#""a","b""#, r#""a""#, r#""b""#, &[cz("a", "b"), cz("a", "b"), cz("a", "b")].join(","));
        let set = build_packets(&c);
        assert_eq!(set.on_qubit(0).count(), 1);
        assert_eq!(set.on_qubit(0).next().unwrap().kernels.len(), 5);
    }
}
