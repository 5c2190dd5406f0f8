//! Control-phase normal form.
//!
//! Every two-qubit gate becomes `(G ⊗ G')·C_V(θ)·(F ⊗ F')`; the dressings are
//! emitted as ordinary single-qubit operations in the same column so that the
//! per-qubit words between control-phase nodes absorb them.

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{self, Circuit, GateSpec, Side};
use crate::matrix::{
    self, canonical_phase, classify_single_qubit, diagonalize_2x2_unitary, equal_up_to_global_phase, gates,
    is_pi, is_zero_phase, CMat, MatrixError, SingleQubitClass, TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConversionError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("converted block at depth {t} deviates from the source gate by {deviation:.3e}")]
    BlockMismatch { t: usize, deviation: f64 },
}

/// A control-phase node `C_V(θ)` on `(q1, q2)` at depth `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpNode {
    pub q1: usize,
    pub q2: usize,
    pub t: usize,
    /// Index of the source gate within its column.
    pub slot: usize,
    pub theta: f64,
    pub global: bool,
}

impl CpNode {
    pub fn pos(&self) -> (usize, usize) {
        (self.t, self.slot)
    }

    pub fn touches(&self, q: usize) -> bool {
        self.q1 == q || self.q2 == q
    }

    pub fn partner(&self, q: usize) -> usize {
        if self.q1 == q {
            self.q2
        } else {
            self.q1
        }
    }

    pub fn is_h_unit_phase(&self) -> bool {
        is_pi(self.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitBlock {
    pub t: usize,
    pub node: Option<usize>,
    pub pre: Vec<(usize, CMat)>,
    pub post: Vec<(usize, CMat)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvOp {
    Single { qubit: usize, matrix: CMat },
    Cp(usize),
}

/// Product of the single-qubit operations on `q` between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub q: usize,
    /// Node that precedes the word (`None` at the circuit start).
    pub after: Option<usize>,
    /// Node that follows the word (`None` at the circuit end).
    pub before: Option<usize>,
    pub matrix: CMat,
    pub class: SingleQubitClass,
    pub boundary: bool,
}

#[derive(Debug, Clone)]
pub struct ConvertedCircuit {
    source: Circuit,
    columns: Vec<Vec<ConvOp>>,
    nodes: Vec<CpNode>,
    blocks: Vec<TwoQubitBlock>,
    per_qubit: Vec<Vec<usize>>,
    words: Vec<Vec<Word>>,
    dropped: usize,
}

/// Rewrite every two-qubit gate into a dressed control-phase node.
pub fn to_control_phase_form(circuit: &Circuit) -> Result<ConvertedCircuit, ConversionError> {
    let partition = circuit.partition();
    let mut columns = Vec::with_capacity(circuit.depth());
    let mut nodes = Vec::new();
    let mut blocks = Vec::new();
    let mut dropped = 0;
    for (t, col) in circuit.columns().iter().enumerate() {
        let mut ops = Vec::new();
        for (slot, gate) in col.iter().enumerate() {
            let mut push_node = |q1: usize, q2: usize, theta: f64, ops: &mut Vec<ConvOp>| {
                let theta = canonical_phase(theta);
                if is_zero_phase(theta) {
                    dropped += 1;
                    return None;
                }
                let global = partition.side(q1) != partition.side(q2);
                nodes.push(CpNode { q1, q2, t, slot, theta, global });
                ops.push(ConvOp::Cp(nodes.len() - 1));
                Some(nodes.len() - 1)
            };
            match gate {
                GateSpec::SingleQubit { qubit, matrix } => {
                    ops.push(ConvOp::Single { qubit: *qubit, matrix: matrix.clone() });
                }
                GateSpec::ControlPhase { q1, q2, theta } => {
                    let node = push_node(*q1, *q2, *theta, &mut ops);
                    blocks.push(TwoQubitBlock { t, node, pre: vec![], post: vec![] });
                }
                GateSpec::ControlledUnitary { control, target, u0, u1 } => {
                    let (c, tg) = (*control, *target);
                    let (w, theta0, theta1) = diagonalize_2x2_unitary(&(&u0.adjoint() * u1))?;
                    let pre = vec![(tg, w.adjoint())];
                    let post = vec![(c, gates::v(theta0)), (tg, u0 * &w)];
                    push_singles(&mut ops, &pre);
                    let node = push_node(c, tg, theta1 - theta0, &mut ops);
                    push_singles(&mut ops, &post);
                    let block = TwoQubitBlock { t, node, pre, post };
                    check_block(&block, gate, node.map(|i| &nodes[i]))?;
                    blocks.push(block);
                }
            }
        }
        columns.push(ops);
    }
    let n = circuit.n_qubits();
    let mut per_qubit = vec![Vec::new(); n];
    for (i, node) in nodes.iter().enumerate() {
        per_qubit[node.q1].push(i);
        per_qubit[node.q2].push(i);
    }
    let mut converted =
        ConvertedCircuit { source: circuit.clone(), columns, nodes, blocks, per_qubit, words: Vec::new(), dropped };
    converted.words = (0..n).map(|q| converted.build_words(q)).collect::<Result<_, _>>()?;
    Ok(converted)
}

fn push_singles(ops: &mut Vec<ConvOp>, singles: &[(usize, CMat)]) {
    for (q, m) in singles {
        if m.max_abs_diff(&CMat::identity(2)).unwrap_or(1.0) > TOL {
            ops.push(ConvOp::Single { qubit: *q, matrix: m.clone() });
        }
    }
}

/// Compare a converted block against its source gate on the two wires.
fn check_block(block: &TwoQubitBlock, gate: &GateSpec, node: Option<&CpNode>) -> Result<(), ConversionError> {
    let qs = gate.qubits();
    let wire = |q: usize| if q == qs[0] { 0 } else { 1 };
    let mut u = CMat::identity(4);
    for (q, m) in &block.pre {
        matrix::apply_gate(&mut u, m, &[wire(*q)], 2)?;
    }
    if let Some(n) = node {
        matrix::apply_gate(&mut u, &gates::cphase(n.theta), &[0, 1], 2)?;
    }
    for (q, m) in &block.post {
        matrix::apply_gate(&mut u, m, &[wire(*q)], 2)?;
    }
    let target = gate.matrix();
    let (eq, _) = equal_up_to_global_phase(&u, &target, TOL)?;
    if !eq {
        let deviation = matrix::phase_deviation(&u, &target)?.0;
        return Err(ConversionError::BlockMismatch { t: block.t, deviation });
    }
    Ok(())
}

impl ConvertedCircuit {
    pub fn source(&self) -> &Circuit {
        &self.source
    }

    pub fn n_qubits(&self) -> usize {
        self.source.n_qubits()
    }

    pub fn side(&self, q: usize) -> Side {
        self.source.partition().side(q)
    }

    pub fn columns(&self) -> &[Vec<ConvOp>] {
        &self.columns
    }

    pub fn nodes(&self) -> &[CpNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &CpNode {
        &self.nodes[id]
    }

    pub fn blocks(&self) -> &[TwoQubitBlock] {
        &self.blocks
    }

    /// Number of two-qubit gates removed because their phase snapped to 0.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Node ids on `q`, in schedule order.
    pub fn nodes_on(&self, q: usize) -> &[usize] {
        &self.per_qubit[q]
    }

    /// Index of the node at depth `t` within `nodes_on(q)`.
    pub fn node_index_at(&self, q: usize, t: usize) -> Option<usize> {
        self.per_qubit[q].iter().position(|&id| self.nodes[id].t == t)
    }

    pub fn node_at(&self, q: usize, t: usize) -> Option<&CpNode> {
        self.node_index_at(q, t).map(|k| &self.nodes[self.per_qubit[q][k]])
    }

    pub fn global_nodes(&self) -> impl Iterator<Item = (usize, &CpNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.global)
    }

    /// Words on `q`: leading boundary, one per gap between nodes, trailing boundary.
    pub fn words(&self, q: usize) -> &[Word] {
        &self.words[q]
    }

    /// The word between the `k`-th and `(k+1)`-th node on `q`.
    pub fn word_after(&self, q: usize, k: usize) -> &Word {
        &self.words[q][k + 1]
    }

    fn build_words(&self, q: usize) -> Result<Vec<Word>, ConversionError> {
        let mut words = Vec::new();
        let mut current = CMat::identity(2);
        let mut after = None;
        for op in self.columns.iter().flatten() {
            match op {
                ConvOp::Single { qubit, matrix } if *qubit == q => current = matrix * &current,
                ConvOp::Cp(id) if self.nodes[*id].touches(q) => {
                    words.push(make_word(q, after, Some(*id), std::mem::replace(&mut current, CMat::identity(2)))?);
                    after = Some(*id);
                }
                _ => {}
            }
        }
        words.push(make_word(q, after, None, current)?);
        Ok(words)
    }

    /// Dense unitary of the converted form.
    pub fn unitary(&self) -> Result<CMat, circuit::CircuitError> {
        let n = self.n_qubits();
        if n > circuit::MAX_DENSE_QUBITS {
            return Err(circuit::CircuitError::TooLarge(n));
        }
        let mut u = CMat::identity(1 << n);
        for op in self.columns.iter().flatten() {
            match op {
                ConvOp::Single { qubit, matrix } => matrix::apply_gate(&mut u, matrix, &[*qubit], n)?,
                ConvOp::Cp(id) => {
                    let node = &self.nodes[*id];
                    matrix::apply_gate(&mut u, &gates::cphase(node.theta), &[node.q1, node.q2], n)?
                }
            }
        }
        Ok(u)
    }

    /// The converted circuit as a gate sequence in the source register.
    pub fn to_circuit(&self) -> Circuit {
        let gates = self
            .columns
            .iter()
            .flatten()
            .map(|op| match op {
                ConvOp::Single { qubit, matrix } => GateSpec::SingleQubit { qubit: *qubit, matrix: matrix.clone() },
                ConvOp::Cp(id) => {
                    let n = &self.nodes[*id];
                    GateSpec::ControlPhase { q1: n.q1, q2: n.q2, theta: n.theta }
                }
            })
            .collect();
        let names = self.source.qubits().iter().map(|q| q.name.clone()).collect();
        Circuit::new(names, self.source.partition().sides().to_vec(), gates).expect("converted circuit is valid")
    }
}

fn make_word(q: usize, after: Option<usize>, before: Option<usize>, matrix: CMat) -> Result<Word, ConversionError> {
    let class = classify_single_qubit(&matrix)?;
    Ok(Word { q, after, before, boundary: after.is_none() || before.is_none(), matrix, class })
}

/// Convenience wrapper returning the words of `q`.
pub fn collect_inter_node_words(converted: &ConvertedCircuit, q: usize) -> &[Word] {
    converted.words(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use crate::matrix::gates::{h, rz};
    use std::f64::consts::PI;

    fn two_qubit(gates_json: &str) -> Circuit {
        parse_circuit(&format!(
            r#"{{"qubits":["a","b"],"partition":{{"A":["a"],"B":["b"]}},"gates":[{gates_json}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn cnot_becomes_hadamard_dressed_cz() {
        let c = two_qubit(r#"{"type":"cnot","qubits":["a","b"]}"#);
        let conv = to_control_phase_form(&c).unwrap();
        assert_eq!(conv.nodes().len(), 1);
        let node = conv.node(0);
        assert!(node.global && is_pi(node.theta));
        let block = &conv.blocks()[0];
        assert!(block.pre[0].1.max_abs_diff(&h()).unwrap() < 1e-12);
        assert_eq!(conv.words(1)[0].class, SingleQubitClass::OneHadamard { alpha: 0.0, gamma: 0.0 });
    }

    #[test]
    fn control_phase_is_untouched() {
        let c = two_qubit(r#"{"type":"cp","qubits":["a","b"],"theta":0.7}"#);
        let conv = to_control_phase_form(&c).unwrap();
        assert!((conv.node(0).theta - 0.7).abs() < 1e-15);
        assert!(conv.words(0).iter().all(|w| w.class == SingleQubitClass::Diagonal));
    }

    #[test]
    fn zero_phase_gates_are_dropped() {
        let c = two_qubit(r#"{"type":"cp","qubits":["a","b"],"theta":6.283185307179586}"#);
        let conv = to_control_phase_form(&c).unwrap();
        assert!(conv.nodes().is_empty());
        assert_eq!(conv.dropped(), 1);
    }

    #[test]
    fn words_between_nodes() {
        let c = two_qubit(
            r#"{"type":"cz","qubits":["a","b"]},{"type":"cz","qubits":["a","b"]},
               {"type":"h","qubits":["a"]},{"type":"cz","qubits":["a","b"]},
               {"type":"rz","qubits":["a"],"theta":0.3},{"type":"h","qubits":["a"]},
               {"type":"rz","qubits":["a"],"theta":0.9},{"type":"h","qubits":["a"]},
               {"type":"rz","qubits":["a"],"theta":1.7},{"type":"cz","qubits":["a","b"]}"#,
        );
        let conv = to_control_phase_form(&c).unwrap();
        let words = collect_inter_node_words(&conv, 0);
        assert_eq!(words.len(), 5);
        assert!(words[0].boundary && words[4].boundary);
        assert_eq!(words[1].class, SingleQubitClass::Diagonal);
        assert_eq!(words[2].class, SingleQubitClass::OneHadamard { alpha: 0.0, gamma: 0.0 });
        match words[3].class {
            SingleQubitClass::TwoHadamard { alpha, beta, gamma } => {
                let expect = &(&(&(&rz(1.7) * &h()) * &rz(0.9)) * &h()) * &rz(0.3);
                let rebuilt = words[3].class.reconstruct().unwrap();
                assert!(equal_up_to_global_phase(&rebuilt, &expect, TOL).unwrap().0);
                assert!((alpha - 0.3).abs() < 1e-9 && (beta - 0.9).abs() < 1e-9 && (gamma - 1.7).abs() < 1e-9);
            }
            other => panic!("unexpected class {other:?}"),
        }
    }

    #[test]
    fn swap_keeps_three_nodes() {
        let c = two_qubit(r#"{"type":"swap","qubits":["a","b"]}"#);
        let conv = to_control_phase_form(&c).unwrap();
        assert_eq!(conv.nodes().len(), 3);
        assert!(conv.nodes().iter().all(|n| is_pi(n.theta) && n.global));
        let (eq, _) =
            equal_up_to_global_phase(&conv.unitary().unwrap(), &circuit::full_unitary(&c).unwrap(), TOL).unwrap();
        assert!(eq);
        let _ = PI;
    }
}
