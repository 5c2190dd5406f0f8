//! Circuit IR: named qubits, an A|B partition and a column schedule.
//!
//! Gates arrive as a flat sequence and are packed greedily into columns; the
//! resulting column index is the depth `t` used by every later pass.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{self, gates, CMat, MatrixError};

/// Largest register for which dense operators are built.
pub const MAX_DENSE_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("gate {0} is not unitary")]
    NonUnitaryGate(usize),
    #[error("overlapping gates in column {0}")]
    OverlappingGates(usize),
    #[error("unknown qubit '{0}'")]
    UnknownQubit(String),
    #[error("gate {index}: {reason}")]
    InvalidGate { index: usize, reason: String },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("{0} qubits exceed the dense limit of {MAX_DENSE_QUBITS}")]
    TooLarge(usize),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitId {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    side_of: Vec<Side>,
}

impl Partition {
    pub fn new(side_of: Vec<Side>) -> Result<Self, CircuitError> {
        for s in [Side::A, Side::B] {
            if !side_of.contains(&s) {
                return Err(CircuitError::InvalidPartition(format!("side {s:?} is empty")));
            }
        }
        Ok(Partition { side_of })
    }

    pub fn side(&self, q: usize) -> Side {
        self.side_of[q]
    }

    pub fn sides(&self) -> &[Side] {
        &self.side_of
    }

    pub fn qubits_on(&self, s: Side) -> Vec<usize> {
        (0..self.side_of.len()).filter(|&q| self.side_of[q] == s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateSpec {
    SingleQubit { qubit: usize, matrix: CMat },
    /// `|0⟩⟨0|_c ⊗ u0 + |1⟩⟨1|_c ⊗ u1`.
    ControlledUnitary { control: usize, target: usize, u0: CMat, u1: CMat },
    ControlPhase { q1: usize, q2: usize, theta: f64 },
}

impl GateSpec {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            GateSpec::SingleQubit { qubit, .. } => vec![qubit],
            GateSpec::ControlledUnitary { control, target, .. } => vec![control, target],
            GateSpec::ControlPhase { q1, q2, .. } => vec![q1, q2],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        !matches!(self, GateSpec::SingleQubit { .. })
    }

    /// Operator on `self.qubits()` in that order.
    pub fn matrix(&self) -> CMat {
        match self {
            GateSpec::SingleQubit { matrix, .. } => matrix.clone(),
            GateSpec::ControlledUnitary { u0, u1, .. } => gates::controlled(u0, u1),
            GateSpec::ControlPhase { theta, .. } => gates::cphase(*theta),
        }
    }

    fn check_unitary(&self) -> bool {
        match self {
            GateSpec::SingleQubit { matrix, .. } => matrix.is_unitary(matrix::TOL),
            GateSpec::ControlledUnitary { u0, u1, .. } => {
                u0.is_unitary(matrix::TOL) && u1.is_unitary(matrix::TOL)
            }
            GateSpec::ControlPhase { theta, .. } => theta.is_finite(),
        }
    }
}

/// True iff the gate acts on both sides of the partition.
pub fn is_global(gate: &GateSpec, partition: &Partition) -> bool {
    let qs = gate.qubits();
    qs.iter().any(|&q| partition.side(q) != partition.side(qs[0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    qubits: Vec<QubitId>,
    partition: Partition,
    columns: Vec<Vec<GateSpec>>,
}

impl Circuit {
    /// Validate and greedily schedule a gate sequence.
    pub fn new(names: Vec<String>, sides: Vec<Side>, gates: Vec<GateSpec>) -> Result<Self, CircuitError> {
        let (qubits, partition) = Self::register(names, sides)?;
        let n = qubits.len();
        let mut columns: Vec<Vec<GateSpec>> = Vec::new();
        let mut next_free = vec![0usize; n];
        for (index, gate) in gates.into_iter().enumerate() {
            let qs = gate.qubits();
            if let Some(&q) = qs.iter().find(|&&q| q >= n) {
                return Err(CircuitError::InvalidGate { index, reason: format!("qubit index {q} out of range") });
            }
            if qs.len() == 2 && qs[0] == qs[1] {
                return Err(CircuitError::InvalidGate { index, reason: "repeated qubit".into() });
            }
            if !gate.check_unitary() {
                return Err(CircuitError::NonUnitaryGate(index));
            }
            let t = qs.iter().map(|&q| next_free[q]).max().unwrap_or(0);
            if t == columns.len() {
                columns.push(Vec::new());
            }
            columns[t].push(gate);
            for q in qs {
                next_free[q] = t + 1;
            }
        }
        Ok(Circuit { qubits, partition, columns })
    }

    /// Build from explicit columns, rejecting overlapping supports.
    pub fn from_columns(
        names: Vec<String>,
        sides: Vec<Side>,
        columns: Vec<Vec<GateSpec>>,
    ) -> Result<Self, CircuitError> {
        let (qubits, partition) = Self::register(names, sides)?;
        let mut index = 0;
        for (t, col) in columns.iter().enumerate() {
            let mut used = vec![false; qubits.len()];
            for gate in col {
                if !gate.check_unitary() {
                    return Err(CircuitError::NonUnitaryGate(index));
                }
                for q in gate.qubits() {
                    if q >= used.len() {
                        return Err(CircuitError::InvalidGate { index, reason: format!("qubit index {q} out of range") });
                    }
                    if std::mem::replace(&mut used[q], true) {
                        return Err(CircuitError::OverlappingGates(t));
                    }
                }
                index += 1;
            }
        }
        Ok(Circuit { qubits, partition, columns })
    }

    fn register(names: Vec<String>, sides: Vec<Side>) -> Result<(Vec<QubitId>, Partition), CircuitError> {
        if names.len() != sides.len() {
            return Err(CircuitError::InvalidPartition("one side per qubit required".into()));
        }
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if seen.insert(name.clone(), i).is_some() {
                return Err(CircuitError::InvalidPartition(format!("duplicate qubit '{name}'")));
            }
        }
        let partition = Partition::new(sides)?;
        let qubits = names.into_iter().enumerate().map(|(index, name)| QubitId { name, index }).collect();
        Ok((qubits, partition))
    }

    pub fn qubits(&self) -> &[QubitId] {
        &self.qubits
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn columns(&self) -> &[Vec<GateSpec>] {
        &self.columns
    }

    pub fn depth(&self) -> usize {
        self.columns.len()
    }

    pub fn name(&self, q: usize) -> &str {
        &self.qubits[q].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.qubits.iter().position(|q| q.name == name)
    }

    /// The gate acting on `q` at depth `t`, if any.
    pub fn gate_at(&self, q: usize, t: usize) -> Option<&GateSpec> {
        self.columns.get(t)?.iter().find(|g| g.qubits().contains(&q))
    }

    /// Gates in schedule order with their `(t, position in column)`.
    pub fn gates(&self) -> impl Iterator<Item = (usize, usize, &GateSpec)> {
        self.columns.iter().enumerate().flat_map(|(t, col)| col.iter().enumerate().map(move |(k, g)| (t, k, g)))
    }

    pub fn global_gate_count(&self) -> usize {
        self.gates().filter(|(_, _, g)| is_global(g, &self.partition)).count()
    }

    /// Canonical JSON text; parsing it yields an equal circuit.
    pub fn to_json(&self) -> String {
        let file = CircuitFile::from_circuit(self);
        serde_json::to_string_pretty(&file).expect("circuit serialization")
    }
}

/// Parse the JSON circuit format.
pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    let file: CircuitFile = serde_json::from_str(text)
        .map_err(|e| CircuitError::ParseError { line: e.line(), message: e.to_string() })?;
    file.into_circuit()
}

/// The dense `2^η` unitary, column 0 applied first.
pub fn full_unitary(circuit: &Circuit) -> Result<CMat, CircuitError> {
    let n = circuit.n_qubits();
    if n > MAX_DENSE_QUBITS {
        return Err(CircuitError::TooLarge(n));
    }
    let mut u = CMat::identity(1 << n);
    for (_, _, gate) in circuit.gates() {
        matrix::apply_gate(&mut u, &gate.matrix(), &gate.qubits(), n)?;
    }
    Ok(u)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitFile {
    qubits: Vec<String>,
    partition: PartitionFile,
    gates: Vec<GateFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    #[serde(rename = "A")]
    a: Vec<String>,
    #[serde(rename = "B")]
    b: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateFile {
    #[serde(rename = "type")]
    kind: String,
    qubits: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<CMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u0: Option<CMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u1: Option<CMat>,
}

impl CircuitFile {
    fn from_circuit(c: &Circuit) -> Self {
        let names = |s: Side| c.partition.qubits_on(s).into_iter().map(|q| c.name(q).to_string()).collect();
        let gates = c
            .gates()
            .map(|(_, _, g)| {
                let qubits = g.qubits().into_iter().map(|q| c.name(q).to_string()).collect();
                let mut f = GateFile { kind: String::new(), qubits, theta: None, matrix: None, u0: None, u1: None };
                match g {
                    GateSpec::SingleQubit { matrix, .. } => {
                        f.kind = "u1".into();
                        f.matrix = Some(matrix.clone());
                    }
                    GateSpec::ControlledUnitary { u0, u1, .. } => {
                        f.kind = "cu".into();
                        f.u0 = Some(u0.clone());
                        f.u1 = Some(u1.clone());
                    }
                    GateSpec::ControlPhase { theta, .. } => {
                        f.kind = "cp".into();
                        f.theta = Some(*theta);
                    }
                }
                f
            })
            .collect();
        CircuitFile {
            qubits: c.qubits.iter().map(|q| q.name.clone()).collect(),
            partition: PartitionFile { a: names(Side::A), b: names(Side::B) },
            gates,
        }
    }

    fn into_circuit(self) -> Result<Circuit, CircuitError> {
        let index: HashMap<&str, usize> = self.qubits.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |name: &str| index.get(name).copied().ok_or_else(|| CircuitError::UnknownQubit(name.to_string()));
        let mut sides: Vec<Option<Side>> = vec![None; self.qubits.len()];
        for (side, list) in [(Side::A, &self.partition.a), (Side::B, &self.partition.b)] {
            for name in list {
                let q = lookup(name)?;
                if sides[q].replace(side).is_some() {
                    return Err(CircuitError::InvalidPartition(format!("qubit '{name}' listed twice")));
                }
            }
        }
        let sides = sides
            .into_iter()
            .enumerate()
            .map(|(q, s)| s.ok_or_else(|| CircuitError::InvalidPartition(format!("qubit '{}' has no side", self.qubits[q]))))
            .collect::<Result<Vec<_>, _>>()?;

        let mut gates = Vec::new();
        for (index, g) in self.gates.iter().enumerate() {
            let qs = g.qubits.iter().map(|n| lookup(n)).collect::<Result<Vec<_>, _>>()?;
            gates.extend(expand_gate(index, g, &qs)?);
        }
        Circuit::new(self.qubits, sides, gates)
    }
}

fn expand_gate(index: usize, g: &GateFile, qs: &[usize]) -> Result<Vec<GateSpec>, CircuitError> {
    let invalid = |reason: &str| CircuitError::InvalidGate { index, reason: reason.to_string() };
    let arity = match g.kind.as_str() {
        "h" | "x" | "z" | "rz" | "u1" => 1,
        "cz" | "cnot" | "swap" | "cp" | "cu" => 2,
        other => return Err(invalid(&format!("unknown gate type '{other}'"))),
    };
    if qs.len() != arity {
        return Err(invalid(&format!("'{}' takes {arity} qubit(s), got {}", g.kind, qs.len())));
    }
    let theta = || g.theta.ok_or_else(|| invalid("missing 'theta'"));
    let mat = |m: &Option<CMat>, key: &str| m.clone().ok_or_else(|| invalid(&format!("missing '{key}'")));
    let single = |matrix: CMat| GateSpec::SingleQubit { qubit: qs[0], matrix };
    let cnot = |c: usize, t: usize| GateSpec::ControlledUnitary {
        control: c,
        target: t,
        u0: CMat::identity(2),
        u1: gates::x(),
    };
    let out = match g.kind.as_str() {
        "h" => vec![single(gates::h())],
        "x" => vec![single(gates::x())],
        "z" => vec![single(gates::z())],
        "rz" => vec![single(gates::rz(theta()?))],
        "u1" => {
            let m = mat(&g.matrix, "matrix")?;
            if m.rows() != 2 || m.cols() != 2 {
                return Err(invalid("'matrix' must be 2x2"));
            }
            vec![single(m)]
        }
        "cz" => vec![GateSpec::ControlPhase { q1: qs[0], q2: qs[1], theta: std::f64::consts::PI }],
        "cp" => vec![GateSpec::ControlPhase { q1: qs[0], q2: qs[1], theta: theta()? }],
        "cnot" => vec![cnot(qs[0], qs[1])],
        "swap" => vec![cnot(qs[0], qs[1]), cnot(qs[1], qs[0]), cnot(qs[0], qs[1])],
        "cu" => {
            let (u0, u1) = (mat(&g.u0, "u0")?, mat(&g.u1, "u1")?);
            if [&u0, &u1].iter().any(|m| m.rows() != 2 || m.cols() != 2) {
                return Err(invalid("'u0'/'u1' must be 2x2"));
            }
            vec![GateSpec::ControlledUnitary { control: qs[0], target: qs[1], u0, u1 }]
        }
        _ => unreachable!(),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{equal_up_to_global_phase, TOL};

    const CZ_GLOBAL: &str = r#"{"qubits":["q0","q1","q2"],"partition":{"A":["q0","q1"],"B":["q2"]},
        "gates":[{"type":"cz","qubits":["q0","q2"]}]}"#;

    #[test]
    fn single_global_cz() {
        let c = parse_circuit(CZ_GLOBAL).unwrap();
        assert_eq!(c.depth(), 1);
        assert!(is_global(&c.columns()[0][0], c.partition()));
        assert_eq!(c.global_gate_count(), 1);
    }

    #[test]
    fn sequential_and_parallel_packing() {
        let seq = r#"{"qubits":["q0","q1"],"partition":{"A":["q0"],"B":["q1"]},
            "gates":[{"type":"h","qubits":["q0"]},{"type":"x","qubits":["q0"]}]}"#;
        assert_eq!(parse_circuit(seq).unwrap().depth(), 2);
        let par = r#"{"qubits":["q0","q1","q2","q3"],"partition":{"A":["q0","q2"],"B":["q1","q3"]},
            "gates":[{"type":"cz","qubits":["q0","q1"]},{"type":"cnot","qubits":["q2","q3"]},
                     {"type":"h","qubits":["q1"]}]}"#;
        let c = parse_circuit(par).unwrap();
        assert_eq!(c.depth(), 2);
        assert_eq!(c.columns()[0].len(), 2);
    }

    #[test]
    fn locality() {
        let c = parse_circuit(CZ_GLOBAL).unwrap();
        let local = GateSpec::ControlPhase { q1: 0, q2: 1, theta: 1.0 };
        let single = GateSpec::SingleQubit { qubit: 0, matrix: gates::h() };
        assert!(!is_global(&local, c.partition()));
        assert!(!is_global(&single, c.partition()));
    }

    #[test]
    fn error_reporting() {
        let bad_json = "{\n\"qubits\": [\"a\",\n]";
        assert!(matches!(parse_circuit(bad_json), Err(CircuitError::ParseError { line: 3, .. })));
        let unknown = r#"{"qubits":["a","b"],"partition":{"A":["a"],"B":["b"]},"gates":[{"type":"h","qubits":["c"]}]}"#;
        assert_eq!(parse_circuit(unknown), Err(CircuitError::UnknownQubit("c".into())));
        let nonunitary = r#"{"qubits":["a","b"],"partition":{"A":["a"],"B":["b"]},
            "gates":[{"type":"h","qubits":["a"]},{"type":"u1","qubits":["a"],"matrix":[[[2,0],[0,0]],[[0,0],[1,0]]]}]}"#;
        assert_eq!(parse_circuit(nonunitary), Err(CircuitError::NonUnitaryGate(1)));
        let one_side = r#"{"qubits":["a","b"],"partition":{"A":["a","b"],"B":[]},"gates":[]}"#;
        assert!(matches!(parse_circuit(one_side), Err(CircuitError::InvalidPartition(_))));
        let overlap = Circuit::from_columns(
            vec!["a".into(), "b".into()],
            vec![Side::A, Side::B],
            vec![vec![GateSpec::SingleQubit { qubit: 0, matrix: gates::h() }, GateSpec::ControlPhase { q1: 0, q2: 1, theta: 1.0 }]],
        );
        assert_eq!(overlap, Err(CircuitError::OverlappingGates(0)));
    }

    #[test]
    fn unitary_oracles() {
        let empty = Circuit::new(vec!["a".into(), "b".into()], vec![Side::A, Side::B], vec![]).unwrap();
        assert_eq!(full_unitary(&empty).unwrap(), CMat::identity(4));
        let cnot = r#"{"qubits":["c","t"],"partition":{"A":["c"],"B":["t"]},"gates":[{"type":"cnot","qubits":["c","t"]}]}"#;
        let u = full_unitary(&parse_circuit(cnot).unwrap()).unwrap();
        assert!(u.max_abs_diff(&gates::cnot()).unwrap() < 1e-15);
        let swap = r#"{"qubits":["c","t"],"partition":{"A":["c"],"B":["t"]},"gates":[{"type":"swap","qubits":["c","t"]}]}"#;
        let c = parse_circuit(swap).unwrap();
        assert_eq!(c.depth(), 3);
        assert!(equal_up_to_global_phase(&full_unitary(&c).unwrap(), &gates::swap(), TOL).unwrap().0);
    }

    #[test]
    fn canonical_roundtrip() {
        let text = r#"{"qubits":["a","b","c"],"partition":{"A":["a"],"B":["b","c"]},
            "gates":[{"type":"rz","qubits":["a"],"theta":0.3},{"type":"swap","qubits":["a","b"]},
                     {"type":"cp","qubits":["b","c"],"theta":1.25}]}"#;
        let c = parse_circuit(text).unwrap();
        let again = parse_circuit(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_json(), again.to_json());
    }

    #[test]
    fn too_large_for_dense() {
        let names: Vec<String> = (0..13).map(|i| format!("q{i}")).collect();
        let sides = (0..13).map(|i| if i < 6 { Side::A } else { Side::B }).collect();
        let c = Circuit::new(names, sides, vec![]).unwrap();
        assert_eq!(full_unitary(&c), Err(CircuitError::TooLarge(13)));
    }
}
