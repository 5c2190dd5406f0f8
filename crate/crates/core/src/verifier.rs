//! Dense-matrix oracle for packing processes and whole plans.
//!
//! Plans are executed operationally: every root process copies its qubit
//! into a fresh aux wire, distributed gates act through the aux, and the
//! process closes with an X-basis measurement plus a `Z` correction. Both
//! measurement outcomes are checked at each ending, which certifies every
//! one of the `2^k` outcome branches.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{self, Circuit, CircuitError, GateSpec, Side};
use crate::conversion::{to_control_phase_form, ConvOp, ConversionError, ConvertedCircuit};
use crate::graphs::occupancy;
use crate::matrix::{self, equal_up_to_global_phase, gates, random_unitary, CMat, MatrixError, C64, TOL};
use crate::packets::KernelKind;
use crate::plan::PackingPlan;

pub const MAX_WIRES: usize = 12;
const MAX_SCHMIDT_WIRES: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("simulation needs {wires} wires, limit is {MAX_WIRES}")]
    TooLarge { wires: usize },
    #[error("branch {branch} deviates by {deviation:.3e}")]
    BranchMismatch { branch: u128, deviation: f64 },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("kernel is not trace preserving (error {0:.3e})")]
    NonTracePreserving(f64),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerifyStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub status: VerifyStatus,
    /// Number of measurement-outcome branches covered (`2^processes`).
    pub branches: u128,
    pub processes: usize,
    pub wires: usize,
    pub max_deviation: f64,
    pub phase: f64,
}

/// A single packing process `P_{q,e}[K]` on `n_wires` wires.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingProcess {
    pub root: usize,
    pub aux: usize,
    pub n_wires: usize,
    pub kernel: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Equivalence {
    Canonical,
    UpToPhase(f64),
    NotUnitary,
}

/// Insert bit `b` at wire position `e` of an `n`-wire index.
fn insert_bit(x: usize, e: usize, b: usize, n: usize) -> usize {
    let low_len = n - e;
    let high = x >> low_len;
    let low = x & ((1 << low_len) - 1);
    (((high << 1) | b) << low_len) | low
}

/// `|x⟩ ↦ |x⟩|x_q⟩_e`, with the aux inserted at wire `e` of `n + 1`.
pub fn starting_isometry(q: usize, e: usize, n: usize) -> CMat {
    assert!(q < n && e <= n, "wire out of range");
    let mut s = CMat::zeros(1 << (n + 1), 1 << n);
    for x in 0..1usize << n {
        let bit = (x >> (n - 1 - q)) & 1;
        s[(insert_bit(x, e, bit, n), x)] = C64::new(1.0, 0.0);
    }
    s
}

/// `K± = √2 ⟨±_e| C_{q,X_e} K C_{q,X_e} |0_e⟩`.
pub fn kraus_of_process(proc: &PackingProcess) -> Result<(CMat, CMat), VerifyError> {
    let w = proc.n_wires;
    if w > MAX_WIRES {
        return Err(VerifyError::TooLarge { wires: w });
    }
    let c = matrix::embed_gate(&gates::cnot(), &[proc.root, proc.aux], w)?;
    let m = c.matmul(&proc.kernel)?.matmul(&c)?;
    let n = w - 1;
    let mut plus = CMat::zeros(1 << n, 1 << n);
    let mut minus = CMat::zeros(1 << n, 1 << n);
    for r in 0..1usize << n {
        let (r0, r1) = (insert_bit(r, proc.aux, 0, n), insert_bit(r, proc.aux, 1, n));
        for col in 0..1usize << n {
            let c0 = insert_bit(col, proc.aux, 0, n);
            plus[(r, col)] = m[(r0, c0)] + m[(r1, c0)];
            minus[(r, col)] = m[(r0, c0)] - m[(r1, c0)];
        }
    }
    let sum = &(&plus.adjoint() * &plus) + &(&minus.adjoint() * &minus);
    let err = sum.scale(C64::new(0.5, 0.0)).max_abs_diff(&CMat::identity(1 << n))?;
    if err > 1e-9 {
        return Err(VerifyError::NonTracePreserving(err));
    }
    Ok((plus, minus))
}

pub fn is_unitary_equivalent(proc: &PackingProcess) -> Result<Equivalence, VerifyError> {
    let (plus, minus) = kraus_of_process(proc)?;
    if plus.max_abs_diff(&minus)? <= TOL && plus.is_unitary(TOL) {
        return Ok(Equivalence::Canonical);
    }
    let (eq, phi) = equal_up_to_global_phase(&plus, &minus, TOL)?;
    Ok(if eq && plus.is_unitary(TOL) { Equivalence::UpToPhase(phi) } else { Equivalence::NotUnitary })
}

/// The primitive kernel `C_{q,X_e}·U·C_{q,X_e}` with the aux appended last.
pub fn primitive_kernel(u: &CMat, q: usize) -> Result<PackingProcess, VerifyError> {
    let n = u.rows().trailing_zeros() as usize;
    let w = n + 1;
    let mut kernel = u.kron(&CMat::identity(2));
    let c = matrix::embed_gate(&gates::cnot(), &[q, n], w)?;
    kernel = c.matmul(&kernel)?.matmul(&c)?;
    Ok(PackingProcess { root: q, aux: n, n_wires: w, kernel })
}

/// A random kernel of the `U`-equivalent form with aux phase `phi`: acts
/// as a random `U` on `q = e` and an unrelated unitary on `q ≠ e`, then
/// rotated by `R_X(φ)†` on the aux. Returns the process and `U`.
pub fn random_equivalent_kernel<R: Rng + ?Sized>(
    n: usize,
    q: usize,
    phi: f64,
    rng: &mut R,
) -> Result<(PackingProcess, CMat), VerifyError> {
    let w = n + 1;
    let u = random_unitary(1 << n, rng);
    let v = random_unitary(1 << n, rng);
    let mut k = CMat::zeros(1 << w, 1 << w);
    // Equal-bit subspace indexed by `x`, with the aux equal to `x_q`;
    // unequal subspace with the aux flipped.
    let map = |x: usize, equal: bool| {
        let bit = (x >> (n - 1 - q)) & 1;
        insert_bit(x, n, if equal { bit } else { bit ^ 1 }, n)
    };
    for r in 0..1usize << n {
        for c in 0..1usize << n {
            k[(map(r, true), map(c, true))] = u[(r, c)];
            k[(map(r, false), map(c, false))] = v[(r, c)];
        }
    }
    let half = C64::new(0.5, 0.0);
    let e = matrix::cis(-phi);
    let rx_dag =
        CMat::from_rows(&[vec![half * (1.0 + e), half * (1.0 - e)], vec![half * (1.0 - e), half * (1.0 + e)]])?;
    matrix::apply_gate(&mut k, &rx_dag, &[n], w)?;
    Ok((PackingProcess { root: q, aux: n, n_wires: w, kernel: k }, u))
}

/// Operator Schmidt rank 1 of `block` across the wire split `left | right`.
fn is_product(block: &CMat, left: &[usize], right: &[usize], n: usize) -> bool {
    if left.is_empty() || right.is_empty() {
        return true;
    }
    let bits = |x: usize, ws: &[usize]| ws.iter().fold(0usize, |acc, &w| (acc << 1) | ((x >> (n - 1 - w)) & 1));
    let (dl, dr) = (1usize << left.len(), 1usize << right.len());
    let mut m = DMatrix::<C64>::zeros(dl * dl, dr * dr);
    for r in 0..1usize << n {
        for c in 0..1usize << n {
            let z = block[(r, c)];
            if z.norm() == 0.0 {
                continue;
            }
            m[(bits(r, left) * dl + bits(c, left), bits(r, right) * dr + bits(c, right))] = z;
        }
    }
    let sv = m.singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.len() < 2 || s[0] <= 0.0 || s[1] <= 1e-9 * s[0]
}

/// Whether `u` is `root`-distributable: its `root` blocks are diagonal or
/// anti-diagonal and every non-zero block is local across the cut.
pub fn matrix_distributable(u: &CMat, root: usize, sides: &[Side]) -> Result<bool, VerifyError> {
    let n = sides.len();
    if n > MAX_SCHMIDT_WIRES {
        return Err(VerifyError::TooLarge { wires: n });
    }
    if u.rows() != 1 << n || !u.is_square() {
        return Err(MatrixError::DimensionMismatch(format!("{}x{} on {n} wires", u.rows(), u.cols())).into());
    }
    let rest: Vec<usize> = (0..n).filter(|&w| w != root).collect();
    let m = n - 1;
    let block = |i: usize, j: usize| {
        let mut b = CMat::zeros(1 << m, 1 << m);
        for r in 0..1usize << m {
            for c in 0..1usize << m {
                b[(r, c)] = u[(insert_bit(r, root, i, m), insert_bit(c, root, j, m))];
            }
        }
        b
    };
    let blocks = [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]];
    let zero = |b: &CMat| b.max_abs() <= TOL;
    let diagonal = zero(&blocks[0][1]) && zero(&blocks[1][0]);
    let antidiagonal = zero(&blocks[0][0]) && zero(&blocks[1][1]);
    if !diagonal && !antidiagonal {
        return Ok(false);
    }
    // Wire indices inside a block are positions in `rest`.
    let left: Vec<usize> = (0..m).filter(|&k| sides[rest[k]] == sides[root]).collect();
    let right: Vec<usize> = (0..m).filter(|&k| sides[rest[k]] != sides[root]).collect();
    Ok(blocks.iter().flatten().filter(|b| !zero(b)).all(|b| is_product(b, &left, &right, m)))
}

/// Gate-level distributability of column `t` on `q`: the gate on `q` is
/// diagonal or anti-diagonal there and no other gate entangles the cut.
pub fn structurally_distributable(circuit: &Circuit, t: usize, q: usize) -> bool {
    let partition = circuit.partition();
    let entangling = |g: &GateSpec| match g {
        GateSpec::SingleQubit { .. } => false,
        GateSpec::ControlPhase { theta, .. } => !matrix::is_zero_phase(*theta),
        GateSpec::ControlledUnitary { u0, u1, .. } => {
            !equal_up_to_global_phase(u0, u1, TOL).map(|(eq, _)| eq).unwrap_or(false)
        }
    };
    circuit.columns()[t].iter().all(|g| {
        if !g.qubits().contains(&q) {
            return !(circuit::is_global(g, partition) && entangling(g));
        }
        match g {
            GateSpec::SingleQubit { matrix, .. } => matrix.is_diagonal(TOL) || matrix.is_antidiagonal(TOL),
            GateSpec::ControlPhase { .. } => true,
            GateSpec::ControlledUnitary { control, u0, u1, .. } => {
                *control == q
                    || (u0.is_diagonal(TOL) && u1.is_diagonal(TOL))
                    || (u0.is_antidiagonal(TOL) && u1.is_antidiagonal(TOL))
            }
        }
    })
}

/// Dense unitary of depth `t` alone.
pub fn column_unitary(circuit: &Circuit, t: usize) -> Result<CMat, VerifyError> {
    let n = circuit.n_qubits();
    if n > MAX_WIRES {
        return Err(VerifyError::TooLarge { wires: n });
    }
    let mut u = CMat::identity(1 << n);
    for g in &circuit.columns()[t] {
        let m = match g {
            GateSpec::SingleQubit { matrix, .. } => matrix.clone(),
            other => other.matrix(),
        };
        matrix::apply_gate(&mut u, &m, &g.qubits(), n)?;
    }
    Ok(u)
}

struct Sim {
    psi: CMat,
    wires: usize,
}

impl Sim {
    fn apply(&mut self, g: &CMat, w: &[usize]) -> Result<(), VerifyError> {
        Ok(matrix::apply_gate(&mut self.psi, g, w, self.wires)?)
    }

    /// X-basis measurement of `e` with a `Z_q` correction on `−`; returns
    /// the deviation between the two corrected branches. Continues on `+`
    /// with `e` reset to `|0⟩`.
    fn end_process(&mut self, e: usize, q: usize) -> Result<f64, VerifyError> {
        let w = self.wires;
        let emask = 1usize << (w - 1 - e);
        let qmask = 1usize << (w - 1 - q);
        let cols = self.psi.cols();
        let mut plus = CMat::zeros(self.psi.rows(), cols);
        let mut minus = CMat::zeros(self.psi.rows(), cols);
        for r in (0..1usize << w).filter(|r| r & emask == 0) {
            let sign = if r & qmask != 0 { -1.0 } else { 1.0 };
            for c in 0..cols {
                let (a, b) = (self.psi[(r, c)], self.psi[(r | emask, c)]);
                plus[(r, c)] = a + b;
                minus[(r, c)] = (a - b) * sign;
            }
        }
        let (_, phi) = equal_up_to_global_phase(&minus, &plus, 0.0)?;
        let dev = minus.max_abs_diff(&plus.scale(matrix::cis(phi)))?;
        self.psi = plus;
        Ok(dev)
    }
}

/// Convert `circuit` and verify `plan` against it.
pub fn verify_plan(circuit: &Circuit, plan: &PackingPlan) -> Result<VerificationReport, VerifyError> {
    verify_converted(&to_control_phase_form(circuit)?, plan)
}

fn validate(converted: &ConvertedCircuit, plan: &PackingPlan) -> Result<Vec<usize>, VerifyError> {
    let n = converted.n_qubits();
    for (i, r) in plan.roots.iter().enumerate() {
        if r.q >= n || r.t.is_empty() || r.t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VerifyError::InvalidPlan(format!("root {i} is malformed")));
        }
        for &t in &r.t {
            if !converted.node_at(r.q, t).is_some_and(|nd| nd.global) {
                return Err(VerifyError::InvalidPlan(format!("root {i} has no global node at depth {t}")));
            }
        }
        let spans: Vec<_> = r.kernels.iter().filter_map(|k| k.span()).collect();
        let expected: Vec<_> = r.t.windows(2).map(|w| (w[0], w[1])).collect();
        if spans != expected {
            return Err(VerifyError::InvalidPlan(format!("root {i} kernels do not join its depths")));
        }
    }
    let mut by_node = vec![None; converted.nodes().len()];
    for a in &plan.assignment {
        let node = converted.nodes().get(a.node).ok_or_else(|| VerifyError::InvalidPlan("unknown node".into()))?;
        let root = plan.roots.get(a.root).ok_or_else(|| VerifyError::InvalidPlan("unknown root".into()))?;
        if !node.global || !node.touches(root.q) || !root.contains(node.t) || by_node[a.node].is_some() {
            return Err(VerifyError::InvalidPlan(format!("bad assignment of node {}", a.node)));
        }
        by_node[a.node] = Some(a.root);
    }
    let mut out = Vec::with_capacity(by_node.len());
    for (id, node) in converted.nodes().iter().enumerate() {
        match by_node[id] {
            Some(r) => out.push(r),
            None if node.global => {
                return Err(VerifyError::InvalidPlan(format!("global node {id} at depth {} is not distributed", node.t)))
            }
            None => out.push(usize::MAX),
        }
    }
    Ok(out)
}

/// Greedy interval colouring of process lifetimes onto aux wires.
fn allocate_aux(converted: &ConvertedCircuit, plan: &PackingPlan) -> (Vec<usize>, usize) {
    let intervals: Vec<_> = plan.roots.iter().map(|r| occupancy(r, converted)).collect();
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&i| intervals[i].0);
    let mut wire_end: Vec<(usize, usize)> = Vec::new();
    let mut wire = vec![0; intervals.len()];
    for i in order {
        let (s, e) = intervals[i];
        match wire_end.iter().position(|&end| end < s) {
            Some(k) => {
                wire_end[k] = e;
                wire[i] = k;
            }
            None => {
                wire_end.push(e);
                wire[i] = wire_end.len() - 1;
            }
        }
    }
    (wire, wire_end.len())
}

/// Execute `plan` on the converted circuit and compare with the source unitary.
pub fn verify_converted(converted: &ConvertedCircuit, plan: &PackingPlan) -> Result<VerificationReport, VerifyError> {
    let distributor = validate(converted, plan)?;
    let n = converted.n_qubits();
    let (aux_slot, n_aux) = allocate_aux(converted, plan);
    let wires = n + n_aux;
    if wires > MAX_WIRES {
        return Err(VerifyError::TooLarge { wires });
    }
    let aux_wire = |r: usize| n + aux_slot[r];
    let roots = &plan.roots;

    let mut members: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut parity_into: HashMap<(usize, usize), u8> = HashMap::new();
    let mut units: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut outer: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, r) in roots.iter().enumerate() {
        for &t in &r.t {
            members.entry((r.q, t)).or_default().push(i);
        }
        for k in &r.kernels {
            if let Some((_, t2)) = k.span() {
                parity_into.insert((i, t2), k.antidiag_parity % 2);
            }
            match &k.kind {
                KernelKind::HopEmbed { units: u, .. } => {
                    for &t in u {
                        units.entry((r.q, t)).or_default().push(i);
                    }
                }
                KernelKind::ExtendedEmbed { mid, .. } => {
                    outer.insert((r.q, *mid), i);
                }
                _ => {}
            }
        }
    }

    let mut sim = Sim { psi: CMat::zeros(1 << wires, 1 << n), wires };
    for x in 0..1usize << n {
        sim.psi[(x << n_aux, x)] = C64::new(1.0, 0.0);
    }
    let (x_gate, h_gate, cnot, cz) = (gates::x(), gates::h(), gates::cnot(), gates::cz());
    let mut max_dev: f64 = 0.0;
    let mut ended = 0usize;
    for op in converted.columns().iter().flatten() {
        let id = match op {
            ConvOp::Single { qubit, matrix } => {
                sim.apply(matrix, &[*qubit])?;
                continue;
            }
            ConvOp::Cp(id) => *id,
        };
        let node = *converted.node(id);
        let cp = gates::cphase(node.theta);
        if !node.global {
            sim.apply(&cp, &[node.q1, node.q2])?;
            continue;
        }
        let ends = [node.q1, node.q2];
        for q in ends {
            for &r in members.get(&(q, node.t)).into_iter().flatten() {
                if roots[r].start() == node.t {
                    sim.apply(&cnot, &[q, aux_wire(r)])?;
                } else if parity_into.get(&(r, node.t)) == Some(&1) {
                    sim.apply(&x_gate, &[aux_wire(r)])?;
                }
            }
        }
        let d = distributor[id];
        let dq = roots[d].q;
        let partner = node.partner(dq);
        match outer.get(&(dq, node.t)) {
            Some(&o) if roots[d].t == [node.t] && o != d => {
                let (e2, eo) = (aux_wire(d), aux_wire(o));
                sim.apply(&cz, &[e2, eo])?;
                sim.apply(&h_gate, &[eo])?;
                sim.apply(&cp, &[eo, partner])?;
                sim.apply(&h_gate, &[eo])?;
                sim.apply(&cz, &[e2, eo])?;
            }
            _ => sim.apply(&cp, &[aux_wire(d), partner])?,
        }
        for q in ends {
            for &r in units.get(&(q, node.t)).into_iter().flatten() {
                sim.apply(&cnot, &[node.partner(q), aux_wire(r)])?;
            }
        }
        for q in ends {
            for &r in members.get(&(q, node.t)).into_iter().flatten() {
                if roots[r].end() == node.t {
                    let dev = sim.end_process(aux_wire(r), q)?;
                    max_dev = max_dev.max(dev);
                    if dev > 1e-9 {
                        return Err(VerifyError::BranchMismatch { branch: 1u128 << ended.min(127), deviation: dev });
                    }
                    ended += 1;
                }
            }
        }
    }
    let mut implemented = CMat::zeros(1 << n, 1 << n);
    for r in 0..1usize << n {
        for c in 0..1usize << n {
            implemented[(r, c)] = sim.psi[(r << n_aux, c)];
        }
    }
    let target = circuit::full_unitary(converted.source())?;
    let (_, phase) = equal_up_to_global_phase(&implemented, &target, 0.0)?;
    let dev = implemented.max_abs_diff(&target.scale(matrix::cis(phase)))?;
    max_dev = max_dev.max(dev);
    if dev > 1e-9 {
        return Err(VerifyError::BranchMismatch { branch: 0, deviation: dev });
    }
    Ok(VerificationReport {
        status: VerifyStatus::Pass,
        branches: 1u128.checked_shl(roots.len() as u32).unwrap_or(u128::MAX),
        processes: roots.len(),
        wires,
        max_deviation: max_dev,
        phase,
    })
}
