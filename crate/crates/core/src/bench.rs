//! Benchmark circuit families: UCC-style Pauli-exponential ansätze and
//! seeded random circuits.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitError, GateSpec, Side};
use crate::matrix::{gates, random_unitary, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Excitation {
    Single { i: usize, a: usize },
    Double { i: usize, j: usize, a: usize, b: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartitionRule {
    /// First half of the register on `A`.
    Half,
    Explicit(Vec<Side>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    UccLike { n_qubits: usize, excitations: Vec<Excitation>, seed: u64 },
    Random { n_qubits: usize, depth: usize, p_two_qubit: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub family: Family,
    pub partition: PartitionRule,
}

impl BenchSpec {
    pub fn ucc(n_qubits: usize, seed: u64) -> BenchSpec {
        BenchSpec {
            family: Family::UccLike { n_qubits, excitations: all_excitations(n_qubits), seed },
            partition: PartitionRule::Half,
        }
    }

    pub fn random(n_qubits: usize, depth: usize, p_two_qubit: f64, seed: u64) -> BenchSpec {
        BenchSpec { family: Family::Random { n_qubits, depth, p_two_qubit, seed }, partition: PartitionRule::Half }
    }

    pub fn generate(&self) -> Result<Circuit, CircuitError> {
        match &self.family {
            Family::UccLike { .. } => gen_ucc_like(self),
            Family::Random { .. } => gen_random(self),
        }
    }
}

/// Every single and double excitation from the lower half (occupied) to
/// the upper half (virtual).
pub fn all_excitations(n: usize) -> Vec<Excitation> {
    let occ = n / 2;
    let mut out = Vec::new();
    for i in 0..occ {
        for a in occ..n {
            out.push(Excitation::Single { i, a });
        }
    }
    for i in 0..occ {
        for j in i + 1..occ {
            for a in occ..n {
                for b in a + 1..n {
                    out.push(Excitation::Double { i, j, a, b });
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Pauli {
    X,
    Y,
    Z,
}

/// Jordan-Wigner Pauli strings of an excitation, as `(qubit, Pauli)` lists.
fn pauli_strings(e: &Excitation) -> Vec<Vec<(usize, Pauli)>> {
    use Pauli::*;
    match *e {
        Excitation::Single { i, a } => {
            let (lo, hi) = (i.min(a), i.max(a));
            let z: Vec<(usize, Pauli)> = (lo + 1..hi).map(|k| (k, Z)).collect();
            [(X, Y), (Y, X)]
                .into_iter()
                .map(|(p, r)| {
                    let mut s = vec![(lo, p)];
                    s.extend(z.iter().copied());
                    s.push((hi, r));
                    s
                })
                .collect()
        }
        Excitation::Double { i, j, a, b } => {
            let mut qs = [i, j, a, b];
            qs.sort_unstable();
            // Odd number of Y factors.
            let patterns = [
                [X, X, X, Y],
                [X, X, Y, X],
                [X, Y, X, X],
                [Y, X, X, X],
                [Y, Y, Y, X],
                [Y, Y, X, Y],
                [Y, X, Y, Y],
                [X, Y, Y, Y],
            ];
            patterns.iter().map(|p| qs.iter().copied().zip(p.iter().copied()).collect()).collect()
        }
    }
}

fn half_sides(n: usize) -> Vec<Side> {
    (0..n).map(|q| if q < n.div_ceil(2) { Side::A } else { Side::B }).collect()
}

fn sides_for(rule: &PartitionRule, n: usize) -> Vec<Side> {
    match rule {
        PartitionRule::Half => half_sides(n),
        PartitionRule::Explicit(s) => s.clone(),
    }
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|q| format!("q{q}")).collect()
}

fn single(qubit: usize, matrix: CMat) -> GateSpec {
    GateSpec::SingleQubit { qubit, matrix }
}

fn cnot(control: usize, target: usize) -> GateSpec {
    GateSpec::ControlledUnitary { control, target, u0: CMat::identity(2), u1: gates::x() }
}

/// CNOT ladder order alternating between the two halves of the register.
fn interleaved_order(n: usize) -> Vec<usize> {
    let occ = n.div_ceil(2);
    let mut out = Vec::with_capacity(n);
    for k in 0..occ {
        out.push(k);
        if occ + k < n {
            out.push(occ + k);
        }
    }
    out
}

/// Single and double excitation gadgets compiled to basis changes, CNOT
/// ladders and one `rz` per Pauli string.
pub fn gen_ucc_like(spec: &BenchSpec) -> Result<Circuit, CircuitError> {
    let Family::UccLike { n_qubits, excitations, seed } = &spec.family else {
        return gen_random(spec);
    };
    let n = *n_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
    let order = interleaved_order(n);
    let s_dag = gates::v(-FRAC_PI_2);
    let to_z = |p: Pauli| match p {
        Pauli::X => Some(gates::h()),
        Pauli::Y => Some(&gates::h() * &s_dag),
        Pauli::Z => None,
    };
    let mut out = Vec::new();
    for e in excitations {
        let theta: f64 = rng.random_range(-PI..PI);
        for string in pauli_strings(e) {
            let mut ladder: Vec<usize> = string.iter().map(|&(q, _)| q).collect();
            ladder.sort_by_key(|q| order.iter().position(|o| o == q));
            for &(q, p) in &string {
                if let Some(b) = to_z(p) {
                    out.push(single(q, b));
                }
            }
            for w in ladder.windows(2) {
                out.push(cnot(w[0], w[1]));
            }
            out.push(single(*ladder.last().expect("non-empty string"), gates::rz(theta)));
            for w in ladder.windows(2).rev() {
                out.push(cnot(w[0], w[1]));
            }
            for &(q, p) in &string {
                if let Some(b) = to_z(p) {
                    out.push(single(q, b.adjoint()));
                }
            }
        }
    }
    Circuit::new(names(n), sides_for(&spec.partition, n), out)
}

fn random_single<R: Rng>(rng: &mut R) -> CMat {
    let r: f64 = rng.random();
    if r < 0.4 {
        gates::v(rng.random_range(-PI..PI))
    } else if r < 0.6 {
        // Quarter-turn phases keep hop phase conditions reachable.
        let (a, g) = (rng.random_range(0..4) as f64 * FRAC_PI_2, rng.random_range(0..4) as f64 * FRAC_PI_2);
        &(&gates::v(g) * &gates::h()) * &gates::v(a)
    } else {
        random_unitary(2, rng)
    }
}

/// Layered random circuit: each layer pairs qubits at random and places a
/// two-qubit gate on a pair with probability `p_two_qubit`.
pub fn gen_random(spec: &BenchSpec) -> Result<Circuit, CircuitError> {
    let Family::Random { n_qubits, depth, p_two_qubit, seed } = spec.family else {
        return gen_ucc_like(spec);
    };
    let n = n_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..depth {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for pair in perm.chunks(2) {
            if pair.len() == 2 && rng.random::<f64>() < p_two_qubit {
                let theta = if rng.random::<f64>() < 0.3 { PI } else { rng.random_range(-PI..PI) };
                if rng.random::<bool>() {
                    out.push(GateSpec::ControlPhase { q1: pair[0], q2: pair[1], theta });
                } else {
                    let w = random_unitary(2, &mut rng);
                    let u1 = &(&w * &gates::v(theta)) * &w.adjoint();
                    out.push(GateSpec::ControlledUnitary {
                        control: pair[0],
                        target: pair[1],
                        u0: CMat::identity(2),
                        u1,
                    });
                }
            } else {
                for &q in pair {
                    out.push(single(q, random_single(&mut rng)));
                }
            }
        }
    }
    Circuit::new(names(n), sides_for(&spec.partition, n), out)
}
