#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use dqc_packer::circuit::{parse_circuit, Circuit, GateSpec, Side};
use dqc_packer::matrix::gates;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Circuit from side lists and `(type, qubits, theta)` triples.
pub fn circuit(a: &[&str], b: &[&str], gates: &[(&str, &[&str], Option<f64>)]) -> Circuit {
    let qubits: Vec<&str> = a.iter().chain(b).copied().collect();
    let gates: Vec<Value> = gates
        .iter()
        .map(|(kind, qs, theta)| match theta {
            Some(t) => json!({"type": kind, "qubits": qs, "theta": t}),
            None => json!({"type": kind, "qubits": qs}),
        })
        .collect();
    let doc = json!({"qubits": qubits, "partition": {"A": a, "B": b}, "gates": gates});
    parse_circuit(&doc.to_string()).expect("fixture parses")
}

pub fn data(name: &str) -> Circuit {
    let path = format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_circuit(&std::fs::read_to_string(&path).expect("fixture file")).expect("fixture parses")
}

/// Random circuit over CZ-heavy gates with Hadamards and quarter-turn
/// phases, so hops, conflicts and extended gaps occur often.
pub fn hop_rich(n: usize, len: usize, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..len {
        let q = rng.random_range(0..n);
        match rng.random_range(0..10) {
            0..=4 => {
                let mut p = rng.random_range(0..n);
                while p == q {
                    p = rng.random_range(0..n);
                }
                let theta = if rng.random_bool(0.8) { PI } else { rng.random_range(0.0..TAU) };
                out.push(GateSpec::ControlPhase { q1: q, q2: p, theta });
            }
            5..=7 => out.push(GateSpec::SingleQubit { qubit: q, matrix: gates::h() }),
            8 => out.push(GateSpec::SingleQubit {
                qubit: q,
                matrix: gates::v(FRAC_PI_2 * rng.random_range(0..4) as f64),
            }),
            _ => out.push(GateSpec::SingleQubit { qubit: q, matrix: gates::x() }),
        }
    }
    let sides = (0..n).map(|i| if i < n.div_ceil(2) { Side::A } else { Side::B }).collect();
    Circuit::new((0..n).map(|i| format!("q{i}")).collect(), sides, out).expect("valid circuit")
}

/// Crossing hops: `q` and `r` on opposite sides share an
/// H-type unit.
pub fn crossing_hops() -> Circuit {
    circuit(
        &["q", "a1", "a2"],
        &["r", "b1", "b2"],
        &[
            ("cz", &["q", "b1"], None),
            ("cz", &["r", "a1"], None),
            ("h", &["q"], None),
            ("h", &["r"], None),
            ("cz", &["q", "r"], None),
            ("h", &["q"], None),
            ("h", &["r"], None),
            ("cz", &["q", "b2"], None),
            ("cz", &["r", "a2"], None),
        ],
    )
}
