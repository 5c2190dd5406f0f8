//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::f64::consts::{FRAC_PI_2, TAU};
use std::time::{Duration, Instant};

use common::{circuit, crossing_hops, data};
use dqc_packer::bench::BenchSpec;
use dqc_packer::graphs::{build_intrinsic_conflicts, build_packing_graph, Level};
use dqc_packer::matrix::{equal_up_to_global_phase, random_unitary};
use dqc_packer::packets::{build_packets, DistributablePacket, PacketSet};
use dqc_packer::solver::{
    enumerate_min_covers, extended_embedding_pass, greedy_cover, pack_limited, pack_unlimited, run_pipeline, AuxCount,
    PackingPlan, SolverOptions,
};
use dqc_packer::verifier::{
    column_unitary, is_unitary_equivalent, kraus_of_process, matrix_distributable, primitive_kernel,
    random_equivalent_kernel, structurally_distributable, verify_converted, Equivalence, VerifyStatus,
};
use dqc_packer::{to_control_phase_form, Circuit, ConvertedCircuit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn convert(c: &Circuit) -> ConvertedCircuit {
    to_control_phase_form(c).expect("conversion")
}

fn verified(conv: &ConvertedCircuit, plan: &PackingPlan) -> Result<f64, String> {
    match verify_converted(conv, plan) {
        Ok(r) if r.status == VerifyStatus::Pass && r.max_deviation <= 1e-9 => Ok(r.max_deviation),
        other => Err(format!("verification: {other:?}")),
    }
}

fn solve(c: &Circuit) -> Result<(ConvertedCircuit, dqc_packer::solver::PipelineResult), String> {
    let conv = convert(c);
    let r = run_pipeline(&conv, None, &SolverOptions::default()).map_err(|e| e.to_string())?;
    Ok((conv, r))
}

fn c1_ejpp() -> Outcome {
    let (conv, r) = solve(&data("cnot.json"))?;
    ensure(r.plan.ebits == 1, format!("ebits {}", r.plan.ebits))?;
    ensure(r.plan.aux_required == AuxCount { a: 0, b: 1 }, format!("aux {:?}", r.plan.aux_required))?;
    let dev = verified(&conv, &r.plan)?;
    Ok(format!("ebits 1, aux A=0 B=1, deviation {dev:.1e}"))
}

fn c2_swap() -> Outcome {
    let (conv, r) = solve(&data("swap.json"))?;
    ensure(r.plan.ebits == 2, format!("ebits {}", r.plan.ebits))?;
    let dev = verified(&conv, &r.plan)?;
    Ok(format!("ebits 2 for {} global CNOTs, deviation {dev:.1e}", r.baseline))
}

fn c3_neighbouring() -> Outcome {
    let cases: [(&str, Option<f64>, usize); 3] = [("rz", Some(0.7), 1), ("x", None, 1), ("h", None, 2)];
    let mut parts = Vec::new();
    for (mid, theta, want) in cases {
        let c = circuit(
            &["q"],
            &["p1", "p2"],
            &[("cz", &["q", "p1"], None), (mid, &["q"], theta), ("cz", &["q", "p2"], None)],
        );
        let (conv, r) = solve(&c)?;
        ensure(r.plan.ebits == want, format!("CZ-{mid}-CZ: ebits {} expected {want}", r.plan.ebits))?;
        verified(&conv, &r.plan)?;
        parts.push(format!("{mid}:{want}"));
    }
    Ok(format!("ebits {}", parts.join(", ")))
}

fn fig4a() -> Circuit {
    circuit(
        &["q"],
        &["b1", "b2", "p"],
        &[
            ("cz", &["q", "b1"], None),
            ("h", &["q"], None),
            ("cz", &["q", "p"], None),
            ("h", &["q"], None),
            ("cz", &["q", "b2"], None),
            ("rz", &["q"], Some(0.4)),
            ("cz", &["q", "b1"], None),
            ("x", &["q"], None),
            ("cz", &["q", "b2"], None),
            ("h", &["q"], None),
            ("cz", &["q", "p"], None),
            ("h", &["q"], None),
            ("cz", &["q", "b1"], None),
        ],
    )
}

fn c4_hopping() -> Outcome {
    let (conv, r) = solve(&fig4a())?;
    let q = 0;
    let five: Vec<usize> = conv.nodes_on(q).iter().map(|&id| conv.node(id).t).filter(|t| ![2, 10].contains(t)).collect();
    ensure(five.len() == 5, format!("expected 5 packet nodes, got {five:?}"))?;
    let packet = r.packets.packets.iter().find(|p| p.q == q && p.t == five);
    ensure(packet.is_some(), format!("no packet with depths {five:?}"))?;
    let root = r.plan.roots.iter().position(|p| p.q == q && p.t == five);
    let root = root.ok_or("5-node packet is not a root")?;
    let assigned = r.plan.assignment.iter().filter(|a| a.root == root).count();
    ensure(assigned == 5, format!("root distributes {assigned} gates"))?;
    ensure(r.plan.ebits == 2, format!("ebits {} (5-node root plus unit root expected)", r.plan.ebits))?;
    let dev = verified(&conv, &r.plan)?;
    Ok(format!(
        "5 global gates on one root (1 ebit); plan {} ebits incl. 1 for the 2 hop units, deviation {dev:.1e}",
        r.plan.ebits
    ))
}

fn naive_cover_size(packets: &PacketSet, conv: &ConvertedCircuit) -> Result<usize, String> {
    let g = build_packing_graph(&packets.packets, conv).map_err(|e| e.to_string())?;
    let covers = enumerate_min_covers(g.n_vertices(), &g.simple_edges(), 1).map_err(|e| e.to_string())?;
    Ok(covers[0].len())
}

fn c5_conflict() -> Outcome {
    let c = crossing_hops();
    let conv = convert(&c);
    let packets = build_packets(&conv);
    let kernel_edges = build_intrinsic_conflicts(&packets.packets, &conv, Level::Kernel).edges.len();
    ensure(kernel_edges == 1, format!("{kernel_edges} intrinsic conflict edges"))?;
    let naive = naive_cover_size(&packets, &conv)?;
    let r = run_pipeline(&conv, None, &SolverOptions::default()).map_err(|e| e.to_string())?;
    ensure(r.plan.ebits == naive + 1, format!("resolved {} vs naive {naive}", r.plan.ebits))?;
    verified(&conv, &r.plan)?;
    // Keep both hops and cover the shared unit with a trivial root.
    let hop_roots: Vec<DistributablePacket> = packets.packets.iter().filter(|p| p.t.len() > 1).cloned().collect();
    ensure(hop_roots.len() == 2, "expected two hop packets")?;
    let unit = conv.node_at(0, 2).ok_or("no shared unit")?;
    let mut roots = hop_roots;
    roots.push(DistributablePacket::trivial(0, unit.q1, unit.t));
    let naive_plan = PackingPlan::from_roots(&conv, roots, Vec::new());
    ensure(naive_plan.ebits == naive, "naive plan size")?;
    let negative = match verify_converted(&conv, &naive_plan) {
        Ok(rep) if rep.status == VerifyStatus::Pass => return Err("naive plan passed verification".into()),
        Ok(rep) => format!("Fail at {:.2}", rep.max_deviation),
        Err(e) => e.to_string(),
    };
    Ok(format!("1 conflict edge; naive {naive} ebits, resolved {}; naive plan rejected ({negative})", r.plan.ebits))
}

fn extended_gap(theta: f64) -> Circuit {
    circuit(
        &["q"],
        &["r", "b1", "b2"],
        &[
            ("cz", &["q", "b1"], None),
            ("h", &["q"], None),
            ("cp", &["q", "r"], Some(theta)),
            ("h", &["q"], None),
            ("cz", &["q", "b2"], None),
        ],
    )
}

fn c6_extended() -> Outcome {
    // End to end: the gap saves one ebit over the run without the pass.
    let conv = convert(&extended_gap(FRAC_PI_2));
    let with = run_pipeline(&conv, None, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let without =
        run_pipeline(&conv, None, &SolverOptions { extended: false, ..Default::default() }).map_err(|e| e.to_string())?;
    ensure(with.plan.extended.len() == 1, "no extended embedding applied")?;
    ensure(without.plan.ebits == with.plan.ebits + 1, format!("{} vs {}", without.plan.ebits, with.plan.ebits))?;
    verified(&conv, &with.plan)?;

    // Same roots on q, with and without a selected hop on the partner over the gap.
    let conv = convert(&crossing_hops());
    let packets = build_packets(&conv);
    let (q, r) = (0, 3);
    let on = |qq: usize| conv.nodes_on(qq).iter().map(|&id| conv.node(id).t).collect::<Vec<_>>();
    let trivial = |qq: usize| on(qq).into_iter().map(move |t| DistributablePacket::trivial(0, qq, t));
    let hop_on_r = packets.packets.iter().find(|p| p.q == r && p.t.len() > 1).cloned().ok_or("no hop on r")?;
    let base: Vec<DistributablePacket> = trivial(q).collect();
    let held: Vec<DistributablePacket> =
        base.iter().cloned().chain(trivial(r).filter(|p| p.t[0] != 2)).collect();
    let violated: Vec<DistributablePacket> = base.iter().cloned().chain([hop_on_r]).collect();
    let (held_roots, held_ext) = extended_embedding_pass(held.clone(), &conv);
    let (violated_roots, violated_ext) = extended_embedding_pass(violated.clone(), &conv);
    ensure(held_roots.len() + 1 == held.len() && held_ext.len() == 1, "condition held: no merge")?;
    ensure(violated_roots.len() == violated.len() && violated_ext.is_empty(), "condition violated: merged")?;
    let held_plan = PackingPlan::from_roots(&conv, held_roots, Vec::new());
    verified(&conv, &held_plan)?;
    Ok(format!(
        "pipeline {} -> {} ebits; condition held saves 1 ({} -> {}), violated saves 0",
        without.plan.ebits,
        with.plan.ebits,
        held.len(),
        held_plan.ebits
    ))
}

const UCC_BASELINE: usize = 80;
const UCC_NEIGHBOURING: usize = 37;
const UCC_FULL: usize = 19;

fn c7_ucc() -> Outcome {
    let (conv, r) = solve(&data("ucc4.json"))?;
    let (b, n, f) = (r.baseline, r.neighbour_only_ebits, r.full_ebits);
    ensure(f < n && n < b, format!("chain {f} < {n} < {b} violated"))?;
    let reduction = 1.0 - f as f64 / b as f64;
    ensure(reduction >= 0.4, format!("reduction {:.0}%", reduction * 100.0))?;
    ensure((b, n, f) == (UCC_BASELINE, UCC_NEIGHBOURING, UCC_FULL), format!("goldens changed: {b}/{n}/{f}"))?;
    verified(&conv, &r.plan)?;
    Ok(format!("baseline {b}, neighbouring-only {n}, full {f} ({:.0}% saved)", reduction * 100.0))
}

fn c8_oracles() -> Outcome {
    let (mut max_dev, mut columns, mut subgraphs) = (0.0f64, 0usize, 0usize);
    for seed in 0..200u64 {
        let n = 2 + (seed % 5) as usize;
        let depth = 1 + (seed % 16) as usize;
        let c = BenchSpec::random(n, depth, 0.6, seed).generate().map_err(|e| e.to_string())?;
        let (conv, r) = solve(&c)?;
        max_dev = max_dev.max(verified(&conv, &r.plan).map_err(|e| format!("seed {seed}: {e}"))?);
        let sides = c.partition().sides().to_vec();
        for t in 0..c.depth() {
            let u = column_unitary(&c, t).map_err(|e| e.to_string())?;
            for q in 0..n {
                let m = matrix_distributable(&u, q, &sides).map_err(|e| e.to_string())?;
                ensure(m == structurally_distributable(&c, t, q), format!("seed {seed} column {t} qubit {q}"))?;
                columns += 1;
            }
        }
        let g = build_packing_graph(&r.packets.packets, &conv).map_err(|e| e.to_string())?;
        let k = g.n_vertices().min(12);
        let edges: Vec<_> = g.simple_edges().into_iter().filter(|&(a, b)| a < k && b < k).collect();
        let exact = enumerate_min_covers(k, &edges, 1).map_err(|e| e.to_string())?[0].len();
        let greedy = greedy_cover(k, &edges, None);
        ensure(edges.iter().all(|(a, b)| greedy.contains(a) || greedy.contains(b)), "greedy result is not a cover")?;
        ensure(greedy.len() >= exact, format!("seed {seed}: greedy {} beats exact {exact}", greedy.len()))?;
        subgraphs += 1;
    }
    Ok(format!("200 plans verified (max deviation {max_dev:.1e}); {columns} column checks; {subgraphs} cover comparisons"))
}

fn c9_limits() -> Outcome {
    let opts = SolverOptions::default();
    for seed in 0..50u64 {
        let n = 2 + (seed % 5) as usize;
        let c = BenchSpec::random(n, 8 + (seed % 9) as usize, 0.6, 500 + seed).generate().map_err(|e| e.to_string())?;
        let conv = convert(&c);
        let packets = build_packets(&conv);
        let best = pack_unlimited(&conv, &packets, &opts).map_err(|e| e.to_string())?.remove(0);
        let limits = AuxCount { a: best.aux_required.a.max(1), b: best.aux_required.b.max(1) };
        let limited = pack_limited(&conv, &packets, &limits, &opts).map_err(|e| e.to_string())?;
        ensure(limited.ebits == best.ebits, format!("seed {seed}: limited {} vs unlimited {}", limited.ebits, best.ebits))?;
        let one = pack_limited(&conv, &packets, &AuxCount { a: 1, b: 1 }, &opts).map_err(|e| e.to_string())?;
        ensure(one.aux_required.fits(&AuxCount { a: 1, b: 1 }), format!("seed {seed}: aux {:?}", one.aux_required))?;
        ensure(one.ebits <= one.baseline && one.covers_all(&conv), format!("seed {seed}: invalid single-aux plan"))?;
        verified(&conv, &one).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok("50 circuits: matched limits reproduce ebits; A=1,B=1 plans valid and verified".into())
}

fn c10_kernels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=3);
        let q = rng.random_range(0..n);
        let phi = rng.random_range(0.1..TAU - 0.1);
        let (proc, u) = random_equivalent_kernel(n, q, phi, &mut rng).map_err(|e| e.to_string())?;
        match is_unitary_equivalent(&proc).map_err(|e| e.to_string())? {
            Equivalence::UpToPhase(_) => {}
            other => return Err(format!("kernel classified {other:?}")),
        }
        let plus = kraus_of_process(&proc).map_err(|e| e.to_string())?.0;
        let (eq, _) = equal_up_to_global_phase(&plus, &u, 1e-9).map_err(|e| e.to_string())?;
        ensure(eq, "reconstruction error above 1e-9")?;
        worst = worst.max(plus.max_abs_diff(&u).map_err(|e| e.to_string())?);

        let v = random_unitary(1 << n, &mut rng);
        let prim = primitive_kernel(&v, q).map_err(|e| e.to_string())?;
        ensure(is_unitary_equivalent(&prim).map_err(|e| e.to_string())? == Equivalence::Canonical, "primitive kernel not canonical")?;
    }
    Ok(format!("1000 random equivalent kernels UpToPhase (max error {worst:.1e}); 1000 primitive kernels Canonical"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("EJPP base case", Duration::from_secs(1), c1_ejpp),
        ("SWAP", Duration::from_secs(1), c2_swap),
        ("neighbouring packing", Duration::from_secs(1), c3_neighbouring),
        ("hopping packing", Duration::from_secs(1), c4_hopping),
        ("conflict detection", Duration::from_secs(1), c5_conflict),
        ("extended embedding", Duration::from_secs(1), c6_extended),
        ("UCC qualitative reproduction", Duration::from_secs(10), c7_ucc),
        ("oracle equivalence suite", Duration::from_secs(120), c8_oracles),
        ("resource-limit consistency", Duration::from_secs(60), c9_limits),
        ("kernel equivalence properties", Duration::from_secs(30), c10_kernels),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(msg) if elapsed > *budget => Err(format!("{msg}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(msg) => println!("criterion {}: PASS {name}: {msg} [{elapsed:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {msg} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
