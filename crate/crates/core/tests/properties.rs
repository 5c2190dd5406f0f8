mod common;

use common::hop_rich;
use dqc_packer::bench::BenchSpec;
use dqc_packer::circuit::{full_unitary, parse_circuit, Circuit};
use dqc_packer::matrix::equal_up_to_global_phase;
use dqc_packer::packets::build_packets;
use dqc_packer::solver::{enumerate_min_covers, greedy_cover, run_pipeline, AuxCount, PackingPlan, SolverOptions};
use dqc_packer::to_control_phase_form;
use dqc_packer::verifier::{verify_converted, VerifyStatus};
use proptest::prelude::*;

fn any_circuit() -> impl Strategy<Value = Circuit> {
    prop_oneof![
        (3usize..=6, 2usize..36, any::<u64>()).prop_map(|(n, len, seed)| hop_rich(n, len, seed)),
        (2usize..=5, 1usize..8, 0.0f64..1.0, any::<u64>())
            .prop_map(|(n, d, p, seed)| BenchSpec::random(n, d, p, seed).generate().unwrap()),
    ]
}

fn is_cover(edges: &[(usize, usize)], cover: &[usize]) -> bool {
    edges.iter().all(|(u, v)| cover.contains(u) || cover.contains(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conversion_preserves_unitary(c in any_circuit()) {
        let conv = to_control_phase_form(&c).unwrap();
        let (eq, _) = equal_up_to_global_phase(&full_unitary(&c).unwrap(), &conv.unitary().unwrap(), 1e-9).unwrap();
        prop_assert!(eq);
    }

    #[test]
    fn packets_partition_global_nodes(c in any_circuit()) {
        let conv = to_control_phase_form(&c).unwrap();
        let set = build_packets(&conv);
        for q in 0..conv.n_qubits() {
            let mut want: Vec<usize> = conv
                .nodes_on(q)
                .iter()
                .map(|&id| conv.node(id))
                .filter(|n| n.global)
                .map(|n| n.t)
                .collect();
            let mut got: Vec<usize> = set.packets.iter().filter(|p| p.q == q).flat_map(|p| p.t.clone()).collect();
            want.sort_unstable();
            got.sort_unstable();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn unlimited_plans_verify(c in any_circuit()) {
        let conv = to_control_phase_form(&c).unwrap();
        let r = run_pipeline(&conv, None, &SolverOptions::default()).unwrap();
        prop_assert!(r.plan.covers_all(&conv));
        prop_assert!(r.plan.ebits <= r.neighbour_only_ebits);
        prop_assert!(r.neighbour_only_ebits <= r.baseline);
        let rep = verify_converted(&conv, &r.plan).unwrap();
        prop_assert_eq!(rep.status, VerifyStatus::Pass, "{:?}", rep);
    }

    #[test]
    fn limited_plans_verify_and_fit(c in any_circuit()) {
        let conv = to_control_phase_form(&c).unwrap();
        let limits = AuxCount { a: 1, b: 1 };
        let free = run_pipeline(&conv, None, &SolverOptions::default()).unwrap();
        let r = run_pipeline(&conv, Some(&limits), &SolverOptions::default()).unwrap();
        prop_assert!(r.plan.aux_required.fits(&limits));
        prop_assert!(r.plan.ebits >= free.plan.ebits);
        prop_assert!(r.plan.covers_all(&conv));
        let rep = verify_converted(&conv, &r.plan).unwrap();
        prop_assert_eq!(rep.status, VerifyStatus::Pass, "{:?}", rep);
    }

    #[test]
    fn large_limits_match_unlimited(c in any_circuit()) {
        let conv = to_control_phase_form(&c).unwrap();
        let free = run_pipeline(&conv, None, &SolverOptions::default()).unwrap();
        let roomy = run_pipeline(&conv, Some(&AuxCount { a: free.plan.aux_required.a.max(1), b: free.plan.aux_required.b.max(1) }), &SolverOptions::default()).unwrap();
        prop_assert!(roomy.plan.ebits <= free.plan.ebits);
    }

    #[test]
    fn exact_cover_is_minimal(n in 1usize..14, raw in prop::collection::vec((0usize..14, 0usize..14), 0..30)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(u, v)| (u % n, v % n)).filter(|(u, v)| u != v).collect();
        let exact = enumerate_min_covers(n, &edges, 4).unwrap();
        let greedy = greedy_cover(n, &edges, None);
        prop_assert!(is_cover(&edges, &greedy));
        for c in &exact {
            prop_assert!(is_cover(&edges, c));
            prop_assert_eq!(c.len(), exact[0].len());
        }
        prop_assert!(exact[0].len() <= greedy.len());
    }

    #[test]
    fn circuit_json_round_trips(c in any_circuit()) {
        let back = parse_circuit(&c.to_json()).unwrap();
        let (eq, _) = equal_up_to_global_phase(&full_unitary(&c).unwrap(), &full_unitary(&back).unwrap(), 1e-9).unwrap();
        prop_assert!(eq);
        prop_assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn plan_json_round_trips(c in any_circuit()) {
        let conv = to_control_phase_form(&c).unwrap();
        let plan = run_pipeline(&conv, None, &SolverOptions::default()).unwrap().plan;
        let back: PackingPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
        prop_assert_eq!(back, plan);
    }
}
