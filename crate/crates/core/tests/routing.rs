use proptest::prelude::*;
use qbc_core::protocol::{SessionConfig, SessionVerdict};
use qbc_core::routing::{
    datagram_select, flood_discover, reserve_circuit, serve_probability, vc_select, NetworkGraph, PathChoice,
    ReservationLedger, ReserveMode, TrafficSpec,
};
use qbc_core::Error;

fn complete(n: usize, buffer: u64) -> NetworkGraph {
    let mut g = NetworkGraph::new();
    let names: Vec<String> = (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
    for s in &names {
        g.add_node(s).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            g.add_edge(&names[i], &names[j], buffer).unwrap();
        }
    }
    g
}

fn traffic(src: &str, dst: &str, n: u64, l: u64) -> TrafficSpec {
    TrafficSpec {
        src: src.into(),
        dst: dst.into(),
        n_packets: n,
        packet_len: l,
    }
}

#[test]
fn k5_has_sixteen_simple_paths() {
    // 1 + 3 + 3*2 + 3*2*1 intermediate orderings
    let d = flood_discover(&complete(5, 100), &traffic("A", "E", 1, 1)).unwrap();
    assert_eq!(d.paths.len(), 16);
    // edge A-E lies on exactly one path; A-B on 1 + 2 + 2 = 5
    let load = |a: &str, b: &str| d.loads[&qbc_core::routing::EdgeKey::new(a, b)];
    assert_eq!(load("A", "E"), 1);
    assert_eq!(load("A", "B"), 5);
}

#[test]
fn equal_probabilities_pick_fewest_hops() {
    let d = flood_discover(&complete(5, 10_000), &traffic("A", "E", 1, 1)).unwrap();
    let c = vc_select(&d.paths, 0.5).unwrap();
    assert_eq!(c.nodes, ["A", "E"]);
    assert_eq!(c.score, -0.5);
}

#[test]
fn three_path_instance_matches_exhaustive_scoring() {
    let paths = vec![
        PathChoice { nodes: vec!["S".into(), "A".into(), "T".into()], edge_probs: vec![0.6, 0.7], score: 0.0 },
        PathChoice { nodes: vec!["S".into(), "B".into(), "C".into(), "T".into()], edge_probs: vec![0.95, 0.9, 0.92], score: 0.0 },
        PathChoice { nodes: vec!["S".into(), "T".into()], edge_probs: vec![0.3], score: 0.0 },
    ];
    // log2 products - 0.5 hops: -1.2515, -1.7848, -2.2370
    let scores: Vec<f64> = paths
        .iter()
        .map(|p| p.edge_probs.iter().map(|x: &f64| x.log2()).sum::<f64>() - 0.5 * p.hops() as f64)
        .collect();
    let best = (0..3).max_by(|&i, &j| scores[i].total_cmp(&scores[j])).unwrap();
    let c = vc_select(&paths, 0.5).unwrap();
    assert_eq!(c.nodes, paths[best].nodes);
    assert!((c.score - scores[best]).abs() < 1e-12);
    // with no hop penalty the 3-hop path wins on product (0.7866 > 0.42)
    assert_eq!(vc_select(&paths, 0.0).unwrap().nodes, paths[1].nodes);
    assert_eq!(datagram_select(&paths).unwrap().nodes, paths[1].nodes);
    assert!(matches!(vc_select(&[], 0.5), Err(Error::NoPaths)));
}

#[test]
fn reservations_for_other_traffic_are_untouched() {
    let g = complete(4, 50);
    let mut ledger = ReservationLedger::new();
    let t1 = traffic("A", "D", 2, 10);
    let d1 = flood_discover(&g, &t1).unwrap();
    let c1 = datagram_select(&d1.paths).unwrap();
    reserve_circuit(&g, &t1, &d1, &c1, &mut ledger, &ReserveMode::Fast).unwrap();
    let snapshot = ledger.get("A->D").cloned().unwrap();

    let t2 = traffic("B", "C", 1, 10);
    let d2 = flood_discover(&g, &t2).unwrap();
    let c2 = vc_select(&d2.paths, 0.5).unwrap();
    let r2 = reserve_circuit(&g, &t2, &d2, &c2, &mut ledger, &ReserveMode::Fast).unwrap();
    assert_eq!(ledger.get("A->D"), Some(&snapshot));
    assert_eq!(ledger.len(), 2);
    // handle ids keep counting across traffic
    assert_eq!(r2.handles[0].id, snapshot.handles.len() as u64);
}

#[test]
fn full_mode_runs_one_session_per_hop() {
    let g = complete(3, 40);
    let t = traffic("A", "C", 1, 8);
    let d = flood_discover(&g, &t).unwrap();
    let c = datagram_select(&d.paths).unwrap();
    let session = SessionConfig {
        n_quarter: 8,
        codebook_size: None,
        n_tol: 2,
        e_tol: 0.25,
        frame_budget: 300,
        ..SessionConfig::small(40)
    };
    let r = reserve_circuit(&g, &t, &d, &c, &mut ReservationLedger::new(), &ReserveMode::Full(Box::new(session)))
        .unwrap();
    assert_eq!(r.mode, "full");
    for h in &r.handles {
        assert_eq!(h.session_verdict, Some(SessionVerdict::Accept1));
        assert!(h.frame_id.is_some());
    }
}

fn arb_graph() -> impl Strategy<Value = (NetworkGraph, TrafficSpec)> {
    (3usize..=6)
        .prop_flat_map(|n| {
            let pairs = n * (n - 1) / 2;
            (
                Just(n),
                proptest::collection::vec(proptest::option::weighted(0.6, 0u64..400), pairs),
                1u64..6,
                1u64..30,
            )
        })
        .prop_map(|(n, bufs, np, len)| {
            let mut g = NetworkGraph::new();
            let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
            for s in &names {
                g.add_node(s).unwrap();
            }
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if let Some(b) = bufs[k] {
                        g.add_edge(&names[i], &names[j], b).unwrap();
                    }
                    k += 1;
                }
            }
            let t = traffic(&names[0], &names[n - 1], np, len);
            (g, t)
        })
}

proptest! {
    #[test]
    fn serve_probability_monotone(b in 0u64..10_000, db in 0u64..500, n in 1u64..50, l in 1u64..50) {
        let p = serve_probability(b, n, l).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(serve_probability(b + db, n, l).unwrap() >= p);
        prop_assert!(serve_probability(b, n + 1, l).unwrap() <= p);
        prop_assert!(serve_probability(b, n, l + 1).unwrap() <= p);
        prop_assert_eq!(serve_probability(n * l, n, l).unwrap(), 1.0);
    }

    #[test]
    fn reservation_never_lowers_chosen_path((g, t) in arb_graph(), alpha in 0.0f64..2.0) {
        let d = flood_discover(&g, &t).unwrap();
        for p in &d.paths {
            let mut seen = std::collections::BTreeSet::new();
            prop_assert!(p.nodes.iter().all(|n| seen.insert(n)));
            prop_assert!(p.edge_probs.iter().all(|x| (0.0..=1.0).contains(x)));
        }
        if let Ok(c) = vc_select(&d.paths, alpha) {
            let mut ledger = ReservationLedger::new();
            let r = reserve_circuit(&g, &t, &d, &c, &mut ledger, &ReserveMode::Fast).unwrap();
            for e in &r.path_edges {
                prop_assert!(e.prob_after >= e.prob_before);
                prop_assert!(e.load_after <= e.load_before);
            }
            prop_assert!(r.path_prob_after >= r.path_prob_before);
            prop_assert_eq!(r.handles.len(), c.nodes.len() - 1);
            let again = reserve_circuit(&g, &t, &d, &c, &mut ledger, &ReserveMode::Fast);
            prop_assert!(matches!(again, Err(Error::AlreadyCommitted(_))));
        }
    }
}
