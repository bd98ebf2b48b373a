mod common;

use common::{all_simple_paths, is_valid_simple_path, node_id, GraphSpec};
use proptest::prelude::*;
use smartcity_core::geo::{k_alternative_paths, shortest_path};

fn graph_spec(integer_costs: bool) -> impl Strategy<Value = GraphSpec> {
    (2usize..=8).prop_flat_map(move |n| {
        let edge = (0..n, 0..n, any::<bool>(), 1u32..=1000).prop_filter_map(
            "no self loops",
            move |(f, t, directed, c)| {
                let cost = if integer_costs {
                    (c % 5 + 1) as f64
                } else {
                    c as f64 + c as f64 / 997.0
                };
                (f != t).then_some((f, t, directed, cost))
            },
        );
        proptest::collection::vec(edge, 1..=14).prop_map(move |edges| GraphSpec { nodes: n, edges })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Distinct costs: the exact path sequence is determined.
    #[test]
    fn matches_enumeration_with_distinct_costs(spec in graph_spec(false), o in 0usize..8, d in 0usize..8, k in 1usize..=3) {
        let (o, d) = (o % spec.nodes, d % spec.nodes);
        let (g, w) = spec.build();
        let oracle = all_simple_paths(&spec, o, d);
        let sp = shortest_path(&g, &node_id(o), &node_id(d), &w).unwrap();
        match (&sp, oracle.first()) {
            (None, None) => {}
            (Some(r), Some(best)) => {
                prop_assert_eq!(r.total_cost, best.cost);
                prop_assert_eq!(&r.nodes, &best.nodes);
                prop_assert_eq!(&r.edges, &best.edges);
            }
            _ => prop_assert!(false, "reachability disagrees"),
        }
        let alts = k_alternative_paths(&g, &node_id(o), &node_id(d), k, &w).unwrap();
        let want: Vec<_> = oracle.iter().take(k).collect();
        prop_assert_eq!(alts.len(), want.len());
        for (r, p) in alts.iter().zip(want) {
            prop_assert_eq!(r.total_cost, p.cost);
            prop_assert_eq!(&r.edges, &p.edges);
        }
    }

    /// Tied costs: same cost sequence, every path simple and distinct.
    #[test]
    fn matches_enumeration_with_ties(spec in graph_spec(true), o in 0usize..8, d in 0usize..8, k in 1usize..=3) {
        let (o, d) = (o % spec.nodes, d % spec.nodes);
        let (g, w) = spec.build();
        let oracle = all_simple_paths(&spec, o, d);
        let sp = shortest_path(&g, &node_id(o), &node_id(d), &w).unwrap();
        prop_assert_eq!(sp.as_ref().map(|r| r.total_cost), oracle.first().map(|p| p.cost));
        let alts = k_alternative_paths(&g, &node_id(o), &node_id(d), k, &w).unwrap();
        let costs: Vec<f64> = alts.iter().map(|r| r.total_cost).collect();
        let want: Vec<f64> = oracle.iter().take(k).map(|p| p.cost).collect();
        prop_assert_eq!(costs, want);
        for r in &alts {
            prop_assert!(is_valid_simple_path(&spec, &r.nodes, &r.edges, o, d));
        }
        for i in 0..alts.len() {
            for j in i + 1..alts.len() {
                prop_assert_ne!(&alts[i].edges, &alts[j].edges);
            }
        }
    }
}

#[test]
fn origin_equals_destination() {
    let spec = GraphSpec { nodes: 2, edges: vec![(0, 1, false, 3.0)] };
    let (g, w) = spec.build();
    let r = shortest_path(&g, "n00", "n00", &w).unwrap().unwrap();
    assert_eq!(r.nodes, vec!["n00"]);
    assert!(r.edges.is_empty());
    assert_eq!(r.total_cost, 0.0);
    assert_eq!(k_alternative_paths(&g, "n00", "n00", 3, &w).unwrap().len(), 1);
}
