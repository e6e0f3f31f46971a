use chordnet::graph::*;
use proptest::prelude::*;

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (1..=max_nodes).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
            let mut g = Graph::new(n);
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if bits[k] {
                        g.add_edge(i, j).unwrap();
                    }
                    k += 1;
                }
            }
            g
        })
    })
}

/// All maximal cliques by subset enumeration.
fn brute_force_cliques(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let complete: Vec<u32> = (1u32..(1 << n))
        .filter(|&s| {
            let nodes: Vec<usize> = (0..n).filter(|&v| s >> v & 1 == 1).collect();
            g.is_complete_on(&nodes)
        })
        .collect();
    let mut out: Vec<Vec<usize>> = complete
        .iter()
        .filter(|&&s| !complete.iter().any(|&t| t != s && t & s == s))
        .map(|&s| (0..n).filter(|&v| s >> v & 1 == 1).collect())
        .collect();
    out.sort();
    out
}

proptest! {
    #[test]
    fn extension_is_chordal_supergraph(g in graph_strategy(12)) {
        let (h, fill) = chordal_extension(&g);
        prop_assert!(is_chordal(&h).0);
        prop_assert!(h.is_supergraph_of(&g));
        prop_assert_eq!(h.edge_count(), g.edge_count() + fill.len());
        for &(i, j) in &fill {
            prop_assert!(i < j && h.has_edge(i, j) && !g.has_edge(i, j));
        }
        let (again, more) = chordal_extension(&h);
        prop_assert_eq!(again, h);
        prop_assert!(more.is_empty());
    }

    #[test]
    fn elimination_ordering_is_perfect(g in graph_strategy(10)) {
        let (h, _) = chordal_extension(&g);
        let (ok, ord) = is_chordal(&h);
        prop_assert!(ok);
        let ord = ord.unwrap();
        let pos = ord.positions();
        for v in 0..h.node_count() {
            let later: Vec<usize> = h.neighbors(v).iter().copied().filter(|&u| pos[u] > pos[v]).collect();
            prop_assert!(h.is_complete_on(&later));
        }
    }

    #[test]
    fn cliques_match_brute_force(g in graph_strategy(10)) {
        let (h, _) = chordal_extension(&g);
        let cs = maximal_cliques(&h).unwrap();
        prop_assert_eq!(&cs.cliques, &brute_force_cliques(&h));
        for (a, ca) in cs.iter().enumerate() {
            prop_assert!(h.is_complete_on(ca));
            for (b, cb) in cs.iter().enumerate() {
                prop_assert!(a == b || !ca.iter().all(|x| cb.contains(x)));
            }
        }
        for (i, j) in h.edges() {
            prop_assert!(cs.iter().any(|c| c.contains(&i) && c.contains(&j)));
        }
    }

    #[test]
    fn clique_tree_has_running_intersection(g in graph_strategy(14)) {
        let (h, _) = chordal_extension(&g);
        let cs = maximal_cliques(&h).unwrap();
        let tree = clique_tree(&cs);
        prop_assert!(tree.has_running_intersection(h.node_count()));
        let comps = h.components().len();
        prop_assert_eq!(tree.edges.len() + comps, cs.len());
        let (parent, post) = tree.rooted();
        let mut seen = vec![false; cs.len()];
        for &k in &post {
            if let Some(p) = parent[k] {
                prop_assert!(!seen[p]);
            }
            seen[k] = true;
        }
    }
}

#[test]
fn cycles_need_fill() {
    for n in 4..9 {
        let mut g = Graph::path(n);
        g.add_edge(0, n - 1).unwrap();
        assert!(!is_chordal(&g).0);
        assert!(matches!(maximal_cliques(&g), Err(chordnet::Error::NotChordal)));
        let (_, fill) = chordal_extension(&g);
        assert_eq!(fill.len(), n - 3);
    }
}

#[test]
fn disconnected_graph_gives_forest() {
    let g = Graph::from_edges(7, [(0, 1), (1, 2), (4, 5)]).unwrap();
    let cs = maximal_cliques(&g).unwrap();
    assert_eq!(cs.cliques, vec![vec![0, 1], vec![1, 2], vec![3], vec![4, 5], vec![6]]);
    let tree = clique_tree(&cs);
    assert_eq!(tree.edges.len(), 1);
    assert_eq!(tree.edges[0].separator, vec![1]);
}
