use proptest::prelude::*;
use qmg_core::baselines::{rlf_coloring, sorted_insertion};
use qmg_core::graph::{first_fit, greedy_color_bound, max_degree_bound};
use qmg_core::*;

fn word(n: usize) -> impl Strategy<Value = PauliWord> {
    (0u64..1 << n, 0u64..1 << n).prop_map(move |(x, z)| PauliWord::from_masks(n, x, z))
}

fn hamiltonian() -> impl Strategy<Value = QubitHamiltonian> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec((word(n), 0.01f64..2.0), 1..24).prop_map(move |terms| {
            let mut text = format!("qubits: {n}\n1.5 Z0\n");
            for (w, c) in terms.iter().filter(|(w, _)| !w.is_identity()) {
                text.push_str(&format!("{c} {}\n", w.to_tokens()));
            }
            QubitHamiltonian::parse_str(&text).unwrap()
        })
    })
}

fn edges(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..n, 0..n), 0..n * 3)
        .prop_map(|v| v.into_iter().filter(|(a, b)| a != b).collect())
}

proptest! {
    #[test]
    fn qwc_implies_fc_and_both_are_symmetric(n in 1usize..=12, seed in any::<(u64, u64, u64, u64)>()) {
        let m = (1u64 << n) - 1;
        let a = PauliWord::from_masks(n, seed.0 & m, seed.1 & m);
        let b = PauliWord::from_masks(n, seed.2 & m, seed.3 & m);
        let fc = a.commutes_fc(&b).unwrap();
        let qwc = a.commutes_qwc(&b).unwrap();
        prop_assert!(!qwc || fc);
        prop_assert_eq!(fc, b.commutes_fc(&a).unwrap());
        prop_assert_eq!(qwc, b.commutes_qwc(&a).unwrap());
    }

    #[test]
    fn complement_partitions_the_pairs(h in hamiltonian()) {
        for scheme in [Scheme::Fc, Scheme::Qwc] {
            let g = CommutGraph::build(&h, scheme, false);
            let c = CommutGraph::build(&h, scheme, true);
            let n = h.n_terms();
            prop_assert_eq!(g.n_edges() + c.n_edges(), n * (n - 1) / 2);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        prop_assert_ne!(g.has_edge(i, j), c.has_edge(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn qwc_complement_contains_fc_complement(h in hamiltonian()) {
        let fc = CommutGraph::build(&h, Scheme::Fc, true);
        let qwc = CommutGraph::build(&h, Scheme::Qwc, true);
        for (i, j) in fc.edges() {
            prop_assert!(qwc.has_edge(i, j));
        }
    }

    #[test]
    fn baselines_give_valid_groupings(h in hamiltonian()) {
        for scheme in [Scheme::Fc, Scheme::Qwc] {
            let comp = CommutGraph::build(&h, scheme, true);
            let si = sorted_insertion(&h, scheme);
            let rlf = rlf_coloring(&comp);
            prop_assert!(comp.is_valid(&si).unwrap());
            prop_assert!(comp.is_valid(&rlf).unwrap());
            for c in [&si, &rlf] {
                let groups = c.groups().unwrap();
                let mut all: Vec<usize> = groups.concat();
                all.sort_unstable();
                prop_assert_eq!(all, (0..h.n_terms()).collect::<Vec<_>>());
                for g in &groups {
                    for (a, &i) in g.iter().enumerate() {
                        for &j in &g[a + 1..] {
                            let (wi, wj) = (&h.term(i).word, &h.term(j).word);
                            let ok = match scheme {
                                Scheme::Fc => wi.commutes_fc(wj).unwrap(),
                                Scheme::Qwc => wi.commutes_qwc(wj).unwrap(),
                            };
                            prop_assert!(ok);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_bound_witness_is_valid(n in 1usize..30, e in edges(30), seed in any::<u64>()) {
        let e: Vec<_> = e.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let g = CommutGraph::from_edges(n, &e, Scheme::Fc, true);
        let (k, w) = greedy_color_bound(&g, seed);
        prop_assert!(g.is_valid(&w).unwrap());
        prop_assert_eq!(w.n_groups() as u32, k);
        prop_assert!(k as usize <= g.max_degree() + 1);
        prop_assert!(max_degree_bound(&g) as usize == g.max_degree());
    }

    #[test]
    fn first_fit_is_valid_for_any_order(n in 1usize..20, e in edges(20), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let e: Vec<_> = e.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let g = CommutGraph::from_edges(n, &e, Scheme::Fc, true);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(g.is_valid(&first_fit(&g, &order)).unwrap());
    }

    #[test]
    fn canonical_form_ignores_color_names(colors in prop::collection::vec(1u32..6, 1..15), shift in 1u32..5) {
        let a = Coloring::from_colors(colors.clone());
        let b = Coloring::from_colors(colors.iter().map(|c| (c + shift - 1) % 5 + 1).collect());
        prop_assert_eq!(a.canonical(), b.canonical());
        prop_assert_eq!(a.n_groups(), b.n_groups());
    }
}

#[test]
fn relabelling_terms_permutes_the_graph() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/h4_jw.ham")).unwrap();
    let h = QubitHamiltonian::parse_str(&text).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let body_start = lines.iter().position(|l| l.starts_with("qubits:")).unwrap() + 2;
    lines[body_start..].reverse();
    let r = QubitHamiltonian::parse_str(&lines.join("\n")).unwrap();
    let n = h.n_terms();
    assert_eq!(r.n_terms(), n);
    let perm = |i: usize| n - 1 - i;
    for i in 0..n {
        assert_eq!(h.term(i).word, r.term(perm(i)).word);
    }
    let g = CommutGraph::build(&h, Scheme::Fc, true);
    let gr = CommutGraph::build(&r, Scheme::Fc, true);
    assert_eq!(g.n_edges(), gr.n_edges());
    for (i, j) in g.edges() {
        assert!(gr.has_edge(perm(i), perm(j)));
    }
}
