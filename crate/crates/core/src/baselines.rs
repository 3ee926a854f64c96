//! Classical partitioners used as references: sorted insertion and
//! recursive-largest-first coloring.

use crate::graph::{CommutGraph, Coloring, NodeSet, Scheme};
use crate::hamiltonian::QubitHamiltonian;

/// Sorted insertion: visit terms by descending `|coeff|` (stable, so ties keep
/// file order) and put each into the first group whose members all commute
/// with it, opening a new group otherwise.
pub fn sorted_insertion(h: &QubitHamiltonian, scheme: Scheme) -> Coloring {
    let terms = h.terms();
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by(|&a, &b| terms[b].coeff.abs().total_cmp(&terms[a].coeff.abs()));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in order {
        let word = &terms[k].word;
        let fits = |g: &Vec<usize>| {
            g.iter().all(|&m| match scheme {
                Scheme::Fc => word.commutes_fc_unchecked(&terms[m].word),
                Scheme::Qwc => word.commutes_qwc_unchecked(&terms[m].word),
            })
        };
        match groups.iter_mut().find(|g| fits(g)) {
            Some(g) => g.push(k),
            None => groups.push(vec![k]),
        }
    }
    Coloring::from_groups(terms.len(), &groups)
}

/// Recursive largest first on a complement graph.
///
/// Each color class starts from the uncolored node of largest degree in the
/// uncolored subgraph. Candidates are uncolored nodes not adjacent to the
/// class; the next member is the candidate with the most neighbors among the
/// uncolored nodes already excluded from the class, ties broken by fewer
/// neighbors among the candidates, then by lowest index.
pub fn rlf_coloring(g: &CommutGraph) -> Coloring {
    let n = g.n_nodes();
    let mut colors = vec![0u32; n];
    let mut uncolored: Vec<bool> = vec![true; n];
    let mut remaining = n;
    let mut color = 0u32;

    while remaining > 0 {
        color += 1;
        let mut uncolored_set = NodeSet::new(n);
        for v in (0..n).filter(|&v| uncolored[v]) {
            uncolored_set.insert(v);
        }
        let seed = (0..n)
            .filter(|&v| uncolored[v])
            .max_by_key(|&v| (g.neighbor_set(v).intersection_len(&uncolored_set), std::cmp::Reverse(v)))
            .expect("an uncolored node remains");

        let mut candidates = NodeSet::new(n);
        let mut excluded = NodeSet::new(n);
        for v in (0..n).filter(|&v| uncolored[v] && v != seed) {
            if g.has_edge(seed, v) {
                excluded.insert(v);
            } else {
                candidates.insert(v);
            }
        }
        let mut class = vec![seed];
        while !candidates.is_empty() {
            let next = (0..n)
                .filter(|&v| candidates.contains(v))
                .max_by_key(|&v| {
                    let nb = g.neighbor_set(v);
                    (
                        nb.intersection_len(&excluded),
                        std::cmp::Reverse(nb.intersection_len(&candidates)),
                        std::cmp::Reverse(v),
                    )
                })
                .expect("candidate set is nonempty");
            class.push(next);
            let mut still = NodeSet::new(n);
            for v in (0..n).filter(|&v| candidates.contains(v) && v != next) {
                if g.has_edge(next, v) {
                    excluded.insert(v);
                } else {
                    still.insert(v);
                }
            }
            candidates = still;
        }
        for v in class {
            colors[v] = color;
            uncolored[v] = false;
            remaining -= 1;
        }
    }
    Coloring::from_colors(colors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> CommutGraph {
        let e: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        CommutGraph::from_edges(n, &e, Scheme::Fc, true)
    }

    #[test]
    fn rlf_small_graphs() {
        let empty = CommutGraph::from_edges(5, &[], Scheme::Fc, true);
        assert_eq!(rlf_coloring(&empty).n_groups(), 1);
        let k4 = complete(4);
        let c = rlf_coloring(&k4);
        assert_eq!(c.n_groups(), 4);
        assert!(k4.is_valid(&c).unwrap());
    }

    #[test]
    fn rlf_colors_bipartite_graph_with_two() {
        // 6-cycle
        let e = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)];
        let g = CommutGraph::from_edges(6, &e, Scheme::Fc, true);
        let c = rlf_coloring(&g);
        assert_eq!(c.n_groups(), 2);
        assert!(g.is_valid(&c).unwrap());
    }

    #[test]
    fn si_single_term_and_determinism() {
        let h = QubitHamiltonian::parse_str("qubits: 1\n0.3 Z0\n").unwrap();
        assert_eq!(sorted_insertion(&h, Scheme::Fc).n_groups(), 1);

        let h = QubitHamiltonian::parse_str("qubits: 2\n0.5 X0\n0.5 Z0\n0.5 Z1\n0.9 X1\n").unwrap();
        let a = sorted_insertion(&h, Scheme::Fc);
        // X1 first (largest), then X0 joins it; Z0 anticommutes with X0 -> new group; Z1 vs X1 -> joins Z0.
        assert_eq!(a.groups().unwrap(), vec![vec![0, 3], vec![1, 2]]);
        assert_eq!(a, sorted_insertion(&h, Scheme::Fc));
    }

    #[test]
    fn si_groups_commute_under_scheme() {
        let h = QubitHamiltonian::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/h2_jw.ham"))
            .unwrap();
        for scheme in [Scheme::Fc, Scheme::Qwc] {
            let c = sorted_insertion(&h, scheme);
            for g in c.groups().unwrap() {
                for &a in &g {
                    for &b in &g {
                        let (p, q) = (&h.term(a).word, &h.term(b).word);
                        let ok = match scheme {
                            Scheme::Fc => p.commutes_fc(q).unwrap(),
                            Scheme::Qwc => p.commutes_qwc(q).unwrap(),
                        };
                        assert!(ok);
                    }
                }
            }
            let comp = CommutGraph::build(&h, scheme, true);
            assert!(comp.is_valid(&c).unwrap());
        }
    }
}
