use super::LabeledGraph;
use crate::search::{
    backtracking_search, ldf_filter, nlf_filter, IdentityPolicy, QueryOrder, RestartConfig,
    SearchBudget, SearchProblem,
};

/// Labeled-graph isomorphism for query-scale graphs.
///
/// With equal node and edge counts, a non-induced match of `g1` into `g2` is
/// a bijection that maps every edge onto an edge, hence an isomorphism.
pub fn isomorphic_check(g1: &LabeledGraph, g2: &LabeledGraph) -> bool {
    if g1.num_nodes() != g2.num_nodes() || g1.num_edges() != g2.num_edges() {
        return false;
    }
    let mut l1 = g1.labels().to_vec();
    let mut l2 = g2.labels().to_vec();
    l1.sort_unstable();
    l2.sort_unstable();
    if l1 != l2 {
        return false;
    }
    let mut d1: Vec<usize> = g1.nodes().map(|u| g1.degree(u)).collect();
    let mut d2: Vec<usize> = g2.nodes().map(|u| g2.degree(u)).collect();
    d1.sort_unstable();
    d2.sort_unstable();
    if d1 != d2 {
        return false;
    }
    if g1.num_nodes() == 0 {
        return true;
    }
    let candidates = nlf_filter(g1, g2, &ldf_filter(g1, g2));
    let order = QueryOrder::covering(g1, &candidates);
    let problem = SearchProblem {
        query: g1,
        target: g2,
        candidates: &candidates,
        order: &order,
    };
    let budget = SearchBudget::unlimited()
        .with_solution_cap(1)
        .with_restart(RestartConfig::disabled());
    backtracking_search(&problem, &mut IdentityPolicy, &budget, false).solved()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_isomorphic() {
        let g = LabeledGraph::from_edges(vec![0, 1, 1, 2], &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        assert!(isomorphic_check(&g, &g));
    }

    #[test]
    fn triangle_is_not_a_path() {
        let t = LabeledGraph::from_edges(vec![0; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let p = LabeledGraph::from_edges(vec![0; 3], &[(0, 1), (1, 2)]).unwrap();
        assert!(!isomorphic_check(&t, &p));
    }

    #[test]
    fn permutation_and_relabeling() {
        let g = LabeledGraph::from_edges(vec![0, 1, 2, 0], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        // ids permuted by 0->3, 1->2, 2->1, 3->0
        let permuted = LabeledGraph::from_edges(vec![0, 2, 1, 0], &[(3, 2), (2, 1), (1, 0)]).unwrap();
        assert!(isomorphic_check(&g, &permuted));
        let relabeled = LabeledGraph::from_edges(vec![0, 2, 1, 1], &[(3, 2), (2, 1), (1, 0)]).unwrap();
        assert!(!isomorphic_check(&g, &relabeled));
    }

    #[test]
    fn same_invariants_different_structure() {
        // Two 6-node 2-regular graphs: a hexagon vs two triangles.
        let hex = LabeledGraph::from_edges(vec![0; 6], &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
        let tris = LabeledGraph::from_edges(vec![0; 6], &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
        assert!(!isomorphic_check(&hex, &tris));
        assert!(isomorphic_check(&tris, &tris));
    }
}
