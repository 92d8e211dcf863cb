//! Label-free initial node features: a local degree profile plus a
//! selected/unselected one-hot flag.

use super::{LabeledGraph, NodeId};

/// Width of one initial encoding row (5 degree statistics + 2 flag slots).
pub const ENCODING_DIM: usize = 7;

/// Which structural features fill the first five slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EncodingVariant {
    /// Local degree profile.
    #[default]
    Ldp,
    /// Every node gets the same constant profile (ablation).
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEncoding {
    pub ldp: [f64; 5],
    pub selected_flag: [f64; 2],
}

impl NodeEncoding {
    pub fn to_row(&self) -> [f64; ENCODING_DIM] {
        let mut row = [0.0; ENCODING_DIM];
        row[..5].copy_from_slice(&self.ldp);
        row[5..].copy_from_slice(&self.selected_flag);
        row
    }
}

/// `(deg, min, max, mean, population std)` of the neighbor degrees of `u`.
/// An isolated node maps to all zeros.
pub fn ldp_features(g: &LabeledGraph, u: NodeId) -> [f64; 5] {
    let nbrs = g.neighbors(u);
    if nbrs.is_empty() {
        return [0.0; 5];
    }
    let n = nbrs.len() as f64;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &w in nbrs {
        let d = g.degree(w) as f64;
        lo = lo.min(d);
        hi = hi.max(d);
        sum += d;
    }
    let mean = sum / n;
    let var = nbrs
        .iter()
        .map(|&w| {
            let d = g.degree(w) as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    [n, lo, hi, mean, var.sqrt()]
}

/// Per-node encodings; `(1, 0)` marks unselected nodes and `(0, 1)` selected ones.
/// Labels are deliberately not encoded.
pub fn initial_encoding(
    g: &LabeledGraph,
    selected: &[bool],
    variant: EncodingVariant,
) -> Vec<NodeEncoding> {
    assert_eq!(selected.len(), g.num_nodes(), "selection mask must cover every node");
    g.nodes()
        .map(|u| NodeEncoding {
            ldp: match variant {
                EncodingVariant::Ldp => ldp_features(g, u),
                EncodingVariant::Constant => [1.0; 5],
            },
            selected_flag: if selected[u] { [0.0, 1.0] } else { [1.0, 0.0] },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn star(leaves: usize) -> LabeledGraph {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        LabeledGraph::from_edges(vec![0; leaves + 1], &edges).unwrap()
    }

    #[test]
    fn isolated_node_is_all_zero() {
        let g = LabeledGraph::from_edges(vec![0, 1], &[]).unwrap();
        assert_eq!(ldp_features(&g, 0), [0.0; 5]);
    }

    #[test]
    fn neighbor_degrees_one_and_three() {
        // node 0 -- node 1 (degree 1), node 0 -- node 2 (degree 3)
        let g = LabeledGraph::from_edges(vec![0; 5], &[(0, 1), (0, 2), (2, 3), (2, 4)]).unwrap();
        assert_eq!(ldp_features(&g, 0), [2.0, 1.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn star_center() {
        assert_eq!(ldp_features(&star(4), 0), [4.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn selection_flags() {
        let g = star(3);
        let none = initial_encoding(&g, &[false; 4], EncodingVariant::Ldp);
        assert!(none.iter().all(|e| e.selected_flag == [1.0, 0.0]));
        let all = initial_encoding(&g, &[true; 4], EncodingVariant::Ldp);
        assert!(all.iter().all(|e| e.selected_flag == [0.0, 1.0]));
        assert_eq!(all[0].to_row().len(), ENCODING_DIM);
        let constant = initial_encoding(&g, &[false; 4], EncodingVariant::Constant);
        assert!(constant.iter().all(|e| e.ldp == [1.0; 5]));
    }

    proptest! {
        #[test]
        fn ldp_moments_are_consistent(edges in proptest::collection::vec((0usize..12, 0usize..12), 0..40)) {
            let mut set: Vec<(usize, usize)> = edges
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            set.sort_unstable();
            set.dedup();
            let g = LabeledGraph::from_edges(vec![0; 12], &set).unwrap();
            for u in g.nodes() {
                let [deg, lo, hi, mean, std] = ldp_features(&g, u);
                prop_assert_eq!(deg as usize, g.degree(u));
                if deg > 0.0 {
                    prop_assert!(lo <= mean && mean <= hi);
                    let sq = g.neighbors(u).iter().map(|&w| (g.degree(w) as f64).powi(2)).sum::<f64>() / deg;
                    prop_assert!((std * std - (sq - mean * mean)).abs() < 1e-12);
                }
            }
        }
    }
}
