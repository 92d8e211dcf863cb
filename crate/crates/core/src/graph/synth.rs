//! Small seeded generators for synthetic targets and test corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Label, LabeledGraph, NodeId};

/// Barabási–Albert style graph: a seed clique on `attach + 1` nodes, then
/// every new node links to `attach` distinct earlier nodes chosen with
/// probability proportional to degree. Labels are uniform over `0..num_labels`.
pub fn preferential_attachment(n: usize, attach: usize, num_labels: u32, seed: u64) -> LabeledGraph {
    assert!(attach >= 1 && n > attach, "need n > attach >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = attach + 1;
    let mut edges = Vec::new();
    // Each endpoint appears once per incident edge.
    let mut endpoints: Vec<NodeId> = Vec::new();
    for a in 0..core {
        for b in a + 1..core {
            edges.push((a, b));
            endpoints.extend([a, b]);
        }
    }
    for v in core..n {
        let mut chosen: Vec<NodeId> = Vec::with_capacity(attach);
        while chosen.len() < attach {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for t in chosen {
            edges.push((t, v));
            endpoints.extend([t, v]);
        }
    }
    let labels = random_labels(n, num_labels, &mut rng);
    LabeledGraph::from_edges(labels, &edges).expect("generator emits simple edges")
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `extra_p`.
pub fn random_connected<R: Rng>(n: usize, extra_p: f64, num_labels: u32, rng: &mut R) -> LabeledGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        let parent = rng.gen_range(0..v);
        edges.push((parent, v));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !edges.contains(&(a, b)) && rng.gen_bool(extra_p) {
                edges.push((a, b));
            }
        }
    }
    // Shuffle ids so the tree is not always rooted at node 0.
    let mut perm: Vec<NodeId> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let edges: Vec<_> = edges.into_iter().map(|(a, b)| (perm[a], perm[b])).collect();
    let labels = random_labels(n, num_labels, rng);
    LabeledGraph::from_edges(labels, &edges).expect("generator emits simple edges")
}

fn random_labels<R: Rng>(n: usize, num_labels: u32, rng: &mut R) -> Vec<Label> {
    (0..n).map(|_| rng.gen_range(0..num_labels.max(1))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preferential_attachment_shape() {
        let g = preferential_attachment(1000, 3, 4, 7);
        assert_eq!(g.num_nodes(), 1000);
        assert_eq!(g.num_edges(), 6 + 3 * (1000 - 4));
        assert!(g.is_connected());
        assert!(g.labels().iter().all(|&l| l < 4));
        assert_eq!(g, preferential_attachment(1000, 3, 4, 7));
    }

    #[test]
    fn random_connected_is_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..15 {
            assert!(random_connected(n, 0.2, 3, &mut rng).is_connected());
        }
    }
}
