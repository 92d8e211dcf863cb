//! Build a labeled graph, write it in the `t`/`v`/`e` text format, read it
//! back, and print the local degree profile of every node.
//!
//! ```bash
//! cargo run --example graph_format
//! ```

use submatch::graph::{initial_encoding, parse_graph, serialize_graph, EncodingVariant, LabeledGraph};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a labeled "kite": triangle 0-1-2 with a tail 2-3
    let g = LabeledGraph::from_edges(vec![0, 1, 1, 2], &[(0, 1), (1, 2), (0, 2), (2, 3)])?;
    let text = serialize_graph(&g);
    print!("{text}");

    let back = parse_graph(&text)?;
    assert_eq!(back.num_edges(), g.num_edges());

    let none = vec![false; back.num_nodes()];
    for (u, enc) in initial_encoding(&back, &none, EncodingVariant::Ldp).iter().enumerate() {
        println!("node {u} label {} ldp {:?}", back.label(u), enc.ldp);
    }
    Ok(())
}
