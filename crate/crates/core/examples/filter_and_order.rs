//! Candidate filtering and the matching order for a sampled query.

use submatch::graph::random_walk_sample;
use submatch::graph::synth::preferential_attachment;
use submatch::search::{ldf_filter, nlf_filter, order_query_nodes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = preferential_attachment(2_000, 3, 6, 1);
    let s = random_walk_sample(&g, 10, 1.0, 1)?;
    let q = &s.query;

    let ldf = ldf_filter(q, &g);
    let nlf = nlf_filter(q, &g, &ldf);
    println!("node  |C_ldf|  |C_nlf|");
    for u in q.nodes() {
        println!("{u:>4} {:>8} {:>8}", ldf.len(u), nlf.len(u));
    }
    println!("total {} -> {}", ldf.total(), nlf.total());

    let order = order_query_nodes(q, &nlf)?;
    println!("order {:?}", order.as_slice());
    Ok(())
}
