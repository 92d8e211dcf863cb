//! Random-walk query sampling across the walk-parameter schedule, with the
//! ground-truth mapping checked against the target.

use submatch::graph::synth::preferential_attachment;
use submatch::graph::{p_schedule, random_walk_sample, serialize_mapping};
use submatch::search::verify_match;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = preferential_attachment(3_000, 3, 4, 5);
    for i in [1, 10, 25, 40, 50] {
        let p = p_schedule(i, 50)?;
        let s = random_walk_sample(&g, 16, p, i as u64)?;
        assert!(verify_match(&s.query, &g, &s.truth_mapping));
        println!("i={i:>2} p={p:>10.4} edges={:>3}", s.query.num_edges());
    }
    let s = random_walk_sample(&g, 6, 1.0, 0)?;
    print!("truth mapping of a 6-node query:\n{}", serialize_mapping(&s.truth_mapping));
    Ok(())
}
