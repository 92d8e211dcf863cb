//! Solve one query with each built-in ordering policy under the same step
//! budget and compare how quickly they find the first match.
//!
//! ```bash
//! cargo run --release --example solve_pair
//! ```

use submatch::graph::synth::preferential_attachment;
use submatch::graph::{p_schedule, random_walk_sample};
use submatch::search::{
    format_match, solve, verify_match, DegreePolicy, FilterMode, IdentityPolicy, Policy, RandomPolicy,
    SearchBudget, TruthPolicy,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = preferential_attachment(3_000, 3, 4, 7);
    let s = random_walk_sample(&g, 20, p_schedule(45, 50)?, 7)?;
    let budget = SearchBudget::steps(100_000).with_solution_cap(10);

    let policies: Vec<(&str, Box<dyn Policy>)> = vec![
        ("identity", Box::new(IdentityPolicy)),
        ("degree", Box::new(DegreePolicy)),
        ("random", Box::new(RandomPolicy::new(7))),
        ("truth", Box::new(TruthPolicy::new(s.truth_mapping.clone()))),
    ];
    for (name, mut policy) in policies {
        let out = solve(&s.query, &g, FilterMode::LdfNlf, policy.as_mut(), &budget)?;
        let first = out.first_solution.map(|f| f.step.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{name:>8}: {} matches, first at step {first}, {} steps, deepest |M| {}",
            out.matches.len(),
            out.steps,
            out.max_depth
        );
        if let Some(m) = out.matches.first() {
            assert!(verify_match(&s.query, &g, m));
            println!("          {}", format_match(m));
        }
    }
    Ok(())
}
