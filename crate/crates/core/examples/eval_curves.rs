//! Evaluate two policies on the same held-out queries under a step budget
//! and print their cumulative solved-pairs curves as CSV.

use submatch::bench::{aggregate_curves, evaluate_pairs, write_curves, write_records, EvalPair, EvalSettings, PolicyKind};
use submatch::graph::synth::preferential_attachment;
use submatch::graph::{p_schedule, random_walk_sample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = preferential_attachment(2_000, 3, 4, 9);
    let pairs: Vec<EvalPair> = (0..12)
        .map(|i| {
            let query = random_walk_sample(&g, 20, p_schedule(4 * i + 1, 50)?, i as u64).map(|s| s.query);
            Ok(EvalPair { id: i, name: format!("q{i:02}"), query: query.map_err(|e| e.to_string()) })
        })
        .collect::<Result<_, submatch::graph::SampleError>>()?;

    let mut stdout = std::io::stdout();
    for policy in [PolicyKind::Degree, PolicyKind::Random] {
        let settings = EvalSettings { policy, step_limit: Some(20_000), seed: 1, ..EvalSettings::default() };
        let run = evaluate_pairs(&pairs, &g, None, &settings);
        println!("# {policy}: {}/{} solved", run.solved(), run.records.len());
        write_records(&mut stdout, &run.records)?;
        write_curves(&mut stdout, &aggregate_curves(&run.records, 0.02, Some(0.2)))?;
    }
    Ok(())
}
