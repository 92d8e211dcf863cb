//! Exhaustive search against the brute-force oracle on small random pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use submatch::graph::synth::random_connected;
use submatch::search::{brute_force_oracle, solve, FilterMode, RandomPolicy, SearchBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agree = 0;
    for i in 0..50 {
        let q = random_connected(rng.gen_range(2..=5), 0.3, 2, &mut rng);
        let g = random_connected(rng.gen_range(6..=12), 0.4, 2, &mut rng);
        let want = brute_force_oracle(&q, &g).matches;
        let mut found = solve(&q, &g, FilterMode::LdfNlf, &mut RandomPolicy::new(i), &SearchBudget::unlimited())?.matches;
        found.sort();
        if found == want {
            agree += 1;
        } else {
            println!("pair {i}: search {} vs oracle {}", found.len(), want.len());
        }
    }
    println!("{agree}/50 pairs agree with the oracle");
    Ok(())
}
