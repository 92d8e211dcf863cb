//! Score the candidates of the first query node with an untrained policy
//! network and order them the way the neural search policy would.

use submatch::graph::random_walk_sample;
use submatch::graph::synth::preferential_attachment;
use submatch::model::{policy_distribution, EmbeddingCache, EncoderConfig, PolicyModel, StateContext};
use submatch::search::{local_candidates, FilterMode, Prepared};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = preferential_attachment(500, 3, 3, 2);
    let s = random_walk_sample(&g, 8, 1.0, 2)?;
    let prep = Prepared::new(&s.query, &g, FilterMode::LdfNlf)?;
    let problem = prep.problem(&s.query, &g);

    let model = PolicyModel::new(EncoderConfig::default(), 2)?;
    println!("{} parameters, config {}", model.params().num_scalars(), model.config());

    let mut cache = EmbeddingCache::new();
    cache.ensure(&model, &problem)?;
    let assignment = vec![None; s.query.num_nodes()];
    let u = problem.order.at(0);
    let actions = local_candidates(&problem, &assignment, &vec![false; g.num_nodes()], u);
    let ctx = StateContext::build(&problem, &assignment);
    let emb = model.encode(&cache, &problem, &ctx, &actions)?;
    let hs = model.state_embedding(&emb.query)?;
    let probs = policy_distribution(&model.policy_logits(&emb, &hs, u, &actions)?);

    let mut ranked: Vec<(usize, f64)> = actions.iter().copied().zip(probs).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("query node {u}: {} candidates, truth {}", ranked.len(), s.truth_mapping[u]);
    for (v, p) in ranked.iter().take(8) {
        println!("  {v:>4} {p:.4}");
    }
    Ok(())
}
