mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use submatch::graph::synth::preferential_attachment;
use submatch::graph::LabeledGraph;
use submatch::model::{EncoderConfig, PolicyModel};
use submatch::search::{backtracking_search, verify_match, FilterMode, RandomPolicy, SearchBudget};
use submatch::tensor::{Tape, Tensor};
use submatch::train::*;

fn small_config() -> EncoderConfig {
    EncoderConfig {
        layers: 2,
        dim: 8,
        ..EncoderConfig::default()
    }
}

fn episode(q: LabeledGraph, g: LabeledGraph) -> Arc<Episode> {
    Arc::new(Episode::new(q, Arc::new(g), FilterMode::LdfNlf).unwrap())
}

fn harvest(ep: &Arc<Episode>) -> Vec<TrainingSample> {
    let out = backtracking_search(&ep.problem(), &mut RandomPolicy::new(1), &SearchBudget::unlimited(), true);
    collect_training_signals(ep, out.tree.as_ref().unwrap())
}

#[test]
fn linear_solution_path_tags_offsets() {
    let q = LabeledGraph::from_edges(vec![0, 1, 2], &[(0, 1), (1, 2)]).unwrap();
    let g = LabeledGraph::from_edges(vec![0, 1, 2, 1], &[(0, 1), (1, 2), (0, 3)]).unwrap();
    let ep = episode(q, g);
    let mut samples = harvest(&ep);
    samples.sort_by_key(|s| s.depth);
    assert_eq!(samples.len(), 3);
    for (t, s) in samples.iter().enumerate() {
        assert_eq!(s.depth, t);
        let ks: Vec<usize> = s.positives.iter().map(|p| p.k).collect();
        assert_eq!(ks, (0..3 - t).collect::<Vec<_>>());
        assert_eq!(s.u, ep.prepared.order.at(t));
    }
}

#[test]
fn branching_solutions_all_reach_the_root() {
    // uniform 3-path into a triangle: six matches, three first choices
    let q = LabeledGraph::from_edges(vec![0; 3], &[(0, 1), (1, 2)]).unwrap();
    let g = LabeledGraph::from_edges(vec![0; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let ep = episode(q, g);
    let samples = harvest(&ep);
    let root = samples.iter().find(|s| s.depth == 0).unwrap();
    let first: BTreeSet<usize> = root.positives.iter().filter(|p| p.k == 0).map(|p| p.v).collect();
    assert_eq!(first, BTreeSet::from([0, 1, 2]));
    for k in 1..3 {
        let at_k: BTreeSet<usize> = root.positives.iter().filter(|p| p.k == k).map(|p| p.v).collect();
        assert_eq!(at_k.len(), 3, "offset {k}");
    }
}

#[test]
fn no_solution_means_no_samples() {
    let q = LabeledGraph::from_edges(vec![0; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let g = LabeledGraph::from_edges(vec![0; 4], &[(0, 1), (1, 2), (2, 3)]).unwrap();
    assert!(harvest(&episode(q, g)).is_empty());
}

#[test]
fn positives_extend_to_verified_matches() {
    for seed in 0..6 {
        let pair = common::sampled_pair(60, 6, seed);
        let ep = episode(pair.query.clone(), pair.target.clone());
        let out = backtracking_search(
            &ep.problem(),
            &mut RandomPolicy::new(seed),
            &SearchBudget::steps(5_000).with_solution_cap(8),
            true,
        );
        let samples = collect_training_signals(&ep, out.tree.as_ref().unwrap());
        assert!(!samples.is_empty());
        for s in &samples {
            for p in &s.positives {
                let witness = out.matches.iter().find(|m| {
                    m[p.u] == p.v && s.assignment.iter().enumerate().all(|(u, a)| a.is_none_or(|v| m[u] == v))
                });
                let m = witness.unwrap_or_else(|| panic!("seed {seed}: {p:?} extends to no match"));
                assert!(verify_match(&pair.query, &pair.target, m));
            }
        }
    }
}

#[test]
fn truth_path_yields_one_sample_per_depth() {
    let pair = common::sampled_pair(120, 10, 3);
    let ep = episode(pair.query.clone(), pair.target.clone());
    let samples = collect_training_signals(&ep, &truth_path_tree(&ep, &pair.truth));
    assert_eq!(samples.len(), 10);
    for s in &samples {
        assert_eq!(s.positives.len(), 10 - s.depth);
        assert!(s.positives.iter().all(|p| pair.truth[p.u] == p.v));
    }
}

fn sample_with_actions(seed: u64) -> (TrainingSample, Vec<usize>) {
    let pair = common::sampled_pair(80, 5, seed);
    let ep = episode(pair.query.clone(), pair.target.clone());
    let samples = collect_training_signals(&ep, &truth_path_tree(&ep, &pair.truth));
    let s = samples.into_iter().find(|s| s.depth == 0).unwrap();
    let a = s.actions();
    (s, a)
}

#[test]
fn negatives_match_positive_count_and_come_from_actions() {
    let mut roomy = 0;
    for seed in 0..20 {
        let (s, actions) = sample_with_actions(seed);
        let n = sample_negatives(&s, &actions, 9);
        assert_eq!(n.len(), s.positives.len());
        if actions.len() <= s.positives.len() {
            continue;
        }
        roomy += 1;
        let distinct: BTreeSet<_> = n.iter().collect();
        assert_eq!(distinct.len(), n.len());
        for &(u, v) in &n {
            assert_eq!(u, s.u);
            assert!(actions.contains(&v));
        }
    }
    assert!(roomy > 0);
}

#[test]
fn ten_actions_one_positive() {
    let (mut s, _) = sample_with_actions(4);
    s.positives.truncate(2);
    let actions: Vec<usize> = (0..10).collect();
    s.positives[0].v = 3;
    s.positives[0].u = s.u;
    s.positives[0].k = 0;
    let n = sample_negatives(&s, &actions, 1);
    assert_eq!(n.len(), 2);
    assert!(n.iter().all(|&(u, v)| u == s.u && v != 3));
}

#[test]
fn exhausted_pool_falls_back_to_later_nodes() {
    let (s, _) = sample_with_actions(5);
    let only = s.positives.iter().find(|p| p.k == 0).unwrap().v;
    let n = sample_negatives(&s, &[only], 2);
    assert_eq!(n.len(), s.positives.len());
    for &(u, v) in &n {
        assert_ne!(u, s.u);
        assert!(!s.positives.iter().any(|p| p.u == u && p.v == v));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn negatives_never_hit_current_positives(seed in any::<u64>()) {
        let (s, actions) = FIXED.with(|f| f.clone());
        let n = sample_negatives(&s, &actions, seed);
        prop_assert_eq!(n.len(), s.positives.len());
        for (u, v) in n {
            prop_assert!(!s.positives.iter().any(|p| p.k == 0 && p.u == u && p.v == v));
        }
    }
}

thread_local! {
    static FIXED: (TrainingSample, Vec<usize>) = sample_with_actions(6);
}

fn logit_column(values: &[f64]) -> (Tape, submatch::tensor::Var) {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::matrix(values.len(), 1, values.to_vec()).unwrap()).unwrap();
    (tape, v)
}

#[test]
fn single_positive_at_one_half_costs_ln_two() {
    let (mut tape, v) = logit_column(&[0.0]);
    let l = look_ahead_from_logits(&mut tape, v, &[true]).unwrap();
    assert!((tape.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);
    let (mut tape, v) = logit_column(&[0.0, 0.0]);
    let l = look_ahead_from_logits(&mut tape, v, &[true, true]).unwrap();
    assert!((tape.scalar_value(l) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn saturated_predictions_cost_almost_nothing() {
    let (mut tape, v) = logit_column(&[60.0, 60.0, -60.0]);
    let l = look_ahead_from_logits(&mut tape, v, &[true, true, false]).unwrap();
    assert!(tape.scalar_value(l) / 3.0 < 1e-5);
}

/// Labels enter as rewards: `−Σ R log π + (1 − R) log(1 − π)`.
fn reward_form(logits: &[f64], positive: &[bool]) -> f64 {
    let mut total = 0.0;
    for (&x, &pos) in logits.iter().zip(positive) {
        let p = (1.0 / (1.0 + (-x).exp())).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let r = if pos { 1.0 } else { 0.0 };
        total -= r * p.ln() + (1.0 - r) * (1.0 - p).ln();
    }
    total
}

#[test]
fn simplified_loss_equals_reward_form() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(1..12);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let (mut tape, v) = logit_column(&logits);
        let l = look_ahead_from_logits(&mut tape, v, &labels).unwrap();
        assert!((tape.scalar_value(l) - reward_form(&logits, &labels)).abs() < 1e-12);
    }
}

#[test]
fn look_ahead_is_additive_over_pairs() {
    let logits = [0.3, -1.2, 2.0, 0.7];
    let labels = [true, false, true, false];
    let (mut tape, v) = logit_column(&logits);
    let whole = look_ahead_from_logits(&mut tape, v, &labels).unwrap();
    let whole = tape.scalar_value(whole);
    let mut parts = 0.0;
    for i in 0..4 {
        let (mut t, v) = logit_column(&logits[i..=i]);
        let l = look_ahead_from_logits(&mut t, v, &labels[i..=i]).unwrap();
        parts += t.scalar_value(l);
    }
    assert_eq!(whole, parts);
}

fn mm(hu: &[f64], hv: &[f64], positive: bool) -> f64 {
    let d = hu.len();
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::matrix(1, d, hu.to_vec()).unwrap()).unwrap();
    let b = tape.constant(Tensor::matrix(1, d, hv.to_vec()).unwrap()).unwrap();
    let l = max_margin_from_embeddings(&mut tape, a, b, &[positive], 1.0).unwrap();
    tape.scalar_value(l)
}

#[test]
fn max_margin_examples() {
    assert_eq!(mm(&[0.4, -1.0, 2.0], &[0.4, -1.0, 2.0], true), 0.0);
    assert_eq!(mm(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], true), 1.0);
    assert_eq!(mm(&[-1.0, -2.0], &[0.0, 0.0], true), 0.0);
    assert_eq!(mm(&[2.0, 0.0], &[0.0, 0.0], false), 0.0);
    assert!((mm(&[0.5, 0.0], &[0.0, 0.0], false) - 0.75).abs() < 1e-15);
}

#[test]
fn total_is_the_sum_of_both_terms() {
    for seed in 0..3 {
        let (model, sample) = gradcheck_fixture(seed, small_config()).unwrap();
        let mut tape = Tape::new();
        let l = total_loss(&model, &sample, 1.0, &mut tape).unwrap();
        let (la, mm, total) = (tape.scalar_value(l.la), tape.scalar_value(l.mm), tape.scalar_value(l.total));
        assert!(la > 0.0 && mm > 0.0);
        assert!((total - (la + mm)).abs() < 1e-12);
        assert_eq!(l.excluded, 0);
    }
}

#[test]
fn pairs_outside_the_candidate_structure_are_excluded() {
    let (model, mut sample) = gradcheck_fixture(2, small_config()).unwrap();
    let mut tape = Tape::new();
    let base = total_loss(&model, &sample, 1.0, &mut tape).unwrap();
    let base = tape.scalar_value(base.total);
    let matched = sample.assignment.iter().position(Option::is_some).unwrap();
    sample.negatives.push((matched, 0));
    let mut tape = Tape::new();
    let l = total_loss(&model, &sample, 1.0, &mut tape).unwrap();
    assert_eq!(l.excluded, 1);
    assert_eq!(tape.scalar_value(l.total), base);
}

#[test]
fn batch_loss_is_the_mean_of_sample_losses() {
    let (model, a) = gradcheck_fixture(0, small_config()).unwrap();
    let (_, b) = gradcheck_fixture(1, small_config()).unwrap();
    let single = |s: &TrainingSample| {
        let mut t = Tape::new();
        let l = total_loss(&model, s, 1.0, &mut t).unwrap();
        t.scalar_value(l.total)
    };
    let mut tape = Tape::new();
    let l = BatchLoss::new(&model, 1.0).batch_loss(&mut tape, &[&a, &b]).unwrap();
    let expect = (single(&a) + single(&b)) / 2.0;
    assert!((tape.scalar_value(l.total) - expect).abs() < 1e-12 * expect);
}

#[test]
fn gradient_flows_into_every_parameter_group() {
    let (mut model, sample) = gradcheck_fixture(1, small_config()).unwrap();
    let mut tape = Tape::new();
    let l = total_loss(&model, &sample, 1.0, &mut tape).unwrap();
    model.params_mut().zero_grads();
    tape.backward(l.total, model.params_mut()).unwrap();
    for prefix in ["l0.sage", "l1.comb_q", "l1.comb_g", "att.0", "pol.0", "bil.w", "norm.gamma"] {
        let touched = model
            .params()
            .ids()
            .filter(|&id| model.params().name(id).starts_with(prefix))
            .any(|id| model.params().grad(id).norm_sq() > 0.0);
        assert!(touched, "{prefix} received no gradient");
    }
}

#[test]
fn replay_buffer_is_fifo_and_bounded() {
    let (s, _) = sample_with_actions(1);
    let mut buf = ReplayBuffer::new(128);
    for i in 0..200 {
        let mut x = s.clone();
        x.depth = i;
        buf.push(x);
        assert!(buf.len() <= 128);
    }
    assert_eq!(buf.len(), 128);
    assert_eq!(buf.evicted(), 72);
    let depths: Vec<usize> = buf.iter().map(|x| x.depth).collect();
    assert_eq!(depths, (72..200).collect::<Vec<_>>());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = buf.sample(32, &mut rng);
    let distinct: BTreeSet<usize> = batch.iter().map(|x| x.depth).collect();
    assert_eq!(distinct.len(), 32);
    assert_eq!(buf.sample(500, &mut rng).len(), 128);
}

fn tiny_trainer(config: TrainConfig) -> Trainer {
    let g = Arc::new(preferential_attachment(200, 2, 3, 5));
    let model = PolicyModel::new(small_config(), 5).unwrap();
    Trainer::new(g, model, config, Vec::new()).unwrap()
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        curriculum: vec![8],
        search_steps: 2_000,
        batch_size: 8,
        batches_per_iteration: 2,
        validation_sizes: vec![6, 10],
        validation_per_size: 2,
        validation_steps: 200,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn no_signal_means_no_optimizer_steps() {
    let mut t = tiny_trainer(TrainConfig {
        search_steps: 1,
        truth_fallback: false,
        ..tiny_config()
    });
    let before = t.model().params().clone();
    let r = t.train_iteration().unwrap();
    assert_eq!((r.samples_added, r.optimizer_steps, r.buffer_size), (0, 0, 0));
    assert!(r.loss_total.is_none());
    assert!(t.model().params().bitwise_eq(&before));
}

#[test]
fn truth_fallback_feeds_the_buffer() {
    let mut t = tiny_trainer(TrainConfig {
        search_steps: 1,
        ..tiny_config()
    });
    let r = t.train_iteration().unwrap();
    assert!(r.used_truth);
    assert_eq!(r.samples_added, 8);
    assert_eq!(r.optimizer_steps, 2);
}

#[test]
fn training_loss_decreases_on_a_fixed_seed() {
    let mut t = tiny_trainer(TrainConfig {
        validate_every: 0,
        optimizer: AdamWConfig {
            lr: 5e-3,
            ..AdamWConfig::default()
        },
        ..tiny_config()
    });
    let mut losses = Vec::new();
    for _ in 0..20 {
        let r = t.step().unwrap();
        losses.push(r.loss_total.unwrap());
    }
    let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = losses[15..].iter().sum::<f64>() / 5.0;
    assert!(tail < head, "losses {losses:?}");
}

#[test]
fn validation_set_composition_and_disjointness() {
    let t = tiny_trainer(tiny_config());
    let sizes: Vec<usize> = t.validation().iter().map(|e| e.query.num_nodes()).collect();
    assert_eq!(sizes, vec![6, 6, 10, 10]);
    let v = t.validation();
    for i in 0..v.len() {
        for j in 0..i {
            assert!(!submatch::graph::isomorphic_check(&v[i].query, &v[j].query));
        }
    }
}

#[test]
fn all_solved_validation_reward_is_mean_query_size() {
    let sizes = [8, 16, 32, 64, 128];
    let expect: f64 = sizes.iter().map(|&n| 3.0 * n as f64).sum::<f64>() / 15.0;
    assert!((expect - 49.6).abs() < 1e-12);
    let g = Arc::new(preferential_attachment(400, 2, 3, 9));
    let model = PolicyModel::new(small_config(), 9).unwrap();
    let t = Trainer::new(
        g,
        model,
        TrainConfig {
            validation_sizes: vec![4, 6],
            validation_steps: 100_000,
            ..tiny_config()
        },
        Vec::new(),
    )
    .unwrap();
    assert_eq!(t.best().reward, (3.0 * 4.0 + 3.0 * 6.0) / 6.0);
}

#[test]
fn recorded_reward_matches_re_evaluation() {
    let mut t = tiny_trainer(tiny_config());
    for _ in 0..3 {
        t.step().unwrap();
    }
    let best = t.best().clone();
    let mut model = t.model().clone();
    model.params_mut().copy_values_from(&best.params).unwrap();
    let again = validation_reward(&model, t.validation(), t.config().validation_steps);
    assert_eq!(again, best.reward);
}

#[test]
fn rejected_update_restores_best_bit_exact() {
    let mut t = tiny_trainer(TrainConfig {
        optimizer: AdamWConfig {
            lr: 0.5,
            ..AdamWConfig::default()
        },
        ..tiny_config()
    });
    for _ in 0..4 {
        let r = t.step().unwrap();
        let reward = r.val_reward.unwrap();
        if r.accepted {
            assert_eq!(t.best().reward, reward);
        } else {
            assert!(reward <= t.best().reward);
            assert!(t.model().params().bitwise_eq(&t.best().params));
        }
    }
    let rewards: Vec<f64> = t.history().iter().filter(|r| r.accepted).map(|r| r.val_reward.unwrap()).collect();
    assert!(rewards.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn tie_is_reverted() {
    let mut t = tiny_trainer(tiny_config());
    let before = t.model().params().clone();
    let (reward, accepted) = t.validate_and_checkpoint();
    assert_eq!(reward, t.best().reward);
    assert!(!accepted);
    assert!(t.model().params().bitwise_eq(&before));
}

#[test]
fn training_log_rows() {
    let mut t = tiny_trainer(tiny_config());
    let mut log = TrainLog::new(Vec::new());
    t.run(2, Some(&mut log)).unwrap();
    let text = String::from_utf8(log.into_inner().unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,loss_la,loss_mm,loss_total,buffer_size,val_reward,accepted");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
}
