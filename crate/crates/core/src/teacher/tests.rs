use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph_store::{NodeRole, SplitPlan, Triple, TripleSet};

fn shape(n: usize, r: usize, d: usize, feat: usize, h: usize) -> TeacherShape {
    TeacherShape {
        num_drugs: n,
        num_relations: r,
        dim: d,
        feat_dim: feat,
        hidden: h,
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_params(seed: u64, s: TeacherShape) -> TeacherParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = TeacherParams::init(s, seed);
    for t in p.tensors_mut() {
        for x in t {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    p
}

/// Straight-line reimplementation of the gate, written without the workspace types.
fn naive_gate(e_hat: &[f64], v_hat: &[f64], w1: &Matrix, w2: &Matrix) -> Vec<f64> {
    let input: Vec<f64> = e_hat.iter().chain(v_hat).copied().collect();
    let mut hidden = Vec::new();
    for j in 0..w1.rows() {
        let mut z = 0.0;
        for (k, x) in input.iter().enumerate() {
            z += w1.get(j, k) * x;
        }
        hidden.push(if z > 0.0 { z } else { 0.0 });
    }
    let mut g = Vec::new();
    for i in 0..w2.rows() {
        let mut z = 0.0;
        for (j, a) in hidden.iter().enumerate() {
            z += w2.get(i, j) * a;
        }
        g.push(1.0 / (1.0 + (-z).exp()));
    }
    g
}

#[test]
fn zero_second_layer_gives_half_gate() {
    let mut p = random_params(1, shape(3, 2, 4, 5, 3));
    p.gate_w2.fill(0.0);
    let g = gate(&[0.3, -1.0, 2.0, 0.1], &[1.0, 1.0, -1.0, 0.0], &p).unwrap();
    assert_eq!(g, vec![0.5; 4]);
}

#[test]
fn large_second_layer_saturates_gate() {
    let mut p = random_params(2, shape(3, 2, 2, 2, 2));
    p.gate_w1 = Matrix::from_vec(2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    p.gate_w2 = Matrix::from_vec(2, 2, vec![1e3, 0.0, 0.0, 0.0]);
    let g = gate(&[1.0, 1.0], &[0.0, 0.0], &p).unwrap();
    assert!(1.0 - g[0] < 1e-12);
    assert_eq!(g[1], 0.5);
}

#[test]
fn gate_matches_naive_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..5 {
        let p = random_params(seed, shape(2, 2, 5, 3, 4));
        let e = rand_vec(&mut rng, 5);
        let v = rand_vec(&mut rng, 5);
        let got = gate(&e, &v, &p).unwrap();
        let want = naive_gate(&e, &v, &p.gate_w1, &p.gate_w2);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn gate_rejects_wrong_widths() {
    let p = random_params(0, shape(2, 2, 3, 3, 3));
    assert!(matches!(gate(&[1.0; 2], &[1.0; 3], &p), Err(Error::Shape(_))));
}

#[test]
fn fuse_endpoints_and_midpoint() {
    let e = [2.0, 0.0];
    let v = [0.0, 2.0];
    assert_eq!(fuse(&e, &v, &[1.0, 1.0]).unwrap(), e.to_vec());
    assert_eq!(fuse(&e, &v, &[0.0, 0.0]).unwrap(), v.to_vec());
    assert_eq!(fuse(&e, &v, &[0.5, 0.5]).unwrap(), vec![1.0, 1.0]);
    assert!(fuse(&e, &v, &[0.5]).is_err());
}

#[test]
fn distmult_scores_by_hand() {
    let ones = vec![1.0; 64];
    let rel = Matrix::from_fn(3, 64, |r, _| if r == 1 { 0.0 } else { 1.0 });
    let s = score_relations(&ones, &ones, &rel).unwrap().s;
    assert_eq!(s, vec![64.0, 0.0, 64.0]);
}

#[test]
fn distmult_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eh = rand_vec(&mut rng, 3);
    let et = rand_vec(&mut rng, 3);
    let rel = Matrix::from_vec(2, 3, rand_vec(&mut rng, 6));
    let got = score_relations(&eh, &et, &rel).unwrap().s;
    for (r, g) in got.iter().enumerate() {
        let want: f64 = (0..3).map(|k| eh[k] * rel.get(r, k) * et[k]).sum();
        assert!((g - want).abs() < 1e-12);
    }
}

#[test]
fn collapses_to_plain_distmult() {
    let s = shape(6, 4, 5, 3, 4);
    let mut p = random_params(5, s);
    p.proj_kg = Matrix::identity(5);
    p.gate_mode = GateMode::ForcedKg;
    let feats = EmbeddingTable::from_rows(3, (0..6).map(|i| vec![i as f64, -1.0, 0.5]).collect())
        .unwrap();
    for (h, t) in [(0, 1), (2, 5), (4, 3)] {
        let got = teacher_forward(h, t, &feats, &p, MissingFeatures::Error).unwrap().s;
        let want = score_relations(p.entity_emb.row(h as usize), p.entity_emb.row(t as usize), &p.relation_emb)
            .unwrap()
            .s;
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_is_pure() {
    let p = random_params(9, shape(4, 3, 4, 2, 3));
    let feats = EmbeddingTable::from_rows(2, vec![vec![1.0, 0.0]; 4]).unwrap();
    let a = teacher_forward(0, 3, &feats, &p, MissingFeatures::Zero).unwrap();
    let b = teacher_forward(0, 3, &feats, &p, MissingFeatures::Zero).unwrap();
    assert_eq!(a, b);
}

#[test]
fn two_drug_world_by_hand() {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let p = TeacherParams {
        entity_emb: Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]),
        relation_emb: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
        proj_kg: Matrix::identity(2),
        proj_feat: Matrix::identity(2),
        gate_w1: Matrix::from_vec(2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        gate_w2: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, -1.0]),
        gate_mode: GateMode::Learned,
        head: ScoringHead::DistMult,
    };
    let feats = EmbeddingTable::from_rows(2, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    // Drug 0: W1·[1,2,0,1] = (1,1) → W2·(1,1) = (1,−1) → g = (σ1, σ−1).
    //   ẽ0 = (σ1·1 + σ−1·0, σ−1·2 + σ1·1).
    // Drug 1: W1·[2,1,1,0] = (2,0) → W2·(2,0) = (2,0) → g = (σ2, ½).
    //   ẽ1 = (2σ2 + (1 − σ2)·1, ½·1 + ½·0).
    let e0 = [sig(1.0), 2.0 * sig(-1.0) + sig(1.0)];
    let e1 = [1.0 + sig(2.0), 0.5];
    let want = [e0[0] * e1[0], e0[1] * e1[1]];
    let got = teacher_forward(0, 1, &feats, &p, MissingFeatures::Error).unwrap().s;
    for (a, b) in got.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn missing_features_follow_policy() {
    let p = random_params(4, shape(3, 2, 3, 2, 2));
    let mut feats = EmbeddingTable::new(2);
    feats.insert(0, &[1.0, 1.0]).unwrap();
    assert!(matches!(
        teacher_forward(0, 2, &feats, &p, MissingFeatures::Error),
        Err(Error::MissingDrug(2))
    ));
    let mut zeroed = feats.clone();
    zeroed.insert(2, &[0.0, 0.0]).unwrap();
    assert_eq!(
        teacher_forward(0, 2, &feats, &p, MissingFeatures::Zero).unwrap(),
        teacher_forward(0, 2, &zeroed, &p, MissingFeatures::Error).unwrap()
    );
    assert!(teacher_forward(0, 7, &feats, &p, MissingFeatures::Zero).is_err());
}

#[test]
fn uniform_logits_cost_ln_r() {
    let l = teacher_loss(&TeacherLogits { s: vec![0.3; 86] }, 17).unwrap();
    assert!((l - 86f64.ln()).abs() < 1e-12);
    assert!((l - 4.4543).abs() < 1e-4);
    assert!(teacher_loss(&TeacherLogits { s: vec![0.0; 86] }, 86).is_err());
}

#[test]
fn saturated_true_logit_costs_nothing() {
    let mut s = vec![0.0; 10];
    s[4] = 800.0;
    let l = teacher_loss(&TeacherLogits { s }, 4).unwrap();
    assert!(l.abs() < 1e-300 || l == 0.0);
}

#[test]
fn loss_matches_direct_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let s: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y = rng.random_range(0..7u32);
        let z: f64 = s.iter().map(|x| x.exp()).sum();
        let want = -(s[y as usize].exp() / z).ln();
        let got = teacher_loss(&TeacherLogits { s }, y).unwrap();
        assert!((got - want).abs() < 1e-10);
    }
}

fn random_sample(rng: &mut ChaCha8Rng, s: TeacherShape) -> TeacherSample {
    TeacherSample {
        head: 0,
        tail: 1,
        relation: rng.random_range(0..s.num_relations as u32),
        head_features: rand_vec(rng, s.feat_dim),
        tail_features: rand_vec(rng, s.feat_dim),
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let s = shape(3, 5, 4, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..5 {
        let p = random_params(100 + seed, s);
        let sample = random_sample(&mut rng, s);
        let err = gradient_check_teacher(&p, &sample, 1e-4).unwrap();
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn forced_gate_gradients_also_check() {
    let s = shape(3, 4, 3, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = random_params(6, s);
    p.gate_mode = GateMode::ForcedKg;
    let err = gradient_check_teacher(&p, &random_sample(&mut rng, s), 1e-4).unwrap();
    assert!(err < 1e-5);
}

#[test]
fn single_relation_loss_is_flat() {
    let s = shape(3, 1, 4, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_params(1, s);
    let sample = random_sample(&mut rng, s);
    assert_eq!(gradient_check_teacher(&p, &sample, 1e-4).unwrap(), 0.0);
}

#[test]
fn corrupted_gradient_is_caught() {
    let s = shape(3, 5, 4, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_params(2, s);
    let sample = random_sample(&mut rng, s);
    let (_, mut grads) = teacher_gradients(&p, &sample);
    let v = grads.gate_w1.get(1, 2);
    grads.gate_w1.set(1, 2, v + 0.05);
    let err =
        gradcheck::max_relative_error(&p, &grads, |q| sample_loss(q, &sample), 1e-4).unwrap();
    assert!(err > 1e-2, "{err}");
}

/// Eight drugs on a ring; relation of `(i, i+k)` is `k − 1`.
fn ring_plan() -> (SplitPlan, EmbeddingTable) {
    let mut raw = Vec::new();
    for i in 0..8u32 {
        for k in 1..=3u32 {
            raw.push(Triple::new(i, k - 1, (i + k) % 8));
        }
    }
    let ts = TripleSet::from_unique(8, 3, raw).unwrap();
    let plan = SplitPlan::from_node_roles(&ts, vec![NodeRole::Train; 8], 0, 1.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let feats = EmbeddingTable::from_rows(4, (0..8).map(|_| rand_vec(&mut rng, 4)).collect()).unwrap();
    (plan, feats)
}

fn toy_config() -> TeacherTrainConfig {
    TeacherTrainConfig {
        dim: 16,
        lr: 0.05,
        epochs: 10,
        batch_size: 4,
        seed: 3,
        ..TeacherTrainConfig::default()
    }
}

#[test]
fn separable_toy_world_is_fit_exactly() {
    let (plan, feats) = ring_plan();
    let trained = train_teacher(&plan, &feats, &toy_config(), None).unwrap();
    let model = TeacherModel {
        params: trained.params,
        features: feats,
        missing_features: MissingFeatures::Error,
    };
    for t in &plan.train_edges {
        let s = model.logits(t.head, t.tail).unwrap();
        assert_eq!(crate::linalg::argmax(&s), Some(t.relation as usize), "{t:?}");
    }
    let trace = &trained.loss_trace;
    assert_eq!(trace.len(), 10);
    assert!(trace.last().unwrap() < &trace[0]);
}

#[test]
fn zero_learning_rate_leaves_params_untouched() {
    let (plan, feats) = ring_plan();
    let cfg = TeacherTrainConfig { lr: 0.0, ..toy_config() };
    let trained = train_teacher(&plan, &feats, &cfg, None).unwrap();
    let shape = trained.params.shape();
    assert_eq!(trained.params, TeacherParams::init(shape, cfg.seed));
}

#[test]
fn training_is_bit_reproducible() {
    let (plan, feats) = ring_plan();
    let a = train_teacher(&plan, &feats, &toy_config(), None).unwrap();
    let b = train_teacher(&plan, &feats, &toy_config(), None).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.params, b.params);
}

#[test]
fn frozen_entities_keep_pretrained_rows() {
    let (plan, feats) = ring_plan();
    let pre = EmbeddingTable::from_rows(16, (0..8).map(|i| vec![0.01 * i as f64; 16]).collect())
        .unwrap();
    let cfg = TeacherTrainConfig {
        freeze_entities: true,
        ..toy_config()
    };
    let trained = train_teacher(&plan, &feats, &cfg, Some(&pre)).unwrap();
    for d in 0..8u32 {
        assert_eq!(trained.params.entity_emb.row(d as usize), pre.get(d).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gate_is_open_interval_and_fusion_is_convex(seed in any::<u64>()) {
        let p = random_params(seed, shape(2, 3, 4, 2, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = rand_vec(&mut rng, 4);
        let v = rand_vec(&mut rng, 4);
        let g = gate(&e, &v, &p).unwrap();
        let f = fuse(&e, &v, &g).unwrap();
        for k in 0..4 {
            prop_assert!(g[k] > 0.0 && g[k] < 1.0);
            prop_assert!(f[k] >= e[k].min(v[k]) - 1e-12 && f[k] <= e[k].max(v[k]) + 1e-12);
        }
    }

    #[test]
    fn distmult_is_symmetric_and_softmax_normalises(seed in any::<u64>()) {
        let p = random_params(seed, shape(4, 6, 3, 2, 2));
        let feats = EmbeddingTable::from_rows(2, vec![vec![0.2, -0.4]; 4]).unwrap();
        let ht = teacher_forward(1, 3, &feats, &p, MissingFeatures::Error).unwrap().s;
        let th = teacher_forward(3, 1, &feats, &p, MissingFeatures::Error).unwrap().s;
        for (a, b) in ht.iter().zip(&th) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let total: f64 = softmax(&ht).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn kg_only_training_keeps_identity_projection() {
    let (plan, feats) = ring_plan();
    let cfg = TeacherTrainConfig {
        kg_only: true,
        ..toy_config()
    };
    let trained = train_teacher(&plan, &feats, &cfg, None).unwrap();
    assert_eq!(trained.params.proj_kg, Matrix::identity(16));
    assert_eq!(trained.params.gate_mode, GateMode::ForcedKg);
    let init = TeacherParams::init(trained.params.shape(), cfg.seed);
    assert_eq!(trained.params.gate_w1, init.gate_w1);
    assert_ne!(trained.params.entity_emb, init.entity_emb);
}
