use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ddi_core::feature_store::{pair_features, EmbeddingTable, PairMode};
use ddi_core::graph_store::{node_holdout_split, NodeRole};
use ddi_core::kd_student::{
    student_forward, student_gradients, DistillTargets, HardLabel, StudentParams, StudentSample, StudentShape,
};
use ddi_core::metrics::{average_precision_stepwise, roc_auc, wilson_ci};
use ddi_core::negative_sampler::build_pool;
use ddi_core::synth_world::{generate, WorldSpec};
use ddi_core::teacher::{
    teacher_forward, teacher_gradients, MissingFeatures, TeacherParams, TeacherSample, TeacherShape,
};
use ddi_core::two_head::calibrate_threshold;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let rows = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    EmbeddingTable::from_rows(dim, rows).unwrap()
}

fn teacher(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = TeacherShape {
        num_drugs: 1000,
        num_relations: 86,
        dim: 64,
        feat_dim: 64,
        hidden: 64,
    };
    let params = TeacherParams::init(shape, 2);
    let features = random_table(1000, 64, &mut rng);
    c.bench_function("teacher_forward d=64 R=86", |b| {
        b.iter(|| teacher_forward(black_box(3), black_box(7), &features, &params, MissingFeatures::Zero).unwrap())
    });
    let sample = TeacherSample {
        head: 3,
        tail: 7,
        relation: 11,
        head_features: features.get(3).unwrap().to_vec(),
        tail_features: features.get(7).unwrap().to_vec(),
    };
    c.bench_function("teacher_gradients d=64 R=86", |b| {
        b.iter(|| teacher_gradients(&params, black_box(&sample)))
    });
}

fn student(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let features = random_table(100, 64, &mut rng);
    let x = pair_features(&features, 1, 2, PairMode::Extended).unwrap().x;
    let params = StudentParams::init(
        StudentShape {
            input: x.len(),
            hidden: 128,
            num_relations: 86,
        },
        4,
    );
    c.bench_function("student_forward 256-128-86", |b| {
        b.iter(|| student_forward(black_box(&x), &params).unwrap())
    });
    let logits: Vec<f64> = (0..86).map(|_| rng.random_range(-3.0..3.0)).collect();
    let sample = StudentSample {
        x: x.clone(),
        targets: DistillTargets::new(logits, Some(HardLabel::Relation(5)), 2.0).unwrap(),
    };
    c.bench_function("student_gradients 256-128-86", |b| {
        b.iter(|| student_gradients(&params, black_box(&sample), 0.5))
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let labels: Vec<bool> = (0..n).map(|i| i % 11 == 0).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&l| rng.random_range(0.0..1.0) + if l { 0.5 } else { 0.0 })
        .collect();
    c.bench_function("roc_auc n=20000", |b| b.iter(|| roc_auc(black_box(&scores), &labels).unwrap()));
    c.bench_function("average_precision n=20000", |b| {
        b.iter(|| average_precision_stepwise(black_box(&scores), &labels).unwrap())
    });
    c.bench_function("calibrate_threshold n=20000", |b| {
        b.iter(|| calibrate_threshold(black_box(&scores), &labels, 0.9).unwrap())
    });
    c.bench_function("wilson_ci", |b| b.iter(|| wilson_ci(black_box(0.71), black_box(1761), 1.96).unwrap()));
}

fn sampling(c: &mut Criterion) {
    let world = generate(&WorldSpec::default()).unwrap();
    let plan = node_holdout_split(&world.kg, 0.8, 0.1, 0).unwrap();
    c.bench_function("build_pool test k=10", |b| {
        b.iter(|| build_pool(&plan, black_box(&plan.test_edges), 10, NodeRole::Test, 0).unwrap())
    });
    c.bench_function("generate default world", |b| b.iter(|| generate(&WorldSpec::default()).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = teacher, student, metrics, sampling
}
criterion_main!(benches);
