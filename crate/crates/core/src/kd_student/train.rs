use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    kd_loss, loss_and_grad, DistillTargets, HardLabel, KdObjective, StudentCache, StudentModel,
    StudentParams, StudentShape, Supervision,
};
use crate::error::{Error, Result};
use crate::feature_store::{l2_normalize, pair_features_into, EmbeddingTable, PairMode};
use crate::graph_store::{verify_kd_pairs, verify_no_leakage, LeakageReport, SplitPlan, Triple};
use crate::optim::{Optimizer, OptimizerKind, Parameters};
use crate::scorer::PairScorer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentTrainConfig {
    pub hidden: usize,
    pub alpha: f64,
    pub tau: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub pair_mode: PairMode,
    /// ℓ2-normalise per-drug vectors before pairing.
    pub normalize: bool,
    pub kd_objective: KdObjective,
    pub seed: u64,
}

impl Default for StudentTrainConfig {
    fn default() -> Self {
        StudentTrainConfig {
            hidden: 128,
            alpha: 0.5,
            tau: 1.0,
            lr: 0.1,
            weight_decay: 1e-4,
            batch_size: 1024,
            epochs: 30,
            optimizer: OptimizerKind::Sgd,
            pair_mode: PairMode::Concat,
            normalize: true,
            kd_objective: KdObjective::Bce,
            seed: 0,
        }
    }
}

impl StudentTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau {} must be positive", self.tau)));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::config("student hidden width and batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 {
            return Err(Error::config("student lr / weight decay invalid"));
        }
        Ok(())
    }
}

/// A pair to distil on, with optional hard supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdExample {
    pub head: u32,
    pub tail: u32,
    pub label: Option<HardLabel>,
}

impl KdExample {
    pub fn positive(t: &Triple) -> Self {
        KdExample {
            head: t.head,
            tail: t.tail,
            label: Some(HardLabel::Relation(t.relation)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedStudent {
    pub model: StudentModel,
    /// Mean training objective per epoch.
    pub loss_trace: Vec<f64>,
    /// Mean `L_KD` over the KD set after training; `None` without a teacher.
    pub final_kd_loss: Option<f64>,
    pub leakage: LeakageReport,
}

/// Runs the pre-distillation leakage checks over every KD pair.
pub fn check_kd_set(plan: &SplitPlan, examples: &[KdExample]) -> LeakageReport {
    let labelled: Vec<Triple> = examples
        .iter()
        .filter_map(|e| match e.label {
            Some(HardLabel::Relation(r)) => Some(Triple::new(e.head, r, e.tail)),
            _ => None,
        })
        .collect();
    let unlabelled: Vec<(u32, u32)> = examples
        .iter()
        .filter(|e| !matches!(e.label, Some(HardLabel::Relation(_))))
        .map(|e| (e.head, e.tail))
        .collect();
    verify_no_leakage(plan, &labelled).merge(verify_kd_pairs(plan, &unlabelled, None))
}

fn leakage_gate(plan: &SplitPlan, examples: &[KdExample]) -> Result<LeakageReport> {
    let report = check_kd_set(plan, examples);
    if !report.passed() {
        let shown: Vec<String> = report
            .offending
            .iter()
            .take(5)
            .map(|t| format!("({}, {}, {})", t.head, t.relation, t.tail))
            .collect();
        return Err(Error::Leakage(format!(
            "{}; offending KD items: {}{}",
            report.summary(),
            shown.join(" "),
            if report.offending.len() > 5 { " …" } else { "" }
        )));
    }
    Ok(report)
}

fn prepare_features(features: &EmbeddingTable, config: &StudentTrainConfig) -> EmbeddingTable {
    if config.normalize {
        l2_normalize(features)
    } else {
        features.clone()
    }
}

fn build_inputs(
    features: &EmbeddingTable,
    examples: &[KdExample],
    mode: PairMode,
) -> Result<Vec<Vec<f64>>> {
    examples
        .iter()
        .map(|e| {
            let mut x = Vec::with_capacity(mode.width(features.dim()));
            pair_features_into(features, e.head, e.tail, mode, &mut x)?;
            Ok(x)
        })
        .collect()
}

/// Distils `teacher` into a feature-only student on `examples`.
///
/// Refuses to run (with [`Error::Leakage`]) unless every KD pair lies inside
/// the plan's training-node set. Teacher logits are computed once up front.
pub fn distill(
    teacher: &dyn PairScorer,
    plan: &SplitPlan,
    features: &EmbeddingTable,
    examples: &[KdExample],
    config: &StudentTrainConfig,
) -> Result<TrainedStudent> {
    config.validate()?;
    let leakage = leakage_gate(plan, examples)?;
    let features = prepare_features(features, config);
    let num_relations = teacher.num_relations();
    let xs = build_inputs(&features, examples, config.pair_mode)?;
    let sups = examples
        .iter()
        .map(|e| {
            let z_t = teacher.logits(e.head, e.tail)?;
            if z_t.len() != num_relations {
                return Err(Error::shape("teacher returned a logit vector of the wrong length"));
            }
            Ok(Supervision {
                soft: Some(DistillTargets::new(z_t, e.label, config.tau)?),
                y: e.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let shape = StudentShape {
        input: config.pair_mode.width(features.dim()),
        hidden: config.hidden,
        num_relations,
    };
    let (params, loss_trace) = fit(StudentParams::init(shape, config.seed), &xs, &sups, config)?;

    let mut cache = StudentCache::new(shape);
    let mut kd_total = 0.0;
    for (x, s) in xs.iter().zip(&sups) {
        cache.forward(&params, x);
        kd_total += kd_loss(&cache.logits, &s.soft.as_ref().unwrap().q)?;
    }
    let final_kd_loss = (!xs.is_empty()).then(|| kd_total / xs.len() as f64);

    Ok(TrainedStudent {
        model: StudentModel {
            params,
            features,
            mode: config.pair_mode,
        },
        loss_trace,
        final_kd_loss,
        leakage,
    })
}

/// Trains the same MLP on hard labels only (the feature-only baseline).
/// `config.alpha` is ignored; unlabelled examples are skipped.
pub fn fit_supervised(
    plan: &SplitPlan,
    features: &EmbeddingTable,
    examples: &[KdExample],
    num_relations: usize,
    config: &StudentTrainConfig,
) -> Result<TrainedStudent> {
    config.validate()?;
    let examples: Vec<KdExample> = examples.iter().copied().filter(|e| e.label.is_some()).collect();
    let leakage = leakage_gate(plan, &examples)?;
    let features = prepare_features(features, config);
    let xs = build_inputs(&features, &examples, config.pair_mode)?;
    let sups: Vec<Supervision> = examples
        .iter()
        .map(|e| {
            if let Some(HardLabel::Relation(r)) = e.label {
                if r as usize >= num_relations {
                    return Err(Error::config(format!("label {r} out of range")));
                }
            }
            Ok(Supervision { soft: None, y: e.label })
        })
        .collect::<Result<_>>()?;
    let shape = StudentShape {
        input: config.pair_mode.width(features.dim()),
        hidden: config.hidden,
        num_relations,
    };
    let (params, loss_trace) = fit(StudentParams::init(shape, config.seed), &xs, &sups, config)?;
    Ok(TrainedStudent {
        model: StudentModel {
            params,
            features,
            mode: config.pair_mode,
        },
        loss_trace,
        final_kd_loss: None,
        leakage,
    })
}

fn fit(
    mut params: StudentParams,
    xs: &[Vec<f64>],
    sups: &[Supervision],
    config: &StudentTrainConfig,
) -> Result<(StudentParams, Vec<f64>)> {
    params.validate()?;
    let shape = params.shape();
    let mut opt = Optimizer::new(config.optimizer, config.lr, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x57_0d_e9);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grads = params.zeros_like();
    let mut cache = StudentCache::new(shape);
    let mut d_logits = vec![0.0; shape.num_relations];
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                cache.forward(&params, &xs[i]);
                let loss = loss_and_grad(
                    &cache.logits,
                    &sups[i],
                    config.alpha,
                    config.kd_objective,
                    &mut d_logits,
                );
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "student loss {loss} at epoch {epoch}, example {i}"
                    )));
                }
                total += loss;
                d_logits.iter_mut().for_each(|d| *d *= scale);
                cache.backward(&params, &xs[i], &d_logits, &mut grads);
            }
            opt.step(&mut params, &grads);
        }
        let mean = if xs.is_empty() { 0.0 } else { total / xs.len() as f64 };
        log::debug!("student epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    if !params.all_finite() {
        return Err(Error::Diverged("student parameters became non-finite".into()));
    }
    Ok((params, trace))
}
