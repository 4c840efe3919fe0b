//! Feature-only student: a one-hidden-layer MLP over pair features,
//! distilled from teacher logits with a mixed BCE objective.
//!
//! ```text
//! z_s = W_2 ρ(W_1 x + b_1) + b_2
//! L   = α L_KD + (1 − α) L_sup
//! ```
//!
//! Both terms are per-relation binary cross-entropies averaged over `R`,
//! evaluated in logit space.

mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{pair_features_into, EmbeddingTable, PairMode};
use crate::gradcheck;
use crate::linalg::{log_sum_exp, sigmoid, softmax, softplus, Matrix};
use crate::optim::Parameters;
use crate::scorer::PairScorer;

pub use train::{
    check_kd_set, distill, fit_supervised, KdExample, StudentTrainConfig, TrainedStudent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    /// `H_s × |x|`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `R × H_s`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentShape {
    pub input: usize,
    pub hidden: usize,
    pub num_relations: usize,
}

impl StudentParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init(shape: StudentShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StudentParams {
            w1: Matrix::xavier(shape.hidden, shape.input, &mut rng),
            b1: vec![0.0; shape.hidden],
            w2: Matrix::xavier(shape.num_relations, shape.hidden, &mut rng),
            b2: vec![0.0; shape.num_relations],
        }
    }

    pub fn zeros(shape: StudentShape) -> Self {
        StudentParams {
            w1: Matrix::zeros(shape.hidden, shape.input),
            b1: vec![0.0; shape.hidden],
            w2: Matrix::zeros(shape.num_relations, shape.hidden),
            b2: vec![0.0; shape.num_relations],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape())
    }

    pub fn shape(&self) -> StudentShape {
        StudentShape {
            input: self.w1.cols(),
            hidden: self.w1.rows(),
            num_relations: self.w2.rows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.shape();
        if self.b1.len() != s.hidden || self.w2.cols() != s.hidden || self.b2.len() != s.num_relations
        {
            return Err(Error::shape("inconsistent student parameter shapes"));
        }
        if !self.all_finite() {
            return Err(Error::shape("student parameters contain non-finite values"));
        }
        Ok(())
    }
}

impl Parameters for StudentParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }
}

/// Forward state kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StudentCache {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

impl StudentCache {
    pub(crate) fn new(shape: StudentShape) -> Self {
        StudentCache {
            pre: vec![0.0; shape.hidden],
            hidden: vec![0.0; shape.hidden],
            logits: vec![0.0; shape.num_relations],
        }
    }

    pub(crate) fn forward(&mut self, params: &StudentParams, x: &[f64]) {
        params.w1.matvec_into(x, &mut self.pre);
        for ((a, z), b) in self.hidden.iter_mut().zip(self.pre.iter_mut()).zip(&params.b1) {
            *z += b;
            *a = z.max(0.0);
        }
        params.w2.matvec_into(&self.hidden, &mut self.logits);
        for (z, b) in self.logits.iter_mut().zip(&params.b2) {
            *z += b;
        }
    }

    /// Accumulates `∇` for `∂L/∂z_s = d_logits`.
    pub(crate) fn backward(
        &self,
        params: &StudentParams,
        x: &[f64],
        d_logits: &[f64],
        grads: &mut StudentParams,
    ) {
        grads.w2.add_outer(1.0, d_logits, &self.hidden);
        for (g, d) in grads.b2.iter_mut().zip(d_logits) {
            *g += d;
        }
        let mut d_hidden = vec![0.0; self.hidden.len()];
        params.w2.matvec_t_acc(d_logits, &mut d_hidden);
        for (dh, &z) in d_hidden.iter_mut().zip(&self.pre) {
            if z <= 0.0 {
                *dh = 0.0;
            }
        }
        grads.w1.add_outer(1.0, &d_hidden, x);
        for (g, d) in grads.b1.iter_mut().zip(&d_hidden) {
            *g += d;
        }
    }
}

/// `z_s = W_2 ReLU(W_1 x + b_1) + b_2`.
pub fn student_forward(x: &[f64], params: &StudentParams) -> Result<Vec<f64>> {
    if x.len() != params.w1.cols() {
        return Err(Error::shape(format!(
            "student input has length {}, expected {}",
            x.len(),
            params.w1.cols()
        )));
    }
    let mut cache = StudentCache::new(params.shape());
    cache.forward(params, x);
    Ok(cache.logits)
}

/// `q_r = σ(z_t[r] / τ)`.
pub fn soft_targets(teacher_logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    Ok(teacher_logits.iter().map(|z| sigmoid(z / tau)).collect())
}

/// BCE of `σ(z)` against `target`, computed as `softplus(z) − z·target`.
#[inline]
pub fn bce_with_logits(z: f64, target: f64) -> f64 {
    softplus(z) - z * target
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("logit length {a} vs target length {b}")));
    }
    Ok(())
}

/// Mean per-relation BCE of the student logits against soft targets `q`.
pub fn kd_loss(z_s: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(z_s.len(), q.len())?;
    let r = z_s.len() as f64;
    Ok(z_s.iter().zip(q).map(|(&z, &q)| bce_with_logits(z, q)).sum::<f64>() / r)
}

/// Mean per-relation BCE against the one-hot encoding of `y`.
pub fn sup_loss(z_s: &[f64], y: u32) -> Result<f64> {
    if y as usize >= z_s.len() {
        return Err(Error::config(format!(
            "label {y} out of range for {} relations",
            z_s.len()
        )));
    }
    let r = z_s.len() as f64;
    Ok(z_s
        .iter()
        .enumerate()
        .map(|(i, &z)| bce_with_logits(z, if i == y as usize { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / r)
}

/// Mean per-relation BCE against the all-zero ("no interaction") target.
pub fn no_interaction_loss(z_s: &[f64]) -> f64 {
    z_s.iter().map(|&z| bce_with_logits(z, 0.0)).sum::<f64>() / z_s.len() as f64
}

/// Mean Bernoulli entropy of `q`, the minimum of [`kd_loss`] over `z_s`.
pub fn bernoulli_entropy(q: &[f64]) -> f64 {
    let h = |p: f64| {
        let mut e = 0.0;
        if p > 0.0 {
            e -= p * p.ln();
        }
        if p < 1.0 {
            e -= (1.0 - p) * (1.0 - p).ln();
        }
        e
    };
    q.iter().map(|&p| h(p)).sum::<f64>() / q.len() as f64
}

/// Hard supervision attached to a distillation sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardLabel {
    /// One-hot target on this relation.
    Relation(u32),
    /// All-zero target: the pair does not interact.
    NoInteraction,
}

/// Which distillation term is used.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdObjective {
    /// Per-relation BCE against `σ(z_t/τ)`.
    #[default]
    Bce,
    /// KL between softmaxed teacher and student logits. Ablation only.
    SoftmaxKl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillTargets {
    /// `σ(z_t / τ)`.
    pub q: Vec<f64>,
    /// Raw teacher logits `z_t`.
    pub teacher_logits: Vec<f64>,
    pub y: Option<HardLabel>,
    pub tau: f64,
}

impl DistillTargets {
    pub fn new(teacher_logits: Vec<f64>, y: Option<HardLabel>, tau: f64) -> Result<Self> {
        let q = soft_targets(&teacher_logits, tau)?;
        Ok(DistillTargets {
            q,
            teacher_logits,
            y,
            tau,
        })
    }
}

fn hard_loss(z_s: &[f64], y: HardLabel) -> Result<f64> {
    match y {
        HardLabel::Relation(r) => sup_loss(z_s, r),
        HardLabel::NoInteraction => Ok(no_interaction_loss(z_s)),
    }
}

/// `KL(softmax(z_t/τ) ‖ softmax(z_s/τ))`.
pub fn softmax_kl_loss(z_s: &[f64], teacher_logits: &[f64], tau: f64) -> Result<f64> {
    check_same_len(z_s.len(), teacher_logits.len())?;
    let zt: Vec<f64> = teacher_logits.iter().map(|z| z / tau).collect();
    let zs: Vec<f64> = z_s.iter().map(|z| z / tau).collect();
    let (lt, ls) = (log_sum_exp(&zt), log_sum_exp(&zs));
    Ok(zt
        .iter()
        .zip(&zs)
        .map(|(a, b)| {
            let pt = (a - lt).exp();
            if pt == 0.0 {
                0.0
            } else {
                pt * ((a - lt) - (b - ls))
            }
        })
        .sum())
}

/// `α L_KD + (1 − α) L_sup`, or `α L_KD` when the sample has no hard label.
pub fn combined_loss(z_s: &[f64], targets: &DistillTargets, alpha: f64) -> Result<f64> {
    combined_loss_with(z_s, targets, alpha, KdObjective::Bce)
}

pub fn combined_loss_with(
    z_s: &[f64],
    targets: &DistillTargets,
    alpha: f64,
    objective: KdObjective,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let kd = match objective {
        KdObjective::Bce => kd_loss(z_s, &targets.q)?,
        KdObjective::SoftmaxKl => softmax_kl_loss(z_s, &targets.teacher_logits, targets.tau)?,
    };
    match targets.y {
        None => Ok(alpha * kd),
        Some(y) => Ok(alpha * kd + (1.0 - alpha) * hard_loss(z_s, y)?),
    }
}

/// Supervision for one training example; `targets.q` may be absent for
/// purely supervised fitting.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Supervision {
    pub soft: Option<DistillTargets>,
    pub y: Option<HardLabel>,
}

/// Loss and `∂L/∂z_s` of the mixed objective.
pub(crate) fn loss_and_grad(
    z_s: &[f64],
    sup: &Supervision,
    alpha: f64,
    objective: KdObjective,
    d_out: &mut [f64],
) -> f64 {
    let r = z_s.len() as f64;
    d_out.iter_mut().for_each(|d| *d = 0.0);
    let mut loss = 0.0;
    if let Some(t) = &sup.soft {
        let (kd, grad): (f64, Vec<f64>) = match objective {
            KdObjective::Bce => (
                kd_loss(z_s, &t.q).expect("checked lengths"),
                z_s.iter().zip(&t.q).map(|(&z, &q)| (sigmoid(z) - q) / r).collect(),
            ),
            KdObjective::SoftmaxKl => {
                let ps = softmax(&z_s.iter().map(|z| z / t.tau).collect::<Vec<_>>());
                let pt = softmax(&t.teacher_logits.iter().map(|z| z / t.tau).collect::<Vec<_>>());
                (
                    softmax_kl_loss(z_s, &t.teacher_logits, t.tau).expect("checked lengths"),
                    ps.iter().zip(&pt).map(|(s, q)| (s - q) / t.tau).collect(),
                )
            }
        };
        loss += alpha * kd;
        for (d, g) in d_out.iter_mut().zip(grad) {
            *d += alpha * g;
        }
    }
    if let Some(y) = sup.y {
        let hard_weight = if sup.soft.is_some() { 1.0 - alpha } else { 1.0 };
        loss += hard_weight * hard_loss(z_s, y).expect("checked label");
        for (i, (d, &z)) in d_out.iter_mut().zip(z_s).enumerate() {
            let target = match y {
                HardLabel::Relation(r) if r as usize == i => 1.0,
                _ => 0.0,
            };
            *d += hard_weight * (sigmoid(z) - target) / r;
        }
    }
    loss
}

/// One distillation example with its pair features inlined.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentSample {
    pub x: Vec<f64>,
    pub targets: DistillTargets,
}

pub fn student_gradients(
    params: &StudentParams,
    sample: &StudentSample,
    alpha: f64,
) -> (f64, StudentParams) {
    let mut cache = StudentCache::new(params.shape());
    cache.forward(params, &sample.x);
    let sup = Supervision {
        soft: Some(sample.targets.clone()),
        y: sample.targets.y,
    };
    let mut d = vec![0.0; params.shape().num_relations];
    let loss = loss_and_grad(&cache.logits, &sup, alpha, KdObjective::Bce, &mut d);
    let mut grads = params.zeros_like();
    cache.backward(params, &sample.x, &d, &mut grads);
    (loss, grads)
}

pub fn sample_loss(params: &StudentParams, sample: &StudentSample, alpha: f64) -> f64 {
    let z = student_forward(&sample.x, params).expect("sample width");
    combined_loss(&z, &sample.targets, alpha).expect("valid targets")
}

/// Worst relative error between analytic and central-difference gradients
/// of the mixed objective over every student tensor.
pub fn gradient_check_student(
    params: &StudentParams,
    sample: &StudentSample,
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    if sample.x.len() != params.w1.cols() {
        return Err(Error::shape("sample width does not match the student input"));
    }
    let (_, grads) = student_gradients(params, sample, alpha);
    gradcheck::max_relative_error(params, &grads, |p| sample_loss(p, sample, alpha), epsilon)
}

/// The student bundled with its (already normalised, if configured) feature table.
/// It has no access to KG embeddings or triples.
#[derive(Debug, Clone)]
pub struct StudentModel {
    pub params: StudentParams,
    pub features: EmbeddingTable,
    pub mode: PairMode,
}

impl PairScorer for StudentModel {
    fn num_relations(&self) -> usize {
        self.params.shape().num_relations
    }

    fn logits(&self, h: u32, t: u32) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.mode.width(self.features.dim()));
        pair_features_into(&self.features, h, t, self.mode, &mut x)?;
        student_forward(&x, &self.params)
    }
}
