//! Gated KG+feature fusion teacher.
//!
//! For each endpoint `i` the KG entity embedding `e_i` and the per-drug
//! feature vector `v_i` are projected to a common width `d`:
//!
//! ```text
//! ê_i = P_k e_i        v̂_i = P_e v_i
//! g_i = σ(W_2 ρ(W_1 [ê_i ‖ v̂_i]))
//! ẽ_i = g_i ⊙ ê_i + (1 − g_i) ⊙ v̂_i
//! ```
//!
//! and a bilinear head scores every relation `r` as `φ(ẽ_h, e_r, ẽ_t)`.
//! Training minimises single-label cross-entropy over the `R` logits.

mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::EmbeddingTable;
use crate::gradcheck;
use crate::linalg::{log_sum_exp, sigmoid, softmax, Matrix};
use crate::optim::Parameters;
use crate::scorer::PairScorer;

pub use train::{train_teacher, TeacherTrainConfig, TrainedTeacher};

/// How the dimension-wise gate is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    #[default]
    Learned,
    /// `g ≡ 1`: the fused entity is the projected KG embedding.
    ForcedKg,
    /// `g ≡ 0`: the fused entity is the projected feature vector.
    ForcedFeature,
}

/// Relation scoring function `φ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringHead {
    /// `φ(a, r, b) = Σ_k a_k r_k b_k`.
    #[default]
    DistMult,
}

impl ScoringHead {
    fn score_into(self, eh: &[f64], et: &[f64], relation_emb: &Matrix, out: &mut [f64]) {
        match self {
            ScoringHead::DistMult => {
                for (r, s) in out.iter_mut().enumerate() {
                    let er = relation_emb.row(r);
                    *s = (0..eh.len()).map(|k| eh[k] * er[k] * et[k]).sum();
                }
            }
        }
    }

    /// Accumulates `∂L/∂eh`, `∂L/∂et` and `∂L/∂relation_emb` given `∂L/∂s`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        self,
        eh: &[f64],
        et: &[f64],
        relation_emb: &Matrix,
        d_scores: &[f64],
        d_eh: &mut [f64],
        d_et: &mut [f64],
        d_rel: &mut Matrix,
    ) {
        match self {
            ScoringHead::DistMult => {
                for (r, &ds) in d_scores.iter().enumerate() {
                    if ds == 0.0 {
                        continue;
                    }
                    let er = relation_emb.row(r);
                    let drow = d_rel.row_mut(r);
                    for k in 0..eh.len() {
                        d_eh[k] += ds * er[k] * et[k];
                        d_et[k] += ds * er[k] * eh[k];
                        drow[k] += ds * eh[k] * et[k];
                    }
                }
            }
        }
    }
}

/// What the teacher uses as `v_i` for a drug without a feature vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingFeatures {
    #[default]
    Zero,
    Error,
}

/// All learnable tensors of the fusion teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherParams {
    /// `num_drugs × d`, rows are `e_i`.
    pub entity_emb: Matrix,
    /// `R × d`, rows are `e_r`.
    pub relation_emb: Matrix,
    /// `P_k`, `d × d`.
    pub proj_kg: Matrix,
    /// `P_e`, `d × D`.
    pub proj_feat: Matrix,
    /// `W_1`, `H × 2d`.
    pub gate_w1: Matrix,
    /// `W_2`, `d × H`.
    pub gate_w2: Matrix,
    pub gate_mode: GateMode,
    pub head: ScoringHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherShape {
    pub num_drugs: usize,
    pub num_relations: usize,
    /// Entity width `d`.
    pub dim: usize,
    /// Feature width `D`.
    pub feat_dim: usize,
    /// Gate hidden width `H`.
    pub hidden: usize,
}

impl TeacherParams {
    /// Entity/relation rows ~ U(−1/√d, 1/√d); projections and gate weights Xavier-uniform.
    pub fn init(shape: TeacherShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let TeacherShape {
            num_drugs,
            num_relations,
            dim,
            feat_dim,
            hidden,
        } = shape;
        let bound = 1.0 / (dim as f64).sqrt();
        TeacherParams {
            entity_emb: Matrix::uniform(num_drugs, dim, bound, &mut rng),
            relation_emb: Matrix::uniform(num_relations, dim, bound, &mut rng),
            proj_kg: Matrix::xavier(dim, dim, &mut rng),
            proj_feat: Matrix::xavier(dim, feat_dim, &mut rng),
            gate_w1: Matrix::xavier(hidden, 2 * dim, &mut rng),
            gate_w2: Matrix::xavier(dim, hidden, &mut rng),
            gate_mode: GateMode::Learned,
            head: ScoringHead::DistMult,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        TeacherParams {
            entity_emb: z(&self.entity_emb),
            relation_emb: z(&self.relation_emb),
            proj_kg: z(&self.proj_kg),
            proj_feat: z(&self.proj_feat),
            gate_w1: z(&self.gate_w1),
            gate_w2: z(&self.gate_w2),
            gate_mode: self.gate_mode,
            head: self.head,
        }
    }

    pub fn shape(&self) -> TeacherShape {
        TeacherShape {
            num_drugs: self.entity_emb.rows(),
            num_relations: self.relation_emb.rows(),
            dim: self.entity_emb.cols(),
            feat_dim: self.proj_feat.cols(),
            hidden: self.gate_w1.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entity_emb.cols()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_emb.rows()
    }

    /// Checks that every tensor agrees with the shape implied by the embeddings.
    pub fn validate(&self) -> Result<()> {
        let s = self.shape();
        let checks = [
            ("relation_emb", self.relation_emb.cols(), s.dim),
            ("proj_kg rows", self.proj_kg.rows(), s.dim),
            ("proj_kg cols", self.proj_kg.cols(), s.dim),
            ("proj_feat rows", self.proj_feat.rows(), s.dim),
            ("gate_w1 cols", self.gate_w1.cols(), 2 * s.dim),
            ("gate_w2 rows", self.gate_w2.rows(), s.dim),
            ("gate_w2 cols", self.gate_w2.cols(), s.hidden),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::shape(format!("teacher {what} is {got}, expected {want}")));
            }
        }
        if !self.all_finite() {
            return Err(Error::shape("teacher parameters contain non-finite values"));
        }
        Ok(())
    }
}

impl Parameters for TeacherParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.entity_emb.as_slice(),
            self.relation_emb.as_slice(),
            self.proj_kg.as_slice(),
            self.proj_feat.as_slice(),
            self.gate_w1.as_slice(),
            self.gate_w2.as_slice(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.entity_emb.as_mut_slice(),
            self.relation_emb.as_mut_slice(),
            self.proj_kg.as_mut_slice(),
            self.proj_feat.as_mut_slice(),
            self.gate_w1.as_mut_slice(),
            self.gate_w2.as_mut_slice(),
        ]
    }
}

/// Index of `entity_emb` in [`Parameters::tensors`] order.
pub(crate) const ENTITY_TENSOR: usize = 0;
/// `proj_kg`, `proj_feat`, `gate_w1`, `gate_w2`: held fixed for plain DistMult.
pub(crate) const KG_ONLY_FROZEN: [usize; 4] = [2, 3, 4, 5];

/// Per-relation teacher scores `s_r(h, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherLogits {
    pub s: Vec<f64>,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// `g = σ(W_2 ρ(W_1 [ê ‖ v̂]))` with `ρ = ReLU`.
pub fn gate(e_hat: &[f64], v_hat: &[f64], params: &TeacherParams) -> Result<Vec<f64>> {
    let d = params.dim();
    check_len("ê", e_hat.len(), d)?;
    check_len("v̂", v_hat.len(), d)?;
    let mut cache = GateCache::new(params);
    cache.forward(params, e_hat, v_hat);
    Ok(cache.g)
}

/// `ẽ = g ⊙ ê + (1 − g) ⊙ v̂`.
pub fn fuse(e_hat: &[f64], v_hat: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    check_len("v̂", v_hat.len(), e_hat.len())?;
    check_len("g", g.len(), e_hat.len())?;
    Ok(e_hat
        .iter()
        .zip(v_hat)
        .zip(g)
        .map(|((e, v), g)| g * e + (1.0 - g) * v)
        .collect())
}

/// DistMult scores `s_r = Σ_k ẽ_h[k] e_r[k] ẽ_t[k]` for every relation.
pub fn score_relations(
    fused_head: &[f64],
    fused_tail: &[f64],
    relation_emb: &Matrix,
) -> Result<TeacherLogits> {
    score_relations_with(ScoringHead::DistMult, fused_head, fused_tail, relation_emb)
}

pub fn score_relations_with(
    head: ScoringHead,
    fused_head: &[f64],
    fused_tail: &[f64],
    relation_emb: &Matrix,
) -> Result<TeacherLogits> {
    check_len("ẽ_h", fused_head.len(), relation_emb.cols())?;
    check_len("ẽ_t", fused_tail.len(), relation_emb.cols())?;
    let mut s = vec![0.0; relation_emb.rows()];
    head.score_into(fused_head, fused_tail, relation_emb, &mut s);
    Ok(TeacherLogits { s })
}

/// `−log softmax(s)[y]`.
pub fn teacher_loss(logits: &TeacherLogits, y: u32) -> Result<f64> {
    let s = &logits.s;
    if y as usize >= s.len() {
        return Err(Error::config(format!(
            "label {y} out of range for {} relations",
            s.len()
        )));
    }
    Ok(log_sum_exp(s) - s[y as usize])
}

/// Intermediate values of the gate and fusion for one entity.
#[derive(Debug, Clone)]
struct GateCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    g: Vec<f64>,
}

impl GateCache {
    fn new(params: &TeacherParams) -> Self {
        let d = params.dim();
        let h = params.gate_w1.rows();
        GateCache {
            input: vec![0.0; 2 * d],
            pre: vec![0.0; h],
            hidden: vec![0.0; h],
            g: vec![0.0; d],
        }
    }

    fn forward(&mut self, params: &TeacherParams, e_hat: &[f64], v_hat: &[f64]) {
        let d = e_hat.len();
        match params.gate_mode {
            GateMode::ForcedKg => self.g.iter_mut().for_each(|g| *g = 1.0),
            GateMode::ForcedFeature => self.g.iter_mut().for_each(|g| *g = 0.0),
            GateMode::Learned => {
                self.input[..d].copy_from_slice(e_hat);
                self.input[d..].copy_from_slice(v_hat);
                params.gate_w1.matvec_into(&self.input, &mut self.pre);
                for (a, &z) in self.hidden.iter_mut().zip(&self.pre) {
                    *a = z.max(0.0);
                }
                params.gate_w2.matvec_into(&self.hidden, &mut self.g);
                self.g.iter_mut().for_each(|x| *x = sigmoid(*x));
            }
        }
    }
}

/// Forward state for one endpoint.
#[derive(Debug, Clone)]
struct EntityCache {
    e: Vec<f64>,
    v: Vec<f64>,
    e_hat: Vec<f64>,
    v_hat: Vec<f64>,
    gate: GateCache,
    fused: Vec<f64>,
}

impl EntityCache {
    fn new(params: &TeacherParams) -> Self {
        let d = params.dim();
        EntityCache {
            e: vec![0.0; d],
            v: vec![0.0; params.proj_feat.cols()],
            e_hat: vec![0.0; d],
            v_hat: vec![0.0; d],
            gate: GateCache::new(params),
            fused: vec![0.0; d],
        }
    }

    /// Runs with `self.v` already filled in.
    fn forward(&mut self, params: &TeacherParams, e: &[f64]) {
        self.e.copy_from_slice(e);
        params.proj_kg.matvec_into(&self.e, &mut self.e_hat);
        params.proj_feat.matvec_into(&self.v, &mut self.v_hat);
        self.gate.forward(params, &self.e_hat, &self.v_hat);
        for k in 0..self.fused.len() {
            let g = self.gate.g[k];
            self.fused[k] = g * self.e_hat[k] + (1.0 - g) * self.v_hat[k];
        }
    }

    /// Backpropagates `∂L/∂ẽ` into `grads`, crediting entity row `drug`.
    fn backward(
        &self,
        params: &TeacherParams,
        d_fused: &[f64],
        drug: u32,
        grads: &mut TeacherParams,
    ) {
        let d = d_fused.len();
        let mut d_e_hat: Vec<f64> = d_fused.iter().zip(&self.gate.g).map(|(df, g)| df * g).collect();
        let mut d_v_hat: Vec<f64> = d_fused
            .iter()
            .zip(&self.gate.g)
            .map(|(df, g)| df * (1.0 - g))
            .collect();

        if params.gate_mode == GateMode::Learned {
            // ∂ẽ/∂g = ê − v̂, then through the sigmoid.
            let d_pre_out: Vec<f64> = (0..d)
                .map(|k| {
                    let g = self.gate.g[k];
                    d_fused[k] * (self.e_hat[k] - self.v_hat[k]) * g * (1.0 - g)
                })
                .collect();
            grads.gate_w2.add_outer(1.0, &d_pre_out, &self.gate.hidden);
            let mut d_hidden = vec![0.0; self.gate.hidden.len()];
            params.gate_w2.matvec_t_acc(&d_pre_out, &mut d_hidden);
            for (dh, &z) in d_hidden.iter_mut().zip(&self.gate.pre) {
                if z <= 0.0 {
                    *dh = 0.0;
                }
            }
            grads.gate_w1.add_outer(1.0, &d_hidden, &self.gate.input);
            let mut d_input = vec![0.0; 2 * d];
            params.gate_w1.matvec_t_acc(&d_hidden, &mut d_input);
            for k in 0..d {
                d_e_hat[k] += d_input[k];
                d_v_hat[k] += d_input[d + k];
            }
        }

        grads.proj_kg.add_outer(1.0, &d_e_hat, &self.e);
        grads.proj_feat.add_outer(1.0, &d_v_hat, &self.v);
        let row = grads.entity_emb.row_mut(drug as usize);
        params.proj_kg.matvec_t_acc(&d_e_hat, row);
    }
}

/// Reusable forward/backward workspace for one `(h, t)` pair.
#[derive(Debug, Clone)]
pub(crate) struct PairWorkspace {
    head: EntityCache,
    tail: EntityCache,
    scores: Vec<f64>,
}

impl PairWorkspace {
    pub(crate) fn new(params: &TeacherParams) -> Self {
        PairWorkspace {
            head: EntityCache::new(params),
            tail: EntityCache::new(params),
            scores: vec![0.0; params.num_relations()],
        }
    }

    pub(crate) fn forward_vectors(
        &mut self,
        params: &TeacherParams,
        h: u32,
        t: u32,
        vh: &[f64],
        vt: &[f64],
    ) -> &[f64] {
        self.head.v.copy_from_slice(vh);
        self.tail.v.copy_from_slice(vt);
        self.run(params, h, t)
    }

    fn run(&mut self, params: &TeacherParams, h: u32, t: u32) -> &[f64] {
        self.head.forward(params, params.entity_emb.row(h as usize));
        self.tail.forward(params, params.entity_emb.row(t as usize));
        params
            .head
            .score_into(&self.head.fused, &self.tail.fused, &params.relation_emb, &mut self.scores);
        &self.scores
    }

    pub(crate) fn forward(
        &mut self,
        params: &TeacherParams,
        h: u32,
        t: u32,
        features: &EmbeddingTable,
        policy: MissingFeatures,
    ) -> Result<&[f64]> {
        let n = params.entity_emb.rows();
        for d in [h, t] {
            if d as usize >= n {
                return Err(Error::DrugRange {
                    index: d as u64,
                    num_drugs: n,
                });
            }
        }
        if features.dim() != params.proj_feat.cols() {
            return Err(Error::shape(format!(
                "feature table dim {} does not match teacher feature width {}",
                features.dim(),
                params.proj_feat.cols()
            )));
        }
        for (drug, slot) in [(h, &mut self.head.v), (t, &mut self.tail.v)] {
            match (features.get(drug), policy) {
                (Some(v), _) => slot.copy_from_slice(v),
                (None, MissingFeatures::Zero) => slot.iter_mut().for_each(|x| *x = 0.0),
                (None, MissingFeatures::Error) => return Err(Error::MissingDrug(drug)),
            }
        }
        Ok(self.run(params, h, t))
    }

    /// Cross-entropy loss of the last forward pass; accumulates `scale · ∇` into `grads`.
    pub(crate) fn backward_ce(
        &mut self,
        params: &TeacherParams,
        h: u32,
        t: u32,
        y: u32,
        scale: f64,
        grads: &mut TeacherParams,
    ) -> f64 {
        let loss = log_sum_exp(&self.scores) - self.scores[y as usize];
        let mut d_scores = softmax(&self.scores);
        d_scores[y as usize] -= 1.0;
        d_scores.iter_mut().for_each(|x| *x *= scale);
        self.backward_scores(params, h, t, &d_scores, grads);
        loss
    }

    fn backward_scores(
        &self,
        params: &TeacherParams,
        h: u32,
        t: u32,
        d_scores: &[f64],
        grads: &mut TeacherParams,
    ) {
        let d = params.dim();
        let mut d_fh = vec![0.0; d];
        let mut d_ft = vec![0.0; d];
        params.head.backward(
            &self.head.fused,
            &self.tail.fused,
            &params.relation_emb,
            d_scores,
            &mut d_fh,
            &mut d_ft,
            &mut grads.relation_emb,
        );
        self.head.backward(params, &d_fh, h, grads);
        self.tail.backward(params, &d_ft, t, grads);
    }
}

/// Full teacher forward: project → gate → fuse → score.
pub fn teacher_forward(
    h: u32,
    t: u32,
    features: &EmbeddingTable,
    params: &TeacherParams,
    policy: MissingFeatures,
) -> Result<TeacherLogits> {
    let mut ws = PairWorkspace::new(params);
    let s = ws.forward(params, h, t, features, policy)?.to_vec();
    Ok(TeacherLogits { s })
}

/// One labelled example with its feature vectors inlined.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSample {
    pub head: u32,
    pub tail: u32,
    pub relation: u32,
    pub head_features: Vec<f64>,
    pub tail_features: Vec<f64>,
}

/// Loss and analytic gradient of the cross-entropy for one sample.
pub fn teacher_gradients(params: &TeacherParams, sample: &TeacherSample) -> (f64, TeacherParams) {
    let mut ws = PairWorkspace::new(params);
    let mut grads = params.zeros_like();
    ws.forward_vectors(
        params,
        sample.head,
        sample.tail,
        &sample.head_features,
        &sample.tail_features,
    );
    let loss = ws.backward_ce(params, sample.head, sample.tail, sample.relation, 1.0, &mut grads);
    (loss, grads)
}

pub fn sample_loss(params: &TeacherParams, sample: &TeacherSample) -> f64 {
    let mut ws = PairWorkspace::new(params);
    let s = ws.forward_vectors(
        params,
        sample.head,
        sample.tail,
        &sample.head_features,
        &sample.tail_features,
    );
    log_sum_exp(s) - s[sample.relation as usize]
}

/// Worst relative error between analytic and central-difference gradients
/// over every teacher tensor.
pub fn gradient_check_teacher(
    params: &TeacherParams,
    sample: &TeacherSample,
    epsilon: f64,
) -> Result<f64> {
    let (_, grads) = teacher_gradients(params, sample);
    gradcheck::max_relative_error(params, &grads, |p| sample_loss(p, sample), epsilon)
}

/// The fusion teacher bundled with the feature table it reads.
#[derive(Debug, Clone)]
pub struct TeacherModel {
    pub params: TeacherParams,
    pub features: EmbeddingTable,
    pub missing_features: MissingFeatures,
}

impl PairScorer for TeacherModel {
    fn num_relations(&self) -> usize {
        self.params.num_relations()
    }

    fn logits(&self, h: u32, t: u32) -> Result<Vec<f64>> {
        Ok(teacher_forward(h, t, &self.features, &self.params, self.missing_features)?.s)
    }
}

#[cfg(test)]
mod tests;
