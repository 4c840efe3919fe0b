use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    GateMode, MissingFeatures, PairWorkspace, TeacherParams, TeacherShape, ENTITY_TENSOR,
    KG_ONLY_FROZEN,
};
use crate::linalg::Matrix;
use crate::error::{Error, Result};
use crate::feature_store::EmbeddingTable;
use crate::graph_store::{SplitPlan, Triple};
use crate::optim::{Optimizer, OptimizerKind, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherTrainConfig {
    /// Entity width `d`.
    pub dim: usize,
    /// Gate hidden width `H`; defaults to `d`.
    pub hidden: Option<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    /// Keep `entity_emb` at its initial (possibly pretrained) value.
    pub freeze_entities: bool,
    pub missing_features: MissingFeatures,
    pub gate_mode: GateMode,
    /// Plain DistMult: gate forced to the KG side, `P_k = I`, feature and gate weights frozen.
    pub kg_only: bool,
    pub seed: u64,
}

impl Default for TeacherTrainConfig {
    fn default() -> Self {
        TeacherTrainConfig {
            dim: 64,
            hidden: None,
            lr: 0.001,
            epochs: 10,
            batch_size: 1024,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            freeze_entities: false,
            missing_features: MissingFeatures::Zero,
            gate_mode: GateMode::Learned,
            kg_only: false,
            seed: 0,
        }
    }
}

impl TeacherTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == Some(0) {
            return Err(Error::config("teacher widths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("teacher batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("teacher lr {} is invalid", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTeacher {
    pub params: TeacherParams,
    /// Mean cross-entropy per epoch.
    pub loss_trace: Vec<f64>,
    /// Drugs that fell back to a zero feature vector.
    pub missing_feature_drugs: usize,
}

/// Trains on `plan.train_edges` only.
///
/// `init_entities`, when given, seeds `entity_emb` rows (e.g. pretrained KG embeddings).
pub fn train_teacher(
    plan: &SplitPlan,
    features: &EmbeddingTable,
    config: &TeacherTrainConfig,
    init_entities: Option<&EmbeddingTable>,
) -> Result<TrainedTeacher> {
    let shape = TeacherShape {
        num_drugs: plan.num_drugs(),
        num_relations: plan.num_relations(),
        dim: config.dim,
        feat_dim: features.dim(),
        hidden: config.hidden.unwrap_or(config.dim),
    };
    let mut params = TeacherParams::init(shape, config.seed);
    params.gate_mode = config.gate_mode;
    if config.kg_only {
        params.gate_mode = GateMode::ForcedKg;
        params.proj_kg = Matrix::identity(config.dim);
    }
    if let Some(init) = init_entities {
        if init.dim() != config.dim {
            return Err(Error::shape(format!(
                "KG embedding table has dim {}, teacher dim is {}",
                init.dim(),
                config.dim
            )));
        }
        for d in init.drugs().filter(|&d| (d as usize) < shape.num_drugs) {
            params.entity_emb.row_mut(d as usize).copy_from_slice(init.lookup(d)?);
        }
    }
    fit_teacher(params, plan.train_edges.triples(), features, config)
}

/// Minibatch training of `params` on `triples` with mean cross-entropy.
pub(crate) fn fit_teacher(
    mut params: TeacherParams,
    triples: &[Triple],
    features: &EmbeddingTable,
    config: &TeacherTrainConfig,
) -> Result<TrainedTeacher> {
    config.validate()?;
    params.validate()?;
    let missing = {
        let mut drugs: Vec<u32> = triples.iter().flat_map(|t| [t.head, t.tail]).collect();
        drugs.sort_unstable();
        drugs.dedup();
        drugs.iter().filter(|&&d| !features.contains(d)).count()
    };
    if missing > 0 {
        match config.missing_features {
            MissingFeatures::Zero => {
                log::warn!("{missing} training drugs have no feature vector; using zeros")
            }
            MissingFeatures::Error => {
                let d = triples
                    .iter()
                    .flat_map(|t| [t.head, t.tail])
                    .find(|&d| !features.contains(d))
                    .unwrap();
                return Err(Error::MissingDrug(d));
            }
        }
    }

    let mut opt = Optimizer::new(config.optimizer, config.lr, config.weight_decay);
    if config.freeze_entities {
        opt.freeze(ENTITY_TENSOR);
    }
    if config.kg_only {
        for t in KG_ONLY_FROZEN {
            opt.freeze(t);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7ea_c4e5);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut grads = params.zeros_like();
    let mut ws = PairWorkspace::new(&params);
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let t = triples[i];
                ws.forward(&params, t.head, t.tail, features, config.missing_features)?;
                let loss = ws.backward_ce(&params, t.head, t.tail, t.relation, scale, &mut grads);
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "teacher loss {loss} at epoch {epoch} on triple {t:?}"
                    )));
                }
                total += loss;
            }
            opt.step(&mut params, &grads);
        }
        let mean = if triples.is_empty() {
            0.0
        } else {
            total / triples.len() as f64
        };
        log::debug!("teacher epoch {epoch}: loss {mean:.6}");
        loss_trace.push(mean);
    }
    if !params.all_finite() {
        return Err(Error::Diverged("teacher parameters became non-finite".into()));
    }
    Ok(TrainedTeacher {
        params,
        loss_trace,
        missing_feature_drugs: missing,
    })
}
