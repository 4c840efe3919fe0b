use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::DEFAULT_DIM;
use crate::graph_store::{Regime, DEFAULT_NUM_RELATIONS};
use crate::io;
use crate::kd_student::StudentTrainConfig;
use crate::synth_world::WorldSpec;
use crate::teacher::TeacherTrainConfig;
use crate::two_head::DetectorKind;

/// Models a run can train and evaluate on the shared pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Gated KG + feature fusion.
    Teacher,
    /// Feature-only MLP distilled from the teacher.
    Student,
    /// The student architecture trained on hard labels alone.
    FeatureMlp,
    /// Plain DistMult on KG embeddings.
    KgDistmult,
    /// Hard-label MLP over features concatenated with the teacher's entity embeddings.
    ConcatMlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Teacher,
        ModelKind::Student,
        ModelKind::FeatureMlp,
        ModelKind::KgDistmult,
        ModelKind::ConcatMlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Teacher => "teacher",
            ModelKind::Student => "student",
            ModelKind::FeatureMlp => "feature-mlp",
            ModelKind::KgDistmult => "kg-distmult",
            ModelKind::ConcatMlp => "concat-mlp",
        }
    }

    /// Whether training this model needs a trained teacher first.
    pub fn needs_teacher(self) -> bool {
        matches!(self, ModelKind::Teacher | ModelKind::Student | ModelKind::ConcatMlp)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `head<TAB>relation<TAB>tail` file with integer drug indices.
    pub triples: Option<PathBuf>,
    /// Per-drug feature table.
    pub features: Option<PathBuf>,
    /// Optional pretrained KG embeddings seeding the teacher's entity table.
    pub kg_embeddings: Option<PathBuf>,
    pub num_relations: usize,
    pub feature_dim: usize,
    /// Merge reversed duplicates when loading triples.
    pub symmetric: bool,
    /// Generate a synthetic world instead of reading files.
    pub world: Option<WorldSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            triples: None,
            features: None,
            kg_embeddings: None,
            num_relations: DEFAULT_NUM_RELATIONS,
            feature_dim: DEFAULT_DIM,
            symmetric: false,
            world: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub regime: Regime,
    pub train_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            regime: Regime::NodeHoldout,
            train_frac: 0.8,
            test_frac: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    /// Negatives per training positive.
    pub k_train: usize,
    /// Negatives per validation or test positive.
    pub k_test: usize,
    /// Give train-pool negatives an explicit no-interaction label.
    /// When false they enter distillation with soft targets only.
    pub label_negatives: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            k_train: 2,
            k_test: 10,
            label_negatives: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub target_tpr: f64,
    pub detector: DetectorKind,
    pub head_epochs: usize,
    pub head_lr: f64,
    pub bootstrap_iterations: usize,
    pub models: Vec<ModelKind>,
    /// Row the comparison table measures false-positive reduction against.
    pub baseline: ModelKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            target_tpr: 0.9,
            detector: DetectorKind::MaxLogit,
            head_epochs: 50,
            head_lr: 0.1,
            bootstrap_iterations: 1000,
            models: ModelKind::ALL.to_vec(),
            baseline: ModelKind::FeatureMlp,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub pools: PoolConfig,
    pub teacher: TeacherTrainConfig,
    pub student: StudentTrainConfig,
    pub eval: EvalConfig,
    /// Defaults to `[0, 1, 2]` under node hold-out and `[0]` under edge hold-out.
    pub seeds: Option<Vec<u64>>,
}

impl ExperimentConfig {
    /// Parses a TOML config. Relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.data.triples,
            &mut config.data.features,
            &mut config.data.kg_embeddings,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.split.regime) {
            (Some(s), _) => s.clone(),
            (None, Regime::NodeHoldout) => vec![0, 1, 2],
            (None, Regime::EdgeHoldout) => vec![0],
        }
    }

    pub fn num_relations(&self) -> usize {
        self.data.world.as_ref().map_or(self.data.num_relations, |w| w.num_relations)
    }

    pub fn feature_dim(&self) -> usize {
        self.data.world.as_ref().map_or(self.data.feature_dim, |w| w.feature_dim)
    }

    /// SHA-256 of the canonical JSON form; stamped on every output.
    ///
    /// Seeds are left out so a single-seed rerun shares the hash of the full run.
    pub fn hash(&self) -> String {
        let unseeded = ExperimentConfig {
            seeds: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&unseeded).expect("config serializes");
        io::sha256_hex(json.as_bytes())
    }

    /// Checks every field before any stage runs.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.world, &d.triples, &d.features) {
            (Some(w), None, None) => w.validate()?,
            (None, Some(_), Some(_)) => {}
            (Some(_), _, _) => {
                return Err(Error::config("data.world excludes data.triples and data.features"))
            }
            (None, _, _) => {
                return Err(Error::config(
                    "data needs either a world spec or both triples and features",
                ))
            }
        }
        if self.num_relations() == 0 || self.feature_dim() == 0 {
            return Err(Error::config("num_relations and feature_dim must be positive"));
        }
        let s = &self.split;
        if !(s.train_frac > 0.0 && s.test_frac > 0.0 && s.train_frac + s.test_frac < 1.0) {
            return Err(Error::config(format!(
                "split fractions {}/{} must be positive and leave room for validation",
                s.train_frac, s.test_frac
            )));
        }
        if self.pools.k_train == 0 || self.pools.k_test == 0 {
            return Err(Error::config("pool sizes k_train and k_test must be positive"));
        }
        self.teacher.validate()?;
        self.student.validate()?;
        if self.teacher.kg_only {
            return Err(Error::config(
                "teacher.kg_only is reserved for the kg-distmult baseline",
            ));
        }
        let e = &self.eval;
        if !(e.target_tpr > 0.0 && e.target_tpr <= 1.0) {
            return Err(Error::config(format!("target_tpr {} outside (0, 1]", e.target_tpr)));
        }
        if e.bootstrap_iterations < 100 {
            return Err(Error::config("bootstrap_iterations must be at least 100"));
        }
        if e.models.is_empty() {
            return Err(Error::config("eval.models is empty"));
        }
        let mut seen = e.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != e.models.len() {
            return Err(Error::config("eval.models lists a model twice"));
        }
        if matches!(&self.seeds, Some(s) if s.is_empty()) {
            return Err(Error::config("seeds is empty"));
        }
        Ok(())
    }
}
