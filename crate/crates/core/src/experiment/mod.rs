//! End-to-end orchestration: data → split → frozen pools → teacher → student
//! and baselines → scores → threshold → reports.
//!
//! Each seed runs in `out/seed-<s>/` under a [`RunManifest`]. Stages read
//! only checksummed files written by earlier stages, so a tampered pool or
//! model aborts the run instead of silently changing results.

mod compare;
mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use compare::{aggregate_table, compare_models, Comparison};
pub use config::{DataConfig, EvalConfig, ExperimentConfig, ModelKind, PoolConfig, SplitConfig};
pub use manifest::{stage_index, RunManifest, StageRecord, StageTracker, STAGES};

use crate::error::{Error, Result};
use crate::feature_store::{load_embedding_table, EmbeddingTable, PairMode};
use crate::graph_store::{
    edge_holdout_split, load_triples, node_holdout_split, LoadOptions, NodeRole, Regime, SplitPlan, Triple,
    TripleSet,
};
use crate::io;
use crate::kd_student::{distill, fit_supervised, HardLabel, KdExample, StudentModel, StudentParams};
use crate::linalg::argmax;
use crate::metrics::{
    average_precision_stepwise, binary_prf, bootstrap_ci, prevalence, pr_curve, pr_svg, roc_auc, roc_curve,
    roc_svg, wilson_ci, AggregateReport, EvalReport, Z_95,
};
use crate::negative_sampler::{build_pool, check_pool, freeze_pool, load_frozen_pool, NegativePool};
use crate::scorer::PairScorer;
use crate::synth_world;
use crate::teacher::{train_teacher, MissingFeatures, TeacherModel, TeacherParams, TeacherTrainConfig};
use crate::two_head::{
    alert_from_scores, alerts_jsonl, calibrate_threshold, detection_score, read_score_file, write_score_file,
    BinaryHead, DetectorKind, ScoreRecord, Threshold,
};

/// Triples and features shared by every seed of a run.
#[derive(Debug, Clone)]
pub struct Data {
    pub kg: TripleSet,
    pub features: EmbeddingTable,
    /// Pretrained rows for the teacher's entity table.
    pub kg_init: Option<EmbeddingTable>,
}

impl Data {
    /// Checksums of the canonical text forms, recorded in every run manifest.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("triples".to_string(), io::sha256_hex(self.kg.to_tsv().as_bytes()));
        out.insert("features".to_string(), io::sha256_hex(self.features.to_text().as_bytes()));
        if let Some(t) = &self.kg_init {
            out.insert("kg_embeddings".to_string(), io::sha256_hex(t.to_text().as_bytes()));
        }
        out
    }
}

pub fn load_data(config: &ExperimentConfig) -> Result<Data> {
    config.validate()?;
    let d = &config.data;
    if let Some(spec) = &d.world {
        let world = synth_world::generate(spec)?;
        return Ok(Data {
            kg: world.kg,
            features: world.features,
            kg_init: None,
        });
    }
    let (Some(triples), Some(features)) = (&d.triples, &d.features) else {
        return Err(Error::config("data needs triples and features"));
    };
    let features = load_embedding_table(features, d.feature_dim)?;
    let opts = LoadOptions {
        num_relations: d.num_relations,
        symmetric: d.symmetric,
        ..LoadOptions::default()
    };
    let loaded = load_triples(triples, &opts)?;
    // Drugs with features but no edges are still part of the vocabulary.
    let with_features = features.drugs().max().map_or(0, |m| m as usize + 1);
    let kg = if with_features > loaded.set.num_drugs() {
        TripleSet::from_unique(with_features, d.num_relations, loaded.set.triples().to_vec())?
    } else {
        loaded.set
    };
    let kg_init = match &d.kg_embeddings {
        Some(p) => Some(load_embedding_table(p, config.teacher.dim)?),
        None => None,
    };
    Ok(Data {
        kg,
        features,
        kg_init,
    })
}

/// A trained model as stored under `models/`, next to its feature table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub feature_dim: usize,
    pub model: ModelBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelBody {
    Teacher {
        params: TeacherParams,
        missing_features: MissingFeatures,
    },
    Mlp {
        params: StudentParams,
        mode: PairMode,
    },
}

/// A saved model bundled with the feature table it reads.
pub fn scorer_from(body: ModelBody, features: EmbeddingTable) -> Box<dyn PairScorer> {
    match body {
        ModelBody::Teacher {
            params,
            missing_features,
        } => Box::new(TeacherModel {
            params,
            features,
            missing_features,
        }),
        ModelBody::Mlp { params, mode } => Box::new(StudentModel { params, features, mode }),
    }
}

fn model_paths(name: &str) -> (String, String) {
    (format!("models/{name}.json"), format!("models/{name}.features.txt"))
}

fn role_name(role: NodeRole) -> &'static str {
    match role {
        NodeRole::Train => "train",
        NodeRole::Valid => "valid",
        NodeRole::Test => "test",
    }
}

const SPLIT_FILES: [&str; 4] = ["split/train.tsv", "split/valid.tsv", "split/test.tsv", "split/manifest.json"];

/// Scores every candidate pair of one pool: its positives first, then its negatives.
fn candidates(plan: &SplitPlan, pool: &NegativePool) -> Vec<((u32, u32), bool)> {
    plan.edges(pool.role)
        .iter()
        .map(|t| ((t.head, t.tail), true))
        .chain(pool.pairs.iter().map(|&p| (p, false)))
        .collect()
}

/// One seed's run directory and manifest.
pub struct SeedRun<'a> {
    pub config: &'a ExperimentConfig,
    pub data: &'a Data,
    pub seed: u64,
    pub dir: PathBuf,
    config_hash: String,
    manifest: RunManifest,
    /// Set when the directory holds a run from another config or dataset.
    stale: Option<String>,
}

impl<'a> SeedRun<'a> {
    pub fn open(config: &'a ExperimentConfig, data: &'a Data, out: &Path, seed: u64) -> Result<Self> {
        let dir = out.join(format!("seed-{seed}"));
        let config_hash = config.hash();
        let fresh = RunManifest::new(&config_hash, seed, data.checksums());
        let (manifest, stale) = match RunManifest::load(&dir) {
            Ok(m) if m.config_hash != config_hash => (
                fresh,
                Some(format!("{} was produced by config {}", dir.display(), m.config_hash)),
            ),
            Ok(m) if m.data != data.checksums() || m.seed != seed => (
                fresh,
                Some(format!("{} was produced from different input data", dir.display())),
            ),
            Ok(m) => (m, None),
            Err(_) => (fresh, None),
        };
        Ok(SeedRun {
            config,
            data,
            seed,
            dir,
            config_hash,
            manifest,
            stale,
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Runs `body` as stage `name`, recording its inputs and outputs.
    fn stage<T>(
        &mut self,
        name: &'static str,
        body: impl FnOnce(&Self, &mut StageTracker<'_>) -> Result<T>,
    ) -> Result<T> {
        if name == STAGES[0] {
            self.manifest = RunManifest::new(&self.config_hash, self.seed, self.data.checksums());
            self.stale = None;
        } else if let Some(why) = &self.stale {
            return Err(Error::config(format!("{why}; rerun from `split`")).in_stage(name, vec![self.dir.clone()]));
        }
        log::info!("seed {}: stage {name}", self.seed);
        let mut tracker = StageTracker::new(&self.dir, &self.manifest, name)?;
        let value = match body(self, &mut tracker) {
            Ok(v) => v,
            Err(e) => return Err(e.in_stage(name, tracker.artifacts())),
        };
        let record = tracker.finish().map_err(|e| e.in_stage(name, vec![self.dir.clone()]))?;
        self.manifest.record(record);
        self.manifest.save(&self.dir)?;
        Ok(value)
    }

    /// Runs one stage by name; only `eval` returns reports.
    pub fn run_stage(&mut self, name: &str) -> Result<Vec<EvalReport>> {
        match name {
            "split" => self.split(),
            "pools" => self.pools(),
            "train-teacher" => self.train_teacher(),
            "distill" => self.distill(&[]),
            "baselines" => self.baselines(),
            "score" => self.score(),
            "calibrate" => self.calibrate(),
            "eval" => return self.eval(),
            other => Err(Error::config(format!("unknown stage `{other}`"))),
        }
        .map(|()| Vec::new())
    }

    fn models(&self) -> &[ModelKind] {
        &self.config.eval.models
    }

    fn needs_teacher(&self) -> bool {
        self.models().iter().any(|m| m.needs_teacher())
    }

    fn mix(&self, base: u64) -> u64 {
        base.wrapping_add(self.seed)
    }

    pub fn split(&mut self) -> Result<()> {
        self.stage("split", |run, t| {
            let s = &run.config.split;
            let plan = match s.regime {
                Regime::NodeHoldout => node_holdout_split(&run.data.kg, s.train_frac, s.test_frac, run.seed)?,
                Regime::EdgeHoldout => edge_holdout_split(&run.data.kg, s.train_frac, s.test_frac, run.seed)?,
            };
            for w in &plan.warnings {
                log::warn!("split: {w}");
            }
            for f in SPLIT_FILES {
                t.output(f);
            }
            plan.save(&run.dir.join("split"))
        })
    }

    fn load_plan(&self, t: &mut StageTracker<'_>) -> Result<SplitPlan> {
        for f in SPLIT_FILES {
            t.input(f)?;
        }
        SplitPlan::load(&self.dir.join("split"))
    }

    pub fn pools(&mut self) -> Result<()> {
        self.stage("pools", |run, t| {
            let plan = run.load_plan(t)?;
            let p = &run.config.pools;
            for (role, k) in [(NodeRole::Train, p.k_train), (NodeRole::Valid, p.k_test), (NodeRole::Test, p.k_test)] {
                let name = role_name(role);
                let pool = build_pool(&plan, plan.edges(role), k, role, run.seed)?;
                check_pool(&plan, plan.edges(role), &pool)?;
                if let Some(w) = &pool.shortfall {
                    log::warn!("{w}");
                }
                t.output(&format!("pools/{name}.tsv"));
                t.output(&format!("pools/{name}.manifest.json"));
                freeze_pool(&pool, &run.dir.join("pools"), name)?;
            }
            Ok(())
        })
    }

    /// Reloads a frozen pool through its checksum and re-checks its invariants.
    fn load_pool(&self, t: &mut StageTracker<'_>, plan: &SplitPlan, role: NodeRole) -> Result<NegativePool> {
        let name = role_name(role);
        t.input(&format!("pools/{name}.tsv"))?;
        let manifest = t.input(&format!("pools/{name}.manifest.json"))?;
        let (pool, _) = load_frozen_pool(&manifest)?;
        check_pool(plan, plan.edges(role), &pool)?;
        Ok(pool)
    }

    fn pool_checksums(&self, t: &mut StageTracker<'_>) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for role in [NodeRole::Train, NodeRole::Valid, NodeRole::Test] {
            let name = role_name(role);
            let path = t.input(&format!("pools/{name}.manifest.json"))?;
            let m: crate::negative_sampler::PoolManifest = io::read_json(&path)?;
            out.insert(name.to_string(), m.sha256);
        }
        Ok(out)
    }

    fn teacher_config(&self, kg_only: bool) -> TeacherTrainConfig {
        TeacherTrainConfig {
            seed: self.mix(self.config.teacher.seed),
            kg_only,
            ..self.config.teacher.clone()
        }
    }

    fn save_model(
        &self,
        t: &mut StageTracker<'_>,
        kind: ModelKind,
        model: ModelBody,
        features: &EmbeddingTable,
    ) -> Result<()> {
        let (json, feats) = model_paths(kind.name());
        let file = ModelFile {
            feature_dim: features.dim(),
            model,
        };
        io::write_json(&t.output(&json), &file)?;
        features.write(&t.output(&feats))
    }

    fn load_model_file(&self, t: &mut StageTracker<'_>, kind: ModelKind) -> Result<(ModelBody, EmbeddingTable)> {
        let (json, feats) = model_paths(kind.name());
        let file: ModelFile = io::read_json(&t.input(&json)?)?;
        let features = load_embedding_table(&t.input(&feats)?, file.feature_dim)?;
        Ok((file.model, features))
    }

    fn load_model(&self, t: &mut StageTracker<'_>, kind: ModelKind) -> Result<Box<dyn PairScorer>> {
        let (body, features) = self.load_model_file(t, kind)?;
        Ok(scorer_from(body, features))
    }

    fn teacher_body(params: TeacherParams, config: &TeacherTrainConfig) -> ModelBody {
        ModelBody::Teacher {
            params,
            missing_features: config.missing_features,
        }
    }

    pub fn train_teacher(&mut self) -> Result<()> {
        self.stage("train-teacher", |run, t| {
            if !run.needs_teacher() {
                return Ok(());
            }
            let plan = run.load_plan(t)?;
            let cfg = run.teacher_config(false);
            let trained = train_teacher(&plan, &run.data.features, &cfg, run.data.kg_init.as_ref())?;
            log::info!("teacher final loss {:?}", trained.loss_trace.last());
            let body = Self::teacher_body(trained.params, &cfg);
            run.save_model(t, ModelKind::Teacher, body, &run.data.features)
        })
    }

    /// Hard-labelled training positives plus the frozen train pool.
    fn training_examples(&self, plan: &SplitPlan, pool: &NegativePool) -> Vec<KdExample> {
        let label = self.config.pools.label_negatives.then_some(HardLabel::NoInteraction);
        plan.train_edges
            .iter()
            .map(KdExample::positive)
            .chain(pool.pairs.iter().map(|&(head, tail)| KdExample { head, tail, label }))
            .collect()
    }

    fn student_config(&self) -> crate::kd_student::StudentTrainConfig {
        crate::kd_student::StudentTrainConfig {
            seed: self.mix(self.config.student.seed),
            ..self.config.student.clone()
        }
    }

    /// Distils the student. `extra` adds labelled pairs to the KD set; they
    /// pass through the same leakage gate as everything else.
    pub fn distill(&mut self, extra: &[Triple]) -> Result<()> {
        self.stage("distill", |run, t| {
            if !run.models().contains(&ModelKind::Student) {
                return Ok(());
            }
            let plan = run.load_plan(t)?;
            let pool = run.load_pool(t, &plan, NodeRole::Train)?;
            let teacher = run.load_model(t, ModelKind::Teacher)?;
            let mut examples = run.training_examples(&plan, &pool);
            examples.extend(extra.iter().map(KdExample::positive));
            let cfg = run.student_config();
            let trained = distill(teacher.as_ref(), &plan, &run.data.features, &examples, &cfg)?;
            log::info!("student final KD loss {:?}", trained.final_kd_loss);
            let body = ModelBody::Mlp {
                params: trained.model.params,
                mode: trained.model.mode,
            };
            run.save_model(t, ModelKind::Student, body, &trained.model.features)
        })
    }

    pub fn baselines(&mut self) -> Result<()> {
        self.stage("baselines", |run, t| {
            let wanted = |m| run.models().contains(&m);
            if !(wanted(ModelKind::FeatureMlp) || wanted(ModelKind::KgDistmult) || wanted(ModelKind::ConcatMlp)) {
                return Ok(());
            }
            let plan = run.load_plan(t)?;
            let pool = run.load_pool(t, &plan, NodeRole::Train)?;
            let examples = run.training_examples(&plan, &pool);
            let cfg = run.student_config();
            let r = plan.num_relations();
            let mlp = |trained: crate::kd_student::TrainedStudent| {
                (
                    ModelBody::Mlp {
                        params: trained.model.params,
                        mode: trained.model.mode,
                    },
                    trained.model.features,
                )
            };
            if wanted(ModelKind::FeatureMlp) {
                let (body, feats) = mlp(fit_supervised(&plan, &run.data.features, &examples, r, &cfg)?);
                run.save_model(t, ModelKind::FeatureMlp, body, &feats)?;
            }
            if wanted(ModelKind::KgDistmult) {
                let kcfg = run.teacher_config(true);
                let trained = train_teacher(&plan, &run.data.features, &kcfg, run.data.kg_init.as_ref())?;
                let body = Self::teacher_body(trained.params, &kcfg);
                run.save_model(t, ModelKind::KgDistmult, body, &run.data.features)?;
            }
            if wanted(ModelKind::ConcatMlp) {
                let (body, _) = run.load_model_file(t, ModelKind::Teacher)?;
                let ModelBody::Teacher { params, .. } = body else {
                    return Err(Error::config("models/teacher.json is not a teacher"));
                };
                let emb = &params.entity_emb;
                let entities =
                    EmbeddingTable::from_rows(emb.cols(), (0..emb.rows()).map(|i| emb.row(i).to_vec()).collect())?;
                let table = run.data.features.concat(&entities)?;
                let (body, feats) = mlp(fit_supervised(&plan, &table, &examples, r, &cfg)?);
                run.save_model(t, ModelKind::ConcatMlp, body, &feats)?;
            }
            Ok(())
        })
    }

    pub fn score(&mut self) -> Result<()> {
        self.stage("score", |run, t| {
            let plan = run.load_plan(t)?;
            let train_pool = run.load_pool(t, &plan, NodeRole::Train)?;
            let pools = [
                run.load_pool(t, &plan, NodeRole::Valid)?,
                run.load_pool(t, &plan, NodeRole::Test)?,
            ];
            for &kind in run.models() {
                let model = run.load_model(t, kind)?;
                let head = match run.config.eval.detector {
                    DetectorKind::MaxLogit => None,
                    DetectorKind::BinaryHead => {
                        let cands = candidates(&plan, &train_pool);
                        let logits = cands
                            .iter()
                            .map(|&((h, tl), _)| model.logits(h, tl))
                            .collect::<Result<Vec<_>>>()?;
                        let labels: Vec<bool> = cands.iter().map(|c| c.1).collect();
                        let e = &run.config.eval;
                        let head = BinaryHead::fit(&logits, &labels, e.head_epochs, e.head_lr, run.seed)?;
                        io::write_json(&t.output(&format!("models/{}.head.json", kind.name())), &head)?;
                        Some(head)
                    }
                };
                for pool in &pools {
                    let records = candidates(&plan, pool)
                        .into_iter()
                        .map(|((h, tl), label)| {
                            let z = model.logits(h, tl)?;
                            let score = match &head {
                                Some(b) => b.score(&z)?,
                                None => detection_score(&z)?,
                            };
                            Ok(ScoreRecord {
                                head: h,
                                tail: tl,
                                score,
                                label,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let rel = format!("scores/{}.{}.tsv", kind.name(), role_name(pool.role));
                    write_score_file(&t.output(&rel), &records)?;
                }
            }
            Ok(())
        })
    }

    pub fn calibrate(&mut self) -> Result<()> {
        self.stage("calibrate", |run, t| {
            for &kind in run.models() {
                let records = read_score_file(&t.input(&format!("scores/{}.valid.tsv", kind.name()))?)?;
                let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
                let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
                let theta = calibrate_threshold(&scores, &labels, run.config.eval.target_tpr)?;
                if let Some(w) = &theta.warning {
                    log::warn!("{}: {w}", kind.name());
                }
                io::write_json(&t.output(&format!("thresholds/{}.json", kind.name())), &theta)?;
            }
            Ok(())
        })
    }

    pub fn eval(&mut self) -> Result<Vec<EvalReport>> {
        self.stage("eval", |run, t| {
            let plan = run.load_plan(t)?;
            let pool_checksums = run.pool_checksums(t)?;
            let mut reports = Vec::new();
            for &kind in run.models() {
                let report = run.eval_model(t, &plan, kind, &pool_checksums)?;
                let stem = format!("reports/{}", kind.name());
                io::write_json(&t.output(&format!("{stem}.json")), &report)?;
                io::write_string(&t.output(&format!("{stem}.kv")), &report.to_key_values())?;
                io::write_string(&t.output(&format!("{stem}.txt")), &report.to_text())?;
                reports.push(report);
            }
            let baseline = run.config.eval.baseline.name();
            let table = Comparison::new(reports.clone(), Some(baseline))?.to_text();
            io::write_string(&t.output("reports/comparison.txt"), &table)?;
            Ok(reports)
        })
    }

    fn eval_model(
        &self,
        t: &mut StageTracker<'_>,
        plan: &SplitPlan,
        kind: ModelKind,
        pool_checksums: &BTreeMap<String, String>,
    ) -> Result<EvalReport> {
        let name = kind.name();
        let theta: Threshold = io::read_json(&t.input(&format!("thresholds/{name}.json"))?)?;
        let records = read_score_file(&t.input(&format!("scores/{name}.test.tsv"))?)?;
        let model = self.load_model(t, kind)?;

        let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
        let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut alerts = Vec::new();
        for r in &records {
            let fired = r.score >= theta.theta_star;
            match (fired, r.label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
            if fired {
                let logits = model.logits(r.head, r.tail)?;
                alerts.push(alert_from_scores((r.head, r.tail), r.score, logits, theta.theta_star));
            }
        }
        io::write_string(&t.output(&format!("alerts/{name}.jsonl")), &alerts_jsonl(&alerts)?)?;
        let prf = binary_prf(tp, fp, fn_)?;

        let mut correct = Vec::with_capacity(plan.test_edges.len());
        for e in &plan.test_edges {
            let logits = model.logits(e.head, e.tail)?;
            let pred = argmax(&logits).ok_or_else(|| Error::shape("model produced no logits"))?;
            correct.push(if pred as u32 == e.relation { 1.0 } else { 0.0 });
        }
        let exact_n = correct.len();
        if exact_n == 0 {
            return Err(Error::UndefinedMetric("no test positives to classify".into()));
        }
        let exact_precision = correct.iter().sum::<f64>() / exact_n as f64;
        let report = EvalReport {
            model: name.to_string(),
            regime: plan.regime,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            pool_checksums: pool_checksums.clone(),
            target_tpr: theta.target_tpr,
            threshold: theta.theta_star,
            exact_precision,
            exact_n,
            wilson_ci: wilson_ci(exact_precision, exact_n, Z_95)?,
            bootstrap_ci: bootstrap_ci(&correct, self.config.eval.bootstrap_iterations, self.seed)?,
            detection_precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            tp,
            fp,
            fn_,
            roc_auc: roc_auc(&scores, &labels)?,
            ap_stepwise: average_precision_stepwise(&scores, &labels)?,
            ap_baseline: prevalence(&labels)?,
            n_candidates: records.len(),
            n_positives: labels.iter().filter(|&&l| l).count(),
        };
        report.validate()?;
        Ok(report)
    }

    /// Renders ROC and PR curves of every model's test scores to `plots/`.
    pub fn plot(&self) -> Result<Vec<PathBuf>> {
        let mut roc = Vec::new();
        let mut pr = Vec::new();
        for &kind in self.models() {
            let rel = format!("scores/{}.test.tsv", kind.name());
            let records = read_score_file(&self.manifest.verified(&self.dir, &rel)?)?;
            let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
            let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
            roc.push((kind.name(), roc_curve(&scores, &labels)?));
            pr.push((kind.name(), pr_curve(&scores, &labels)?));
        }
        let roc_refs: Vec<(&str, &[(f64, f64)])> = roc.iter().map(|(n, p)| (*n, p.as_slice())).collect();
        let pr_refs: Vec<(&str, &[(f64, f64)])> = pr.iter().map(|(n, p)| (*n, p.as_slice())).collect();
        let roc_path = self.dir.join("plots/roc.svg");
        let pr_path = self.dir.join("plots/pr.svg");
        io::write_string(&roc_path, &roc_svg(&roc_refs))?;
        io::write_string(&pr_path, &pr_svg(&pr_refs))?;
        Ok(vec![roc_path, pr_path])
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config_hash: String,
    /// Per-seed reports, seeds outermost, models in config order.
    pub reports: Vec<EvalReport>,
    pub aggregates: Vec<AggregateReport>,
}

/// Runs every stage for every seed, then aggregates.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    run_experiment_with(config, out, &mut |_, _| Ok(()))
}

/// As [`run_experiment`], calling `after_stage(stage, seed_dir)` after each stage.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    out: &Path,
    after_stage: &mut dyn FnMut(&str, &Path) -> Result<()>,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = load_data(config).map_err(|e| e.in_stage("data", data_paths(config)))?;
    io::create_dir_all(out)?;
    io::write_string(&out.join("config.toml"), &config.to_toml()?)?;
    let mut reports = Vec::new();
    for seed in config.seeds() {
        let mut run = SeedRun::open(config, &data, out, seed)?;
        for stage in STAGES {
            reports.extend(run.run_stage(stage)?);
            after_stage(stage, &run.dir)?;
        }
    }
    let aggregates = aggregate_reports(config, out)?;
    Ok(ExperimentOutcome {
        config_hash: config.hash(),
        reports,
        aggregates,
    })
}

fn data_paths(config: &ExperimentConfig) -> Vec<PathBuf> {
    [&config.data.triples, &config.data.features, &config.data.kg_embeddings]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
}

/// Reads each seed's reports, verified against its manifest, and writes
/// `aggregate/<model>.{json,kv,txt}` plus `aggregate/summary.txt`.
pub fn aggregate_reports(config: &ExperimentConfig, out: &Path) -> Result<Vec<AggregateReport>> {
    let hash = config.hash();
    let mut aggregates = Vec::new();
    for &kind in &config.eval.models {
        let mut per_seed = Vec::new();
        for seed in config.seeds() {
            let dir = out.join(format!("seed-{seed}"));
            let manifest = RunManifest::load(&dir)?;
            if manifest.config_hash != hash {
                return Err(Error::config(format!(
                    "{} was produced by config {}, not {hash}",
                    dir.display(),
                    manifest.config_hash
                )));
            }
            let path = manifest.verified(&dir, &format!("reports/{}.json", kind.name()))?;
            let report: EvalReport = io::read_json(&path)?;
            per_seed.push(report);
        }
        let agg = AggregateReport::from_reports(per_seed)?;
        let stem = out.join("aggregate").join(kind.name());
        io::write_json(&stem.with_extension("json"), &agg)?;
        io::write_string(&stem.with_extension("kv"), &agg.to_key_values())?;
        io::write_string(&stem.with_extension("txt"), &agg.to_text())?;
        aggregates.push(agg);
    }
    io::write_string(&out.join("aggregate/summary.txt"), &aggregate_table(&aggregates))?;
    Ok(aggregates)
}
