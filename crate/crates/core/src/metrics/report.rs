use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mean_std;
use crate::error::{Error, Result};
use crate::graph_store::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Evaluation of one model on one seed's frozen test pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub regime: Regime,
    pub seed: u64,
    pub config_hash: String,
    /// Pool manifest name → pool file checksum.
    pub pool_checksums: BTreeMap<String, String>,
    pub target_tpr: f64,
    pub threshold: f64,
    /// Argmax relation accuracy over the held-out positive pairs.
    pub exact_precision: f64,
    pub exact_n: usize,
    pub wilson_ci: (f64, f64),
    pub bootstrap_ci: (f64, f64),
    pub detection_precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub roc_auc: f64,
    pub ap_stepwise: f64,
    /// Positive prevalence of the candidate set.
    pub ap_baseline: f64,
    pub n_candidates: usize,
    pub n_positives: usize,
}

impl EvalReport {
    /// Scalar metrics in display order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("roc_auc", self.roc_auc),
            ("ap_stepwise", self.ap_stepwise),
            ("ap_baseline", self.ap_baseline),
            ("f1", self.f1),
            ("detection_precision", self.detection_precision),
            ("recall", self.recall),
            ("exact_precision", self.exact_precision),
            ("wilson_low", self.wilson_ci.0),
            ("wilson_high", self.wilson_ci.1),
            ("bootstrap_low", self.bootstrap_ci.0),
            ("bootstrap_high", self.bootstrap_ci.1),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.metrics() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::UndefinedMetric(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let (lo, hi) = self.wilson_ci;
        if !(lo <= self.exact_precision && self.exact_precision <= hi) {
            return Err(Error::UndefinedMetric(format!(
                "Wilson interval ({lo}, {hi}) excludes {}",
                self.exact_precision
            )));
        }
        if self.bootstrap_ci.0 > self.bootstrap_ci.1 {
            return Err(Error::UndefinedMetric("bootstrap interval is inverted".into()));
        }
        Ok(())
    }

    /// `key=value` lines; floats use shortest round-trip formatting.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model={}", self.model).unwrap();
        writeln!(out, "regime={}", regime_name(self.regime)).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "config_hash={}", self.config_hash).unwrap();
        for (name, sum) in &self.pool_checksums {
            writeln!(out, "pool.{name}={sum}").unwrap();
        }
        writeln!(out, "target_tpr={}", self.target_tpr).unwrap();
        writeln!(out, "threshold={}", self.threshold).unwrap();
        for (name, v) in self.metrics() {
            writeln!(out, "{name}={v}").unwrap();
        }
        for (name, v) in [
            ("exact_n", self.exact_n),
            ("tp", self.tp),
            ("fp", self.fp),
            ("fn", self.fn_),
            ("n_candidates", self.n_candidates),
            ("n_positives", self.n_positives),
        ] {
            writeln!(out, "{name}={v}").unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} | {} | seed {} | config {}",
            self.model,
            regime_name(self.regime),
            self.seed,
            short(&self.config_hash)
        )
        .unwrap();
        writeln!(
            out,
            "  exact precision {:.4}  (Wilson {:.4}-{:.4}, bootstrap {:.4}-{:.4}, n={})",
            self.exact_precision,
            self.wilson_ci.0,
            self.wilson_ci.1,
            self.bootstrap_ci.0,
            self.bootstrap_ci.1,
            self.exact_n
        )
        .unwrap();
        writeln!(
            out,
            "  detection P {:.4}  R {:.4}  F1 {:.4}  (tp {} fp {} fn {}, theta {:.4})",
            self.detection_precision, self.recall, self.f1, self.tp, self.fp, self.fn_, self.threshold
        )
        .unwrap();
        writeln!(
            out,
            "  ROC-AUC {:.4}  AP {:.4}  AP baseline {:.4}  ({} candidates, {} positive)",
            self.roc_auc, self.ap_stepwise, self.ap_baseline, self.n_candidates, self.n_positives
        )
        .unwrap();
        out
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

pub(crate) fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::EdgeHoldout => "edge-holdout",
        Regime::NodeHoldout => "node-holdout",
    }
}

/// Per-seed reports for one model plus mean ± sample std of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model: String,
    pub regime: Regime,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub summary: BTreeMap<String, MeanStd>,
    pub per_seed: Vec<EvalReport>,
}

impl AggregateReport {
    pub fn from_reports(reports: Vec<EvalReport>) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::UndefinedMetric("aggregate of zero reports".into()))?;
        if reports
            .iter()
            .any(|r| r.model != first.model || r.config_hash != first.config_hash)
        {
            return Err(Error::config("aggregated reports must share model and config"));
        }
        let mut summary = BTreeMap::new();
        for (i, (name, _)) in first.metrics().into_iter().enumerate() {
            let vals: Vec<f64> = reports.iter().map(|r| r.metrics()[i].1).collect();
            summary.insert(name.to_string(), mean_std(&vals)?);
        }
        Ok(AggregateReport {
            model: first.model.clone(),
            regime: first.regime,
            config_hash: first.config_hash.clone(),
            seeds: reports.iter().map(|r| r.seed).collect(),
            summary,
            per_seed: reports,
        })
    }

    pub fn get(&self, metric: &str) -> Option<MeanStd> {
        self.summary.get(metric).copied()
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model={}", self.model).unwrap();
        writeln!(out, "regime={}", regime_name(self.regime)).unwrap();
        writeln!(out, "config_hash={}", self.config_hash).unwrap();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(out, "seeds={}", seeds.join(",")).unwrap();
        for (name, ms) in &self.summary {
            writeln!(out, "{name}.mean={}", ms.mean).unwrap();
            writeln!(out, "{name}.std={}", ms.std).unwrap();
        }
        for r in &self.per_seed {
            writeln!(out, "seed.{}.exact_precision={}", r.seed, r.exact_precision).unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} | {} | {} seed(s) | config {}",
            self.model,
            regime_name(self.regime),
            self.seeds.len(),
            short(&self.config_hash)
        )
        .unwrap();
        for (name, ms) in &self.summary {
            writeln!(out, "  {name:<20} {:.4} ± {:.4}", ms.mean, ms.std).unwrap();
        }
        for r in &self.per_seed {
            writeln!(out, "  seed {:<6} exact precision {:.4}", r.seed, r.exact_precision).unwrap();
        }
        out
    }
}
