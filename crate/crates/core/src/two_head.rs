//! Detection then classification: a scalar alert score gated by a
//! validation-calibrated threshold, followed by argmax mechanism prediction.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{argmax, max_value, sigmoid};
use crate::scorer::PairScorer;

/// How a model's relation logits become one detection score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    /// Largest mechanism logit.
    #[default]
    MaxLogit,
    /// Logistic regression over the mechanism logits, fit on training pairs.
    BinaryHead,
}

/// Max over the relation logits.
pub fn detection_score(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::shape("detection score of an empty logit vector"));
    }
    Ok(max_value(logits))
}

/// Logistic head `σ(w·z + b)` over relation logits `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl BinaryHead {
    pub fn score(&self, logits: &[f64]) -> Result<f64> {
        if logits.len() != self.w.len() {
            return Err(Error::shape("binary head width does not match the logits"));
        }
        Ok(sigmoid(crate::linalg::dot(&self.w, logits) + self.b))
    }

    /// Full-batch-per-epoch SGD on mean log loss, class-balanced.
    pub fn fit(logits: &[Vec<f64>], labels: &[bool], epochs: usize, lr: f64, seed: u64) -> Result<Self> {
        if logits.len() != labels.len() || logits.is_empty() {
            return Err(Error::shape("binary head needs one label per logit vector"));
        }
        let width = logits[0].len();
        let pos = labels.iter().filter(|&&l| l).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::UndefinedMetric("binary head needs both classes".into()));
        }
        let (wp, wn) = (0.5 / pos as f64, 0.5 / neg as f64);
        let mut head = BinaryHead {
            w: vec![0.0; width],
            b: 0.0,
        };
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(256) {
                let mut gw = vec![0.0; width];
                let mut gb = 0.0;
                for &i in chunk {
                    let z = &logits[i];
                    let p = sigmoid(crate::linalg::dot(&head.w, z) + head.b);
                    let y = if labels[i] { 1.0 } else { 0.0 };
                    let weight = if labels[i] { wp } else { wn } * labels.len() as f64 / chunk.len() as f64;
                    let d = weight * (p - y);
                    crate::linalg::axpy(d, z, &mut gw);
                    gb += d;
                }
                crate::linalg::axpy(-lr, &gw, &mut head.w);
                head.b -= lr * gb;
            }
        }
        if !head.w.iter().all(|v| v.is_finite()) || !head.b.is_finite() {
            return Err(Error::Diverged("binary head weights became non-finite".into()));
        }
        Ok(head)
    }
}

/// A detector: a scorer plus the rule turning its logits into one number.
pub struct Detector<'a> {
    pub model: &'a dyn PairScorer,
    pub head: Option<&'a BinaryHead>,
}

impl Detector<'_> {
    pub fn score(&self, h: u32, t: u32) -> Result<f64> {
        let z = self.model.logits(h, t)?;
        match self.head {
            Some(head) => head.score(&z),
            None => detection_score(&z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub theta_star: f64,
    pub target_tpr: f64,
    pub achieved_tpr: f64,
    pub achieved_precision: f64,
    pub warning: Option<String>,
}

/// Chooses `θ` on validation scores: among cut points reaching `target_tpr`,
/// the one with the highest precision, ties going to the higher threshold.
///
/// The returned `θ` sits halfway between the chosen score and the next lower
/// distinct score, so every validation score at or above the cut fires.
pub fn calibrate_threshold(val_scores: &[f64], val_labels: &[bool], target_tpr: f64) -> Result<Threshold> {
    if val_scores.len() != val_labels.len() {
        return Err(Error::shape("one validation label per score is required"));
    }
    if val_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::UndefinedMetric("non-finite validation score".into()));
    }
    let pos = val_labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == val_labels.len() {
        return Err(Error::UndefinedMetric(
            "calibration needs at least one positive and one negative".into(),
        ));
    }
    if !(0.0..=1.0).contains(&target_tpr) {
        return Err(Error::config(format!("target TPR {target_tpr} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..val_scores.len()).collect();
    order.sort_by(|&a, &b| val_scores[b].total_cmp(&val_scores[a]));
    // distinct cut points, highest first, with cumulative counts
    let mut cuts: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &idx) in order.iter().enumerate() {
        if val_labels[idx] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = i + 1 == order.len() || val_scores[order[i + 1]] != val_scores[idx];
        if last_of_group {
            cuts.push((val_scores[idx], tp, fp));
        }
    }
    let mut warning = None;
    if cuts.len() == 1 {
        warning = Some("all validation scores are equal; the threshold is degenerate".to_string());
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, &(_, tp, fp)) in cuts.iter().enumerate() {
        if (tp as f64) / (pos as f64) + 1e-12 < target_tpr {
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        if best.is_none_or(|(_, p)| precision > p) {
            best = Some((j, precision));
        }
    }
    let j = match best {
        Some((j, _)) => j,
        None => {
            warning = Some(format!("no threshold reaches TPR {target_tpr}; using the minimum score"));
            cuts.len() - 1
        }
    };
    let (score, tp, fp) = cuts[j];
    let theta_star = match cuts.get(j + 1) {
        // adjacent floats have no midpoint; fall back to the score itself
        Some(&(lower, _, _)) if score + (lower - score) / 2.0 > lower => {
            score + (lower - score) / 2.0
        }
        Some(_) => score,
        None => score,
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Threshold {
        theta_star,
        target_tpr,
        achieved_tpr: tp as f64 / pos as f64,
        achieved_precision: tp as f64 / (tp + fp) as f64,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub pair: (u32, u32),
    pub score: f64,
    pub fired: bool,
    /// Present iff `fired`.
    pub mechanism: Option<u32>,
    pub mechanism_scores: Vec<f64>,
}

/// Gates on `score ≥ θ`; on a fired alert the mechanism is the argmax
/// relation, ties going to the lowest index.
pub fn alert_from_scores(pair: (u32, u32), score: f64, mechanism_scores: Vec<f64>, theta: f64) -> Alert {
    let fired = score >= theta;
    let mechanism = if fired {
        argmax(&mechanism_scores).map(|r| r as u32)
    } else {
        None
    };
    Alert {
        pair,
        score,
        fired: fired && mechanism.is_some(),
        mechanism,
        mechanism_scores,
    }
}

pub fn infer(
    pair: (u32, u32),
    detector: &Detector<'_>,
    classifier: &dyn PairScorer,
    threshold: &Threshold,
) -> Result<Alert> {
    let score = detector.score(pair.0, pair.1)?;
    let logits = classifier.logits(pair.0, pair.1)?;
    Ok(alert_from_scores(pair, score, logits, threshold.theta_star))
}

/// Number of scores at or above `theta`.
pub fn alert_count(scores: &[f64], theta: f64) -> usize {
    scores.iter().filter(|&&s| s >= theta).count()
}

/// One row of a score file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub head: u32,
    pub tail: u32,
    pub score: f64,
    pub label: bool,
}

/// `h<TAB>t<TAB>score<TAB>label` lines, in candidate order.
pub fn score_file_text(records: &[ScoreRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24);
    for r in records {
        writeln!(out, "{}\t{}\t{:?}\t{}", r.head, r.tail, r.score, u8::from(r.label)).unwrap();
    }
    out
}

pub fn write_score_file(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    io::write_string(path, &score_file_text(records))
}

pub fn read_score_file(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = io::read_to_string(path)?;
    let mut out = Vec::new();
    for (line, row) in io::content_lines(&text) {
        let err = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.to_string(),
        };
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 4 {
            return Err(err("expected `h<TAB>t<TAB>score<TAB>label`"));
        }
        let head = cols[0].parse().map_err(|_| err("bad head index"))?;
        let tail = cols[1].parse().map_err(|_| err("bad tail index"))?;
        let score = cols[2].parse().map_err(|_| err("bad score"))?;
        let label = match cols[3] {
            "1" => true,
            "0" => false,
            _ => return Err(err("label must be 0 or 1")),
        };
        out.push(ScoreRecord {
            head,
            tail,
            score,
            label,
        });
    }
    Ok(out)
}

/// Alerts as one JSON object per line.
pub fn alerts_jsonl(alerts: &[Alert]) -> Result<String> {
    let mut out = String::new();
    for a in alerts {
        out.push_str(&serde_json::to_string(a).map_err(|e| Error::json(Path::new("<alerts>"), e))?);
        out.push('\n');
    }
    Ok(out)
}
