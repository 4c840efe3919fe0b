//! Per-seed run manifest. Every stage records the checksums of the files it
//! read and wrote; a stage may only read files written by an earlier stage,
//! and only while they still hash to the recorded value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

const RUN_FORMAT: &str = "ddi-run";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Pipeline stages in execution order.
pub const STAGES: [&str; 8] = [
    "split",
    "pools",
    "train-teacher",
    "distill",
    "baselines",
    "score",
    "calibrate",
    "eval",
];

pub fn stage_index(name: &str) -> Result<usize> {
    STAGES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::config(format!("unknown stage `{name}`")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub name: String,
    /// Relative path → SHA-256, for files read.
    pub inputs: BTreeMap<String, String>,
    /// Relative path → SHA-256, for files written.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    /// Checksums of the loaded triples and feature table.
    pub data: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: &str, seed: u64, data: BTreeMap<String, String>) -> Self {
        RunManifest {
            format: RUN_FORMAT.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            data,
            stages: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let m: RunManifest = io::read_json(&path)?;
        if m.format != RUN_FORMAT {
            return Err(Error::config(format!("{}: not a run manifest", path.display())));
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// The stage that wrote `rel` and the checksum it recorded.
    fn producer(&self, rel: &str) -> Option<(&StageRecord, &String)> {
        self.stages
            .iter()
            .find_map(|s| s.outputs.get(rel).map(|sum| (s, sum)))
    }

    /// Path of `rel` under `dir` after checking it against the recorded checksum.
    pub fn verified(&self, dir: &Path, rel: &str) -> Result<PathBuf> {
        let (_, sum) = self
            .producer(rel)
            .ok_or_else(|| Error::config(format!("no stage has produced `{rel}` yet")))?;
        let path = dir.join(rel);
        let actual = io::file_sha256(&path)?;
        if &actual != sum {
            return Err(Error::Checksum {
                path: path.display().to_string(),
                expected: sum.clone(),
                actual,
            });
        }
        Ok(path)
    }

    /// Records a finished stage, discarding it and every later stage's old record.
    pub fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|s| s.index < rec.index);
        self.stages.push(rec);
    }
}

/// Bookkeeping for one running stage.
pub struct StageTracker<'a> {
    dir: &'a Path,
    manifest: &'a RunManifest,
    index: usize,
    name: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl<'a> StageTracker<'a> {
    pub fn new(dir: &'a Path, manifest: &'a RunManifest, name: &'static str) -> Result<Self> {
        Ok(StageTracker {
            dir,
            manifest,
            index: stage_index(name)?,
            name,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    /// Resolves an input written by an earlier stage, verifying its checksum.
    pub fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let (producer, sum) = self.manifest.producer(rel).ok_or_else(|| {
            Error::config(format!(
                "stage `{}` needs `{rel}`, which no earlier stage produced",
                self.name
            ))
        })?;
        if producer.index >= self.index {
            return Err(Error::config(format!(
                "stage `{}` cannot read `{rel}` from later stage `{}`",
                self.name, producer.name
            )));
        }
        let sum = sum.clone();
        let path = self.manifest.verified(self.dir, rel)?;
        self.inputs.insert(rel.to_string(), sum);
        Ok(path)
    }

    /// Records a file from outside the run directory, keyed by its path.
    pub fn external_input(&mut self, path: &Path) -> Result<()> {
        let sum = io::file_sha256(path)?;
        self.inputs.insert(path.display().to_string(), sum);
        Ok(())
    }

    pub fn has_input(&self, rel: &str) -> bool {
        self.manifest.producer(rel).is_some()
    }

    /// Path for an output; its checksum is taken when the stage finishes.
    pub fn output(&mut self, rel: &str) -> PathBuf {
        self.outputs.push(rel.to_string());
        self.dir.join(rel)
    }

    /// Every artifact touched so far, for error messages.
    pub fn artifacts(&self) -> Vec<PathBuf> {
        self.inputs
            .keys()
            .chain(self.outputs.iter())
            .map(|r| self.dir.join(r))
            .collect()
    }

    pub fn finish(self) -> Result<StageRecord> {
        let mut outputs = BTreeMap::new();
        for rel in &self.outputs {
            outputs.insert(rel.clone(), io::file_sha256(&self.dir.join(rel))?);
        }
        Ok(StageRecord {
            index: self.index,
            name: self.name.to_string(),
            inputs: self.inputs,
            outputs,
        })
    }
}
