use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{parse_triples, LoadOptions, TripleSet};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Transductive: edges withheld, every drug seen in training.
    EdgeHoldout,
    /// Zero-shot: test drugs and all their incident edges withheld.
    NodeHoldout,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge" | "edge-holdout" => Ok(Regime::EdgeHoldout),
            "node" | "node-holdout" => Ok(Regime::NodeHoldout),
            other => Err(Error::config(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Train,
    Valid,
    Test,
}

/// Train/validation/test edge partitions plus node roles.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub regime: Regime,
    pub train_edges: TripleSet,
    pub valid_edges: TripleSet,
    pub test_edges: TripleSet,
    node_roles: Vec<NodeRole>,
    pub seed: u64,
    pub train_frac: f64,
    pub test_frac: f64,
    pub warnings: Vec<String>,
}

fn check_fractions(train_frac: f64, test_frac: f64) -> Result<()> {
    let ok = |f: f64| f > 0.0 && f <= 1.0;
    if !ok(train_frac) || !ok(test_frac) {
        return Err(Error::config(format!(
            "split fractions must lie in (0, 1], got train {train_frac}, test {test_frac}"
        )));
    }
    if train_frac + test_frac > 1.0 + 1e-12 {
        return Err(Error::config(format!(
            "train fraction {train_frac} + test fraction {test_frac} exceeds 1"
        )));
    }
    Ok(())
}

/// `⌊frac · n⌋`, tolerant of representation error such as `0.29 · 100`.
fn floor_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 1e-9).floor() as usize
}

/// Random edge partition; every drug stays a training node.
pub fn edge_holdout_split(
    ts: &TripleSet,
    train_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<SplitPlan> {
    check_fractions(train_frac, test_frac)?;
    let n = ts.len();
    let n_train = floor_count(train_frac, n);
    let n_test = floor_count(test_frac, n).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut test: Vec<usize> = order[n_train..n_train + n_test].to_vec();
    let mut valid: Vec<usize> = order[n_train + n_test..].to_vec();
    // Partitions keep the input order.
    train.sort_unstable();
    test.sort_unstable();
    valid.sort_unstable();

    let plan = SplitPlan {
        regime: Regime::EdgeHoldout,
        train_edges: ts.subset(&train),
        valid_edges: ts.subset(&valid),
        test_edges: ts.subset(&test),
        node_roles: vec![NodeRole::Train; ts.num_drugs()],
        seed,
        train_frac,
        test_frac,
        warnings: Vec::new(),
    };
    Ok(plan)
}

/// Random node partition; edges are routed by their endpoints' roles.
pub fn node_holdout_split(
    ts: &TripleSet,
    train_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<SplitPlan> {
    check_fractions(train_frac, test_frac)?;
    let n = ts.num_drugs();
    let n_train = floor_count(train_frac, n);
    let n_test = floor_count(test_frac, n).min(n - n_train);
    if n_train == 0 || n_test == 0 {
        return Err(Error::config(format!(
            "{n} drugs cannot be split into {train_frac}/{test_frac} train/test node sets"
        )));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut roles = vec![NodeRole::Valid; n];
    for &i in &order[..n_train] {
        roles[i as usize] = NodeRole::Train;
    }
    for &i in &order[n_train..n_train + n_test] {
        roles[i as usize] = NodeRole::Test;
    }
    SplitPlan::from_node_roles(ts, roles, seed, train_frac, test_frac)
}

impl SplitPlan {
    /// Node hold-out plan for explicitly chosen node roles.
    ///
    /// An edge goes to test if it touches a test node, else to validation if
    /// it touches a validation node, else to train.
    pub fn from_node_roles(
        ts: &TripleSet,
        roles: Vec<NodeRole>,
        seed: u64,
        train_frac: f64,
        test_frac: f64,
    ) -> Result<Self> {
        if roles.len() != ts.num_drugs() {
            return Err(Error::shape(format!(
                "{} node roles for {} drugs",
                roles.len(),
                ts.num_drugs()
            )));
        }
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (i, t) in ts.iter().enumerate() {
            let rh = roles[t.head as usize];
            let rt = roles[t.tail as usize];
            if rh == NodeRole::Test || rt == NodeRole::Test {
                test.push(i);
            } else if rh == NodeRole::Valid || rt == NodeRole::Valid {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        let mut warnings = Vec::new();
        if test.is_empty() {
            let msg = "node hold-out produced no test edges: no edge touches a test drug";
            log::warn!("{msg}");
            warnings.push(msg.to_string());
        }
        Ok(SplitPlan {
            regime: Regime::NodeHoldout,
            train_edges: ts.subset(&train),
            valid_edges: ts.subset(&valid),
            test_edges: ts.subset(&test),
            node_roles: roles,
            seed,
            train_frac,
            test_frac,
            warnings,
        })
    }

    pub fn num_drugs(&self) -> usize {
        self.node_roles.len()
    }

    pub fn num_relations(&self) -> usize {
        self.train_edges.num_relations()
    }

    pub fn node_role(&self, drug: u32) -> Option<NodeRole> {
        self.node_roles.get(drug as usize).copied()
    }

    pub fn node_roles(&self) -> &[NodeRole] {
        &self.node_roles
    }

    pub fn is_train_node(&self, drug: u32) -> bool {
        self.node_role(drug) == Some(NodeRole::Train)
    }

    pub fn is_test_node(&self, drug: u32) -> bool {
        self.node_role(drug) == Some(NodeRole::Test)
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<u32> {
        self.node_roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn train_nodes(&self) -> Vec<u32> {
        self.nodes_with_role(NodeRole::Train)
    }

    pub fn valid_nodes(&self) -> Vec<u32> {
        self.nodes_with_role(NodeRole::Valid)
    }

    pub fn test_nodes(&self) -> Vec<u32> {
        self.nodes_with_role(NodeRole::Test)
    }

    pub fn edges(&self, role: NodeRole) -> &TripleSet {
        match role {
            NodeRole::Train => &self.train_edges,
            NodeRole::Valid => &self.valid_edges,
            NodeRole::Test => &self.test_edges,
        }
    }

    /// Every positive triple across the three partitions.
    pub fn all_edges(&self) -> impl Iterator<Item = &super::Triple> {
        self.train_edges
            .iter()
            .chain(self.valid_edges.iter())
            .chain(self.test_edges.iter())
    }

    /// Checks the structural invariants; returns the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in self.all_edges() {
            if !seen.insert(*t) {
                return Err(Error::Leakage(format!("triple {t:?} appears in two partitions")));
            }
        }
        if self.regime == Regime::NodeHoldout {
            for t in &self.train_edges {
                if !self.is_train_node(t.head) || !self.is_train_node(t.tail) {
                    return Err(Error::Leakage(format!(
                        "train edge {t:?} touches a non-train node"
                    )));
                }
            }
            for t in &self.test_edges {
                if !self.is_test_node(t.head) && !self.is_test_node(t.tail) {
                    return Err(Error::Leakage(format!(
                        "test edge {t:?} touches no test node"
                    )));
                }
            }
            for t in &self.valid_edges {
                if self.is_test_node(t.head) || self.is_test_node(t.tail) {
                    return Err(Error::Leakage(format!(
                        "validation edge {t:?} touches a test node"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes `train.tsv`, `valid.tsv`, `test.tsv` and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::create_dir_all(dir)?;
        let mut files = BTreeMap::new();
        for (name, set) in [
            ("train.tsv", &self.train_edges),
            ("valid.tsv", &self.valid_edges),
            ("test.tsv", &self.test_edges),
        ] {
            let text = set.to_tsv();
            io::write_string(&dir.join(name), &text)?;
            files.insert(name.to_string(), io::sha256_hex(text.as_bytes()));
        }
        let manifest = SplitManifest {
            format: SPLIT_FORMAT.to_string(),
            version: 1,
            regime: self.regime,
            seed: self.seed,
            train_frac: self.train_frac,
            test_frac: self.test_frac,
            num_drugs: self.num_drugs(),
            num_relations: self.num_relations(),
            train_nodes: self.train_nodes(),
            valid_nodes: self.valid_nodes(),
            test_nodes: self.test_nodes(),
            files,
            warnings: self.warnings.clone(),
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Loads a saved plan, verifying every partition file against the manifest.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: SplitManifest = io::read_json(&dir.join("manifest.json"))?;
        if manifest.format != SPLIT_FORMAT {
            return Err(Error::config(format!(
                "{}: not a split manifest",
                dir.display()
            )));
        }
        let mut roles = vec![NodeRole::Valid; manifest.num_drugs];
        for (role, nodes) in [
            (NodeRole::Train, &manifest.train_nodes),
            (NodeRole::Test, &manifest.test_nodes),
        ] {
            for &n in nodes {
                *roles.get_mut(n as usize).ok_or(Error::DrugRange {
                    index: n as u64,
                    num_drugs: manifest.num_drugs,
                })? = role;
            }
        }
        let opts = LoadOptions {
            num_relations: manifest.num_relations,
            num_drugs: Some(manifest.num_drugs),
            ..LoadOptions::default()
        };
        let load = |name: &str| -> Result<TripleSet> {
            let path = dir.join(name);
            let expected = manifest.files.get(name).ok_or_else(|| {
                Error::config(format!("{}: manifest lists no `{name}`", dir.display()))
            })?;
            let text = io::read_verified(&path, expected)?;
            Ok(parse_triples(&path, &text, &opts)?.set)
        };
        let plan = SplitPlan {
            regime: manifest.regime,
            train_edges: load("train.tsv")?,
            valid_edges: load("valid.tsv")?,
            test_edges: load("test.tsv")?,
            node_roles: roles,
            seed: manifest.seed,
            train_frac: manifest.train_frac,
            test_frac: manifest.test_frac,
            warnings: manifest.warnings,
        };
        plan.check_invariants()?;
        Ok(plan)
    }
}

const SPLIT_FORMAT: &str = "ddi-split";

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    format: String,
    version: u32,
    regime: Regime,
    seed: u64,
    train_frac: f64,
    test_frac: f64,
    num_drugs: usize,
    num_relations: usize,
    train_nodes: Vec<u32>,
    valid_nodes: Vec<u32>,
    test_nodes: Vec<u32>,
    files: BTreeMap<String, String>,
    #[serde(default)]
    warnings: Vec<String>,
}
