//! Leakage-safe negative pair pools for the detection head.
//!
//! A sampled pair is rejected when it is positive in any split (either
//! direction), is a self-loop, or repeats an earlier draw up to orientation.
//! Train pools stay inside the training-node set; node hold-out test pools
//! only contain pairs touching a test drug.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::{undirected, NodeRole, Regime, SplitPlan, TripleSet};
use crate::io;

/// Rejection-sampling budget per requested negative.
pub const ATTEMPTS_PER_NEGATIVE: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativePool {
    /// Sampled `(h, t)` pairs in draw order.
    pub pairs: Vec<(u32, u32)>,
    pub k: usize,
    pub fold_seed: u64,
    pub role: NodeRole,
    /// `k · |positives|`.
    pub requested: usize,
    /// Set when fewer than `requested` pairs could be drawn.
    pub shortfall: Option<String>,
}

impl NegativePool {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.pairs.len() * 10);
        for (h, t) in &self.pairs {
            writeln!(out, "{h}\t{t}").unwrap();
        }
        out
    }
}

/// Whether `(h, t)` may appear in a pool of the given role.
fn admissible_nodes(plan: &SplitPlan, role: NodeRole, h: u32, t: u32) -> bool {
    let (rh, rt) = (plan.node_role(h), plan.node_role(t));
    match (plan.regime, role) {
        (_, NodeRole::Train) => rh == Some(NodeRole::Train) && rt == Some(NodeRole::Train),
        (Regime::EdgeHoldout, _) => true,
        (Regime::NodeHoldout, NodeRole::Test) => {
            rh == Some(NodeRole::Test) || rt == Some(NodeRole::Test)
        }
        (Regime::NodeHoldout, NodeRole::Valid) => {
            (rh == Some(NodeRole::Valid) || rt == Some(NodeRole::Valid))
                && rh != Some(NodeRole::Test)
                && rt != Some(NodeRole::Test)
        }
    }
}

/// Every positive pair of `plan` and `extra`, as unordered keys.
fn positive_pairs(plan: &SplitPlan, extra: &TripleSet) -> HashSet<(u32, u32)> {
    plan.all_edges()
        .chain(extra.iter())
        .map(|t| t.undirected_pair())
        .collect()
}

/// Draws `k · |positives|` negatives for `role`.
///
/// Train pools draw both endpoints from the training nodes; other pools draw
/// uniformly over all drugs and reject pairs outside the role's pair space.
/// Deterministic in `(plan, positives, k, role, seed)`.
pub fn build_pool(
    plan: &SplitPlan,
    positives: &TripleSet,
    k: usize,
    role: NodeRole,
    seed: u64,
) -> Result<NegativePool> {
    if k == 0 {
        return Err(Error::config("negatives per positive must be at least 1"));
    }
    let requested = k * positives.len();
    let excluded = positive_pairs(plan, positives);
    let nodes: Vec<u32> = match role {
        NodeRole::Train => plan.train_nodes(),
        _ => (0..plan.num_drugs() as u32).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (role as u64).wrapping_mul(0x9e37_79b9));
    let mut seen = HashSet::with_capacity(requested);
    let mut pairs = Vec::with_capacity(requested);
    let budget = ATTEMPTS_PER_NEGATIVE * requested;
    let mut attempts = 0;
    if nodes.len() >= 2 {
        while pairs.len() < requested && attempts < budget {
            attempts += 1;
            let h = nodes[rng.random_range(0..nodes.len())];
            let t = nodes[rng.random_range(0..nodes.len())];
            if h == t || !admissible_nodes(plan, role, h, t) {
                continue;
            }
            let key = undirected(h, t);
            if excluded.contains(&key) || !seen.insert(key) {
                continue;
            }
            pairs.push((h, t));
        }
    }
    let shortfall = (pairs.len() < requested).then(|| {
        let msg = format!(
            "{role:?} pool: drew {} of {requested} negatives after {attempts} attempts; \
             the admissible pair space is too small",
            pairs.len()
        );
        log::warn!("{msg}");
        msg
    });
    Ok(NegativePool {
        pairs,
        k,
        fold_seed: seed,
        role,
        requested,
        shortfall,
    })
}

/// Re-checks every pool invariant against `plan`; returns the first violation.
pub fn check_pool(plan: &SplitPlan, positives: &TripleSet, pool: &NegativePool) -> Result<()> {
    let excluded = positive_pairs(plan, positives);
    let mut seen = HashSet::new();
    for &(h, t) in &pool.pairs {
        let bad = if h == t {
            Some("self-loop")
        } else if excluded.contains(&undirected(h, t)) {
            Some("positive pair")
        } else if !seen.insert(undirected(h, t)) {
            Some("duplicate")
        } else if !admissible_nodes(plan, pool.role, h, t) {
            Some("outside the role's node set")
        } else {
            None
        };
        if let Some(what) = bad {
            return Err(Error::Leakage(format!("negative ({h}, {t}) is a {what}")));
        }
    }
    if pool.pairs.len() != pool.requested && pool.shortfall.is_none() {
        return Err(Error::shape("pool is short without a shortfall warning"));
    }
    Ok(())
}

const POOL_FORMAT: &str = "ddi-pool";

/// On-disk record of a frozen pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub format: String,
    pub k: usize,
    pub seed: u64,
    pub role: NodeRole,
    pub requested: usize,
    pub size: usize,
    pub shortfall: Option<String>,
    /// Pool file name, relative to the manifest directory.
    pub file: String,
    pub sha256: String,
}

/// Writes `<stem>.tsv` and `<stem>.manifest.json` into `dir`.
pub fn freeze_pool(pool: &NegativePool, dir: &Path, stem: &str) -> Result<(PathBuf, PoolManifest)> {
    let text = pool.to_tsv();
    let file = format!("{stem}.tsv");
    io::write_string(&dir.join(&file), &text)?;
    let manifest = PoolManifest {
        format: POOL_FORMAT.to_string(),
        k: pool.k,
        seed: pool.fold_seed,
        role: pool.role,
        requested: pool.requested,
        size: pool.pairs.len(),
        shortfall: pool.shortfall.clone(),
        file,
        sha256: io::sha256_hex(text.as_bytes()),
    };
    let path = dir.join(format!("{stem}.manifest.json"));
    io::write_json(&path, &manifest)?;
    Ok((path, manifest))
}

/// Loads a frozen pool, refusing it if the pool file no longer matches its checksum.
pub fn load_frozen_pool(manifest_path: &Path) -> Result<(NegativePool, PoolManifest)> {
    let manifest: PoolManifest = io::read_json(manifest_path)?;
    if manifest.format != POOL_FORMAT {
        return Err(Error::config(format!(
            "{}: not a pool manifest",
            manifest_path.display()
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let path = dir.join(&manifest.file);
    let text = io::read_verified(&path, &manifest.sha256)?;
    let mut pairs = Vec::with_capacity(manifest.size);
    for (line, row) in io::content_lines(&text) {
        let parse_err = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.to_string(),
        };
        let mut cols = row.split('\t');
        let mut next = || -> Result<u32> {
            cols.next()
                .ok_or_else(|| parse_err("expected `h<TAB>t`"))?
                .trim()
                .parse()
                .map_err(|_| parse_err("drug index is not an integer"))
        };
        let h = next()?;
        let t = next()?;
        if cols.next().is_some() {
            return Err(parse_err("expected exactly two columns"));
        }
        pairs.push((h, t));
    }
    if pairs.len() != manifest.size {
        return Err(Error::Format {
            path: path.display().to_string(),
            row: pairs.len(),
            msg: format!("manifest records {} pairs", manifest.size),
        });
    }
    let pool = NegativePool {
        pairs,
        k: manifest.k,
        fold_seed: manifest.seed,
        role: manifest.role,
        requested: manifest.requested,
        shortfall: manifest.shortfall.clone(),
    };
    Ok((pool, manifest))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::graph_store::{edge_holdout_split, node_holdout_split, Triple};

    fn chain(n: u32, r: usize) -> TripleSet {
        let raw: Vec<Triple> = (0..n - 1).map(|h| Triple::new(h, h % r as u32, h + 1)).collect();
        TripleSet::from_unique(n as usize, r, raw).unwrap()
    }

    fn all_train(ts: &TripleSet) -> SplitPlan {
        SplitPlan::from_node_roles(ts, vec![NodeRole::Train; ts.num_drugs()], 0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn four_drug_pool_by_enumeration() {
        let ts = TripleSet::from_unique(4, 1, [Triple::new(0, 0, 1)]).unwrap();
        let plan = all_train(&ts);
        let pool = build_pool(&plan, &ts, 2, NodeRole::Train, 7).unwrap();
        assert_eq!(pool.len(), 2);
        assert!(pool.shortfall.is_none());
        let admissible = [(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for &(h, t) in &pool.pairs {
            assert!(admissible.contains(&undirected(h, t)), "({h}, {t})");
        }
        check_pool(&plan, &ts, &pool).unwrap();
    }

    #[test]
    fn complete_graph_yields_empty_pool_with_warning() {
        let mut raw = Vec::new();
        for h in 0..5u32 {
            for t in 0..5u32 {
                if h != t {
                    raw.push(Triple::new(h, 0, t));
                }
            }
        }
        let ts = TripleSet::from_unique(5, 1, raw).unwrap();
        let pool = build_pool(&all_train(&ts), &ts, 1, NodeRole::Train, 0).unwrap();
        assert!(pool.is_empty());
        assert!(pool.shortfall.is_some());
    }

    #[test]
    fn small_space_is_exhausted_exactly() {
        let ts = TripleSet::from_unique(4, 1, [Triple::new(0, 0, 1)]).unwrap();
        let pool = build_pool(&all_train(&ts), &ts, 10, NodeRole::Train, 1).unwrap();
        assert_eq!(pool.len(), 5);
        assert!(pool.shortfall.is_some());
    }

    #[test]
    fn train_pool_avoids_test_drugs() {
        let ts = chain(12, 2);
        let mut roles = vec![NodeRole::Train; 12];
        roles[3] = NodeRole::Test;
        let plan = SplitPlan::from_node_roles(&ts, roles, 0, 0.9, 0.1).unwrap();
        let pool = build_pool(&plan, &plan.train_edges, 2, NodeRole::Train, 3).unwrap();
        assert!(pool.pairs.iter().all(|&(h, t)| h != 3 && t != 3));
        let test = build_pool(&plan, &plan.test_edges, 4, NodeRole::Test, 3).unwrap();
        assert!(test.pairs.iter().all(|&(h, t)| h == 3 || t == 3));
        check_pool(&plan, &plan.test_edges, &test).unwrap();
    }

    #[test]
    fn check_pool_flags_planted_violations() {
        let ts = chain(10, 1);
        let plan = all_train(&ts);
        let mut pool = build_pool(&plan, &ts, 1, NodeRole::Train, 0).unwrap();
        check_pool(&plan, &ts, &pool).unwrap();
        pool.pairs[0] = (2, 1);
        assert!(check_pool(&plan, &ts, &pool).is_err());
    }

    #[test]
    fn freeze_round_trips_and_detects_tampering() {
        let ts = chain(30, 3);
        let plan = edge_holdout_split(&ts, 0.8, 0.1, 0).unwrap();
        let pool = build_pool(&plan, &plan.test_edges, 10, NodeRole::Test, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (path, manifest) = freeze_pool(&pool, dir.path(), "test_pool").unwrap();
        let (back, m2) = load_frozen_pool(&path).unwrap();
        assert_eq!(back, pool);
        assert_eq!(m2, manifest);

        let file = dir.path().join("test_pool.tsv");
        let mut text = std::fs::read_to_string(&file).unwrap();
        text.push_str("0\t29\n");
        std::fs::write(&file, text).unwrap();
        let err = load_frozen_pool(&path).unwrap_err();
        assert!(matches!(err, Error::Checksum { .. }), "{err}");
        assert_eq!(err.exit_code(), crate::error::EXIT_CHECKSUM);
    }

    #[test]
    fn zero_k_is_rejected() {
        let ts = chain(4, 1);
        assert!(build_pool(&all_train(&ts), &ts, 0, NodeRole::Train, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pools_satisfy_every_contract(seed in any::<u64>(), k in 1usize..4) {
            let mut raw = Vec::new();
            for h in 0..40u32 {
                for t in (h + 1)..40 {
                    if (h * 7 + t * 3 + seed as u32 % 11).is_multiple_of(13) {
                        raw.push(Triple::new(h, (h + t) % 3, t));
                    }
                }
            }
            let ts = TripleSet::from_unique(40, 3, raw).unwrap();
            let plan = node_holdout_split(&ts, 0.7, 0.2, seed).unwrap();
            for (role, pos) in [
                (NodeRole::Train, &plan.train_edges),
                (NodeRole::Valid, &plan.valid_edges),
                (NodeRole::Test, &plan.test_edges),
            ] {
                let pool = build_pool(&plan, pos, k, role, seed).unwrap();
                prop_assert!(check_pool(&plan, pos, &pool).is_ok());
                prop_assert_eq!(&pool, &build_pool(&plan, pos, k, role, seed).unwrap());
            }
        }
    }
}
