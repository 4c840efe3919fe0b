//! The multi-relational drug-interaction graph: loading, indexing and
//! leakage-safe partitioning.

mod leakage;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub use leakage::{
    verify_kd_pairs, verify_no_leakage, verify_no_leakage_in_overlap, LeakageCheck,
    LeakageCheckResult, LeakageReport,
};
pub use split::{edge_holdout_split, node_holdout_split, NodeRole, Regime, SplitPlan};

/// Relation count of the DrugBank mechanism ontology.
pub const DEFAULT_NUM_RELATIONS: usize = 86;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub const fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    /// Unordered endpoint key: `(min, max)`.
    pub fn undirected_pair(&self) -> (u32, u32) {
        undirected(self.head, self.tail)
    }
}

#[inline]
pub(crate) fn undirected(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Counts of rows dropped while building a [`TripleSet`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropStats {
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Deduplicated, range-checked triples over a fixed drug vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSet {
    triples: Vec<Triple>,
    num_drugs: usize,
    num_relations: usize,
}

impl TripleSet {
    pub fn empty(num_drugs: usize, num_relations: usize) -> Self {
        TripleSet {
            triples: Vec::new(),
            num_drugs,
            num_relations,
        }
    }

    /// Builds a set from raw triples, dropping exact duplicates and self-loops.
    /// First occurrence order is preserved.
    pub fn from_triples(
        num_drugs: usize,
        num_relations: usize,
        raw: impl IntoIterator<Item = Triple>,
    ) -> Result<(Self, DropStats)> {
        let mut seen = HashSet::new();
        let mut stats = DropStats::default();
        let mut triples = Vec::new();
        for t in raw {
            check_range(&t, num_drugs, num_relations)?;
            if t.head == t.tail {
                stats.self_loops += 1;
                continue;
            }
            if !seen.insert(t) {
                stats.duplicates += 1;
                continue;
            }
            triples.push(t);
        }
        Ok((
            TripleSet {
                triples,
                num_drugs,
                num_relations,
            },
            stats,
        ))
    }

    /// Like [`TripleSet::from_triples`] but rejects input that would need any dropping.
    pub fn from_unique(
        num_drugs: usize,
        num_relations: usize,
        raw: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        let (set, stats) = Self::from_triples(num_drugs, num_relations, raw)?;
        if stats != DropStats::default() {
            return Err(Error::config(format!(
                "triples contain {} duplicates and {} self-loops",
                stats.duplicates, stats.self_loops
            )));
        }
        Ok(set)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn num_drugs(&self) -> usize {
        self.num_drugs
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triple> {
        self.triples.iter()
    }

    /// Merges inverse triples `(t, r, h)` into `(min, r, max)`.
    pub fn symmetrized(&self) -> (Self, DropStats) {
        let raw = self.triples.iter().map(|t| {
            let (a, b) = t.undirected_pair();
            Triple::new(a, t.relation, b)
        });
        // Ranges were already checked.
        Self::from_triples(self.num_drugs, self.num_relations, raw).expect("in-range triples")
    }

    /// Set of unordered endpoint pairs, regardless of relation.
    pub fn undirected_pairs(&self) -> HashSet<(u32, u32)> {
        self.triples.iter().map(Triple::undirected_pair).collect()
    }

    pub(crate) fn subset(&self, indices: &[usize]) -> Self {
        TripleSet {
            triples: indices.iter().map(|&i| self.triples[i]).collect(),
            num_drugs: self.num_drugs,
            num_relations: self.num_relations,
        }
    }

    /// Writes the tab-separated `head relation tail` format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.triples.len() * 12);
        for t in &self.triples {
            let _ = writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.to_tsv())
    }
}

impl<'a> IntoIterator for &'a TripleSet {
    type Item = &'a Triple;
    type IntoIter = std::slice::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

fn check_range(t: &Triple, num_drugs: usize, num_relations: usize) -> Result<()> {
    for idx in [t.head, t.tail] {
        if idx as usize >= num_drugs {
            return Err(Error::DrugRange {
                index: idx as u64,
                num_drugs,
            });
        }
    }
    if t.relation as usize >= num_relations {
        return Err(Error::RelationRange {
            path: String::new(),
            line: 0,
            relation: t.relation as u64,
            num_relations,
        });
    }
    Ok(())
}

/// Mapping from external string drug identifiers to dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    by_name: BTreeMap<String, u32>,
    names: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, index: u32) -> Option<&str> {
        self.names.get(index as usize).map(String::as_str)
    }

    /// Returns the index for `name`, assigning the next free one if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(i) = self.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), i);
        i
    }

    /// Reads `string_id<TAB>integer_index` rows; indices must be dense `0..n`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let mut pairs = Vec::new();
        for (line, row) in io::content_lines(&text) {
            let mut cols = row.split('\t');
            let (Some(name), Some(idx), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(parse_err(path, line, "expected `string_id<TAB>index`"));
            };
            let idx: u32 = idx
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad index `{idx}`")))?;
            pairs.push((line, name.trim().to_string(), idx));
        }
        let mut names = vec![None; pairs.len()];
        let mut by_name = BTreeMap::new();
        for (line, name, idx) in pairs {
            let slot = names
                .get_mut(idx as usize)
                .ok_or_else(|| parse_err(path, line, format!("index {idx} is not dense")))?;
            if slot.is_some() || by_name.contains_key(&name) {
                return Err(parse_err(path, line, format!("duplicate entry `{name}`/{idx}")));
            }
            *slot = Some(name.clone());
            by_name.insert(name, idx);
        }
        Ok(Vocabulary {
            by_name,
            names: names.into_iter().map(Option::unwrap).collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, n) in self.names.iter().enumerate() {
            let _ = writeln!(out, "{n}\t{i}");
        }
        io::write_string(path, &out)
    }
}

/// How drug tokens in a triple file are resolved.
#[derive(Debug, Clone, Default)]
pub enum DrugIds {
    /// Tokens are integer indices.
    #[default]
    Integer,
    /// Tokens are looked up in a fixed vocabulary.
    Vocabulary(Vocabulary),
    /// Tokens are interned into a fresh vocabulary in first-seen order.
    Build,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub num_relations: usize,
    /// Vocabulary size; inferred as `max index + 1` when absent.
    pub num_drugs: Option<usize>,
    pub drug_ids: DrugIds,
    /// Merge `(t, r, h)` into `(h, r, t)`.
    pub symmetric: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            num_relations: DEFAULT_NUM_RELATIONS,
            num_drugs: None,
            drug_ids: DrugIds::Integer,
            symmetric: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTriples {
    pub set: TripleSet,
    pub dropped: DropStats,
    /// Present when drug ids were resolved through a vocabulary.
    pub vocabulary: Option<Vocabulary>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads a `head<TAB>relation<TAB>tail` file (`#` comments allowed).
pub fn load_triples(path: &Path, opts: &LoadOptions) -> Result<LoadedTriples> {
    let text = io::read_to_string(path)?;
    parse_triples(path, &text, opts)
}

pub(crate) fn parse_triples(path: &Path, text: &str, opts: &LoadOptions) -> Result<LoadedTriples> {
    let mut vocab = match &opts.drug_ids {
        DrugIds::Integer => None,
        DrugIds::Vocabulary(v) => Some(v.clone()),
        DrugIds::Build => Some(Vocabulary::new()),
    };
    let building = matches!(opts.drug_ids, DrugIds::Build);

    let mut raw = Vec::new();
    let mut max_drug: Option<u32> = None;
    for (line, row) in io::content_lines(text) {
        let cols: Vec<&str> = row.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 tab-separated fields, found {}", cols.len()),
            ));
        }
        let relation: u64 = cols[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad relation `{}`", cols[1])))?;
        if relation >= opts.num_relations as u64 {
            return Err(Error::RelationRange {
                path: path.display().to_string(),
                line,
                relation,
                num_relations: opts.num_relations,
            });
        }
        let mut resolve = |tok: &str| -> Result<u32> {
            match vocab.as_mut() {
                None => tok
                    .parse::<u32>()
                    .map_err(|_| parse_err(path, line, format!("bad drug index `{tok}`"))),
                Some(v) if building => Ok(v.intern(tok)),
                Some(v) => v
                    .get(tok)
                    .ok_or_else(|| parse_err(path, line, format!("unknown drug id `{tok}`"))),
            }
        };
        let head = resolve(cols[0])?;
        let tail = resolve(cols[2])?;
        if let Some(n) = opts.num_drugs {
            for idx in [head, tail] {
                if idx as usize >= n {
                    return Err(parse_err(
                        path,
                        line,
                        format!("drug index {idx} out of range ({n} drugs)"),
                    ));
                }
            }
        }
        max_drug = max_drug.max(Some(head.max(tail)));
        raw.push(Triple::new(head, relation as u32, tail));
    }

    let num_drugs = opts
        .num_drugs
        .or_else(|| vocab.as_ref().map(Vocabulary::len))
        .unwrap_or_else(|| max_drug.map_or(0, |m| m as usize + 1));
    let (mut set, mut dropped) = TripleSet::from_triples(num_drugs, opts.num_relations, raw)?;
    if opts.symmetric {
        let (merged, extra) = set.symmetrized();
        set = merged;
        dropped.duplicates += extra.duplicates;
    }
    if dropped.duplicates + dropped.self_loops > 0 {
        log::info!(
            "{}: dropped {} duplicate triples and {} self-loops",
            path.display(),
            dropped.duplicates,
            dropped.self_loops
        );
    }
    Ok(LoadedTriples {
        set,
        dropped,
        vocabulary: vocab,
    })
}
