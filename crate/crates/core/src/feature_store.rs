//! Per-drug dense vectors and the pairwise features built from them.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::l2_norm;

/// Default per-drug vector width.
pub const DEFAULT_DIM: usize = 64;

/// Dense per-drug vectors indexed by drug index. Absent drugs are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
    present: Vec<bool>,
    normalized: bool,
    zero_vectors: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            data: Vec::new(),
            present: Vec::new(),
            normalized: false,
            zero_vectors: 0,
        }
    }

    /// Table with a vector for every drug `0..rows.len()`.
    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut t = EmbeddingTable::new(dim);
        for (i, r) in rows.into_iter().enumerate() {
            t.insert(i as u32, &r)?;
        }
        Ok(t)
    }

    /// Inserts or replaces the vector for `drug`.
    pub fn insert(&mut self, drug: u32, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::shape(format!(
                "vector for drug {drug} has length {}, table dim is {}",
                v.len(),
                self.dim
            )));
        }
        let i = drug as usize;
        if i >= self.present.len() {
            self.present.resize(i + 1, false);
            self.data.resize((i + 1) * self.dim, 0.0);
        }
        self.present[i] = true;
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
        self.normalized = false;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Zero vectors seen by the last [`l2_normalize`].
    pub fn zero_vectors(&self) -> usize {
        self.zero_vectors
    }

    pub fn len(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, drug: u32) -> bool {
        self.present.get(drug as usize).copied().unwrap_or(false)
    }

    pub fn get(&self, drug: u32) -> Option<&[f64]> {
        if self.contains(drug) {
            let i = drug as usize;
            Some(&self.data[i * self.dim..(i + 1) * self.dim])
        } else {
            None
        }
    }

    pub fn lookup(&self, drug: u32) -> Result<&[f64]> {
        self.get(drug).ok_or(Error::MissingDrug(drug))
    }

    /// Present drug indices in ascending order.
    pub fn drugs(&self) -> impl Iterator<Item = u32> + '_ {
        self.present
            .iter()
            .enumerate()
            .filter(|(_, p)| **p)
            .map(|(i, _)| i as u32)
    }

    /// Presence mask over `0..num_drugs`.
    pub fn presence_mask(&self, num_drugs: usize) -> Vec<bool> {
        (0..num_drugs as u32).map(|d| self.contains(d)).collect()
    }

    /// Row-wise concatenation `[self ‖ other]` over drugs present in both.
    pub fn concat(&self, other: &EmbeddingTable) -> Result<EmbeddingTable> {
        let mut out = EmbeddingTable::new(self.dim + other.dim);
        let mut buf = Vec::with_capacity(out.dim);
        for d in self.drugs() {
            if let Some(b) = other.get(d) {
                buf.clear();
                buf.extend_from_slice(self.lookup(d)?);
                buf.extend_from_slice(b);
                out.insert(d, &buf)?;
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#dim {}\n", self.dim);
        for d in self.drugs() {
            let _ = write!(out, "{d}");
            for x in self.get(d).unwrap() {
                let _ = write!(out, " {x:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.to_text())
    }
}

/// Loads `drug_index v_1 … v_D` rows (optional `#dim D` header).
pub fn load_embedding_table(path: &Path, expected_dim: usize) -> Result<EmbeddingTable> {
    let text = io::read_to_string(path)?;
    parse_embedding_table(path, &text, expected_dim)
}

pub(crate) fn parse_embedding_table(
    path: &Path,
    text: &str,
    expected_dim: usize,
) -> Result<EmbeddingTable> {
    let fmt_err = |row: usize, msg: String| Error::Format {
        path: path.display().to_string(),
        row,
        msg,
    };
    let mut table = EmbeddingTable::new(expected_dim);
    let mut row_buf = Vec::with_capacity(expected_dim);
    for (row, line) in text.lines().enumerate() {
        let row = row + 1;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("#dim") {
            let d: usize = rest
                .trim()
                .parse()
                .map_err(|_| fmt_err(row, format!("bad header `{line}`")))?;
            if d != expected_dim {
                return Err(fmt_err(
                    row,
                    format!("header declares dim {d}, expected {expected_dim}"),
                ));
            }
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let idx_tok = toks.next().unwrap_or_default();
        let drug: u32 = idx_tok
            .parse()
            .map_err(|_| fmt_err(row, format!("bad drug index `{idx_tok}`")))?;
        row_buf.clear();
        for tok in toks {
            let v: f64 = tok
                .parse()
                .map_err(|_| fmt_err(row, format!("bad float `{tok}`")))?;
            row_buf.push(v);
        }
        if row_buf.len() != expected_dim {
            return Err(fmt_err(
                row,
                format!("drug {drug} has {} values, expected {expected_dim}", row_buf.len()),
            ));
        }
        if table.contains(drug) {
            return Err(fmt_err(row, format!("duplicate row for drug {drug}")));
        }
        table.insert(drug, &row_buf)?;
    }
    Ok(table)
}

/// Scales every nonzero vector to unit ℓ2 norm; zero vectors are left alone and counted.
pub fn l2_normalize(table: &EmbeddingTable) -> EmbeddingTable {
    let mut out = table.clone();
    let dim = out.dim;
    let mut zeros = 0;
    for d in table.drugs() {
        let i = d as usize;
        let v = &mut out.data[i * dim..(i + 1) * dim];
        let n = l2_norm(v);
        if n == 0.0 {
            zeros += 1;
        } else {
            v.iter_mut().for_each(|x| *x /= n);
        }
    }
    if zeros > 0 {
        log::warn!("l2 normalisation left {zeros} zero vectors unchanged");
    }
    out.normalized = true;
    out.zero_vectors = zeros;
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// `[v_h ‖ v_t]`, length 2D.
    #[default]
    Concat,
    /// `[v_h ‖ v_t ‖ |v_h − v_t| ‖ v_h ⊙ v_t]`, length 4D.
    Extended,
}

impl PairMode {
    pub fn width(self, dim: usize) -> usize {
        match self {
            PairMode::Concat => 2 * dim,
            PairMode::Extended => 4 * dim,
        }
    }
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(PairMode::Concat),
            "extended" => Ok(PairMode::Extended),
            other => Err(Error::config(format!("unknown pair feature mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub x: Vec<f64>,
    pub mode: PairMode,
}

pub fn pair_features(
    table: &EmbeddingTable,
    h: u32,
    t: u32,
    mode: PairMode,
) -> Result<PairFeatures> {
    let mut x = Vec::with_capacity(mode.width(table.dim()));
    pair_features_into(table, h, t, mode, &mut x)?;
    Ok(PairFeatures { x, mode })
}

/// Writes the pair features into `out` (cleared first).
pub fn pair_features_into(
    table: &EmbeddingTable,
    h: u32,
    t: u32,
    mode: PairMode,
    out: &mut Vec<f64>,
) -> Result<()> {
    let vh = table.lookup(h)?;
    let vt = table.lookup(t)?;
    out.clear();
    out.extend_from_slice(vh);
    out.extend_from_slice(vt);
    if mode == PairMode::Extended {
        out.extend(vh.iter().zip(vt).map(|(a, b)| (a - b).abs()));
        out.extend(vh.iter().zip(vt).map(|(a, b)| a * b));
    }
    Ok(())
}
