//! Synthetic knowledge-graph worlds with planted, single-label mechanisms.
//!
//! Each drug has a latent `u_i ~ N(0, I)`, each relation a unit-norm diagonal
//! core `m_r`. A pair `h < t` is an edge of relation `r = argmax_r s_r` when
//! `s_r = Σ_k u_h[k] m_r[k] u_t[k]` exceeds the threshold. Features are a
//! noisy linear image of the latents, `v_i = A u_i + ε`, `ε ~ N(0, σ² I)`.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::EmbeddingTable;
use crate::graph_store::{undirected, Triple, TripleSet};
use crate::io;
use crate::linalg::{argmax, l2_norm, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub num_drugs: usize,
    pub num_relations: usize,
    pub latent_dim: usize,
    /// Width `D` of the emitted feature vectors.
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    pub edge_threshold: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            num_drugs: 500,
            num_relations: 10,
            latent_dim: 8,
            feature_dim: 16,
            feature_noise_sigma: 0.3,
            edge_threshold: 2.5,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent_dim must be at least 1"));
        }
        if self.num_relations < 2 {
            return Err(Error::config("a world needs at least 2 relations"));
        }
        if self.num_drugs < 2 || self.feature_dim == 0 {
            return Err(Error::config("a world needs at least 2 drugs and 1 feature"));
        }
        if self.feature_noise_sigma.is_nan() || self.feature_noise_sigma < 0.0 || !self.edge_threshold.is_finite() {
            return Err(Error::config("noise sigma must be ≥ 0 and the threshold finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub spec: WorldSpec,
    pub kg: TripleSet,
    /// The true latents `u_i`.
    pub kg_embeddings: EmbeddingTable,
    pub features: EmbeddingTable,
    /// Unit-norm relation cores, one row per relation.
    pub relation_cores: Matrix,
    /// Feature map `A`, `D × latent_dim`.
    pub feature_map: Matrix,
    ground_truth: HashMap<(u32, u32), u32>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * { let z: f64 = StandardNormal.sample(rng); z })
}

/// Planted relation scores `s_r` for a latent pair.
pub fn relation_scores(cores: &Matrix, uh: &[f64], ut: &[f64]) -> Vec<f64> {
    (0..cores.rows())
        .map(|r| {
            cores
                .row(r)
                .iter()
                .zip(uh.iter().zip(ut))
                .map(|(m, (a, b))| a * m * b)
                .sum()
        })
        .collect()
}

pub fn generate(spec: &WorldSpec) -> Result<SynthWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, l, d) = (spec.num_drugs, spec.latent_dim, spec.feature_dim);
    let latents = normal_matrix(&mut rng, n, l, 1.0);
    let mut cores = normal_matrix(&mut rng, spec.num_relations, l, 1.0);
    for r in 0..spec.num_relations {
        let norm = l2_norm(cores.row(r));
        cores.row_mut(r).iter_mut().for_each(|x| *x /= norm);
    }
    let feature_map = normal_matrix(&mut rng, d, l, 1.0 / (l as f64).sqrt());

    let mut raw = Vec::new();
    let mut ground_truth = HashMap::new();
    for h in 0..n {
        for t in (h + 1)..n {
            let s = relation_scores(&cores, latents.row(h), latents.row(t));
            let r = argmax(&s).expect("at least two relations");
            if s[r] > spec.edge_threshold {
                raw.push(Triple::new(h as u32, r as u32, t as u32));
                ground_truth.insert((h as u32, t as u32), r as u32);
            }
        }
    }
    if raw.is_empty() {
        return Err(Error::Generation(format!(
            "edge threshold {} plants no edges; lower it",
            spec.edge_threshold
        )));
    }
    let kg = TripleSet::from_unique(n, spec.num_relations, raw)?;

    let kg_embeddings = EmbeddingTable::from_rows(l, (0..n).map(|i| latents.row(i).to_vec()).collect())?;
    let sigma = spec.feature_noise_sigma;
    let features = EmbeddingTable::from_rows(
        d,
        (0..n)
            .map(|i| {
                let mut v = feature_map.matvec(latents.row(i));
                for x in v.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += sigma * z;
                }
                v
            })
            .collect(),
    )?;
    log::info!(
        "generated world: {n} drugs, {} edges ({:.2}% of pairs)",
        kg.len(),
        100.0 * kg.len() as f64 / (n * (n - 1) / 2) as f64
    );
    Ok(SynthWorld {
        spec: spec.clone(),
        kg,
        kg_embeddings,
        features,
        relation_cores: cores,
        feature_map,
        ground_truth,
    })
}

impl SynthWorld {
    /// Planted relation of the unordered pair, if any.
    pub fn oracle_label(&self, h: u32, t: u32) -> Result<Option<u32>> {
        for d in [h, t] {
            if d as usize >= self.spec.num_drugs {
                return Err(Error::DrugRange {
                    index: d as u64,
                    num_drugs: self.spec.num_drugs,
                });
            }
        }
        Ok(self.ground_truth.get(&undirected(h, t)).copied())
    }

    /// Writes `triples.tsv`, `kg_embeddings.txt`, `features.txt` and `world.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::create_dir_all(dir)?;
        self.kg.write(&dir.join(WORLD_TRIPLES))?;
        self.kg_embeddings.write(&dir.join(WORLD_KG_EMBEDDINGS))?;
        self.features.write(&dir.join(WORLD_FEATURES))?;
        io::write_json(&dir.join("world.json"), &self.spec)
    }
}

pub const WORLD_TRIPLES: &str = "triples.tsv";
pub const WORLD_KG_EMBEDDINGS: &str = "kg_embeddings.txt";
pub const WORLD_FEATURES: &str = "features.txt";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::load_embedding_table;
    use crate::graph_store::{load_triples, LoadOptions};

    fn small() -> WorldSpec {
        WorldSpec {
            num_drugs: 60,
            num_relations: 4,
            latent_dim: 4,
            feature_dim: 6,
            edge_threshold: 1.0,
            seed: 3,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn same_spec_same_world() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.kg, b.kg);
        assert_eq!(a.features, b.features);
        let c = generate(&WorldSpec { seed: 4, ..small() }).unwrap();
        assert_ne!(a.kg, c.kg);
    }

    #[test]
    fn ground_truth_matches_the_kg_and_the_planting_rule() {
        let w = generate(&small()).unwrap();
        for t in &w.kg {
            assert_eq!(w.oracle_label(t.head, t.tail).unwrap(), Some(t.relation));
            assert_eq!(w.oracle_label(t.tail, t.head).unwrap(), Some(t.relation));
        }
        let mut planted = 0;
        for h in 0..60u32 {
            for t in 0..60u32 {
                if h == t {
                    continue;
                }
                let s = relation_scores(
                    &w.relation_cores,
                    w.kg_embeddings.get(h).unwrap(),
                    w.kg_embeddings.get(t).unwrap(),
                );
                let r = argmax(&s).unwrap() as u32;
                let expected = (s[r as usize] > 1.0).then_some(r);
                assert_eq!(w.oracle_label(h, t).unwrap(), expected);
                planted += usize::from(expected.is_some());
            }
        }
        assert_eq!(planted, 2 * w.kg.len());
        assert!(w.oracle_label(0, 60).is_err());
    }

    #[test]
    fn noiseless_features_are_the_linear_image() {
        let w = generate(&WorldSpec {
            feature_noise_sigma: 0.0,
            ..small()
        })
        .unwrap();
        for i in 0..60u32 {
            let v = w.feature_map.matvec(w.kg_embeddings.get(i).unwrap());
            assert_eq!(w.features.get(i).unwrap(), v.as_slice());
        }
        assert_eq!(w.features.dim(), 6);
    }

    #[test]
    fn cores_have_unit_norm() {
        let w = generate(&small()).unwrap();
        for r in 0..4 {
            assert!((l2_norm(w.relation_cores.row(r)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn impossible_threshold_is_a_generation_error() {
        let err = generate(&WorldSpec {
            edge_threshold: 1e6,
            ..small()
        })
        .unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
        assert!(generate(&WorldSpec {
            num_relations: 1,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn written_world_loads_back() {
        let w = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.write(dir.path()).unwrap();
        let opts = LoadOptions {
            num_relations: 4,
            num_drugs: Some(60),
            ..LoadOptions::default()
        };
        let kg = load_triples(&dir.path().join(WORLD_TRIPLES), &opts).unwrap();
        assert_eq!(kg.set, w.kg);
        let f = load_embedding_table(&dir.path().join(WORLD_FEATURES), 6).unwrap();
        assert_eq!(f, w.features);
        let spec: WorldSpec = io::read_json(&dir.path().join("world.json")).unwrap();
        assert_eq!(spec, small());
    }

    #[test]
    fn default_world_density_is_moderate() {
        let w = generate(&WorldSpec::default()).unwrap();
        let pairs = 500.0 * 499.0 / 2.0;
        let density = w.kg.len() as f64 / pairs;
        assert!((0.02..0.3).contains(&density), "{density}");
    }
}
