//! The common interface every pair model exposes to inference and evaluation.

use crate::error::Result;

/// A model that maps a drug pair to one logit per relation.
pub trait PairScorer {
    fn num_relations(&self) -> usize;

    fn logits(&self, h: u32, t: u32) -> Result<Vec<f64>>;
}

impl<S: PairScorer + ?Sized> PairScorer for &S {
    fn num_relations(&self) -> usize {
        (**self).num_relations()
    }

    fn logits(&self, h: u32, t: u32) -> Result<Vec<f64>> {
        (**self).logits(h, t)
    }
}

impl<S: PairScorer + ?Sized> PairScorer for Box<S> {
    fn num_relations(&self) -> usize {
        (**self).num_relations()
    }

    fn logits(&self, h: u32, t: u32) -> Result<Vec<f64>> {
        (**self).logits(h, t)
    }
}

/// Returns the same logits for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantScorer(pub Vec<f64>);

impl PairScorer for ConstantScorer {
    fn num_relations(&self) -> usize {
        self.0.len()
    }

    fn logits(&self, _h: u32, _t: u32) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}
