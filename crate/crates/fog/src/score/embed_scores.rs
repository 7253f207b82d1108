//! Embedding-comparison scores: the state's image embedding is compared
//! against anchor texts by cosine similarity.

use std::sync::Arc;

use crate::embed::{cosine, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::types::State;

use super::{IntentionPair, ScoreFn};

/// Anchor embeddings for one intention pair, computed once at construction.
struct Anchors {
    desirable: Embedding,
    undesirable: Embedding,
}

fn embed_pair(embedder: &dyn Embedder, pair: &IntentionPair) -> Result<Anchors> {
    pair.validate()?;
    let mut out = embedder.embed_texts(&[&pair.desirable, &pair.undesirable])?;
    let undesirable = out.pop().expect("two embeddings");
    let desirable = out.pop().expect("two embeddings");
    Ok(Anchors {
        desirable,
        undesirable,
    })
}

fn state_embedding(embedder: &dyn Embedder, state: &State) -> Result<Embedding> {
    let img = state.as_image()?;
    let mut out = embedder.embed_images(&[img])?;
    Ok(out.pop().expect("one embedding"))
}

/// 1 when the state is closer to the desirable text than the undesirable
/// one (strictly), alpha otherwise. Ties score alpha.
pub struct BinaryScore {
    alpha: f64,
    anchors: Anchors,
    embedder: Arc<dyn Embedder>,
}

impl BinaryScore {
    pub fn new(pair: IntentionPair, alpha: f64, embedder: Arc<dyn Embedder>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must be in [0,1], got {alpha}")));
        }
        let anchors = embed_pair(embedder.as_ref(), &pair)?;
        Ok(BinaryScore {
            alpha,
            anchors,
            embedder,
        })
    }
}

impl ScoreFn for BinaryScore {
    fn score(&mut self, state: &State) -> Result<f64> {
        let e = state_embedding(self.embedder.as_ref(), state)?;
        let c1 = cosine(&e, &self.anchors.desirable)?;
        let c2 = cosine(&e, &self.anchors.undesirable)?;
        Ok(if c1 > c2 { 1.0 } else { self.alpha })
    }

    fn reset(&mut self) {}

    fn binary_levels(&self) -> Option<[f64; 2]> {
        Some([self.alpha, 1.0])
    }

    fn needs_images(&self) -> bool {
        true
    }
}

/// Smooth softmax comparison of the two cosines.
pub fn softmax_pair(c1: f64, c2: f64) -> f64 {
    let e1 = c1.exp();
    let e2 = c2.exp();
    e1 / (e1 + e2)
}

pub struct SoftmaxScore {
    anchors: Anchors,
    embedder: Arc<dyn Embedder>,
}

impl SoftmaxScore {
    pub fn new(pair: IntentionPair, embedder: Arc<dyn Embedder>) -> Result<Self> {
        let anchors = embed_pair(embedder.as_ref(), &pair)?;
        Ok(SoftmaxScore { anchors, embedder })
    }
}

impl ScoreFn for SoftmaxScore {
    fn score(&mut self, state: &State) -> Result<f64> {
        let e = state_embedding(self.embedder.as_ref(), state)?;
        let c1 = cosine(&e, &self.anchors.desirable)?;
        let c2 = cosine(&e, &self.anchors.undesirable)?;
        Ok(softmax_pair(c1, c2))
    }

    fn reset(&mut self) {}

    fn binary_levels(&self) -> Option<[f64; 2]> {
        None
    }

    fn needs_images(&self) -> bool {
        true
    }
}

/// Conjunction over several intention pairs: 1 only when every pair's
/// comparison favors its desirable text, alpha otherwise.
pub struct MultiScore {
    alpha: f64,
    anchors: Vec<Anchors>,
    embedder: Arc<dyn Embedder>,
}

impl MultiScore {
    pub fn new(
        pairs: Vec<IntentionPair>,
        alpha: f64,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::invalid(
                "multi score needs at least 2 intention pairs; use the binary score for 1",
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must be in [0,1], got {alpha}")));
        }
        let anchors = pairs
            .iter()
            .map(|p| embed_pair(embedder.as_ref(), p))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiScore {
            alpha,
            anchors,
            embedder,
        })
    }
}

impl ScoreFn for MultiScore {
    fn score(&mut self, state: &State) -> Result<f64> {
        let e = state_embedding(self.embedder.as_ref(), state)?;
        for a in &self.anchors {
            let c1 = cosine(&e, &a.desirable)?;
            let c2 = cosine(&e, &a.undesirable)?;
            if c1 <= c2 {
                return Ok(self.alpha);
            }
        }
        Ok(1.0)
    }

    fn reset(&mut self) {}

    fn binary_levels(&self) -> Option<[f64; 2]> {
        Some([self.alpha, 1.0])
    }

    fn needs_images(&self) -> bool {
        true
    }
}

/// Fixed score, used for the reduction where a constant 1 recovers the
/// unweighted skill objective.
pub struct ConstantScore {
    value: f64,
}

impl ConstantScore {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!(
                "constant score must be in [0,1], got {value}"
            )));
        }
        Ok(ConstantScore { value })
    }
}

impl ScoreFn for ConstantScore {
    fn score(&mut self, _state: &State) -> Result<f64> {
        Ok(self.value)
    }

    fn reset(&mut self) {}

    fn binary_levels(&self) -> Option<[f64; 2]> {
        None
    }

    fn needs_images(&self) -> bool {
        false
    }
}
