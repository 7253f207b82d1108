//! Score functions f: S -> [0, 1] that grade states against stated
//! intentions, plus the noise and every-Nth wrappers used during training.

mod embed_scores;
mod predicate;
mod wrappers;

pub use embed_scores::{softmax_pair, BinaryScore, ConstantScore, MultiScore, SoftmaxScore};
pub use predicate::{PredicateExpr, PredicateScore};
pub use wrappers::{NoisyScore, SkippedScore};

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::types::State;

/// A score function. Wrappers can hold per-trajectory state, so scoring
/// takes `&mut self` and rollout workers own their scorer.
pub trait ScoreFn: Send {
    fn score(&mut self, state: &State) -> Result<f64>;

    /// Start of a new trajectory; clears any held per-trajectory state.
    fn reset(&mut self);

    /// The two output levels `[alpha, 1]` when this scorer is binary-valued,
    /// None otherwise. Noise injection requires binary levels.
    fn binary_levels(&self) -> Option<[f64; 2]>;

    /// Whether `score` expects `State::Image` input.
    fn needs_images(&self) -> bool;

    /// Position of the scorer-held RNG, when it owns one (noise injection
    /// does). Checkpoints capture this so resumed runs flip identically.
    fn rng_state(&self) -> Option<RngState> {
        None
    }

    /// Restore a captured RNG position; no-op for deterministic scorers.
    fn set_rng_state(&mut self, _state: &RngState) {}
}

/// Desirable/undesirable text pair compared against the state embedding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentionPair {
    pub desirable: String,
    pub undesirable: String,
}

impl IntentionPair {
    pub fn new(desirable: impl Into<String>, undesirable: impl Into<String>) -> Result<Self> {
        let pair = IntentionPair {
            desirable: desirable.into(),
            undesirable: undesirable.into(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.desirable.is_empty() || self.undesirable.is_empty() {
            return Err(Error::invalid("intention texts must be non-empty"));
        }
        if self.desirable == self.undesirable {
            return Err(Error::invalid("intention texts must be distinct"));
        }
        Ok(())
    }
}

/// Whether the predicate checker answers "is the state undesirable?" or
/// "is the state desirable?". The score always assigns 1 to desirable
/// states, so the first variant inverts the checker's verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    CheckerFlagsUndesirable,
    CheckerFlagsDesirable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Binary,
    Softmax,
    Multi,
    Predicate,
    Constant,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub mode: ScoreMode,
    pub alpha: f64,
    pub intentions: Vec<IntentionPair>,
    pub predicate: Option<String>,
    pub polarity: Polarity,
    pub skip_n: usize,
    pub noise_b: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            mode: ScoreMode::Binary,
            alpha: 0.0,
            intentions: Vec::new(),
            predicate: None,
            polarity: Polarity::CheckerFlagsUndesirable,
            skip_n: 2,
            noise_b: 0.0,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if self.alpha == 1.0 && self.mode != ScoreMode::Constant && self.mode != ScoreMode::Binary
        {
            return Err(Error::invalid(
                "alpha=1 is only the constant-score equivalence setting",
            ));
        }
        if self.skip_n == 0 {
            return Err(Error::invalid("skip_n must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_b) {
            return Err(Error::invalid(format!(
                "noise_b must be in [0,1], got {}",
                self.noise_b
            )));
        }
        match self.mode {
            ScoreMode::Binary | ScoreMode::Softmax => {
                if self.intentions.len() != 1 {
                    return Err(Error::invalid(format!(
                        "{:?} mode needs exactly 1 intention pair, got {}",
                        self.mode,
                        self.intentions.len()
                    )));
                }
            }
            ScoreMode::Multi => {
                if self.intentions.len() < 2 {
                    return Err(Error::invalid(
                        "multi mode needs at least 2 intention pairs",
                    ));
                }
            }
            ScoreMode::Predicate => {
                if self.predicate.is_none() {
                    return Err(Error::invalid("predicate mode needs a predicate"));
                }
            }
            ScoreMode::Constant => {}
        }
        for pair in &self.intentions {
            pair.validate()?;
        }
        Ok(())
    }
}

/// Assemble the configured scorer: base mode, then noise, then the
/// every-Nth hold. The RNG drives noise flips and must come from the run's
/// noise stream for reproducibility.
/// Whether the mode compares embeddings (and therefore needs an embedder
/// and rendered frames).
pub fn needs_embedder(mode: ScoreMode) -> bool {
    matches!(mode, ScoreMode::Binary | ScoreMode::Softmax | ScoreMode::Multi)
}

pub fn build_score_fn(
    config: &ScoreConfig,
    embedder: Option<Arc<dyn Embedder>>,
    rng: ChaCha8Rng,
) -> Result<Box<dyn ScoreFn>> {
    config.validate()?;
    let need_embedder = needs_embedder(config.mode);
    let base: Box<dyn ScoreFn> = match config.mode {
        ScoreMode::Binary => Box::new(BinaryScore::new(
            config.intentions[0].clone(),
            config.alpha,
            embedder.ok_or_else(missing_embedder)?,
        )?),
        ScoreMode::Softmax => Box::new(SoftmaxScore::new(
            config.intentions[0].clone(),
            embedder.ok_or_else(missing_embedder)?,
        )?),
        ScoreMode::Multi => Box::new(MultiScore::new(
            config.intentions.clone(),
            config.alpha,
            embedder.ok_or_else(missing_embedder)?,
        )?),
        ScoreMode::Predicate => {
            let text = config.predicate.as_deref().expect("validated above");
            let expr = PredicateExpr::parse(text)?;
            Box::new(PredicateScore::new(expr, config.polarity, config.alpha))
        }
        ScoreMode::Constant => Box::new(ConstantScore::new(1.0)?),
    };
    debug_assert!(need_embedder == base.needs_images());
    let noisy: Box<dyn ScoreFn> = if config.noise_b > 0.0 {
        Box::new(NoisyScore::new(base, config.noise_b, rng)?)
    } else {
        base
    };
    Ok(Box::new(SkippedScore::new(noisy, config.skip_n)?))
}

fn missing_embedder() -> Error {
    Error::invalid("this score mode needs an embedder")
}

/// Prompt an operator pastes into an external language model to obtain a
/// checker, which is then hand-translated into a predicate expression.
pub fn build_prompt(
    env_description: &str,
    state_space_doc: &str,
    requirement: &str,
) -> Result<String> {
    for (name, part) in [
        ("env_description", env_description),
        ("state_space_doc", state_space_doc),
        ("requirement", requirement),
    ] {
        if part.trim().is_empty() {
            return Err(Error::invalid(format!("{name} must be non-empty")));
        }
    }
    Ok(format!(
        "{env_description}\n\n{state_space_doc}\n\nCould you please write a checker \
for the following condition? {requirement}\nIf yes, output 1 otherwise 0"
    ))
}
